//! Deterministic synthetic corpora: template-grammar sentences with gold
//! trees and POS, relations from the rule engine, and randomly masked
//! scalar attributes. Used by `selfcheck` and the acceptance runs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{extract_relations, RuleConfig};
use crate::graph::jsonl::UdsRecord;
use crate::graph::{
    edge_key, AnnotatedSentence, AttrValue, AttributeSchema, AttributeSet, ROOT_ID,
};

const NOUNS: &[&str] = &[
    "dog", "cat", "bird", "fox", "cow", "owl", "ant", "bee", "elk", "hen",
];
const VERBS: &[&str] = &["sees", "likes", "chases", "finds", "hears", "wants", "says"];
const ADVS: &[&str] = &["today", "quickly", "often", "silently"];

pub fn default_schema() -> AttributeSchema {
    AttributeSchema {
        node_attrs: vec!["factual".into(), "volition".into()],
        edge_attrs: vec!["awareness".into()],
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

/// One sentence from a handful of fixed dependency templates.
fn sample_sentence(rng: &mut ChaCha8Rng) -> AnnotatedSentence {
    let template = rng.gen_range(0..5);
    let (forms, pos, heads, deprels): (Vec<&str>, Vec<&str>, Vec<usize>, Vec<&str>) =
        match template {
            0 => (
                vec![pick(rng, NOUNS), pick(rng, VERBS), pick(rng, NOUNS)],
                vec!["NOUN", "VERB", "NOUN"],
                vec![2, 2, 2],
                vec!["nsubj", "root", "obj"],
            ),
            1 => (
                vec![pick(rng, NOUNS), pick(rng, VERBS)],
                vec!["NOUN", "VERB"],
                vec![2, 2],
                vec!["nsubj", "root"],
            ),
            2 => (
                vec![pick(rng, NOUNS), pick(rng, VERBS), pick(rng, ADVS)],
                vec!["NOUN", "VERB", "ADV"],
                vec![2, 2, 2],
                vec!["nsubj", "root", "advmod"],
            ),
            3 => (
                vec![
                    pick(rng, NOUNS),
                    pick(rng, VERBS),
                    pick(rng, NOUNS),
                    pick(rng, ADVS),
                ],
                vec!["NOUN", "VERB", "NOUN", "ADV"],
                vec![2, 2, 2, 2],
                vec!["nsubj", "root", "obj", "advmod"],
            ),
            // embedded clause: "<noun> says <noun> <verb> <noun>"
            _ => (
                vec![
                    pick(rng, NOUNS),
                    "says",
                    pick(rng, NOUNS),
                    pick(rng, VERBS),
                    pick(rng, NOUNS),
                ],
                vec!["NOUN", "VERB", "NOUN", "VERB", "NOUN"],
                vec![2, 2, 4, 2, 4],
                vec!["nsubj", "root", "nsubj", "ccomp", "obj"],
            ),
        };
    AnnotatedSentence::new(
        forms.into_iter().map(String::from).collect(),
        pos.into_iter().map(String::from).collect(),
        heads,
        deprels.into_iter().map(String::from).collect(),
    )
    .expect("templates are valid trees")
}

fn random_attrs(
    rng: &mut ChaCha8Rng,
    schema: &AttributeSchema,
    graph: &crate::graph::SemanticGraph,
) -> AttributeSet {
    let mut attrs = AttributeSet::default();
    let entry = |rng: &mut ChaCha8Rng| AttrValue {
        v: rng.gen_range(-2.0..2.0),
        m: 1,
    };
    for node in graph.semantic_nodes() {
        let mut m = std::collections::BTreeMap::new();
        for name in &schema.node_attrs {
            if rng.gen_bool(0.8) {
                m.insert(name.clone(), entry(rng));
            }
        }
        if !m.is_empty() {
            attrs.node_attrs.insert(node.id.clone(), m);
        }
    }
    for edge in &graph.edges {
        if edge.src == ROOT_ID {
            continue;
        }
        let mut m = std::collections::BTreeMap::new();
        for name in &schema.edge_attrs {
            if rng.gen_bool(0.8) {
                m.insert(name.clone(), entry(rng));
            }
        }
        if !m.is_empty() {
            attrs.edge_attrs.insert(edge_key(&edge.src, &edge.dst), m);
        }
    }
    attrs
}

/// A corpus of `n` records, reproducible from the seed alone.
pub fn generate_corpus(n: usize, seed: u64, schema: &AttributeSchema) -> Vec<UdsRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rules = RuleConfig::default();
    (0..n)
        .map(|_| {
            let sent = sample_sentence(&mut rng);
            let graph = extract_relations(&sent, &rules);
            let attrs = random_attrs(&mut rng, schema, &graph);
            UdsRecord::new(sent, graph, attrs)
        })
        .collect()
}

/// 80/10/10 train/dev/test split preserving order.
pub fn split_corpus(records: Vec<UdsRecord>) -> (Vec<UdsRecord>, Vec<UdsRecord>, Vec<UdsRecord>) {
    let n = records.len();
    let n_train = n * 8 / 10;
    let n_dev = n / 10;
    let mut it = records.into_iter();
    let train: Vec<_> = it.by_ref().take(n_train).collect();
    let dev: Vec<_> = it.by_ref().take(n_dev).collect();
    let test: Vec<_> = it.collect();
    (train, dev, test)
}
