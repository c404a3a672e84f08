//! Rule-based pseudo-labeling: PredPatt-style relation extraction over
//! syntactic trees, corpus generation with a trained parser, validity
//! filtering, and cross-entropy-difference domain scoring.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::jsonl::UdsRecord;
use crate::graph::{
    AnnotatedSentence, AttributeSet, NodeKind, SemEdge, SemNode, SemanticGraph, ROOT_ID,
};
use crate::model::ParserModel;
use crate::syntax::DecodeMode;

fn string_set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// The extraction rule set. A deliberately small, fully specified stand-in
/// for PredPatt: what matters downstream is that training data and pseudo
/// labels are produced by the same deterministic rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    /// POS tags whose tokens become predicate centers.
    pub predicate_pos: BTreeSet<String>,
    /// Relations whose dependent heads an embedded clause: the dependent
    /// becomes a predicate and also anchors an extra argument node.
    pub clausal_rels: BTreeSet<String>,
    /// Relations attaching an argument to its predicate.
    pub argument_rels: BTreeSet<String>,
    /// Relations at which span growth halts.
    pub stop_rels: BTreeSet<String>,
}

impl Default for RuleConfig {
    fn default() -> RuleConfig {
        RuleConfig {
            predicate_pos: string_set(&["VERB"]),
            clausal_rels: string_set(&["ccomp", "xcomp", "csubj"]),
            argument_rels: string_set(&["nsubj", "obj", "iobj", "obl", "nmod"]),
            stop_rels: string_set(&[
                "ccomp",
                "xcomp",
                "csubj",
                "advcl",
                "acl",
                "conj",
                "cc",
                "parataxis",
                "appos",
                "punct",
                "mark",
            ]),
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clausal_rels.intersection(&self.argument_rels).count() > 0 {
            return Err(Error::validation(
                "clausal and argument relation sets must be disjoint",
            ));
        }
        Ok(())
    }
}

/// Relation extraction: a pure function of (tokens, POS, heads, deprels,
/// rules). A sentence with no predicates yields a Root-only graph.
pub fn extract_relations(sent: &AnnotatedSentence, rules: &RuleConfig) -> SemanticGraph {
    let k = sent.len();
    // 1-based predicate centers: predicate POS, or the head of a clause
    let mut pred_centers = BTreeSet::new();
    for i in 1..=k {
        if rules.predicate_pos.contains(&sent.tokens[i - 1].pos)
            || (rules.clausal_rels.contains(&sent.deprels[i - 1]) && sent.heads[i - 1] != i)
        {
            pred_centers.insert(i);
        }
    }
    // argument centers attach to a predicate head
    let mut arg_edges: Vec<(usize, usize)> = Vec::new(); // (pred center, arg center)
    for j in 1..=k {
        let h = sent.heads[j - 1];
        if h == j || !pred_centers.contains(&h) {
            continue;
        }
        let rel = &sent.deprels[j - 1];
        if rules.argument_rels.contains(rel) || rules.clausal_rels.contains(rel) {
            arg_edges.push((h, j));
        }
    }
    let arg_centers: BTreeSet<usize> = arg_edges.iter().map(|&(_, j)| j).collect();
    if pred_centers.is_empty() {
        return SemanticGraph::root_only();
    }

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); k + 1];
    for j in 1..=k {
        if sent.heads[j - 1] != j {
            children[sent.heads[j - 1]].push(j);
        }
    }
    let all_centers: BTreeSet<usize> = pred_centers.union(&arg_centers).copied().collect();
    let span_of = |center: usize| -> BTreeSet<usize> {
        let mut span = BTreeSet::from([center]);
        let mut stack = vec![center];
        while let Some(t) = stack.pop() {
            for &c in &children[t] {
                if all_centers.contains(&c) || rules.stop_rels.contains(&sent.deprels[c - 1]) {
                    continue;
                }
                if span.insert(c) {
                    stack.push(c);
                }
            }
        }
        span
    };

    let mut graph = SemanticGraph::root_only();
    for &c in &pred_centers {
        graph.nodes.push(SemNode {
            id: format!("p{c}"),
            kind: NodeKind::Predicate,
            center: Some(c),
            span: Some(span_of(c)),
        });
    }
    for &c in &arg_centers {
        // an embedded predicate anchors its clause's argument node too;
        // the argument span is just the shared center token
        let span = if pred_centers.contains(&c) {
            BTreeSet::from([c])
        } else {
            span_of(c)
        };
        graph.nodes.push(SemNode {
            id: format!("a{c}"),
            kind: NodeKind::Argument,
            center: Some(c),
            span: Some(span),
        });
    }
    // every predicate hangs off the root, embedded or not, as in the
    // cascade's own graphs
    for &c in &pred_centers {
        graph.edges.push(SemEdge {
            src: ROOT_ID.into(),
            dst: format!("p{c}"),
            label: "root".into(),
        });
    }
    for (p, a) in arg_edges {
        graph.edges.push(SemEdge {
            src: format!("p{p}"),
            dst: format!("a{a}"),
            label: "arg".into(),
        });
    }
    graph
}

/// Pseudo-label a pre-tokenized corpus with a trained parser's syntax
/// stage plus the rule engine. Per-sentence failures are logged and
/// skipped; attributes are left fully masked out.
pub fn pseudo_label(
    corpus: &[Vec<String>],
    model: &ParserModel,
    rules: &RuleConfig,
) -> (Vec<UdsRecord>, usize) {
    let mut records = Vec::new();
    let mut skipped = 0;
    for (i, forms) in corpus.iter().enumerate() {
        match pseudo_label_one(forms, model, rules) {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::info!("pseudo_label: skipping sentence {}: {}", i + 1, e);
                skipped += 1;
            }
        }
    }
    (records, skipped)
}

fn pseudo_label_one(
    forms: &[String],
    model: &ParserModel,
    rules: &RuleConfig,
) -> Result<UdsRecord> {
    let out = model.parse_sentence(forms, DecodeMode::Mst)?;
    if !out.tree_valid {
        return Err(Error::validation("decoded tree invalid"));
    }
    let sent = out.sentence()?;
    let graph = extract_relations(&sent, rules);
    graph.validate(&sent)?;
    Ok(UdsRecord::new(sent, graph, AttributeSet::default()))
}

/// Filter pseudo-labeled records, reporting drop counts by reason.
pub fn filter_invalid(
    records: Vec<UdsRecord>,
    max_len: usize,
) -> (Vec<UdsRecord>, BTreeMap<String, usize>) {
    let mut kept = Vec::new();
    let mut drops: BTreeMap<String, usize> = BTreeMap::new();
    for rec in records {
        let reason = if rec.sent.len() > max_len {
            Some("too_long")
        } else if rec.graph.semantic_nodes().next().is_none() {
            Some("no_predicates")
        } else if rec.graph.validate(&rec.sent).is_err() {
            Some("invalid_graph")
        } else {
            None
        };
        match reason {
            Some(r) => *drops.entry(r.to_string()).or_insert(0) += 1,
            None => kept.push(rec),
        }
    }
    (kept, drops)
}

const UNK: &str = "<unk>";

/// Word trigram language model with add-0.1 smoothing. Contexts wrap
/// around the sentence, so the trigram multiset of a duplicated sentence
/// is exactly doubled and per-token cross-entropy is unchanged.
#[derive(Debug, Clone)]
pub struct TrigramLm {
    k: f64,
    vocab: BTreeSet<String>,
    trigrams: HashMap<(String, String, String), usize>,
    bigrams: HashMap<(String, String), usize>,
}

impl TrigramLm {
    pub fn train(corpus: &[Vec<String>]) -> TrigramLm {
        let mut lm = TrigramLm {
            k: 0.1,
            vocab: BTreeSet::from([UNK.to_string()]),
            trigrams: HashMap::new(),
            bigrams: HashMap::new(),
        };
        for sent in corpus {
            for w in sent {
                lm.vocab.insert(w.clone());
            }
        }
        for sent in corpus {
            for (u, v, w) in cyclic_trigrams(sent) {
                *lm.bigrams.entry((u.clone(), v.clone())).or_insert(0) += 1;
                *lm.trigrams.entry((u, v, w)).or_insert(0) += 1;
            }
        }
        lm
    }

    fn known(&self, w: &str) -> String {
        if self.vocab.contains(w) {
            w.to_string()
        } else {
            UNK.to_string()
        }
    }

    fn log_prob(&self, u: &str, v: &str, w: &str) -> f64 {
        let key = (self.known(u), self.known(v), self.known(w));
        let ctx = (key.0.clone(), key.1.clone());
        let num = self.trigrams.get(&key).copied().unwrap_or(0) as f64 + self.k;
        let den =
            self.bigrams.get(&ctx).copied().unwrap_or(0) as f64 + self.k * self.vocab.len() as f64;
        (num / den).ln()
    }

    /// Per-token cross-entropy in nats.
    pub fn cross_entropy(&self, sent: &[String]) -> Result<f64> {
        if sent.is_empty() {
            return Err(Error::validation("cannot score an empty sentence"));
        }
        let total: f64 = cyclic_trigrams(sent)
            .iter()
            .map(|(u, v, w)| -self.log_prob(u, v, w))
            .sum();
        Ok(total / sent.len() as f64)
    }
}

/// One trigram per token: (w[i-2], w[i-1], w[i]) with indices mod len.
fn cyclic_trigrams(sent: &[String]) -> Vec<(String, String, String)> {
    let n = sent.len();
    (0..n)
        .map(|i| {
            (
                sent[(i + 2 * n - 2) % n].clone(),
                sent[(i + 2 * n - 1) % n].clone(),
                sent[i].clone(),
            )
        })
        .collect()
}

/// Moore-Lewis style selection score: cross-entropy under the general LM
/// minus cross-entropy under the in-domain LM. Higher = more in-domain.
pub fn domain_score(sent: &[String], in_domain: &TrigramLm, general: &TrigramLm) -> Result<f64> {
    Ok(general.cross_entropy(sent)? - in_domain.cross_entropy(sent)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    fn sentence(forms: &str, pos: &str, heads: Vec<usize>, deprels: &str) -> AnnotatedSentence {
        AnnotatedSentence::new(toks(forms), toks(pos), heads, toks(deprels)).unwrap()
    }

    #[test]
    fn dogs_chase_cats() {
        let sent = sentence(
            "Dogs chase cats .",
            "NOUN VERB NOUN PUNCT",
            vec![2, 2, 2, 2],
            "nsubj root obj punct",
        );
        let g = extract_relations(&sent, &RuleConfig::default());
        g.validate(&sent).unwrap();
        let preds: Vec<_> = g
            .semantic_nodes()
            .filter(|n| n.kind == NodeKind::Predicate)
            .collect();
        let args: Vec<_> = g
            .semantic_nodes()
            .filter(|n| n.kind == NodeKind::Argument)
            .collect();
        assert_eq!(preds.len(), 1);
        assert_eq!(preds[0].center, Some(2));
        assert_eq!(args.len(), 2);
        let arg_edges = g.edges.iter().filter(|e| e.label == "arg").count();
        assert_eq!(arg_edges, 2);
    }

    #[test]
    fn ccomp_dependent_is_prearg_anchored() {
        let (sent, gold) = crate::graph::figure_sentence();
        let g = extract_relations(&sent, &RuleConfig::default());
        g.validate(&sent).unwrap();
        // "get" heads a ccomp: both a predicate and an argument node there
        assert!(g.node("p6").is_some());
        assert!(g.node("a6").is_some());
        assert!(g
            .edges
            .iter()
            .any(|e| e.src == "p1" && e.dst == "a6" && e.label == "arg"));
        // the rules recover every hand-built node center and kind, and
        // the embedded predicate's full span "ca n't get"
        for want in gold.semantic_nodes() {
            let got = g.node(&want.id).unwrap();
            assert_eq!(got.kind, want.kind);
            assert_eq!(got.center, want.center);
        }
        assert_eq!(
            g.node("p6").unwrap().span,
            Some(BTreeSet::from([4, 5, 6]))
        );
    }

    #[test]
    fn no_verbs_gives_root_only() {
        let sent = sentence("red green blue", "ADJ ADJ ADJ", vec![1, 1, 1], "root amod amod");
        let g = extract_relations(&sent, &RuleConfig::default());
        assert!(g.semantic_nodes().next().is_none());
    }

    #[test]
    fn every_predicate_gets_a_root_edge() {
        let (sent, _) = crate::graph::figure_sentence();
        let g = extract_relations(&sent, &RuleConfig::default());
        let roots: BTreeSet<String> = g
            .edges
            .iter()
            .filter(|e| e.src == ROOT_ID)
            .map(|e| e.dst.clone())
            .collect();
        assert_eq!(roots, BTreeSet::from(["p1".to_string(), "p6".to_string()]));
    }

    #[test]
    fn extraction_valid_on_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pos_tags = ["VERB", "NOUN", "ADJ", "ADV", "PRON"];
        let rels = [
            "root", "nsubj", "obj", "obl", "ccomp", "xcomp", "amod", "punct", "conj", "mark",
        ];
        for _ in 0..200 {
            let k = rng.gen_range(1..=10);
            let forms: Vec<String> = (0..k).map(|i| format!("w{i}")).collect();
            let pos: Vec<String> = (0..k)
                .map(|_| pos_tags[rng.gen_range(0..pos_tags.len())].to_string())
                .collect();
            // random tree: token i attaches to a strictly earlier token,
            // token 1 is the root
            let heads: Vec<usize> = (1..=k)
                .map(|i| if i == 1 { 1 } else { rng.gen_range(1..i) })
                .collect();
            let deprels: Vec<String> = (1..=k)
                .map(|i| {
                    if i == 1 {
                        "root".to_string()
                    } else {
                        rels[rng.gen_range(1..rels.len())].to_string()
                    }
                })
                .collect();
            let sent = AnnotatedSentence::new(forms, pos, heads, deprels).unwrap();
            let g = extract_relations(&sent, &RuleConfig::default());
            g.validate(&sent).unwrap();
        }
    }

    #[test]
    fn filter_drops_root_only_and_long_and_is_idempotent() {
        let (sent, graph) = crate::graph::figure_sentence();
        let good = UdsRecord::new(sent.clone(), graph, AttributeSet::default());
        let empty = UdsRecord::new(sent, SemanticGraph::root_only(), AttributeSet::default());
        let (kept, drops) = filter_invalid(vec![good.clone(), empty], 50);
        assert_eq!(kept.len(), 1);
        assert_eq!(drops.get("no_predicates"), Some(&1));
        let (_, drops) = filter_invalid(vec![good.clone()], 5);
        assert_eq!(drops.get("too_long"), Some(&1));
        let (kept, drops) = filter_invalid(vec![good.clone()], 50);
        assert_eq!(kept.len(), 1);
        assert!(drops.is_empty());
        let (kept2, drops2) = filter_invalid(kept.clone(), 50);
        assert_eq!(kept2, kept);
        assert!(drops2.is_empty());
    }

    #[test]
    fn identical_lms_score_zero() {
        let corpus = vec![toks("the cat sat"), toks("the dog ran")];
        let lm = TrigramLm::train(&corpus);
        let s = domain_score(&toks("the cat ran"), &lm, &lm).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn in_domain_sentence_scores_higher() {
        let in_dom = vec![toks("the cat sat on the mat"), toks("the cat ran home")];
        let gen: Vec<Vec<String>> = (0..20)
            .map(|i| toks(&format!("stock {i} rose {i} points today")))
            .collect();
        let in_lm = TrigramLm::train(&in_dom);
        let gen_lm = TrigramLm::train(&gen);
        let s_in = domain_score(&toks("the cat sat"), &in_lm, &gen_lm).unwrap();
        let s_out = domain_score(&toks("stock 3 rose 3 points today"), &in_lm, &gen_lm).unwrap();
        assert!(s_in > s_out);
    }

    #[test]
    fn duplication_leaves_score_unchanged() {
        let in_lm = TrigramLm::train(&[toks("a b c d"), toks("b c a")]);
        let gen_lm = TrigramLm::train(&[toks("x y z"), toks("a b x")]);
        let s = toks("a b c");
        let mut ss = s.clone();
        ss.extend(s.clone());
        let one = domain_score(&s, &in_lm, &gen_lm).unwrap();
        let two = domain_score(&ss, &in_lm, &gen_lm).unwrap();
        assert!((one - two).abs() < 1e-6);
    }

    #[test]
    fn empty_sentence_is_error() {
        let lm = TrigramLm::train(&[toks("a b")]);
        assert!(lm.cross_entropy(&[]).is_err());
    }
}
