//! Typed data model for decompositional semantic annotations.
//!
//! A record pairs an [`AnnotatedSentence`] (tokens, POS, dependency tree)
//! with a [`SemanticGraph`] (predicate/argument nodes anchored to center
//! words, typed edges, a virtual root) and an [`AttributeSet`] (masked
//! scalar judgments in [-3, 3] on nodes and edges).

pub mod conllu;
pub mod jsonl;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved id of the virtual root node.
pub const ROOT_ID: &str = "ROOT";
/// Reserved edge label meaning "no edge". Never stored in a graph.
pub const PHI_LABEL: &str = "\u{03a6}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// 1-based sentence position.
    pub index: usize,
    pub form: String,
    /// UPOS tag.
    pub pos: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub tokens: Vec<Token>,
    /// 1-based head per token; the root points to itself.
    pub heads: Vec<usize>,
    pub deprels: Vec<String>,
}

impl AnnotatedSentence {
    pub fn new(
        forms: Vec<String>,
        pos: Vec<String>,
        heads: Vec<usize>,
        deprels: Vec<String>,
    ) -> Result<AnnotatedSentence> {
        let tokens = forms
            .into_iter()
            .zip(pos)
            .enumerate()
            .map(|(i, (form, pos))| Token {
                index: i + 1,
                form,
                pos,
            })
            .collect();
        let sent = AnnotatedSentence {
            tokens,
            heads,
            deprels,
        };
        sent.validate()?;
        Ok(sent)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// 1-based index of the root token.
    pub fn root(&self) -> usize {
        self.heads
            .iter()
            .enumerate()
            .find(|(i, &h)| h == i + 1)
            .map(|(i, _)| i + 1)
            .expect("validated sentence has a root")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::validation("empty sentence"));
        }
        if self.heads.len() != n || self.deprels.len() != n {
            return Err(Error::validation(format!(
                "heads/deprels length mismatch: {} tokens, {} heads, {} deprels",
                n,
                self.heads.len(),
                self.deprels.len()
            )));
        }
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i + 1 {
                return Err(Error::validation(format!(
                    "token index {} at position {}",
                    t.index,
                    i + 1
                )));
            }
            if t.form.is_empty() {
                return Err(Error::validation(format!("empty form at token {}", i + 1)));
            }
        }
        let roots: Vec<usize> = (0..n).filter(|&i| self.heads[i] == i + 1).collect();
        if roots.len() != 1 {
            return Err(Error::validation(format!(
                "expected exactly one root, found {} in sentence \"{}\"",
                roots.len(),
                self.text()
            )));
        }
        let root = roots[0];
        for (i, &h) in self.heads.iter().enumerate() {
            if h == 0 || h > n {
                return Err(Error::validation(format!(
                    "head {} of token {} out of range",
                    h,
                    i + 1
                )));
            }
        }
        // every token must reach the root without revisiting a node
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while cur != root {
                cur = self.heads[cur] - 1;
                steps += 1;
                if steps > n {
                    return Err(Error::validation(format!(
                        "head cycle involving token {} in sentence \"{}\"",
                        start + 1,
                        self.text()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn text(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.form.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Token indices (1-based) in the dependency subtree rooted at `head`.
    pub fn subtree(&self, head: usize) -> Vec<usize> {
        let n = self.len();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        let root = self.root();
        for (i, &h) in self.heads.iter().enumerate() {
            if i + 1 != root {
                children[h].push(i + 1);
            }
        }
        let mut out = Vec::new();
        let mut stack = vec![head];
        while let Some(t) = stack.pop() {
            out.push(t);
            stack.extend(children[t].iter().copied());
        }
        out.sort_unstable();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Predicate,
    Argument,
    Root,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Predicate => write!(f, "Predicate"),
            NodeKind::Argument => write!(f, "Argument"),
            NodeKind::Root => write!(f, "Root"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemNode {
    pub id: String,
    pub kind: NodeKind,
    /// 1-based center token index; absent for the root.
    pub center: Option<usize>,
    /// 1-based span member indices, center included; absent for the root.
    pub span: Option<BTreeSet<usize>>,
}

impl SemNode {
    pub fn root() -> SemNode {
        SemNode {
            id: ROOT_ID.to_string(),
            kind: NodeKind::Root,
            center: None,
            span: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemEdge {
    pub src: String,
    pub dst: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticGraph {
    pub nodes: Vec<SemNode>,
    pub edges: Vec<SemEdge>,
}

impl SemanticGraph {
    /// A graph holding only the virtual root.
    pub fn root_only() -> SemanticGraph {
        SemanticGraph {
            nodes: vec![SemNode::root()],
            edges: Vec::new(),
        }
    }

    pub fn node(&self, id: &str) -> Option<&SemNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Non-root nodes in deterministic order.
    pub fn semantic_nodes(&self) -> impl Iterator<Item = &SemNode> {
        self.nodes.iter().filter(|n| n.kind != NodeKind::Root)
    }

    pub fn validate(&self, sent: &AnnotatedSentence) -> Result<()> {
        let n_tokens = sent.len();
        let mut ids = HashSet::new();
        let mut roots = 0;
        for node in &self.nodes {
            if !ids.insert(node.id.as_str()) {
                return Err(Error::validation(format!("duplicate node id {}", node.id)));
            }
            match node.kind {
                NodeKind::Root => {
                    roots += 1;
                    if node.id != ROOT_ID {
                        return Err(Error::validation(format!(
                            "root node must have id {}, got {}",
                            ROOT_ID, node.id
                        )));
                    }
                    if node.center.is_some() || node.span.is_some() {
                        return Err(Error::validation("root node carries center/span"));
                    }
                }
                _ => {
                    let center = node.center.ok_or_else(|| {
                        Error::validation(format!("node {} has no center", node.id))
                    })?;
                    let span = node.span.as_ref().ok_or_else(|| {
                        Error::validation(format!("node {} has no span", node.id))
                    })?;
                    if center == 0 || center > n_tokens {
                        return Err(Error::validation(format!(
                            "node {} center {} out of range",
                            node.id, center
                        )));
                    }
                    if !span.contains(&center) {
                        return Err(Error::validation(format!(
                            "node {} span does not contain its center",
                            node.id
                        )));
                    }
                    if span.iter().any(|&t| t == 0 || t > n_tokens) {
                        return Err(Error::validation(format!(
                            "node {} span member out of range",
                            node.id
                        )));
                    }
                }
            }
        }
        if roots != 1 {
            return Err(Error::validation(format!(
                "expected exactly one root node, found {}",
                roots
            )));
        }
        // span disjointness: a token may appear in two spans only as the
        // shared center of one predicate and one argument node
        let mut owners: BTreeMap<usize, Vec<&SemNode>> = BTreeMap::new();
        for node in self.semantic_nodes() {
            for &t in node.span.as_ref().unwrap() {
                owners.entry(t).or_default().push(node);
            }
        }
        for (t, nodes) in &owners {
            if nodes.len() > 2 {
                return Err(Error::validation(format!(
                    "token {} belongs to {} spans",
                    t,
                    nodes.len()
                )));
            }
            if nodes.len() == 2 {
                let ok =
                    nodes.iter().all(|n| n.center == Some(*t)) && nodes[0].kind != nodes[1].kind;
                if !ok {
                    return Err(Error::validation(format!(
                        "token {} shared by two spans without being the predicate+argument center",
                        t
                    )));
                }
            }
        }
        // at most one predicate and one argument center per token
        let mut center_kinds: BTreeMap<(usize, NodeKind), usize> = BTreeMap::new();
        for node in self.semantic_nodes() {
            let c = node.center.unwrap();
            *center_kinds.entry((c, node.kind)).or_insert(0) += 1;
        }
        for ((t, kind), count) in &center_kinds {
            if *count > 1 {
                return Err(Error::validation(format!(
                    "token {} is the center of {} {} nodes",
                    t, count, kind
                )));
            }
        }
        // edges
        let mut pairs = HashSet::new();
        for e in &self.edges {
            if e.src == e.dst {
                return Err(Error::validation(format!("self edge on {}", e.src)));
            }
            if e.label == PHI_LABEL {
                return Err(Error::validation("edge stores the reserved no-edge label"));
            }
            if !ids.contains(e.src.as_str()) || !ids.contains(e.dst.as_str()) {
                return Err(Error::validation(format!(
                    "edge {}→{} references a missing node",
                    e.src, e.dst
                )));
            }
            if !pairs.insert((e.src.as_str(), e.dst.as_str())) {
                return Err(Error::validation(format!(
                    "duplicate edge {}→{}",
                    e.src, e.dst
                )));
            }
        }
        // reachability from root
        let mut reach: HashSet<&str> = HashSet::new();
        reach.insert(ROOT_ID);
        let mut frontier = vec![ROOT_ID];
        while let Some(cur) = frontier.pop() {
            for e in &self.edges {
                if e.src == cur && reach.insert(e.dst.as_str()) {
                    frontier.push(e.dst.as_str());
                }
            }
        }
        for node in self.semantic_nodes() {
            if !reach.contains(node.id.as_str()) {
                return Err(Error::validation(format!(
                    "node {} unreachable from root",
                    node.id
                )));
            }
        }
        Ok(())
    }
}

/// Ordered attribute name inventories.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub node_attrs: Vec<String>,
    pub edge_attrs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttrValue {
    pub v: f64,
    pub m: u8,
}

/// Per-node and per-edge masked scalar attributes.
///
/// Edge keys are `"src→dst"`. Entries with mask 0 are ignored by all losses
/// and metrics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttributeSet {
    pub node_attrs: BTreeMap<String, BTreeMap<String, AttrValue>>,
    pub edge_attrs: BTreeMap<String, BTreeMap<String, AttrValue>>,
}

pub fn edge_key(src: &str, dst: &str) -> String {
    format!("{}\u{2192}{}", src, dst)
}

pub fn split_edge_key(key: &str) -> Result<(String, String)> {
    let mut parts = key.splitn(2, '\u{2192}');
    match (parts.next(), parts.next()) {
        (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(Error::validation(format!("malformed edge key {:?}", key))),
    }
}

impl AttributeSet {
    pub fn validate(&self, graph: &SemanticGraph, schema: &AttributeSchema) -> Result<()> {
        let check_entries =
            |entries: &BTreeMap<String, AttrValue>, names: &[String], what: &str| -> Result<()> {
                for (name, av) in entries {
                    if !names.iter().any(|n| n == name) {
                        return Err(Error::validation(format!(
                            "{} attribute {} not in schema",
                            what, name
                        )));
                    }
                    if !(-3.0..=3.0).contains(&av.v) {
                        return Err(Error::validation(format!(
                            "{} attribute {} value {} outside [-3, 3]",
                            what, name, av.v
                        )));
                    }
                    if av.m > 1 {
                        return Err(Error::validation(format!(
                            "{} attribute {} mask {} not in {{0,1}}",
                            what, name, av.m
                        )));
                    }
                }
                Ok(())
            };
        for (id, entries) in &self.node_attrs {
            if graph.node(id).is_none() {
                return Err(Error::validation(format!(
                    "attributes on missing node {}",
                    id
                )));
            }
            check_entries(entries, &schema.node_attrs, "node")?;
        }
        let edge_keys: HashSet<String> = graph
            .edges
            .iter()
            .map(|e| edge_key(&e.src, &e.dst))
            .collect();
        for (key, entries) in &self.edge_attrs {
            if !edge_keys.contains(key) {
                return Err(Error::validation(format!(
                    "attributes on missing edge {}",
                    key
                )));
            }
            check_entries(entries, &schema.edge_attrs, "edge")?;
        }
        Ok(())
    }
}

/// 5-way word classification target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WordLabel {
    Phi,
    Syn,
    Pre,
    Arg,
    PreArg,
}

impl WordLabel {
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        match self {
            WordLabel::Phi => 0,
            WordLabel::Syn => 1,
            WordLabel::Pre => 2,
            WordLabel::Arg => 3,
            WordLabel::PreArg => 4,
        }
    }

    pub fn from_index(i: usize) -> WordLabel {
        match i {
            0 => WordLabel::Phi,
            1 => WordLabel::Syn,
            2 => WordLabel::Pre,
            3 => WordLabel::Arg,
            4 => WordLabel::PreArg,
            _ => panic!("word label index {} out of range", i),
        }
    }
}

/// Partition tokens into the five word classes from a gold graph.
pub fn derive_word_labels(
    sent: &AnnotatedSentence,
    graph: &SemanticGraph,
) -> Result<Vec<WordLabel>> {
    let n = sent.len();
    let mut pred_centers = vec![0usize; n + 1];
    let mut arg_centers = vec![0usize; n + 1];
    let mut in_span = vec![false; n + 1];
    for node in graph.semantic_nodes() {
        let c = node.center.unwrap();
        match node.kind {
            NodeKind::Predicate => pred_centers[c] += 1,
            NodeKind::Argument => arg_centers[c] += 1,
            NodeKind::Root => unreachable!(),
        }
        for &t in node.span.as_ref().unwrap() {
            in_span[t] = true;
        }
    }
    let mut labels = Vec::with_capacity(n);
    for t in 1..=n {
        if pred_centers[t] > 1 || arg_centers[t] > 1 {
            return Err(Error::validation(format!(
                "token {} is the center of two nodes of the same kind",
                t
            )));
        }
        let label = match (pred_centers[t], arg_centers[t]) {
            (1, 1) => WordLabel::PreArg,
            (1, 0) => WordLabel::Pre,
            (0, 1) => WordLabel::Arg,
            (0, 0) if in_span[t] => WordLabel::Syn,
            _ => WordLabel::Phi,
        };
        labels.push(label);
    }
    Ok(labels)
}

/// Triples of the linearized arborescence used by the S-score.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Triple {
    /// kind(node, Predicate|Argument)
    Kind(String, NodeKind),
    /// instance(node, center surface form)
    Instance(String, String),
    /// nonhead(node, span member form, signed offset from the center)
    Nonhead(String, String, i64),
    /// semedge(src, dst, label)
    SemEdge(String, String, String),
    /// rootedge(ROOT, dst)
    RootEdge(String),
}

impl Triple {
    /// Node ids referenced by this triple.
    pub fn node_refs(&self) -> (&str, Option<&str>) {
        match self {
            Triple::Kind(n, _) | Triple::Instance(n, _) | Triple::Nonhead(n, _, _) => {
                (n.as_str(), None)
            }
            Triple::SemEdge(a, b, _) => (a.as_str(), Some(b.as_str())),
            Triple::RootEdge(d) => (d.as_str(), None),
        }
    }
}

/// Linearize a graph into the triple set scored by the S-metric.
///
/// Ordering is deterministic (sorted).
pub fn linearize_arborescence(sent: &AnnotatedSentence, graph: &SemanticGraph) -> Vec<Triple> {
    let mut triples = Vec::new();
    for node in graph.semantic_nodes() {
        let center = node.center.unwrap();
        triples.push(Triple::Kind(node.id.clone(), node.kind));
        triples.push(Triple::Instance(
            node.id.clone(),
            sent.tokens[center - 1].form.clone(),
        ));
        for &t in node.span.as_ref().unwrap() {
            if t != center {
                triples.push(Triple::Nonhead(
                    node.id.clone(),
                    sent.tokens[t - 1].form.clone(),
                    t as i64 - center as i64,
                ));
            }
        }
    }
    for e in &graph.edges {
        if e.src == ROOT_ID {
            triples.push(Triple::RootEdge(e.dst.clone()));
        } else {
            triples.push(Triple::SemEdge(
                e.src.clone(),
                e.dst.clone(),
                e.label.clone(),
            ));
        }
    }
    triples.sort();
    triples
}

/// The "Sounds like we ca n't get one" example: predicate span
/// "Sounds like" centered at "Sounds", embedded predicate "get" that
/// also anchors an extra argument node for the clause.
#[cfg(test)]
pub(crate) fn figure_sentence() -> (AnnotatedSentence, SemanticGraph) {
    let sent = AnnotatedSentence::new(
        ["Sounds", "like", "we", "ca", "n't", "get", "one"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        ["VERB", "SCONJ", "PRON", "AUX", "PART", "VERB", "PRON"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        vec![1, 6, 6, 6, 6, 1, 6],
        ["root", "mark", "nsubj", "aux", "advmod", "ccomp", "obj"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    )
    .unwrap();
    let node = |id: &str, kind: NodeKind, center: usize, span: &[usize]| SemNode {
        id: id.to_string(),
        kind,
        center: Some(center),
        span: span.iter().copied().collect::<BTreeSet<_>>().into(),
    };
    let graph = SemanticGraph {
        nodes: vec![
            SemNode::root(),
            node("p1", NodeKind::Predicate, 1, &[1, 2]),
            node("a3", NodeKind::Argument, 3, &[3]),
            node("p6", NodeKind::Predicate, 6, &[4, 5, 6]),
            node("a6", NodeKind::Argument, 6, &[6]),
            node("a7", NodeKind::Argument, 7, &[7]),
        ],
        edges: vec![
            SemEdge {
                src: ROOT_ID.into(),
                dst: "p1".into(),
                label: "root".into(),
            },
            SemEdge {
                src: ROOT_ID.into(),
                dst: "p6".into(),
                label: "root".into(),
            },
            SemEdge {
                src: "p1".into(),
                dst: "a6".into(),
                label: "arg".into(),
            },
            SemEdge {
                src: "p6".into(),
                dst: "a3".into(),
                label: "arg".into(),
            },
            SemEdge {
                src: "p6".into(),
                dst: "a7".into(),
                label: "arg".into(),
            },
        ],
    };
    graph.validate(&sent).unwrap();
    (sent, graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headword_of_root_is_itself() {
        let (sent, _) = figure_sentence();
        assert_eq!(sent.root(), 1);
        assert_eq!(sent.heads[0], 1);
        // headword of "we" is "get"
        assert_eq!(sent.tokens[sent.heads[2] - 1].form, "get");
    }

    #[test]
    fn word_labels_partition_tokens() {
        let (sent, graph) = figure_sentence();
        let labels = derive_word_labels(&sent, &graph).unwrap();
        assert_eq!(
            labels,
            vec![
                WordLabel::Pre,    // Sounds
                WordLabel::Syn,    // like
                WordLabel::Arg,    // we
                WordLabel::Syn,    // ca
                WordLabel::Syn,    // n't
                WordLabel::PreArg, // get
                WordLabel::Arg,    // one
            ]
        );
    }

    #[test]
    fn uncovered_token_is_phi() {
        let sent = AnnotatedSentence::new(
            vec!["Dogs".into(), "bark".into(), ".".into()],
            vec!["NOUN".into(), "VERB".into(), "PUNCT".into()],
            vec![2, 2, 2],
            vec!["nsubj".into(), "root".into(), "punct".into()],
        )
        .unwrap();
        let graph = SemanticGraph {
            nodes: vec![
                SemNode::root(),
                SemNode {
                    id: "p2".into(),
                    kind: NodeKind::Predicate,
                    center: Some(2),
                    span: Some([2].into_iter().collect()),
                },
            ],
            edges: vec![SemEdge {
                src: ROOT_ID.into(),
                dst: "p2".into(),
                label: "root".into(),
            }],
        };
        let labels = derive_word_labels(&sent, &graph).unwrap();
        assert_eq!(labels[2], WordLabel::Phi);
    }

    #[test]
    fn double_center_same_kind_is_error() {
        let (sent, mut graph) = figure_sentence();
        graph.nodes.push(SemNode {
            id: "p1b".into(),
            kind: NodeKind::Predicate,
            center: Some(1),
            span: Some([1].into_iter().collect()),
        });
        graph.edges.push(SemEdge {
            src: ROOT_ID.into(),
            dst: "p1b".into(),
            label: "root".into(),
        });
        assert!(derive_word_labels(&sent, &graph).is_err());
    }

    #[test]
    fn linearize_figure_predicate() {
        let (sent, graph) = figure_sentence();
        let triples = linearize_arborescence(&sent, &graph);
        assert!(triples.contains(&Triple::Kind("p1".into(), NodeKind::Predicate)));
        assert!(triples.contains(&Triple::Instance("p1".into(), "Sounds".into())));
        assert!(triples.contains(&Triple::Nonhead("p1".into(), "like".into(), 1)));
    }

    #[test]
    fn linearize_minimal_graph() {
        let sent = AnnotatedSentence::new(
            vec!["runs".into()],
            vec!["VERB".into()],
            vec![1],
            vec!["root".into()],
        )
        .unwrap();
        let graph = SemanticGraph {
            nodes: vec![
                SemNode::root(),
                SemNode {
                    id: "p1".into(),
                    kind: NodeKind::Predicate,
                    center: Some(1),
                    span: Some([1].into_iter().collect()),
                },
            ],
            edges: vec![SemEdge {
                src: ROOT_ID.into(),
                dst: "p1".into(),
                label: "root".into(),
            }],
        };
        let triples = linearize_arborescence(&sent, &graph);
        assert_eq!(triples.len(), 3);
        assert!(triples.contains(&Triple::RootEdge("p1".into())));
    }

    #[test]
    fn triple_count_formula() {
        let (sent, graph) = figure_sentence();
        let triples = linearize_arborescence(&sent, &graph);
        let n_nodes = graph.semantic_nodes().count();
        let span_extra: usize = graph
            .semantic_nodes()
            .map(|n| n.span.as_ref().unwrap().len() - 1)
            .sum();
        let root_edges = graph.edges.iter().filter(|e| e.src == ROOT_ID).count();
        let sem_edges = graph.edges.len() - root_edges;
        assert_eq!(
            triples.len(),
            n_nodes * 2 + span_extra + sem_edges + root_edges
        );
    }

    #[test]
    fn validate_rejects_missing_edge_endpoint() {
        let (sent, mut graph) = figure_sentence();
        graph.edges.push(SemEdge {
            src: "p1".into(),
            dst: "nope".into(),
            label: "arg".into(),
        });
        assert!(graph.validate(&sent).is_err());
    }

    #[test]
    fn validate_rejects_cycle_sentence() {
        // heads (2, 1): a 2-cycle, no root
        let r = AnnotatedSentence::new(
            vec!["a".into(), "b".into()],
            vec!["X".into(), "X".into()],
            vec![2, 1],
            vec!["dep".into(), "dep".into()],
        );
        assert!(r.is_err());
    }
}
