//! S-score: Smatch-style precision/recall/F1 over the best node alignment
//! between predicted and gold linearized graphs, found by hill climbing
//! with one greedy and several random restarts.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{
    linearize_arborescence, AnnotatedSentence, NodeKind, SemanticGraph, Triple, ROOT_ID,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Injective map predicted node id -> gold node id.
    pub alignment: BTreeMap<String, String>,
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MatchResult {
    fn from_counts(alignment: BTreeMap<String, String>, matched: usize, predicted: usize, gold: usize) -> MatchResult {
        let (precision, recall, f1) = prf(matched, predicted, gold);
        MatchResult {
            alignment,
            matched,
            predicted,
            gold,
            precision,
            recall,
            f1,
        }
    }
}

/// Percent precision/recall/F1 with the empty-graph conventions: both empty
/// scores 100/100/100; an empty side against a non-empty one scores 0.
pub fn prf(matched: usize, predicted: usize, gold: usize) -> (f64, f64, f64) {
    if predicted == 0 && gold == 0 {
        return (100.0, 100.0, 100.0);
    }
    let p = if predicted == 0 {
        0.0
    } else {
        100.0 * matched as f64 / predicted as f64
    };
    let r = if gold == 0 {
        0.0
    } else {
        100.0 * matched as f64 / gold as f64
    };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

struct Side {
    /// Semantic node ids with kinds, deterministic order.
    nodes: Vec<(String, NodeKind)>,
    triples: Vec<Triple>,
}

fn side(sent: &AnnotatedSentence, graph: &SemanticGraph) -> Side {
    Side {
        nodes: graph
            .semantic_nodes()
            .map(|n| (n.id.clone(), n.kind))
            .collect(),
        triples: linearize_arborescence(sent, graph),
    }
}

fn gold_multiset(triples: &[Triple]) -> HashMap<Triple, usize> {
    let mut m = HashMap::new();
    for t in triples {
        *m.entry(t.clone()).or_insert(0) += 1;
    }
    m
}

/// Matched triples under an alignment given as pred-node-index -> gold-node-
/// index (None = unaligned). ROOT aligns to ROOT implicitly.
fn matched_triples(
    pred: &Side,
    gold: &Side,
    gold_counts: &HashMap<Triple, usize>,
    assign: &[Option<usize>],
) -> usize {
    let rename = |id: &str| -> Option<String> {
        if id == ROOT_ID {
            return Some(ROOT_ID.to_string());
        }
        let i = pred.nodes.iter().position(|(n, _)| n == id)?;
        assign[i].map(|g| gold.nodes[g].0.clone())
    };
    let mut remaining = gold_counts.clone();
    let mut matched = 0;
    for t in &pred.triples {
        let renamed = match t {
            Triple::Kind(n, k) => rename(n).map(|n| Triple::Kind(n, *k)),
            Triple::Instance(n, f) => rename(n).map(|n| Triple::Instance(n, f.clone())),
            Triple::Nonhead(n, f, o) => rename(n).map(|n| Triple::Nonhead(n, f.clone(), *o)),
            Triple::SemEdge(a, b, l) => match (rename(a), rename(b)) {
                (Some(a), Some(b)) => Some(Triple::SemEdge(a, b, l.clone())),
                _ => None,
            },
            Triple::RootEdge(d) => rename(d).map(Triple::RootEdge),
        };
        if let Some(rt) = renamed {
            if let Some(c) = remaining.get_mut(&rt) {
                if *c > 0 {
                    *c -= 1;
                    matched += 1;
                }
            }
        }
    }
    matched
}

/// Greedy center-word initialization: align same-kind nodes sharing the
/// center surface form, preferring identical ids.
fn greedy_init(pred: &Side, gold: &Side, pred_sent: &AnnotatedSentence, pred_graph: &SemanticGraph, gold_sent: &AnnotatedSentence, gold_graph: &SemanticGraph) -> Vec<Option<usize>> {
    let form_of = |sent: &AnnotatedSentence, graph: &SemanticGraph, id: &str| -> Option<String> {
        graph
            .node(id)
            .and_then(|n| n.center)
            .map(|c| sent.tokens[c - 1].form.clone())
    };
    let mut used = vec![false; gold.nodes.len()];
    let mut assign = vec![None; pred.nodes.len()];
    // pass 1: identical ids
    for (i, (pid, pk)) in pred.nodes.iter().enumerate() {
        if let Some(g) = gold
            .nodes
            .iter()
            .position(|(gid, gk)| gid == pid && gk == pk)
        {
            if !used[g] {
                assign[i] = Some(g);
                used[g] = true;
            }
        }
    }
    // pass 2: matching center words
    for (i, (pid, pk)) in pred.nodes.iter().enumerate() {
        if assign[i].is_some() {
            continue;
        }
        let pf = form_of(pred_sent, pred_graph, pid);
        if pf.is_none() {
            continue;
        }
        for (g, (gid, gk)) in gold.nodes.iter().enumerate() {
            if used[g] || gk != pk {
                continue;
            }
            if form_of(gold_sent, gold_graph, gid) == pf {
                assign[i] = Some(g);
                used[g] = true;
                break;
            }
        }
    }
    assign
}

fn random_init(pred: &Side, gold: &Side, rng: &mut ChaCha8Rng) -> Vec<Option<usize>> {
    let mut assign = vec![None; pred.nodes.len()];
    for kind in [NodeKind::Predicate, NodeKind::Argument] {
        let ps: Vec<usize> = (0..pred.nodes.len())
            .filter(|&i| pred.nodes[i].1 == kind)
            .collect();
        let mut gs: Vec<usize> = (0..gold.nodes.len())
            .filter(|&g| gold.nodes[g].1 == kind)
            .collect();
        gs.shuffle(rng);
        for (&p, &g) in ps.iter().zip(&gs) {
            assign[p] = Some(g);
        }
    }
    assign
}

/// Best-improvement hill climbing over single reassignments and swaps.
fn climb(
    pred: &Side,
    gold: &Side,
    gold_counts: &HashMap<Triple, usize>,
    mut assign: Vec<Option<usize>>,
) -> (Vec<Option<usize>>, usize) {
    let mut score = matched_triples(pred, gold, gold_counts, &assign);
    loop {
        let mut best: Option<(usize, Vec<Option<usize>>)> = None;
        let used: Vec<bool> = {
            let mut u = vec![false; gold.nodes.len()];
            for a in assign.iter().flatten() {
                u[*a] = true;
            }
            u
        };
        // move one node to a free gold slot (or unalign it)
        for i in 0..assign.len() {
            let kind = pred.nodes[i].1;
            let mut options: Vec<Option<usize>> = (0..gold.nodes.len())
                .filter(|&g| !used[g] && gold.nodes[g].1 == kind)
                .map(Some)
                .collect();
            if assign[i].is_some() {
                options.push(None);
            }
            for opt in options {
                let mut cand = assign.clone();
                cand[i] = opt;
                let s = matched_triples(pred, gold, gold_counts, &cand);
                if s > score && best.as_ref().map(|(b, _)| s > *b).unwrap_or(true) {
                    best = Some((s, cand));
                }
            }
        }
        // swap the targets of two same-kind nodes
        for i in 0..assign.len() {
            for j in i + 1..assign.len() {
                if pred.nodes[i].1 != pred.nodes[j].1 || assign[i] == assign[j] {
                    continue;
                }
                let mut cand = assign.clone();
                cand.swap(i, j);
                let s = matched_triples(pred, gold, gold_counts, &cand);
                if s > score && best.as_ref().map(|(b, _)| s > *b).unwrap_or(true) {
                    best = Some((s, cand));
                }
            }
        }
        match best {
            Some((s, cand)) => {
                score = s;
                assign = cand;
            }
            None => return (assign, score),
        }
    }
}

fn result_from(pred: &Side, gold: &Side, assign: &[Option<usize>], matched: usize) -> MatchResult {
    let mut alignment = BTreeMap::new();
    for (i, a) in assign.iter().enumerate() {
        if let Some(g) = a {
            alignment.insert(pred.nodes[i].0.clone(), gold.nodes[*g].0.clone());
        }
    }
    MatchResult::from_counts(alignment, matched, pred.triples.len(), gold.triples.len())
}

/// Approximate best-alignment score via restarts of hill climbing:
/// restart 1 is the greedy center-word map, the rest are random.
pub fn s_score(
    pred: (&AnnotatedSentence, &SemanticGraph),
    gold: (&AnnotatedSentence, &SemanticGraph),
    restarts: usize,
    seed: u64,
) -> MatchResult {
    let ps = side(pred.0, pred.1);
    let gs = side(gold.0, gold.1);
    let counts = gold_multiset(&gs.triples);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Vec<Option<usize>>)> = None;
    for r in 0..restarts.max(1) {
        let init = if r == 0 {
            greedy_init(&ps, &gs, pred.0, pred.1, gold.0, gold.1)
        } else {
            random_init(&ps, &gs, &mut rng)
        };
        let (assign, score) = climb(&ps, &gs, &counts, init);
        if best.as_ref().map(|(b, _)| score > *b).unwrap_or(true) {
            best = Some((score, assign));
        }
    }
    let (score, assign) = best.unwrap();
    result_from(&ps, &gs, &assign, score)
}

/// Exact optimum by enumerating every injective same-kind alignment.
pub fn s_score_bruteforce(
    pred: (&AnnotatedSentence, &SemanticGraph),
    gold: (&AnnotatedSentence, &SemanticGraph),
) -> Result<MatchResult> {
    let ps = side(pred.0, pred.1);
    let gs = side(gold.0, gold.1);
    if ps.nodes.len() > 8 || gs.nodes.len() > 8 {
        return Err(Error::validation(format!(
            "brute force capped at 8 semantic nodes, got {} vs {}",
            ps.nodes.len(),
            gs.nodes.len()
        )));
    }
    let counts = gold_multiset(&gs.triples);
    let mut assign = vec![None; ps.nodes.len()];
    let mut used = vec![false; gs.nodes.len()];
    let mut best: Option<(usize, Vec<Option<usize>>)> = None;
    enumerate(&ps, &gs, &counts, 0, &mut assign, &mut used, &mut best);
    let (score, assign) = best.expect("enumeration visits the empty alignment");
    Ok(result_from(&ps, &gs, &assign, score))
}

fn enumerate(
    pred: &Side,
    gold: &Side,
    counts: &HashMap<Triple, usize>,
    i: usize,
    assign: &mut Vec<Option<usize>>,
    used: &mut Vec<bool>,
    best: &mut Option<(usize, Vec<Option<usize>>)>,
) {
    if i == assign.len() {
        let s = matched_triples(pred, gold, counts, assign);
        if best.as_ref().map(|(b, _)| s > *b).unwrap_or(true) {
            *best = Some((s, assign.clone()));
        }
        return;
    }
    assign[i] = None;
    enumerate(pred, gold, counts, i + 1, assign, used, best);
    for g in 0..gold.nodes.len() {
        if !used[g] && gold.nodes[g].1 == pred.nodes[i].1 {
            used[g] = true;
            assign[i] = Some(g);
            enumerate(pred, gold, counts, i + 1, assign, used, best);
            assign[i] = None;
            used[g] = false;
        }
    }
}

/// Corpus micro-average: triple counts pooled over sentence pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CorpusCounts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl CorpusCounts {
    pub fn add(&mut self, r: &MatchResult) {
        self.matched += r.matched;
        self.predicted += r.predicted;
        self.gold += r.gold;
    }

    pub fn prf(&self) -> (f64, f64, f64) {
        prf(self.matched, self.predicted, self.gold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::figure_sentence;

    #[test]
    fn identity_scores_100() {
        let (sent, graph) = figure_sentence();
        let r = s_score((&sent, &graph), (&sent, &graph), 5, 0);
        assert_eq!(r.precision, 100.0);
        assert_eq!(r.recall, 100.0);
        assert_eq!(r.f1, 100.0);
    }

    #[test]
    fn dropped_node_keeps_precision() {
        let (sent, graph) = figure_sentence();
        let mut pred = graph.clone();
        // drop a7 and its edge
        pred.nodes.retain(|n| n.id != "a7");
        pred.edges.retain(|e| e.dst != "a7");
        let r = s_score((&sent, &pred), (&sent, &graph), 5, 0);
        assert_eq!(r.precision, 100.0);
        assert!(r.recall < 100.0);
    }

    #[test]
    fn empty_vs_empty_and_empty_vs_gold() {
        let (sent, graph) = figure_sentence();
        let empty = SemanticGraph::root_only();
        let r = s_score((&sent, &empty), (&sent, &empty), 5, 0);
        assert_eq!((r.precision, r.recall, r.f1), (100.0, 100.0, 100.0));
        let r = s_score((&sent, &empty), (&sent, &graph), 5, 0);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn renamed_ids_still_align_fully() {
        let (sent, graph) = figure_sentence();
        let mut pred = graph.clone();
        for n in &mut pred.nodes {
            if n.id != ROOT_ID {
                n.id = format!("x_{}", n.id);
            }
        }
        for e in &mut pred.edges {
            if e.src != ROOT_ID {
                e.src = format!("x_{}", e.src);
            }
            e.dst = format!("x_{}", e.dst);
        }
        let r = s_score((&sent, &pred), (&sent, &graph), 5, 0);
        assert_eq!(r.f1, 100.0);
    }

    #[test]
    fn bruteforce_symmetry() {
        let (sent, graph) = figure_sentence();
        let mut pred = graph.clone();
        pred.nodes.retain(|n| n.id != "a7");
        pred.edges.retain(|e| e.dst != "a7");
        let ab = s_score_bruteforce((&sent, &pred), (&sent, &graph)).unwrap();
        let ba = s_score_bruteforce((&sent, &graph), (&sent, &pred)).unwrap();
        assert_eq!(ab.matched, ba.matched);
        assert_eq!(ab.precision, ba.recall);
        assert_eq!(ab.recall, ba.precision);
        assert!((ab.f1 - ba.f1).abs() < 1e-12);
    }

    #[test]
    fn hill_climb_never_exceeds_bruteforce_here() {
        let (sent, graph) = figure_sentence();
        let mut pred = graph.clone();
        pred.edges.retain(|e| e.label != "arg");
        let hc = s_score((&sent, &pred), (&sent, &graph), 5, 1);
        let bf = s_score_bruteforce((&sent, &pred), (&sent, &graph)).unwrap();
        assert!(hc.matched <= bf.matched);
    }

    #[test]
    fn more_restarts_never_lower() {
        let (sent, graph) = figure_sentence();
        let mut pred = graph.clone();
        pred.edges.retain(|e| e.label != "root");
        let one = s_score((&sent, &pred), (&sent, &graph), 1, 3);
        let five = s_score((&sent, &pred), (&sent, &graph), 5, 3);
        assert!(five.matched >= one.matched);
    }
}
