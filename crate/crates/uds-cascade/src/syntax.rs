//! POS tagging and biaffine dependency parsing.
//!
//! Head scores are a one-channel biaffine over ReLU projections of the
//! encoder output; every position (including the word itself) is a head
//! candidate, and a self-arc encodes the root. Label scores are a bilinear
//! over separate projections, conditioned on the chosen head.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::nn::{affine, xavier};
use crate::tensor::ops;
use crate::tensor::optim::{ParamStore, Parameter};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntaxConfig {
    pub arc_dim: usize,
    pub label_dim: usize,
    pub pos_hidden: usize,
}

impl SyntaxConfig {
    pub fn for_hidden(d: usize) -> SyntaxConfig {
        SyntaxConfig {
            arc_dim: d,
            label_dim: (d / 2).max(1),
            pos_hidden: (d / 2).max(1),
        }
    }
}

/// All per-sentence syntax scores plus the shared projections reused by
/// attention-based syntax injection.
pub struct SyntaxScores {
    /// `K x K`; entry (i, j) scores head j for dependent i.
    pub arc_logits: Tensor,
    /// `[K*K, L]`; row `i*K + j` holds label scores of (dependent i, head j).
    pub label_logits: Tensor,
    /// `K x |POS|`.
    pub pos_logits: Tensor,
    /// Pre-activation projections of Eq-style head scoring, shared with the
    /// attention injection (left/right arc, left/right label).
    pub proj_arc_l: Tensor,
    pub proj_arc_r: Tensor,
    pub proj_lab_l: Tensor,
    pub proj_lab_r: Tensor,
}

pub struct SyntaxModule {
    pub cfg: SyntaxConfig,
    pub n_pos: usize,
    pub n_labels: usize,
    pos_w1: Parameter,
    pos_b1: Parameter,
    pos_w2: Parameter,
    pos_b2: Parameter,
    arc_l: Parameter,
    arc_r: Parameter,
    arc_w: Parameter,
    lab_l: Parameter,
    lab_r: Parameter,
    lab_w: Parameter,
}

impl SyntaxModule {
    pub fn new(
        cfg: SyntaxConfig,
        d: usize,
        n_pos: usize,
        n_labels: usize,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> SyntaxModule {
        let da = cfg.arc_dim;
        let dl = cfg.label_dim;
        let ph = cfg.pos_hidden;
        SyntaxModule {
            pos_w1: store.register("syntax.pos_w1", vec![d, ph], xavier(rng, d, ph, d * ph)),
            pos_b1: store.register("syntax.pos_b1", vec![ph], vec![0.0; ph]),
            pos_w2: store.register(
                "syntax.pos_w2",
                vec![ph, n_pos],
                xavier(rng, ph, n_pos, ph * n_pos),
            ),
            pos_b2: store.register("syntax.pos_b2", vec![n_pos], vec![0.0; n_pos]),
            arc_l: store.register("syntax.arc_l", vec![d, da], xavier(rng, d, da, d * da)),
            arc_r: store.register("syntax.arc_r", vec![d, da], xavier(rng, d, da, d * da)),
            arc_w: store.register(
                "syntax.arc_w",
                vec![1, da + 1, da + 1],
                xavier(rng, da + 1, da + 1, (da + 1) * (da + 1)),
            ),
            lab_l: store.register("syntax.lab_l", vec![d, dl], xavier(rng, d, dl, d * dl)),
            lab_r: store.register("syntax.lab_r", vec![d, dl], xavier(rng, d, dl, d * dl)),
            lab_w: store.register(
                "syntax.lab_w",
                vec![n_labels, dl, dl],
                xavier(rng, dl, dl, n_labels * dl * dl),
            ),
            cfg,
            n_pos,
            n_labels,
        }
    }

    /// POS logits only (first half of the syntactic module).
    pub fn predict_pos(&self, h: &Tensor) -> Result<Tensor> {
        let hidden = ops::relu(&affine(h, &self.pos_w1.tensor(), &self.pos_b1.tensor())?);
        affine(&hidden, &self.pos_w2.tensor(), &self.pos_b2.tensor())
    }

    /// Score heads and labels for every (dependent, head) pair at once.
    pub fn score(&self, h: &Tensor) -> Result<SyntaxScores> {
        let k = h.rows();
        let proj_arc_l = ops::matmul(h, &self.arc_l.tensor())?;
        let proj_arc_r = ops::matmul(h, &self.arc_r.tensor())?;
        let proj_lab_l = ops::matmul(h, &self.lab_l.tensor())?;
        let proj_lab_r = ops::matmul(h, &self.lab_r.tensor())?;
        let arc = ops::biaffine(
            &ops::relu(&proj_arc_l),
            &ops::relu(&proj_arc_r),
            &self.arc_w.tensor(),
        )?;
        let arc_logits = ops::reshape(&arc, vec![k, k])?;
        let label_logits = ops::bilinear(
            &ops::relu(&proj_lab_l),
            &ops::relu(&proj_lab_r),
            &self.lab_w.tensor(),
        )?;
        let pos_logits = self.predict_pos(h)?;
        Ok(SyntaxScores {
            arc_logits,
            label_logits,
            pos_logits,
            proj_arc_l,
            proj_arc_r,
            proj_lab_l,
            proj_lab_r,
        })
    }

    /// POS cross-entropy (mean over tokens).
    pub fn pos_loss(&self, scores: &SyntaxScores, gold_pos: &[usize]) -> Result<Tensor> {
        ops::cross_entropy_rows(&scores.pos_logits, gold_pos)
    }

    /// Arc + label cross-entropy under teacher forcing: label scores are
    /// taken at the gold head of each dependent.
    pub fn tree_loss(
        &self,
        scores: &SyntaxScores,
        gold_heads_1b: &[usize],
        gold_labels: &[usize],
    ) -> Result<Tensor> {
        let k = scores.arc_logits.rows();
        let head_targets: Vec<usize> = gold_heads_1b.iter().map(|&h| h - 1).collect();
        let arc_loss = ops::cross_entropy_rows(&scores.arc_logits, &head_targets)?;
        let rows: Vec<usize> = (0..k).map(|i| i * k + head_targets[i]).collect();
        let at_gold = ops::select_rows(&scores.label_logits, &rows)?;
        let label_loss = ops::cross_entropy_rows(&at_gold, gold_labels)?;
        ops::add(&arc_loss, &label_loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Mst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedTree {
    /// 1-based heads, root pointing at itself.
    pub heads: Vec<usize>,
    /// Label index per token.
    pub labels: Vec<usize>,
    /// Greedy decoding may produce a non-tree; it is flagged, never repaired.
    pub valid: bool,
    pub issues: Vec<String>,
}

/// Decode a head assignment and labels from score matrices.
///
/// `arc` is row-major `K x K` (dependent, head) with self-arcs encoding the
/// root. `label_at(dep, head)` returns the argmax label for that pair.
pub fn decode_tree(
    arc: &[f64],
    k: usize,
    mode: DecodeMode,
    label_at: impl Fn(usize, usize) -> usize,
) -> DecodedTree {
    assert_eq!(arc.len(), k * k);
    let heads0 = match mode {
        DecodeMode::Greedy => greedy_heads(arc, k),
        DecodeMode::Mst => mst_heads(arc, k),
    };
    let labels: Vec<usize> = (0..k).map(|i| label_at(i, heads0[i])).collect();
    let heads: Vec<usize> = heads0.iter().map(|&h| h + 1).collect();
    let (valid, issues) = check_tree(&heads);
    DecodedTree {
        heads,
        labels,
        valid,
        issues,
    }
}

fn check_tree(heads: &[usize]) -> (bool, Vec<String>) {
    let n = heads.len();
    let mut issues = Vec::new();
    let roots: Vec<usize> = (0..n).filter(|&i| heads[i] == i + 1).collect();
    if roots.len() != 1 {
        issues.push(format!("{} self-headed tokens", roots.len()));
        return (false, issues);
    }
    let root = roots[0];
    for start in 0..n {
        let mut cur = start;
        let mut steps = 0;
        while cur != root {
            cur = heads[cur] - 1;
            steps += 1;
            if steps > n {
                issues.push(format!("cycle reachable from token {}", start + 1));
                return (false, issues);
            }
        }
    }
    (true, issues)
}

fn greedy_heads(arc: &[f64], k: usize) -> Vec<usize> {
    (0..k)
        .map(|i| {
            let row = &arc[i * k..(i + 1) * k];
            argmax(row)
        })
        .collect()
}

/// Maximum spanning arborescence over non-self arcs, rooted at the
/// best-scoring self-arc choice (the word whose self arc plus arborescence
/// total is highest). Always yields a valid tree.
fn mst_heads(arc: &[f64], k: usize) -> Vec<usize> {
    if k == 1 {
        return vec![0];
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for root in 0..k {
        // scores[h][d]: benefit of arc head h -> dependent d
        let mut scores = vec![vec![f64::NEG_INFINITY; k]; k];
        for d in 0..k {
            for h in 0..k {
                if h != d && d != root {
                    scores[h][d] = arc[d * k + h];
                }
            }
        }
        let parent = chu_liu_edmonds(&scores, root);
        let heads: Vec<usize> = (0..k)
            .map(|d| if d == root { root } else { parent[d] })
            .collect();
        let total: f64 = (0..k).map(|d| arc[d * k + heads[d]]).sum();
        if best.as_ref().map(|(_, b)| total > *b).unwrap_or(true) {
            best = Some((heads, total));
        }
    }
    best.unwrap().0
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Chu-Liu/Edmonds over a dense score matrix `scores[head][dep]`.
/// Returns the chosen head per dependent (the root entry is unspecified).
fn chu_liu_edmonds(scores: &[Vec<f64>], root: usize) -> Vec<usize> {
    let n = scores.len();
    // best incoming arc per non-root vertex
    let mut parent = vec![usize::MAX; n];
    for d in 0..n {
        if d == root {
            continue;
        }
        let mut best = usize::MAX;
        for h in 0..n {
            if scores[h][d] == f64::NEG_INFINITY {
                continue;
            }
            if best == usize::MAX || scores[h][d] > scores[best][d] {
                best = h;
            }
        }
        parent[d] = best;
    }
    // find a cycle among the chosen arcs
    let cycle = find_cycle(&parent, root);
    let cycle = match cycle {
        None => return parent,
        Some(c) => c,
    };
    let in_cycle: Vec<bool> = {
        let mut v = vec![false; n];
        for &c in &cycle {
            v[c] = true;
        }
        v
    };
    // contract the cycle into a fresh vertex
    let mut old_of = Vec::new(); // contracted index -> old index (cycle vertex = last)
    let mut new_of = vec![usize::MAX; n];
    for v in 0..n {
        if !in_cycle[v] {
            new_of[v] = old_of.len();
            old_of.push(v);
        }
    }
    let c_id = old_of.len();
    let m = c_id + 1;
    let new_root = new_of[root];
    let mut sub = vec![vec![f64::NEG_INFINITY; m]; m];
    // entering arcs: remember which cycle vertex the arc attacks
    let mut enter_choice = vec![usize::MAX; m];
    // leaving arcs: remember which cycle vertex supplies the arc
    let mut leave_choice = vec![usize::MAX; m];
    for u in 0..n {
        for v in 0..n {
            if scores[u][v] == f64::NEG_INFINITY {
                continue;
            }
            match (in_cycle[u], in_cycle[v]) {
                (false, false) => {
                    let (nu, nv) = (new_of[u], new_of[v]);
                    if scores[u][v] > sub[nu][nv] {
                        sub[nu][nv] = scores[u][v];
                    }
                }
                (false, true) => {
                    // breaking the cycle at v costs its current cycle arc
                    let gain = scores[u][v] - scores[parent[v]][v];
                    let nu = new_of[u];
                    if gain > sub[nu][c_id] {
                        sub[nu][c_id] = gain;
                        enter_choice[nu] = v;
                    }
                }
                (true, false) => {
                    let nv = new_of[v];
                    if scores[u][v] > sub[c_id][nv] {
                        sub[c_id][nv] = scores[u][v];
                        leave_choice[nv] = u;
                    }
                }
                (true, true) => {}
            }
        }
    }
    let sub_parent = chu_liu_edmonds(&sub, new_root);
    // expand
    let mut out = vec![usize::MAX; n];
    for v in 0..n {
        if v == root || in_cycle[v] {
            continue;
        }
        let p = sub_parent[new_of[v]];
        out[v] = if p == c_id {
            leave_choice[new_of[v]]
        } else {
            old_of[p]
        };
    }
    // cycle vertices keep their cycle arcs except the attacked one
    let attacker = sub_parent[c_id];
    debug_assert_ne!(attacker, usize::MAX, "contracted cycle must be entered");
    let attacked = enter_choice[attacker];
    for &v in &cycle {
        out[v] = if v == attacked {
            old_of[attacker]
        } else {
            parent[v]
        };
    }
    out
}

fn find_cycle(parent: &[usize], root: usize) -> Option<Vec<usize>> {
    let n = parent.len();
    // 0 = unvisited, 1 = on current path, 2 = done
    let mut state = vec![0u8; n];
    state[root] = 2;
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut cur = start;
        while state[cur] == 0 {
            state[cur] = 1;
            path.push(cur);
            cur = parent[cur];
        }
        if state[cur] == 1 {
            // found: slice the path from the first occurrence of cur
            let pos = path.iter().position(|&v| v == cur).unwrap();
            return Some(path[pos..].to_vec());
        }
        for v in path {
            state[v] = 2;
        }
    }
    None
}

/// Total score of a head assignment under the (dependent, head) matrix.
pub fn tree_score(arc: &[f64], k: usize, heads_1b: &[usize]) -> f64 {
    (0..k).map(|i| arc[i * k + heads_1b[i] - 1]).sum()
}

/// Oracle error type for MST decoding tests: enumerate every head vector.
#[doc(hidden)]
pub fn best_tree_bruteforce(arc: &[f64], k: usize) -> (Vec<usize>, f64) {
    assert!(k <= 5, "brute force enumeration is factorial");
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut heads = vec![1usize; k];
    enumerate(arc, k, 0, &mut heads, &mut best);
    best.expect("at least one valid tree exists")
}

fn enumerate(
    arc: &[f64],
    k: usize,
    pos: usize,
    heads: &mut Vec<usize>,
    best: &mut Option<(Vec<usize>, f64)>,
) {
    if pos == k {
        let (valid, _) = check_tree(heads);
        if valid {
            let s = tree_score(arc, k, heads);
            if best.as_ref().map(|(_, b)| s > *b).unwrap_or(true) {
                *best = Some((heads.clone(), s));
            }
        }
        return;
    }
    for h in 1..=k {
        heads[pos] = h;
        enumerate(arc, k, pos + 1, heads, best);
    }
}

pub fn validate_decoded(tree: &DecodedTree) -> Result<()> {
    if !tree.valid {
        return Err(Error::validation(format!(
            "decoded tree invalid: {}",
            tree.issues.join("; ")
        )));
    }
    Ok(())
}
