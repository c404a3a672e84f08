//! The semantic cascade: word classification, node generation, span
//! assignment, semantic edge typing, and attribute prediction.
//!
//! Each stage scores all sentence elements in one batched call. Training
//! feeds gold decisions across stage boundaries (teacher forcing); decoding
//! flags structural defects instead of repairing them.

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeKind, SemEdge, SemNode, SemanticGraph, WordLabel, ROOT_ID};
use crate::tensor::nn::{affine, xavier};
use crate::tensor::ops;
use crate::tensor::ops::sigmoid_f;
use crate::tensor::optim::{ParamStore, Parameter};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub word_hidden: usize,
    pub type_dim: usize,
    pub span_dim: usize,
    pub edge_dim: usize,
    pub attr_proj_dim: usize,
    pub attr_channels: usize,
    pub attr_hidden: usize,
}

impl CascadeConfig {
    pub fn for_hidden(d: usize) -> CascadeConfig {
        CascadeConfig {
            word_hidden: (d / 2).max(1),
            type_dim: (d / 4).max(1),
            span_dim: (d / 2).max(1),
            edge_dim: (d / 2).max(1),
            attr_proj_dim: (d / 2).max(1),
            attr_channels: (d / 4).max(1),
            attr_hidden: (d / 2).max(1),
        }
    }
}

/// One semantic node slot: kind, 0-based center token, conventional id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemSlot {
    pub id: String,
    pub kind: NodeKind,
    pub center: usize,
}

/// Node embeddings of one sentence after node generation.
///
/// `g_s` holds the span-level embeddings with the root at row 0 and one row
/// per semantic slot after it; slot i lives at row i + 1. Span-level rows
/// equal the generated node embeddings until span refinement replaces them.
pub struct NodeEmbeddings {
    pub syn_tokens: Vec<usize>,
    pub slots: Vec<SemSlot>,
    /// `|syn| x d` rows of H, present when the sentence has Syn tokens.
    pub g_n: Option<Tensor>,
    /// `(M+1) x d`, root first.
    pub g_s: Tensor,
}

impl NodeEmbeddings {
    /// Semantic rows of `g_s` (root excluded), `M x d`.
    pub fn g_m(&self) -> Result<Tensor> {
        let idx: Vec<usize> = (1..=self.slots.len()).collect();
        ops::select_rows(&self.g_s, &idx)
    }

    /// Slot index for a (kind, 0-based center) pair.
    pub fn slot_of(&self, kind: NodeKind, center: usize) -> Option<usize> {
        self.slots
            .iter()
            .position(|s| s.kind == kind && s.center == center)
    }

    /// Row index of a graph node id within `g_s`: root is 0, slots follow.
    pub fn row_of(&self, node: &SemNode) -> Option<usize> {
        if node.kind == NodeKind::Root {
            return Some(0);
        }
        self.slot_of(node.kind, node.center? - 1).map(|i| i + 1)
    }
}

pub struct CascadeModule {
    pub cfg: CascadeConfig,
    /// Semantic edge labels; logit channel 0 is the no-edge class, channel
    /// c >= 1 maps to `edge_labels[c - 1]`.
    pub edge_labels: Vec<String>,
    pub n_node_attrs: usize,
    pub n_edge_attrs: usize,
    word_w1: Parameter,
    word_b1: Parameter,
    word_w2: Parameter,
    word_b2: Parameter,
    /// Row 0 = Predicate, row 1 = Argument.
    type_embed: Parameter,
    root_embed: Parameter,
    node_w: Parameter,
    node_b: Parameter,
    span_l: Parameter,
    span_r: Parameter,
    span_w: Parameter,
    edge_l: Parameter,
    edge_r: Parameter,
    edge_w: Parameter,
    nattr_w1: Parameter,
    nattr_b1: Parameter,
    nattr_w2: Parameter,
    nattr_b2: Parameter,
    vproj_l: Parameter,
    vproj_r: Parameter,
    eattr_bilin: Parameter,
    eattr_w1: Parameter,
    eattr_b1: Parameter,
    eattr_w2: Parameter,
    eattr_b2: Parameter,
}

impl CascadeModule {
    pub fn new(
        cfg: CascadeConfig,
        d: usize,
        edge_labels: Vec<String>,
        n_node_attrs: usize,
        n_edge_attrs: usize,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> CascadeModule {
        let wh = cfg.word_hidden;
        let dt = cfg.type_dim;
        let ds = cfg.span_dim;
        let de = cfg.edge_dim;
        let dv = cfg.attr_proj_dim;
        let cb = cfg.attr_channels;
        let ah = cfg.attr_hidden;
        let ne = edge_labels.len();
        let n_cls = WordLabel::COUNT;
        CascadeModule {
            word_w1: store.register("cascade.word_w1", vec![d, wh], xavier(rng, d, wh, d * wh)),
            word_b1: store.register("cascade.word_b1", vec![wh], vec![0.0; wh]),
            word_w2: store.register(
                "cascade.word_w2",
                vec![wh, n_cls],
                xavier(rng, wh, n_cls, wh * n_cls),
            ),
            word_b2: store.register("cascade.word_b2", vec![n_cls], vec![0.0; n_cls]),
            type_embed: store.register("cascade.type_embed", vec![2, dt], xavier(rng, 2, dt, 2 * dt)),
            root_embed: store.register("cascade.root_embed", vec![d], xavier(rng, d, d, d)),
            node_w: store.register(
                "cascade.node_w",
                vec![d + dt, d],
                xavier(rng, d + dt, d, (d + dt) * d),
            ),
            node_b: store.register("cascade.node_b", vec![d], vec![0.0; d]),
            span_l: store.register("cascade.span_l", vec![d, ds], xavier(rng, d, ds, d * ds)),
            span_r: store.register("cascade.span_r", vec![d, ds], xavier(rng, d, ds, d * ds)),
            span_w: store.register(
                "cascade.span_w",
                vec![1, ds + 1, ds + 1],
                xavier(rng, ds + 1, ds + 1, (ds + 1) * (ds + 1)),
            ),
            edge_l: store.register("cascade.edge_l", vec![d, de], xavier(rng, d, de, d * de)),
            edge_r: store.register("cascade.edge_r", vec![d, de], xavier(rng, d, de, d * de)),
            edge_w: store.register(
                "cascade.edge_w",
                vec![ne + 1, de + 1, de + 1],
                xavier(rng, de + 1, de + 1, (ne + 1) * (de + 1) * (de + 1)),
            ),
            nattr_w1: store.register("cascade.nattr_w1", vec![d, ah], xavier(rng, d, ah, d * ah)),
            nattr_b1: store.register("cascade.nattr_b1", vec![ah], vec![0.0; ah]),
            nattr_w2: store.register(
                "cascade.nattr_w2",
                vec![ah, 2 * n_node_attrs],
                xavier(rng, ah, 2 * n_node_attrs, ah * 2 * n_node_attrs),
            ),
            nattr_b2: store.register(
                "cascade.nattr_b2",
                vec![2 * n_node_attrs],
                vec![0.0; 2 * n_node_attrs],
            ),
            vproj_l: store.register("cascade.vproj_l", vec![d, dv], xavier(rng, d, dv, d * dv)),
            vproj_r: store.register("cascade.vproj_r", vec![d, dv], xavier(rng, d, dv, d * dv)),
            eattr_bilin: store.register(
                "cascade.eattr_bilin",
                vec![cb, dv, dv],
                xavier(rng, dv, dv, cb * dv * dv),
            ),
            eattr_w1: store.register(
                "cascade.eattr_w1",
                vec![cb + 2 * dv, ah],
                xavier(rng, cb + 2 * dv, ah, (cb + 2 * dv) * ah),
            ),
            eattr_b1: store.register("cascade.eattr_b1", vec![ah], vec![0.0; ah]),
            eattr_w2: store.register(
                "cascade.eattr_w2",
                vec![ah, 2 * n_edge_attrs],
                xavier(rng, ah, 2 * n_edge_attrs, ah * 2 * n_edge_attrs),
            ),
            eattr_b2: store.register(
                "cascade.eattr_b2",
                vec![2 * n_edge_attrs],
                vec![0.0; 2 * n_edge_attrs],
            ),
            cfg,
            edge_labels,
            n_node_attrs,
            n_edge_attrs,
        }
    }

    /// 5-way word-class logits, `K x 5`.
    pub fn classify_words(&self, h: &Tensor) -> Result<Tensor> {
        let hidden = ops::relu(&affine(h, &self.word_w1.tensor(), &self.word_b1.tensor())?);
        affine(&hidden, &self.word_w2.tensor(), &self.word_b2.tensor())
    }

    pub fn word_loss(&self, logits: &Tensor, labels: &[WordLabel]) -> Result<Tensor> {
        let targets: Vec<usize> = labels.iter().map(|l| l.index()).collect();
        ops::cross_entropy_rows(logits, &targets)
    }

    /// Build node embeddings from word labels: one node per Pre/Arg token,
    /// two per PreArg token, plus the shared trainable root.
    pub fn generate_nodes(&self, h: &Tensor, labels: &[WordLabel]) -> Result<NodeEmbeddings> {
        if labels.len() != h.rows() {
            return Err(Error::Shape {
                op: "generate_nodes",
                msg: format!("{} labels for {} rows", labels.len(), h.rows()),
            });
        }
        let mut syn_tokens = Vec::new();
        let mut slots = Vec::new();
        for (i, &lab) in labels.iter().enumerate() {
            match lab {
                WordLabel::Syn => syn_tokens.push(i),
                WordLabel::Pre => slots.push(slot(NodeKind::Predicate, i)),
                WordLabel::Arg => slots.push(slot(NodeKind::Argument, i)),
                WordLabel::PreArg => {
                    slots.push(slot(NodeKind::Predicate, i));
                    slots.push(slot(NodeKind::Argument, i));
                }
                WordLabel::Phi => {}
            }
        }
        let g_n = if syn_tokens.is_empty() {
            None
        } else {
            Some(ops::select_rows(h, &syn_tokens)?)
        };
        let d = h.cols();
        let root_row = ops::reshape(&self.root_embed.tensor(), vec![1, d])?;
        let g_s = if slots.is_empty() {
            root_row
        } else {
            let type_table = self.type_embed.tensor();
            let cat_rows: Vec<Tensor> = slots
                .iter()
                .map(|s| {
                    let t = if s.kind == NodeKind::Predicate { 0 } else { 1 };
                    ops::concat_vec(&[ops::row(h, s.center)?, ops::row(&type_table, t)?])
                })
                .collect::<Result<_>>()?;
            let cat = ops::stack_rows(&cat_rows)?;
            let g_m = affine(&cat, &self.node_w.tensor(), &self.node_b.tensor())?;
            ops::concat_rows(&[root_row, g_m])?
        };
        Ok(NodeEmbeddings {
            syn_tokens,
            slots,
            g_n,
            g_s,
        })
    }

    /// Ownership logits `N x M`: each syntactic node picks one semantic
    /// node. `None` when the sentence has no syntactic nodes; error when
    /// syntactic nodes exist with no semantic node to own them.
    pub fn assign_spans(&self, nodes: &NodeEmbeddings) -> Result<Option<Tensor>> {
        if nodes.syn_tokens.is_empty() {
            return Ok(None);
        }
        if nodes.slots.is_empty() {
            return Err(Error::validation(
                "syntactic nodes present but no semantic node to assign them to",
            ));
        }
        let g_n = nodes.g_n.as_ref().unwrap();
        let l = ops::relu(&ops::matmul(g_n, &self.span_l.tensor())?);
        let r = ops::relu(&ops::matmul(&nodes.g_m()?, &self.span_r.tensor())?);
        let s = ops::biaffine(&l, &r, &self.span_w.tensor())?;
        Ok(Some(ops::reshape(
            &s,
            vec![nodes.syn_tokens.len(), nodes.slots.len()],
        )?))
    }

    pub fn span_loss(&self, span_logits: &Tensor, owners: &[usize]) -> Result<Tensor> {
        ops::cross_entropy_rows(span_logits, owners)
    }

    /// Gold owner slot per syntactic token, from gold spans.
    pub fn gold_owners(&self, nodes: &NodeEmbeddings, gold: &SemanticGraph) -> Result<Vec<usize>> {
        let mut owners = Vec::with_capacity(nodes.syn_tokens.len());
        for &t in &nodes.syn_tokens {
            let owner = gold
                .semantic_nodes()
                .find(|n| n.span.as_ref().is_some_and(|s| s.contains(&(t + 1))))
                .and_then(|n| nodes.row_of(n))
                .map(|r| r - 1);
            match owner {
                Some(o) => owners.push(o),
                None => {
                    return Err(Error::validation(format!(
                        "token {} is in no gold span of a generated node",
                        t + 1
                    )))
                }
            }
        }
        Ok(owners)
    }

    /// Edge-label logits over all ordered node pairs including the root:
    /// `[(M+1)*(M+1), |labels|+1]`, channel 0 = no edge.
    pub fn score_semantic_edges(&self, nodes: &NodeEmbeddings) -> Result<Tensor> {
        let l = ops::relu(&ops::matmul(&nodes.g_s, &self.edge_l.tensor())?);
        let r = ops::relu(&ops::matmul(&nodes.g_s, &self.edge_r.tensor())?);
        ops::biaffine(&l, &r, &self.edge_w.tensor())
    }

    /// Off-diagonal pair rows and their gold label channels (0 when the
    /// gold graph has no edge for the pair).
    pub fn gold_edge_targets(
        &self,
        nodes: &NodeEmbeddings,
        gold: &SemanticGraph,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        let m1 = nodes.slots.len() + 1;
        let mut channel = vec![0usize; m1 * m1];
        for e in &gold.edges {
            let src = gold.node(&e.src).and_then(|n| nodes.row_of(n));
            let dst = gold.node(&e.dst).and_then(|n| nodes.row_of(n));
            let (src, dst) = match (src, dst) {
                (Some(s), Some(d)) => (s, d),
                _ => {
                    return Err(Error::validation(format!(
                        "gold edge {}->{} references a node outside the roster",
                        e.src, e.dst
                    )))
                }
            };
            let c = self
                .edge_labels
                .iter()
                .position(|l| *l == e.label)
                .ok_or_else(|| {
                    Error::validation(format!("edge label {:?} not in vocabulary", e.label))
                })?;
            channel[src * m1 + dst] = c + 1;
        }
        let mut rows = Vec::with_capacity(m1 * m1 - m1);
        let mut targets = Vec::with_capacity(m1 * m1 - m1);
        for i in 0..m1 {
            for j in 0..m1 {
                if i != j {
                    rows.push(i * m1 + j);
                    targets.push(channel[i * m1 + j]);
                }
            }
        }
        Ok((rows, targets))
    }

    pub fn edge_loss(
        &self,
        edge_logits: &Tensor,
        rows: &[usize],
        targets: &[usize],
    ) -> Result<Tensor> {
        let picked = ops::select_rows(edge_logits, rows)?;
        ops::cross_entropy_rows(&picked, targets)
    }

    /// Node attribute head: `M x 2A`, values in the first A columns, mask
    /// logits in the rest. `None` for a root-only roster.
    pub fn node_attr_outputs(&self, nodes: &NodeEmbeddings) -> Result<Option<Tensor>> {
        if nodes.slots.is_empty() || self.n_node_attrs == 0 {
            return Ok(None);
        }
        let hidden = ops::relu(&affine(
            &nodes.g_m()?,
            &self.nattr_w1.tensor(),
            &self.nattr_b1.tensor(),
        )?);
        Ok(Some(affine(
            &hidden,
            &self.nattr_w2.tensor(),
            &self.nattr_b2.tensor(),
        )?))
    }

    /// Edge attribute head over explicit `g_s` row pairs: `P x 2B`.
    ///
    /// Pairs come from gold edges (training, oracle evaluation) or decoded
    /// non-empty edges; this head never inspects edge logits.
    pub fn edge_attr_outputs(
        &self,
        nodes: &NodeEmbeddings,
        pairs: &[(usize, usize)],
    ) -> Result<Option<Tensor>> {
        if pairs.is_empty() || self.n_edge_attrs == 0 {
            return Ok(None);
        }
        let m1 = nodes.slots.len() + 1;
        for &(i, j) in pairs {
            if i >= m1 || j >= m1 || i == j {
                return Err(Error::validation(format!(
                    "edge attribute pair ({}, {}) out of range for {} nodes",
                    i, j, m1
                )));
            }
        }
        let vl = ops::relu(&ops::matmul(&nodes.g_s, &self.vproj_l.tensor())?);
        let vr = ops::relu(&ops::matmul(&nodes.g_s, &self.vproj_r.tensor())?);
        let bil = ops::bilinear(&vl, &vr, &self.eattr_bilin.tensor())?;
        let rows: Vec<usize> = pairs.iter().map(|&(i, j)| i * m1 + j).collect();
        let srcs: Vec<usize> = pairs.iter().map(|&(i, _)| i).collect();
        let dsts: Vec<usize> = pairs.iter().map(|&(_, j)| j).collect();
        let x = ops::concat_cols(&[
            ops::select_rows(&bil, &rows)?,
            ops::select_rows(&vl, &srcs)?,
            ops::select_rows(&vr, &dsts)?,
        ])?;
        let hidden = ops::relu(&affine(&x, &self.eattr_w1.tensor(), &self.eattr_b1.tensor())?);
        Ok(Some(affine(
            &hidden,
            &self.eattr_w2.tensor(),
            &self.eattr_b2.tensor(),
        )?))
    }

    /// Argmax word labels from classification logits.
    pub fn decode_labels(&self, logits: &Tensor) -> Vec<WordLabel> {
        argmax_rows(logits)
            .into_iter()
            .map(WordLabel::from_index)
            .collect()
    }

    /// Assemble the decoded graph: spans from ownership argmax, edges from
    /// non-zero argmax channels. Structural defects surface as flags.
    pub fn decode_graph(
        &self,
        nodes: &NodeEmbeddings,
        span_logits: Option<&Tensor>,
        edge_logits: &Tensor,
    ) -> (SemanticGraph, Vec<String>) {
        let mut flags = Vec::new();
        let mut spans: Vec<BTreeSet<usize>> = nodes
            .slots
            .iter()
            .map(|s| BTreeSet::from([s.center + 1]))
            .collect();
        if let Some(sl) = span_logits {
            for (row, owner) in argmax_rows(sl).into_iter().enumerate() {
                spans[owner].insert(nodes.syn_tokens[row] + 1);
            }
        }
        let mut graph = SemanticGraph {
            nodes: vec![SemNode::root()],
            edges: Vec::new(),
        };
        for (s, span) in nodes.slots.iter().zip(spans) {
            graph.nodes.push(SemNode {
                id: s.id.clone(),
                kind: s.kind,
                center: Some(s.center + 1),
                span: Some(span),
            });
        }
        let m1 = nodes.slots.len() + 1;
        let id_of = |row: usize| -> &str {
            if row == 0 {
                ROOT_ID
            } else {
                &nodes.slots[row - 1].id
            }
        };
        let channels = argmax_rows(edge_logits);
        for i in 0..m1 {
            for j in 0..m1 {
                if i == j {
                    continue;
                }
                let c = channels[i * m1 + j];
                if c > 0 {
                    graph.edges.push(SemEdge {
                        src: id_of(i).to_string(),
                        dst: id_of(j).to_string(),
                        label: self.edge_labels[c - 1].clone(),
                    });
                }
            }
        }
        if nodes.slots.is_empty() {
            flags.push("degenerate".to_string());
        }
        (graph, flags)
    }
}

fn slot(kind: NodeKind, center: usize) -> SemSlot {
    let prefix = if kind == NodeKind::Predicate { "p" } else { "a" };
    SemSlot {
        id: format!("{}{}", prefix, center + 1),
        kind,
        center,
    }
}

fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let m = t.cols();
    (0..t.rows())
        .map(|i| {
            let row = &t.data()[i * m..(i + 1) * m];
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Mask probability of a raw mask logit.
pub fn mask_prob(logit: f64) -> f64 {
    sigmoid_f(logit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{derive_word_labels, figure_sentence};
    use rand::SeedableRng;

    fn module(d: usize) -> (CascadeModule, ParamStore) {
        let mut store = ParamStore::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = CascadeModule::new(
            CascadeConfig::for_hidden(d),
            d,
            vec!["arg".into(), "root".into()],
            3,
            2,
            &mut store,
            &mut rng,
        );
        (m, store)
    }

    fn random_h(rows: usize, d: usize, seed: u64) -> Tensor {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(rows, d, (0..rows * d).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn uniform_logits_loss_is_ln_5() {
        let (m, _) = module(8);
        let logits = Tensor::matrix(3, 5, vec![0.0; 15]);
        let loss = m
            .word_loss(&logits, &[WordLabel::Phi, WordLabel::Pre, WordLabel::Arg])
            .unwrap();
        assert!((loss.value() - 5.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn classify_shape_is_k_by_5() {
        let (m, _) = module(8);
        let logits = m.classify_words(&random_h(4, 8, 1)).unwrap();
        assert_eq!(logits.shape(), &[4, 5]);
    }

    #[test]
    fn node_roster_counts() {
        let (m, _) = module(8);
        let h = random_h(3, 8, 2);
        let nodes = m
            .generate_nodes(&h, &[WordLabel::Pre, WordLabel::Syn, WordLabel::Arg])
            .unwrap();
        assert_eq!(nodes.slots.len(), 2);
        assert_eq!(nodes.syn_tokens, vec![1]);
        assert_eq!(nodes.g_s.rows(), 3);
    }

    #[test]
    fn prearg_token_yields_two_nodes_with_distinct_embeddings() {
        let (m, _) = module(8);
        let h = random_h(1, 8, 3);
        let nodes = m.generate_nodes(&h, &[WordLabel::PreArg]).unwrap();
        assert_eq!(nodes.slots.len(), 2);
        assert_eq!(nodes.slots[0].center, nodes.slots[1].center);
        assert_ne!(nodes.slots[0].kind, nodes.slots[1].kind);
        let d = nodes.g_s.cols();
        let pred = &nodes.g_s.data()[d..2 * d];
        let arg = &nodes.g_s.data()[2 * d..3 * d];
        assert_ne!(pred, arg);
    }

    #[test]
    fn all_phi_sentence_is_root_only() {
        let (m, _) = module(8);
        let h = random_h(2, 8, 4);
        let nodes = m
            .generate_nodes(&h, &[WordLabel::Phi, WordLabel::Phi])
            .unwrap();
        assert!(nodes.slots.is_empty());
        assert_eq!(nodes.g_s.rows(), 1);
        let edge_logits = m.score_semantic_edges(&nodes).unwrap();
        let (graph, flags) = m.decode_graph(&nodes, None, &edge_logits);
        assert_eq!(graph.nodes.len(), 1);
        assert!(graph.edges.is_empty());
        assert_eq!(flags, vec!["degenerate"]);
    }

    #[test]
    fn single_semantic_node_owns_everything() {
        let (m, _) = module(8);
        let h = random_h(3, 8, 5);
        let nodes = m
            .generate_nodes(&h, &[WordLabel::Pre, WordLabel::Syn, WordLabel::Syn])
            .unwrap();
        let logits = m.assign_spans(&nodes).unwrap().unwrap();
        assert_eq!(logits.shape(), &[2, 1]);
        let soft = ops::softmax_rows(&logits).unwrap();
        assert!(soft.data().iter().all(|&p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn syn_without_semantic_nodes_is_structural_error() {
        let (m, _) = module(8);
        let h = random_h(2, 8, 6);
        let nodes = m
            .generate_nodes(&h, &[WordLabel::Syn, WordLabel::Phi])
            .unwrap();
        assert!(m.assign_spans(&nodes).is_err());
    }

    #[test]
    fn figure_gold_owners() {
        let (sent, graph) = figure_sentence();
        let labels = derive_word_labels(&sent, &graph).unwrap();
        let (m, _) = module(8);
        let h = random_h(sent.len(), 8, 7);
        let nodes = m.generate_nodes(&h, &labels).unwrap();
        let owners = m.gold_owners(&nodes, &graph).unwrap();
        // syn tokens: "like" (2), "ca" (4), "n't" (5); owners p1, p6, p6
        assert_eq!(nodes.syn_tokens, vec![1, 3, 4]);
        let owner_ids: Vec<&str> = owners
            .iter()
            .map(|&o| nodes.slots[o].id.as_str())
            .collect();
        assert_eq!(owner_ids, vec!["p1", "p6", "p6"]);
    }

    #[test]
    fn edge_targets_skip_diagonal_and_hit_gold() {
        let (sent, graph) = figure_sentence();
        let labels = derive_word_labels(&sent, &graph).unwrap();
        let (m, _) = module(8);
        let h = random_h(sent.len(), 8, 8);
        let nodes = m.generate_nodes(&h, &labels).unwrap();
        let (rows, targets) = m.gold_edge_targets(&nodes, &graph).unwrap();
        let m1 = nodes.slots.len() + 1;
        assert_eq!(rows.len(), m1 * m1 - m1);
        for &r in &rows {
            assert_ne!(r / m1, r % m1);
        }
        let non_phi = targets.iter().filter(|&&t| t > 0).count();
        assert_eq!(non_phi, graph.edges.len());
    }

    #[test]
    fn teacher_forced_losses_finite_and_nonnegative() {
        let (sent, graph) = figure_sentence();
        let labels = derive_word_labels(&sent, &graph).unwrap();
        let (m, _) = module(8);
        let h = random_h(sent.len(), 8, 9);
        let nodes = m.generate_nodes(&h, &labels).unwrap();
        let cls = m.word_loss(&m.classify_words(&h).unwrap(), &labels).unwrap();
        let span_logits = m.assign_spans(&nodes).unwrap().unwrap();
        let span = m
            .span_loss(&span_logits, &m.gold_owners(&nodes, &graph).unwrap())
            .unwrap();
        let edge_logits = m.score_semantic_edges(&nodes).unwrap();
        let (rows, targets) = m.gold_edge_targets(&nodes, &graph).unwrap();
        let edge = m.edge_loss(&edge_logits, &rows, &targets).unwrap();
        for l in [&cls, &span, &edge] {
            assert!(l.value().is_finite());
            assert!(l.value() >= 0.0);
        }
    }

    #[test]
    fn zero_network_attributes_are_zero_with_half_mask() {
        let (m, store) = module(8);
        for p in store.iter() {
            if p.name().starts_with("cascade.nattr") || p.name().starts_with("cascade.eattr") {
                p.set_data(vec![0.0; p.tensor().len()]);
            }
        }
        let h = random_h(2, 8, 10);
        let nodes = m
            .generate_nodes(&h, &[WordLabel::Pre, WordLabel::Arg])
            .unwrap();
        let out = m.node_attr_outputs(&nodes).unwrap().unwrap();
        assert_eq!(out.shape(), &[2, 6]);
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!((mask_prob(out.data()[3]) - 0.5).abs() < 1e-12);
        let eo = m.edge_attr_outputs(&nodes, &[(1, 2)]).unwrap().unwrap();
        assert_eq!(eo.shape(), &[1, 4]);
        assert!(eo.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn edge_attr_pair_bounds_checked() {
        let (m, _) = module(8);
        let h = random_h(1, 8, 11);
        let nodes = m.generate_nodes(&h, &[WordLabel::Pre]).unwrap();
        assert!(m.edge_attr_outputs(&nodes, &[(0, 0)]).is_err());
        assert!(m.edge_attr_outputs(&nodes, &[(0, 5)]).is_err());
    }

    #[test]
    fn decode_round_trips_forced_logits() {
        let (sent, graph) = figure_sentence();
        let labels = derive_word_labels(&sent, &graph).unwrap();
        let (m, _) = module(8);
        let h = random_h(sent.len(), 8, 12);
        let nodes = m.generate_nodes(&h, &labels).unwrap();
        // force ownership and edges to the gold configuration
        let owners = m.gold_owners(&nodes, &graph).unwrap();
        let ms = nodes.slots.len();
        let mut span_data = vec![0.0; owners.len() * ms];
        for (r, &o) in owners.iter().enumerate() {
            span_data[r * ms + o] = 10.0;
        }
        let span_logits = Tensor::matrix(owners.len(), ms, span_data);
        let m1 = ms + 1;
        let (rows, targets) = m.gold_edge_targets(&nodes, &graph).unwrap();
        let ne = m.edge_labels.len() + 1;
        let mut edge_data = vec![0.0; m1 * m1 * ne];
        for (&r, &t) in rows.iter().zip(&targets) {
            edge_data[r * ne + t] = 10.0;
        }
        let edge_logits = Tensor::matrix(m1 * m1, ne, edge_data);
        let (decoded, flags) = m.decode_graph(&nodes, Some(&span_logits), &edge_logits);
        assert!(flags.is_empty());
        decoded.validate(&sent).unwrap();
        assert_eq!(decoded.nodes.len(), graph.nodes.len());
        assert_eq!(decoded.edges.len(), graph.edges.len());
        for e in &graph.edges {
            assert!(decoded
                .edges
                .iter()
                .any(|d| d.src == e.src && d.dst == e.dst && d.label == e.label));
        }
        for n in graph.semantic_nodes() {
            let dn = decoded.node(&n.id).unwrap();
            assert_eq!(dn.span, n.span);
        }
    }
}
