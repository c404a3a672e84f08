//! Syntax injection: feeding predicted trees back into word embeddings.
//!
//! Three strategies share the multitask losses; `gcn` runs graph
//! convolutions over the soft head adjacency, `attention` reuses the
//! biaffine projections as value vectors. Span refinement optionally pools
//! span members into the span-level embedding.

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::NodeEmbeddings;
use crate::error::{Error, Result};
use crate::syntax::{SyntaxConfig, SyntaxScores};
use crate::tensor::nn::xavier;
use crate::tensor::ops;
use crate::tensor::optim::{ParamStore, Parameter};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionMode {
    None,
    Multitask,
    Gcn,
    Attention,
}

impl InjectionMode {
    /// Whether POS and tree losses join the objective (Eq. 8).
    pub fn uses_syntax_loss(self) -> bool {
        self != InjectionMode::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    pub mode: InjectionMode,
    /// GCN depth, >= 1.
    pub gcn_layers: usize,
    pub span_refine: bool,
    /// Replace the soft head distribution with decoded one-hot arcs.
    pub hard_adjacency: bool,
    /// Edge-type embedding width, d/4 by default.
    pub edge_type_dim: usize,
}

impl InjectionConfig {
    pub fn for_hidden(mode: InjectionMode, d: usize) -> InjectionConfig {
        InjectionConfig {
            mode,
            gcn_layers: 2,
            span_refine: false,
            hard_adjacency: false,
            edge_type_dim: (d / 4).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gcn_layers == 0 {
            return Err(Error::Config("gcn_layers must be >= 1".into()));
        }
        Ok(())
    }
}

struct GcnLayer {
    w1: Parameter,
    w2: Parameter,
    w3: Parameter,
    w4: Parameter,
}

pub struct InjectionModule {
    pub cfg: InjectionConfig,
    gcn_layers: Vec<GcnLayer>,
    /// |labels| x d_e edge-type embeddings.
    t_e: Option<Parameter>,
    gcn_out: Option<Parameter>,
    attn_out: Option<Parameter>,
    span_query: Option<Parameter>,
    span_proj: Option<Parameter>,
    new_params: usize,
}

impl InjectionModule {
    pub fn new(
        cfg: InjectionConfig,
        d: usize,
        n_labels: usize,
        syntax_cfg: &SyntaxConfig,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<InjectionModule> {
        cfg.validate()?;
        let mut new_params = 0;
        let mut track = |p: Parameter| {
            new_params += p.len();
            p
        };
        let mut gcn_layers = Vec::new();
        let mut t_e = None;
        let mut gcn_out = None;
        let mut attn_out = None;
        if cfg.mode == InjectionMode::Gcn {
            let de = cfg.edge_type_dim;
            for i in 0..cfg.gcn_layers {
                gcn_layers.push(GcnLayer {
                    w1: track(store.register(
                        &format!("inject.gcn{}.w1", i),
                        vec![d, d],
                        xavier(rng, d, d, d * d),
                    )),
                    w2: track(store.register(
                        &format!("inject.gcn{}.w2", i),
                        vec![d, d],
                        xavier(rng, d, d, d * d),
                    )),
                    w3: track(store.register(
                        &format!("inject.gcn{}.w3", i),
                        vec![de, d],
                        xavier(rng, de, d, de * d),
                    )),
                    w4: track(store.register(
                        &format!("inject.gcn{}.w4", i),
                        vec![3 * d, d],
                        xavier(rng, 3 * d, d, 3 * d * d),
                    )),
                });
            }
            t_e = Some(track(store.register(
                "inject.t_e",
                vec![n_labels, de],
                xavier(rng, n_labels, de, n_labels * de),
            )));
            gcn_out = Some(track(store.register(
                "inject.gcn_out",
                vec![2 * d, d],
                xavier(rng, 2 * d, d, 2 * d * d),
            )));
        }
        if cfg.mode == InjectionMode::Attention {
            let vw = 2 * syntax_cfg.arc_dim + 2 * syntax_cfg.label_dim;
            attn_out = Some(track(store.register(
                "inject.attn_out",
                vec![d + vw, d],
                xavier(rng, d + vw, d, (d + vw) * d),
            )));
        }
        let mut span_query = None;
        let mut span_proj = None;
        if cfg.span_refine {
            span_query = Some(track(store.register(
                "inject.span_query",
                vec![d],
                xavier(rng, d, 1, d),
            )));
            span_proj = Some(track(store.register(
                "inject.span_proj",
                vec![d, d],
                xavier(rng, d, d, d * d),
            )));
        }
        Ok(InjectionModule {
            cfg,
            gcn_layers,
            t_e,
            gcn_out,
            attn_out,
            span_query,
            span_proj,
            new_params,
        })
    }

    /// Number of parameters this module added beyond the base model.
    pub fn new_param_count(&self) -> usize {
        self.new_params
    }

    /// Dispatch on mode. `none` and `multitask` leave H untouched.
    pub fn refine(&self, h: &Tensor, scores: &SyntaxScores) -> Result<Tensor> {
        match self.cfg.mode {
            InjectionMode::None | InjectionMode::Multitask => Ok(h.clone()),
            InjectionMode::Gcn => self.gcn_refine(h, scores),
            InjectionMode::Attention => self.attention_refine(h, scores),
        }
    }

    /// Head adjacency: softmax rows of the arc logits with the self-arc
    /// (root) mass removed and rows renormalized. Zero-mass rows stay zero.
    pub fn adjacency(&self, scores: &SyntaxScores) -> Result<Tensor> {
        let k = scores.arc_logits.rows();
        let soft = if self.cfg.hard_adjacency {
            hard_heads(&scores.arc_logits)
        } else {
            ops::softmax_rows(&scores.arc_logits)?
        };
        let mask: Vec<f64> = (0..k * k)
            .map(|p| if p / k == p % k { 0.0 } else { 1.0 })
            .collect();
        ops::row_normalize(&ops::mul_mask(&soft, &mask)?)
    }

    /// Per-token edge-type distribution at the argmax head, K x |labels|.
    fn label_dist(&self, scores: &SyntaxScores) -> Result<Tensor> {
        let k = scores.arc_logits.rows();
        let arc = scores.arc_logits.data();
        let rows: Vec<usize> = (0..k)
            .map(|i| {
                let row = &arc[i * k..(i + 1) * k];
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                i * k + best
            })
            .collect();
        ops::softmax_rows(&ops::select_rows(&scores.label_logits, &rows)?)
    }

    /// Eq. 9: l rounds of V = [A_h H W1, A_h^T H W2, A_t T_e W3],
    /// H = R(W4 R(V)), then H_o = W_o [H^0, H^l].
    pub fn gcn_refine(&self, h0: &Tensor, scores: &SyntaxScores) -> Result<Tensor> {
        if self.gcn_layers.is_empty() {
            return Err(Error::Config("gcn_refine called without gcn mode".into()));
        }
        let a_h = self.adjacency(scores)?;
        let a_ht = ops::transpose(&a_h)?;
        let a_t = self.label_dist(scores)?;
        let typed = ops::matmul(&a_t, &self.t_e.as_ref().unwrap().tensor())?;
        let mut h = h0.clone();
        for layer in &self.gcn_layers {
            let v = ops::concat_cols(&[
                ops::matmul(&ops::matmul(&a_h, &h)?, &layer.w1.tensor())?,
                ops::matmul(&ops::matmul(&a_ht, &h)?, &layer.w2.tensor())?,
                ops::matmul(&typed, &layer.w3.tensor())?,
            ])?;
            h = ops::relu(&ops::matmul(&ops::relu(&v), &layer.w4.tensor())?);
        }
        let cat = ops::concat_cols(&[h0.clone(), h])?;
        ops::matmul(&cat, &self.gcn_out.as_ref().unwrap().tensor())
    }

    /// Eq. 10: V = R([w_l^w H, w_r^w H, w_l^t H, w_r^t H]) from the scorer's
    /// own projections, H_o = W_o [H, A_h V].
    pub fn attention_refine(&self, h: &Tensor, scores: &SyntaxScores) -> Result<Tensor> {
        let out = self
            .attn_out
            .as_ref()
            .ok_or_else(|| Error::Config("attention_refine called without attention mode".into()))?;
        let v = ops::relu(&ops::concat_cols(&[
            scores.proj_arc_l.clone(),
            scores.proj_arc_r.clone(),
            scores.proj_lab_l.clone(),
            scores.proj_lab_r.clone(),
        ])?);
        let a_h = self.adjacency(scores)?;
        let cat = ops::concat_cols(&[h.clone(), ops::matmul(&a_h, &v)?])?;
        ops::matmul(&cat, &out.tensor())
    }

    /// Self-attention pooling over span members, residual into g^s.
    /// Spans are 1-based member sets aligned with `nodes.slots`.
    pub fn span_refine(
        &self,
        nodes: &NodeEmbeddings,
        spans: &[BTreeSet<usize>],
        h: &Tensor,
    ) -> Result<Tensor> {
        let (query, proj) = match (&self.span_query, &self.span_proj) {
            (Some(q), Some(p)) => (q, p),
            _ => return Err(Error::Config("span_refine called while disabled".into())),
        };
        if spans.len() != nodes.slots.len() {
            return Err(Error::Shape {
                op: "span_refine",
                msg: format!("{} spans for {} slots", spans.len(), nodes.slots.len()),
            });
        }
        let d = h.cols();
        let mut rows = vec![ops::row(&nodes.g_s, 0)?];
        for (i, span) in spans.iter().enumerate() {
            let members: Vec<usize> = span.iter().map(|&t| t - 1).collect();
            if members.is_empty() {
                return Err(Error::validation(format!("slot {} has an empty span", i)));
            }
            let x = ops::select_rows(h, &members)?;
            let scores = ops::matvec(&x, &query.tensor())?;
            let alpha = ops::softmax_rows(&ops::reshape(&scores, vec![1, members.len()])?)?;
            let pooled = ops::matmul(&alpha, &ops::matmul(&x, &proj.tensor())?)?;
            let base = ops::row(&nodes.g_s, i + 1)?;
            rows.push(ops::add(&base, &ops::reshape(&pooled, vec![d])?)?);
        }
        ops::stack_rows(&rows)
    }
}

/// One-hot greedy head choice per row (not differentiable).
fn hard_heads(arc_logits: &Tensor) -> Tensor {
    let k = arc_logits.rows();
    let arc = arc_logits.data();
    let mut data = vec![0.0; k * k];
    for i in 0..k {
        let row = &arc[i * k..(i + 1) * k];
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        data[i * k + best] = 1.0;
    }
    Tensor::matrix(k, k, data)
}
