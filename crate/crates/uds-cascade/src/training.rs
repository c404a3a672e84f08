//! Composite losses and the training loop.
//!
//! The attribute value loss is the harmonic composite of masked MSE and
//! sign-agreement BCE; the total objective is the weighted sum of the five
//! cascade terms, extended with POS and tree losses whenever a syntax mode
//! is active.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval;
use crate::graph::jsonl::UdsRecord;
use crate::model::{ParserModel, StageLosses};
use crate::syntax::DecodeMode;
use crate::tensor::checkpoint::Snapshot;
use crate::tensor::ops;
use crate::tensor::Tensor;

/// Eq. 7/8 weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub a6: f64,
    pub a7: f64,
}

impl Default for LossWeights {
    fn default() -> LossWeights {
        LossWeights {
            a1: 1.0,
            a2: 2.0,
            a3: 1.0,
            a4: 1.0,
            a5: 1.0,
            a6: 1.0,
            a7: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.a1, self.a2, self.a3, self.a4, self.a5, self.a6, self.a7];
        if all.iter().any(|a| *a < 0.0 || !a.is_finite()) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }

    /// Attribute terms removed (pseudo-label pretraining).
    pub fn without_attributes(mut self) -> LossWeights {
        self.a4 = 0.0;
        self.a5 = 0.0;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// Defaults to lr / 4 when unset.
    pub finetune_lr: Option<f64>,
    pub epochs: usize,
    pub seed: u64,
    pub weights: LossWeights,
    /// Decode mode for per-epoch validation parsing.
    pub decode: DecodeMode,
    /// Hill-climbing restarts for validation S-score.
    pub restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            batch_size: 16,
            lr: 2e-4,
            finetune_lr: None,
            epochs: 10,
            seed: 0,
            weights: LossWeights::default(),
            decode: DecodeMode::Greedy,
            restarts: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.batch_size == 0 {
            return Err(Error::Config("lr must be positive, batch_size >= 1".into()));
        }
        if let Some(f) = self.finetune_lr {
            if f <= 0.0 {
                return Err(Error::Config("finetune_lr must be positive".into()));
            }
        }
        self.weights.validate()
    }

    pub fn effective_finetune_lr(&self) -> f64 {
        self.finetune_lr.unwrap_or(self.lr / 4.0)
    }
}

/// Eq. 6: 2 * MSE * BCE / (MSE + BCE) over mask = 1 entries.
///
/// The BCE reads sign agreement: target 1 iff gold > 0, applied to the raw
/// predicted value through a sigmoid. All-zero masks contribute 0, not NaN.
pub fn attribute_value_loss(pred: &Tensor, gold: &[f64], mask: &[f64]) -> Result<Tensor> {
    if pred.len() != gold.len() || gold.len() != mask.len() {
        return Err(Error::Shape {
            op: "attribute_value_loss",
            msg: format!("{} preds, {} golds, {} masks", pred.len(), gold.len(), mask.len()),
        });
    }
    for &m in mask {
        if m != 0.0 && m != 1.0 {
            return Err(Error::validation(format!("mask value {} not in {{0,1}}", m)));
        }
    }
    let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i] == 1.0).collect();
    if idx.is_empty() {
        return Ok(Tensor::scalar(0.0));
    }
    let p = ops::gather(pred, &idx)?;
    let gv: Vec<f64> = idx.iter().map(|&i| gold[i]).collect();
    let mse = ops::mse(&p, &gv)?;
    let targets: Vec<f64> = gv.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    let bce = ops::bce_with_logits(&p, &targets)?;
    composite(&mse, &bce)
}

/// The harmonic composite itself, exposed for direct law checks.
pub fn composite(mse: &Tensor, bce: &Tensor) -> Result<Tensor> {
    let sum = ops::add(mse, bce)?;
    if sum.value() == 0.0 {
        return Ok(Tensor::scalar(0.0));
    }
    ops::div(&ops::scale(&ops::mul(mse, bce)?, 2.0), &sum)
}

pub const TERM_NAMES: [&str; 7] = ["cls", "span", "edge", "attr_mask", "attr_value", "pos", "tree"];

/// Weighted Eq. 7 sum, plus Eq. 8 syntax terms when requested. Returns the
/// differentiable total and the raw per-term values for logging.
pub fn total_loss(
    losses: &StageLosses,
    w: &LossWeights,
    syntax_on: bool,
) -> Result<(Tensor, BTreeMap<&'static str, f64>)> {
    let pairs: [(&'static str, &Tensor, f64); 7] = [
        ("cls", &losses.cls, w.a1),
        ("span", &losses.span, w.a2),
        ("edge", &losses.edge, w.a3),
        ("attr_mask", &losses.attr_mask, w.a4),
        ("attr_value", &losses.attr_value, w.a5),
        ("pos", &losses.pos, w.a6),
        ("tree", &losses.tree, w.a7),
    ];
    let mut terms = BTreeMap::new();
    let mut total = Tensor::scalar(0.0);
    for (name, t, a) in pairs {
        let v = t.value();
        if v.is_nan() {
            return Err(Error::validation(format!("NaN in loss term {}", name)));
        }
        terms.insert(name, v);
        let syntax_term = name == "pos" || name == "tree";
        if syntax_term && !syntax_on {
            continue;
        }
        total = ops::add(&total, &ops::scale(t, a))?;
    }
    Ok((total, terms))
}

/// Per-epoch log entry; metric fields are NaN when not computed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub terms: BTreeMap<String, f64>,
    pub s_f1: f64,
    pub uas: f64,
    pub las: f64,
    pub pos_acc: f64,
    pub attr_rho: f64,
    pub attr_f1: f64,
}

pub struct TrainOutcome {
    pub best_snapshot: Snapshot,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    /// Mean total loss of the very first epoch (distribution-shift probe).
    pub first_epoch_loss: f64,
}

impl TrainOutcome {
    pub fn csv(&self) -> String {
        let mut out = String::from(
            "epoch,train_loss,cls,span,edge,attr_mask,attr_value,pos,tree,s_f1,uas,las,pos_acc,attr_rho,attr_f1\n",
        );
        for e in &self.log {
            out.push_str(&format!(
                "{},{:.6},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
                e.epoch,
                e.train_loss,
                TERM_NAMES
                    .iter()
                    .map(|n| format!("{:.6}", e.terms.get(*n).copied().unwrap_or(f64::NAN)))
                    .collect::<Vec<_>>()
                    .join(","),
                e.s_f1,
                e.uas,
                e.las,
                e.pos_acc,
                e.attr_rho,
                e.attr_f1,
            ));
        }
        out
    }
}

/// Joint training: shuffled mini-batches, Adam, per-epoch validation, and
/// best-checkpoint retention (by dev S-F1, train loss when dev is empty).
pub fn train(
    model: &mut ParserModel,
    train_set: &[UdsRecord],
    dev_set: &[UdsRecord],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(model, train_set, dev_set, cfg, cfg.lr, &cfg.weights)
}

fn train_with(
    model: &mut ParserModel,
    train_set: &[UdsRecord],
    dev_set: &[UdsRecord],
    cfg: &TrainConfig,
    lr: f64,
    weights: &LossWeights,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::validation("training dataset is empty"));
    }
    let syntax_on = model.cfg.injection.mode.uses_syntax_loss();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Snapshot)> = None;
    let mut first_epoch_loss = f64::NAN;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut term_sums: BTreeMap<String, f64> = BTreeMap::new();
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            model.store.zero_grads();
            let mut batch_total = Tensor::scalar(0.0);
            for &i in batch {
                let losses = model.forward_teacher(&train_set[i], true, &mut rng)?;
                let (total, terms) = total_loss(&losses, weights, syntax_on)?;
                for (name, v) in terms {
                    *term_sums.entry(name.to_string()).or_insert(0.0) += v;
                }
                batch_total = ops::add(&batch_total, &total)?;
                seen += 1;
            }
            let batch_mean = ops::scale(&batch_total, 1.0 / batch.len() as f64);
            if batch_mean.value().is_nan() {
                return Err(Error::validation("NaN in batch loss"));
            }
            epoch_loss += batch_mean.value() * batch.len() as f64;
            batch_mean.backward()?;
            model.store.adam_step(lr);
        }
        let train_loss = epoch_loss / seen as f64;
        if epoch == 1 {
            first_epoch_loss = train_loss;
        }
        let terms: BTreeMap<String, f64> = term_sums
            .into_iter()
            .map(|(k, v)| (k, v / seen as f64))
            .collect();
        let m = if dev_set.is_empty() {
            eval::DevMetrics::empty()
        } else {
            eval::dev_metrics(model, dev_set, cfg.decode, cfg.restarts, cfg.seed)?
        };
        let score = if dev_set.is_empty() { -train_loss } else { m.s_f1 };
        if best.as_ref().map(|(b, _, _)| score > *b).unwrap_or(true) {
            best = Some((score, epoch, model.store.export()));
        }
        log::info!(
            "epoch {}: loss {:.4} s_f1 {:.2} uas {:.2} pos {:.2}",
            epoch,
            train_loss,
            m.s_f1,
            m.uas,
            m.pos_acc
        );
        log.push(EpochLog {
            epoch,
            train_loss,
            terms,
            s_f1: m.s_f1,
            uas: m.uas,
            las: m.las,
            pos_acc: m.pos_acc,
            attr_rho: m.attr_rho,
            attr_f1: m.attr_f1,
        });
    }
    let (_, best_epoch, best_snapshot) = best.unwrap();
    Ok(TrainOutcome {
        best_snapshot,
        best_epoch,
        log,
        first_epoch_loss,
    })
}

pub struct PretrainOutcome {
    pub pretrain: TrainOutcome,
    pub finetune: TrainOutcome,
    pub pretrain_lr: f64,
    pub finetune_lr: f64,
}

/// §4.3 schedule: pretrain on pseudo labels without attribute terms, then
/// finetune on gold data at a strictly smaller learning rate.
pub fn pretrain_finetune(
    model: &mut ParserModel,
    pseudo: &[UdsRecord],
    gold_train: &[UdsRecord],
    gold_dev: &[UdsRecord],
    pretrain_cfg: &TrainConfig,
    finetune_cfg: &TrainConfig,
) -> Result<PretrainOutcome> {
    let ft_lr = finetune_cfg.effective_finetune_lr();
    if ft_lr >= pretrain_cfg.lr {
        return Err(Error::Config(format!(
            "finetune lr {} must be below pretrain lr {}",
            ft_lr, pretrain_cfg.lr
        )));
    }
    let pre_weights = pretrain_cfg.weights.without_attributes();
    let pretrain = train_with(model, pseudo, &[], pretrain_cfg, pretrain_cfg.lr, &pre_weights)?;
    model.store.import(&pretrain.best_snapshot)?;
    let finetune = train_with(
        model,
        gold_train,
        gold_dev,
        finetune_cfg,
        ft_lr,
        &finetune_cfg.weights,
    )?;
    Ok(PretrainOutcome {
        pretrain,
        finetune,
        pretrain_lr: pretrain_cfg.lr,
        finetune_lr: ft_lr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn composite_of_equals_is_the_value() {
        let l = composite(&Tensor::scalar(0.7), &Tensor::scalar(0.7)).unwrap();
        assert!((l.value() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn composite_one_and_three_is_one_point_five() {
        let l = composite(&Tensor::scalar(1.0), &Tensor::scalar(3.0)).unwrap();
        assert!((l.value() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn composite_bounded_by_min_and_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(0.0..5.0);
            let b: f64 = rng.gen_range(0.0..5.0);
            let c = composite(&Tensor::scalar(a), &Tensor::scalar(b))
                .unwrap()
                .value();
            assert!(c >= a.min(b) - 1e-12 && c <= a.max(b) + 1e-12, "{} {} {}", a, b, c);
        }
    }

    #[test]
    fn all_zero_mask_is_zero_not_nan() {
        let pred = Tensor::vector(vec![1.0, -2.0]);
        let l = attribute_value_loss(&pred, &[0.5, -0.5], &[0.0, 0.0]).unwrap();
        assert_eq!(l.value(), 0.0);
    }

    #[test]
    fn mask_values_validated() {
        let pred = Tensor::vector(vec![1.0]);
        assert!(attribute_value_loss(&pred, &[0.5], &[0.5]).is_err());
    }

    #[test]
    fn value_loss_gradient_matches_finite_differences() {
        use crate::tensor::gradcheck::grad_check;
        let gold = [0.8, -1.2, 0.0, 2.5];
        let mask = [1.0, 1.0, 0.0, 1.0];
        let err = grad_check(
            |inputs| attribute_value_loss(&inputs[0], &gold, &mask).unwrap(),
            &[(vec![4], vec![0.3, -0.4, 9.0, 1.1])],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "relative error {}", err);
    }

    #[test]
    fn zero_weights_zero_total() {
        let z = || Tensor::scalar(1.3);
        let losses = StageLosses {
            cls: z(),
            span: z(),
            edge: z(),
            attr_mask: z(),
            attr_value: z(),
            pos: z(),
            tree: z(),
        };
        let w = LossWeights {
            a1: 0.0,
            a2: 0.0,
            a3: 0.0,
            a4: 0.0,
            a5: 0.0,
            a6: 0.0,
            a7: 0.0,
        };
        let (total, _) = total_loss(&losses, &w, true).unwrap();
        assert_eq!(total.value(), 0.0);
    }

    #[test]
    fn span_term_double_counts_by_default() {
        let one = || Tensor::scalar(1.0);
        let zero = || Tensor::scalar(0.0);
        let losses = StageLosses {
            cls: one(),
            span: one(),
            edge: zero(),
            attr_mask: zero(),
            attr_value: zero(),
            pos: zero(),
            tree: zero(),
        };
        let (total, terms) = total_loss(&losses, &LossWeights::default(), false).unwrap();
        assert!((total.value() - 3.0).abs() < 1e-12);
        assert_eq!(terms["cls"], 1.0);
        assert_eq!(terms["span"], 1.0);
    }

    #[test]
    fn weighted_sum_matches_independent_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let vals: Vec<f64> = (0..7).map(|_| rng.gen_range(0.0..2.0)).collect();
            let losses = StageLosses {
                cls: Tensor::scalar(vals[0]),
                span: Tensor::scalar(vals[1]),
                edge: Tensor::scalar(vals[2]),
                attr_mask: Tensor::scalar(vals[3]),
                attr_value: Tensor::scalar(vals[4]),
                pos: Tensor::scalar(vals[5]),
                tree: Tensor::scalar(vals[6]),
            };
            let w = LossWeights::default();
            let (total, _) = total_loss(&losses, &w, true).unwrap();
            let expect = vals[0] + 2.0 * vals[1] + vals[2] + vals[3] + vals[4] + vals[5] + vals[6];
            assert!((total.value() - expect).abs() < 1e-12);
            let (no_syn, _) = total_loss(&losses, &w, false).unwrap();
            let expect2 = expect - vals[5] - vals[6];
            assert!((no_syn.value() - expect2).abs() < 1e-12);
        }
    }

    #[test]
    fn nan_term_aborts_with_name() {
        let losses = StageLosses {
            cls: Tensor::scalar(0.0),
            span: Tensor::scalar(f64::NAN),
            edge: Tensor::scalar(0.0),
            attr_mask: Tensor::scalar(0.0),
            attr_value: Tensor::scalar(0.0),
            pos: Tensor::scalar(0.0),
            tree: Tensor::scalar(0.0),
        };
        let err = total_loss(&losses, &LossWeights::default(), true).unwrap_err();
        assert!(err.to_string().contains("span"));
    }
}
