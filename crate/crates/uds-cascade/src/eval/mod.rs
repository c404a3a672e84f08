//! Evaluation: S-score graph matching, syntactic accuracies, and
//! attribute correlation / thresholded F1.

pub mod attributes;
pub mod sscore;
pub mod syntax_metrics;

pub use attributes::{attribute_metrics, AttributeReport};
pub use sscore::{s_score, s_score_bruteforce, CorpusCounts, MatchResult};
pub use syntax_metrics::SyntaxCounts;

use crate::error::Result;
use crate::graph::jsonl::UdsRecord;
use crate::model::ParserModel;
use crate::syntax::DecodeMode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevMetrics {
    pub s_p: f64,
    pub s_r: f64,
    pub s_f1: f64,
    pub uas: f64,
    pub las: f64,
    pub pos_acc: f64,
    pub attr_rho: f64,
    pub attr_f1: f64,
}

impl DevMetrics {
    pub fn empty() -> DevMetrics {
        DevMetrics {
            s_p: f64::NAN,
            s_r: f64::NAN,
            s_f1: f64::NAN,
            uas: f64::NAN,
            las: f64::NAN,
            pos_acc: f64::NAN,
            attr_rho: f64::NAN,
            attr_f1: f64::NAN,
        }
    }
}

/// Full-corpus evaluation of a model against gold records. S-score and
/// the syntactic accuracies are micro-averaged; attributes are scored in
/// oracle mode over gold structure, with thresholds swept on the same
/// records.
pub fn dev_metrics(
    model: &ParserModel,
    dev: &[UdsRecord],
    decode: DecodeMode,
    restarts: usize,
    seed: u64,
) -> Result<DevMetrics> {
    if dev.is_empty() {
        return Ok(DevMetrics::empty());
    }
    let mut sem = CorpusCounts::default();
    let mut syn = SyntaxCounts::default();
    let mut attr_sets = Vec::new();
    for (i, rec) in dev.iter().enumerate() {
        let forms: Vec<String> = rec.sent.tokens.iter().map(|t| t.form.clone()).collect();
        let out = model.parse_sentence(&forms, decode)?;
        sem.add(&s_score(
            (&rec.sent, &out.graph),
            (&rec.sent, &rec.graph),
            restarts,
            seed.wrapping_add(i as u64),
        ));
        syn.add(&rec.sent, &out.heads, &out.deprels, &out.pos)?;
        attr_sets.push((model.oracle_attributes(rec)?, rec.attrs.clone()));
    }
    let (s_p, s_r, s_f1) = sem.prf();
    let report = attribute_metrics(&attr_sets, &attr_sets);
    Ok(DevMetrics {
        s_p,
        s_r,
        s_f1,
        uas: syn.uas(),
        las: syn.las(),
        pos_acc: syn.pos_acc(),
        attr_rho: report.rho_macro,
        attr_f1: report.f1_macro,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::small_config;
    use crate::model::ParserModel;
    use crate::graph::figure_sentence;
    use crate::graph::jsonl::UdsRecord;
    use crate::graph::AttributeSet;

    fn figure_record() -> UdsRecord {
        let (sent, graph) = figure_sentence();
        UdsRecord::new(sent, graph, AttributeSet::default())
    }

    #[test]
    fn dev_metrics_on_untrained_model_are_finite() {
        let rec = figure_record();
        let cfg = small_config(std::slice::from_ref(&rec), 8, 11);
        let model = ParserModel::new(cfg).unwrap();
        let m = dev_metrics(&model, &[rec], DecodeMode::Mst, 2, 0).unwrap();
        assert!(m.s_f1.is_finite());
        assert!(m.uas.is_finite());
        assert!(m.las <= m.uas);
        assert!(m.pos_acc.is_finite());
    }

    #[test]
    fn empty_dev_set_gives_nan_metrics() {
        let rec = figure_record();
        let cfg = small_config(std::slice::from_ref(&rec), 8, 11);
        let model = ParserModel::new(cfg).unwrap();
        let m = dev_metrics(&model, &[], DecodeMode::Greedy, 1, 0).unwrap();
        assert!(m.s_f1.is_nan());
        assert!(m.uas.is_nan());
    }
}
