//! Self-verification entry points behind the `gradcheck` and `selfcheck`
//! subcommands: finite-difference gradient audits of every differentiable
//! stage, and fast invariant probes over random inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{extract_relations, RuleConfig};
use crate::error::Result;
use crate::eval::{s_score, s_score_bruteforce};
use crate::graph::jsonl::UdsRecord;
use crate::encoder::{EncoderConfig, EncoderKind};
use crate::graph::{AttributeSchema, AttributeSet};
use crate::injection::{InjectionConfig, InjectionMode};
use crate::model::{ModelConfig, ParserModel};
use crate::syntax::{decode_tree, DecodeMode};
use crate::synth;
use crate::tensor::gradcheck::grad_check;
use crate::tensor::{nn, ops, Tensor};
use crate::training;

type Input = (Vec<usize>, Vec<f64>);

fn rand_input(rng: &mut ChaCha8Rng, shape: &[usize]) -> Input {
    let n: usize = shape.iter().product();
    (
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

/// Max relative gradient error per pipeline stage, finite differences vs
/// reverse mode, at small random shapes.
pub fn gradcheck_report(seed: u64) -> Result<Vec<(String, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = Vec::new();
    let eps = 1e-5;
    let (k, d, c, l) = (3usize, 4usize, 2usize, 3usize);

    // encoder: one LSTM step feeding a softmax readout
    let inputs = vec![
        rand_input(&mut rng, &[d]),
        rand_input(&mut rng, &[d]),
        rand_input(&mut rng, &[d]),
        rand_input(&mut rng, &[4 * d, d]),
        rand_input(&mut rng, &[4 * d, d]),
        rand_input(&mut rng, &[4 * d]),
    ];
    report.push((
        "encoder".to_string(),
        grad_check(
            |t| {
                let (h, cs) = nn::lstm_step(&t[0], &t[1], &t[2], &t[3], &t[4], &t[5]).unwrap();
                ops::mean(&ops::add(&h, &cs).unwrap())
            },
            &inputs,
            eps,
        )?,
    ));

    // syntax (eq 1): biaffine arc scores into a head cross-entropy
    let inputs = vec![
        rand_input(&mut rng, &[k, d]),
        rand_input(&mut rng, &[k, d]),
        rand_input(&mut rng, &[1, d + 1, d + 1]),
    ];
    report.push((
        "syntax".to_string(),
        grad_check(
            |t| {
                let logits = ops::biaffine(&t[0], &t[1], &t[2]).unwrap();
                let logits = ops::reshape(&logits, vec![k, k]).unwrap();
                ops::cross_entropy_rows(&logits, &[0, 0, 1]).unwrap()
            },
            &inputs,
            eps,
        )?,
    ));

    // word classification (eq 2): affine + softmax cross-entropy
    let inputs = vec![
        rand_input(&mut rng, &[k, d]),
        rand_input(&mut rng, &[d, 5]),
        rand_input(&mut rng, &[5]),
    ];
    report.push((
        "classifier".to_string(),
        grad_check(
            |t| {
                let logits = nn::affine(&t[0], &t[1], &t[2]).unwrap();
                ops::cross_entropy_rows(&logits, &[2, 0, 3]).unwrap()
            },
            &inputs,
            eps,
        )?,
    ));

    // span ownership (eq 3): biaffine token-by-node scores
    let inputs = vec![
        rand_input(&mut rng, &[k, d]),
        rand_input(&mut rng, &[c, d]),
        rand_input(&mut rng, &[1, d + 1, d + 1]),
    ];
    report.push((
        "spans".to_string(),
        grad_check(
            |t| {
                let logits = ops::biaffine(&t[0], &t[1], &t[2]).unwrap();
                let logits = ops::reshape(&logits, vec![k, c]).unwrap();
                ops::cross_entropy_rows(&logits, &[0, 1, 1]).unwrap()
            },
            &inputs,
            eps,
        )?,
    ));

    // semantic edges (eq 4): multi-channel biaffine over ordered pairs
    let inputs = vec![
        rand_input(&mut rng, &[k, d]),
        rand_input(&mut rng, &[c + 1, d + 1, d + 1]),
    ];
    report.push((
        "edges".to_string(),
        grad_check(
            |t| {
                let logits = ops::biaffine(&t[0], &t[0], &t[1]).unwrap();
                let off_diag: Vec<usize> = (0..k * k).filter(|i| i / k != i % k).collect();
                let rows = ops::select_rows(&logits, &off_diag).unwrap();
                ops::cross_entropy_rows(&rows, &vec![0; off_diag.len()]).unwrap()
            },
            &inputs,
            eps,
        )?,
    ));

    // attributes (eq 5 + eq 6): bilinear pair head into the composite loss
    let inputs = vec![
        rand_input(&mut rng, &[k, d]),
        rand_input(&mut rng, &[c, d, d]),
        rand_input(&mut rng, &[c, c]),
        rand_input(&mut rng, &[c]),
    ];
    report.push((
        "attributes".to_string(),
        grad_check(
            |t| {
                let pair = ops::bilinear(&t[0], &t[0], &t[1]).unwrap();
                let vals = nn::affine(&pair, &t[2], &t[3]).unwrap();
                let flat = ops::reshape(&vals, vec![k * k * c]).unwrap();
                let n = k * k * c;
                let gold: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.7 } else { -0.4 }).collect();
                let mask: Vec<f64> = (0..n).map(|i| f64::from(i % 3 != 0)).collect();
                training::attribute_value_loss(&flat, &gold, &mask).unwrap()
            },
            &inputs,
            eps,
        )?,
    ));

    // gcn injection (eq 9): one propagation round over a soft adjacency
    let inputs = vec![
        rand_input(&mut rng, &[k, k]),
        rand_input(&mut rng, &[k, d]),
        rand_input(&mut rng, &[d, d]),
        rand_input(&mut rng, &[d, d]),
    ];
    report.push((
        "gcn".to_string(),
        grad_check(
            |t| {
                let a = ops::softmax_rows(&t[0]).unwrap();
                let fwd = ops::matmul(&a, &ops::matmul(&t[1], &t[2]).unwrap()).unwrap();
                let bwd = ops::matmul(
                    &ops::transpose(&a).unwrap(),
                    &ops::matmul(&t[1], &t[3]).unwrap(),
                )
                .unwrap();
                ops::mean(&ops::relu(&ops::add(&fwd, &bwd).unwrap()))
            },
            &inputs,
            eps,
        )?,
    ));

    // attention injection (eq 10): value mixing by the arc distribution
    let inputs = vec![
        rand_input(&mut rng, &[k, k]),
        rand_input(&mut rng, &[k, d]),
        rand_input(&mut rng, &[2 * d, l]),
    ];
    report.push((
        "attention".to_string(),
        grad_check(
            |t| {
                let a = ops::softmax_rows(&t[0]).unwrap();
                let mixed = ops::matmul(&a, &t[1]).unwrap();
                let h = ops::concat_cols(&[t[1].clone(), mixed]).unwrap();
                ops::mean(&ops::tanh(&ops::matmul(&h, &t[2]).unwrap()))
            },
            &inputs,
            eps,
        )?,
    ));

    Ok(report)
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Fast invariant probes; each returns a named pass/fail.
pub fn selfcheck_report(seed: u64) -> Result<Vec<(String, bool)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = Vec::new();

    // mst decode always yields a valid tree on random score matrices
    let mut ok = true;
    for _ in 0..200 {
        let k = rng.gen_range(1..=9);
        let scores: Vec<f64> = (0..k * k).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let tree = decode_tree(&scores, k, DecodeMode::Mst, |_, _| 0);
        ok &= tree.valid;
    }
    report.push(("mst_always_valid".to_string(), ok));

    // composite loss bounds on random pairs
    let mut ok = true;
    for _ in 0..1000 {
        let a: f64 = rng.gen_range(0.0..5.0);
        let b: f64 = rng.gen_range(0.0..5.0);
        let c = training::composite(&Tensor::scalar(a), &Tensor::scalar(b))?.value();
        ok &= c >= a.min(b) - 1e-12 && c <= a.max(b) + 1e-12;
    }
    report.push(("composite_loss_bounds".to_string(), ok));

    // extraction output always validates on generated corpora
    let schema = synth::default_schema();
    let corpus = synth::generate_corpus(100, seed, &schema);
    let rules = RuleConfig::default();
    let ok = corpus.iter().all(|rec| {
        let g = extract_relations(&rec.sent, &rules);
        g.validate(&rec.sent).is_ok()
    });
    report.push(("extraction_validity".to_string(), ok));

    // s_score identity and bruteforce agreement on small graphs
    let mut ok = true;
    for rec in corpus.iter().take(20) {
        let ident = s_score((&rec.sent, &rec.graph), (&rec.sent, &rec.graph), 5, seed);
        ok &= ident.f1 == 100.0;
        let bf = s_score_bruteforce((&rec.sent, &rec.graph), (&rec.sent, &rec.graph))?;
        ok &= bf.f1 == 100.0;
    }
    report.push(("s_score_identity".to_string(), ok));

    // untrained model parses every sentence without crashing, flagged or valid
    let records: Vec<UdsRecord> = corpus.iter().take(8).cloned().collect();
    let encoder = EncoderConfig {
        kind: EncoderKind::Bilstm,
        embed_dim: 8,
        hidden_dim: 8,
        dropout: 0.0,
        ..EncoderConfig::default()
    };
    let cfg = ModelConfig::from_corpus(
        &records,
        encoder,
        InjectionConfig::for_hidden(InjectionMode::None, 8),
        AttributeSchema::default(),
        seed,
    )?;
    let model = ParserModel::new(cfg)?;
    let mut ok = true;
    for rec in &records {
        let forms: Vec<String> = rec.sent.tokens.iter().map(|t| t.form.clone()).collect();
        let out = model.parse_sentence(&forms, DecodeMode::Mst)?;
        ok &= out.tree_valid;
    }
    report.push(("parse_totality".to_string(), ok));

    // save/load round trip is byte-identical
    let mut buf = Vec::new();
    model.save(&mut buf)?;
    let loaded = ParserModel::load(&mut buf.as_slice())?;
    let mut buf2 = Vec::new();
    loaded.save(&mut buf2)?;
    report.push(("checkpoint_round_trip".to_string(), buf == buf2));

    // pseudo-label records with empty attributes survive the filter
    let (pseudo, _) = crate::augment::pseudo_label(
        &records
            .iter()
            .map(|r| r.sent.tokens.iter().map(|t| t.form.clone()).collect())
            .collect::<Vec<_>>(),
        &model,
        &rules,
    );
    let (kept, _) = crate::augment::filter_invalid(pseudo, 60);
    let ok = kept
        .iter()
        .all(|r| r.graph.validate(&r.sent).is_ok() && r.attrs == AttributeSet::default());
    report.push(("pseudo_label_filter".to_string(), ok));

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    #[test]
    fn gradcheck_all_stages_within_tolerance() {
        let start = Instant::now();
        let report = gradcheck_report(7).unwrap();
        assert_eq!(report.len(), 8);
        for (name, err) in &report {
            assert!(
                *err <= GRADCHECK_TOLERANCE,
                "{} gradient error {}",
                name,
                err
            );
        }
        assert!(start.elapsed().as_secs() < 120);
    }

    #[test]
    fn selfcheck_passes() {
        for (name, ok) in selfcheck_report(11).unwrap() {
            assert!(ok, "selfcheck probe {} failed", name);
        }
    }
}
