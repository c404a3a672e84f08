//! Attribute metrics over gold structure: Pearson correlation per
//! attribute plus binary F1 at a threshold swept on a validation split.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::graph::AttributeSet;

/// One (predicted value, gold value) observation at a gold mask = 1 slot.
pub type Pair = (f64, f64);

#[derive(Debug, Clone, Serialize)]
pub struct AttrRow {
    pub name: String,
    pub n: usize,
    /// None when fewer than two observations or a zero-variance side.
    pub rho: Option<f64>,
    pub theta: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttributeReport {
    pub rows: Vec<AttrRow>,
    pub rho_macro: f64,
    pub f1_macro: f64,
    /// Attributes excluded from the ρ average, with the reason.
    pub skipped: Vec<String>,
}

pub fn pearson(pairs: &[Pair]) -> Option<f64> {
    let n = pairs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in pairs {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Binary F1 at threshold θ: predicted positive iff value > θ, gold
/// positive iff value > 0. No positives on either side counts as perfect.
pub fn binary_f1(pairs: &[Pair], theta: f64) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fne = 0usize;
    for &(x, y) in pairs {
        match (x > theta, y > 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fne;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Best threshold on the validation pairs: candidates are the midpoints
/// between consecutive sorted unique predicted values, plus sentinels
/// below and above the observed range. Ties keep the lowest θ.
pub fn sweep_threshold(val: &[Pair]) -> f64 {
    if val.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = val.iter().map(|p| p.0).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let mut candidates = vec![xs[0] - 1.0];
    for w in xs.windows(2) {
        candidates.push((w[0] + w[1]) / 2.0);
    }
    candidates.push(xs[xs.len() - 1] + 1.0);
    let mut best = (candidates[0], binary_f1(val, candidates[0]));
    for &t in &candidates[1..] {
        let f = binary_f1(val, t);
        if f > best.1 {
            best = (t, f);
        }
    }
    best.0
}

/// Per-attribute observations pooled from (predicted, gold) attribute
/// sets; only gold mask = 1 entries with a prediction are counted, and
/// node and edge attribute families are namespaced apart.
pub fn collect_pairs(sets: &[(AttributeSet, AttributeSet)]) -> BTreeMap<String, Vec<Pair>> {
    let mut out: BTreeMap<String, Vec<Pair>> = BTreeMap::new();
    let mut pool = |family: &str,
                    pred: &BTreeMap<String, BTreeMap<String, crate::graph::AttrValue>>,
                    gold: &BTreeMap<String, BTreeMap<String, crate::graph::AttrValue>>| {
        for (key, entries) in gold {
            for (name, gv) in entries {
                if gv.m != 1 {
                    continue;
                }
                if let Some(pv) = pred.get(key).and_then(|e| e.get(name)) {
                    out.entry(format!("{family}/{name}"))
                        .or_default()
                        .push((pv.v, gv.v));
                }
            }
        }
    };
    for (pred, gold) in sets {
        pool("node", &pred.node_attrs, &gold.node_attrs);
        pool("edge", &pred.edge_attrs, &gold.edge_attrs);
    }
    out
}

/// Full report: ρ on the test pairs, θ swept on the validation pairs and
/// applied to the test pairs. Macro averages skip undefined ρ entries.
pub fn attribute_metrics(
    test: &[(AttributeSet, AttributeSet)],
    validation: &[(AttributeSet, AttributeSet)],
) -> AttributeReport {
    let test_pairs = collect_pairs(test);
    let val_pairs = collect_pairs(validation);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (name, pairs) in &test_pairs {
        let rho = pearson(pairs);
        if rho.is_none() {
            let reason = if pairs.len() < 2 {
                "fewer than two observations"
            } else {
                "zero variance"
            };
            skipped.push(format!("{name}: {reason}"));
        }
        let theta = sweep_threshold(val_pairs.get(name).map(Vec::as_slice).unwrap_or(&[]));
        rows.push(AttrRow {
            name: name.clone(),
            n: pairs.len(),
            rho,
            theta,
            f1: binary_f1(pairs, theta),
        });
    }
    let rhos: Vec<f64> = rows.iter().filter_map(|r| r.rho).collect();
    let rho_macro = if rhos.is_empty() {
        f64::NAN
    } else {
        rhos.iter().sum::<f64>() / rhos.len() as f64
    };
    let f1_macro = if rows.is_empty() {
        f64::NAN
    } else {
        rows.iter().map(|r| r.f1).sum::<f64>() / rows.len() as f64
    };
    AttributeReport {
        rows,
        rho_macro,
        f1_macro,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_identity_is_one() {
        let pairs: Vec<Pair> = (0..10).map(|i| (i as f64, i as f64)).collect();
        assert!((pearson(&pairs).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_negation_is_minus_one() {
        let pairs: Vec<Pair> = (0..10).map(|i| (i as f64, -(i as f64))).collect();
        assert!((pearson(&pairs).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_undefined_cases() {
        assert!(pearson(&[(1.0, 2.0)]).is_none());
        assert!(pearson(&[(1.0, 2.0), (1.0, 3.0)]).is_none());
    }

    #[test]
    fn swept_f1_at_least_fixed_zero_threshold() {
        // a systematic offset defeats the fixed threshold but not the sweep
        let pairs: Vec<Pair> = vec![
            (1.2, 1.0),
            (1.5, 2.0),
            (0.8, 0.5),
            (0.4, -1.0),
            (0.2, -2.0),
            (0.6, -0.5),
        ];
        let theta = sweep_threshold(&pairs);
        assert!(binary_f1(&pairs, theta) >= binary_f1(&pairs, 0.0));
        assert_eq!(binary_f1(&pairs, theta), 1.0);
    }

    #[test]
    fn all_negative_perfect_scores_one() {
        let pairs: Vec<Pair> = vec![(-1.0, -2.0), (-0.5, -0.1)];
        assert_eq!(binary_f1(&pairs, 0.0), 1.0);
    }
}
