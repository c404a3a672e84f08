//! Micro-averaged syntactic accuracies: UAS, LAS, POS.

use crate::error::{Error, Result};
use crate::graph::AnnotatedSentence;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SyntaxCounts {
    pub tokens: usize,
    pub head_correct: usize,
    pub labeled_correct: usize,
    pub pos_correct: usize,
}

impl SyntaxCounts {
    pub fn add(
        &mut self,
        gold: &AnnotatedSentence,
        heads: &[usize],
        deprels: &[String],
        pos: &[String],
    ) -> Result<()> {
        let k = gold.tokens.len();
        if heads.len() != k || deprels.len() != k || pos.len() != k {
            return Err(Error::validation(format!(
                "prediction length mismatch: {} tokens vs {}/{}/{} heads/deprels/pos",
                k,
                heads.len(),
                deprels.len(),
                pos.len()
            )));
        }
        for i in 0..k {
            self.tokens += 1;
            let head_ok = heads[i] == gold.heads[i];
            if head_ok {
                self.head_correct += 1;
                if deprels[i] == gold.deprels[i] {
                    self.labeled_correct += 1;
                }
            }
            if pos[i] == gold.tokens[i].pos {
                self.pos_correct += 1;
            }
        }
        Ok(())
    }

    fn pct(&self, n: usize) -> f64 {
        if self.tokens == 0 {
            f64::NAN
        } else {
            100.0 * n as f64 / self.tokens as f64
        }
    }

    pub fn uas(&self) -> f64 {
        self.pct(self.head_correct)
    }

    /// An arc counts for LAS only if both head and label are right, so
    /// LAS can never exceed UAS.
    pub fn las(&self) -> f64 {
        self.pct(self.labeled_correct)
    }

    pub fn pos_acc(&self) -> f64 {
        self.pct(self.pos_correct)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::figure_sentence;

    #[test]
    fn perfect_prediction_scores_100() {
        let (sent, _) = figure_sentence();
        let mut c = SyntaxCounts::default();
        let pos: Vec<String> = sent.tokens.iter().map(|t| t.pos.clone()).collect();
        c.add(&sent, &sent.heads, &sent.deprels, &pos).unwrap();
        assert_eq!(c.uas(), 100.0);
        assert_eq!(c.las(), 100.0);
        assert_eq!(c.pos_acc(), 100.0);
    }

    #[test]
    fn wrong_label_lowers_las_not_uas() {
        let (sent, _) = figure_sentence();
        let mut c = SyntaxCounts::default();
        let pos: Vec<String> = sent.tokens.iter().map(|t| t.pos.clone()).collect();
        let mut deprels = sent.deprels.clone();
        deprels[0] = "bogus".into();
        c.add(&sent, &sent.heads, &deprels, &pos).unwrap();
        assert_eq!(c.uas(), 100.0);
        assert!(c.las() < 100.0);
        assert!(c.las() <= c.uas());
    }

    #[test]
    fn length_mismatch_is_error() {
        let (sent, _) = figure_sentence();
        let mut c = SyntaxCounts::default();
        let pos: Vec<String> = sent.tokens.iter().map(|t| t.pos.clone()).collect();
        assert!(c.add(&sent, &sent.heads[1..], &sent.deprels, &pos).is_err());
    }
}
