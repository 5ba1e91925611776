use serde::Serialize;

use crate::error::{Error, Result};

/// Provenance printed with every report.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ReportMeta {
    pub config_hash: String,
    pub seed: u64,
    pub snr: String,
}

/// Token-level classification metrics. Rates with a zero denominator are 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub classes: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub meta: ReportMeta,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl EvalReport {
    pub fn from_predictions(truth: &[u16], predicted: &[u16], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::shape("metrics", format!("{} labels, {} predictions", truth.len(), predicted.len())));
        }
        if classes == 0 {
            return Err(Error::Precondition("metrics need at least one class".into()));
        }
        let mut confusion = vec![vec![0u64; classes]; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            let (t, p) = (usize::from(t), usize::from(p));
            if t >= classes || p >= classes {
                return Err(Error::Precondition(format!(
                    "class-count mismatch: label {} outside the model's {classes} classes",
                    t.max(p)
                )));
            }
            confusion[t][p] += 1;
        }
        Ok(EvalReport::from_confusion(confusion))
    }

    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Self {
        let classes = confusion.len();
        let mut precision = Vec::with_capacity(classes);
        let mut recall = Vec::with_capacity(classes);
        let mut f1 = Vec::with_capacity(classes);
        let mut correct = 0;
        let mut total = 0;
        for c in 0..classes {
            let tp = confusion[c][c];
            let support: u64 = confusion[c].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
            let p = ratio(tp, predicted);
            let r = ratio(tp, support);
            precision.push(p);
            recall.push(r);
            f1.push(harmonic(p, r));
            correct += tp;
            total += support;
        }
        EvalReport {
            classes,
            macro_precision: mean(&precision),
            macro_recall: mean(&recall),
            macro_f1: mean(&f1),
            accuracy: ratio(correct, total),
            confusion,
            precision,
            recall,
            f1,
            meta: ReportMeta::default(),
        }
    }

    pub fn support(&self, class: usize) -> u64 {
        self.confusion[class].iter().sum()
    }

    /// `true\pred,0,1,…` then one row per true class.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for c in 0..self.classes {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for (c, row) in self.confusion.iter().enumerate() {
            out.push_str(&c.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Header comment lines with the provenance, then
    /// `class,precision,recall,f1,support` rows and a `macro` row.
    pub fn metrics_csv(&self) -> String {
        let mut out = format!(
            "# config_hash={} seed={} snr={} accuracy={}\nclass,precision,recall,f1,support\n",
            self.meta.config_hash, self.meta.seed, self.meta.snr, self.accuracy
        );
        for c in 0..self.classes {
            out.push_str(&format!("{c},{},{},{},{}\n", self.precision[c], self.recall[c], self.f1[c], self.support(c)));
        }
        let total: u64 = (0..self.classes).map(|c| self.support(c)).sum();
        out.push_str(&format!("macro,{},{},{},{total}\n", self.macro_precision, self.macro_recall, self.macro_f1));
        out
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0u16, 1, 2, 2, 1, 0, 0];
        let r = EvalReport::from_predictions(&y, &y, 3).unwrap();
        assert_eq!((r.macro_precision, r.macro_recall, r.macro_f1, r.accuracy), (1.0, 1.0, 1.0, 1.0));
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!(i == j || v == 0);
            }
        }
    }

    #[test]
    fn direct_formulas() {
        // class 1: TP 9, FP 1, FN 3
        let r = EvalReport::from_confusion(vec![vec![5, 1], vec![3, 9]]);
        assert!((r.precision[1] - 0.9).abs() < 1e-15);
        assert!((r.recall[1] - 0.75).abs() < 1e-15);
        assert!((r.f1[1] - 0.818_181_818_181_818_2).abs() < 1e-12);
    }

    #[test]
    fn absent_class_scores_zero() {
        let r = EvalReport::from_predictions(&[0, 0], &[0, 0], 2).unwrap();
        assert_eq!(r.precision[1], 0.0);
        assert_eq!(r.f1[1], 0.0);
        assert_eq!(r.macro_f1, 0.5);
    }

    #[test]
    fn out_of_range_label_is_a_class_mismatch() {
        let err = EvalReport::from_predictions(&[0, 3], &[0, 1], 2).unwrap_err();
        assert!(err.to_string().contains("class-count mismatch"));
    }

    #[test]
    fn csv_layout() {
        let r = EvalReport::from_confusion(vec![vec![2, 0], vec![1, 1]]);
        assert_eq!(r.confusion_csv(), "true\\pred,0,1\n0,2,0\n1,1,1\n");
        let m = r.metrics_csv();
        assert_eq!(m.lines().count(), 5);
        assert!(m.lines().nth(1).unwrap() == "class,precision,recall,f1,support");
    }

    proptest! {
        #[test]
        fn identities(pairs in prop::collection::vec((0u16..4, 0u16..4), 1..300)) {
            let (t, p): (Vec<u16>, Vec<u16>) = pairs.into_iter().unzip();
            let r = EvalReport::from_predictions(&t, &p, 4).unwrap();
            let trace: u64 = (0..4).map(|c| r.confusion[c][c]).sum();
            prop_assert!((r.accuracy - trace as f64 / t.len() as f64).abs() < 1e-15);
            prop_assert!((r.macro_f1 - r.f1.iter().sum::<f64>() / 4.0).abs() < 1e-15);
            for c in 0..4 {
                prop_assert_eq!(r.support(c), t.iter().filter(|&&v| v as usize == c).count() as u64);
                prop_assert!((r.f1[c] - harmonic(r.precision[c], r.recall[c])).abs() < 1e-15);
                for v in [r.precision[c], r.recall[c], r.f1[c]] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
