//! Per-subject biometric estimation error.
//!
//! An instance's absolute error is the mean over biometrics of
//! `|estimate - truth|`. `e_k` averages that over subject `k`'s instances;
//! mAE averages `e_k` over subjects. mSD averages, over subjects, the
//! population standard deviation of the instance errors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectError {
    pub subject: u32,
    pub n: usize,
    /// `e_k`.
    pub mean_abs_error: f64,
    pub std_abs_error: f64,
    /// Mean absolute error of each biometric alone.
    pub per_biometric: Vec<f64>,
    pub mean_estimate: Vec<f64>,
    pub mean_truth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub mae: f64,
    pub msd: f64,
    /// Per-biometric mAE, each the mean over subjects.
    pub per_biometric_mae: Vec<f64>,
    /// Sorted by subject id.
    pub subjects: Vec<SubjectError>,
}

/// Errors over every subject that occurs in `subject_ids`.
pub fn mean_average_error(truth: &[Vec<f64>], predictions: &[Vec<f64>], subject_ids: &[u32]) -> Result<RegressionReport> {
    let mut listed: Vec<u32> = subject_ids.to_vec();
    listed.sort_unstable();
    listed.dedup();
    mean_average_error_over(truth, predictions, subject_ids, &listed)
}

/// Like [`mean_average_error`] but over an explicit subject list; a listed
/// subject without instances is an error, and instances of unlisted
/// subjects are ignored.
pub fn mean_average_error_over(
    truth: &[Vec<f64>],
    predictions: &[Vec<f64>],
    subject_ids: &[u32],
    subjects: &[u32],
) -> Result<RegressionReport> {
    if truth.len() != predictions.len() || truth.len() != subject_ids.len() {
        return Err(Error::domain(format!(
            "misaligned inputs: {} truths, {} predictions, {} subject ids",
            truth.len(),
            predictions.len(),
            subject_ids.len()
        )));
    }
    if subjects.is_empty() {
        return Err(Error::domain("no subjects to evaluate"));
    }
    let dim = truth.first().map_or(0, Vec::len);
    if dim == 0 || truth.iter().chain(predictions).any(|v| v.len() != dim) {
        return Err(Error::domain("biometric vectors must share one non-zero length"));
    }

    let mut groups: BTreeMap<u32, Vec<usize>> = subjects.iter().map(|&s| (s, Vec::new())).collect();
    for (i, id) in subject_ids.iter().enumerate() {
        if let Some(g) = groups.get_mut(id) {
            g.push(i);
        }
    }

    let mut rows = Vec::with_capacity(groups.len());
    for (subject, idx) in groups {
        if idx.is_empty() {
            return Err(Error::domain(format!("subject {subject} has no instances")));
        }
        let n = idx.len() as f64;
        let errors: Vec<f64> = idx
            .iter()
            .map(|&i| {
                truth[i].iter().zip(&predictions[i]).map(|(t, p)| (p - t).abs()).sum::<f64>() / dim as f64
            })
            .collect();
        let e = errors.iter().sum::<f64>() / n;
        let var = errors.iter().map(|x| (x - e) * (x - e)).sum::<f64>() / n;
        // Offset by the first value so a constant column averages exactly.
        let column_mean = |src: &[Vec<f64>]| -> Vec<f64> {
            (0..dim)
                .map(|j| {
                    let base = src[idx[0]][j];
                    base + idx.iter().map(|&i| src[i][j] - base).sum::<f64>() / n
                })
                .collect()
        };
        rows.push(SubjectError {
            subject,
            n: idx.len(),
            mean_abs_error: e,
            std_abs_error: var.sqrt(),
            per_biometric: (0..dim)
                .map(|j| idx.iter().map(|&i| (predictions[i][j] - truth[i][j]).abs()).sum::<f64>() / n)
                .collect(),
            mean_estimate: column_mean(predictions),
            mean_truth: column_mean(truth),
        });
    }

    let k = rows.len() as f64;
    Ok(RegressionReport {
        mae: rows.iter().map(|r| r.mean_abs_error).sum::<f64>() / k,
        msd: rows.iter().map(|r| r.std_abs_error).sum::<f64>() / k,
        per_biometric_mae: (0..dim)
            .map(|j| rows.iter().map(|r| r.per_biometric[j]).sum::<f64>() / k)
            .collect(),
        subjects: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn exact_predictions_give_zero() {
        let t = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let r = mean_average_error(&t, &t, &[1, 2]).unwrap();
        assert_eq!((r.mae, r.msd), (0.0, 0.0));
    }

    #[test]
    fn one_subject_errors_one_and_three() {
        let t = vec![vec![0.0], vec![0.0]];
        let p = vec![vec![1.0], vec![-3.0]];
        let r = mean_average_error(&t, &p, &[5, 5]).unwrap();
        assert_eq!(r.mae, 2.0);
        assert_eq!(r.msd, 1.0);
        assert_eq!(r.subjects[0].subject, 5);
    }

    #[test]
    fn errors() {
        let t = vec![vec![0.0]];
        assert!(mean_average_error(&t, &[], &[1]).is_err());
        assert!(mean_average_error_over(&t, &t, &[1], &[1, 2]).is_err());
        assert!(mean_average_error(&[vec![]], &[vec![]], &[1]).is_err());
    }

    /// Straight-line two-pass computation with no shared helpers.
    fn brute(truth: &[Vec<f64>], pred: &[Vec<f64>], ids: &[u32]) -> (f64, f64) {
        let mut subjects: Vec<u32> = ids.to_vec();
        subjects.sort();
        subjects.dedup();
        let (mut sum_e, mut sum_s) = (0.0, 0.0);
        for s in &subjects {
            let mut errs = Vec::new();
            for i in 0..ids.len() {
                if ids[i] == *s {
                    let mut acc = 0.0;
                    for j in 0..truth[i].len() {
                        acc += (truth[i][j] - pred[i][j]).abs();
                    }
                    errs.push(acc / truth[i].len() as f64);
                }
            }
            let mut m = 0.0;
            for e in &errs {
                m += e;
            }
            m /= errs.len() as f64;
            let mut v = 0.0;
            for e in &errs {
                v += (e - m).powi(2);
            }
            sum_e += m;
            sum_s += (v / errs.len() as f64).sqrt();
        }
        (sum_e / subjects.len() as f64, sum_s / subjects.len() as f64)
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_is_order_invariant(seed in any::<u64>(), n in 1usize..60) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(0.0..100.0)).collect()).collect();
            let p: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(0.0..100.0)).collect()).collect();
            let ids: Vec<u32> = (0..n).map(|_| rng.random_range(1..6)).collect();
            let r = mean_average_error(&t, &p, &ids).unwrap();
            let (mae, msd) = brute(&t, &p, &ids);
            prop_assert!((r.mae - mae).abs() <= 1e-12 * mae.max(1.0));
            prop_assert!((r.msd - msd).abs() <= 1e-12 * msd.max(1.0));

            let rev = |v: &[Vec<f64>]| v.iter().rev().cloned().collect::<Vec<_>>();
            let ids_rev: Vec<u32> = ids.iter().rev().copied().collect();
            let r2 = mean_average_error(&rev(&t), &rev(&p), &ids_rev).unwrap();
            prop_assert!((r2.mae - r.mae).abs() <= 1e-12 * r.mae.max(1.0));
            prop_assert!((r2.msd - r.msd).abs() <= 1e-12 * r.msd.max(1.0));
            prop_assert!(r.mae >= 0.0 && r.msd >= 0.0);
        }
    }
}
