//! Gaussian naive Bayes over amplitude vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::Instance;

pub const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    /// Ascending.
    pub classes: Vec<u32>,
    pub log_prior: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
}

impl GaussianNb {
    /// Per-class maximum-likelihood mean and variance, variance floored.
    pub fn fit(features: &[Vec<f64>], labels: &[u32]) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::domain(format!(
                "{} feature rows vs {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features.first().map_or(0, Vec::len);
        if dim == 0 || features.iter().any(|f| f.len() != dim) {
            return Err(Error::domain("feature rows must share one non-zero length"));
        }
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();

        let mut model = GaussianNb {
            classes: classes.clone(),
            log_prior: Vec::new(),
            mean: Vec::new(),
            var: Vec::new(),
        };
        for c in classes {
            let rows: Vec<&Vec<f64>> = features.iter().zip(labels).filter(|(_, &l)| l == c).map(|(f, _)| f).collect();
            if rows.len() < 2 {
                return Err(Error::domain(format!("class {c} has {} instance(s), need 2", rows.len())));
            }
            let n = rows.len() as f64;
            let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
            let var = (0..dim)
                .map(|j| {
                    let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                    v.max(VARIANCE_FLOOR)
                })
                .collect();
            model.log_prior.push((n / labels.len() as f64).ln());
            model.mean.push(mean);
            model.var.push(var);
        }
        Ok(model)
    }

    /// Log prior plus log likelihood per class, in `classes` order.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        (0..self.classes.len())
            .map(|k| {
                self.log_prior[k]
                    + x.iter()
                        .zip(&self.mean[k])
                        .zip(&self.var[k])
                        .map(|((x, m), v)| -0.5 * (ln_2pi + v.ln() + (x - m).powi(2) / v))
                        .sum::<f64>()
            })
            .collect()
    }

    /// Highest log joint; ties go to the lowest class.
    pub fn predict(&self, x: &[f64]) -> u32 {
        let scores = self.log_joint(x);
        let mut best = 0;
        for (k, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = k;
            }
        }
        self.classes[best]
    }
}

fn features(inst: &Instance) -> Vec<f64> {
    inst.amplitude.iter().map(|&a| a as f64).collect()
}

/// Fit on class-labelled instances.
pub fn gaussian_nb_fit(instances: &[Instance]) -> Result<GaussianNb> {
    let labels = instances
        .iter()
        .map(|i| i.label.class().ok_or_else(|| Error::domain("naive Bayes needs class labels")))
        .collect::<Result<Vec<_>>>()?;
    GaussianNb::fit(&instances.iter().map(features).collect::<Vec<_>>(), &labels)
}

pub fn gaussian_nb_predict(model: &GaussianNb, instance: &Instance) -> u32 {
    model.predict(&features(instance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Label;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn separated_classes_follow_nearest_mean() {
        let f = vec![vec![-1.0], vec![1.0], vec![99.0], vec![101.0]];
        let m = GaussianNb::fit(&f, &[0, 0, 1, 1]).unwrap();
        assert_eq!(m.predict(&[10.0]), 0);
        assert_eq!(m.predict(&[80.0]), 1);
        assert_eq!(m.var[0], vec![1.0]);
    }

    #[test]
    fn equal_densities_follow_prior() {
        let f = vec![vec![0.0], vec![2.0], vec![0.0], vec![2.0], vec![0.0], vec![2.0]];
        let m = GaussianNb::fit(&f, &[3, 3, 5, 5, 5, 5]).unwrap();
        assert_eq!(m.predict(&[1.0]), 5);
        let tied = GaussianNb::fit(&f[..4], &[3, 3, 5, 5]).unwrap();
        assert_eq!(tied.predict(&[1.0]), 3);
    }

    #[test]
    fn variance_floor_and_errors() {
        let f = vec![vec![1.0], vec![1.0], vec![2.0], vec![3.0]];
        let m = GaussianNb::fit(&f, &[0, 0, 1, 1]).unwrap();
        assert_eq!(m.var[0], vec![VARIANCE_FLOOR]);
        assert!(GaussianNb::fit(&f[..3], &[0, 0, 1]).is_err());
        let unlabelled = vec![Instance::new(vec![1.0; 30], Label::None).unwrap()];
        assert!(gaussian_nb_fit(&unlabelled).is_err());
    }

    /// Density written out directly from the normal pdf.
    fn brute_predict(train: &[(Vec<f64>, u32)], x: &[f64]) -> u32 {
        let mut best = (f64::NEG_INFINITY, 0);
        for c in 0..3u32 {
            let rows: Vec<&Vec<f64>> = train.iter().filter(|r| r.1 == c).map(|r| &r.0).collect();
            let n = rows.len() as f64;
            let mut logp = (n / train.len() as f64).ln();
            for j in 0..x.len() {
                let mu = rows.iter().map(|r| r[j]).sum::<f64>() / n;
                let var = (rows.iter().map(|r| (r[j] - mu) * (r[j] - mu)).sum::<f64>() / n).max(1e-9);
                let pdf = (-(x[j] - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
                logp += pdf.ln();
            }
            if logp > best.0 {
                best = (logp, c);
            }
        }
        best.1
    }

    #[test]
    fn agrees_with_density_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut sample = |c: u32| -> Vec<f64> {
            (0..30)
                .map(|j| Normal::new(c as f64 * 0.4 + (j % 3) as f64, 1.0 + 0.1 * c as f64).unwrap().sample(&mut rng))
                .collect()
        };
        let train: Vec<(Vec<f64>, u32)> = (0..90).map(|i| (sample(i % 3), i % 3)).collect();
        let test: Vec<Vec<f64>> = (0..60).map(|i| sample(i % 3)).collect();
        let f: Vec<Vec<f64>> = train.iter().map(|r| r.0.clone()).collect();
        let l: Vec<u32> = train.iter().map(|r| r.1).collect();
        let m = GaussianNb::fit(&f, &l).unwrap();
        for x in &test {
            assert_eq!(m.predict(x), brute_predict(&train, x));
        }
    }

    proptest::proptest! {
        #[test]
        fn shifting_every_class_score_keeps_prediction(c in -1e3f64..1e3, x in -5.0f64..5.0) {
            let f = vec![vec![-1.0], vec![0.5], vec![1.0], vec![2.5], vec![0.0], vec![0.2]];
            let m = GaussianNb::fit(&f, &[0, 0, 1, 1, 2, 2]).unwrap();
            let mut shifted = m.clone();
            shifted.log_prior.iter_mut().for_each(|p| *p += c);
            proptest::prop_assert_eq!(m.predict(&[x]), shifted.predict(&[x]));
        }
    }
}
