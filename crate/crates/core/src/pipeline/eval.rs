use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ProbeConfig;
use crate::data::Dataset;
use crate::encoder::{encode, EncoderModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Multinomial logistic regression on standardized features.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    mean: Array1<f64>,
    scale: Array1<f64>,
    weight: Array2<f64>,
    bias: Array1<f64>,
}

impl LinearProbe {
    /// Minibatch SGD on the mean cross-entropy from zero weights. Features
    /// are centred and scaled with statistics of `features`; constant
    /// columns are only centred.
    pub fn fit(
        features: &Array2<f64>,
        labels: &[usize],
        num_classes: usize,
        cfg: &ProbeConfig,
        seed: u64,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || n != labels.len() {
            return Err(Error::Size(format!("{n} feature rows for {} labels", labels.len())));
        }
        if labels.iter().any(|&l| l >= num_classes) {
            return Err(Error::Data("label outside the class range".into()));
        }
        let mean = features.mean_axis(Axis(0)).expect("non-empty");
        let scale = features
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 1e-12 { 1.0 / s } else { 1.0 });
        let x = (features - &mean) * &scale;
        let mut probe = Self {
            mean,
            scale,
            weight: Array2::zeros((d, num_classes)),
            bias: Array1::zeros(num_classes),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let xb = x.select(Axis(0), chunk);
                let mut g = probe.softmax(&xb);
                for (row, &i) in chunk.iter().enumerate() {
                    g[[row, labels[i]]] -= 1.0;
                }
                let step = cfg.lr / chunk.len() as f64;
                probe.weight.scaled_add(-step, &xb.t().dot(&g));
                probe.bias.scaled_add(-step, &g.sum_axis(Axis(0)));
            }
        }
        if probe.weight.iter().chain(probe.bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("linear probe diverged".into()));
        }
        Ok(probe)
    }

    fn softmax(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut logits = x.dot(&self.weight) + &self.bias;
        for mut row in logits.outer_iter_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row /= s;
        }
        logits
    }

    /// Highest-scoring class per row; ties go to the lower class index.
    pub fn predict(&self, features: &Array2<f64>) -> Vec<usize> {
        let x = (features - &self.mean) * &self.scale;
        let logits = x.dot(&self.weight) + &self.bias;
        logits
            .outer_iter()
            .map(|row| {
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

    pub fn accuracy(&self, features: &Array2<f64>, labels: &[usize]) -> f64 {
        let hits = self
            .predict(features)
            .iter()
            .zip(labels)
            .filter(|(p, t)| p == t)
            .count();
        hits as f64 / labels.len() as f64
    }
}

fn to_f64<F: Scalar>(a: &Array2<F>) -> Array2<f64> {
    a.mapv(|v| v.to_f64_lossy())
}

/// Top-1 accuracy on `eval` of a linear classifier fitted on the frozen
/// encoder output of `train`. The projection head is not used.
pub fn linear_evaluate<F: Scalar>(
    model: &EncoderModel<F>,
    train: &Dataset<F>,
    eval: &Dataset<F>,
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<f64> {
    let train_labels = train.require_labels("linear evaluation")?;
    let eval_labels = eval.require_labels("linear evaluation")?;
    if eval_labels.is_empty() {
        return Err(Error::Size("empty evaluation split".into()));
    }
    let classes = train.num_classes().max(eval.num_classes());
    let f_train = to_f64(&encode(model, train.features())?);
    let f_eval = to_f64(&encode(model, eval.features())?);
    let probe = LinearProbe::fit(&f_train, train_labels, classes, cfg, seed)?;
    Ok(probe.accuracy(&f_eval, eval_labels))
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let r = (start + end - 1) as f64 / 2.0 + 1.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side is constant or the lengths differ.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}
