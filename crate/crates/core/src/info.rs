//! Plug-in information measures over cluster/label pairs, and an exact
//! checker for the chain
//! `objective(f*) <= KL(mixture || P_X P_Y) <= min(I(Z;X), I(Z;Y)) <= H(Z)`
//! on small tabular models.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayBase, Axis, Data, Dimension};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{xlogx, Scalar};

const SUM_TOLERANCE: f64 = 1e-9;

fn check_distribution<F: Scalar, S: Data<Elem = F>, D: Dimension>(p: &ArrayBase<S, D>) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Distribution("empty distribution".into()));
    }
    if p.iter().any(|&v| !(v >= F::zero()) || !v.is_finite()) {
        return Err(Error::Distribution("negative or non-finite probability".into()));
    }
    let total = p.iter().fold(F::zero(), |a, &v| a + v).to_f64_lossy();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::Distribution(format!("probabilities sum to {total}")));
    }
    Ok(())
}

/// `table[a, b] = #{i : z_i = a, t_i = b} / N`.
pub fn empirical_joint<F: Scalar>(z: &[usize], t: &[usize]) -> Result<Array2<F>> {
    if z.len() != t.len() {
        return Err(Error::Size(format!("{} cluster ids vs {} labels", z.len(), t.len())));
    }
    if z.is_empty() {
        return Err(Error::Size("empty sample".into()));
    }
    let rows = z.iter().max().unwrap() + 1;
    let cols = t.iter().max().unwrap() + 1;
    let mut counts = Array2::<usize>::zeros((rows, cols));
    for (&a, &b) in z.iter().zip(t) {
        counts[[a, b]] += 1;
    }
    let n = F::of(z.len() as f64);
    Ok(counts.mapv(|c| F::of(c as f64) / n))
}

/// Shannon entropy in nats of a vector or table of any rank.
pub fn entropy<F: Scalar, S: Data<Elem = F>, D: Dimension>(p: &ArrayBase<S, D>) -> Result<F> {
    check_distribution(p)?;
    Ok(p.iter().fold(F::zero(), |a, &v| a - xlogx(v)))
}

/// `sum p(a,b) ln[p(a,b) / (p(a) p(b))]`.
pub fn mutual_information<F: Scalar>(joint: &Array2<F>) -> Result<F> {
    check_distribution(joint)?;
    let pa = joint.sum_axis(Axis(1));
    let pb = joint.sum_axis(Axis(0));
    let mut mi = F::zero();
    for ((a, b), &p) in joint.indexed_iter() {
        if p > F::zero() {
            mi += p * (p / (pa[a] * pb[b])).ln();
        }
    }
    Ok(mi)
}

/// Entropy of the variable on the other axis given the variable indexed by
/// `given`: `H(rows | cols)` for `Axis(1)`, `H(cols | rows)` for `Axis(0)`.
pub fn conditional_entropy<F: Scalar>(joint: &Array2<F>, given: Axis) -> Result<F> {
    let h_joint = entropy(joint)?;
    let other = Axis(1 - given.index());
    let marginal = joint.sum_axis(other);
    Ok(h_joint - entropy(&marginal)?)
}

/// One point of the information plane for a clustering `Z` against labels `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoPlanePoint {
    pub config_label: String,
    pub mi_zt: f64,
    pub h_z_given_t: f64,
    pub h_z: f64,
    pub downstream_accuracy: Option<f64>,
}

impl InfoPlanePoint {
    pub fn from_assignments(config_label: impl Into<String>, z: &[usize], t: &[usize]) -> Result<Self> {
        let joint = empirical_joint::<f64>(z, t)?;
        let h_z = entropy(&joint.sum_axis(Axis(1)))?;
        Ok(Self {
            config_label: config_label.into(),
            mi_zt: mutual_information(&joint)?,
            h_z_given_t: conditional_entropy(&joint, Axis(1))?,
            h_z,
            downstream_accuracy: None,
        })
    }

    pub fn with_accuracy(mut self, accuracy: f64) -> Self {
        self.downstream_accuracy = Some(accuracy);
        self
    }
}

/// `I(Z;T) - H(Z|T)`: higher is predicted to transfer better.
pub fn selection_score(p: &InfoPlanePoint) -> f64 {
    p.mi_zt - p.h_z_given_t
}

/// `config_label,mi_zt,h_z_given_t,h_z,accuracy`; accuracy empty when unknown.
pub fn info_plane_csv(points: &[InfoPlanePoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["config_label", "mi_zt", "h_z_given_t", "h_z", "accuracy"])
        .expect("in-memory write");
    for p in points {
        w.write_record([
            p.config_label.clone(),
            p.mi_zt.to_string(),
            p.h_z_given_t.to_string(),
            p.h_z.to_string(),
            p.downstream_accuracy.map(|a| a.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn save_info_plane_csv(points: &[InfoPlanePoint], path: &Path) -> Result<()> {
    fs::write(path, info_plane_csv(points)).map_err(|e| Error::io(path, e))
}

/// Finite model `P(Z)`, `P(X|Z)`, `P(Y|Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJointModel<F> {
    p_z: Array1<F>,
    p_x_given_z: Array2<F>,
    p_y_given_z: Array2<F>,
}

const ROW_TOLERANCE: f64 = 1e-12;

fn check_rows<F: Scalar>(name: &str, m: &Array2<F>) -> Result<()> {
    for (z, row) in m.outer_iter().enumerate() {
        if row.iter().any(|&v| !(v >= F::zero())) {
            return Err(Error::Distribution(format!("{name} row {z} has a negative entry")));
        }
        let s = row.sum().to_f64_lossy();
        if (s - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::Distribution(format!("{name} row {z} sums to {s}")));
        }
    }
    Ok(())
}

impl<F: Scalar> DiscreteJointModel<F> {
    pub fn new(p_z: Array1<F>, p_x_given_z: Array2<F>, p_y_given_z: Array2<F>) -> Result<Self> {
        let k = p_z.len();
        if k == 0 || p_x_given_z.nrows() != k || p_y_given_z.nrows() != k {
            return Err(Error::Shape(format!(
                "|Z| = {k} but conditionals have {} and {} rows",
                p_x_given_z.nrows(),
                p_y_given_z.nrows()
            )));
        }
        if p_x_given_z.ncols() == 0 || p_y_given_z.ncols() == 0 {
            return Err(Error::Shape("empty alphabet".into()));
        }
        check_rows("P(Z)", &p_z.clone().insert_axis(Axis(0)))?;
        check_rows("P(X|Z)", &p_x_given_z)?;
        check_rows("P(Y|Z)", &p_y_given_z)?;
        Ok(Self {
            p_z,
            p_x_given_z,
            p_y_given_z,
        })
    }

    /// Every distribution drawn from a flat Dirichlet.
    pub fn random(nz: usize, nx: usize, ny: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut simplex = |len: usize| -> Vec<F> {
            let raw: Vec<f64> = (0..len).map(|_| Exp1.sample(&mut rng)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| F::of(v / s)).collect()
        };
        let p_z = Array1::from(simplex(nz));
        let px = Array2::from_shape_vec((nz, nx), (0..nz).flat_map(|_| simplex(nx)).collect())
            .map_err(|e| Error::Shape(e.to_string()))?;
        let py = Array2::from_shape_vec((nz, ny), (0..nz).flat_map(|_| simplex(ny)).collect())
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(p_z, px, py)
    }

    pub fn p_z(&self) -> &Array1<F> {
        &self.p_z
    }

    pub fn p_x_given_z(&self) -> &Array2<F> {
        &self.p_x_given_z
    }

    pub fn p_y_given_z(&self) -> &Array2<F> {
        &self.p_y_given_z
    }

    /// `P(x, y) = sum_z P(z) P(x|z) P(y|z)`.
    pub fn mixture(&self) -> Array2<F> {
        let weighted = &self.p_x_given_z * &self.p_z.view().insert_axis(Axis(1));
        weighted.t().dot(&self.p_y_given_z)
    }

    pub fn h_z(&self) -> F {
        self.p_z.iter().fold(F::zero(), |a, &p| a - xlogx(p))
    }

    fn mi_with(&self, cond: &Array2<F>) -> F {
        let marginal = self.p_z.dot(cond);
        let mut mi = F::zero();
        for ((z, x), &p) in cond.indexed_iter() {
            let w = self.p_z[z] * p;
            if w > F::zero() {
                mi += w * (p / marginal[x]).ln();
            }
        }
        mi
    }

    pub fn mi_zx(&self) -> F {
        self.mi_with(&self.p_x_given_z)
    }

    pub fn mi_zy(&self) -> F {
        self.mi_with(&self.p_y_given_z)
    }
}

/// `KL( sum_z P(z) P(X|z) P(Y|z) || P_X P_Y )`, summed over the exact table.
pub fn exact_mixture_kl<F: Scalar>(m: &DiscreteJointModel<F>) -> Result<F> {
    let joint = m.mixture();
    let px = joint.sum_axis(Axis(1));
    let py = joint.sum_axis(Axis(0));
    let mut kl = F::zero();
    for ((x, y), &p) in joint.indexed_iter() {
        if p > F::zero() {
            let q = px[x] * py[y];
            if q <= F::zero() {
                return Err(Error::DivergenceUndefined(format!(
                    "mixture mass at ({x}, {y}) outside the product support"
                )));
            }
            kl += p * (p / q).ln();
        }
    }
    Ok(kl)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundChainReport {
    pub n: usize,
    pub objective_at_fstar: f64,
    pub kl: f64,
    pub mi_zx: f64,
    pub mi_zy: f64,
    pub h_z: f64,
    pub all_inequalities_hold: bool,
}

pub const BOUND_SLACK: f64 = 1e-9;
const MAX_CONFIGURATIONS: u64 = 5_000_000;

/// Evaluates the `n`-sample contrastive objective exactly, by enumerating
/// every batch of `n` i.i.d. pairs drawn from the mixture, with the critic
/// `f*(x, y) = ln P(x, y) / (P(x) P(y))`, then checks it against the chain
/// of upper bounds.
pub fn verify_bound_chain<F: Scalar>(m: &DiscreteJointModel<F>, n: usize) -> Result<BoundChainReport> {
    let (nx, ny) = (m.p_x_given_z.ncols(), m.p_y_given_z.ncols());
    if n == 0 || n > 4 || nx > 5 || ny > 5 {
        return Err(Error::Size(format!(
            "enumeration supports n <= 4 and |X|, |Y| <= 5 (got n = {n}, {nx} x {ny})"
        )));
    }
    let joint = m.mixture();
    let px = joint.sum_axis(Axis(1));
    let py = joint.sum_axis(Axis(0));
    // supported cells with their probability; f* is finite there
    let cells: Vec<(usize, usize, f64)> = joint
        .indexed_iter()
        .filter(|(_, &p)| p > F::zero())
        .map(|((x, y), &p)| (x, y, p.to_f64_lossy()))
        .collect();
    let configurations = (cells.len() as u64).pow(n as u32);
    if configurations > MAX_CONFIGURATIONS {
        return Err(Error::Size(format!("{configurations} batches exceed the enumeration budget")));
    }
    // density ratio, zero off the support
    let ratio = |x: usize, y: usize| -> f64 {
        let p = joint[[x, y]].to_f64_lossy();
        if p > 0.0 {
            p / (px[x] * py[y]).to_f64_lossy()
        } else {
            0.0
        }
    };
    let ratios = Array2::from_shape_fn((nx, ny), |(x, y)| ratio(x, y));

    let mut objective = 0.0;
    let mut digits = vec![0usize; n];
    let inv_n = 1.0 / n as f64;
    loop {
        let mut prob = 1.0;
        for &d in &digits {
            prob *= cells[d].2;
        }
        let mut value = 0.0;
        for &di in &digits {
            let (xi, yi, _) = cells[di];
            let denom: f64 = digits.iter().map(|&dj| ratios[[xi, cells[dj].1]]).sum::<f64>() * inv_n;
            value += (ratios[[xi, yi]] / denom).ln();
        }
        objective += prob * value * inv_n;

        let mut pos = 0;
        loop {
            if pos == n {
                let kl = exact_mixture_kl(m)?.to_f64_lossy();
                let (mi_zx, mi_zy, h_z) = (
                    m.mi_zx().to_f64_lossy(),
                    m.mi_zy().to_f64_lossy(),
                    m.h_z().to_f64_lossy(),
                );
                let min_mi = mi_zx.min(mi_zy);
                let holds = objective <= kl + BOUND_SLACK
                    && kl <= min_mi + BOUND_SLACK
                    && min_mi <= h_z + BOUND_SLACK;
                return Ok(BoundChainReport {
                    n,
                    objective_at_fstar: objective,
                    kl,
                    mi_zx,
                    mi_zy,
                    h_z,
                    all_inequalities_hold: holds,
                });
            }
            digits[pos] += 1;
            if digits[pos] < cells.len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}
