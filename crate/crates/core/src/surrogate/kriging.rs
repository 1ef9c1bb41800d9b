//! Ordinary Kriging on the unit cube for one real output channel.
//!
//! Correlation is Gaussian with one inverse length per input dimension,
//! `R(x, x') = exp(-Σ_l θ_l (x_l - x'_l)²)`. The hyperparameters maximize the
//! concentrated log-likelihood `-(N/2) ln σ̂² - (1/2) ln|R|` over a log-spaced grid
//! by coordinate search.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SurrogateError;

/// Hyperparameter search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KrigingOptions {
    pub nugget: f64,
    /// Inclusive `log10` range of the θ grid.
    pub log10_theta_min: f64,
    pub log10_theta_max: f64,
    pub grid_points: usize,
    pub sweeps: usize,
}

impl Default for KrigingOptions {
    fn default() -> Self {
        Self { nugget: 1e-10, log10_theta_min: -2.0, log10_theta_max: 3.0, grid_points: 11, sweeps: 2 }
    }
}

impl KrigingOptions {
    fn grid(&self) -> Vec<f64> {
        let n = self.grid_points.max(2);
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                10f64.powf(self.log10_theta_min + t * (self.log10_theta_max - self.log10_theta_min))
            })
            .collect()
    }
}

/// A fitted Ordinary Kriging predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrigingModel {
    pub dim: usize,
    /// Row-major `N × dim` normalized inputs.
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
    pub theta: Vec<f64>,
    pub nugget: f64,
    /// Generalized-least-squares constant mean.
    pub mean: f64,
    /// `R⁻¹ (y - mean·1)`.
    pub weights: Vec<f64>,
    pub log_likelihood: f64,
}

struct Solved {
    mean: f64,
    weights: Vec<f64>,
    log_likelihood: f64,
}

fn correlation_matrix(inputs: &[f64], dim: usize, theta: &[f64], nugget: f64) -> DMatrix<f64> {
    let n = inputs.len() / dim;
    let mut r = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0 + nugget;
        let xi = &inputs[i * dim..(i + 1) * dim];
        for j in 0..i {
            let xj = &inputs[j * dim..(j + 1) * dim];
            let c = correlation(xi, xj, theta);
            r[(i, j)] = c;
            r[(j, i)] = c;
        }
    }
    r
}

#[inline]
fn correlation(a: &[f64], b: &[f64], theta: &[f64]) -> f64 {
    let mut s = 0.0;
    for l in 0..theta.len() {
        let d = a[l] - b[l];
        s += theta[l] * d * d;
    }
    (-s).exp()
}

fn is_constant(y: &[f64]) -> bool {
    y.iter().all(|&v| v == y[0])
}

fn solve(inputs: &[f64], dim: usize, outputs: &[f64], theta: &[f64], nugget: f64) -> Option<Solved> {
    let n = outputs.len();
    let r = correlation_matrix(inputs, dim, theta, nugget);
    let chol = r.cholesky()?;
    let ones = DVector::<f64>::from_element(n, 1.0);
    let y = DVector::<f64>::from_column_slice(outputs);
    let r_inv_one = chol.solve(&ones);
    let r_inv_y = chol.solve(&y);
    let denom = ones.dot(&r_inv_one);
    if !(denom.is_finite() && denom > 0.0) {
        return None;
    }
    let mean = ones.dot(&r_inv_y) / denom;
    let resid = &y - &ones * mean;
    let weights = chol.solve(&resid);
    let sigma2 = resid.dot(&weights) / n as f64;
    if !weights.iter().all(|w| w.is_finite()) || !(sigma2 > 0.0) || !sigma2.is_finite() {
        return None;
    }
    let ln_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let log_likelihood = -0.5 * n as f64 * sigma2.ln() - 0.5 * ln_det;
    if !log_likelihood.is_finite() {
        return None;
    }
    Some(Solved { mean, weights: weights.as_slice().to_vec(), log_likelihood })
}

impl KrigingModel {
    /// Fits hyperparameters and solve products.
    ///
    /// `inputs` is row-major with `dim` columns, already mapped into the unit cube.
    /// Dimensions along which every input is identical are given `θ = 1` and skipped
    /// by the search.
    pub fn fit(inputs: Vec<f64>, dim: usize, outputs: Vec<f64>, opts: &KrigingOptions) -> Result<Self, SurrogateError> {
        let n = outputs.len();
        assert_eq!(inputs.len(), n * dim);
        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(SurrogateError::Validation("non-finite training output".into()));
        }
        if is_constant(&outputs) {
            return Ok(Self {
                dim,
                inputs,
                mean: outputs[0],
                weights: vec![0.0; n],
                outputs,
                theta: vec![1.0; dim],
                nugget: opts.nugget,
                log_likelihood: f64::INFINITY,
            });
        }

        let active: Vec<usize> = (0..dim)
            .filter(|&l| {
                let first = inputs[l];
                (0..n).any(|i| inputs[i * dim + l] != first)
            })
            .collect();
        let grid = opts.grid();
        let top = grid.len() - 1;
        // start from the shortest correlation lengths, where R is best conditioned
        let mut idx = vec![top; dim];
        let mut cache: HashMap<Vec<usize>, Option<f64>> = HashMap::new();
        let theta_of = |idx: &[usize]| -> Vec<f64> {
            (0..dim).map(|l| if active.contains(&l) { grid[idx[l]] } else { 1.0 }).collect()
        };
        let mut eval = |idx: &[usize]| -> Option<f64> {
            *cache
                .entry(idx.to_vec())
                .or_insert_with(|| solve(&inputs, dim, &outputs, &theta_of(idx), opts.nugget).map(|s| s.log_likelihood))
        };

        let mut best = eval(&idx);
        for _ in 0..opts.sweeps {
            for &l in &active {
                let mut best_k = idx[l];
                for k in 0..grid.len() {
                    let mut trial = idx.clone();
                    trial[l] = k;
                    if let Some(ll) = eval(&trial) {
                        if best.is_none_or(|b| ll > b) {
                            best = Some(ll);
                            best_k = k;
                        }
                    }
                }
                idx[l] = best_k;
            }
        }
        let theta = theta_of(&idx);
        Self::with_theta(inputs, dim, outputs, theta, opts.nugget)
    }

    /// Builds the predictor for fixed hyperparameters.
    pub fn with_theta(
        inputs: Vec<f64>,
        dim: usize,
        outputs: Vec<f64>,
        theta: Vec<f64>,
        nugget: f64,
    ) -> Result<Self, SurrogateError> {
        if is_constant(&outputs) {
            let n = outputs.len();
            return Ok(Self {
                dim,
                inputs,
                mean: outputs[0],
                weights: vec![0.0; n],
                outputs,
                theta,
                nugget,
                log_likelihood: f64::INFINITY,
            });
        }
        let s = solve(&inputs, dim, &outputs, &theta, nugget).ok_or_else(|| {
            SurrogateError::Training(format!("correlation matrix not positive definite for theta {theta:?}"))
        })?;
        Ok(Self {
            dim,
            inputs,
            outputs,
            theta,
            nugget,
            mean: s.mean,
            weights: s.weights,
            log_likelihood: s.log_likelihood,
        })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// `mean + r(x)ᵀ R⁻¹ (y - mean·1)` at a normalized point.
    ///
    /// The nugget belongs to the covariance, so a query that coincides with a
    /// training input sees `1 + nugget` there, exactly like the diagonal of `R`.
    /// Training outputs are then reproduced to round-off.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w != 0.0 {
                let xi = &self.inputs[i * self.dim..(i + 1) * self.dim];
                let c = if x == xi { 1.0 + self.nugget } else { correlation(x, xi, &self.theta) };
                acc += w * c;
            }
        }
        self.mean + acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            x.extend([a, b]);
            y.push((3.0 * a).sin() + 0.5 * b * b);
        }
        (x, y)
    }

    #[test]
    fn constant_outputs_predict_the_constant() {
        let (x, _) = dataset(12, 1);
        let m = KrigingModel::fit(x, 2, vec![0.37; 12], &KrigingOptions::default()).unwrap();
        for q in [[0.1, 0.9], [0.5, 0.5], [0.0, 1.0]] {
            assert_eq!(m.predict(&q), 0.37);
        }
    }

    #[test]
    fn interpolates_training_points() {
        let (x, y) = dataset(30, 2);
        let m = KrigingModel::fit(x.clone(), 2, y.clone(), &KrigingOptions::default()).unwrap();
        for i in 0..30 {
            assert!((m.predict(&x[2 * i..2 * i + 2]) - y[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn mean_matches_gls_formula_by_hand() {
        // three points, fixed theta: compare against an explicit inverse
        let x = vec![0.0, 0.0, 0.5, 0.0, 1.0, 1.0];
        let y = vec![1.0, 2.0, 4.0];
        let theta = vec![2.0, 1.0];
        let m = KrigingModel::with_theta(x.clone(), 2, y.clone(), theta.clone(), 0.0).unwrap();
        let r = correlation_matrix(&x, 2, &theta, 0.0);
        let inv = r.try_inverse().unwrap();
        let ones = DVector::from_element(3, 1.0);
        let yv = DVector::from_vec(y);
        let mu = (ones.transpose() * &inv * &yv)[0] / (ones.transpose() * &inv * &ones)[0];
        assert!((m.mean - mu).abs() < 1e-12);
        let q = [0.25, 0.5];
        let rq = DVector::from_iterator(3, (0..3).map(|i| correlation(&q, &x[2 * i..2 * i + 2], &theta)));
        let expected = mu + (rq.transpose() * inv * (yv - ones * mu))[0];
        assert!((m.predict(&q) - expected).abs() < 1e-12);
    }

    #[test]
    fn shift_equivariance() {
        let (x, y) = dataset(25, 3);
        let opts = KrigingOptions::default();
        let a = KrigingModel::fit(x.clone(), 2, y.clone(), &opts).unwrap();
        let b = KrigingModel::fit(x, 2, y.iter().map(|v| v + 5.0).collect(), &opts).unwrap();
        assert_eq!(a.theta, b.theta);
        for q in [[0.3, 0.3], [0.9, 0.1], [0.05, 0.66]] {
            assert!((b.predict(&q) - a.predict(&q) - 5.0).abs() < 1e-8);
        }
    }

    #[test]
    fn permutation_invariance() {
        let (x, y) = dataset(25, 4);
        let opts = KrigingOptions::default();
        let a = KrigingModel::fit(x.clone(), 2, y.clone(), &opts).unwrap();
        let mut order: Vec<usize> = (0..25).collect();
        order.reverse();
        order.swap(3, 17);
        let xp: Vec<f64> = order.iter().flat_map(|&i| [x[2 * i], x[2 * i + 1]]).collect();
        let yp: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let b = KrigingModel::fit(xp, 2, yp, &opts).unwrap();
        for q in [[0.3, 0.3], [0.9, 0.1], [0.05, 0.66]] {
            assert!((a.predict(&q) - b.predict(&q)).abs() < 1e-9);
        }
    }

    #[test]
    fn inactive_dimension_is_skipped() {
        let (x2, y) = dataset(15, 5);
        let x: Vec<f64> = x2.chunks(2).flat_map(|c| [c[0], 0.0, c[1]]).collect();
        let m = KrigingModel::fit(x, 3, y, &KrigingOptions::default()).unwrap();
        assert_eq!(m.theta[1], 1.0);
    }

    #[test]
    fn rejects_non_finite_outputs() {
        let (x, mut y) = dataset(10, 6);
        y[3] = f64::NAN;
        assert!(matches!(KrigingModel::fit(x, 2, y, &KrigingOptions::default()), Err(SurrogateError::Validation(_))));
    }
}
