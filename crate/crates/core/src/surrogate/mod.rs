//! Digital twin of the atom response.
//!
//! [`GammaTwin`] maps `(d1, d2, θ_inc)` to `Γ_TE` and `Γ_TM` through four
//! independent Ordinary Kriging channels (real and imaginary part per
//! polarization). Inside an optimization run the twin is compiled into a
//! [`GammaLut`] at the run's incidence angle, since a table lookup is orders of
//! magnitude cheaper than a kernel sum over the training set.

mod kriging;
mod lut;

pub use kriging::{KrigingModel, KrigingOptions};
pub use lut::{compile_lut, lut_lookup, GammaLut, DEFAULT_RESOLUTION};

use std::path::Path;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atoms::{AtomBounds, AtomDescriptor, GammaSource, ReflectionSample};
use crate::wavegeom::Polarization;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("training failed: {0}")]
    Training(String),
    #[error("invalid training data: {0}")]
    Validation(String),
    #[error("query ({d1:.6e}, {d2:.6e}) m at {theta_inc} deg lies outside the twin's training box")]
    OutOfBounds { d1: f64, d2: f64, theta_inc: f64 },
    #[error("lookup table resolution {0} is below the minimum of 16")]
    Resolution(usize),
}

/// Minimum number of training samples.
pub const MIN_SAMPLES: usize = 8;

/// Channel order inside a twin.
const CHANNELS: [(Polarization, bool); 4] =
    [(Polarization::Te, false), (Polarization::Te, true), (Polarization::Tm, false), (Polarization::Tm, true)];

/// Four-channel Kriging surrogate for `Γ_TE` and `Γ_TM`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaTwin {
    /// Descriptor box; shared by `d1` and `d2`.
    pub bounds: AtomBounds,
    /// Incidence range covered by the training data, degrees.
    pub theta_min: f64,
    pub theta_max: f64,
    /// Channels in order `Re Γ_TE`, `Im Γ_TE`, `Re Γ_TM`, `Im Γ_TM`.
    pub channels: Vec<KrigingModel>,
}

fn normalize(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (x - lo) / (hi - lo)
    } else {
        0.0
    }
}

fn data_box(samples: &[ReflectionSample]) -> (AtomBounds, f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut tmin = f64::INFINITY;
    let mut tmax = f64::NEG_INFINITY;
    for s in samples {
        lo = lo.min(s.descriptor.d1).min(s.descriptor.d2);
        hi = hi.max(s.descriptor.d1).max(s.descriptor.d2);
        tmin = tmin.min(s.theta_inc);
        tmax = tmax.max(s.theta_inc);
    }
    (AtomBounds { lo, hi }, tmin, tmax)
}

impl GammaTwin {
    /// Trains on samples, taking the descriptor box from the data.
    pub fn train(samples: &[ReflectionSample], opts: &KrigingOptions) -> Result<Self, SurrogateError> {
        if samples.is_empty() {
            return Err(SurrogateError::Validation(format!("need at least {MIN_SAMPLES} samples, got 0")));
        }
        let (bounds, tmin, tmax) = data_box(samples);
        Self::train_in_box(samples, bounds, (tmin, tmax), opts)
    }

    /// Trains with an explicit descriptor box and incidence range, both of which
    /// must contain every sample. Queries are accepted anywhere inside them.
    pub fn train_in_box(
        samples: &[ReflectionSample],
        bounds: AtomBounds,
        theta_range: (f64, f64),
        opts: &KrigingOptions,
    ) -> Result<Self, SurrogateError> {
        if samples.len() < MIN_SAMPLES {
            return Err(SurrogateError::Validation(format!(
                "need at least {MIN_SAMPLES} samples, got {}",
                samples.len()
            )));
        }
        let (tmin, tmax) = theta_range;
        let mut inputs = Vec::with_capacity(3 * samples.len());
        for (i, s) in samples.iter().enumerate() {
            let g = [s.gamma_te.re, s.gamma_te.im, s.gamma_tm.re, s.gamma_tm.im];
            if g.iter().any(|v| !v.is_finite()) {
                return Err(SurrogateError::Validation(format!("sample {i} has a non-finite reflection coefficient")));
            }
            let t_ok = s.theta_inc >= tmin - 1e-9 && s.theta_inc <= tmax + 1e-9;
            if !bounds.contains(&s.descriptor) || !t_ok {
                return Err(SurrogateError::Validation(format!("sample {i} lies outside the training box")));
            }
            inputs.extend([
                normalize(s.descriptor.d1, bounds.lo, bounds.hi),
                normalize(s.descriptor.d2, bounds.lo, bounds.hi),
                normalize(s.theta_inc, tmin, tmax),
            ]);
        }
        check_distinct(&inputs, 3)?;

        let channels = CHANNELS
            .par_iter()
            .map(|&(pol, imag)| {
                let y: Vec<f64> = samples
                    .iter()
                    .map(|s| if imag { s.gamma(pol).im } else { s.gamma(pol).re })
                    .collect();
                KrigingModel::fit(inputs.clone(), 3, y, opts)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { bounds, theta_min: tmin, theta_max: tmax, channels })
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn query_point(&self, d: &AtomDescriptor, theta_inc: f64) -> Result<[f64; 3], SurrogateError> {
        let t_ok = theta_inc >= self.theta_min - 1e-9 && theta_inc <= self.theta_max + 1e-9;
        if !self.bounds.contains(d) || !t_ok || !theta_inc.is_finite() {
            return Err(SurrogateError::OutOfBounds { d1: d.d1, d2: d.d2, theta_inc });
        }
        Ok([
            normalize(d.d1, self.bounds.lo, self.bounds.hi),
            normalize(d.d2, self.bounds.lo, self.bounds.hi),
            normalize(theta_inc, self.theta_min, self.theta_max),
        ])
    }

    /// Predicted `Γ` for one polarization; magnitude clamped to 1, phase kept.
    pub fn predict(&self, d: &AtomDescriptor, theta_inc: f64, pol: Polarization) -> Result<Complex64, SurrogateError> {
        let x = self.query_point(d, theta_inc)?;
        let k = match pol {
            Polarization::Te => 0,
            Polarization::Tm => 2,
        };
        Ok(clamp_passive(Complex64::new(self.channels[k].predict(&x), self.channels[k + 1].predict(&x))))
    }

    /// `(Γ_TE, Γ_TM)` at one query.
    pub fn predict_both(&self, d: &AtomDescriptor, theta_inc: f64) -> Result<(Complex64, Complex64), SurrogateError> {
        let x = self.query_point(d, theta_inc)?;
        let c = &self.channels;
        Ok((
            clamp_passive(Complex64::new(c[0].predict(&x), c[1].predict(&x))),
            clamp_passive(Complex64::new(c[2].predict(&x), c[3].predict(&x))),
        ))
    }

    pub fn save(&self, path: &Path) -> crate::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| crate::Error::io(path, e))
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl GammaSource for GammaTwin {
    fn gamma(&self, d: &AtomDescriptor, theta_inc: f64, pol: Polarization) -> Result<Complex64, crate::Error> {
        Ok(self.predict(d, theta_inc, pol)?)
    }

    fn bounds(&self) -> AtomBounds {
        self.bounds
    }
}

fn clamp_passive(g: Complex64) -> Complex64 {
    let m = g.norm();
    if m > 1.0 {
        g / m
    } else {
        g
    }
}

fn check_distinct(inputs: &[f64], dim: usize) -> Result<(), SurrogateError> {
    let n = inputs.len() / dim;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| inputs[a * dim..(a + 1) * dim].partial_cmp(&inputs[b * dim..(b + 1) * dim]).unwrap());
    for w in order.windows(2) {
        if inputs[w[0] * dim..(w[0] + 1) * dim] == inputs[w[1] * dim..(w[1] + 1) * dim] {
            return Err(SurrogateError::Training(format!("duplicate training inputs (samples {} and {})", w[0], w[1])));
        }
    }
    Ok(())
}

/// k-fold cross-validation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    /// RMSE of `Re Γ_TE`, `Im Γ_TE`, `Re Γ_TM`, `Im Γ_TM`.
    pub channel_rmse: [f64; 4],
    /// Over both polarizations, degrees.
    pub phase_rmse_deg: f64,
    /// Over both polarizations, linear magnitude.
    pub magnitude_rmse: f64,
}

/// Accumulates prediction errors against reference samples.
#[derive(Debug, Default, Clone)]
pub struct ErrorAccumulator {
    channel_sq: [f64; 4],
    phase_sq: f64,
    mag_sq: f64,
    count: usize,
}

impl ErrorAccumulator {
    pub fn push(&mut self, predicted: (Complex64, Complex64), reference: (Complex64, Complex64)) {
        let pairs = [(predicted.0, reference.0), (predicted.1, reference.1)];
        for (k, (p, r)) in pairs.iter().enumerate() {
            self.channel_sq[2 * k] += (p.re - r.re).powi(2);
            self.channel_sq[2 * k + 1] += (p.im - r.im).powi(2);
            self.phase_sq += wrapped_phase_diff_deg(p.arg().to_degrees(), r.arg().to_degrees()).powi(2);
            self.mag_sq += (p.norm() - r.norm()).powi(2);
        }
        self.count += 1;
    }

    pub fn finish(&self, folds: usize) -> CvReport {
        let n = self.count.max(1) as f64;
        CvReport {
            folds,
            channel_rmse: self.channel_sq.map(|s| (s / n).sqrt()),
            phase_rmse_deg: (self.phase_sq / (2.0 * n)).sqrt(),
            magnitude_rmse: (self.mag_sq / (2.0 * n)).sqrt(),
        }
    }
}

/// Difference of two angles wrapped to `(-180, 180]`.
pub fn wrapped_phase_diff_deg(a: f64, b: f64) -> f64 {
    let mut d = (a - b) % 360.0;
    if d <= -180.0 {
        d += 360.0;
    } else if d > 180.0 {
        d -= 360.0;
    }
    d
}

/// k-fold cross-validation; folds come from a seeded shuffle.
pub fn cross_validate(
    samples: &[ReflectionSample],
    folds: usize,
    seed: u64,
    opts: &KrigingOptions,
) -> Result<CvReport, SurrogateError> {
    assert!(folds >= 2, "cross-validation needs at least two folds");
    let assignment = fold_assignment(samples.len(), folds, seed);
    let (bounds, tmin, tmax) = data_box(samples);
    let mut acc = ErrorAccumulator::default();
    for k in 0..folds {
        let train: Vec<ReflectionSample> =
            samples.iter().zip(&assignment).filter(|(_, &f)| f != k).map(|(s, _)| *s).collect();
        let twin = GammaTwin::train_in_box(&train, bounds, (tmin, tmax), opts)?;
        for (s, _) in samples.iter().zip(&assignment).filter(|(_, &f)| f == k) {
            let p = twin.predict_both(&s.descriptor, s.theta_inc)?;
            acc.push(p, (s.gamma_te, s.gamma_tm));
        }
    }
    Ok(acc.finish(folds))
}

/// Fold index of each sample.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::{characterize, lhs_sample, CellSpec, SyntheticAtom};

    fn atom() -> SyntheticAtom {
        SyntheticAtom::for_cell(&CellSpec::at_frequency(28e9))
    }

    fn constant_samples(n: usize) -> Vec<ReflectionSample> {
        let a = atom();
        lhs_sample(a.bounds, &[0.0], n, 9)
            .into_iter()
            .map(|(d, t)| ReflectionSample {
                descriptor: d,
                theta_inc: t,
                gamma_te: Complex64::new(0.3, -0.4),
                gamma_tm: Complex64::new(-0.7, 0.1),
            })
            .collect()
    }

    #[test]
    fn constant_dataset_predicts_constant() {
        let s = constant_samples(20);
        let twin = GammaTwin::train(&s, &KrigingOptions::default()).unwrap();
        let q = AtomDescriptor::new(twin.bounds.mid(), twin.bounds.lo);
        assert_eq!(twin.predict(&q, 0.0, Polarization::Te).unwrap(), Complex64::new(0.3, -0.4));
        assert_eq!(twin.predict(&q, 0.0, Polarization::Tm).unwrap(), Complex64::new(-0.7, 0.1));
    }

    #[test]
    fn constant_dataset_cv_is_exact() {
        let rep = cross_validate(&constant_samples(30), 3, 1, &KrigingOptions::default()).unwrap();
        assert_eq!(rep.channel_rmse, [0.0; 4]);
        assert_eq!(rep.phase_rmse_deg, 0.0);
        assert_eq!(rep.magnitude_rmse, 0.0);
    }

    #[test]
    fn too_few_and_duplicate_samples_fail() {
        let s = constant_samples(20);
        assert!(matches!(GammaTwin::train(&s[..5], &KrigingOptions::default()), Err(SurrogateError::Validation(_))));
        let mut dup = s.clone();
        dup[4] = dup[7];
        assert!(matches!(GammaTwin::train(&dup, &KrigingOptions::default()), Err(SurrogateError::Training(_))));
        let mut bad = s;
        bad[2].gamma_tm.im = f64::INFINITY;
        assert!(matches!(GammaTwin::train(&bad, &KrigingOptions::default()), Err(SurrogateError::Validation(_))));
    }

    #[test]
    fn queries_outside_box_fail() {
        let a = atom();
        let s = characterize(&a, &lhs_sample(a.bounds, &[0.0], 20, 2)).unwrap();
        let twin = GammaTwin::train_in_box(&s, a.bounds, (0.0, 0.0), &KrigingOptions::default()).unwrap();
        let inside = AtomDescriptor::new(a.bounds.lo, a.bounds.hi);
        assert!(twin.predict(&inside, 0.0, Polarization::Te).is_ok());
        let outside = AtomDescriptor::new(a.bounds.lo * 0.9, a.bounds.mid());
        assert!(matches!(twin.predict(&outside, 0.0, Polarization::Te), Err(SurrogateError::OutOfBounds { .. })));
        assert!(twin.predict(&inside, 5.0, Polarization::Te).is_err());
    }

    #[test]
    fn interpolates_and_stays_passive() {
        let a = atom();
        let s = characterize(&a, &lhs_sample(a.bounds, &[0.0, 30.0], 60, 4)).unwrap();
        let twin = GammaTwin::train_in_box(&s, a.bounds, (0.0, 30.0), &KrigingOptions::default()).unwrap();
        for smp in &s {
            let (te, tm) = twin.predict_both(&smp.descriptor, smp.theta_inc).unwrap();
            assert!((te - smp.gamma_te).norm() < 1e-5);
            assert!((tm - smp.gamma_tm).norm() < 1e-5);
        }
        let plan = lhs_sample(a.bounds, &[10.0], 200, 99);
        for (d, t) in plan {
            for pol in Polarization::BOTH {
                assert!(twin.predict(&d, t, pol).unwrap().norm() <= 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn folds_are_deterministic() {
        assert_eq!(fold_assignment(50, 5, 3), fold_assignment(50, 5, 3));
        assert_ne!(fold_assignment(50, 5, 3), fold_assignment(50, 5, 4));
        let f = fold_assignment(50, 5, 3);
        for k in 0..5 {
            assert_eq!(f.iter().filter(|&&x| x == k).count(), 10);
        }
    }

    #[test]
    fn twin_json_round_trip_is_exact() {
        let a = atom();
        let s = characterize(&a, &lhs_sample(a.bounds, &[0.0], 16, 5)).unwrap();
        let twin = GammaTwin::train(&s, &KrigingOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("twin.json");
        twin.save(&path).unwrap();
        let back = GammaTwin::load(&path).unwrap();
        assert_eq!(back, twin);
    }

    #[test]
    fn phase_diff_wraps() {
        assert_eq!(wrapped_phase_diff_deg(170.0, -170.0), -20.0);
        assert_eq!(wrapped_phase_diff_deg(-170.0, 170.0), 20.0);
        assert_eq!(wrapped_phase_diff_deg(10.0, 10.0), 0.0);
    }
}
