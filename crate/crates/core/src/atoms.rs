//! Meta-atom descriptors and reflection responses.
//!
//! The unit cell is a rectangular patch with two geometric degrees of freedom,
//! `d1` (extent along x) and `d2` (extent along y). Its reflection coefficient is
//! supplied either by [`SyntheticAtom`], a closed-form resonant model shaped to the
//! published characterization envelope, or by an externally produced table read
//! with [`load_reflection_table`].

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wavegeom::{wavelength, Polarization};

/// Header of the reflection-table CSV format.
pub const REFLECTION_TABLE_HEADER: [&str; 7] =
    ["d1_m", "d2_m", "theta_inc_deg", "re_gamma_te", "im_gamma_te", "re_gamma_tm", "im_gamma_tm"];

#[derive(Debug, Error)]
pub enum AtomError {
    #[error("descriptor ({d1:.6e}, {d2:.6e}) m outside bounds [{lo:.6e}, {hi:.6e}] m")]
    OutOfBounds { d1: f64, d2: f64, lo: f64, hi: f64 },
    #[error("invalid bounds: need 0 < lo ({lo}) < hi ({hi})")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {message}")]
    Validation { line: u64, message: String },
    #[error("no samples")]
    NoSamples,
}

/// Geometry of one rectangular patch, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomDescriptor {
    pub d1: f64,
    pub d2: f64,
}

impl AtomDescriptor {
    pub fn new(d1: f64, d2: f64) -> Self {
        Self { d1, d2 }
    }

    /// Extent that controls the given polarization (TE along y, TM along x).
    pub fn dominant(&self, pol: Polarization) -> f64 {
        match pol {
            Polarization::Te => self.d2,
            Polarization::Tm => self.d1,
        }
    }

    pub fn swapped(&self) -> Self {
        Self { d1: self.d2, d2: self.d1 }
    }
}

/// Admissible range shared by both descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomBounds {
    pub lo: f64,
    pub hi: f64,
}

impl AtomBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self, AtomError> {
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(AtomError::InvalidBounds { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// `[0.05, 0.95]` of the cell pitch.
    pub fn for_pitch(pitch: f64) -> Self {
        Self { lo: 0.05 * pitch, hi: 0.95 * pitch }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains_value(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn contains(&self, d: &AtomDescriptor) -> bool {
        self.contains_value(d.d1) && self.contains_value(d.d2)
    }

    pub fn check(&self, d: &AtomDescriptor) -> Result<(), AtomError> {
        if self.contains(d) {
            Ok(())
        } else {
            Err(AtomError::OutOfBounds { d1: d.d1, d2: d.d2, lo: self.lo, hi: self.hi })
        }
    }
}

/// Substrate record carried for provenance; it does not enter any computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubstrateInfo {
    pub thickness_m: f64,
    pub relative_permittivity: f64,
    pub loss_tangent: f64,
    pub copper_thickness_m: f64,
}

impl Default for SubstrateInfo {
    fn default() -> Self {
        Self { thickness_m: 5.1e-4, relative_permittivity: 3.0, loss_tangent: 1e-3, copper_thickness_m: 35e-6 }
    }
}

/// Lattice cell of the skin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub pitch_x: f64,
    pub pitch_y: f64,
    pub frequency: f64,
    #[serde(default)]
    pub substrate: SubstrateInfo,
}

impl CellSpec {
    /// Square cell with pitch `0.4 λ0` at `frequency`.
    pub fn at_frequency(frequency: f64) -> Self {
        let pitch = 0.4 * wavelength(frequency);
        Self { pitch_x: pitch, pitch_y: pitch, frequency, substrate: SubstrateInfo::default() }
    }
}

/// One characterized atom response at a given incidence angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionSample {
    pub descriptor: AtomDescriptor,
    pub theta_inc: f64,
    pub gamma_te: Complex64,
    pub gamma_tm: Complex64,
}

impl ReflectionSample {
    pub fn gamma(&self, pol: Polarization) -> Complex64 {
        match pol {
            Polarization::Te => self.gamma_te,
            Polarization::Tm => self.gamma_tm,
        }
    }
}

/// Anything that can report a reflection coefficient for an atom.
pub trait GammaSource: Sync {
    fn gamma(&self, d: &AtomDescriptor, theta_inc: f64, pol: Polarization) -> Result<Complex64, crate::Error>;
    fn bounds(&self) -> AtomBounds;
}

/// Parameters of the resonant stand-in model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAtomParams {
    /// Resonance center at normal incidence, m.
    pub d_c0: f64,
    /// Resonance width, m.
    pub w: f64,
    /// Half of the phase swing, degrees.
    pub phi_max: f64,
    pub g0: f64,
    pub g1: f64,
    /// Detuning of the resonance with `sin²θ_inc`.
    pub kappa: f64,
}

impl SyntheticAtomParams {
    /// Defaults scaled to a cell pitch: magnitude between -0.5 dB and -0.1 dB and a
    /// phase span of about 325 degrees over `[0.05, 0.95]` of the pitch.
    pub fn for_pitch(pitch: f64) -> Self {
        let g0 = 10f64.powf(-0.1 / 20.0);
        let g1 = g0 - 10f64.powf(-0.5 / 20.0);
        Self { d_c0: 0.5 * pitch, w: 0.07 * pitch, phi_max: 180.0, g0, g1, kappa: 0.05 }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.g0 <= 1.0 && self.g0 - self.g1 > 0.0 && 2.0 * self.phi_max <= 360.0 && self.w > 0.0) {
            return Err(format!("invalid synthetic atom parameters {self:?}"));
        }
        Ok(())
    }
}

/// Closed-form atom model with bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAtom {
    pub params: SyntheticAtomParams,
    pub bounds: AtomBounds,
}

impl SyntheticAtom {
    pub fn new(params: SyntheticAtomParams, bounds: AtomBounds) -> Self {
        Self { params, bounds }
    }

    pub fn for_cell(cell: &CellSpec) -> Self {
        Self { params: SyntheticAtomParams::for_pitch(cell.pitch_x), bounds: AtomBounds::for_pitch(cell.pitch_x) }
    }
}

impl GammaSource for SyntheticAtom {
    fn gamma(&self, d: &AtomDescriptor, theta_inc: f64, pol: Polarization) -> Result<Complex64, crate::Error> {
        Ok(synthetic_gamma(d, theta_inc, pol, self)?)
    }

    fn bounds(&self) -> AtomBounds {
        self.bounds
    }
}

/// Reflection coefficient of the stand-in model.
///
/// With `x = d_c(θ) - d_dom` and `d_c(θ) = d_c0 (1 + κ sin²θ)`, the phase is
/// `φ_max (2/π) atan(x / w)` degrees and the magnitude is `g0 - g1 exp(-(x/w)²)`.
pub fn synthetic_gamma(
    d: &AtomDescriptor,
    theta_inc: f64,
    pol: Polarization,
    atom: &SyntheticAtom,
) -> Result<Complex64, AtomError> {
    atom.bounds.check(d)?;
    let p = &atom.params;
    let s = theta_inc.to_radians().sin();
    let centre = p.d_c0 * (1.0 + p.kappa * s * s);
    let x = (centre - d.dominant(pol)) / p.w;
    let phase = (p.phi_max * (2.0 / PI) * x.atan()).to_radians();
    let magnitude = p.g0 - p.g1 * (-x * x).exp();
    Ok(Complex64::from_polar(magnitude, phase))
}

/// Reflection coefficient that ignores the geometry.
#[derive(Debug, Clone, Copy)]
pub struct ConstantGamma {
    pub value: Complex64,
    pub bounds: AtomBounds,
}

impl GammaSource for ConstantGamma {
    fn gamma(&self, d: &AtomDescriptor, _theta_inc: f64, _pol: Polarization) -> Result<Complex64, crate::Error> {
        self.bounds.check(d)?;
        Ok(self.value)
    }

    fn bounds(&self) -> AtomBounds {
        self.bounds
    }
}

/// Reads and validates a reflection table.
pub fn load_reflection_table(path: &Path) -> Result<Vec<ReflectionSample>, AtomError> {
    let file = std::fs::File::open(path).map_err(|source| AtomError::Io { path: path.display().to_string(), source })?;
    read_reflection_table(file)
}

pub fn read_reflection_table<R: std::io::Read>(reader: R) -> Result<Vec<ReflectionSample>, AtomError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| AtomError::Parse { line: 1, message: e.to_string() })?.clone();
    if headers.is_empty() {
        return Err(AtomError::NoSamples);
    }
    if headers.iter().ne(REFLECTION_TABLE_HEADER.iter().copied()) {
        return Err(AtomError::Parse {
            line: 1,
            message: format!("expected header `{}`", REFLECTION_TABLE_HEADER.join(",")),
        });
    }
    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| AtomError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut values = [0.0f64; 7];
        for (i, (slot, name)) in values.iter_mut().zip(REFLECTION_TABLE_HEADER).enumerate() {
            let field = record.get(i).unwrap_or("");
            *slot = field
                .parse::<f64>()
                .map_err(|_| AtomError::Parse { line, message: format!("column `{name}`: cannot parse `{field}`") })?;
            if !slot.is_finite() {
                return Err(AtomError::Validation { line, message: format!("column `{name}` is not finite") });
            }
        }
        let sample = ReflectionSample {
            descriptor: AtomDescriptor::new(values[0], values[1]),
            theta_inc: values[2],
            gamma_te: Complex64::new(values[3], values[4]),
            gamma_tm: Complex64::new(values[5], values[6]),
        };
        if sample.descriptor.d1 <= 0.0 || sample.descriptor.d2 <= 0.0 {
            return Err(AtomError::Validation { line, message: "descriptors must be positive".into() });
        }
        for pol in Polarization::BOTH {
            let mag = sample.gamma(pol).norm();
            if mag > 1.0 {
                return Err(AtomError::Validation {
                    line,
                    message: format!("|gamma_{}| = {mag:.4} exceeds 1 (passive cell)", pol.label().to_lowercase()),
                });
            }
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(AtomError::NoSamples);
    }
    Ok(samples)
}

pub fn write_reflection_table<W: Write>(writer: W, samples: &[ReflectionSample]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REFLECTION_TABLE_HEADER)?;
    for s in samples {
        w.write_record(&[
            format!("{:e}", s.descriptor.d1),
            format!("{:e}", s.descriptor.d2),
            format!("{}", s.theta_inc),
            format!("{:e}", s.gamma_te.re),
            format!("{:e}", s.gamma_te.im),
            format!("{:e}", s.gamma_tm.re),
            format!("{:e}", s.gamma_tm.im),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Latin hypercube over `(d1, d2)`, `n` points for every incidence angle in `theta_set`.
pub fn lhs_sample(bounds: AtomBounds, theta_set: &[f64], n: usize, seed: u64) -> Vec<(AtomDescriptor, f64)> {
    assert!(n >= 2, "latin hypercube needs at least two points");
    let mut out = Vec::with_capacity(n * theta_set.len());
    for (t, &theta) in theta_set.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let mut strata: [Vec<usize>; 2] = [(0..n).collect(), (0..n).collect()];
        for perm in strata.iter_mut() {
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
        }
        let step = bounds.width() / n as f64;
        for i in 0..n {
            let d1 = bounds.lo + (strata[0][i] as f64 + rng.random::<f64>()) * step;
            let d2 = bounds.lo + (strata[1][i] as f64 + rng.random::<f64>()) * step;
            out.push((AtomDescriptor::new(d1.min(bounds.hi), d2.min(bounds.hi)), theta));
        }
    }
    out
}

/// Evaluates a source at every point of a sampling plan.
pub fn characterize(
    source: &dyn GammaSource,
    plan: &[(AtomDescriptor, f64)],
) -> Result<Vec<ReflectionSample>, crate::Error> {
    plan.iter()
        .map(|&(descriptor, theta_inc)| {
            Ok(ReflectionSample {
                descriptor,
                theta_inc,
                gamma_te: source.gamma(&descriptor, theta_inc, Polarization::Te)?,
                gamma_tm: source.gamma(&descriptor, theta_inc, Polarization::Tm)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolEnvelope {
    pub min_db: f64,
    pub max_db: f64,
    /// `max ∠Γ - min ∠Γ` over the grid, degrees.
    pub phase_coverage_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub theta_inc: f64,
    pub grid_res: usize,
    pub te: PolEnvelope,
    pub tm: PolEnvelope,
}

/// Magnitude range and phase coverage on a uniform `grid_res × grid_res` descriptor grid.
pub fn envelope_report(source: &dyn GammaSource, theta_inc: f64, grid_res: usize) -> Result<EnvelopeReport, crate::Error> {
    assert!(grid_res >= 8, "envelope grid needs at least 8 nodes per axis");
    let b = source.bounds();
    let node = |i: usize| b.lo + b.width() * i as f64 / (grid_res - 1) as f64;
    let mut env = [PolEnvelope { min_db: f64::INFINITY, max_db: f64::NEG_INFINITY, phase_coverage_deg: 0.0 }; 2];
    let mut phase = [(f64::INFINITY, f64::NEG_INFINITY); 2];
    for i in 0..grid_res {
        for j in 0..grid_res {
            let d = AtomDescriptor::new(node(i), node(j));
            for (k, pol) in Polarization::BOTH.into_iter().enumerate() {
                let g = source.gamma(&d, theta_inc, pol)?;
                let db = 20.0 * g.norm().log10();
                env[k].min_db = env[k].min_db.min(db);
                env[k].max_db = env[k].max_db.max(db);
                let arg = g.arg().to_degrees();
                phase[k].0 = phase[k].0.min(arg);
                phase[k].1 = phase[k].1.max(arg);
            }
        }
    }
    for k in 0..2 {
        env[k].phase_coverage_deg = phase[k].1 - phase[k].0;
    }
    Ok(EnvelopeReport { theta_inc, grid_res, te: env[0], tm: env[1] })
}
