//! Surface currents and far-field radiation of a skin layout.
//!
//! Under the local periodicity approximation each cell reflects with the
//! coefficient of an infinite array of identical atoms, so `Γ` is piecewise
//! constant over the aperture. The equivalent current of one cell is
//!
//! ```text
//! J = ẑ × [ζ0 ẑ × Jᵉ + Jᵐ],   Jᵉ = (1/ζ0) ẑ × (k̂ × Γ E ê),   Jᵐ = -ẑ × (Γ E ê)
//! ```
//!
//! with `k̂` the unit specular-reflected wave vector. The far field is
//! `(j k0 / 4π) Σ_pq J_pq I_pq(u, v)`, where `I_pq` integrates the incident phase
//! and the observation phase over the cell and has a separable `sinc` closed form.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atoms::{AtomBounds, AtomDescriptor, CellSpec};
use crate::surrogate::{lut_lookup, GammaLut};
use crate::wavegeom::{
    polarization_unit_vector, specular_unit_vector, PlaneWaveSpec, Polarization, Uv, Vec3C, FREE_SPACE_IMPEDANCE,
};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("direction (u, v) = ({u}, {v}) is outside the visible range")]
    InvisibleDirection { u: f64, v: f64 },
    #[error("reflection map was evaluated at {map} deg incidence, illumination arrives at {wave} deg")]
    IncidenceMismatch { map: f64, wave: f64 },
    #[error("pattern has no samples")]
    EmptyPattern,
    #[error("layout: {0}")]
    Layout(String),
}

/// The optimization variable: a `P × Q` grid of atoms.
///
/// Cell `(p, q)` is stored at `p·Q + q` and centred at
/// `x_p = (p - (P-1)/2) Δx`, `y_q = (q - (Q-1)/2) Δy`, `z = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmsLayout {
    pub p: usize,
    pub q: usize,
    pub cell: CellSpec,
    pub bounds: AtomBounds,
    pub descriptors: Vec<AtomDescriptor>,
}

impl EmsLayout {
    pub fn new(
        p: usize,
        q: usize,
        cell: CellSpec,
        bounds: AtomBounds,
        descriptors: Vec<AtomDescriptor>,
    ) -> Result<Self, FieldError> {
        let layout = Self { p, q, cell, bounds, descriptors };
        layout.validate()?;
        Ok(layout)
    }

    pub fn uniform(p: usize, q: usize, cell: CellSpec, bounds: AtomBounds, d: AtomDescriptor) -> Result<Self, FieldError> {
        Self::new(p, q, cell, bounds, vec![d; p * q])
    }

    /// Layout from a flat `[d1, d2, d1, d2, ...]` vector in cell order.
    pub fn from_flat(p: usize, q: usize, cell: CellSpec, bounds: AtomBounds, flat: &[f64]) -> Result<Self, FieldError> {
        if flat.len() != 2 * p * q {
            return Err(FieldError::Layout(format!("expected {} values, got {}", 2 * p * q, flat.len())));
        }
        let descriptors = flat.chunks_exact(2).map(|c| AtomDescriptor::new(c[0], c[1])).collect();
        Self::new(p, q, cell, bounds, descriptors)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.descriptors.iter().flat_map(|d| [d.d1, d.d2]).collect()
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.p == 0 || self.q == 0 {
            return Err(FieldError::Layout("P and Q must be at least 1".into()));
        }
        if self.descriptors.len() != self.p * self.q {
            return Err(FieldError::Layout(format!(
                "{} descriptors for a {}x{} grid",
                self.descriptors.len(),
                self.p,
                self.q
            )));
        }
        if let Some((k, d)) = self.descriptors.iter().enumerate().find(|(_, d)| !self.bounds.contains(d)) {
            return Err(FieldError::Layout(format!("cell {k} descriptor ({:.6e}, {:.6e}) out of bounds", d.d1, d.d2)));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        Geometry { p: self.p, q: self.q, pitch_x: self.cell.pitch_x, pitch_y: self.cell.pitch_y }
    }

    /// Aperture side along x, `P Δx`.
    pub fn side_x(&self) -> f64 {
        self.p as f64 * self.cell.pitch_x
    }

    pub fn save(&self, path: &Path) -> crate::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| crate::Error::io(path, e))
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        let layout: EmsLayout = serde_json::from_str(&text)?;
        layout.validate()?;
        Ok(layout)
    }
}

/// Grid shape and pitch, everything about a layout except the atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub p: usize,
    pub q: usize,
    pub pitch_x: f64,
    pub pitch_y: f64,
}

impl Geometry {
    pub fn x(&self, p: usize) -> f64 {
        (p as f64 - (self.p as f64 - 1.0) / 2.0) * self.pitch_x
    }

    pub fn y(&self, q: usize) -> f64 {
        (q as f64 - (self.q as f64 - 1.0) / 2.0) * self.pitch_y
    }

    pub fn center(&self, k: usize) -> (f64, f64) {
        (self.x(k / self.q), self.y(k % self.q))
    }

    pub fn cells(&self) -> usize {
        self.p * self.q
    }
}

/// Piecewise-constant reflection coefficients of one polarization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaMap {
    pub geometry: Geometry,
    pub polarization: Polarization,
    pub theta_inc: f64,
    pub values: Vec<Complex64>,
}

impl GammaMap {
    pub fn new(geometry: Geometry, polarization: Polarization, theta_inc: f64, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), geometry.cells());
        Self { geometry, polarization, theta_inc, values }
    }

    pub fn uniform(geometry: Geometry, polarization: Polarization, theta_inc: f64, gamma: Complex64) -> Self {
        Self::new(geometry, polarization, theta_inc, vec![gamma; geometry.cells()])
    }
}

/// Per-cell `Γ` read from a lookup table.
pub fn gamma_map(layout: &EmsLayout, lut: &GammaLut, pol: Polarization) -> crate::Result<GammaMap> {
    let values = layout
        .descriptors
        .iter()
        .map(|d| {
            let (te, tm) = lut_lookup(lut, d)?;
            Ok(match pol {
                Polarization::Te => te,
                Polarization::Tm => tm,
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;
    Ok(GammaMap::new(layout.geometry(), pol, lut.theta_inc, values))
}

/// Equivalent surface current of one cell, excluding the incident phase factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellCurrent {
    pub j: Vec3C,
}

pub fn cell_current(gamma: Complex64, wave: &PlaneWaveSpec) -> CellCurrent {
    let z = Vec3C::unit_z();
    let k_hat = specular_unit_vector(wave.incidence);
    let e_refl = polarization_unit_vector(wave).scale(gamma * wave.amplitude);
    let j_e = z.cross(&k_hat.cross(&e_refl)) * (1.0 / FREE_SPACE_IMPEDANCE);
    let j_m = -z.cross(&e_refl);
    let inner = z.cross(&j_e) * FREE_SPACE_IMPEDANCE + j_m;
    let mut j = z.cross(&inner);
    // ẑ × (anything) has no z component; drop rounding residue
    j.z = Complex64::new(0.0, 0.0);
    CellCurrent { j }
}

#[inline]
pub fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        1.0 - t * t / 6.0
    } else {
        t.sin() / t
    }
}

/// `∫_cell exp(j k0 [(u + u_i) x + (v + v_i) y]) dx dy` in closed form.
pub fn cell_radiation_integral(uv: Uv, wave: &PlaneWaveSpec, center: (f64, f64), dims: (f64, f64)) -> Complex64 {
    let k0 = wave.k0();
    let inc = wave.incidence_uv();
    let su = uv.u + inc.u;
    let sv = uv.v + inc.v;
    let amp = dims.0 * dims.1 * sinc(k0 * su * dims.0 / 2.0) * sinc(k0 * sv * dims.1 / 2.0);
    Complex64::from_polar(amp, k0 * (su * center.0 + sv * center.1))
}

fn check_incidence(gmap: &GammaMap, wave: &PlaneWaveSpec) -> Result<(), FieldError> {
    if (gmap.theta_inc - wave.incidence.theta_deg).abs() > 1e-9 {
        return Err(FieldError::IncidenceMismatch { map: gmap.theta_inc, wave: wave.incidence.theta_deg });
    }
    Ok(())
}

/// `Σ_pq Γ_pq I_pq(u, v)` using the separable structure of the cell integrals.
pub fn array_sum(values: &[Complex64], geometry: &Geometry, wave: &PlaneWaveSpec, uv: Uv) -> Complex64 {
    let k0 = wave.k0();
    let inc = wave.incidence_uv();
    let su = uv.u + inc.u;
    let sv = uv.v + inc.v;
    let amp = geometry.pitch_x
        * geometry.pitch_y
        * sinc(k0 * su * geometry.pitch_x / 2.0)
        * sinc(k0 * sv * geometry.pitch_y / 2.0);
    let col: Vec<Complex64> = (0..geometry.q).map(|q| Complex64::from_polar(1.0, k0 * sv * geometry.y(q))).collect();
    let mut total = Complex64::new(0.0, 0.0);
    for p in 0..geometry.p {
        let row_phase = Complex64::from_polar(1.0, k0 * su * geometry.x(p));
        let row = &values[p * geometry.q..(p + 1) * geometry.q];
        let s: Complex64 = row.iter().zip(&col).map(|(g, c)| g * c).sum();
        total += s * row_phase;
    }
    total * amp
}

/// Reflected far-field vector (without the `exp(-j k0 r)/r` spherical factor).
pub fn far_field_at(gmap: &GammaMap, wave: &PlaneWaveSpec, uv: Uv) -> Result<Vec3C, FieldError> {
    if !uv.is_visible() {
        return Err(FieldError::InvisibleDirection { u: uv.u, v: uv.v });
    }
    check_incidence(gmap, wave)?;
    let unit = cell_current(Complex64::new(1.0, 0.0), wave).j;
    let sum = array_sum(&gmap.values, &gmap.geometry, wave, uv);
    Ok(unit.scale(Complex64::new(0.0, wave.k0() / (4.0 * std::f64::consts::PI)) * sum))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternSample {
    pub uv: Uv,
    pub e: Vec3C,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PatternShape {
    /// Samples ordered along the cut.
    Cut { phi_deg: f64 },
    /// Samples of the visible nodes of an `n_u × n_v` grid; `nodes[k]` is the
    /// grid index of sample `k`.
    Grid { n_u: usize, n_v: usize, nodes: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarFieldPattern {
    pub polarization: Polarization,
    pub incidence_deg: f64,
    pub shape: PatternShape,
    pub samples: Vec<PatternSample>,
}

fn evaluate(gmap: &GammaMap, wave: &PlaneWaveSpec, dirs: &[Uv]) -> Result<Vec<PatternSample>, FieldError> {
    check_incidence(gmap, wave)?;
    dirs.par_iter()
        .map(|&uv| {
            let e = far_field_at(gmap, wave, uv)?;
            Ok(PatternSample { uv, e, magnitude: e.norm() })
        })
        .collect()
}

/// Samples `s ∈ [-1, 1]` uniformly along the `phi` cut, `(u, v) = s (cosφ, sinφ)`.
pub fn pattern_cut(gmap: &GammaMap, wave: &PlaneWaveSpec, phi_deg: f64, n: usize) -> Result<FarFieldPattern, FieldError> {
    assert!(n >= 2, "a cut needs at least two samples");
    let (sp, cp) = phi_deg.to_radians().sin_cos();
    let dirs: Vec<Uv> = (0..n)
        .map(|i| {
            let s = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            Uv::new(s * cp, s * sp)
        })
        .collect();
    Ok(FarFieldPattern {
        polarization: gmap.polarization,
        incidence_deg: wave.incidence.theta_deg,
        shape: PatternShape::Cut { phi_deg },
        samples: evaluate(gmap, wave, &dirs)?,
    })
}

/// Uniform `n_u × n_v` grid over `[-1, 1]²`, keeping the nodes inside the unit disk.
pub fn pattern_grid(gmap: &GammaMap, wave: &PlaneWaveSpec, n_u: usize, n_v: usize) -> Result<FarFieldPattern, FieldError> {
    assert!(n_u >= 2 && n_v >= 2, "a grid needs at least two nodes per axis");
    let mut nodes = Vec::new();
    let mut dirs = Vec::new();
    for i in 0..n_u {
        for j in 0..n_v {
            let uv = Uv::new(-1.0 + 2.0 * i as f64 / (n_u - 1) as f64, -1.0 + 2.0 * j as f64 / (n_v - 1) as f64);
            if uv.is_visible() {
                nodes.push((i, j));
                dirs.push(uv);
            }
        }
    }
    Ok(FarFieldPattern {
        polarization: gmap.polarization,
        incidence_deg: wave.incidence.theta_deg,
        shape: PatternShape::Grid { n_u, n_v, nodes },
        samples: evaluate(gmap, wave, &dirs)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakMetrics {
    pub uv_peak: Uv,
    pub magnitude_peak: f64,
    /// Highest secondary maximum relative to the peak, dB; `-inf` when there is none.
    #[serde(with = "db_sentinel")]
    pub sidelobe_level_db: f64,
}

/// JSON has no infinity; the "no sidelobe" sentinel is written as `null`.
mod db_sentinel {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

impl FarFieldPattern {
    /// Neighbour lists in sample-index space.
    fn neighbours(&self) -> Vec<Vec<usize>> {
        let n = self.samples.len();
        match &self.shape {
            PatternShape::Cut { .. } => (0..n)
                .map(|i| {
                    let mut v = Vec::with_capacity(2);
                    if i > 0 {
                        v.push(i - 1);
                    }
                    if i + 1 < n {
                        v.push(i + 1);
                    }
                    v
                })
                .collect(),
            PatternShape::Grid { n_u, n_v, nodes } => {
                let mut index = vec![usize::MAX; n_u * n_v];
                for (k, &(i, j)) in nodes.iter().enumerate() {
                    index[i * n_v + j] = k;
                }
                nodes
                    .iter()
                    .map(|&(i, j)| {
                        let mut v = Vec::with_capacity(8);
                        for di in -1i64..=1 {
                            for dj in -1i64..=1 {
                                if di == 0 && dj == 0 {
                                    continue;
                                }
                                let (a, b) = (i as i64 + di, j as i64 + dj);
                                if a < 0 || b < 0 || a >= *n_u as i64 || b >= *n_v as i64 {
                                    continue;
                                }
                                let k = index[a as usize * n_v + b as usize];
                                if k != usize::MAX {
                                    v.push(k);
                                }
                            }
                        }
                        v
                    })
                    .collect()
            }
        }
    }

    pub fn peak_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, s) in self.samples.iter().enumerate() {
            if best.is_none_or(|b| s.magnitude > self.samples[b].magnitude) {
                best = Some(i);
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> crate::Result<()> {
        write_pattern_csv(writer, self)
    }
}

pub fn peak_metrics(pattern: &FarFieldPattern) -> Result<PeakMetrics, FieldError> {
    let peak = pattern.peak_index().ok_or(FieldError::EmptyPattern)?;
    let mags: Vec<f64> = pattern.samples.iter().map(|s| s.magnitude).collect();
    let top = mags[peak];
    let neighbours = pattern.neighbours();

    // main lobe: connected region around the peak above -3 dB
    let threshold = top * 10f64.powf(-3.0 / 20.0);
    let mut in_main = vec![false; mags.len()];
    let mut stack = vec![peak];
    in_main[peak] = true;
    while let Some(k) = stack.pop() {
        for &m in &neighbours[k] {
            if !in_main[m] && mags[m] >= threshold {
                in_main[m] = true;
                stack.push(m);
            }
        }
    }

    let mut side = f64::NEG_INFINITY;
    for (k, nb) in neighbours.iter().enumerate() {
        if in_main[k] || mags[k] <= 0.0 {
            continue;
        }
        let is_max = nb.iter().all(|&m| mags[k] >= mags[m]) && nb.iter().any(|&m| mags[k] > mags[m]);
        if is_max {
            side = side.max(mags[k]);
        }
    }
    let sidelobe_level_db = if side.is_finite() && top > 0.0 { 20.0 * (side / top).log10() } else { f64::NEG_INFINITY };
    Ok(PeakMetrics { uv_peak: pattern.samples[peak].uv, magnitude_peak: top, sidelobe_level_db })
}

pub const PATTERN_CSV_HEADER: [&str; 10] =
    ["u", "v", "re_Ex", "im_Ex", "re_Ey", "im_Ey", "re_Ez", "im_Ez", "mag", "mag_db_norm"];

/// Pattern CSV; `mag_db_norm` is relative to the pattern peak.
pub fn write_pattern_csv<W: Write>(writer: W, pattern: &FarFieldPattern) -> crate::Result<()> {
    let top = pattern.peak_index().map(|i| pattern.samples[i].magnitude).unwrap_or(0.0);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PATTERN_CSV_HEADER)?;
    for s in &pattern.samples {
        let db = if top > 0.0 { 20.0 * (s.magnitude / top).log10() } else { f64::NEG_INFINITY };
        let mut row = vec![s.uv.u, s.uv.v];
        for c in s.e.components() {
            row.extend([c.re, c.im]);
        }
        row.extend([s.magnitude, db]);
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush().map_err(|e| crate::Error::Format(e.to_string()))?;
    Ok(())
}
