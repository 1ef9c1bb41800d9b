use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GammaTwin, SurrogateError};
use crate::atoms::{AtomBounds, AtomDescriptor};
use crate::wavegeom::Polarization;

/// Default nodes per descriptor axis.
pub const DEFAULT_RESOLUTION: usize = 128;

/// Twin predictions tabulated on a uniform `(d1, d2)` grid at one incidence angle.
///
/// Node `(i, j)` sits at `d1 = lo + i·h`, `d2 = lo + j·h` with
/// `h = (hi - lo) / (resolution - 1)` and is stored at `i·resolution + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaLut {
    pub theta_inc: f64,
    pub resolution: usize,
    pub bounds: AtomBounds,
    pub te: Vec<Complex64>,
    pub tm: Vec<Complex64>,
}

pub fn compile_lut(twin: &GammaTwin, theta_inc: f64, resolution: usize) -> Result<GammaLut, SurrogateError> {
    if resolution < 16 {
        return Err(SurrogateError::Resolution(resolution));
    }
    let b = twin.bounds;
    let nodes: Vec<(Complex64, Complex64)> = (0..resolution * resolution)
        .into_par_iter()
        .map(|k| twin.predict_both(&GammaLut::node_at(b, resolution, k / resolution, k % resolution), theta_inc))
        .collect::<Result<_, _>>()?;
    let (te, tm) = nodes.into_iter().unzip();
    Ok(GammaLut { theta_inc, resolution, bounds: b, te, tm })
}

/// `(Γ_TE, Γ_TM)` by bilinear interpolation.
pub fn lut_lookup(lut: &GammaLut, d: &AtomDescriptor) -> Result<(Complex64, Complex64), SurrogateError> {
    if !lut.bounds.contains(d) {
        return Err(SurrogateError::OutOfBounds { d1: d.d1, d2: d.d2, theta_inc: lut.theta_inc });
    }
    Ok(lut.lookup_unchecked(d.d1, d.d2))
}

impl GammaLut {
    pub fn node_at(bounds: AtomBounds, resolution: usize, i: usize, j: usize) -> AtomDescriptor {
        let h = bounds.width() / (resolution - 1) as f64;
        let at = |k: usize| if k + 1 == resolution { bounds.hi } else { bounds.lo + k as f64 * h };
        AtomDescriptor::new(at(i), at(j))
    }

    pub fn node(&self, i: usize, j: usize) -> AtomDescriptor {
        Self::node_at(self.bounds, self.resolution, i, j)
    }

    pub fn lookup(&self, d: &AtomDescriptor, pol: Polarization) -> Result<Complex64, SurrogateError> {
        let (te, tm) = lut_lookup(self, d)?;
        Ok(match pol {
            Polarization::Te => te,
            Polarization::Tm => tm,
        })
    }

    #[inline]
    fn cell(&self, x: f64) -> (usize, f64) {
        let last = self.resolution - 1;
        let s = ((x - self.bounds.lo) / self.bounds.width() * last as f64).clamp(0.0, last as f64);
        let i = (s.floor() as usize).min(last - 1);
        (i, s - i as f64)
    }

    /// Bilinear lookup without the bounds check; inputs outside the box are clamped.
    #[inline]
    pub fn lookup_unchecked(&self, d1: f64, d2: f64) -> (Complex64, Complex64) {
        let (i, tx) = self.cell(d1);
        let (j, ty) = self.cell(d2);
        let n = self.resolution;
        let k00 = i * n + j;
        let k10 = k00 + n;
        let w00 = (1.0 - tx) * (1.0 - ty);
        let w01 = (1.0 - tx) * ty;
        let w10 = tx * (1.0 - ty);
        let w11 = tx * ty;
        let mix = |v: &[Complex64]| v[k00] * w00 + v[k00 + 1] * w01 + v[k10] * w10 + v[k10 + 1] * w11;
        (mix(&self.te), mix(&self.tm))
    }

    pub fn save(&self, path: &Path) -> crate::Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| crate::Error::io(path, e))
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
