//! Plane-wave geometry: wave vectors, polarization bases and direction cosines.
//!
//! Angles cross every public boundary in degrees and are converted to radians
//! here. A negative `theta` at `phi = 0` addresses the `phi = 180` half-plane,
//! which is how every pattern cut in this crate is parameterized.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Free-space wave impedance, ohms.
pub const FREE_SPACE_IMPEDANCE: f64 = 376.730;

/// Free-space wavenumber for a frequency in Hz.
pub fn wavenumber(frequency: f64) -> f64 {
    2.0 * std::f64::consts::PI * frequency / SPEED_OF_LIGHT
}

/// Free-space wavelength for a frequency in Hz.
pub fn wavelength(frequency: f64) -> f64 {
    SPEED_OF_LIGHT / frequency
}

/// A propagation or observation direction, angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub theta_deg: f64,
    #[serde(default)]
    pub phi_deg: f64,
}

impl Direction {
    pub fn new(theta_deg: f64, phi_deg: f64) -> Self {
        Self { theta_deg, phi_deg }
    }

    /// Direction in the `phi = 0` cut.
    pub fn in_cut(theta_deg: f64) -> Self {
        Self::new(theta_deg, 0.0)
    }

    pub fn uv(&self) -> Uv {
        to_direction_cosines(*self)
    }
}

/// Direction cosines `(u, v)`; the visible range is the closed unit disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uv {
    pub u: f64,
    pub v: f64,
}

impl Uv {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_visible(&self) -> bool {
        self.u * self.u + self.v * self.v <= 1.0 + 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    #[serde(rename = "TE")]
    Te,
    #[serde(rename = "TM")]
    Tm,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::Te, Polarization::Tm];

    pub fn label(self) -> &'static str {
        match self {
            Polarization::Te => "TE",
            Polarization::Tm => "TM",
        }
    }
}

impl std::fmt::Display for Polarization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One polarized incident plane wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneWaveSpec {
    pub polarization: Polarization,
    pub incidence: Direction,
    /// Complex field coefficient, V/m.
    pub amplitude: Complex64,
    /// Hz.
    pub frequency: f64,
}

impl PlaneWaveSpec {
    pub fn new(polarization: Polarization, incidence: Direction, amplitude: Complex64, frequency: f64) -> Self {
        Self { polarization, incidence, amplitude, frequency }
    }

    /// Unit-amplitude wave.
    pub fn unit(polarization: Polarization, incidence: Direction, frequency: f64) -> Self {
        Self::new(polarization, incidence, Complex64::new(1.0, 0.0), frequency)
    }

    pub fn k0(&self) -> f64 {
        wavenumber(self.frequency)
    }

    pub fn is_valid(&self) -> bool {
        self.frequency > 0.0
            && self.frequency.is_finite()
            && self.amplitude.re.is_finite()
            && self.amplitude.im.is_finite()
            && self.incidence.theta_deg.is_finite()
            && self.incidence.phi_deg.is_finite()
    }

    /// Direction cosines of the incidence direction.
    pub fn incidence_uv(&self) -> Uv {
        to_direction_cosines(self.incidence)
    }
}

/// A 3-vector with complex components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3C {
    pub x: Complex64,
    pub y: Complex64,
    pub z: Complex64,
}

impl Vec3C {
    pub const ZERO: Vec3C = Vec3C {
        x: Complex64 { re: 0.0, im: 0.0 },
        y: Complex64 { re: 0.0, im: 0.0 },
        z: Complex64 { re: 0.0, im: 0.0 },
    };

    pub fn new(x: Complex64, y: Complex64, z: Complex64) -> Self {
        Self { x, y, z }
    }

    pub fn real(x: f64, y: f64, z: f64) -> Self {
        Self::new(x.into(), y.into(), z.into())
    }

    pub fn unit_z() -> Self {
        Self::real(0.0, 0.0, 1.0)
    }

    pub fn cross(&self, o: &Vec3C) -> Vec3C {
        Vec3C {
            x: self.y * o.z - self.z * o.y,
            y: self.z * o.x - self.x * o.z,
            z: self.x * o.y - self.y * o.x,
        }
    }

    /// Bilinear (non-conjugating) dot product.
    pub fn dot(&self, o: &Vec3C) -> Complex64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Squared complex vector norm, sum of |component|².
    pub fn norm_sqr(&self) -> f64 {
        self.x.norm_sqr() + self.y.norm_sqr() + self.z.norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: Complex64) -> Vec3C {
        Vec3C { x: self.x * s, y: self.y * s, z: self.z * s }
    }

    pub fn components(&self) -> [Complex64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

impl Add for Vec3C {
    type Output = Vec3C;
    fn add(self, o: Vec3C) -> Vec3C {
        Vec3C { x: self.x + o.x, y: self.y + o.y, z: self.z + o.z }
    }
}

impl Sub for Vec3C {
    type Output = Vec3C;
    fn sub(self, o: Vec3C) -> Vec3C {
        Vec3C { x: self.x - o.x, y: self.y - o.y, z: self.z - o.z }
    }
}

impl Neg for Vec3C {
    type Output = Vec3C;
    fn neg(self) -> Vec3C {
        Vec3C { x: -self.x, y: -self.y, z: -self.z }
    }
}

impl Mul<f64> for Vec3C {
    type Output = Vec3C;
    fn mul(self, s: f64) -> Vec3C {
        Vec3C { x: self.x * s, y: self.y * s, z: self.z * s }
    }
}

impl Mul<Complex64> for Vec3C {
    type Output = Vec3C;
    fn mul(self, s: Complex64) -> Vec3C {
        self.scale(s)
    }
}

fn radians(d: Direction) -> (f64, f64) {
    (d.theta_deg.to_radians(), d.phi_deg.to_radians())
}

/// Incident wave vector `-k0 [sinθ cosφ, sinθ sinφ, cosθ]`, rad/m.
pub fn wave_vector(spec: &PlaneWaveSpec) -> Vec3C {
    let k0 = spec.k0();
    let (t, p) = radians(spec.incidence);
    Vec3C::real(-k0 * t.sin() * p.cos(), -k0 * t.sin() * p.sin(), -k0 * t.cos())
}

/// Unit vector along the incident wave vector.
pub fn incident_unit_vector(incidence: Direction) -> Vec3C {
    let (t, p) = radians(incidence);
    Vec3C::real(-t.sin() * p.cos(), -t.sin() * p.sin(), -t.cos())
}

/// Unit vector of the specularly reflected wave (incident vector with `z` flipped).
pub fn specular_unit_vector(incidence: Direction) -> Vec3C {
    let (t, p) = radians(incidence);
    Vec3C::real(-t.sin() * p.cos(), -t.sin() * p.sin(), t.cos())
}

/// TE/TM field unit vector of the incident wave.
///
/// TE is `(k̂ × ẑ)/|k̂ × ẑ|`; at normal incidence the limit taken at fixed `phi`
/// is used, which is `(-sinφ, cosφ, 0)` (`ŷ` for `phi = 0`). TM is `k̂ × ê_TE`.
pub fn polarization_unit_vector(spec: &PlaneWaveSpec) -> Vec3C {
    let (_, p) = radians(spec.incidence);
    let k_hat = incident_unit_vector(spec.incidence);
    let cross = k_hat.cross(&Vec3C::unit_z());
    let n = cross.norm();
    let e_te = if n > 1e-12 {
        cross * (1.0 / n)
    } else {
        Vec3C::real(-p.sin(), p.cos(), 0.0)
    };
    match spec.polarization {
        Polarization::Te => e_te,
        Polarization::Tm => k_hat.cross(&e_te),
    }
}

/// `u = sinθ cosφ`, `v = sinθ sinφ`.
pub fn to_direction_cosines(d: Direction) -> Uv {
    let (t, p) = radians(d);
    Uv { u: t.sin() * p.cos(), v: t.sin() * p.sin() }
}

/// Mirror direction of an incidence: `(-u_inc, -v_inc)`.
pub fn specular_direction(incidence: Direction) -> Uv {
    let uv = to_direction_cosines(incidence);
    Uv { u: -uv.u, v: -uv.v }
}
