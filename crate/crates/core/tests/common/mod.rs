//! Independent reference computations shared by the integration tests. Nothing
//! here calls into the crate's field or current code.

#![allow(dead_code)]

use num_complex::Complex64;
use std::f64::consts::PI;

pub const C0: f64 = 299_792_458.0;
pub const ETA0: f64 = 376.730;

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Equivalent current of a cell with `Γ = 1` and unit incident amplitude.
/// `te` selects the polarization; angles in degrees.
pub fn unit_current(te: bool, theta_deg: f64, phi_deg: f64) -> [f64; 3] {
    let (t, p) = (theta_deg.to_radians(), phi_deg.to_radians());
    let k_inc = [-t.sin() * p.cos(), -t.sin() * p.sin(), -t.cos()];
    let z = [0.0, 0.0, 1.0];
    let c = cross(k_inc, z);
    let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    let e_te = if n > 1e-12 { scale(c, 1.0 / n) } else { [-p.sin(), p.cos(), 0.0] };
    let e = if te { e_te } else { cross(k_inc, e_te) };
    // specular reflection flips only the z component of the incident direction
    let k_ref = [k_inc[0], k_inc[1], t.cos()];
    let j_e = scale(cross(z, cross(k_ref, e)), 1.0 / ETA0);
    let j_m = scale(cross(z, e), -1.0);
    cross(z, add(scale(cross(z, j_e), ETA0), j_m))
}

pub fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// `∫∫ exp(j k0 (a x + b y))` over a `dx × dy` cell centred at `(cx, cy)`.
pub fn cell_integral_quadrature(k0: f64, a: f64, b: f64, cx: f64, cy: f64, dx: f64, dy: f64, gl: &[(f64, f64)]) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for &(xi, wi) in gl {
        let x = cx + 0.5 * dx * xi;
        for &(yj, wj) in gl {
            let y = cy + 0.5 * dy * yj;
            s += Complex64::from_polar(wi * wj, k0 * (a * x + b * y));
        }
    }
    s * (0.25 * dx * dy)
}

pub struct Aperture {
    pub p: usize,
    pub q: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Aperture {
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 - (self.p as f64 - 1.0) / 2.0) * self.dx, (j as f64 - (self.q as f64 - 1.0) / 2.0) * self.dy)
    }
}

/// Far field by a direct double sum over cells, each integrated numerically.
/// `gammas` is in `p·Q + q` order.
#[allow(clippy::too_many_arguments)]
pub fn brute_field(
    gammas: &[Complex64],
    ap: &Aperture,
    freq: f64,
    te: bool,
    theta_inc: f64,
    phi_inc: f64,
    amplitude: Complex64,
    u: f64,
    v: f64,
) -> [Complex64; 3] {
    let k0 = 2.0 * PI * freq / C0;
    let (t, p) = (theta_inc.to_radians(), phi_inc.to_radians());
    let (ui, vi) = (t.sin() * p.cos(), t.sin() * p.sin());
    let j = unit_current(te, theta_inc, phi_inc);
    let gl = gauss_legendre(16);
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..ap.p {
        for b in 0..ap.q {
            let (cx, cy) = ap.center(a, b);
            acc += gammas[a * ap.q + b] * cell_integral_quadrature(k0, u + ui, v + vi, cx, cy, ap.dx, ap.dy, &gl);
        }
    }
    let pre = Complex64::new(0.0, k0 / (4.0 * PI)) * amplitude * acc;
    [pre * j[0], pre * j[1], pre * j[2]]
}

/// Field magnitude if every cell contribution arrived in phase at `(u, v)`.
#[allow(clippy::too_many_arguments)]
pub fn coherent_level(gamma_mags: &[f64], ap: &Aperture, freq: f64, te: bool, theta_inc: f64, phi_inc: f64, u: f64, v: f64) -> f64 {
    let k0 = 2.0 * PI * freq / C0;
    let (t, p) = (theta_inc.to_radians(), phi_inc.to_radians());
    let (ui, vi) = (t.sin() * p.cos(), t.sin() * p.sin());
    let gl = gauss_legendre(16);
    let mut acc = 0.0;
    for a in 0..ap.p {
        for b in 0..ap.q {
            let (cx, cy) = ap.center(a, b);
            acc += gamma_mags[a * ap.q + b] * cell_integral_quadrature(k0, u + ui, v + vi, cx, cy, ap.dx, ap.dy, &gl).norm();
        }
    }
    k0 / (4.0 * PI) * norm3(unit_current(te, theta_inc, phi_inc)) * acc
}

pub fn vec_norm(e: &[Complex64; 3]) -> f64 {
    e.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}
