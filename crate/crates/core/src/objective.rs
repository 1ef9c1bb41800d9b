//! The two-polarization cost `Φ(D) = Σ_ψ α_ψ / |E_ψ(target_ψ | D)|²`.
//!
//! The far field at a fixed direction is linear in the per-cell coefficients,
//! `E_ψ = (j k0 / 4π) J_unit Σ_pq Γ_pq I_pq(target)`, so everything but `Γ` is
//! tabulated once per run and a candidate costs `P·Q` lookups and
//! multiply-adds per polarization.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fields::{cell_current, cell_radiation_integral, far_field_at, gamma_map, EmsLayout, Geometry};
use crate::surrogate::GammaLut;
use crate::wavegeom::{to_direction_cosines, Direction, PlaneWaveSpec, Polarization, Vec3C};

/// Target, weight and illumination of one polarization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolTarget {
    pub direction: Direction,
    pub weight: f64,
    pub illumination: PlaneWaveSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignTargets {
    pub te: PolTarget,
    pub tm: PolTarget,
}

impl DesignTargets {
    pub fn get(&self, pol: Polarization) -> &PolTarget {
        match pol {
            Polarization::Te => &self.te,
            Polarization::Tm => &self.tm,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.te.weight > 0.0 || self.tm.weight > 0.0) {
            return Err("at least one polarization weight must be positive".into());
        }
        for pol in Polarization::BOTH {
            let t = self.get(pol);
            let name = pol.label();
            if !(t.weight >= 0.0 && t.weight.is_finite()) {
                return Err(format!("{name} weight must be finite and non-negative, got {}", t.weight));
            }
            if t.illumination.polarization != pol {
                return Err(format!("{name} illumination carries the wrong polarization"));
            }
            if !t.illumination.is_valid() {
                return Err(format!("{name} illumination is not a valid plane wave"));
            }
            if !to_direction_cosines(t.direction).is_visible() || t.direction.theta_deg.abs() > 90.0 {
                return Err(format!("{name} target direction is outside the visible range"));
            }
        }
        Ok(())
    }
}

/// Per-cell lookup tables, one per polarization's incidence angle. When both
/// polarizations share an incidence angle the same table serves both.
#[derive(Debug, Clone)]
pub struct LutPair {
    pub te: Arc<GammaLut>,
    pub tm: Arc<GammaLut>,
}

impl LutPair {
    pub fn shared(lut: GammaLut) -> Self {
        let lut = Arc::new(lut);
        Self { te: lut.clone(), tm: lut }
    }

    pub fn get(&self, pol: Polarization) -> &GammaLut {
        match pol {
            Polarization::Te => &self.te,
            Polarization::Tm => &self.tm,
        }
    }

    fn is_shared(&self) -> bool {
        Arc::ptr_eq(&self.te, &self.tm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringEntry {
    pub weight: f64,
    /// `(j k0 / 4π) J` for `Γ = 1`.
    pub field_per_unit: Vec3C,
    /// `I_pq` at the target direction, in cell order.
    pub factors: Vec<Complex64>,
}

impl SteeringEntry {
    pub fn field(&self, sum: Complex64) -> Vec3C {
        self.field_per_unit.scale(sum)
    }
}

/// `None` for a polarization with zero weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringTable {
    pub te: Option<SteeringEntry>,
    pub tm: Option<SteeringEntry>,
}

impl SteeringTable {
    pub fn get(&self, pol: Polarization) -> Option<&SteeringEntry> {
        match pol {
            Polarization::Te => self.te.as_ref(),
            Polarization::Tm => self.tm.as_ref(),
        }
    }
}

pub fn precompute_steering(targets: &DesignTargets, geometry: &Geometry) -> SteeringTable {
    let entry = |t: &PolTarget| {
        if t.weight == 0.0 {
            return None;
        }
        let wave = &t.illumination;
        let uv = to_direction_cosines(t.direction);
        let unit = cell_current(Complex64::new(1.0, 0.0), wave).j;
        let factors = (0..geometry.cells())
            .map(|k| cell_radiation_integral(uv, wave, geometry.center(k), (geometry.pitch_x, geometry.pitch_y)))
            .collect();
        Some(SteeringEntry {
            weight: t.weight,
            field_per_unit: unit.scale(Complex64::new(0.0, wave.k0() / (4.0 * std::f64::consts::PI))),
            factors,
        })
    };
    SteeringTable { te: entry(&targets.te), tm: entry(&targets.tm) }
}

/// Reciprocal-power cost from the target-field magnitudes; `+inf` when a
/// weighted polarization radiates nothing towards its target.
pub fn cost_from_powers(weights: [f64; 2], powers: [f64; 2]) -> f64 {
    let mut phi = 0.0;
    for (a, e2) in weights.into_iter().zip(powers) {
        if a == 0.0 {
            continue;
        }
        if !(e2 > 0.0) {
            return f64::INFINITY;
        }
        phi += a / e2;
    }
    phi
}

/// Cost of a flat `[d1, d2, ...]` candidate. Descriptors must lie in the LUT box.
pub fn cost(x: &[f64], targets: &DesignTargets, luts: &LutPair, steering: &SteeringTable) -> f64 {
    let sums = target_sums(x, luts, steering);
    let mut powers = [0.0; 2];
    for (i, pol) in Polarization::BOTH.into_iter().enumerate() {
        if let Some(s) = steering.get(pol) {
            powers[i] = s.field(sums[i]).norm_sqr();
        }
    }
    cost_from_powers([targets.te.weight, targets.tm.weight], powers)
}

/// `Σ_pq Γ_pq I_pq(target)` per polarization.
pub fn target_sums(x: &[f64], luts: &LutPair, steering: &SteeringTable) -> [Complex64; 2] {
    let zero = Complex64::new(0.0, 0.0);
    let mut sums = [zero; 2];
    let (te, tm) = (steering.te.as_ref(), steering.tm.as_ref());
    if luts.is_shared() {
        for (k, d) in x.chunks_exact(2).enumerate() {
            debug_assert!(luts.te.bounds.contains_value(d[0]) && luts.te.bounds.contains_value(d[1]));
            let (g_te, g_tm) = luts.te.lookup_unchecked(d[0], d[1]);
            if let Some(s) = te {
                sums[0] += g_te * s.factors[k];
            }
            if let Some(s) = tm {
                sums[1] += g_tm * s.factors[k];
            }
        }
    } else {
        for (k, d) in x.chunks_exact(2).enumerate() {
            if let Some(s) = te {
                sums[0] += luts.te.lookup_unchecked(d[0], d[1]).0 * s.factors[k];
            }
            if let Some(s) = tm {
                sums[1] += luts.tm.lookup_unchecked(d[0], d[1]).1 * s.factors[k];
            }
        }
    }
    sums
}

/// Field at each polarization's target through the full pattern evaluator.
pub fn target_fields(layout: &EmsLayout, targets: &DesignTargets, luts: &LutPair) -> crate::Result<[Vec3C; 2]> {
    let mut out = [Vec3C::ZERO; 2];
    for (i, pol) in Polarization::BOTH.into_iter().enumerate() {
        let t = targets.get(pol);
        let map = gamma_map(layout, luts.get(pol), pol)?;
        out[i] = far_field_at(&map, &t.illumination, to_direction_cosines(t.direction))?;
    }
    Ok(out)
}

/// The same cost as [`cost`], computed through [`far_field_at`] without any tabulation.
pub fn cost_full(layout: &EmsLayout, targets: &DesignTargets, luts: &LutPair) -> crate::Result<f64> {
    let fields = target_fields(layout, targets, luts)?;
    Ok(cost_from_powers([targets.te.weight, targets.tm.weight], fields.map(|e| e.norm_sqr())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::{characterize, lhs_sample, AtomBounds, AtomDescriptor, CellSpec, SyntheticAtom};
    use crate::surrogate::{compile_lut, GammaTwin, KrigingOptions};
    use rand::{Rng, SeedableRng};

    const F0: f64 = 28e9;

    fn targets(te: (f64, f64, f64), tm: (f64, f64, f64)) -> DesignTargets {
        let mk = |pol, (inc, refl, w): (f64, f64, f64)| PolTarget {
            direction: Direction::in_cut(refl),
            weight: w,
            illumination: PlaneWaveSpec::unit(pol, Direction::in_cut(inc), F0),
        };
        DesignTargets { te: mk(Polarization::Te, te), tm: mk(Polarization::Tm, tm) }
    }

    fn luts(theta: f64) -> (CellSpec, AtomBounds, LutPair) {
        let cell = CellSpec::at_frequency(F0);
        let atom = SyntheticAtom::for_cell(&cell);
        let s = characterize(&atom, &lhs_sample(atom.bounds, &[theta], 120, 3)).unwrap();
        let twin = GammaTwin::train_in_box(&s, atom.bounds, (theta, theta), &KrigingOptions::default()).unwrap();
        (cell, atom.bounds, LutPair::shared(compile_lut(&twin, theta, 32).unwrap()))
    }

    fn random_flat(rng: &mut impl Rng, b: AtomBounds, n: usize) -> Vec<f64> {
        (0..2 * n).map(|_| rng.random_range(b.lo..=b.hi)).collect()
    }

    #[test]
    fn arithmetic_of_the_formula() {
        assert_eq!(cost_from_powers([1.0, 1.0], [4.0, 2.0]), 0.75);
        assert_eq!(cost_from_powers([1.0, 0.0], [4.0, 0.0]), 0.25);
        assert_eq!(cost_from_powers([1.0, 1.0], [4.0, 0.0]), f64::INFINITY);
        assert_eq!(cost_from_powers([0.0, 1.0], [0.0, 8.0]), 0.125);
    }

    #[test]
    fn zero_weight_has_no_table_entry() {
        let t = targets((0.0, 30.0, 1.0), (0.0, -40.0, 0.0));
        let g = Geometry { p: 3, q: 2, pitch_x: 4e-3, pitch_y: 4e-3 };
        let s = precompute_steering(&t, &g);
        assert!(s.te.is_some() && s.tm.is_none());
        assert_eq!(s.te.as_ref().unwrap().factors.len(), 6);
        assert_eq!(precompute_steering(&t, &g), s);
    }

    #[test]
    fn table_path_matches_full_path() {
        let (cell, b, lp) = luts(0.0);
        let t = targets((0.0, 30.0, 1.0), (0.0, -40.0, 0.7));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let layout0 = EmsLayout::uniform(6, 5, cell, b, AtomDescriptor::new(b.mid(), b.mid())).unwrap();
        let steer = precompute_steering(&t, &layout0.geometry());
        for _ in 0..10 {
            let x = random_flat(&mut rng, b, 30);
            let layout = EmsLayout::from_flat(6, 5, cell, b, &x).unwrap();
            let fast = cost(&x, &t, &lp, &steer);
            let slow = cost_full(&layout, &t, &lp).unwrap();
            assert!((fast - slow).abs() <= 1e-10 * slow, "{fast} vs {slow}");
        }
    }

    #[test]
    fn separate_luts_match_full_path() {
        let (cell, b, te) = luts(-30.0);
        let (_, _, tm) = luts(40.0);
        let lp = LutPair { te: te.te, tm: tm.tm };
        let t = targets((-30.0, 20.0, 1.0), (40.0, -20.0, 1.0));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x = random_flat(&mut rng, b, 16);
        let layout = EmsLayout::from_flat(4, 4, cell, b, &x).unwrap();
        let steer = precompute_steering(&t, &layout.geometry());
        let fast = cost(&x, &t, &lp, &steer);
        let slow = cost_full(&layout, &t, &lp).unwrap();
        assert!((fast - slow).abs() <= 1e-10 * slow);
    }

    #[test]
    fn doubling_amplitudes_quarters_cost() {
        let (cell, b, lp) = luts(0.0);
        let t1 = targets((0.0, 30.0, 1.0), (0.0, -40.0, 1.0));
        let mut t2 = t1;
        t2.te.illumination.amplitude *= 2.0;
        t2.tm.illumination.amplitude *= 2.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = random_flat(&mut rng, b, 25);
        let g = EmsLayout::from_flat(5, 5, cell, b, &x).unwrap().geometry();
        let c1 = cost(&x, &t1, &lp, &precompute_steering(&t1, &g));
        let c2 = cost(&x, &t2, &lp, &precompute_steering(&t2, &g));
        assert!((c1 / 4.0 - c2).abs() <= 1e-14 * c1);
    }

    #[test]
    fn conjugated_layout_beats_random_layouts() {
        let (cell, b, lp) = luts(0.0);
        let t = targets((0.0, 30.0, 1.0), (0.0, -40.0, 0.0));
        let geometry = Geometry { p: 20, q: 20, pitch_x: cell.pitch_x, pitch_y: cell.pitch_y };
        let steer = precompute_steering(&t, &geometry);
        // ideal phase per cell; pick the d2 value whose TE phase is closest
        let k0 = t.te.illumination.k0();
        let ur = to_direction_cosines(t.te.direction).u;
        let cand: Vec<(f64, f64)> = (0..400)
            .map(|i| {
                let d2 = b.lo + b.width() * i as f64 / 399.0;
                (d2, lp.te.lookup_unchecked(b.mid(), d2).0.arg())
            })
            .collect();
        let mut x = Vec::new();
        for k in 0..geometry.cells() {
            let (cx, _) = geometry.center(k);
            let want = -k0 * ur * cx;
            let best = cand
                .iter()
                .min_by(|a, b| {
                    let ea = (Complex64::from_polar(1.0, a.1) - Complex64::from_polar(1.0, want)).norm();
                    let eb = (Complex64::from_polar(1.0, b.1) - Complex64::from_polar(1.0, want)).norm();
                    ea.total_cmp(&eb)
                })
                .unwrap();
            x.extend([b.mid(), best.0]);
        }
        let conj = cost(&x, &t, &lp, &steer);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let r = random_flat(&mut rng, b, 400);
            assert!(conj < cost(&r, &t, &lp, &steer));
        }
    }

    #[test]
    fn validation_rejects_bad_targets() {
        assert!(targets((0.0, 30.0, 1.0), (0.0, -40.0, 1.0)).validate().is_ok());
        assert!(targets((0.0, 30.0, 0.0), (0.0, -40.0, 0.0)).validate().is_err());
        assert!(targets((0.0, 30.0, -1.0), (0.0, -40.0, 1.0)).validate().is_err());
        assert!(targets((0.0, 95.0, 1.0), (0.0, -40.0, 1.0)).validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn cost_decreases_with_target_power(e_te in 1e-6f64..1e3, e_tm in 1e-6f64..1e3, f in 1.0001f64..10.0) {
            let a = cost_from_powers([1.0, 1.0], [e_te, e_tm]);
            let b = cost_from_powers([1.0, 1.0], [e_te * f, e_tm]);
            proptest::prop_assert!(b < a);
        }
    }
}
