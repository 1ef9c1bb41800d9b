mod common;

use mpskin::atoms::{characterize, lhs_sample, AtomDescriptor};
use mpskin::fields::{far_field_at, gamma_map, pattern_cut, peak_metrics, Geometry};
use mpskin::pipeline::conjugate_phase;
use mpskin::surrogate::{compile_lut, KrigingOptions};
use mpskin::{CellSpec, Direction, EmsLayout, GammaMap, GammaTwin, PlaneWaveSpec, Polarization, SyntheticAtom, Uv};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_field, coherent_level, gauss_legendre, vec_norm, Aperture};

const F0: f64 = 28e9;

fn geometry(n: usize) -> Geometry {
    let c = CellSpec::at_frequency(F0);
    Geometry { p: n, q: n, pitch_x: c.pitch_x, pitch_y: c.pitch_y }
}

fn aperture(g: &Geometry) -> Aperture {
    Aperture { p: g.p, q: g.q, dx: g.pitch_x, dy: g.pitch_y }
}

#[test]
fn quadrature_oracle_integrates_polynomials() {
    let gl = gauss_legendre(8);
    let s: f64 = gl.iter().map(|(x, w)| w * x.powi(14)).sum();
    assert!((s - 2.0 / 15.0).abs() < 1e-14);
}

#[test]
fn broadside_sidelobe_matches_direct_sum() {
    let g = geometry(20);
    let wave = PlaneWaveSpec::unit(Polarization::Te, Direction::in_cut(0.0), F0);
    let map = GammaMap::uniform(g, Polarization::Te, 0.0, Complex64::new(1.0, 0.0));
    let cut = pattern_cut(&map, &wave, 0.0, 721).unwrap();
    let m = peak_metrics(&cut).unwrap();

    let ap = aperture(&g);
    let mags: Vec<f64> = cut
        .samples
        .iter()
        .map(|s| vec_norm(&brute_field(&map.values, &ap, F0, true, 0.0, 0.0, Complex64::new(1.0, 0.0), s.uv.u, s.uv.v)))
        .collect();
    let peak = (0..mags.len()).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
    let (mut lo, mut hi) = (peak, peak);
    while lo > 0 && mags[lo - 1] < mags[lo] {
        lo -= 1;
    }
    while hi + 1 < mags.len() && mags[hi + 1] < mags[hi] {
        hi += 1;
    }
    let side = mags[..lo].iter().chain(&mags[hi + 1..]).fold(0.0_f64, |a, &b| a.max(b));
    let oracle_db = 20.0 * (side / mags[peak]).log10();
    assert!((m.sidelobe_level_db - oracle_db).abs() < 0.01, "{} vs {oracle_db}", m.sidelobe_level_db);
    assert!((-13.6..=-13.0).contains(&oracle_db), "{oracle_db}");
    assert!(m.uv_peak.u.abs() < 1e-12);
}

#[test]
fn conjugated_aperture_reaches_coherent_level() {
    let g = geometry(20);
    let target = Direction::in_cut(30.0);
    for (pol, inc) in [(Polarization::Te, 0.0), (Polarization::Tm, -20.0)] {
        let wave = PlaneWaveSpec::unit(pol, Direction::in_cut(inc), F0);
        let values = (0..g.cells())
            .map(|k| Complex64::from_polar(0.95, conjugate_phase(target, &wave, &g, k)))
            .collect();
        let map = GammaMap::new(g, pol, inc, values);
        let e = far_field_at(&map, &wave, Uv::new(0.5, 0.0)).unwrap().norm();
        let ideal = coherent_level(&vec![0.95; g.cells()], &aperture(&g), F0, pol == Polarization::Te, inc, 0.0, 0.5, 0.0);
        assert!(e >= 0.95 * ideal && e <= ideal * (1.0 + 1e-9), "{pol:?}: {e} vs {ideal}");
    }
}

#[test]
fn gamma_map_follows_the_twin() {
    let cell = CellSpec::at_frequency(F0);
    let atom = SyntheticAtom::for_cell(&cell);
    let s = characterize(&atom, &lhs_sample(atom.bounds, &[15.0], 200, 4)).unwrap();
    let twin = GammaTwin::train_in_box(&s, atom.bounds, (15.0, 15.0), &KrigingOptions::default()).unwrap();
    let lut = compile_lut(&twin, 15.0, 128).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let b = atom.bounds;
    let descriptors: Vec<AtomDescriptor> =
        (0..400).map(|_| AtomDescriptor::new(rng.random_range(b.lo..=b.hi), rng.random_range(b.lo..=b.hi))).collect();
    let layout = EmsLayout::new(20, 20, cell, b, descriptors.clone()).unwrap();
    for pol in Polarization::BOTH {
        let map = gamma_map(&layout, &lut, pol).unwrap();
        for (g, d) in map.values.iter().zip(&descriptors) {
            assert!((g - twin.predict(d, 15.0, pol).unwrap()).norm() < 0.02);
        }
    }
}

#[test]
fn random_maps_match_direct_sum() {
    let g = geometry(4);
    let ap = aperture(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let values: Vec<Complex64> =
            (0..16).map(|_| Complex64::from_polar(rng.random_range(0.5..1.0), rng.random_range(-3.0..3.0))).collect();
        let te = rng.random::<bool>();
        let pol = if te { Polarization::Te } else { Polarization::Tm };
        let (theta, phi) = (rng.random_range(-60.0..60.0), rng.random_range(0.0..360.0));
        let wave = PlaneWaveSpec::unit(pol, Direction::new(theta, phi), F0);
        let map = GammaMap::new(g, pol, theta, values.clone());
        let uv = Uv::new(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7));
        let e = far_field_at(&map, &wave, uv).unwrap().components();
        let r = brute_field(&values, &ap, F0, te, theta, phi, Complex64::new(1.0, 0.0), uv.u, uv.v);
        let diff = [e[0] - r[0], e[1] - r[1], e[2] - r[2]];
        assert!(vec_norm(&diff) <= 1e-9 * vec_norm(&r));
    }
}
