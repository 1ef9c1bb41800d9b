//! The synthesis loop: sample the atom, train the twin, tabulate it, search the
//! layout with the swarm, then evaluate the patterns of the winner.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::atoms::{
    characterize, lhs_sample, load_reflection_table, AtomDescriptor, CellSpec, ReflectionSample, SyntheticAtom,
};
use crate::config::{DesignConfig, TwinSource};
use crate::fields::{
    far_field_at, gamma_map, pattern_cut, pattern_grid, peak_metrics, write_pattern_csv, EmsLayout, FarFieldPattern,
    Geometry, PeakMetrics,
};
use crate::objective::{cost, cost_from_powers, precompute_steering, DesignTargets, LutPair};
use crate::pso::{optimize_with, Bounds};
use crate::surrogate::{compile_lut, GammaTwin};
use crate::wavegeom::{to_direction_cosines, Direction, PlaneWaveSpec, Polarization, Uv};

/// Training data for the twin as the config describes it.
pub fn training_samples(config: &DesignConfig) -> crate::Result<Vec<ReflectionSample>> {
    match &config.twin.source {
        TwinSource::Synthetic => {
            let atom = SyntheticAtom::new(config.synthetic_params(), config.bounds());
            let plan = lhs_sample(atom.bounds, &config.incidence_angles(), config.twin.samples, config.twin.seed);
            characterize(&atom, &plan)
        }
        TwinSource::Table(path) => Ok(load_reflection_table(path)?),
    }
}

/// Trains the twin over the config's descriptor box and the data's incidence range.
pub fn train_twin(config: &DesignConfig, samples: &[ReflectionSample]) -> crate::Result<GammaTwin> {
    let angles = samples.iter().map(|s| s.theta_inc);
    let tmin = angles.clone().fold(f64::INFINITY, f64::min);
    let tmax = angles.fold(f64::NEG_INFINITY, f64::max);
    Ok(GammaTwin::train_in_box(samples, config.bounds(), (tmin, tmax), &config.twin.kriging)?)
}

/// One table per distinct incidence angle.
pub fn compile_luts(config: &DesignConfig, twin: &GammaTwin) -> crate::Result<LutPair> {
    let res = config.twin.lut_resolution;
    let te = compile_lut(twin, config.te.incidence.theta_deg, res)?;
    if config.tm.incidence.theta_deg == config.te.incidence.theta_deg {
        return Ok(LutPair::shared(te));
    }
    let tm = compile_lut(twin, config.tm.incidence.theta_deg, res)?;
    Ok(LutPair { te: te.into(), tm: tm.into() })
}

/// Wraps an angle in radians to `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = x.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Ideal reflection phase of cell `k` for a single beam, radians, unwrapped.
pub fn conjugate_phase(target: Direction, illumination: &PlaneWaveSpec, geometry: &Geometry, k: usize) -> f64 {
    let r = to_direction_cosines(target);
    let i = illumination.incidence_uv();
    let (x, y) = geometry.center(k);
    -illumination.k0() * ((r.u + i.u) * x + (r.v + i.v) * y)
}

/// Candidate values along one polarization's dominant descriptor axis, with
/// their table phases. The other descriptor sits at mid-range.
fn axis_candidates(lut: &crate::surrogate::GammaLut, pol: Polarization) -> Vec<(f64, f64)> {
    let b = lut.bounds;
    let n = 8 * (lut.resolution - 1) + 1;
    (0..n)
        .map(|i| {
            let t = (b.lo + b.width() * i as f64 / (n - 1) as f64).min(b.hi);
            let d = match pol {
                Polarization::Te => AtomDescriptor::new(b.mid(), t),
                Polarization::Tm => AtomDescriptor::new(t, b.mid()),
            };
            let (te, tm) = lut.lookup_unchecked(d.d1, d.d2);
            let g = if pol == Polarization::Te { te } else { tm };
            (t, g.arg())
        })
        .collect()
}

fn closest_phase(candidates: &[(f64, f64)], want: f64) -> f64 {
    let mut best = (f64::INFINITY, candidates[0].0);
    for &(t, ph) in candidates {
        let e = wrap_phase(ph - want).abs();
        if e < best.0 {
            best = (e, t);
        }
    }
    best.1
}

/// Single-polarization reference layout by phase conjugation.
pub fn phase_conjugation_design(
    target: Direction,
    illumination: &PlaneWaveSpec,
    p: usize,
    q: usize,
    cell: CellSpec,
    lut: &crate::surrogate::GammaLut,
) -> crate::Result<EmsLayout> {
    let pol = illumination.polarization;
    let geometry = Geometry { p, q, pitch_x: cell.pitch_x, pitch_y: cell.pitch_y };
    let cand = axis_candidates(lut, pol);
    let mid = lut.bounds.mid();
    let descriptors = (0..geometry.cells())
        .map(|k| {
            let t = closest_phase(&cand, wrap_phase(conjugate_phase(target, illumination, &geometry, k)));
            match pol {
                Polarization::Te => AtomDescriptor::new(mid, t),
                Polarization::Tm => AtomDescriptor::new(t, mid),
            }
        })
        .collect();
    Ok(EmsLayout::new(p, q, cell, lut.bounds, descriptors)?)
}

/// Both polarizations' conjugation profiles merged: TE fixes `d2`, TM fixes `d1`.
pub fn compromise_design(config: &DesignConfig, luts: &LutPair) -> crate::Result<EmsLayout> {
    let targets = config.targets();
    let te = phase_conjugation_design(targets.te.direction, &targets.te.illumination, config.p, config.q, config.cell(), &luts.te)?;
    let tm = phase_conjugation_design(targets.tm.direction, &targets.tm.illumination, config.p, config.q, config.cell(), &luts.tm)?;
    let descriptors = te.descriptors.iter().zip(&tm.descriptors).map(|(a, b)| AtomDescriptor::new(b.d1, a.d2)).collect();
    Ok(EmsLayout::new(config.p, config.q, config.cell(), config.bounds(), descriptors)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolEvaluation {
    pub polarization: Polarization,
    pub weight: f64,
    pub incidence: Direction,
    pub target: Direction,
    pub target_uv: Uv,
    /// `|E|` at the target direction.
    pub target_field: f64,
    pub cut_metrics: PeakMetrics,
    pub grid_metrics: PeakMetrics,
    pub cut: FarFieldPattern,
    #[serde(skip)]
    pub grid: Option<FarFieldPattern>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub cost: f64,
    pub te: PolEvaluation,
    pub tm: PolEvaluation,
}

impl EvaluationReport {
    pub fn get(&self, pol: Polarization) -> &PolEvaluation {
        match pol {
            Polarization::Te => &self.te,
            Polarization::Tm => &self.tm,
        }
    }
}

/// Pattern cut (`φ = 0`), visible-range grid and peak metrics for both polarizations.
pub fn evaluate_layout(
    layout: &EmsLayout,
    targets: &DesignTargets,
    luts: &LutPair,
    cut_samples: usize,
    grid_samples: usize,
) -> crate::Result<EvaluationReport> {
    let eval = |pol: Polarization| -> crate::Result<PolEvaluation> {
        let t = targets.get(pol);
        let map = gamma_map(layout, luts.get(pol), pol)?;
        let target_uv = to_direction_cosines(t.direction);
        let target_field = far_field_at(&map, &t.illumination, target_uv)?.norm();
        let cut = pattern_cut(&map, &t.illumination, 0.0, cut_samples)?;
        let grid = pattern_grid(&map, &t.illumination, grid_samples, grid_samples)?;
        Ok(PolEvaluation {
            polarization: pol,
            weight: t.weight,
            incidence: t.illumination.incidence,
            target: t.direction,
            target_uv,
            target_field,
            cut_metrics: peak_metrics(&cut)?,
            grid_metrics: peak_metrics(&grid)?,
            cut,
            grid: Some(grid),
        })
    };
    let te = eval(Polarization::Te)?;
    let tm = eval(Polarization::Tm)?;
    let cost = cost_from_powers([te.weight, tm.weight], [te.target_field.powi(2), tm.target_field.powi(2)]);
    Ok(EvaluationReport { cost, te, tm })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub layout: EmsLayout,
    pub final_cost: f64,
    pub cost_history: Vec<f64>,
    pub evaluations: usize,
    pub stopped_early: bool,
    pub evaluation: EvaluationReport,
    /// Whole run, training included.
    pub runtime_seconds: f64,
    pub optimization_seconds: f64,
    pub config: DesignConfig,
}

pub fn synthesize(config: &DesignConfig) -> crate::Result<SynthesisResult> {
    synthesize_with_progress(config, None)
}

/// [`synthesize`] streaming per-iteration progress CSV lines into `progress`.
pub fn synthesize_with_progress(config: &DesignConfig, progress: Option<&mut dyn Write>) -> crate::Result<SynthesisResult> {
    config.validate()?;
    let start = Instant::now();
    let samples = training_samples(config)?;
    let twin = train_twin(config, &samples)?;
    let luts = compile_luts(config, &twin)?;

    let targets = config.targets();
    let cell = config.cell();
    let bounds = config.bounds();
    let geometry = Geometry { p: config.p, q: config.q, pitch_x: cell.pitch_x, pitch_y: cell.pitch_y };
    let steering = precompute_steering(&targets, &geometry);
    let dim = 2 * geometry.cells();
    let box_ = Bounds::uniform(dim, bounds.lo, bounds.hi).map_err(crate::Error::Format)?;

    let warm = if config.warm_start { Some(compromise_design(config, &luts)?.to_flat()) } else { None };
    let opt_start = Instant::now();
    let run = optimize_with(|x| cost(x, &targets, &luts, &steering), &box_, &config.pso, warm.as_deref(), progress);
    let optimization_seconds = opt_start.elapsed().as_secs_f64();

    let layout = EmsLayout::from_flat(config.p, config.q, cell, bounds, &run.best)?;
    let evaluation = evaluate_layout(&layout, &targets, &luts, config.evaluation.cut_samples, config.evaluation.grid_samples)?;
    Ok(SynthesisResult {
        layout,
        final_cost: run.best_cost,
        cost_history: run.history,
        evaluations: run.evaluations,
        stopped_early: run.stopped_early,
        evaluation,
        runtime_seconds: start.elapsed().as_secs_f64(),
        optimization_seconds,
        config: config.clone(),
    })
}

fn write_file(path: &Path, write: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> crate::Result<()>) -> crate::Result<()> {
    let f = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write(&mut w)?;
    w.flush().map_err(|e| crate::Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> crate::Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        Ok(())
    })
}

/// `pattern_<pol>_cut.csv` and `pattern_<pol>_grid.csv` for both polarizations.
pub fn write_report_patterns(dir: &Path, prefix: &str, report: &EvaluationReport) -> crate::Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    for pol in Polarization::BOTH {
        let e = report.get(pol);
        let tag = pol.label().to_lowercase();
        let cut = dir.join(format!("{prefix}pattern_{tag}_cut.csv"));
        write_file(&cut, |w| write_pattern_csv(w, &e.cut))?;
        written.push(cut);
        if let Some(grid) = &e.grid {
            let path = dir.join(format!("{prefix}pattern_{tag}_grid.csv"));
            write_file(&path, |w| write_pattern_csv(w, grid))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Single-polarization oracle layouts for the config's two targets.
pub fn oracle_layouts(config: &DesignConfig, luts: &LutPair) -> crate::Result<[EmsLayout; 2]> {
    let t = config.targets();
    let te = phase_conjugation_design(t.te.direction, &t.te.illumination, config.p, config.q, config.cell(), &luts.te)?;
    let tm = phase_conjugation_design(t.tm.direction, &t.tm.illumination, config.p, config.q, config.cell(), &luts.tm)?;
    Ok([te, tm])
}

/// Samples, twin and tables for a config in one call.
pub fn prepare(config: &DesignConfig) -> crate::Result<(GammaTwin, LutPair)> {
    let samples = training_samples(config)?;
    let twin = train_twin(config, &samples)?;
    let luts = compile_luts(config, &twin)?;
    Ok((twin, luts))
}

/// Coherent-sum magnitude of a uniform-amplitude, perfectly phased aperture.
pub fn ideal_coherent_level(gamma_magnitude: f64, wave: &PlaneWaveSpec, geometry: &Geometry, target: Uv) -> f64 {
    let unit = crate::fields::cell_current(Complex64::new(1.0, 0.0), wave).j.norm();
    let i = wave.incidence_uv();
    let k0 = wave.k0();
    let ef = crate::fields::sinc(k0 * (target.u + i.u) * geometry.pitch_x / 2.0)
        * crate::fields::sinc(k0 * (target.v + i.v) * geometry.pitch_y / 2.0);
    k0 / (4.0 * std::f64::consts::PI)
        * unit
        * gamma_magnitude
        * geometry.cells() as f64
        * geometry.pitch_x
        * geometry.pitch_y
        * ef.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PolConfig;

    fn config(p: usize, te: (f64, f64, f64), tm: (f64, f64, f64)) -> DesignConfig {
        let pc = |(inc, refl, w): (f64, f64, f64)| PolConfig {
            incidence: Direction::in_cut(inc),
            target: Direction::in_cut(refl),
            weight: w,
            amplitude: Complex64::new(1.0, 0.0),
        };
        let mut c = DesignConfig::new(p, p, pc(te), pc(tm));
        c.twin.samples = 120;
        c.twin.lut_resolution = 64;
        c.pso.swarm_size = 20;
        c.pso.iterations = 60;
        c.evaluation.grid_samples = 41;
        c
    }

    #[test]
    fn wrap_is_half_open() {
        use std::f64::consts::PI;
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn specular_target_gives_identical_cells() {
        let c = config(6, (20.0, -20.0, 1.0), (0.0, 0.0, 1.0));
        let (_, luts) = prepare(&c).unwrap();
        let t = c.targets();
        let l = phase_conjugation_design(t.te.direction, &t.te.illumination, 6, 6, c.cell(), &luts.te).unwrap();
        assert!(l.descriptors.iter().all(|d| *d == l.descriptors[0]));
    }

    #[test]
    fn adjacent_ideal_phases_differ_by_gradient() {
        let c = config(5, (10.0, 35.0, 1.0), (0.0, 0.0, 1.0));
        let t = c.targets();
        let g = Geometry { p: 5, q: 5, pitch_x: c.pitch(), pitch_y: c.pitch() };
        let step = t.te.illumination.k0() * (t.te.direction.uv().u + t.te.illumination.incidence_uv().u) * g.pitch_x;
        let a = conjugate_phase(t.te.direction, &t.te.illumination, &g, 5);
        let b = conjugate_phase(t.te.direction, &t.te.illumination, &g, 10);
        assert!(((a - b) - step).abs() < 1e-9 * step.abs());
    }

    #[test]
    fn oracle_peaks_at_its_target() {
        let c = config(20, (0.0, 30.0, 1.0), (0.0, -40.0, 1.0));
        let (_, luts) = prepare(&c).unwrap();
        let [te, _] = oracle_layouts(&c, &luts).unwrap();
        let r = evaluate_layout(&te, &c.targets(), &luts, 721, 41).unwrap();
        assert!((r.te.cut_metrics.uv_peak.u - 0.5).abs() <= 2.0 / 720.0);
    }

    #[test]
    fn single_cell_run_is_well_formed() {
        let c = config(1, (0.0, 30.0, 1.0), (0.0, -40.0, 1.0));
        let r = synthesize(&c).unwrap();
        assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.layout.descriptors.len(), 1);
        assert!(r.final_cost.is_finite());
        let re = evaluate_layout(&r.layout, &c.targets(), &prepare(&c).unwrap().1, 721, 41).unwrap();
        assert_eq!(re.cost, r.evaluation.cost);
    }

    #[test]
    fn zero_amplitude_gives_zero_patterns() {
        let mut c = config(4, (0.0, 30.0, 1.0), (0.0, -40.0, 1.0));
        c.te.amplitude = Complex64::new(0.0, 0.0);
        let (_, luts) = prepare(&c).unwrap();
        let l = EmsLayout::uniform(4, 4, c.cell(), c.bounds(), AtomDescriptor::new(c.bounds().mid(), c.bounds().mid())).unwrap();
        let r = evaluate_layout(&l, &c.targets(), &luts, 101, 21).unwrap();
        assert!(r.te.cut.samples.iter().all(|s| s.magnitude == 0.0));
        assert_eq!(r.cost, f64::INFINITY);
    }

    #[test]
    fn synthesis_is_deterministic_and_reports_are_recomputable() {
        let c = config(4, (0.0, 30.0, 1.0), (0.0, -40.0, 1.0));
        let a = synthesize(&c).unwrap();
        let b = synthesize(&c).unwrap();
        assert_eq!(a.layout, b.layout);
        assert_eq!(a.cost_history, b.cost_history);
        let (_, luts) = prepare(&c).unwrap();
        let re = evaluate_layout(&a.layout, &c.targets(), &luts, 721, 41).unwrap();
        for pol in Polarization::BOTH {
            let (x, y) = (re.get(pol).cut_metrics, a.evaluation.get(pol).cut_metrics);
            assert!((x.magnitude_peak - y.magnitude_peak).abs() <= 1e-9 * y.magnitude_peak);
            assert!((x.uv_peak.u - y.uv_peak.u).abs() <= 1e-9);
        }
    }

    #[test]
    fn warm_start_never_ends_worse_than_its_seed() {
        let mut c = config(6, (0.0, 30.0, 1.0), (0.0, -40.0, 1.0));
        c.warm_start = true;
        c.pso.iterations = 5;
        let (_, luts) = prepare(&c).unwrap();
        let seed = compromise_design(&c, &luts).unwrap();
        let g = seed.geometry();
        let seed_cost = cost(&seed.to_flat(), &c.targets(), &luts, &precompute_steering(&c.targets(), &g));
        let r = synthesize(&c).unwrap();
        assert!(r.final_cost <= seed_cost);
    }
}
