//! Bound-constrained particle swarm optimizer.
//!
//! Every random number is a pure function of `(seed, iteration, particle,
//! dimension)` through a Philox-4x32-10 counter-based generator, and the
//! global-best reduction runs in particle-index order, so a run is bitwise
//! reproducible whatever the number of worker threads.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox-4x32 with 10 rounds.
#[inline]
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

#[inline]
fn unit_f64(hi: u32, lo: u32) -> f64 {
    (((hi as u64) << 32 | lo as u64) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Two independent uniforms in `[0, 1)` for one `(iteration, particle, dimension)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterRng {
    key: [u32; 2],
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { key: [seed as u32, (seed >> 32) as u32] }
    }

    #[inline]
    pub fn pair(&self, stream: u32, iteration: u32, particle: u32, dim: u32) -> (f64, f64) {
        let r = philox4x32([iteration, particle, dim, stream], self.key);
        (unit_f64(r[0], r[1]), unit_f64(r[2], r[3]))
    }
}

const STREAM_INIT: u32 = 0;
const STREAM_STEP: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwarmConfig {
    #[serde(alias = "G")]
    pub swarm_size: usize,
    #[serde(alias = "S")]
    pub iterations: usize,
    pub w_start: f64,
    pub w_end: f64,
    pub c1: f64,
    pub c2: f64,
    pub v_max_fraction: f64,
    pub seed: u64,
    /// Iterations without improvement before stopping; 0 disables the check.
    pub stagnation_window: usize,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            swarm_size: 100,
            iterations: 10_000,
            w_start: 0.9,
            w_end: 0.4,
            c1: 2.0,
            c2: 2.0,
            v_max_fraction: 0.2,
            seed: 1,
            stagnation_window: 500,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.swarm_size < 2 {
            return Err(format!("swarm_size must be at least 2, got {}", self.swarm_size));
        }
        if self.iterations < 1 {
            return Err("iterations must be at least 1".into());
        }
        if !(self.v_max_fraction > 0.0 && self.v_max_fraction <= 1.0) {
            return Err(format!("v_max_fraction must lie in (0, 1], got {}", self.v_max_fraction));
        }
        for (name, v) in [("w_start", self.w_start), ("w_end", self.w_end), ("c1", self.c1), ("c2", self.c2)] {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }

    /// Inertia weight used by step `s` (zero-based) of the budget.
    pub fn inertia(&self, s: usize) -> f64 {
        if self.iterations <= 1 {
            return self.w_start;
        }
        let t = s as f64 / (self.iterations - 1) as f64;
        self.w_start + (self.w_end - self.w_start) * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, String> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err("bounds need matching, non-empty lo/hi vectors".into());
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i])) {
            return Err(format!("dimension {i}: need finite lo < hi, got [{}, {}]", lo[i], hi[i]));
        }
        Ok(Self { lo, hi })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self, String> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *l <= *v && *v <= *h)
    }
}

/// Mirrors `x` into `[lo, hi]`, flipping `v` when a face is crossed.
#[inline]
pub fn reflect(x: f64, v: f64, lo: f64, hi: f64) -> (f64, f64) {
    if x < lo {
        ((lo + (lo - x)).min(hi), -v)
    } else if x > hi {
        ((hi - (x - hi)).max(lo), -v)
    } else {
        (x, v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<f64>,
    pub best_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    pub particles: Vec<Particle>,
    pub global_best: Vec<f64>,
    pub global_best_cost: f64,
    /// Completed update steps.
    pub iteration: usize,
    pub evaluations: usize,
    pub rng: CounterRng,
}

#[inline]
fn sanitize(c: f64) -> f64 {
    if c.is_nan() {
        f64::INFINITY
    } else {
        c
    }
}

impl SwarmState {
    /// Uniform positions in the box, velocities uniform in `±v_max`, all evaluated once.
    pub fn init<F>(evaluate: &F, bounds: &Bounds, config: &SwarmConfig) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let rng = CounterRng::new(config.seed);
        let dim = bounds.dim();
        let particles: Vec<Particle> = (0..config.swarm_size)
            .into_par_iter()
            .map(|i| {
                let mut position = Vec::with_capacity(dim);
                let mut velocity = Vec::with_capacity(dim);
                for d in 0..dim {
                    let (a, b) = rng.pair(STREAM_INIT, 0, i as u32, d as u32);
                    let range = bounds.hi[d] - bounds.lo[d];
                    position.push((bounds.lo[d] + a * range).min(bounds.hi[d]));
                    velocity.push((2.0 * b - 1.0) * config.v_max_fraction * range);
                }
                let cost = sanitize(evaluate(&position));
                Particle { best_position: position.clone(), position, velocity, best_cost: cost }
            })
            .collect();
        let mut state = Self {
            global_best: particles[0].best_position.clone(),
            global_best_cost: particles[0].best_cost,
            particles,
            iteration: 0,
            evaluations: config.swarm_size,
            rng,
        };
        state.reduce_global_best();
        state
    }

    /// First particle with the lowest personal best, scanning in index order.
    fn reduce_global_best(&mut self) -> bool {
        let mut improved = false;
        for p in &self.particles {
            if p.best_cost < self.global_best_cost {
                self.global_best_cost = p.best_cost;
                self.global_best.clone_from(&p.best_position);
                improved = true;
            }
        }
        improved
    }
}

/// One synchronous update: move every particle, evaluate, then refresh the bests.
/// Returns whether the global best improved.
pub fn step<F>(state: &mut SwarmState, bounds: &Bounds, config: &SwarmConfig, evaluate: &F) -> bool
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let w = config.inertia(state.iteration);
    let it = state.iteration as u32;
    let rng = state.rng;
    let gbest = &state.global_best;
    state.particles.par_iter_mut().enumerate().for_each(|(i, p)| {
        for d in 0..p.position.len() {
            let (r1, r2) = rng.pair(STREAM_STEP, it, i as u32, d as u32);
            let x = p.position[d];
            let vmax = config.v_max_fraction * (bounds.hi[d] - bounds.lo[d]);
            let v = w * p.velocity[d] + config.c1 * r1 * (p.best_position[d] - x) + config.c2 * r2 * (gbest[d] - x);
            let v = v.clamp(-vmax, vmax);
            let (x, v) = reflect(x + v, v, bounds.lo[d], bounds.hi[d]);
            p.position[d] = x;
            p.velocity[d] = v;
        }
        let c = sanitize(evaluate(&p.position));
        if c < p.best_cost {
            p.best_cost = c;
            p.best_position.clone_from(&p.position);
        }
    });
    state.evaluations += state.particles.len();
    state.iteration += 1;
    state.reduce_global_best()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub best: Vec<f64>,
    pub best_cost: f64,
    /// Global best cost after each completed step.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub stopped_early: bool,
}

pub fn optimize<F>(evaluate: F, bounds: &Bounds, config: &SwarmConfig) -> OptimizeResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    optimize_with(evaluate, bounds, config, None, None)
}

pub const PROGRESS_CSV_HEADER: &str = "iteration,best_cost,elapsed_s";

/// [`optimize`] with an optional starting particle (replacing particle 0 of the
/// initial swarm) and an optional CSV progress sink.
pub fn optimize_with<F>(
    evaluate: F,
    bounds: &Bounds,
    config: &SwarmConfig,
    seed_particle: Option<&[f64]>,
    mut progress: Option<&mut dyn Write>,
) -> OptimizeResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let start = Instant::now();
    let mut state = SwarmState::init(&evaluate, bounds, config);
    if let Some(x0) = seed_particle {
        assert!(x0.len() == bounds.dim() && bounds.contains(x0), "seed particle must lie in bounds");
        let c = sanitize(evaluate(x0));
        state.evaluations += 1;
        let p = &mut state.particles[0];
        p.position = x0.to_vec();
        p.best_position = x0.to_vec();
        p.best_cost = c;
        state.global_best_cost = f64::INFINITY;
        state.reduce_global_best();
    }
    let mut sink_ok = true;
    if let Some(w) = progress.as_deref_mut() {
        sink_ok = writeln!(w, "{PROGRESS_CSV_HEADER}").is_ok();
    }
    let mut history = Vec::with_capacity(config.iterations);
    let mut since_improvement = 0;
    let mut stopped_early = false;
    for _ in 0..config.iterations {
        if step(&mut state, bounds, config, &evaluate) {
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        history.push(state.global_best_cost);
        if sink_ok {
            if let Some(w) = progress.as_deref_mut() {
                let line = format!("{},{:e},{:.6}", state.iteration, state.global_best_cost, start.elapsed().as_secs_f64());
                sink_ok = writeln!(w, "{line}").is_ok();
            }
        }
        if config.stagnation_window > 0 && since_improvement >= config.stagnation_window {
            stopped_early = state.iteration < config.iterations;
            break;
        }
    }
    if let Some(w) = progress {
        let _ = w.flush();
    }
    OptimizeResult {
        best: state.global_best,
        best_cost: state.global_best_cost,
        history,
        evaluations: state.evaluations,
        stopped_early,
    }
}
