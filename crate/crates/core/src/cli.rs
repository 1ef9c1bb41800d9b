//! Command-line surface.
//!
//! Exit status is 0 on success, 1 for configuration or input validation
//! problems and 2 for failures while running. Diagnostics go to standard error;
//! results go to files under the output directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::atoms::{envelope_report, write_reflection_table, SyntheticAtom};
use crate::config::{load_with_overrides, DesignConfig, TwinSource};
use crate::fields::EmsLayout;
use crate::pipeline::{
    evaluate_layout, oracle_layouts, prepare, synthesize_with_progress, train_twin, training_samples, write_json,
    write_report_patterns, SynthesisResult,
};
use crate::surrogate::cross_validate;
use crate::wavegeom::Polarization;
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "mpskin", version, about = "Multi-polarization static passive EM skin synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dotted-key override, e.g. `--set pso.seed=7`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Master seed for every randomized stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Characterize the atom on a Latin hypercube and write the reflection table.
    SampleAtoms,
    /// Train the Kriging twin and write it as JSON.
    TrainTwin,
    /// k-fold cross-validation of the twin.
    ValidateTwin {
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Run the full synthesis.
    Synthesize,
    /// Evaluate the layout named by `evaluation.layout`.
    Evaluate,
    /// Phase-conjugation reference layouts for each polarization.
    Oracle,
    /// Summarize `result.json` in the output directory.
    Report,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Atom(_) => Failure::Validation(e.to_string()),
            Error::Surrogate(crate::surrogate::SurrogateError::Validation(_)) => Failure::Validation(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

struct Ctx {
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Parses the process arguments and runs; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    let result = match cli.threads {
        Some(0) => Err(Failure::Validation("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli)),
            Err(e) => Err(Failure::Runtime(e.to_string())),
        },
        None => dispatch(cli),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}

fn load_config(cli: &Cli) -> Result<DesignConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Validation("this command needs --config PATH".into()))?;
    let mut cfg = load_with_overrides(path, &cli.overrides).map_err(|e| Failure::Validation(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.set_master_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn make_ctx(out: &Path, quiet: bool) -> Result<Ctx, Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    Ok(Ctx { out: out.to_path_buf(), quiet })
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    if cli.command == Command::Report {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        return report(&out);
    }
    let cfg = load_config(cli)?;
    let ctx = make_ctx(&cfg.output_dir, cli.quiet)?;
    match cli.command {
        Command::SampleAtoms => sample_atoms(&cfg, &ctx),
        Command::TrainTwin => {
            let samples = training_samples(&cfg)?;
            let twin = train_twin(&cfg, &samples)?;
            let path = ctx.path("twin.json");
            twin.save(&path)?;
            ctx.note(format!("trained twin on {} samples -> {}", samples.len(), path.display()));
            Ok(())
        }
        Command::ValidateTwin { folds } => {
            if folds < 2 {
                return Err(Failure::Validation("--folds must be at least 2".into()));
            }
            let samples = training_samples(&cfg)?;
            if samples.len() < folds {
                return Err(Failure::Validation(format!("{} samples cannot fill {folds} folds", samples.len())));
            }
            let cv = cross_validate(&samples, folds, cfg.twin.seed, &cfg.twin.kriging).map_err(Error::from)?;
            write_json(&ctx.path("cv.json"), &cv)?;
            println!(
                "folds {}  phase RMSE {:.4} deg  magnitude RMSE {:.6}  channel RMSE {:.3e} {:.3e} {:.3e} {:.3e}",
                cv.folds,
                cv.phase_rmse_deg,
                cv.magnitude_rmse,
                cv.channel_rmse[0],
                cv.channel_rmse[1],
                cv.channel_rmse[2],
                cv.channel_rmse[3]
            );
            Ok(())
        }
        Command::Synthesize => synthesize_cmd(&cfg, &ctx),
        Command::Evaluate => {
            let path = cfg
                .evaluation
                .layout
                .clone()
                .ok_or_else(|| Failure::Validation("config field `evaluation.layout` must name a layout file".into()))?;
            let layout = EmsLayout::load(&path).map_err(|e| Failure::Validation(e.to_string()))?;
            if (layout.p, layout.q) != (cfg.p, cfg.q) {
                return Err(Failure::Validation(format!(
                    "layout is {}x{}, config asks for {}x{}",
                    layout.p, layout.q, cfg.p, cfg.q
                )));
            }
            let (_, luts) = prepare(&cfg)?;
            let report = evaluate_layout(&layout, &cfg.targets(), &luts, cfg.evaluation.cut_samples, cfg.evaluation.grid_samples)?;
            write_json(&ctx.path("report.json"), &report)?;
            write_report_patterns(&ctx.out, "", &report)?;
            ctx.note(format!("cost {:e}", report.cost));
            Ok(())
        }
        Command::Oracle => {
            let (_, luts) = prepare(&cfg)?;
            let layouts = oracle_layouts(&cfg, &luts)?;
            for (pol, layout) in Polarization::BOTH.into_iter().zip(&layouts) {
                let tag = pol.label().to_lowercase();
                layout.save(&ctx.path(&format!("oracle_{tag}_layout.json")))?;
                let report = evaluate_layout(layout, &cfg.targets(), &luts, cfg.evaluation.cut_samples, cfg.evaluation.grid_samples)?;
                write_json(&ctx.path(&format!("oracle_{tag}_report.json")), &report)?;
                write_report_patterns(&ctx.out, &format!("oracle_{tag}_"), &report)?;
                let m = report.get(pol).cut_metrics;
                ctx.note(format!("{} oracle: peak u = {:.4}, |E(target)| = {:e}", pol.label(), m.uv_peak.u, report.get(pol).target_field));
            }
            Ok(())
        }
        Command::Report => unreachable!(),
    }
}

fn sample_atoms(cfg: &DesignConfig, ctx: &Ctx) -> Result<(), Failure> {
    let samples = training_samples(cfg)?;
    let path = ctx.path("atoms.csv");
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_reflection_table(std::io::BufWriter::new(f), &samples).map_err(Error::from)?;
    if matches!(cfg.twin.source, TwinSource::Synthetic) {
        let atom = SyntheticAtom::new(cfg.synthetic_params(), cfg.bounds());
        let reports = cfg
            .incidence_angles()
            .into_iter()
            .map(|t| envelope_report(&atom, t, 64))
            .collect::<crate::Result<Vec<_>>>()?;
        write_json(&ctx.path("envelope.json"), &reports)?;
    }
    ctx.note(format!("wrote {} samples -> {}", samples.len(), path.display()));
    Ok(())
}

fn synthesize_cmd(cfg: &DesignConfig, ctx: &Ctx) -> Result<(), Failure> {
    let log_path = ctx.path("run_log.csv");
    let log = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = std::io::BufWriter::new(log);
    let result = synthesize_with_progress(cfg, Some(&mut log))?;
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    write_json(&ctx.path("result.json"), &result)?;
    result.layout.save(&ctx.path("layout.json"))?;
    write_report_patterns(&ctx.out, "", &result.evaluation)?;
    ctx.note(summary(&result));
    Ok(())
}

fn summary(r: &SynthesisResult) -> String {
    let mut s = format!(
        "{}x{} layout, cost {:e} after {} iterations ({} evaluations), {:.1} s",
        r.layout.p,
        r.layout.q,
        r.final_cost,
        r.cost_history.len(),
        r.evaluations,
        r.runtime_seconds
    );
    for pol in Polarization::BOTH {
        let e = r.evaluation.get(pol);
        s.push_str(&format!(
            "\n  {}: target u = {:.4}, cut peak u = {:.4}, grid peak (u, v) = ({:.4}, {:.4}), |E(target)| = {:e}, SLL {:.2} dB",
            pol.label(),
            e.target_uv.u,
            e.cut_metrics.uv_peak.u,
            e.grid_metrics.uv_peak.u,
            e.grid_metrics.uv_peak.v,
            e.target_field,
            e.cut_metrics.sidelobe_level_db
        ));
    }
    s
}

fn report(out: &Path) -> Result<(), Failure> {
    let path = out.join("result.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    let r: SynthesisResult =
        serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    println!("{}", summary(&r));
    Ok(())
}
