//! Command line front end.
//!
//! Exit codes: 0 on success, 1 when a run or check fails its criterion or an
//! I/O or solver error occurs, 2 on usage and configuration errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};

use crate::baseline::run_nt;
use crate::config::{ExperimentConfig, SweepKind};
use crate::driver::{run_ggn, RunReport, Termination};
use crate::io::{load_bundle, save_bundle, save_run, write_file};
use crate::problem::{simulate_data, ModelProblem, NoisyData, SyntheticCase};
use crate::theory::run_suite;

#[derive(Debug, Parser)]
#[command(name = "ggn", version, about = "Adaptive all-at-once Gauss-Newton parameter identification")]
pub struct Cli {
    /// Sectioned key = value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Levels of the uniform data mesh.
    #[arg(long, global = true)]
    pub fine_levels: Option<u8>,
    #[arg(long, global = true)]
    pub zeta: Option<f64>,
    /// Relative noise as a fraction, 0.01 for one percent.
    #[arg(long, global = true)]
    pub noise: Option<f64>,
    #[arg(long, global = true, value_parser = ["a", "b", "c"])]
    pub case: Option<String>,
    #[arg(long, global = true, value_parser = ["point", "l2"])]
    pub obs: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate noisy data and write a data bundle to OUT/data.
    Simulate,
    /// Run the Gauss-Newton iteration; results go to OUT/ggn.
    RunGgn {
        /// Data bundle to use instead of simulating.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run the nonlinear Tikhonov reference solver; results go to OUT/nt.
    RunNt {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Sweep over zeta or noise and write OUT/table.csv.
    Table {
        #[arg(value_parser = ["zeta", "noise"])]
        sweep: Option<String>,
    },
    /// Check the block operator and filter inequalities.
    TheoryCheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

/// Builds the experiment configuration from the file and the flag overrides.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut c = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            ExperimentConfig::parse(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(o) = &cli.out {
        c.out = o.clone();
    }
    if let Some(f) = cli.fine_levels {
        c.fine_levels = f;
    }
    if let Some(z) = cli.zeta {
        c.zeta = z;
    }
    if let Some(p) = cli.noise {
        c.noise = p;
    }
    if let Some(k) = &cli.case {
        c.case = SyntheticCase::parse(k).ok_or_else(|| format!("unknown case {k}"))?;
    }
    if let Some(o) = &cli.obs {
        if !c.set_obs(o) {
            return Err(format!("unknown observation {o}"));
        }
    }
    c.ggn.validate().map_err(|e| e.to_string())?;
    c.nt.validate().map_err(|e| e.to_string())?;
    if c.fine_levels > 12 {
        return Err("fine_levels above 12 is not supported".into());
    }
    Ok(c)
}

fn simulate(c: &ExperimentConfig) -> Result<NoisyData, String> {
    let problem = ModelProblem::new(c.zeta).map_err(|e| e.to_string())?;
    simulate_data(&problem, c.case, c.obs, c.fine_levels, c.noise, c.seed).map_err(|e| e.to_string())
}

fn obtain_data(c: &ExperimentConfig, bundle: Option<&Path>) -> Result<NoisyData, String> {
    match bundle {
        Some(dir) => load_bundle(dir).map_err(|e| e.to_string()),
        None => simulate(c),
    }
}

fn summary(r: &RunReport) -> String {
    format!(
        "{}: {} after {} iterations, error {:.4}, beta {:.4e}, nodes {}, discrepancy {:.4e} (threshold {:.4e}), {:.2} s",
        r.method,
        r.termination.label(),
        r.iterations(),
        r.rel_error,
        r.beta,
        r.nodes,
        r.final_i3,
        r.threshold,
        r.wall_time
    )
}

fn run_one(c: &ExperimentConfig, bundle: Option<&Path>, nt: bool) -> Result<i32, String> {
    let data = obtain_data(c, bundle)?;
    if bundle.is_some() && data.zeta != c.zeta {
        eprintln!("note: using zeta = {} from the data bundle", data.zeta);
    }
    let problem = ModelProblem::new(data.zeta).map_err(|e| e.to_string())?;
    let report = if nt { run_nt(&problem, &data, &c.nt) } else { run_ggn(&problem, &data, &c.ggn) }
        .map_err(|e| e.to_string())?;
    let dir = c.out.join(if nt { "nt" } else { "ggn" });
    save_run(&dir, &report, &c.hash()).map_err(|e| e.to_string())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", summary(&report));
    Ok(if report.termination == Termination::Discrepancy { 0 } else { 1 })
}

pub const TABLE_HEADER: &str = "zeta,noise,ggn_error,ggn_beta,ggn_nodes,ggn_iterations,ggn_time,ggn_termination,\
nt_error,nt_beta,nt_nodes,nt_iterations,nt_time,nt_termination,ctr,status";

fn report_cols(r: &Result<RunReport, String>) -> String {
    match r {
        Ok(r) => format!(
            "{:.6},{:.6e},{},{},{:.4},{}",
            r.rel_error,
            r.beta,
            r.nodes,
            r.iterations(),
            r.wall_time,
            r.termination.label()
        ),
        Err(_) => ",,,,,failed".into(),
    }
}

/// One table row: GGN and optionally NT on the same data.
fn table_row(c: &ExperimentConfig, zeta: f64, noise: f64) -> String {
    let c = ExperimentConfig { zeta, noise, ..c.clone() };
    let data = simulate(&c);
    let problem = ModelProblem::new(zeta).map_err(|e| e.to_string());
    let (ggn, nt) = match (&data, &problem) {
        (Ok(d), Ok(p)) => {
            let g = run_ggn(p, d, &c.ggn).map_err(|e| e.to_string());
            let n = if c.table.baseline { Some(run_nt(p, d, &c.nt).map_err(|e| e.to_string())) } else { None };
            (g, n)
        }
        (Err(e), _) | (_, Err(e)) => (Err(e.clone()), None),
    };
    let ctr = match (&ggn, &nt) {
        (Ok(g), Some(Ok(n))) if n.wall_time > 0.0 => format!("{:.4}", 1.0 - g.wall_time / n.wall_time),
        _ => String::new(),
    };
    let mut status: Vec<String> = Vec::new();
    if let Err(e) = &ggn {
        status.push(format!("ggn: {e}"));
    }
    if let Some(Err(e)) = &nt {
        status.push(format!("nt: {e}"));
    }
    let nt_cols = nt.as_ref().map(report_cols).unwrap_or_else(|| ",,,,,".into());
    let status = if status.is_empty() { "ok".to_string() } else { status.join("; ").replace(',', ";") };
    format!("{zeta},{noise},{},{nt_cols},{ctr},{status}", report_cols(&ggn))
}

/// The sweep as CSV text; rows keep the order of the sweep values.
pub fn table_csv(c: &ExperimentConfig, sweep: SweepKind) -> String {
    let points: Vec<(f64, f64)> = match sweep {
        SweepKind::Zeta => c.table.zetas.iter().map(|&z| (z, c.noise)).collect(),
        SweepKind::Noise => c.table.noises.iter().map(|&p| (c.zeta, p)).collect(),
    };
    let rows = Mutex::new(vec![String::new(); points.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..c.table.threads.max(1).min(points.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(z, p)) = points.get(i) else { break };
                let row = table_row(c, z, p);
                rows.lock().expect("no worker panics while holding the lock")[i] = row;
            });
        }
    });
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in rows.into_inner().expect("workers joined") {
        let _ = writeln!(out, "{r}");
    }
    out
}

fn execute(cli: &Cli) -> Result<i32, (i32, String)> {
    let usage = |e: String| (2, e);
    let fail = |e: String| (1, e);
    let c = resolve_config(cli).map_err(usage)?;
    match &cli.command {
        Command::Simulate => {
            let data = simulate(&c).map_err(fail)?;
            let dir = c.out.join("data");
            save_bundle(&dir, &data, &c.hash()).map_err(|e| fail(e.to_string()))?;
            for w in &data.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {} (delta {:.6e})", dir.display(), data.delta);
            Ok(0)
        }
        Command::RunGgn { data } => run_one(&c, data.as_deref(), false).map_err(fail),
        Command::RunNt { data } => run_one(&c, data.as_deref(), true).map_err(fail),
        Command::Table { sweep } => {
            let kind = match sweep.as_deref() {
                Some("noise") => SweepKind::Noise,
                Some(_) => SweepKind::Zeta,
                None => c.table.sweep,
            };
            let text = table_csv(&c, kind);
            let path = c.out.join("table.csv");
            write_file(&path, &text).map_err(|e| fail(e.to_string()))?;
            print!("{text}");
            let all_ok = text.lines().skip(1).all(|l| l.ends_with(",ok"));
            Ok(if all_ok { 0 } else { 1 })
        }
        Command::TheoryCheck { trials } => {
            let checks = run_suite(c.seed, *trials).map_err(|e| fail(e.to_string()))?;
            let mut ok = true;
            for ch in &checks {
                println!("{} {}: {:.6e} <= {:.6e}", if ch.pass { "PASS" } else { "FAIL" }, ch.name, ch.value, ch.bound);
                ok &= ch.pass;
            }
            Ok(if ok { 0 } else { 1 })
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}
