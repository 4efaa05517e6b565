//! Config loading, manifests and the per-subcommand runners.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use msplab::bounds::{polyk_bound, staircase_bound, BoundReport};
use msplab::config::{ExperimentConfig, ExperimentKind};
use msplab::dynamics::{dfpde_integrate, TrainingTrace};
use msplab::numerics::{HermiteRule, LegendreRule};
use msplab::recurrence::continuous_coeff_table;
use msplab::Error;

use crate::experiments;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    MspCheck,
    TrainSgd,
    TrainDfpde,
    TwoPhase,
    RecurrenceVerify,
    LowerBound,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::MspCheck => "msp-check",
            Command::TrainSgd => "train-sgd",
            Command::TrainDfpde => "train-dfpde",
            Command::TwoPhase => "two-phase",
            Command::RecurrenceVerify => "recurrence-verify",
            Command::LowerBound => "lower-bound",
            Command::Compare => "compare",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Also print the main CSV trace to stdout.
    pub csv: bool,
}

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Divergence(String),
    Verification(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Divergence(_) => 3,
            RunError::Verification(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            RunError::Config(m) | RunError::Divergence(m) | RunError::Verification(m) => m,
        }
    }
}

/// What a successful run printed and wrote.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub stdout: String,
    pub files: Vec<PathBuf>,
}

pub const DEFAULT_OUT: &str = "msplab-out";

/// Parses a config or manifest file. A `[manifest]` section is ignored.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, String> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
    table.remove("manifest");
    let cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| e.to_string())?;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

pub fn config_text(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("config serialises to TOML")
}

/// The config echo followed by a `[manifest]` section.
pub fn manifest_text(cfg: &ExperimentConfig, command: Command, wall_time: f64) -> String {
    let mut out = config_text(cfg);
    let _ = write!(
        out,
        "\n[manifest]\ncommand = \"{}\"\nversion = \"{}\"\nwall_time_s = {wall_time}\n",
        command.name(),
        env!("CARGO_PKG_VERSION")
    );
    out
}

pub fn load_config(opts: &RunOptions) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match (&opts.config, &opts.preset) {
        (Some(_), Some(_)) => return Err(RunError::Config("give either --config or --preset, not both".into())),
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => ExperimentConfig::preset(name).map_err(|e| RunError::Config(e.to_string()))?,
        (None, None) => return Err(RunError::Config("need --config <path> or --preset <name>".into())),
    };
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &opts.out {
        cfg.output_dir = Some(out.display().to_string());
    }
    cfg.validate().map_err(|e| RunError::Config(e.to_string()))?;
    Ok(cfg)
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|e| RunError::Config(format!("output directory {}: {e}", dir.display())))?;
        Ok(Writer { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| RunError::Config(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(path);
        Ok(())
    }

    fn trace(&mut self, stem: &str, t: &TrainingTrace) -> Result<(), RunError> {
        self.write(&format!("{stem}.csv"), &t.to_csv())?;
        self.write(&format!("{stem}.meta"), &t.meta_text())
    }
}

fn lib_err(w: &mut Writer, e: Error) -> RunError {
    match e {
        Error::Divergence { step, trace } => {
            let saved = w.trace("partial_trace", &trace).is_ok();
            RunError::Divergence(format!(
                "diverged at step {step}{}",
                if saved { "; partial trace saved to partial_trace.csv" } else { "" }
            ))
        }
        other => RunError::Config(other.to_string()),
    }
}

/// Runs one subcommand, writing its outputs and the manifest into the output directory.
pub fn run(command: Command, opts: &RunOptions) -> Result<Outcome, RunError> {
    let cfg = load_config(opts)?;
    let dir = PathBuf::from(cfg.output_dir.clone().unwrap_or_else(|| DEFAULT_OUT.to_string()));
    let mut w = Writer::new(&dir)?;
    let start = Instant::now();
    let mut stdout = String::new();
    let result = dispatch(command, &cfg, &mut w, &mut stdout, opts.csv);
    w.write("manifest.toml", &manifest_text(&cfg, command, start.elapsed().as_secs_f64()))?;
    result?;
    Ok(Outcome { stdout, files: w.files })
}

fn dispatch(
    command: Command,
    cfg: &ExperimentConfig,
    w: &mut Writer,
    out: &mut String,
    csv: bool,
) -> Result<(), RunError> {
    let h = cfg.target_function().map_err(|e| RunError::Config(e.to_string()))?;
    let mut main_csv: Option<String> = None;
    let mut verification: Option<String> = None;
    match command {
        Command::MspCheck => {
            let (_, line) = experiments::msp_report(&h);
            let _ = writeln!(out, "{line}");
            w.write("msp.txt", &format!("target = {}\n{line}\n", h.pretty()))?;
        }
        Command::TrainSgd => {
            let runs = experiments::sgd_runs(cfg).map_err(|e| lib_err(w, e))?;
            for r in &runs {
                let seed = &r.trace.meta["seed"];
                w.trace(&format!("sgd_seed{seed}"), &r.trace)?;
                let _ = writeln!(out, "seed {seed}: final risk {}", r.trace.final_risk().unwrap_or(f64::NAN));
                main_csv.get_or_insert_with(|| r.trace.to_csv());
            }
        }
        Command::TrainDfpde => {
            if cfg.experiment == ExperimentKind::StuckDynamics {
                let s = experiments::stuck_dynamics(cfg).map_err(|e| lib_err(w, e))?;
                w.trace("dfpde", &s.trace)?;
                let text = format!(
                    "blocked_coordinates = {}\nstuck_risk_lower_bound = {}\nmax_abs_u_blocked = {}\nmin_risk_minus_bound = {}\n",
                    experiments::set_text(s.msp.blocked_coords),
                    s.bound,
                    s.max_u_blocked,
                    s.min_margin
                );
                w.write("stuck.txt", &text)?;
                out.push_str(&text);
                if s.max_u_blocked > 1e-10 || s.min_margin < -1e-6 {
                    verification = Some("blocked coordinates moved or risk fell below the stuck bound".into());
                }
                main_csv = Some(s.trace.to_csv());
            } else {
                let act = cfg.activation().map_err(|e| RunError::Config(e.to_string()))?;
                let legendre =
                    LegendreRule::new(cfg.dfpde.legendre_nodes).map_err(|e| RunError::Config(e.to_string()))?;
                let hermite = HermiteRule::new(cfg.dfpde.hermite_nodes).map_err(|e| RunError::Config(e.to_string()))?;
                let (trace, _) =
                    dfpde_integrate(&h, &cfg.hyper, &act, &legendre, cfg.hyper.mu_w.m2(), &hermite, cfg.dfpde.delta)
                        .map_err(|e| lib_err(w, e))?;
                w.trace("dfpde", &trace)?;
                let _ = writeln!(out, "final risk {}", trace.final_risk().unwrap_or(f64::NAN));
                for warning in &trace.warnings {
                    let _ = writeln!(out, "warning: {warning}");
                }
                main_csv = Some(trace.to_csv());
            }
        }
        Command::TwoPhase => {
            let r = experiments::two_phase(cfg).map_err(|e| lib_err(w, e))?;
            w.write("kernel.csv", &r.kernel.to_csv())?;
            w.write("certification.txt", &r.cert.to_text())?;
            if let Some(p2) = &r.phase2 {
                w.trace("phase2", &p2.trace)?;
                main_csv = Some(p2.trace.to_csv());
            }
            out.push_str(&r.summary());
            if !r.passed(cfg.two_phase.eps) {
                verification = Some("two-phase certification failed".into());
            }
        }
        Command::RecurrenceVerify => {
            let act = cfg.activation().map_err(|e| RunError::Config(e.to_string()))?;
            let rc = &cfg.recurrence;
            let m = act.taylor_vec(rc.order + 1);
            let table = continuous_coeff_table(&h, &m, rc.order).map_err(|e| RunError::Config(e.to_string()))?;
            w.write("coeff_table.csv", &table.to_csv())?;
            let s = experiments::series_check(&h, &act, rc.a, rc.order, &rc.t_ladder)
                .map_err(|e| RunError::Config(e.to_string()))?;
            let mut body = String::from("t,error\n");
            for (t, e) in s.times.iter().zip(&s.errors) {
                let _ = writeln!(body, "{t},{e}");
            }
            w.write("series.csv", &body)?;
            let _ = writeln!(out, "fitted order {} (L = {}, required >= {})", s.slope, rc.order, rc.order as f64 - 0.5);
            if !(s.slope >= rc.order as f64 - 0.5) {
                verification = Some(format!("fitted order {} below {}", s.slope, rc.order as f64 - 0.5));
            }
            main_csv = Some(body);
        }
        Command::LowerBound => {
            let b = &cfg.bounds;
            let mut body = format!("{}\n", BoundReport::CSV_HEADER);
            for &d in &b.d {
                let mut reports = vec![polyk_bound(d, b.k, b.m, b.eta)];
                reports.extend(b.p.iter().map(|&p| staircase_bound(d, p, b.eta)));
                for r in reports {
                    match r {
                        Ok(r) => {
                            let _ = writeln!(out, "{}", r.to_line());
                            let _ = writeln!(body, "{}", r.to_csv_row());
                        }
                        Err(e) => {
                            let _ = writeln!(out, "d = {d}: skipped ({e})");
                        }
                    }
                }
            }
            w.write("bounds.csv", &body)?;
            main_csv = Some(body);
        }
        Command::Compare => {
            if cfg.experiment == ExperimentKind::SymmetryEscape {
                let r = experiments::symmetry_escape(cfg).map_err(|e| lib_err(w, e))?;
                w.trace("dfpde", &r.dfpde)?;
                w.trace("sgd", &r.sgd)?;
                w.write("escape.txt", &r.summary())?;
                out.push_str(&r.summary());
                main_csv = Some(r.sgd.to_csv());
            } else {
                let r = experiments::compare(cfg).map_err(|e| lib_err(w, e))?;
                w.trace("dfpde", &r.dfpde)?;
                for ((seed, sgd), mc) in r.seeds.iter().zip(&r.sgd).zip(&r.dfpde_mc) {
                    w.trace(&format!("sgd_seed{seed}"), sgd)?;
                    w.trace(&format!("dfpde_mc_seed{seed}"), mc)?;
                }
                w.write("gap.txt", &r.summary())?;
                out.push_str(&r.summary());
                main_csv = Some(r.dfpde.to_csv());
            }
        }
    }
    if csv {
        if let Some(body) = main_csv {
            out.push_str(&body);
        }
    }
    match verification {
        Some(msg) => Err(RunError::Verification(format!("{out}{msg}"))),
        None => Ok(()),
    }
}
