use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vnfp_core::cli_io::{
    emit_csv, parse_config, ultra_profile_rows, write_field_csv, write_profile_rows, write_rows, McField, RunConfig,
    RunManifest,
};
use vnfp_core::coupled::{run_coupled, run_fixed_point, SimConfig};
use vnfp_core::nordstrom::FieldTrajectory;
use vnfp_core::sde_mc::{feynman_kac_estimate, PathConfig};
use vnfp_core::verify::run_checks;
use vnfp_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "vnfp", version, about = "Coupled Fokker-Planck / scalar-field solvers")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Named preset, used when no configuration file is given.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel parts.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Reference,
}

#[derive(Subcommand)]
enum Command {
    /// Coupled density/field run.
    Simulate,
    /// Fixed-point iteration between linear density and field solves.
    Iterate,
    /// Exact ultra-relativistic profiles on the configured times and momenta.
    UltraExact,
    /// Feynman-Kac Monte Carlo point estimate.
    Mc,
    /// Acceptance checks.
    Verify {
        /// Check numbers to run; all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
    /// Field equation alone, free or driven by the frozen initial density.
    Field,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Iterate => "iterate",
            Command::UltraExact => "ultra-exact",
            Command::Mc => "mc",
            Command::Verify { .. } => "verify",
            Command::Field => "field",
        }
    }
}

enum Failure {
    Config(String),
    Numerical(String),
    Verify(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match (&common.config, common.preset) {
        (Some(_), Some(_)) => return Err(Failure::Config("--config and --preset are mutually exclusive".into())),
        (Some(path), None) => parse_config(path).map_err(|e| Failure::Config(e.to_string()))?,
        (None, Some(Preset::Reference) | None) => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.mc.seed = seed;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn relative(out: &Path, files: &[PathBuf]) -> Vec<String> {
    files
        .iter()
        .map(|f| f.strip_prefix(out).unwrap_or(f).display().to_string())
        .collect()
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.common)?;
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("--threads: {e}")))?;
    }
    let out = &cli.common.out;
    fs::create_dir_all(out).map_err(|e| Failure::Numerical(format!("{}: {e}", out.display())))?;
    let mut manifest = RunManifest::new(cli.command.name(), &cfg, now());
    let mut verify_failure = None;
    let files: Vec<PathBuf> = match &cli.command {
        Command::Simulate => {
            let traj = run_coupled(&cfg.sim)?;
            let mut files = emit_csv(&traj, out)?;
            let field = out.join("field.csv");
            write_field_csv(&traj.field, &field)?;
            files.push(field);
            let last = traj.diagnostics.last().copied();
            if let Some(d) = last {
                println!(
                    "t = {}: mass {:.12e}, energy {:.12e}, phi {:.6}, phidot {:.6}",
                    d.t, d.mass, d.energy, d.phi, d.phidot
                );
            }
            files
        }
        Command::Iterate => {
            let it = &cfg.iterate;
            let report = run_fixed_point(&cfg.sim, it.n_iter, it.t_end, it.seed)?;
            let path = out.join("iterations.csv");
            write_rows(
                &path,
                "iteration,phi_diff,f_diff",
                report
                    .phi_diffs
                    .iter()
                    .zip(&report.f_diffs)
                    .enumerate()
                    .map(|(k, (p, f))| vec![(k + 1) as f64, *p, *f]),
            )?;
            let mut files = vec![path];
            if let Some(last) = report.iterates.last() {
                let field = out.join("field.csv");
                write_field_csv(&last.field, &field)?;
                files.push(field);
            }
            for (k, (p, f)) in report.phi_diffs.iter().zip(&report.f_diffs).enumerate() {
                println!("iterate {}: sup|dphi| = {p:.3e}, sup|df|_L2 = {f:.3e}", k + 1);
            }
            if report.stagnated {
                eprintln!("warning: iterate differences stagnated above tolerance");
            }
            files
        }
        Command::UltraExact => {
            let rows = ultra_profile_rows(&cfg.sim.profile, &cfg.ultra)?;
            let path = out.join("ultra_profiles.csv");
            write_profile_rows(rows, &path)?;
            println!("{} times x {} momenta written", cfg.ultra.times.len(), cfg.ultra.n_points);
            vec![path]
        }
        Command::Mc => {
            let mc = &cfg.mc;
            let horizon = mc.t.max(cfg.sim.dt);
            let traj = match mc.field {
                McField::Constant => {
                    let phi = cfg.sim.phi_in;
                    FieldTrajectory::from_fn(|_| phi, horizon, cfg.sim.dt)?
                }
                McField::Coupled => run_coupled(&SimConfig { t_end: horizon, ..cfg.sim.clone() })?.field,
            };
            let path_cfg = PathConfig {
                n_paths: mc.n_paths,
                dt: mc.dt,
                seed: mc.seed,
                antithetic: mc.antithetic,
                mode: cfg.sim.mode,
            };
            let p0 = nalgebra::Vector3::new(0.0, 0.0, mc.q);
            let est = feynman_kac_estimate(&cfg.sim.profile, p0, mc.t, &traj, &path_cfg)?;
            let path = out.join("mc.csv");
            write_rows(
                &path,
                "t,q,mean,std_error,n_effective",
                [vec![mc.t, mc.q, est.mean, est.std_error, est.n_effective as f64]],
            )?;
            println!("f({}, {}) = {:.8} +- {:.2e} ({} samples)", mc.t, mc.q, est.mean, est.std_error, est.n_effective);
            vec![path]
        }
        Command::Verify { only } => {
            if let Some(bad) = only.iter().find(|&&id| !(1..=10).contains(&id)) {
                return Err(Failure::Config(format!("--only: no check numbered {bad} (1-10)")));
            }
            let outcomes = run_checks(only);
            let mut text = String::new();
            for o in &outcomes {
                println!("{}", o.line());
                text.push_str(&o.line());
                text.push('\n');
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            let path = out.join("verify.txt");
            fs::write(&path, text).map_err(|e| Failure::Numerical(format!("{}: {e}", path.display())))?;
            if failed > 0 {
                verify_failure = Some(format!("{failed} of {} checks failed", outcomes.len()));
            }
            vec![path]
        }
        Command::Field => {
            let traj = vnfp_core::cli_io::run_field(&cfg.sim, cfg.field_drive)?;
            let path = out.join("field.csv");
            write_field_csv(&traj, &path)?;
            if let Some(s) = traj.last() {
                println!("t = {}: phi {:.8}, phidot {:.8}, tau {:.8}", s.t, s.phi, s.phidot, s.tau);
            }
            vec![path]
        }
    };
    let manifest_path = out.join("manifest.json");
    manifest.output_files = relative(out, &files);
    manifest.output_files.push("manifest.json".into());
    manifest.finished_at = now();
    manifest.write(&manifest_path)?;
    match verify_failure {
        Some(msg) => Err(Failure::Verify(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(Failure::Verify(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}
