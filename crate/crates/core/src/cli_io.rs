//! Run configuration files, manifests and CSV output.
//!
//! The configuration format is flat `key = value` text grouped by `[section]`
//! headers, with `#` comments. Every key has a default; an empty file is the
//! reference run. The digest of a configuration is taken over its resolved,
//! sorted canonical listing, so it does not depend on key order, comments or
//! which defaults were spelled out.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupled::{DiagnosticsRecord, FieldSeed, SimConfig, Trajectory};
use crate::error::{Error, Result};
use crate::fp_radial::{DensityState, RadialGrid};
use crate::geometry::FieldValue;
use crate::nordstrom::{advance_field, field_source, FieldState, FieldTrajectory};
use crate::profile::{Profile, RadialProfile};
use crate::ultra_exact::ultra_solution;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const DIAGNOSTICS_HEADER: &str = "t,mass,l2,first_moment,energy,energy_residual,nonvanish_measure,phi,phidot";
pub const PROFILE_HEADER: &str = "t,q,f";
pub const FIELD_HEADER: &str = "t,phi,phidot,tau,accel";

/// Field driving a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McField {
    /// `phi` held at its initial value.
    Constant,
    /// The field of the coupled run with the same configuration.
    Coupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub antithetic: bool,
    pub t: f64,
    pub q: f64,
    pub field: McField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateSettings {
    pub n_iter: usize,
    pub t_end: f64,
    pub seed: FieldSeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UltraSettings {
    pub times: Vec<f64>,
    pub q_min: f64,
    pub q_max: f64,
    pub n_points: usize,
}

/// Source term of a standalone field run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldDrive {
    /// `phi'' = 0`
    Free,
    /// `phi'' = -H_f` with `f` frozen at the initial density.
    FrozenDensity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub mc: McSettings,
    pub iterate: IterateSettings,
    pub ultra: UltraSettings,
    pub field_drive: FieldDrive,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::reference(),
            mc: McSettings {
                n_paths: 200_000,
                dt: 1e-3,
                seed: 1,
                antithetic: true,
                t: 0.2,
                q: 1.0,
                field: McField::Constant,
            },
            iterate: IterateSettings {
                n_iter: 8,
                t_end: 1.0,
                seed: FieldSeed::Constant,
            },
            ultra: UltraSettings {
                times: vec![0.1, 0.2, 0.3, 0.4, 0.5],
                q_min: 0.01,
                q_max: 10.0,
                n_points: 200,
            },
            field_drive: FieldDrive::FrozenDensity,
        }
    }
}

fn num<T: FromStr>(raw: &str) -> std::result::Result<T, String> {
    raw.parse().map_err(|_| format!("cannot parse `{raw}`"))
}

fn boolean(raw: &str) -> std::result::Result<bool, String> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{raw}`")),
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn profile_kind(p: &Profile) -> &'static str {
    match p {
        Profile::Zero => "zero",
        Profile::Constant { .. } => "constant",
        Profile::Exponential { .. } => "exponential",
        Profile::Gaussian { .. } => "gaussian",
    }
}

fn profile_params(p: &Profile) -> (f64, f64) {
    match *p {
        Profile::Zero => (0.0, 1.0),
        Profile::Constant { value } => (value, 1.0),
        Profile::Exponential { amplitude, rate } | Profile::Gaussian { amplitude, rate } => (amplitude, rate),
    }
}

fn build_profile(kind: &str, amplitude: f64, rate: f64) -> std::result::Result<Profile, String> {
    Ok(match kind {
        "zero" => Profile::Zero,
        "constant" => Profile::Constant { value: amplitude },
        "exponential" => Profile::Exponential { amplitude, rate },
        "gaussian" => Profile::Gaussian { amplitude, rate },
        _ => return Err(format!("unknown profile `{kind}` (zero, constant, exponential, gaussian)")),
    })
}

/// Every recognised key, as `section.key`.
pub const KEYS: &[&str] = &[
    "field.drive",
    "grid.n",
    "grid.q_max",
    "grid.stretch",
    "initial.amplitude",
    "initial.phi",
    "initial.profile",
    "initial.psi",
    "initial.rate",
    "iterate.decay_rate",
    "iterate.n_iter",
    "iterate.seed",
    "iterate.t_end",
    "mc.antithetic",
    "mc.dt",
    "mc.field",
    "mc.n_paths",
    "mc.q",
    "mc.seed",
    "mc.t",
    "model.mode",
    "model.sigma",
    "output.diagnostics_every",
    "output.nonvanish_eps",
    "output.snapshot_every",
    "time.dt",
    "time.t_end",
    "time.theta",
    "ultra.n_points",
    "ultra.q_max",
    "ultra.q_min",
    "ultra.times",
];

impl RunConfig {
    /// Resolved value of every key, sorted by key.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.sim;
        let (amplitude, rate) = profile_params(&s.profile);
        let (iter_seed, decay) = match self.iterate.seed {
            FieldSeed::Constant => ("constant", 0.0),
            FieldSeed::Free => ("free", 0.0),
            FieldSeed::LinearDecay(r) => ("linear_decay", r),
        };
        let times: Vec<String> = self.ultra.times.iter().map(|t| fmt_f64(*t)).collect();
        let v = vec![
            (
                "field.drive",
                match self.field_drive {
                    FieldDrive::Free => "free".to_string(),
                    FieldDrive::FrozenDensity => "frozen_density".to_string(),
                },
            ),
            ("grid.n", s.n_cells.to_string()),
            ("grid.q_max", fmt_f64(s.q_max)),
            ("grid.stretch", fmt_f64(s.stretch)),
            ("initial.amplitude", fmt_f64(amplitude)),
            ("initial.phi", fmt_f64(s.phi_in)),
            ("initial.profile", profile_kind(&s.profile).to_string()),
            ("initial.psi", fmt_f64(s.psi_in)),
            ("initial.rate", fmt_f64(rate)),
            ("iterate.decay_rate", fmt_f64(decay)),
            ("iterate.n_iter", self.iterate.n_iter.to_string()),
            ("iterate.seed", iter_seed.to_string()),
            ("iterate.t_end", fmt_f64(self.iterate.t_end)),
            ("mc.antithetic", self.mc.antithetic.to_string()),
            ("mc.dt", fmt_f64(self.mc.dt)),
            (
                "mc.field",
                match self.mc.field {
                    McField::Constant => "constant".to_string(),
                    McField::Coupled => "coupled".to_string(),
                },
            ),
            ("mc.n_paths", self.mc.n_paths.to_string()),
            ("mc.q", fmt_f64(self.mc.q)),
            ("mc.seed", self.mc.seed.to_string()),
            ("mc.t", fmt_f64(self.mc.t)),
            ("model.mode", s.mode.to_string()),
            ("model.sigma", fmt_f64(s.sigma)),
            ("output.diagnostics_every", s.diagnostics_every.to_string()),
            ("output.nonvanish_eps", fmt_f64(s.nonvanish_eps)),
            ("output.snapshot_every", s.snapshot_every.to_string()),
            ("time.dt", fmt_f64(s.dt)),
            ("time.t_end", fmt_f64(s.t_end)),
            ("time.theta", fmt_f64(s.theta)),
            ("ultra.n_points", self.ultra.n_points.to_string()),
            ("ultra.q_max", fmt_f64(self.ultra.q_max)),
            ("ultra.q_min", fmt_f64(self.ultra.q_min)),
            ("ultra.times", times.join(",")),
        ];
        debug_assert!(v.iter().map(|e| e.0).eq(KEYS.iter().copied()));
        v
    }

    /// One `key = value` line per key, sorted.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Hex SHA-256 of [`RunConfig::canonical`].
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Applies raw values keyed by `section.key` on top of the defaults and
    /// validates the result.
    fn from_raw(raw: &BTreeMap<String, (usize, String)>, origin: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let (mut kind, mut amplitude, mut rate) = {
            let (a, r) = profile_params(&cfg.sim.profile);
            (profile_kind(&cfg.sim.profile).to_string(), a, r)
        };
        let (mut iter_seed, mut decay) = ("constant".to_string(), 0.0);
        for (key, (line, value)) in raw {
            let bad = |msg: String| Error::Parse {
                path: origin.to_string(),
                line: *line,
                msg: format!("`{key}`: {msg}"),
            };
            let v = value.as_str();
            let res: std::result::Result<(), String> = (|| {
                match key.as_str() {
                    "field.drive" => {
                        cfg.field_drive = match v {
                            "free" => FieldDrive::Free,
                            "frozen_density" => FieldDrive::FrozenDensity,
                            _ => return Err(format!("expected free or frozen_density, got `{v}`")),
                        }
                    }
                    "grid.n" => cfg.sim.n_cells = num(v)?,
                    "grid.q_max" => cfg.sim.q_max = num(v)?,
                    "grid.stretch" => cfg.sim.stretch = num(v)?,
                    "initial.amplitude" => amplitude = num(v)?,
                    "initial.phi" => cfg.sim.phi_in = num(v)?,
                    "initial.profile" => kind = v.to_string(),
                    "initial.psi" => cfg.sim.psi_in = num(v)?,
                    "initial.rate" => rate = num(v)?,
                    "iterate.decay_rate" => decay = num(v)?,
                    "iterate.n_iter" => cfg.iterate.n_iter = num(v)?,
                    "iterate.seed" => iter_seed = v.to_string(),
                    "iterate.t_end" => cfg.iterate.t_end = num(v)?,
                    "mc.antithetic" => cfg.mc.antithetic = boolean(v)?,
                    "mc.dt" => cfg.mc.dt = num(v)?,
                    "mc.field" => {
                        cfg.mc.field = match v {
                            "constant" => McField::Constant,
                            "coupled" => McField::Coupled,
                            _ => return Err(format!("expected constant or coupled, got `{v}`")),
                        }
                    }
                    "mc.n_paths" => cfg.mc.n_paths = num(v)?,
                    "mc.q" => cfg.mc.q = num(v)?,
                    "mc.seed" => cfg.mc.seed = num(v)?,
                    "mc.t" => cfg.mc.t = num(v)?,
                    "model.mode" => cfg.sim.mode = v.parse()?,
                    "model.sigma" => cfg.sim.sigma = num(v)?,
                    "output.diagnostics_every" => cfg.sim.diagnostics_every = num(v)?,
                    "output.nonvanish_eps" => cfg.sim.nonvanish_eps = num(v)?,
                    "output.snapshot_every" => cfg.sim.snapshot_every = num(v)?,
                    "time.dt" => cfg.sim.dt = num(v)?,
                    "time.t_end" => cfg.sim.t_end = num(v)?,
                    "time.theta" => cfg.sim.theta = num(v)?,
                    "ultra.n_points" => cfg.ultra.n_points = num(v)?,
                    "ultra.q_max" => cfg.ultra.q_max = num(v)?,
                    "ultra.q_min" => cfg.ultra.q_min = num(v)?,
                    "ultra.times" => {
                        cfg.ultra.times = v
                            .split(',')
                            .map(|t| num::<f64>(t.trim()))
                            .collect::<std::result::Result<_, _>>()?
                    }
                    _ => return Err("unknown key".into()),
                }
                Ok(())
            })();
            res.map_err(bad)?;
        }
        let line_of = |key: &str| raw.get(key).map_or(0, |(l, _)| *l);
        cfg.sim.profile = build_profile(&kind, amplitude, rate).map_err(|msg| Error::Parse {
            path: origin.to_string(),
            line: line_of("initial.profile"),
            msg: format!("`initial.profile`: {msg}"),
        })?;
        cfg.iterate.seed = match iter_seed.as_str() {
            "constant" => FieldSeed::Constant,
            "free" => FieldSeed::Free,
            "linear_decay" => FieldSeed::LinearDecay(decay),
            other => {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: line_of("iterate.seed"),
                    msg: format!("`iterate.seed`: expected constant, free or linear_decay, got `{other}`"),
                })
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        let range = |key: &str, ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Range { key: key.into(), msg: msg.into() })
            }
        };
        let pos = |x: f64| x.is_finite() && x > 0.0;
        range("mc.n_paths", self.mc.n_paths >= 1, "must be at least 1")?;
        range("mc.dt", pos(self.mc.dt), "must be positive")?;
        range("mc.t", self.mc.t.is_finite() && self.mc.t >= 0.0, "must be nonnegative")?;
        range("mc.q", self.mc.q.is_finite() && self.mc.q >= 0.0, "must be nonnegative")?;
        range("iterate.n_iter", self.iterate.n_iter >= 1, "must be at least 1")?;
        range("iterate.t_end", pos(self.iterate.t_end), "must be positive")?;
        range("iterate.t_end", self.iterate.t_end >= self.sim.dt, "must not be shorter than time.dt")?;
        if let FieldSeed::LinearDecay(r) = self.iterate.seed {
            range("iterate.decay_rate", r.is_finite(), "must be finite")?;
        }
        range("ultra.times", !self.ultra.times.is_empty(), "must list at least one time")?;
        range("ultra.times", self.ultra.times.iter().all(|&t| pos(t)), "times must be positive")?;
        range("ultra.q_min", self.ultra.q_min.is_finite() && self.ultra.q_min >= 0.0, "must be nonnegative")?;
        range("ultra.q_max", self.ultra.q_max.is_finite() && self.ultra.q_max > self.ultra.q_min, "must exceed ultra.q_min")?;
        range("ultra.n_points", self.ultra.n_points >= 2, "must be at least 2")?;
        Ok(())
    }
}

/// Parses configuration text; `origin` names the source in error messages.
pub fn parse_config_str(text: &str, origin: &str) -> Result<RunConfig> {
    let mut raw: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut section = String::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let err = |msg: String| Error::Parse { path: origin.to_string(), line: lineno, msg };
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(format!("unterminated section header `{line}`")))?
                .trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(err(format!("invalid section name `{name}`")));
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(err("missing key".into()));
        }
        if v.is_empty() {
            return Err(err(format!("missing value for `{k}`")));
        }
        let full = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        if !KEYS.contains(&full.as_str()) {
            return Err(err(format!("unknown key `{full}`")));
        }
        if let Some((first, _)) = raw.get(&full) {
            return Err(err(format!("duplicate key `{full}`, first set on line {first}")));
        }
        raw.insert(full, (lineno, v.to_string()));
    }
    RunConfig::from_raw(&raw, origin)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, &path.display().to_string())
}

impl UltraSettings {
    /// Sample momenta: logarithmic when `q_min > 0`, uniform otherwise.
    pub fn points(&self) -> Vec<f64> {
        let n = self.n_points;
        (0..n)
            .map(|k| {
                let u = k as f64 / (n - 1) as f64;
                if self.q_min > 0.0 {
                    self.q_min * (self.q_max / self.q_min).powf(u)
                } else {
                    self.q_max * u
                }
            })
            .collect()
    }
}

/// `(t, q, f)` rows of the exact ultra-relativistic solution from `profile`,
/// time-major.
pub fn ultra_profile_rows<P: RadialProfile + ?Sized>(profile: &P, s: &UltraSettings) -> Result<Vec<(f64, f64, f64)>> {
    let qs = s.points();
    s.times
        .iter()
        .flat_map(|&t| qs.iter().map(move |&q| (t, q)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(t, q)| Ok((t, q, ultra_solution(profile, t, q)?)))
        .collect()
}

/// Provenance record written next to the outputs of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub artifact_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub output_files: Vec<String>,
    pub config: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &RunConfig, started_at: String) -> Self {
        Self {
            command: command.to_string(),
            config_digest: cfg.digest(),
            artifact_version: ARTIFACT_VERSION.to_string(),
            started_at,
            finished_at: String::new(),
            output_files: Vec::new(),
            config: cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_csv(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_diagnostics_csv(records: &[DiagnosticsRecord], path: &Path) -> Result<()> {
    write_rows(
        path,
        DIAGNOSTICS_HEADER,
        records.iter().map(|d| {
            vec![
                d.t,
                d.mass,
                d.l2_norm,
                d.first_abs_moment,
                d.energy,
                d.energy_identity_residual,
                d.nonvanishing_measure,
                d.phi,
                d.phidot,
            ]
        }),
    )
}

/// Long-format `t,q,f` rows, one per snapshot and node.
pub fn write_profiles_csv(snapshots: &[DensityState], grid: &RadialGrid, path: &Path) -> Result<()> {
    let rows = snapshots
        .iter()
        .flat_map(|s| grid.centroids().iter().zip(&s.values).map(move |(q, f)| (s.t, *q, *f)));
    write_profile_rows(rows, path)
}

pub fn write_profile_rows<I: IntoIterator<Item = (f64, f64, f64)>>(rows: I, path: &Path) -> Result<()> {
    write_rows(path, PROFILE_HEADER, rows.into_iter().map(|(t, q, f)| vec![t, q, f]))
}

/// Numeric CSV with the given header, every value via [`fmt_csv`].
pub fn write_rows<I: IntoIterator<Item = Vec<f64>>>(path: &Path, header: &str, rows: I) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| fmt_csv(*x)).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_field_csv(traj: &FieldTrajectory, path: &Path) -> Result<()> {
    write_rows(
        path,
        FIELD_HEADER,
        traj.states.iter().map(|s| vec![s.t, s.phi, s.phidot, s.tau, s.accel]),
    )
}

/// Standalone field run on `[0, t_end]` with the configured step.
pub fn run_field(sim: &SimConfig, drive: FieldDrive) -> Result<FieldTrajectory> {
    sim.validate()?;
    let grid = sim.grid()?;
    let f = DensityState::from_profile(&grid, &sim.profile);
    let source = |phi: f64| match drive {
        FieldDrive::Free => Ok(0.0),
        FieldDrive::FrozenDensity => field_source(&FieldValue::new(phi), &f, &grid),
    };
    let mut s = FieldState::initial(sim.phi_in, sim.psi_in);
    s.accel = -source(s.phi)?;
    let mut traj = FieldTrajectory::new(sim.dt, s);
    for k in 1..=sim.n_steps() {
        s = advance_field(&s, |_, phi| source(phi).unwrap_or(f64::NAN), sim.dt)?;
        s.t = k as f64 * sim.dt;
        traj.push(s)?;
    }
    Ok(traj)
}

/// Writes `diagnostics.csv` and `profiles.csv` into `dir` and returns their paths.
pub fn emit_csv(traj: &Trajectory, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let diag = dir.join("diagnostics.csv");
    let prof = dir.join("profiles.csv");
    write_diagnostics_csv(&traj.diagnostics, &diag)?;
    write_profiles_csv(&traj.density_snapshots, &traj.grid, &prof)?;
    Ok(vec![diag, prof])
}

/// Reads a numeric CSV with the given header back into rows.
pub fn read_csv(path: &Path, header: &str) -> Result<Vec<Vec<f64>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let err = |msg: String| Error::Parse { path: origin.clone(), line: idx + 1, msg };
        if idx == 0 {
            if line != header {
                return Err(err(format!("expected header `{header}`, got `{line}`")));
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|x| x.parse::<f64>().map_err(|_| err(format!("not a number: `{x}`"))))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != width {
            return Err(err(format!("expected {width} columns, got {}", row.len())));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fp_radial::Mode;

    #[test]
    fn empty_file_is_reference() {
        let cfg = parse_config_str("", "empty").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.sim, SimConfig::reference());
        let cfg = parse_config_str("# only a comment\n\n[grid]\n", "c").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn canonical_listing_parses_back() {
        let mut cfg = RunConfig::default();
        cfg.sim.profile = Profile::Gaussian { amplitude: 2.0, rate: 0.5 };
        cfg.sim.mode = Mode::Ultra;
        cfg.iterate.seed = FieldSeed::LinearDecay(0.25);
        cfg.ultra.times = vec![0.1, 1.0 / 3.0];
        let back = parse_config_str(&cfg.canonical(), "canon").unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn sections_and_dotted_keys_agree() {
        let a = parse_config_str("[time]\ndt = 0.002\n[grid]\nn = 500\n", "a").unwrap();
        let b = parse_config_str("grid.n = 500\ntime.dt = 2e-3 # same value\n", "b").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sim.n_cells, 500);
        assert_ne!(a.digest(), RunConfig::default().digest());
    }

    #[test]
    fn errors_carry_line_or_key() {
        match parse_config_str("[time]\ndt = -1\n", "f") {
            Err(Error::Range { key, .. }) => assert_eq!(key, "dt"),
            other => panic!("{other:?}"),
        }
        match parse_config_str("\n[grid]\nwidth = 3\n", "f") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("grid.width"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        match parse_config_str("[grid]\nn = many\n", "f") {
            Err(Error::Parse { line: 2, msg, .. }) => assert!(msg.contains("grid.n")),
            other => panic!("{other:?}"),
        }
        for text in ["[grid\n", "just words\n", "[grid]\nn =\n", "[grid]\nn = 3\nn = 4\n"] {
            let e = parse_config_str(text, "f").unwrap_err();
            assert!(matches!(e, Error::Parse { .. }), "{text:?} -> {e:?}");
            assert!(e.is_config());
        }
        match parse_config_str("[initial]\nprofile = lorentzian\n", "f") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
