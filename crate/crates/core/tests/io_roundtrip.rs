use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use vnfp_core::cli_io::{
    emit_csv, fmt_csv, parse_config, parse_config_str, read_csv, RunConfig, RunManifest, DIAGNOSTICS_HEADER,
    PROFILE_HEADER,
};
use vnfp_core::coupled::{run_coupled, SimConfig, Trajectory};
use vnfp_core::fp_radial::DensityState;
use vnfp_core::nordstrom::{FieldState, FieldTrajectory};

/// SHA-256 of the canonical listing of the reference configuration.
const GOLDEN_DIGEST: &str = "1770582b5d535de399610f37371fce88b3f3a9bceb13ae5d99a503f26dbad06f";

fn preset_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../presets/reference.cfg")
}

#[test]
fn reference_preset_matches_golden_digest() {
    let cfg = parse_config(&preset_path()).unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.digest(), GOLDEN_DIGEST);
    assert_eq!(parse_config_str("", "empty").unwrap().digest(), GOLDEN_DIGEST);
}

#[test]
fn digest_ignores_order_and_comments() {
    let text = fs::read_to_string(preset_path()).unwrap();
    // Reverse the order of the sections and drop the comments.
    let mut sections: Vec<String> = Vec::new();
    for line in text.lines().filter(|l| !l.trim_start().starts_with('#')) {
        if line.starts_with('[') {
            sections.push(String::new());
        }
        if let Some(s) = sections.last_mut() {
            s.push_str(line);
            s.push('\n');
        }
    }
    sections.reverse();
    let shuffled = sections.concat();
    assert_ne!(shuffled, text);
    assert_eq!(parse_config_str(&shuffled, "shuffled").unwrap().digest(), GOLDEN_DIGEST);
    let changed = shuffled.replace("seed = 1\n", "seed = 2\n");
    assert_ne!(parse_config_str(&changed, "changed").unwrap().digest(), GOLDEN_DIGEST);
}

#[test]
fn missing_config_file_is_io_error() {
    let err = parse_config(&PathBuf::from("/nonexistent/dir/run.cfg")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir/run.cfg"), "{err}");
}

#[test]
fn reference_run_csv_round_trips_bit_exactly() {
    let traj = run_coupled(&SimConfig::reference()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_csv(&traj, dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    let rows = read_csv(&files[0], DIAGNOSTICS_HEADER).unwrap();
    assert_eq!(rows.len(), traj.diagnostics.len());
    for (row, d) in rows.iter().zip(&traj.diagnostics) {
        let expected = [
            d.t,
            d.mass,
            d.l2_norm,
            d.first_abs_moment,
            d.energy,
            d.energy_identity_residual,
            d.nonvanishing_measure,
            d.phi,
            d.phidot,
        ];
        for (a, b) in row.iter().zip(expected) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
    let profile = read_csv(&files[1], PROFILE_HEADER).unwrap();
    let n = traj.grid.len();
    assert_eq!(profile.len(), n * traj.density_snapshots.len());
    for (snap, chunk) in traj.density_snapshots.iter().zip(profile.chunks(n)) {
        for ((row, f), q) in chunk.iter().zip(&snap.values).zip(traj.grid.centroids()) {
            assert_eq!(row[0].to_bits(), snap.t.to_bits());
            assert_eq!(row[1].to_bits(), q.to_bits());
            assert_eq!(row[2].to_bits(), f.to_bits());
        }
    }
}

#[test]
fn empty_trajectory_gives_header_only_files() {
    let config = SimConfig { n_cells: 10, ..SimConfig::reference() };
    let grid = config.grid().unwrap();
    let traj = Trajectory {
        final_density: DensityState::zeros(&grid),
        grid,
        config,
        density_snapshots: Vec::new(),
        field: FieldTrajectory::new(1e-3, FieldState::initial(0.0, 0.0)),
        diagnostics: Vec::new(),
    };
    let dir = tempfile::tempdir().unwrap();
    let files = emit_csv(&traj, dir.path()).unwrap();
    assert_eq!(fs::read_to_string(&files[0]).unwrap(), format!("{DIAGNOSTICS_HEADER}\n"));
    assert_eq!(fs::read_to_string(&files[1]).unwrap(), format!("{PROFILE_HEADER}\n"));
}

#[test]
fn same_config_gives_identical_files() {
    let cfg = SimConfig { t_end: 0.5, dt: 1e-2, n_cells: 200, snapshot_every: 10, ..SimConfig::reference() };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = emit_csv(&run_coupled(&cfg).unwrap(), a.path()).unwrap();
    let fb = emit_csv(&run_coupled(&cfg).unwrap(), b.path()).unwrap();
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
}

#[test]
fn manifest_round_trips() {
    let cfg = RunConfig::default();
    let mut m = RunManifest::new("simulate", &cfg, "2026-01-01T00:00:00.000Z".into());
    m.finished_at = "2026-01-01T00:00:03.000Z".into();
    m.output_files = vec!["diagnostics.csv".into(), "profiles.csv".into()];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    m.write(&path).unwrap();
    let back = RunManifest::read(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.config_digest, GOLDEN_DIGEST);
    assert_eq!(back.config.len(), vnfp_core::cli_io::KEYS.len());
}

#[test]
fn malformed_csv_is_rejected_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    fs::write(&path, "t,q,f\n1,2,3\n1,x,3\n").unwrap();
    let err = read_csv(&path, PROFILE_HEADER).unwrap_err();
    assert!(err.to_string().contains(":3:"), "{err}");
    fs::write(&path, "t,q\n").unwrap();
    assert!(read_csv(&path, PROFILE_HEADER).is_err());
}

proptest! {
    #[test]
    fn csv_number_format_round_trips(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        prop_assume!(x.is_finite());
        let back: f64 = fmt_csv(x).parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }

    #[test]
    fn canonical_listing_round_trips(
        dt in 1e-5f64..1.0,
        n in 2usize..100_000,
        phi in -50.0f64..50.0,
        seed in any::<u64>(),
        rate in 1e-3f64..1e3,
        theta in 0.0f64..=1.0,
    ) {
        let mut cfg = RunConfig::default();
        cfg.sim.dt = dt;
        cfg.sim.n_cells = n;
        cfg.sim.phi_in = phi;
        cfg.sim.theta = theta;
        cfg.sim.profile = vnfp_core::profile::Profile::Gaussian { amplitude: 1.0, rate };
        cfg.mc.seed = seed;
        let back = parse_config_str(&cfg.canonical(), "canon").unwrap();
        prop_assert_eq!(back.digest(), cfg.digest());
        prop_assert_eq!(back, cfg);
    }
}
