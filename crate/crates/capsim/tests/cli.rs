//! End-to-end checks of the command-line interface: artifact layout, header
//! stamping, error reporting, and resume semantics. Runs a coarse empty
//! vessel so the whole file stays quick.

use std::path::Path;
use std::process::Command;

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_capsim")
}

fn coarse_config() -> String {
    "\
scenario = band\nwith_cells = false\nn_cells = 4\nvessel_radius_um = 3\nhematocrit = 0.25\n\
cell_speed_mm_s = 1\nfluid_density_kg_m3 = 1000\nfluid_viscosity_pa_s = 0.001\n\
diffusion_m2_s = 2e-9\ninlet_concentration_per_m3 = 1e17\ncell_volume_um3 = 90\n\
cell_surface_um2 = 135\nsensor_length_um = 2\nabsorption_velocity_m_s = 1\n\
smoothing_width_um = 0.2\nresolution_um = 0.25\nconvergence_tol = 0.02\n"
        .to_string()
}

#[test]
fn run_produces_stamped_artifacts_and_resume_skips() {
    let dir = std::env::temp_dir().join(format!("capsim_cli_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, coarse_config()).unwrap();
    let out = dir.join("out");

    let status = Command::new(exe())
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    for name in [
        "manifest.txt",
        "run/summary.txt",
        "run/series.csv",
        "run/counts.csv",
        "run/force.csv",
    ] {
        let path = out.join(name);
        assert!(path.exists(), "missing artifact {name}");
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(
            text.starts_with("# config_hash = "),
            "{name} lacks the hash header"
        );
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("# version = capsim "));
    }
    let summary = std::fs::read_to_string(out.join("run/summary.txt")).unwrap();
    assert!(summary.contains("status = ok"));
    assert!(summary.contains("average_rate_per_s ="));

    // A second invocation without --resume/--overwrite refuses to touch the
    // non-empty directory.
    let refused = Command::new(exe())
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--overwrite"));

    // --resume leaves the completed point byte-for-byte untouched.
    let before = std::fs::read(out.join("run/series.csv")).unwrap();
    let status = Command::new(exe())
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--resume",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let after = std::fs::read(out.join("run/series.csv")).unwrap();
    assert_eq!(before, after);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn configuration_problems_exit_with_usage_code() {
    let dir = std::env::temp_dir().join(format!("capsim_cli_bad_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("bad.cfg");
    std::fs::write(
        &cfg,
        "scenario = band\nvessel_radius_um = oops\nmystery_knob = 1\n",
    )
    .unwrap();
    let output = Command::new(exe())
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.join("o").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(
        err.contains("mystery_knob"),
        "unknown key not reported: {err}"
    );
    assert!(
        err.contains("vessel_radius_um"),
        "bad number not reported: {err}"
    );
    assert!(
        err.contains("missing required key"),
        "missing keys not reported: {err}"
    );
    let _ = std::fs::remove_dir_all(&dir);

    let no_args = Command::new(exe()).output().unwrap();
    assert_eq!(no_args.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&no_args.stderr).contains("usage"));
}

#[test]
fn scenario_override_must_match_the_config() {
    let dir = std::env::temp_dir().join(format!("capsim_cli_ovr_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, coarse_config()).unwrap();
    let output = Command::new(exe())
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.join("o").to_str().unwrap(),
            "--scenario",
            "2",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn field_dump_headers_apply_to_tables_too() {
    // A sweep would take minutes at full resolution; emit_tables is covered
    // through the library against synthetic records instead.
    let records: Vec<(String, capsim::RunRecord)> = Vec::new();
    let dir = std::env::temp_dir().join(format!("capsim_cli_tbl_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    capsim::cli::emit_tables(Path::new(&dir), 0xabcd, &records).unwrap();
    let text = std::fs::read_to_string(dir.join("table_sphere.csv")).unwrap();
    assert!(text.starts_with("# config_hash = 000000000000abcd"));
    assert!(text.contains("metric,v0.2,v1,v2"));
    let _ = std::fs::remove_dir_all(&dir);
}
