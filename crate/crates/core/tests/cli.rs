use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chiral_film::config::{PerturbationSpec, SurfaceSpec, TargetShape, TensorSpec};
use chiral_film::harness::{preset, PRESET_MS};
use chiral_film::report::{self, parse_field_csv, report_from_json, report_to_json};
use chiral_film::{
    eval_limit_energy, eval_limit_energy_general, random_field, BoundTensor, EnergyBreakdown, Layout, RunConfig,
};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chiral-film")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path, perturbation: PerturbationSpec) -> RunConfig {
    let mut cfg = preset("bulk").unwrap();
    cfg.surface = SurfaceSpec::sphere_band(12);
    cfg.perturbation = perturbation;
    cfg.sweep.n_s = 4;
    cfg.sweep.eps = Some(vec![0.2, 0.1, 0.05]);
    cfg.output_dir = dir.join("out");
    cfg
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.echo()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn preset_echo_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    for name in chiral_film::harness::PRESET_NAMES {
        let path = dir.path().join(format!("{name}.json"));
        let out = bin(&["preset", name, "--out", s(&path)]);
        assert_eq!(out.status.code(), Some(0));
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.echo(), text);
        assert_eq!(RunConfig::from_json(&cfg.echo(), "echo").unwrap().echo(), text);
    }
    let bulk = RunConfig::load(&dir.path().join("bulk.json")).unwrap();
    assert_eq!(bulk.perturbation, PerturbationSpec::BulkDmi { kappa: 1.0 });
    assert_eq!(bulk.target.shape, TargetShape::Sphere { radius: 1.0 });
    assert_eq!(bulk.eps_list(), &[0.2, 0.1, 0.05, 0.025]);
}

#[test]
fn defaults_are_materialized_in_the_echo() {
    let minimal = r#"{
        "surface": {"shape": {"type": "sphere", "radius": 1.0}, "n_u": 8, "n_v": 8},
        "target": {"shape": {"type": "sphere", "radius": 1.0}},
        "perturbation": {"type": "bulk_dmi", "kappa": 1.0}
    }"#;
    let cfg = RunConfig::from_json(minimal, "minimal").unwrap();
    let echo = cfg.echo();
    for key in ["theta_cap", "eps_cap", "\"eps\"", "n_s", "warm_start", "max_iterations", "output_dir", "seed"] {
        assert!(echo.contains(key), "{key} missing from echo");
    }
    assert_eq!(RunConfig::from_json(&echo, "echo").unwrap().echo(), echo);
}

#[test]
fn unknown_keys_and_bad_values_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), PerturbationSpec::Zero);
    let mut doc: serde_json::Value = serde_json::from_str(&cfg.echo()).unwrap();
    doc["surface"]["bogus"] = 1.into();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = bin(&["sweep", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("surface") && err.contains("bogus"), "{err}");

    let good = write_config(dir.path(), &cfg);
    let out = bin(&["sweep", "--config", s(&good), "--eps", "0.05,0.1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep.eps[1]"));
    let out = bin(&["sweep", "--config", s(&good), "--eps", "0.9"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_energy_matches_library_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path(), PerturbationSpec::AnisotropicDmi { j: chiral_film::harness::PRESET_J });
    cfg.tensor = Some(TensorSpec::ScalarField { a: PRESET_MS });
    let config = write_config(dir.path(), &cfg);
    let grid = cfg.surface.build().unwrap();
    let target = cfg.target.build().unwrap();
    let pert = cfg.perturbation.kind().bind(&grid).unwrap();
    let tensor: BoundTensor = cfg.tensor.unwrap().tensor().bind(&grid).unwrap();

    let surface = random_field(&grid, &target, Layout::Surface, 5).unwrap();
    let thin = random_field(&grid, &target, Layout::Thin { n_s: 4 }, 6).unwrap();
    // the CLI reads fields back from CSV, so compare against the parsed values
    let surface_csv = dir.path().join("surface.csv");
    let thin_csv = dir.path().join("thin.csv");
    std::fs::write(&surface_csv, report::field_csv(&surface, &grid).unwrap()).unwrap();
    std::fs::write(&thin_csv, report::field_csv(&thin, &grid).unwrap()).unwrap();
    let surface = parse_field_csv(&std::fs::read_to_string(&surface_csv).unwrap(), &grid, "s").unwrap();
    let thin = parse_field_csv(&std::fs::read_to_string(&thin_csv).unwrap(), &grid, "t").unwrap();

    let expected = [
        ("limit", &surface_csv, eval_limit_energy(&surface, &grid, &target, &pert).unwrap()),
        ("general", &surface_csv, eval_limit_energy_general(&surface, &grid, &target, &pert, &tensor).unwrap()),
        (
            "thin",
            &thin_csv,
            chiral_film::energy::Energy::thin(&grid, &target, &pert, 0.2, Some(&tensor)).evaluate(&thin).unwrap(),
        ),
    ];
    for (form, field, lib) in expected {
        let out = bin(&["--json", "eval-energy", "--config", s(&config), "--form", form, "--field", s(field)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let cli: EnergyBreakdown = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(cli.total.to_bits(), lib.total.to_bits(), "{form}");
        assert_eq!(cli.tangential.to_bits(), lib.tangential.to_bits(), "{form}");
        assert_eq!(cli.normal_or_anisotropy.to_bits(), lib.normal_or_anisotropy.to_bits(), "{form}");
    }
    let out = bin(&["eval-energy", "--config", s(&config), "--form", "thin", "--field", s(&surface_csv)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(cfg.output_dir.join(report::CONFIG_ECHO_FILE).exists());
    assert!(cfg.output_dir.join(report::VERSION_FILE).exists());
}

#[test]
fn sweep_artifacts_are_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), PerturbationSpec::BulkDmi { kappa: 1.0 });
    let config = write_config(dir.path(), &cfg);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let o = bin(&["--quiet", "sweep", "--config", s(&config), "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
    }
    let report_a = std::fs::read(out_a.join(report::REPORT_FILE)).unwrap();
    assert_eq!(report_a, std::fs::read(out_b.join(report::REPORT_FILE)).unwrap());

    let text = String::from_utf8(report_a).unwrap();
    let parsed = report_from_json(&text).unwrap();
    assert_eq!(report_to_json(&parsed), text);
    let lib = chiral_film::run_sweep(&cfg).unwrap();
    assert_eq!(lib.report, parsed);

    let csv = std::fs::read_to_string(out_a.join(report::SWEEP_CSV_FILE)).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "eps,minE_eps,minE_limit,gap,recovery_gap,h1_dist");
    assert_eq!(csv.lines().count(), 1 + cfg.eps_list().len());

    let grid = cfg.surface.build().unwrap();
    let limit = report::read_field_csv(&out_a.join("fields/limit.csv"), &grid).unwrap();
    assert_eq!(limit, lib.limit_field);
    for (i, f) in lib.thin_fields.iter().enumerate() {
        let read = report::read_field_csv(&out_a.join("fields").join(report::thin_field_name(i)), &grid).unwrap();
        assert_eq!(&read, f.as_ref().unwrap());
    }

    let mut echoed = cfg.clone();
    echoed.output_dir = out_a.clone();
    assert_eq!(std::fs::read_to_string(out_a.join(report::CONFIG_ECHO_FILE)).unwrap(), echoed.echo());
    assert_eq!(
        std::fs::read_to_string(out_a.join(report::VERSION_FILE)).unwrap().trim(),
        env!("CARGO_PKG_VERSION")
    );
}

#[test]
fn zero_fixture_sweep_has_zero_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), PerturbationSpec::Zero);
    let config = write_config(dir.path(), &cfg);
    let out = bin(&["--json", "sweep", "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(0));
    let report: chiral_film::SweepReport = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.checks.passed);
    assert!(report.entries.iter().all(|e| e.gap.unwrap() < 1e-9));
}

#[test]
fn minimize_and_describe_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), PerturbationSpec::BulkDmi { kappa: 1.0 });
    let config = write_config(dir.path(), &cfg);
    let grid = cfg.surface.build().unwrap();

    let out = bin(&["--json", "describe-surface", "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["eps_max"].as_f64(), Some(grid.budget.eps_max));
    let frames = std::fs::read_to_string(cfg.output_dir.join("frames.csv")).unwrap();
    assert_eq!(frames.lines().count(), 1 + grid.n_nodes());

    for form in ["limit", "thin"] {
        let out = bin(&["--json", "minimize", "--config", s(&config), "--form", form, "--seed", "9"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        let trace = std::fs::read_to_string(cfg.output_dir.join("trace.csv")).unwrap();
        assert_eq!(trace.lines().next().unwrap(), "iteration,energy,grad_norm");
        assert_eq!(trace.lines().count(), 2 + summary["iterations"].as_u64().unwrap() as usize);
        let u = report::read_field_csv(&cfg.output_dir.join("fields/minimizer.csv"), &grid).unwrap();
        assert_eq!(u.layout == Layout::Surface, form == "limit");
        let echoed = RunConfig::load(&cfg.output_dir.join(report::CONFIG_ECHO_FILE)).unwrap();
        assert_eq!(echoed.seed, 9);
    }

    let out = bin(&["--json", "check-identities", "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], serde_json::Value::Bool(true));
}
