use std::fs;
use std::path::Path;
use std::process::Command;

use obstacle_core::harness::{dump_fields, load_config, run_experiment, ExperimentConfig, RunOptions, Suite};
use obstacle_core::mesh::{inner_product, norm_l2_sq};
use obstacle_core::noise::sample_path;
use obstacle_core::solver::solve_path;

fn small() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.grid.n_cells = 24;
    c.time.n_steps = 24;
    c.monte_carlo.n_paths = 6;
    c.structural.n_samples = 500;
    c.structural.n_pairs = 50;
    c
}

/// Every artifact file except `metadata.json`, keyed by name.
fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "metadata.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn run_into(cfg: &ExperimentConfig, dir: &Path, workers: usize) {
    let mut c = cfg.clone();
    c.output_dir = dir.to_path_buf();
    run_experiment(&c, &RunOptions { workers, write: true }).unwrap();
}

#[test]
fn reruns_and_worker_counts_give_identical_bytes() {
    // The config snapshot records the output directory, so every run of the
    // identical config writes to the same place; bytes are captured in between.
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    run_into(&cfg, dir.path(), 1);
    let first = data_files(dir.path());
    assert!(first.len() > 10);
    run_into(&cfg, dir.path(), 1);
    assert_eq!(first, data_files(dir.path()));
    run_into(&cfg, dir.path(), 3);
    assert_eq!(first, data_files(dir.path()));
    assert!(dir.path().join("metadata.json").exists());
}

#[test]
fn csv_is_self_describing() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    run_into(&cfg, dir.path(), 1);
    let text = fs::read_to_string(dir.path().join("complementarity.csv")).unwrap();
    let mut lines = text.lines();
    let head = lines.next().unwrap();
    assert!(head.starts_with("# report=complementarity,config_hash="));
    assert!(head.contains(&cfg.hash().unwrap()));
    assert!(head.ends_with(&format!("seed={}", cfg.monte_carlo.base_seed)));
    assert_eq!(lines.next(), Some("quantity,value,ci95,threshold,pass"));
    let index: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("index.json")).unwrap()).unwrap();
    assert_eq!(index["config_hash"], cfg.hash().unwrap());
    assert!(index["reports"].as_array().unwrap().len() >= 7);
}

#[test]
fn single_deterministic_path_reproduces_direct_values() {
    let mut cfg = small();
    cfg.noise.modes = 0;
    cfg.monte_carlo.n_paths = 1;
    cfg.tests = vec![Suite::Complementarity];
    let art = run_experiment(&cfg, &RunOptions { workers: 1, write: false }).unwrap();
    let r = art.report("complementarity").unwrap();

    let pr = cfg.build_problem().unwrap();
    let path = sample_path(cfg.monte_carlo.base_seed, pr.n_steps(), pr.dt(), 0).unwrap();
    let sol = solve_path(&pr, &path).unwrap();
    let dt = pr.dt();
    let mut pairing = 0.0;
    let mut energy = 0.0;
    for n in 1..=pr.n_steps() {
        pairing += dt * inner_product(&sol.rho[n], &sol.u[n].sub(pr.obstacle(n)).unwrap()).unwrap();
        energy += dt * norm_l2_sq(&sol.rho[n]);
    }
    assert_eq!(r.value("rho-pairing"), Some(pairing));
    assert_eq!(r.value("eps-rho-energy"), Some(pr.epsilon() * energy));
    assert!(r.quantity("rho-pairing").unwrap().ci95.is_infinite());
}

#[test]
fn suite_errors_are_recorded_and_the_run_continues() {
    let mut cfg = small();
    cfg.newton.max_iter = 1;
    cfg.newton.tol = 1e-15;
    cfg.tests = vec![Suite::Complementarity, Suite::Structural];
    let art = run_experiment(&cfg, &RunOptions { workers: 1, write: false }).unwrap();
    assert!(art.report("complementarity").unwrap().error.is_some());
    assert!(art.report("structural").unwrap().pass());
    assert!(!art.pass());
}

#[test]
fn field_dump_has_one_row_per_node_and_time() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let file = dump_fields(&cfg, 2, dir.path()).unwrap();
    let text = fs::read_to_string(file).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# fields=path2,"));
    assert_eq!(lines[1], "t,x,u,rho,psi,h_minus");
    assert_eq!(lines.len() - 2, (cfg.time.n_steps + 1) * (cfg.grid.n_cells - 1));
    assert!(lines[2].ends_with(",NaN"));
}

#[test]
fn load_config_reports_parse_context() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "schema_version = 1\n[grid]\nn_cells = \"many\"\n").unwrap();
    let err = load_config(&p).unwrap_err().to_string();
    assert!(err.contains("bad.toml") && err.contains("n_cells"), "{err}");
    let cfg = small();
    fs::write(&p, cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(load_config(&p).unwrap(), cfg);
}

fn cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_obstacle"))
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut cfg = small();
    cfg.output_dir = d.join("out");
    let good = d.join("good.toml");
    fs::write(&good, cfg.to_toml_string().unwrap()).unwrap();
    let good = good.to_str().unwrap();

    assert_eq!(cli(&["validate", good]), 0);
    assert_eq!(cli(&["oracle", good, "--out", d.join("o").to_str().unwrap()]), 0);
    assert_eq!(cli(&["dump-fields", good, "--path-index", "1"]), 0);
    assert!(d.join("out/fields-path1.csv").exists());
    assert_eq!(cli(&["dump-fields", good, "--path-index", "99"]), 2);

    let bad = d.join("bad.toml");
    fs::write(&bad, "[penalty]\nepsilon = 0.0\n").unwrap();
    assert_eq!(cli(&["run", bad.to_str().unwrap()]), 2);
    fs::write(&bad, "mystery = 1\n").unwrap();
    assert_eq!(cli(&["run", bad.to_str().unwrap()]), 2);
    assert_eq!(cli(&["run", d.join("missing.toml").to_str().unwrap()]), 2);

    // Overstated coercivity makes the structural check fail.
    cfg.tests = vec![Suite::Structural];
    let mut c = cfg.clone();
    c.operator.constants = Some(obstacle_core::leray_lions::StructuralConstants {
        alpha: 100.0,
        ..obstacle_core::leray_lions::StructuralConstants::for_p_laplacian(cfg.operator.beta)
    });
    let failing = d.join("failing.toml");
    fs::write(&failing, c.to_toml_string().unwrap()).unwrap();
    assert_eq!(cli(&["validate", failing.to_str().unwrap()]), 1);
}

#[test]
fn seed_flag_overrides_base_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.tests = vec![Suite::Complementarity];
    let file = dir.path().join("c.toml");
    fs::write(&file, cfg.to_toml_string().unwrap()).unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(cli(&["run", file.to_str().unwrap(), "--seed", "77", "--out", out, "--workers", "2"]), 0);
    let index: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/index.json")).unwrap()).unwrap();
    assert_eq!(index["seed"], 77);
    cfg.monte_carlo.base_seed = 77;
    assert_eq!(index["config_hash"], cfg.hash().unwrap());
}

#[test]
fn shipped_config_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.toml");
    assert_eq!(load_config(&path).unwrap(), ExperimentConfig::default());
}
