use std::fs;
use std::path::Path;

use featmass::ReplicateDataset;
use featmass_cli::config::MAX_SEED;
use featmass_cli::experiments::{simulate_header, simulate_table};
use featmass_cli::report::json_bytes;
use featmass_cli::{run, Experiment, ExperimentConfig, Family, RunOptions};
use proptest::prelude::*;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn options(config: std::path::PathBuf, out: &Path) -> RunOptions {
    RunOptions {
        config,
        out_dir: out.to_path_buf(),
        seed: None,
        threads: 0,
        expect: None,
    }
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = match fs::read_dir(dir) {
        Ok(rd) => rd
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    names
}

#[test]
fn moments_of_a_single_fair_feature() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
experiment = "moments"
n_grid = [1]
[family]
kind = "finite_uniform"
count = 1
p = 0.5
"#,
    );
    let out = tmp.path().join("out");
    let outcome = run(&options(cfg, &out)).unwrap();
    assert_eq!(outcome.exit_code(), 0);
    let csv = fs::read_to_string(out.join("moments.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "expected_m_n").unwrap();
    assert_eq!(row[col].parse::<f64>().unwrap(), 0.25);
    let json = fs::read_to_string(out.join("moments.json")).unwrap();
    assert!(json.contains("\"config_digest\""));
    assert!(json.contains("\"version\""));
}

#[test]
fn malformed_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
experiment = "simulate"
n_grid = [10]
replicates = 3
[family]
kind = "power_law"
alpha = 1.5
scale = 0.1
truncation_threshold = 1e-6
"#,
    );
    let out = tmp.path().join("out");
    let err = run(&options(cfg, &out)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("alpha"));
    assert!(files_in(&out).is_empty());
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "experiment = \"moments\"\nn_grid = [1]\nseed = 3\n[family]\nkind = \"finite_uniform\"\ncount = 1\np = 0.5\n",
    );
    let err = run(&options(cfg, &tmp.path().join("out"))).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn subcommand_must_match_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "experiment = \"moments\"\nn_grid = [1]\n[family]\nkind = \"finite_uniform\"\ncount = 1\np = 0.5\n",
    );
    let mut opts = options(cfg, &tmp.path().join("out"));
    opts.expect = Some(Experiment::Bounds);
    let err = run(&opts).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("experiment"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "experiment = \"moments\"\nn_grid = [1]\n[family]\nkind = \"finite_uniform\"\ncount = 1\np = 0.5\n",
    );
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let err = run(&options(cfg, &blocker.join("out"))).unwrap_err();
    assert_eq!(err.exit_code(), 5);
}

const BOUNDS: &str = r#"
experiment = "bounds"
n_grid = [10, 50]
replicates = 2000
master_seed = 5
[family]
kind = "power_law"
alpha = 0.5
scale = 0.1
truncation_threshold = 1e-8
"#;

#[test]
fn bounds_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BOUNDS);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let mut oa = options(cfg.clone(), &a);
    oa.threads = 1;
    let mut ob = options(cfg, &b);
    ob.threads = 8;
    run(&oa).unwrap();
    run(&ob).unwrap();
    let names = files_in(&a);
    assert_eq!(
        names,
        [
            "bounds.json",
            "bounds_knr_n10.csv",
            "bounds_knr_n50.csv",
            "bounds_n10.csv",
            "bounds_n50.csv"
        ]
    );
    assert_eq!(names, files_in(&b));
    for name in names {
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name}"
        );
    }
    let header = fs::read_to_string(a.join("bounds_n10.csv")).unwrap();
    assert!(header.starts_with(
        "x,v_minus,v_plus,left_bound,right_bound,emp_left,emp_right,stderr_left,stderr_right,violation_flag\n"
    ));
}

#[test]
fn seed_override_changes_the_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BOUNDS);
    let base = featmass_cli::load_config(&cfg, None).unwrap();
    let over = featmass_cli::load_config(&cfg, Some(6)).unwrap();
    assert_eq!(over.master_seed, 6);
    assert_ne!(base.digest(), over.digest());
}

#[test]
fn empty_dataset_renders_header_only() {
    let ds = ReplicateDataset {
        config_digest: None,
        master_seed: 0,
        n_grid: vec![10],
        replicates: 0,
        max_frequency: 2,
        records: Vec::new(),
    };
    let csv = String::from_utf8(simulate_table(&ds).into_bytes()).unwrap();
    assert_eq!(csv, format!("{}\n", simulate_header(2).join(",")));
    assert_eq!(
        csv,
        "replicate,n,k_n,k_n1,k_n2,m_oracle,m_hat,tail_mass_bound\n"
    );
    let json: serde_json::Value = serde_json::from_slice(&json_bytes(&ds).unwrap()).unwrap();
    assert_eq!(json["records"].as_array().unwrap().len(), 0);
}

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        (0.01f64..0.99, 0.01f64..1.0, 0.0f64..0.5, 1e-12f64..1e-3).prop_map(|(a, c, b, t)| {
            Family::PowerLaw {
                alpha: a,
                scale: c,
                log_exponent: b,
                truncation_threshold: t,
            }
        }),
        (0.01f64..0.99, 1e-12f64..1e-2).prop_map(|(q, t)| Family::Geometric {
            ratio: q,
            truncation_threshold: t,
        }),
        (1usize..10_000, 1e-6f64..=1.0).prop_map(|(count, p)| Family::FiniteUniform { count, p }),
        (1e-12f64..1e-2, 0u64..1_000_000).prop_map(|(e, tilt)| Family::GammaProcess {
            jump_truncation: e,
            tilt,
        }),
    ]
}

fn config() -> impl Strategy<Value = ExperimentConfig> {
    (
        prop::sample::select(Experiment::ALL.to_vec()),
        prop::collection::btree_set(1u64..=MAX_SEED, 1..6),
        1usize..100_000,
        0u64..=MAX_SEED,
        1usize..20,
        1e-4f64..0.9,
        prop::option::of(prop::collection::vec(0.0f64..10.0, 1..5)),
        prop::option::of("[a-z][a-z0-9_]{0,10}"),
        family(),
    )
        .prop_map(
            |(experiment, grid, replicates, seed, r, eps, x_grid, stem, family)| ExperimentConfig {
                experiment,
                n_grid: grid.into_iter().collect(),
                replicates,
                master_seed: seed,
                max_frequency: r,
                epsilon: eps,
                x_grid,
                k_grid: None,
                output_stem: stem,
                family,
            },
        )
}

proptest! {
    #[test]
    fn config_round_trips_through_toml(c in config()) {
        let text = c.to_toml().unwrap();
        let back = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.digest(), c.digest());
    }
}
