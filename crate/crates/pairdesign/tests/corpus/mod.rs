//! The golden-file pipeline over the bundled 16-row sample.
//!
//! Each step writes `<work>/<name>.json`; later steps read earlier outputs.
//! Golden copies live in `tests/golden/`. Regenerate them with
//! `UPDATE_GOLDEN=1 cargo test -p pairdesign --test cli`.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

pub struct Step {
    pub name: &'static str,
    pub args: &'static [&'static str],
}

/// `{data}` is the test data directory, `{work}` the scratch directory and
/// `{threads}` the simulate thread count.
pub const STEPS: &[Step] = &[
    Step { name: "pair_baseline", args: &["pair", "--input", "{data}/example.csv", "--method", "baseline"] },
    Step { name: "pair_scalar", args: &["pair", "--input", "{data}/example.csv", "--method", "scalar:x2"] },
    Step { name: "pair_mahalanobis", args: &["pair", "--input", "{data}/example.csv", "--method", "mahalanobis"] },
    Step {
        name: "pair_penalized",
        args: &["pair", "--input", "{data}/example.csv", "--method", "penalized", "--pilot", "{data}/pilot.csv"],
    },
    Step {
        name: "pair_pilot",
        args: &["pair", "--input", "{data}/example.csv", "--method", "pilot", "--pilot", "{data}/pilot.csv"],
    },
    Step { name: "pair_sets4", args: &["pair", "--input", "{data}/example.csv", "--method", "sets4:mahalanobis"] },
    Step { name: "pair_by_label", args: &["pair", "--input", "{data}/example.csv", "--method", "baseline", "--by-label"] },
    Step {
        name: "pair_kstrata",
        args: &["pair", "--input", "{data}/example.csv", "--method", "kstrata:1=1/2,2=1/4"],
    },
    Step { name: "assign_mahalanobis", args: &["assign", "--strata", "{work}/pair_mahalanobis.json", "--seed", "42"] },
    Step { name: "assign_baseline", args: &["assign", "--strata", "{work}/pair_baseline.json", "--seed", "7"] },
    Step { name: "assign_sets4", args: &["assign", "--strata", "{work}/pair_sets4.json", "--seed", "42"] },
    Step { name: "assign_kstrata", args: &["assign", "--strata", "{work}/pair_kstrata.json", "--seed", "5"] },
    Step {
        name: "estimate_adj",
        args: &[
            "estimate", "--input", "{data}/example.csv", "--strata", "{work}/pair_mahalanobis.json",
            "--assignment", "{work}/assign_mahalanobis.json",
        ],
    },
    Step {
        name: "estimate_mpt",
        args: &[
            "estimate", "--input", "{data}/example.csv", "--strata", "{work}/pair_baseline.json",
            "--assignment", "{work}/assign_baseline.json", "--variance", "mpt", "--theta0", "0.5",
        ],
    },
    Step {
        name: "estimate_two_sample",
        args: &[
            "estimate", "--input", "{data}/example.csv", "--strata", "{work}/pair_baseline.json",
            "--assignment", "{work}/assign_baseline.json", "--variance", "two-sample",
        ],
    },
    Step {
        name: "estimate_adj4",
        args: &[
            "estimate", "--input", "{data}/example.csv", "--strata", "{work}/pair_sets4.json",
            "--assignment", "{work}/assign_sets4.json",
        ],
    },
    Step {
        name: "estimate_saturated",
        args: &[
            "estimate", "--input", "{data}/example.csv", "--strata", "{work}/pair_kstrata.json",
            "--assignment", "{work}/assign_kstrata.json", "--variance", "saturated",
        ],
    },
    Step {
        name: "estimate_attrition",
        args: &[
            "estimate", "--input", "{data}/example.csv", "--strata", "{work}/pair_baseline.json",
            "--assignment", "{work}/assign_baseline.json", "--attrition",
        ],
    },
    Step {
        name: "simulate_model2",
        args: &[
            "simulate", "--model", "2", "--input", "{data}/pilot.csv", "--methods",
            "none,mp-base,mp-x,ms-x,mp-base/mpt", "--reps", "30", "--seed", "11", "--threads", "{threads}",
        ],
    },
    Step {
        name: "simulate_synthetic",
        args: &[
            "simulate", "--dgp", "synthetic:theta=0.5,gamma1=3,gamma0=1,noise=1", "--methods",
            "none,mp-base,mp-col:noise,mp-pen,ms-base", "--reps", "20", "--n-draw", "40", "--seed", "3",
            "--threads", "{threads}",
        ],
    },
];

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn expand(step: &Step, work: &Path, threads: usize) -> Vec<String> {
    let data = data_dir();
    let mut args: Vec<String> = step
        .args
        .iter()
        .map(|a| {
            a.replace("{data}", data.to_str().unwrap())
                .replace("{work}", work.to_str().unwrap())
                .replace("{threads}", &threads.to_string())
        })
        .collect();
    args.push("--out".into());
    args.push(work.join(format!("{}.json", step.name)).to_str().unwrap().into());
    args
}

/// Run every step through the compiled binary.
pub fn run_binary(work: &Path, threads: usize) -> Result<(), String> {
    for step in STEPS {
        let args = expand(step, work, threads);
        let out = Command::new(env!("CARGO_BIN_EXE_pairdesign")).args(&args).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{}: {}", step.name, String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

/// Run every step in-process through the library entry point.
pub fn run_library(work: &Path, threads: usize) -> Result<(), String> {
    for step in STEPS {
        let mut argv = vec!["pairdesign".to_string()];
        argv.extend(expand(step, work, threads));
        pairdesign::cli::run(&argv).map_err(|e| format!("{}: {}", step.name, e.to_json()))?;
    }
    Ok(())
}

/// Names of outputs in `work` that differ from the golden copies.
pub fn mismatches(work: &Path) -> Vec<String> {
    STEPS
        .iter()
        .filter(|s| {
            let got = std::fs::read(work.join(format!("{}.json", s.name)));
            let want = std::fs::read(golden_dir().join(format!("{}.json", s.name)));
            match (got, want) {
                (Ok(a), Ok(b)) => a != b,
                _ => true,
            }
        })
        .map(|s| s.name.to_string())
        .collect()
}

pub fn write_golden(work: &Path) {
    std::fs::create_dir_all(golden_dir()).unwrap();
    for s in STEPS {
        let name = format!("{}.json", s.name);
        std::fs::copy(work.join(&name), golden_dir().join(&name)).unwrap();
    }
}
