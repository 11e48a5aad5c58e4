//! The four CLI commands. Each returns the process exit code and writes a
//! one-line diagnostic to stderr on failure.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | numerical or I/O failure |
//! | 2 | invalid configuration or arguments |
//! | 3 | trajectory artifacts missing or out of range |
//! | 4 | no plateau of the multipliers by the end of the run |

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::asymptotics::{detect_plateau, extract_limit, ConvergenceReport, EigenOptions, PartitionSummary};
use crate::error::{Error, Result};
use crate::flow::{epsilon_continuation, run_flow, Trajectory};
use crate::frequency::{classify_point, probe_many, FrequencyProbe};
use crate::grid::{build_grid, Geometry};
use crate::io::config::RunConfig;
use crate::io::format::{fmt_f64, to_json};
use crate::io::run_dir::{load_trajectory, save_trajectory, CONFIG_FILE};
use crate::io::snapshot::{write_snapshot, SnapshotHeader};
use crate::oracle::{optimal_partition_1d, optimal_partition_2d_search, LineFamily, OracleResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_NO_PLATEAU: i32 = 4;

pub const FREQ_REPORT_FILE: &str = "freq_report.csv";
pub const PARTITION_REPORT_FILE: &str = "report.json";
pub const PARTITION_DIR: &str = "partition";

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Usage(_) => EXIT_CONFIG,
        Error::Stage { source, .. } => exit_code(source),
        _ => EXIT_FAILURE,
    }
}

fn fail(e: &Error) -> i32 {
    eprintln!("segflow: {e}");
    exit_code(e)
}

/// Loads a config file, mapping every failure to exit code 2.
pub fn load_config(path: &Path) -> std::result::Result<RunConfig, i32> {
    RunConfig::from_file(path).map_err(|e| {
        eprintln!("segflow: {e}");
        EXIT_CONFIG
    })
}

/// Runs the flow described by `cfg` and writes its artifacts to `out`.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> i32 {
    match run_to_dir(cfg, out) {
        Ok(traj) => {
            let last = traj.final_state();
            let lambdas: Vec<String> = last.lambda.iter().map(|l| fmt_f64(*l)).collect();
            println!(
                "t = {}  steps = {}  lambda = [{}]  total_energy = {}",
                fmt_f64(last.t),
                traj.series.last().map_or(0, |r| r.step),
                lambdas.join(", "),
                fmt_f64(last.total_energy())
            );
            EXIT_OK
        }
        Err(e) => fail(&e),
    }
}

/// The flow part of [`cmd_run`], usable from tests.
pub fn run_to_dir(cfg: &RunConfig, out: &Path) -> Result<Trajectory> {
    let grid = cfg.build_grid()?;
    let g = cfg.initial_fields(&grid)?;
    let params = cfg.flow_params();
    let schedule = cfg.schedule();
    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_toml_string()?)?;
    let traj = if schedule.len() == 1 {
        run_flow(&g, &params, cfg.flow.snapshot_stride)?
    } else {
        epsilon_continuation(&g, &params, &schedule, cfg.flow.snapshot_stride)?
    };
    save_trajectory(out, &traj)?;
    Ok(traj)
}

fn load_run(cfg: &RunConfig, run: &Path) -> std::result::Result<Trajectory, i32> {
    let c = cfg.flow_params().c;
    load_trajectory(run, &c).map_err(|e| {
        eprintln!("segflow: {e}");
        match e {
            Error::NotFound(_) | Error::Io(_) => EXIT_MISSING,
            other => exit_code(&other),
        }
    })
}

/// Probes every configured base and writes `freq_report.csv` into `run`.
pub fn cmd_freq(cfg: &RunConfig, run: &Path) -> i32 {
    let traj = match load_run(cfg, run) {
        Ok(t) => t,
        Err(code) => return code,
    };
    if cfg.probe.bases.is_empty() {
        eprintln!("segflow: probe.bases is empty");
        return EXIT_CONFIG;
    }
    let bases: Vec<(Vec<f64>, f64)> = cfg.probe.bases.iter().map(|b| (b.x.clone(), b.t)).collect();
    let results = probe_many(&traj, &bases, &cfg.probe.radii_policy(), cfg.probe.metric);
    // Missing time or space coverage is a missing-artifact condition.
    if let Some(e) = results.iter().find_map(|r| match r {
        Err(e @ Error::Range(_)) => Some(e),
        _ => None,
    }) {
        eprintln!("segflow: {e}");
        return EXIT_MISSING;
    }
    match write_freq_report(cfg, run, &bases, &results) {
        Ok(()) => EXIT_OK,
        Err(e) => fail(&e),
    }
}

fn write_freq_report(
    cfg: &RunConfig,
    run: &Path,
    bases: &[(Vec<f64>, f64)],
    results: &[Result<FrequencyProbe>],
) -> Result<()> {
    let delta = cfg.analysis.class_delta.unwrap_or(f64::NAN);
    let tol = cfg.analysis.class_tol;
    let dim = cfg.grid.dim;
    let mut w = BufWriter::new(fs::File::create(run.join(FREQ_REPORT_FILE))?);
    let axes = ["x", "y"];
    write!(w, "probe,row")?;
    for a in axes.iter().take(dim) {
        write!(w, ",{a}")?;
    }
    writeln!(w, ",t0,R,I,H,N,fitted_C,alpha_hat,class")?;
    for (k, ((x0, t0), r)) in bases.iter().zip(results).enumerate() {
        let base: String = x0.iter().map(|v| format!(",{}", fmt_f64(*v))).collect();
        let t0 = fmt_f64(*t0);
        match r {
            Ok(p) => {
                for i in 0..p.radii.len() {
                    writeln!(
                        w,
                        "{k},radius{base},{t0},{},{},{},{},,,",
                        fmt_f64(p.radii[i]),
                        fmt_f64(p.i_vals[i]),
                        fmt_f64(p.h_vals[i]),
                        fmt_f64(p.n_vals[i])
                    )?;
                }
                let (alpha, class) = match p.alpha_hat {
                    Some(a) => (fmt_f64(a), classify_point(a, delta, tol).as_str()),
                    None => (String::new(), "Unresolved"),
                };
                writeln!(w, "{k},summary{base},{t0},,,,,{},{alpha},{class}", fmt_f64(p.fitted_c))?;
            }
            Err(Error::DegenerateProbe { .. }) => {
                writeln!(w, "{k},summary{base},{t0},,,,,,,Degenerate")?;
            }
            Err(e) => return Err(Error::Numerical(format!("probe {k}: {e}"))),
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct PartitionReport {
    pub convergence: ConvergenceReport,
    pub partition: PartitionSummary,
}

/// Extracts the limiting partition, writes `report.json` and the
/// eigenfunctions under `partition/`.
pub fn cmd_partition(cfg: &RunConfig, run: &Path) -> i32 {
    let traj = match load_run(cfg, run) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let a = &cfg.analysis;
    let Some(t_plateau) = detect_plateau(&traj.lambda_series(), a.plateau_rel_tol, a.plateau_window) else {
        eprintln!(
            "segflow: no plateau of the multipliers by t = {} (rel_tol {}, window {})",
            fmt_f64(traj.time_range().1),
            a.plateau_rel_tol,
            a.plateau_window
        );
        return EXIT_NO_PLATEAU;
    };
    let opts = EigenOptions {
        tol: a.eig_tol,
        max_iter: a.eig_max_iter,
    };
    let result = extract_limit(&traj, t_plateau, a.interface_threshold, opts).and_then(|(part, conv)| {
        let dir = run.join(PARTITION_DIR);
        fs::create_dir_all(&dir)?;
        let m = part.eigfuns.len();
        for (j, f) in part.eigfuns.iter().enumerate() {
            let eps = traj.final_state().epsilon;
            let h = SnapshotHeader::for_field(&traj.grid, m, conv.t_final, j, 0, eps);
            write_snapshot(&dir.join(format!("eig_c{j}.bin")), &h, f.values())?;
        }
        let report = PartitionReport {
            convergence: conv,
            partition: part.summary(),
        };
        let json = to_json(&report).map_err(|e| Error::Numerical(e.to_string()))?;
        fs::write(run.join(PARTITION_REPORT_FILE), json + "\n")?;
        Ok(report)
    });
    match result {
        Ok(r) => {
            let l: Vec<String> = r.convergence.lambda_inf.iter().map(|v| fmt_f64(*v)).collect();
            println!(
                "t_plateau = {}  lambda_inf = [{}]  objective = {}",
                fmt_f64(t_plateau),
                l.join(", "),
                fmt_f64(r.partition.objective)
            );
            EXIT_OK
        }
        Err(e) => fail(&e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    pub dim: usize,
    pub length: f64,
    pub counts: usize,
    pub m: usize,
    pub family: LineFamily,
    pub stride: usize,
    pub out: Option<PathBuf>,
}

pub fn oracle_result(spec: &OracleSpec) -> Result<OracleResult> {
    if spec.m == 0 {
        return Err(Error::Config("m must be at least 1".into()));
    }
    match spec.dim {
        1 => optimal_partition_1d(spec.length, spec.m),
        2 => {
            let grid = build_grid(2, &[spec.length, spec.length], &[spec.counts, spec.counts], Geometry::Box)?;
            optimal_partition_2d_search(&grid, spec.m, spec.family, spec.stride, EigenOptions::default())
        }
        d => Err(Error::Config(format!("dim must be 1 or 2, got {d}"))),
    }
}

/// Prints the oracle result as JSON (and writes it to `spec.out` if set).
pub fn cmd_oracle(spec: &OracleSpec) -> i32 {
    let r = match oracle_result(spec) {
        Ok(r) => r,
        Err(e @ Error::Domain(_)) => {
            eprintln!("segflow: {e}");
            return EXIT_CONFIG;
        }
        Err(e) => return fail(&e),
    };
    let json = match to_json(&r) {
        Ok(j) => j,
        Err(e) => return fail(&Error::Numerical(e.to_string())),
    };
    println!("{json}");
    if let Some(p) = &spec.out {
        if let Err(e) = fs::write(p, json + "\n") {
            return fail(&Error::Io(e));
        }
    }
    EXIT_OK
}
