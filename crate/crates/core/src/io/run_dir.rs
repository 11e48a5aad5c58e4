//! Layout of a run directory:
//!
//! ```text
//! resolved_config.toml
//! series.csv            step,t,lambda_1..lambda_m,dirichlet_energy,...
//! stages.csv            stage,epsilon,t_start,t_end,dt,steps,first_record
//! snapshots/snap_{k:06}_c{j}.bin
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flow::{FlowState, StageInfo, StepRecord, Trajectory};
use crate::grid::ScalarField;
use crate::io::format::fmt_f64;
use crate::io::snapshot::{read_field, read_header, write_snapshot, SnapshotHeader};

pub const SERIES_FILE: &str = "series.csv";
pub const STAGES_FILE: &str = "stages.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const CONFIG_FILE: &str = "resolved_config.toml";

pub fn snapshot_path(dir: &Path, k: usize, j: usize) -> PathBuf {
    dir.join(SNAPSHOT_DIR).join(format!("snap_{k:06}_c{j}.bin"))
}

pub fn series_header(m: usize) -> String {
    let mut cols = vec!["step".to_string(), "t".to_string()];
    cols.extend((1..=m).map(|j| format!("lambda_{j}")));
    cols.extend(
        ["dirichlet_energy", "penalty_energy", "total_energy", "max_overlap", "clip_mass"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols.join(",")
}

pub fn write_series_csv(w: &mut impl Write, traj: &Trajectory) -> Result<()> {
    writeln!(w, "{}", series_header(traj.components()))?;
    for r in &traj.series {
        write!(w, "{},{}", r.step, fmt_f64(r.t))?;
        for l in &r.lambda {
            write!(w, ",{}", fmt_f64(*l))?;
        }
        writeln!(
            w,
            ",{},{},{},{},{}",
            fmt_f64(r.dirichlet_energy),
            fmt_f64(r.penalty_energy),
            fmt_f64(r.total_energy),
            fmt_f64(r.max_overlap),
            fmt_f64(r.clip_mass)
        )?;
    }
    Ok(())
}

pub fn write_stages_csv(w: &mut impl Write, traj: &Trajectory) -> Result<()> {
    writeln!(w, "stage,epsilon,t_start,t_end,dt,steps,first_record")?;
    for (k, s) in traj.stages.iter().enumerate() {
        writeln!(
            w,
            "{k},{},{},{},{},{},{}",
            fmt_f64(s.epsilon),
            fmt_f64(s.t_start),
            fmt_f64(s.t_end),
            fmt_f64(s.dt),
            s.steps,
            s.first_record
        )?;
    }
    Ok(())
}

/// Writes the series, the stage table and every snapshot.
pub fn save_trajectory(dir: &Path, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir.join(SNAPSHOT_DIR))?;
    let mut w = BufWriter::new(fs::File::create(dir.join(SERIES_FILE))?);
    write_series_csv(&mut w, traj)?;
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join(STAGES_FILE))?);
    write_stages_csv(&mut w, traj)?;
    w.flush()?;
    let m = traj.components();
    for (k, s) in traj.snapshots.iter().enumerate() {
        let step = traj
            .series
            .iter()
            .rev()
            .find(|r| r.t.to_bits() == s.t.to_bits())
            .map_or(0, |r| r.step);
        for (j, f) in s.u.iter().enumerate() {
            let h = SnapshotHeader::for_field(&traj.grid, m, s.t, j, step, s.epsilon);
            write_snapshot(&snapshot_path(dir, k, j), &h, f.values())?;
        }
    }
    Ok(())
}

fn parse_num(field: &str, file: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Config(format!("{file}, line {line}: bad number {field:?}")))
}

fn parse_count(field: &str, file: &str, line: usize) -> Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::Config(format!("{file}, line {line}: bad integer {field:?}")))
}

fn read_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::NotFound(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

/// Reloads a run written by [`save_trajectory`]. Per-step diagnostics that
/// are not part of the series file (constraint error, energy residual,
/// defect mass) come back as NaN or empty.
pub fn load_trajectory(dir: &Path, c: &[f64]) -> Result<Trajectory> {
    let snap_dir = dir.join(SNAPSHOT_DIR);
    let mut names: Vec<String> = match fs::read_dir(&snap_dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.starts_with("snap_") && n.ends_with(".bin"))
            .collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    if names.is_empty() {
        return Err(Error::NotFound(format!("no snapshots under {}", snap_dir.display())));
    }
    let m = c.len();
    let first = read_header(&snap_dir.join(&names[0]))?;
    if first.m != m {
        return Err(Error::Config(format!("snapshots have m = {}, configuration has m = {m}", first.m)));
    }
    let grid = first.build_grid()?;
    if !names.len().is_multiple_of(m) {
        return Err(Error::NotFound(format!("incomplete snapshot set under {}", snap_dir.display())));
    }
    let mut snapshots = Vec::with_capacity(names.len() / m);
    for k in 0..names.len() / m {
        let mut u: Vec<ScalarField> = Vec::with_capacity(m);
        let mut meta = None;
        for j in 0..m {
            let p = snapshot_path(dir, k, j);
            if !p.exists() {
                return Err(Error::NotFound(format!("missing snapshot {}", p.display())));
            }
            let (h, f) = read_field(&p, &grid)?;
            if h.component != j {
                return Err(Error::Config(format!("{}: component index mismatch", p.display())));
            }
            meta = Some((h.t, h.epsilon));
            u.push(f);
        }
        let (t, eps) = meta.expect("m >= 1");
        snapshots.push(FlowState::new(u, t, eps, c)?);
    }

    let stages_file = dir.join(STAGES_FILE);
    let mut stages = Vec::new();
    for (i, row) in read_csv(&stages_file)?.iter().enumerate() {
        let f = STAGES_FILE;
        if row.len() != 7 {
            return Err(Error::Config(format!("{f}, line {}: expected 7 fields", i + 2)));
        }
        stages.push(StageInfo {
            epsilon: parse_num(&row[1], f, i + 2)?,
            t_start: parse_num(&row[2], f, i + 2)?,
            t_end: parse_num(&row[3], f, i + 2)?,
            dt: parse_num(&row[4], f, i + 2)?,
            steps: parse_count(&row[5], f, i + 2)?,
            first_record: parse_count(&row[6], f, i + 2)?,
        });
    }

    let mut series = Vec::new();
    for (i, row) in read_csv(&dir.join(SERIES_FILE))?.iter().enumerate() {
        let f = SERIES_FILE;
        let line = i + 2;
        if row.len() != 7 + m {
            return Err(Error::Config(format!("{f}, line {line}: expected {} fields", 7 + m)));
        }
        let stage = stages.iter().rposition(|s| s.first_record <= i).unwrap_or(0);
        let lambda = (0..m).map(|j| parse_num(&row[2 + j], f, line)).collect::<Result<Vec<_>>>()?;
        series.push(StepRecord {
            step: parse_count(&row[0], f, line)?,
            t: parse_num(&row[1], f, line)?,
            stage,
            epsilon: stages.get(stage).map_or(f64::NAN, |s| s.epsilon),
            lambda,
            dirichlet_energy: parse_num(&row[2 + m], f, line)?,
            penalty_energy: parse_num(&row[3 + m], f, line)?,
            total_energy: parse_num(&row[4 + m], f, line)?,
            max_overlap: parse_num(&row[5 + m], f, line)?,
            clip_mass: parse_num(&row[6 + m], f, line)?,
            constraint_error: f64::NAN,
            energy_residual: f64::NAN,
            defect_mass: Vec::new(),
        });
    }
    if series.is_empty() {
        return Err(Error::NotFound(format!("{} has no records", dir.join(SERIES_FILE).display())));
    }
    Ok(Trajectory {
        grid,
        c: c.to_vec(),
        snapshot_stride: 1,
        snapshots,
        series,
        stages,
    })
}
