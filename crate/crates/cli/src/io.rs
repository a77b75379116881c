//! File formats.
//!
//! * `trajectory.csv` — one row per record with fixed 17-significant-digit
//!   floats, preceded by a `format_version` line.
//! * `states.csv` / `states.bin` — the per-record state vectors, joined to
//!   the trajectory rows by the step index `k`.
//! * `summary.json`, `report.json`, `mesh.json` — structured metadata; all
//!   carry a `format_version` field.

use crate::CliError;
use ristep::{IterateRecord, Trajectory, VerificationReport};
use serde::Serialize;
use std::io::{Read, Write};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;
const STATE_MAGIC: &[u8; 8] = b"RSTEPST1";

/// 17 significant digits: enough for exact f64 round trips.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

const TRAJECTORY_HEADER: &str = "k,s,t,tau,lambda,i1,i2,norm_dz_v,rejected_count";

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&format!("format_version,{FORMAT_VERSION}\n"));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in traj.records() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.k,
            fmt_float(r.s),
            fmt_float(r.t),
            fmt_float(r.tau),
            fmt_float(r.lambda),
            fmt_float(r.i1),
            fmt_float(r.i2),
            fmt_float(r.norm_dz_v),
            r.rejected_count
        ));
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

struct TrajectoryRow {
    k: usize,
    s: f64,
    t: f64,
    tau: f64,
    lambda: f64,
    i1: f64,
    i2: f64,
    norm_dz_v: f64,
    rejected_count: u32,
}

fn parse_err(path: &Path, line: usize, message: impl std::fmt::Display) -> CliError {
    CliError::Parse {
        path: path.display().to_string(),
        message: format!("line {line}: {message}"),
    }
}

fn read_trajectory_rows(path: &Path) -> Result<Vec<TrajectoryRow>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (n0, version) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    if version.trim() != format!("format_version,{FORMAT_VERSION}") {
        return Err(parse_err(path, n0 + 1, "missing or unsupported format_version"));
    }
    let (n1, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 2, "missing header"))?;
    if header.trim() != TRAJECTORY_HEADER {
        return Err(parse_err(path, n1 + 1, "unexpected column header"));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(parse_err(path, idx + 1, "expected 9 columns"));
        }
        let fnum = |j: usize| -> Result<f64, CliError> {
            let v: f64 = fields[j]
                .trim()
                .parse()
                .map_err(|e| parse_err(path, idx + 1, format!("column {}: {e}", j + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(path, idx + 1, format!("column {}: non-finite", j + 1)));
            }
            Ok(v)
        };
        rows.push(TrajectoryRow {
            k: fields[0]
                .trim()
                .parse()
                .map_err(|e| parse_err(path, idx + 1, format!("column 1: {e}")))?,
            s: fnum(1)?,
            t: fnum(2)?,
            tau: fnum(3)?,
            lambda: fnum(4)?,
            i1: fnum(5)?,
            i2: fnum(6)?,
            norm_dz_v: fnum(7)?,
            rejected_count: fields[8]
                .trim()
                .parse()
                .map_err(|e| parse_err(path, idx + 1, format!("column 9: {e}")))?,
        });
    }
    Ok(rows)
}

pub fn write_states_csv(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let dim = traj.dim();
    let mut out = String::new();
    out.push_str(&format!("format_version,{FORMAT_VERSION}\n"));
    out.push('k');
    for i in 0..dim {
        out.push_str(&format!(",z{i}"));
    }
    out.push('\n');
    for r in traj.records() {
        out.push_str(&r.k.to_string());
        for &zi in &r.z {
            out.push(',');
            out.push_str(&fmt_float(zi));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

fn read_states_csv(path: &Path) -> Result<Vec<(usize, Vec<f64>)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (n0, version) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    if version.trim() != format!("format_version,{FORMAT_VERSION}") {
        return Err(parse_err(path, n0 + 1, "missing or unsupported format_version"));
    }
    lines.next(); // header
    let mut states = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let k: usize = fields
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|e| parse_err(path, idx + 1, format!("step index: {e}")))?;
        let z: Result<Vec<f64>, CliError> = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(path, idx + 1, format!("state entry: {e}")))
            })
            .collect();
        states.push((k, z?));
    }
    Ok(states)
}

pub fn write_states_bin(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let dim = traj.dim() as u64;
    let mut buf = Vec::with_capacity(24 + traj.records().len() * (8 + traj.dim() * 8));
    buf.extend_from_slice(STATE_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&dim.to_le_bytes());
    buf.extend_from_slice(&(traj.records().len() as u64).to_le_bytes());
    for r in traj.records() {
        buf.extend_from_slice(&(r.k as u64).to_le_bytes());
        for &zi in &r.z {
            buf.extend_from_slice(&zi.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

fn read_states_bin(path: &Path) -> Result<Vec<(usize, Vec<f64>)>, CliError> {
    let mut file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf).map_err(|e| CliError::io(path, e))?;
    let bad = |msg: &str| CliError::Parse {
        path: path.display().to_string(),
        message: msg.to_string(),
    };
    if buf.len() < 28 || &buf[0..8] != STATE_MAGIC {
        return Err(bad("not a state snapshot file"));
    }
    let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad("unsupported format_version"));
    }
    let dim = u64::from_le_bytes(buf[12..20].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(buf[20..28].try_into().unwrap()) as usize;
    let expect = 28 + count * (8 + 8 * dim);
    if buf.len() != expect {
        return Err(bad("truncated state snapshot file"));
    }
    let mut states = Vec::with_capacity(count);
    let mut pos = 28;
    for _ in 0..count {
        let k = u64::from_le_bytes(buf[pos..pos + 8].try_into().unwrap()) as usize;
        pos += 8;
        let mut z = Vec::with_capacity(dim);
        for _ in 0..dim {
            z.push(f64::from_le_bytes(buf[pos..pos + 8].try_into().unwrap()));
            pos += 8;
        }
        states.push((k, z));
    }
    Ok(states)
}

/// Reads states in either format, detected by the magic prefix.
pub fn read_states(path: &Path) -> Result<Vec<(usize, Vec<f64>)>, CliError> {
    let mut file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut magic = [0u8; 8];
    let n = file.read(&mut magic).map_err(|e| CliError::io(path, e))?;
    drop(file);
    if n == 8 && &magic == STATE_MAGIC {
        read_states_bin(path)
    } else {
        read_states_csv(path)
    }
}

/// Joins trajectory rows and state vectors into a [`Trajectory`].
pub fn read_trajectory(
    trajectory_path: &Path,
    states_path: &Path,
    model_id: &str,
    horizon: f64,
    tol: Option<f64>,
) -> Result<Trajectory, CliError> {
    let rows = read_trajectory_rows(trajectory_path)?;
    let states = read_states(states_path)?;
    if rows.is_empty() {
        return Err(CliError::Parse {
            path: trajectory_path.display().to_string(),
            message: "no records".into(),
        });
    }
    if rows.len() != states.len() {
        return Err(CliError::Parse {
            path: states_path.display().to_string(),
            message: format!(
                "{} state rows for {} trajectory rows",
                states.len(),
                rows.len()
            ),
        });
    }
    let dim = states[0].1.len();
    let mut records = Vec::with_capacity(rows.len());
    for (row, (k_state, z)) in rows.into_iter().zip(states) {
        if row.k != k_state {
            return Err(CliError::Parse {
                path: states_path.display().to_string(),
                message: format!("state index {k_state} does not match trajectory step {}", row.k),
            });
        }
        if z.len() != dim || z.iter().any(|zi| !zi.is_finite()) {
            return Err(CliError::Parse {
                path: states_path.display().to_string(),
                message: format!("state of step {} has bad entries", row.k),
            });
        }
        records.push(IterateRecord {
            k: row.k,
            s: row.s,
            t: row.t,
            tau: row.tau,
            z,
            lambda: row.lambda,
            i1: row.i1,
            i2: row.i2,
            norm_dz_v: row.norm_dz_v,
            rejected_count: row.rejected_count,
            i1_err_est: 0.0,
            i2_err_est: 0.0,
            kkt_max: 0.0,
        });
    }
    if records[0].s != 0.0 {
        return Err(CliError::Parse {
            path: trajectory_path.display().to_string(),
            message: "first record must have s = 0".into(),
        });
    }
    if records.windows(2).any(|w| w[1].s <= w[0].s) {
        return Err(CliError::Parse {
            path: trajectory_path.display().to_string(),
            message: "curve parameter must be strictly increasing".into(),
        });
    }
    Ok(Trajectory::new(records, tol, model_id.to_owned(), horizon))
}

#[derive(Serialize)]
pub struct RunSummary {
    pub format_version: u32,
    pub model_id: String,
    pub tol: Option<f64>,
    pub tau_init: f64,
    pub nq: usize,
    pub n_steps: usize,
    pub total_rejections: u32,
    pub s_last: f64,
    pub t_last: f64,
    pub crossing_s: Option<f64>,
    pub min_tau: f64,
    pub max_tau: f64,
    /// Step floor of the run and whether any accepted step came within
    /// three decades of it.
    pub tau_floor: f64,
    pub floor_approached: bool,
    pub sum_i1: f64,
    pub sum_i2: f64,
    pub max_i1: f64,
    pub max_i2: f64,
    pub regime_segments: Vec<ristep::RegimeSegment>,
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn from_trajectory(
        traj: &Trajectory,
        tau_init: f64,
        tau_floor_rel: f64,
        nq: usize,
        wall_time_s: f64,
    ) -> Self {
        let steps = &traj.records()[1..];
        let tau_floor = tau_floor_rel * tau_init;
        let min_tau = traj.min_accepted_tau();
        Self {
            format_version: FORMAT_VERSION,
            model_id: traj.model_id.clone(),
            tol: traj.tol,
            tau_init,
            nq,
            n_steps: traj.n_steps(),
            total_rejections: steps.iter().map(|r| r.rejected_count).sum(),
            s_last: traj.s_last(),
            t_last: traj.t_last(),
            crossing_s: traj.crossing_s(),
            min_tau,
            max_tau: steps.iter().map(|r| r.tau).fold(0.0, f64::max),
            tau_floor,
            floor_approached: min_tau <= 1e3 * tau_floor,
            sum_i1: steps.iter().map(|r| r.i1).sum(),
            sum_i2: steps.iter().map(|r| r.i2).sum(),
            max_i1: steps.iter().map(|r| r.i1).fold(0.0, f64::max),
            max_i2: steps.iter().map(|r| r.i2).fold(0.0, f64::max),
            regime_segments: ristep::classify_regimes(traj, ristep::verify::REGIME_EPS),
            wall_time_s,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serialization cannot fail");
    let mut file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    file.write_all(text.as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
pub struct ReportDocument {
    pub format_version: u32,
    pub model_id: String,
    pub nq_fine: usize,
    pub report: VerificationReport,
    pub gates: Vec<crate::gates::GateResult>,
    pub pass: bool,
}

#[derive(Serialize)]
pub struct MeshDump {
    pub format_version: u32,
    pub n_per_side: usize,
    pub h: f64,
    pub coords: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
    pub interior_nodes: Vec<usize>,
    pub stiffness: CsrDump,
    pub lumped_mass_all: Vec<f64>,
    pub lumped_mass_interior: Vec<f64>,
}

#[derive(Serialize)]
pub struct CsrDump {
    pub dim: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
}
