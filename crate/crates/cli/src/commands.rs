//! The four subcommands.

use crate::config::{RunConfig, StateFormat};
use crate::io::{self, RunSummary};
use crate::{gates, model_from_id, svg, CliError};
use ristep::fem::lumped_mass_all;
use ristep::{
    adaptive_run, assemble_stiffness, build_mesh, check_bv, lumped_mass, nested_run, uniform_run,
    EnergyModel, SchemeOptions, Trajectory,
};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn out_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_run_artifacts(
    dir: &Path,
    stem: &str,
    traj: &Trajectory,
    cfg: &RunConfig,
    metric: &ristep::DiagonalMetric,
) -> Result<(), CliError> {
    io::write_trajectory_csv(&dir.join(format!("{stem}.csv")), traj)?;
    if cfg.output.write_states {
        match cfg.output.state_format {
            StateFormat::Csv => io::write_states_csv(&dir.join(format!("{stem}_states.csv")), traj)?,
            StateFormat::Bin => io::write_states_bin(&dir.join(format!("{stem}_states.bin")), traj)?,
        }
    }
    if cfg.output.svg {
        std::fs::write(
            dir.join(format!("{stem}_trajectory.svg")),
            svg::trajectory_plot(traj, metric),
        )
        .map_err(|e| CliError::io(dir, e))?;
        std::fs::write(
            dir.join(format!("{stem}_steps.svg")),
            svg::step_size_plot(traj),
        )
        .map_err(|e| CliError::io(dir, e))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct NestedSummary {
    format_version: u32,
    model_id: String,
    mode: &'static str,
    levels: Vec<RunSummary>,
    grids_nested: bool,
}

/// Exact inclusion of each level's grid in the next finer one, over the
/// range the finer level covers.
fn grids_nested(levels: &[Trajectory]) -> bool {
    levels.windows(2).all(|pair| {
        let (coarse, fine) = (&pair[0], &pair[1]);
        let fine_points: Vec<f64> = fine.records().iter().map(|r| r.s).collect();
        let fine_end = fine.s_last();
        coarse
            .records()
            .iter()
            .filter(|r| r.s <= fine_end)
            .all(|r| {
                fine_points
                    .iter()
                    .any(|&s| (s - r.s).abs() <= 1e-12 * r.s.max(1.0))
            })
    })
}

pub fn cmd_run(
    config_path: &Path,
    out_flag: Option<PathBuf>,
    nq_flag: Option<usize>,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(config_path)?;
    let model = cfg.build_model()?;
    let opts = cfg.scheme_options(nq_flag);
    let tau_init = cfg.tau_init(model.horizon());
    let dir = out_dir(&cfg, out_flag);
    ensure_dir(&dir)?;

    if let Some(seq) = cfg.run.tol_sequence.clone() {
        let start = Instant::now();
        let levels = nested_run(model.as_ref(), &seq, tau_init, &opts)?;
        let wall = start.elapsed().as_secs_f64();
        let mut summaries = Vec::new();
        for (i, traj) in levels.iter().enumerate() {
            write_run_artifacts(&dir, &format!("trajectory_level{}", i + 1), traj, &cfg, model.metric())?;
            summaries.push(RunSummary::from_trajectory(traj, tau_init, opts.tau_floor_rel, opts.nq, wall));
        }
        let nested_ok = grids_nested(&levels);
        io::write_json(
            &dir.join("summary.json"),
            &NestedSummary {
                format_version: io::FORMAT_VERSION,
                model_id: model.id(),
                mode: "nested",
                levels: summaries,
                grids_nested: nested_ok,
            },
        )?;
        println!(
            "nested run of {} levels finished in {wall:.3} s (grids nested: {nested_ok}); artifacts in {}",
            levels.len(),
            dir.display()
        );
    } else {
        let tol = cfg
            .run
            .tol
            .ok_or_else(|| CliError::Config("run needs [run] tol or tol_sequence".into()))?;
        let start = Instant::now();
        let traj = adaptive_run(model.as_ref(), tol, tau_init, &opts)?;
        let wall = start.elapsed().as_secs_f64();
        write_run_artifacts(&dir, "trajectory", &traj, &cfg, model.metric())?;
        let summary = RunSummary::from_trajectory(&traj, tau_init, opts.tau_floor_rel, opts.nq, wall);
        io::write_json(&dir.join("summary.json"), &summary)?;
        println!(
            "{}: {} steps to t = {:.6} (S = {}), {} rejections, {wall:.3} s; artifacts in {}",
            model.id(),
            traj.n_steps(),
            traj.t_last(),
            traj.crossing_s()
                .map_or("-".into(), |s| format!("{s:.6}")),
            summary.total_rejections,
            dir.display()
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_verify(
    model_id: &str,
    trajectory: &Path,
    states: &Path,
    summary: Option<&Path>,
    tol_flag: Option<f64>,
    gates_kind: &str,
    nq_fine: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let model = model_from_id(model_id)?;
    let tol = match (tol_flag, summary) {
        (Some(t), _) => Some(t),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Parse {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
            value.get("tol").and_then(|v| v.as_f64())
        }
        (None, None) => None,
    };
    let traj = io::read_trajectory(trajectory, states, model_id, model.horizon(), tol)?;
    if traj.dim() != model.dim() {
        return Err(CliError::Parse {
            path: states.display().to_string(),
            message: format!(
                "state dimension {} does not match model {} ({})",
                traj.dim(),
                model_id,
                model.dim()
            ),
        });
    }
    let report = check_bv(&traj, model.as_ref(), nq_fine)?;
    let gate_results = match gates_kind {
        "strict" => gates::strict_gates(&report),
        "default" => {
            let tol = tol.ok_or_else(|| {
                CliError::Usage(
                    "default gates need the run tolerance: pass --tol or --summary".into(),
                )
            })?;
            gates::default_gates(&report, &traj, tol)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown gate preset `{other}` (expected default or strict)"
            )))
        }
    };
    let failed = gate_results.iter().filter(|g| !g.pass).count();
    let doc = io::ReportDocument {
        format_version: io::FORMAT_VERSION,
        model_id: model_id.to_owned(),
        nq_fine,
        report,
        pass: failed == 0,
        gates: gate_results,
    };
    match out {
        Some(path) => io::write_json(path, &doc)?,
        None => println!("{}", serde_json::to_string_pretty(&doc).unwrap()),
    }
    for g in &doc.gates {
        let relation = if g.lower_bound { ">=" } else { "<=" };
        eprintln!(
            "gate {:-20} {:>12.4e} {relation} {:>12.4e}  {}",
            g.name,
            g.value,
            g.limit,
            if g.pass { "ok" } else { "FAIL" }
        );
    }
    if failed > 0 {
        return Err(CliError::GatesFailed {
            failed,
            total: doc.gates.len(),
        });
    }
    Ok(())
}

struct SweepRow {
    tol: f64,
    mode: &'static str,
    n_steps: usize,
    max_residuum: f64,
    sum_residuum: f64,
    s_cross: f64,
    wall_time_s: f64,
}

fn row_from(traj: &Trajectory, tol: f64, mode: &'static str, wall: f64) -> SweepRow {
    let steps = &traj.records()[1..];
    SweepRow {
        tol,
        mode,
        n_steps: traj.n_steps(),
        max_residuum: steps.iter().map(|r| r.i1 + r.i2).fold(0.0, f64::max),
        sum_residuum: steps.iter().map(|r| r.i1 + r.i2).sum(),
        s_cross: traj.crossing_s().unwrap_or(traj.s_last()),
        wall_time_s: wall,
    }
}

fn sweep_job(
    model: &dyn EnergyModel,
    tol: f64,
    tau_init: f64,
    opts: &SchemeOptions,
    uniform: bool,
) -> Result<Vec<SweepRow>, CliError> {
    let start = Instant::now();
    let adaptive = adaptive_run(model, tol, tau_init, opts)?;
    let wall = start.elapsed().as_secs_f64();
    let mut rows = vec![row_from(&adaptive, tol, "adaptive", wall)];
    if uniform {
        // matched comparison: fixed steps at the smallest accepted size
        let tau = adaptive.min_accepted_tau();
        let start = Instant::now();
        let fixed = uniform_run(model, tau, opts)?;
        rows.push(row_from(
            &fixed,
            tol,
            "uniform",
            start.elapsed().as_secs_f64(),
        ));
    }
    Ok(rows)
}

pub fn cmd_sweep(
    config_path: &Path,
    out_flag: Option<PathBuf>,
    mode_flag: Option<String>,
    nq_flag: Option<usize>,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(config_path)?;
    let tols = cfg
        .sweep
        .tols
        .clone()
        .ok_or_else(|| CliError::Usage("sweep needs [sweep] tols".into()))?;
    if tols.len() < 2 {
        return Err(CliError::Usage(
            "sweep needs at least two tolerances to compare".into(),
        ));
    }
    let mode = mode_flag
        .or_else(|| cfg.sweep.mode.clone())
        .unwrap_or_else(|| "adaptive".into());
    let model = cfg.build_model()?;
    let opts = cfg.scheme_options(nq_flag);
    let tau_init = cfg.tau_init(model.horizon());
    let dir = out_dir(&cfg, out_flag);
    ensure_dir(&dir)?;

    let mut rows: Vec<SweepRow> = Vec::new();
    let mut nested_ok: Option<bool> = None;
    match mode.as_str() {
        "adaptive" | "uniform" => {
            let uniform = mode == "uniform";
            let workers = cfg
                .sweep
                .workers
                .unwrap_or_else(|| {
                    std::thread::available_parallelism().map_or(1, |p| p.get())
                })
                .max(1);
            let mut results: Vec<Option<Result<Vec<SweepRow>, CliError>>> =
                (0..tols.len()).map(|_| None).collect();
            for (chunk_idx, chunk) in tols.chunks(workers).enumerate() {
                let offset = chunk_idx * workers;
                std::thread::scope(|scope| {
                    let handles: Vec<_> = chunk
                        .iter()
                        .map(|&tol| {
                            let model = model.as_ref();
                            let opts = &opts;
                            scope.spawn(move || sweep_job(model, tol, tau_init, opts, uniform))
                        })
                        .collect();
                    for (j, h) in handles.into_iter().enumerate() {
                        results[offset + j] = Some(h.join().expect("sweep worker panicked"));
                    }
                });
            }
            for res in results.into_iter().flatten() {
                rows.extend(res?);
            }
        }
        "nested" => {
            let mut seq = tols.clone();
            seq.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let start = Instant::now();
            let levels = nested_run(model.as_ref(), &seq, tau_init, &opts)?;
            let wall = start.elapsed().as_secs_f64();
            for (tol, traj) in seq.iter().zip(&levels) {
                rows.push(row_from(traj, *tol, "nested", wall));
            }
            nested_ok = Some(grids_nested(&levels));
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown sweep mode `{other}` (expected adaptive, uniform or nested)"
            )))
        }
    }

    let mut csv = String::new();
    csv.push_str(&format!("format_version,{}\n", io::FORMAT_VERSION));
    csv.push_str("tol,mode,n_steps,max_residuum,sum_residuum,s_cross,wall_time_s\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{:.6}\n",
            io::fmt_float(r.tol),
            r.mode,
            r.n_steps,
            io::fmt_float(r.max_residuum),
            io::fmt_float(r.sum_residuum),
            io::fmt_float(r.s_cross),
            r.wall_time_s
        ));
    }
    let csv_path = dir.join("sweep.csv");
    std::fs::write(&csv_path, &csv).map_err(|e| CliError::io(&csv_path, e))?;

    println!("tol        mode      steps   max_resid   sum_resid   S         wall[s]");
    for r in &rows {
        println!(
            "{:<10.2e} {:<9} {:<7} {:<11.3e} {:<11.3e} {:<9.4} {:.3}",
            r.tol, r.mode, r.n_steps, r.max_residuum, r.sum_residuum, r.s_cross, r.wall_time_s
        );
    }
    if let Some(ok) = nested_ok {
        println!("grids nested: {ok}");
        #[derive(Serialize)]
        struct SweepSummary {
            format_version: u32,
            mode: String,
            grids_nested: bool,
        }
        io::write_json(
            &dir.join("sweep_summary.json"),
            &SweepSummary {
                format_version: io::FORMAT_VERSION,
                mode,
                grids_nested: ok,
            },
        )?;
    }
    println!("table written to {}", csv_path.display());
    Ok(())
}

pub fn cmd_dump_mesh(n: usize, out: &Path) -> Result<(), CliError> {
    let mesh = build_mesh(n).map_err(|e| CliError::Config(e.to_string()))?;
    let stiffness = assemble_stiffness(&mesh);
    let dump = io::MeshDump {
        format_version: io::FORMAT_VERSION,
        n_per_side: mesh.n_per_side(),
        h: mesh.h(),
        coords: mesh.coords().to_vec(),
        triangles: mesh.triangles().to_vec(),
        boundary: mesh.boundary_mask().to_vec(),
        interior_nodes: mesh.interior_nodes().to_vec(),
        stiffness: io::CsrDump {
            dim: stiffness.dim(),
            row_offsets: stiffness.row_offsets().to_vec(),
            col_indices: stiffness.col_indices().to_vec(),
            values: stiffness.values().to_vec(),
        },
        lumped_mass_all: lumped_mass_all(&mesh),
        lumped_mass_interior: lumped_mass(&mesh).v_weights().to_vec(),
    };
    io::write_json(out, &dump)?;
    println!(
        "mesh with {} nodes ({} interior) written to {}",
        mesh.node_count(),
        mesh.interior_count(),
        out.display()
    );
    Ok(())
}
