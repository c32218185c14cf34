//! The five workbench commands and their artifact plumbing.
//!
//! Every command resolves its configuration, runs the library pipeline,
//! writes its artifacts under the output directory, and finishes with a
//! `manifest.json` recording the resolved config and the artifact list.
//! Failures map to distinct exit codes: invalid configuration or
//! parameters exit 2, solver failures exit 3, a failed gradient check
//! exits 4, and I/O problems exit 1.

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;

use dovetail::adjoint::{
    check_gradient, contact_coord_components, d_metric_seeds, grad_wrt_mesh_coords,
    grad_wrt_params, CoordComponent, FDCheckReport,
};
use dovetail::contact::{alternate, simulated_stiffness, AlternateInputs, AlternateOptions};
use dovetail::fem::{export_with_displacements, Material};
use dovetail::geometry::{build_geometry, DesignSpace, JointGeometry, Side};
use dovetail::mesh::{build_morph, morph_nodes, triangulate, TriMesh};
use dovetail::optim::{normalized_distance, optimize, OptError, OptTrace, Pipeline};

use crate::config::{ResolvedRun, RunConfig, RunManifest};

/// Failure of a command, tagged with its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or joint parameters (exit 2).
    Config(String),
    /// Filesystem problem (exit 1).
    Io(String),
    /// The solver failed or did not converge (exit 3).
    Solver(String),
    /// Gradient check exceeded its threshold (exit 4).
    Threshold(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Threshold(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m)
            | CliError::Io(m)
            | CliError::Solver(m)
            | CliError::Threshold(m) => f.write_str(m),
        }
    }
}

/// Output directory with a running artifact list; `finish` seals the run
/// with its manifest.
struct RunDir {
    root: PathBuf,
    artifacts: Vec<String>,
}

impl RunDir {
    fn create(root: &str) -> Result<RunDir, CliError> {
        let root = PathBuf::from(root);
        fs::create_dir_all(&root)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(RunDir {
            root,
            artifacts: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Io(format!("cannot create {}: {e}", parent.display())))?;
        }
        fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.artifacts.push(rel.to_string());
        Ok(())
    }

    fn finish(
        self,
        command: &str,
        config: &RunConfig,
        convergence: serde_json::Value,
    ) -> Result<(), CliError> {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = RunManifest {
            tool: "dovetail".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            created_unix,
            config: config.clone(),
            artifacts: self.artifacts,
            convergence,
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Io(format!("cannot serialize manifest: {e}")))?;
        let path = self.root.join("manifest.json");
        fs::write(&path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}

/// The single starting design of a one-design command.
fn single_theta(run: &ResolvedRun) -> Result<&[f64], CliError> {
    match run.thetas.as_slice() {
        [theta] => Ok(theta),
        list => Err(CliError::Config(format!(
            "this command runs a single design; got {} theta0 entries",
            list.len()
        ))),
    }
}

/// Geometry and both half meshes for one design.
fn mesh_pair(
    run: &ResolvedRun,
    theta: &[f64],
) -> Result<(JointGeometry, TriMesh, TriMesh), CliError> {
    let geom = build_geometry(run.space, theta)
        .map_err(|e| CliError::Config(format!("invalid joint parameters: {e}")))?;
    let h = run.config.mesh_step;
    let mesh_l = triangulate(&geom, Side::Left, h)
        .map_err(|e| CliError::Solver(format!("meshing the left half failed: {e}")))?;
    let mesh_r = triangulate(&geom, Side::Right, h)
        .map_err(|e| CliError::Solver(format!("meshing the right half failed: {e}")))?;
    Ok((geom, mesh_l, mesh_r))
}

/// Map items to results on up to `jobs` worker threads, preserving input
/// order in the output (so artifact bytes never depend on thread timing).
fn parallel_map<T, R, F>(jobs: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}

/// Run the alternating simulation for one design and export geometry,
/// meshes, displacement fields, and (optionally) per-iteration fields.
pub fn cmd_simulate(run: &ResolvedRun) -> Result<(), CliError> {
    let theta = single_theta(run)?;
    let (geom, mesh_l, mesh_r) = mesh_pair(run, theta)?;
    let inp = AlternateInputs {
        mesh_l: &mesh_l,
        coords_l: &mesh_l.nodes,
        mesh_r: &mesh_r,
        coords_r: &mesh_r.nodes,
        mat: run.material,
        traction: run.traction,
        cfg: run.penalty,
    };
    let state = alternate(&inp, &run.solver)
        .map_err(|e| CliError::Solver(format!("alternating solve failed: {e}")))?;

    let mut dir = RunDir::create(&run.out_dir)?;
    dir.write("geometry.txt", &geom.to_text())?;
    dir.write("geometry.svg", &geom.to_svg())?;
    dir.write("side_L.txt", &export_with_displacements(&mesh_l, &state.u_l))?;
    dir.write("side_R.txt", &export_with_displacements(&mesh_r, &state.u_r))?;
    if run.config.dump_iterations {
        for t in 0..state.iterations {
            let u_l = state.iteration_field(Side::Left, t);
            let u_r = state.iteration_field(Side::Right, t);
            dir.write(
                &format!("side_L_iter_{t}.txt"),
                &export_with_displacements(&mesh_l, &u_l),
            )?;
            dir.write(
                &format!("side_R_iter_{t}.txt"),
                &export_with_displacements(&mesh_r, &u_r),
            )?;
        }
    }

    let stiffness = simulated_stiffness(state.d_value, run.traction, &geom.domain).ok();
    let newton_iterations: Vec<usize> = state.records.iter().map(|r| r.newton_iters).collect();
    let summary = json!({
        "d_mm": state.d_value,
        "stiffness_n_per_mm": stiffness,
        "converged": state.converged,
        "iterations": state.iterations,
        "change_history_mm": state.change_history,
        "gauge_history_mm": state.gauge_history,
        "newton_iterations": newton_iterations,
        "nodes": {"left": mesh_l.node_count(), "right": mesh_r.node_count()},
    });
    dir.write("summary.json", &pretty(&summary)?)?;
    dir.finish(
        "simulate",
        &run.config,
        json!({"converged": state.converged, "iterations": state.iterations}),
    )?;

    match stiffness {
        Some(k) => println!(
            "d = {:.6} mm, stiffness = {:.1} N/mm, converged = {}, iterations = {}",
            state.d_value, k, state.converged, state.iterations
        ),
        None => println!(
            "d = {:.6} mm, converged = {}, iterations = {}",
            state.d_value, state.converged, state.iterations
        ),
    }
    println!("artifacts in {}", run.out_dir);

    if state.converged {
        Ok(())
    } else {
        Err(CliError::Solver(format!(
            "alternation did not converge within {} iterations (last change {:.3e} mm); \
             artifacts written to {}",
            state.iterations,
            state.change_history.last().copied().unwrap_or(f64::NAN),
            run.out_dir
        )))
    }
}

/// Name of a coordinate-gradient row, e.g. `L12x`.
fn coord_name(c: &CoordComponent) -> String {
    let side = match c.side {
        Side::Left => 'L',
        Side::Right => 'R',
    };
    let comp = if c.comp == 0 { 'x' } else { 'y' };
    format!("{side}{}{comp}", c.node)
}

/// Interleave per-node `[gx, gy]` pairs into a flat dof-ordered vector.
fn flatten_grad(g: &[[f64; 2]]) -> Vec<f64> {
    g.iter().flat_map(|p| [p[0], p[1]]).collect()
}

/// Check the adjoint gradient of `d` against central finite differences,
/// over every contact-edge vertex coordinate and every shape parameter.
pub fn cmd_grad_check(run: &ResolvedRun) -> Result<(), CliError> {
    let theta = single_theta(run)?;
    let (geom, mesh_l, mesh_r) = mesh_pair(run, theta)?;
    let inp = AlternateInputs {
        mesh_l: &mesh_l,
        coords_l: &mesh_l.nodes,
        mesh_r: &mesh_r,
        coords_r: &mesh_r.nodes,
        mat: run.material,
        traction: run.traction,
        cfg: run.penalty,
    };
    // Every solve of the check runs the same fixed alternation count with a
    // tight Newton tolerance: finite differences of d must resolve changes
    // of order step × gradient, and the solver's own noise floor sits near
    // newton_tol / step.
    let gc = &run.config.grad_check;
    let opts = AlternateOptions {
        max_iters: run.solver.max_iters,
        tol: run.solver.tol,
        newton_tol: gc.newton_tol,
        newton_max_iters: run.solver.newton_max_iters,
        fixed_iterations: Some(gc.fixed_iterations),
    };

    let report: FDCheckReport = check_gradient(&inp, &opts, &[], gc.fd_step)
        .map_err(|e| CliError::Solver(format!("gradient check failed: {e}")))?;

    // Parameter-space rows: push the adjoint coordinate gradient through
    // the mesh morph, and difference d along each parameter with the mesh
    // topology frozen (re-triangulating would measure point-placement
    // noise, not the derivative).
    let state = alternate(&inp, &opts)
        .map_err(|e| CliError::Solver(format!("forward solve failed: {e}")))?;
    let seeds = d_metric_seeds(&mesh_l, &mesh_r);
    let grad = grad_wrt_mesh_coords(&inp, &state, &seeds, run.adjoint)
        .map_err(|e| CliError::Solver(format!("adjoint sweep failed: {e}")))?;
    let morph_l = build_morph(&geom, &mesh_l, theta)
        .map_err(|e| CliError::Solver(format!("morph construction failed: {e}")))?;
    let morph_r = build_morph(&geom, &mesh_r, theta)
        .map_err(|e| CliError::Solver(format!("morph construction failed: {e}")))?;
    let theta_adjoint = grad_wrt_params(&grad, &morph_l, &morph_r);
    let mut theta_fd = Vec::with_capacity(theta.len());
    for p in 0..theta.len() {
        let mut d_pair = [0.0; 2];
        for (slot, sign) in [(0usize, 1.0), (1usize, -1.0)] {
            let mut tp = theta.to_vec();
            tp[p] += sign * gc.fd_step;
            let cl = morph_nodes(&morph_l, &tp)
                .map_err(|e| CliError::Solver(format!("morph evaluation failed: {e}")))?;
            let cr = morph_nodes(&morph_r, &tp)
                .map_err(|e| CliError::Solver(format!("morph evaluation failed: {e}")))?;
            let pert = AlternateInputs {
                mesh_l: &mesh_l,
                coords_l: &cl,
                mesh_r: &mesh_r,
                coords_r: &cr,
                mat: run.material,
                traction: run.traction,
                cfg: run.penalty,
            };
            d_pair[slot] = alternate(&pert, &opts)
                .map_err(|e| CliError::Solver(format!("FD probe failed: {e}")))?
                .d_value;
        }
        theta_fd.push((d_pair[0] - d_pair[1]) / (2.0 * gc.fd_step));
    }
    let floor = dovetail::adjoint::FD_FLOOR;
    let theta_rel: Vec<f64> = theta_adjoint
        .iter()
        .zip(&theta_fd)
        .map(|(&a, &f)| (a - f).abs() / f.abs().max(floor))
        .collect();
    let mut theta_sum = 0.0;
    let mut theta_count = 0usize;
    for (&f, &r) in theta_fd.iter().zip(&theta_rel) {
        if f.abs() > floor {
            theta_sum += r;
            theta_count += 1;
        }
    }
    let theta_mean = if theta_count > 0 {
        theta_sum / theta_count as f64
    } else {
        0.0
    };

    let mut csv = String::from("component,adjoint,fd,rel_diff\n");
    for (i, c) in report.components.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            coord_name(c),
            report.adjoint[i],
            report.fd[i],
            report.rel_diff[i]
        ));
    }
    let names = run.space.param_names();
    for p in 0..theta.len() {
        csv.push_str(&format!(
            "theta_{},{},{},{}\n",
            names[p], theta_adjoint[p], theta_fd[p], theta_rel[p]
        ));
    }
    csv.push_str(&format!("mean_rel_diff,,,{}\n", report.mean_rel_diff));

    let mut dir = RunDir::create(&run.out_dir)?;
    dir.write("grad_check.csv", &csv)?;
    dir.write(
        "grad_L.txt",
        &export_with_displacements(&mesh_l, &flatten_grad(&grad.left)),
    )?;
    dir.write(
        "grad_R.txt",
        &export_with_displacements(&mesh_r, &flatten_grad(&grad.right)),
    )?;
    let contact_comps = contact_coord_components(&mesh_l, &mesh_r).len();
    let passed = report.mean_rel_diff <= gc.threshold;
    let summary = json!({
        "mean_rel_diff": report.mean_rel_diff,
        "threshold": gc.threshold,
        "passed": passed,
        "fd_step": report.step,
        "scheme": report.mode,
        "coordinate_components": contact_comps,
        "theta": {
            "adjoint": theta_adjoint,
            "fd": theta_fd,
            "rel_diff": theta_rel,
            "mean_rel_diff": theta_mean,
        },
    });
    dir.write("summary.json", &pretty(&summary)?)?;
    dir.finish(
        "grad-check",
        &run.config,
        json!({"mean_rel_diff": report.mean_rel_diff, "passed": passed}),
    )?;

    println!(
        "mean rel diff {:.3e} over {} coordinate components (threshold {:.1e}) — {}",
        report.mean_rel_diff,
        contact_comps,
        gc.threshold,
        if passed { "PASS" } else { "FAIL" }
    );
    println!("theta rows mean rel diff {theta_mean:.3e}");
    println!("artifacts in {}", run.out_dir);

    if passed {
        Ok(())
    } else {
        Err(CliError::Threshold(format!(
            "mean relative difference {:.3e} exceeds threshold {:.1e}",
            report.mean_rel_diff, gc.threshold
        )))
    }
}

/// The solve pipeline an optimization run uses: same physics as the
/// forward commands, but with the alternation count pinned so the
/// objective stays a smooth composition for the line search.
fn opt_pipeline(run: &ResolvedRun, mat: Material) -> Pipeline {
    let fixed = run
        .solver
        .fixed_iterations
        .unwrap_or(run.solver.max_iters);
    Pipeline {
        space: run.space,
        h: run.config.mesh_step,
        mat,
        traction: run.traction,
        penalty: run.penalty,
        options: AlternateOptions {
            fixed_iterations: Some(fixed),
            ..run.solver.clone()
        },
        mode: run.adjoint,
    }
}

fn run_optimize(run: &ResolvedRun, mat: Material, theta0: &[f64]) -> Result<OptTrace, CliError> {
    let pipe = opt_pipeline(run, mat);
    optimize(theta0, &run.objective, &pipe, run.config.steps).map_err(|e| match e {
        OptError::InfeasibleStart(_) => CliError::Config(format!("{e}")),
        OptError::InitialEvaluationFailed => CliError::Solver(format!("{e}")),
    })
}

/// Write one optimization run's artifacts (`prefix` is empty or a
/// directory like `nu_0.3/`) and return its summary fragment.
fn write_opt_artifacts(
    dir: &mut RunDir,
    prefix: &str,
    index: usize,
    space: DesignSpace,
    theta0: &[f64],
    trace: &OptTrace,
) -> Result<serde_json::Value, CliError> {
    dir.write(
        &format!("{prefix}trace_{index}.csv"),
        &trace.to_csv(space),
    )?;
    for (t, entry) in trace.entries.iter().enumerate() {
        let geom = build_geometry(space, &entry.theta)
            .map_err(|e| CliError::Config(format!("invalid iterate at step {t}: {e}")))?;
        dir.write(
            &format!("{prefix}steps_{index}/step_{t}.svg"),
            &geom.to_svg(),
        )?;
    }
    let best = trace.best();
    let best_geom = build_geometry(space, &best.theta)
        .map_err(|e| CliError::Config(format!("invalid best iterate: {e}")))?;
    dir.write(&format!("{prefix}best_{index}.txt"), &best_geom.to_text())?;
    dir.write(&format!("{prefix}best_{index}.svg"), &best_geom.to_svg())?;

    let initial_d = trace.entries[0].d;
    let improvement_pct = if initial_d.is_finite() && initial_d > 0.0 && best.d.is_finite() {
        Some((1.0 - best.d / initial_d) * 100.0)
    } else {
        None
    };
    let kinds: Vec<&str> = trace.entries.iter().map(|e| e.kind.name()).collect();
    Ok(json!({
        "theta0": theta0,
        "best_step": trace.best_index,
        "best_theta": best.theta,
        "best_d": best.d,
        "best_l": best.l,
        "initial_d": initial_d,
        "improvement_pct": improvement_pct,
        "step_kinds": kinds,
    }))
}

/// Optimize each starting design and export traces, per-step shapes, and
/// the best designs.
pub fn cmd_optimize(run: &ResolvedRun) -> Result<(), CliError> {
    let results = parallel_map(run.config.jobs, &run.thetas, |theta0| {
        run_optimize(run, run.material, theta0)
    });
    let mut traces = Vec::with_capacity(results.len());
    for r in results {
        traces.push(r?);
    }

    let mut dir = RunDir::create(&run.out_dir)?;
    let mut summaries = Vec::new();
    for (i, trace) in traces.iter().enumerate() {
        let s = write_opt_artifacts(&mut dir, "", i, run.space, &run.thetas[i], trace)?;
        println!(
            "run {i}: d {} -> {} mm (best at step {})",
            trace.entries[0].d,
            trace.best().d,
            trace.best_index
        );
        summaries.push(s);
    }

    let mut pairwise = Vec::new();
    for i in 0..traces.len() {
        for j in (i + 1)..traces.len() {
            pairwise.push(json!({
                "i": i,
                "j": j,
                "initial_distance": normalized_distance(&run.thetas[i], &run.thetas[j]),
                "optimized_distance": normalized_distance(
                    &traces[i].best().theta,
                    &traces[j].best().theta,
                ),
            }));
        }
    }

    let summary = json!({"runs": summaries, "pairwise": pairwise});
    dir.write("summary.json", &pretty(&summary)?)?;
    let best_ds: Vec<f64> = traces.iter().map(|t| t.best().d).collect();
    dir.finish("optimize", &run.config, json!({"best_d": best_ds}))?;
    println!("artifacts in {}", run.out_dir);
    Ok(())
}

/// Optimize the same starting design(s) at each Poisson's ratio and
/// compare the best designs pairwise.
pub fn cmd_sweep_poisson(run: &ResolvedRun) -> Result<(), CliError> {
    let nus = &run.config.nu_list;
    if nus.is_empty() {
        return Err(CliError::Config("nu_list is empty".to_string()));
    }
    let mut errors = Vec::new();
    for &nu in nus {
        if !(nu.is_finite() && (0.0..0.5).contains(&nu)) {
            errors.push(format!("nu_list: Poisson's ratio must lie in [0, 0.5), got {nu}"));
        }
    }
    let mut sorted = nus.clone();
    sorted.sort_by(f64::total_cmp);
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            errors.push(format!("nu_list contains duplicate value {}", w[0]));
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Config(errors.join("\n")));
    }

    let mut tasks = Vec::new();
    for (ni, &nu) in nus.iter().enumerate() {
        let mat = Material::new(run.material.e, nu)
            .map_err(|e| CliError::Config(format!("material at nu = {nu}: {e}")))?;
        for (ti, theta0) in run.thetas.iter().enumerate() {
            tasks.push((ni, nu, mat, ti, theta0.clone()));
        }
    }
    let results = parallel_map(run.config.jobs, &tasks, |(_, _, mat, _, theta0)| {
        run_optimize(run, *mat, theta0)
    });
    let mut traces: Vec<OptTrace> = Vec::with_capacity(results.len());
    for r in results {
        traces.push(r?);
    }

    let mut dir = RunDir::create(&run.out_dir)?;
    let mut runs = Vec::new();
    for (k, (_, nu, _, ti, theta0)) in tasks.iter().enumerate() {
        let prefix = format!("nu_{nu}/");
        let mut s = write_opt_artifacts(&mut dir, &prefix, *ti, run.space, theta0, &traces[k])?;
        s["nu"] = json!(nu);
        println!(
            "nu = {nu}, run {ti}: d {} -> {} mm",
            traces[k].entries[0].d,
            traces[k].best().d
        );
        runs.push(s);
    }

    // Pairwise distance between the best designs found at different
    // Poisson's ratios, per starting design.
    let mut csv = String::from("theta0_index,nu_a,nu_b,distance\n");
    let mut comparisons = Vec::new();
    for ti in 0..run.thetas.len() {
        for a in 0..nus.len() {
            for b in (a + 1)..nus.len() {
                let ta = &traces[a * run.thetas.len() + ti].best().theta;
                let tb = &traces[b * run.thetas.len() + ti].best().theta;
                let dist = normalized_distance(ta, tb);
                csv.push_str(&format!("{ti},{},{},{dist}\n", nus[a], nus[b]));
                comparisons.push(json!({
                    "theta0_index": ti,
                    "nu_a": nus[a],
                    "nu_b": nus[b],
                    "distance": dist,
                }));
            }
        }
    }
    dir.write("comparison.csv", &csv)?;
    let summary = json!({"nus": nus, "runs": runs, "comparisons": comparisons});
    dir.write("summary.json", &pretty(&summary)?)?;
    dir.finish("sweep-poisson", &run.config, json!({"comparisons": comparisons}))?;
    println!("artifacts in {}", run.out_dir);
    Ok(())
}

/// Export each design's polygon text and SVG without running a solve.
pub fn cmd_export_geometry(run: &ResolvedRun) -> Result<(), CliError> {
    let mut dir = RunDir::create(&run.out_dir)?;
    for (i, theta) in run.thetas.iter().enumerate() {
        let geom = build_geometry(run.space, theta)
            .map_err(|e| CliError::Config(format!("theta0[{i}]: {e}")))?;
        dir.write(&format!("geometry_{i}.txt"), &geom.to_text())?;
        dir.write(&format!("geometry_{i}.svg"), &geom.to_svg())?;
    }
    dir.finish("export-geometry", &run.config, serde_json::Value::Null)?;
    println!("artifacts in {}", run.out_dir);
    Ok(())
}

fn pretty(value: &serde_json::Value) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("cannot serialize JSON: {e}")))
}
