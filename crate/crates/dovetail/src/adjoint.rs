//! Adjoint gradients of the alternating contact solve.
//!
//! The displacement metric `d` (or any scalar of the final fields) is a
//! smooth function of the mesh node coordinates once the mesh topology and
//! the alternation schedule are frozen. This module differentiates that
//! function exactly — in reverse mode through the solve history — and
//! provides a central finite-difference oracle to verify it.
//!
//! Every one-sided Newton solve in the history is, at convergence, an
//! implicit function: the field `u` solves `R(u, X, lines) = 0` where `R` is
//! the penalized residual, `X` the side's coordinates, and `lines` the fitted
//! contact lines of the opposite half. Seeding a solve with `g = dL/du` and
//! solving the (symmetric) adjoint system `K λ = g` yields
//! `dL/dX = -λᵀ ∂R/∂X` and `dL/d(lines) = -λᵀ ∂R/∂(lines)`. Line seeds then
//! flow through the total-least-squares fit to the rigid half's deformed
//! node positions, splitting into a direct coordinate term and a seed for
//! the upstream solve that produced that field. Warm starts contribute
//! nothing: a converged solve does not depend on its initial guess.
//!
//! Two bookkeeping details come from the gauge step in
//! [`contact::alternate`]: records hold *raw* solve outputs, while each
//! iteration's left solve fits lines to the previously *gauged* right field,
//! and the final fields are gauged as well. The gauge constant is a linear
//! functional of the two raw fields of its iteration, so the reverse sweep
//! routes an extra rank-one correction to those records whenever a seed
//! crosses a gauge boundary.

use crate::contact::{
    add_penalty_tangent, contact_edge_count, contact_quadrature, penalty_d1, penalty_d2,
    signed_distance, AlternateInputs, AlternateOptions, ContactError, ContactLine, SolveRecord,
    SolveState,
};
use crate::fem::{self, FieldVector, LoadCase};
use crate::geometry::{BoundaryTag, Side};
use crate::mesh::{morph_jacobian_tvp, MorphMap, TriMesh};
use crate::vec2;

/// Components with `|fd|` at or below this floor are excluded from mean
/// relative differences (the quotient would measure roundoff, not agreement).
pub const FD_FLOOR: f64 = 1e-12;
/// Default finite-difference step for gradient checks, mm.
pub const FD_STEP: f64 = 1e-4;

/// How much of the solve history the reverse sweep consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjointMode {
    /// Reverse through every recorded solve and every fitted line — the
    /// exact derivative of the fixed-schedule forward computation.
    FullTape,
    /// Adjoint of the converged fixed point, built from the last two solves
    /// only: both tangents are factored once and the two adjoint systems are
    /// cycled — right to left within an iteration, left back to right across
    /// the iteration boundary — until the cross-seeds die out. The cycle sums
    /// the same geometric series the full tape walks explicitly, so on a
    /// converged state the two modes differ only by the forward transient.
    /// Much cheaper than the full tape: two factorizations instead of one
    /// per recorded solve.
    FrozenFixedPoint,
}

/// Seed on one fitted line: `dL/d(normal)` and `dL/d(offset)`.
#[derive(Debug, Clone, Copy)]
pub struct LineSeed {
    pub normal: [f64; 2],
    pub offset: f64,
}

/// Per-node coordinate gradient for both halves, `dL/dX` in 1/mm.
#[derive(Debug, Clone)]
pub struct CoordGradient {
    pub left: Vec<[f64; 2]>,
    pub right: Vec<[f64; 2]>,
}

impl CoordGradient {
    fn zeros(mesh_l: &TriMesh, mesh_r: &TriMesh) -> CoordGradient {
        CoordGradient {
            left: vec![[0.0; 2]; mesh_l.node_count()],
            right: vec![[0.0; 2]; mesh_r.node_count()],
        }
    }

    fn side(&mut self, side: Side) -> &mut Vec<[f64; 2]> {
        match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        }
    }

    /// Magnitude of the largest per-node gradient vector.
    pub fn max_norm(&self) -> f64 {
        self.left
            .iter()
            .chain(&self.right)
            .fold(0.0_f64, |m, g| m.max(vec2::dot(*g, *g).sqrt()))
    }
}

/// Objective seeds `dL/du` on the final (gauged) fields of both halves.
#[derive(Debug, Clone)]
pub struct ObjectiveSeeds {
    pub left: FieldVector,
    pub right: FieldVector,
}

/// Seeds of the displacement metric `d` = mean `u_x` over the right half's
/// traction nodes minus mean `u_x` over the left half's.
pub fn d_metric_seeds(mesh_l: &TriMesh, mesh_r: &TriMesh) -> ObjectiveSeeds {
    let mut left = vec![0.0; 2 * mesh_l.node_count()];
    let mut right = vec![0.0; 2 * mesh_r.node_count()];
    let tl = mesh_l.nodes_with_tag(BoundaryTag::Traction);
    let tr = mesh_r.nodes_with_tag(BoundaryTag::Traction);
    for &n in &tl {
        left[fem::dof(n, 0)] = -1.0 / tl.len() as f64;
    }
    for &n in &tr {
        right[fem::dof(n, 0)] = 1.0 / tr.len() as f64;
    }
    ObjectiveSeeds { left, right }
}

/// Factored adjoint system of one recorded solve, reusable across seeds.
struct RecordAdjoint<'a> {
    mesh: &'a TriMesh,
    coords: &'a [[f64; 2]],
    load: LoadCase,
    mask: Vec<bool>,
    quad: Vec<crate::contact::ContactQuad>,
    solver: crate::sparse::SpdSolver,
}

fn build_record_adjoint<'a>(
    inp: &AlternateInputs<'a>,
    record: &SolveRecord,
) -> Result<RecordAdjoint<'a>, ContactError> {
    let (mesh, coords) = match record.side {
        Side::Left => (inp.mesh_l, inp.coords_l),
        Side::Right => (inp.mesh_r, inp.coords_r),
    };
    let load = LoadCase::tensile(record.side, inp.traction);
    let mask = fem::symmetry_mask(mesh)?;
    let mut solver = fem::assemble_tangent_at(mesh, coords, &inp.mat, &mask);
    let quad = contact_quadrature(mesh, coords);
    add_penalty_tangent(&mut solver, coords, &record.u, &record.lines, &quad, &inp.cfg, &mask);
    solver.factor()?;
    Ok(RecordAdjoint {
        mesh,
        coords,
        load,
        mask,
        quad,
        solver,
    })
}

/// Adjoint of one recorded Newton solve.
///
/// Solves `K λ = seed` at the recorded state (`K` is the penalized-energy
/// Hessian there, symmetric) and returns the two downstream contributions:
/// `dL/dX` on the solving side's coordinates (elastic stiffness, traction
/// load, contact quadrature weights, and the nodes' own positions inside the
/// signed distances) and one [`LineSeed`] per contact line.
pub fn adjoint_solve_step(
    inp: &AlternateInputs,
    record: &SolveRecord,
    seed: &FieldVector,
) -> Result<(Vec<[f64; 2]>, Vec<LineSeed>), ContactError> {
    let ctx = build_record_adjoint(inp, record)?;
    Ok(apply_record_adjoint(&ctx, inp, record, seed))
}

fn apply_record_adjoint(
    ctx: &RecordAdjoint,
    inp: &AlternateInputs,
    record: &SolveRecord,
    seed: &FieldVector,
) -> (Vec<[f64; 2]>, Vec<LineSeed>) {
    let (mesh, coords, load, quad) = (ctx.mesh, ctx.coords, &ctx.load, &ctx.quad);
    let mut g = seed.clone();
    fem::apply_constraints(&mut g, &ctx.mask);
    let lambda = ctx.solver.solve(&g);

    let n = mesh.node_count();
    // Elastic and traction coordinate terms: R = K(X) u - f(X) + penalty.
    let mut kgrad = vec![[0.0; 2]; n];
    fem::elastic_bilinear_coord_grad(mesh, coords, &lambda, &record.u, &inp.mat, &mut kgrad);
    let mut fgrad = vec![[0.0; 2]; n];
    fem::traction_coord_grad(mesh, coords, &lambda, &load, &mut fgrad);
    let mut dx = vec![[0.0; 2]; n];
    for i in 0..n {
        dx[i][0] = fgrad[i][0] - kgrad[i][0];
        dx[i][1] = fgrad[i][1] - kgrad[i][1];
    }

    // Penalty terms. At quadrature node i against line (n̂, o):
    //   R_i = w_pen w_i p'(s_i) n̂,   s_i = n̂·(X_i + u_i) - o.
    let w = inp.cfg.w_pen;
    let mut line_seeds = vec![
        LineSeed {
            normal: [0.0; 2],
            offset: 0.0,
        };
        record.lines.len()
    ];
    for q in quad {
        let i = q.node;
        let line = &record.lines[q.edge];
        let p = [
            coords[i][0] + record.u[fem::dof(i, 0)],
            coords[i][1] + record.u[fem::dof(i, 1)],
        ];
        let s = signed_distance(p, line);
        let lam = [lambda[fem::dof(i, 0)], lambda[fem::dof(i, 1)]];
        let ln = vec2::dot(lam, line.normal);
        let p1 = penalty_d1(s, &inp.cfg);
        let p2 = penalty_d2(s, &inp.cfg);
        // Through the node's own position: ∂s_i/∂X_i = n̂.
        let c = w * q.weight * p2 * ln;
        dx[i][0] -= c * line.normal[0];
        dx[i][1] -= c * line.normal[1];
        // Through the line: ∂R_i/∂n̂ = w w_i (p'' n̂ pᵀ + p' I), ∂R_i/∂o = -w w_i p'' n̂.
        line_seeds[q.edge].normal[0] -= w * q.weight * (ln * p2 * p[0] + p1 * lam[0]);
        line_seeds[q.edge].normal[1] -= w * q.weight * (ln * p2 * p[1] + p1 * lam[1]);
        line_seeds[q.edge].offset += w * q.weight * ln * p2;
    }

    // Through the trapezoid weights: w_i is half the summed reference
    // lengths of the node's adjacent contact sub-segments.
    for k in 0..contact_edge_count(mesh) {
        let en = mesh.contact_edge_nodes(k);
        let line = &record.lines[k];
        let node_factor = |node: usize| {
            let p = [
                coords[node][0] + record.u[fem::dof(node, 0)],
                coords[node][1] + record.u[fem::dof(node, 1)],
            ];
            let s = signed_distance(p, line);
            let lam = [lambda[fem::dof(node, 0)], lambda[fem::dof(node, 1)]];
            w * penalty_d1(s, &inp.cfg) * vec2::dot(lam, line.normal)
        };
        for pair in en.windows(2) {
            let (a, b) = (pair[0].0, pair[1].0);
            let diff = vec2::sub(coords[b], coords[a]);
            let len = vec2::dot(diff, diff).sqrt();
            let e = vec2::scale(1.0 / len, diff);
            // d(len)/dX_b = e, d(len)/dX_a = -e; len feeds w_a and w_b by 1/2.
            let coef = -0.5 * (node_factor(a) + node_factor(b));
            dx[b][0] += coef * e[0];
            dx[b][1] += coef * e[1];
            dx[a][0] -= coef * e[0];
            dx[a][1] -= coef * e[1];
        }
    }

    (dx, line_seeds)
}

/// Reverse the total-least-squares fit of one line: given seeds on the
/// oriented `(normal, offset)` and the fitted points, return `dL/d(point)`
/// per point.
///
/// With centroid `c`, weighted covariance `A = Σ w_k (p_k-c)(p_k-c)ᵀ`,
/// minimum eigenpair `(λ_n, n̂)` and the complementary pair `(λ_v, v̂)`,
/// first-order eigenvector perturbation gives
/// `dn̂ = v̂ (v̂ᵀ dA n̂) / (λ_n - λ_v)`, and `o = n̂·c` adds centroid routes.
/// The centroid terms inside `A` cancel because `Σ w_k (p_k - c) = 0`.
pub fn backprop_line_fit(
    line: &ContactLine,
    points: &[[f64; 2]],
    seed: LineSeed,
) -> Result<Vec<[f64; 2]>, ContactError> {
    assert_eq!(points.len(), line.fit_weights.len());
    let wsum: f64 = line.fit_weights.iter().sum();
    let mut c = [0.0, 0.0];
    for (p, &w) in points.iter().zip(&line.fit_weights) {
        c[0] += w * p[0];
        c[1] += w * p[1];
    }
    c[0] /= wsum;
    c[1] /= wsum;
    let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
    for (p, &w) in points.iter().zip(&line.fit_weights) {
        let dx = p[0] - c[0];
        let dy = p[1] - c[1];
        cxx += w * dx * dx;
        cxy += w * dx * dy;
        cyy += w * dy * dy;
    }
    let n = line.normal;
    let v = vec2::rot_cw(n);
    let quad_form = |a: [f64; 2], b: [f64; 2]| {
        a[0] * (cxx * b[0] + cxy * b[1]) + a[1] * (cxy * b[0] + cyy * b[1])
    };
    let lam_n = quad_form(n, n);
    let lam_v = quad_form(v, v);
    let scale = cxx.abs().max(cyy.abs()).max(1e-300);
    if (lam_n - lam_v).abs() <= 1e-12 * scale {
        return Err(ContactError::DegenerateFit {
            edge: line.source_edge,
        });
    }
    // Offset chain: o = n̂·c.
    let gn = [
        seed.normal[0] + seed.offset * c[0],
        seed.normal[1] + seed.offset * c[1],
    ];
    let t = vec2::dot(gn, v) / (lam_n - lam_v);
    let mut out = Vec::with_capacity(points.len());
    for (p, &w) in points.iter().zip(&line.fit_weights) {
        let q = vec2::sub(*p, c);
        let eig = vec2::scale(
            w * t,
            [
                v[0] * vec2::dot(n, q) + n[0] * vec2::dot(v, q),
                v[1] * vec2::dot(n, q) + n[1] * vec2::dot(v, q),
            ],
        );
        let cent = vec2::scale(w / wsum * seed.offset, n);
        out.push([eig[0] + cent[0], eig[1] + cent[1]]);
    }
    Ok(out)
}

/// Where the rigid-side field that fed a record's line fits came from.
enum FitSource {
    /// The undeformed reference (the very first left solve).
    Reference,
    /// The raw field of `records[index]`, minus `gauge` on every x dof.
    Record { index: usize, gauge: f64 },
}

fn fit_source(record_index: usize, state: &SolveState) -> FitSource {
    if record_index % 2 == 1 {
        // Right solve: lines fitted to the left field recorded just before,
        // raw (the gauge runs after both solves of an iteration).
        FitSource::Record {
            index: record_index - 1,
            gauge: 0.0,
        }
    } else {
        let iter = record_index / 2;
        if iter == 0 {
            FitSource::Reference
        } else {
            // Left solve: lines fitted to the previous iteration's right
            // field as it stood after that iteration's gauge step.
            FitSource::Record {
                index: record_index - 1,
                gauge: state.gauge_history[iter - 1],
            }
        }
    }
}

/// Add `coef` to the x-dof seed of every traction-edge node of `mesh`.
fn add_traction_x(seed: &mut FieldVector, mesh: &TriMesh, coef: f64) {
    let nodes = mesh.nodes_with_tag(BoundaryTag::Traction);
    let per = coef / nodes.len() as f64;
    for &n in &nodes {
        seed[fem::dof(n, 0)] += per;
    }
}

fn sum_x(v: &FieldVector) -> f64 {
    let mut s = 0.0;
    for n in 0..v.len() / 2 {
        s += v[fem::dof(n, 0)];
    }
    s
}

/// Reverse sweep over the solve history: total `dL/dX` for both halves.
///
/// `seeds` are `dL/du` on the final gauged fields. The sweep walks the
/// records last to first, turning each record's accumulated seed into
/// coordinate contributions and line seeds, and the line seeds into
/// coordinate terms plus upstream field seeds. A seed crossing a gauge step
/// picks up the gauge constant's own dependence on that iteration's two raw
/// fields: the constant is the mean of the two loaded edges' mean x
/// displacements, so the correction spreads uniformly over traction-edge
/// x dofs.
pub fn grad_wrt_mesh_coords(
    inp: &AlternateInputs,
    state: &SolveState,
    seeds: &ObjectiveSeeds,
    mode: AdjointMode,
) -> Result<CoordGradient, ContactError> {
    let nr = state.records.len();
    assert!(nr >= 2 && nr % 2 == 0, "history must hold full iterations");
    match mode {
        AdjointMode::FullTape => full_tape_sweep(inp, state, seeds),
        AdjointMode::FrozenFixedPoint => frozen_fixed_point(inp, state, seeds),
    }
}

/// Apply the final gauge hop: route seeds on the gauged live fields to the
/// last two raw records, including the gauge constant's own linear
/// dependence on those records.
fn final_gauge_hop(
    inp: &AlternateInputs,
    seeds: &ObjectiveSeeds,
) -> (FieldVector, FieldVector) {
    let mut g_l = seeds.left.clone();
    let mut g_r = seeds.right.clone();
    let dc = -(sum_x(&seeds.left) + sum_x(&seeds.right));
    if dc != 0.0 {
        add_traction_x(&mut g_l, inp.mesh_l, 0.5 * dc);
        add_traction_x(&mut g_r, inp.mesh_r, 0.5 * dc);
    }
    (g_l, g_r)
}

/// Backprop one record's line seeds through their fits. Adds the direct
/// coordinate terms to `grad`, and returns the seed on the fitted field
/// (over the rigid mesh's dofs) for the caller to route upstream.
fn backprop_record_lines(
    inp: &AlternateInputs,
    record: &SolveRecord,
    line_seeds: &[LineSeed],
    fit_points: impl Fn(usize) -> [f64; 2],
    grad: &mut CoordGradient,
) -> Result<FieldVector, ContactError> {
    let rigid_side = match record.side {
        Side::Left => Side::Right,
        Side::Right => Side::Left,
    };
    let rigid_mesh = match rigid_side {
        Side::Left => inp.mesh_l,
        Side::Right => inp.mesh_r,
    };
    let mut g_pts = vec![0.0; 2 * rigid_mesh.node_count()];
    for (line, seed) in record.lines.iter().zip(line_seeds) {
        let points: Vec<[f64; 2]> = line.nodes.iter().map(|&n| fit_points(n)).collect();
        let dp = backprop_line_fit(line, &points, *seed)?;
        let rigid_grad = grad.side(rigid_side);
        for (j, &node) in line.nodes.iter().enumerate() {
            rigid_grad[node][0] += dp[j][0];
            rigid_grad[node][1] += dp[j][1];
            g_pts[fem::dof(node, 0)] += dp[j][0];
            g_pts[fem::dof(node, 1)] += dp[j][1];
        }
    }
    Ok(g_pts)
}

fn add_field(dst: &mut FieldVector, src: &FieldVector) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn add_coord_grad(dst: &mut Vec<[f64; 2]>, src: &[[f64; 2]]) {
    for (d, s) in dst.iter_mut().zip(src) {
        d[0] += s[0];
        d[1] += s[1];
    }
}

fn full_tape_sweep(
    inp: &AlternateInputs,
    state: &SolveState,
    seeds: &ObjectiveSeeds,
) -> Result<CoordGradient, ContactError> {
    let nr = state.records.len();
    let m_l = inp.mesh_l;
    let m_r = inp.mesh_r;
    let mut rec_seeds: Vec<FieldVector> = state
        .records
        .iter()
        .map(|r| match r.side {
            Side::Left => vec![0.0; 2 * m_l.node_count()],
            Side::Right => vec![0.0; 2 * m_r.node_count()],
        })
        .collect();
    let (g_l, g_r) = final_gauge_hop(inp, seeds);
    add_field(&mut rec_seeds[nr - 2], &g_l);
    add_field(&mut rec_seeds[nr - 1], &g_r);

    let mut grad = CoordGradient::zeros(m_l, m_r);
    for r in (0..nr).rev() {
        if rec_seeds[r].iter().all(|&v| v == 0.0) {
            continue;
        }
        let record = &state.records[r];
        let g = std::mem::take(&mut rec_seeds[r]);
        let (dx_own, line_seeds) = adjoint_solve_step(inp, record, &g)?;
        add_coord_grad(grad.side(record.side), &dx_own);

        let rigid_coords = match record.side {
            Side::Left => inp.coords_r,
            Side::Right => inp.coords_l,
        };
        let source = fit_source(r, state);
        let g_pts = backprop_record_lines(
            inp,
            record,
            &line_seeds,
            |node| {
                let mut p = rigid_coords[node];
                if let FitSource::Record { index, gauge } = source {
                    p[0] += state.records[index].u[fem::dof(node, 0)] - gauge;
                    p[1] += state.records[index].u[fem::dof(node, 1)];
                }
                p
            },
            &mut grad,
        )?;
        if let FitSource::Record { index, gauge: _ } = source {
            add_field(&mut rec_seeds[index], &g_pts);
            if r % 2 == 0 {
                // The fitted field was gauged; its constant is built from
                // both raw fields of iteration r/2 - 1 (records index and
                // index - 1).
                let dcg = -sum_x(&g_pts);
                if dcg != 0.0 {
                    add_traction_x(&mut rec_seeds[index], m_r, 0.5 * dcg);
                    add_traction_x(&mut rec_seeds[index - 1], m_l, 0.5 * dcg);
                }
            }
        }
    }
    Ok(grad)
}

/// Relative seed-norm threshold at which the frozen-fixed-point cycle stops.
const FIXED_POINT_SEED_TOL: f64 = 1e-12;
/// Hard cap on frozen-fixed-point cycles.
const FIXED_POINT_MAX_CYCLES: usize = 1000;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
}

fn frozen_fixed_point(
    inp: &AlternateInputs,
    state: &SolveState,
    seeds: &ObjectiveSeeds,
) -> Result<CoordGradient, ContactError> {
    let nr = state.records.len();
    let rec_l = &state.records[nr - 2];
    let rec_r = &state.records[nr - 1];
    let ctx_l = build_record_adjoint(inp, rec_l)?;
    let ctx_r = build_record_adjoint(inp, rec_r)?;
    let last_gauge = *state.gauge_history.last().unwrap();

    let (mut g_l, mut g_r) = final_gauge_hop(inp, seeds);
    let seed_scale = inf_norm(&g_l).max(inf_norm(&g_r)).max(1e-300);
    let mut grad = CoordGradient::zeros(inp.mesh_l, inp.mesh_r);
    for _ in 0..FIXED_POINT_MAX_CYCLES {
        if inf_norm(&g_l).max(inf_norm(&g_r)) <= FIXED_POINT_SEED_TOL * seed_scale {
            break;
        }
        // Right record: its lines were fitted to the left record's raw field.
        let (dx_r, ls_r) = apply_record_adjoint(&ctx_r, inp, rec_r, &g_r);
        add_coord_grad(&mut grad.right, &dx_r);
        let to_left = backprop_record_lines(
            inp,
            rec_r,
            &ls_r,
            |node| {
                [
                    inp.coords_l[node][0] + rec_l.u[fem::dof(node, 0)],
                    inp.coords_l[node][1] + rec_l.u[fem::dof(node, 1)],
                ]
            },
            &mut grad,
        )?;
        add_field(&mut g_l, &to_left);
        g_r.iter_mut().for_each(|v| *v = 0.0);

        // Left record: its lines were fitted to the previous iteration's
        // gauged right field; at the fixed point that field coincides with
        // the final one up to the convergence gap, so the seed cycles back
        // to the right record, and the gauge constant's dependence spreads
        // over both records' traction dofs.
        let (dx_l, ls_l) = apply_record_adjoint(&ctx_l, inp, rec_l, &g_l);
        add_coord_grad(&mut grad.left, &dx_l);
        if nr == 2 {
            // A single-iteration history fits the first left lines to the
            // undeformed reference: nothing cycles back.
            let _ = backprop_record_lines(
                inp,
                rec_l,
                &ls_l,
                |node| inp.coords_r[node],
                &mut grad,
            )?;
            break;
        }
        let to_right = backprop_record_lines(
            inp,
            rec_l,
            &ls_l,
            |node| {
                [
                    inp.coords_r[node][0] + rec_r.u[fem::dof(node, 0)] - last_gauge,
                    inp.coords_r[node][1] + rec_r.u[fem::dof(node, 1)],
                ]
            },
            &mut grad,
        )?;
        g_l.iter_mut().for_each(|v| *v = 0.0);
        add_field(&mut g_r, &to_right);
        let dcg = -sum_x(&to_right);
        if dcg != 0.0 {
            add_traction_x(&mut g_r, inp.mesh_r, 0.5 * dcg);
            add_traction_x(&mut g_l, inp.mesh_l, 0.5 * dcg);
        }
    }
    Ok(grad)
}

/// Chain a coordinate gradient through both morphs to design parameters,
/// `dL/dθ = Jᵀ_left dL/dX_left + Jᵀ_right dL/dX_right`.
pub fn grad_wrt_params(
    grad: &CoordGradient,
    morph_l: &MorphMap,
    morph_r: &MorphMap,
) -> Vec<f64> {
    let mut out = morph_jacobian_tvp(morph_l, &grad.left);
    let right = morph_jacobian_tvp(morph_r, &grad.right);
    for (o, r) in out.iter_mut().zip(&right) {
        *o += r;
    }
    out
}

/// One scalar entry of a coordinate-gradient check: coordinate `comp`
/// (0 = x, 1 = y) of node `node` on `side`'s mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoordComponent {
    pub side: Side,
    pub node: usize,
    pub comp: usize,
}

/// Every (x, y) coordinate of every contact-edge node on both meshes, left
/// half first, in ascending node order.
pub fn contact_coord_components(mesh_l: &TriMesh, mesh_r: &TriMesh) -> Vec<CoordComponent> {
    let mut out = Vec::new();
    for (side, mesh) in [(Side::Left, mesh_l), (Side::Right, mesh_r)] {
        let mut nodes: Vec<usize> = (0..contact_edge_count(mesh))
            .flat_map(|k| mesh.contact_edge_nodes(k).into_iter().map(|(n, _)| n))
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        for node in nodes {
            for comp in 0..2 {
                out.push(CoordComponent { side, node, comp });
            }
        }
    }
    out
}

/// Central finite differences of the displacement metric with respect to
/// the selected mesh coordinates.
///
/// Every perturbed run must perform identical work, so `opts` should pin
/// `fixed_iterations` (and a tight Newton tolerance) — otherwise the
/// differences measure scheduling noise, not the derivative.
pub fn fd_gradient(
    inp: &AlternateInputs,
    opts: &AlternateOptions,
    comps: &[CoordComponent],
    step: f64,
) -> Result<Vec<f64>, ContactError> {
    let mut out = Vec::with_capacity(comps.len());
    for c in comps {
        let mut d_pair = [0.0; 2];
        for (slot, sign) in [(0usize, 1.0), (1usize, -1.0)] {
            let mut cl = inp.coords_l.to_vec();
            let mut cr = inp.coords_r.to_vec();
            match c.side {
                Side::Left => cl[c.node][c.comp] += sign * step,
                Side::Right => cr[c.node][c.comp] += sign * step,
            }
            let pert = AlternateInputs {
                mesh_l: inp.mesh_l,
                coords_l: &cl,
                mesh_r: inp.mesh_r,
                coords_r: &cr,
                mat: inp.mat,
                traction: inp.traction,
                cfg: inp.cfg,
            };
            d_pair[slot] = crate::contact::alternate(&pert, opts)?.d_value;
        }
        out.push((d_pair[0] - d_pair[1]) / (2.0 * step));
    }
    Ok(out)
}

/// Side-by-side adjoint and finite-difference gradients of `d`.
#[derive(Debug, Clone)]
pub struct FDCheckReport {
    pub components: Vec<CoordComponent>,
    pub adjoint: Vec<f64>,
    pub fd: Vec<f64>,
    /// `|adjoint - fd| / |fd|` per component (`|fd|` floored at [`FD_FLOOR`]).
    pub rel_diff: Vec<f64>,
    /// Mean of `rel_diff` over components with `|fd|` above the floor.
    pub mean_rel_diff: f64,
    pub step: f64,
    /// Differencing scheme; always "central".
    pub mode: &'static str,
}

/// Run the adjoint and the FD oracle over `comps` (all contact-edge vertex
/// coordinates if empty) and report their agreement.
pub fn check_gradient(
    inp: &AlternateInputs,
    opts: &AlternateOptions,
    comps: &[CoordComponent],
    step: f64,
) -> Result<FDCheckReport, ContactError> {
    let components: Vec<CoordComponent> = if comps.is_empty() {
        contact_coord_components(inp.mesh_l, inp.mesh_r)
    } else {
        comps.to_vec()
    };
    let state = crate::contact::alternate(inp, opts)?;
    let seeds = d_metric_seeds(inp.mesh_l, inp.mesh_r);
    let grad = grad_wrt_mesh_coords(inp, &state, &seeds, AdjointMode::FullTape)?;
    let adjoint: Vec<f64> = components
        .iter()
        .map(|c| match c.side {
            Side::Left => grad.left[c.node][c.comp],
            Side::Right => grad.right[c.node][c.comp],
        })
        .collect();
    let fd = fd_gradient(inp, opts, &components, step)?;
    let rel_diff: Vec<f64> = adjoint
        .iter()
        .zip(&fd)
        .map(|(&a, &f)| (a - f).abs() / f.abs().max(FD_FLOOR))
        .collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&f, &r) in fd.iter().zip(&rel_diff) {
        if f.abs() > FD_FLOOR {
            sum += r;
            count += 1;
        }
    }
    let mean_rel_diff = if count > 0 { sum / count as f64 } else { 0.0 };
    Ok(FDCheckReport {
        components,
        adjoint,
        fd,
        rel_diff,
        mean_rel_diff,
        step,
        mode: "central",
    })
}
