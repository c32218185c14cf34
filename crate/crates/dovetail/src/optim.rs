//! Shape optimization of the simulated joint stiffness.
//!
//! The objective couples the simulated interface stretch `d` with two
//! geometric regularizers,
//!
//! ```text
//! L(θ) = d(u(θ)) + w_min_len · Σ_k max(min_len − l_k(θ), 0)²
//!                + w_min_width · max(min_width − width(θ), 0)²
//! ```
//!
//! and averages both `L` and `d` over a few Gaussian parameter
//! perturbations so the optimizer cannot park in a mesh-induced wrinkle of
//! the landscape.  [`optimize`] runs plain gradient descent on this
//! objective: each step line-searches the negative gradient under the
//! strong Wolfe conditions, falls back to a random step length when that
//! search fails, and the best iterate by simulated `d` is kept regardless
//! of where the walk ends.
//!
//! Every random draw comes from a counter-keyed stream ([`crate::rng`]), so
//! a run is a pure function of its seed: noise is frozen per optimization
//! step (line-search trials within one step see one fixed landscape), and
//! re-running a configuration reproduces the trace bit for bit.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::adjoint::{self, AdjointMode};
use crate::contact::{
    alternate, AlternateInputs, AlternateOptions, ContactError, PenaltyConfig,
};
use crate::fem::Material;
use crate::geometry::{
    build_geometry, validate_params, DesignSpace, GeometryError, ParamViolation, Side,
};
use crate::mesh::{build_morph, triangulate, MeshError};
use crate::rng;
use crate::vec2;

/// Contact edges shorter than this are penalized, mm.
pub const DEFAULT_MIN_LEN: f64 = 1.5;
/// Joints whose neck is narrower than this are penalized, mm.
pub const DEFAULT_MIN_WIDTH: f64 = 3.5;
/// Standard deviation of the additive parameter noise, mm.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.01;
/// Number of noise draws averaged per objective evaluation.
pub const DEFAULT_NOISE_SAMPLES: usize = 3;
/// Number of gradient-descent steps of a full optimization run.
pub const DEFAULT_OPT_STEPS: usize = 15;
/// Sufficient-decrease constant of the strong Wolfe conditions.
pub const WOLFE_C1: f64 = 1e-4;
/// Curvature constant of the strong Wolfe conditions.
pub const WOLFE_C2: f64 = 0.9;
/// Objective-evaluation budget of one line search.
pub const WOLFE_EVAL_BUDGET: usize = 20;
/// Standard deviation of the random fallback step size, mm.
pub const FALLBACK_SIGMA: f64 = 0.5;
/// How many times an infeasible noise draw is replaced before the sample
/// (and with it the whole evaluation) is declared failed.
pub const SAMPLE_REDRAWS: usize = 5;
/// How many times an infeasible or failing fallback iterate is re-drawn
/// before the step degrades to no-move.
pub const ITERATE_RETRIES: usize = 3;

/// Weights, thresholds, and noise protocol of the optimization objective.
#[derive(Debug, Clone)]
pub struct ObjectiveConfig {
    /// Weight of the minimum-contact-length regularizer.
    pub w_min_len: f64,
    /// Weight of the minimum-width regularizer.
    pub w_min_width: f64,
    /// Minimum admissible contact-edge length, mm.
    pub min_len: f64,
    /// Minimum admissible neck width, mm.
    pub min_width: f64,
    /// Standard deviation of the additive parameter noise, mm.
    pub noise_sigma: f64,
    /// Number of noise draws averaged per evaluation.
    pub noise_samples: usize,
    /// Root seed from which every random stream of the run is derived.
    pub rng_seed: u64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            w_min_len: 1.0,
            w_min_width: 1.0,
            min_len: DEFAULT_MIN_LEN,
            min_width: DEFAULT_MIN_WIDTH,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            noise_samples: DEFAULT_NOISE_SAMPLES,
            rng_seed: 0,
        }
    }
}

/// Physical and numerical setup shared by every objective evaluation: which
/// design family is optimized and how each perturbed design is meshed and
/// solved.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub space: DesignSpace,
    /// Target mesh edge length, mm.
    pub h: f64,
    pub mat: Material,
    /// Tensile traction magnitude on both outer edges, GPa.
    pub traction: f64,
    pub penalty: PenaltyConfig,
    pub options: AlternateOptions,
    /// Adjoint propagation used for parameter gradients.
    pub mode: AdjointMode,
}

impl Pipeline {
    /// Default setup for `space`: E = 1 GPa, ν = 0.4, traction 0.001 GPa for
    /// the single-tail family and 0.003 GPa for the two larger ones, mesh
    /// step 0.5 mm, and a *fixed* count of eight alternations.
    ///
    /// The fixed count (rather than an early exit on the change norm) keeps
    /// the objective one smooth composition over the whole design space;
    /// an adaptive iteration count would hand the line search a function
    /// with branch-induced kinks at every convergence threshold.
    pub fn new(space: DesignSpace) -> Pipeline {
        let traction = match space {
            DesignSpace::SingleDovetail => 0.001,
            DesignSpace::ComplexDovetail | DesignSpace::DoubleDovetail => 0.003,
        };
        let options = AlternateOptions {
            fixed_iterations: Some(AlternateOptions::default().max_iters),
            ..AlternateOptions::default()
        };
        Pipeline {
            space,
            h: 0.5,
            mat: Material::new(1.0, 0.4).expect("default material is valid"),
            traction,
            penalty: PenaltyConfig::default(),
            options,
            mode: AdjointMode::FullTape,
        }
    }
}

/// Minimum-contact-length regularizer: `Σ_k max(min_len − l_k, 0)²` over the
/// contact edges of the interface polyline at `theta`.
pub fn regularizer_min_len(space: DesignSpace, theta: &[f64], min_len: f64) -> f64 {
    let v = space.interface_vertices(theta);
    (0..v.len() - 1)
        .map(|k| {
            let deficit = (min_len - vec2::dist(v[k], v[k + 1])).max(0.0);
            deficit * deficit
        })
        .sum()
}

/// Gradient of [`regularizer_min_len`] with respect to `theta`.
pub fn regularizer_min_len_grad(space: DesignSpace, theta: &[f64], min_len: f64) -> Vec<f64> {
    let v = space.interface_vertices(theta);
    let jac = space.interface_jacobian();
    let np = space.param_count();
    let mut g = vec![0.0; np];
    for k in 0..v.len() - 1 {
        let d = vec2::sub(v[k + 1], v[k]);
        let len = vec2::norm(d);
        let deficit = min_len - len;
        if deficit > 0.0 && len > 0.0 {
            for (p, gp) in g.iter_mut().enumerate() {
                let dlen = vec2::dot(d, vec2::sub(jac[k + 1][p], jac[k][p])) / len;
                *gp -= 2.0 * deficit * dlen;
            }
        }
    }
    g
}

/// Minimum-width regularizer: `max(min_width − 2a, 0)²`, where `2a` is the
/// neck width of the joint (see [`crate::geometry::JointGeometry::joint_width`]).
pub fn regularizer_min_width(space: DesignSpace, theta: &[f64], min_width: f64) -> f64 {
    let deficit = (min_width - 2.0 * theta[space.a_index()]).max(0.0);
    deficit * deficit
}

/// Gradient of [`regularizer_min_width`] with respect to `theta`.
pub fn regularizer_min_width_grad(space: DesignSpace, theta: &[f64], min_width: f64) -> Vec<f64> {
    let mut g = vec![0.0; space.param_count()];
    let deficit = min_width - 2.0 * theta[space.a_index()];
    if deficit > 0.0 {
        g[space.a_index()] = -4.0 * deficit;
    }
    g
}

/// Outcome of one noise sample inside an evaluation.
#[derive(Debug, Clone)]
pub struct SampleReport {
    /// Simulated stretch of this sample, mm (infinite when the sample failed).
    pub d: f64,
    /// Whether the alternation met its nodewise change tolerance.
    pub converged: bool,
    /// Alternations run.
    pub iterations: usize,
    /// Noise re-draws consumed by infeasible perturbations.
    pub redraws: usize,
}

/// One objective evaluation: noise-averaged value, stretch, and (optionally)
/// parameter gradient.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Averaged objective; infinite when any sample failed.
    pub l: f64,
    /// Averaged simulated stretch, mm; infinite when any sample failed.
    pub d: f64,
    /// Averaged dL/dθ; `None` when not requested or when the evaluation
    /// failed.
    pub grad: Option<Vec<f64>>,
    /// Per-sample solver reports, in sample order.
    pub samples: Vec<SampleReport>,
}

impl Evaluation {
    fn failed(samples: Vec<SampleReport>) -> Evaluation {
        Evaluation {
            l: f64::INFINITY,
            d: f64::INFINITY,
            grad: None,
            samples,
        }
    }
}

#[derive(Debug, Error)]
enum SampleError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Contact(#[from] ContactError),
}

/// Evaluate the noise-averaged objective at `theta`.
///
/// `step_index` keys the noise streams: all evaluations within one
/// optimization step (the gradient and every line-search trial) share one
/// frozen noise realization per sample, so the line search minimizes a
/// single smooth function; across steps the noise is independent.
pub fn objective(
    theta: &[f64],
    cfg: &ObjectiveConfig,
    pipe: &Pipeline,
    step_index: u64,
) -> Evaluation {
    evaluate(theta, cfg, pipe, step_index, false)
}

/// Evaluate the objective together with its averaged parameter gradient.
///
/// The gradient uses the same noise realizations as [`objective`] for the
/// same `step_index`, so the pair (value, gradient) is consistent: the
/// gradient differentiates exactly the function the value samples.
pub fn objective_grad(
    theta: &[f64],
    cfg: &ObjectiveConfig,
    pipe: &Pipeline,
    step_index: u64,
) -> Evaluation {
    evaluate(theta, cfg, pipe, step_index, true)
}

fn evaluate(
    theta: &[f64],
    cfg: &ObjectiveConfig,
    pipe: &Pipeline,
    step_index: u64,
    want_grad: bool,
) -> Evaluation {
    assert!(cfg.noise_samples >= 1, "need at least one noise sample");
    assert!(cfg.noise_sigma >= 0.0 && cfg.w_min_len >= 0.0 && cfg.w_min_width >= 0.0);
    let np = pipe.space.param_count();
    assert_eq!(theta.len(), np, "theta dimension mismatch");

    // With zero noise every sample is identical; evaluating once keeps the
    // result exactly invariant to the sample count (an explicit average of
    // equal values could differ in the last ulp).
    let n_samples = if cfg.noise_sigma == 0.0 {
        1
    } else {
        cfg.noise_samples
    };

    let mut l_sum = 0.0;
    let mut d_sum = 0.0;
    let mut g_sum = vec![0.0; np];
    let mut samples = Vec::with_capacity(n_samples);
    let mut failed = false;

    for s in 0..n_samples {
        let mut redraws = 0usize;
        let mut perturbed = None;
        if cfg.noise_sigma == 0.0 {
            if validate_params(pipe.space, theta).is_empty() {
                perturbed = Some(theta.to_vec());
            }
        } else {
            let mut stream = rng::stream(
                cfg.rng_seed,
                &[rng::purpose::NOISE, step_index, s as u64],
            );
            for attempt in 0..=SAMPLE_REDRAWS {
                let cand: Vec<f64> = theta
                    .iter()
                    .map(|&t| t + cfg.noise_sigma * stream.sample::<f64, _>(StandardNormal))
                    .collect();
                if validate_params(pipe.space, &cand).is_empty() {
                    redraws = attempt;
                    perturbed = Some(cand);
                    break;
                }
            }
            if perturbed.is_none() {
                redraws = SAMPLE_REDRAWS;
            }
        }

        let Some(theta_s) = perturbed else {
            samples.push(SampleReport {
                d: f64::INFINITY,
                converged: false,
                iterations: 0,
                redraws,
            });
            failed = true;
            continue;
        };

        match run_sample(&theta_s, cfg, pipe, want_grad) {
            Ok((l_s, d_s, grad_s, mut report)) => {
                report.redraws = redraws;
                l_sum += l_s;
                d_sum += d_s;
                if let Some(gs) = grad_s {
                    for (acc, g) in g_sum.iter_mut().zip(&gs) {
                        *acc += g;
                    }
                }
                samples.push(report);
            }
            Err(_) => {
                samples.push(SampleReport {
                    d: f64::INFINITY,
                    converged: false,
                    iterations: 0,
                    redraws,
                });
                failed = true;
            }
        }
    }

    if failed {
        return Evaluation::failed(samples);
    }
    let inv = 1.0 / n_samples as f64;
    Evaluation {
        l: l_sum * inv,
        d: d_sum * inv,
        grad: want_grad.then(|| g_sum.iter().map(|&g| g * inv).collect()),
        samples,
    }
}

/// Run the full pipeline (mesh, alternate solve, optionally adjoint) on one
/// perturbed parameter vector.
fn run_sample(
    theta: &[f64],
    cfg: &ObjectiveConfig,
    pipe: &Pipeline,
    want_grad: bool,
) -> Result<(f64, f64, Option<Vec<f64>>, SampleReport), SampleError> {
    let geom = build_geometry(pipe.space, theta)?;
    let mesh_l = triangulate(&geom, Side::Left, pipe.h)?;
    let mesh_r = triangulate(&geom, Side::Right, pipe.h)?;
    let inp = AlternateInputs {
        mesh_l: &mesh_l,
        coords_l: &mesh_l.nodes,
        mesh_r: &mesh_r,
        coords_r: &mesh_r.nodes,
        mat: pipe.mat,
        traction: pipe.traction,
        cfg: pipe.penalty,
    };
    let state = alternate(&inp, &pipe.options)?;
    let d = state.d_value;
    let l = d
        + cfg.w_min_len * regularizer_min_len(pipe.space, theta, cfg.min_len)
        + cfg.w_min_width * regularizer_min_width(pipe.space, theta, cfg.min_width);

    let grad = if want_grad {
        let seeds = adjoint::d_metric_seeds(&mesh_l, &mesh_r);
        let gx = adjoint::grad_wrt_mesh_coords(&inp, &state, &seeds, pipe.mode)?;
        let morph_l = build_morph(&geom, &mesh_l, theta)?;
        let morph_r = build_morph(&geom, &mesh_r, theta)?;
        let mut g = adjoint::grad_wrt_params(&gx, &morph_l, &morph_r);
        let g_len = regularizer_min_len_grad(pipe.space, theta, cfg.min_len);
        let g_wid = regularizer_min_width_grad(pipe.space, theta, cfg.min_width);
        for (p, gp) in g.iter_mut().enumerate() {
            *gp += cfg.w_min_len * g_len[p] + cfg.w_min_width * g_wid[p];
        }
        Some(g)
    } else {
        None
    };

    let report = SampleReport {
        d,
        converged: state.converged,
        iterations: state.iterations,
        redraws: 0,
    };
    Ok((l, d, grad, report))
}

/// Line-search failure cases.
#[derive(Debug, Error)]
pub enum LineSearchError {
    /// The supplied direction does not point downhill.
    #[error("search direction is not a descent direction (directional slope {slope:.3e})")]
    NotDescent { slope: f64 },
    /// No strong-Wolfe step was found within the evaluation budget.
    #[error("no strong-Wolfe step within {evals} objective evaluations")]
    Budget { evals: usize },
}

/// A successful line-search result: the accepted step length and the
/// objective evaluation at the accepted point.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    pub eval: Evaluation,
    /// Objective evaluations consumed.
    pub evals: usize,
}

/// Bracketing/zoom search for a step satisfying the strong Wolfe conditions
///
/// ```text
/// φ(α) ≤ φ(0) + c1 α φ′(0)      (sufficient decrease)
/// |φ′(α)| ≤ c2 |φ′(0)|          (curvature)
/// ```
///
/// `eval` returns `(φ(α), φ′(α), payload)`; an infinite `φ` marks an
/// infeasible trial, whose slope is never read.  The bracketing phase
/// doubles the trial step until it overshoots, then bisection zooms into
/// the bracket.  Every call of `eval` counts against `budget`.
fn wolfe_engine<T>(
    phi0: f64,
    dphi0: f64,
    alpha_init: f64,
    budget: usize,
    mut eval: impl FnMut(f64) -> (f64, f64, T),
) -> Result<(f64, T, usize), LineSearchError> {
    if !(dphi0 < 0.0) {
        return Err(LineSearchError::NotDescent { slope: dphi0 });
    }
    let mut evals = 0usize;
    let mut prev_alpha = 0.0;
    let mut prev_phi = phi0;
    let mut alpha = alpha_init;

    // Bracketing: grow alpha until the objective stops improving (bracket
    // found) or the curvature condition accepts the trial outright.
    let (mut a_lo, mut f_lo, mut a_hi) = loop {
        if evals == budget {
            return Err(LineSearchError::Budget { evals });
        }
        let (phi, dphi, payload) = eval(alpha);
        evals += 1;
        if phi > phi0 + WOLFE_C1 * alpha * dphi0 || (evals > 1 && phi >= prev_phi) {
            break (prev_alpha, prev_phi, alpha);
        }
        if dphi.abs() <= -WOLFE_C2 * dphi0 {
            return Ok((alpha, payload, evals));
        }
        if dphi >= 0.0 {
            break (alpha, phi, prev_alpha);
        }
        prev_alpha = alpha;
        prev_phi = phi;
        alpha *= 2.0;
    };

    // Zoom: bisect the bracket, keeping `a_lo` at the lower objective value.
    loop {
        if evals == budget {
            return Err(LineSearchError::Budget { evals });
        }
        let mid = 0.5 * (a_lo + a_hi);
        let (phi, dphi, payload) = eval(mid);
        evals += 1;
        if phi > phi0 + WOLFE_C1 * mid * dphi0 || phi >= f_lo {
            a_hi = mid;
        } else {
            if dphi.abs() <= -WOLFE_C2 * dphi0 {
                return Ok((mid, payload, evals));
            }
            if dphi * (a_hi - a_lo) >= 0.0 {
                a_hi = a_lo;
            }
            a_lo = mid;
            f_lo = phi;
        }
    }
}

/// Search along `direction` from `theta` for a step satisfying the strong
/// Wolfe conditions on the noise-frozen objective of `step_index`.
///
/// `l0` and `g0` are the objective value and gradient at `theta` under the
/// same `step_index`.  The first trial step displaces `theta` by one
/// parameter-space unit (1 mm), making the search scale-free in the
/// gradient magnitude.
pub fn wolfe_line_search(
    theta: &[f64],
    direction: &[f64],
    l0: f64,
    g0: &[f64],
    cfg: &ObjectiveConfig,
    pipe: &Pipeline,
    step_index: u64,
) -> Result<LineSearchOutcome, LineSearchError> {
    let dphi0 = dot(g0, direction);
    let dir_norm = norm(direction);
    let alpha_init = if dir_norm > 0.0 { 1.0 / dir_norm } else { 1.0 };
    let (alpha, eval, evals) = wolfe_engine(l0, dphi0, alpha_init, WOLFE_EVAL_BUDGET, |a| {
        let trial: Vec<f64> = theta
            .iter()
            .zip(direction)
            .map(|(&t, &p)| t + a * p)
            .collect();
        let ev = evaluate(&trial, cfg, pipe, step_index, true);
        let dphi = ev
            .grad
            .as_ref()
            .map_or(f64::NAN, |g| dot(g, direction));
        (ev.l, dphi, ev)
    })?;
    Ok(LineSearchOutcome { alpha, eval, evals })
}

/// How an optimization step moved (or failed to move) the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// The starting point, before any step.
    Init,
    /// Accepted strong-Wolfe step along the negative gradient.
    Wolfe,
    /// Random step size along the normalized negative gradient after a
    /// failed line search (a negative size moves uphill along `+g`).
    RandomFallback,
    /// Every fallback candidate was rejected; the iterate did not move.
    NoMove,
}

impl StepKind {
    /// Stable identifier used in trace exports.
    pub fn name(self) -> &'static str {
        match self {
            StepKind::Init => "init",
            StepKind::Wolfe => "wolfe",
            StepKind::RandomFallback => "random-fallback",
            StepKind::NoMove => "no-move",
        }
    }
}

/// One row of the optimization trace.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    /// Iterate after this step.
    pub theta: Vec<f64>,
    /// Noise-averaged objective recorded for this iterate (for a no-move
    /// step, carried from the previous entry).
    pub l: f64,
    /// Noise-averaged simulated stretch, mm.
    pub d: f64,
    /// Accepted Wolfe step length, or the drawn fallback step size.
    pub step_size: f64,
    pub kind: StepKind,
    /// Per-noise-sample solver reports of the recorded evaluation (empty
    /// for a no-move step).
    pub samples: Vec<SampleReport>,
}

/// Full record of an optimization run: the initial entry plus one entry per
/// step, and the index of the best iterate by simulated `d`.
#[derive(Debug, Clone)]
pub struct OptTrace {
    pub entries: Vec<TraceEntry>,
    /// Index of the entry with the smallest finite recorded `d`.
    pub best_index: usize,
}

impl OptTrace {
    /// The best entry by simulated `d`.
    pub fn best(&self) -> &TraceEntry {
        &self.entries[self.best_index]
    }

    /// Render the trace as CSV with columns
    /// `step,<param names>,L,d,step_size,step_kind`.
    pub fn to_csv(&self, space: DesignSpace) -> String {
        let mut out = String::from("step");
        for name in space.param_names() {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",L,d,step_size,step_kind\n");
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&i.to_string());
            for t in &e.theta {
                out.push(',');
                out.push_str(&t.to_string());
            }
            out.push_str(&format!(
                ",{},{},{},{}\n",
                e.l,
                e.d,
                e.step_size,
                e.kind.name()
            ));
        }
        out
    }
}

/// Errors that stop an optimization before its first step; failures during
/// the steps themselves are recorded in the trace instead.
#[derive(Debug, Error)]
pub enum OptError {
    #[error("initial parameters are infeasible: {0:?}")]
    InfeasibleStart(Vec<ParamViolation>),
    #[error("objective evaluation failed at the initial parameters")]
    InitialEvaluationFailed,
}

/// Run `steps` gradient-descent steps from `theta0` and keep the best
/// iterate by simulated `d`.
///
/// Per step: evaluate the gradient, line-search the negative gradient under
/// the strong Wolfe conditions; if the search fails, draw a step size from
/// `N(0, 0.5²)` and move that far along the normalized negative gradient,
/// re-drawing up to [`ITERATE_RETRIES`] times while the candidate is
/// infeasible or its evaluation fails, after which the step records as
/// no-move.  All evaluations of step `t` share the noise realization keyed
/// by `t`.
pub fn optimize(
    theta0: &[f64],
    cfg: &ObjectiveConfig,
    pipe: &Pipeline,
    steps: usize,
) -> Result<OptTrace, OptError> {
    let violations = validate_params(pipe.space, theta0);
    if !violations.is_empty() {
        return Err(OptError::InfeasibleStart(violations));
    }
    let ev0 = evaluate(theta0, cfg, pipe, 0, true);
    let Some(mut grad) = ev0.grad.clone() else {
        return Err(OptError::InitialEvaluationFailed);
    };
    let mut theta = theta0.to_vec();
    let mut l = ev0.l;
    let mut d = ev0.d;
    let mut entries = vec![TraceEntry {
        theta: theta.clone(),
        l,
        d,
        step_size: 0.0,
        kind: StepKind::Init,
        samples: ev0.samples,
    }];

    for step in 1..=steps as u64 {
        let direction: Vec<f64> = grad.iter().map(|&g| -g).collect();
        let entry = match wolfe_line_search(&theta, &direction, l, &grad, cfg, pipe, step) {
            Ok(out) => {
                theta = theta
                    .iter()
                    .zip(&direction)
                    .map(|(&t, &p)| t + out.alpha * p)
                    .collect();
                l = out.eval.l;
                d = out.eval.d;
                grad = out
                    .eval
                    .grad
                    .clone()
                    .expect("an accepted Wolfe point has a finite evaluation");
                TraceEntry {
                    theta: theta.clone(),
                    l,
                    d,
                    step_size: out.alpha,
                    kind: StepKind::Wolfe,
                    samples: out.eval.samples,
                }
            }
            Err(_) => {
                let mut accepted = None;
                let grad_norm = norm(&grad);
                if grad_norm > 0.0 {
                    let mut stream =
                        rng::stream(cfg.rng_seed, &[rng::purpose::FALLBACK, step]);
                    for _ in 0..=ITERATE_RETRIES {
                        let size: f64 =
                            FALLBACK_SIGMA * stream.sample::<f64, _>(StandardNormal);
                        let cand: Vec<f64> = theta
                            .iter()
                            .zip(&grad)
                            .map(|(&t, &g)| t - size * g / grad_norm)
                            .collect();
                        if !validate_params(pipe.space, &cand).is_empty() {
                            continue;
                        }
                        let ev = evaluate(&cand, cfg, pipe, step, true);
                        if ev.l.is_finite() {
                            accepted = Some((cand, ev, size));
                            break;
                        }
                    }
                }
                match accepted {
                    Some((cand, ev, size)) => {
                        theta = cand;
                        l = ev.l;
                        d = ev.d;
                        grad = ev
                            .grad
                            .clone()
                            .expect("a finite evaluation carries its gradient");
                        TraceEntry {
                            theta: theta.clone(),
                            l,
                            d,
                            step_size: size,
                            kind: StepKind::RandomFallback,
                            samples: ev.samples,
                        }
                    }
                    None => TraceEntry {
                        theta: theta.clone(),
                        l,
                        d,
                        step_size: 0.0,
                        kind: StepKind::NoMove,
                        samples: Vec::new(),
                    },
                }
            }
        };
        entries.push(entry);
    }

    let best_index = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.d.is_finite())
        .min_by(|a, b| a.1.d.total_cmp(&b.1.d))
        .map(|(i, _)| i)
        .expect("the initial entry is finite");
    Ok(OptTrace {
        entries,
        best_index,
    })
}

/// Draw a random feasible parameter vector for `space`, depending only on
/// `seed`.
///
/// Each parameter is sampled uniformly from a generous box around the
/// family's sensible range and the draw is rejected until
/// [`validate_params`] accepts it.
pub fn random_feasible_theta(space: DesignSpace, seed: u64) -> Vec<f64> {
    let mut stream = rng::stream(seed, &[rng::purpose::INIT]);
    loop {
        let theta: Vec<f64> = match space {
            DesignSpace::SingleDovetail => vec![
                stream.gen_range(1.0..8.0),   // a
                stream.gen_range(1.0..9.5),   // b
                stream.gen_range(2.0..10.0),  // L
            ],
            DesignSpace::ComplexDovetail => vec![
                stream.gen_range(-8.0..-1.0), // x0
                stream.gen_range(1.0..8.0),   // y1
                stream.gen_range(-6.0..-0.1), // x1
                stream.gen_range(1.0..7.0),   // a
                stream.gen_range(1.0..9.5),   // b
                stream.gen_range(2.0..10.0),  // L
            ],
            DesignSpace::DoubleDovetail => vec![
                stream.gen_range(-9.0..-1.0), // x0
                stream.gen_range(-8.0..-0.1), // x1
                stream.gen_range(1.0..8.0),   // y1
                stream.gen_range(1.0..7.0),   // a
                stream.gen_range(1.0..9.5),   // b
                stream.gen_range(2.0..10.0),  // L
            ],
        };
        if validate_params(space, &theta).is_empty() {
            return theta;
        }
    }
}

/// Dimension-normalized Euclidean distance between two parameter vectors,
/// `‖a − b‖₂ / √n` — the root-mean-square per-parameter difference, in mm.
///
/// Dividing by `√n` makes distances comparable across design spaces with
/// different parameter counts: a uniform per-parameter offset of `δ` mm
/// scores `δ` regardless of dimension.
pub fn normalized_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "parameter vectors must match in length");
    let sq: f64 = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    (sq / a.len() as f64).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
