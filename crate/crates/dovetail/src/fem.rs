//! Plane-stress linear elasticity on triangle meshes.
//!
//! Linear (constant-strain) triangles with one-point quadrature carry the
//! bulk energy; traction on the outer edges is integrated with the trapezoid
//! rule; the symmetry plane pins vertical motion. Everything works per unit
//! out-of-plane thickness in mm/GPa units — thickness only enters when
//! displacements are converted to forces.
//!
//! The Lamé parameters follow the convention `lambda = E nu / (1 - nu^2)`,
//! `mu = E / (2 (1 - nu^2))`, with the textbook plane-stress
//! `mu = E / (2 (1 + nu))` available behind [`LameConvention::Standard`].
//! The stress is `sigma = lambda tr(eps) I + 2 mu eps` in both cases.

use crate::geometry::{BoundaryTag, Side};
use crate::mesh::TriMesh;
use crate::sparse::{SolveError, SpdSolver};
use crate::vec2;
use thiserror::Error;

/// Interleaved per-node displacements `[u0x, u0y, u1x, u1y, ...]` in mm.
pub type FieldVector = Vec<f64>;

/// Index of node `node`'s component `comp` (0 = x, 1 = y) in a
/// [`FieldVector`].
#[inline]
pub fn dof(node: usize, comp: usize) -> usize {
    2 * node + comp
}

/// FEM errors.
#[derive(Debug, Error)]
pub enum FemError {
    #[error("material parameters out of range: E = {e}, nu = {nu} (need E > 0, 0 <= nu < 0.5)")]
    DomainError { e: f64, nu: f64 },
    #[error("mesh has no boundary edges tagged {tag}")]
    MissingTag { tag: &'static str },
    #[error("constrained stiffness is singular: {source}")]
    SingularSystem {
        #[from]
        source: SolveError,
    },
}

/// How to derive the Lamé parameters from `(E, nu)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LameConvention {
    /// `lambda = E nu / (1 - nu^2)`, `mu = E / (2 (1 - nu^2))`.
    #[default]
    Paper,
    /// `lambda = E nu / (1 - nu^2)`, `mu = E / (2 (1 + nu))` (textbook
    /// plane stress).
    Standard,
}

impl LameConvention {
    pub fn name(self) -> &'static str {
        match self {
            LameConvention::Paper => "paper",
            LameConvention::Standard => "standard",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(LameConvention::Paper),
            "standard" => Some(LameConvention::Standard),
            _ => None,
        }
    }
}

/// Compute `(lambda, mu)` in GPa for the chosen convention.
pub fn lame_parameters(e: f64, nu: f64, convention: LameConvention) -> Result<(f64, f64), FemError> {
    if !(e > 0.0) || !(0.0..0.5).contains(&nu) {
        return Err(FemError::DomainError { e, nu });
    }
    let lambda = e * nu / (1.0 - nu * nu);
    let mu = match convention {
        LameConvention::Paper => e / (2.0 * (1.0 - nu * nu)),
        LameConvention::Standard => e / (2.0 * (1.0 + nu)),
    };
    Ok((lambda, mu))
}

/// Linear elastic material in GPa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub e: f64,
    pub nu: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl Material {
    /// Material with the default (paper) Lamé convention.
    pub fn new(e: f64, nu: f64) -> Result<Material, FemError> {
        Material::with_convention(e, nu, LameConvention::Paper)
    }

    pub fn with_convention(
        e: f64,
        nu: f64,
        convention: LameConvention,
    ) -> Result<Material, FemError> {
        let (lambda, mu) = lame_parameters(e, nu, convention)?;
        Ok(Material { e, nu, lambda, mu })
    }
}

/// Tensile load: uniform horizontal traction on the mesh's traction-tagged
/// outer edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadCase {
    /// Traction magnitude in GPa.
    pub traction: f64,
    /// Traction direction (unit vector).
    pub direction: [f64; 2],
}

impl LoadCase {
    /// The tensile pull for one half: outward horizontal, away from the
    /// interface.
    pub fn tensile(side: Side, traction: f64) -> LoadCase {
        assert!(traction >= 0.0, "traction must be non-negative");
        let direction = match side {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
        };
        LoadCase { traction, direction }
    }
}

/// `sigma = lambda tr(eps) I + 2 mu eps` as a Voigt matrix acting on
/// `(eps_xx, eps_yy, gamma_xy)` with engineering shear.
#[inline]
fn d_matrix(mat: &Material) -> [[f64; 3]; 3] {
    let l = mat.lambda;
    let m = mat.mu;
    [
        [l + 2.0 * m, l, 0.0],
        [l, l + 2.0 * m, 0.0],
        [0.0, 0.0, m],
    ]
}

/// Geometry factors of one constant-strain triangle: area and the matrix
/// `M = 2 A B` whose rows give Voigt strain from element displacements.
/// `b[i] = y[i+1] - y[i+2]`, `c[i] = x[i+2] - x[i+1]` (indices mod 3).
#[inline]
fn element_geometry(p: [[f64; 2]; 3]) -> (f64, [f64; 3], [f64; 3]) {
    let b = [
        p[1][1] - p[2][1],
        p[2][1] - p[0][1],
        p[0][1] - p[1][1],
    ];
    let c = [
        p[2][0] - p[1][0],
        p[0][0] - p[2][0],
        p[1][0] - p[0][0],
    ];
    let area = 0.5 * (c[2] * b[1] - c[1] * b[2]);
    (area, b, c)
}

/// Voigt strain of a displacement element vector (6 entries, node-major).
#[inline]
fn element_strain(area: f64, b: &[f64; 3], c: &[f64; 3], ue: &[f64; 6]) -> [f64; 3] {
    let inv = 1.0 / (2.0 * area);
    let mut eps = [0.0; 3];
    for i in 0..3 {
        let ux = ue[2 * i];
        let uy = ue[2 * i + 1];
        eps[0] += b[i] * ux;
        eps[1] += c[i] * uy;
        eps[2] += c[i] * ux + b[i] * uy;
    }
    [eps[0] * inv, eps[1] * inv, eps[2] * inv]
}

/// Dense 6x6 element stiffness `A B^T D B`.
pub(crate) fn element_stiffness(p: [[f64; 2]; 3], mat: &Material) -> [[f64; 6]; 6] {
    let (area, b, c) = element_geometry(p);
    let d = d_matrix(mat);
    // B columns for dof (i, comp): col(i,0) = (b_i, 0, c_i) / 2A,
    // col(i,1) = (0, c_i, b_i) / 2A.
    let col = |i: usize, comp: usize| -> [f64; 3] {
        let inv = 1.0 / (2.0 * area);
        if comp == 0 {
            [b[i] * inv, 0.0, c[i] * inv]
        } else {
            [0.0, c[i] * inv, b[i] * inv]
        }
    };
    let mut k = [[0.0; 6]; 6];
    for r in 0..6 {
        let br = col(r / 2, r % 2);
        let dbr = [
            d[0][0] * br[0] + d[0][1] * br[1] + d[0][2] * br[2],
            d[1][0] * br[0] + d[1][1] * br[1] + d[1][2] * br[2],
            d[2][0] * br[0] + d[2][1] * br[1] + d[2][2] * br[2],
        ];
        for s in 0..6 {
            let bs = col(s / 2, s % 2);
            k[r][s] = area * (dbr[0] * bs[0] + dbr[1] * bs[1] + dbr[2] * bs[2]);
        }
    }
    k
}

/// Gather an element displacement vector.
#[inline]
fn gather(u: &[f64], tri: &[usize; 3]) -> [f64; 6] {
    [
        u[dof(tri[0], 0)],
        u[dof(tri[0], 1)],
        u[dof(tri[1], 0)],
        u[dof(tri[1], 1)],
        u[dof(tri[2], 0)],
        u[dof(tri[2], 1)],
    ]
}

/// Strain energy of the whole mesh for displacements `u`, using explicit
/// node coordinates (so morphed configurations can reuse the topology).
pub fn strain_energy_at(mesh: &TriMesh, coords: &[[f64; 2]], u: &[f64], mat: &Material) -> f64 {
    assert_eq!(u.len(), 2 * coords.len());
    let d = d_matrix(mat);
    let mut total = 0.0;
    for tri in &mesh.triangles {
        let p = [coords[tri[0]], coords[tri[1]], coords[tri[2]]];
        let (area, b, c) = element_geometry(p);
        let ue = gather(u, tri);
        let eps = element_strain(area, &b, &c, &ue);
        let mut sigma = [0.0; 3];
        for r in 0..3 {
            sigma[r] = d[r][0] * eps[0] + d[r][1] * eps[1] + d[r][2] * eps[2];
        }
        total += 0.5 * area * (sigma[0] * eps[0] + sigma[1] * eps[1] + sigma[2] * eps[2]);
    }
    total
}

/// Work done by the traction load on displacements `u` (the energy's load
/// term enters as its negative).
pub fn traction_work_at(mesh: &TriMesh, coords: &[[f64; 2]], u: &[f64], load: &LoadCase) -> f64 {
    if load.traction == 0.0 {
        return 0.0;
    }
    let t = vec2::scale(load.traction, load.direction);
    let mut work = 0.0;
    for e in mesh.edges_with_tag(BoundaryTag::Traction) {
        let [a, b] = e.nodes;
        let len = vec2::dist(coords[a], coords[b]);
        let ua = [u[dof(a, 0)], u[dof(a, 1)]];
        let ub = [u[dof(b, 0)], u[dof(b, 1)]];
        work += 0.5 * len * (vec2::dot(t, ua) + vec2::dot(t, ub));
    }
    work
}

/// Total potential energy: strain energy minus traction work.
pub fn elastic_energy(mesh: &TriMesh, u: &[f64], mat: &Material, load: &LoadCase) -> f64 {
    elastic_energy_at(mesh, &mesh.nodes, u, mat, load)
}

/// [`elastic_energy`] on morphed coordinates.
pub fn elastic_energy_at(
    mesh: &TriMesh,
    coords: &[[f64; 2]],
    u: &[f64],
    mat: &Material,
    load: &LoadCase,
) -> f64 {
    strain_energy_at(mesh, coords, u, mat) - traction_work_at(mesh, coords, u, load)
}

/// Assembled traction load vector (gradient of [`traction_work_at`] in `u`).
pub fn traction_load_at(mesh: &TriMesh, coords: &[[f64; 2]], load: &LoadCase) -> FieldVector {
    let mut f = vec![0.0; 2 * coords.len()];
    if load.traction == 0.0 {
        return f;
    }
    let t = vec2::scale(load.traction, load.direction);
    for e in mesh.edges_with_tag(BoundaryTag::Traction) {
        let [a, b] = e.nodes;
        let half_len = 0.5 * vec2::dist(coords[a], coords[b]);
        for (node, comp_t) in [(a, t), (b, t)] {
            f[dof(node, 0)] += half_len * comp_t[0];
            f[dof(node, 1)] += half_len * comp_t[1];
        }
    }
    f
}

/// Gradient of [`elastic_energy`] with respect to `u` (no constraints
/// applied).
pub fn elastic_residual(mesh: &TriMesh, u: &[f64], mat: &Material, load: &LoadCase) -> FieldVector {
    elastic_residual_at(mesh, &mesh.nodes, u, mat, load)
}

/// [`elastic_residual`] on morphed coordinates.
pub fn elastic_residual_at(
    mesh: &TriMesh,
    coords: &[[f64; 2]],
    u: &[f64],
    mat: &Material,
    load: &LoadCase,
) -> FieldVector {
    assert_eq!(u.len(), 2 * coords.len());
    let mut r = vec![0.0; u.len()];
    for tri in &mesh.triangles {
        let p = [coords[tri[0]], coords[tri[1]], coords[tri[2]]];
        let k = element_stiffness(p, mat);
        let ue = gather(u, tri);
        for row in 0..6 {
            let mut s = 0.0;
            for colm in 0..6 {
                s += k[row][colm] * ue[colm];
            }
            r[dof(tri[row / 2], row % 2)] += s;
        }
    }
    let f = traction_load_at(mesh, coords, load);
    for (ri, fi) in r.iter_mut().zip(&f) {
        *ri -= fi;
    }
    r
}

/// Per-dof constraint mask for the symmetry plane: `u_y = 0` on every
/// symmetry-tagged node.
pub fn symmetry_mask(mesh: &TriMesh) -> Result<Vec<bool>, FemError> {
    let nodes = mesh.nodes_with_tag(BoundaryTag::Symmetry);
    if nodes.is_empty() {
        return Err(FemError::MissingTag { tag: "symmetry" });
    }
    let mut mask = vec![false; 2 * mesh.node_count()];
    for n in nodes {
        mask[dof(n, 1)] = true;
    }
    Ok(mask)
}

/// Zero the constrained entries of a residual/search vector in place.
pub fn apply_constraints(v: &mut [f64], mask: &[bool]) {
    for (vi, &m) in v.iter_mut().zip(mask) {
        if m {
            *vi = 0.0;
        }
    }
}

/// Build an [`SpdSolver`] holding the constrained elastic tangent on the
/// given coordinates. Constrained rows/columns are eliminated (identity
/// diagonal), preserving symmetry. The solver's pattern covers all element
/// couplings, so contact terms (2x2 nodal blocks) fit without rebuilding.
pub fn assemble_tangent_at(
    mesh: &TriMesh,
    coords: &[[f64; 2]],
    mat: &Material,
    mask: &[bool],
) -> SpdSolver {
    let ndof = 2 * coords.len();
    assert_eq!(mask.len(), ndof);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for tri in &mesh.triangles {
        let dofs = [
            dof(tri[0], 0),
            dof(tri[0], 1),
            dof(tri[1], 0),
            dof(tri[1], 1),
            dof(tri[2], 0),
            dof(tri[2], 1),
        ];
        for i in 0..6 {
            for j in (i + 1)..6 {
                edges.push((dofs[i], dofs[j]));
            }
        }
    }
    let mut solver = SpdSolver::new(ndof, edges);
    solver.reset();
    add_elastic_tangent(&mut solver, mesh, coords, mat, mask);
    for (d, &m) in mask.iter().enumerate() {
        if m {
            solver.add(d, d, 1.0);
        }
    }
    solver
}

/// Scatter the elastic stiffness into an existing solver (values only).
pub fn add_elastic_tangent(
    solver: &mut SpdSolver,
    mesh: &TriMesh,
    coords: &[[f64; 2]],
    mat: &Material,
    mask: &[bool],
) {
    for tri in &mesh.triangles {
        let p = [coords[tri[0]], coords[tri[1]], coords[tri[2]]];
        let k = element_stiffness(p, mat);
        let dofs = [
            dof(tri[0], 0),
            dof(tri[0], 1),
            dof(tri[1], 0),
            dof(tri[1], 1),
            dof(tri[2], 0),
            dof(tri[2], 1),
        ];
        for r in 0..6 {
            if mask[dofs[r]] {
                continue;
            }
            for s in 0..6 {
                if mask[dofs[s]] {
                    continue;
                }
                solver.add(dofs[r], dofs[s], k[r][s]);
            }
        }
    }
}

/// Solve the contact-free elastic problem with the symmetry constraint and
/// any extra pinned dofs (`(node, component)` pairs, needed to ground the
/// horizontal rigid mode when no contact term does).
pub fn elastic_solve(
    mesh: &TriMesh,
    mat: &Material,
    load: &LoadCase,
    extra_pins: &[(usize, usize)],
) -> Result<FieldVector, FemError> {
    if load.traction > 0.0 && mesh.edges_with_tag(BoundaryTag::Traction).is_empty() {
        return Err(FemError::MissingTag { tag: "traction" });
    }
    let mut mask = symmetry_mask(mesh)?;
    for &(node, comp) in extra_pins {
        mask[dof(node, comp)] = true;
    }
    let mut solver = assemble_tangent_at(mesh, &mesh.nodes, mat, &mask);
    solver.factor()?;
    let mut f = traction_load_at(mesh, &mesh.nodes, load);
    apply_constraints(&mut f, &mask);
    let u = solver.solve(&f);

    // Contract: the constrained residual must vanish to solver precision.
    let mut r = elastic_residual(mesh, &u, mat, load);
    apply_constraints(&mut r, &mask);
    let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let fn_ = f.iter().map(|x| x * x).sum::<f64>().sqrt();
    debug_assert!(rn <= 1e-10 * fn_.max(1.0), "solve residual {rn} vs load {fn_}");
    Ok(u)
}

/// Gradient of the bilinear form `a^T K(X) b` with respect to the element's
/// node coordinates. This is the kernel behind shape derivatives of elastic
/// terms: with `a` the adjoint and `b` the displacement it yields
/// `d(a^T K u)/dX` element by element.
pub(crate) fn element_bilinear_coord_grad(
    p: [[f64; 2]; 3],
    a: &[f64; 6],
    b: &[f64; 6],
    mat: &Material,
) -> [[f64; 2]; 3] {
    let (area, bb, cc) = element_geometry(p);
    let d = d_matrix(mat);
    // f(X) = 1/(4A) (M a)^T D (M b), with M = 2 A B linear in coordinates.
    let m_times = |bbv: &[f64; 3], ccv: &[f64; 3], v: &[f64; 6]| -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..3 {
            let vx = v[2 * i];
            let vy = v[2 * i + 1];
            out[0] += bbv[i] * vx;
            out[1] += ccv[i] * vy;
            out[2] += ccv[i] * vx + bbv[i] * vy;
        }
        out
    };
    let ma = m_times(&bb, &cc, a);
    let mb = m_times(&bb, &cc, b);
    let dmb = [
        d[0][0] * mb[0] + d[0][1] * mb[1] + d[0][2] * mb[2],
        d[1][0] * mb[0] + d[1][1] * mb[1] + d[1][2] * mb[2],
        d[2][0] * mb[0] + d[2][1] * mb[1] + d[2][2] * mb[2],
    ];
    let dma = [
        d[0][0] * ma[0] + d[0][1] * ma[1] + d[0][2] * ma[2],
        d[1][0] * ma[0] + d[1][1] * ma[1] + d[1][2] * ma[2],
        d[2][0] * ma[0] + d[2][1] * ma[1] + d[2][2] * ma[2],
    ];
    let quarter_inv_a = 1.0 / (4.0 * area);
    let f_val = quarter_inv_a * (ma[0] * dmb[0] + ma[1] * dmb[1] + ma[2] * dmb[2]);

    let mut grad = [[0.0; 2]; 3];
    for node in 0..3 {
        // dA/dx_node = bb[node] / 2, dA/dy_node = cc[node] / 2.
        let da = [0.5 * bb[node], 0.5 * cc[node]];
        for comp in 0..2 {
            // dM/d(coordinate): x_i enters cc, y_i enters bb.
            // cc[j] = x[j+2] - x[j+1]  => d cc[j] / d x_i = [i == j+2] - [i == j+1]
            // bb[j] = y[j+1] - y[j+2]  => d bb[j] / d y_i = [i == j+1] - [i == j+2]
            let mut dbb = [0.0; 3];
            let mut dcc = [0.0; 3];
            for j in 0..3 {
                let plus = (j + 1) % 3;
                let minus = (j + 2) % 3;
                if comp == 0 {
                    dcc[j] = f64::from(node == minus) - f64::from(node == plus);
                } else {
                    dbb[j] = f64::from(node == plus) - f64::from(node == minus);
                }
            }
            let dma_dx = m_times(&dbb, &dcc, a);
            let dmb_dx = m_times(&dbb, &dcc, b);
            let term = quarter_inv_a
                * (dma_dx[0] * dmb[0] + dma_dx[1] * dmb[1] + dma_dx[2] * dmb[2]
                    + dma[0] * dmb_dx[0] + dma[1] * dmb_dx[1] + dma[2] * dmb_dx[2]);
            grad[node][comp] = term - f_val / area * da[comp];
        }
    }
    grad
}

/// Accumulate `d(a^T K(X) u)/dX` over the whole mesh into `out` (one 2-vector
/// per node).
pub fn elastic_bilinear_coord_grad(
    mesh: &TriMesh,
    coords: &[[f64; 2]],
    a: &[f64],
    u: &[f64],
    mat: &Material,
    out: &mut [[f64; 2]],
) {
    for tri in &mesh.triangles {
        let p = [coords[tri[0]], coords[tri[1]], coords[tri[2]]];
        let ae = gather(a, tri);
        let ue = gather(u, tri);
        let g = element_bilinear_coord_grad(p, &ae, &ue, mat);
        for node in 0..3 {
            out[tri[node]][0] += g[node][0];
            out[tri[node]][1] += g[node][1];
        }
    }
}

/// Accumulate `d(a^T f(X))/dX` for the traction load into `out`.
pub fn traction_coord_grad(
    mesh: &TriMesh,
    coords: &[[f64; 2]],
    a: &[f64],
    load: &LoadCase,
    out: &mut [[f64; 2]],
) {
    if load.traction == 0.0 {
        return;
    }
    let t = vec2::scale(load.traction, load.direction);
    for e in mesh.edges_with_tag(BoundaryTag::Traction) {
        let [i, j] = e.nodes;
        let pi = coords[i];
        let pj = coords[j];
        let len = vec2::dist(pi, pj);
        let ai = [a[dof(i, 0)], a[dof(i, 1)]];
        let aj = [a[dof(j, 0)], a[dof(j, 1)]];
        // a^T f_edge = (len / 2) (t . (a_i + a_j)); only len depends on X.
        let w = 0.5 * (vec2::dot(t, ai) + vec2::dot(t, aj));
        let dir = vec2::scale(1.0 / len, vec2::sub(pi, pj));
        out[i][0] += w * dir[0];
        out[i][1] += w * dir[1];
        out[j][0] -= w * dir[0];
        out[j][1] -= w * dir[1];
    }
}

/// Mesh export with the displacement field appended as `d ux uy` lines.
pub fn export_with_displacements(mesh: &TriMesh, u: &[f64]) -> String {
    let mut out = mesh.export_text();
    for n in 0..mesh.node_count() {
        out.push_str(&format!("d {} {}\n", u[dof(n, 0)], u[dof(n, 1)]));
    }
    out
}
