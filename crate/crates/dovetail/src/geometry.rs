//! Parametric joint families and the polygonal geometry of both halves.
//!
//! A joint lives in the half-block `[-15, 15] x [0, 10]` (millimetres). The
//! block is split into a left and a right part by an open polyline — the
//! *interface* — that runs from the bottom edge (`y = 0`) to the top edge
//! (`y = 10`). Every interface segment is a potential contact edge. The top
//! edge is a symmetry plane (the physical joint is mirrored about `y = 10`),
//! the outer vertical edges at `x = ±15` carry the tensile load, and the
//! bottom edge is traction-free.
//!
//! Three parametric families are supported. Each maps a parameter vector
//! `theta` to the interface polyline; all vertex coordinates are affine in
//! `theta`, which later makes mesh morphing exact and cheap to differentiate.

use crate::vec2;
use std::fmt;
use thiserror::Error;

/// Width of the half-block in mm (x spans `[-WIDTH/2, WIDTH/2]`).
pub const BLOCK_WIDTH: f64 = 30.0;
/// Height of the half-block in mm (y spans `[0, HEIGHT]`; `y = HEIGHT` is the
/// symmetry plane of the full joint).
pub const BLOCK_HEIGHT: f64 = 10.0;
/// Out-of-plane thickness in mm used to convert plane-stress loads to forces.
pub const DEFAULT_THICKNESS: f64 = 5.0;

/// Simulation domain: the half-block dimensions and out-of-plane thickness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimDomain {
    /// Full width of the half-block (mm).
    pub width: f64,
    /// Height of the half-block (mm).
    pub height: f64,
    /// Out-of-plane thickness (mm).
    pub thickness: f64,
}

impl Default for SimDomain {
    fn default() -> Self {
        SimDomain {
            width: BLOCK_WIDTH,
            height: BLOCK_HEIGHT,
            thickness: DEFAULT_THICKNESS,
        }
    }
}

impl SimDomain {
    /// Leftmost x coordinate (`-width/2`).
    #[inline]
    pub fn x_min(&self) -> f64 {
        -0.5 * self.width
    }

    /// Rightmost x coordinate (`+width/2`).
    #[inline]
    pub fn x_max(&self) -> f64 {
        0.5 * self.width
    }

    /// y coordinate of the symmetry plane (top edge).
    #[inline]
    pub fn y_sym(&self) -> f64 {
        self.height
    }
}

/// The two halves of the joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// The other half.
    #[inline]
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The supported joint families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DesignSpace {
    /// Plain dovetail, `theta = (a, b, L)`: a single trapezoidal tail whose
    /// neck sits `a` below the symmetry plane at the root and `b` below it at
    /// the tip, with horizontal extent `L`.
    SingleDovetail,
    /// Dovetail with an extra rectangular step below it,
    /// `theta = (x0, y1, x1, a, b, L)`.
    ComplexDovetail,
    /// Dovetail whose lower flank is a single slanted segment,
    /// `theta = (x0, x1, y1, a, b, L)`.
    DoubleDovetail,
}

impl DesignSpace {
    /// Number of shape parameters for this family.
    pub fn param_count(self) -> usize {
        match self {
            DesignSpace::SingleDovetail => 3,
            DesignSpace::ComplexDovetail => 6,
            DesignSpace::DoubleDovetail => 6,
        }
    }

    /// Parameter names in `theta` order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            DesignSpace::SingleDovetail => &["a", "b", "L"],
            DesignSpace::ComplexDovetail => &["x0", "y1", "x1", "a", "b", "L"],
            DesignSpace::DoubleDovetail => &["x0", "x1", "y1", "a", "b", "L"],
        }
    }

    /// Indices of `(a, b, L)` within `theta`.
    fn neck_indices(self) -> (usize, usize, usize) {
        match self {
            DesignSpace::SingleDovetail => (0, 1, 2),
            DesignSpace::ComplexDovetail => (3, 4, 5),
            DesignSpace::DoubleDovetail => (3, 4, 5),
        }
    }

    /// Index of the neck half-width parameter `a` within `theta`.
    pub fn a_index(self) -> usize {
        self.neck_indices().0
    }

    /// Stable identifier used in configs and output files.
    pub fn name(self) -> &'static str {
        match self {
            DesignSpace::SingleDovetail => "single_dovetail",
            DesignSpace::ComplexDovetail => "complex_dovetail",
            DesignSpace::DoubleDovetail => "double_dovetail",
        }
    }

    /// Parse the identifier produced by [`DesignSpace::name`].
    pub fn from_name(name: &str) -> Option<DesignSpace> {
        match name {
            "single_dovetail" => Some(DesignSpace::SingleDovetail),
            "complex_dovetail" => Some(DesignSpace::ComplexDovetail),
            "double_dovetail" => Some(DesignSpace::DoubleDovetail),
            _ => None,
        }
    }

    /// Interface vertices for `theta`, ordered from the bottom edge (`y = 0`)
    /// to the symmetry plane (`y = 10`). Every coordinate is an affine
    /// function of `theta`.
    pub fn interface_vertices(self, theta: &[f64]) -> Vec<[f64; 2]> {
        let h = BLOCK_HEIGHT;
        match self {
            DesignSpace::SingleDovetail => {
                let (a, b, l) = (theta[0], theta[1], theta[2]);
                vec![[0.0, 0.0], [0.0, h - a], [l, h - b], [l, h]]
            }
            DesignSpace::ComplexDovetail => {
                let (x0, y1, x1, a, b, l) =
                    (theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]);
                vec![
                    [x0, 0.0],
                    [x0, y1],
                    [x1, y1],
                    [x1, h - a],
                    [x1 + l, h - b],
                    [x1 + l, h],
                ]
            }
            DesignSpace::DoubleDovetail => {
                let (x0, x1, y1, a, b, l) =
                    (theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]);
                vec![
                    [x0, 0.0],
                    [x1, y1],
                    [x1, h - a],
                    [x1 + l, h - b],
                    [x1 + l, h],
                ]
            }
        }
    }

    /// Jacobian of the interface vertices with respect to `theta`:
    /// `jac[v][p]` is the (constant) derivative of vertex `v`'s coordinates
    /// with respect to parameter `p`.
    pub fn interface_jacobian(self) -> Vec<Vec<[f64; 2]>> {
        let p = self.param_count();
        let mut jac: Vec<Vec<[f64; 2]>>;
        match self {
            DesignSpace::SingleDovetail => {
                // Vertices: (0,0), (0,10-a), (L,10-b), (L,10); theta = (a,b,L).
                jac = vec![vec![[0.0, 0.0]; p]; 4];
                jac[1][0] = [0.0, -1.0]; // d v1 / d a
                jac[2][1] = [0.0, -1.0]; // d v2 / d b
                jac[2][2] = [1.0, 0.0]; // d v2 / d L
                jac[3][2] = [1.0, 0.0]; // d v3 / d L
            }
            DesignSpace::ComplexDovetail => {
                // Vertices: (x0,0), (x0,y1), (x1,y1), (x1,10-a), (x1+L,10-b),
                // (x1+L,10); theta = (x0,y1,x1,a,b,L).
                jac = vec![vec![[0.0, 0.0]; p]; 6];
                jac[0][0] = [1.0, 0.0];
                jac[1][0] = [1.0, 0.0];
                jac[1][1] = [0.0, 1.0];
                jac[2][2] = [1.0, 0.0];
                jac[2][1] = [0.0, 1.0];
                jac[3][2] = [1.0, 0.0];
                jac[3][3] = [0.0, -1.0];
                jac[4][2] = [1.0, 0.0];
                jac[4][5] = [1.0, 0.0];
                jac[4][4] = [0.0, -1.0];
                jac[5][2] = [1.0, 0.0];
                jac[5][5] = [1.0, 0.0];
            }
            DesignSpace::DoubleDovetail => {
                // Vertices: (x0,0), (x1,y1), (x1,10-a), (x1+L,10-b), (x1+L,10);
                // theta = (x0,x1,y1,a,b,L).
                jac = vec![vec![[0.0, 0.0]; p]; 5];
                jac[0][0] = [1.0, 0.0];
                jac[1][1] = [1.0, 0.0];
                jac[1][2] = [0.0, 1.0];
                jac[2][1] = [1.0, 0.0];
                jac[2][3] = [0.0, -1.0];
                jac[3][1] = [1.0, 0.0];
                jac[3][5] = [1.0, 0.0];
                jac[3][4] = [0.0, -1.0];
                jac[4][1] = [1.0, 0.0];
                jac[4][5] = [1.0, 0.0];
            }
        }
        jac
    }
}

impl fmt::Display for DesignSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single violated constraint found while validating shape parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamViolation {
    /// `theta` has the wrong number of entries for the design space.
    DimensionMismatch { expected: usize, got: usize },
    /// A parameter is NaN or infinite.
    NotFinite { name: &'static str, value: f64 },
    /// Constraint `a > 0` violated.
    NeckPositive { a: f64 },
    /// Constraint `a <= b` violated (the tail must hold under tension).
    TipNarrowerThanRoot { a: f64, b: f64 },
    /// Constraint `b <= 10` violated (tip must stay inside the block).
    TipBelowBottom { b: f64 },
    /// Constraint `L > 0` violated.
    LengthPositive { l: f64 },
    /// An interface vertex left the half-block.
    VertexOutsideBlock { vertex: usize, x: f64, y: f64 },
    /// Two consecutive interface vertices coincide.
    DegenerateContactEdge { edge: usize, length: f64 },
    /// A half's boundary polygon intersects itself.
    SelfIntersecting { side: Side },
}

impl fmt::Display for ParamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamViolation::DimensionMismatch { expected, got } => {
                write!(f, "theta has {got} entries, expected {expected}")
            }
            ParamViolation::NotFinite { name, value } => {
                write!(f, "parameter {name} = {value} is not finite")
            }
            ParamViolation::NeckPositive { a } => {
                write!(f, "a = {a} violates a > 0")
            }
            ParamViolation::TipNarrowerThanRoot { a, b } => {
                write!(f, "(a, b) = ({a}, {b}) violates a <= b")
            }
            ParamViolation::TipBelowBottom { b } => {
                write!(f, "b = {b} violates b <= 10")
            }
            ParamViolation::LengthPositive { l } => {
                write!(f, "L = {l} violates L > 0")
            }
            ParamViolation::VertexOutsideBlock { vertex, x, y } => {
                write!(
                    f,
                    "interface vertex {vertex} at ({x}, {y}) lies outside the half-block"
                )
            }
            ParamViolation::DegenerateContactEdge { edge, length } => {
                write!(f, "contact edge {edge} has non-positive length {length}")
            }
            ParamViolation::SelfIntersecting { side } => {
                write!(f, "{side} boundary polygon is self-intersecting")
            }
        }
    }
}

/// Geometry construction errors.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid shape parameters: {}", format_violations(.0))]
    InvalidParams(Vec<ParamViolation>),
}

fn format_violations(violations: &[ParamViolation]) -> String {
    let parts: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
    parts.join("; ")
}

/// Tag attached to one boundary segment of a half polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Interface segment; the payload is the contact edge index (0 at the
    /// bottom edge of the block, increasing towards the symmetry plane).
    Contact(usize),
    /// Outer vertical edge carrying the tensile load.
    Traction,
    /// Top edge on the symmetry plane (`u_y = 0`).
    Symmetry,
    /// Traction-free bottom edge.
    Free,
}

/// Where a half-polygon vertex comes from: a fixed block corner or an
/// interface vertex (whose position depends on `theta`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexSource {
    /// Fixed corner of the half-block; does not move with `theta`.
    Corner,
    /// Interface vertex with this index in the interface polyline.
    Interface(usize),
}

/// One half of the joint: a simple CCW polygon with a tag per boundary
/// segment (segment `i` runs from vertex `i` to vertex `i + 1`, cyclically).
#[derive(Debug, Clone)]
pub struct HalfBoundary {
    pub side: Side,
    pub vertices: Vec<[f64; 2]>,
    pub tags: Vec<BoundaryTag>,
    /// Provenance of each vertex, parallel to `vertices`.
    pub sources: Vec<VertexSource>,
}

impl HalfBoundary {
    /// Signed (shoelace) area; positive for the CCW orientation used here.
    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }

    /// Endpoints of the boundary segment tagged `Contact(edge)`, in the
    /// polygon's CCW traversal order.
    pub fn contact_segment(&self, edge: usize) -> Option<([f64; 2], [f64; 2])> {
        let n = self.vertices.len();
        for (i, tag) in self.tags.iter().enumerate() {
            if *tag == BoundaryTag::Contact(edge) {
                return Some((self.vertices[i], self.vertices[(i + 1) % n]));
            }
        }
        None
    }

    /// Unit outward normal of the contact edge `edge` on this half, in the
    /// undeformed configuration. Points away from the half's interior.
    pub fn contact_outward_normal(&self, edge: usize) -> Option<[f64; 2]> {
        let (p, q) = self.contact_segment(edge)?;
        Some(vec2::normalize(vec2::rot_cw(vec2::sub(q, p))))
    }

    /// Derivatives of every polygon vertex with respect to `theta`:
    /// `jac[v][p] = d vertex_v / d theta_p`. Block corners are fixed;
    /// interface vertices inherit the design space's Jacobian.
    pub fn vertex_param_jacobian(&self, space: DesignSpace) -> Vec<Vec<[f64; 2]>> {
        let iface_jac = space.interface_jacobian();
        let np = space.param_count();
        self.sources
            .iter()
            .map(|src| match src {
                VertexSource::Corner => vec![[0.0, 0.0]; np],
                VertexSource::Interface(i) => iface_jac[*i].clone(),
            })
            .collect()
    }
}

/// A validated joint: both half polygons, the shared interface polyline, and
/// the simulation domain.
#[derive(Debug, Clone)]
pub struct JointGeometry {
    pub space: DesignSpace,
    pub theta: Vec<f64>,
    pub domain: SimDomain,
    /// Interface polyline from `y = 0` to `y = 10`.
    pub interface: Vec<[f64; 2]>,
    pub left: HalfBoundary,
    pub right: HalfBoundary,
}

impl JointGeometry {
    /// Number of contact edges (interface segments).
    pub fn contact_edge_count(&self) -> usize {
        self.interface.len() - 1
    }

    /// Endpoints of contact edge `k`, ordered bottom to top along the
    /// interface.
    pub fn contact_edge(&self, k: usize) -> ([f64; 2], [f64; 2]) {
        (self.interface[k], self.interface[k + 1])
    }

    /// Lengths of all contact edges, bottom to top.
    pub fn contact_edge_lengths(&self) -> Vec<f64> {
        (0..self.contact_edge_count())
            .map(|k| {
                let (p, q) = self.contact_edge(k);
                vec2::dist(p, q)
            })
            .collect()
    }

    /// Derivatives of each contact edge length with respect to `theta`:
    /// `grads[k][p] = d length_k / d theta_p`.
    pub fn contact_edge_length_grads(&self) -> Vec<Vec<f64>> {
        let jac = self.space.interface_jacobian();
        let np = self.space.param_count();
        (0..self.contact_edge_count())
            .map(|k| {
                let (p, q) = self.contact_edge(k);
                let d = vec2::sub(q, p);
                let len = vec2::norm(d);
                (0..np)
                    .map(|j| {
                        let dd = vec2::sub(jac[k + 1][j], jac[k][j]);
                        vec2::dot(d, dd) / len
                    })
                    .collect()
            })
            .collect()
    }

    /// Width of the joint's neck at the root, `2 a`: the full joint is the
    /// half-block mirrored about `y = 10`, so material `a` below the symmetry
    /// plane on each side leaves a load-bearing strip of width `2 a`.
    pub fn joint_width(&self) -> f64 {
        2.0 * self.theta[self.space.a_index()]
    }

    /// Derivative of [`JointGeometry::joint_width`] with respect to `theta`.
    pub fn joint_width_grad(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.space.param_count()];
        g[self.space.a_index()] = 2.0;
        g
    }

    /// The half boundary for `side`.
    pub fn half(&self, side: Side) -> &HalfBoundary {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Plain-text export: one `x y` vertex per line, the two polygons
    /// separated by a blank line, then a `# contact` section listing each
    /// contact edge as a pair of vertex indices into the left polygon.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.left.vertices {
            out.push_str(&format!("{} {}\n", v[0], v[1]));
        }
        out.push('\n');
        for v in &self.right.vertices {
            out.push_str(&format!("{} {}\n", v[0], v[1]));
        }
        out.push('\n');
        out.push_str("# contact\n");
        // The left polygon stores the interface bottom-to-top starting at
        // index 1 (index 0 is the lower-left block corner).
        for k in 0..self.contact_edge_count() {
            out.push_str(&format!("{} {}\n", k + 1, k + 2));
        }
        out
    }

    /// SVG export of both halves with contact edges highlighted. The viewBox
    /// matches the half-block; y is flipped so the symmetry plane is at the
    /// top of the image.
    pub fn to_svg(&self) -> String {
        let d = &self.domain;
        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\">\n",
            d.x_min(),
            0.0,
            d.width,
            d.height
        ));
        // Flip y so engineering coordinates (y up) render upright.
        out.push_str(&format!(
            "<g transform=\"translate(0,{}) scale(1,-1)\">\n",
            d.height
        ));
        for (half, fill) in [(&self.left, "#9ecae1"), (&self.right, "#fdae6b")] {
            let pts: Vec<String> = half
                .vertices
                .iter()
                .map(|v| format!("{},{}", v[0], v[1]))
                .collect();
            out.push_str(&format!(
                "<polygon points=\"{}\" fill=\"{}\" stroke=\"#333\" stroke-width=\"0.08\"/>\n",
                pts.join(" "),
                fill
            ));
        }
        for k in 0..self.contact_edge_count() {
            let (p, q) = self.contact_edge(k);
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#d62728\" stroke-width=\"0.15\"/>\n",
                p[0], p[1], q[0], q[1]
            ));
        }
        out.push_str("</g>\n</svg>\n");
        out
    }
}

/// Signed (shoelace) area of a polygon given as a CCW vertex list.
pub fn polygon_area(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    let mut twice = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        twice += vec2::cross(a, b);
    }
    0.5 * twice
}

/// Validate shape parameters for `space`. Returns *all* violated constraints
/// (empty means valid). Checks the box constraints `0 < a <= b <= 10` and
/// `L > 0`, finiteness, that every interface vertex stays inside the
/// half-block, that no contact edge is degenerate, and that both half
/// polygons are simple.
pub fn validate_params(space: DesignSpace, theta: &[f64]) -> Vec<ParamViolation> {
    let mut violations = Vec::new();
    let expected = space.param_count();
    if theta.len() != expected {
        violations.push(ParamViolation::DimensionMismatch {
            expected,
            got: theta.len(),
        });
        return violations;
    }
    let names = space.param_names();
    for (i, &v) in theta.iter().enumerate() {
        if !v.is_finite() {
            violations.push(ParamViolation::NotFinite {
                name: names[i],
                value: v,
            });
        }
    }
    if !violations.is_empty() {
        return violations;
    }

    let (ia, ib, il) = space.neck_indices();
    let (a, b, l) = (theta[ia], theta[ib], theta[il]);
    if !(a > 0.0) {
        violations.push(ParamViolation::NeckPositive { a });
    }
    if !(a <= b) {
        violations.push(ParamViolation::TipNarrowerThanRoot { a, b });
    }
    if !(b <= BLOCK_HEIGHT) {
        violations.push(ParamViolation::TipBelowBottom { b });
    }
    if !(l > 0.0) {
        violations.push(ParamViolation::LengthPositive { l });
    }

    let interface = space.interface_vertices(theta);
    let domain = SimDomain::default();
    for (i, v) in interface.iter().enumerate() {
        let inside = v[0] > domain.x_min()
            && v[0] < domain.x_max()
            && v[1] >= 0.0
            && v[1] <= domain.height;
        if !inside {
            violations.push(ParamViolation::VertexOutsideBlock {
                vertex: i,
                x: v[0],
                y: v[1],
            });
        }
    }
    for k in 0..interface.len() - 1 {
        let len = vec2::dist(interface[k], interface[k + 1]);
        if !(len > 1e-12) {
            violations.push(ParamViolation::DegenerateContactEdge { edge: k, length: len });
        }
    }

    // Polygon simplicity only makes sense once the cheap checks pass.
    if violations.is_empty() {
        let (left, right) = half_polygons(&interface, &domain);
        if !is_simple_polygon(&left.vertices) {
            violations.push(ParamViolation::SelfIntersecting { side: Side::Left });
        }
        if !is_simple_polygon(&right.vertices) {
            violations.push(ParamViolation::SelfIntersecting { side: Side::Right });
        }
    }
    violations
}

/// Build the validated geometry for `theta`, or report every violated
/// constraint.
pub fn build_geometry(space: DesignSpace, theta: &[f64]) -> Result<JointGeometry, GeometryError> {
    build_geometry_in(space, theta, SimDomain::default())
}

/// [`build_geometry`] with an explicit domain (the block dimensions are fixed
/// by the families; only the thickness is meant to vary).
pub fn build_geometry_in(
    space: DesignSpace,
    theta: &[f64],
    domain: SimDomain,
) -> Result<JointGeometry, GeometryError> {
    let violations = validate_params(space, theta);
    if !violations.is_empty() {
        return Err(GeometryError::InvalidParams(violations));
    }
    let interface = space.interface_vertices(theta);
    let (left, right) = half_polygons(&interface, &domain);
    Ok(JointGeometry {
        space,
        theta: theta.to_vec(),
        domain,
        interface,
        left,
        right,
    })
}

/// Assemble the two CCW half polygons around the interface polyline.
pub(crate) fn half_polygons(
    interface: &[[f64; 2]],
    domain: &SimDomain,
) -> (HalfBoundary, HalfBoundary) {
    let n_edges = interface.len() - 1;
    let bottom = interface[0];
    let top = interface[interface.len() - 1];
    let (x_min, x_max, h) = (domain.x_min(), domain.x_max(), domain.height);

    // Left half, CCW: lower-left corner -> interface bottom -> up the
    // interface -> upper-left corner -> back down the outer edge.
    let mut lv: Vec<[f64; 2]> = vec![[x_min, 0.0]];
    let mut ls: Vec<VertexSource> = vec![VertexSource::Corner];
    let mut lt: Vec<BoundaryTag> = vec![BoundaryTag::Free];
    lv.extend_from_slice(interface);
    for (i, _) in interface.iter().enumerate() {
        ls.push(VertexSource::Interface(i));
    }
    for k in 0..n_edges {
        lt.push(BoundaryTag::Contact(k));
    }
    lv.push([x_min, h]);
    ls.push(VertexSource::Corner);
    lt.push(BoundaryTag::Symmetry);
    lt.push(BoundaryTag::Traction);
    debug_assert_eq!(lv.len(), lt.len());
    debug_assert_eq!(lv.len(), ls.len());

    // Right half, CCW: interface bottom -> lower-right corner -> up the outer
    // edge -> upper-right corner -> down the interface. Walking the interface
    // top-to-bottom, the segment from interface[k+1] to interface[k] is
    // contact edge k.
    let mut rv: Vec<[f64; 2]> = vec![bottom, [x_max, 0.0], [x_max, h], top];
    let mut rs: Vec<VertexSource> = vec![
        VertexSource::Interface(0),
        VertexSource::Corner,
        VertexSource::Corner,
        VertexSource::Interface(n_edges),
    ];
    let mut rt: Vec<BoundaryTag> = vec![BoundaryTag::Free, BoundaryTag::Traction, BoundaryTag::Symmetry];
    for k in (0..n_edges).rev() {
        rt.push(BoundaryTag::Contact(k));
        if k > 0 {
            rv.push(interface[k]);
            rs.push(VertexSource::Interface(k));
        }
    }
    debug_assert_eq!(rv.len(), rt.len());
    debug_assert_eq!(rv.len(), rs.len());

    (
        HalfBoundary {
            side: Side::Left,
            vertices: lv,
            tags: lt,
            sources: ls,
        },
        HalfBoundary {
            side: Side::Right,
            vertices: rv,
            tags: rt,
            sources: rs,
        },
    )
}

/// Exact simplicity test: no two non-adjacent edges intersect, and adjacent
/// edges meet only at their shared vertex. O(n^2), fine for these tiny
/// polygons.
fn is_simple_polygon(vertices: &[[f64; 2]]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let edge = |i: usize| (vertices[i], vertices[(i + 1) % n]);
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (a, b) = edge(i);
            let (c, d) = edge(j);
            if adjacent {
                // Shared endpoint allowed; any further overlap is not.
                if segments_overlap_beyond_shared_vertex(a, b, c, d) {
                    return false;
                }
            } else if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    vec2::cross(vec2::sub(b, a), vec2::sub(c, a))
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    orient(a, b, p).abs() < 1e-12
        && p[0] >= a[0].min(b[0]) - 1e-12
        && p[0] <= a[0].max(b[0]) + 1e-12
        && p[1] >= a[1].min(b[1]) - 1e-12
        && p[1] <= a[1].max(b[1]) + 1e-12
}

/// Closed-segment intersection test.
fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(c, d, a) || on_segment(c, d, b) || on_segment(a, b, c) || on_segment(a, b, d)
}

/// For adjacent edges sharing exactly one vertex: true if they also overlap
/// elsewhere (a fold-back).
fn segments_overlap_beyond_shared_vertex(
    a: [f64; 2],
    b: [f64; 2],
    c: [f64; 2],
    d: [f64; 2],
) -> bool {
    // Identify the shared vertex.
    let pairs = [(a, b, c, d), (a, b, d, c), (b, a, c, d), (b, a, d, c)];
    for (shared, other1, shared2, other2) in pairs {
        if vec2::dist(shared, shared2) < 1e-12 {
            // Collinear and pointing the same way means the polygon doubles
            // back on itself.
            let u = vec2::sub(other1, shared);
            let v = vec2::sub(other2, shared);
            return vec2::cross(u, v).abs() < 1e-12 && vec2::dot(u, v) > 0.0;
        }
    }
    false
}
