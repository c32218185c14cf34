//! Triangulation of the joint halves and the differentiable mesh morph.
//!
//! Each half polygon is meshed once per accepted optimizer step by
//! constrained Delaunay refinement: the boundary is pre-subdivided into
//! pieces no longer than the target step `h`, constraint edges pin the
//! polygon, and Ruppert-style refinement fills the interior. The resulting
//! mesh is re-canonicalized (nodes sorted by coordinates, triangles by their
//! node triples) so the stored mesh depends only on the input geometry, not
//! on any library-internal ordering.
//!
//! Within one objective or gradient evaluation the topology is frozen:
//! parameter changes move nodes through a [`MorphMap`]. Every boundary node
//! sits at a fixed arclength fraction of one polygon segment, and polygon
//! vertices are affine in `theta`, so boundary motion is exactly linear in
//! `theta`; interior nodes follow by a fixed graph-Laplacian extension. The
//! whole morph is therefore a single precomputed Jacobian, which makes the
//! chain rule through node coordinates exact rather than approximate.

use crate::geometry::{polygon_area, BoundaryTag, JointGeometry, Side};
use crate::sparse::SpdSolver;
use crate::vec2;
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, InsertionError, Point2, RefinementParameters,
    Triangulation,
};
use std::collections::BTreeMap;
use thiserror::Error;

/// Default mesh step in mm.
pub const DEFAULT_MESH_STEP: f64 = 0.5;

/// Longest allowed edge relative to the target step.
pub const MAX_EDGE_FACTOR: f64 = 1.5;

/// Smallest allowed interior angle in degrees.
pub const MIN_ANGLE_DEG: f64 = 15.0;

/// Distance tolerance for attaching mesh nodes to polygon segments (mm).
const ATTACH_TOL: f64 = 1e-9;

/// Meshing and morphing failures.
#[derive(Debug, Error)]
pub enum MeshError {
    #[error("triangulation rejected input point ({x}, {y}): {source}")]
    BadInputPoint {
        x: f64,
        y: f64,
        source: InsertionError,
    },
    #[error("refinement hit its vertex budget before meeting the angle bound on the {side} half")]
    RefinementIncomplete { side: Side },
    #[error(
        "mesh area {got:.12} differs from polygon area {expected:.12} on the {side} half"
    )]
    AreaMismatch { side: Side, expected: f64, got: f64 },
    #[error(
        "edge of length {len:.6} near ({x:.3}, {y:.3}) exceeds the {limit:.6} mm bound"
    )]
    EdgeTooLong { len: f64, limit: f64, x: f64, y: f64 },
    #[error(
        "triangle near ({x:.3}, {y:.3}) has a {angle_deg:.2} degree angle (min {MIN_ANGLE_DEG})"
    )]
    AngleTooSmall { angle_deg: f64, x: f64, y: f64 },
    #[error("interface vertex {index} at ({x}, {y}) is not a mesh node")]
    MissingInterfaceVertex { index: usize, x: f64, y: f64 },
    #[error("boundary edge near ({x:.3}, {y:.3}) lies on no polygon segment")]
    UnattachedBoundaryEdge { x: f64, y: f64 },
    #[error("non-positive triangle area {area:.3e} in triangle {triangle}")]
    NonPositiveArea { triangle: usize, area: f64 },
    #[error("morph produced a degenerate triangle {triangle} (area {area:.3e})")]
    MorphDegenerate { triangle: usize, area: f64 },
    #[error("morph built against mismatched reference parameters")]
    MorphReferenceMismatch,
}

/// A boundary node's home on the polygon: segment index and arclength
/// fraction in `[0, 1)`. Polygon vertices sit at fraction 0 of their
/// outgoing segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attachment {
    pub segment: usize,
    pub fraction: f64,
}

/// A mesh edge on the domain boundary, tagged by the polygon segment it
/// lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    /// Node indices, smaller first.
    pub nodes: [usize; 2],
    /// Polygon segment the edge lies on.
    pub segment: usize,
}

/// Triangle mesh of one joint half with boundary classification.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub side: Side,
    /// Target step the mesh was built for (mm).
    pub h: f64,
    pub nodes: Vec<[f64; 2]>,
    /// CCW node index triples.
    pub triangles: Vec<[usize; 3]>,
    /// All boundary edges, sorted by node pair.
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Per-node boundary attachment (`None` for interior nodes).
    pub attachments: Vec<Option<Attachment>>,
    /// Tag of each polygon segment, copied from the geometry.
    pub segment_tags: Vec<BoundaryTag>,
}

impl TriMesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Signed area of triangle `t` (positive for CCW).
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [i, j, k] = self.triangles[t];
        triangle_area(self.nodes[i], self.nodes[j], self.nodes[k])
    }

    /// Sum of all triangle areas.
    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Tag of a boundary edge.
    pub fn edge_tag(&self, edge: &BoundaryEdge) -> BoundaryTag {
        self.segment_tags[edge.segment]
    }

    /// Boundary edges with a given tag, in deterministic order.
    pub fn edges_with_tag(&self, tag: BoundaryTag) -> Vec<BoundaryEdge> {
        self.boundary_edges
            .iter()
            .copied()
            .filter(|e| self.edge_tag(e) == tag)
            .collect()
    }

    /// Sorted node indices carrying a given tag (nodes of any boundary edge
    /// with that tag; polygon corners carry both neighbors' tags).
    pub fn nodes_with_tag(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges_with_tag(tag)
            .iter()
            .flat_map(|e| e.nodes)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Nodes on contact edge `k` with their arclength fraction along that
    /// edge, sorted bottom to top along the interface (fraction 0 at the
    /// contact edge's lower vertex). Includes both endpoint corners.
    pub fn contact_edge_nodes(&self, k: usize) -> Vec<(usize, f64)> {
        let segment = self
            .segment_tags
            .iter()
            .position(|t| *t == BoundaryTag::Contact(k))
            .expect("contact edge index out of range");
        let nseg = self.segment_tags.len();
        let mut out: Vec<(usize, f64)> = Vec::new();
        for (node, att) in self.attachments.iter().enumerate() {
            let Some(att) = att else { continue };
            if att.segment == segment {
                out.push((node, att.fraction));
            } else if att.fraction == 0.0 && (att.segment + nseg - 1) % nseg == segment {
                // Vertex at the far end of the segment, canonically attached
                // to the next one.
                out.push((node, 1.0));
            }
        }
        // The right half's CCW boundary walks the interface top to bottom, so
        // its contact segments are reversed relative to the interface
        // direction; flip fractions to report them bottom to top.
        if self.side == Side::Right {
            for item in &mut out {
                item.1 = 1.0 - item.1;
            }
        }
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    /// Plain-text export: `v x y` per node, `t i j k` per triangle, `m node
    /// tag` per boundary marker. Line order is deterministic.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("v {} {}\n", n[0], n[1]));
        }
        for t in &self.triangles {
            out.push_str(&format!("t {} {} {}\n", t[0], t[1], t[2]));
        }
        // node -> set of tag strings, via incident boundary edges.
        let mut tags: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for e in &self.boundary_edges {
            let name = tag_name(self.edge_tag(e));
            for &n in &e.nodes {
                let list = tags.entry(n).or_default();
                if !list.contains(&name) {
                    list.push(name.clone());
                }
            }
        }
        for (node, mut names) in tags {
            names.sort();
            for name in names {
                out.push_str(&format!("m {node} {name}\n"));
            }
        }
        out
    }
}

fn tag_name(tag: BoundaryTag) -> String {
    match tag {
        BoundaryTag::Contact(k) => format!("interface-edge-{k}"),
        BoundaryTag::Traction => "traction".to_string(),
        BoundaryTag::Symmetry => "symmetry".to_string(),
        BoundaryTag::Free => "free".to_string(),
    }
}

#[inline]
fn triangle_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * vec2::cross(vec2::sub(b, a), vec2::sub(c, a))
}

/// Triangulate one half of the joint at target step `h`.
pub fn triangulate(geom: &JointGeometry, side: Side, h: f64) -> Result<TriMesh, MeshError> {
    assert!(h > 0.0, "mesh step must be positive");
    let half = geom.half(side);
    mesh_polygon(&half.vertices, &half.tags, side, h, &geom.interface)
}

/// Core mesher over a tagged simple CCW polygon.
fn mesh_polygon(
    vertices: &[[f64; 2]],
    tags: &[BoundaryTag],
    side: Side,
    h: f64,
    interface: &[[f64; 2]],
) -> Result<TriMesh, MeshError> {
    let nseg = vertices.len();

    // Pre-subdivide the boundary into pieces of length <= h so boundary
    // nodes land at fixed arclength fractions, then pin it with constraint
    // edges.
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::new();
    let mut loop_handles = Vec::new();
    for s in 0..nseg {
        let a = vertices[s];
        let b = vertices[(s + 1) % nseg];
        let len = vec2::dist(a, b);
        let pieces = (len / h).ceil().max(1.0) as usize;
        for j in 0..pieces {
            let t = j as f64 / pieces as f64;
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let handle = cdt
                .insert(Point2::new(p[0], p[1]))
                .map_err(|source| MeshError::BadInputPoint {
                    x: p[0],
                    y: p[1],
                    source,
                })?;
            loop_handles.push(handle);
        }
    }
    for i in 0..loop_handles.len() {
        let a = loop_handles[i];
        let b = loop_handles[(i + 1) % loop_handles.len()];
        if a != b {
            cdt.add_constraint(a, b);
        }
    }

    // Refine. The area cap keeps every edge under MAX_EDGE_FACTOR * h even
    // for the flattest triangles the 30-degree angle bound admits.
    let max_area = (MAX_EDGE_FACTOR * h) * (MAX_EDGE_FACTOR * h) / (4.0 * 3.0f64.sqrt());
    let params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(30.0))
        .with_max_allowed_area(max_area)
        .with_max_additional_vertices(200_000)
        .exclude_outer_faces(true);
    let refinement = cdt.refine(params);
    if !refinement.refinement_complete {
        return Err(MeshError::RefinementIncomplete { side });
    }
    // Inner-face handle indices are raw DCEL indices (0 is the outer face).
    let mut outer = vec![false; cdt.num_inner_faces() + 1];
    for f in refinement.excluded_faces {
        outer[f.index()] = true;
    }

    // Extract raw nodes and kept triangles.
    let raw_nodes: Vec<[f64; 2]> = cdt
        .vertices()
        .map(|v| {
            let p = v.position();
            [p.x, p.y]
        })
        .collect();
    let mut raw_tris: Vec<[usize; 3]> = Vec::new();
    for face in cdt.inner_faces() {
        if outer[face.fix().index()] {
            continue;
        }
        let [a, b, c] = face.vertices();
        raw_tris.push([a.fix().index(), b.fix().index(), c.fix().index()]);
    }

    // Canonicalize: keep only used nodes, order them by coordinates, and
    // normalize triangle listing. The result is independent of the
    // triangulation library's internal bookkeeping order.
    let mut used = vec![false; raw_nodes.len()];
    for t in &raw_tris {
        for &i in t {
            used[i] = true;
        }
    }
    let mut order: Vec<usize> = (0..raw_nodes.len()).filter(|&i| used[i]).collect();
    order.sort_by(|&i, &j| {
        raw_nodes[i][0]
            .total_cmp(&raw_nodes[j][0])
            .then(raw_nodes[i][1].total_cmp(&raw_nodes[j][1]))
    });
    let mut renumber = vec![usize::MAX; raw_nodes.len()];
    for (new, &old) in order.iter().enumerate() {
        renumber[old] = new;
    }
    let nodes: Vec<[f64; 2]> = order.iter().map(|&old| raw_nodes[old]).collect();
    let mut triangles: Vec<[usize; 3]> = raw_tris
        .iter()
        .map(|t| {
            let mapped = [renumber[t[0]], renumber[t[1]], renumber[t[2]]];
            rotate_min_first(mapped)
        })
        .collect();
    triangles.sort_unstable();

    // Boundary edges: triangle edges used exactly once.
    let mut edge_use: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for t in &triangles {
        for e in [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]] {
            let key = [e[0].min(e[1]), e[0].max(e[1])];
            *edge_use.entry(key).or_insert(0) += 1;
        }
    }

    // Attach boundary nodes to polygon segments.
    let mut attachments: Vec<Option<Attachment>> = vec![None; nodes.len()];
    let on_boundary: Vec<bool> = {
        let mut flags = vec![false; nodes.len()];
        for (key, count) in &edge_use {
            if *count == 1 {
                flags[key[0]] = true;
                flags[key[1]] = true;
            }
        }
        flags
    };
    for (i, node) in nodes.iter().enumerate() {
        if !on_boundary[i] {
            continue;
        }
        attachments[i] = attach_node(*node, vertices);
    }

    let mut boundary_edges: Vec<BoundaryEdge> = Vec::new();
    for (key, count) in &edge_use {
        if *count != 1 {
            continue;
        }
        let (a, b) = (nodes[key[0]], nodes[key[1]]);
        let segment = (0..nseg).find(|&s| {
            let p = vertices[s];
            let q = vertices[(s + 1) % nseg];
            point_segment_distance(a, p, q) <= ATTACH_TOL
                && point_segment_distance(b, p, q) <= ATTACH_TOL
        });
        let Some(segment) = segment else {
            let mid = vec2::scale(0.5, vec2::add(a, b));
            return Err(MeshError::UnattachedBoundaryEdge { x: mid[0], y: mid[1] });
        };
        boundary_edges.push(BoundaryEdge {
            nodes: *key,
            segment,
        });
    }

    let mesh = TriMesh {
        side,
        h,
        nodes,
        triangles,
        boundary_edges,
        attachments,
        segment_tags: tags.to_vec(),
    };
    validate_mesh(&mesh, vertices, interface)?;
    Ok(mesh)
}

fn rotate_min_first(t: [usize; 3]) -> [usize; 3] {
    let m = t.iter().enumerate().min_by_key(|(_, &v)| v).unwrap().0;
    [t[m], t[(m + 1) % 3], t[(m + 2) % 3]]
}

/// Distance from `p` to segment `a`-`b`.
fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = vec2::sub(b, a);
    let len2 = vec2::dot(ab, ab);
    let t = if len2 > 0.0 {
        (vec2::dot(vec2::sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    vec2::dist(p, vec2::add(a, vec2::scale(t, ab)))
}

/// Attach one boundary node to its polygon segment, canonicalizing polygon
/// vertices to fraction 0 of their outgoing segment.
fn attach_node(p: [f64; 2], vertices: &[[f64; 2]]) -> Option<Attachment> {
    let nseg = vertices.len();
    for s in 0..nseg {
        let a = vertices[s];
        let b = vertices[(s + 1) % nseg];
        if point_segment_distance(p, a, b) <= ATTACH_TOL {
            let ab = vec2::sub(b, a);
            let t = vec2::dot(vec2::sub(p, a), ab) / vec2::dot(ab, ab);
            if t >= 1.0 - 1e-12 {
                return Some(Attachment {
                    segment: (s + 1) % nseg,
                    fraction: 0.0,
                });
            }
            return Some(Attachment {
                segment: s,
                fraction: t.max(0.0),
            });
        }
    }
    None
}

/// Post-hoc mesh quality and consistency checks.
fn validate_mesh(
    mesh: &TriMesh,
    polygon: &[[f64; 2]],
    interface: &[[f64; 2]],
) -> Result<(), MeshError> {
    // Positive areas and area conservation.
    let mut total = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = triangle_area(mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]);
        if area <= 0.0 {
            return Err(MeshError::NonPositiveArea { triangle: t, area });
        }
        total += area;
    }
    let poly_area = polygon_area(polygon);
    if ((total - poly_area) / poly_area).abs() > 1e-9 {
        return Err(MeshError::AreaMismatch {
            side: mesh.side,
            expected: poly_area,
            got: total,
        });
    }

    // Edge length and angle bounds.
    let limit = MAX_EDGE_FACTOR * mesh.h;
    let min_angle = MIN_ANGLE_DEG.to_radians();
    for tri in &mesh.triangles {
        let p = [mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]];
        for i in 0..3 {
            let a = p[i];
            let b = p[(i + 1) % 3];
            let c = p[(i + 2) % 3];
            let len = vec2::dist(a, b);
            if len > limit {
                return Err(MeshError::EdgeTooLong {
                    len,
                    limit,
                    x: 0.5 * (a[0] + b[0]),
                    y: 0.5 * (a[1] + b[1]),
                });
            }
            let u = vec2::sub(a, c);
            let v = vec2::sub(b, c);
            let angle = (vec2::dot(u, v) / (vec2::norm(u) * vec2::norm(v)))
                .clamp(-1.0, 1.0)
                .acos();
            if angle < min_angle {
                return Err(MeshError::AngleTooSmall {
                    angle_deg: angle.to_degrees(),
                    x: c[0],
                    y: c[1],
                });
            }
        }
    }

    // Every interface vertex that belongs to this half's polygon must be a
    // mesh node.
    for (idx, iv) in interface.iter().enumerate() {
        let on_polygon = polygon.iter().any(|v| vec2::dist(*v, *iv) <= ATTACH_TOL);
        if !on_polygon {
            continue;
        }
        let present = mesh
            .nodes
            .iter()
            .any(|n| vec2::dist(*n, *iv) <= ATTACH_TOL);
        if !present {
            return Err(MeshError::MissingInterfaceVertex {
                index: idx,
                x: iv[0],
                y: iv[1],
            });
        }
    }
    Ok(())
}

/// Differentiable map from shape parameters to node coordinates at frozen
/// topology. Node positions are affine in `theta`: boundary nodes ride their
/// polygon segments, interior nodes follow a fixed harmonic extension.
#[derive(Debug, Clone)]
pub struct MorphMap {
    pub theta_ref: Vec<f64>,
    /// Flattened reference coordinates `[x0, y0, x1, y1, ...]`.
    x_ref: Vec<f64>,
    /// One flattened displacement column per parameter: `d X / d theta_p`.
    jac_cols: Vec<Vec<f64>>,
    /// Topology for degeneracy checks, shared with the source mesh.
    triangles: Vec<[usize; 3]>,
}

impl MorphMap {
    pub fn node_count(&self) -> usize {
        self.x_ref.len() / 2
    }

    pub fn param_count(&self) -> usize {
        self.jac_cols.len()
    }

    /// One Jacobian column as flattened node displacements.
    pub fn jacobian_col(&self, p: usize) -> &[f64] {
        &self.jac_cols[p]
    }
}

/// Build the morph for `mesh`, which must have been triangulated from `geom`
/// at `theta_ref`.
pub fn build_morph(
    geom: &JointGeometry,
    mesh: &TriMesh,
    theta_ref: &[f64],
) -> Result<MorphMap, MeshError> {
    if geom.theta != theta_ref {
        return Err(MeshError::MorphReferenceMismatch);
    }
    let half = geom.half(mesh.side);
    let n = mesh.node_count();
    let np = geom.space.param_count();
    let vjac = half.vertex_param_jacobian(geom.space);
    let nseg = half.vertices.len();

    // Boundary rows of each Jacobian column.
    let mut jac_cols: Vec<Vec<f64>> = vec![vec![0.0; 2 * n]; np];
    let mut is_boundary = vec![false; n];
    for (i, att) in mesh.attachments.iter().enumerate() {
        let Some(att) = att else { continue };
        is_boundary[i] = true;
        let s = att.segment;
        let t = att.fraction;
        let s_next = (s + 1) % nseg;
        for (p, col) in jac_cols.iter_mut().enumerate() {
            let dv = [
                (1.0 - t) * vjac[s][p][0] + t * vjac[s_next][p][0],
                (1.0 - t) * vjac[s][p][1] + t * vjac[s_next][p][1],
            ];
            col[2 * i] = dv[0];
            col[2 * i + 1] = dv[1];
        }
    }

    // Interior extension: uniform graph Laplacian with Dirichlet boundary
    // data, factored once and applied per column and component.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in &mesh.triangles {
        for e in [[t[0], t[1]], [t[1], t[2]], [t[2], t[0]]] {
            adj[e[0]].push(e[1]);
            adj[e[1]].push(e[0]);
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    let interior: Vec<usize> = (0..n).filter(|&i| !is_boundary[i]).collect();
    if !interior.is_empty() {
        let mut interior_id = vec![usize::MAX; n];
        for (k, &i) in interior.iter().enumerate() {
            interior_id[i] = k;
        }
        let mut edges = Vec::new();
        for &i in &interior {
            for &j in &adj[i] {
                if !is_boundary[j] && i < j {
                    edges.push((interior_id[i], interior_id[j]));
                }
            }
        }
        let mut solver = SpdSolver::new(interior.len(), edges);
        solver.reset();
        for &i in &interior {
            solver.add(interior_id[i], interior_id[i], adj[i].len() as f64);
            for &j in &adj[i] {
                if !is_boundary[j] {
                    solver.add(interior_id[i], interior_id[j], -1.0);
                }
            }
        }
        solver
            .factor()
            .expect("interior graph Laplacian is positive definite");
        for col in jac_cols.iter_mut() {
            for comp in 0..2 {
                let mut rhs = vec![0.0; interior.len()];
                for (k, &i) in interior.iter().enumerate() {
                    let mut sum = 0.0;
                    for &j in &adj[i] {
                        if is_boundary[j] {
                            sum += col[2 * j + comp];
                        }
                    }
                    rhs[k] = sum;
                }
                let x = solver.solve(&rhs);
                for (k, &i) in interior.iter().enumerate() {
                    col[2 * i + comp] = x[k];
                }
            }
        }
    }

    let mut x_ref = vec![0.0; 2 * n];
    for (i, node) in mesh.nodes.iter().enumerate() {
        x_ref[2 * i] = node[0];
        x_ref[2 * i + 1] = node[1];
    }
    Ok(MorphMap {
        theta_ref: theta_ref.to_vec(),
        x_ref,
        jac_cols,
        triangles: mesh.triangles.clone(),
    })
}

/// Evaluate the morph at `theta_new`, failing if any triangle degenerates.
pub fn morph_nodes(map: &MorphMap, theta_new: &[f64]) -> Result<Vec<[f64; 2]>, MeshError> {
    assert_eq!(theta_new.len(), map.theta_ref.len());
    let n = map.node_count();
    let mut x = map.x_ref.clone();
    for (p, col) in map.jac_cols.iter().enumerate() {
        let dt = theta_new[p] - map.theta_ref[p];
        if dt != 0.0 {
            for (xi, ci) in x.iter_mut().zip(col) {
                *xi += dt * ci;
            }
        }
    }
    let nodes: Vec<[f64; 2]> = (0..n).map(|i| [x[2 * i], x[2 * i + 1]]).collect();
    for (t, tri) in map.triangles.iter().enumerate() {
        let area = triangle_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
        if area <= 0.0 {
            return Err(MeshError::MorphDegenerate { triangle: t, area });
        }
    }
    Ok(nodes)
}

/// Directional derivative of node coordinates: `J v_theta`, returned as one
/// displacement per node. Exact — the morph is affine in `theta`.
pub fn morph_jacobian_vp(map: &MorphMap, v_theta: &[f64]) -> Vec<[f64; 2]> {
    assert_eq!(v_theta.len(), map.param_count());
    let n = map.node_count();
    let mut out = vec![[0.0; 2]; n];
    for (p, col) in map.jac_cols.iter().enumerate() {
        let v = v_theta[p];
        if v != 0.0 {
            for i in 0..n {
                out[i][0] += v * col[2 * i];
                out[i][1] += v * col[2 * i + 1];
            }
        }
    }
    out
}

/// Transposed Jacobian product: `J^T u` for a cotangent `u` on node
/// coordinates. This is how objective gradients with respect to node
/// positions become gradients with respect to shape parameters.
pub fn morph_jacobian_tvp(map: &MorphMap, u: &[[f64; 2]]) -> Vec<f64> {
    assert_eq!(u.len(), map.node_count());
    map.jac_cols
        .iter()
        .map(|col| {
            let mut s = 0.0;
            for (i, ui) in u.iter().enumerate() {
                s += col[2 * i] * ui[0] + col[2 * i + 1] * ui[1];
            }
            s
        })
        .collect()
}
