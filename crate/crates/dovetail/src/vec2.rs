//! Minimal 2-vector helpers shared across modules. Points and displacements
//! are plain `[f64; 2]` throughout the crate; these free functions keep the
//! arithmetic readable without pulling in a linear-algebra dependency for
//! two-component math.

#[inline]
pub fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale(s: f64, a: [f64; 2]) -> [f64; 2] {
    [s * a[0], s * a[1]]
}

#[inline]
pub fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// z-component of the cross product of two in-plane vectors.
#[inline]
pub fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    norm(sub(a, b))
}

/// Unit vector along `a`. Caller must ensure `a` is not (numerically) zero.
#[inline]
pub fn normalize(a: [f64; 2]) -> [f64; 2] {
    let n = norm(a);
    [a[0] / n, a[1] / n]
}

/// Rotate `a` by -90 degrees: the outward normal of a CCW boundary segment
/// with direction `a`.
#[inline]
pub fn rot_cw(a: [f64; 2]) -> [f64; 2] {
    [a[1], -a[0]]
}
