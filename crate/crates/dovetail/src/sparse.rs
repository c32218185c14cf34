//! Symmetric positive-definite sparse solves for the FEM systems.
//!
//! The stiffness matrices here are small (a few thousand degrees of freedom)
//! but are factored many times: once per Newton iteration, plus once per
//! adjoint solve. An envelope (skyline) Cholesky factorization after a
//! reverse Cuthill-McKee reordering is simple, allocation-friendly, and —
//! unlike hash-based general sparse packages — bit-for-bit deterministic:
//! every loop below runs in a fixed index order.
//!
//! The solver is built once per mesh from the degree-of-freedom adjacency;
//! refilling and refactoring reuses the pattern and its storage.

use thiserror::Error;

/// Factorization failure.
#[derive(Debug, Error)]
pub enum SolveError {
    /// The matrix is not positive definite: a non-positive pivot appeared.
    #[error("matrix not positive definite: pivot {pivot:.3e} at row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },
}

/// Envelope Cholesky solver for a fixed symmetric sparsity pattern.
///
/// Lifecycle: [`SpdSolver::new`] with the pattern, then per system
/// [`SpdSolver::reset`], [`SpdSolver::add`] for every entry of a symmetric
/// matrix (both `(i, j)` and `(j, i)` — each is stored once), and
/// [`SpdSolver::factor`] followed by any number of [`SpdSolver::solve`] calls.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    n: usize,
    /// `perm[new] = old` index.
    perm: Vec<usize>,
    /// `iperm[old] = new` index.
    iperm: Vec<usize>,
    /// First stored column of each (permuted) row; row `i` stores columns
    /// `first[i] ..= i`.
    first: Vec<usize>,
    /// Start of row `i`'s values in `vals`; `rowptr[n]` is the total size.
    rowptr: Vec<usize>,
    vals: Vec<f64>,
    factored: bool,
}

impl SpdSolver {
    /// Build the solver for an `n x n` symmetric pattern whose off-diagonal
    /// entries are `edges` (undirected pairs; duplicates and self-pairs are
    /// fine). The pattern is reordered with reverse Cuthill-McKee and stored
    /// as a lower-triangle envelope.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, j) in edges {
            assert!(i < n && j < n, "edge ({i}, {j}) out of range for n = {n}");
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }

        let perm = reverse_cuthill_mckee(&adj);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // Envelope: row i spans from its leftmost permuted neighbor to i.
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = iperm[old];
            for &nb in &adj[old] {
                let j = iperm[nb];
                if j < i && j < first[i] {
                    first[i] = j;
                }
            }
        }
        let mut rowptr = Vec::with_capacity(n + 1);
        rowptr.push(0usize);
        for i in 0..n {
            rowptr.push(rowptr[i] + (i - first[i] + 1));
        }
        let vals = vec![0.0; rowptr[n]];
        SpdSolver {
            n,
            perm,
            iperm,
            first,
            rowptr,
            vals,
            factored: false,
        }
    }

    /// Matrix dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Total stored envelope entries (a capacity/fill diagnostic).
    pub fn envelope_len(&self) -> usize {
        self.vals.len()
    }

    /// Zero all values and forget any factorization.
    pub fn reset(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
        self.factored = false;
    }

    /// Accumulate `v` into entry `(row, col)` of the symmetric matrix.
    ///
    /// Callers scatter full symmetric element matrices, so each off-diagonal
    /// value arrives twice (as `(i, j)` and `(j, i)`); exactly one of the two
    /// lands in the stored lower triangle.
    #[inline]
    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        debug_assert!(!self.factored, "add after factor; call reset first");
        let i = self.iperm[row];
        let j = self.iperm[col];
        if i < j {
            return; // the mirrored entry handles it
        }
        debug_assert!(
            j >= self.first[i],
            "entry ({row}, {col}) outside the envelope pattern"
        );
        let idx = self.rowptr[i] + (j - self.first[i]);
        self.vals[idx] += v;
    }

    /// Compute the in-place Cholesky factorization `A = L L^T`.
    pub fn factor(&mut self) -> Result<(), SolveError> {
        let n = self.n;
        for i in 0..n {
            let fi = self.first[i];
            // Off-diagonal entries of row i.
            for j in fi..i {
                let fj = self.first[j];
                let start = fi.max(fj);
                let mut sum = self.vals[self.rowptr[i] + (j - fi)];
                let ii = self.rowptr[i] + (start - fi);
                let jj = self.rowptr[j] + (start - fj);
                let len = j - start;
                for k in 0..len {
                    sum -= self.vals[ii + k] * self.vals[jj + k];
                }
                let djj = self.vals[self.rowptr[j] + (j - fj)];
                self.vals[self.rowptr[i] + (j - fi)] = sum / djj;
            }
            // Diagonal.
            let mut sum = self.vals[self.rowptr[i] + (i - fi)];
            let base = self.rowptr[i];
            for k in 0..(i - fi) {
                let l = self.vals[base + k];
                sum -= l * l;
            }
            if sum <= 0.0 || !sum.is_finite() {
                self.factored = false;
                return Err(SolveError::NotPositiveDefinite { row: self.perm[i], pivot: sum });
            }
            self.vals[base + (i - fi)] = sum.sqrt();
        }
        self.factored = true;
        Ok(())
    }

    /// Whether [`SpdSolver::factor`] has succeeded since the last reset.
    pub fn is_factored(&self) -> bool {
        self.factored
    }

    /// Snapshot the accumulated (unfactored) values, so a base matrix can be
    /// restored cheaply before adding per-iteration terms.
    pub fn save_values(&self) -> Vec<f64> {
        assert!(!self.factored, "save_values after factor");
        self.vals.clone()
    }

    /// Restore values saved by [`SpdSolver::save_values`].
    pub fn load_values(&mut self, saved: &[f64]) {
        assert_eq!(saved.len(), self.vals.len());
        self.vals.copy_from_slice(saved);
        self.factored = false;
    }

    /// Multiply the assembled (unfactored) matrix by `x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert!(!self.factored, "matvec on factored values");
        assert_eq!(x.len(), self.n);
        let n = self.n;
        let xp: Vec<f64> = (0..n).map(|i| x[self.perm[i]]).collect();
        let mut yp = vec![0.0; n];
        for i in 0..n {
            let fi = self.first[i];
            let base = self.rowptr[i];
            for (k, j) in (fi..=i).enumerate() {
                let v = self.vals[base + k];
                yp[i] += v * xp[j];
                if j < i {
                    yp[j] += v * xp[i];
                }
            }
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[self.perm[i]] = yp[i];
        }
        y
    }

    /// Solve `A x = b` using the current factorization.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert!(self.factored, "solve called before factor");
        assert_eq!(b.len(), self.n);
        let n = self.n;
        // y in permuted ordering.
        let mut y: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        // Forward: L y' = y.
        for i in 0..n {
            let fi = self.first[i];
            let base = self.rowptr[i];
            let mut sum = y[i];
            for (k, col) in (fi..i).enumerate() {
                sum -= self.vals[base + k] * y[col];
            }
            y[i] = sum / self.vals[base + (i - fi)];
        }
        // Backward: L^T x' = y'.
        for i in (0..n).rev() {
            let fi = self.first[i];
            let base = self.rowptr[i];
            y[i] /= self.vals[base + (i - fi)];
            let xi = y[i];
            for (k, col) in (fi..i).enumerate() {
                y[col] -= self.vals[base + k] * xi;
            }
        }
        // Un-permute.
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
        x
    }
}

/// Reverse Cuthill-McKee ordering of an undirected graph given as sorted
/// neighbor lists. Returns `perm` with `perm[new] = old`. Fully
/// deterministic: ties break on the lower node index.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree = |v: usize| adj[v].len();
    let mut visited = vec![false; n];
    let mut order: Vec<usize> = Vec::with_capacity(n);

    // Process components in order of their lowest-index unvisited node.
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adj, seed);
        let mut queue = std::collections::VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nexts: Vec<usize> =
                adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nexts.sort_by_key(|&u| (degree(u), u));
            for u in nexts {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Find a pseudo-peripheral node of the component containing `seed` by
/// repeated BFS towards the deepest level (George-Liu style).
fn pseudo_peripheral(adj: &[Vec<usize>], seed: usize) -> usize {
    let mut current = seed;
    let mut ecc = 0usize;
    for _ in 0..10 {
        let (levels, depth) = bfs_levels(adj, current);
        if depth <= ecc && ecc > 0 {
            break;
        }
        ecc = depth;
        // Minimum-degree node in the last level (ties: lowest index).
        let mut best: Option<usize> = None;
        for (v, &lv) in levels.iter().enumerate() {
            if lv == Some(depth) {
                let better = match best {
                    None => true,
                    Some(b) => {
                        (adj[v].len(), v) < (adj[b].len(), b)
                    }
                };
                if better {
                    best = Some(v);
                }
            }
        }
        match best {
            Some(b) if b != current => current = b,
            _ => break,
        }
    }
    current
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> (Vec<Option<usize>>, usize) {
    let n = adj.len();
    let mut levels: Vec<Option<usize>> = vec![None; n];
    let mut queue = std::collections::VecDeque::new();
    levels[start] = Some(0);
    queue.push_back(start);
    let mut depth = 0;
    while let Some(v) = queue.pop_front() {
        let lv = levels[v].unwrap();
        depth = depth.max(lv);
        for &u in &adj[v] {
            if levels[u].is_none() {
                levels[u] = Some(lv + 1);
                queue.push_back(u);
            }
        }
    }
    (levels, depth)
}
