//! Deterministic singular value decomposition (one-sided Jacobi) and sign conventions.
//!
//! The rotation order is fixed (cyclic by column pairs), so identical input
//! produces bit-identical factors on every run.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{ExpcaError, Result};

const MAX_SWEEPS: usize = 80;

/// `left · diag(singulars) · rightᵀ` with orthonormal `left` (n×k) and `right` (m×k).
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub left: Array2<f64>,
    /// Non-increasing, non-negative.
    pub singulars: Vec<f64>,
    pub right: Array2<f64>,
    /// Singular values at or below this are numerically zero.
    pub rank_tolerance: f64,
}

impl SvdFactors {
    pub fn k(&self) -> usize {
        self.singulars.len()
    }

    pub fn is_numerically_zero(&self, component: usize) -> bool {
        self.singulars[component] <= self.rank_tolerance
    }

    /// Number of components above the rank tolerance.
    pub fn rank(&self) -> usize {
        self.singulars.iter().filter(|&&d| d > self.rank_tolerance).count()
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        let mut scaled = self.left.clone();
        for (mut col, &d) in scaled.columns_mut().into_iter().zip(&self.singulars) {
            col *= d;
        }
        scaled.dot(&self.right.t())
    }

    fn negate(&mut self, component: usize) {
        self.left.column_mut(component).mapv_inplace(|x| -x);
        self.right.column_mut(component).mapv_inplace(|x| -x);
    }
}

/// Thin SVD with `k = min(n, m, max_rank)` components.
///
/// Components are sorted by singular value, largest first; equal singular
/// values keep the order in which the Jacobi sweep produced them.
pub fn svd(matrix: ArrayView2<'_, f64>, max_rank: Option<usize>) -> Result<SvdFactors> {
    let (n, m) = matrix.dim();
    if n == 0 || m == 0 {
        return Err(ExpcaError::Dimension(format!("cannot decompose a {n}×{m} matrix")));
    }
    if let Some(((i, j), _)) = matrix.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(ExpcaError::NonFinite { row: i, col: j });
    }
    if max_rank == Some(0) {
        return Err(ExpcaError::InvalidArgument("max_rank must be at least 1".into()));
    }

    // Orthogonalize the columns of the taller orientation.
    let transposed = n < m;
    let mut work = if transposed {
        matrix.t().as_standard_layout().into_owned()
    } else {
        matrix.as_standard_layout().into_owned()
    };
    let (p, q) = work.dim();
    let mut rot = Array2::<f64>::eye(q);
    jacobi_sweeps(&mut work, &mut rot);

    let norms: Vec<f64> = work.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let k = max_rank.map_or(q, |r| r.min(q));
    order.truncate(k);

    let singulars: Vec<f64> = order.iter().map(|&c| norms[c]).collect();
    let rank_tolerance = 1e-12 * (n.max(m) as f64) * singulars[0];

    let mut basis = Array2::<f64>::zeros((p, k));
    let mut rotated = Array2::<f64>::zeros((q, k));
    for (dst, &src) in order.iter().enumerate() {
        rotated.column_mut(dst).assign(&rot.column(src));
        if singulars[dst] > rank_tolerance {
            let col = work.column(src).mapv(|x| x / singulars[dst]);
            basis.column_mut(dst).assign(&col);
        }
    }
    complete_basis(&mut basis, |c| singulars[c] <= rank_tolerance);

    let (left, right) = if transposed { (rotated, basis) } else { (basis, rotated) };
    Ok(SvdFactors {
        left,
        singulars,
        right,
        rank_tolerance,
    })
}

/// Cyclic one-sided Jacobi: rotates column pairs of `work` until they are
/// mutually orthogonal, accumulating the rotations into `rot`.
fn jacobi_sweeps(work: &mut Array2<f64>, rot: &mut Array2<f64>) {
    let (p, q) = work.dim();
    let tol = (p as f64 * f64::EPSILON).clamp(4.0 * f64::EPSILON, 1e-12);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..q {
            for j in (i + 1)..q {
                let (alpha, beta, gamma) = {
                    let ci = work.column(i);
                    let cj = work.column(j);
                    (ci.dot(&ci), cj.dot(&cj), ci.dot(&cj))
                };
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(work, i, j, c, s);
                rotate_columns(rot, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
}

fn rotate_columns(a: &mut Array2<f64>, i: usize, j: usize, c: f64, s: f64) {
    for mut row in a.axis_iter_mut(Axis(0)) {
        let (x, y) = (row[i], row[j]);
        row[i] = c * x - s * y;
        row[j] = s * x + c * y;
    }
}

/// Fills the columns selected by `empty` with unit vectors orthogonal to all
/// other columns, drawn from the standard basis by Gram-Schmidt.
fn complete_basis(basis: &mut Array2<f64>, empty: impl Fn(usize) -> bool) {
    let (p, k) = basis.dim();
    let mut filled: Vec<bool> = (0..k).map(|c| !empty(c)).collect();
    let mut candidate = 0;
    for c in 0..k {
        if filled[c] {
            continue;
        }
        loop {
            assert!(candidate < p, "basis completion ran out of candidates");
            let mut v = ndarray::Array1::<f64>::zeros(p);
            v[candidate] = 1.0;
            candidate += 1;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for (o, done) in filled.iter().enumerate() {
                    if *done {
                        let col = basis.column(o);
                        let proj = col.dot(&v);
                        v.scaled_add(-proj, &col);
                    }
                }
            }
            let norm = v.dot(&v).sqrt();
            if norm > 0.5 {
                basis.column_mut(c).assign(&(v / norm));
                filled[c] = true;
                break;
            }
        }
    }
}

/// Makes the largest-magnitude entry of every right vector non-negative
/// (lowest variable index wins ties), flipping the paired left vector.
pub fn canonical_signs(mut factors: SvdFactors) -> SvdFactors {
    for c in 0..factors.k() {
        let col = factors.right.column(c);
        let mut best = 0;
        for (j, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = j;
            }
        }
        if col[best] < 0.0 {
            factors.negate(c);
        }
    }
    factors
}

/// Flips each component whose right vector points away from the reference's.
/// An inner product of exactly zero leaves the component unchanged.
pub fn align_signs(mut factors: SvdFactors, reference: &SvdFactors) -> Result<SvdFactors> {
    if factors.right.nrows() != reference.right.nrows() {
        return Err(ExpcaError::Dimension(format!(
            "right vectors have length {} but the reference has {}",
            factors.right.nrows(),
            reference.right.nrows()
        )));
    }
    let shared = factors.k().min(reference.k());
    for c in 0..shared {
        if factors.right.column(c).dot(&reference.right.column(c)) < 0.0 {
            factors.negate(c);
        }
    }
    Ok(factors)
}
