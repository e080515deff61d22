//! Reachability analysis for the pair of coupling matrices `(A, B)` and a
//! control matrix `D`.
//!
//! The enlarged matrix `R` collects all words `A^p B^q ... D`; its column
//! span is the smallest subspace containing `Im(D)` that is invariant under
//! both `A` and `B`, and `Ker(R^T)` is the largest subspace contained in
//! `Ker(D^T)` that is invariant under `A^T` and `B^T`. `R` is never
//! materialized as a word list (exponential); the span-growth iteration below
//! produces the same column span in at most `N` passes.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    col_space, intersect, orth_complement, rank_of_complex, right_kernel, Mat, SubspaceBasis,
    Tolerances,
};

/// Outcome of the span-growth iteration.
#[derive(Debug, Clone)]
pub struct ReachabilityReport {
    /// `rank(R) = dim Im(R)`.
    pub rank_r: usize,
    /// Orthonormal basis of `Ker(R^T)`.
    pub ker_rt: SubspaceBasis,
    /// Orthonormal basis of `Im(R)`.
    pub im_r: SubspaceBasis,
    /// Growth iterations taken until the dimension stabilized.
    pub word_depth_used: usize,
}

fn check_system_shapes(a: &Mat, b: &Mat, d: &Mat) -> Result<usize> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::Input(format!(
            "A and B must be square of the same order, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if d.nrows() != n {
        return Err(Error::Input(format!(
            "D must have {} rows, got {}",
            n,
            d.nrows()
        )));
    }
    Ok(n)
}

/// Smallest subspace containing `Im(D)` and invariant under `A` and `B`,
/// with its orthogonal complement `Ker(R^T)`.
pub fn word_span(a: &Mat, b: &Mat, d: &Mat, tol: &Tolerances) -> Result<ReachabilityReport> {
    let n = check_system_shapes(a, b, d)?;
    let mut span = col_space(d, tol)?;
    let mut depth = 0;
    loop {
        if span.dim() == n {
            break;
        }
        let q = span.as_matrix();
        let k = q.ncols();
        let mut grown = Mat::zeros(n, 3 * k);
        grown.view_mut((0, 0), (n, k)).copy_from(&q);
        grown.view_mut((0, k), (n, k)).copy_from(&(a * &q));
        grown.view_mut((0, 2 * k), (n, k)).copy_from(&(b * &q));
        let next = col_space(&grown, tol)?;
        depth += 1;
        if next.dim() == span.dim() {
            span = next;
            break;
        }
        span = next;
        if depth > n {
            // dims strictly increase until the fixed point, so this is
            // unreachable unless rank decisions flap near the tolerance
            return Err(Error::Numeric(
                "span-growth iteration failed to stabilize".into(),
            ));
        }
    }
    let ker_rt = orth_complement(&span, tol)?;
    Ok(ReachabilityReport {
        rank_r: span.dim(),
        im_r: span,
        ker_rt,
        word_depth_used: depth,
    })
}

/// Preimage `{ x : m x in v }`, via the kernel of `(I - P_v) m`.
fn preimage(m: &Mat, v: &SubspaceBasis, tol: &Tolerances) -> Result<SubspaceBasis> {
    let n = m.nrows();
    let proj_out = Mat::identity(n, n) - v.projector();
    right_kernel(&(proj_out * m), tol)
}

/// Largest subspace of `k` that is invariant under both `at` and `bt`,
/// computed by the fixed point `V_{j+1} = V_j ∩ at⁻¹(V_j) ∩ bt⁻¹(V_j)`.
///
/// Independent oracle for [`word_span`]: with `at = A^T`, `bt = B^T` and
/// `k = Ker(D^T)` this yields `Ker(R^T)`.
pub fn largest_invariant_in_kernel(
    at: &Mat,
    bt: &Mat,
    k: &SubspaceBasis,
    tol: &Tolerances,
) -> Result<SubspaceBasis> {
    let n = at.nrows();
    if at.ncols() != n || bt.nrows() != n || bt.ncols() != n {
        return Err(Error::Input("At and Bt must be square of the same order".into()));
    }
    if k.ambient_dim() != n {
        return Err(Error::Input(format!(
            "kernel ambient {} does not match order {}",
            k.ambient_dim(),
            n
        )));
    }
    let mut v = k.clone();
    for _ in 0..=n {
        if v.is_zero() {
            return Ok(v);
        }
        let pa = preimage(at, &v, tol)?;
        let pb = preimage(bt, &v, tol)?;
        let next = intersect(&intersect(&v, &pa, tol)?, &pb, tol)?;
        if next.dim() == v.dim() {
            return Ok(next);
        }
        v = next;
    }
    Ok(v)
}

/// The classical Kalman matrix `(D, AD, ..., A^{N-1} D)`.
///
/// Retained as an independent cross-check: for `B = I` its column span
/// equals the span produced by [`word_span`].
pub fn classical_kalman(a: &Mat, d: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Input("A must be square".into()));
    }
    if d.nrows() != n {
        return Err(Error::Input(format!(
            "D must have {} rows, got {}",
            n,
            d.nrows()
        )));
    }
    let m = d.ncols();
    let mut kal = Mat::zeros(n, n * m);
    let mut block = d.clone();
    for k in 0..n {
        kal.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    Ok(kal)
}

fn to_complex(m: &Mat) -> DMatrix<Complex64> {
    DMatrix::from_iterator(
        m.nrows(),
        m.ncols(),
        m.iter().map(|&x| Complex64::new(x, 0.0)),
    )
}

/// The lower-bound exponent `mu = sup_{alpha, beta} dim Ker(A^T - alpha I;
/// B^T - beta I)`.
///
/// A nonzero stacked kernel forces `alpha` and `beta` to be eigenvalues of
/// `A^T` and `B^T`, so the finite sweep over the spectra is exhaustive. The
/// kernel dimension is counted in complex arithmetic.
pub fn mu_common_eigen(a: &Mat, b: &Mat, tol: &Tolerances) -> Result<usize> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::Input("A and B must be square of the same order".into()));
    }
    let at = to_complex(&a.transpose());
    let bt = to_complex(&b.transpose());
    let eig_a = a.transpose().complex_eigenvalues();
    let eig_b = b.transpose().complex_eigenvalues();
    if eig_a.iter().chain(eig_b.iter()).any(|e| !e.re.is_finite() || !e.im.is_finite()) {
        return Err(Error::Numeric("eigenvalue computation failed".into()));
    }
    let eye = DMatrix::<Complex64>::identity(n, n);
    let mut mu = 0usize;
    for alpha in eig_a.iter() {
        for beta in eig_b.iter() {
            let mut stacked = DMatrix::<Complex64>::zeros(2 * n, n);
            stacked
                .view_mut((0, 0), (n, n))
                .copy_from(&(&at - &eye * *alpha));
            stacked
                .view_mut((n, 0), (n, n))
                .copy_from(&(&bt - &eye * *beta));
            let dim = n - rank_of_complex(&stacked, tol)?;
            mu = mu.max(dim);
        }
    }
    Ok(mu)
}
