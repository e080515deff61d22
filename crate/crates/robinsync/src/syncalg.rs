//! Synchronization matrices `C_p`, compatibility conditions, reduced
//! matrices, bi-orthonormality and `D`-synthesis.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    is_similar_to_symmetric, orth_complement, rank_of, Mat, SubspaceBasis, Tolerances,
};
use crate::reachability::word_span;

/// Grouping `0 = n_0 < n_1 < ... < n_p = N` of the `N` state components into
/// `p` groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    cut_points: Vec<usize>,
}

impl GroupPartition {
    pub fn new(cut_points: Vec<usize>) -> Result<Self> {
        if cut_points.len() < 2 {
            return Err(Error::Input("partition needs at least two cut points".into()));
        }
        if cut_points[0] != 0 {
            return Err(Error::Input("partition must start at 0".into()));
        }
        if !cut_points.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Input("cut points must be strictly increasing".into()));
        }
        Ok(GroupPartition { cut_points })
    }

    /// The trivial single-group partition (p = 1).
    pub fn single_group(n: usize) -> Self {
        GroupPartition {
            cut_points: vec![0, n],
        }
    }

    pub fn cut_points(&self) -> &[usize] {
        &self.cut_points
    }

    /// Number of state components `N`.
    pub fn n(&self) -> usize {
        *self.cut_points.last().unwrap()
    }

    /// Number of groups `p`.
    pub fn p(&self) -> usize {
        self.cut_points.len() - 1
    }

    /// Half-open index range of group `r` (0-based).
    pub fn group(&self, r: usize) -> std::ops::Range<usize> {
        self.cut_points[r]..self.cut_points[r + 1]
    }
}

/// The `(N-p) x N` block-diagonal synchronization matrix built from the
/// banded difference blocks `S_r`; groups of size 1 contribute an empty
/// block, and `p = N` yields the empty `0 x N` matrix.
pub fn build_cp(partition: &GroupPartition) -> Mat {
    let n = partition.n();
    let p = partition.p();
    let mut cp = Mat::zeros(n - p, n);
    let mut row = 0;
    for r in 0..p {
        let g = partition.group(r);
        for j in g.start..g.end - 1 {
            cp[(row, j)] = 1.0;
            cp[(row, j + 1)] = -1.0;
            row += 1;
        }
    }
    cp
}

/// `Ker(C_p)` both as the canonical indicator vectors `e_r` and as an
/// orthonormal basis.
#[derive(Debug, Clone)]
pub struct KerCp {
    /// Indicator vectors: `(e_r)_j = 1` iff `j` belongs to group `r`.
    pub indicators: Vec<DVector<f64>>,
    pub orthonormal: SubspaceBasis,
}

pub fn ker_cp_vectors(partition: &GroupPartition) -> KerCp {
    let n = partition.n();
    let mut indicators = Vec::with_capacity(partition.p());
    let mut orthonormal = Vec::with_capacity(partition.p());
    for r in 0..partition.p() {
        let g = partition.group(r);
        let mut e = DVector::zeros(n);
        for j in g.clone() {
            e[j] = 1.0;
        }
        let scale = 1.0 / (g.len() as f64).sqrt();
        orthonormal.push(&e * scale);
        indicators.push(e);
    }
    KerCp {
        indicators,
        orthonormal: SubspaceBasis::new(n, orthonormal).expect("indicator vectors are orthogonal"),
    }
}

/// `C_p`-compatibility: `M Ker(C_p) ⊆ Ker(C_p)`, checked as
/// `C_p M e_r ≈ 0` for every group indicator. For `p = 1` this is exactly
/// the equal-row-sum condition.
pub fn is_cp_compatible(m: &Mat, partition: &GroupPartition, tol: &Tolerances) -> Result<bool> {
    let n = partition.n();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Input(format!(
            "matrix order {} does not match partition N = {}",
            m.nrows(),
            n
        )));
    }
    let cp = build_cp(partition);
    let bound = tol.residual_abs * m.norm().max(1.0);
    for e in ker_cp_vectors(partition).indicators {
        if (&cp * (m * &e)).norm() > bound {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The reduced matrix of a `C_p`-compatible `M`:
/// `M_p = C_p M C_p^T (C_p C_p^T)^{-1}`, the unique solution of
/// `C_p M = M_p C_p`.
pub fn reduced_matrix(m: &Mat, partition: &GroupPartition, tol: &Tolerances) -> Result<Mat> {
    if !is_cp_compatible(m, partition, tol)? {
        return Err(Error::Precondition(
            "matrix is not C_p-compatible; the reduced matrix is not well defined".into(),
        ));
    }
    let cp = build_cp(partition);
    let k = cp.nrows();
    if k == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let gram = &cp * cp.transpose();
    let rhs = (&cp * m * cp.transpose()).transpose();
    let sol = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("C_p C_p^T is singular".into()))?;
    let reduced = sol.transpose();
    let residual = (&cp * m - &reduced * &cp).norm();
    if residual > tol.residual_abs * m.norm().max(1.0) {
        return Err(Error::Numeric(format!(
            "reduction residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(reduced)
}

/// True iff the Gram matrix `(E_r, e_s)` is the identity within
/// `residual_abs`.
pub fn check_biorthonormal(
    big_e: &[DVector<f64>],
    small_e: &[DVector<f64>],
    tol: &Tolerances,
) -> Result<bool> {
    if big_e.len() != small_e.len() {
        return Err(Error::Input(format!(
            "count mismatch: {} vs {}",
            big_e.len(),
            small_e.len()
        )));
    }
    for (r, er) in big_e.iter().enumerate() {
        for (s, es) in small_e.iter().enumerate() {
            if er.len() != es.len() {
                return Err(Error::Input("ambient dimension mismatch".into()));
            }
            let want = if r == s { 1.0 } else { 0.0 };
            if (er.dot(es) - want).abs() > tol.residual_abs {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Re-span `E_basis` into vectors `E_r` with `(E_r, e_s) = delta_rs`, by
/// solving the `p x p` Gram system. A singular Gram matrix signals
/// `Ker(R^T) ∩ Im(C_p^T) != {0}` and is reported as an error.
pub fn normalize_biorthonormal(
    e_basis: &SubspaceBasis,
    small_e: &[DVector<f64>],
    tol: &Tolerances,
) -> Result<Vec<DVector<f64>>> {
    let p = small_e.len();
    if e_basis.dim() != p {
        return Err(Error::Input(format!(
            "basis dimension {} does not match vector count {}",
            e_basis.dim(),
            p
        )));
    }
    // G[i][j] = (basis_i, e_j)
    let gram = Mat::from_fn(p, p, |i, j| e_basis.vectors()[i].dot(&small_e[j]));
    if rank_of(&gram, tol)? < p {
        return Err(Error::Precondition(
            "not bi-orthonormalizable: the Gram matrix against Ker(C_p) is singular".into(),
        ));
    }
    let inv = gram
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("Gram inversion failed".into()))?;
    // E_r = sum_i inv[r][i] basis_i satisfies (E_r, e_s) = (inv G)[r][s] = delta
    let mut out = Vec::with_capacity(p);
    for r in 0..p {
        let mut v = DVector::zeros(e_basis.ambient_dim());
        for i in 0..p {
            v += &e_basis.vectors()[i] * inv[(r, i)];
        }
        out.push(v);
    }
    Ok(out)
}

/// Boundary control matrix with `Im(D) = V^perp`: the `N x (N - dim V)`
/// matrix whose columns are an orthonormal basis of the complement.
pub fn synthesize_d(v: &SubspaceBasis, tol: &Tolerances) -> Result<Mat> {
    if v.dim() == v.ambient_dim() {
        return Err(Error::Precondition(
            "V is the full space; no control directions remain".into(),
        ));
    }
    Ok(orth_complement(v, tol)?.as_matrix())
}

fn to_complex(m: &Mat) -> DMatrix<Complex64> {
    DMatrix::from_iterator(
        m.nrows(),
        m.ncols(),
        m.iter().map(|&x| Complex64::new(x, 0.0)),
    )
}

/// Kernel basis of a complex matrix (columns of V for small singular values).
fn complex_kernel(m: &DMatrix<Complex64>, tol: &Tolerances) -> Vec<DVector<Complex64>> {
    let (rows, cols) = m.shape();
    let padded = if rows < cols {
        let mut p = DMatrix::<Complex64>::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_h = svd.v_t.expect("requested right singular vectors");
    let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    sv.resize(cols, 0.0);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::new();
    for (j, &s) in sv.iter().enumerate() {
        if smax == 0.0 || s <= tol.rank_rel * smax {
            // row j of V^H, conjugated, is column j of V
            out.push(DVector::from_iterator(
                cols,
                v_h.row(j).iter().map(|z| z.conj()),
            ));
        }
    }
    out
}

fn cluster_complex(values: &[Complex64], gap: f64) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..values.len()).collect();
    let mut clusters = Vec::new();
    while let Some(seed) = remaining.pop() {
        let mut cluster = vec![seed];
        let mut i = 0;
        while i < remaining.len() {
            if cluster
                .iter()
                .any(|&c| (values[c] - values[remaining[i]]).norm() <= gap)
            {
                cluster.push(remaining.remove(i));
            } else {
                i += 1;
            }
        }
        clusters.push(cluster);
    }
    clusters
}

/// For a `C_p`-compatible diagonalizable `A`, the eigenvectors whose
/// projection by `C_p` is nonzero, paired with their eigenvalues. The
/// projected vectors are eigenvectors of the reduced matrix and span
/// `R^{N-p}` (complexified).
///
/// Defective matrices are refused here; see [`crate::exact`] for the exact
/// Jordan-chain path on small integer matrices.
pub fn project_eigenvectors(
    a: &Mat,
    partition: &GroupPartition,
    tol: &Tolerances,
) -> Result<Vec<(Complex64, DVector<Complex64>)>> {
    if !is_cp_compatible(a, partition, tol)? {
        return Err(Error::Precondition("A is not C_p-compatible".into()));
    }
    let n = partition.n();
    let norm = a.norm().max(1.0);
    let eigs = a.clone().complex_eigenvalues();
    if eigs.iter().any(|e| !e.re.is_finite() || !e.im.is_finite()) {
        return Err(Error::Numeric("eigenvalue computation failed".into()));
    }
    let cp = to_complex(&build_cp(partition));
    let ac = to_complex(a);
    let eye = DMatrix::<Complex64>::identity(n, n);
    let values: Vec<Complex64> = eigs.iter().cloned().collect();
    let mut out = Vec::new();
    let mut total_geometric = 0usize;
    for cluster in cluster_complex(&values, tol.residual_abs * norm) {
        let lambda = cluster.iter().map(|&i| values[i]).sum::<Complex64>()
            / Complex64::new(cluster.len() as f64, 0.0);
        let eigvecs = complex_kernel(&(&ac - &eye * lambda), tol);
        total_geometric += eigvecs.len();
        if eigvecs.len() < cluster.len() {
            return Err(Error::Unsupported(format!(
                "matrix is defective at eigenvalue {lambda}: geometric multiplicity {} < algebraic {}",
                eigvecs.len(),
                cluster.len()
            )));
        }
        if cp.nrows() == 0 || eigvecs.is_empty() {
            continue;
        }
        // Split the eigenspace against Ker(C_p): right singular vectors of
        // C_p Q with a nonzero singular value give the directions that
        // survive the projection (and stay linearly independent).
        let mut q = DMatrix::<Complex64>::zeros(n, eigvecs.len());
        for (j, v) in eigvecs.iter().enumerate() {
            q.set_column(j, v);
        }
        let cq = &cp * &q;
        let k = cq.ncols();
        let padded = if cq.nrows() < k {
            let mut p = DMatrix::<Complex64>::zeros(k, k);
            p.view_mut((0, 0), cq.shape()).copy_from(&cq);
            p
        } else {
            cq.clone()
        };
        let svd = padded.svd(false, true);
        let v_h = svd.v_t.expect("requested right singular vectors");
        let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
        sv.resize(k, 0.0);
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        // absolute floor: an eigenspace inside Ker(C_p) projects to pure
        // round-off noise, which must not count as a surviving direction
        let floor = (tol.rank_rel * smax).max(tol.residual_abs * cp.norm().max(1.0));
        for (j, &s) in sv.iter().enumerate() {
            if s > floor {
                let coeff = DVector::from_iterator(k, v_h.row(j).iter().map(|z| z.conj()));
                let x = &q * coeff;
                out.push((lambda, &cp * x));
            }
        }
    }
    if total_geometric < n {
        return Err(Error::Unsupported(
            "matrix is defective in floating point".into(),
        ));
    }
    Ok(out)
}

/// The system bundle `(A, B, D, partition)`.
#[derive(Debug, Clone)]
pub struct SyncProblem {
    pub a: Mat,
    pub b: Mat,
    pub d: Mat,
    pub partition: GroupPartition,
}

impl SyncProblem {
    /// Build and enforce the load-time invariants: `D` full column rank and
    /// `B` similar to a symmetric matrix.
    pub fn new(a: Mat, b: Mat, d: Mat, partition: GroupPartition, tol: &Tolerances) -> Result<Self> {
        let p = SyncProblem::new_unchecked(a, b, d, partition)?;
        if rank_of(&p.d, tol)? < p.d.ncols() {
            return Err(Error::Input("D must have full column rank".into()));
        }
        if !is_similar_to_symmetric(&p.b, tol)? {
            return Err(Error::Input(
                "B must be similar to a symmetric matrix".into(),
            ));
        }
        Ok(p)
    }

    /// Shape checks only; for exploratory runs that bypass the algebraic
    /// load-time invariants.
    pub fn new_unchecked(a: Mat, b: Mat, d: Mat, partition: GroupPartition) -> Result<Self> {
        let n = partition.n();
        if a.nrows() != n || a.ncols() != n || b.nrows() != n || b.ncols() != n {
            return Err(Error::Input(format!(
                "A and B must be square of order {n}"
            )));
        }
        if d.nrows() != n || d.ncols() == 0 || d.ncols() > n {
            return Err(Error::Input(format!(
                "D must be {n} x M with 1 <= M <= {n}"
            )));
        }
        Ok(SyncProblem { a, b, d, partition })
    }

    pub fn n(&self) -> usize {
        self.partition.n()
    }

    pub fn m(&self) -> usize {
        self.d.ncols()
    }
}

/// Aggregated algebraic report for one problem instance.
#[derive(Debug, Clone)]
pub struct SyncAnalysis {
    pub rank_r: usize,
    pub dim_ker_rt: usize,
    pub cp_compatible_a: bool,
    pub cp_compatible_b: bool,
    /// Present iff `cp_compatible_a`.
    pub reduced_a: Option<Mat>,
    /// Present iff `cp_compatible_b`.
    pub reduced_b: Option<Mat>,
    pub rank_cp_r: usize,
    /// Whether `Ker(R^T)` is bi-orthonormalizable against `Ker(C_p)`;
    /// meaningful only when `dim_ker_rt == p`.
    pub biorthonormal: bool,
    /// Bi-orthonormalized dual vectors `E_r` when `biorthonormal` holds.
    pub pinning_vectors: Option<Vec<DVector<f64>>>,
    /// The necessary condition `rank(R) >= N - p`.
    pub necessary_ok: bool,
    /// `Ker(R^T)` basis, for downstream consumers.
    pub ker_rt: SubspaceBasis,
}

/// Run the full algebraic battery on a problem.
pub fn analyze(problem: &SyncProblem, tol: &Tolerances) -> Result<SyncAnalysis> {
    let n = problem.n();
    let p = problem.partition.p();
    let report = word_span(&problem.a, &problem.b, &problem.d, tol)?;
    let cp_compatible_a = is_cp_compatible(&problem.a, &problem.partition, tol)?;
    let cp_compatible_b = is_cp_compatible(&problem.b, &problem.partition, tol)?;
    let reduced_a = if cp_compatible_a {
        Some(reduced_matrix(&problem.a, &problem.partition, tol)?)
    } else {
        None
    };
    let reduced_b = if cp_compatible_b {
        Some(reduced_matrix(&problem.b, &problem.partition, tol)?)
    } else {
        None
    };
    let cp = build_cp(&problem.partition);
    let rank_cp_r = match (&reduced_a, &reduced_b) {
        // R-bar = C_p R: the reduced word span realizes rank(C_p R)
        (Some(ra), Some(rb)) if n > p => {
            word_span(ra, rb, &(&cp * &problem.d), tol)?.rank_r
        }
        _ if n > p => rank_of(&(&cp * report.im_r.as_matrix()), tol)?,
        _ => 0,
    };
    let ker = ker_cp_vectors(&problem.partition);
    let (biorthonormal, pinning_vectors) = if report.ker_rt.dim() == p {
        match normalize_biorthonormal(&report.ker_rt, &ker.indicators, tol) {
            Ok(vs) => (true, Some(vs)),
            Err(Error::Precondition(_)) => (false, None),
            Err(e) => return Err(e),
        }
    } else {
        (false, None)
    };
    Ok(SyncAnalysis {
        rank_r: report.rank_r,
        dim_ker_rt: report.ker_rt.dim(),
        cp_compatible_a,
        cp_compatible_b,
        reduced_a,
        reduced_b,
        rank_cp_r,
        biorthonormal,
        pinning_vectors,
        necessary_ok: report.rank_r + p >= n,
        ker_rt: report.ker_rt,
    })
}
