//! Tolerance-aware dense linear algebra primitives.
//!
//! Every algebraic decision in the toolkit (ranks, kernels, invariant
//! subspaces, similarity to a symmetric matrix) goes through this module so
//! that all thresholds live in one place, [`Tolerances`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense real matrix, the carrier for `A`, `B`, `D`, `C_p` and everything
/// derived from them.
pub type Mat = DMatrix<f64>;

/// Orthonormality tolerance baked into [`SubspaceBasis`] validation.
pub const TOL_ORTH: f64 = 1e-10;

/// Numerical thresholds for rank and residual decisions.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Relative singular-value cutoff: a singular value counts toward the
    /// rank iff it exceeds `rank_rel * sigma_max`.
    pub rank_rel: f64,
    /// Absolute residual bound for kernel/projection checks.
    pub residual_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank_rel: 1e-10,
            residual_abs: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rank_rel", self.rank_rel), ("residual_abs", self.residual_abs)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Input(format!(
                    "tolerance {name} must lie in (0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Orthonormal spanning set of a subspace of `R^ambient`.
///
/// The empty list encodes the zero subspace; zero-dimensional subspaces are
/// first-class values, not errors.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    ambient: usize,
    vectors: Vec<DVector<f64>>,
}

impl SubspaceBasis {
    /// Wrap already-orthonormal vectors, validating orthonormality to
    /// [`TOL_ORTH`].
    pub fn new(ambient: usize, vectors: Vec<DVector<f64>>) -> Result<Self> {
        if vectors.len() > ambient {
            return Err(Error::Input(format!(
                "{} basis vectors exceed ambient dimension {}",
                vectors.len(),
                ambient
            )));
        }
        for v in &vectors {
            if v.len() != ambient {
                return Err(Error::Input(format!(
                    "basis vector of length {} in ambient dimension {}",
                    v.len(),
                    ambient
                )));
            }
        }
        for i in 0..vectors.len() {
            for j in i..vectors.len() {
                let dot = vectors[i].dot(&vectors[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > TOL_ORTH {
                    return Err(Error::Input(format!(
                        "basis not orthonormal: <v{i}, v{j}> = {dot}"
                    )));
                }
            }
        }
        Ok(SubspaceBasis { ambient, vectors })
    }

    /// The zero subspace of `R^ambient`.
    pub fn zero(ambient: usize) -> Self {
        SubspaceBasis {
            ambient,
            vectors: Vec::new(),
        }
    }

    /// The full space `R^ambient` with the canonical basis.
    pub fn full(ambient: usize) -> Self {
        let vectors = (0..ambient)
            .map(|i| {
                let mut v = DVector::zeros(ambient);
                v[i] = 1.0;
                v
            })
            .collect();
        SubspaceBasis { ambient, vectors }
    }

    /// Orthonormalize an arbitrary spanning set (columns of `m`).
    pub fn from_spanning(m: &Mat, tol: &Tolerances) -> Result<Self> {
        col_space(m, tol)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_zero(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    /// Basis vectors as columns of an `ambient x dim` matrix.
    pub fn as_matrix(&self) -> Mat {
        let mut m = Mat::zeros(self.ambient, self.vectors.len());
        for (j, v) in self.vectors.iter().enumerate() {
            m.set_column(j, v);
        }
        m
    }

    /// Orthogonal projector onto the subspace (`ambient x ambient`).
    pub fn projector(&self) -> Mat {
        let q = self.as_matrix();
        &q * q.transpose()
    }

    /// Distance of `v` from the subspace, `|| (I - P) v ||`.
    pub fn residual_of(&self, v: &DVector<f64>) -> f64 {
        let mut r = v.clone();
        for b in &self.vectors {
            let c = b.dot(v);
            r -= b * c;
        }
        r.norm()
    }

    /// Largest principal angle (in terms of its sine) between two subspaces of
    /// equal dimension; returns `None` on a dimension mismatch.
    pub fn max_principal_angle_sin(&self, other: &SubspaceBasis) -> Option<f64> {
        if self.ambient != other.ambient || self.dim() != other.dim() {
            return None;
        }
        if self.dim() == 0 {
            return Some(0.0);
        }
        // sin(theta_max) = || (I - P_other) Q_self ||_2
        let q = self.as_matrix();
        let diff = &q - other.projector() * &q;
        let svd = diff.svd(false, false);
        Some(svd.singular_values.iter().cloned().fold(0.0, f64::max))
    }
}

fn ensure_finite(m: &Mat) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    Ok(())
}

fn ensure_well_formed(m: &Mat) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Input("matrix must have at least one row and column".into()));
    }
    ensure_finite(m)
}

/// Canonical sign: first component of magnitude above `1e-12 * ||v||_inf`
/// is made non-negative. Keeps output files reproducible.
fn canonical_sign(v: &mut DVector<f64>) {
    let amax = v.amax();
    if amax == 0.0 {
        return;
    }
    let thresh = 1e-12 * amax;
    for i in 0..v.len() {
        if v[i].abs() > thresh {
            if v[i] < 0.0 {
                *v *= -1.0;
            }
            return;
        }
    }
}

/// Number of singular values above `rank_rel * sigma_max`; 0 for the zero
/// matrix.
pub fn rank_of(m: &Mat, tol: &Tolerances) -> Result<usize> {
    ensure_well_formed(m)?;
    tol.validate()?;
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(svd
        .singular_values
        .iter()
        .filter(|&&s| s > tol.rank_rel * smax)
        .count())
}

/// Rank of a complex matrix with the same relative cutoff.
pub fn rank_of_complex(m: &DMatrix<Complex64>, tol: &Tolerances) -> Result<usize> {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(svd
        .singular_values
        .iter()
        .filter(|&&s| s > tol.rank_rel * smax)
        .count())
}

/// Full SVD of `m` with all `cols` right singular vectors available.
///
/// nalgebra's thin SVD drops the kernel directions of a wide matrix, so pad
/// with zero rows first; singular values and right vectors are unchanged.
fn full_right_svd(m: &Mat) -> (Vec<f64>, Mat) {
    let (rows, cols) = m.shape();
    let padded = if rows < cols {
        let mut p = Mat::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    sv.resize(cols, 0.0);
    (sv, v_t.transpose())
}

/// Orthonormal basis of `{ x : m x = 0 }` (the right null space).
pub fn right_kernel(m: &Mat, tol: &Tolerances) -> Result<SubspaceBasis> {
    ensure_well_formed(m)?;
    tol.validate()?;
    let (sv, v) = full_right_svd(m);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let mut vectors = Vec::new();
    for (j, &s) in sv.iter().enumerate() {
        if smax == 0.0 || s <= tol.rank_rel * smax {
            let mut col = DVector::from_column_slice(v.column(j).as_slice());
            canonical_sign(&mut col);
            vectors.push(col);
        }
    }
    SubspaceBasis::new(m.ncols(), vectors)
}

/// Orthonormal basis of the column span of `m`.
pub fn col_space(m: &Mat, tol: &Tolerances) -> Result<SubspaceBasis> {
    ensure_finite(m)?;
    tol.validate()?;
    if m.ncols() == 0 {
        return Ok(SubspaceBasis::zero(m.nrows()));
    }
    // Pad with zero columns so the thin SVD keeps all left singular vectors
    // that can carry a nonzero singular value.
    let (rows, cols) = m.shape();
    let padded = if cols < rows {
        let mut p = Mat::zeros(rows, rows);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(true, false);
    let u = svd.u.expect("requested left singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut vectors = Vec::new();
    if smax > 0.0 {
        for (j, &s) in svd.singular_values.iter().enumerate() {
            if s > tol.rank_rel * smax {
                let mut col = DVector::from_column_slice(u.column(j).as_slice());
                canonical_sign(&mut col);
                vectors.push(col);
            }
        }
    }
    SubspaceBasis::new(rows, vectors)
}

/// Orthogonal complement within the ambient space.
pub fn orth_complement(b: &SubspaceBasis, tol: &Tolerances) -> Result<SubspaceBasis> {
    if b.is_zero() {
        return Ok(SubspaceBasis::full(b.ambient_dim()));
    }
    if b.dim() == b.ambient_dim() {
        return Ok(SubspaceBasis::zero(b.ambient_dim()));
    }
    right_kernel(&b.as_matrix().transpose(), tol)
}

/// Intersection of two subspaces, via the kernel of the stacked projections
/// onto the complements.
pub fn intersect(a: &SubspaceBasis, b: &SubspaceBasis, tol: &Tolerances) -> Result<SubspaceBasis> {
    let n = a.ambient_dim();
    if n != b.ambient_dim() {
        return Err(Error::Input(format!(
            "ambient dimension mismatch: {} vs {}",
            n,
            b.ambient_dim()
        )));
    }
    if a.is_zero() || b.is_zero() {
        return Ok(SubspaceBasis::zero(n));
    }
    let eye = Mat::identity(n, n);
    let qa = &eye - a.projector();
    let qb = &eye - b.projector();
    let mut stacked = Mat::zeros(2 * n, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(&qa);
    stacked.view_mut((n, 0), (n, n)).copy_from(&qb);
    right_kernel(&stacked, tol)
}

/// Cluster sorted values where the gap between neighbors is at most `gap`.
fn cluster_indices(values: &[f64], gap: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for idx in order {
        match clusters.last_mut() {
            Some(c) if (values[idx] - values[*c.last().unwrap()]).abs() <= gap => c.push(idx),
            _ => clusters.push(vec![idx]),
        }
    }
    clusters
}

/// True iff all eigenvalues of `m` are real (to `residual_abs * ||m||`) and
/// `m` is diagonalizable: for every clustered eigenvalue the geometric
/// multiplicity matches the algebraic one.
pub fn is_similar_to_symmetric(m: &Mat, tol: &Tolerances) -> Result<bool> {
    ensure_well_formed(m)?;
    tol.validate()?;
    if m.nrows() != m.ncols() {
        return Err(Error::Input("matrix must be square".into()));
    }
    let n = m.nrows();
    let norm = m.norm().max(1.0);
    let eigs = m.clone().complex_eigenvalues();
    if eigs.iter().any(|e| !e.re.is_finite() || !e.im.is_finite()) {
        return Err(Error::Numeric("eigenvalue computation failed".into()));
    }
    let imag_bound = tol.residual_abs * norm;
    if eigs.iter().any(|e| e.im.abs() > imag_bound) {
        return Ok(false);
    }
    let reals: Vec<f64> = eigs.iter().map(|e| e.re).collect();
    let gap = tol.residual_abs * norm;
    for cluster in cluster_indices(&reals, gap) {
        let algebraic = cluster.len();
        if algebraic == 1 {
            continue;
        }
        let lambda: f64 = cluster.iter().map(|&i| reals[i]).sum::<f64>() / algebraic as f64;
        let shifted = m - Mat::identity(n, n) * lambda;
        let geometric = n - rank_of(&shifted, tol)?;
        if geometric < algebraic {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn rank_identity() {
        let m = Mat::identity(3, 3);
        assert_eq!(rank_of(&m, &tol()).unwrap(), 3);
    }

    #[test]
    fn rank_zero_matrix() {
        let m = Mat::zeros(2, 2);
        assert_eq!(rank_of(&m, &tol()).unwrap(), 0);
    }

    #[test]
    fn rank_proportional_rows() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(rank_of(&m, &tol()).unwrap(), 1);
    }

    #[test]
    fn rank_rejects_nan() {
        let m = Mat::from_row_slice(1, 2, &[f64::NAN, 0.0]);
        assert!(matches!(rank_of(&m, &tol()), Err(Error::Input(_))));
    }

    #[test]
    fn kernel_of_difference_row() {
        // Ker(C_1) for N = 2 is spanned by (1, 1)/sqrt(2).
        let m = Mat::from_row_slice(1, 2, &[1.0, -1.0]);
        let k = right_kernel(&m, &tol()).unwrap();
        assert_eq!(k.dim(), 1);
        let v = &k.vectors()[0];
        assert_abs_diff_eq!(v[0], 1.0 / 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 1.0 / 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn kernel_of_identity_is_zero() {
        let k = right_kernel(&Mat::identity(2, 2), &tol()).unwrap();
        assert!(k.is_zero());
    }

    #[test]
    fn kernel_of_zero_is_full() {
        let k = right_kernel(&Mat::zeros(1, 3), &tol()).unwrap();
        assert_eq!(k.dim(), 3);
    }

    #[test]
    fn complement_in_dim2() {
        let v = DVector::from_vec(vec![1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()]);
        let b = SubspaceBasis::new(2, vec![v]).unwrap();
        let c = orth_complement(&b, &tol()).unwrap();
        assert_eq!(c.dim(), 1);
        let w = &c.vectors()[0];
        assert_abs_diff_eq!(w[0] + w[1], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn complement_of_zero_and_full() {
        let z = SubspaceBasis::zero(3);
        assert_eq!(orth_complement(&z, &tol()).unwrap().dim(), 3);
        let f = SubspaceBasis::full(2);
        assert_eq!(orth_complement(&f, &tol()).unwrap().dim(), 0);
    }

    #[test]
    fn intersect_coordinate_planes() {
        let e = SubspaceBasis::full(3);
        let a = SubspaceBasis::new(3, vec![e.vectors()[0].clone(), e.vectors()[1].clone()]).unwrap();
        let b = SubspaceBasis::new(3, vec![e.vectors()[1].clone(), e.vectors()[2].clone()]).unwrap();
        let c = intersect(&a, &b, &tol()).unwrap();
        assert_eq!(c.dim(), 1);
        assert!(c.residual_of(&e.vectors()[1]) < 1e-9);
    }

    #[test]
    fn intersect_self_and_zero() {
        let e = SubspaceBasis::full(3);
        let x = SubspaceBasis::new(3, vec![e.vectors()[0].clone()]).unwrap();
        assert_eq!(intersect(&x, &x, &tol()).unwrap().dim(), 1);
        assert_eq!(intersect(&x, &SubspaceBasis::zero(3), &tol()).unwrap().dim(), 0);
    }

    #[test]
    fn intersect_ambient_mismatch_is_error() {
        let a = SubspaceBasis::zero(2);
        let b = SubspaceBasis::zero(3);
        assert!(intersect(&a, &b, &tol()).is_err());
    }

    #[test]
    fn symmetric_is_similar_to_symmetric() {
        let m = Mat::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        assert!(is_similar_to_symmetric(&m, &tol()).unwrap());
    }

    #[test]
    fn jordan_block_is_not() {
        let m = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(!is_similar_to_symmetric(&m, &tol()).unwrap());
    }

    #[test]
    fn diagonal_is_similar_to_symmetric() {
        let m = Mat::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        assert!(is_similar_to_symmetric(&m, &tol()).unwrap());
    }

    #[test]
    fn rotation_has_complex_spectrum() {
        let m = Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(!is_similar_to_symmetric(&m, &tol()).unwrap());
    }
}
