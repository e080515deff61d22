//! Exact rational Jordan chains for small integer matrices.
//!
//! Numerical Jordan forms are ill-posed, so the floating-point path in
//! [`crate::syncalg::project_eigenvectors`] refuses defective matrices. This
//! module handles the defective case exactly, for integer matrices of order
//! at most 6 whose spectrum is rational (hence integer, by the rational root
//! theorem on the monic characteristic polynomial).

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::syncalg::{build_cp, GroupPartition};

pub const MAX_EXACT_ORDER: usize = 6;

type RMat = Vec<Vec<BigRational>>;
type RVec = Vec<BigRational>;

/// One Jordan chain: `A x_l = lambda x_l + x_{l+1}`, with `vectors[l+1] =
/// (A - lambda I) vectors[l]` and the last vector an eigenvector.
#[derive(Debug, Clone)]
pub struct RationalChain {
    pub eigenvalue: BigRational,
    pub vectors: Vec<RVec>,
}

impl RationalChain {
    pub fn length(&self) -> usize {
        self.vectors.len()
    }

    /// Chain vectors as f64 columns, for interop with the float path.
    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.vectors
            .iter()
            .map(|v| v.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect())
            .collect()
    }

    pub fn eigenvalue_f64(&self) -> f64 {
        self.eigenvalue.to_f64().unwrap_or(f64::NAN)
    }
}

fn big(i: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(i))
}

fn to_rational_matrix(a: &Mat) -> Result<RMat> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Input("matrix must be square".into()));
    }
    if n > MAX_EXACT_ORDER {
        return Err(Error::Unsupported(format!(
            "exact path supports order <= {MAX_EXACT_ORDER}, got {n}"
        )));
    }
    let mut out = vec![vec![BigRational::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let x = a[(i, j)];
            if !x.is_finite() || x.fract() != 0.0 || x.abs() > 1e15 {
                return Err(Error::Unsupported(format!(
                    "exact path requires small integer entries, got {x} at ({i}, {j})"
                )));
            }
            out[i][j] = big(x as i64);
        }
    }
    Ok(out)
}

fn rmat_mul(a: &RMat, b: &RMat) -> RMat {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    let mut out = vec![vec![BigRational::zero(); m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut acc = BigRational::zero();
            for l in 0..k {
                acc += &a[i][l] * &b[l][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

fn rmat_vec(a: &RMat, v: &RVec) -> RVec {
    a.iter()
        .map(|row| {
            row.iter()
                .zip(v)
                .fold(BigRational::zero(), |acc, (c, x)| acc + c * x)
        })
        .collect()
}

fn identity(n: usize) -> RMat {
    let mut m = vec![vec![BigRational::zero(); n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = BigRational::one();
    }
    m
}

/// Row-reduce in place; returns pivot columns.
fn rref(m: &mut RMat) -> Vec<usize> {
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(pr) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, pr);
        let inv = m[r][c].recip();
        for x in &mut m[r] {
            *x *= &inv;
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in 0..cols {
                    let sub = &f * &m[r][j];
                    m[i][j] -= sub;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

fn rank(m: &RMat) -> usize {
    let mut copy = m.clone();
    rref(&mut copy).len()
}

/// Exact kernel basis of `m` (vectors in R^cols).
fn kernel_basis(m: &RMat) -> Vec<RVec> {
    let cols = if m.is_empty() { 0 } else { m[0].len() };
    let mut red = m.clone();
    let pivots = rref(&mut red);
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    let mut out = Vec::new();
    for &fc in &free {
        let mut v = vec![BigRational::zero(); cols];
        v[fc] = BigRational::one();
        for (ri, &pc) in pivots.iter().enumerate() {
            v[pc] = -red[ri][fc].clone();
        }
        out.push(v);
    }
    out
}

/// Characteristic polynomial coefficients `c_0 + c_1 x + ... + x^n` via
/// Faddeev-LeVerrier.
fn char_poly(a: &RMat) -> Vec<BigRational> {
    let n = a.len();
    let mut coeffs = vec![BigRational::zero(); n + 1];
    coeffs[n] = BigRational::one();
    let mut m = identity(n);
    for k in 1..=n {
        let am = rmat_mul(a, &m);
        let trace: BigRational = (0..n).fold(BigRational::zero(), |acc, i| acc + &am[i][i]);
        let c = -trace / big(k as i64);
        coeffs[n - k] = c.clone();
        m = am;
        for i in 0..n {
            m[i][i] += &c;
        }
    }
    coeffs
}

fn eval_poly(coeffs: &[BigRational], x: &BigRational) -> BigRational {
    coeffs
        .iter()
        .rev()
        .fold(BigRational::zero(), |acc, c| acc * x + c)
}

/// Deflate `coeffs` by the root `r` (synthetic division); assumes exact root.
fn deflate(coeffs: &[BigRational], r: &BigRational) -> Vec<BigRational> {
    let n = coeffs.len() - 1;
    let mut out = vec![BigRational::zero(); n];
    let mut carry = coeffs[n].clone();
    for k in (0..n).rev() {
        out[k] = carry.clone();
        carry = &coeffs[k] + carry * r;
    }
    debug_assert!(carry.is_zero());
    out
}

/// Integer divisors of `c` (positive and negative), by trial division.
fn integer_divisors(c: &BigInt) -> Result<Vec<i64>> {
    let c = c
        .abs()
        .to_i64()
        .ok_or_else(|| Error::Unsupported("characteristic polynomial constant term too large".into()))?;
    let mut out = Vec::new();
    let mut d = 1i64;
    while d * d <= c {
        if c % d == 0 {
            out.push(d);
            out.push(-d);
            let q = c / d;
            if q != d {
                out.push(q);
                out.push(-q);
            }
        }
        d += 1;
    }
    Ok(out)
}

/// All eigenvalues with multiplicity, or an error if any eigenvalue is not a
/// rational (hence integer) number.
fn integer_spectrum(a: &RMat) -> Result<Vec<(BigRational, usize)>> {
    let mut coeffs = char_poly(a);
    let mut roots: Vec<BigRational> = Vec::new();
    while coeffs.len() > 1 {
        let root = if coeffs[0].is_zero() {
            Some(BigRational::zero())
        } else {
            let constant = coeffs[0].numer().clone();
            // leading coefficient is 1, so rational roots are integers
            integer_divisors(&constant)?
                .into_iter()
                .map(big)
                .find(|cand| eval_poly(&coeffs, cand).is_zero())
        };
        match root {
            Some(r) => {
                coeffs = deflate(&coeffs, &r);
                roots.push(r);
            }
            None => {
                return Err(Error::Unsupported(
                    "matrix has an irrational or complex eigenvalue; exact Jordan path applies only to integer spectra".into(),
                ))
            }
        }
    }
    let mut grouped: Vec<(BigRational, usize)> = Vec::new();
    for r in roots {
        match grouped.iter_mut().find(|(v, _)| *v == r) {
            Some((_, m)) => *m += 1,
            None => grouped.push((r, 1)),
        }
    }
    Ok(grouped)
}

/// Does `v` lie outside the span of `basis`?
fn independent_of(basis: &[RVec], v: &RVec) -> bool {
    if basis.is_empty() {
        return !v.iter().all(|x| x.is_zero());
    }
    let mut rows: RMat = basis.to_vec();
    let r0 = rank(&rows);
    rows.push(v.clone());
    rank(&rows) > r0
}

/// Jordan chains of an integer matrix, exact over the rationals.
pub fn jordan_chains_exact(a: &Mat) -> Result<Vec<RationalChain>> {
    let ra = to_rational_matrix(a)?;
    jordan_chains_integer(&ra)
}

/// Chain extraction for a rational matrix with integer entries.
fn jordan_chains_integer(ra: &RMat) -> Result<Vec<RationalChain>> {
    let n = ra.len();
    let spectrum = integer_spectrum(ra)?;
    let mut chains = Vec::new();
    for (lambda, alg_mult) in spectrum {
        let mut shifted = ra.clone();
        for i in 0..n {
            shifted[i][i] -= &lambda;
        }
        // generalized kernels K_1 subset K_2 subset ... until dim = alg_mult
        let mut powers = vec![shifted.clone()];
        let mut kernels = vec![kernel_basis(&shifted)];
        while kernels.last().unwrap().len() < alg_mult {
            let next = rmat_mul(powers.last().unwrap(), &shifted);
            kernels.push(kernel_basis(&next));
            powers.push(next);
        }
        let depth = kernels.len();
        // pick chain heads top-down: at level k, heads are vectors of K_k
        // independent of K_{k-1} plus the level-k tails of longer chains
        let mut lambda_chains: Vec<Vec<RVec>> = Vec::new();
        for k in (1..=depth).rev() {
            let mut occupied: Vec<RVec> = if k >= 2 {
                kernels[k - 2].clone()
            } else {
                Vec::new()
            };
            for c in &lambda_chains {
                // element of an existing chain lying in K_k \ K_{k-1}
                if c.len() >= k {
                    occupied.push(c[c.len() - k].clone());
                }
            }
            let want = kernels[k - 1].len()
                - if k >= 2 { kernels[k - 2].len() } else { 0 };
            let have = lambda_chains.iter().filter(|c| c.len() >= k).count();
            let mut needed = want.saturating_sub(have);
            for cand in &kernels[k - 1] {
                if needed == 0 {
                    break;
                }
                if independent_of(&occupied, cand) {
                    let mut chain = vec![cand.clone()];
                    for _ in 1..k {
                        chain.push(rmat_vec(&shifted, chain.last().unwrap()));
                    }
                    occupied.push(cand.clone());
                    lambda_chains.push(chain);
                    needed -= 1;
                }
            }
            if needed > 0 {
                return Err(Error::Numeric(
                    "failed to complete a Jordan chain basis".into(),
                ));
            }
        }
        for vectors in lambda_chains {
            chains.push(RationalChain {
                eigenvalue: lambda.clone(),
                vectors,
            });
        }
    }
    Ok(chains)
}

/// Project Jordan chains by `C_p`: vanished suffixes and fully vanished
/// chains are dropped.
///
/// When the supplied root system is adapted to `Ker(C_p)` — the chain
/// vectors lying in the kernel are chain suffixes and together span it —
/// the projected prefixes form a complete root system of the reduced
/// matrix, with exactly `N - p` vectors. For an arbitrary root system the
/// projections still satisfy the chain relation but may be linearly
/// dependent; use [`reduced_chains_exact`] for a complete system without
/// hand-picking an adapted basis.
pub fn project_chains_exact(
    chains: &[RationalChain],
    partition: &GroupPartition,
) -> Vec<RationalChain> {
    let cp = build_cp(partition);
    let cp_rat: RMat = (0..cp.nrows())
        .map(|i| (0..cp.ncols()).map(|j| big(cp[(i, j)] as i64)).collect())
        .collect();
    let mut out = Vec::new();
    for chain in chains {
        let mut projected: Vec<RVec> = chain
            .vectors
            .iter()
            .map(|v| {
                if cp_rat.is_empty() {
                    Vec::new()
                } else {
                    rmat_vec(&cp_rat, v)
                }
            })
            .collect();
        while matches!(projected.last(), Some(v) if v.iter().all(|x| x.is_zero())) {
            projected.pop();
        }
        if !projected.is_empty() {
            out.push(RationalChain {
                eigenvalue: chain.eigenvalue.clone(),
                vectors: projected,
            });
        }
    }
    out
}

fn rmat_transpose(m: &RMat) -> RMat {
    if m.is_empty() {
        return Vec::new();
    }
    let (rows, cols) = (m.len(), m[0].len());
    (0..cols)
        .map(|j| (0..rows).map(|i| m[i][j].clone()).collect())
        .collect()
}

/// Exact inverse by Gauss-Jordan on the augmented matrix.
fn rmat_inverse(m: &RMat) -> Result<RMat> {
    let n = m.len();
    let mut aug: RMat = (0..n)
        .map(|i| {
            let mut row = m[i].clone();
            for j in 0..n {
                row.push(if i == j { big(1) } else { big(0) });
            }
            row
        })
        .collect();
    let pivots = rref(&mut aug);
    if pivots.len() < n || pivots.iter().any(|&p| p >= n) {
        return Err(Error::Precondition("matrix is singular".into()));
    }
    Ok((0..n).map(|i| aug[i][n..].to_vec()).collect())
}

fn cp_rational(partition: &GroupPartition) -> RMat {
    let cp = build_cp(partition);
    (0..cp.nrows())
        .map(|i| (0..cp.ncols()).map(|j| big(cp[(i, j)] as i64)).collect())
        .collect()
}

/// Exact reduced matrix `C_p A C_p^T (C_p C_p^T)^{-1}` over the rationals.
/// Errors when `A` does not leave `Ker(C_p)` invariant (the reduction is
/// only defined for compatible matrices).
pub fn reduced_matrix_exact(a: &Mat, partition: &GroupPartition) -> Result<RMat> {
    let ra = to_rational_matrix(a)?;
    let n = ra.len();
    if n != partition.n() {
        return Err(Error::Input("partition size does not match matrix".into()));
    }
    let cp = cp_rational(partition);
    if cp.is_empty() {
        return Ok(Vec::new());
    }
    // exact compatibility: C_p A e_r = 0 for every group indicator e_r
    for r in 0..partition.p() {
        let mut ind = vec![big(0); n];
        for i in partition.group(r) {
            ind[i] = big(1);
        }
        let a_ind = rmat_vec(&ra, &ind);
        if !rmat_vec(&cp, &a_ind).iter().all(|x| x.is_zero()) {
            return Err(Error::Precondition(
                "matrix does not leave the group-indicator subspace invariant".into(),
            ));
        }
    }
    let cpt = rmat_transpose(&cp);
    let gram_inv = rmat_inverse(&rmat_mul(&cp, &cpt))?;
    Ok(rmat_mul(&rmat_mul(&rmat_mul(&cp, &ra), &cpt), &gram_inv))
}

/// Complete root system of the exact reduced matrix: the quotient-side
/// object that projecting an adapted root system of `A` produces. The
/// reduced matrix is rational, so it is rescaled by the common denominator
/// `l` to an integer matrix; a chain `x` of `l A-bar` at eigenvalue `mu`
/// descends to the chain `y_l = x_l / l^l` of `A-bar` at `mu / l`.
pub fn reduced_chains_exact(
    a: &Mat,
    partition: &GroupPartition,
) -> Result<Vec<RationalChain>> {
    let reduced = reduced_matrix_exact(a, partition)?;
    if reduced.is_empty() {
        return Ok(Vec::new());
    }
    let mut scale = BigInt::one();
    for row in &reduced {
        for x in row {
            scale = num_integer::lcm(scale, x.denom().clone());
        }
    }
    let scale_rat = BigRational::from_integer(scale.clone());
    let scaled: RMat = reduced
        .iter()
        .map(|row| row.iter().map(|x| x * &scale_rat).collect())
        .collect();
    let chains = jordan_chains_integer(&scaled)?;
    Ok(chains
        .into_iter()
        .map(|c| {
            let mut factor = scale_rat.clone();
            let vectors = c
                .vectors
                .into_iter()
                .map(|v| {
                    let out: RVec = v.iter().map(|x| x / &factor).collect();
                    factor *= &scale_rat;
                    out
                })
                .collect();
            RationalChain {
                eigenvalue: c.eigenvalue / &scale_rat,
                vectors,
            }
        })
        .collect())
}
