//! Small dense linear algebra helpers: SVD rank, orthonormal bases,
//! incremental Gram–Schmidt, and the principal matrix logarithm.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Numerical rank with a relative singular-value threshold.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        None => 0,
        Some(0.0) => 0,
        Some(&top) => s.iter().filter(|&&v| v > rel_tol * top).count(),
    }
}

/// Orthonormal basis (columns) of the column span of `m`.
pub fn column_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let rows = m.nrows();
    if m.ncols() == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let top = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| top > 0.0 && svd.singular_values[i] > rel_tol * top)
        .collect();
    let mut out = DMatrix::zeros(rows, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        out.set_column(c, &u.column(i));
    }
    out
}

/// Orthonormal basis of the null space of `m` (right singular vectors).
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let cols = m.ncols();
    // pad to square so the SVD returns a full V
    let mut padded = DMatrix::zeros(m.nrows().max(cols), cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let top = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| top == 0.0 || svd.singular_values[i] <= rel_tol * top)
        .collect();
    let mut out = DMatrix::zeros(cols, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        out.set_column(c, &vt.row(i).transpose());
    }
    out
}

/// Incremental orthonormal basis with a relative residual test.
#[derive(Clone, Debug, Default)]
pub struct GramSchmidt {
    basis: Vec<DVector<f64>>,
}

impl GramSchmidt {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.basis
    }

    /// Component of `v` orthogonal to the current span (two passes).
    pub fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut r = v.clone();
        for _ in 0..2 {
            for b in &self.basis {
                let p = b.dot(&r);
                r.axpy(-p, b, 1.0);
            }
        }
        r
    }

    /// Adds `v` if its residual exceeds `rel_tol * scale`; returns whether it grew.
    pub fn try_add(&mut self, v: &DVector<f64>, scale: f64, rel_tol: f64) -> bool {
        let r = self.residual(v);
        let rn = r.norm();
        if rn > rel_tol * scale && rn > 0.0 {
            self.basis.push(r / rn);
            true
        } else {
            false
        }
    }

    pub fn to_matrix(&self, rows: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows, self.basis.len());
        for (i, b) in self.basis.iter().enumerate() {
            m.set_column(i, b);
        }
        m
    }
}

fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::numeric("singular matrix in matrix function"))
}

/// Principal square root via the Denman–Beavers iteration.
pub fn sqrtm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::identity(n, n);
    for _ in 0..100 {
        let yi = inverse(&y)?;
        let zi = inverse(&z)?;
        let ny = (&y + zi) * 0.5;
        let nz = (&z + yi) * 0.5;
        let delta = max_abs(&(&ny - &y));
        y = ny;
        z = nz;
        if delta <= 1e-15 * max_abs(&y).max(1.0) {
            return Ok(y);
        }
    }
    Err(Error::numeric("square-root iteration did not converge"))
}

// 8-point Gauss–Legendre on [-1, 1]
const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Principal logarithm by inverse scaling and squaring with a degree-8
/// diagonal Padé approximant (Gauss–Legendre form of `log(I + X)`).
pub fn logm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::arg("logm needs a square matrix"));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let mut m = a.clone();
    let mut squarings = 0u32;
    while (&m - &id).lp_norm(1) > 0.25 {
        m = sqrtm(&m)?;
        squarings += 1;
        if squarings > 60 {
            return Err(Error::numeric("logm: matrix too far from identity"));
        }
    }
    let x = &m - &id;
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for (&node, &w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        for sign in [-1.0, 1.0] {
            let t = 0.5 * (1.0 + sign * node);
            let lhs = &id + &x * t;
            let sol = lhs
                .lu()
                .solve(&x)
                .ok_or_else(|| Error::numeric("logm: singular Padé denominator"))?;
            acc += sol * (0.5 * w);
        }
    }
    Ok(acc * 2f64.powi(squarings as i32))
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.lp_norm(1);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.5 {
        s += 1;
    }
    let b = a / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=20 {
        term = &term * &b / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}
