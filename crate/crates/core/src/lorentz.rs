//! Bilinear forms `<x, y>_{n;c}`, the Lie algebras `g_c(n)` of the
//! groups preserving them, bracket closure and invariant-subspace search.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{require_nonzero_c, Error, Result};
use crate::linalg::{self, GramSchmidt};

/// Default relative singular-value threshold for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
/// Generators with Frobenius norm at or below this are treated as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;
/// Number of seeded random vectors used by the invariant-subspace search.
pub const RANDOM_SEEDS: usize = 16;

const SEARCH_SEED: u64 = 0x5_EED0_F1A7;

/// `<x,y>_{n;c} = sum_{i<=n} x_i y_i + x_{n+1} y_{n+1} / c` on R^{n+1}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BilinearForm {
    n: usize,
    c: f64,
}

impl BilinearForm {
    pub fn new(n: usize, c: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("form dimension n must be at least 1"));
        }
        require_nonzero_c(c)?;
        Ok(Self { n, c })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Size of the ambient space, n + 1.
    pub fn size(&self) -> usize {
        self.n + 1
    }

    pub fn is_lorentzian(&self) -> bool {
        self.c < 0.0
    }

    /// dim g_c(n) = n(n+1)/2.
    pub fn algebra_dim(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    /// J = diag(1, ..., 1, 1/c).
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut j = DMatrix::identity(self.size(), self.size());
        j[(self.n, self.n)] = 1.0 / self.c;
        j
    }

    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        form_eval(x, y, self)
    }

    fn check_vec(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.size() {
            return Err(Error::arg(format!(
                "vector of length {} does not match form of size {}",
                v.len(),
                self.size()
            )));
        }
        Ok(())
    }

    /// Standard basis of g_c(n): rotations `E_ij - E_ji` and the
    /// last-coordinate generators `E_in - c E_ni`.
    pub fn algebra_basis(&self) -> Vec<AlgebraElement> {
        let m = self.size();
        let mut out = Vec::with_capacity(self.algebra_dim());
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let mut a = DMatrix::zeros(m, m);
                a[(i, j)] = 1.0;
                a[(j, i)] = -1.0;
                out.push(AlgebraElement { mat: a, form: *self });
            }
        }
        for i in 0..self.n {
            out.push(AlgebraElement {
                mat: self.last_generator(i),
                form: *self,
            });
        }
        out
    }

    fn last_generator(&self, i: usize) -> DMatrix<f64> {
        let m = self.size();
        let mut a = DMatrix::zeros(m, m);
        a[(i, self.n)] = 1.0;
        a[(self.n, i)] = -self.c;
        a
    }

    /// Signature (positive, negative, null) of the form restricted to a subspace.
    pub fn restricted_signature(&self, v: &SubspaceBasis, tol: f64) -> (usize, usize, usize) {
        let gram = v.vectors.transpose() * self.matrix() * &v.vectors;
        let gram = (&gram + gram.transpose()) * 0.5;
        let eig = gram.symmetric_eigenvalues();
        let scale = eig.iter().fold(0.0_f64, |a, &b| a.max(b.abs())).max(1e-300);
        let mut sig = (0, 0, 0);
        for &e in eig.iter() {
            if e > tol * scale {
                sig.0 += 1;
            } else if e < -tol * scale {
                sig.1 += 1;
            } else {
                sig.2 += 1;
            }
        }
        sig
    }
}

pub fn form_eval(x: &DVector<f64>, y: &DVector<f64>, form: &BilinearForm) -> Result<f64> {
    form.check_vec(x)?;
    form.check_vec(y)?;
    let n = form.n;
    let head: f64 = (0..n).map(|i| x[i] * y[i]).sum();
    Ok(head + x[n] * y[n] / form.c)
}

/// `true` iff `max |mat^T J + J mat| <= tol`.
pub fn algebra_membership(mat: &DMatrix<f64>, form: &BilinearForm, tol: f64) -> Result<bool> {
    Ok(membership_residual(mat, form)? <= tol)
}

pub fn membership_residual(mat: &DMatrix<f64>, form: &BilinearForm) -> Result<f64> {
    let m = form.size();
    if mat.nrows() != m || mat.ncols() != m {
        return Err(Error::arg(format!(
            "matrix is {}x{}, expected {m}x{m}",
            mat.nrows(),
            mat.ncols()
        )));
    }
    let j = form.matrix();
    Ok(linalg::max_abs(&(mat.transpose() * &j + &j * mat)))
}

/// An element of g_c(n).
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    pub mat: DMatrix<f64>,
    pub form: BilinearForm,
}

impl AlgebraElement {
    /// Wraps `mat` after checking membership at `tol`.
    pub fn new(mat: DMatrix<f64>, form: BilinearForm, tol: f64) -> Result<Self> {
        let r = membership_residual(&mat, &form)?;
        if r > tol {
            return Err(Error::arg(format!(
                "matrix is not in g_c(n): residual {r:e} exceeds {tol:e}"
            )));
        }
        Ok(Self { mat, form })
    }

    /// Projects an (almost) member onto g_c(n): `(M - J^{-1} M^T J) / 2`.
    pub fn project(mat: &DMatrix<f64>, form: BilinearForm) -> Self {
        let j = form.matrix();
        let jinv = j.clone().try_inverse().expect("J invertible");
        let mat = (mat - jinv * mat.transpose() * j) * 0.5;
        Self { mat, form }
    }

    pub fn zero(form: BilinearForm) -> Self {
        Self {
            mat: DMatrix::zeros(form.size(), form.size()),
            form,
        }
    }

    pub fn norm(&self) -> f64 {
        self.mat.norm()
    }

    fn flat(&self) -> DVector<f64> {
        let m = self.mat.nrows();
        DVector::from_iterator(m * m, self.mat.transpose().iter().copied())
    }

    fn from_flat(v: &DVector<f64>, form: BilinearForm) -> Self {
        let m = form.size();
        Self {
            mat: DMatrix::from_row_slice(m, m, v.as_slice()),
            form,
        }
    }
}

pub fn bracket(a: &AlgebraElement, b: &AlgebraElement) -> Result<AlgebraElement> {
    if a.form != b.form {
        return Err(Error::arg("bracket of elements from different algebras"));
    }
    Ok(AlgebraElement {
        mat: &a.mat * &b.mat - &b.mat * &a.mat,
        form: a.form,
    })
}

#[derive(Clone, Debug)]
pub struct LieClosure {
    /// Frobenius-orthonormal basis of the generated algebra.
    pub basis: Vec<AlgebraElement>,
    pub dim: usize,
    pub rounds: usize,
}

pub fn lie_closure(generators: &[AlgebraElement], tol: f64) -> Result<LieClosure> {
    lie_closure_with(generators, tol, DEFAULT_ZERO_TOL)
}

/// Smallest bracket-closed subspace containing `generators`.
///
/// Generators are added with a residual test relative to their own norm;
/// brackets of orthonormal basis elements are tested against unit scale.
pub fn lie_closure_with(
    generators: &[AlgebraElement],
    tol: f64,
    zero_tol: f64,
) -> Result<LieClosure> {
    let Some(first) = generators.first() else {
        return Ok(LieClosure {
            basis: Vec::new(),
            dim: 0,
            rounds: 0,
        });
    };
    let form = first.form;
    if generators.iter().any(|g| g.form != form) {
        return Err(Error::arg("generators belong to different algebras"));
    }
    let cap = form.algebra_dim();
    let mut gs = GramSchmidt::new();
    for g in generators {
        let norm = g.norm();
        if norm > zero_tol && gs.len() < cap {
            gs.try_add(&g.flat(), norm, tol);
        }
    }
    let mut rounds = 0;
    let mut done_upto = 0;
    while rounds < cap && gs.len() < cap {
        rounds += 1;
        let current: Vec<AlgebraElement> = gs
            .vectors()
            .iter()
            .map(|v| AlgebraElement::from_flat(v, form))
            .collect();
        let mut grew = false;
        for i in 0..current.len() {
            for j in (i + 1)..current.len() {
                if j < done_upto {
                    continue;
                }
                if gs.len() >= cap {
                    break;
                }
                let b = bracket(&current[i], &current[j])?;
                if gs.try_add(&b.flat(), 1.0, tol) {
                    grew = true;
                }
            }
        }
        done_upto = current.len();
        if !grew {
            break;
        }
    }
    let basis: Vec<AlgebraElement> = gs
        .vectors()
        .iter()
        .map(|v| AlgebraElement::project(&AlgebraElement::from_flat(v, form).mat, form))
        .collect();
    Ok(LieClosure {
        dim: basis.len(),
        basis,
        rounds,
    })
}

/// Linearly independent vectors spanning a subspace of R^{n+1}.
#[derive(Clone, Debug, Serialize)]
pub struct SubspaceBasis {
    /// Columns are Euclidean-orthonormal.
    #[serde(serialize_with = "crate::serial::columns")]
    pub vectors: DMatrix<f64>,
    pub tol: f64,
}

impl SubspaceBasis {
    /// Builds an orthonormal basis of the column span, rejecting dependent input.
    pub fn new(vectors: DMatrix<f64>, tol: f64) -> Result<Self> {
        let k = vectors.ncols();
        let r = linalg::rank(&vectors, tol);
        if r != k {
            return Err(Error::arg(format!(
                "{k} vectors are not independent at tolerance {tol:e} (rank {r})"
            )));
        }
        Ok(Self {
            vectors: linalg::column_basis(&vectors, tol),
            tol,
        })
    }

    pub fn from_columns(cols: &[DVector<f64>], tol: f64) -> Result<Self> {
        let rows = cols.first().map(|c| c.len()).unwrap_or(0);
        let mut m = DMatrix::zeros(rows, cols.len());
        for (i, c) in cols.iter().enumerate() {
            m.set_column(i, c);
        }
        Self::new(m, tol)
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn ambient(&self) -> usize {
        self.vectors.nrows()
    }

    /// Euclidean residual of `v` after orthogonal projection onto the span.
    pub fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        let p = &self.vectors * (self.vectors.transpose() * v);
        v - p
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        self.residual(v).norm() <= tol * v.norm().max(f64::MIN_POSITIVE)
    }

    pub fn same_as(&self, other: &SubspaceBasis, tol: f64) -> bool {
        self.dim() == other.dim()
            && (0..other.dim()).all(|i| self.contains(&other.vectors.column(i).into_owned(), tol))
    }

    /// The h-orthogonal complement `{w : <v, w> = 0 for all v in V}`.
    pub fn h_orthogonal(&self, form: &BilinearForm) -> SubspaceBasis {
        let constraint = self.vectors.transpose() * form.matrix();
        let ns = linalg::null_space(&constraint, 1e-12);
        SubspaceBasis {
            vectors: linalg::column_basis(&ns, 1e-12),
            tol: self.tol,
        }
    }
}

/// Smallest subspace containing `seed` and invariant under every generator.
fn module_closure(
    seed: &[DVector<f64>],
    generators: &[(DMatrix<f64>, f64)],
    tol: f64,
    full: usize,
) -> Option<SubspaceBasis> {
    let mut gs = GramSchmidt::new();
    for v in seed {
        let n = v.norm();
        if n > 0.0 {
            gs.try_add(v, n, tol);
        }
    }
    if gs.is_empty() {
        return None;
    }
    let mut next = 0;
    while next < gs.len() && gs.len() < full {
        let q = gs.vectors()[next].clone();
        next += 1;
        for (a, scale) in generators {
            let w = a * &q;
            gs.try_add(&w, *scale, tol);
            if gs.len() >= full {
                break;
            }
        }
    }
    Some(SubspaceBasis {
        vectors: gs.to_matrix(full),
        tol,
    })
}

/// Eigenvector seeds of a seeded random combination of the generators
/// (each as its real and imaginary parts).
fn eigen_seeds(generators: &[(DMatrix<f64>, f64)], rng: &mut ChaCha8Rng) -> Vec<Vec<DVector<f64>>> {
    let Some((first, _)) = generators.first() else {
        return Vec::new();
    };
    let m = first.nrows();
    let mut combo = DMatrix::<f64>::zeros(m, m);
    for (a, scale) in generators {
        combo += a * (rng.random_range(-1.0..1.0) / scale.max(f64::MIN_POSITIVE));
    }
    let scale = combo.norm();
    if scale == 0.0 {
        return Vec::new();
    }
    let eig = combo.complex_eigenvalues();
    let cm: DMatrix<Complex<f64>> = combo.map(|x| Complex::new(x, 0.0));
    let mut out = Vec::new();
    for lambda in eig.iter() {
        let shift = *lambda + Complex::new(1e-9 * scale, 1e-9 * scale);
        let mut shifted = cm.clone();
        for i in 0..m {
            shifted[(i, i)] -= shift;
        }
        let lu = shifted.lu();
        let mut x = DVector::<Complex<f64>>::from_fn(m, |i, _| Complex::new(1.0 + 0.1 * i as f64, 0.3));
        let mut ok = true;
        for _ in 0..4 {
            match lu.solve(&x) {
                Some(y) => {
                    let nrm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    if !nrm.is_finite() || nrm == 0.0 {
                        ok = false;
                        break;
                    }
                    x = y / Complex::new(nrm, 0.0);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            // rotate so the largest component is real; the pair (Re, Im) spans the same plane
            let (imax, _) = x
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
            let phase = x[imax] / Complex::new(x[imax].norm(), 0.0);
            let x = x.map(|z| z / phase);
            let re = x.map(|z| z.re);
            let im = x.map(|z| z.im);
            if im.norm() > 1e-6 {
                out.push(vec![re, im]);
            } else {
                out.push(vec![re]);
            }
        }
    }
    out
}

/// Proper nonzero subspaces invariant under all generators, with their
/// h-orthogonal complements, deduplicated.
///
/// Seeds: the standard basis, [`RANDOM_SEEDS`] seeded random vectors, and
/// the eigenvectors of two seeded random generator combinations.
pub fn invariant_subspaces(
    generators: &[AlgebraElement],
    form: &BilinearForm,
    tol: f64,
) -> Result<Vec<SubspaceBasis>> {
    if generators.is_empty() {
        return Err(Error::arg("invariant_subspaces needs at least one generator"));
    }
    let full = form.size();
    let gens: Vec<(DMatrix<f64>, f64)> = generators
        .iter()
        .filter(|g| g.form == *form)
        .map(|g| (g.mat.clone(), g.norm()))
        .filter(|(_, s)| *s > 0.0)
        .collect();
    if gens.len() != generators.iter().filter(|g| g.norm() > 0.0).count() {
        return Err(Error::arg("generator does not match the form"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SEARCH_SEED);
    let mut seeds: Vec<Vec<DVector<f64>>> = (0..full)
        .map(|i| {
            let mut e = DVector::zeros(full);
            e[i] = 1.0;
            vec![e]
        })
        .collect();
    for _ in 0..RANDOM_SEEDS {
        seeds.push(vec![DVector::from_fn(full, |_, _| rng.random_range(-1.0..1.0))]);
    }
    for _ in 0..2 {
        seeds.extend(eigen_seeds(&gens, &mut rng));
    }

    let mut found: Vec<SubspaceBasis> = Vec::new();
    let push = |v: SubspaceBasis, found: &mut Vec<SubspaceBasis>| {
        if v.dim() > 0 && v.dim() < full && !found.iter().any(|f| f.same_as(&v, 1e-6)) {
            found.push(v);
        }
    };
    for seed in &seeds {
        if let Some(v) = module_closure(seed, &gens, tol, full) {
            if v.dim() > 0 && v.dim() < full {
                let perp = v.h_orthogonal(form);
                push(v, &mut found);
                push(perp, &mut found);
            }
        }
    }
    found.sort_by_key(|v| v.dim());
    Ok(found)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Transversal,
    Lightlike,
}

#[derive(Clone, Debug)]
pub struct PairClassification {
    pub kind: PairKind,
    pub v2: SubspaceBasis,
    /// Generator (L, 1) of V1 ∩ V2 in the lightlike case.
    pub null_generator: Option<DVector<f64>>,
}

impl PairClassification {
    /// The tangent part L of the null generator.
    pub fn null_direction(&self) -> Option<DVector<f64>> {
        self.null_generator.as_ref().map(|g| g.rows(0, g.len() - 1).into_owned())
    }
}

pub fn classify_pair(v1: &SubspaceBasis, form: &BilinearForm, tol: f64) -> Result<PairClassification> {
    let full = form.size();
    if v1.ambient() != full {
        return Err(Error::arg("subspace ambient dimension does not match form"));
    }
    if v1.dim() == 0 || v1.dim() >= full {
        return Err(Error::arg("classify_pair needs a proper nonzero subspace"));
    }
    let v2 = v1.h_orthogonal(form);
    let mut concat = DMatrix::zeros(full, v1.dim() + v2.dim());
    concat.view_mut((0, 0), (full, v1.dim())).copy_from(&v1.vectors);
    concat
        .view_mut((0, v1.dim()), (full, v2.dim()))
        .copy_from(&v2.vectors);
    let r1 = linalg::rank(&v1.vectors, tol);
    let r2 = linalg::rank(&v2.vectors, tol);
    let rc = linalg::rank(&concat, tol);
    let inter = (r1 + r2).saturating_sub(rc);
    match inter {
        0 => Ok(PairClassification {
            kind: PairKind::Transversal,
            v2,
            null_generator: None,
        }),
        1 => {
            // V1 a = V2 b  <=>  [V1 | -V2] (a, b) = 0
            let mut sys = concat.clone();
            for j in v1.dim()..sys.ncols() {
                let col = -sys.column(j);
                sys.set_column(j, &col);
            }
            let ns = linalg::null_space(&sys, tol);
            let coeff = ns.column(ns.ncols() - 1).into_owned();
            let a = coeff.rows(0, v1.dim()).into_owned();
            let w = &v1.vectors * a;
            let last = w[full - 1];
            if last.abs() <= tol * w.norm() {
                return Err(Error::Inconsistent(
                    "null intersection has vanishing scalar part".into(),
                ));
            }
            Ok(PairClassification {
                kind: PairKind::Lightlike,
                v2,
                null_generator: Some(w / last),
            })
        }
        k => Err(Error::Inconsistent(format!(
            "dim(V1 ∩ V1^perp) = {k} at tolerance {tol:e}"
        ))),
    }
}
