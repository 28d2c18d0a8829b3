//! Dense complex Hermitian linear algebra: resolvents, the eigendecomposition
//! oracle, matrix functions by diagonalization, and Schatten p-norms.
//!
//! Everything here is desk scale (dense, dim <= 4096) and pure: operations are
//! deterministic functions of their inputs with no shared mutable state.

use ndarray::{Array1, Array2};
use ndarray_linalg::{EigValsh, Eigh, Inverse, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = Array2<Complex64>;

/// Relative hermiticity tolerance applied when adopting a matrix.
pub const HERMITICITY_RTOL: f64 = 1e-12;
/// Unitarity / reconstruction tolerance for eigendecompositions.
pub const DECOMPOSITION_TOL: f64 = 1e-10;

/// A finite self-adjoint operator. Inputs are symmetrized as (T + T*)/2 on
/// construction; the pre-symmetrization defect is retained for reporting.
#[derive(Debug, Clone)]
pub struct HermitianOperator {
    entries: CMatrix,
    presym_defect: f64,
}

impl HermitianOperator {
    /// Adopt a matrix as a self-adjoint operator. Rejects non-square input and
    /// hermiticity defects above `HERMITICITY_RTOL` relative to the largest
    /// entry; smaller defects (file roundoff) are symmetrized away.
    pub fn new(entries: CMatrix) -> Result<Self> {
        let (rows, cols) = entries.dim();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        let mut scale: f64 = 0.0;
        let mut defect: f64 = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                scale = scale.max(entries[(i, j)].norm());
                defect = defect.max((entries[(i, j)] - entries[(j, i)].conj()).norm());
            }
        }
        let tol = HERMITICITY_RTOL * scale.max(1e-300);
        if defect > tol {
            return Err(Error::NotHermitian { defect, tol });
        }
        let mut sym = entries.clone();
        for i in 0..rows {
            for j in 0..cols {
                sym[(i, j)] = (entries[(i, j)] + entries[(j, i)].conj()) * 0.5;
            }
        }
        Ok(Self {
            entries: sym,
            presym_defect: defect,
        })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = CMatrix::zeros((n, n));
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(*d, 0.0);
        }
        Self {
            entries: m,
            presym_defect: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    /// Hermiticity defect of the original input, before symmetrization.
    pub fn presym_defect(&self) -> f64 {
        self.presym_defect
    }

    pub fn decompose(&self) -> Result<SpectralDecomposition> {
        SpectralDecomposition::compute(self)
    }
}

/// Eigendecomposition S = U diag(lambda) U* with ascending real eigenvalues.
/// This is the ground-truth oracle substrate for every calculus formula.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Array1<f64>,
    eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    pub fn compute(op: &HermitianOperator) -> Result<Self> {
        let (vals, vecs) = op
            .entries
            .eigh(UPLO::Lower)
            .map_err(|e| Error::Lapack(e.to_string()))?;
        // For row-major complex input the backend hands back the eigenvectors
        // of the transpose; conjugating restores S = U diag(lambda) U*.
        let dec = Self {
            eigenvalues: vals,
            eigenvectors: vecs.mapv(|v| v.conj()),
        };
        dec.validate(&op.entries)?;
        Ok(dec)
    }

    /// Adopt a decomposition known in closed form (e.g. a Fourier multiplier
    /// with its DFT basis). The same residual checks apply.
    pub fn from_parts(eigenvalues: Array1<f64>, eigenvectors: CMatrix, op: &CMatrix) -> Result<Self> {
        let dec = Self {
            eigenvalues,
            eigenvectors,
        };
        dec.validate(op)?;
        Ok(dec)
    }

    fn validate(&self, original: &CMatrix) -> Result<()> {
        let n = self.eigenvalues.len();
        let u = &self.eigenvectors;
        // ||U*U - I||_max
        let gram = adjoint(u).dot(u);
        let mut residual: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let expected = if i == j {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                residual = residual.max((gram[(i, j)] - expected).norm());
            }
        }
        if residual > DECOMPOSITION_TOL {
            return Err(Error::DecompositionResidual { residual });
        }
        // ||U diag U* - S||_max <= tol * (1 + max |lambda|)
        let recon = self.apply_function(|x| Complex64::new(x, 0.0));
        let max_abs_eig = self
            .eigenvalues
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let mut recon_residual: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                recon_residual = recon_residual.max((recon[(i, j)] - original[(i, j)]).norm());
            }
        }
        if recon_residual > DECOMPOSITION_TOL * (1.0 + max_abs_eig) {
            return Err(Error::DecompositionResidual {
                residual: recon_residual,
            });
        }
        Ok(())
    }

    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    /// U diag(f(lambda)) U*.
    pub fn apply_function(&self, f: impl Fn(f64) -> Complex64) -> CMatrix {
        let n = self.eigenvalues.len();
        let u = &self.eigenvectors;
        // scaled = U diag(f(lambda))
        let mut scaled = u.clone();
        for (k, lam) in self.eigenvalues.iter().enumerate() {
            let fv = f(*lam);
            for i in 0..n {
                scaled[(i, k)] *= fv;
            }
        }
        scaled.dot(&adjoint(u))
    }
}

/// Schatten exponent p in [1, oo) or infinity (operator norm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchattenIndex {
    Finite(f64),
    Infinity,
}

impl SchattenIndex {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            return Ok(Self::Infinity);
        }
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidSchattenIndex(p));
        }
        Ok(Self::Finite(p))
    }

    pub const TRACE: SchattenIndex = SchattenIndex::Finite(1.0);
    pub const HILBERT_SCHMIDT: SchattenIndex = SchattenIndex::Finite(2.0);

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "Inf" | "INF" | "oo" => Ok(Self::Infinity),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad Schatten index `{other}`")))?;
                Self::new(p)
            }
        }
    }
}

impl std::fmt::Display for SchattenIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Finite(p) => write!(f, "{p}"),
            Self::Infinity => write!(f, "inf"),
        }
    }
}

/// Singular values of a complex matrix, descending. Computed from the
/// eigenvalues of T*T with negative roundoff clamped to zero.
pub fn singular_values(t: &CMatrix) -> Result<Vec<f64>> {
    let b = adjoint(t).dot(t);
    // B is Hermitian up to roundoff by construction; symmetrize for eigh.
    let n = b.nrows();
    let mut bs = b.clone();
    for i in 0..n {
        for j in 0..n {
            bs[(i, j)] = (b[(i, j)] + b[(j, i)].conj()) * 0.5;
        }
    }
    let vals = bs
        .eigvalsh(UPLO::Lower)
        .map_err(|e| Error::Lapack(e.to_string()))?;
    let mut sv: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(sv)
}

/// (sum_i s_i^p)^(1/p) of the singular values for finite p; max s_i for p = oo.
pub fn schatten_norm(t: &CMatrix, p: SchattenIndex) -> Result<f64> {
    let sv = singular_values(t)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0.0);
    }
    match p {
        SchattenIndex::Infinity => Ok(smax),
        SchattenIndex::Finite(p) => {
            let sum: f64 = sv.iter().map(|s| (s / smax).powf(p)).sum();
            Ok(smax * sum.powf(1.0 / p))
        }
    }
}

/// Operator norm, i.e. the Schatten-infinity norm.
pub fn operator_norm(t: &CMatrix) -> Result<f64> {
    schatten_norm(t, SchattenIndex::Infinity)
}

/// (S - zI)^{-1} by LU inversion; requires Im z != 0 so the inverse exists and
/// obeys the resolvent estimate ||(S - zI)^{-1}|| <= 1/|Im z|.
pub fn resolvent(s: &HermitianOperator, z: Complex64) -> Result<CMatrix> {
    if z.im == 0.0 {
        return Err(Error::RealSpectralPoint { z });
    }
    resolvent_of_entries(s.entries(), z)
}

pub(crate) fn resolvent_of_entries(entries: &CMatrix, z: Complex64) -> Result<CMatrix> {
    let n = entries.nrows();
    let mut shifted = entries.clone();
    for i in 0..n {
        shifted[(i, i)] -= z;
    }
    shifted.inv().map_err(|e| Error::Lapack(e.to_string()))
}

/// (S - zI)^{-m} via one LU inverse and repeated multiplication.
pub fn resolvent_power(s: &HermitianOperator, z: Complex64, m: u32) -> Result<CMatrix> {
    let r = resolvent(s, z)?;
    let mut acc = r.clone();
    for _ in 1..m {
        acc = acc.dot(&r);
    }
    Ok(acc)
}

/// U diag(f(lambda_k)) U*: the ground-truth oracle for the calculus formulas.
pub fn matrix_function_oracle(
    s: &HermitianOperator,
    f: impl Fn(f64) -> Complex64,
) -> Result<CMatrix> {
    let dec = s.decompose()?;
    for lam in dec.eigenvalues() {
        let v = f(*lam);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::NonFiniteFunction { lambda: *lam });
        }
    }
    Ok(dec.apply_function(f))
}

pub fn adjoint(m: &CMatrix) -> CMatrix {
    let (r, c) = m.dim();
    let mut out = CMatrix::zeros((c, r));
    for i in 0..r {
        for j in 0..c {
            out[(j, i)] = m[(i, j)].conj();
        }
    }
    out
}

pub fn identity(n: usize) -> CMatrix {
    let mut m = CMatrix::zeros((n, n));
    for i in 0..n {
        m[(i, i)] = Complex64::new(1.0, 0.0);
    }
    m
}

/// Entrywise max modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.norm()))
}

pub fn trace(m: &CMatrix) -> Complex64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}
