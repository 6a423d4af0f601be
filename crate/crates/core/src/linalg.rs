//! Null-space bases of the all-ones row and the projected inverse
//! `U (UᵀAU)⁻¹ Uᵀ` used by every bound.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest condition number accepted before a projected matrix is declared singular.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;


/// Orthonormal `M × (M-1)` basis of `{v : 1ᵀv = 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NullspaceBasis {
    u: DMatrix<f64>,
}

impl NullspaceBasis {
    /// Helmert basis. Column `k` is `(1, …, 1, -k, 0, …, 0) / sqrt(k(k+1))`.
    pub fn helmert(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::NoFreeDirections(m));
        }
        let mut u = DMatrix::zeros(m, m - 1);
        for k in 1..m {
            let norm = ((k * (k + 1)) as f64).sqrt();
            for i in 0..k {
                u[(i, k - 1)] = 1.0 / norm;
            }
            u[(k, k - 1)] = -(k as f64) / norm;
        }
        Ok(Self { u })
    }

    /// Basis taken from a Householder reflection that sends `e_M` to `1/√M`.
    /// Used as an independent second basis for invariance checks.
    pub fn householder(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::NoFreeDirections(m));
        }
        let mf = m as f64;
        let mut v = vec![-1.0 / mf.sqrt(); m];
        v[m - 1] += 1.0;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let u = DMatrix::from_fn(m, m - 1, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            delta - 2.0 * v[i] * v[j] / vv
        });
        Ok(Self { u })
    }

    /// Wraps a caller-supplied basis after checking both invariants.
    pub fn from_matrix(u: DMatrix<f64>) -> Result<Self> {
        let m = u.nrows();
        if m < 2 || u.ncols() != m - 1 {
            return Err(Error::Dimension(format!(
                "null-space basis must be M x (M-1), got {} x {}",
                u.nrows(),
                u.ncols()
            )));
        }
        let basis = Self { u };
        let (col_sum, ortho) = basis.invariant_defects();
        if col_sum > 1e-10 || ortho > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "matrix is not an orthonormal null-space basis (column-sum defect {col_sum:.2e}, \
                 orthonormality defect {ortho:.2e})"
            )));
        }
        Ok(basis)
    }

    /// Largest entrywise deviation of `1ᵀU` from 0 and of `UᵀU` from `I`.
    pub fn invariant_defects(&self) -> (f64, f64) {
        let col_sum = self
            .u
            .column_iter()
            .map(|c| c.sum().abs())
            .fold(0.0, f64::max);
        let gram = self.u.transpose() * &self.u;
        let ortho = (gram - DMatrix::identity(self.dim(), self.dim())).amax();
        (col_sum, ortho)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Alphabet size `M`.
    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    /// Number of free directions, `M - 1`.
    pub fn dim(&self) -> usize {
        self.u.ncols()
    }

    /// `UᵀAU`.
    pub fn project(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.u.transpose() * a * &self.u
    }

    /// `U B Uᵀ` for an `(M-1) × (M-1)` matrix `B`.
    pub fn lift(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        &self.u * b * self.u.transpose()
    }
}

/// The default basis (Helmert).
pub fn build_nullspace(m: usize) -> Result<NullspaceBasis> {
    NullspaceBasis::helmert(m)
}

/// Condition number `max|λ| / min|λ|` of a symmetric matrix; infinite when singular.
pub fn condition_estimate(sym: &DMatrix<f64>) -> f64 {
    condition_of(SymmetricEigen::new(sym.clone()).eigenvalues.as_slice())
}

fn condition_of(eigenvalues: &[f64]) -> f64 {
    let max = eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let min = eigenvalues.iter().fold(f64::INFINITY, |a, l| a.min(l.abs()));
    if max == 0.0 || min == 0.0 || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverts an already projected symmetric matrix `P = UᵀAU`, refusing when
/// its condition number exceeds `cap`.
pub fn inverse_projected(p: &DMatrix<f64>, cap: f64) -> Result<DMatrix<f64>> {
    let sym = (p + p.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let condition = condition_of(eig.eigenvalues.as_slice());
    if !(condition <= cap) {
        return Err(Error::SingularInformation { condition, cap });
    }
    let q = &eig.eigenvectors;
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let inv = q * inv_diag * q.transpose();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// `U (UᵀAU)⁻¹ Uᵀ` with the default condition cap.
pub fn projected_inverse_quadratic(a: &DMatrix<f64>, basis: &NullspaceBasis) -> Result<DMatrix<f64>> {
    projected_inverse_quadratic_with_cap(a, basis, DEFAULT_CONDITION_CAP)
}

pub fn projected_inverse_quadratic_with_cap(
    a: &DMatrix<f64>,
    basis: &NullspaceBasis,
    cap: f64,
) -> Result<DMatrix<f64>> {
    check_square(a, basis.m())?;
    let inv = inverse_projected(&basis.project(a), cap)?;
    let x = basis.lift(&inv);
    Ok((&x + x.transpose()) * 0.5)
}

/// Plain CSV, one matrix row per line, no header.
pub fn write_matrix_csv<W: Write>(w: W, a: &DMatrix<f64>) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in a.row_iter() {
        out.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn check_square(a: &DMatrix<f64>, m: usize) -> Result<()> {
    if a.nrows() != m || a.ncols() != m {
        return Err(Error::Dimension(format!(
            "expected a {m} x {m} matrix, got {} x {}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}
