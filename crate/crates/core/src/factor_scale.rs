//! Factor-structured scale matrix `Σ = B Bᵀ + D²`.
//!
//! `B` is `m × k` with a zero upper triangle and `D = diag(d)`. Every operation
//! goes through the `k × k` capacitance matrix `M = I + Bᵀ D⁻² B`, so cost is
//! linear in `m`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Smallest |dᵢ| accepted as non-singular.
pub const MIN_ABS_D: f64 = 1e-150;

#[derive(Clone, Debug)]
pub struct FactorScale {
    b: DMatrix<f64>,
    d: DVector<f64>,
    d_inv2: DVector<f64>,
    /// Cholesky factor of the capacitance matrix.
    cap: Cholesky<f64, Dyn>,
}

/// Number of free entries of an `m × k` lower-triangular factor.
pub fn vech_len(m: usize, k: usize) -> usize {
    assert!(k <= m, "factor count {k} exceeds dimension {m}");
    m * k - k * k.saturating_sub(1) / 2
}

impl FactorScale {
    pub fn new(b: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        let m = d.len();
        if b.nrows() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: b.nrows(),
                context: "rows of B",
            });
        }
        let k = b.ncols();
        if k > m {
            return Err(Error::InvalidParameter(format!(
                "factor count {k} exceeds dimension {m}"
            )));
        }
        for j in 0..k {
            for i in 0..j {
                if b[(i, j)] != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "B[{i},{j}] is above the diagonal and must be zero"
                    )));
                }
            }
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("B"));
        }
        for (i, &di) in d.iter().enumerate() {
            if !di.is_finite() || di.abs() < MIN_ABS_D {
                return Err(Error::SingularScale {
                    index: i,
                    value: di,
                });
            }
        }
        let d_inv2 = d.map(|v| 1.0 / (v * v));
        let mut cap = DMatrix::<f64>::identity(k, k);
        // Bᵀ D⁻² B
        let scaled = DMatrix::from_fn(m, k, |i, j| b[(i, j)] * d_inv2[i]);
        cap.gemm_tr(1.0, &b, &scaled, 1.0);
        let cap = Cholesky::new(cap).ok_or(Error::NotPositiveDefinite)?;
        Ok(FactorScale { b, d, d_inv2, cap })
    }

    /// Builds from the column-major lower-triangular packing of `B`.
    pub fn from_vech(m: usize, k: usize, vech: &[f64], d: &[f64]) -> Result<Self> {
        if k > m {
            return Err(Error::InvalidParameter(format!(
                "factor count {k} exceeds dimension {m}"
            )));
        }
        if vech.len() != vech_len(m, k) {
            return Err(Error::DimensionMismatch {
                expected: vech_len(m, k),
                actual: vech.len(),
                context: "packed B",
            });
        }
        if d.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: d.len(),
                context: "d",
            });
        }
        Self::new(unpack_lower(m, k, vech), DVector::from_column_slice(d))
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn n_factors(&self) -> usize {
        self.b.ncols()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn vech(&self) -> Vec<f64> {
        pack_lower(&self.b)
    }

    /// `Σ v`.
    pub fn mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let btv = self.b.tr_mul(v);
        let mut out = &self.b * btv;
        for i in 0..self.dim() {
            out[i] += self.d[i] * self.d[i] * v[i];
        }
        out
    }

    /// `Σ⁻¹ v` by the Woodbury identity.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let dv = v.component_mul(&self.d_inv2);
        if self.n_factors() == 0 {
            return dv;
        }
        let inner = self.cap.solve(&self.b.tr_mul(&dv));
        let corr = (&self.b * inner).component_mul(&self.d_inv2);
        dv - corr
    }

    /// `log |Σ|`.
    pub fn logdet(&self) -> f64 {
        let cap_logdet: f64 = 2.0
            * self
                .cap
                .l_dirty()
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        cap_logdet + self.d.iter().map(|v| 2.0 * v.abs().ln()).sum::<f64>()
    }

    /// `B z + d ∘ ε`, a draw with covariance `Σ` when `z`, `ε` are standard normal.
    pub fn sample_xi(&self, z: &[f64], eps: &[f64]) -> DVector<f64> {
        debug_assert_eq!(z.len(), self.n_factors());
        debug_assert_eq!(eps.len(), self.dim());
        let mut out = &self.b * DVector::from_column_slice(z);
        for i in 0..self.dim() {
            out[i] += self.d[i] * eps[i];
        }
        out
    }

    /// `diag(Σ)`.
    pub fn diag(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            self.b.row(i).norm_squared() + self.d[i] * self.d[i]
        })
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut s = &self.b * self.b.transpose();
        for i in 0..self.dim() {
            s[(i, i)] += self.d[i] * self.d[i];
        }
        s
    }

    /// `diag(Σ⁻¹)`.
    pub fn inv_diag(&self) -> DVector<f64> {
        let minv_bt = self.cap.solve(&self.b.transpose());
        DVector::from_fn(self.dim(), |i, _| {
            let quad = self.b.row(i).dot(&minv_bt.column(i).transpose());
            self.d_inv2[i] - quad * self.d_inv2[i] * self.d_inv2[i]
        })
    }

    /// `Σ⁻¹ B = D⁻² B M⁻¹`.
    pub fn inv_times_b(&self) -> DMatrix<f64> {
        let m = self.dim();
        let k = self.n_factors();
        let mut out = DMatrix::zeros(m, k);
        if k == 0 {
            return out;
        }
        // (M⁻¹ Bᵀ)ᵀ = B M⁻¹ since M is symmetric
        let minv_bt = self.cap.solve(&self.b.transpose());
        for i in 0..m {
            for j in 0..k {
                out[(i, j)] = self.d_inv2[i] * minv_bt[(j, i)];
            }
        }
        out
    }
}

/// Column-major packing of the lower triangle (including the diagonal) of an
/// `m × k` matrix.
pub fn pack_lower(b: &DMatrix<f64>) -> Vec<f64> {
    let (m, k) = b.shape();
    let mut out = Vec::with_capacity(vech_len(m, k));
    for j in 0..k {
        for i in j..m {
            out.push(b[(i, j)]);
        }
    }
    out
}

pub fn unpack_lower(m: usize, k: usize, vech: &[f64]) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(m, k);
    let mut idx = 0;
    for j in 0..k {
        for i in j..m {
            b[(i, j)] = vech[idx];
            idx += 1;
        }
    }
    b
}
