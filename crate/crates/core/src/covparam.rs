//! Latent vector to precision-Cholesky conversion and the Gaussian log
//! likelihood in precision form.
//!
//! A latent vector of length `n(n+1)/2` fills the lower triangle of an `n x n`
//! matrix in row-major order over lower-triangular index pairs:
//! `(0,0), (1,0), (1,1), (2,0), (2,1), (2,2), ...`. The diagonal passes
//! through softplus; off-diagonal entries are copied verbatim. The result `L`
//! is the Cholesky factor of the precision matrix `P = L L^T = Sigma^-1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{softplus, AutodiffError, Tape, Var};
use crate::linalg;

/// Diagonal entries below this are treated as singular when inverting.
pub const SINGULAR_DIAGONAL: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum CovError {
    #[error("latent length {0} is not a triangular number")]
    NotTriangular(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix has a non-zero entry above the diagonal at ({row}, {col})")]
    NotLower { row: usize, col: usize },
    #[error("diagonal entry {index} is {value}, must be finite and > 0")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("diagonal entry {index} is {value}, below the singularity threshold")]
    Singular { index: usize, value: f64 },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Number of lower-triangular entries of an `n x n` matrix.
pub fn tril_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of `(row, col)`, `col <= row`, in the latent vector.
pub fn tril_index(row: usize, col: usize) -> usize {
    row * (row + 1) / 2 + col
}

/// Recovers `n` from a latent length, if the length is triangular.
pub fn assets_for_latent_len(len: usize) -> Option<usize> {
    let n = (((8 * len + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    (n..=n + 1).find(|&m| tril_len(m) == len && m > 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(z: Vec<f64>) -> Result<Self, CovError> {
        assets_for_latent_len(z.len()).ok_or(CovError::NotTriangular(z.len()))?;
        Ok(Self(z))
    }

    pub fn assets(&self) -> usize {
        assets_for_latent_len(self.0.len()).expect("validated on construction")
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Lower-triangular `n x n` matrix with strictly positive diagonal, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerCholesky {
    n: usize,
    data: Vec<f64>,
}

impl LowerCholesky {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self, CovError> {
        if data.len() != n * n {
            return Err(CovError::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        for i in 0..n {
            for j in i + 1..n {
                if data[i * n + j] != 0.0 {
                    return Err(CovError::NotLower { row: i, col: j });
                }
            }
            let d = data[i * n + i];
            if !(d > 0.0 && d.is_finite()) {
                return Err(CovError::NonPositiveDiagonal { index: i, value: d });
            }
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        (0..n).for_each(|i| data[i * n + i] = 1.0);
        Self { n, data }
    }

    /// Precision Cholesky factor of a covariance matrix: `L L^T = Sigma^-1`.
    pub fn from_covariance(cov: &CovarianceMatrix) -> Result<Self, CovError> {
        let n = cov.n;
        let mut p = linalg::spd_inverse(&cov.data, n).ok_or(CovError::NotPositiveDefinite)?;
        linalg::symmetrize(&mut p, n);
        let l = linalg::cholesky(&p, n).ok_or(CovError::NotPositiveDefinite)?;
        Self::new(n, l)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.data[i * self.n + i])
    }

    /// Rescales row `i` by `1 / scale[i]`, i.e. returns `diag(scale)^-1 L`.
    ///
    /// If `L L^T` is the precision of standardized returns `r / scale`, the
    /// result is the precision factor for the raw returns.
    pub fn unscale_rows(&self, scale: &[f64]) -> Result<Self, CovError> {
        if scale.len() != self.n {
            return Err(CovError::DimensionMismatch {
                expected: self.n,
                got: scale.len(),
            });
        }
        let n = self.n;
        let mut data = self.data.clone();
        for (i, s) in scale.iter().enumerate() {
            data[i * n..(i + 1) * n].iter_mut().for_each(|v| *v /= s);
        }
        Self::new(n, data)
    }
}

/// Symmetric positive definite `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CovarianceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CovarianceMatrix {
    /// Validates symmetry (within `1e-10`, relative to entry size) and
    /// positive definiteness.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self, CovError> {
        if data.len() != n * n {
            return Err(CovError::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if (a - b).abs() > 1e-10 * a.abs().max(b.abs()).max(1.0) {
                    return Err(CovError::NotSymmetric);
                }
            }
        }
        if !linalg::is_positive_definite(&data, n) {
            return Err(CovError::NotPositiveDefinite);
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn log_det(&self) -> f64 {
        linalg::spd_log_det(&self.data, self.n).expect("validated positive definite")
    }
}

impl TryFrom<Vec<Vec<f64>>> for CovarianceMatrix {
    type Error = CovError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(CovError::DimensionMismatch {
                expected: n,
                got: bad.len(),
            });
        }
        Self::new(n, rows.into_iter().flatten().collect())
    }
}

impl From<CovarianceMatrix> for Vec<Vec<f64>> {
    fn from(c: CovarianceMatrix) -> Self {
        c.rows()
    }
}

/// Builds `L` from a latent vector (softplus on the diagonal only).
pub fn vector_to_cholesky(z: &LatentVector) -> LowerCholesky {
    let n = z.assets();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = z.0[tril_index(i, j)];
            data[i * n + j] = if i == j { softplus(v) } else { v };
        }
    }
    LowerCholesky { n, data }
}

/// `P = L L^T`, row-major, exactly symmetric.
pub fn precision(l: &LowerCholesky) -> Vec<f64> {
    linalg::lower_times_lower_t(&l.data, l.n)
}

/// `log|Sigma| = -2 sum_i log l_ii`.
pub fn log_det_sigma(l: &LowerCholesky) -> f64 {
    -2.0 * l.diagonal().map(f64::ln).sum::<f64>()
}

/// Per-step Gaussian log likelihood `-1/2 (log|Sigma| + r^T Sigma^-1 r)`,
/// with the Mahalanobis term evaluated as `||L^T r||^2`. With `include_2pi`
/// the normalizing constant `n/2 log 2pi` is also subtracted.
pub fn gaussian_loglik(r: &[f64], l: &LowerCholesky, include_2pi: bool) -> Result<f64, CovError> {
    let n = l.n;
    if r.len() != n {
        return Err(CovError::DimensionMismatch {
            expected: n,
            got: r.len(),
        });
    }
    // (L^T r)_j = sum_{i >= j} L_ij r_i
    let maha: f64 = (0..n)
        .map(|j| {
            let v: f64 = (j..n).map(|i| l.data[i * n + j] * r[i]).sum();
            v * v
        })
        .sum();
    let mut ll = -0.5 * (log_det_sigma(l) + maha);
    if include_2pi {
        ll -= 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    }
    Ok(ll)
}

/// `Sigma = (L L^T)^-1 = L^-T L^-1`, via triangular inversion, symmetrized.
pub fn covariance(l: &LowerCholesky) -> Result<CovarianceMatrix, CovError> {
    let n = l.n;
    if let Some((index, value)) = l.diagonal().enumerate().find(|&(_, d)| d < SINGULAR_DIAGONAL) {
        return Err(CovError::Singular { index, value });
    }
    let inv = linalg::invert_lower(&l.data, n);
    let mut sigma = linalg::lower_t_times_lower(&inv, n);
    linalg::symmetrize(&mut sigma, n);
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(CovError::NotPositiveDefinite);
    }
    Ok(CovarianceMatrix { n, data: sigma })
}

/// Precomputed masks for evaluating the log likelihood of a latent vector on
/// a tape.
#[derive(Debug, Clone)]
pub struct TrilLayout {
    n: usize,
    diag_mask: Vec<f64>,
    off_mask: Vec<f64>,
}

impl TrilLayout {
    pub fn new(n: usize) -> Self {
        let d = tril_len(n);
        let mut diag_mask = vec![0.0; d];
        for i in 0..n {
            diag_mask[tril_index(i, i)] = 1.0;
        }
        let off_mask = diag_mask.iter().map(|m| 1.0 - m).collect();
        Self {
            n,
            diag_mask,
            off_mask,
        }
    }

    pub fn assets(&self) -> usize {
        self.n
    }

    pub fn latent_len(&self) -> usize {
        self.diag_mask.len()
    }

    /// Differentiable `gaussian_loglik(r, vector_to_cholesky(z), false)`.
    ///
    /// `L^T r` is formed as `M_r z'` where `z'` is `z` with softplus applied on
    /// diagonal slots and `M_r[j, idx(i, j)] = r_i` for `i >= j`.
    pub fn loglik<'a>(&self, tape: &mut Tape<'a>, z: Var, r: &[f64]) -> Result<Var, CovError> {
        let (n, d) = (self.n, self.latent_len());
        if r.len() != n {
            return Err(CovError::DimensionMismatch {
                expected: n,
                got: r.len(),
            });
        }
        if tape.shape(z) != [d] {
            return Err(CovError::DimensionMismatch {
                expected: d,
                got: tape.value(z).len(),
            });
        }
        let sp = tape.softplus(z);
        let diag_mask = tape.constant_vec(self.diag_mask.clone());
        let off_mask = tape.constant_vec(self.off_mask.clone());
        let diag_part = tape.mul(sp, diag_mask)?;
        let off_part = tape.mul(z, off_mask)?;
        let filled = tape.add(off_part, diag_part)?;

        let mut m = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..=i {
                m[j * d + tril_index(i, j)] = r[i];
            }
        }
        let m = tape.constant(crate::autodiff::Tensor::matrix(n, d, m)?);
        let lt_r = tape.matmul(m, filled)?;
        let sq = tape.square(lt_r);
        let maha = tape.sum(sq);

        let log_sp = tape.log(sp);
        let log_diag = tape.mul(log_sp, diag_mask)?;
        let half_neg_logdet = tape.sum(log_diag);
        let half_maha = tape.scale(maha, -0.5);
        Ok(tape.add(half_neg_logdet, half_maha)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn triangular_lengths() {
        assert_eq!(assets_for_latent_len(1), Some(1));
        assert_eq!(assets_for_latent_len(3), Some(2));
        assert_eq!(assets_for_latent_len(1275), Some(50));
        assert_eq!(assets_for_latent_len(4), None);
        assert_eq!(assets_for_latent_len(0), None);
        assert!(matches!(LatentVector::new(vec![0.0; 5]), Err(CovError::NotTriangular(5))));
    }

    #[test]
    fn two_by_two_layout() {
        let l = vector_to_cholesky(&LatentVector::new(vec![0.0, 0.0, 0.0]).unwrap());
        assert_eq!(l.data(), &[LN_2, 0.0, 0.0, LN_2]);
        let l = vector_to_cholesky(&LatentVector::new(vec![1.0, -2.0, 3.0]).unwrap());
        assert_eq!(l.data(), &[softplus(1.0), 0.0, -2.0, softplus(3.0)]);
    }

    #[test]
    fn single_asset() {
        let l = vector_to_cholesky(&LatentVector::new(vec![0.0]).unwrap());
        assert!((l.get(0, 0) - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn extreme_latents_stay_positive() {
        let l = vector_to_cholesky(&LatentVector::new(vec![-50.0, 5.0, -50.0]).unwrap());
        for d in l.diagonal() {
            assert!(d > 0.0 && d.is_finite());
            // log1p(e^-50) = e^-50 to double precision
            assert!((d - (-50f64).exp()).abs() < 1e-30);
            assert!((d - 1.9287e-22).abs() < 1e-25);
        }
    }

    #[test]
    fn precision_examples() {
        assert_eq!(precision(&LowerCholesky::identity(3)), LowerCholesky::identity(3).data().to_vec());
        let l = LowerCholesky::new(2, vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(precision(&l), vec![1.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn log_det_examples() {
        assert_eq!(log_det_sigma(&LowerCholesky::identity(4)), 0.0);
        let l = LowerCholesky::new(2, vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        assert!((log_det_sigma(&l) + 4.0 * LN_2).abs() < 1e-15);
        assert!((log_det_sigma(&l) + 2.7726).abs() < 1e-4);
    }

    #[test]
    fn loglik_examples() {
        let l = LowerCholesky::identity(1);
        assert_eq!(gaussian_loglik(&[0.0], &l, false).unwrap(), 0.0);
        assert_eq!(gaussian_loglik(&[2.0], &l, false).unwrap(), -2.0);
        let with = gaussian_loglik(&[2.0], &l, true).unwrap();
        assert!((with - (-2.0 - 0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-15);
        assert!(matches!(
            gaussian_loglik(&[1.0, 2.0], &l, false),
            Err(CovError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(covariance(&LowerCholesky::identity(2)).unwrap().data(), &[1.0, 0.0, 0.0, 1.0]);
        let l = LowerCholesky::new(2, vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(covariance(&l).unwrap().data(), &[0.25, 0.0, 0.0, 0.25]);
        let tiny = LowerCholesky::new(1, vec![1e-310]).unwrap();
        assert!(matches!(covariance(&tiny), Err(CovError::Singular { .. })));
    }

    #[test]
    fn lower_cholesky_validation() {
        assert!(matches!(
            LowerCholesky::new(2, vec![1.0, 0.5, 0.0, 1.0]),
            Err(CovError::NotLower { row: 0, col: 1 })
        ));
        assert!(matches!(
            LowerCholesky::new(2, vec![1.0, 0.0, 0.0, 0.0]),
            Err(CovError::NonPositiveDiagonal { index: 1, .. })
        ));
    }

    #[test]
    fn covariance_roundtrip_through_precision_factor() {
        let cov = CovarianceMatrix::new(2, vec![2.0, 0.3, 0.3, 0.5]).unwrap();
        let l = LowerCholesky::from_covariance(&cov).unwrap();
        let back = covariance(&l).unwrap();
        for (a, b) in cov.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(CovarianceMatrix::new(2, vec![1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(CovarianceMatrix::new(2, vec![1.0, 0.1, 0.2, 1.0]).is_err());
    }

    #[test]
    fn unscaled_rows_match_raw_likelihood() {
        let z = LatentVector::new(vec![0.3, -0.4, 1.2]).unwrap();
        let l = vector_to_cholesky(&z);
        let scale = [0.01, 0.02];
        let r = [0.004, -0.03];
        let rs: Vec<f64> = r.iter().zip(&scale).map(|(a, s)| a / s).collect();
        let raw = gaussian_loglik(&r, &l.unscale_rows(&scale).unwrap(), false).unwrap();
        let std = gaussian_loglik(&rs, &l, false).unwrap();
        let jac: f64 = scale.iter().map(|s| s.ln()).sum();
        assert!((raw - (std - jac)).abs() < 1e-10);
    }

    #[test]
    fn tape_loglik_matches_value_path() {
        let zv = vec![0.3, -0.4, 1.2, 0.05, 2.0, -1.0];
        let r = [0.5, -1.5, 0.25];
        let want = gaussian_loglik(&r, &vector_to_cholesky(&LatentVector::new(zv.clone()).unwrap()), false).unwrap();
        let layout = TrilLayout::new(3);
        let mut tape = Tape::new();
        let z = tape.variable(crate::autodiff::Tensor::vector(zv));
        let ll = layout.loglik(&mut tape, z, &r).unwrap();
        assert!((tape.scalar(ll) - want).abs() < 1e-12);
    }
}
