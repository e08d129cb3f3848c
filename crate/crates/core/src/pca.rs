//! Truncated principal component analysis of flattened field images.
//!
//! The basis comes from the thin SVD of the centered (and optionally
//! scaled) data matrix. Eigenvalues are `s_i^2 / n`, i.e. the spectrum of
//! the covariance normalized by the sample count, so that the mean squared
//! reconstruction error of the training rows is exactly the eigenvalue
//! tail divided by the pixel count.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Centering only; used for binary shape masks.
    None,
    /// Per-pixel centering followed by division by one global standard
    /// deviation of the raw training values.
    CenterScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Truncation {
    Components(usize),
    VarianceFraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaCodec {
    pub(crate) mean: DVector<f64>,
    /// `n_pixels x k`, orthonormal columns.
    pub(crate) components: DMatrix<f64>,
    /// Full descending spectrum (one entry per singular value).
    pub(crate) eigenvalues: Vec<f64>,
    pub(crate) normalization: Normalization,
    pub(crate) scale: f64,
    pub(crate) n_fit: usize,
}

/// Singular values below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

impl PcaCodec {
    /// Fits on the rows of `x` (samples x pixels).
    pub fn fit(x: &DMatrix<f64>, normalization: Normalization, truncation: Truncation) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("PCA needs at least 2 samples, got {n}")));
        }
        if p == 0 {
            return Err(Error::InvalidArgument("PCA needs at least one pixel".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite value in PCA input".into()));
        }
        match truncation {
            Truncation::VarianceFraction(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(Error::InvalidArgument(format!("variance fraction {f} outside (0, 1]")))
            }
            Truncation::Components(k) if k == 0 || k > (n - 1).min(p) => {
                return Err(Error::InvalidArgument(format!("component count {k} outside 1..={}", (n - 1).min(p))))
            }
            _ => {}
        }

        let mean = x.row_mean().transpose();
        let scale = match normalization {
            Normalization::None => 1.0,
            Normalization::CenterScale => {
                let total = x.len() as f64;
                let grand = x.sum() / total;
                let var = x.iter().map(|v| (v - grand) * (v - grand)).sum::<f64>() / total;
                let sd = var.sqrt();
                if !(sd > 0.0) {
                    return Err(Error::Numerical("zero variance in training values, cannot scale".into()));
                }
                sd
            }
        };

        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        if scale != 1.0 {
            centered /= scale;
        }

        // Thin SVD through the transpose so the left factor is the pixel basis.
        let svd = centered.transpose().svd(true, false);
        let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return a basis".into()))?;
        // The bidiagonal SVD can leave near-null directions mixed into the
        // basis (relative variance errors ~1e-6); one Rayleigh-Ritz step on
        // the returned span makes the variances exact to roundoff.
        let projected = &centered * &u;
        let ritz = SymmetricEigen::new(projected.tr_mul(&projected));
        let u = u * ritz.eigenvectors;
        let sq: Vec<f64> = ritz.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let mut order: Vec<usize> = (0..sq.len()).collect();
        order.sort_by(|&i, &j| sq[j].total_cmp(&sq[i]));
        let singular: Vec<f64> = order.iter().map(|&i| sq[i].sqrt()).collect();
        let eigenvalues: Vec<f64> = order.iter().map(|&i| sq[i] / n as f64).collect();
        let total: f64 = eigenvalues.iter().sum();
        let s_max = singular.first().copied().unwrap_or(0.0);
        let rank = singular.iter().take_while(|&&s| s > RANK_TOL * s_max && s > 0.0).count().min(n - 1);

        let k = match truncation {
            Truncation::Components(k) => k,
            Truncation::VarianceFraction(f) => {
                if !(total > 0.0) {
                    return Err(Error::Numerical("zero total variance, variance fraction undefined".into()));
                }
                let mut cum = 0.0;
                let mut k = rank;
                for (i, ev) in eigenvalues.iter().enumerate().take(rank) {
                    cum += ev;
                    if cum / total >= f - 1e-12 {
                        k = i + 1;
                        break;
                    }
                }
                k.max(1)
            }
        };

        let mut components = DMatrix::zeros(p, k);
        for (c, &src) in order.iter().take(k).enumerate() {
            let mut col = u.column(src).into_owned();
            let (imax, _) = col
                .iter()
                .enumerate()
                .fold((0, 0.0), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
            if col[imax] < 0.0 {
                col.neg_mut();
            }
            components.set_column(c, &col);
        }

        Ok(PcaCodec { mean, components, eigenvalues, normalization, scale, n_fit: n })
    }

    pub fn k(&self) -> usize {
        self.components.ncols()
    }

    pub fn n_pixels(&self) -> usize {
        self.components.nrows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Global scale divisor (1 when no normalization).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn n_fit(&self) -> usize {
        self.n_fit
    }

    /// Share of the total variance kept by the retained components.
    pub fn explained_fraction(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total > 0.0 {
            self.eigenvalues[..self.k()].iter().sum::<f64>() / total
        } else {
            1.0
        }
    }

    /// Sum of the discarded eigenvalues.
    pub fn tail_variance(&self) -> f64 {
        self.eigenvalues[self.k()..].iter().sum()
    }

    pub fn encode(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.n_pixels() {
            return Err(Error::Dimension(format!("field has {} values, codec expects {}", x.len(), self.n_pixels())));
        }
        let centered = (DVector::from_column_slice(x) - &self.mean) / self.scale;
        Ok(self.components.tr_mul(&centered))
    }

    /// Encodes every row of `x`; returns `rows x k`.
    pub fn encode_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.n_pixels() {
            return Err(Error::Dimension(format!("rows have {} values, codec expects {}", x.ncols(), self.n_pixels())));
        }
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        centered /= self.scale;
        Ok(centered * &self.components)
    }

    pub fn decode(&self, z: &[f64]) -> Result<DVector<f64>> {
        if z.len() != self.k() {
            return Err(Error::Dimension(format!("latent has {} values, codec expects {}", z.len(), self.k())));
        }
        Ok(&self.components * DVector::from_column_slice(z) * self.scale + &self.mean)
    }

    /// Decodes every row of `z`; returns `rows x n_pixels`.
    pub fn decode_rows(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.k() {
            return Err(Error::Dimension(format!("latent rows have {} values, codec expects {}", z.ncols(), self.k())));
        }
        let mut out = z * self.components.transpose() * self.scale;
        for mut row in out.row_iter_mut() {
            row += self.mean.transpose();
        }
        Ok(out)
    }

    pub(crate) fn from_parts(
        mean: DVector<f64>,
        components: DMatrix<f64>,
        eigenvalues: Vec<f64>,
        normalization: Normalization,
        scale: f64,
        n_fit: usize,
    ) -> Result<Self> {
        if mean.len() != components.nrows() {
            return Err(Error::Dimension(format!(
                "mean has {} entries, basis has {} rows",
                mean.len(),
                components.nrows()
            )));
        }
        if eigenvalues.len() < components.ncols() {
            return Err(Error::Dimension("spectrum shorter than retained basis".into()));
        }
        if !(scale > 0.0) {
            return Err(Error::Format(format!("invalid codec scale {scale}")));
        }
        Ok(PcaCodec { mean, components, eigenvalues, normalization, scale, n_fit })
    }
}

/// Stacks equally sized vectors as matrix rows.
pub fn rows_to_matrix<'a, I>(rows: I, width: usize) -> DMatrix<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let data: Vec<f64> = rows.into_iter().flat_map(|r| r.iter().copied()).collect();
    let n = data.len() / width.max(1);
    DMatrix::from_row_slice(n, width, &data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::rng::rng_from_seed(seed);
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn rank_one_data_needs_one_component() {
        let dir: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let base: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let x = DMatrix::from_fn(8, 30, |r, c| base[c] + (r as f64 - 3.0) * dir[c]);
        let codec = PcaCodec::fit(&x, Normalization::None, Truncation::VarianceFraction(0.999)).unwrap();
        assert_eq!(codec.k(), 1);
        assert!((codec.explained_fraction() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_rows_reject_variance_fraction() {
        let x = DMatrix::from_fn(5, 12, |_, c| c as f64);
        let err = PcaCodec::fit(&x, Normalization::None, Truncation::VarianceFraction(0.9));
        assert!(matches!(err, Err(Error::Numerical(_))));
    }

    #[test]
    fn full_basis_round_trips() {
        let x = random_matrix(12, 40, 1);
        let codec = PcaCodec::fit(&x, Normalization::CenterScale, Truncation::VarianceFraction(1.0)).unwrap();
        assert_eq!(codec.k(), 11);
        for r in 0..12 {
            let row: Vec<f64> = x.row(r).iter().copied().collect();
            let back = codec.decode(codec.encode(&row).unwrap().as_slice()).unwrap();
            let err = (&back - DVector::from_column_slice(&row)).norm() / DVector::from_column_slice(&row).norm();
            assert!(err < 1e-9, "{err}");
        }
    }

    #[test]
    fn mean_encodes_to_zero_and_zero_decodes_to_mean() {
        let x = random_matrix(10, 25, 2);
        let codec = PcaCodec::fit(&x, Normalization::CenterScale, Truncation::Components(4)).unwrap();
        let z = codec.encode(codec.mean().as_slice()).unwrap();
        assert!(z.amax() < 1e-12);
        let m = codec.decode(&[0.0; 4]).unwrap();
        assert!((m - codec.mean()).amax() < 1e-15);
    }

    #[test]
    fn first_component_offset_encodes_to_axis() {
        let x = random_matrix(10, 25, 3);
        let codec = PcaCodec::fit(&x, Normalization::CenterScale, Truncation::Components(3)).unwrap();
        let sigma = 2.5;
        let probe = codec.mean() + codec.components().column(0) * sigma;
        let z = codec.encode(probe.as_slice()).unwrap();
        let expected = sigma / codec.scale();
        assert!((z[0] - expected).abs() < 1e-10);
        assert!(z[1].abs() < 1e-10 && z[2].abs() < 1e-10);
    }

    #[test]
    fn sign_convention_makes_largest_entry_positive() {
        let x = random_matrix(9, 20, 4);
        let codec = PcaCodec::fit(&x, Normalization::None, Truncation::Components(5)).unwrap();
        for c in codec.components().column_iter() {
            let big = c.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let x = random_matrix(6, 10, 5);
        let codec = PcaCodec::fit(&x, Normalization::None, Truncation::Components(2)).unwrap();
        assert!(matches!(codec.encode(&[0.0; 9]), Err(Error::Dimension(_))));
        assert!(matches!(codec.decode(&[0.0; 3]), Err(Error::Dimension(_))));
    }

    #[test]
    fn component_bounds_are_checked() {
        let x = random_matrix(6, 10, 6);
        assert!(PcaCodec::fit(&x, Normalization::None, Truncation::Components(6)).is_err());
        assert!(PcaCodec::fit(&x, Normalization::None, Truncation::Components(0)).is_err());
        assert!(PcaCodec::fit(&x, Normalization::None, Truncation::VarianceFraction(0.0)).is_err());
        assert!(PcaCodec::fit(&x.rows(0, 1).into_owned(), Normalization::None, Truncation::Components(1)).is_err());
    }
}
