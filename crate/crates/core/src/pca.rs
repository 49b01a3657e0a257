//! Principal component baseline on the stacked intensity matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `N x K`.
    pub scores: DMatrix<f64>,
    /// `K x V`, orthonormal rows.
    pub components: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
}

impl PcaModel {
    pub fn rank(&self) -> usize {
        self.components.nrows()
    }

    /// `mean + scores · components`, one row per input row. May be negative.
    pub fn reconstruction(&self) -> DMatrix<f64> {
        let mut r = &self.scores * &self.components;
        for mut row in r.row_iter_mut() {
            row += self.mean.transpose();
        }
        r
    }

    pub fn explained_ratio(&self) -> f64 {
        if self.total_variance == 0.0 {
            return 1.0;
        }
        self.explained_variance.iter().sum::<f64>() / self.total_variance
    }
}

/// Top-`k` principal components. Each component is signed so its
/// largest-magnitude entry is positive.
pub fn fit_pca(data: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    let (n, v) = data.shape();
    let max = n.saturating_sub(1).min(v);
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { k, max });
    }
    let mean = DVector::from_iterator(v, data.column_iter().map(|c| c.mean()));
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let denom = (n - 1) as f64;
    let mut components = DMatrix::zeros(k, v);
    let mut explained_variance = Vec::with_capacity(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let mut comp = v_t.row(idx).into_owned();
        let pivot = comp
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            comp.neg_mut();
        }
        components.set_row(row, &comp);
        explained_variance.push(svd.singular_values[idx].powi(2) / denom);
    }
    let scores = &centered * components.transpose();
    let total_variance = centered.norm_squared() / denom;
    Ok(PcaModel {
        mean,
        scores,
        components,
        explained_variance,
        total_variance,
    })
}
