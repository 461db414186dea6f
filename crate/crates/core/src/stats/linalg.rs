//! Least-squares plumbing shared by the estimators and diagnostics.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared residual norm, relative to the column's own norm, below which a column counts
/// as a linear combination of the earlier ones.
const COLLINEARITY_TOL: f64 = 1e-12;

/// Eigenvalues of `I − H_cc` at or below this are treated as zero.
const CR3_SINGULAR_TOL: f64 = 1e-10;

/// `X′WX` (or `X′X` when `weights` is `None`).
pub fn gram(x: &DMatrix<f64>, weights: Option<&[f64]>) -> DMatrix<f64> {
    match weights {
        None => x.tr_mul(x),
        Some(w) => {
            let mut xw = x.clone();
            for (r, &wr) in w.iter().enumerate() {
                xw.row_mut(r).scale_mut(wr);
            }
            x.tr_mul(&xw)
        }
    }
}

/// Names the columns that are (numerically) spanned by earlier columns.
pub fn collinear_columns(gram: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let k = gram.nrows();
    let scale: Vec<f64> = (0..k).map(|i| gram[(i, i)].sqrt()).collect();
    let mut l = DMatrix::<f64>::zeros(k, k);
    let mut bad = Vec::new();
    for j in 0..k {
        if scale[j] == 0.0 {
            bad.push(names[j].clone());
            continue;
        }
        let mut pivot = 1.0;
        for m in 0..j {
            pivot -= l[(j, m)] * l[(j, m)];
        }
        if pivot <= COLLINEARITY_TOL {
            bad.push(names[j].clone());
            continue;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in j + 1..k {
            if scale[i] == 0.0 {
                continue;
            }
            let mut v = gram[(i, j)] / (scale[i] * scale[j]);
            for m in 0..j {
                v -= l[(i, m)] * l[(j, m)];
            }
            l[(i, j)] = v / d;
        }
    }
    bad
}

/// Cholesky factor of a Gram matrix, erroring with the collinear column names.
pub fn factor(gram: &DMatrix<f64>, names: &[String]) -> Result<Cholesky<f64, Dyn>> {
    let bad = collinear_columns(gram, names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient { columns: bad });
    }
    Cholesky::new(gram.clone()).ok_or_else(|| Error::RankDeficient { columns: names.to_vec() })
}

/// Cluster-robust covariance flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SandwichKind {
    /// Raw cluster residual outer products.
    Cr0,
    /// Residuals inflated by `(I − H_cc)⁻¹`; errors if that block is singular.
    Cr3,
    /// As `Cr3`, with a generalized inverse that drops the singular directions of `I − H_cc`.
    Cr3Ginv,
}

impl SandwichKind {
    pub fn label(self) -> &'static str {
        match self {
            SandwichKind::Cr0 => "cr0",
            SandwichKind::Cr3 => "cr3",
            SandwichKind::Cr3Ginv => "cr3-ginv",
        }
    }
}

/// A fitted (possibly weighted) least-squares problem viewed cluster by cluster.
pub struct ClusterSandwich<'a> {
    pub x: &'a DMatrix<f64>,
    pub row_weights: Option<&'a [f64]>,
    pub bread: &'a DMatrix<f64>,
    pub bread_chol: &'a Cholesky<f64, Dyn>,
    pub clusters: &'a [usize],
    pub num_clusters: usize,
}

impl ClusterSandwich<'_> {
    /// For each response `r` and cluster `c`, the contrast score `w′ B⁻¹ X_c′ A_c e_{r,c}`,
    /// where `B` is the bread and `e_r` the working residuals of response `r`.
    /// The sandwich variance of `w′β̂_r` is the sum of squared scores over clusters.
    pub fn contrast_scores(&self, w: &DVector<f64>, residuals: &[&[f64]], kind: SandwichKind) -> Result<Vec<Vec<f64>>> {
        let k = self.x.ncols();
        let u = self.bread_chol.solve(w);
        let mut sums = vec![vec![DVector::<f64>::zeros(k); self.num_clusters]; residuals.len()];
        let mut blocks = match kind {
            SandwichKind::Cr0 => Vec::new(),
            _ => vec![DMatrix::<f64>::zeros(k, k); self.num_clusters],
        };
        for (row, &c) in self.clusters.iter().enumerate() {
            let xr = self.x.row(row);
            for (r, e) in residuals.iter().enumerate() {
                let f = e[row] * self.row_weights.map_or(1.0, |w| w[row]);
                sums[r][c].axpy(f, &xr.transpose(), 1.0);
            }
            if !blocks.is_empty() {
                let wr = self.row_weights.map_or(1.0, |w| w[row]);
                blocks[c].ger(wr, &xr.transpose(), &xr.transpose(), 1.0);
            }
        }
        if kind == SandwichKind::Cr0 {
            return Ok(sums.iter().map(|per| per.iter().map(|s| u.dot(s)).collect()).collect());
        }
        let mut out = vec![vec![0.0; self.num_clusters]; residuals.len()];
        for c in 0..self.num_clusters {
            let adjust = self.cr3_operator(&blocks[c], c, kind)?;
            for r in 0..residuals.len() {
                out[r][c] = u.dot(&(&adjust * &sums[r][c]));
            }
        }
        Ok(out)
    }

    /// The `K×K` map `s_c ↦ X_c′(I − H_cc)⁻¹e_c` expressed through `G_c = X_c′X_c`, so no
    /// `n_c × n_c` matrix is ever formed.
    fn cr3_operator(&self, block: &DMatrix<f64>, cluster: usize, kind: SandwichKind) -> Result<DMatrix<f64>> {
        let k = block.nrows();
        let eig = SymmetricEigen::new(block.clone());
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..k).filter(|&i| eig.eigenvalues[i] > 1e-12 * top && top > 0.0).collect();
        if keep.is_empty() {
            return Ok(DMatrix::zeros(k, k));
        }
        // X_c = U S V′ restricted to the kept directions; VS has columns v_i * s_i.
        let vs = DMatrix::from_fn(k, keep.len(), |i, m| eig.eigenvectors[(i, keep[m])] * eig.eigenvalues[keep[m]].sqrt());
        let v_sinv = DMatrix::from_fn(k, keep.len(), |i, m| eig.eigenvectors[(i, keep[m])] / eig.eigenvalues[keep[m]].sqrt());
        let b = vs.tr_mul(&self.bread_chol.solve(&vs));
        let inner = DMatrix::<f64>::identity(keep.len(), keep.len()) - b;
        let inner = SymmetricEigen::new(0.5 * (&inner + inner.transpose()));
        let mut inv = DMatrix::<f64>::zeros(keep.len(), keep.len());
        for m in 0..keep.len() {
            let mu = inner.eigenvalues[m];
            if mu <= CR3_SINGULAR_TOL {
                if kind == SandwichKind::Cr3 {
                    return Err(Error::Cr3Singular { cluster });
                }
                continue;
            }
            let p = inner.eigenvectors.column(m);
            inv.ger(1.0 / mu, &p, &p, 1.0);
        }
        Ok(&vs * inv * v_sinv.transpose())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn flags_dependent_columns() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 2.0, 3.0, 1.0, 3.0, 4.0]);
        assert_eq!(collinear_columns(&gram(&x, None), &names(3)), vec!["c2".to_string()]);
        let ok = x.columns(0, 2).into_owned();
        assert!(collinear_columns(&gram(&ok, None), &names(2)).is_empty());
        let zero = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(collinear_columns(&gram(&zero, None), &names(2)), vec!["c1".to_string()]);
    }

    /// Dense oracle: forms `H_cc` explicitly and inverts `I − H_cc`.
    fn dense_cr3(x: &DMatrix<f64>, e: &[f64], clusters: &[usize], w: &DVector<f64>) -> f64 {
        let m = gram(x, None).try_inverse().unwrap();
        let n_clusters = clusters.iter().max().unwrap() + 1;
        let mut total = 0.0;
        for c in 0..n_clusters {
            let rows: Vec<usize> = (0..x.nrows()).filter(|&r| clusters[r] == c).collect();
            let xc = x.select_rows(&rows);
            let ec = DVector::from_iterator(rows.len(), rows.iter().map(|&r| e[r]));
            let h = &xc * &m * xc.transpose();
            let a = (DMatrix::identity(rows.len(), rows.len()) - h).try_inverse().unwrap();
            let s = xc.transpose() * a * ec;
            total += (w.transpose() * &m * s)[(0, 0)].powi(2);
        }
        total
    }

    #[test]
    fn cr3_matches_dense_oracle() {
        let n = 24;
        let clusters: Vec<usize> = (0..n).map(|r| r % 4).collect();
        let x = DMatrix::from_fn(n, 3, |r, c| match c {
            0 => 1.0,
            1 => ((r * 7 % 11) as f64).sin(),
            _ => (r as f64 * 0.37).cos(),
        });
        let e: Vec<f64> = (0..n).map(|r| ((r * r) as f64 * 0.13).sin()).collect();
        let g = gram(&x, None);
        let chol = factor(&g, &names(3)).unwrap();
        let w = DVector::from_vec(vec![0.2, 1.0, -0.5]);
        let sw = ClusterSandwich { x: &x, row_weights: None, bread: &g, bread_chol: &chol, clusters: &clusters, num_clusters: 4 };
        for kind in [SandwichKind::Cr3, SandwichKind::Cr3Ginv] {
            let scores = sw.contrast_scores(&w, &[&e], kind).unwrap();
            let v: f64 = scores[0].iter().map(|s| s * s).sum();
            let oracle = dense_cr3(&x, &e, &clusters, &w);
            assert!((v - oracle).abs() < 1e-10 * oracle, "{v} vs {oracle}");
        }
    }

    #[test]
    fn saturating_cluster_is_singular_for_strict_cr3() {
        // the third column is nonzero only in cluster 0
        let clusters = vec![0, 0, 1, 1, 2, 2];
        let x = DMatrix::from_row_slice(6, 2, &[1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let g = gram(&x, None);
        let chol = factor(&g, &names(2)).unwrap();
        let sw = ClusterSandwich { x: &x, row_weights: None, bread: &g, bread_chol: &chol, clusters: &clusters, num_clusters: 3 };
        let e = [0.1, -0.1, 0.3, -0.2, 0.05, -0.15];
        let w = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(sw.contrast_scores(&w, &[&e], SandwichKind::Cr3), Err(Error::Cr3Singular { cluster: 0 })));
        let scores = sw.contrast_scores(&w, &[&e], SandwichKind::Cr3Ginv).unwrap();
        assert!(scores[0].iter().all(|s| s.is_finite()));
    }
}
