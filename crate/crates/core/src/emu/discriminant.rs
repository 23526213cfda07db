//! Linear and quadratic discriminant analysis with Gaussian class densities.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscriminantKind {
    /// One pooled covariance: linear decision surfaces.
    Lda,
    /// Per-class covariances: quadratic decision surfaces.
    Qda,
}

#[derive(Debug, Clone)]
pub struct DiscriminantModel {
    pub kind: DiscriminantKind,
    pub classes: Vec<usize>,
    pub priors: Vec<f64>,
    pub means: Array2<f64>,
    /// One covariance for LDA, one per class for QDA, each with `tol·I` added.
    pub covariances: Vec<Array2<f64>>,
    pub tol: f64,
    factors: Vec<Cholesky<f64>>,
}

impl PartialEq for DiscriminantModel {
    fn eq(&self, o: &Self) -> bool {
        self.kind == o.kind
            && self.classes == o.classes
            && self.priors == o.priors
            && self.means == o.means
            && self.covariances == o.covariances
            && self.tol == o.tol
    }
}

fn factor_all(covs: &[Array2<f64>]) -> Result<Vec<Cholesky<f64>>> {
    covs.iter()
        .map(|c| Cholesky::factor(c.view()).ok_or_else(|| Error::Numerical("class covariance is singular; raise tol".into())))
        .collect()
}

pub fn fit_discriminant(x: ArrayView2<'_, f64>, y: &[usize], kind: DiscriminantKind, tol: f64) -> Result<DiscriminantModel> {
    let (n, d) = x.dim();
    if n != y.len() || n == 0 {
        return Err(Error::invalid("rows and labels differ or are empty"));
    }
    if !(tol >= 0.0) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("tol must be >= 0 and inputs finite"));
    }
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let k = classes.len();
    if k < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    let mut means = Array2::zeros((k, d));
    let mut scatter = Vec::with_capacity(k);
    let mut counts = Vec::with_capacity(k);
    for (ci, c) in classes.iter().enumerate() {
        let rows: Vec<usize> = (0..n).filter(|&i| y[i] == *c).collect();
        let xc = x.select(Axis(0), &rows);
        let mu = xc.mean_axis(Axis(0)).expect("class present");
        let centered = &xc - &mu;
        scatter.push(centered.t().dot(&centered));
        means.row_mut(ci).assign(&mu);
        counts.push(rows.len());
    }
    let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let add_tol = |mut c: Array2<f64>| {
        for i in 0..d {
            c[[i, i]] += tol;
        }
        c
    };
    let covariances = match kind {
        DiscriminantKind::Lda => {
            if n <= k {
                return Err(Error::invalid("LDA needs more samples than classes"));
            }
            let pooled = scatter.iter().fold(Array2::zeros((d, d)), |a, s| a + s) / (n - k) as f64;
            vec![add_tol(pooled)]
        }
        DiscriminantKind::Qda => {
            if let Some(ci) = counts.iter().position(|&c| c <= d) {
                return Err(Error::invalid(format!("QDA class {} has {} samples for {d} features", classes[ci], counts[ci])));
            }
            scatter.into_iter().zip(&counts).map(|(s, &c)| add_tol(s / (c - 1) as f64)).collect()
        }
    };
    let factors = factor_all(&covariances)?;
    Ok(DiscriminantModel { kind, classes, priors, means, covariances, tol, factors })
}

impl DiscriminantModel {
    pub fn n_features(&self) -> usize {
        self.means.ncols()
    }

    /// Posterior class probabilities from the Gaussian class densities.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::invalid(format!("expected {} features, got {}", self.n_features(), x.ncols())));
        }
        let k = self.classes.len();
        let mut out = Array2::zeros((x.nrows(), k));
        for c in 0..k {
            let f = &self.factors[if self.kind == DiscriminantKind::Lda { 0 } else { c }];
            let half_log_det = 0.5 * f.log_det();
            let mu = self.means.row(c);
            for (i, row) in x.rows().into_iter().enumerate() {
                let z = f.forward((&row - &mu).view());
                out[[i, c]] = self.priors[c].ln() - half_log_det - 0.5 * z.dot(&z);
            }
        }
        crate::emu::logistic::softmax_rows(&mut out);
        Ok(out)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(crate::emu::logistic::argmax_rows(self.predict_proba(x)?.view(), &self.classes))
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u8(match self.kind {
            DiscriminantKind::Lda => 0,
            DiscriminantKind::Qda => 1,
        });
        w.usizes(&self.classes);
        w.f64s(&self.priors);
        w.usize(self.means.ncols());
        w.f64s(self.means.as_standard_layout().as_slice().expect("contiguous"));
        w.usize(self.covariances.len());
        for c in &self.covariances {
            w.f64s(c.as_standard_layout().as_slice().expect("contiguous"));
        }
        w.f64(self.tol);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let kind = match r.u8()? {
            0 => DiscriminantKind::Lda,
            1 => DiscriminantKind::Qda,
            t => return Err(r.fail(format!("unknown discriminant tag {t}"))),
        };
        let classes = r.usizes()?;
        let priors = r.f64s()?;
        let d = r.usize()?;
        let means = Array2::from_shape_vec((classes.len(), d), r.f64s()?).map_err(|_| r.fail("means shape"))?;
        let nc = r.usize()?;
        let covariances = (0..nc)
            .map(|_| Array2::from_shape_vec((d, d), r.f64s()?).map_err(|_| r.fail("covariance shape")))
            .collect::<Result<Vec<_>>>()?;
        let tol = r.f64()?;
        let factors = factor_all(&covariances)?;
        Ok(DiscriminantModel { kind, classes, priors, means, covariances, tol, factors })
    }
}

/// Mean vector helper for tests and diagnostics.
pub fn class_mean(x: ArrayView2<'_, f64>, y: &[usize], class: usize) -> Option<Array1<f64>> {
    let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
    x.select(Axis(0), &rows).mean_axis(Axis(0))
}
