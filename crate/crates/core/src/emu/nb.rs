//! Gaussian naive Bayes with streaming (batched) moment updates.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

/// Count, mean and sum of squared deviations, merged pairwise.
#[derive(Debug, Clone, PartialEq)]
struct Moments {
    n: f64,
    mean: Array1<f64>,
    m2: Array1<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Moments { n: 0.0, mean: Array1::zeros(d), m2: Array1::zeros(d) }
    }

    fn merge_batch(&mut self, x: ArrayView2<'_, f64>) {
        let nb = x.nrows() as f64;
        if nb == 0.0 {
            return;
        }
        let mb = x.mean_axis(Axis(0)).expect("rows");
        let m2b = (&x - &mb).mapv(|v| v * v).sum_axis(Axis(0));
        let n = self.n + nb;
        let delta = &mb - &self.mean;
        self.mean = &self.mean + &(&delta * (nb / n));
        self.m2 = &self.m2 + &m2b + &(delta.mapv(|v| v * v) * (self.n * nb / n));
        self.n = n;
    }

    fn variance(&self) -> Array1<f64> {
        if self.n > 0.0 {
            &self.m2 / self.n
        } else {
            Array1::zeros(self.m2.len())
        }
    }
}

/// Fitted statistics. Variances exclude smoothing; the smoothing term
/// `smoothing · max_j Var(x_j)` over all data seen is added at prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNbModel {
    pub classes: Vec<usize>,
    pub smoothing: f64,
    /// Fixed priors; `None` means class frequencies.
    pub fixed_priors: Option<Vec<f64>>,
    per_class: Vec<Moments>,
    all: Moments,
}

impl GaussianNbModel {
    pub fn new(classes: &[usize], n_features: usize, smoothing: f64, fixed_priors: Option<Vec<f64>>) -> Result<Self> {
        let mut cls = classes.to_vec();
        cls.sort_unstable();
        cls.dedup();
        if cls.len() < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if !(smoothing >= 0.0) {
            return Err(Error::invalid("smoothing must be >= 0"));
        }
        if let Some(p) = &fixed_priors {
            if p.len() != cls.len() || p.iter().any(|v| !(*v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("priors must be one non-negative weight per class summing to 1"));
            }
        }
        Ok(GaussianNbModel {
            per_class: vec![Moments::new(n_features); cls.len()],
            classes: cls,
            smoothing,
            fixed_priors,
            all: Moments::new(n_features),
        })
    }

    pub fn n_features(&self) -> usize {
        self.all.mean.len()
    }

    /// Folds one batch into the running statistics.
    pub fn partial_fit(&mut self, x: ArrayView2<'_, f64>, y: &[usize]) -> Result<()> {
        if x.nrows() != y.len() || x.ncols() != self.n_features() {
            return Err(Error::invalid("batch shape does not match the model"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite input"));
        }
        for (k, c) in self.classes.iter().enumerate() {
            let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == *c).collect();
            self.per_class[k].merge_batch(x.select(Axis(0), &rows).view());
        }
        if let Some(bad) = y.iter().find(|c| self.classes.binary_search(c).is_err()) {
            return Err(Error::invalid(format!("label {bad} is not one of the model classes")));
        }
        self.all.merge_batch(x);
        Ok(())
    }

    pub fn counts(&self) -> Vec<f64> {
        self.per_class.iter().map(|m| m.n).collect()
    }

    pub fn means(&self) -> Array2<f64> {
        let rows: Vec<_> = self.per_class.iter().map(|m| m.mean.view()).collect();
        ndarray::stack(Axis(0), &rows).expect("same width")
    }

    /// Per-class variances without smoothing.
    pub fn variances(&self) -> Array2<f64> {
        let rows: Vec<_> = self.per_class.iter().map(|m| m.variance()).collect();
        let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
        ndarray::stack(Axis(0), &views).expect("same width")
    }

    pub fn priors(&self) -> Vec<f64> {
        match &self.fixed_priors {
            Some(p) => p.clone(),
            None => {
                let total = self.all.n;
                self.per_class.iter().map(|m| m.n / total).collect()
            }
        }
    }

    /// Normalized log posteriors, one row per input.
    pub fn log_posteriors(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::invalid(format!("expected {} features, got {}", self.n_features(), x.ncols())));
        }
        if self.per_class.iter().any(|m| m.n == 0.0) {
            return Err(Error::invalid("a class has no samples"));
        }
        let eps = self.smoothing * self.all.variance().fold(0.0f64, |a, &b| a.max(b));
        let priors = self.priors();
        let mut out = Array2::zeros((x.nrows(), self.classes.len()));
        for (k, m) in self.per_class.iter().enumerate() {
            let var = m.variance() + eps;
            let log_norm: f64 = var.iter().map(|v| -0.5 * (2.0 * std::f64::consts::PI * v).ln()).sum();
            for (i, row) in x.rows().into_iter().enumerate() {
                let q: f64 = row.iter().zip(m.mean.iter()).zip(var.iter()).map(|((xi, mu), v)| (xi - mu) * (xi - mu) / v).sum();
                out[[i, k]] = priors[k].ln() + log_norm - 0.5 * q;
            }
        }
        for mut row in out.rows_mut() {
            let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        Ok(out)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(crate::emu::logistic::argmax_rows(self.log_posteriors(x)?.view(), &self.classes))
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.usizes(&self.classes);
        w.f64(self.smoothing);
        match &self.fixed_priors {
            Some(p) => {
                w.bool(true);
                w.f64s(p);
            }
            None => w.bool(false),
        }
        for m in self.per_class.iter().chain(std::iter::once(&self.all)) {
            w.f64(m.n);
            w.f64s(m.mean.as_slice().expect("contiguous"));
            w.f64s(m.m2.as_slice().expect("contiguous"));
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let classes = r.usizes()?;
        let smoothing = r.f64()?;
        let fixed_priors = if r.bool()? { Some(r.f64s()?) } else { None };
        let read = |r: &mut Reader<'_>| -> Result<Moments> {
            Ok(Moments { n: r.f64()?, mean: Array1::from(r.f64s()?), m2: Array1::from(r.f64s()?) })
        };
        let per_class = (0..classes.len()).map(|_| read(r)).collect::<Result<Vec<_>>>()?;
        let all = read(r)?;
        Ok(GaussianNbModel { classes, smoothing, fixed_priors, per_class, all })
    }
}

pub fn fit_gaussian_nb(x: ArrayView2<'_, f64>, y: &[usize], smoothing: f64) -> Result<GaussianNbModel> {
    let mut m = GaussianNbModel::new(y, x.ncols(), smoothing, None)?;
    m.partial_fit(x, y)?;
    Ok(m)
}
