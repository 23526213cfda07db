use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    Identity,
    Standardize,
    Normalize01,
    MaxAbs,
    /// Standardizes, then appends every degree-2 monomial.
    QuadraticFeatures,
}

impl ScaleKind {
    fn tag(self) -> u8 {
        match self {
            ScaleKind::Identity => 0,
            ScaleKind::Standardize => 1,
            ScaleKind::Normalize01 => 2,
            ScaleKind::MaxAbs => 3,
            ScaleKind::QuadraticFeatures => 4,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        Some(match t {
            0 => ScaleKind::Identity,
            1 => ScaleKind::Standardize,
            2 => ScaleKind::Normalize01,
            3 => ScaleKind::MaxAbs,
            4 => ScaleKind::QuadraticFeatures,
            _ => return None,
        })
    }
}

/// Column-wise affine scaling `(x - shift) / scale`, optionally preceded by
/// `log10` on selected columns and followed by quadratic expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub kind: ScaleKind,
    /// Columns to put on a log10 scale when all their fitted values are > 0.
    log_candidates: Vec<usize>,
    /// Per-column flag fixed at fit time.
    log_cols: Vec<bool>,
    shift: Array1<f64>,
    scale: Array1<f64>,
    fitted: bool,
}

impl Preprocessor {
    pub fn new(kind: ScaleKind) -> Self {
        Preprocessor {
            kind,
            log_candidates: Vec::new(),
            log_cols: Vec::new(),
            shift: Array1::zeros(0),
            scale: Array1::zeros(0),
            fitted: false,
        }
    }

    /// Requests `log10` on `cols`. A column with any value <= 0 at fit time stays linear.
    pub fn with_log10(mut self, cols: &[usize]) -> Self {
        self.log_candidates = cols.to_vec();
        self
    }

    /// Columns actually log-transformed (known after fit).
    pub fn log_columns(&self) -> Vec<usize> {
        (0..self.log_cols.len()).filter(|&j| self.log_cols[j]).collect()
    }

    fn apply_log(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut out = x.to_owned();
        for (j, &on) in self.log_cols.iter().enumerate() {
            if on {
                for v in out.column_mut(j) {
                    if !(*v > 0.0) {
                        return Err(Error::invalid(format!("column {j} is log-scaled but got {v}")));
                    }
                    *v = v.log10();
                }
            }
        }
        Ok(out)
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    /// Input width seen at fit time.
    pub fn input_width(&self) -> usize {
        self.shift.len()
    }

    pub fn output_width(&self) -> usize {
        let d = self.shift.len();
        match self.kind {
            ScaleKind::QuadraticFeatures => d + d * (d + 1) / 2,
            _ => d,
        }
    }

    pub fn fit(&mut self, x: ArrayView2<'_, f64>) -> Result<()> {
        let (n, d) = x.dim();
        if n == 0 || d == 0 {
            return Err(Error::EmptyDataset("preprocessor fit on an empty matrix".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        self.log_cols = (0..d)
            .map(|j| self.log_candidates.contains(&j) && x.column(j).iter().all(|&v| v > 0.0))
            .collect();
        let logged = self.apply_log(x)?;
        let x = logged.view();
        let (shift, scale) = match self.kind {
            ScaleKind::Identity => (Array1::zeros(d), Array1::ones(d)),
            ScaleKind::Standardize | ScaleKind::QuadraticFeatures => {
                let mean = x.mean_axis(Axis(0)).expect("n > 0");
                let std = x.std_axis(Axis(0), 0.0).mapv(|s| if s < STD_FLOOR { 1.0 } else { s });
                (mean, std)
            }
            ScaleKind::Normalize01 => {
                let lo = x.fold_axis(Axis(0), f64::INFINITY, |a, b| a.min(*b));
                let hi = x.fold_axis(Axis(0), f64::NEG_INFINITY, |a, b| a.max(*b));
                let range = (&hi - &lo).mapv(|r| if r < STD_FLOOR { 1.0 } else { r });
                (lo, range)
            }
            ScaleKind::MaxAbs => {
                let m = x.fold_axis(Axis(0), 0.0f64, |a, b| a.max(b.abs()));
                (Array1::zeros(d), m.mapv(|v| if v < STD_FLOOR { 1.0 } else { v }))
            }
        };
        self.shift = shift;
        self.scale = scale;
        self.fitted = true;
        Ok(())
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        if x.ncols() != self.shift.len() {
            return Err(Error::invalid(format!(
                "feature width {} does not match fitted width {}",
                x.ncols(),
                self.shift.len()
            )));
        }
        let z = (&self.apply_log(x)? - &self.shift) / &self.scale;
        Ok(match self.kind {
            ScaleKind::QuadraticFeatures => quadratic(z.view()),
            _ => z,
        })
    }

    pub fn fit_transform(&mut self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.fit(x)?;
        self.transform(x)
    }

    /// Undoes the scaling; for quadratic features only the linear block is used.
    pub fn inverse_transform(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        let d = self.shift.len();
        if z.ncols() != self.output_width() {
            return Err(Error::invalid("width does not match the transformed width"));
        }
        let lin = z.slice(s![.., ..d]);
        let mut x = &lin * &self.scale + &self.shift;
        for (j, &on) in self.log_cols.iter().enumerate() {
            if on {
                x.column_mut(j).mapv_inplace(|v| 10f64.powf(v));
            }
        }
        Ok(x)
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u8(self.kind.tag());
        w.bool(self.fitted);
        w.usizes(&self.log_candidates);
        w.usizes(&self.log_columns());
        w.f64s(self.shift.as_slice().expect("contiguous"));
        w.f64s(self.scale.as_slice().expect("contiguous"));
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let tag = r.u8()?;
        let kind = ScaleKind::from_tag(tag).ok_or_else(|| r.fail(format!("unknown scaling tag {tag}")))?;
        let fitted = r.bool()?;
        let log_candidates = r.usizes()?;
        let logged = r.usizes()?;
        let shift = Array1::from(r.f64s()?);
        let scale = Array1::from(r.f64s()?);
        if shift.len() != scale.len() || logged.iter().any(|&j| j >= shift.len()) {
            return Err(r.fail("scaling statistics have inconsistent lengths"));
        }
        let log_cols = (0..shift.len()).map(|j| logged.contains(&j)).collect();
        Ok(Preprocessor { kind, log_candidates, log_cols, shift, scale, fitted })
    }
}

/// `(x_1..x_d, x_i·x_j for i ≤ j)` with the products in row-major upper-triangle order.
/// For two features this is `(a, b, a², ab, b²)`.
pub fn quadratic(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut out = Array2::zeros((n, d + d * (d + 1) / 2));
    for (r, row) in x.outer_iter().enumerate() {
        let mut k = 0;
        for i in 0..d {
            out[[r, k]] = row[i];
            k += 1;
        }
        for i in 0..d {
            for j in i..d {
                out[[r, k]] = row[i] * row[j];
                k += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn standardize_hand_example() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let z = Preprocessor::new(ScaleKind::Standardize).fit_transform(x.view()).unwrap();
        let expect = 1.5f64.sqrt();
        assert!((z[[0, 0]] + expect).abs() < 1e-12);
        assert!(z[[1, 0]].abs() < 1e-12);
        assert!((z[[2, 0]] - expect).abs() < 1e-12);
        assert!((z[[0, 0]] + 1.2247).abs() < 1e-4);
        assert!(z.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn log_columns_round_trip() {
        let x = array![[1e-3, 0.0], [1e-1, 2.0], [1e-2, 4.0]];
        let mut p = Preprocessor::new(ScaleKind::Standardize).with_log10(&[0, 1]);
        let z = p.fit_transform(x.view()).unwrap();
        assert_eq!(p.log_columns(), vec![0]);
        assert!((z[[2, 0]]).abs() < 1e-12);
        let back = p.inverse_transform(z.view()).unwrap();
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        assert!(p.transform(array![[-1.0, 0.0]].view()).is_err());
    }

    #[test]
    fn quadratic_order_is_fixed() {
        let q = quadratic(array![[2.0, 3.0]].view());
        assert_eq!(q, array![[2.0, 3.0, 4.0, 6.0, 9.0]]);
    }

    #[test]
    fn transform_before_fit_is_an_error() {
        let p = Preprocessor::new(ScaleKind::MaxAbs);
        assert!(matches!(p.transform(array![[1.0]].view()), Err(Error::NotFitted)));
    }

    #[test]
    fn ranges_after_normalize_and_maxabs() {
        let x = array![[-4.0, 1.0], [2.0, 3.0], [1.0, 2.0]];
        let z = Preprocessor::new(ScaleKind::Normalize01).fit_transform(x.view()).unwrap();
        for c in z.columns() {
            let lo = c.fold(f64::INFINITY, |a, &b| a.min(b));
            let hi = c.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            assert_eq!((lo, hi), (0.0, 1.0));
        }
        let z = Preprocessor::new(ScaleKind::MaxAbs).fit_transform(x.view()).unwrap();
        for c in z.columns() {
            assert_eq!(c.fold(0.0, |a: f64, &b| a.max(b.abs())), 1.0);
        }
    }

    fn matrix() -> impl Strategy<Value = Array2<f64>> {
        (2usize..20, 1usize..5).prop_flat_map(|(n, d)| {
            proptest::collection::vec(-1e3..1e3f64, n * d)
                .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn standardize_moments_and_round_trip(x in matrix()) {
            let mut p = Preprocessor::new(ScaleKind::Standardize);
            let z = p.fit_transform(x.view()).unwrap();
            for (j, c) in z.columns().into_iter().enumerate() {
                let raw_std = x.column(j).std(0.0);
                prop_assert!(c.mean().unwrap().abs() < 1e-10);
                if raw_std >= STD_FLOOR {
                    prop_assert!((c.std(0.0) - 1.0).abs() < 1e-10);
                }
            }
            let back = p.inverse_transform(z.view()).unwrap();
            for (a, b) in back.iter().zip(x.iter()) {
                prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
            }
        }
    }
}
