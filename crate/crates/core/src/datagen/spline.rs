use crate::error::{Error, Result};

/// Natural cubic spline (zero second derivative at both ends) through
/// `(times[i], values[i])`.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    times: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots.
    curvature: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = times.len();
        if n < 2 || values.len() != n {
            return Err(Error::invalid("spline needs at least two knots with matching values"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("spline knot times must be strictly increasing"));
        }
        let mut curvature = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives (Thomas algorithm).
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 0..m {
                let h0 = times[i + 1] - times[i];
                let h1 = times[i + 2] - times[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((values[i + 2] - values[i + 1]) / h1 - (values[i + 1] - values[i]) / h0);
            }
            for i in 1..m {
                let lower = times[i + 1] - times[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            curvature[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                curvature[i + 1] = (rhs[i] - upper[i] * curvature[i + 2]) / diag[i];
            }
        }
        Ok(NaturalSpline {
            times,
            values,
            curvature,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let last = self.times.len() - 2;
        let seg = match self.times.binary_search_by(|k| k.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(last),
            Err(0) => 0,
            Err(i) => (i - 1).min(last),
        };
        let (t0, t1) = (self.times[seg], self.times[seg + 1]);
        let h = t1 - t0;
        let a = (t1 - t) / h;
        let b = (t - t0) / h;
        a * self.values[seg]
            + b * self.values[seg + 1]
            + ((a * a * a - a) * self.curvature[seg] + (b * b * b - b) * self.curvature[seg + 1]) * h * h / 6.0
    }
}
