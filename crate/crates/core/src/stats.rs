use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample mean with its 95% normal confidence radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// `1.96 · sd / √n`; `+∞` for a single sample.
    pub ci95: f64,
    /// `sd / √n`; `+∞` for a single sample.
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    /// Standard error to credit in pass thresholds. A single path carries no
    /// spread estimate, so it is credited nothing.
    pub fn threshold_stderr(&self) -> f64 {
        if self.n <= 1 {
            0.0
        } else {
            self.stderr
        }
    }
}

pub fn estimate_expectation(values: &[f64]) -> Result<Estimate> {
    let n = values.len();
    if n == 0 {
        return Err(Error::InvalidConfig("cannot estimate an expectation from no samples".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(Estimate {
            mean,
            ci95: f64::INFINITY,
            stderr: f64::INFINITY,
            n,
        });
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let stderr = (var / n as f64).sqrt();
    Ok(Estimate {
        mean,
        ci95: 1.96 * stderr,
        stderr,
        n,
    })
}

/// Least-squares line through `(x_i, y_i)`: returns `(slope, intercept, rms residual)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    (slope, intercept, (rss / n).sqrt())
}
