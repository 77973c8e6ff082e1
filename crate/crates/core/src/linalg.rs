use crate::error::{Error, Result};

/// Tridiagonal matrix stored by diagonals; `lower[i]` multiplies `x[i-1]` in
/// row `i` (so `lower[0]` is unused) and `upper[i]` multiplies `x[i+1]`
/// (so `upper[n-1]` is unused).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Tridiagonal {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn add_scaled(&mut self, other: &Tridiagonal, c: f64) {
        for (a, b) in self.lower.iter_mut().zip(&other.lower) {
            *a += c * b;
        }
        for (a, b) in self.diag.iter_mut().zip(&other.diag) {
            *a += c * b;
        }
        for (a, b) in self.upper.iter_mut().zip(&other.upper) {
            *a += c * b;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Thomas algorithm without pivoting. Fails on a vanishing pivot.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::Shape {
                expected: n,
                found: rhs.len(),
            });
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let scale = self
            .diag
            .iter()
            .chain(&self.lower)
            .chain(&self.upper)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * 1e-14;
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        if !pivot.is_finite() || pivot.abs() <= tiny {
            return Err(Error::SingularSystem { row: 0 });
        }
        c[0] = self.upper[0] / pivot;
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i] * c[i - 1];
            if !pivot.is_finite() || pivot.abs() <= tiny {
                return Err(Error::SingularSystem { row: i });
            }
            c[i] = if i + 1 < n { self.upper[i] / pivot } else { 0.0 };
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / pivot;
        }
        let mut x = d;
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_poisson_like_system() {
        let n = 20;
        let mut m = Tridiagonal::zeros(n);
        for i in 0..n {
            m.diag[i] = 2.5 + i as f64 * 0.01;
            m.lower[i] = -1.0;
            m.upper[i] = -1.2;
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = m.mul_vec(&x);
        let y = m.solve(&b).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn detects_singular_pivot() {
        let mut m = Tridiagonal::zeros(3);
        m.diag = vec![1.0, 1.0, 1.0];
        m.lower = vec![0.0, 1.0, 0.0];
        m.upper = vec![1.0, 0.0, 0.0];
        assert!(matches!(m.solve(&[1.0, 1.0, 1.0]), Err(Error::SingularSystem { row: 1 })));
    }
}
