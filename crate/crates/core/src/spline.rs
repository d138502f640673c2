//! Natural cubic spline interpolation over uniformly indexed knots.
//!
//! Solves the standard tridiagonal system for the knot second derivatives with
//! the natural boundary condition (zero curvature at both ends), then evaluates
//! the piecewise cubic between knots.

/// Natural cubic spline through `(i, y[i])` for `i = 0..n`.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    y: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    /// Fits the spline. Needs at least two knots; with exactly two it reduces
    /// to the linear segment.
    pub fn fit(y: &[f64]) -> Self {
        let n = y.len();
        assert!(n >= 2, "spline needs at least 2 knots");
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior knots; unit knot spacing.
            let dim = n - 2;
            let mut diag = vec![4.0; dim];
            let mut rhs = vec![0.0; dim];
            for i in 0..dim {
                rhs[i] = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]);
            }
            for i in 1..dim {
                let factor = 1.0 / diag[i - 1];
                diag[i] -= factor;
                rhs[i] -= factor * rhs[i - 1];
            }
            m[dim] = rhs[dim - 1] / diag[dim - 1];
            for i in (0..dim - 1).rev() {
                m[i + 1] = (rhs[i] - m[i + 2]) / diag[i];
            }
        }
        Self { y: y.to_vec(), m }
    }

    /// Number of knots.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Evaluates the spline at `x` (knot units). Knot values are reproduced
    /// exactly; outside `[0, n-1]` the boundary cubic extrapolates.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let i = (x.floor() as isize).clamp(0, n as isize - 2) as usize;
        let t = x - i as f64;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        // Hermite-style form for unit spacing with knot second derivatives.
        y0 * (1.0 - t) + y1 * t + (t * t * t - t) / 6.0 * m1 + ((1.0 - t).powi(3) - (1.0 - t)) / 6.0 * m0
    }
}
