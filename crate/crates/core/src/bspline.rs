//! Uniform B-spline bases on a fixed grid.
//!
//! A basis of order `k` over `G` grid intervals on `[lower, upper]` has
//! `G + k` functions. The knot vector is extended by `k` uniformly spaced
//! knots beyond each boundary (open uniform extension), so it holds
//! `G + 2k + 1` knots in total. Inputs outside the domain are clamped to it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub grid_size: usize,
    pub order: usize,
}

impl GridSpec {
    pub fn new(lower: f64, upper: f64, grid_size: usize, order: usize) -> Self {
        Self {
            lower,
            upper,
            grid_size,
            order,
        }
    }

    /// Number of basis functions, `G + k`.
    pub fn basis_count(&self) -> usize {
        self.grid_size + self.order
    }

    pub fn knot_count(&self) -> usize {
        self.grid_size + 2 * self.order + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct BSplineBasis {
    spec: GridSpec,
    knots: Vec<f64>,
}

impl TryFrom<GridSpec> for BSplineBasis {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        Self::new(spec)
    }
}

impl From<BSplineBasis> for GridSpec {
    fn from(b: BSplineBasis) -> Self {
        b.spec
    }
}

impl BSplineBasis {
    /// Builds the extended uniform knot sequence for `spec`.
    pub fn new(spec: GridSpec) -> Result<Self> {
        if !(spec.lower < spec.upper) || !spec.lower.is_finite() || !spec.upper.is_finite() {
            return Err(Error::DegenerateDomain {
                lower: spec.lower,
                upper: spec.upper,
            });
        }
        if spec.grid_size == 0 {
            return Err(Error::InvalidShape("grid size must be positive".into()));
        }
        let h = (spec.upper - spec.lower) / spec.grid_size as f64;
        let k = spec.order as f64;
        let knots = (0..spec.knot_count())
            .map(|j| spec.lower + (j as f64 - k) * h)
            .collect();
        Ok(Self { spec, knots })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn order(&self) -> usize {
        self.spec.order
    }

    pub fn len(&self) -> usize {
        self.spec.basis_count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.spec.lower, self.spec.upper)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.spec.lower && x <= self.spec.upper
    }

    /// Knot span index `j` with `t_j <= x < t_{j+1}`, restricted to the
    /// in-domain spans `k..=G+k-1` so the right boundary is closed.
    fn span(&self, x: f64) -> usize {
        let k = self.spec.order;
        let g = self.spec.grid_size;
        let h = (self.spec.upper - self.spec.lower) / g as f64;
        let mut j = k + (((x - self.spec.lower) / h).floor().max(0.0) as usize).min(g - 1);
        // floor() can land one span off when x sits on a knot up to rounding
        while j > k && x < self.knots[j] {
            j -= 1;
        }
        while j < g + k - 1 && x >= self.knots[j + 1] {
            j += 1;
        }
        j
    }

    /// Triangular Cox-de Boor table up to degree `degree` on span `j`;
    /// `out[0..=degree]` receives the functions `j-degree ..= j`.
    fn local_values(&self, j: usize, x: f64, degree: usize, out: &mut [f64]) {
        let t = &self.knots;
        let mut left = [0.0f64; 16];
        let mut right = [0.0f64; 16];
        assert!(degree < left.len(), "spline order too large");
        out[0] = 1.0;
        for r in 1..=degree {
            left[r] = x - t[j + 1 - r];
            right[r] = t[j + r] - x;
            let mut saved = 0.0;
            for s in 0..r {
                let tmp = out[s] / (right[s + 1] + left[r - s]);
                out[s] = saved + right[s + 1] * tmp;
                saved = left[r - s] * tmp;
            }
            out[r] = saved;
        }
    }

    /// Evaluates the `k + 1` possibly-nonzero functions at (clamped) `x`.
    /// Writes them to `out[..=k]` and returns the index of the first one.
    pub fn eval_local(&self, x: f64, out: &mut [f64]) -> usize {
        let x = self.clamp(x);
        let k = self.spec.order;
        let j = self.span(x);
        self.local_values(j, x, k, out);
        j - k
    }

    /// Like [`eval_local`](Self::eval_local) but also writes d/dx of each
    /// local function into `deriv`. For `k = 0` the derivatives are zero.
    pub fn eval_local_with_derivative(&self, x: f64, vals: &mut [f64], deriv: &mut [f64]) -> usize {
        let x = self.clamp(x);
        let k = self.spec.order;
        let j = self.span(x);
        if k == 0 {
            vals[0] = 1.0;
            deriv[0] = 0.0;
            return j;
        }
        // degree k-1 values for functions j-k+1 ..= j
        let mut lower = [0.0f64; 16];
        self.local_values(j, x, k - 1, &mut lower);
        let t = &self.knots;
        let kf = k as f64;
        for (s, d) in deriv.iter_mut().take(k + 1).enumerate() {
            let i = j - k + s;
            let a = if s >= 1 { lower[s - 1] } else { 0.0 };
            let b = if s < k { lower[s] } else { 0.0 };
            *d = kf * a / (t[i + k] - t[i]) - kf * b / (t[i + k + 1] - t[i + 1]);
        }
        self.local_values(j, x, k, vals);
        j - k
    }

    /// All `G + k` basis values at `x` (clamped into the domain).
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let k = self.spec.order;
        let mut local = vec![0.0; k + 1];
        let start = self.eval_local(x, &mut local);
        let mut full = vec![0.0; self.len()];
        full[start..start + k + 1].copy_from_slice(&local);
        full
    }

    /// All `G + k` basis derivatives at `x` (clamped into the domain).
    pub fn eval_derivative(&self, x: f64) -> Result<Vec<f64>> {
        let k = self.spec.order;
        if k == 0 {
            return Err(Error::OrderTooLow);
        }
        let mut vals = vec![0.0; k + 1];
        let mut der = vec![0.0; k + 1];
        let start = self.eval_local_with_derivative(x, &mut vals, &mut der);
        let mut full = vec![0.0; self.len()];
        full[start..start + k + 1].copy_from_slice(&der);
        Ok(full)
    }

    /// Greville abscissae: coefficients that make the spline reproduce `x`
    /// exactly on the domain (order >= 1).
    pub fn greville(&self) -> Vec<f64> {
        let k = self.spec.order;
        if k == 0 {
            // midpoints of the supporting intervals
            return (0..self.len())
                .map(|i| 0.5 * (self.knots[i] + self.knots[i + 1]))
                .collect();
        }
        (0..self.len())
            .map(|i| self.knots[i + 1..=i + k].iter().sum::<f64>() / k as f64)
            .collect()
    }
}
