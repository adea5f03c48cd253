//! Kolmogorov-Arnold network: spline-edge activations, forward evaluation,
//! layer regularizers and analytic gradients of the training loss.
//!
//! Every edge computes `phi(x) = w_b * silu(x) + w_s * sum_i c_i B_i(x)` and
//! every node sums its incoming edges. Parameters flatten layer-major, then
//! edge `(q, p)` row-major, then `[w_b, w_s, c_0, .., c_{G+k-1}]`. Inactive
//! edges keep their slots but contribute nothing and receive zero gradient.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bspline::{BSplineBasis, GridSpec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::par;

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn silu_derivative(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationEdge {
    pub w_b: f64,
    pub w_s: f64,
    pub coeffs: Vec<f64>,
    pub basis: BSplineBasis,
    pub active: bool,
}

/// Everything the backward pass needs about one edge at one input.
#[derive(Debug, Clone, Copy, Default)]
struct EdgeLocal {
    phi: f64,
    dphi_dx: f64,
    silu: f64,
    spline: f64,
    start: usize,
}

impl ActivationEdge {
    pub fn new(basis: BSplineBasis, w_b: f64, w_s: f64, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::ShapeMismatch {
                expected: basis.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self {
            w_b,
            w_s,
            coeffs,
            basis,
            active: true,
        })
    }

    pub fn param_count(&self) -> usize {
        2 + self.coeffs.len()
    }

    pub fn spline(&self, x: f64) -> f64 {
        let k = self.basis.order();
        let mut vals = [0.0; 16];
        let start = self.basis.eval_local(x, &mut vals);
        vals[..=k]
            .iter()
            .zip(&self.coeffs[start..=start + k])
            .map(|(b, c)| b * c)
            .sum()
    }

    /// `w_b * silu(x) + w_s * spline(x)`; zero when the edge is inactive.
    pub fn eval(&self, x: f64) -> f64 {
        if !self.active {
            return 0.0;
        }
        self.w_b * silu(x) + self.w_s * self.spline(x)
    }

    fn eval_local(&self, x: f64, vals: &mut [f64]) -> EdgeLocal {
        let k = self.basis.order();
        let mut der = [0.0; 16];
        let start = self.basis.eval_local_with_derivative(x, vals, &mut der);
        let coeffs = &self.coeffs[start..=start + k];
        let spline: f64 = vals[..=k].iter().zip(coeffs).map(|(b, c)| b * c).sum();
        // clamped inputs see a flat spline
        let dspline = if self.basis.contains(x) {
            der[..=k].iter().zip(coeffs).map(|(d, c)| d * c).sum()
        } else {
            0.0
        };
        let s = silu(x);
        EdgeLocal {
            phi: self.w_b * s + self.w_s * spline,
            dphi_dx: self.w_b * silu_derivative(x) + self.w_s * dspline,
            silu: s,
            spline,
            start,
        }
    }

    /// Makes the edge compute `slope * x + intercept` exactly on its grid
    /// domain (order >= 1): `w_b = 0`, `w_s = 1`, Greville coefficients.
    pub fn set_affine(&mut self, slope: f64, intercept: f64) {
        self.w_b = 0.0;
        self.w_s = 1.0;
        self.coeffs = self
            .basis
            .greville()
            .into_iter()
            .map(|g| slope * g + intercept)
            .collect();
    }

    /// Least-squares fit of the spline coefficients so that the edge matches
    /// `ys` at `xs`, holding `w_b` and `w_s` fixed.
    pub fn fit_spline_lstsq(&mut self, xs: &[f64], ys: &[f64]) -> Result<()> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch {
                left: xs.len(),
                right: ys.len(),
            });
        }
        if xs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if self.w_s == 0.0 {
            return Err(Error::SingularFit("spline weight is zero".into()));
        }
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| self.basis.eval(x)).collect();
        let target: Vec<f64> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| (y - self.w_b * silu(x)) / self.w_s)
            .collect();
        self.coeffs = linalg::lstsq_svd(&linalg::design(&rows, false), &target)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanLayer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `(q, p)`: index `q * n_out + p`.
    pub edges: Vec<ActivationEdge>,
}

impl KanLayer {
    pub fn edge(&self, q: usize, p: usize) -> &ActivationEdge {
        &self.edges[q * self.n_out + p]
    }

    pub fn edge_mut(&mut self, q: usize, p: usize) -> &mut ActivationEdge {
        &mut self.edges[q * self.n_out + p]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_out];
        for q in 0..self.n_in {
            for (p, o) in out.iter_mut().enumerate() {
                *o += self.edge(q, p).eval(x[q]);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.edges.iter().map(ActivationEdge::param_count).sum()
    }
}

/// Per-layer record of a batch pass: node inputs and edge activations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerTrace {
    pub n_in: usize,
    pub n_out: usize,
    /// `batch * n_in`, row-major by sample.
    pub inputs: Vec<f64>,
    /// `batch * n_in * n_out`, row-major by sample then edge index.
    pub activations: Vec<f64>,
}

impl LayerTrace {
    pub fn batch(&self) -> usize {
        self.inputs.len().checked_div(self.n_in).unwrap_or(0)
    }

    pub fn activation(&self, sample: usize, q: usize, p: usize) -> f64 {
        self.activations[sample * self.n_in * self.n_out + q * self.n_out + p]
    }

    /// Samples `(x, phi(x))` seen by edge `(q, p)`.
    pub fn edge_samples(&self, q: usize, p: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.batch();
        let xs = (0..n).map(|s| self.inputs[s * self.n_in + q]).collect();
        let ys = (0..n).map(|s| self.activation(s, q, p)).collect();
        (xs, ys)
    }

    /// Mean absolute activation per edge; inactive edges report 0.
    pub fn edge_norms(&self, layer: &KanLayer) -> Result<Vec<f64>> {
        let n = self.batch();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let e = self.n_in * self.n_out;
        let mut norms = vec![0.0; e];
        for s in 0..n {
            for (j, norm) in norms.iter_mut().enumerate() {
                *norm += self.activations[s * e + j].abs();
            }
        }
        for (j, norm) in norms.iter_mut().enumerate() {
            *norm = if layer.edges[j].active { *norm / n as f64 } else { 0.0 };
        }
        Ok(norms)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    pub outputs: Vec<f64>,
}

/// Sum over active edges of the mean absolute activation.
pub fn layer_l1_norm(layer: &KanLayer, trace: &LayerTrace) -> Result<f64> {
    Ok(trace.edge_norms(layer)?.iter().sum())
}

fn entropy_of(norms: &[f64]) -> Result<f64> {
    let total: f64 = norms.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(-norms
        .iter()
        .filter(|&&n| n > 0.0)
        .map(|&n| {
            let p = n / total;
            p * p.ln()
        })
        .sum::<f64>())
}

/// Entropy of the normalized edge norms of a layer (`0 ln 0 = 0`).
pub fn layer_entropy(layer: &KanLayer, trace: &LayerTrace) -> Result<f64> {
    entropy_of(&trace.edge_norms(layer)?)
}

/// Weights of the sparsity regularizer: `lambda * (mu1 * L1 + mu2 * entropy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            mu1: 1.0,
            mu2: 1.0,
        }
    }
}

impl Regularization {
    pub fn none() -> Self {
        Self::default()
    }
}

/// Initialization of a fresh network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkInit {
    pub grid_size: usize,
    pub order: usize,
    pub seed: u64,
    /// Spline coefficients are drawn from `N(0, coeff_scale^2 / (G + k))`.
    pub coeff_scale: f64,
}

impl Default for NetworkInit {
    fn default() -> Self {
        Self {
            grid_size: 3,
            order: 3,
            seed: 0,
            coeff_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanNetwork {
    pub shape: Vec<usize>,
    pub layers: Vec<KanLayer>,
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.len() < 2 {
        return Err(Error::InvalidShape("need at least an input and an output width".into()));
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape("layer widths must be positive".into()));
    }
    if *shape.last().unwrap() != 1 {
        return Err(Error::InvalidShape(
            "final width must be 1 for scalar forecasting".into(),
        ));
    }
    Ok(())
}

fn observed_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        // constant input: any non-degenerate domain around it will do
        (lo - 1.0, hi + 1.0)
    }
}

impl KanNetwork {
    /// Fresh network whose grid domains come from `samples`: first-layer
    /// edges use the raw feature ranges, deeper edges the node ranges after
    /// one forward pass with the initial parameters.
    pub fn init(shape: &[usize], init: &NetworkInit, samples: &[Vec<f64>]) -> Result<Self> {
        validate_shape(shape)?;
        if samples.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(bad) = samples.iter().find(|r| r.len() != shape[0]) {
            return Err(Error::ShapeMismatch {
                expected: shape[0],
                got: bad.len(),
            });
        }
        let normal = Normal::new(0.0, init.coeff_scale / ((init.grid_size + init.order) as f64).sqrt())
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
        let mut layers = Vec::with_capacity(shape.len() - 1);
        let mut current: Vec<Vec<f64>> = samples.to_vec();
        for w in shape.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let mut edges = Vec::with_capacity(n_in * n_out);
            for q in 0..n_in {
                let (lo, hi) = observed_range(current.iter().map(|r| r[q]));
                let basis = BSplineBasis::new(GridSpec::new(lo, hi, init.grid_size, init.order))?;
                for _ in 0..n_out {
                    let coeffs = (0..basis.len()).map(|_| normal.sample(&mut rng)).collect();
                    edges.push(ActivationEdge::new(basis.clone(), 1.0, 1.0, coeffs)?);
                }
            }
            let layer = KanLayer { n_in, n_out, edges };
            current = par::map_slice(&current, |r| layer.forward(r));
            layers.push(layer);
        }
        Ok(Self {
            shape: shape.to_vec(),
            layers,
        })
    }

    /// Network with every edge on the same grid domain and fixed weights;
    /// mostly useful for tests and hand-built models.
    pub fn uniform(shape: &[usize], grid: GridSpec, w_b: f64, w_s: f64) -> Result<Self> {
        validate_shape(shape)?;
        let basis = BSplineBasis::new(grid)?;
        let layers = shape
            .windows(2)
            .map(|w| {
                let edges = (0..w[0] * w[1])
                    .map(|_| ActivationEdge::new(basis.clone(), w_b, w_s, vec![0.0; basis.len()]))
                    .collect::<Result<Vec<_>>>()?;
                Ok(KanLayer {
                    n_in: w[0],
                    n_out: w[1],
                    edges,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            shape: shape.to_vec(),
            layers,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.shape[0]
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(KanLayer::param_count).sum()
    }

    /// Trainable scalars on active edges only.
    pub fn active_param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| &l.edges)
            .filter(|e| e.active)
            .map(ActivationEdge::param_count)
            .sum()
    }

    pub fn active_edge_count(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.edges).filter(|e| e.active).count()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for e in self.layers.iter().flat_map(|l| &l.edges) {
            out.push(e.w_b);
            out.push(e.w_s);
            out.extend_from_slice(&e.coeffs);
        }
        out
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::ShapeMismatch {
                expected: self.param_count(),
                got: theta.len(),
            });
        }
        let mut i = 0;
        for e in self.layers.iter_mut().flat_map(|l| &mut l.edges) {
            e.w_b = theta[i];
            e.w_s = theta[i + 1];
            let n = e.coeffs.len();
            e.coeffs.copy_from_slice(&theta[i + 2..i + 2 + n]);
            i += 2 + n;
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(Error::ShapeMismatch {
                expected: self.n_inputs(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Scalar prediction for one input row.
    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut v = x.to_vec();
        for layer in &self.layers {
            v = layer.forward(&v);
        }
        Ok(v[0])
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        for r in rows {
            self.check_input(r)?;
        }
        Ok(par::map_slice(rows, |r| {
            let mut v = r.clone();
            for layer in &self.layers {
                v = layer.forward(&v);
            }
            v[0]
        }))
    }

    /// Prediction for one row together with its single-sample trace.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, ForwardTrace)> {
        let trace = self.trace(std::slice::from_ref(&x.to_vec()))?;
        Ok((trace.outputs[0], trace))
    }

    /// Full batch trace: node inputs and activations of every layer.
    pub fn trace(&self, rows: &[Vec<f64>]) -> Result<ForwardTrace> {
        for r in rows {
            self.check_input(r)?;
        }
        let mut layers: Vec<LayerTrace> = self
            .layers
            .iter()
            .map(|l| LayerTrace {
                n_in: l.n_in,
                n_out: l.n_out,
                inputs: Vec::with_capacity(rows.len() * l.n_in),
                activations: Vec::with_capacity(rows.len() * l.n_in * l.n_out),
            })
            .collect();
        let chunks = par::map_chunks(rows.len(), par::CHUNK, |a, b| {
            let mut parts: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); self.layers.len()];
            let mut outs = Vec::with_capacity(b - a);
            for row in &rows[a..b] {
                let mut v = row.clone();
                for (l, layer) in self.layers.iter().enumerate() {
                    let mut next = vec![0.0; layer.n_out];
                    parts[l].0.extend_from_slice(&v);
                    for q in 0..layer.n_in {
                        for (p, nx) in next.iter_mut().enumerate() {
                            let a = layer.edge(q, p).eval(v[q]);
                            parts[l].1.push(a);
                            *nx += a;
                        }
                    }
                    v = next;
                }
                outs.push(v[0]);
            }
            (parts, outs)
        });
        let mut outputs = Vec::with_capacity(rows.len());
        for (parts, outs) in chunks {
            for (lt, (inp, act)) in layers.iter_mut().zip(parts) {
                lt.inputs.extend(inp);
                lt.activations.extend(act);
            }
            outputs.extend(outs);
        }
        Ok(ForwardTrace { layers, outputs })
    }

    /// Regularization value and, per layer, the derivative of the
    /// regularizer with respect to each edge norm.
    fn regularizer(&self, trace: &ForwardTrace, reg: &Regularization) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut value = 0.0;
        let mut dnorm = Vec::with_capacity(self.layers.len());
        for (layer, lt) in self.layers.iter().zip(&trace.layers) {
            let norms = lt.edge_norms(layer)?;
            let total: f64 = norms.iter().sum();
            let mut d = vec![reg.lambda * reg.mu1; norms.len()];
            value += reg.mu1 * total;
            if reg.mu2 != 0.0 && total > 0.0 {
                let s = entropy_of(&norms)?;
                value += reg.mu2 * s;
                for (dj, &nj) in d.iter_mut().zip(&norms) {
                    if nj > 0.0 {
                        *dj += reg.lambda * reg.mu2 * (-((nj / total).ln() + s) / total);
                    }
                }
            }
            for (dj, e) in d.iter_mut().zip(&layer.edges) {
                if !e.active {
                    *dj = 0.0;
                }
            }
            dnorm.push(d);
        }
        Ok((reg.lambda * value, dnorm))
    }

    fn check_batch(&self, rows: &[Vec<f64>], targets: &[f64]) -> Result<()> {
        if rows.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if rows.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: targets.len(),
            });
        }
        for r in rows {
            self.check_input(r)?;
        }
        Ok(())
    }

    /// Sum of squared prediction errors.
    pub fn sse(&self, rows: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
        self.check_batch(rows, targets)?;
        let preds = self.predict(rows)?;
        Ok(par::map_chunks(rows.len(), par::CHUNK, |a, b| {
            (a..b).map(|i| (targets[i] - preds[i]).powi(2)).sum::<f64>()
        })
        .into_iter()
        .sum())
    }

    /// `SSE + lambda * (mu1 * sum_l L1_l + mu2 * sum_l S_l)`.
    pub fn loss_total(&self, rows: &[Vec<f64>], targets: &[f64], reg: &Regularization) -> Result<f64> {
        self.check_batch(rows, targets)?;
        let trace = self.trace(rows)?;
        let sse: f64 = par::map_chunks(rows.len(), par::CHUNK, |a, b| {
            (a..b).map(|i| (targets[i] - trace.outputs[i]).powi(2)).sum::<f64>()
        })
        .into_iter()
        .sum();
        if reg.lambda == 0.0 {
            return Ok(sse);
        }
        let (r, _) = self.regularizer(&trace, reg)?;
        Ok(sse + r)
    }

    /// Gradient of [`loss_total`](Self::loss_total) in flattened parameter order.
    pub fn gradient(&self, rows: &[Vec<f64>], targets: &[f64], reg: &Regularization) -> Result<Vec<f64>> {
        Ok(self.loss_and_gradient(rows, targets, reg)?.1)
    }

    /// Loss and gradient in one pass (reverse accumulation per sample).
    pub fn loss_and_gradient(
        &self,
        rows: &[Vec<f64>],
        targets: &[f64],
        reg: &Regularization,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_batch(rows, targets)?;
        let n = rows.len();
        let (reg_value, reg_coef) = if reg.lambda != 0.0 {
            let trace = self.trace(rows)?;
            let (v, d) = self.regularizer(&trace, reg)?;
            // d(reg)/d(phi_e(s)) = d(reg)/d(norm_e) * sign(phi_e(s)) / N
            let scaled: Vec<Vec<f64>> = d
                .into_iter()
                .map(|layer| layer.into_iter().map(|x| x / n as f64).collect())
                .collect();
            (v, Some(scaled))
        } else {
            (0.0, None)
        };

        // flattened offsets of each edge
        let mut offsets: Vec<Vec<usize>> = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            let mut lo = Vec::with_capacity(layer.edges.len());
            for e in &layer.edges {
                lo.push(off);
                off += e.param_count();
            }
            offsets.push(lo);
        }
        let total_params = off;

        let partials = par::map_chunks(n, par::CHUNK, |a, b| {
            let mut grad = vec![0.0; total_params];
            let mut sse = 0.0;
            let mut locals: Vec<Vec<EdgeLocal>> = self
                .layers
                .iter()
                .map(|l| vec![EdgeLocal::default(); l.edges.len()])
                .collect();
            let mut basis_vals: Vec<Vec<[f64; 16]>> =
                self.layers.iter().map(|l| vec![[0.0; 16]; l.edges.len()]).collect();
            let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
            for i in a..b {
                inputs.clear();
                let mut v = rows[i].clone();
                for (l, layer) in self.layers.iter().enumerate() {
                    let mut next = vec![0.0; layer.n_out];
                    for q in 0..layer.n_in {
                        for p in 0..layer.n_out {
                            let j = q * layer.n_out + p;
                            let e = &layer.edges[j];
                            if !e.active {
                                locals[l][j] = EdgeLocal::default();
                                continue;
                            }
                            let loc = e.eval_local(v[q], &mut basis_vals[l][j]);
                            next[p] += loc.phi;
                            locals[l][j] = loc;
                        }
                    }
                    inputs.push(std::mem::replace(&mut v, next));
                }
                let resid = targets[i] - v[0];
                sse += resid * resid;
                let mut adj_out = vec![-2.0 * resid];
                for (l, layer) in self.layers.iter().enumerate().rev() {
                    let mut adj_in = vec![0.0; layer.n_in];
                    for q in 0..layer.n_in {
                        for p in 0..layer.n_out {
                            let j = q * layer.n_out + p;
                            let e = &layer.edges[j];
                            if !e.active {
                                continue;
                            }
                            let loc = &locals[l][j];
                            let mut adj = adj_out[p];
                            if let Some(rc) = &reg_coef {
                                adj += rc[l][j] * sign(loc.phi);
                            }
                            if adj == 0.0 {
                                continue;
                            }
                            let o = offsets[l][j];
                            grad[o] += adj * loc.silu;
                            grad[o + 1] += adj * loc.spline;
                            let k = e.basis.order();
                            let ws = adj * e.w_s;
                            for (t, bv) in basis_vals[l][j][..=k].iter().enumerate() {
                                grad[o + 2 + loc.start + t] += ws * bv;
                            }
                            adj_in[q] += adj * loc.dphi_dx;
                        }
                    }
                    adj_out = adj_in;
                }
            }
            (sse, grad)
        });

        let mut grad = vec![0.0; total_params];
        let mut sse = 0.0;
        for (s, g) in partials {
            sse += s;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let loss = sse + reg_value;
        if !loss.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        Ok((loss, grad))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let net: Self = serde_json::from_str(s)?;
        validate_shape(&net.shape)?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn grid(lo: f64, hi: f64) -> GridSpec {
        GridSpec::new(lo, hi, 3, 3)
    }

    fn random_net(shape: &[usize], seed: u64) -> (KanNetwork, Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..shape[0]).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let targets: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>().sin()).collect();
        let init = NetworkInit {
            seed,
            coeff_scale: 1.0,
            ..Default::default()
        };
        let mut net = KanNetwork::init(shape, &init, &rows).unwrap();
        let theta: Vec<f64> = net.params().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        net.set_params(&theta).unwrap();
        (net, rows, targets)
    }

    fn fd_check(net: &KanNetwork, rows: &[Vec<f64>], targets: &[f64], reg: &Regularization) {
        let g = net.gradient(rows, targets, reg).unwrap();
        let theta = net.params();
        let h = 1e-6;
        let mut probe = net.clone();
        for i in 0..theta.len() {
            let mut t = theta.clone();
            t[i] += h;
            probe.set_params(&t).unwrap();
            let up = probe.loss_total(rows, targets, reg).unwrap();
            t[i] -= 2.0 * h;
            probe.set_params(&t).unwrap();
            let dn = probe.loss_total(rows, targets, reg).unwrap();
            let fd = (up - dn) / (2.0 * h);
            let scale = g[i].abs().max(fd.abs()).max(1.0);
            assert!(
                (g[i] - fd).abs() / scale < 1e-5,
                "param {i}: analytic {} fd {}",
                g[i],
                fd
            );
        }
    }

    #[test]
    fn silu_at_origin_and_zero_weights() {
        let mut e = ActivationEdge::new(BSplineBasis::new(grid(-1.0, 1.0)).unwrap(), 1.0, 0.0, vec![0.3; 6]).unwrap();
        assert_eq!(e.eval(0.0), 0.0);
        e.w_b = 0.0;
        for x in [-3.0, 0.2, 7.0] {
            assert_eq!(e.eval(x), 0.0);
        }
    }

    #[test]
    fn least_squares_spline_reproduces_identity() {
        let basis = BSplineBasis::new(grid(-2.0, 2.0)).unwrap();
        let mut e = ActivationEdge::new(basis, 0.0, 1.0, vec![0.0; 6]).unwrap();
        let xs: Vec<f64> = (0..=40).map(|i| -2.0 + 0.1 * i as f64).collect();
        e.fit_spline_lstsq(&xs, &xs).unwrap();
        for x in [-1.77, -0.4, 0.0, 0.93, 1.5] {
            assert!((e.eval(x) - x).abs() < 1e-3);
        }
    }

    #[test]
    fn identity_pass_through_and_empty_network() {
        let mut net = KanNetwork::uniform(&[1, 1], grid(-5.0, 5.0), 0.0, 1.0).unwrap();
        net.layers[0].edges[0].set_affine(1.0, 0.0);
        let (y, trace) = net.forward(&[2.5]).unwrap();
        assert!((y - 2.5).abs() < 1e-12);
        assert_eq!(trace.layers[0].batch(), 1);
        net.layers[0].edges[0].active = false;
        assert_eq!(net.predict_one(&[2.5]).unwrap(), 0.0);
    }

    #[test]
    fn sum_of_fitted_edges() {
        let mut net = KanNetwork::uniform(&[2, 1], grid(-3.0, 3.0), 0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..=60).map(|i| -3.0 + 0.1 * i as f64).collect();
        let y1: Vec<f64> = xs.clone();
        let y2: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        net.layers[0].edge_mut(0, 0).fit_spline_lstsq(&xs, &y1).unwrap();
        net.layers[0].edge_mut(1, 0).fit_spline_lstsq(&xs, &y2).unwrap();
        assert!((net.predict_one(&[1.0, 1.5]).unwrap() - 4.0).abs() < 1e-2);
    }

    #[test]
    fn wrong_input_length() {
        let net = KanNetwork::uniform(&[2, 1], grid(0.0, 1.0), 1.0, 1.0).unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::ShapeMismatch { expected: 2, got: 1 })
        ));
    }

    fn hand_trace(acts: &[&[f64]]) -> (KanLayer, LayerTrace) {
        // one input node, one output per activation column
        let n_out = acts.len();
        let n = acts[0].len();
        let basis = BSplineBasis::new(grid(0.0, 1.0)).unwrap();
        let layer = KanLayer {
            n_in: 1,
            n_out,
            edges: (0..n_out)
                .map(|_| ActivationEdge::new(basis.clone(), 1.0, 1.0, vec![0.0; 6]).unwrap())
                .collect(),
        };
        let mut activations = Vec::new();
        for s in 0..n {
            for a in acts {
                activations.push(a[s]);
            }
        }
        let trace = LayerTrace {
            n_in: 1,
            n_out,
            inputs: vec![0.0; n],
            activations,
        };
        (layer, trace)
    }

    #[test]
    fn l1_norm_examples() {
        let (layer, t) = hand_trace(&[&[1.0, -1.0]]);
        assert_eq!(layer_l1_norm(&layer, &t).unwrap(), 1.0);
        let (mut layer, t) = hand_trace(&[&[1.0, -1.0], &[2.0, 2.0]]);
        assert_eq!(layer_l1_norm(&layer, &t).unwrap(), 3.0);
        for e in &mut layer.edges {
            e.active = false;
        }
        assert_eq!(layer_l1_norm(&layer, &t).unwrap(), 0.0);
        let empty = LayerTrace {
            n_in: 1,
            n_out: 2,
            ..Default::default()
        };
        assert!(matches!(layer_l1_norm(&layer, &empty), Err(Error::EmptyBatch)));
    }

    #[test]
    fn entropy_examples() {
        let (layer, t) = hand_trace(&[&[3.0, 3.0], &[0.0, 0.0]]);
        assert!(layer_entropy(&layer, &t).unwrap().abs() < 1e-15);
        let (layer, t) = hand_trace(&[&[1.0], &[1.0], &[1.0], &[1.0]]);
        assert!((layer_entropy(&layer, &t).unwrap() - 4f64.ln()).abs() < 1e-12);
        // -(1/4 ln 1/4 * 2 + 1/2 ln 1/2)
        let (layer, t) = hand_trace(&[&[1.0], &[1.0], &[2.0]]);
        let want = -(2.0 * 0.25 * 0.25f64.ln() + 0.5 * 0.5f64.ln());
        assert!((layer_entropy(&layer, &t).unwrap() - want).abs() < 1e-12);
        assert!((want - 1.0397).abs() < 1e-4);
        let (layer, t) = hand_trace(&[&[0.0], &[0.0]]);
        assert!(matches!(layer_entropy(&layer, &t), Err(Error::ZeroNorm)));
    }

    #[test]
    fn loss_composition() {
        let (net, rows, targets) = random_net(&[2, 2, 1], 3);
        let preds = net.predict(&rows).unwrap();
        let sse: f64 = preds.iter().zip(&targets).map(|(p, t)| (t - p).powi(2)).sum();
        let plain = net.loss_total(&rows, &targets, &Regularization::none()).unwrap();
        assert!((plain - sse).abs() < 1e-9 * sse.max(1.0));
        assert!(net.loss_total(&rows, &preds, &Regularization::none()).unwrap() < 1e-20);

        let reg = Regularization {
            lambda: 1.0,
            mu1: 1.0,
            mu2: 0.0,
        };
        let trace = net.trace(&rows).unwrap();
        let l1: f64 = net
            .layers
            .iter()
            .zip(&trace.layers)
            .map(|(l, t)| layer_l1_norm(l, t).unwrap())
            .sum();
        let total = net.loss_total(&rows, &targets, &reg).unwrap();
        assert!((total - (sse + l1)).abs() < 1e-9 * total);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..3 {
            let (net, rows, targets) = random_net(&[2, 2, 1], seed);
            fd_check(&net, &rows, &targets, &Regularization::none());
            fd_check(
                &net,
                &rows,
                &targets,
                &Regularization {
                    lambda: 0.1,
                    mu1: 1.0,
                    mu2: 1.0,
                },
            );
        }
    }

    #[test]
    fn gradient_doubles_with_duplicated_data() {
        let (net, rows, targets) = random_net(&[2, 2, 1], 7);
        let g1 = net.gradient(&rows, &targets, &Regularization::none()).unwrap();
        let rows2: Vec<Vec<f64>> = rows.iter().chain(&rows).cloned().collect();
        let t2: Vec<f64> = targets.iter().chain(&targets).copied().collect();
        let g2 = net.gradient(&rows2, &t2, &Regularization::none()).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let preds = net.predict(&rows).unwrap();
        let g0 = net.gradient(&rows, &preds, &Regularization::none()).unwrap();
        assert!(g0.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn pruning_a_silent_edge_is_neutral() {
        let (mut net, rows, _) = random_net(&[2, 2, 1], 11);
        let e = net.layers[0].edge_mut(1, 0);
        e.w_b = 0.0;
        e.w_s = 0.0;
        let before = net.predict(&rows).unwrap();
        net.layers[0].edge_mut(1, 0).active = false;
        assert_eq!(before, net.predict(&rows).unwrap());
    }

    #[test]
    fn affine_edges_compose_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = KanNetwork::uniform(&[3, 2, 1], grid(-100.0, 100.0), 0.0, 1.0).unwrap();
        for layer in &mut net.layers {
            for e in &mut layer.edges {
                e.set_affine(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
        let f0 = net.predict_one(&[0.0; 3]).unwrap();
        for _ in 0..20 {
            let u: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = net.predict_one(&w).unwrap() - f0;
            let rhs = a * (net.predict_one(&u).unwrap() - f0) + b * (net.predict_one(&v).unwrap() - f0);
            assert!((lhs - rhs).abs() < 1e-8);
        }
    }

    #[test]
    fn json_round_trip() {
        let (net, rows, _) = random_net(&[2, 2, 1], 1);
        let back = KanNetwork::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(net.predict(&rows).unwrap(), back.predict(&rows).unwrap());
    }

    #[test]
    fn deterministic_forward() {
        let (net, rows, _) = random_net(&[5, 2, 1], 9);
        let a = net.predict(&rows).unwrap();
        let b = net.clone().predict(&rows).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
