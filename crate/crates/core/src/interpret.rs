//! Turning a trained spline network into a formula: importance scoring,
//! pruning, symbolic edge fits, affine fine-tuning and collapse of an
//! all-affine network into a closed form.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::r_squared;
use crate::kan_core::{KanNetwork, Regularization};
use crate::par;
use crate::train::{fit_model, Batch, TrainConfig, TrainResult, Trainable};

/// Default relative pruning threshold (fraction of the per-layer maximum).
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.01;

/// Mean absolute activation of every edge and the derived node importances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// Per layer, indexed `q * n_out + p`.
    pub edges: Vec<Vec<f64>>,
    /// Per node layer (inputs, hidden layers, output).
    pub nodes: Vec<Vec<f64>>,
}

impl ImportanceReport {
    pub fn edge(&self, net: &KanNetwork, layer: usize, q: usize, p: usize) -> f64 {
        self.edges[layer][q * net.layers[layer].n_out + p]
    }
}

/// Edge importance is the mean |φ| over `rows`; a node scores the smaller of
/// its strongest incoming and strongest outgoing edge (input and output nodes
/// use the one side they have).
pub fn score(net: &KanNetwork, rows: &[Vec<f64>]) -> Result<ImportanceReport> {
    if rows.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let trace = net.trace(rows)?;
    let edges = net
        .layers
        .iter()
        .zip(&trace.layers)
        .map(|(l, t)| t.edge_norms(l))
        .collect::<Result<Vec<_>>>()?;
    let mut nodes = Vec::with_capacity(net.shape.len());
    for (nl, &width) in net.shape.iter().enumerate() {
        let mut imp = vec![0.0; width];
        for (i, v) in imp.iter_mut().enumerate() {
            let incoming = (nl > 0).then(|| {
                let l = &net.layers[nl - 1];
                (0..l.n_in).map(|q| edges[nl - 1][q * l.n_out + i]).fold(0.0, f64::max)
            });
            let outgoing = (nl < net.layers.len()).then(|| {
                let l = &net.layers[nl];
                (0..l.n_out).map(|p| edges[nl][i * l.n_out + p]).fold(0.0, f64::max)
            });
            *v = match (incoming, outgoing) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => 0.0,
            };
        }
        nodes.push(imp);
    }
    Ok(ImportanceReport { edges, nodes })
}

/// Deactivates edges scoring below `threshold` × the largest score in their
/// layer, then removes nodes left without inputs or without outputs (and
/// their remaining edges) until nothing changes.
pub fn prune(net: &KanNetwork, report: &ImportanceReport, threshold: f64) -> Result<KanNetwork> {
    if !(threshold >= 0.0) {
        return Err(Error::Config("pruning threshold must be nonnegative".into()));
    }
    let mut out = net.clone();
    for (layer, scores) in out.layers.iter_mut().zip(&report.edges) {
        let max = scores.iter().cloned().fold(0.0, f64::max);
        for (e, &s) in layer.edges.iter_mut().zip(scores) {
            if s < threshold * max {
                e.active = false;
            }
        }
    }
    cascade(&mut out);
    let last = out.layers.last().expect("validated shape");
    if !last.edges.iter().any(|e| e.active) {
        return Err(Error::AllPruned);
    }
    Ok(out)
}

fn cascade(net: &mut KanNetwork) {
    loop {
        let mut changed = false;
        // hidden node layers 1..L-1
        for nl in 1..net.layers.len() {
            for i in 0..net.shape[nl] {
                let has_in = {
                    let l = &net.layers[nl - 1];
                    (0..l.n_in).any(|q| l.edge(q, i).active)
                };
                let has_out = {
                    let l = &net.layers[nl];
                    (0..l.n_out).any(|p| l.edge(i, p).active)
                };
                if has_in && has_out {
                    continue;
                }
                let prev = &mut net.layers[nl - 1];
                for q in 0..prev.n_in {
                    let e = prev.edge_mut(q, i);
                    changed |= e.active;
                    e.active = false;
                }
                let next = &mut net.layers[nl];
                for p in 0..next.n_out {
                    let e = next.edge_mut(i, p);
                    changed |= e.active;
                    e.active = false;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// A univariate function that can replace a spline edge.
#[derive(Clone, Copy)]
pub struct SymbolicCandidate {
    pub name: &'static str,
    pub f: fn(f64) -> f64,
    pub df: fn(f64) -> f64,
    /// `Some(s)` when `f(x) = s·x`; such candidates are fitted exactly by
    /// least squares instead of the `(a, b)` grid search.
    pub linear_slope: Option<f64>,
}

impl fmt::Debug for SymbolicCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

impl PartialEq for SymbolicCandidate {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl SymbolicCandidate {
    pub const IDENTITY: Self = Self {
        name: "x",
        f: |x| x,
        df: |_| 1.0,
        linear_slope: Some(1.0),
    };
    pub const NEGATION: Self = Self {
        name: "-x",
        f: |x| -x,
        df: |_| -1.0,
        linear_slope: Some(-1.0),
    };
    pub const ZERO: Self = Self {
        name: "0",
        f: |_| 0.0,
        df: |_| 0.0,
        linear_slope: Some(0.0),
    };

    pub const BUILTIN: [Self; 3] = [Self::IDENTITY, Self::NEGATION, Self::ZERO];

    pub fn by_name(name: &str) -> Result<Self> {
        Self::BUILTIN
            .into_iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Config(format!("unknown symbolic candidate `{name}`")))
    }

    pub fn is_affine(&self) -> bool {
        self.linear_slope.is_some()
    }
}

impl Serialize for SymbolicCandidate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name)
    }
}

impl<'de> Deserialize<'de> for SymbolicCandidate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Self::by_name(&name).map_err(serde::de::Error::custom)
    }
}

/// Candidate set used for forecasting networks.
pub fn default_candidates() -> Vec<SymbolicCandidate> {
    vec![SymbolicCandidate::IDENTITY, SymbolicCandidate::ZERO]
}

/// Edge computing `c·f(a·x + b) + d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolicEdge {
    pub candidate: SymbolicCandidate,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl SymbolicEdge {
    pub fn constant(d: f64) -> Self {
        Self {
            candidate: SymbolicCandidate::ZERO,
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.c * (self.candidate.f)(self.a * x + self.b) + self.d
    }

    /// `(slope, intercept)` when the edge is affine in its input.
    pub fn affine(&self) -> Option<(f64, f64)> {
        let s = self.candidate.linear_slope?;
        Some((self.c * s * self.a, self.c * s * self.b + self.d))
    }
}

/// Result of fitting one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolicFit {
    pub edge: SymbolicEdge,
    pub r2: f64,
}

/// Two samples (or fewer) below this relative spread count as one x value.
const DISTINCT_TOL: f64 = 1e-12;
/// R² differences at or below this are ties.
const TIE_TOL: f64 = 1e-12;

/// Least squares of `ys` on `(g, 1)`; returns `(c, d, r2)`.
fn affine_ls(g: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = g.len() as f64;
    let (mg, my) = (g.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sgg: f64 = g.iter().map(|v| (v - mg).powi(2)).sum();
    let scale: f64 = g.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let (c, d) = if sgg <= 1e-24 * scale || !sgg.is_finite() {
        (0.0, my)
    } else {
        let sgy: f64 = g.iter().zip(ys).map(|(a, b)| (a - mg) * (b - my)).sum();
        let c = sgy / sgg;
        (c, my - c * mg)
    };
    let fitted: Vec<f64> = g.iter().map(|v| c * v + d).collect();
    (c, d, r_squared(ys, &fitted))
}

fn fit_candidate(xs: &[f64], ys: &[f64], cand: SymbolicCandidate) -> SymbolicFit {
    if let Some(s) = cand.linear_slope {
        if s == 0.0 {
            let my = ys.iter().sum::<f64>() / ys.len() as f64;
            let fitted = vec![my; ys.len()];
            return SymbolicFit {
                edge: SymbolicEdge::constant(my),
                r2: r_squared(ys, &fitted),
            };
        }
        let g: Vec<f64> = xs.iter().map(|&x| (cand.f)(x)).collect();
        let (c, d, r2) = affine_ls(&g, ys);
        return SymbolicFit {
            edge: SymbolicEdge {
                candidate: cand,
                a: 1.0,
                b: 0.0,
                c,
                d,
            },
            r2,
        };
    }
    // coarse grid over (a, b), then one refinement pass around the best cell
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let eval = |a: f64, b: f64| {
        let g: Vec<f64> = xs.iter().map(|&x| (cand.f)(a * x + b)).collect();
        if g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let (c, d, r2) = affine_ls(&g, ys);
        Some(SymbolicFit {
            edge: SymbolicEdge {
                candidate: cand,
                a,
                b,
                c,
                d,
            },
            r2,
        })
    };
    let search = |log_as: &[f64], bs: &[f64], best: &mut Option<(SymbolicFit, f64, f64)>| {
        for &la in log_as {
            for sign in [1.0, -1.0] {
                let a = sign * 10f64.powf(la);
                for &b in bs {
                    if let Some(fit) = eval(a, b) {
                        if best.as_ref().is_none_or(|(bf, _, _)| fit.r2 > bf.r2 + TIE_TOL) {
                            *best = Some((fit, la, b));
                        }
                    }
                }
            }
        }
    };
    let linspace =
        |a: f64, b: f64, n: usize| -> Vec<f64> { (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect() };
    let log_as = linspace(-1.0, 1.0, 21);
    let bs = linspace(lo, hi, 21);
    let mut best = None;
    search(&log_as, &bs, &mut best);
    if let Some((_, la, b)) = best {
        let (da, db) = (log_as[1] - log_as[0], bs[1] - bs[0]);
        search(
            &linspace(la - da, la + da, 21),
            &linspace(b - db, b + db, 21),
            &mut best,
        );
    }
    best.map(|(f, _, _)| f).unwrap_or(SymbolicFit {
        edge: SymbolicEdge::constant(ys.iter().sum::<f64>() / ys.len() as f64),
        r2: 0.0,
    })
}

/// Best candidate for the samples `(xs, ys)` by R²; ties go to the earlier
/// candidate. A fit whose function part vanishes on the samples is reported
/// as the zero candidate when that is available.
pub fn fit_symbolic(xs: &[f64], ys: &[f64], candidates: &[SymbolicCandidate]) -> Result<SymbolicFit> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if candidates.is_empty() {
        return Err(Error::Config("empty candidate set".into()));
    }
    let mut sorted: Vec<f64> = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let scale = sorted.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    sorted.dedup_by(|a, b| (*a - *b).abs() <= DISTINCT_TOL * scale);
    if sorted.len() < 3 {
        return Err(Error::DegenerateSamples);
    }
    let mut best: Option<SymbolicFit> = None;
    for &cand in candidates {
        let fit = fit_candidate(xs, ys, cand);
        if best.is_none_or(|b| fit.r2 > b.r2 + TIE_TOL) {
            best = Some(fit);
        }
    }
    let mut best = best.expect("nonempty candidates");
    if best.edge.candidate != SymbolicCandidate::ZERO && candidates.contains(&SymbolicCandidate::ZERO) {
        let g: Vec<f64> = xs
            .iter()
            .map(|&x| (best.edge.candidate.f)(best.edge.a * x + best.edge.b))
            .collect();
        let spread =
            g.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - g.iter().cloned().fold(f64::INFINITY, f64::min);
        let level = ys.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if (best.edge.c * spread).abs() <= 1e-12 * level {
            best.edge = SymbolicEdge::constant(best.edge.d + best.edge.c * g[0]);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicLayer {
    pub n_in: usize,
    pub n_out: usize,
    /// `None` for pruned edges; indexed `q * n_out + p`.
    pub edges: Vec<Option<SymbolicEdge>>,
    /// R² of each edge's symbolic fit against its spline samples.
    pub fit_r2: Vec<Option<f64>>,
}

impl SymbolicLayer {
    pub fn edge(&self, q: usize, p: usize) -> Option<&SymbolicEdge> {
        self.edges[q * self.n_out + p].as_ref()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_out];
        for q in 0..self.n_in {
            for (p, o) in out.iter_mut().enumerate() {
                if let Some(e) = self.edge(q, p) {
                    *o += e.eval(x[q]);
                }
            }
        }
        out
    }
}

/// A network whose edges are symbolic functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicNetwork {
    pub shape: Vec<usize>,
    pub layers: Vec<SymbolicLayer>,
}

impl SymbolicNetwork {
    pub fn n_inputs(&self) -> usize {
        self.shape[0]
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

    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut v = x.to_vec();
        for l in &self.layers {
            v = l.forward(&v);
        }
        Ok(v[0])
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        for r in rows {
            self.check_input(r)?;
        }
        Ok(par::map_slice(rows, |r| {
            let mut v = r.clone();
            for l in &self.layers {
                v = l.forward(&v);
            }
            v[0]
        }))
    }

    /// Active edges in parameter order (layer, then `(q, p)` row-major).
    fn active_edges(&self) -> impl Iterator<Item = &SymbolicEdge> {
        self.layers.iter().flat_map(|l| l.edges.iter().flatten())
    }

    pub fn active_edge_count(&self) -> usize {
        self.active_edges().count()
    }

    /// Edges failing `min_r2` as `(layer, q, p, r2)`.
    pub fn poor_fits(&self, min_r2: f64) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::new();
        for (li, l) in self.layers.iter().enumerate() {
            for (j, r2) in l.fit_r2.iter().enumerate() {
                if let Some(r2) = *r2 {
                    if r2 < min_r2 {
                        out.push((li, j / l.n_out, j % l.n_out, r2));
                    }
                }
            }
        }
        out
    }

    fn batch_loss_and_gradient(&self, rows: &[Vec<f64>], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
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
        // parameter offset of each active edge
        let mut offsets: Vec<Vec<Option<usize>>> = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(
                l.edges
                    .iter()
                    .map(|e| {
                        e.map(|_| {
                            off += 4;
                            off - 4
                        })
                    })
                    .collect(),
            );
        }
        let total = off;
        let parts = par::map_chunks(rows.len(), par::CHUNK, |lo, hi| {
            let mut grad = vec![0.0; total];
            let mut sse = 0.0;
            for i in lo..hi {
                let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
                let mut v = rows[i].clone();
                for l in &self.layers {
                    let next = l.forward(&v);
                    inputs.push(std::mem::replace(&mut v, next));
                }
                let r = targets[i] - v[0];
                sse += r * r;
                let mut adj_out = vec![-2.0 * r];
                for (li, l) in self.layers.iter().enumerate().rev() {
                    let mut adj_in = vec![0.0; l.n_in];
                    for q in 0..l.n_in {
                        let x = inputs[li][q];
                        for p in 0..l.n_out {
                            let j = q * l.n_out + p;
                            let (Some(e), Some(o)) = (&l.edges[j], offsets[li][j]) else {
                                continue;
                            };
                            let adj = adj_out[p];
                            let u = e.a * x + e.b;
                            let fu = (e.candidate.f)(u);
                            let dfu = (e.candidate.df)(u);
                            grad[o] += adj * e.c * dfu * x;
                            grad[o + 1] += adj * e.c * dfu;
                            grad[o + 2] += adj * fu;
                            grad[o + 3] += adj;
                            adj_in[q] += adj * e.c * dfu * e.a;
                        }
                    }
                    adj_out = adj_in;
                }
            }
            (sse, grad)
        });
        let mut grad = vec![0.0; total];
        let mut sse = 0.0;
        for (s, g) in parts {
            sse += s;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        if !sse.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        Ok((sse, grad))
    }
}

impl Trainable for SymbolicNetwork {
    /// `[a, b, c, d]` for every active edge.
    fn params(&self) -> Vec<f64> {
        self.active_edges().flat_map(|e| [e.a, e.b, e.c, e.d]).collect()
    }

    fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        let n = 4 * self.active_edge_count();
        if theta.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: theta.len(),
            });
        }
        let mut chunks = theta.chunks_exact(4);
        for e in self.layers.iter_mut().flat_map(|l| l.edges.iter_mut().flatten()) {
            let c = chunks.next().expect("length checked");
            (e.a, e.b, e.c, e.d) = (c[0], c[1], c[2], c[3]);
        }
        Ok(())
    }

    fn objective(&self, batch: Batch<'_>, _reg: &Regularization) -> Result<(f64, Vec<f64>)> {
        self.batch_loss_and_gradient(batch.rows, batch.targets)
    }

    fn sse(&self, batch: Batch<'_>) -> Result<f64> {
        let preds = self.predict(batch.rows)?;
        Ok(preds.iter().zip(batch.targets).map(|(p, y)| (y - p).powi(2)).sum())
    }
}

/// Replaces every active edge of `net` by its best symbolic fit to the
/// `(input, activation)` pairs the edge sees on `rows`. An edge whose input is
/// constant on `rows` becomes the constant it outputs there.
pub fn symbolify(net: &KanNetwork, rows: &[Vec<f64>], candidates: &[SymbolicCandidate]) -> Result<SymbolicNetwork> {
    let trace = net.trace(rows)?;
    let layers = net
        .layers
        .iter()
        .zip(&trace.layers)
        .map(|(layer, lt)| {
            let fits = par::map_indices(layer.edges.len(), |j| {
                if !layer.edges[j].active {
                    return Ok(None);
                }
                let (xs, ys) = lt.edge_samples(j / layer.n_out, j % layer.n_out);
                match fit_symbolic(&xs, &ys, candidates) {
                    Ok(fit) => Ok(Some(fit)),
                    Err(Error::DegenerateSamples) => {
                        // a constant edge is reproduced exactly, not up to
                        // the rounding of its mean
                        let m = if ys.iter().all(|&y| y == ys[0]) {
                            ys[0]
                        } else {
                            ys.iter().sum::<f64>() / ys.len() as f64
                        };
                        let fitted = vec![m; ys.len()];
                        Ok(Some(SymbolicFit {
                            edge: SymbolicEdge::constant(m),
                            r2: r_squared(&ys, &fitted),
                        }))
                    }
                    Err(e) => Err(e),
                }
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            Ok(SymbolicLayer {
                n_in: layer.n_in,
                n_out: layer.n_out,
                edges: fits.iter().map(|f| f.map(|f| f.edge)).collect(),
                fit_r2: fits.iter().map(|f| f.map(|f| f.r2)).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SymbolicNetwork {
        shape: net.shape.clone(),
        layers,
    })
}

/// Fine-tunes every `(a, b, c, d)` by L-BFGS on the prediction loss, keeping
/// the snapshot with the best validation loss.
pub fn finetune_affine(
    snet: SymbolicNetwork,
    train: Batch<'_>,
    valid: Batch<'_>,
    config: &TrainConfig,
) -> Result<TrainResult<SymbolicNetwork>> {
    if snet.active_edge_count() == 0 {
        return Err(Error::AllPruned);
    }
    let config = TrainConfig { lambda: 0.0, ..*config };
    fit_model(snet, train, valid, &config)
}

/// Linear formula `Σ coefficient·input + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

/// Left-hand side used by [`ClosedForm::render`].
pub const FORECAST_SYMBOL: &str = "V̂_t";

/// `v` rounded to `digits` significant digits, without trailing zeros.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{}", if v == 0.0 { 0.0 } else { v });
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

impl ClosedForm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Coefficient of `name`; 0 when the input is absent.
    pub fn coefficient(&self, name: &str) -> f64 {
        self.names
            .iter()
            .position(|n| n == name)
            .map_or(0.0, |i| self.coefficients[i])
    }

    /// Inputs with a nonzero coefficient.
    pub fn terms(&self) -> Vec<(&str, f64)> {
        self.names
            .iter()
            .zip(&self.coefficients)
            .filter(|(_, c)| **c != 0.0)
            .map(|(n, c)| (n.as_str(), *c))
            .collect()
    }

    fn render_with(&self, lhs: &str, fmt_num: impl Fn(f64) -> String) -> String {
        let mut out = format!("{lhs} =");
        let mut first = true;
        let mut push = |v: f64, name: Option<&str>| {
            let body = match name {
                Some(n) => format!("{}·{n}", fmt_num(v.abs())),
                None => fmt_num(v.abs()),
            };
            let sign = if v < 0.0 { "-" } else { "+" };
            if first {
                out.push(' ');
                if v < 0.0 {
                    out.push('-');
                }
                out.push_str(&body);
                first = false;
            } else {
                out.push_str(&format!(" {sign} {body}"));
            }
        };
        for (n, c) in self.terms() {
            push(c, Some(n));
        }
        if self.intercept != 0.0 || self.terms().is_empty() {
            push(self.intercept, None);
        }
        out
    }

    /// Full-precision rendering that [`ClosedForm::parse`] reads back exactly.
    pub fn render(&self) -> String {
        self.render_with(FORECAST_SYMBOL, |v| format!("{v}"))
    }

    /// Display rendering with `digits` significant digits.
    pub fn render_with_precision(&self, lhs: &str, digits: usize) -> String {
        self.render_with(lhs, |v| format_significant(v, digits))
    }

    /// Full-precision rendering with a custom left-hand side.
    pub fn render_as(&self, lhs: &str) -> String {
        self.render_with(lhs, |v| format!("{v}"))
    }

    /// Parses `lhs = c1·name1 ± c2·name2 ± … ± intercept`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("cannot parse formula `{s}`: {m}"));
        let (_, rhs) = s.split_once(" = ").ok_or_else(|| bad("missing ` = `"))?;
        let normalized = rhs.trim().replace(" - ", " + -");
        let mut names = Vec::new();
        let mut coefficients = Vec::new();
        let mut intercept = 0.0;
        for term in normalized.split(" + ") {
            let term = term.trim();
            let (neg, body) = match term.strip_prefix('-') {
                Some(rest) => (true, rest),
                None => (false, term),
            };
            let sign = if neg { -1.0 } else { 1.0 };
            match body.split_once('·') {
                Some((num, name)) => {
                    let c: f64 = num.parse().map_err(|_| bad(&format!("bad coefficient `{num}`")))?;
                    names.push(name.to_string());
                    coefficients.push(sign * c);
                }
                None => {
                    let c: f64 = body.parse().map_err(|_| bad(&format!("bad term `{body}`")))?;
                    intercept += sign * c;
                }
            }
        }
        Ok(Self {
            names,
            coefficients,
            intercept,
        })
    }
}

/// Composes the affine edges of `snet` along every path.
pub fn collapse(snet: &SymbolicNetwork, input_names: &[String]) -> Result<ClosedForm> {
    let n = snet.n_inputs();
    if input_names.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: input_names.len(),
        });
    }
    // each node as (coefficients over inputs, constant)
    let mut nodes: Vec<(Vec<f64>, f64)> = (0..n)
        .map(|i| {
            let mut c = vec![0.0; n];
            c[i] = 1.0;
            (c, 0.0)
        })
        .collect();
    for (li, l) in snet.layers.iter().enumerate() {
        let mut next = vec![(vec![0.0; n], 0.0); l.n_out];
        for q in 0..l.n_in {
            for (p, node) in next.iter_mut().enumerate() {
                let Some(e) = l.edge(q, p) else { continue };
                let (slope, icpt) = e.affine().ok_or_else(|| Error::NonAffineEdge {
                    layer: li,
                    q,
                    p,
                    name: e.candidate.name.to_string(),
                })?;
                for (acc, v) in node.0.iter_mut().zip(&nodes[q].0) {
                    *acc += slope * v;
                }
                node.1 += slope * nodes[q].1 + icpt;
            }
        }
        nodes = next;
    }
    let (coefficients, intercept) = nodes.into_iter().next().expect("scalar output");
    Ok(ClosedForm {
        names: input_names.to_vec(),
        coefficients,
        intercept,
    })
}

/// Rearrangement `V̂_t − V_{t−1} = κ(V_w − V_{t−1}) + residual` of a closed
/// form over lagged-level and average features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanReversionReport {
    /// Coefficient of the weekly average.
    pub kappa: f64,
    /// Coefficient of `V_{t-1}` left in the residual: `β₁ − 1 + κ`.
    pub rho: f64,
    /// Remaining feature coefficients in the residual, by name.
    pub other: Vec<(String, f64)>,
    pub intercept: f64,
    /// Mean of the residual term over the training rows.
    pub residual_mean: f64,
    /// Mean of the training targets.
    pub level_mean: f64,
}

/// Name of the one-day lag feature.
pub const LAG1: &str = "V_{t-1}";
/// Name of the weekly-average feature.
pub const WEEKLY: &str = "V_w";

pub fn mean_reversion_report(cf: &ClosedForm, train: &crate::data::FeatureMatrix) -> Result<MeanReversionReport> {
    let kappa = cf.coefficient(WEEKLY);
    if kappa == 0.0 {
        return Err(Error::MissingFeature(WEEKLY.into()));
    }
    if train.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let col = |name: &str| train.names.iter().position(|n| n == name);
    let lag = col(LAG1).ok_or_else(|| Error::MissingFeature(LAG1.into()))?;
    let rho = cf.coefficient(LAG1) - 1.0 + kappa;
    let other: Vec<(String, f64)> = cf
        .terms()
        .into_iter()
        .filter(|(n, _)| *n != LAG1 && *n != WEEKLY)
        .map(|(n, c)| (n.to_string(), c))
        .collect();
    let mut other_idx = Vec::with_capacity(other.len());
    for (n, c) in &other {
        other_idx.push((col(n).ok_or_else(|| Error::MissingFeature(n.clone()))?, *c));
    }
    let n = train.len() as f64;
    let residual_mean = train
        .rows
        .iter()
        .map(|r| rho * r[lag] + other_idx.iter().map(|(j, c)| c * r[*j]).sum::<f64>() + cf.intercept)
        .sum::<f64>()
        / n;
    Ok(MeanReversionReport {
        kappa,
        rho,
        other,
        intercept: cf.intercept,
        residual_mean,
        level_mean: train.targets.iter().sum::<f64>() / n,
    })
}
