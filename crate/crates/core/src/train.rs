//! Full-batch L-BFGS training with validation-driven learning-rate decay and
//! early stopping.
//!
//! The learning rate is the scale of the first trial step of each backtracking
//! line search, so a rate of 1 takes full quasi-Newton steps when the Armijo
//! condition allows. One epoch is a bounded L-BFGS pass (at most
//! `iters_per_epoch` iterations) over the whole training batch; the optimizer
//! keeps its curvature history across epochs.

use std::collections::VecDeque;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan_core::{KanNetwork, Regularization};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub history: usize,
    pub max_iters: usize,
    /// Initial line-search step (the learning rate).
    pub step_scale: f64,
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            history: 10,
            max_iters: 200,
            step_scale: 1.0,
            grad_tol: 1e-8,
            c1: 1e-4,
            max_line_search: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub termination: Termination,
    /// Objective after every accepted step, starting with the initial value.
    pub trajectory: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Limited-memory BFGS with a two-loop recursion and Armijo backtracking.
#[derive(Debug, Clone)]
pub struct Lbfgs {
    pub config: LbfgsConfig,
    s_hist: VecDeque<Vec<f64>>,
    y_hist: VecDeque<Vec<f64>>,
}

impl Lbfgs {
    pub fn new(config: LbfgsConfig) -> Self {
        Self {
            config,
            s_hist: VecDeque::new(),
            y_hist: VecDeque::new(),
        }
    }

    pub fn reset(&mut self) {
        self.s_hist.clear();
        self.y_hist.clear();
    }

    pub fn set_step_scale(&mut self, scale: f64) {
        self.config.step_scale = scale;
    }

    fn direction(&self, g: &[f64]) -> Vec<f64> {
        if self.s_hist.is_empty() {
            // first step: steepest descent, length-limited
            let l1: f64 = g.iter().map(|v| v.abs()).sum();
            let scale = (1.0 / l1).min(1.0);
            return g.iter().map(|v| -v * scale).collect();
        }
        let m = self.s_hist.len();
        let mut q = g.to_vec();
        let mut alpha = vec![0.0; m];
        let rho: Vec<f64> = (0..m).map(|i| 1.0 / dot(&self.y_hist[i], &self.s_hist[i])).collect();
        for i in (0..m).rev() {
            alpha[i] = rho[i] * dot(&self.s_hist[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y_hist[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        let (s, y) = (&self.s_hist[m - 1], &self.y_hist[m - 1]);
        let gamma = dot(s, y) / dot(y, y);
        let mut r: Vec<f64> = q.iter().map(|v| gamma * v).collect();
        for i in 0..m {
            let beta = rho[i] * dot(&self.y_hist[i], &r);
            for (rj, sj) in r.iter_mut().zip(&self.s_hist[i]) {
                *rj += (alpha[i] - beta) * sj;
            }
        }
        r.iter_mut().for_each(|v| *v = -*v);
        r
    }

    /// Runs up to `max_iters` iterations from `x`, updating it in place.
    pub fn minimize<F>(&mut self, mut objective: F, x: &mut Vec<f64>, max_iters: usize) -> Result<LbfgsReport>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let (mut f, mut g) = objective(x)?;
        let mut evaluations = 1;
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteObjective);
        }
        let mut trajectory = vec![f];
        let mut iterations = 0;
        let termination = loop {
            if norm(&g) < self.config.grad_tol {
                break Termination::GradientTolerance;
            }
            if iterations >= max_iters {
                break Termination::MaxIterations;
            }
            let mut retried = false;
            let accepted = loop {
                let mut d = self.direction(&g);
                let mut slope = dot(&g, &d);
                if !(slope < 0.0) {
                    self.reset();
                    d = self.direction(&g);
                    slope = dot(&g, &d);
                }
                let mut step = self.config.step_scale;
                let mut found = None;
                for _ in 0..self.config.max_line_search {
                    let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
                    let (ft, gt) = objective(&trial)?;
                    evaluations += 1;
                    if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= f + self.config.c1 * step * slope {
                        found = Some((trial, ft, gt));
                        break;
                    }
                    step *= 0.5;
                }
                match found {
                    Some(v) => break Some(v),
                    None if !retried && !self.s_hist.is_empty() => {
                        debug!("line search failed; resetting curvature history");
                        self.reset();
                        retried = true;
                    }
                    None => break None,
                }
            };
            let Some((x_new, f_new, g_new)) = accepted else {
                break Termination::LineSearchFailure;
            };
            let s: Vec<f64> = x_new.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-10 * norm(&s) * norm(&y) && sy > 0.0 {
                self.s_hist.push_back(s);
                self.y_hist.push_back(y);
                if self.s_hist.len() > self.config.history {
                    self.s_hist.pop_front();
                    self.y_hist.pop_front();
                }
            }
            *x = x_new;
            f = f_new;
            g = g_new;
            trajectory.push(f);
            iterations += 1;
        };
        Ok(LbfgsReport {
            iterations,
            evaluations,
            value: f,
            grad_norm: norm(&g),
            termination,
            trajectory,
        })
    }
}

/// One-shot minimization from `x0`.
pub fn lbfgs_minimize<F>(objective: F, x0: &[f64], config: &LbfgsConfig) -> Result<(Vec<f64>, LbfgsReport)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    let mut opt = Lbfgs::new(*config);
    let report = opt.minimize(objective, &mut x, config.max_iters)?;
    Ok((x, report))
}

/// Rows and aligned targets.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub rows: &'a [Vec<f64>],
    pub targets: &'a [f64],
}

impl<'a> Batch<'a> {
    pub fn new(rows: &'a [Vec<f64>], targets: &'a [f64]) -> Self {
        Self { rows, targets }
    }
}

/// A model trainable by [`fit_model`].
pub trait Trainable: Clone {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, theta: &[f64]) -> Result<()>;
    /// Training objective and its gradient.
    fn objective(&self, batch: Batch<'_>, reg: &Regularization) -> Result<(f64, Vec<f64>)>;
    /// Predictive loss (sum of squared errors).
    fn sse(&self, batch: Batch<'_>) -> Result<f64>;
}

impl Trainable for KanNetwork {
    fn params(&self) -> Vec<f64> {
        KanNetwork::params(self)
    }

    fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        KanNetwork::set_params(self, theta)
    }

    fn objective(&self, batch: Batch<'_>, reg: &Regularization) -> Result<(f64, Vec<f64>)> {
        self.loss_and_gradient(batch.rows, batch.targets, reg)
    }

    fn sse(&self, batch: Batch<'_>) -> Result<f64> {
        KanNetwork::sse(self, batch.rows, batch.targets)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub patience_decay: usize,
    pub patience_stop: usize,
    pub lbfgs_history: usize,
    pub max_epochs: usize,
    pub iters_per_epoch: usize,
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.04,
            decay_factor: 0.1,
            patience_decay: 5,
            patience_stop: 10,
            lbfgs_history: 10,
            max_epochs: 500,
            iters_per_epoch: 20,
            lambda: 0.0,
            mu1: 1.0,
            mu2: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings for the affine fine-tuning stage: 30 epochs at rate 0.0004.
    pub fn finetune() -> Self {
        Self {
            learning_rate: 0.0004,
            max_epochs: 30,
            ..Self::default()
        }
    }

    pub fn regularization(&self) -> Regularization {
        Regularization {
            lambda: self.lambda,
            mu1: self.mu1,
            mu2: self.mu2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::Config("decay_factor must lie in (0, 1)".into()));
        }
        if self.patience_decay >= self.patience_stop {
            return Err(Error::Config("patience_decay must be below patience_stop".into()));
        }
        if self.lbfgs_history == 0 || self.iters_per_epoch == 0 {
            return Err(Error::Config(
                "lbfgs_history and iters_per_epoch must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    EarlyStopped,
    MaxEpochs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainResult<M> {
    pub model: M,
    pub epochs: usize,
    /// Entry 0 is the initial model, entry `e` the model after epoch `e`.
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    /// Learning rate used during each epoch (index 0 = epoch 1).
    pub learning_rates: Vec<f64>,
    pub best_valid_loss: f64,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
}

/// Minimum strict decrease counted as an improvement.
pub const IMPROVEMENT_TOL: f64 = 1e-12;

/// Epoch loop shared by spline training and affine fine-tuning.
pub fn fit_model<M: Trainable>(
    model: M,
    train: Batch<'_>,
    valid: Batch<'_>,
    config: &TrainConfig,
) -> Result<TrainResult<M>> {
    config.validate()?;
    if train.rows.is_empty() || valid.rows.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let reg = config.regularization();
    let mut scratch = model.clone();
    let mut theta = model.params();
    let mut opt = Lbfgs::new(LbfgsConfig {
        history: config.lbfgs_history,
        step_scale: config.learning_rate,
        ..LbfgsConfig::default()
    });

    let initial_train = model.objective(train, &reg)?.0;
    let initial_valid = model.sse(valid)?;
    if !initial_valid.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut train_loss = vec![initial_train];
    let mut valid_loss = vec![initial_valid];
    let mut learning_rates = Vec::new();
    let mut best = (initial_valid, 0usize, theta.clone());
    let mut stall = 0;
    let mut lr = config.learning_rate;
    let mut stop_reason = StopReason::MaxEpochs;
    let mut epochs = 0;

    for epoch in 1..=config.max_epochs {
        learning_rates.push(lr);
        let report = opt.minimize(
            |t| {
                scratch.set_params(t)?;
                scratch.objective(train, &reg)
            },
            &mut theta,
            config.iters_per_epoch,
        )?;
        scratch.set_params(&theta)?;
        let v = scratch.sse(valid)?;
        train_loss.push(report.value);
        valid_loss.push(v);
        epochs = epoch;
        info!("epoch {epoch} train {:.6} valid {:.6} lr {lr}", report.value, v);

        if v < best.0 - IMPROVEMENT_TOL {
            best = (v, epoch, theta.clone());
            stall = 0;
        } else {
            stall += 1;
            if stall == config.patience_decay {
                lr *= config.decay_factor;
                opt.set_step_scale(lr);
            }
            if stall >= config.patience_stop {
                stop_reason = StopReason::EarlyStopped;
                break;
            }
        }
    }

    let mut model = model;
    model.set_params(&best.2)?;
    Ok(TrainResult {
        model,
        epochs,
        train_loss,
        valid_loss,
        learning_rates,
        best_valid_loss: best.0,
        best_epoch: best.1,
        stop_reason,
    })
}

/// Trains a spline network on the full training batch.
pub fn fit(
    net: KanNetwork,
    train: Batch<'_>,
    valid: Batch<'_>,
    config: &TrainConfig,
) -> Result<TrainResult<KanNetwork>> {
    for rows in [train.rows, valid.rows] {
        if let Some(r) = rows.iter().find(|r| r.len() != net.n_inputs()) {
            return Err(Error::ShapeMismatch {
                expected: net.n_inputs(),
                got: r.len(),
            });
        }
    }
    fit_model(net, train, valid, config)
}
