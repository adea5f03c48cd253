//! The end-to-end forecasting pipeline: train a spline network, prune it,
//! replace its edges by symbolic functions, fine-tune the affine parameters
//! and collapse the result into a closed-form formula.

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, MetricsReport};
use crate::interpret::{
    collapse, default_candidates, finetune_affine, prune, score, symbolify, ClosedForm, ImportanceReport,
    SymbolicCandidate, SymbolicNetwork, DEFAULT_PRUNE_THRESHOLD,
};
use crate::kan_core::{KanNetwork, NetworkInit};
use crate::train::{fit, StopReason, TrainConfig, TrainResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Hidden-layer widths; the input width comes from the data and the
    /// output width is 1.
    pub hidden: Vec<usize>,
    pub init: NetworkInit,
    pub train: TrainConfig,
    pub finetune: TrainConfig,
    pub prune_threshold: f64,
    pub candidates: Vec<SymbolicCandidate>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            hidden: vec![2],
            init: NetworkInit::default(),
            train: TrainConfig::default(),
            finetune: TrainConfig::finetune(),
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
            candidates: default_candidates(),
        }
    }
}

impl PipelineConfig {
    pub fn shape(&self, n_inputs: usize) -> Vec<usize> {
        let mut s = vec![n_inputs];
        s.extend(&self.hidden);
        s.push(1);
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.finetune.validate()?;
        if !(self.prune_threshold >= 0.0) {
            return Err(Error::Config("prune_threshold must be nonnegative".into()));
        }
        if self.candidates.is_empty() {
            return Err(Error::Config("candidate set is empty".into()));
        }
        if self.init.grid_size == 0 {
            return Err(Error::Config("grid_size must be positive".into()));
        }
        Ok(())
    }
}

/// Loss histories and stopping information of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub stop_reason: StopReason,
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub learning_rates: Vec<f64>,
}

impl<M> From<&TrainResult<M>> for TrainingSummary {
    fn from(r: &TrainResult<M>) -> Self {
        Self {
            epochs: r.epochs,
            best_epoch: r.best_epoch,
            best_valid_loss: r.best_valid_loss,
            stop_reason: r.stop_reason,
            train_loss: r.train_loss.clone(),
            valid_loss: r.valid_loss.clone(),
            learning_rates: r.learning_rates.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub shape: Vec<usize>,
    pub trained: KanNetwork,
    pub training: TrainingSummary,
    pub importance: ImportanceReport,
    pub pruned: KanNetwork,
    pub symbolic: SymbolicNetwork,
    pub finetune: TrainingSummary,
    pub closed_form: ClosedForm,
    /// Test metrics of the pruned spline network.
    pub metrics_spline: MetricsReport,
    /// Test metrics of the closed form.
    pub metrics_symbolic: MetricsReport,
    /// Closed-form forecasts on the test rows.
    pub test_forecast: Vec<f64>,
}

/// Runs every stage on the given splits.
pub fn run(
    train: &FeatureMatrix,
    valid: &FeatureMatrix,
    test: &FeatureMatrix,
    config: &PipelineConfig,
) -> Result<PipelineOutcome> {
    config.validate()?;
    for (fm, name) in [(train, "training"), (valid, "validation"), (test, "test")] {
        if fm.is_empty() {
            return Err(Error::EmptySegment(match name {
                "training" => "train",
                "validation" => "valid",
                _ => "test",
            }));
        }
    }
    let shape = config.shape(train.names.len());
    let net = KanNetwork::init(&shape, &config.init, &train.rows)?;
    let trained = fit(net, train.batch(), valid.batch(), &config.train)?;
    let training = TrainingSummary::from(&trained);
    let importance = score(&trained.model, &train.rows)?;
    let pruned = prune(&trained.model, &importance, config.prune_threshold)?;
    let symbolic = symbolify(&pruned, &train.rows, &config.candidates)?;
    let tuned = finetune_affine(symbolic, train.batch(), valid.batch(), &config.finetune)?;
    let closed_form = collapse(&tuned.model, &train.names)?;
    let spline_forecast = pruned.predict(&test.rows)?;
    let test_forecast: Vec<f64> = test.rows.iter().map(|r| closed_form.eval(r)).collect();
    Ok(PipelineOutcome {
        shape,
        training,
        importance,
        metrics_spline: compute_metrics(&test.targets, &spline_forecast)?,
        metrics_symbolic: compute_metrics(&test.targets, &test_forecast)?,
        finetune: TrainingSummary::from(&tuned),
        trained: trained.model,
        pruned,
        symbolic: tuned.model,
        closed_form,
        test_forecast,
    })
}
