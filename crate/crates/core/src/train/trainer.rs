use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::mse_loss;
use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::io::csv_bytes;
use crate::metrics::auc;
use crate::model::HybridModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Stop after this many epochs without a strictly better validation
    /// AUC. `None` trains every epoch.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 100,
            learning_rate: 1e-4,
            adam: AdamConfig::default(),
            patience: Some(3),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub train_loss: Vec<f64>,
    pub val_auc: Vec<f64>,
    /// 0-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_auc: f64,
    pub stopped_early: bool,
}

impl TrainTrace {
    pub fn epochs_run(&self) -> usize {
        self.val_auc.len()
    }

    /// `epoch,train_loss,val_auc` with 1-based epochs.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["epoch", "train_loss", "val_auc"],
            self.train_loss.iter().zip(&self.val_auc).enumerate().map(|(e, (l, a))| {
                [(e + 1).to_string(), l.to_string(), a.to_string()]
            }),
        )
    }
}

pub struct TrainOutcome {
    pub trace: TrainTrace,
    /// Model as of the best validation epoch.
    pub best: HybridModel,
}

/// Validation score: responders have low log(IC50), so a lower prediction
/// means a likelier responder.
pub fn validation_auc(model: &HybridModel, set: &SampleSet) -> Result<f64> {
    let scores: Vec<f64> = model.predict(set.x.view())?.iter().map(|p| -p).collect();
    auc(&scores, &set.responders)
}

/// Minibatch Adam on MSE, validation AUC after every epoch, first-best
/// snapshot, optional patience-based early stopping.
pub fn train(mut model: HybridModel, train_set: &SampleSet, val_set: &SampleSet, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.len() < 2 {
        return Err(Error::Config(format!(
            "training split has {} samples; at least 2 are required",
            train_set.len()
        )));
    }
    if val_set.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(model.params().len(), config.adam);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut trace = TrainTrace {
        train_loss: Vec::new(),
        val_auc: Vec::new(),
        best_epoch: 0,
        best_auc: f64::NEG_INFINITY,
        stopped_early: false,
    };
    let mut best = model.clone();
    let mut stopper = EarlyStopping::new(config.patience);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(config.batch_size) {
            // Batch norm cannot normalize a single sample.
            if batch.len() < 2 {
                continue;
            }
            let x = train_set.x.select(Axis(0), batch);
            let targets: Vec<f64> = batch.iter().map(|&i| train_set.targets[i]).collect();
            let fwd = model.forward_train(x.view())?;
            let (loss, d_pred) = mse_loss(&fwd.predictions, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("loss became {loss} in epoch {}", epoch + 1)));
            }
            let grads = model.backward(x.view(), &fwd, &d_pred);
            adam.step(model.params_mut(), &grads, config.learning_rate)?;
            model.apply_batch_stats(&fwd);
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        trace.train_loss.push(loss_sum / seen as f64);

        let val = validation_auc(&model, val_set)?;
        trace.val_auc.push(val);
        match stopper.observe(epoch, val) {
            Verdict::Improved => best = model.clone(),
            Verdict::Stale => {}
            Verdict::Stop => {
                trace.stopped_early = true;
                break;
            }
        }
    }

    trace.best_auc = stopper.best;
    trace.best_epoch = stopper.best_epoch;
    Ok(TrainOutcome { trace, best })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Stale,
    Stop,
}

/// Tracks the first-best validation score. Only a strictly greater score
/// counts as an improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: Option<usize>,
    pub best: f64,
    pub best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: Option<usize>) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> Verdict {
        if score > self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.stale = 0;
            return Verdict::Improved;
        }
        self.stale += 1;
        match self.patience {
            Some(p) if self.stale >= p => Verdict::Stop,
            _ => Verdict::Stale,
        }
    }
}

/// Replays the early-stopping rule over a fixed AUC sequence. Returns the
/// number of epochs executed and the 0-based best epoch.
pub fn early_stop_schedule(aucs: &[f64], patience: usize) -> (usize, usize) {
    let mut stopper = EarlyStopping::new(Some(patience));
    for (e, &a) in aucs.iter().enumerate() {
        if stopper.observe(e, a) == Verdict::Stop {
            return (e + 1, stopper.best_epoch);
        }
    }
    (aucs.len(), stopper.best_epoch)
}
