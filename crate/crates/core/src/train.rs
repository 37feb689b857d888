//! Training: seeded minibatch AdamW on pixelwise MSE against density
//! targets, with periodic validation and lowest-validation-MAE selection.
//!
//! Per-sample pipeline: resize to `resize_side²`, random flips and rotation,
//! crop to the model input side, normalize, then rebuild the density target
//! from the surviving points at the decoder's raw output resolution.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::augment::{augment_sample, resize_sample, AugmentPolicy, AugmentSpec, Crop, CropMode};
use crate::density::{build_density_target, DensityMap, DensityMode};
use crate::eval::{mae, rmse};
use crate::model::{CountingModel, Gradients, ModelConfig};
use crate::nn::Param;
use crate::optim::{clip_grad_norm, AdamW, AdamWConfig};
use crate::rng::Rng;
use crate::sample::SampleSource;
use crate::{Error, ImageSample, Point, Result, Tensor3};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Multiplier applied to the MSE.
    pub loss_scale: f64,
    /// Validate every this many epochs; 0 validates only after the last
    /// epoch.
    pub eval_every: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            learning_rate: 6.25e-6,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 200,
            seed: 0,
            loss_scale: 1.0,
            eval_every: 1,
            max_grad_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.loss_scale > 0.0) {
            return Err(Error::invalid("loss_scale must be positive"));
        }
        if let Some(n) = self.max_grad_norm {
            if !(n > 0.0) {
                return Err(Error::invalid("max_grad_norm must be positive"));
            }
        }
        Ok(())
    }

    fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }
}

/// Geometric augmentation and target construction for training.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Images are first resized to this square side.
    pub resize_side: usize,
    pub hflip_prob: f64,
    pub vflip_prob: f64,
    pub max_rotation_deg: f64,
    pub crop_mode: CropMode,
    pub target_mode: DensityMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            resize_side: 256,
            hflip_prob: 0.5,
            vflip_prob: 0.5,
            max_rotation_deg: 30.0,
            crop_mode: CropMode::Center,
            target_mode: DensityMode::Gaussian { sigma: 1.0 },
        }
    }
}

impl PipelineConfig {
    /// Geometry only: resize straight to the input side, no flips, no
    /// rotation.
    pub fn plain(input_side: usize, target_mode: DensityMode) -> Self {
        Self {
            resize_side: input_side,
            hflip_prob: 0.0,
            vflip_prob: 0.0,
            max_rotation_deg: 0.0,
            crop_mode: CropMode::Center,
            target_mode,
        }
    }

    fn policy(&self, model: &ModelConfig) -> Result<AugmentPolicy> {
        let side = model.input_side;
        if self.resize_side < side {
            return Err(Error::invalid(format!(
                "resize side {} is smaller than the model input side {side}",
                self.resize_side
            )));
        }
        Ok(AugmentPolicy {
            hflip_prob: self.hflip_prob,
            vflip_prob: self.vflip_prob,
            max_rotation_deg: self.max_rotation_deg,
            crop_size: (self.resize_side != side).then_some(side),
            crop_mode: self.crop_mode,
            normalize: model.normalization,
        })
    }
}

/// A prepared model input with its target.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub id: String,
    /// Normalized `3 × side × side` input.
    pub input: Tensor3,
    /// Surviving points in input coordinates.
    pub points: Vec<Point>,
    /// Target at the decoder's raw output resolution.
    pub target: DensityMap,
}

/// Runs the training pipeline on one sample with a per-sample seed.
pub fn prepare_training_sample(
    sample: &ImageSample,
    pipeline: &PipelineConfig,
    model: &ModelConfig,
    seed: u64,
) -> Result<PreparedSample> {
    let policy = pipeline.policy(model)?;
    let resized = resize_sample(sample, pipeline.resize_side, pipeline.resize_side)?;
    let spec = policy.sample(pipeline.resize_side, pipeline.resize_side, seed)?;
    finish(&resized, &spec, pipeline, model)
}

/// Deterministic single-crop preprocessing used for validation.
pub fn prepare_eval_sample(sample: &ImageSample, pipeline: &PipelineConfig, model: &ModelConfig) -> Result<PreparedSample> {
    let side = model.input_side;
    let resized = resize_sample(sample, pipeline.resize_side, pipeline.resize_side)?;
    let off = (pipeline.resize_side - side.min(pipeline.resize_side)) / 2;
    let spec = AugmentSpec {
        crop: (pipeline.resize_side != side).then_some(Crop { x: off, y: off, size: side }),
        normalize: model.normalization,
        ..AugmentSpec::IDENTITY
    };
    finish(&resized, &spec, pipeline, model)
}

fn finish(resized: &ImageSample, spec: &AugmentSpec, pipeline: &PipelineConfig, model: &ModelConfig) -> Result<PreparedSample> {
    let out = augment_sample(resized, spec)?;
    let side = model.input_side;
    if out.pixels.shape() != (3, side, side) {
        return Err(Error::shape(out.pixels.shape(), (3, side, side)));
    }
    let (rh, rw) = model.raw_output_shape()?;
    let scaled: Vec<Point> = out
        .points
        .iter()
        .map(|p| Point::new(p.x * rw as f64 / side as f64, p.y * rh as f64 / side as f64))
        .collect();
    let target = build_density_target(&scaled, (rh, rw), pipeline.target_mode)?;
    Ok(PreparedSample {
        id: out.id,
        input: out.pixels,
        points: out.points,
        target,
    })
}

/// Snapshot of the model at one validation point.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Vec<Param>,
    pub epoch: usize,
    pub val_mae: f64,
    pub val_rmse: f64,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
}

/// Anything carrying an epoch and a validation MAE.
pub trait Scored {
    fn epoch(&self) -> usize;
    fn val_mae(&self) -> f64;
}

impl Scored for Checkpoint {
    fn epoch(&self) -> usize {
        self.epoch
    }

    fn val_mae(&self) -> f64 {
        self.val_mae
    }
}

/// Argmin of validation MAE; the earliest epoch wins ties. NaN scores never
/// win unless every score is NaN.
pub fn select_checkpoint<T: Scored>(history: &[T]) -> Result<&T> {
    let mut best: Option<&T> = None;
    for c in history {
        best = match best {
            None => Some(c),
            Some(b) => {
                let better = c.val_mae() < b.val_mae()
                    || (c.val_mae() == b.val_mae() && c.epoch() < b.epoch())
                    || (b.val_mae().is_nan() && !c.val_mae().is_nan());
                Some(if better { c } else { b })
            }
        };
    }
    best.ok_or(Error::Empty("checkpoint history"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch; `None` for epoch 0.
    pub train_loss: Option<f64>,
    pub val_mae: Option<f64>,
    pub val_rmse: Option<f64>,
}

/// Hooks for persisting progress while training runs.
pub trait TrainObserver {
    fn on_epoch(&mut self, _row: &CurveRow) -> Result<()> {
        Ok(())
    }

    fn on_eval(&mut self, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub curve: Vec<CurveRow>,
    pub steps: u64,
}

/// Validation counts on the single-crop pipeline: `(mae, rmse, preds, gts)`.
pub fn validate(
    model: &CountingModel,
    data: &dyn SampleSource,
    pipeline: &PipelineConfig,
) -> Result<(f64, f64, Vec<f64>, Vec<f64>)> {
    let pairs = crate::par::map_indexed(data.len(), |i| -> Result<(f64, f64)> {
        let s = data.get(i)?;
        let prep = prepare_eval_sample(&s, pipeline, model.config())?;
        let pred = model.forward(&prep.input)?.count();
        Ok((pred, prep.points.len() as f64))
    });
    let mut preds = Vec::with_capacity(pairs.len());
    let mut gts = Vec::with_capacity(pairs.len());
    for r in pairs {
        let (p, g) = r?;
        preds.push(p);
        gts.push(g);
    }
    Ok((mae(&preds, &gts)?, rmse(&preds, &gts)?, preds, gts))
}

/// Trains `model` in place and returns the checkpoint with the lowest
/// validation MAE. On return `model` holds the final-epoch parameters.
///
/// With `eval_every == 0` validation runs once after the last epoch; if
/// `val` is then empty the training samples are scored instead.
pub fn train(
    model: &mut CountingModel,
    train_data: &dyn SampleSource,
    val: &dyn SampleSource,
    cfg: &TrainConfig,
    pipeline: &PipelineConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_data.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if cfg.eval_every > 0 && val.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let val_source: &dyn SampleSource = if val.is_empty() { train_data } else { val };
    let trainable: Vec<Param> = model.trainable_params().into_iter().cloned().collect();
    let mut opt = AdamW::new(cfg.optimizer(), &trainable.iter().collect::<Vec<_>>());
    drop(trainable);

    let mut best: Option<Checkpoint> = None;
    let mut curve = Vec::with_capacity(cfg.epochs + 1);
    let mut evaluate = |model: &CountingModel, epoch: usize, observer: &mut dyn TrainObserver| -> Result<(f64, f64)> {
        let (m, r, _, _) = validate(model, val_source, pipeline)?;
        let ckpt = Checkpoint {
            params: model.all_params().into_iter().cloned().collect(),
            epoch,
            val_mae: m,
            val_rmse: r,
            model_config: model.config().clone(),
            train_config: cfg.clone(),
        };
        observer.on_eval(&ckpt)?;
        let replace = match &best {
            None => true,
            Some(b) => select_checkpoint(&[b.clone(), ckpt.clone()])?.epoch == epoch,
        };
        if replace {
            best = Some(ckpt);
        }
        Ok((m, r))
    };

    if cfg.epochs == 0 {
        let (m, r) = evaluate(model, 0, observer)?;
        let row = CurveRow {
            epoch: 0,
            train_loss: None,
            val_mae: Some(m),
            val_rmse: Some(r),
        };
        observer.on_epoch(&row)?;
        curve.push(row);
    }

    let mut order: Vec<usize> = (0..train_data.len()).collect();
    for epoch in 1..=cfg.epochs {
        Rng::derive(cfg.seed, epoch as u64).shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss_sum, mut grads) = batch_gradients(model, train_data, batch, cfg, pipeline, epoch)?;
            epoch_loss += loss_sum;
            let k = 1.0 / batch.len() as f64;
            grads.iter_mut().flatten().for_each(|g| *g *= k);
            if let Some(max) = cfg.max_grad_norm {
                clip_grad_norm(&mut grads, max);
            }
            opt.step(&mut model.trainable_params_mut(), &grads)?;
        }
        let due = (cfg.eval_every > 0 && epoch % cfg.eval_every == 0) || epoch == cfg.epochs;
        let (val_mae, val_rmse) = if due {
            let (m, r) = evaluate(model, epoch, observer)?;
            (Some(m), Some(r))
        } else {
            (None, None)
        };
        let row = CurveRow {
            epoch,
            train_loss: Some(epoch_loss / train_data.len() as f64),
            val_mae,
            val_rmse,
        };
        observer.on_epoch(&row)?;
        curve.push(row);
    }

    Ok(TrainOutcome {
        best: best.ok_or(Error::Empty("checkpoint history"))?,
        curve,
        steps: opt.steps(),
    })
}

/// Summed loss and summed gradients over one minibatch.
fn batch_gradients(
    model: &CountingModel,
    data: &dyn SampleSource,
    batch: &[usize],
    cfg: &TrainConfig,
    pipeline: &PipelineConfig,
    epoch: usize,
) -> Result<(f64, Gradients)> {
    let per_sample = crate::par::map_indexed(batch.len(), |j| -> Result<(f64, Gradients)> {
        let idx = batch[j];
        let sample = data.get(idx)?;
        let seed = Rng::derive(cfg.seed, ((epoch as u64) << 32) | idx as u64).next_u64();
        let prep = prepare_training_sample(&sample, pipeline, model.config(), seed)?;
        let (loss, grads, _) = model.loss_and_grads(&prep.input, &prep.target, cfg.loss_scale)?;
        Ok((loss, grads))
    });
    let mut total = 0.0;
    let mut acc: Option<Gradients> = None;
    let mut bad = Vec::new();
    for (j, r) in per_sample.into_iter().enumerate() {
        let (loss, grads) = r?;
        if !loss.is_finite() {
            bad.push(data.id(batch[j]));
            continue;
        }
        total += loss;
        match &mut acc {
            None => acc = Some(grads),
            Some(a) => {
                for (x, y) in a.iter_mut().zip(&grads) {
                    for (p, q) in x.iter_mut().zip(y) {
                        *p += q;
                    }
                }
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::NonFiniteLoss { ids: bad });
    }
    Ok((total, acc.unwrap_or_default()))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rec(usize, f64);

    impl Scored for Rec {
        fn epoch(&self) -> usize {
            self.0
        }
        fn val_mae(&self) -> f64 {
            self.1
        }
    }

    #[test]
    fn select_singleton_and_ties() {
        assert_eq!(select_checkpoint(&[Rec(1, 5.0)]).unwrap().0, 1);
        let h = [Rec(1, 5.0), Rec(7, 3.0), Rec(9, 3.0)];
        assert_eq!(select_checkpoint(&h).unwrap().0, 7);
        let shuffled = [Rec(9, 3.0), Rec(1, 5.0), Rec(7, 3.0)];
        assert_eq!(select_checkpoint(&shuffled).unwrap().0, 7);
        assert!(select_checkpoint::<Rec>(&[]).is_err());
        assert_eq!(select_checkpoint(&[Rec(1, f64::NAN), Rec(2, 4.0)]).unwrap().0, 2);
    }

    #[test]
    fn select_matches_brute_force() {
        let mut rng = Rng::new(100);
        for _ in 0..100 {
            let n = 1 + rng.below(20);
            let h: Vec<Rec> = (0..n).map(|e| Rec(e * 3 + 1, rng.below(6) as f64)).collect();
            let min = h.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
            let brute = h.iter().filter(|r| r.1 == min).map(|r| r.0).min().unwrap();
            let got = select_checkpoint(&h).unwrap();
            assert_eq!(got.0, brute);
            assert_eq!(got.1, min);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
