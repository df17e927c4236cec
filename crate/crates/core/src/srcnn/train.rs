use rayon::prelude::*;

use super::{Gradients, SrcnnModel};
use crate::dataset::{Batches, PatchCorpus, PatchPair};
use crate::error::{Error, Result};
use crate::fdpl::{Loss, LossKind};
use crate::metrics::EvalSet;
use crate::seed::derive_seed;

/// How the per-patch objective that SGD descends is reduced.
///
/// Logged losses are always the mean form; this only scales the gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Reduction {
    /// Sum over pixels (MSE) or over 8×8 tiles (FDPL). The default per-layer
    /// learning rates are tuned for this scale.
    #[default]
    Sum,
    /// Mean over pixels or tiles, as reported by the loss functions.
    Mean,
}

impl std::fmt::Display for Reduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        })
    }
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            other => Err(Error::InvalidInput(format!(
                "unknown reduction '{other}' (expected sum or mean)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_steps: usize,
    /// Label of the objective; the loss itself is passed to [`train`].
    pub loss_kind: LossKind,
    pub seed: u64,
    /// Evaluate every this many steps (0 disables); the last step is always
    /// evaluated when an eval set is given.
    pub eval_every: usize,
    /// Invoke the checkpoint hook every this many steps (0 disables).
    pub checkpoint_every: usize,
    pub reduction: Reduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            max_steps: 1000,
            loss_kind: LossKind::Mse,
            seed: 0,
            eval_every: 100,
            checkpoint_every: 0,
            reduction: Reduction::Sum,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be >= 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("max steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Seed of the batch shuffling stream.
    pub fn shuffle_seed(&self) -> u64 {
        derive_seed(self.seed, "shuffle")
    }

    /// Seed for weight initialization.
    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, "init")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub train_loss: f64,
    pub eval_psnr: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    /// `step,train_loss,eval_psnr`; the PSNR column is empty when the step
    /// was not evaluated.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,train_loss,eval_psnr\n");
        for r in &self.rows {
            let psnr = r.eval_psnr.map(|p| p.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{}\n", r.step, r.train_loss, psnr));
        }
        s
    }
}

/// Mean loss and mean parameter gradient over `pairs`.
///
/// Per-example passes may run in parallel; their results are summed in
/// input order so the outcome does not depend on the thread count.
pub fn batch_gradients(
    model: &SrcnnModel,
    pairs: &[PatchPair],
    loss: &dyn Loss,
) -> Result<(f64, Gradients)> {
    if pairs.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    let per_example: Vec<(f64, Gradients)> = pairs
        .par_iter()
        .map(|pair| {
            let (out, cache) = model.forward(&pair.input);
            let (l, g) = loss.loss_and_gradient(&pair.target, &out)?;
            Ok((l, model.backward(&cache, &g, false)?))
        })
        .collect::<Result<_>>()?;
    let mut total = Gradients::zeros_like(model);
    let mut loss_sum = 0.0;
    for (l, g) in &per_example {
        loss_sum += l;
        total.accumulate(g);
    }
    let n = pairs.len() as f64;
    total.scale(1.0 / n);
    Ok((loss_sum / n, total))
}

/// Mini-batch SGD for `cfg.max_steps` steps.
///
/// `on_checkpoint(step, model)` runs every `cfg.checkpoint_every` steps.
/// Given identical inputs the returned log and final model are identical.
pub fn train(
    model: &mut SrcnnModel,
    dataset: &PatchCorpus,
    cfg: &TrainConfig,
    loss: &dyn Loss,
    eval: Option<&EvalSet>,
    mut on_checkpoint: impl FnMut(usize, &SrcnnModel) -> Result<()>,
) -> Result<TrainLog> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training corpus has no patch pairs".into()));
    }
    let mut log = TrainLog::default();
    let batches = Batches::new(dataset.len(), cfg.batch_size, cfg.shuffle_seed())?;
    for (step, indices) in (1..=cfg.max_steps).zip(batches) {
        let pairs: Vec<PatchPair> = indices.iter().map(|&i| dataset.pair(i)).collect();
        let (train_loss, mut grads) = batch_gradients(model, &pairs, loss)?;
        if !train_loss.is_finite() {
            return Err(Error::InvalidInput(format!(
                "training diverged at step {step} (loss {train_loss})"
            )));
        }
        if cfg.reduction == Reduction::Sum {
            let p = &pairs[0].target;
            grads.scale(loss.mean_terms(p.width(), p.height()));
        }
        model.sgd_step(&grads)?;

        let due = (cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.max_steps;
        let eval_psnr = match eval {
            Some(set) if due => Some(set.evaluate(model)?.mean_psnr),
            _ => None,
        };
        log.rows.push(LogRow {
            step,
            train_loss,
            eval_psnr,
        });
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            on_checkpoint(step, model)?;
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdpl::MseLoss;
    use crate::raster::ImagePlane;
    use crate::srcnn::Init;

    fn toy_pairs(n: usize) -> Vec<PatchPair> {
        (0..n)
            .map(|i| {
                let target = ImagePlane::from_fn(32, 32, |r, c| {
                    0.5 + 0.4 * ((r as f64 * 0.3 + i as f64).sin() * (c as f64 * 0.2).cos())
                });
                let input = target.map(|v| 0.8 * v + 0.1);
                PatchPair { input, target }
            })
            .collect()
    }

    #[test]
    fn batch_gradient_is_mean_of_examples() {
        let model = SrcnnModel::with_widths(4, 3, Init::FanInUniform, 1);
        let pairs = toy_pairs(4);
        let (loss, g) = batch_gradients(&model, &pairs, &MseLoss).unwrap();
        let mut manual = vec![0.0; model.num_params()];
        let mut manual_loss = 0.0;
        for p in &pairs {
            let (out, cache) = model.forward(&p.input);
            manual_loss += MseLoss.loss(&p.target, &out).unwrap();
            let gi = model.backward(&cache, &MseLoss.gradient(&p.target, &out).unwrap(), false).unwrap();
            for (m, v) in manual.iter_mut().zip(gi.flatten()) {
                *m += v / 4.0;
            }
        }
        assert!((loss - manual_loss / 4.0).abs() < 1e-15);
        for (a, b) in g.flatten().iter().zip(&manual) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn empty_inputs_are_errors() {
        let mut model = SrcnnModel::zeros(2, 2);
        let cfg = TrainConfig { max_steps: 1, ..Default::default() };
        let r = train(&mut model, &PatchCorpus::new(), &cfg, &MseLoss, None, |_, _| Ok(()));
        assert!(matches!(r, Err(Error::Empty(_))));
        assert!(batch_gradients(&model, &[], &MseLoss).is_err());
        let bad = TrainConfig { batch_size: 0, ..cfg };
        let corpus = PatchCorpus::from_pairs(&toy_pairs(1)).unwrap();
        assert!(train(&mut model, &corpus, &bad, &MseLoss, None, |_, _| Ok(())).is_err());
    }

    #[test]
    fn checkpoint_hook_cadence_and_csv() {
        let corpus = PatchCorpus::from_pairs(&toy_pairs(3)).unwrap();
        let mut model = SrcnnModel::with_widths(4, 3, Init::FanInUniform, 2);
        let cfg = TrainConfig {
            batch_size: 2,
            max_steps: 5,
            checkpoint_every: 2,
            ..Default::default()
        };
        let mut seen = Vec::new();
        let log = train(&mut model, &corpus, &cfg, &MseLoss, None, |s, _| {
            seen.push(s);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![2, 4]);
        assert_eq!(log.rows.len(), 5);
        let csv = log.to_csv();
        assert!(csv.starts_with("step,train_loss,eval_psnr\n1,"));
        assert!(csv.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn sum_reduction_scales_the_step() {
        let corpus = PatchCorpus::from_pairs(&toy_pairs(2)).unwrap();
        let start = SrcnnModel::with_widths(4, 3, Init::Gaussian(0.01), 3);
        let step = |reduction| {
            let mut m = start.clone();
            let cfg = TrainConfig { batch_size: 2, max_steps: 1, reduction, ..Default::default() };
            train(&mut m, &corpus, &cfg, &MseLoss, None, |_, _| Ok(())).unwrap();
            m.flatten()
        };
        let p0 = start.flatten();
        let (mean, sum) = (step(Reduction::Mean), step(Reduction::Sum));
        // Parameters are stored at f32 precision, so compare loosely.
        let (mut dm, mut ds) = (0.0, 0.0);
        for i in 0..p0.len() {
            dm += (mean[i] - p0[i]).abs();
            ds += (sum[i] - p0[i]).abs();
        }
        let ratio = ds / dm;
        assert!((ratio / 1024.0 - 1.0).abs() < 0.05, "ratio {ratio}");
    }
}
