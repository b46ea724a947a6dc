//! Reconstruction + adversarial objective and the alternating loop.
//!
//! Each training step runs two sub-steps in order:
//!
//! 1. discriminator maximization — clean and noisy windows pass through
//!    the encoder with gradients blocked (detached latents), and the
//!    discriminator descends the negated adversarial loss at
//!    `lambda = 1`;
//! 2. encoder-decoder minimization — the total loss is the
//!    reconstruction error plus the adversarial loss at `lambda = 0`,
//!    whose gradient reaches the encoder through the noisy path only.
//!
//! Discriminator parameters change only in sub-step 1 and
//! encoder-decoder parameters only in sub-step 2.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::io::LatentLabel;
use crate::model::{
    self, build_model, is_discriminator_param, Encoding, ModelBinding, ModelConfig, ModelParams,
};
use crate::optim::{AdaDelta, AdaDeltaConfig};
use crate::signal::{snr_db, window_split_strided, SignalPair};
use crate::tensor::{Shape, Tensor};

/// Probabilities are clamped to this band before any logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

/// Per-step loss terms.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossBundle {
    /// Reconstruction loss of the encoder-decoder.
    pub l_ed: f64,
    /// Adversarial loss at `lambda = 1` (discriminator sub-step).
    pub l_adv_disc: f64,
    /// Adversarial loss at `lambda = 0` (encoder sub-step).
    pub l_adv_enc: f64,
    /// Train-batch discriminator accuracy at threshold 0.5.
    pub disc_accuracy: f64,
}

/// One epoch of the report; `disc_accuracy` here is measured on
/// held-out windows.
#[derive(Clone, Copy, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_ed: f64,
    pub l_adv_disc: f64,
    pub l_adv_enc: f64,
    pub disc_accuracy: f64,
    pub val_snr_db: f64,
    pub wall_secs: f64,
}

/// Training history; the CSV form excludes wall-clock so identical
/// seeded runs serialize byte-identically.
#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub seed: u64,
    pub config_hash: String,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,l_ed,l_adv_disc,l_adv_enc,disc_accuracy,val_snr_db\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.l_ed, r.l_adv_disc, r.l_adv_enc, r.disc_accuracy, r.val_snr_db
            ));
        }
        out
    }

    pub fn to_log(&self) -> String {
        let mut out = format!("seed {}  config {}\n", self.seed, self.config_hash);
        for r in &self.epochs {
            out.push_str(&format!(
                "epoch {:4}  l_ed {:.6}  l_adv_disc {:+.4}  l_adv_enc {:+.4}  disc_acc {:.3}  val_snr {:.2} dB  ({:.1}s)\n",
                r.epoch, r.l_ed, r.l_adv_disc, r.l_adv_enc, r.disc_accuracy, r.val_snr_db, r.wall_secs
            ));
        }
        out
    }

    pub fn best_epoch(&self) -> Option<&EpochRecord> {
        self.epochs
            .iter()
            .reduce(|best, r| if r.val_snr_db > best.val_snr_db { r } else { best })
    }
}

/// Aligned clean/noisy windows as `(batch, 1, window_len)` tensors;
/// `noisy` row `i` is the corrupted version of `clean` row `i`.
#[derive(Clone, Debug)]
pub struct TrainBatch {
    pub clean: Tensor,
    pub noisy: Tensor,
}

impl TrainBatch {
    pub fn from_windows(windows: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Data("empty training batch".into()));
        }
        let w = windows[0].0.len();
        let shape = Shape::new(windows.len(), 1, w);
        let clean: Vec<f64> = windows.iter().flat_map(|(c, _)| c.iter().copied()).collect();
        let noisy: Vec<f64> = windows.iter().flat_map(|(_, n)| n.iter().copied()).collect();
        Ok(TrainBatch {
            clean: Tensor::from_vec(shape, clean)?,
            noisy: Tensor::from_vec(shape, noisy)?,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.clean.shape().batch
    }
}

/// Reconstruction objective: mean squared error between the denoised
/// output and the clean target.
pub fn loss_ed(g: &mut Graph, f_out: Var, y: Var) -> Result<Var> {
    g.mse(f_out, y)
}

/// Adversarial objective
/// `lambda * E[log DS(phi(y))] + E[log(1 - DS(phi(x)))]`.
///
/// `lambda` must be exactly 0 or 1; at 0 the clean term is scaled away,
/// which also zeroes every gradient flowing through the clean path.
pub fn loss_adv(g: &mut Graph, ds_clean: Var, ds_noisy: Var, lambda: f64) -> Result<Var> {
    if lambda != 0.0 && lambda != 1.0 {
        return Err(Error::Config(format!("lambda must be 0 or 1, got {lambda}")));
    }
    let clean_clamped = g.clamp(ds_clean, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let clean_log = g.ln(clean_clamped);
    let clean_term = g.mean_all(clean_log);

    let noisy_clamped = g.clamp(ds_noisy, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let one_minus = g.affine(noisy_clamped, -1.0, 1.0);
    let noisy_log = g.ln(one_minus);
    let noisy_term = g.mean_all(noisy_log);

    let gated = g.affine(clean_term, lambda, 0.0);
    g.add(gated, noisy_term)
}

fn check_finite(g: &Graph, v: Var, sub_step: &str) -> Result<()> {
    if !g.value(v).is_finite() {
        return Err(Error::Numeric(format!("non-finite loss in the {sub_step} sub-step")));
    }
    Ok(())
}

fn batch_accuracy(g: &Graph, ds_clean: Var, ds_noisy: Var) -> f64 {
    let correct_clean = g.value(ds_clean).data().iter().filter(|p| **p > 0.5).count();
    let correct_noisy = g.value(ds_noisy).data().iter().filter(|p| **p <= 0.5).count();
    let total = g.value(ds_clean).shape().numel() + g.value(ds_noisy).shape().numel();
    (correct_clean + correct_noisy) as f64 / total as f64
}

fn apply_grads<F: Fn(&str) -> bool>(
    g: &Graph,
    bind: &ModelBinding,
    params: &mut ModelParams,
    opt: &mut AdaDelta,
    select: F,
) -> Result<()> {
    let names: Vec<String> = params.names().map(String::from).collect();
    for name in names {
        if !select(&name) {
            continue;
        }
        let var = bind.var(&name)?;
        let Some(grad) = g.grad(var) else { continue };
        let grad = grad.to_vec();
        let tensor = params
            .tensor_mut(&name)
            .ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))?;
        opt.step(&name, tensor, &grad)?;
    }
    Ok(())
}

/// Discriminator maximization (sub-step 1). Encoder gradients are
/// blocked by detaching both latents; only `disc.*` parameters move.
pub fn discriminator_step(
    params: &mut ModelParams,
    opt: &mut AdaDelta,
    batch: &TrainBatch,
) -> Result<(f64, f64)> {
    let cfg = params.config().clone();
    let mut g = Graph::new();
    let bind = params.bind(&mut g);
    let x = g.leaf(batch.noisy.clone());
    let y = g.leaf(batch.clean.clone());

    let lat_noisy = model::encode(&mut g, &cfg, &bind, x)?.latent;
    let lat_clean = model::encode(&mut g, &cfg, &bind, y)?.latent;
    let lat_noisy = g.detach(lat_noisy);
    let lat_clean = g.detach(lat_clean);

    let ds_clean = model::discriminate(&mut g, &cfg, &bind, lat_clean)?;
    let ds_noisy = model::discriminate(&mut g, &cfg, &bind, lat_noisy)?;
    let l_adv = loss_adv(&mut g, ds_clean, ds_noisy, 1.0)?;
    check_finite(&g, l_adv, "discriminator maximization")?;

    // Maximization as descent on the negated objective.
    let objective = g.affine(l_adv, -1.0, 0.0);
    g.backward(objective)?;
    apply_grads(&g, &bind, params, opt, is_discriminator_param)?;

    Ok((g.value(l_adv).item(), batch_accuracy(&g, ds_clean, ds_noisy)))
}

/// Encoder-decoder minimization (sub-step 2). Returns
/// `(l_ed, l_adv_enc)`; the total descended is their exact sum.
pub fn encoder_decoder_step(
    params: &mut ModelParams,
    opt: &mut AdaDelta,
    batch: &TrainBatch,
) -> Result<(f64, f64)> {
    let cfg = params.config().clone();
    let mut g = Graph::new();
    let bind = params.bind(&mut g);
    let x = g.leaf(batch.noisy.clone());
    let y = g.leaf(batch.clean.clone());

    let Encoding { latent, stage_acts } = model::encode(&mut g, &cfg, &bind, x)?;
    let f_out = model::decode(&mut g, &cfg, &bind, latent, &stage_acts)?;
    let l_ed = loss_ed(&mut g, f_out, y)?;

    let (total, l_adv_value) = if cfg.use_adversarial {
        // The clean latent is detached: only the noisy path may update
        // the encoder, and lambda = 0 removes the clean term entirely.
        let lat_clean = model::encode(&mut g, &cfg, &bind, y)?.latent;
        let lat_clean = g.detach(lat_clean);
        let ds_clean = model::discriminate(&mut g, &cfg, &bind, lat_clean)?;
        let ds_noisy = model::discriminate(&mut g, &cfg, &bind, latent)?;
        let l_adv = loss_adv(&mut g, ds_clean, ds_noisy, 0.0)?;
        let total = g.add(l_ed, l_adv)?;
        (total, g.value(l_adv).item())
    } else {
        (l_ed, 0.0)
    };
    check_finite(&g, total, "encoder-decoder minimization")?;

    g.backward(total)?;
    apply_grads(&g, &bind, params, opt, |name| !is_discriminator_param(name))?;

    Ok((g.value(l_ed).item(), l_adv_value))
}

/// One alternating update; with `use_adversarial` off only the
/// reconstruction sub-step runs.
pub fn train_step(
    params: &mut ModelParams,
    opt: &mut AdaDelta,
    batch: &TrainBatch,
    disc_steps: usize,
) -> Result<LossBundle> {
    let mut bundle = LossBundle { disc_accuracy: 0.5, ..LossBundle::default() };
    if params.config().use_adversarial {
        for _ in 0..disc_steps.max(1) {
            let (l_adv_disc, acc) = discriminator_step(params, opt, batch)?;
            bundle.l_adv_disc = l_adv_disc;
            bundle.disc_accuracy = acc;
        }
    }
    let (l_ed, l_adv_enc) = encoder_decoder_step(params, opt, batch)?;
    bundle.l_ed = l_ed;
    bundle.l_adv_enc = l_adv_enc;
    Ok(bundle)
}

/// Fit options beyond the model/optimizer configs.
#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Window stride for training data; 0 means `window_len`
    /// (non-overlapping).
    pub window_stride: usize,
    /// Discriminator sub-steps per encoder-decoder sub-step.
    pub disc_steps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { epochs: 200, batch_size: 32, seed: 0, window_stride: 0, disc_steps: 1 }
    }
}

/// Latents collected for the 2D projection export.
#[derive(Clone, Debug)]
pub struct LatentSnapshot {
    pub epoch: usize,
    pub latents: Vec<(Vec<f64>, LatentLabel)>,
}

pub struct FitResult {
    pub report: TrainReport,
    /// Parameters (and optimizer state) of the best-validation-SNR epoch.
    pub best_params: ModelParams,
    pub best_optimizer: AdaDelta,
    pub snapshots: Vec<LatentSnapshot>,
}

fn fnv1a(text: &str) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

fn mean_val_snr(params: &ModelParams, val: &[SignalPair]) -> Result<f64> {
    let mut total = 0.0;
    for pair in val {
        let denoised = model::denoise_signal(params, &pair.noisy)?;
        total += snr_db(&pair.clean, &denoised)?;
    }
    Ok(total / val.len() as f64)
}

/// Encode held-out windows and return (flattened latents, labels) and
/// the discriminator accuracy over them.
fn heldout_latents(
    params: &ModelParams,
    windows: &[(Vec<f64>, Vec<f64>)],
) -> Result<(Vec<(Vec<f64>, LatentLabel)>, f64)> {
    let cfg = params.config().clone();
    let batch = TrainBatch::from_windows(windows)?;
    let mut g = Graph::new();
    let bind = params.bind(&mut g);
    let x = g.leaf(batch.noisy.clone());
    let y = g.leaf(batch.clean.clone());
    let lat_noisy = model::encode(&mut g, &cfg, &bind, x)?.latent;
    let lat_clean = model::encode(&mut g, &cfg, &bind, y)?.latent;

    let mut latents = Vec::with_capacity(2 * windows.len());
    let per = cfg.feature_channels * cfg.window_len;
    for (var, label) in [(lat_clean, LatentLabel::Clean), (lat_noisy, LatentLabel::Noisy)] {
        let data = g.value(var).data();
        for b in 0..windows.len() {
            latents.push((data[b * per..(b + 1) * per].to_vec(), label));
        }
    }

    let accuracy = if cfg.use_adversarial {
        let ds_clean = model::discriminate(&mut g, &cfg, &bind, lat_clean)?;
        let ds_noisy = model::discriminate(&mut g, &cfg, &bind, lat_noisy)?;
        batch_accuracy(&g, ds_clean, ds_noisy)
    } else {
        0.5
    };
    Ok((latents, accuracy))
}

/// Train for `opts.epochs` epochs; deterministic given the seed and
/// configs. Tracks the best-validation-SNR parameters and captures
/// latent snapshots at the first and final epoch.
pub fn fit(
    train: &[SignalPair],
    val: &[SignalPair],
    config: &ModelConfig,
    opt_config: &AdaDeltaConfig,
    opts: &FitOptions,
) -> Result<FitResult> {
    config.validate()?;
    opt_config.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Data("validation set is empty".into()));
    }
    let stride = if opts.window_stride == 0 { config.window_len } else { opts.window_stride };
    let mut windows = Vec::new();
    for pair in train {
        windows.extend(window_split_strided(pair, config.window_len, stride));
    }
    if windows.is_empty() {
        return Err(Error::Data(format!(
            "no training windows: every signal is shorter than window_len {}",
            config.window_len
        )));
    }
    let val_windows: Vec<(Vec<f64>, Vec<f64>)> = val
        .iter()
        .flat_map(|p| window_split_strided(p, config.window_len, config.window_len))
        .collect();

    let config_hash = fnv1a(&format!(
        "{}|{:?}|{:?}",
        serde_json::to_string(config).unwrap_or_default(),
        opt_config,
        opts
    ));

    let mut params = build_model(config, opts.seed)?;
    let mut opt = AdaDelta::new(*opt_config);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut report = TrainReport { epochs: Vec::new(), seed: opts.seed, config_hash };
    let mut best: Option<(f64, ModelParams, AdaDelta)> = None;
    let mut snapshots = Vec::new();

    let mut order: Vec<usize> = (0..windows.len()).collect();
    for epoch in 1..=opts.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);

        let mut sums = LossBundle::default();
        let mut steps = 0usize;
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let selected: Vec<(Vec<f64>, Vec<f64>)> =
                chunk.iter().map(|i| windows[*i].clone()).collect();
            let batch = TrainBatch::from_windows(&selected)?;
            let bundle = train_step(&mut params, &mut opt, &batch, opts.disc_steps)?;
            sums.l_ed += bundle.l_ed;
            sums.l_adv_disc += bundle.l_adv_disc;
            sums.l_adv_enc += bundle.l_adv_enc;
            sums.disc_accuracy += bundle.disc_accuracy;
            steps += 1;
        }
        let inv = 1.0 / steps.max(1) as f64;

        let val_snr = mean_val_snr(&params, val)?;
        let (latents, heldout_acc) = if val_windows.len() >= 3 {
            heldout_latents(&params, &val_windows)?
        } else {
            (Vec::new(), 0.5)
        };

        report.epochs.push(EpochRecord {
            epoch,
            l_ed: sums.l_ed * inv,
            l_adv_disc: sums.l_adv_disc * inv,
            l_adv_enc: sums.l_adv_enc * inv,
            disc_accuracy: heldout_acc,
            val_snr_db: val_snr,
            wall_secs: started.elapsed().as_secs_f64(),
        });
        log::info!(
            "epoch {epoch}: l_ed {:.6}, val_snr {:.2} dB, disc_acc {:.3}",
            sums.l_ed * inv,
            val_snr,
            heldout_acc
        );

        if epoch == 1 || epoch == opts.epochs {
            if latents.len() >= 3 {
                snapshots.push(LatentSnapshot { epoch, latents });
            } else {
                log::warn!("epoch {epoch}: too few validation windows for a latent snapshot");
            }
        }

        if best.as_ref().is_none_or(|(snr, _, _)| val_snr > *snr) {
            best = Some((val_snr, params.clone(), opt.clone()));
        }
    }

    let (best_params, best_optimizer) = match best {
        Some((_, p, o)) => (p, o),
        None => (params, opt), // zero epochs: initialization as-is
    };
    Ok(FitResult { report, best_params, best_optimizer, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{corrupt, gen_clean, CleanKind, NoiseKind, NoiseSpec};

    fn small_config(adversarial: bool) -> ModelConfig {
        ModelConfig {
            feature_channels: 4,
            window_len: 8,
            use_adversarial: adversarial,
            ..ModelConfig::default()
        }
    }

    fn make_batch(cfg: &ModelConfig, n: usize, seed: u64) -> TrainBatch {
        let len = cfg.window_len * n;
        let clean = gen_clean(CleanKind::Multisine, len, 200.0, seed).unwrap();
        let noisy = corrupt(
            &clean,
            200.0,
            &NoiseSpec { kind: NoiseKind::Gaussian { sigma: 0.3 }, seed: seed + 7 },
        )
        .unwrap();
        let pair = SignalPair::new("b".into(), 200.0, clean, noisy).unwrap();
        let windows = window_split_strided(&pair, cfg.window_len, cfg.window_len);
        TrainBatch::from_windows(&windows).unwrap()
    }

    fn probs(g: &mut Graph, values: &[f64]) -> Var {
        g.leaf(Tensor::from_vec(Shape::new(values.len(), 1, 1), values.to_vec()).unwrap())
    }

    #[test]
    fn loss_adv_closed_form_at_half() {
        let mut g = Graph::new();
        let c = probs(&mut g, &[0.5, 0.5]);
        let n = probs(&mut g, &[0.5, 0.5]);
        let l = loss_adv(&mut g, c, n, 1.0).unwrap();
        let expect = -2.0 * std::f64::consts::LN_2;
        assert!((g.value(l).item() - expect).abs() < 1e-12);
    }

    #[test]
    fn loss_adv_lambda_zero_drops_clean_term_exactly() {
        let mut g = Graph::new();
        let c = probs(&mut g, &[0.9, 0.2]);
        let n = probs(&mut g, &[0.3, 0.6]);
        let l0 = loss_adv(&mut g, c, n, 0.0).unwrap();

        let clamped: Vec<f64> = [0.3f64, 0.6]
            .iter()
            .map(|p| (1.0 - p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)).ln())
            .collect();
        let expect = clamped.iter().sum::<f64>() / 2.0;
        assert_eq!(g.value(l0).item(), expect);
    }

    #[test]
    fn loss_adv_rejects_other_lambdas_and_stays_nonpositive() {
        let mut g = Graph::new();
        let c = probs(&mut g, &[0.999_999_9]);
        let n = probs(&mut g, &[1e-9]);
        assert!(loss_adv(&mut g, c, n, 0.5).is_err());

        // Discriminator optimum: both terms approach zero from below.
        let l = loss_adv(&mut g, c, n, 1.0).unwrap();
        let v = g.value(l).item();
        assert!(v <= 0.0 && v > -1e-5, "value {v}");
    }

    #[test]
    fn lambda_gating_zeroes_clean_path_encoder_gradients() {
        let cfg = small_config(true);
        let mut params = build_model(&cfg, 3).unwrap();
        // Nonzero biases so gradients would flow if not gated.
        for name in ["enc.conv0.b", "enc.dil1.b"] {
            let shape = params.tensor(name).unwrap().shape();
            params.set_tensor(name, Tensor::filled(shape, 0.05)).unwrap();
        }
        let batch = make_batch(&cfg, 4, 1);

        let mut g = Graph::new();
        let bind = params.bind(&mut g);
        let y = g.leaf(batch.clean.clone());
        // Clean path NOT detached: only the lambda gate blocks it.
        let lat_clean = model::encode(&mut g, &cfg, &bind, y).unwrap().latent;
        let ds_clean = model::discriminate(&mut g, &cfg, &bind, lat_clean).unwrap();
        let x = g.leaf(batch.noisy.clone());
        let lat_noisy_detached = {
            let lat = model::encode(&mut g, &cfg, &bind, x).unwrap().latent;
            g.detach(lat)
        };
        let ds_noisy = model::discriminate(&mut g, &cfg, &bind, lat_noisy_detached).unwrap();
        let l = loss_adv(&mut g, ds_clean, ds_noisy, 0.0).unwrap();
        g.backward(l).unwrap();

        for (name, var) in bind.vars() {
            if is_discriminator_param(name) {
                continue;
            }
            if let Some(grad) = g.grad(var) {
                assert!(
                    grad.iter().all(|v| *v == 0.0),
                    "encoder gradient through the clean path leaked into {name}"
                );
            }
        }
    }

    #[test]
    fn discriminator_step_leaves_encoder_decoder_untouched() {
        let cfg = small_config(true);
        let mut params = build_model(&cfg, 5).unwrap();
        let mut opt = AdaDelta::new(AdaDeltaConfig::default());
        let batch = make_batch(&cfg, 4, 2);
        let before = params.clone();

        discriminator_step(&mut params, &mut opt, &batch).unwrap();

        let mut disc_changed = false;
        for (name, tensor) in params.tensors() {
            if is_discriminator_param(name) {
                disc_changed |= Some(tensor) != before.tensor(name);
            } else {
                assert_eq!(Some(tensor), before.tensor(name), "{name} changed in sub-step 1");
            }
        }
        assert!(disc_changed);
    }

    #[test]
    fn encoder_decoder_step_leaves_discriminator_untouched() {
        let cfg = small_config(true);
        let mut params = build_model(&cfg, 6).unwrap();
        let mut opt = AdaDelta::new(AdaDeltaConfig::default());
        let batch = make_batch(&cfg, 4, 3);
        let before = params.clone();

        encoder_decoder_step(&mut params, &mut opt, &batch).unwrap();

        let mut ed_changed = false;
        for (name, tensor) in params.tensors() {
            if is_discriminator_param(name) {
                assert_eq!(Some(tensor), before.tensor(name), "{name} changed in sub-step 2");
            } else {
                ed_changed |= Some(tensor) != before.tensor(name);
            }
        }
        assert!(ed_changed);
    }

    #[test]
    fn non_adversarial_step_is_pure_reconstruction() {
        let cfg = small_config(false);
        let mut params = build_model(&cfg, 7).unwrap();
        let mut opt = AdaDelta::new(AdaDeltaConfig::default());
        let batch = make_batch(&cfg, 4, 4);
        let bundle = train_step(&mut params, &mut opt, &batch, 1).unwrap();
        assert_eq!(bundle.l_adv_disc, 0.0);
        assert_eq!(bundle.l_adv_enc, 0.0);
        assert_eq!(bundle.disc_accuracy, 0.5);
        assert!(params.names().all(|n| !is_discriminator_param(n)));
    }

    #[test]
    fn eq5_total_is_exact_sum_of_terms() {
        // Rebuild the step-2 graph and check the descended scalar.
        let cfg = small_config(true);
        let params = build_model(&cfg, 9).unwrap();
        let batch = make_batch(&cfg, 4, 5);

        let mut g = Graph::new();
        let bind = params.bind(&mut g);
        let x = g.leaf(batch.noisy.clone());
        let y = g.leaf(batch.clean.clone());
        let Encoding { latent, stage_acts } = model::encode(&mut g, &cfg, &bind, x).unwrap();
        let f_out = model::decode(&mut g, &cfg, &bind, latent, &stage_acts).unwrap();
        let led = loss_ed(&mut g, f_out, y).unwrap();
        let lat_clean = model::encode(&mut g, &cfg, &bind, y).unwrap().latent;
        let ds_clean = model::discriminate(&mut g, &cfg, &bind, lat_clean).unwrap();
        let ds_noisy = model::discriminate(&mut g, &cfg, &bind, latent).unwrap();
        let ladv = loss_adv(&mut g, ds_clean, ds_noisy, 0.0).unwrap();
        let total = g.add(led, ladv).unwrap();
        assert_eq!(g.value(total).item(), g.value(led).item() + g.value(ladv).item());
    }

    #[test]
    fn one_step_descends_reconstruction_loss() {
        let cfg = ModelConfig {
            feature_channels: 3,
            window_len: 8,
            use_adversarial: false,
            ..ModelConfig::default()
        };
        let mut descended = 0;
        let trials = 100;
        for seed in 0..trials {
            let mut params = build_model(&cfg, seed).unwrap();
            let mut opt = AdaDelta::new(AdaDeltaConfig { weight_decay: 0.0, ..Default::default() });
            let batch = make_batch(&cfg, 1, seed + 1000);

            let loss_of = |p: &ModelParams| {
                let mut g = Graph::new();
                let bind = p.bind(&mut g);
                let x = g.leaf(batch.noisy.clone());
                let y = g.leaf(batch.clean.clone());
                let out = model::forward(&mut g, &cfg, &bind, x).unwrap();
                let l = g.mse(out, y).unwrap();
                g.value(l).item()
            };
            let before = loss_of(&params);
            encoder_decoder_step(&mut params, &mut opt, &batch).unwrap();
            if loss_of(&params) < before {
                descended += 1;
            }
        }
        assert!(descended >= 95, "descended in only {descended}/{trials} seeds");
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = small_config(true);
        let pair = {
            let clean = gen_clean(CleanKind::Multisine, 64, 200.0, 1).unwrap();
            let noisy = corrupt(
                &clean,
                200.0,
                &NoiseSpec { kind: NoiseKind::Gaussian { sigma: 0.3 }, seed: 2 },
            )
            .unwrap();
            SignalPair::new("s".into(), 200.0, clean, noisy).unwrap()
        };
        let opts = FitOptions { epochs: 0, seed: 4, ..Default::default() };
        let result = fit(
            &[pair.clone()],
            &[pair],
            &cfg,
            &AdaDeltaConfig::default(),
            &opts,
        )
        .unwrap();
        assert!(result.report.epochs.is_empty());
        let fresh = build_model(&cfg, 4).unwrap();
        for (name, t) in fresh.tensors() {
            assert_eq!(Some(t), result.best_params.tensor(name));
        }
    }

    #[test]
    fn fit_is_deterministic_and_errors_on_empty_data() {
        let cfg = small_config(true);
        let mk = |seed: u64| {
            let clean = gen_clean(CleanKind::Multisine, 96, 200.0, seed).unwrap();
            let noisy = corrupt(
                &clean,
                200.0,
                &NoiseSpec { kind: NoiseKind::Gaussian { sigma: 0.4 }, seed: seed + 1 },
            )
            .unwrap();
            SignalPair::new(format!("s{seed}"), 200.0, clean, noisy).unwrap()
        };
        let train = vec![mk(1), mk(2)];
        let val = vec![mk(3)];
        let opts = FitOptions { epochs: 3, batch_size: 4, seed: 11, ..Default::default() };
        let a = fit(&train, &val, &cfg, &AdaDeltaConfig::default(), &opts).unwrap();
        let b = fit(&train, &val, &cfg, &AdaDeltaConfig::default(), &opts).unwrap();
        assert_eq!(a.report.to_csv(), b.report.to_csv());
        assert_eq!(a.report.epochs.len(), 3);

        assert!(fit(&[], &val, &cfg, &AdaDeltaConfig::default(), &opts).is_err());
    }
}
