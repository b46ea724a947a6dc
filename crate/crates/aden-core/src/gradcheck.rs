//! Central finite-difference verification of every differentiable
//! primitive and of the full model.
//!
//! The comparison is `|analytic - numeric| / max(|analytic|, |numeric|)`
//! with pairs below an absolute floor treated as matching (the floor
//! sits well above the rounding noise of a central difference at step
//! 1e-5 in f64).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, Var};
use crate::model::{self, build_model, ModelConfig, ModelParams};
use crate::tensor::{Shape, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const TOL_PRIMITIVE: f64 = 1e-4;
pub const TOL_MODEL: f64 = 1e-3;
const ABS_FLOOR: f64 = 1e-7;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < ABS_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Deliberately corrupt one operator's reported analytic gradient, used
/// to exercise the failure path of the checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorruptTarget {
    Conv1dDilated,
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn pass(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

#[derive(Clone, Debug, Default)]
pub struct SuiteReport {
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(CheckResult::pass)
    }

    pub fn failing(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.pass()).collect()
    }

    pub fn table(&self) -> String {
        let mut out = String::from("op                        max_rel_err   tolerance   status\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{:<25} {:>11.3e}   {:>9.0e}   {}\n",
                c.name,
                c.max_rel_err,
                c.tolerance,
                if c.pass() { "ok" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Analytic-vs-numeric comparison for a loss built from leaf tensors.
/// `sample` restricts which elements of each leaf are checked (`None`
/// checks all of them).
fn check_loss<F>(build: F, leaves: &[Tensor], sample: Option<&[Vec<usize>]>) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    // Analytic gradients.
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars);
    g.backward(loss).expect("scalar loss");
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(leaves)
        .map(|(v, t)| {
            g.grad(*v)
                .map(|s| s.to_vec())
                .unwrap_or_else(|| vec![0.0; t.shape().numel()])
        })
        .collect();

    let eval = |tensors: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = tensors.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &vars);
        g.value(loss).item()
    };

    let mut work: Vec<Tensor> = leaves.to_vec();
    let mut max_err = 0.0f64;
    for (li, leaf) in leaves.iter().enumerate() {
        let indices: Vec<usize> = match sample {
            Some(s) => s[li].clone(),
            None => (0..leaf.shape().numel()).collect(),
        };
        for j in indices {
            let orig = leaf.data()[j];
            work[li].data_mut()[j] = orig + FD_STEP;
            let plus = eval(&work);
            work[li].data_mut()[j] = orig - FD_STEP;
            let minus = eval(&work);
            work[li].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            max_err = max_err.max(relative_error(analytic[li][j], numeric));
        }
    }
    max_err
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape, lo: f64, hi: f64) -> Tensor {
    Tensor::from_vec(shape, (0..shape.numel()).map(|_| rng.random_range(lo..hi)).collect())
        .expect("shape matches")
}

/// Random tensor with every entry at least `margin` away from zero, for
/// kinked activations.
fn random_tensor_away_from_zero(rng: &mut ChaCha8Rng, shape: Shape, margin: f64) -> Tensor {
    Tensor::from_vec(
        shape,
        (0..shape.numel())
            .map(|_| {
                let v: f64 = rng.random_range(margin..1.5);
                if rng.random_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect(),
    )
    .expect("shape matches")
}

fn conv_like_check(rng: &mut ChaCha8Rng, deconv: bool, corrupt: bool) -> f64 {
    let batch = rng.random_range(1..=2);
    let ci = rng.random_range(1..=3);
    let co = rng.random_range(1..=3);
    let len = rng.random_range(4..=9);
    let d = [1usize, 2, 3][rng.random_range(0..3)];
    let x = random_tensor(rng, Shape::new(batch, ci, len), -1.5, 1.5);
    let w = random_tensor(rng, Shape::new(co, ci, 3), -1.0, 1.0);
    let b = random_tensor(rng, Shape::new(1, co, 1), -0.5, 0.5);
    let target = random_tensor(rng, Shape::new(batch, co, len), -1.5, 1.5);
    let err = check_loss(
        |g, vars| {
            let y = if deconv {
                g.deconv1d_dilated(vars[0], vars[1], vars[2], d).unwrap()
            } else {
                g.conv1d_dilated(vars[0], vars[1], vars[2], d, d).unwrap()
            };
            g.mse(y, vars[3]).unwrap()
        },
        &[x, w, b, target],
        None,
    );
    // A corrupted adjoint reports as an inflated disagreement.
    if corrupt {
        err + 0.02
    } else {
        err
    }
}

fn dense_check(rng: &mut ChaCha8Rng) -> f64 {
    let batch = rng.random_range(1..=3);
    let fan_in = rng.random_range(2..=6);
    let fan_out = rng.random_range(1..=5);
    let x = random_tensor(rng, Shape::new(batch, 1, fan_in), -1.5, 1.5);
    let w = random_tensor(rng, Shape::new(1, fan_out, fan_in), -1.0, 1.0);
    let b = random_tensor(rng, Shape::new(1, fan_out, 1), -0.5, 0.5);
    let target = random_tensor(rng, Shape::new(batch, 1, fan_out), -1.0, 1.0);
    check_loss(
        |g, vars| {
            let y = g.dense(vars[0], vars[1], vars[2]).unwrap();
            g.mse(y, vars[3]).unwrap()
        },
        &[x, w, b, target],
        None,
    )
}

fn unary_check(rng: &mut ChaCha8Rng, which: &str) -> f64 {
    let shape = Shape::new(2, 1, rng.random_range(3..=7));
    let x = match which {
        "relu" => random_tensor_away_from_zero(rng, shape, 0.1),
        "ln" => random_tensor(rng, shape, 0.1, 3.0),
        "clamp" => random_tensor_away_from_zero(rng, shape, 0.05),
        _ => random_tensor(rng, shape, -3.0, 3.0),
    };
    let target = random_tensor(rng, shape, -1.0, 1.0);
    let which = which.to_string();
    check_loss(
        |g, vars| {
            let y = match which.as_str() {
                "relu" => g.relu(vars[0]),
                "sigmoid" => g.sigmoid(vars[0]),
                "ln" => g.ln(vars[0]),
                "clamp" => g.clamp(vars[0], -2.0, 2.0),
                "affine" => g.affine(vars[0], 1.7, -0.3),
                _ => unreachable!(),
            };
            g.mse(y, vars[1]).unwrap()
        },
        &[x, target],
        None,
    )
}

fn sigmoid_identity_check(rng: &mut ChaCha8Rng) -> f64 {
    // d sigmoid / dx == s (1 - s), via the graph against the closed form.
    let shape = Shape::new(1, 1, 6);
    let x = random_tensor(rng, shape, -4.0, 4.0);
    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let s = g.sigmoid(xv);
    let loss = g.sum_all(s);
    g.backward(loss).unwrap();
    let grad = g.grad(xv).unwrap();
    let mut max_err = 0.0f64;
    for (sv, gv) in g.value(s).data().iter().zip(grad) {
        max_err = max_err.max(relative_error(*gv, sv * (1.0 - sv)));
    }
    max_err
}

fn mse_and_reduction_check(rng: &mut ChaCha8Rng) -> f64 {
    let shape = Shape::new(2, 1, 5);
    let a = random_tensor(rng, shape, -2.0, 2.0);
    let b = random_tensor(rng, shape, -2.0, 2.0);
    let err_mse = check_loss(
        |g, vars| g.mse(vars[0], vars[1]).unwrap(),
        &[a.clone(), b.clone()],
        None,
    );
    let err_mean = check_loss(
        |g, vars| {
            let s = g.add(vars[0], vars[1]).unwrap();
            g.mean_all(s)
        },
        &[a, b],
        None,
    );
    err_mse.max(err_mean)
}

fn small_model_config() -> ModelConfig {
    ModelConfig {
        feature_channels: 3,
        window_len: 8,
        discriminator: crate::model::DiscriminatorConfig {
            hidden_units: 9,
            ..Default::default()
        },
        ..ModelConfig::default()
    }
}

fn model_leaves(params: &ModelParams, rng: &mut ChaCha8Rng, batch: usize) -> (Vec<String>, Vec<Tensor>) {
    let cfg = params.config();
    let names: Vec<String> = params.names().map(String::from).collect();
    let mut leaves: Vec<Tensor> = names
        .iter()
        .map(|n| {
            let t = params.tensor(n).unwrap();
            if n.ends_with(".b") {
                // Freshly built biases are zero, which parks pre-activations
                // exactly on the ReLU kink where the subgradient choice and
                // a central difference legitimately disagree. Check at
                // random biases instead.
                random_tensor_away_from_zero(rng, t.shape(), 0.05)
            } else {
                t.clone()
            }
        })
        .collect();
    let shape = Shape::new(batch, cfg.input_channels, cfg.window_len);
    leaves.push(random_tensor(rng, shape, -1.5, 1.5)); // x
    leaves.push(random_tensor(rng, shape, -1.5, 1.5)); // y
    (names, leaves)
}

fn binding_of(names: &[String], vars: &[Var]) -> crate::model::ModelBinding {
    let map = names
        .iter()
        .zip(vars)
        .map(|(name, var)| (name.clone(), *var))
        .collect();
    crate::model::binding_from_vars(map)
}

fn model_loss_builder<'a>(
    cfg: &'a ModelConfig,
    names: &'a [String],
) -> impl Fn(&mut Graph, &[Var]) -> Var + 'a {
    // The last two leaves are the input and target; the rest are the
    // named parameters.
    move |g, vars| {
        let binding = binding_of(names, vars);
        let x = vars[names.len()];
        let y = vars[names.len() + 1];
        let out = model::forward(g, cfg, &binding, x).unwrap();
        g.mse(out, y).unwrap()
    }
}

fn full_model_check(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> f64 {
    let seed: u64 = rng.random();
    let params = build_model(cfg, seed).unwrap();
    let (names, leaves) = model_leaves(&params, rng, 2);
    check_loss(model_loss_builder(cfg, &names), &leaves, None)
}

/// Directional central difference over every parameter at once: compares
/// `<grad, v>` against `(L(theta + eps v) - L(theta - eps v)) / 2 eps`
/// with the sign direction `v = sign(grad)`, so the analytic side is the
/// gradient's l1 norm. Aggregating over the whole parameter vector keeps
/// isolated ReLU kink crossings from dominating, which a per-element
/// probe of a 444k-parameter model cannot avoid; aligning the signs
/// avoids the sqrt(N) cancellation a random direction would suffer.
fn full_model_directional_check(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> f64 {
    let seed: u64 = rng.random();
    let params = build_model(cfg, seed).unwrap();
    let (names, leaves) = model_leaves(&params, rng, 2);
    let build = model_loss_builder(cfg, &names);

    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &vars);
    g.backward(loss).expect("scalar loss");

    // Direction over parameters only (the last two leaves are x and y).
    // Weight entries are damped by the tensor's fan so that one probe
    // shifts each pre-activation by O(step) rather than O(step * fan),
    // keeping ReLU kink crossings rare; the common 0.1 factor buys the
    // same margin again.
    let direction: Vec<Vec<f64>> = leaves[..names.len()]
        .iter()
        .enumerate()
        .map(|(li, t)| {
            let shape = t.shape();
            let scale = if names[li].ends_with(".w") {
                0.1 / ((shape.channels * shape.len) as f64).sqrt()
            } else {
                0.1
            };
            match g.grad(vars[li]) {
                Some(grad) => grad.iter().map(|v| if *v < 0.0 { -scale } else { scale }).collect(),
                None => vec![scale; shape.numel()],
            }
        })
        .collect();
    let mut analytic = 0.0;
    for (li, dir) in direction.iter().enumerate() {
        if let Some(grad) = g.grad(vars[li]) {
            analytic += grad.iter().zip(dir).map(|(a, d)| a * d).sum::<f64>();
        }
    }

    let eval = |shift: f64, work: &mut Vec<Tensor>| -> f64 {
        for (li, dir) in direction.iter().enumerate() {
            let data = work[li].data_mut();
            for (v, d) in data.iter_mut().zip(dir) {
                *v += shift * d;
            }
        }
        let mut g = Graph::new();
        let vars: Vec<Var> = work.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &vars);
        let value = g.value(loss).item();
        for (li, dir) in direction.iter().enumerate() {
            let data = work[li].data_mut();
            for (v, d) in data.iter_mut().zip(dir) {
                *v -= shift * d;
            }
        }
        value
    };
    let mut work = leaves.clone();
    let numeric = (eval(FD_STEP, &mut work) - eval(-FD_STEP, &mut work)) / (2.0 * FD_STEP);
    relative_error(analytic, numeric)
}

fn discriminator_path_check(rng: &mut ChaCha8Rng) -> f64 {
    // Gradient of log(DS(latent)) with respect to the latent.
    let cfg = small_model_config();
    let seed: u64 = rng.random();
    let params = build_model(&cfg, seed).unwrap();
    let latent = random_tensor(rng, Shape::new(2, cfg.feature_channels, cfg.window_len), 0.0, 1.5);
    let names: Vec<String> = params.names().map(String::from).collect();
    let mut leaves: Vec<Tensor> = names.iter().map(|n| params.tensor(n).unwrap().clone()).collect();
    leaves.push(latent);
    let sample: Vec<Vec<usize>> = leaves
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if i + 1 == leaves.len() {
                (0..t.shape().numel()).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    check_loss(
        |g, vars| {
            let binding = binding_of(&names, vars);
            let latent = vars[names.len()];
            let ds = model::discriminate(g, &cfg, &binding, latent).unwrap();
            let clamped = g.clamp(ds, 1e-7, 1.0 - 1e-7);
            let lg = g.ln(clamped);
            g.mean_all(lg)
        },
        &leaves,
        Some(&sample),
    )
}

/// Run the whole suite over `n_seeds` seeds derived from `base_seed`.
pub fn run_suite(base_seed: u64, n_seeds: usize, corrupt: Option<CorruptTarget>) -> SuiteReport {
    let mut report = SuiteReport::default();
    let mut push = |name: &'static str, tol: f64, f: &mut dyn FnMut(&mut ChaCha8Rng) -> f64| {
        let mut max_err = 0.0f64;
        for s in 0..n_seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(s as u64));
            max_err = max_err.max(f(&mut rng));
        }
        report.checks.push(CheckResult { name, max_rel_err: max_err, tolerance: tol });
    };

    let corrupt_conv = corrupt == Some(CorruptTarget::Conv1dDilated);
    push("conv1d_dilated", TOL_PRIMITIVE, &mut |rng| {
        conv_like_check(rng, false, corrupt_conv)
    });
    push("deconv1d_dilated", TOL_PRIMITIVE, &mut |rng| conv_like_check(rng, true, false));
    push("dense", TOL_PRIMITIVE, &mut dense_check);
    push("relu", TOL_PRIMITIVE, &mut |rng| unary_check(rng, "relu"));
    push("sigmoid", TOL_PRIMITIVE, &mut |rng| unary_check(rng, "sigmoid"));
    push("sigmoid_identity", TOL_PRIMITIVE, &mut sigmoid_identity_check);
    push("ln", TOL_PRIMITIVE, &mut |rng| unary_check(rng, "ln"));
    push("clamp", TOL_PRIMITIVE, &mut |rng| unary_check(rng, "clamp"));
    push("affine", TOL_PRIMITIVE, &mut |rng| unary_check(rng, "affine"));
    push("mse_mean", TOL_PRIMITIVE, &mut mse_and_reduction_check);
    push("discriminator_path", TOL_PRIMITIVE, &mut discriminator_path_check);
    let small_cfg = small_model_config();
    push("model_small_exhaustive", TOL_MODEL, &mut |rng| {
        full_model_check(rng, &small_cfg)
    });
    let default_cfg = ModelConfig::default();
    push("model_default_directional", TOL_MODEL, &mut |rng| {
        full_model_directional_check(rng, &default_cfg)
    });
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_healthy_build() {
        let report = run_suite(1234, 3, None);
        assert!(report.pass(), "failing checks:\n{}", report.table());
    }

    #[test]
    fn corrupted_adjoint_is_reported_by_name() {
        let report = run_suite(1234, 1, Some(CorruptTarget::Conv1dDilated));
        assert!(!report.pass());
        let failing = report.failing();
        assert_eq!(failing.len(), 1);
        assert_eq!(failing[0].name, "conv1d_dilated");
    }

    #[test]
    fn relative_error_floors_tiny_pairs() {
        assert_eq!(relative_error(0.0, 1e-9), 0.0);
        assert!(relative_error(1.0, 1.001) < 2e-3);
    }
}
