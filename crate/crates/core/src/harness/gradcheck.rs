use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agent::qnet_architecture;
use crate::env::AuxInput;
use crate::nn::{check_against, GradCheckReport, Network, Window};
use crate::seeding::{self, substream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    pub steps: usize,
    pub batch: usize,
    /// Weight entries probed per layer.
    pub weights_per_layer: usize,
    /// Bias entries probed per layer.
    pub biases_per_layer: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            tolerance: 1e-4,
            steps: 8,
            batch: 2,
            weights_per_layer: 24,
            biases_per_layer: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOutcome {
    pub seed: u64,
    pub report: GradCheckReport,
    /// Layer owning the worst parameter.
    pub worst_layer: usize,
    pub passed: bool,
}

/// Checks backprop through the full Q-network in `f64` on a random window
/// against central differences at a per-layer sample of parameters.
///
/// `fault` corrupts the analytic gradient at one parameter index (and makes
/// sure it is probed), to show the check catches it.
pub fn gradcheck_network(cfg: &GradcheckConfig, seed: u64, fault: Option<usize>) -> Result<GradcheckOutcome, HarnessError> {
    let mut rng = substream(seed, seeding::GRADCHECK);
    let net = Network::<f64>::init(qnet_architecture(), &mut rng)?;
    let rows = cfg.steps * cfg.batch;
    let input: Vec<f64> = (0..rows * net.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let aux: Vec<f64> = (0..rows * AuxInput::LEN).map(|_| rng.random_range(0.0..1.0)).collect();
    let targets: Vec<f64> = (0..rows * net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    // A nonzero starting state keeps forget-gate and recurrent gradients
    // well above finite-difference roundoff.
    let mut initial = net.zero_state(cfg.batch);
    for (h, c) in initial.layers.iter_mut() {
        h.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        c.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    }
    let scale = 1.0 / targets.len() as f64;
    let loss = |out: &[f64]| -> (f64, Vec<f64>) {
        let mut l = 0.0;
        let grad = out
            .iter()
            .zip(&targets)
            .map(|(q, y)| {
                l += 0.5 * (q - y) * (q - y) * scale;
                (q - y) * scale
            })
            .collect();
        (l, grad)
    };

    let mut indices = Vec::new();
    for layer in 0..net.num_layers() {
        let range = net.layer_param_range(layer);
        let n_bias = net.layer_params(layer).biases.len();
        let bias_start = range.end - n_bias;
        for _ in 0..cfg.weights_per_layer {
            indices.push(rng.random_range(range.start..bias_start));
        }
        for _ in 0..cfg.biases_per_layer.min(n_bias) {
            indices.push(rng.random_range(bias_start..range.end));
        }
    }

    let tape = net.forward(&input, &aux, cfg.batch, cfg.steps, Some(&initial))?;
    let (_, d_out) = loss(tape.output());
    let mut analytic = net.backward(&tape, &d_out)?;
    if let Some(i) = fault {
        if i >= analytic.len() {
            return Err(HarnessError::Config(format!("fault index {i} out of range")));
        }
        analytic[i] = 2.0 * analytic[i] + 1e-3;
        indices.push(i);
    }
    let window = Window { input: &input, aux: &aux, batch: cfg.batch, steps: cfg.steps, initial: Some(&initial) };
    let report = check_against(&net, window, loss, cfg.epsilon, &analytic, Some(&indices))?;
    let worst_layer = (0..net.num_layers())
        .find(|&l| net.layer_param_range(l).contains(&report.worst_index))
        .unwrap_or(0);
    Ok(GradcheckOutcome {
        seed,
        passed: report.passed(cfg.tolerance),
        report,
        worst_layer,
    })
}
