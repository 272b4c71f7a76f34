//! Central finite differences against [`Network::backward`].

use super::{Network, NnError, RecurrentState};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter index where `max_rel_error` occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Probes skipped because the perturbation crossed a ReLU kink, where
    /// the derivative is undefined.
    pub kinks: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tolerance
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Input window for a check: `steps * batch` time-major rows.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub input: &'a [f64],
    pub aux: &'a [f64],
    pub batch: usize,
    pub steps: usize,
    /// Recurrent state before the first step; zeros when `None`.
    pub initial: Option<&'a RecurrentState<f64>>,
}

/// Compares backprop gradients of `loss(output)` against central
/// differences at the given parameter indices (all parameters when `None`).
///
/// `loss` returns the scalar loss and its gradient with respect to the
/// network output.
pub fn finite_difference_check<F>(
    net: &Network<f64>,
    window: Window<'_>,
    loss: F,
    epsilon: f64,
    indices: Option<&[usize]>,
) -> Result<GradCheckReport, NnError>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let tape = net.forward(window.input, window.aux, window.batch, window.steps, window.initial)?;
    let (_, d_out) = loss(tape.output());
    let analytic = net.backward(&tape, &d_out)?;
    check_against(net, window, loss, epsilon, &analytic, indices)
}

/// Same as [`finite_difference_check`] but against a caller-supplied
/// gradient, so a corrupted gradient can be shown to be caught.
pub fn check_against<F>(
    net: &Network<f64>,
    window: Window<'_>,
    loss: F,
    epsilon: f64,
    analytic: &[f64],
    indices: Option<&[usize]>,
) -> Result<GradCheckReport, NnError>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(NnError::Shape(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    if analytic.len() != net.num_params() {
        return Err(NnError::Shape("analytic gradient length mismatch".into()));
    }
    let all: Vec<usize>;
    let indices = match indices {
        Some(ix) => ix,
        None => {
            all = (0..net.num_params()).collect();
            &all
        }
    };
    let mut probe = net.clone();
    let eval = |net: &Network<f64>| -> Result<(f64, Vec<bool>), NnError> {
        let tape = net.forward(window.input, window.aux, window.batch, window.steps, window.initial)?;
        Ok((loss(tape.output()).0, net.relu_pattern(&tape)))
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: indices.first().copied().unwrap_or(0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        kinks: 0,
    };
    for &i in indices {
        let original = probe.params()[i];
        probe.params_mut()[i] = original + epsilon;
        let (plus, plus_mask) = eval(&probe)?;
        probe.params_mut()[i] = original - epsilon;
        let (minus, minus_mask) = eval(&probe)?;
        probe.params_mut()[i] = original;
        if plus_mask != minus_mask {
            report.kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
        report.checked += 1;
    }
    Ok(report)
}
