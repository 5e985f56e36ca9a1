//! Central finite-difference verification of analytic gradients.

use serde::Serialize;

use crate::tensor::Tensor;

/// Outcome of comparing analytic and numerical gradients.
#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    /// `max |a - n| / max(|a|, |n|, 1e-8)` over every probed element.
    pub max_rel_error: f64,
    /// `(input index, element index)` of the worst element.
    pub worst: (usize, usize),
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub probes: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: max rel err {:.3e} (tol {:.0e}, {} probes, worst input {} elem {}: analytic {:.6e} numeric {:.6e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_rel_error,
            self.tolerance,
            self.probes,
            self.worst.0,
            self.worst.1,
            self.worst_analytic,
            self.worst_numeric,
        )
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Finite-difference checker settings.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub eps: f64,
    pub tolerance: f64,
    /// Probe at most this many evenly spaced elements per input.
    pub max_probes: Option<usize>,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            eps: 1e-5,
            tolerance: 1e-4,
            max_probes: None,
        }
    }
}

impl GradCheck {
    /// `loss` maps the inputs to a scalar; `analytic` returns one gradient
    /// per input, shaped like it.
    pub fn run<F, G>(&self, name: &str, inputs: &[Tensor<f64>], loss: F, analytic: G) -> GradCheckReport
    where
        F: Fn(&[Tensor<f64>]) -> f64,
        G: FnOnce(&[Tensor<f64>]) -> Vec<Tensor<f64>>,
    {
        let grads = analytic(inputs);
        assert_eq!(grads.len(), inputs.len(), "one gradient per input");
        let mut report = GradCheckReport {
            name: name.to_string(),
            max_rel_error: 0.0,
            worst: (0, 0),
            worst_analytic: 0.0,
            worst_numeric: 0.0,
            probes: 0,
            tolerance: self.tolerance,
            passed: true,
        };
        let mut work: Vec<Tensor<f64>> = inputs.to_vec();
        for (ti, grad) in grads.iter().enumerate() {
            assert_eq!(grad.shape(), inputs[ti].shape(), "gradient {ti} shape");
            let n = inputs[ti].len();
            let step = match self.max_probes {
                Some(m) if m < n => n.div_ceil(m),
                _ => 1,
            };
            for e in (0..n).step_by(step) {
                let orig = inputs[ti].data()[e];
                work[ti].data_mut()[e] = orig + self.eps;
                let up = loss(&work);
                work[ti].data_mut()[e] = orig - self.eps;
                let down = loss(&work);
                work[ti].data_mut()[e] = orig;
                let numeric = (up - down) / (2.0 * self.eps);
                let a = grad.data()[e];
                let rel = relative_error(a, numeric);
                report.probes += 1;
                if rel > report.max_rel_error || !rel.is_finite() {
                    report.max_rel_error = rel;
                    report.worst = (ti, e);
                    report.worst_analytic = a;
                    report.worst_numeric = numeric;
                }
            }
        }
        report.passed = report.max_rel_error.is_finite() && report.max_rel_error < self.tolerance;
        report
    }
}

/// Checks every element of every input with central differences.
pub fn grad_check<F, G>(
    name: &str,
    inputs: &[Tensor<f64>],
    loss: F,
    analytic: G,
    eps: f64,
    tolerance: f64,
) -> GradCheckReport
where
    F: Fn(&[Tensor<f64>]) -> f64,
    G: FnOnce(&[Tensor<f64>]) -> Vec<Tensor<f64>>,
{
    GradCheck {
        eps,
        tolerance,
        max_probes: None,
    }
    .run(name, inputs, loss, analytic)
}
