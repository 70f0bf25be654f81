//! Executable check of the monotone-improvement argument behind the
//! two-fold policy update.
//!
//! For a concave `Q(s, ·)` whose action gradient is `L`-Lipschitz, the
//! iteration `a_{t+1} = a_t + beta * grad_a Q(s, a_t)` with `0 < beta <= 2/L`
//! satisfies
//!
//! ```text
//! Q(a_{t+1}) - Q(a_t) >= beta (1 - beta L / 2) ||grad_a Q(a_t)||^2 >= 0
//! ```
//!
//! and, summing over steps, `||grad_a Q(a_t)|| -> 0` whenever `beta < 2/L`.
//! [`iterate_policy`] runs the iteration and [`verify_monotone`] checks both
//! claims along a trace.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::agent::ActionValue;
use crate::error::{ensure_len, Error, Result};

/// Absolute slack allowed on the per-step inequality.
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Gradient norm counted as vanished.
pub const VANISHED_GRADIENT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum QFamily {
    /// `-sum_i c_i (a_i - a*_i)^2`.
    Quadratic { curvatures: Vec<f64> },
    /// `-ln(1 + ||a - a*||^2)`; concave only inside the unit ball around `a*`.
    LogBump,
}

/// A smooth concave action-value function with closed-form gradient and
/// maximizer. The state argument is ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticQ {
    family: QFamily,
    center: Vec<f64>,
    lipschitz: f64,
}

pub fn make_quadratic_q(curvature: f64, center: Vec<f64>) -> Result<AnalyticQ> {
    let curvatures = vec![curvature; center.len()];
    make_axis_quadratic(curvatures, center)
}

pub fn make_axis_quadratic(curvatures: Vec<f64>, center: Vec<f64>) -> Result<AnalyticQ> {
    ensure_len("quadratic curvatures", center.len(), curvatures.len())?;
    if center.is_empty() {
        return Err(Error::InvalidParameter("quadratic needs at least one action".into()));
    }
    if curvatures.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "curvatures must be positive, got {curvatures:?}"
        )));
    }
    let lipschitz = 2.0 * curvatures.iter().copied().fold(0.0, f64::max);
    Ok(AnalyticQ {
        family: QFamily::Quadratic { curvatures },
        center,
        lipschitz,
    })
}

/// Log-concave bump; its gradient is 2-Lipschitz on the unit ball around
/// `center`, which gradient steps with `beta <= 1` never leave.
pub fn make_log_bump(center: Vec<f64>) -> Result<AnalyticQ> {
    if center.is_empty() {
        return Err(Error::InvalidParameter("bump needs at least one action".into()));
    }
    Ok(AnalyticQ {
        family: QFamily::LogBump,
        center,
        lipschitz: 2.0,
    })
}

impl AnalyticQ {
    pub fn family(&self) -> &QFamily {
        &self.family
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            QFamily::Quadratic { .. } => "quadratic",
            QFamily::LogBump => "log_bump",
        }
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn argmax(&self) -> &[f64] {
        &self.center
    }

    pub fn action_dim(&self) -> usize {
        self.center.len()
    }

    pub fn value(&self, a: &[f64]) -> f64 {
        match &self.family {
            QFamily::Quadratic { curvatures } => -a
                .iter()
                .zip(&self.center)
                .zip(curvatures)
                .map(|((ai, ci), k)| k * (ai - ci) * (ai - ci))
                .sum::<f64>(),
            QFamily::LogBump => -self.dist_sq(a).ln_1p(),
        }
    }

    pub fn gradient(&self, a: &[f64]) -> Vec<f64> {
        match &self.family {
            QFamily::Quadratic { curvatures } => a
                .iter()
                .zip(&self.center)
                .zip(curvatures)
                .map(|((ai, ci), k)| -2.0 * k * (ai - ci))
                .collect(),
            QFamily::LogBump => {
                let scale = -2.0 / (1.0 + self.dist_sq(a));
                a.iter().zip(&self.center).map(|(ai, ci)| scale * (ai - ci)).collect()
            }
        }
    }

    fn dist_sq(&self, a: &[f64]) -> f64 {
        a.iter().zip(&self.center).map(|(x, c)| (x - c) * (x - c)).sum()
    }
}

impl ActionValue for AnalyticQ {
    fn q_value(&self, _state: &[f64], action: &[f64]) -> Result<f64> {
        ensure_len("analytic Q action", self.action_dim(), action.len())?;
        Ok(self.value(action))
    }

    fn action_gradient(&self, _state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        ensure_len("analytic Q action", self.action_dim(), action.len())?;
        Ok(self.gradient(action))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Iterates `a_0, ..., a_k` with their Q values and gradient norms.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationTrace {
    pub actions: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub grad_norms: Vec<f64>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn final_grad_norm(&self) -> f64 {
        *self.grad_norms.last().unwrap_or(&f64::NAN)
    }
}

/// Runs `k` steps of `a <- a + beta * grad_a Q(state, a)`.
pub fn iterate_policy(
    q: &dyn ActionValue,
    state: &[f64],
    a0: &[f64],
    beta: f64,
    k: usize,
) -> Result<IterationTrace> {
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one iteration".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let mut trace = IterationTrace {
        actions: Vec::with_capacity(k + 1),
        values: Vec::with_capacity(k + 1),
        grad_norms: Vec::with_capacity(k + 1),
    };
    let mut a = a0.to_vec();
    for step in 0..=k {
        let value = q.q_value(state, &a)?;
        let grad = q.action_gradient(state, &a)?;
        let gnorm = norm(&grad);
        if !value.is_finite() || !gnorm.is_finite() || a.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged { step });
        }
        trace.actions.push(a.clone());
        trace.values.push(value);
        trace.grad_norms.push(gnorm);
        if step < k {
            for (ai, gi) in a.iter_mut().zip(&grad) {
                *ai += beta * gi;
            }
        }
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepViolation {
    pub step: usize,
    /// `Q(a_{t+1}) - Q(a_t)`.
    pub improvement: f64,
    /// `beta (1 - beta L / 2) ||grad_a Q(a_t)||^2`.
    pub guaranteed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneReport {
    pub beta: f64,
    pub lipschitz: f64,
    pub steps: usize,
    pub violations: Vec<StepViolation>,
    /// Smallest `improvement - guaranteed` over all steps.
    pub min_slack: f64,
    pub final_grad_norm: f64,
    /// `(sum_t ||grad_t||^2, (Q(a*) - Q(a_0)) / (beta (1 - beta L / 2)))`,
    /// only defined for `beta < 2/L`.
    pub summed_gradients: Option<(f64, f64)>,
}

impl MonotoneReport {
    pub fn monotone(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn gradient_vanished(&self) -> bool {
        self.final_grad_norm < VANISHED_GRADIENT
    }

    pub fn within_sum_bound(&self) -> bool {
        match self.summed_gradients {
            Some((sum, bound)) => sum <= bound * (1.0 + 1e-9) + STEP_TOLERANCE,
            None => true,
        }
    }

    /// Below the step-size boundary all three properties must hold; at
    /// `beta = 2/L` only monotonicity is claimed.
    pub fn passed(&self) -> bool {
        let at_boundary = self.summed_gradients.is_none();
        self.monotone() && (at_boundary || (self.gradient_vanished() && self.within_sum_bound()))
    }
}

/// Checks the per-step improvement inequality along `trace`. Refuses
/// step sizes outside `(0, 2/L]`.
pub fn verify_monotone(trace: &IterationTrace, q: &AnalyticQ, beta: f64) -> Result<MonotoneReport> {
    let l = q.lipschitz();
    if !(beta > 0.0 && beta <= 2.0 / l) {
        return Err(Error::InvalidParameter(format!(
            "beta = {beta} is outside the guaranteed range (0, {}]",
            2.0 / l
        )));
    }
    if trace.len() < 2 {
        return Err(Error::InvalidParameter("trace needs at least two iterates".into()));
    }
    let coef = beta * (1.0 - beta * l / 2.0);
    let mut violations = Vec::new();
    let mut min_slack = f64::INFINITY;
    let mut grad_sq_sum = 0.0;
    for t in 0..trace.len() - 1 {
        let improvement = trace.values[t + 1] - trace.values[t];
        let g = trace.grad_norms[t];
        let guaranteed = coef * g * g;
        grad_sq_sum += g * g;
        min_slack = min_slack.min(improvement - guaranteed);
        if improvement < guaranteed - STEP_TOLERANCE {
            violations.push(StepViolation {
                step: t,
                improvement,
                guaranteed,
            });
        }
    }
    let summed_gradients = (coef > 0.0).then(|| {
        let gap = q.value(q.argmax()) - trace.values[0];
        (grad_sq_sum, gap / coef)
    });
    Ok(MonotoneReport {
        beta,
        lipschitz: l,
        steps: trace.len() - 1,
        violations,
        min_slack,
        final_grad_norm: trace.final_grad_norm(),
        summed_gradients,
    })
}

/// Fraction of steps along which a (possibly non-concave) critic did not
/// decrease. Diagnostic only.
pub fn monotone_fraction(trace: &IterationTrace) -> f64 {
    if trace.len() < 2 {
        return 1.0;
    }
    let ok = trace
        .values
        .windows(2)
        .filter(|w| w[1] - w[0] >= -STEP_TOLERANCE)
        .count();
    ok as f64 / (trace.len() - 1) as f64
}

#[derive(Clone, Debug)]
pub struct SuiteCase {
    pub label: String,
    pub q: AnalyticQ,
    pub beta: f64,
    pub trace: IterationTrace,
    pub report: MonotoneReport,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub cases: Vec<SuiteCase>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.report.passed())
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.cases {
            let r = &c.report;
            let _ = writeln!(
                out,
                "{:<8} {:<28} beta={:<8} steps={} violations={} min_slack={:.3e} final_grad={:.3e}",
                if r.passed() { "PASS" } else { "FAIL" },
                c.label,
                format!("{:.4}", c.beta),
                r.steps,
                r.violations.len(),
                r.min_slack,
                r.final_grad_norm,
            );
        }
        let _ = writeln!(
            out,
            "{} of {} cases passed",
            self.cases.iter().filter(|c| c.report.passed()).count(),
            self.cases.len()
        );
        out
    }

    /// One row per iterate: `case,family,beta,step,q_value,grad_norm,action`
    /// with the action coordinates space-separated.
    pub fn write_traces_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "case,family,beta,step,q_value,grad_norm,action").map_err(io)?;
        for c in &self.cases {
            for (t, ((a, v), g)) in c
                .trace
                .actions
                .iter()
                .zip(&c.trace.values)
                .zip(&c.trace.grad_norms)
                .enumerate()
            {
                let action: Vec<String> = a.iter().map(|x| x.to_string()).collect();
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    c.label,
                    c.q.family_name(),
                    c.beta,
                    t,
                    v,
                    g,
                    action.join(" ")
                )
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// The standard test family: an isotropic and an axis-aligned quadratic plus
/// a log-concave bump, each run at `beta in {0.01, 0.1, 0.5, 2/L}`.
pub fn standard_family() -> Result<Vec<(String, AnalyticQ, Vec<f64>)>> {
    Ok(vec![
        (
            "quadratic_iso_1d".to_string(),
            make_quadratic_q(1.0, vec![2.0])?,
            vec![0.0],
        ),
        (
            "quadratic_axis_3d".to_string(),
            make_axis_quadratic(vec![1.0, 0.5, 0.25], vec![2.0, -1.0, 0.5])?,
            vec![0.0, 0.0, 0.0],
        ),
        (
            "log_bump_2d".to_string(),
            make_log_bump(vec![0.5, -0.3])?,
            vec![1.1, -0.7],
        ),
    ])
}

pub fn run_suite(steps: usize) -> Result<SuiteReport> {
    let mut cases = Vec::new();
    for (name, q, a0) in standard_family()? {
        let betas = [0.01, 0.1, 0.5, 2.0 / q.lipschitz()];
        for beta in betas {
            let trace = iterate_policy(&q, &[], &a0, beta, steps)?;
            let report = verify_monotone(&trace, &q, beta)?;
            cases.push(SuiteCase {
                label: name.clone(),
                q: q.clone(),
                beta,
                trace,
                report,
            });
        }
    }
    Ok(SuiteReport { cases })
}
