//! Python bindings for `adviser_ddpg`.

use std::path::PathBuf;
use std::sync::Mutex;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use adviser_ddpg::adviser::{self, AdviserKind, EpsilonRule};
use adviser_ddpg::agent::{ActorCriticAgent, Hyperparams, UpdateMode};
use adviser_ddpg::convergence;
use adviser_ddpg::envs::{self, EnvKind};
use adviser_ddpg::exploration::{OuParams, OuProcess};
use adviser_ddpg::harness::{self, EpisodeRecord, RunConfig};
use adviser_ddpg::nn::{self, OutputKind};
use adviser_ddpg::{snapshot, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for adviser_ddpg::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().py()
}

/// Feed-forward network with tanh hidden layers.
#[pyclass(name = "DenseNetwork", module = "adviser_ddpg_py", skip_from_py_object)]
#[derive(Clone)]
struct PyDenseNetwork {
    inner: nn::DenseNetwork,
}

#[pymethods]
impl PyDenseNetwork {
    /// `low`/`high` select a tanh output squashed into that box; omit both
    /// for an identity output.
    #[new]
    #[pyo3(signature = (sizes, seed=0, low=None, high=None))]
    fn new(sizes: Vec<usize>, seed: u64, low: Option<Vec<f64>>, high: Option<Vec<f64>>) -> PyResult<Self> {
        let output = match (low, high) {
            (Some(low), Some(high)) => OutputKind::Bounded { low, high },
            (None, None) => OutputKind::Identity,
            _ => return Err(PyValueError::new_err("give both low and high or neither")),
        };
        Ok(PyDenseNetwork {
            inner: nn::DenseNetwork::new(&sizes, seed, output).py()?,
        })
    }

    #[getter]
    fn layer_sizes(&self) -> Vec<usize> {
        self.inner.layer_sizes().to_vec()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn params(&self) -> Vec<f64> {
        self.inner.params().collect()
    }

    fn set_params(&mut self, values: Vec<f64>) -> PyResult<()> {
        if values.len() != self.inner.param_count() {
            return Err(PyValueError::new_err(format!(
                "expected {} parameters, got {}",
                self.inner.param_count(),
                values.len()
            )));
        }
        for (p, v) in self.inner.params_mut().zip(values) {
            *p = v;
        }
        Ok(())
    }

    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward(&x).py()
    }

    /// Returns `(parameter_gradient, input_gradient)` of `output_grad · f(x)`,
    /// the parameter part flattened in `params()` order.
    fn backward(&self, x: Vec<f64>, output_grad: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let (grads, input) = self.inner.backward(&x, &output_grad).py()?;
        Ok((grads.values().collect(), input))
    }

    fn soft_update(&mut self, online: &PyDenseNetwork, tau: f64) -> PyResult<()> {
        self.inner.soft_update(&online.inner, tau).py()
    }

    fn to_snapshot(&self) -> String {
        snapshot::net_to_string(&self.inner)
    }

    #[staticmethod]
    fn from_snapshot(text: &str) -> PyResult<Self> {
        Ok(PyDenseNetwork {
            inner: snapshot::net_from_str(text).py()?,
        })
    }

    fn __repr__(&self) -> String {
        format!("DenseNetwork(sizes={:?})", self.inner.layer_sizes())
    }
}

/// `pendulum` or `mountaincar`, with Gym-compatible dynamics.
#[pyclass(name = "Environment", module = "adviser_ddpg_py")]
struct PyEnvironment {
    kind: EnvKind,
    inner: Mutex<Box<dyn envs::Environment>>,
}

#[pymethods]
impl PyEnvironment {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        let kind: EnvKind = parse(name)?;
        Ok(PyEnvironment {
            kind,
            inner: Mutex::new(kind.make()),
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.kind.name()
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.kind.spec().state_dim
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.kind.spec().action_dim
    }

    #[getter]
    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let spec = self.kind.spec();
        (spec.action_low, spec.action_high)
    }

    #[getter]
    fn max_episode_steps(&self) -> usize {
        self.kind.spec().max_episode_steps
    }

    fn reset(&self, seed: u64) -> Vec<f64> {
        self.inner.lock().unwrap().reset(seed)
    }

    /// Returns `(next_state, reward, done, truncated)`.
    fn step(&self, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool, bool)> {
        let r = self.inner.lock().unwrap().step(&action).py()?;
        Ok((r.next_state, r.reward, r.done, r.truncated))
    }
}

/// Ornstein-Uhlenbeck noise with its own seeded generator.
#[pyclass(name = "OuNoise", module = "adviser_ddpg_py")]
struct PyOuNoise {
    inner: OuProcess,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PyOuNoise {
    #[new]
    #[pyo3(signature = (dim, seed=0, theta=0.15, mu=0.0, sigma=0.2, dt=1.0))]
    fn new(dim: usize, seed: u64, theta: f64, mu: f64, sigma: f64, dt: f64) -> PyResult<Self> {
        Ok(PyOuNoise {
            inner: OuProcess::new(dim, OuParams { theta, mu, sigma, dt }).py()?,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn sample(&mut self) -> Vec<f64> {
        self.inner.sample(&mut self.rng)
    }

    fn reset(&mut self) {
        self.inner.reset()
    }

    #[getter]
    fn state(&self) -> Vec<f64> {
        self.inner.state().to_vec()
    }

    fn stationary_variance(&self) -> f64 {
        self.inner.stationary_variance()
    }
}

/// Online and target actor/critic networks.
#[pyclass(name = "Agent", module = "adviser_ddpg_py", skip_from_py_object)]
#[derive(Clone)]
struct PyAgent {
    inner: ActorCriticAgent,
}

#[pymethods]
impl PyAgent {
    #[new]
    #[pyo3(signature = (env, seed=0, hidden=None))]
    fn new(env: &str, seed: u64, hidden: Option<Vec<usize>>) -> PyResult<Self> {
        let kind: EnvKind = parse(env)?;
        let mut hp = Hyperparams::default();
        if let Some(h) = hidden {
            hp.hidden = h;
        }
        Ok(PyAgent {
            inner: ActorCriticAgent::new(&kind.spec(), hp, seed).py()?,
        })
    }

    fn act(&self, state: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.act(&state).py()
    }

    fn q_value(&self, state: Vec<f64>, action: Vec<f64>) -> PyResult<f64> {
        self.inner.q_value(&state, &action).py()
    }

    /// `pi(s) + beta * grad_a Q(s, pi(s))` for each state.
    fn policy_targets(&self, states: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        self.inner.policy_targets(&states).py()
    }

    #[getter]
    fn actor(&self) -> PyDenseNetwork {
        PyDenseNetwork {
            inner: self.inner.actor.clone(),
        }
    }

    #[getter]
    fn critic(&self) -> PyDenseNetwork {
        PyDenseNetwork {
            inner: self.inner.critic.clone(),
        }
    }

    #[pyo3(signature = (env, episodes=10, seed=0))]
    fn evaluate(&self, env: &str, episodes: usize, seed: u64) -> PyResult<f64> {
        harness::evaluate(&self.inner, parse(env)?, episodes, seed).py()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        snapshot::save_agent(&self.inner, &path).py()
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyAgent {
            inner: snapshot::load_agent(&path).py()?,
        })
    }
}

/// `C = 1 - exp(-lambda N)`.
#[pyfunction]
fn confidence(episodes: i64, lam: f64) -> PyResult<f64> {
    adviser::confidence(episodes, lam).py()
}

/// Probability of executing the adviser's action.
#[pyfunction]
#[pyo3(signature = (q_adv, q_act, confidence, temperature=1.0, rule="verbatim"))]
fn mix_probability(q_adv: f64, q_act: f64, confidence: f64, temperature: f64, rule: &str) -> PyResult<f64> {
    let rule: EpsilonRule = parse(rule)?;
    adviser::mix_probability_with(rule, q_adv, q_act, confidence, temperature).py()
}

/// Action suggested by a named adviser for `state`.
#[pyfunction]
fn adviser_action(name: &str, state: Vec<f64>) -> PyResult<Vec<f64>> {
    let kind: AdviserKind = parse(name)?;
    Ok(kind.build().advise(&state))
}

/// Gradient iteration on `-c ||a - center||^2`; returns
/// `(actions, values, grad_norms)`.
#[pyfunction]
fn iterate_quadratic(
    curvature: f64,
    center: Vec<f64>,
    a0: Vec<f64>,
    beta: f64,
    steps: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    let q = convergence::make_quadratic_q(curvature, center).py()?;
    let t = convergence::iterate_policy(&q, &[], &a0, beta, steps).py()?;
    Ok((t.actions, t.values, t.grad_norms))
}

/// Runs the standard monotone-improvement suite; one dict per case.
#[pyfunction]
#[pyo3(signature = (steps=10_000))]
fn verify_convergence(py: Python<'_>, steps: usize) -> PyResult<Vec<Bound<'_, PyDict>>> {
    let suite = convergence::run_suite(steps).py()?;
    suite
        .cases
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("family", c.label.as_str())?;
            d.set_item("beta", c.beta)?;
            d.set_item("passed", c.report.passed())?;
            d.set_item("violations", c.report.violations.len())?;
            d.set_item("min_slack", c.report.min_slack)?;
            d.set_item("final_grad_norm", c.report.final_grad_norm)?;
            Ok(d)
        })
        .collect()
}

fn record_dict<'py>(py: Python<'py>, r: &EpisodeRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("episode", r.episode)?;
    d.set_item("total_score", r.total_score)?;
    d.set_item("steps", r.steps)?;
    d.set_item("reward_per_step", r.reward_per_step)?;
    d.set_item("wall_ms", r.wall_ms)?;
    Ok(d)
}

/// Trains one agent and evaluates it. Returns a dict with `records`,
/// `eval_scores`, `avg_total_score` and the trained `agent`.
#[pyfunction]
#[pyo3(signature = (env, mode, seed=0, episodes=None, eval_episodes=10, adviser=None, hidden=None, batch_size=None, csv_path=None))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    env: &str,
    mode: &str,
    seed: u64,
    episodes: Option<usize>,
    eval_episodes: usize,
    adviser: Option<&str>,
    hidden: Option<Vec<usize>>,
    batch_size: Option<usize>,
    csv_path: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let mode: UpdateMode = parse(mode)?;
    let mut cfg = RunConfig::new(parse(env)?, mode, seed);
    if let Some(n) = episodes {
        cfg.episodes = n;
    }
    cfg.eval_episodes = eval_episodes;
    if let Some(name) = adviser {
        cfg.adviser = AdviserKind::parse_optional(name).py()?;
    }
    if let Some(h) = hidden {
        cfg.hp.hidden = h;
    }
    if let Some(b) = batch_size {
        cfg.hp.batch_size = b;
    }
    let out = py.detach(|| harness::run(&cfg)).py()?;
    if let Some(path) = csv_path {
        harness::write_csv(&out.train.records, &path).py()?;
    }
    let d = PyDict::new(py);
    let records = out
        .train
        .records
        .iter()
        .map(|r| record_dict(py, r))
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("records", records)?;
    d.set_item("eval_scores", out.summary.eval_scores.clone())?;
    d.set_item("avg_total_score", out.summary.avg_total_score)?;
    d.set_item("agent", PyAgent { inner: out.train.agent })?;
    Ok(d)
}

#[pymodule]
fn adviser_ddpg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDenseNetwork>()?;
    m.add_class::<PyEnvironment>()?;
    m.add_class::<PyOuNoise>()?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(confidence, m)?)?;
    m.add_function(wrap_pyfunction!(mix_probability, m)?)?;
    m.add_function(wrap_pyfunction!(adviser_action, m)?)?;
    m.add_function(wrap_pyfunction!(iterate_quadratic, m)?)?;
    m.add_function(wrap_pyfunction!(verify_convergence, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
