//! Python bindings: thin wrappers over the core types plus dict-returning
//! convenience functions for analysis, design and simulation.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rating_protocol as core;
use rating_protocol::model::{Rating, RecommendedStrategy};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_strategy(s: &str) -> PyResult<RecommendedStrategy> {
    RecommendedStrategy::parse(s).map_err(value_err)
}

fn parse_deviation(spec: &str) -> PyResult<core::DeviationSpec> {
    let err = || {
        PyValueError::new_err(format!(
            "deviation must be second-stage:RATING or first-stage:LAMBDA, got `{spec}`"
        ))
    };
    let (kind, arg) = spec.split_once(':').ok_or_else(err)?;
    match kind {
        "second-stage" => Ok(core::DeviationSpec::SecondStage {
            rating: match arg {
                "0" => Rating::Bad,
                "1" => Rating::Good,
                _ => return Err(err()),
            },
        }),
        "first-stage" => Ok(core::DeviationSpec::FirstStage {
            lambda_prime: arg.parse().map_err(|_| err())?,
        }),
        _ => Err(err()),
    }
}

/// Intrinsic parameters of the service exchange: benefit, costs, report
/// error and discount factor.
#[pyclass(name = "IntrinsicParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyIntrinsicParams(core::IntrinsicParams);

#[pymethods]
impl PyIntrinsicParams {
    #[new]
    fn new(b: f64, c: f64, s: f64, epsilon: f64, omega: f64) -> PyResult<Self> {
        core::IntrinsicParams::new(b, c, s, epsilon, omega)
            .map(Self)
            .map_err(value_err)
    }

    fn with_omega(&self, omega: f64) -> PyResult<Self> {
        self.0.with_omega(omega).map(Self).map_err(value_err)
    }

    #[getter]
    fn b(&self) -> f64 {
        self.0.b()
    }
    #[getter]
    fn c(&self) -> f64 {
        self.0.c()
    }
    #[getter]
    fn s(&self) -> f64 {
        self.0.s()
    }
    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.epsilon()
    }
    #[getter]
    fn omega(&self) -> f64 {
        self.0.omega()
    }

    fn __repr__(&self) -> String {
        format!(
            "IntrinsicParams(b={}, c={}, s={}, epsilon={}, omega={})",
            self.0.b(),
            self.0.c(),
            self.0.s(),
            self.0.epsilon(),
            self.0.omega()
        )
    }
}

/// Rating-update reward and punishment factors.
#[pyclass(name = "DesignParams", frozen, from_py_object)]
#[derive(Clone)]
struct PyDesignParams(core::DesignParams);

#[pymethods]
impl PyDesignParams {
    #[new]
    #[pyo3(signature = (alpha0=1.0, alpha1=1.0, beta0=1.0, beta1=1.0,
                        gamma0=1.0, gamma1=1.0, delta0=1.0, delta1=1.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha0: f64,
        alpha1: f64,
        beta0: f64,
        beta1: f64,
        gamma0: f64,
        gamma1: f64,
        delta0: f64,
        delta1: f64,
    ) -> PyResult<Self> {
        core::DesignParams::new(alpha0, alpha1, beta0, beta1, gamma0, gamma1, delta0, delta1)
            .map(Self)
            .map_err(value_err)
    }

    #[staticmethod]
    fn all_ones() -> Self {
        Self(core::DesignParams::all_ones())
    }

    #[staticmethod]
    fn with_betas(beta0: f64, beta1: f64) -> PyResult<Self> {
        core::DesignParams::with_betas(beta0, beta1)
            .map(Self)
            .map_err(value_err)
    }

    #[getter]
    fn beta0(&self) -> f64 {
        self.0.beta(Rating::Bad)
    }
    #[getter]
    fn beta1(&self) -> f64 {
        self.0.beta(Rating::Good)
    }
}

/// A recommended strategy, a rating-update design and the fair request rate.
#[pyclass(name = "Protocol", frozen, from_py_object)]
#[derive(Clone)]
struct PyProtocol(core::Protocol);

#[pymethods]
impl PyProtocol {
    #[new]
    #[pyo3(signature = (strategy, design=None, lam=0.5))]
    fn new(strategy: &str, design: Option<PyDesignParams>, lam: f64) -> PyResult<Self> {
        let design = design.map_or_else(core::DesignParams::all_ones, |d| d.0);
        core::Protocol::new(parse_strategy(strategy)?, design, lam)
            .map(Self)
            .map_err(value_err)
    }

    #[getter]
    fn strategy(&self) -> &'static str {
        self.0.strategy.name()
    }
    #[getter]
    fn design(&self) -> PyDesignParams {
        PyDesignParams(self.0.design)
    }
    #[getter]
    fn lam(&self) -> f64 {
        self.0.lambda
    }
}

/// Stationary rating distribution `(eta0, eta1)` of a design.
#[pyfunction]
#[pyo3(signature = (design, epsilon, lam=0.5))]
fn stationary_distribution(design: &PyDesignParams, epsilon: f64, lam: f64) -> (f64, f64) {
    let eta = core::stationary_distribution(&design.0, epsilon, lam);
    (eta.eta0, eta.eta1)
}

/// Expected per-user welfare of a compliant population under the protocol.
#[pyfunction]
fn social_welfare(protocol: &PyProtocol, params: &PyIntrinsicParams) -> f64 {
    let eta = core::stationary_distribution(
        &protocol.0.design,
        params.0.epsilon(),
        protocol.0.lambda,
    );
    core::social_welfare(&protocol.0, &params.0, &eta)
}

/// Long-term discounted utilities `(v(0), v(1))` per rating.
#[pyfunction]
fn long_term_utilities(protocol: &PyProtocol, params: &PyIntrinsicParams) -> (f64, f64) {
    core::analysis::long_term_utilities(&protocol.0, &params.0)
}

/// Minimal discount factor sustaining the strategy at the all-ones design,
/// or None when no discount factor below one suffices.
#[pyfunction]
fn existence_threshold(params: &PyIntrinsicParams, strategy: &str) -> PyResult<Option<f64>> {
    Ok(core::existence_threshold(&params.0, parse_strategy(strategy)?))
}

/// Sustainability verdict with margins and the binding constraint.
#[pyfunction]
fn is_sustainable<'py>(
    py: Python<'py>,
    protocol: &PyProtocol,
    params: &PyIntrinsicParams,
) -> PyResult<Bound<'py, PyDict>> {
    let r = core::is_sustainable(&protocol.0, &params.0);
    let d = PyDict::new(py);
    d.set_item("sustainable", r.sustainable)?;
    d.set_item("effort_margin", r.osd_margin)?;
    d.set_item("fairness_margin", r.fairness_margin)?;
    d.set_item("binding", format!("{:?}", r.binding))?;
    d.set_item("used_fallback", r.used_fallback)?;
    Ok(d)
}

/// Direct one-shot gain of a deviation spec like "second-stage:1" or
/// "first-stage:0.9".
#[pyfunction]
fn deviation_gain(
    protocol: &PyProtocol,
    params: &PyIntrinsicParams,
    spec: &str,
) -> PyResult<f64> {
    Ok(core::deviation_gain_direct(
        &protocol.0,
        &params.0,
        parse_deviation(spec)?,
    ))
}

fn design_result_dict<'py>(
    py: Python<'py>,
    r: &core::DesignResult,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("strategy", r.strategy.name())?;
    d.set_item("beta0", r.beta0())?;
    d.set_item("beta1", r.beta1())?;
    d.set_item("eta0", r.eta0)?;
    d.set_item("welfare", r.welfare.max(0.0))?;
    d.set_item("feasible", r.feasible)?;
    d.set_item("iterations", r.iterations)?;
    Ok(d)
}

/// Welfare-maximizing protocol over the designed candidates.
#[pyfunction]
#[pyo3(signature = (params, residual=1e-6))]
fn select_protocol<'py>(
    py: Python<'py>,
    params: &PyIntrinsicParams,
    residual: f64,
) -> PyResult<Bound<'py, PyDict>> {
    design_result_dict(py, &core::select_protocol(&params.0, residual))
}

/// Optimal punishment factors for one strategy via alternating minimization.
#[pyfunction]
#[pyo3(signature = (params, strategy, residual=1e-6))]
fn alternate_optimize<'py>(
    py: Python<'py>,
    params: &PyIntrinsicParams,
    strategy: &str,
    residual: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = core::alternate_optimize(&params.0, parse_strategy(strategy)?, residual);
    design_result_dict(py, &r)
}

/// Population simulation summary: settled rating shares and mean welfare
/// over the second half of the horizon.
#[pyfunction]
#[pyo3(signature = (protocol, params, n=10_000, periods=2_000, seed=42, initial_good_fraction=1.0))]
fn simulate<'py>(
    py: Python<'py>,
    protocol: &PyProtocol,
    params: &PyIntrinsicParams,
    n: usize,
    periods: usize,
    seed: u64,
    initial_good_fraction: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = core::SimConfig::new(protocol.0, params.0, n, periods);
    cfg.seed = seed;
    cfg.initial_good_fraction = initial_good_fraction;
    let trace = core::run_population(&cfg).map_err(value_err)?;
    let half = &trace.stats[trace.stats.len() / 2..];
    let mean = |f: fn(&core::sim::PeriodStat) -> f64| {
        half.iter().map(f).sum::<f64>() / half.len() as f64
    };
    let d = PyDict::new(py);
    d.set_item("eta0", mean(|s| s.eta0))?;
    d.set_item("eta1", mean(|s| s.eta1))?;
    d.set_item("mean_welfare", mean(|s| s.mean_welfare))?;
    d.set_item("unmatched_rate", mean(|s| s.unmatched_rate))?;
    Ok(d)
}

/// Empirical deviation-gain estimate from paired simulation runs.
#[pyfunction]
#[pyo3(signature = (protocol, params, spec, n=4_000, periods=260, period=60,
                    deviant_fraction=0.05, seed=42, reps=20))]
#[allow(clippy::too_many_arguments)]
fn estimate_deviation_gain<'py>(
    py: Python<'py>,
    protocol: &PyProtocol,
    params: &PyIntrinsicParams,
    spec: &str,
    n: usize,
    periods: usize,
    period: usize,
    deviant_fraction: f64,
    seed: u64,
    reps: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = core::SimConfig::new(protocol.0, params.0, n, periods);
    cfg.seed = seed;
    cfg.deviation = Some(core::sim::PlannedDeviation {
        spec: parse_deviation(spec)?,
        period,
        deviant_fraction,
    });
    let est = core::estimate_deviation_gain(&cfg, reps).map_err(value_err)?;
    let d = PyDict::new(py);
    for rating in Rating::BOTH {
        if let Some(g) = est.for_rating(rating) {
            let entry = PyDict::new(py);
            entry.set_item("mean", g.mean)?;
            entry.set_item("ci_half_width", g.ci_half_width)?;
            entry.set_item("samples", g.samples)?;
            d.set_item(rating.index(), entry)?;
        }
    }
    Ok(d)
}

#[pymodule]
fn rating_protocol_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyIntrinsicParams>()?;
    m.add_class::<PyDesignParams>()?;
    m.add_class::<PyProtocol>()?;
    m.add_function(wrap_pyfunction!(stationary_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(social_welfare, m)?)?;
    m.add_function(wrap_pyfunction!(long_term_utilities, m)?)?;
    m.add_function(wrap_pyfunction!(existence_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(is_sustainable, m)?)?;
    m.add_function(wrap_pyfunction!(deviation_gain, m)?)?;
    m.add_function(wrap_pyfunction!(select_protocol, m)?)?;
    m.add_function(wrap_pyfunction!(alternate_optimize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_deviation_gain, m)?)?;
    Ok(())
}
