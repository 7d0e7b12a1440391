//! Python bindings.
//!
//! Structured values cross the boundary as plain dicts and lists, converted
//! through JSON, so field names match the HTTP API and result files.

use edgeai_core::agent::{AgentError, AgentReply, Orchestrator as CoreOrchestrator, ScriptedPlanner};
use edgeai_core::registry::{FixtureBackend, ModelRegistry};
use edgeai_core::runner::{run_scenario_files, RunError};
use edgeai_core::scenario::ScenarioConfig;
use edgeai_core::sim::{Cell, Direction, Flow};
use edgeai_core::world::{World, WorldError};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyKeyError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(edgeai, EdgeAiError, PyException);
create_exception!(edgeai, OutOfTurnError, EdgeAiError);

fn agent_err(e: AgentError) -> PyErr {
    match e {
        AgentError::UnknownSession(_) => PyKeyError::new_err(e.to_string()),
        AgentError::OutOfTurn { .. } => OutOfTurnError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn world_err(e: WorldError) -> PyErr {
    EdgeAiError::new_err(e.to_string())
}

fn run_err(e: RunError) -> PyErr {
    EdgeAiError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn direction(s: &str) -> PyResult<Direction> {
    match s {
        "uplink" | "ul" => Ok(Direction::Uplink),
        "downlink" | "dl" => Ok(Direction::Downlink),
        _ => Err(PyValueError::new_err(format!("direction must be uplink or downlink, got {s:?}"))),
    }
}

/// A simulated world with the provisioning agent on top.
#[pyclass(unsendable, module = "edgeai")]
struct Orchestrator {
    inner: CoreOrchestrator,
}

fn reply<'py>(py: Python<'py>, r: Result<AgentReply, AgentError>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &r.map_err(agent_err)?)
}

#[pymethods]
impl Orchestrator {
    /// Load a scenario file; `seed` defaults to the one in the file.
    #[new]
    #[pyo3(signature = (scenario, seed = None))]
    fn new(scenario: &str, seed: Option<u64>) -> PyResult<Self> {
        let cfg = ScenarioConfig::load(scenario).map_err(|e| EdgeAiError::new_err(e.to_string()))?;
        let world = World::from_scenario(&cfg, seed.unwrap_or(cfg.seed)).map_err(world_err)?;
        Ok(Self {
            inner: CoreOrchestrator::new(world, Box::new(ScriptedPlanner)),
        })
    }

    #[getter]
    fn now(&self) -> u64 {
        self.inner.world().now()
    }

    #[getter]
    fn planner(&self) -> &'static str {
        self.inner.planner_name()
    }

    fn start_session<'py>(&mut self, py: Python<'py>, description: &str) -> PyResult<Bound<'py, PyAny>> {
        let s = self.inner.start_session(description).map_err(agent_err)?;
        to_py(py, &s)
    }

    fn message<'py>(&mut self, py: Python<'py>, session_id: &str, text: &str) -> PyResult<Bound<'py, PyAny>> {
        reply(py, self.inner.handle_message(session_id, text))
    }

    fn choose_model<'py>(&mut self, py: Python<'py>, session_id: &str, index: usize) -> PyResult<Bound<'py, PyAny>> {
        reply(py, self.inner.choose_model(session_id, index))
    }

    #[pyo3(signature = (session_id, accept, node_id = None, deploy_at_ms = None))]
    fn confirm_deployment<'py>(
        &mut self,
        py: Python<'py>,
        session_id: &str,
        accept: bool,
        node_id: Option<&str>,
        deploy_at_ms: Option<u64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        reply(py, self.inner.confirm_deployment(session_id, accept, node_id, deploy_at_ms))
    }

    /// Advance simulated time by a multiple of the 10 ms tick.
    fn advance(&mut self, ms: u64) -> PyResult<()> {
        self.inner.advance(ms).map_err(world_err)
    }

    fn session<'py>(&self, py: Python<'py>, session_id: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.session(session_id).map_err(agent_err)?)
    }

    fn drain_events<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.drain_events())
    }

    fn alerts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.world().alerts())
    }

    fn create_policy<'py>(&mut self, py: Python<'py>, policy: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        let p = self.inner.world_mut().create_policy(from_py(policy)?).map_err(world_err)?;
        to_py(py, &p)
    }

    fn effective_rules<'py>(&self, py: Python<'py>, ue_id: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.world().effective_rules(ue_id).map_err(world_err)?)
    }

    fn edge_nodes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.world().edge().nodes().collect::<Vec<_>>())
    }

    fn services<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.world().edge().instances().collect::<Vec<_>>())
    }

    fn fingerprint<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.world().fingerprint())
    }
}

/// Headless scripted run; returns the result file contents as a string.
#[pyfunction]
fn run_scenario(scenario: &str, script: &str, seed: u64) -> PyResult<String> {
    Ok(run_scenario_files(scenario, script, seed).map_err(run_err)?.to_json())
}

/// Per-flow capacity shares for one cell and direction.
#[pyfunction]
#[pyo3(signature = (cell, flows, direction = "uplink"))]
fn allocate_capacity<'py>(
    py: Python<'py>,
    cell: &Bound<'py, PyAny>,
    flows: &Bound<'py, PyAny>,
    direction: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cell: Cell = from_py(cell)?;
    let flows: Vec<Flow> = from_py(flows)?;
    to_py(py, &edgeai_core::sim::allocate_capacity(&cell, &flows, self::direction(direction)?))
}

#[pyfunction]
fn holt_forecast(series: Vec<f64>, alpha: f64, beta: f64, horizon: usize) -> PyResult<Vec<f64>> {
    edgeai_core::monitor::holt_forecast(&series, alpha, beta, horizon).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn placement_score(latency_ms: f64, max_latency_ms: f64, free_cpu_fraction: f64) -> f64 {
    edgeai_core::agent::placement_score(latency_ms, max_latency_ms, free_cpu_fraction)
}

/// Ranked cards from a fixture registry directory.
#[pyfunction]
#[pyo3(signature = (fixture_dir, task, limit = 10))]
fn search_models<'py>(py: Python<'py>, fixture_dir: &str, task: &str, limit: usize) -> PyResult<Bound<'py, PyAny>> {
    let b = FixtureBackend::load(fixture_dir).map_err(|e| EdgeAiError::new_err(e.to_string()))?;
    let cards = ModelRegistry::new(Box::new(b))
        .search_models(task, limit)
        .map_err(|e| EdgeAiError::new_err(e.to_string()))?;
    to_py(py, &cards)
}

#[pymodule]
fn edgeai(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EdgeAiError", m.py().get_type::<EdgeAiError>())?;
    m.add("OutOfTurnError", m.py().get_type::<OutOfTurnError>())?;
    m.add_class::<Orchestrator>()?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(allocate_capacity, m)?)?;
    m.add_function(wrap_pyfunction!(holt_forecast, m)?)?;
    m.add_function(wrap_pyfunction!(placement_score, m)?)?;
    m.add_function(wrap_pyfunction!(search_models, m)?)?;
    Ok(())
}
