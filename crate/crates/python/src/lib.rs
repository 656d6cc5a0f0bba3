//! Python bindings. States cross the boundary as plain Python values:
//! floats or float lists for real vectors, lists of 0/1 rows for binary
//! matrices and label lists for partitions.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use gendiag::{
    BinaryMatrix, Chain, DiagnosticOptions, DistanceSpec, DrawState, MapChoice, Psrf, ScenarioSpec, SyntheticKind,
    SyntheticSpec, TourStart,
};

create_exception!(gendiag, GendiagError, PyValueError);

fn err(e: gendiag::Error) -> PyErr {
    GendiagError::new_err(e.to_string())
}

fn state_from_py(obj: &Bound<'_, PyAny>, kind: &str) -> PyResult<DrawState> {
    match kind {
        "real" => {
            if let Ok(x) = obj.extract::<f64>() {
                Ok(DrawState::scalar(x))
            } else {
                Ok(DrawState::RealVector(obj.extract()?))
            }
        }
        "binary_matrix" => {
            let rows: Vec<Vec<u8>> = obj.extract()?;
            let cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != cols) {
                return Err(GendiagError::new_err("binary matrix rows differ in length"));
            }
            let n = rows.len();
            Ok(DrawState::BinaryMatrix(
                BinaryMatrix::new(n, cols, rows.concat()).map_err(err)?,
            ))
        }
        "partition" => Ok(DrawState::Partition(obj.extract()?)),
        other => Err(PyValueError::new_err(format!(
            "state_type must be real, binary_matrix or partition, not {other:?}"
        ))),
    }
}

/// Matrix rows as int lists; `Vec<u8>` would surface as `bytes`.
fn int_rows(data: &[u8], cols: usize) -> Vec<Vec<u32>> {
    data.chunks(cols.max(1))
        .map(|r| r.iter().map(|&b| b as u32).collect())
        .collect()
}

fn state_to_py<'py>(py: Python<'py>, s: &DrawState) -> PyResult<Bound<'py, PyAny>> {
    Ok(match s {
        DrawState::RealVector(v) if v.len() == 1 => v[0].into_pyobject(py)?.into_any(),
        DrawState::RealVector(v) => PyList::new(py, v)?.into_any(),
        DrawState::BinaryMatrix(m) => PyList::new(py, int_rows(m.data(), m.cols()))?.into_any(),
        DrawState::Partition(l) => PyList::new(py, l)?.into_any(),
    })
}

/// `k` chains of equal length over one state space.
#[pyclass(name = "ChainSet", module = "gendiag", frozen)]
struct PyChainSet {
    inner: gendiag::ChainSet,
}

#[pymethods]
impl PyChainSet {
    /// `chains` is a list of chains, each a list of states of `state_type`.
    #[new]
    #[pyo3(signature = (chains, state_type = "real", burn_in = 0))]
    fn new(chains: &Bound<'_, PyAny>, state_type: &str, burn_in: usize) -> PyResult<Self> {
        let mut out = Vec::new();
        for (c, chain) in chains.try_iter()?.enumerate() {
            let draws = chain?
                .try_iter()?
                .map(|s| state_from_py(&s?, state_type))
                .collect::<PyResult<Vec<_>>>()?;
            out.push(Chain::new(c, draws).without_burn_in(burn_in));
        }
        Ok(Self {
            inner: gendiag::build_chain_set(out).map_err(err)?,
        })
    }

    #[getter]
    fn n_chains(&self) -> usize {
        self.inner.n_chains()
    }

    #[getter]
    fn chain_len(&self) -> usize {
        self.inner.chain_len()
    }

    /// Number of distinct states across all chains.
    #[getter]
    fn n_unique(&self) -> usize {
        self.inner.n_unique()
    }

    fn chains<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let out = PyList::empty(py);
        for c in self.inner.chains() {
            let draws = PyList::empty(py);
            for s in &c.draws {
                draws.append(state_to_py(py, s)?)?;
            }
            out.append(draws)?;
        }
        Ok(out)
    }

    /// Chains as NDJSON text, one draw per line.
    fn to_ndjson(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        gendiag::io::write_ndjson(&mut buf, self.inner.chains()).map_err(err)?;
        Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
    }

    #[staticmethod]
    fn from_ndjson(text: &str) -> PyResult<Self> {
        let chains = gendiag::io::read_ndjson(text.as_bytes()).map_err(err)?;
        Ok(Self {
            inner: gendiag::build_chain_set(chains).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "ChainSet(n_chains={}, chain_len={}, n_unique={}, shape={})",
            self.inner.n_chains(),
            self.inner.chain_len(),
            self.inner.n_unique(),
            self.inner.shape()
        )
    }
}

/// Result of a generalized diagnostic run.
#[pyclass(name = "Report", module = "gendiag", frozen)]
struct PyReport {
    inner: gendiag::DiagnosticReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn ess(&self) -> Option<f64> {
        self.inner.ess
    }

    /// `None` when not requested or not finite; see `flags`.
    #[getter]
    fn psrf(&self) -> Option<f64> {
        self.inner.psrf
    }

    #[getter]
    fn per_chain_ess(&self) -> Vec<f64> {
        self.inner.per_chain_ess.clone()
    }

    #[getter]
    fn flags(&self) -> Vec<String> {
        self.inner.flags.clone()
    }

    /// The univariate chains the diagnostics were computed on.
    #[getter]
    fn mapped(&self) -> Vec<Vec<f64>> {
        self.inner.mapped.chains.clone()
    }

    /// Provenance of the run as a JSON string.
    #[getter]
    fn config_json(&self) -> String {
        serde_json::to_string(&self.inner.config).expect("config serializes")
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("report serializes")
    }

    fn __repr__(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("None".to_string(), |x| x.to_string());
        format!(
            "Report(ess={}, psrf={}, flags={:?})",
            opt(self.inner.ess),
            opt(self.inner.psrf),
            self.inner.flags
        )
    }
}

fn builtin(name: &str, seed: u64) -> PyResult<ScenarioSpec> {
    ScenarioSpec::builtin(name, seed)
        .ok_or_else(|| PyValueError::new_err(format!("unknown scenario {name:?}; expected m1, m2, m3 or m4")))
}

/// Sum over chains of per-chain effective sample sizes.
#[pyfunction]
fn ess<'py>(py: Python<'py>, chains: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let r = gendiag::ess(&chains).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("total", r.total)?;
    d.set_item("per_chain", r.per_chain)?;
    d.set_item("zero_variance", r.zero_variance)?;
    Ok(d)
}

/// Potential scale reduction factor. `inf` when chains are constant at
/// different values, `None` when every draw is identical.
#[pyfunction]
fn psrf(chains: Vec<Vec<f64>>) -> PyResult<Option<f64>> {
    Ok(match gendiag::psrf(&chains).map_err(err)? {
        Psrf::Value(v) => Some(v),
        Psrf::Infinite => Some(f64::INFINITY),
        Psrf::Degenerate => None,
    })
}

#[pyfunction]
fn euclidean(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    gendiag::euclidean(&x, &y).map_err(err)
}

/// Entry-wise Hamming distance between two 0/1 matrices.
#[pyfunction]
fn hamming(a: &Bound<'_, PyAny>, b: &Bound<'_, PyAny>) -> PyResult<f64> {
    match (state_from_py(a, "binary_matrix")?, state_from_py(b, "binary_matrix")?) {
        (DrawState::BinaryMatrix(a), DrawState::BinaryMatrix(b)) => gendiag::hamming(&a, &b).map_err(err),
        _ => unreachable!(),
    }
}

#[pyfunction]
fn coassociation(labels: Vec<u32>) -> Vec<Vec<u32>> {
    int_rows(gendiag::coassociation(&labels).data(), labels.len())
}

/// Hamming distance between the co-association matrices of two partitions.
#[pyfunction]
fn partition_distance(a: Vec<u32>, b: Vec<u32>) -> PyResult<f64> {
    gendiag::distance::coassociation_hamming(&a, &b).map_err(err)
}

/// Metropolis-Hastings distance between two scalars under the target and
/// proposal of a builtin scenario.
#[pyfunction]
fn mh_distance(x: f64, y: f64, scenario: &str) -> PyResult<f64> {
    let s = builtin(scenario, 0)?;
    gendiag::mh_distance(&DrawState::scalar(x), &DrawState::scalar(y), &s.target, &s.proposal).map_err(err)
}

/// Greedy tour over a full symmetric distance matrix. Returns
/// `(ordering, cumdist, cycle_length)`.
#[pyfunction]
#[pyo3(signature = (distances, start = 0))]
fn nn_tour(distances: Vec<Vec<f64>>, start: usize) -> PyResult<(Vec<usize>, Vec<f64>, f64)> {
    let n = distances.len();
    if distances.iter().any(|r| r.len() != n) {
        return Err(GendiagError::new_err("distance matrix must be square"));
    }
    let m = gendiag::PairwiseDistanceMatrix::from_full(n, &distances.concat()).map_err(err)?;
    let t = gendiag::nn_tour(&m, start).map_err(err)?;
    Ok((t.ordering, t.cumdist, t.cycle_length))
}

/// Runs builtin sampler `m1`..`m4` with the given seed.
#[pyfunction]
#[pyo3(signature = (scenario, seed = 0, iters = None))]
fn simulate(py: Python<'_>, scenario: &str, seed: u64, iters: Option<usize>) -> PyResult<PyChainSet> {
    let mut spec = builtin(scenario, seed)?;
    if let Some(n) = iters {
        spec.n_iter = n;
    }
    spec.validate().map_err(err)?;
    let inner = py.detach(|| gendiag::mh_run(&spec)).map_err(err)?;
    Ok(PyChainSet { inner })
}

/// Synthetic binary-matrix (`kind="binary_matrix"`) or partition
/// (`kind="partition"`) chains. `size` is `(rows, cols)` or
/// `(n_obs, n_clusters)`; `rate` the per-entry flip or reassignment rate.
#[pyfunction]
#[pyo3(signature = (kind, size, rate, chains = 4, iters = 1000, seed = 0, trapped = false))]
#[allow(clippy::too_many_arguments)]
fn simulate_synthetic(
    py: Python<'_>,
    kind: &str,
    size: (usize, usize),
    rate: f64,
    chains: usize,
    iters: usize,
    seed: u64,
    trapped: bool,
) -> PyResult<PyChainSet> {
    let kind = match kind {
        "binary_matrix" => SyntheticKind::BinaryMatrix {
            rows: size.0,
            cols: size.1,
            flip_rate: rate,
        },
        "partition" => SyntheticKind::Partition {
            n_obs: size.0,
            n_clusters: size.1 as u32,
            resample_rate: rate,
        },
        other => return Err(PyValueError::new_err(format!("unknown synthetic kind {other:?}"))),
    };
    let spec = SyntheticSpec {
        kind,
        chains,
        n_iter: iters,
        seed,
        trapped,
    };
    let inner = py.detach(|| gendiag::synthetic_discrete_chains(&spec)).map_err(err)?;
    Ok(PyChainSet { inner })
}

/// Maps the chains to the real line and computes ESS and PSRF.
///
/// `distance` is `"euclidean"`, `"hamming"` or `"mh"` (the latter needs
/// `scenario`). `map` is `"nn"` or `"lanfear"` (the latter needs
/// `reference`, a state of the chains' type).
#[pyfunction]
#[pyo3(signature = (chains, distance = "euclidean", map = "nn", reference = None, start_index = 0, scenario = None, ess = true, psrf = true))]
#[allow(clippy::too_many_arguments)]
fn generalized_diagnostic(
    py: Python<'_>,
    chains: &PyChainSet,
    distance: &str,
    map: &str,
    reference: Option<&Bound<'_, PyAny>>,
    start_index: usize,
    scenario: Option<&str>,
    ess: bool,
    psrf: bool,
) -> PyResult<PyReport> {
    let d = match distance {
        "euclidean" => DistanceSpec::Euclidean,
        "hamming" => DistanceSpec::Hamming,
        "mh" => {
            let name = scenario.ok_or_else(|| PyValueError::new_err("distance=\"mh\" needs scenario"))?;
            let s = builtin(name, 0)?;
            DistanceSpec::metropolis_hastings(s.target, s.proposal)
        }
        other => return Err(PyValueError::new_err(format!("unknown distance {other:?}"))),
    };
    let choice = match map {
        "nn" => MapChoice::NearestNeighbor {
            start: TourStart::Index(start_index),
        },
        "lanfear" => {
            let r = reference.ok_or_else(|| PyValueError::new_err("map=\"lanfear\" needs reference"))?;
            let kind = match chains.inner.shape() {
                gendiag::StateShape::RealVector { .. } => "real",
                gendiag::StateShape::BinaryMatrix { .. } => "binary_matrix",
                gendiag::StateShape::Partition { .. } => "partition",
            };
            MapChoice::Lanfear {
                reference: state_from_py(r, kind)?,
            }
        }
        other => return Err(PyValueError::new_err(format!("unknown map {other:?}"))),
    };
    let opts = DiagnosticOptions { ess, psrf };
    let cs = &chains.inner;
    let inner = py
        .detach(|| gendiag::run_generalized_diagnostic(cs, &d, &choice, opts))
        .map_err(err)?;
    Ok(PyReport { inner })
}

/// Binned KL divergence of `draws` from the target of a builtin scenario.
#[pyfunction]
#[pyo3(signature = (draws, scenario, bin_width = 0.1, support = (-7.0, 7.0)))]
fn kl_binned(draws: Vec<f64>, scenario: &str, bin_width: f64, support: (f64, f64)) -> PyResult<f64> {
    let s = builtin(scenario, 0)?;
    gendiag::kl_binned(&s.target, &draws, bin_width, support).map_err(err)
}

/// Overlap between chain `chain`'s value range and the other chains'.
#[pyfunction]
fn band_overlap(chains: Vec<Vec<f64>>, chain: usize) -> PyResult<f64> {
    if chain >= chains.len() {
        return Err(PyValueError::new_err("chain index out of range"));
    }
    Ok(gendiag::band_overlap(&chains, chain))
}

#[pymodule(name = "gendiag")]
fn gendiag_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GendiagError", m.py().get_type::<GendiagError>())?;
    m.add_class::<PyChainSet>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(ess, m)?)?;
    m.add_function(wrap_pyfunction!(psrf, m)?)?;
    m.add_function(wrap_pyfunction!(euclidean, m)?)?;
    m.add_function(wrap_pyfunction!(hamming, m)?)?;
    m.add_function(wrap_pyfunction!(coassociation, m)?)?;
    m.add_function(wrap_pyfunction!(partition_distance, m)?)?;
    m.add_function(wrap_pyfunction!(mh_distance, m)?)?;
    m.add_function(wrap_pyfunction!(nn_tour, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(generalized_diagnostic, m)?)?;
    m.add_function(wrap_pyfunction!(kl_binned, m)?)?;
    m.add_function(wrap_pyfunction!(band_overlap, m)?)?;
    m.add("RNG_ALGORITHM", gendiag::sampler::RNG_ALGORITHM)?;
    Ok(())
}
