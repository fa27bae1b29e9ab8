//! Python bindings: feature extraction, HMM scoring, the t statistic and the
//! train/evaluate pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use sphmm_core::config::RunConfig;
use sphmm_core::eval::{self, Approach};
use sphmm_core::gmm::GaussianMixture;
use sphmm_core::hmm::LtrHmm;
use sphmm_core::manifest::{DatasetManifest, Split};
use sphmm_core::pipeline::{Corpus, TrainedSystem, Utterance};
use sphmm_core::sphmm::FusionWeight;
use sphmm_core::{audio, features, synth, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn config_from(overrides: Option<BTreeMap<String, String>>) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::default();
    for (k, v) in overrides.unwrap_or_default() {
        cfg.set(&k, &v).map_err(py_err)?;
    }
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Cepstral coefficients 1..=n of log filterbank energies `y`.
#[pyfunction]
fn mfcc(y: Vec<f64>, num_coeffs: usize) -> PyResult<Vec<f64>> {
    features::mfcc(&y, num_coeffs).map_err(py_err)
}

/// Regression deltas over a frame-major matrix.
#[pyfunction]
#[pyo3(signature = (frames, half_window = 2))]
fn delta(frames: Vec<Vec<f64>>, half_window: usize) -> PyResult<Vec<Vec<f64>>> {
    features::delta(&frames, half_window).map_err(py_err)
}

/// MFCC + delta observations of a 16-bit PCM WAV file.
#[pyfunction]
fn wav_observations(path: PathBuf) -> PyResult<Vec<Vec<f64>>> {
    let clip = audio::load_wav(&path).map_err(py_err)?;
    let obs = features::extract_observations(&path.to_string_lossy(), &clip, &RunConfig::default().features())
        .map_err(py_err)?;
    Ok(obs.vectors)
}

/// `(1 - alpha) * acoustic + alpha * prosodic`.
#[pyfunction]
fn fuse(alpha: f64, acoustic: f64, prosodic: f64) -> PyResult<f64> {
    Ok(FusionWeight::new(alpha).map_err(py_err)?.fuse(acoustic, prosodic))
}

/// Two-sample t statistic; returns `(t, sd_pooled, significant)`.
#[pyfunction]
#[pyo3(signature = (mean_x, mean_y, sd_x, sd_y, n, critical = eval::DEFAULT_CRITICAL_VALUE))]
fn students_t(mean_x: f64, mean_y: f64, sd_x: f64, sd_y: f64, n: usize, critical: f64) -> PyResult<(f64, f64, bool)> {
    let r = eval::students_t_with_critical(mean_x, mean_y, sd_x, sd_y, n, critical).map_err(py_err)?;
    Ok((r.t_value, r.sd_pooled, r.significant))
}

/// Writes a synthetic corpus and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, preset = "separable", seed = 0, overrides = None, manifest_only = false))]
fn synthesize(
    out_dir: PathBuf,
    preset: &str,
    seed: u64,
    overrides: Option<BTreeMap<String, String>>,
    manifest_only: bool,
) -> PyResult<PathBuf> {
    let mut cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    cfg.set("synth.preset", preset).map_err(py_err)?;
    for (k, v) in overrides.unwrap_or_default() {
        cfg.set(&format!("synth.{k}"), &v).map_err(py_err)?;
    }
    let spec = cfg.synth_spec().map_err(py_err)?;
    if manifest_only {
        synth::generate_manifest(&spec, &out_dir).map_err(py_err)?;
    } else {
        synth::generate_corpus(&spec, &out_dir).map_err(py_err)?;
    }
    Ok(out_dir.join(synth::MANIFEST_FILE))
}

/// Left-to-right HMM with one diagonal Gaussian per state.
#[pyclass(name = "Hmm", frozen)]
struct PyHmm(LtrHmm);

#[pymethods]
impl PyHmm {
    #[new]
    #[pyo3(signature = (self_loops, means, variances, end_in_final = true))]
    fn new(self_loops: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>, end_in_final: bool) -> PyResult<Self> {
        if means.len() != variances.len() {
            return Err(PyValueError::new_err("means and variances differ in length"));
        }
        let states = means
            .into_iter()
            .zip(variances)
            .map(|(m, v)| GaussianMixture::single(m, v))
            .collect::<sphmm_core::Result<Vec<_>>>()
            .map_err(py_err)?;
        Ok(Self(
            LtrHmm::from_self_loops(&self_loops, states, end_in_final).map_err(py_err)?,
        ))
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.0.num_states()
    }

    fn log_likelihood(&self, obs: Vec<Vec<f64>>) -> PyResult<f64> {
        self.0.forward_log_likelihood(&obs).map_err(py_err)
    }

    /// Best state path and its log probability.
    fn viterbi(&self, obs: Vec<Vec<f64>>) -> PyResult<(Vec<usize>, f64)> {
        self.0.viterbi(&obs).map_err(py_err)
    }
}

fn load_corpus(manifest: &PathBuf, cfg: &RunConfig, split: Split) -> PyResult<Corpus> {
    let m = DatasetManifest::load(manifest).map_err(py_err)?;
    let base = manifest.parent().map(PathBuf::from).unwrap_or_default();
    Corpus::from_manifest(&m, &base, &cfg.features(), &cfg.prosody(), &[split]).map_err(py_err)
}

/// Gender models plus gender-dependent and pooled emotion models.
#[pyclass(name = "System", frozen)]
struct PySystem(TrainedSystem);

#[pymethods]
impl PySystem {
    /// Trains on the train split of a manifest. `overrides` holds
    /// configuration keys such as `num_states`.
    #[staticmethod]
    #[pyo3(signature = (manifest, overrides = None))]
    fn train(py: Python<'_>, manifest: PathBuf, overrides: Option<BTreeMap<String, String>>) -> PyResult<Self> {
        let cfg = config_from(overrides)?;
        py.detach(|| {
            let corpus = load_corpus(&manifest, &cfg, Split::Train)?;
            Ok(Self(TrainedSystem::train(&corpus, &cfg.model()).map_err(py_err)?))
        })
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(Self(TrainedSystem::load(&dir).map_err(py_err)?))
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.0.save(&dir).map_err(py_err)
    }

    #[getter]
    fn emotions(&self) -> Vec<String> {
        self.0.emotions().to_vec()
    }

    /// Scores the test split; returns gender accuracy and the three approach
    /// averages in percent, and writes the report files when `report_dir` is set.
    #[pyo3(signature = (manifest, alpha = 0.5, report_dir = None))]
    fn evaluate(
        &self,
        py: Python<'_>,
        manifest: PathBuf,
        alpha: f64,
        report_dir: Option<PathBuf>,
    ) -> PyResult<BTreeMap<String, f64>> {
        let cfg = RunConfig {
            alpha,
            ..RunConfig::default()
        };
        let w = cfg.fusion_weight().map_err(py_err)?;
        py.detach(|| {
            let corpus = load_corpus(&manifest, &cfg, Split::Test)?;
            let test: Vec<&Utterance> = corpus.utterances.iter().collect();
            let report = eval::evaluate(&self.0, &test, w, cfg.echo()).map_err(py_err)?;
            if let Some(dir) = &report_dir {
                eval::emit_report(&report, dir).map_err(py_err)?;
            }
            let mut out = BTreeMap::new();
            out.insert("gender".to_string(), report.gender_accuracy);
            for a in Approach::ALL {
                out.insert(format!("approach{}", a.number()), report.average(a));
            }
            Ok(out)
        })
    }
}

#[pymodule]
fn sphmm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(mfcc, m)?)?;
    m.add_function(wrap_pyfunction!(delta, m)?)?;
    m.add_function(wrap_pyfunction!(wav_observations, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(students_t, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_class::<PyHmm>()?;
    m.add_class::<PySystem>()?;
    Ok(())
}
