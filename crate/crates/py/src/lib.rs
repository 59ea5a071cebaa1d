//! Python bindings: the main types and operations of the `biogeo` crate as
//! an extension module.
//!
//! Build `libbiogeo_py.so` with cargo and import it as `biogeo_py` (see
//! python/smoke_test.py for a loader that handles the renaming).

use std::cell::RefCell;
use std::fmt::Display;
use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyType;

use biogeo::accuracy;
use biogeo::bbo;
use biogeo::classifier::{self, ClassifierConfig, TrainingSet};
use biogeo::raster;
use biogeo::report::render_report;

fn value_error(err: impl Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

/// A width x height raster with N co-registered 8-bit bands.
#[pyclass(frozen, name = "MultibandImage")]
struct PyMultibandImage {
    inner: raster::MultibandImage,
}

#[pymethods]
impl PyMultibandImage {
    /// Load an image from a band manifest file.
    #[classmethod]
    fn load_manifest(_cls: &Bound<'_, PyType>, path: &str) -> PyResult<Self> {
        let inner = raster::load_manifest(Path::new(path)).map_err(value_error)?;
        Ok(PyMultibandImage { inner })
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height()
    }

    #[getter]
    fn band_names(&self) -> Vec<String> {
        self.inner.band_names().to_vec()
    }

    /// Per-band DN values at (x, y), in band order.
    fn pixel_vector(&self, x: u32, y: u32) -> PyResult<Vec<u8>> {
        self.inner.pixel_vector(x, y).map_err(value_error)
    }

    /// Write one PGM per band next to the manifest path.
    fn save_with_manifest(&self, path: &str) -> PyResult<()> {
        raster::save_with_manifest(&self.inner, Path::new(path)).map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!(
            "MultibandImage({}x{}, bands={:?})",
            self.inner.width(),
            self.inner.height(),
            self.inner.band_names()
        )
    }
}

/// A per-pixel class assignment; `None` marks an unclassified pixel.
#[pyclass(frozen, name = "LabelMap", skip_from_py_object)]
#[derive(Clone)]
struct PyLabelMap {
    inner: raster::LabelMap,
}

#[pymethods]
impl PyLabelMap {
    #[classmethod]
    fn load(_cls: &Bound<'_, PyType>, path: &str) -> PyResult<Self> {
        let inner = raster::LabelMap::load(Path::new(path)).map_err(value_error)?;
        Ok(PyLabelMap { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(Path::new(path)).map_err(value_error)
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height()
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.classes().to_vec()
    }

    /// Class name at (x, y), or None if unclassified.
    fn label_at(&self, x: u32, y: u32) -> PyResult<Option<String>> {
        Ok(self
            .inner
            .label_at(x, y)
            .map_err(value_error)?
            .map(str::to_string))
    }

    #[getter]
    fn unclassified_count(&self) -> usize {
        self.inner.unclassified_count()
    }

    /// Render to a P6 PPM file; palette entries are `name = R,G,B` lines.
    #[pyo3(signature = (path, palette=None))]
    fn render_ppm(&self, path: &str, palette: Option<&str>) -> PyResult<()> {
        let palette = match palette {
            Some(p) => raster::Palette::from_file(Path::new(p)).map_err(value_error)?,
            None => raster::Palette::default_landcover(),
        };
        raster::render_ppm(&self.inner, &palette, Path::new(path)).map_err(value_error)
    }

    fn __eq__(&self, other: &PyLabelMap) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "LabelMap({}x{}, classes={:?}, unclassified={})",
            self.inner.width(),
            self.inner.height(),
            self.inner.classes(),
            self.inner.unclassified_count()
        )
    }
}

/// Generate a synthetic scene from a TOML scene specification; returns
/// (image, ground_truth).
#[pyfunction]
fn synth_scene(spec_toml: &str) -> PyResult<(PyMultibandImage, PyLabelMap)> {
    let spec = raster::SceneSpec::from_toml_str(spec_toml).map_err(value_error)?;
    let (image, truth) = raster::synth_scene(&spec).map_err(value_error)?;
    Ok((
        PyMultibandImage { inner: image },
        PyLabelMap { inner: truth },
    ))
}

/// Outcome of a classification run.
#[pyclass(frozen, name = "ClassificationResult")]
struct PyClassificationResult {
    labels: raster::LabelMap,
    unclassified: usize,
    iterations: Vec<(usize, usize, usize, usize, usize)>,
    report: String,
}

#[pymethods]
impl PyClassificationResult {
    #[getter]
    fn label_map(&self) -> PyLabelMap {
        PyLabelMap {
            inner: self.labels.clone(),
        }
    }

    #[getter]
    fn unclassified_count(&self) -> usize {
        self.unclassified
    }

    /// Per-iteration counters: (iteration, species_processed,
    /// species_absorbed, species_rejected, unclassified_pixels).
    #[getter]
    fn iterations(&self) -> Vec<(usize, usize, usize, usize, usize)> {
        self.iterations.clone()
    }

    #[getter]
    fn report(&self) -> String {
        self.report.clone()
    }
}

/// Classify an image. `training` is a list of (class_name, [pixel_vector,
/// ...]) pairs in declaration order.
#[pyfunction]
#[pyo3(signature = (
    image,
    training,
    *,
    threshold = 1.0,
    disc_bands = vec!["NIR".to_string(), "MIR".to_string()],
    initial_intervals = 8,
    hsi_bands = None,
    max_iterations = 5,
    policy = "best-fit",
    aggregate = "mean-abs",
    stddev = "sample",
    seed = 0,
))]
#[allow(clippy::too_many_arguments)]
fn classify(
    image: &PyMultibandImage,
    training: Vec<(String, Vec<Vec<u8>>)>,
    threshold: f64,
    disc_bands: Vec<String>,
    initial_intervals: usize,
    hsi_bands: Option<Vec<String>>,
    max_iterations: usize,
    policy: &str,
    aggregate: &str,
    stddev: &str,
    seed: u64,
) -> PyResult<PyClassificationResult> {
    let training = TrainingSet::new(training).map_err(value_error)?;
    let config = ClassifierConfig {
        threshold,
        disc_bands,
        initial_intervals,
        hsi_bands,
        max_iterations,
        policy: policy.parse().map_err(value_error)?,
        aggregate: aggregate.parse().map_err(value_error)?,
        stddev: stddev.parse().map_err(value_error)?,
        seed,
    };
    let result = classifier::classify(&image.inner, &training, &config).map_err(value_error)?;
    let report = render_report(&image.inner, &config, &result);
    Ok(PyClassificationResult {
        unclassified: result.unclassified.len(),
        iterations: result
            .per_iteration
            .iter()
            .map(|r| {
                (
                    r.iteration,
                    r.species_processed,
                    r.species_absorbed,
                    r.species_rejected,
                    r.unclassified_pixels,
                )
            })
            .collect(),
        labels: result.label_map,
        report,
    })
}

/// Predicted-vs-reference count matrix with agreement statistics.
#[pyclass(frozen, name = "ErrorMatrix")]
struct PyErrorMatrix {
    inner: accuracy::ErrorMatrix,
}

#[pymethods]
impl PyErrorMatrix {
    #[new]
    fn new(classes: Vec<String>, counts: Vec<Vec<u64>>) -> PyResult<Self> {
        Ok(PyErrorMatrix {
            inner: accuracy::ErrorMatrix::new(classes, counts, 0).map_err(value_error)?,
        })
    }

    /// Build from two label maps; rows = predicted, columns = reference.
    #[classmethod]
    fn from_label_maps(
        _cls: &Bound<'_, PyType>,
        predicted: &PyLabelMap,
        reference: &PyLabelMap,
    ) -> PyResult<Self> {
        let matrix = accuracy::build_matrix(
            &predicted.inner,
            &reference.inner,
            reference.inner.classes(),
        )
        .map_err(value_error)?;
        Ok(PyErrorMatrix { inner: matrix })
    }

    #[classmethod]
    fn from_csv(_cls: &Bound<'_, PyType>, text: &str) -> PyResult<Self> {
        Ok(PyErrorMatrix {
            inner: accuracy::ErrorMatrix::from_csv_str(text).map_err(value_error)?,
        })
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.classes().to_vec()
    }

    #[getter]
    fn counts(&self) -> Vec<Vec<u64>> {
        self.inner.counts().to_vec()
    }

    #[getter]
    fn excluded_unclassified(&self) -> u64 {
        self.inner.excluded_unclassified()
    }

    fn kappa(&self) -> PyResult<f64> {
        accuracy::kappa(&self.inner).map_err(value_error)
    }

    fn overall_accuracy(&self) -> PyResult<f64> {
        accuracy::overall_accuracy(&self.inner).map_err(value_error)
    }

    /// Per-class (class, producer_accuracy, user_accuracy) triples;
    /// accuracies are None when the corresponding total is zero.
    #[allow(clippy::type_complexity)]
    fn producer_user_accuracy(&self) -> PyResult<Vec<(String, Option<f64>, Option<f64>)>> {
        Ok(accuracy::producer_user_accuracy(&self.inner)
            .map_err(value_error)?
            .into_iter()
            .map(|c| (c.class, c.producer, c.user))
            .collect())
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }
}

/// Minimize `cost` (a callable taking a list of floats) over a bounded box
/// with the reference optimizer. Returns (best_siv, best_cost, trace) where
/// trace rows are (generation, best_cost, mean_cost).
#[pyfunction]
#[pyo3(signature = (
    cost,
    bounds,
    *,
    population = 50,
    generations = 100,
    elite_count = 0,
    mutation_prob = 0.0,
    max_immigration = 1.0,
    max_emigration = 1.0,
    seed = 0,
))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn bbo_optimize(
    cost: Bound<'_, PyAny>,
    bounds: Vec<(f64, f64)>,
    population: usize,
    generations: usize,
    elite_count: usize,
    mutation_prob: f64,
    max_immigration: f64,
    max_emigration: f64,
    seed: u64,
) -> PyResult<(Vec<f64>, f64, Vec<(usize, f64, f64)>)> {
    let params = bbo::BboParams {
        population,
        generations,
        max_immigration,
        max_emigration,
        mutation_prob,
        elite_count,
        bounds,
        seed,
    };
    let pending: RefCell<Option<PyErr>> = RefCell::new(None);
    let cost_fn = |x: &[f64]| -> f64 {
        if pending.borrow().is_some() {
            return f64::NAN; // unwind via the optimizer's finite-cost check
        }
        match cost.call1((x.to_vec(),)).and_then(|v| v.extract::<f64>()) {
            Ok(value) => value,
            Err(err) => {
                *pending.borrow_mut() = Some(err);
                f64::NAN
            }
        }
    };
    let run = bbo::optimize(cost_fn, &params);
    if let Some(err) = pending.into_inner() {
        return Err(err);
    }
    let run = run.map_err(value_error)?;
    let trace = run
        .trace
        .iter()
        .map(|r| (r.generation, r.best_cost, r.mean_cost))
        .collect();
    Ok((run.best.siv, run.best.cost, trace))
}

#[pymodule]
fn biogeo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMultibandImage>()?;
    m.add_class::<PyLabelMap>()?;
    m.add_class::<PyClassificationResult>()?;
    m.add_class::<PyErrorMatrix>()?;
    m.add_function(wrap_pyfunction!(synth_scene, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(bbo_optimize, m)?)?;
    Ok(())
}
