//! Python bindings. Frames cross the boundary as `Image` objects holding
//! interleaved `f64` samples; CFA frames are single-channel images.

use cfaseq::cfa::cfa_to_quad;
use cfaseq::noise::{anscombe as anscombe_fn, estimate_model, observations_csv, NoiseEstimationParams};
use cfaseq::pipeline::{run_pipeline, simulate as simulate_fn, PipelineConfig};
use cfaseq::{netpbm, BayerPattern, CfaImage, Sequence};
use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: cfaseq::Error) -> PyErr {
    match e {
        cfaseq::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn pattern(name: &str) -> PyResult<BayerPattern> {
    name.parse().map_err(py_err)
}

#[pyclass(name = "Image", module = "pycfaseq", from_py_object)]
#[derive(Clone)]
pub struct PyImage(cfaseq::Image);

#[pymethods]
impl PyImage {
    /// `data` holds `width * height * channels` interleaved samples.
    #[new]
    #[pyo3(signature = (width, height, channels, data, range_hint = 255.0))]
    fn new(width: usize, height: usize, channels: usize, data: Vec<f64>, range_hint: f64) -> PyResult<Self> {
        Ok(Self(cfaseq::Image::new(width, height, channels, data, range_hint).map_err(py_err)?))
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.0.channels()
    }

    #[getter]
    fn range_hint(&self) -> f64 {
        self.0.range_hint
    }

    fn data(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn get(&self, x: usize, y: usize, c: usize) -> PyResult<f64> {
        if x >= self.0.width() || y >= self.0.height() || c >= self.0.channels() {
            return Err(PyIndexError::new_err(format!("({x}, {y}, {c}) outside the image")));
        }
        Ok(self.0.get(x, y, c))
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{}x{})", self.0.width(), self.0.height(), self.0.channels())
    }
}

fn unwrap_frames(frames: Vec<PyImage>) -> Vec<cfaseq::Image> {
    frames.into_iter().map(|f| f.0).collect()
}

fn wrap_frames(frames: Vec<cfaseq::Image>) -> Vec<PyImage> {
    frames.into_iter().map(PyImage).collect()
}

fn to_cfa(frames: Vec<PyImage>, pattern_name: &str) -> PyResult<Vec<CfaImage>> {
    let p = pattern(pattern_name)?;
    frames.into_iter().map(|f| CfaImage::new(f.0, p).map_err(py_err)).collect()
}

/// Rows of the orthonormal channel transform applied before denoising.
#[pyfunction]
fn yuvw_matrix() -> Vec<Vec<f64>> {
    cfaseq::color::YUVW.iter().map(|r| r.to_vec()).collect()
}

/// Classical Anscombe transform.
#[pyfunction]
fn anscombe(u: f64) -> f64 {
    anscombe_fn(u)
}

/// Clean procedural color sequence with a moving camera.
#[pyfunction]
#[pyo3(signature = (seed, width, height, frames, max_speed = 1.5))]
fn synthetic_sequence(seed: u64, width: usize, height: usize, frames: usize, max_speed: f64) -> Vec<PyImage> {
    wrap_frames(cfaseq::synth::synthetic_sequence(seed, width, height, frames, max_speed).into_frames())
}

/// Mosaics color frames and adds Gaussian noise of std `sigma`.
#[pyfunction]
fn simulate(frames: Vec<PyImage>, pattern_name: &str, sigma: f64, seed: u64) -> PyResult<Vec<PyImage>> {
    let seq = Sequence::new(unwrap_frames(frames)).map_err(py_err)?;
    let cfa = simulate_fn(&seq, pattern(pattern_name)?, sigma, seed).map_err(py_err)?;
    Ok(cfa.into_iter().map(|c| PyImage(c.into_image())).collect())
}

/// Fitted noise model text and the per-bin observations CSV of a CFA sequence.
#[pyfunction]
#[pyo3(signature = (frames, pattern_name, bins = 16))]
fn estimate_noise(frames: Vec<PyImage>, pattern_name: &str, bins: usize) -> PyResult<(String, String)> {
    let cfa = to_cfa(frames, pattern_name)?;
    let quads = Sequence::new(cfa.iter().map(|c| cfa_to_quad(c).into_image()).collect()).map_err(py_err)?;
    let (model, obs) = estimate_model(&quads, &NoiseEstimationParams { bins, ..Default::default() }).map_err(py_err)?;
    Ok((model.to_text(), observations_csv(&obs)))
}

/// Default pipeline configuration as TOML.
#[pyfunction]
fn default_config(pattern_name: &str) -> PyResult<String> {
    Ok(PipelineConfig::new(pattern(pattern_name)?).to_toml())
}

/// Runs the processing chain configured by `config` (TOML) on CFA frames.
#[pyfunction]
fn run(py: Python<'_>, frames: Vec<PyImage>, config: &str) -> PyResult<Vec<PyImage>> {
    let cfg = PipelineConfig::from_toml(config).map_err(py_err)?;
    let cfa = to_cfa(frames, &cfg.pattern.to_string())?;
    let out = py.detach(|| run_pipeline(&cfa, &cfg)).map_err(py_err)?;
    Ok(wrap_frames(out.into_frames()))
}

#[pyfunction]
fn rmse(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    cfaseq::image::rmse(&a.0, &b.0).map_err(py_err)
}

/// Reads the `frame_%04d.pgm|ppm` files of a directory.
#[pyfunction]
fn read_frames(dir: &str) -> PyResult<Vec<PyImage>> {
    Ok(wrap_frames(netpbm::read_frames(dir).map_err(py_err)?))
}

/// Writes frames as `frame_%04d.pgm|ppm`.
#[pyfunction]
fn write_frames(dir: &str, frames: Vec<PyImage>) -> PyResult<()> {
    netpbm::write_frames(dir, &unwrap_frames(frames)).map_err(py_err)
}

#[pymodule]
fn pycfaseq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_function(wrap_pyfunction!(yuvw_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(anscombe, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_noise, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(read_frames, m)?)?;
    m.add_function(wrap_pyfunction!(write_frames, m)?)?;
    Ok(())
}
