//! Python bindings. Poses cross the boundary as 4x4 homogeneous matrices
//! (nested lists), point clouds as lists of `[x, y, z]`.

use std::path::Path;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use graspgen::diffusion::{sample_grasps, Generator};
use graspgen::oracle::{label_all, AnalyticOracle, GripperModel};
use graspgen::pipeline::PipelineConfig;
use graspgen::se3::{GraspPose, Mat3, Rotation, RotVec, Vec3};
use graspgen::shape::{make_primitive, PointCloud, Primitive};

type Mat4 = [[f64; 4]; 4];

fn py_err(e: graspgen::Error) -> PyErr {
    match e {
        graspgen::Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn to_pose(m: &Mat4) -> PyResult<GraspPose> {
    let r = Mat3::from_fn(|i, j| m[i][j]);
    let rotation = Rotation::new(r).map_err(py_err)?;
    Ok(GraspPose::new(rotation, Vec3::new(m[0][3], m[1][3], m[2][3])))
}

fn to_mat4(g: &GraspPose) -> Mat4 {
    let r = g.rotation.matrix();
    let t = g.translation;
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[(i, j)];
        }
        m[i][3] = t[i];
    }
    m[3][3] = 1.0;
    m
}

fn to_poses(ms: &[Mat4]) -> PyResult<Vec<GraspPose>> {
    ms.iter().map(to_pose).collect()
}

/// Rotation matrix of an axis-angle vector.
#[pyfunction]
fn exp_so3(omega: [f64; 3]) -> PyResult<[[f64; 3]; 3]> {
    let r = graspgen::se3::exp_map_so3(&RotVec::new(omega[0], omega[1], omega[2])).map_err(py_err)?;
    let m = r.matrix();
    Ok(std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])))
}

/// Axis-angle vector of a rotation matrix.
#[pyfunction]
fn log_so3(r: [[f64; 3]; 3]) -> PyResult<[f64; 3]> {
    let rot = Rotation::new(Mat3::from_fn(|i, j| r[i][j])).map_err(py_err)?;
    let w = graspgen::se3::log_map_so3(&rot).map_err(py_err)?;
    Ok([w.0.x, w.0.y, w.0.z])
}

#[pyfunction]
fn pose_distance(a: Mat4, b: Mat4) -> PyResult<f64> {
    Ok(graspgen::se3::pose_distance(&to_pose(&a)?, &to_pose(&b)?))
}

/// Fraction of ground-truth grasps matched by a prediction within 1 cm.
#[pyfunction]
fn coverage(predicted: Vec<Mat4>, gt: Vec<Mat4>) -> PyResult<f64> {
    graspgen::metrics::coverage(&to_poses(&predicted)?, &to_poses(&gt)?).map_err(py_err)
}

/// Mean (translation m, rotation rad) error to the nearest ground truth.
#[pyfunction]
fn pose_errors(predicted: Vec<Mat4>, gt: Vec<Mat4>) -> PyResult<(f64, f64)> {
    graspgen::metrics::pose_errors(&to_poses(&predicted)?, &to_poses(&gt)?).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (a, b, n_sub = 500, repeats = 5, seed = 0))]
fn emd(a: Vec<Mat4>, b: Vec<Mat4>, n_sub: usize, repeats: usize, seed: u64) -> PyResult<f64> {
    graspgen::metrics::emd(&to_poses(&a)?, &to_poses(&b)?, n_sub, repeats, seed).map_err(py_err)
}

fn primitive(shape: &str, dims: &[f64]) -> PyResult<Primitive> {
    let need = |n: usize| {
        if dims.len() == n {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("{shape} takes {n} dimensions, got {}", dims.len())))
        }
    };
    match shape {
        "box" => need(3).map(|_| Primitive::Box {
            x: dims[0],
            y: dims[1],
            z: dims[2],
        }),
        "cylinder" => need(2).map(|_| Primitive::Cylinder {
            radius: dims[0],
            height: dims[1],
        }),
        "sphere" => need(1).map(|_| Primitive::Sphere { radius: dims[0] }),
        "capped_composite" => need(2).map(|_| Primitive::CappedComposite {
            radius: dims[0],
            height: dims[1],
        }),
        _ => Err(PyValueError::new_err(format!("unknown shape `{shape}`"))),
    }
}

/// Oracle labels for grasps on a centered primitive. `gripper` is
/// `parallel_jaw` or `suction`.
#[pyfunction]
#[pyo3(signature = (shape, dims, grasps, gripper = "parallel_jaw", resolution = 32))]
fn label_grasps(shape: &str, dims: Vec<f64>, grasps: Vec<Mat4>, gripper: &str, resolution: usize) -> PyResult<Vec<bool>> {
    let mesh = make_primitive(&primitive(shape, &dims)?, resolution).map_err(py_err)?;
    let model = match gripper {
        "parallel_jaw" => GripperModel::parallel_jaw(),
        "suction" => GripperModel::suction(),
        _ => return Err(PyValueError::new_err(format!("unknown gripper `{gripper}`"))),
    };
    let oracle = AnalyticOracle::new(model).map_err(py_err)?;
    Ok(label_all(&oracle, &mesh, &to_poses(&grasps)?).into_iter().map(|l| l.is_positive()).collect())
}

/// Hex digest naming the run directory of a config file, or of the
/// defaults when `path` is None.
#[pyfunction]
#[pyo3(signature = (path = None))]
fn config_hash(path: Option<&str>) -> PyResult<String> {
    let cfg = match path {
        Some(p) => PipelineConfig::load(Path::new(p)).map_err(py_err)?,
        None => PipelineConfig::default(),
    };
    Ok(cfg.hash_hex())
}

/// A trained generator checkpoint.
#[pyclass(name = "Generator", frozen)]
struct PyGenerator {
    inner: Generator,
}

#[pymethods]
impl PyGenerator {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyGenerator {
            inner: Generator::load(Path::new(path)).map_err(py_err)?,
        })
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa()
    }

    /// `b` grasps for an observed cloud, in the cloud's frame.
    #[pyo3(signature = (points, b, seed = 0))]
    fn sample(&self, points: Vec<[f64; 3]>, b: usize, seed: u64) -> PyResult<Vec<Mat4>> {
        let cloud = PointCloud::new(points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect()).map_err(py_err)?;
        let (grasps, _) = sample_grasps(&self.inner, &cloud, b, seed).map_err(py_err)?;
        Ok(grasps.iter().map(to_mat4).collect())
    }
}

#[pymodule]
fn graspgen_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(exp_so3, m)?)?;
    m.add_function(wrap_pyfunction!(log_so3, m)?)?;
    m.add_function(wrap_pyfunction!(pose_distance, m)?)?;
    m.add_function(wrap_pyfunction!(coverage, m)?)?;
    m.add_function(wrap_pyfunction!(pose_errors, m)?)?;
    m.add_function(wrap_pyfunction!(emd, m)?)?;
    m.add_function(wrap_pyfunction!(label_grasps, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_class::<PyGenerator>()?;
    Ok(())
}
