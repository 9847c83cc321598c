//! Python bindings: `sscontrol.Model` wraps the boundary solver, value
//! function, Monte Carlo engine and the verification suite.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ssc_core::boundaries::{boundary_at, build_table};
use ssc_core::simulate::mc_cost;
use ssc_core::transform::obstacle_h;
use ssc_core::value::{hjb_check, minorant_q, value_w};
use ssc_core::verify::{self, VerifyGrid};
use ssc_core::{BoundaryPoint, BoundaryTable, McConfig, Policy};

/// `(name, passed, max_violation, tolerance)`
type CheckRow = (String, bool, Option<f64>, f64);

fn py_err(e: ssc_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn point_dict<'py>(py: Python<'py>, bp: &BoundaryPoint) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("c", bp.c)?;
    d.set_item("regime", bp.regime.as_str())?;
    d.set_item("gamma_hat", bp.gamma_hat)?;
    d.set_item("beta_hat", bp.beta_hat)?;
    d.set_item("y1", bp.y1)?;
    d.set_item("y2", bp.y2)?;
    Ok(d)
}

/// Quadratic cost family `Φ(c) = a(1-c) + (1-c)²` with discount rate `lam`.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    table: BoundaryTable,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (lam = 0.5, a = 0.4))]
    fn new(lam: f64, a: f64) -> PyResult<Self> {
        let model = ssc_core::Model::quadratic(lam, a).map_err(py_err)?;
        Ok(PyModel {
            table: BoundaryTable::on_demand(&model),
        })
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.table.model().lambda()
    }

    #[getter]
    fn a(&self) -> Option<f64> {
        self.table.model().a()
    }

    #[getter]
    fn c_hat(&self) -> f64 {
        self.table.model().c_hat()
    }

    #[getter]
    fn c_o(&self) -> f64 {
        self.table.model().c_o()
    }

    #[getter]
    fn r_hat(&self) -> f64 {
        self.table.model().r_hat()
    }

    #[getter]
    fn gamma_o(&self) -> f64 {
        self.table.model().gamma_o()
    }

    /// Boundaries at one inventory level, as a dict.
    fn boundary<'py>(&self, py: Python<'py>, c: f64) -> PyResult<Bound<'py, PyDict>> {
        let bp = boundary_at(self.table.model(), c).map_err(py_err)?;
        point_dict(py, &bp)
    }

    /// One dict per entry of the sorted `c_grid`.
    fn boundaries<'py>(
        &self,
        py: Python<'py>,
        c_grid: Vec<f64>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let table = py
            .detach(|| build_table(self.table.model(), &c_grid))
            .map_err(py_err)?;
        table.rows().iter().map(|bp| point_dict(py, bp)).collect()
    }

    fn value<'py>(&self, py: Python<'py>, x: f64, c: f64) -> PyResult<Bound<'py, PyDict>> {
        let p = value_w(&self.table, x, c).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("x", p.x)?;
        d.set_item("c", p.c)?;
        d.set_item("W", p.w)?;
        d.set_item("W_x", p.w_x)?;
        d.set_item("W_c", p.w_c)?;
        d.set_item("region", p.region.as_str())?;
        Ok(d)
    }

    /// `(pde_residual, gradient_slack)` of the variational inequality.
    fn hjb(&self, x: f64, c: f64) -> PyResult<(f64, f64)> {
        let r = hjb_check(&self.table, x, c).map_err(py_err)?;
        Ok((r.pde_residual, r.gradient_slack))
    }

    fn obstacle(&self, y: f64, c: f64) -> PyResult<f64> {
        Ok(obstacle_h(self.table.model(), y, c).map_err(py_err)?.h)
    }

    fn minorant(&self, y: f64, c: f64) -> PyResult<f64> {
        minorant_q(&self.table, y, c).map_err(py_err)
    }

    /// Monte Carlo cost of `policy` from `(x, c)`.
    #[pyo3(signature = (x, c, policy = "optimal", n_paths = 20000, dt = 1e-3, horizon = 30.0, seed = 7, bridge = true))]
    #[allow(clippy::too_many_arguments)]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        x: f64,
        c: f64,
        policy: &str,
        n_paths: usize,
        dt: f64,
        horizon: f64,
        seed: u64,
        bridge: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let policy: Policy = policy.parse().map_err(py_err)?;
        let cfg = McConfig::new(self.table.model(), n_paths, dt, horizon, seed, bridge)
            .map_err(py_err)?;
        let est = py
            .detach(|| mc_cost(&self.table, x, c, policy, &cfg))
            .map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("policy", policy.to_string())?;
        d.set_item("mean", est.mean)?;
        d.set_item("std_error", est.std_error)?;
        d.set_item("n_paths", est.n_paths)?;
        d.set_item("truncated_paths", est.truncated_paths)?;
        d.set_item("bias_budget", est.bias_budget)?;
        Ok(d)
    }

    /// `(ok, checks)`, one row per check.
    fn verify(&self, py: Python<'_>) -> PyResult<(bool, Vec<CheckRow>)> {
        let report = py
            .detach(|| verify::run(self.table.model(), &VerifyGrid::default()))
            .map_err(py_err)?;
        let checks = report
            .checks
            .iter()
            .map(|c| {
                (
                    c.name.to_string(),
                    c.status == verify::Status::Pass,
                    c.max_violation,
                    c.tolerance,
                )
            })
            .collect();
        Ok((report.ok(), checks))
    }

    fn __repr__(&self) -> String {
        let m = self.table.model();
        format!(
            "Model(lam={:?}, a={:?})",
            m.lambda(),
            m.a().unwrap_or(f64::NAN)
        )
    }
}

#[pymodule]
fn sscontrol(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    Ok(())
}
