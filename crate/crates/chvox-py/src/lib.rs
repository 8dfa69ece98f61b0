//! Python bindings: a stateful `Solver` class wrapping grid, parameters and
//! the current order-parameter field, plus helpers for initial data and the
//! synthetic channel mask. Built as the extension module `chvox_py`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use chvox::basis::project_element_constants;
use chvox::diagnostics::{discrete_energy, total_mass};
use chvox::grid::{build_grid, ExteriorSpec};
use chvox::scenarios::{spinodal_initial_values, synthetic_channel_mask};
use chvox::stepper::{SolverParams, Stepper};
use chvox::{DGField, Error, VelocityField};

/// Map solver errors onto Python exception types: bad input or domain
/// contract violations become ValueError, numerical failures RuntimeError.
fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::EmptyDomain => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Implicit phase-field stepper on a voxel subdomain of the unit cube.
#[pyclass(unsendable)]
struct Solver {
    stepper: Stepper,
    field: DGField,
    time: f64,
}

#[pymethods]
impl Solver {
    /// Build a solver for an n^3 voxel grid. `mask` selects the active
    /// voxels (flat x-fastest order, defaults to the full cube); `open_x`
    /// switches the two x-faces of the cube from walls to inflow/outflow;
    /// `velocity` is a constant drift, defaulting to rest; `kappa` defaults
    /// to the squared voxel spacing.
    #[new]
    #[pyo3(signature = (n, p=0, beta=0.0, kappa=None, peclet=1.0, sigma=None,
                        open_x=false, velocity=None, mask=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n: usize,
        p: usize,
        beta: f64,
        kappa: Option<f64>,
        peclet: f64,
        sigma: Option<f64>,
        open_x: bool,
        velocity: Option<(f64, f64, f64)>,
        mask: Option<Vec<bool>>,
    ) -> PyResult<Self> {
        let mask = mask.unwrap_or_else(|| vec![true; n * n * n]);
        let exterior = if open_x { ExteriorSpec::x_open() } else { ExteriorSpec::all_wall() };
        let grid = build_grid(n, &mask, &exterior).map_err(to_py_err)?;
        let kappa = kappa.unwrap_or(grid.h * grid.h);
        let mut params = SolverParams::for_degree(p, beta, kappa, peclet);
        if let Some(s) = sigma {
            params.sigma = s;
        }
        let velocity = match velocity {
            Some((vx, vy, vz)) => VelocityField::Constant([vx, vy, vz]),
            None => VelocityField::Zero,
        };
        let stepper = Stepper::new(grid, p, params, velocity);
        let field = DGField::zeros(stepper.grid().n_elements(), stepper.basis().n_loc);
        Ok(Self { stepper, field, time: 0.0 })
    }

    /// Set the field to prescribed per-element constants (active elements
    /// only, in grid order) and reset the clock.
    fn set_means(&mut self, values: Vec<f64>) -> PyResult<()> {
        if values.len() != self.stepper.grid().n_elements() {
            return Err(PyValueError::new_err(format!(
                "expected {} element values, got {}",
                self.stepper.grid().n_elements(),
                values.len()
            )));
        }
        self.field = project_element_constants(self.stepper.grid(), self.stepper.basis(), &values);
        self.time = 0.0;
        Ok(())
    }

    /// Set the field to a single constant everywhere and reset the clock.
    fn set_uniform(&mut self, value: f64) {
        let values = vec![value; self.stepper.grid().n_elements()];
        self.field = project_element_constants(self.stepper.grid(), self.stepper.basis(), &values);
        self.time = 0.0;
    }

    /// Seeded two-level perturbation around `mean`, the standard starting
    /// point for phase-separation runs.
    fn set_spinodal(&mut self, mean: f64, amplitude: f64, seed: u64) {
        let values =
            spinodal_initial_values(self.stepper.grid().n_elements(), mean, amplitude, seed);
        self.field = project_element_constants(self.stepper.grid(), self.stepper.basis(), &values);
        self.time = 0.0;
    }

    /// Advance one implicit step of size `tau`; returns a dict with the
    /// step's solver counters and the stationarity flag.
    fn advance<'py>(&mut self, py: Python<'py>, tau: f64) -> PyResult<Bound<'py, PyDict>> {
        let report = self.stepper.advance(&mut self.field, self.time, tau).map_err(to_py_err)?;
        self.time += tau;
        let out = PyDict::new(py);
        out.set_item("time", self.time)?;
        out.set_item("newton_iters", report.newton_iters)?;
        out.set_item("krylov_iters", report.krylov_iters_total)?;
        out.set_item("residual", report.final_residual)?;
        out.set_item("stationary", report.stationary)?;
        Ok(out)
    }

    /// Advance up to `steps` steps of size `tau`, stopping early once a
    /// step reports the state stationary. Returns the number taken.
    fn run(&mut self, steps: usize, tau: f64) -> PyResult<usize> {
        for taken in 0..steps {
            let report =
                self.stepper.advance(&mut self.field, self.time, tau).map_err(to_py_err)?;
            self.time += tau;
            if report.stationary {
                return Ok(taken + 1);
            }
        }
        Ok(steps)
    }

    /// Mean of the field over each active element, in grid order.
    fn element_means(&self) -> Vec<f64> {
        (0..self.field.n_el).map(|k| self.field.element_mean(k)).collect()
    }

    /// Domain average of the order parameter (conserved in closed boxes).
    fn mass(&self) -> f64 {
        total_mass(self.stepper.grid(), &self.field)
    }

    /// Discrete free energy split: (chemical, interface, total).
    fn energy(&self) -> (f64, f64, f64) {
        let params = self.stepper.params();
        let report = discrete_energy(
            self.stepper.grid(),
            self.stepper.basis(),
            &self.field,
            params.kappa,
            params.sigma,
            self.time,
        );
        (report.chemical, report.gradient, report.total)
    }

    /// Current simulation time.
    #[getter]
    fn time(&self) -> f64 {
        self.time
    }

    /// Number of active elements.
    #[getter]
    fn n_elements(&self) -> usize {
        self.stepper.grid().n_elements()
    }

    /// Voxel spacing.
    #[getter]
    fn h(&self) -> f64 {
        self.stepper.grid().h
    }

    fn __repr__(&self) -> String {
        format!(
            "Solver(n_elements={}, h={:.6}, t={:.6})",
            self.stepper.grid().n_elements(),
            self.stepper.grid().h,
            self.time
        )
    }
}

/// Seeded two-level initial data helper, exposed for scripting.
#[pyfunction]
#[pyo3(name = "spinodal_values")]
fn spinodal_values_py(count: usize, mean: f64, amplitude: f64, seed: u64) -> Vec<f64> {
    spinodal_initial_values(count, mean, amplitude, seed)
}

/// Flat boolean mask of the bundled synthetic channel geometry.
#[pyfunction]
#[pyo3(name = "synthetic_channel_mask")]
fn synthetic_channel_mask_py(n: usize) -> Vec<bool> {
    synthetic_channel_mask(n)
}

/// Module initializer.
#[pymodule]
fn chvox_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Solver>()?;
    m.add_function(wrap_pyfunction!(spinodal_values_py, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_channel_mask_py, m)?)?;
    Ok(())
}
