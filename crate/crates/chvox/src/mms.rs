//! Manufactured solution for convergence studies.
//!
//! The field c(x, t) = e^{-t} sin(2 pi x) sin(2 pi y) sin(2 pi z) is an
//! eigenfunction of the Laplacian, so the chemical potential collapses to
//! mu = c^3 + gamma c with gamma = 12 pi^2 kappa - 1 and every forcing term
//! needed to make the solver reproduce the field exactly has a closed form.
//! The boundary data are the naturally arising fluxes, fed into the solver
//! as boundary sources; the volume source closes the transport equation.
//! All derivatives are cross-checked against finite differences in tests.

use crate::basis::{l2_project, DGField, ReferenceBasis};
use crate::grid::VoxelGrid;
use crate::stepper::{SourceTerms, TimeFunction};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Closed-form reference solution and its forcing terms.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedSolution {
    /// Interface coefficient of the run being verified.
    pub kappa: f64,
    /// Mobility exponent switch of the run being verified.
    pub beta: f64,
    /// Peclet number of the run being verified.
    pub peclet: f64,
}

impl ManufacturedSolution {
    /// gamma = 12 pi^2 kappa - 1.
    fn gamma(&self) -> f64 {
        12.0 * std::f64::consts::PI * std::f64::consts::PI * self.kappa - 1.0
    }

    /// c(x, t).
    pub fn value(&self, x: [f64; 3], t: f64) -> f64 {
        (-t).exp() * (TWO_PI * x[0]).sin() * (TWO_PI * x[1]).sin() * (TWO_PI * x[2]).sin()
    }

    /// grad c.
    pub fn gradient(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        let e = (-t).exp();
        let (sx, cx) = (TWO_PI * x[0]).sin_cos();
        let (sy, cy) = (TWO_PI * x[1]).sin_cos();
        let (sz, cz) = (TWO_PI * x[2]).sin_cos();
        [
            e * TWO_PI * cx * sy * sz,
            e * TWO_PI * sx * cy * sz,
            e * TWO_PI * sx * sy * cz,
        ]
    }

    /// mu = Phi'(c) - kappa Laplacian(c) = c^3 + gamma c.
    pub fn chemical_potential(&self, x: [f64; 3], t: f64) -> f64 {
        let c = self.value(x, t);
        c * c * c + self.gamma() * c
    }

    /// grad mu = (3 c^2 + gamma) grad c.
    pub fn chemical_potential_gradient(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        let c = self.value(x, t);
        let g = self.gradient(x, t);
        let s = 3.0 * c * c + self.gamma();
        [s * g[0], s * g[1], s * g[2]]
    }

    /// Volume source closing the transport equation for zero velocity:
    /// f = dc/dt - (1/Pe) div(M(c) grad mu).
    pub fn transport_source(&self, x: [f64; 3], t: f64) -> f64 {
        let c = self.value(x, t);
        let g = self.gradient(x, t);
        let grad2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
        let gamma = self.gamma();
        let s = 3.0 * c * c + gamma;
        // Laplacian(mu) = s Laplacian(c) + 6 c |grad c|^2 with
        // Laplacian(c) = -12 pi^2 c.
        let lap_mu = s * (-3.0 * TWO_PI * TWO_PI * c) + 6.0 * c * grad2;
        let mobility = 1.0 - self.beta * c * c;
        // div(M grad mu) = M Laplacian(mu) + grad M . grad mu, and
        // grad M = -2 beta c grad c.
        let div_flux = mobility * lap_mu - 2.0 * self.beta * c * s * grad2;
        -c - div_flux / self.peclet
    }

    /// Boundary flux datum for the chemical potential equation: grad c . n.
    pub fn potential_flux(&self, x: [f64; 3], n: [f64; 3], t: f64) -> f64 {
        let g = self.gradient(x, t);
        g[0] * n[0] + g[1] * n[1] + g[2] * n[2]
    }

    /// Boundary flux datum for the transport equation: M(c) grad mu . n.
    pub fn transport_flux(&self, x: [f64; 3], n: [f64; 3], t: f64) -> f64 {
        let c = self.value(x, t);
        let g = self.chemical_potential_gradient(x, t);
        (1.0 - self.beta * c * c) * (g[0] * n[0] + g[1] * n[1] + g[2] * n[2])
    }

    /// Boxed source closures for the stepper.
    pub fn sources(&self) -> SourceTerms {
        let me = *self;
        SourceTerms {
            transport: Some(Box::new(move |x, t| me.transport_source(x, t))),
            potential: None,
            potential_flux: Some(Box::new(move |x, n, t| me.potential_flux(x, n, t))),
            transport_flux: Some(Box::new(move |x, n, t| me.transport_flux(x, n, t))),
        }
    }

    /// c(., t) as a time function (for inflow data when testing with
    /// velocity, and for error evaluation).
    pub fn value_fn(&self) -> TimeFunction {
        let me = *self;
        Box::new(move |x, t| me.value(x, t))
    }

    /// Projection of the initial state onto the discrete space.
    pub fn initial_field(&self, grid: &VoxelGrid, basis: &ReferenceBasis) -> DGField {
        l2_project(grid, basis, |x| self.value(x, 0.0))
    }
}
