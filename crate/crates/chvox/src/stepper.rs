//! One implicit time step of the coupled phase-field transport system.
//!
//! Each step assembles the two coupled equations in their modal matrix form,
//! eliminates the chemical potential unknowns element-by-element through the
//! diagonal mass matrix, and hands the resulting nonlinear system in the
//! order parameter alone to a damped Newton iteration with matrix-free
//! GMRES inner solves. The elimination is exact, so the reduced solution
//! reproduces the full block system to solver tolerance; a test below checks
//! that against a dense two-field Newton oracle.
//!
//! Scalings follow the reduced residual
//!   R(Y) = alpha Y + (h^3 Pe / 8) A_adv Y
//!        + A_M (kappa (A + B) Y + E(Y)) + C,
//! with alpha = h^6 Pe / (64 tau), E the convex potential moments, A_M the
//! mobility-weighted interface form, and C collecting both right-hand sides.

use std::cell::RefCell;

use crate::basis::{DGField, ReferenceBasis, PHI0};
use crate::fastdiag::FastDiag;
use crate::grid::VoxelGrid;
use crate::krylov::{gmres, BlockJacobi, GmresConfig, IdentityPrecond, LinOp};
use crate::newton::{newton_solve, NewtonParams, NonlinearSystem};
use crate::operators::{
    assemble_advection, assemble_diffusion, assemble_inflow_dirichlet, assemble_weighted_mass,
    boundary_source, convex_potential_vector, default_penalty, volume_source, Advection,
    BlockDiagonal, BlockSparseOperator, DiffusionWeight, InflowDirichlet,
};
use crate::phi::mobility_clamped;
use crate::velocity::VelocityField;
use crate::{Error, Result};

/// Mesh-scaled norm of a modal coefficient vector; with the orthonormal
/// reference basis this is equivalent (up to a fixed constant) to the
/// broken L2 norm of the represented function.
pub fn l2h_norm(h: f64, v: &[f64]) -> f64 {
    let s: f64 = v.iter().map(|a| a * a).sum();
    h.powf(1.5) * s.sqrt()
}

/// Preconditioner applied (from the right) inside the inner GMRES solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    /// No preconditioning.
    None,
    /// Exact inverses of the element-diagonal blocks of the linear part.
    BlockJacobi,
    /// Tensor fast-diagonalization of the constant-coefficient model.
    FastDiag,
}

impl Preconditioner {
    /// Config-file spelling.
    pub fn name(self) -> &'static str {
        match self {
            Preconditioner::None => "none",
            Preconditioner::BlockJacobi => "block_jacobi",
            Preconditioner::FastDiag => "fast_diag",
        }
    }
}

impl std::str::FromStr for Preconditioner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Preconditioner::None),
            "block_jacobi" => Ok(Preconditioner::BlockJacobi),
            "fast_diag" => Ok(Preconditioner::FastDiag),
            other => Err(Error::Config(format!("unknown preconditioner '{other}'"))),
        }
    }
}

impl std::fmt::Display for Preconditioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Physical and solver parameters shared by every step.
#[derive(Debug, Clone)]
pub struct SolverParams {
    /// Degenerate-mobility switch: M(c) = 1 - beta c^2.
    pub beta: f64,
    /// Interface energy coefficient.
    pub kappa: f64,
    /// Peclet number scaling the transport terms.
    pub peclet: f64,
    /// Interior penalty parameter.
    pub sigma: f64,
    /// Outer nonlinear iteration controls.
    pub newton: NewtonParams,
    /// Inner linear solver controls.
    pub gmres: GmresConfig,
    /// Inner solver preconditioner.
    pub precond: Preconditioner,
}

impl SolverParams {
    /// Defaults for degree `p`: penalty 2^p, fast-diagonalization
    /// preconditioning, standard Newton and GMRES tolerances.
    pub fn for_degree(p: usize, beta: f64, kappa: f64, peclet: f64) -> Self {
        Self {
            beta,
            kappa,
            peclet,
            sigma: default_penalty(p),
            newton: NewtonParams::default(),
            gmres: GmresConfig::default(),
            precond: Preconditioner::FastDiag,
        }
    }
}

/// Scalar field of space and time.
pub type TimeFunction = Box<dyn Fn([f64; 3], f64) -> f64>;
/// Boundary flux datum g(x, n, t) with n the outward unit normal.
pub type BoundaryFluxFn = Box<dyn Fn([f64; 3], [f64; 3], f64) -> f64>;

/// Optional manufactured right-hand sides, all evaluated at the new time
/// level. Every field defaults to absent.
#[derive(Default)]
pub struct SourceTerms {
    /// Volume source in the transport equation.
    pub transport: Option<TimeFunction>,
    /// Volume source added to the definition of the chemical potential,
    /// mu = Phi'(c) - kappa lap c + s. Lets verification runs prescribe the
    /// pair (c, mu) independently.
    pub potential: Option<TimeFunction>,
    /// Boundary flux datum added to the chemical potential equation.
    pub potential_flux: Option<BoundaryFluxFn>,
    /// Boundary flux datum added to the transport equation.
    pub transport_flux: Option<BoundaryFluxFn>,
}

/// Per-step solver summary.
#[derive(Debug, Clone)]
pub struct StepReport {
    /// Newton iterations performed (0 when the step was stationary).
    pub newton_iters: usize,
    /// Inner GMRES iterations summed over all Newton iterations.
    pub krylov_iters_total: usize,
    /// Scaled residual norm at the previous solution.
    pub initial_residual: f64,
    /// Scaled residual norm at the accepted solution.
    pub final_residual: f64,
    /// Whether the previous solution already satisfied the absolute
    /// tolerance (or sat at the roundoff floor), in which case it was kept
    /// unchanged.
    pub stationary: bool,
}

/// Time stepping driver: owns the grid, the basis, the cached unit-weight
/// interface form, and the lazily built preconditioner.
pub struct Stepper {
    grid: VoxelGrid,
    basis: ReferenceBasis,
    params: SolverParams,
    velocity: VelocityField,
    inflow_value: Option<TimeFunction>,
    sources: SourceTerms,
    a_diff: BlockSparseOperator,
    fast_diag: Option<FastDiag>,
}

impl Stepper {
    /// Build a stepper for degree `p` on `grid`.
    pub fn new(grid: VoxelGrid, p: usize, params: SolverParams, velocity: VelocityField) -> Self {
        let basis = ReferenceBasis::new(p);
        let a_diff = assemble_diffusion(&DiffusionWeight::Unit, &grid, &basis, params.sigma);
        Self {
            grid,
            basis,
            params,
            velocity,
            inflow_value: None,
            sources: SourceTerms::default(),
            a_diff,
            fast_diag: None,
        }
    }

    /// Underlying grid.
    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    /// Reference basis.
    pub fn basis(&self) -> &ReferenceBasis {
        &self.basis
    }

    /// Solver parameters.
    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    /// Velocity field.
    pub fn velocity(&self) -> &VelocityField {
        &self.velocity
    }

    /// Set the Dirichlet datum imposed on inflow boundary faces.
    pub fn set_inflow_value(&mut self, f: TimeFunction) {
        self.inflow_value = Some(f);
    }

    /// Set manufactured source terms.
    pub fn set_sources(&mut self, sources: SourceTerms) {
        self.sources = sources;
    }

    /// Assemble the reduced nonlinear system for one step from `x_prev` at
    /// time `t_prev` over step size `tau`.
    ///
    /// Fails with [`Error::FrozenState`] when the piecewise-constant
    /// discretization has degenerate mobility everywhere: at p = 0 the
    /// clamped mobility is sampled from element means alone, so a fully
    /// saturated state can never evolve again and continuing would silently
    /// integrate a vanished equation.
    pub fn build_step_system(
        &mut self,
        x_prev: &[f64],
        t_prev: f64,
        tau: f64,
    ) -> Result<StepSystem<'_>> {
        assert!(tau > 0.0, "step size must be positive");
        let nl = self.basis.n_loc;
        let n = self.grid.n_elements() * nl;
        if x_prev.len() != n {
            return Err(Error::Contract(format!(
                "state has {} coefficients, expected {n}",
                x_prev.len()
            )));
        }
        let t_new = t_prev + tau;
        let h = self.grid.h;
        let beta = self.params.beta;
        let kappa = self.params.kappa;
        let pe = self.params.peclet;
        let sigma = self.params.sigma;

        let means: Vec<f64> = (0..self.grid.n_elements()).map(|k| x_prev[k * nl] * PHI0).collect();
        if self.basis.p == 0 && means.iter().all(|&m| mobility_clamped(beta, m) == 0.0) {
            return Err(Error::FrozenState);
        }
        let mean_mobility =
            means.iter().map(|&m| mobility_clamped(beta, m)).sum::<f64>() / means.len() as f64;

        let prev_field = DGField { n_el: self.grid.n_elements(), n_loc: nl, coeffs: x_prev.to_vec() };
        let a_mob = if beta == 0.0 {
            None
        } else {
            let weight = DiffusionWeight::ClampedMobility { beta, c_prev: &prev_field };
            Some(assemble_diffusion(&weight, &self.grid, &self.basis, sigma))
        };

        let inflow_value = self.inflow_value.as_ref();
        let c_in = move |x: [f64; 3]| inflow_value.map_or(0.0, |f| f(x, t_new));
        let (b_diff, advection) = if self.velocity.is_zero() {
            (None, None)
        } else {
            (
                Some(assemble_inflow_dirichlet(
                    &self.grid,
                    &self.basis,
                    sigma,
                    t_new,
                    &self.velocity,
                    &c_in,
                )),
                Some(assemble_advection(&self.grid, &self.basis, &self.velocity, t_new, &c_in)),
            )
        };

        let vol_mass = h * h * h / 8.0;
        let mut f_c: Vec<f64> = x_prev.iter().map(|&v| vol_mass * v).collect();
        if let Some(b) = &b_diff {
            for (fc, d) in f_c.iter_mut().zip(&b.data) {
                *fc += kappa * d;
            }
        }
        if let Some(g) = &self.sources.potential_flux {
            let gc = boundary_source(&self.grid, &self.basis, &|x, nrm| g(x, nrm, t_new));
            for (fc, v) in f_c.iter_mut().zip(&gc) {
                *fc += kappa * v;
            }
        }
        if let Some(s) = &self.sources.potential {
            let gs = volume_source(&self.grid, &self.basis, &|x| s(x, t_new));
            for (fc, v) in f_c.iter_mut().zip(&gs) {
                *fc -= v;
            }
        }

        let mut f_mu: Vec<f64> = x_prev.iter().map(|&v| vol_mass * v).collect();
        if let Some(adv) = &advection {
            for (fm, v) in f_mu.iter_mut().zip(&adv.inflow) {
                *fm += tau * v;
            }
        }
        if let Some(f) = &self.sources.transport {
            let gf = volume_source(&self.grid, &self.basis, &|x| f(x, t_new));
            for (fm, v) in f_mu.iter_mut().zip(&gf) {
                *fm += tau * v;
            }
        }
        if let Some(g) = &self.sources.transport_flux {
            let gm = boundary_source(&self.grid, &self.basis, &|x, nrm| g(x, nrm, t_new));
            for (fm, v) in f_mu.iter_mut().zip(&gm) {
                *fm += (tau / pe) * v;
            }
        }

        let mu_scale = h * h * h * pe / (8.0 * tau);
        let alpha = mu_scale * vol_mass;
        let adv_scale = h * h * h * pe / 8.0;

        let a_m = a_mob.as_ref().unwrap_or(&self.a_diff);
        let mut constant = vec![0.0; n];
        a_m.apply(&f_c, &mut constant);
        for i in 0..n {
            constant[i] = -constant[i] - mu_scale * f_mu[i];
        }

        let block_jacobi = if self.params.precond == Preconditioner::BlockJacobi {
            let diag = linear_diagonal(
                alpha,
                kappa,
                adv_scale,
                a_m,
                &self.a_diff,
                b_diff.as_ref().map(|b| &b.op),
                advection.as_ref().map(|a| &a.op),
            );
            Some(BlockJacobi::new(&diag)?)
        } else {
            None
        };

        if self.params.precond == Preconditioner::FastDiag {
            if self.fast_diag.is_none() {
                self.fast_diag = Some(FastDiag::new(&self.grid, &self.basis, sigma));
            }
            let fd = self.fast_diag.as_mut().expect("just built");
            fd.set_coefficients(alpha, kappa * mean_mobility);
        }

        let precond = match self.params.precond {
            Preconditioner::None => PrecondOp::Identity(IdentityPrecond { n }),
            Preconditioner::BlockJacobi => PrecondOp::BlockJacobi(block_jacobi.expect("built")),
            Preconditioner::FastDiag => {
                PrecondOp::FastDiag(self.fast_diag.as_ref().expect("built"))
            }
        };

        Ok(StepSystem {
            grid: &self.grid,
            basis: &self.basis,
            a_diff: &self.a_diff,
            a_mob,
            b_diff,
            advection,
            x_prev: x_prev.to_vec(),
            f_c,
            f_mu,
            constant,
            alpha,
            adv_scale,
            mu_scale,
            kappa,
            tau,
            t_new,
            mean_mobility,
            newton: self.params.newton.clone(),
            gmres: self.params.gmres.clone(),
            precond,
            scratch: RefCell::new((vec![0.0; n], vec![0.0; n])),
        })
    }

    /// Advance `field` in place from `t_prev` by `tau`.
    pub fn advance(&mut self, field: &mut DGField, t_prev: f64, tau: f64) -> Result<StepReport> {
        if field.n_loc != self.basis.n_loc || field.n_el != self.grid.n_elements() {
            return Err(Error::Contract(format!(
                "field shape {}x{} does not match grid {}x{}",
                field.n_el,
                field.n_loc,
                self.grid.n_elements(),
                self.basis.n_loc
            )));
        }
        let system = self.build_step_system(&field.coeffs, t_prev, tau)?;
        let (x, report) = system.solve()?;
        field.coeffs = x;
        Ok(report)
    }
}

enum PrecondOp<'a> {
    Identity(IdentityPrecond),
    BlockJacobi(BlockJacobi),
    FastDiag(&'a FastDiag),
}

impl PrecondOp<'_> {
    fn as_linop(&self) -> &dyn LinOp {
        match self {
            PrecondOp::Identity(p) => p,
            PrecondOp::BlockJacobi(p) => p,
            PrecondOp::FastDiag(p) => *p,
        }
    }
}

/// The assembled step: operators, right-hand sides, and solver settings for
/// one time level. Produced by [`Stepper::build_step_system`].
pub struct StepSystem<'a> {
    grid: &'a VoxelGrid,
    basis: &'a ReferenceBasis,
    a_diff: &'a BlockSparseOperator,
    a_mob: Option<BlockSparseOperator>,
    b_diff: Option<InflowDirichlet>,
    advection: Option<Advection>,
    x_prev: Vec<f64>,
    /// Potential-row right-hand side (previous mass plus boundary data).
    pub f_c: Vec<f64>,
    /// Transport-row right-hand side (previous mass, advective inflow,
    /// volume and boundary source data).
    pub f_mu: Vec<f64>,
    constant: Vec<f64>,
    alpha: f64,
    adv_scale: f64,
    /// Factor h^3 Pe / (8 tau) converting transport-row equations into the
    /// reduced residual's units.
    pub mu_scale: f64,
    kappa: f64,
    tau: f64,
    t_new: f64,
    mean_mobility: f64,
    newton: NewtonParams,
    gmres: GmresConfig,
    precond: PrecondOp<'a>,
    scratch: RefCell<(Vec<f64>, Vec<f64>)>,
}

impl StepSystem<'_> {
    /// Time level being solved for.
    pub fn time(&self) -> f64 {
        self.t_new
    }

    /// Step size.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Mean clamped mobility over elements (1 for constant mobility).
    pub fn mean_mobility(&self) -> f64 {
        self.mean_mobility
    }

    fn a_m(&self) -> &BlockSparseOperator {
        self.a_mob.as_ref().unwrap_or(self.a_diff)
    }

    /// out = kappa (A + B) x + E(x).
    fn potential_row(&self, x: &[f64], out: &mut [f64]) {
        self.a_diff.apply(x, out);
        if let Some(b) = &self.b_diff {
            b.op.apply_add(x, out);
        }
        let e = convex_potential_vector(self.grid, self.basis, x);
        for i in 0..out.len() {
            out[i] = self.kappa * out[i] + e[i];
        }
    }

    /// Recover the chemical potential coefficients from an order parameter
    /// state by inverting the diagonal mass matrix in the potential row.
    pub fn recover_mu(&self, x_c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x_c.len()];
        self.potential_row(x_c, &mut out);
        let h = self.grid.h;
        let inv_mass = 8.0 / (h * h * h);
        for (o, fc) in out.iter_mut().zip(&self.f_c) {
            *o = inv_mass * (*o - fc);
        }
        out
    }

    /// Scaled residual norm at `y`.
    pub fn residual_norm(&self, y: &[f64]) -> f64 {
        let mut r = vec![0.0; y.len()];
        self.residual(y, &mut r);
        l2h_norm(self.grid.h, &r)
    }

    /// Matrix-free Jacobian of the reduced residual at `y` applied to `x`,
    /// exactly as the inner linear solves see it.
    pub fn jacobian_apply(&self, y: &[f64], x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let jac = JacobianOp {
            sys: self,
            convex_mass: assemble_weighted_mass(self.grid, self.basis, y),
            scratch: RefCell::new((vec![0.0; n], vec![0.0; n])),
        };
        let mut out = vec![0.0; n];
        jac.apply(x, &mut out);
        out
    }

    /// Solve the step: stationary short-circuit, then damped Newton.
    pub fn solve(&self) -> Result<(Vec<f64>, StepReport)> {
        let mut r0 = vec![0.0; self.x_prev.len()];
        self.residual(&self.x_prev, &mut r0);
        let n0 = l2h_norm(self.grid.h, &r0);
        if n0 <= self.newton.tol_abs.max(self.newton.stall_floor) {
            return Ok((
                self.x_prev.clone(),
                StepReport {
                    newton_iters: 0,
                    krylov_iters_total: 0,
                    initial_residual: n0,
                    final_residual: n0,
                    stationary: true,
                },
            ));
        }
        let out = newton_solve(self, &self.x_prev, &self.newton)?;
        Ok((
            out.y,
            StepReport {
                newton_iters: out.iterations,
                krylov_iters_total: out.krylov_total,
                initial_residual: out.initial_residual,
                final_residual: out.final_residual,
                stationary: false,
            },
        ))
    }
}

impl NonlinearSystem for StepSystem<'_> {
    fn dim(&self) -> usize {
        self.x_prev.len()
    }

    fn residual(&self, y: &[f64], out: &mut [f64]) {
        let (t1, t2) = &mut *self.scratch.borrow_mut();
        self.potential_row(y, t1);
        self.a_m().apply(t1, t2);
        for i in 0..out.len() {
            out[i] = self.alpha * y[i] + t2[i] + self.constant[i];
        }
        if let Some(adv) = &self.advection {
            adv.op.apply_scaled_add(y, out, self.adv_scale);
        }
    }

    fn solve_jacobian(&self, y: &[f64], rhs: &[f64]) -> Result<(Vec<f64>, usize)> {
        let n = rhs.len();
        let jac = JacobianOp {
            sys: self,
            convex_mass: assemble_weighted_mass(self.grid, self.basis, y),
            scratch: RefCell::new((vec![0.0; n], vec![0.0; n])),
        };
        let zero = vec![0.0; n];
        let result = gmres(&jac, self.precond.as_linop(), rhs, &zero, &self.gmres);
        if !result.converged {
            return Err(Error::KrylovFailure(format!(
                "GMRES stalled at residual {:e} after {} iterations",
                result.residual, result.iterations
            )));
        }
        Ok((result.x, result.iterations))
    }

    fn norm(&self, v: &[f64]) -> f64 {
        l2h_norm(self.grid.h, v)
    }
}

/// Matrix-free Newton Jacobian: the linear part plus the mobility-weighted
/// image of the convex potential's second derivative at the current iterate.
struct JacobianOp<'s, 'a> {
    sys: &'s StepSystem<'a>,
    convex_mass: BlockDiagonal,
    scratch: RefCell<(Vec<f64>, Vec<f64>)>,
}

impl LinOp for JacobianOp<'_, '_> {
    fn dim(&self) -> usize {
        self.sys.x_prev.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let sys = self.sys;
        let (t1, t2) = &mut *self.scratch.borrow_mut();
        sys.a_diff.apply(x, t1);
        if let Some(b) = &sys.b_diff {
            b.op.apply_add(x, t1);
        }
        for v in t1.iter_mut() {
            *v *= sys.kappa;
        }
        self.convex_mass.apply_scaled_add(x, t1, 1.0);
        sys.a_m().apply(t1, t2);
        for i in 0..y.len() {
            y[i] = sys.alpha * x[i] + t2[i];
        }
        if let Some(adv) = &sys.advection {
            adv.op.apply_scaled_add(x, y, sys.adv_scale);
        }
    }
}

/// Element-diagonal blocks of the linear part of the reduced operator:
/// alpha I + adv_scale A_adv[k,k] + kappa sum_m A_M[k,m] (A + B)[m,k].
fn linear_diagonal(
    alpha: f64,
    kappa: f64,
    adv_scale: f64,
    a_m: &BlockSparseOperator,
    a: &BlockSparseOperator,
    b: Option<&BlockSparseOperator>,
    adv: Option<&BlockSparseOperator>,
) -> BlockDiagonal {
    let nl = a_m.n_loc;
    let n_el = a_m.n_el;
    let mut diag = BlockDiagonal::zeros(n_el, nl);
    for k in 0..n_el {
        let blk = &mut diag.blocks[k * nl * nl..(k + 1) * nl * nl];
        for i in 0..nl {
            blk[i * nl + i] = alpha;
        }
        if let Some(adv) = adv {
            for (dst, src) in blk.iter_mut().zip(adv.diag_block(k)) {
                *dst += adv_scale * src;
            }
        }
        let (cols, blocks) = a_m.row(k);
        for (pos, &col) in cols.iter().enumerate() {
            let m = col as usize;
            let am_blk = &blocks[pos * nl * nl..(pos + 1) * nl * nl];
            let slot = a.block_slot(m, k).expect("symmetric sparsity");
            matmul_add(blk, am_blk, a.block(slot), kappa, nl);
            if m == k {
                if let Some(bop) = b {
                    matmul_add(blk, am_blk, bop.diag_block(k), kappa, nl);
                }
            }
        }
    }
    diag
}

/// c += s * a * b for row-major nl x nl blocks.
fn matmul_add(c: &mut [f64], a: &[f64], b: &[f64], s: f64, nl: usize) {
    for i in 0..nl {
        for l in 0..nl {
            let ail = s * a[i * nl + l];
            if ail == 0.0 {
                continue;
            }
            for j in 0..nl {
                c[i * nl + j] += ail * b[l * nl + j];
            }
        }
    }
}
