//! End-to-end acceptance gate: eleven checks covering convergence orders,
//! exact reproduction of polynomial states, structure preservation (mass,
//! energy, frozen states), equivalence of the reduced solver with direct
//! block and finite-volume formulations, Jacobian correctness, and the
//! bundled scenario metrics. Each test prints a single `acceptance NN
//! <name>: PASS|FAIL` line so the whole gate can be read at a glance from
//! `cargo test --test acceptance -- --nocapture`.

use chvox::basis::{l2_project, project_element_constants, DGField};
use chvox::config::{Scenario, ScenarioConfig, TauSegment};
use chvox::diagnostics::error_norms;
use chvox::grid::{build_grid, ExteriorSpec};
use chvox::newton::{newton_solve, NonlinearSystem};
use chvox::operators::{
    assemble_advection, assemble_diffusion, assemble_inflow_dirichlet, assemble_weighted_mass,
    convex_potential_vector, DiffusionWeight,
};
use chvox::rng::SplitMix64;
use chvox::scenarios::{
    run_breakthrough, run_convergence, run_droplet, run_spinodal, spinodal_initial_values,
    ConvergenceRow,
};
use chvox::stepper::{SolverParams, SourceTerms, Stepper};
use chvox::velocity::VelocityField;
use chvox::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Print the per-criterion verdict line and fail the test on a miss.
fn gate(num: u32, name: &str, outcome: Result<(bool, String)>) {
    match outcome {
        Ok((true, detail)) => println!("acceptance {num:02} {name}: PASS ({detail})"),
        Ok((false, detail)) => {
            println!("acceptance {num:02} {name}: FAIL ({detail})");
            panic!("acceptance {num:02} {name} failed: {detail}");
        }
        Err(e) => {
            println!("acceptance {num:02} {name}: FAIL (run error: {e})");
            panic!("acceptance {num:02} {name} errored: {e}");
        }
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

// ---------------------------------------------------------------------------
// 1. Convergence orders and error magnitudes of the manufactured-solution
//    refinement study.
// ---------------------------------------------------------------------------

/// Reference (level, L2, broken-H1) error magnitudes for the refinement
/// study at levels 2 and finer, per (degree, mobility switch). A correct
/// implementation is expected to land within a factor of two of these; the
/// exact digits depend on quadrature details of the data terms, so closer
/// agreement is not demanded.
fn reference_errors(p: usize, beta_one: bool) -> &'static [(u32, f64, f64)] {
    match (p, beta_one) {
        (0, false) => &[
            (2, 1.339e-1, 1.415),
            (3, 5.494e-2, 1.415),
            (4, 2.603e-2, 1.415),
            (5, 1.284e-2, 1.415),
        ],
        (0, true) => &[
            (2, 1.591e-1, 1.415),
            (3, 5.745e-2, 1.415),
            (4, 2.640e-2, 1.415),
            (5, 1.291e-2, 1.415),
        ],
        (1, false) => &[
            (2, 8.244e-2, 1.083),
            (3, 3.181e-2, 6.065e-1),
            (4, 9.542e-3, 2.981e-1),
            (5, 2.545e-3, 1.432e-1),
        ],
        (1, true) => &[
            (2, 9.045e-2, 1.104),
            (3, 3.327e-2, 6.106e-1),
            (4, 1.003e-2, 2.994e-1),
            (5, 2.684e-3, 1.434e-1),
        ],
        (2, false) => &[(2, 2.328e-2, 4.910e-1), (3, 2.979e-3, 1.366e-1), (4, 3.222e-4, 3.472e-2)],
        (2, true) => &[(2, 2.349e-2, 4.913e-1), (3, 2.983e-3, 1.366e-1), (4, 3.159e-4, 3.475e-2)],
        _ => unreachable!("degrees 0..=2 only"),
    }
}

fn within_factor_two(value: f64, reference: f64) -> bool {
    value >= 0.5 * reference && value <= 2.0 * reference
}

fn convergence_rows(p: usize, beta: f64) -> Result<Vec<ConvergenceRow>> {
    let mut cfg = ScenarioConfig::defaults_for(Scenario::Convergence);
    cfg.p = p;
    cfg.beta = beta;
    cfg.levels = if p <= 1 { 5 } else { 4 };
    run_convergence(&cfg)
}

#[test]
fn t01_convergence_orders() {
    gate(1, "convergence_orders", (|| {
        let mut ok = true;
        let mut detail = String::new();
        for p in 0..=2usize {
            for beta in [0.0, 1.0] {
                let rows = convergence_rows(p, beta)?;
                let last = rows.last().expect("at least one level");
                let l2_order = last.l2_order.unwrap_or(f64::NAN);
                let (order_ok, h1_ok) = match p {
                    0 => {
                        let h1 = last.h1.unwrap_or(f64::NAN);
                        ((0.9..=1.2).contains(&l2_order), (h1 - 1.415).abs() <= 0.01)
                    }
                    1 => {
                        let h1o = last.h1_order.unwrap_or(f64::NAN);
                        ((1.65..=2.1).contains(&l2_order), (0.85..=1.2).contains(&h1o))
                    }
                    _ => {
                        let h1o = last.h1_order.unwrap_or(f64::NAN);
                        ((2.7..=3.5).contains(&l2_order), (1.7..=2.2).contains(&h1o))
                    }
                };
                let mut magnitudes_ok = true;
                for &(level, ref_l2, ref_h1) in reference_errors(p, beta == 1.0) {
                    let row = &rows[level as usize];
                    let l2 = row.l2.unwrap_or(f64::NAN);
                    let h1 = row.h1.unwrap_or(f64::NAN);
                    if !within_factor_two(l2, ref_l2) || !within_factor_two(h1, ref_h1) {
                        magnitudes_ok = false;
                        detail.push_str(&format!(
                            "p{p} b{beta} level {level} off reference ({l2:.3e} vs {ref_l2:.3e}, \
                             {h1:.3e} vs {ref_h1:.3e}); "
                        ));
                    }
                }
                ok &= order_ok && h1_ok && magnitudes_ok;
                detail.push_str(&format!("p{p} b{beta}: order {l2_order:.3}; "));
            }
        }
        Ok((ok, detail.trim_end_matches("; ").to_string()))
    })());
}

// ---------------------------------------------------------------------------
// 2. Exact reproduction of prescribed polynomial states.
// ---------------------------------------------------------------------------

type Scalar = fn([f64; 3]) -> f64;
type Vector = fn([f64; 3]) -> [f64; 3];

/// A stationary pair (c, mu) of total degree <= p together with gradients
/// and (constant) Laplacians, used to manufacture data for which the
/// discrete step has the pair as an exact fixed point.
fn polynomial_pair(p: usize) -> (Scalar, Vector, f64, Scalar, Vector, f64) {
    match p {
        0 => (
            |_| 0.3,
            |_| [0.0; 3],
            0.0,
            |_| -0.2,
            |_| [0.0; 3],
            0.0,
        ),
        1 => (
            |x| 0.1 + 0.2 * x[0] - 0.15 * x[1] + 0.05 * x[2],
            |_| [0.2, -0.15, 0.05],
            0.0,
            |x| -0.05 + 0.1 * x[0] + 0.07 * x[1] - 0.12 * x[2],
            |_| [0.1, 0.07, -0.12],
            0.0,
        ),
        _ => (
            |x| {
                0.08 + 0.12 * x[0] - 0.1 * x[1] + 0.05 * x[2] + 0.1 * x[0] * x[1]
                    - 0.06 * x[2] * x[2]
                    + 0.04 * x[0] * x[0]
            },
            |x| [0.12 + 0.1 * x[1] + 0.08 * x[0], -0.1 + 0.1 * x[0], 0.05 - 0.12 * x[2]],
            -0.04,
            |x| {
                0.05 - 0.08 * x[0] + 0.06 * x[1] + 0.03 * x[0] * x[2] - 0.05 * x[1] * x[1]
                    + 0.02 * x[2] * x[2]
            },
            |x| [-0.08 + 0.03 * x[2], 0.06 - 0.1 * x[1], 0.03 * x[0] + 0.04 * x[2]],
            -0.06,
        ),
    }
}

/// Data that makes (c, mu) an exact solution of the time-discrete system:
/// a potential-row source absorbing the cubic term, flux data for both
/// rows, and the transport source balancing the mobility-weighted flux.
fn manufactured_pair_sources(p: usize, beta: f64, kappa: f64, peclet: f64) -> SourceTerms {
    let (c, grad_c, lap_c, mu, grad_mu, lap_mu) = polynomial_pair(p);
    SourceTerms {
        transport: Some(Box::new(move |x, _| {
            let cv = c(x);
            let m = 1.0 - beta * cv * cv;
            (2.0 * beta * cv * dot(grad_c(x), grad_mu(x)) - m * lap_mu) / peclet
        })),
        potential: Some(Box::new(move |x, _| mu(x) - (c(x).powi(3) - c(x)) + kappa * lap_c)),
        potential_flux: Some(Box::new(move |x, n, _| dot(grad_c(x), n))),
        transport_flux: Some(Box::new(move |x, n, _| {
            let cv = c(x);
            (1.0 - beta * cv * cv) * dot(grad_mu(x), n)
        })),
    }
}

#[test]
fn t02_polynomial_exactness() {
    gate(2, "polynomial_exactness", (|| {
        let (kappa, peclet, tau) = (0.05, 2.0, 0.01);
        let mut worst: f64 = 0.0;
        for p in 0..=2usize {
            for beta in [0.0, 1.0] {
                let (c, grad_c, _, mu, grad_mu, _) = polynomial_pair(p);
                for level in 0..=3u32 {
                    let n = 1usize << level;
                    let grid = build_grid(n, &vec![true; n * n * n], &ExteriorSpec::all_wall())?;
                    let mut params = SolverParams::for_degree(p, beta, kappa, peclet);
                    // The residual of the exact state is pure assembly
                    // roundoff; let the stationarity test absorb it.
                    params.newton.stall_floor = 1e-11;
                    let mut stepper = Stepper::new(grid, p, params, VelocityField::Zero);
                    stepper.set_sources(manufactured_pair_sources(p, beta, kappa, peclet));
                    let mut field = l2_project(stepper.grid(), stepper.basis(), c);
                    let mut t = 0.0;
                    for _ in 0..3 {
                        stepper.advance(&mut field, t, tau)?;
                        t += tau;
                    }
                    let err = error_norms(stepper.grid(), stepper.basis(), &field, &c, &grad_c);
                    let mu_coeffs = {
                        let sys = stepper.build_step_system(&field.coeffs, t, tau)?;
                        sys.recover_mu(&field.coeffs)
                    };
                    let mu_field =
                        DGField { n_el: field.n_el, n_loc: field.n_loc, coeffs: mu_coeffs };
                    let err_mu =
                        error_norms(stepper.grid(), stepper.basis(), &mu_field, &mu, &grad_mu);
                    worst = worst.max(err.l2).max(err.h1_broken).max(err_mu.l2);
                }
            }
        }
        Ok((worst < 1e-10, format!("worst error {worst:.2e} over degrees 0..=2, levels 0..=3")))
    })());
}

// ---------------------------------------------------------------------------
// 3. Frozen state for degenerate mobility on all-bulk order-zero data.
// ---------------------------------------------------------------------------

#[test]
fn t03_frozen_state() {
    gate(3, "frozen_state", (|| {
        let n = 8;
        let grid = build_grid(n, &vec![true; n * n * n], &ExteriorSpec::all_wall())?;
        let params = SolverParams::for_degree(0, 1.0, 1.0 / 64.0, 1.0);
        let mut stepper = Stepper::new(grid, 0, params, VelocityField::Zero);
        let values = spinodal_initial_values(n * n * n, 0.0, 1.0, 3);
        let mut field = project_element_constants(stepper.grid(), stepper.basis(), &values);
        let frozen = matches!(stepper.advance(&mut field, 0.0, 1e-3), Err(Error::FrozenState));

        // The refinement study reports the same condition as a gap row when
        // the projected data is exactly at the bulk values.
        let mut cfg = ScenarioConfig::defaults_for(Scenario::Convergence);
        cfg.p = 0;
        cfg.beta = 1.0;
        cfg.levels = 1;
        let rows = run_convergence(&cfg)?;
        let gap_row = rows[1].l2.is_none() && rows[1].h1.is_none();
        Ok((frozen && gap_row, format!("raised: {frozen}, study gap row: {gap_row}")))
    })());
}

// ---------------------------------------------------------------------------
// 4. Mass conservation over the closed-box phase separation run.
// ---------------------------------------------------------------------------

#[test]
fn t04_mass_conservation() {
    gate(4, "mass_conservation", (|| {
        let mut cfg = ScenarioConfig::defaults_for(Scenario::Spinodal);
        cfg.beta = 1.0;
        let report = run_spinodal(&cfg)?;
        let m0 = report.series[0].mass;
        let drift = report
            .series
            .iter()
            .map(|row| (row.mass - m0).abs())
            .fold(0.0f64, f64::max)
            / m0.abs();
        let steps = report.series.len() - 1;
        Ok((steps == 512 && drift < 1e-10, format!("{steps} steps, relative drift {drift:.2e}")))
    })());
}

// ---------------------------------------------------------------------------
// 5. Energy dissipation and the two-level initial data's energy split.
// ---------------------------------------------------------------------------

#[test]
fn t05_energy_dissipation() {
    gate(5, "energy_dissipation", (|| {
        let cfg = ScenarioConfig::defaults_for(Scenario::Spinodal);
        let report = run_spinodal(&cfg)?;
        let slack = 1e-11 * report.series[0].total_energy.abs().max(1.0);
        let increases = report
            .series
            .windows(2)
            .filter(|w| w[1].total_energy > w[0].total_energy + slack)
            .count();

        let mut cfg2 = ScenarioConfig::defaults_for(Scenario::Spinodal);
        cfg2.mean = 0.0;
        cfg2.amplitude = 1.0;
        cfg2.t_end = 0.256;
        let spaghetti = run_spinodal(&cfg2)?;
        let chem0 = spaghetti.series[0].chemical_energy;
        let grad0 = spaghetti.series[0].gradient_energy;
        let grad_max = spaghetti
            .series
            .iter()
            .map(|row| row.gradient_energy)
            .fold(f64::NEG_INFINITY, f64::max);
        let start_split_ok = chem0.abs() <= 1e-13 && grad0 >= grad_max - 1e-12 * grad_max.abs();
        Ok((
            increases == 0 && start_split_ok,
            format!(
                "energy increases: {increases}/512; two-level start: chemical {chem0:.1e}, \
                 gradient {grad0:.4} (max {grad_max:.4})"
            ),
        ))
    })());
}

// ---------------------------------------------------------------------------
// 6. The reduced solve agrees with a dense direct solve of the coupled
//    two-field block system.
// ---------------------------------------------------------------------------

#[test]
fn t06_schur_block_equivalence() {
    gate(6, "schur_block_equivalence", (|| {
        let n = 2;
        let (p, beta, kappa, peclet) = (1usize, 1.0, 0.04, 3.0);
        let (t_prev, tau) = (0.1, 0.05);
        let t_new = t_prev + tau;
        let velocity = VelocityField::Constant([0.7, 0.25, -0.4]);
        let inflow = |x: [f64; 3], t: f64| 0.4 + 0.2 * x[1] - 0.3 * t;

        let grid = build_grid(n, &vec![true; n * n * n], &ExteriorSpec::x_open())?;
        let mut params = SolverParams::for_degree(p, beta, kappa, peclet);
        params.newton.tol_rel = 1e-12;
        params.gmres.rel_tol = 1e-13;
        params.gmres.abs_tol = 1e-16;
        params.gmres.restart = 200;
        let sigma = params.sigma;
        let mut stepper = Stepper::new(grid, p, params, velocity.clone());
        stepper.set_inflow_value(Box::new(inflow));

        let basis = stepper.basis().clone();
        let nloc = basis.n_loc;
        let dim = n * n * n * nloc;
        let mut rng = SplitMix64::new(17);
        let x_prev: Vec<f64> = (0..dim).map(|_| 0.05 * rng.next_symmetric()).collect();
        let prev_field = DGField { n_el: n * n * n, n_loc: nloc, coeffs: x_prev.clone() };

        // Production path: reduced residual, matrix-free Newton-Krylov.
        let sys = stepper.build_step_system(&x_prev, t_prev, tau)?;
        let (x_c, _report) = sys.solve()?;
        let mu_c = sys.recover_mu(&x_c);
        let f_c = sys.f_c.clone();
        let f_mu = sys.f_mu.clone();
        drop(sys);

        // Dense path: assemble every block, solve the coupled system for
        // (c, mu) jointly with a dense Newton iteration and LU solves.
        let grid = stepper.grid();
        let c_in = |x: [f64; 3]| inflow(x, t_new);
        let a = assemble_diffusion(&DiffusionWeight::Unit, grid, &basis, sigma).to_dense();
        let weight = DiffusionWeight::ClampedMobility { beta, c_prev: &prev_field };
        let a_m = assemble_diffusion(&weight, grid, &basis, sigma).to_dense();
        let b = assemble_inflow_dirichlet(grid, &basis, sigma, t_new, &velocity, &c_in)
            .op
            .to_dense();
        let adv = assemble_advection(grid, &basis, &velocity, t_new, &c_in).op.to_dense();
        let h = grid.h;
        let vol_mass = h * h * h / 8.0;
        let fc = DVector::from_column_slice(&f_c);
        let fm = DVector::from_column_slice(&f_mu);

        let mut zc = DVector::from_column_slice(&x_prev);
        let mut zmu = DVector::zeros(dim);
        let mut converged = false;
        for _ in 0..40 {
            let e = convex_potential_vector(grid, &basis, zc.as_slice());
            let r1 = kappa * (&(&a + &b) * &zc) + DVector::from_column_slice(&e)
                - vol_mass * &zmu
                - &fc;
            let r2 = vol_mass * &zc + tau * (&adv * &zc) + (tau / peclet) * (&a_m * &zmu) - &fm;
            let norm = r1.amax().max(r2.amax());
            if norm < 1e-13 {
                converged = true;
                break;
            }
            let e_prime = assemble_weighted_mass(grid, &basis, zc.as_slice());
            let mut jac = DMatrix::zeros(2 * dim, 2 * dim);
            for i in 0..dim {
                for j in 0..dim {
                    jac[(i, j)] = kappa * (a[(i, j)] + b[(i, j)]);
                    jac[(dim + i, j)] = tau * adv[(i, j)];
                    jac[(dim + i, dim + j)] = (tau / peclet) * a_m[(i, j)];
                }
                jac[(i, dim + i)] = -vol_mass;
                jac[(dim + i, i)] += vol_mass;
            }
            for k in 0..n * n * n {
                let block = e_prime.block(k);
                for i in 0..nloc {
                    for j in 0..nloc {
                        jac[(k * nloc + i, k * nloc + j)] += block[i * nloc + j];
                    }
                }
            }
            let mut rhs = DVector::zeros(2 * dim);
            rhs.rows_mut(0, dim).copy_from(&r1);
            rhs.rows_mut(dim, dim).copy_from(&r2);
            let update = jac.lu().solve(&rhs).expect("nonsingular block Jacobian");
            zc -= update.rows(0, dim);
            zmu -= update.rows(dim, dim);
        }

        let c_diff = x_c
            .iter()
            .zip(zc.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let mu_diff = mu_c
            .iter()
            .zip(zmu.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        Ok((
            converged && c_diff < 1e-10 && mu_diff < 1e-10,
            format!("dense converged: {converged}, |dc| {c_diff:.2e}, |dmu| {mu_diff:.2e}"),
        ))
    })());
}

// ---------------------------------------------------------------------------
// 7. Matrix-free Jacobian against directional finite differences.
// ---------------------------------------------------------------------------

#[test]
fn t07_jacobian_correctness() {
    gate(7, "jacobian_correctness", (|| {
        let n = 4;
        let grid = build_grid(n, &vec![true; n * n * n], &ExteriorSpec::x_open())?;
        let mut params = SolverParams::for_degree(1, 1.0, 0.03, 2.0);
        params.gmres.restart = 120;
        let mut stepper =
            Stepper::new(grid, 1, params, VelocityField::Constant([0.5, -0.3, 0.2]));
        stepper.set_inflow_value(Box::new(|x, t| 0.3 * x[1] - 0.1 * t));
        let field = l2_project(stepper.grid(), stepper.basis(), |x| {
            0.4 * (std::f64::consts::TAU * x[0]).sin() * (std::f64::consts::PI * x[1]).cos()
                + 0.1 * x[2]
                - 0.05
        });
        let y = field.coeffs.clone();
        let dim = y.len();
        let sys = stepper.build_step_system(&y, 0.0, 5e-3)?;

        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let eps = 1e-6 * (1.0 + y_norm);
        let mut rng = SplitMix64::new(23);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let mut x: Vec<f64> = (0..dim).map(|_| rng.next_symmetric()).collect();
            let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut x {
                *v /= x_norm;
            }
            let jx = sys.jacobian_apply(&y, &x);
            let yp: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a + eps * b).collect();
            let ym: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - eps * b).collect();
            let mut rp = vec![0.0; dim];
            let mut rm = vec![0.0; dim];
            sys.residual(&yp, &mut rp);
            sys.residual(&ym, &mut rm);
            let mut diff = 0.0;
            let mut scale = 0.0;
            for i in 0..dim {
                let fd = (rp[i] - rm[i]) / (2.0 * eps);
                diff += (jx[i] - fd) * (jx[i] - fd);
                scale += jx[i] * jx[i];
            }
            worst = worst.max((diff / scale.max(1e-300)).sqrt());
        }
        Ok((worst < 1e-5, format!("worst relative error {worst:.2e} over 20 directions")))
    })());
}

// ---------------------------------------------------------------------------
// 8. Droplet relaxation: bulk shift of the settled state, dissolution of a
//    small droplet under constant mobility, persistence under degenerate
//    mobility.
// ---------------------------------------------------------------------------

#[test]
fn t08_droplet_stationary_states() {
    gate(8, "droplet_stationary_states", (|| {
        let baseline = run_droplet(&ScenarioConfig::defaults_for(Scenario::Droplet))?;
        let dev_plus_ok = (baseline.deviation_to_plus - 0.0283).abs() <= 0.01;
        let dev_minus_ok = (baseline.deviation_to_minus - 0.0318).abs() <= 0.01;

        let mut dissolve_cfg = ScenarioConfig::defaults_for(Scenario::Droplet);
        dissolve_cfg.p = 1;
        dissolve_cfg.droplet_side = 0.25;
        dissolve_cfg.tau = vec![TauSegment { until_time: f64::INFINITY, tau: 5e-4 }];
        let dissolved = run_droplet(&dissolve_cfg)?;
        let dissolved_ok = (dissolved.max_mean - (-0.83)).abs() <= 0.05;

        let mut persist_cfg = ScenarioConfig::defaults_for(Scenario::Droplet);
        persist_cfg.beta = 1.0;
        persist_cfg.droplet_side = 0.25;
        let persisted = run_droplet(&persist_cfg)?;
        let persisted_ok = (persisted.max_mean - 0.957).abs() <= 0.03;

        Ok((
            dev_plus_ok && dev_minus_ok && dissolved_ok && persisted_ok,
            format!(
                "baseline devs {:.4}/{:.4} (stationary: {}), dissolved max {:.4}, \
                 persistent max {:.4}",
                baseline.deviation_to_plus,
                baseline.deviation_to_minus,
                baseline.run.reached_stationary,
                dissolved.max_mean,
                persisted.max_mean
            ),
        ))
    })());
}

// ---------------------------------------------------------------------------
// 9. Newton iteration: monotone residual decrease under the damped update,
//    the relative-absolute stopping rule, and stationarity detection at a
//    settled two-bulk state.
// ---------------------------------------------------------------------------

#[test]
fn t09_newton_behavior() {
    gate(9, "newton_behavior", (|| {
        // An early phase-separation step far from equilibrium.
        let n = 16;
        let grid = build_grid(n, &vec![true; n * n * n], &ExteriorSpec::all_wall())?;
        let params = SolverParams::for_degree(0, 0.0, 1.0 / 256.0, 1.0);
        let newton_params = params.newton.clone();
        let mut stepper = Stepper::new(grid, 0, params, VelocityField::Zero);
        let values = spinodal_initial_values(n * n * n, -0.4, 0.05, 42);
        let field = project_element_constants(stepper.grid(), stepper.basis(), &values);
        let sys = stepper.build_step_system(&field.coeffs, 0.0, 2e-3)?;
        let outcome = newton_solve(&sys, &field.coeffs, &newton_params)?;
        let monotone = outcome.residual_history.windows(2).all(|w| w[1] < w[0]);
        let stopped = outcome.final_residual
            <= newton_params.tol_abs + newton_params.tol_rel * outcome.initial_residual;
        drop(sys);

        // A flat-interface two-bulk state on a pseudo-1D row of voxels:
        // stepping must report stationarity once (and only once) the
        // profile has settled, and leave the state untouched afterwards.
        let n = 16;
        let mut mask = vec![false; n * n * n];
        mask[..n].fill(true);
        let grid = build_grid(n, &mask, &ExteriorSpec::all_wall())?;
        let params = SolverParams::for_degree(0, 0.0, 1.0 / 64.0, 1.0);
        let mut stepper = Stepper::new(grid, 0, params, VelocityField::Zero);
        let values: Vec<f64> =
            (0..n).map(|i| if (i as f64 + 0.5) / (n as f64) < 0.5 { -1.0 } else { 1.0 }).collect();
        let mut field = project_element_constants(stepper.grid(), stepper.basis(), &values);
        let tau = 5e-3;
        let mut t = 0.0;
        let mut fired_at = None;
        for step in 0..200_000 {
            let report = stepper.advance(&mut field, t, tau)?;
            t += tau;
            if report.stationary {
                fired_at = Some(step);
                break;
            }
        }
        let fired = fired_at.is_some();
        let not_immediate = fired_at.map_or(false, |s| s > 0);
        let snapshot = field.coeffs.clone();
        let again = stepper.advance(&mut field, t, tau)?;
        let sticky = again.stationary && field.coeffs == snapshot;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..field.n_el {
            lo = lo.min(field.element_mean(k));
            hi = hi.max(field.element_mean(k));
        }
        let two_bulk = lo < -0.9 && hi > 0.9;

        Ok((
            monotone && stopped && fired && not_immediate && sticky && two_bulk,
            format!(
                "monotone over {} iterations, stationary after {:?} steps, bulks [{lo:.3}, {hi:.3}]",
                outcome.iterations, fired_at
            ),
        ))
    })());
}

// ---------------------------------------------------------------------------
// 10. Order-zero stepping against an independently coded cell-centered
//     two-point-flux finite volume solver of the same time-discrete system.
// ---------------------------------------------------------------------------

/// Advance the finite-volume form of the order-zero scheme by one step:
/// cell means u, previous means uprev, arithmetic-mean mobility on faces
/// frozen at the previous state, implicit cubic and explicit linear
/// double-well terms, dense Newton.
fn fv_step(
    u: &mut [f64],
    faces: &[(usize, usize)],
    beta: f64,
    kappa: f64,
    peclet: f64,
    h: f64,
    tau: f64,
) {
    let n = u.len();
    let uprev = u.to_vec();
    let mobility = |c: f64| (1.0 - beta * c * c).max(0.0);
    let face_mob: Vec<f64> =
        faces.iter().map(|&(a, b)| 0.5 * (mobility(uprev[a]) + mobility(uprev[b]))).collect();
    let diff_scale = kappa / (h * h);
    let flux_scale = 1.0 / (peclet * h * h);

    for _ in 0..40 {
        let mut mu: Vec<f64> = (0..n).map(|k| u[k].powi(3) - uprev[k]).collect();
        for &(a, b) in faces {
            mu[a] += diff_scale * (u[a] - u[b]);
            mu[b] += diff_scale * (u[b] - u[a]);
        }
        let mut r: Vec<f64> = (0..n).map(|k| (u[k] - uprev[k]) / tau).collect();
        for (f, &(a, b)) in faces.iter().enumerate() {
            let flux = flux_scale * face_mob[f] * (mu[a] - mu[b]);
            r[a] += flux;
            r[b] -= flux;
        }
        if r.iter().map(|v| v.abs()).fold(0.0f64, f64::max) < 1e-13 {
            return;
        }
        // J = I/tau + flux_scale L_M (diag(3u^2) + diff_scale L).
        let mut jmu = DMatrix::zeros(n, n);
        for k in 0..n {
            jmu[(k, k)] = 3.0 * u[k] * u[k];
        }
        for &(a, b) in faces {
            jmu[(a, a)] += diff_scale;
            jmu[(a, b)] -= diff_scale;
            jmu[(b, b)] += diff_scale;
            jmu[(b, a)] -= diff_scale;
        }
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            jac[(k, k)] = 1.0 / tau;
        }
        for (f, &(a, b)) in faces.iter().enumerate() {
            let w = flux_scale * face_mob[f];
            for m in 0..n {
                let d = w * (jmu[(a, m)] - jmu[(b, m)]);
                jac[(a, m)] += d;
                jac[(b, m)] -= d;
            }
        }
        let rhs = DVector::from_column_slice(&r);
        let update = jac.lu().solve(&rhs).expect("nonsingular FV Jacobian");
        for k in 0..n {
            u[k] -= update[k];
        }
    }
    panic!("finite-volume Newton did not converge");
}

#[test]
fn t10_fv_equivalence() {
    gate(10, "fv_equivalence", (|| {
        let n = 4;
        let (kappa, peclet, tau) = (0.02, 1.5, 0.01);
        let mut faces = Vec::new();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let me = i + n * j + n * n * k;
                    if i + 1 < n {
                        faces.push((me, me + 1));
                    }
                    if j + 1 < n {
                        faces.push((me, me + n));
                    }
                    if k + 1 < n {
                        faces.push((me, me + n * n));
                    }
                }
            }
        }

        let mut worst: f64 = 0.0;
        for beta in [0.0, 1.0] {
            let grid = build_grid(n, &vec![true; n * n * n], &ExteriorSpec::all_wall())?;
            let h = grid.h;
            let mut params = SolverParams::for_degree(0, beta, kappa, peclet);
            params.newton.tol_rel = 1e-13;
            params.gmres.rel_tol = 1e-12;
            params.gmres.abs_tol = 1e-16;
            let mut stepper = Stepper::new(grid, 0, params, VelocityField::Zero);
            let mut rng = SplitMix64::new(29);
            let values: Vec<f64> = (0..n * n * n).map(|_| 0.5 * rng.next_symmetric()).collect();
            let mut field = project_element_constants(stepper.grid(), stepper.basis(), &values);
            let mut u = values.clone();
            let mut t = 0.0;
            for _ in 0..6 {
                stepper.advance(&mut field, t, tau)?;
                t += tau;
                fv_step(&mut u, &faces, beta, kappa, peclet, h, tau);
                for k in 0..u.len() {
                    worst = worst.max((field.element_mean(k) - u[k]).abs());
                }
            }
        }
        Ok((worst < 1e-12, format!("max deviation of cell means {worst:.2e} over 6 steps")))
    })());
}

// ---------------------------------------------------------------------------
// 11. Advective invasion of the synthetic channel: per-step mass accounting
//     and a monotone front.
// ---------------------------------------------------------------------------

#[test]
fn t11_breakthrough_accounting() {
    gate(11, "breakthrough_accounting", (|| {
        let cfg = ScenarioConfig::defaults_for(Scenario::Breakthrough);
        let report = run_breakthrough(&cfg)?;
        let advanced = report.fronts.last().copied().unwrap_or(-1) >= (cfg.n / 2) as i64;
        Ok((
            report.max_balance_residual < 1e-10 && report.front_monotone && advanced,
            format!(
                "balance residual {:.2e}, front monotone: {}, final front slab {:?} of {}",
                report.max_balance_residual,
                report.front_monotone,
                report.fronts.last(),
                cfg.n - 1
            ),
        ))
    })());
}
