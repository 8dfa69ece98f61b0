//! Observables computed from a discrete field: total mass, discrete free
//! energy, discretization error norms, line samples, bulk-shift extrema,
//! and advective boundary fluxes for mass accounting.
//!
//! Everything here is read-only over the field; the energy and the fluxes
//! deliberately reuse the same quadrature as the assembled forms so the
//! reported numbers match the scheme's own discrete identities.

use crate::basis::{legendre_normalized_all, DGField, QuadratureRule, ReferenceBasis, PHI0};
use crate::grid::VoxelGrid;
use crate::operators::exterior_normal_velocities;
use crate::phi::phi;
use crate::velocity::{lower_voxel_of_boundary_face, VelocityField};
use crate::{Error, Result};

/// Total amount of the order parameter, exact for the modal basis: only the
/// constant mode carries volume average.
pub fn total_mass(grid: &VoxelGrid, field: &DGField) -> f64 {
    let h3 = grid.h * grid.h * grid.h;
    (0..field.n_el).map(|k| h3 * PHI0 * field.coeffs[k * field.n_loc]).sum()
}

/// Discrete Helmholtz free energy split into its two parts.
#[derive(Debug, Clone, Copy)]
pub struct EnergyReport {
    /// Double-well part: integral of (c^2 - 1)^2 / 4.
    pub chemical: f64,
    /// Interface part: (kappa/2) times the unit-weight interface form
    /// applied to the field twice (volume gradients plus face terms).
    pub gradient: f64,
    /// chemical + gradient.
    pub total: f64,
    /// Time stamp carried along for reporting.
    pub time: f64,
}

/// Evaluate the discrete free energy at time `time`. The gradient part
/// walks the interface form directly (volume term, consistency terms, and
/// the sigma/h penalty on interior faces), which equals the quadratic form
/// of the assembled operator; a test pins that equality.
pub fn discrete_energy(
    grid: &VoxelGrid,
    basis: &ReferenceBasis,
    field: &DGField,
    kappa: f64,
    sigma: f64,
    time: f64,
) -> EnergyReport {
    let h = grid.h;
    let vol_w = h * h * h / 8.0;
    let nv = basis.n_volume_points();
    let nl = basis.n_loc;

    let mut chemical = 0.0;
    let mut a_cc = 0.0;
    let mut vals = vec![0.0; nv];
    for k in 0..field.n_el {
        let coeffs = field.element(k);
        basis.field_at_volume_points(coeffs, &mut vals);
        for (q, v) in vals.iter().enumerate() {
            chemical += vol_w * basis.volume_weight(q) * phi(*v);
        }
        if basis.p >= 1 {
            let scale = 2.0 / h;
            for q in 0..nv {
                let mut g = [0.0; 3];
                for (i, &c) in coeffs.iter().enumerate() {
                    let gr = basis.vol_grad(i, q);
                    g[0] += c * gr[0];
                    g[1] += c * gr[1];
                    g[2] += c * gr[2];
                }
                let g2 = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]) * scale * scale;
                a_cc += vol_w * basis.volume_weight(q) * g2;
            }
        }
    }

    let nf = basis.n_face_points();
    let area_w = 0.25 * h * h;
    let penalty = sigma / h;
    for face in &grid.interior_faces {
        let km = face.minus as usize;
        let kp = face.plus as usize;
        let a = face.axis as usize;
        let fid_m = 2 * a + 1;
        let fid_p = 2 * a;
        let cm = field.element(km);
        let cp = field.element(kp);
        for q in 0..nf {
            let mut vm = 0.0;
            let mut vp = 0.0;
            let mut dm = 0.0;
            let mut dp = 0.0;
            for i in 0..nl {
                vm += cm[i] * basis.face_value(fid_m, i, q);
                vp += cp[i] * basis.face_value(fid_p, i, q);
                dm += cm[i] * basis.face_grad(fid_m, i, q)[a];
                dp += cp[i] * basis.face_grad(fid_p, i, q)[a];
            }
            let jump = vm - vp;
            let avg_dn = 0.5 * (2.0 / h) * (dm + dp);
            let w = area_w * basis.face_weight(q);
            a_cc += w * (-2.0 * avg_dn * jump + penalty * jump * jump);
        }
    }

    let gradient = 0.5 * kappa * a_cc;
    EnergyReport { chemical, gradient, total: chemical + gradient, time }
}

/// Discretization error norms against a known solution.
#[derive(Debug, Clone, Copy)]
pub struct ErrorReport {
    /// Broken L2 norm of the error.
    pub l2: f64,
    /// Broken gradient seminorm of the error (element volumes only).
    pub h1_broken: f64,
}

/// Observed convergence order between two refinement levels with a mesh
/// ratio of two.
pub fn observed_order(error_coarse: f64, error_fine: f64) -> f64 {
    (error_coarse / error_fine).log2()
}

/// Compare `field` against an exact solution and its gradient, integrating
/// with two extra quadrature points per direction so the quadrature error
/// stays far below the discretization error being measured.
pub fn error_norms(
    grid: &VoxelGrid,
    basis: &ReferenceBasis,
    field: &DGField,
    exact: &dyn Fn([f64; 3]) -> f64,
    exact_grad: &dyn Fn([f64; 3]) -> [f64; 3],
) -> ErrorReport {
    let p = basis.p;
    let rule = QuadratureRule::gauss_legendre(basis.quad.n_q + 2);
    let nq = rule.n_q;
    // 1D normalized Legendre values and derivatives at every quadrature
    // point, indexed [point][degree].
    let mut val1d = Vec::with_capacity(nq);
    let mut der1d = Vec::with_capacity(nq);
    for &x in &rule.points {
        let (v, d) = legendre_normalized_all(p, x);
        val1d.push(v);
        der1d.push(d);
    }

    let h = grid.h;
    let half = 0.5 * h;
    let vol_w = h * h * h / 8.0;
    let scale = 2.0 / h;
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for k in 0..field.n_el {
        let c = grid.centroid(k);
        let coeffs = field.element(k);
        for qz in 0..nq {
            for qy in 0..nq {
                for qx in 0..nq {
                    let w = vol_w * rule.weights[qx] * rule.weights[qy] * rule.weights[qz];
                    let mut value = 0.0;
                    let mut grad = [0.0; 3];
                    for (i, m) in basis.modes.iter().enumerate() {
                        let (a, b, d) = (m[0] as usize, m[1] as usize, m[2] as usize);
                        let (va, vb, vd) = (val1d[qx][a], val1d[qy][b], val1d[qz][d]);
                        value += coeffs[i] * va * vb * vd;
                        grad[0] += coeffs[i] * der1d[qx][a] * vb * vd;
                        grad[1] += coeffs[i] * va * der1d[qy][b] * vd;
                        grad[2] += coeffs[i] * va * vb * der1d[qz][d];
                    }
                    let x = [
                        c[0] + half * rule.points[qx],
                        c[1] + half * rule.points[qy],
                        c[2] + half * rule.points[qz],
                    ];
                    let e = value - exact(x);
                    l2 += w * e * e;
                    let ge = exact_grad(x);
                    let gx = scale * grad[0] - ge[0];
                    let gy = scale * grad[1] - ge[1];
                    let gz = scale * grad[2] - ge[2];
                    h1 += w * (gx * gx + gy * gy + gz * gz);
                }
            }
        }
    }
    ErrorReport { l2: l2.sqrt(), h1_broken: h1.sqrt() }
}

/// Sample the field at `samples` evenly spaced points on the segment from
/// `a` to `b` (inclusive). Points landing exactly on an element face
/// evaluate the lower-index element; points in solid voxels or outside the
/// unit cube are an error.
pub fn line_sample(
    grid: &VoxelGrid,
    basis: &ReferenceBasis,
    field: &DGField,
    a: [f64; 3],
    b: [f64; 3],
    samples: usize,
) -> Result<Vec<(f64, f64)>> {
    for x in [a, b] {
        if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidInput(format!(
                "segment endpoint ({}, {}, {}) outside the unit cube",
                x[0], x[1], x[2]
            )));
        }
    }
    let length = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
    let n = grid.n as f64;
    let mut out = Vec::with_capacity(samples);
    for s in 0..samples {
        let t = if samples > 1 { s as f64 / (samples - 1) as f64 } else { 0.0 };
        let x = [
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            a[2] + t * (b[2] - a[2]),
        ];
        let mut voxel = [0usize; 3];
        for (axis, v) in voxel.iter_mut().enumerate() {
            // ceil(x n) - 1 picks the lower element when x n is an integer.
            let idx = (x[axis] * n).ceil() - 1.0;
            *v = idx.clamp(0.0, n - 1.0) as usize;
        }
        let Some(k) = grid.element_at(voxel[0], voxel[1], voxel[2]) else {
            return Err(Error::InvalidInput(format!(
                "sample point ({}, {}, {}) lies in a solid voxel",
                x[0], x[1], x[2]
            )));
        };
        let c = grid.centroid(k);
        let inv_half = 2.0 / grid.h;
        let xr = [
            ((x[0] - c[0]) * inv_half).clamp(-1.0, 1.0),
            ((x[1] - c[1]) * inv_half).clamp(-1.0, 1.0),
            ((x[2] - c[2]) * inv_half).clamp(-1.0, 1.0),
        ];
        out.push((t * length, field.value_at(basis, k, xr)));
    }
    Ok(out)
}

/// Extremal deviation of element mean values from the two bulk phases:
/// (max mean - 1, -1 - min mean). Positive values are overshoots.
pub fn bulk_shift(field: &DGField) -> (f64, f64) {
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for k in 0..field.n_el {
        let m = field.element_mean(k);
        max = max.max(m);
        min = min.min(m);
    }
    (max - 1.0, -1.0 - min)
}

/// Advective mass fluxes over the exterior boundary at time `t`, with faces
/// classified by the normal velocity at their centers exactly as in the
/// assembled forms: returns (inflow, outflow) where inflow integrates the
/// boundary datum over v.n < 0 faces (positive for mass entering) and
/// outflow integrates the discrete solution over the remaining exterior
/// faces. Over one step, mass changes by tau * (inflow - outflow) up to the
/// nonlinear solver residual.
pub fn advective_boundary_fluxes(
    grid: &VoxelGrid,
    basis: &ReferenceBasis,
    field: &DGField,
    velocity: &VelocityField,
    t: f64,
    c_in: &dyn Fn([f64; 3]) -> f64,
) -> (f64, f64) {
    let nf = basis.n_face_points();
    let area_w = 0.25 * grid.h * grid.h;
    let half = 0.5 * grid.h;
    let mut inflow = 0.0;
    let mut outflow = 0.0;
    let mut vals = vec![0.0; nf];
    for (idx, vn_center) in exterior_normal_velocities(grid, velocity, t) {
        let face = &grid.boundary_faces[idx];
        let k = face.element as usize;
        let a = face.axis as usize;
        let fid = 2 * a + usize::from(face.orientation > 0);
        let o = f64::from(face.orientation);
        let lower = lower_voxel_of_boundary_face(grid, face);
        let centroid = grid.centroid(k);
        let inflow_face = vn_center < 0.0;
        if !inflow_face {
            basis.field_at_face_points(fid, field.element(k), &mut vals);
        }
        for q in 0..nf {
            let xr = basis.face_point(fid, q);
            let x = [
                centroid[0] + half * xr[0],
                centroid[1] + half * xr[1],
                centroid[2] + half * xr[2],
            ];
            let vn = o * velocity.normal_on_face(a, lower, x, t);
            let w = area_w * basis.face_weight(q) * vn;
            if inflow_face {
                inflow -= w * c_in(x);
            } else {
                outflow += w * vals[q];
            }
        }
    }
    (inflow, outflow)
}
