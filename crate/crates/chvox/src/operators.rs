//! Block-sparse operators and assembly of every bilinear and linear form in
//! the scheme: weighted diffusion (interior penalty for p >= 1, two-point
//! flux at p = 0), inflow Dirichlet terms, sigmoid-upwinded advection, the
//! convex nonlinearity, weighted mass blocks, and source integrals.
//!
//! All operators share one storage format: block compressed sparse rows with
//! dense n_loc x n_loc blocks, whose pattern is the element adjacency of the
//! grid (diagonal plus face neighbors). The mass matrix is never stored; the
//! orthonormal basis makes it (h^3/8) times the identity.

use crate::basis::{eval_mode, tangential_axes, DGField, QuadratureRule, ReferenceBasis, PHI0};
use crate::grid::{FaceClass, VoxelGrid};
use crate::phi::mobility_clamped;
use crate::velocity::{lower_voxel_of_boundary_face, VelocityField};

/// Sharpness of the sigmoid upwind switch.
const UPWIND_SHARPNESS: f64 = 100.0;

/// Smoothed upwind switch: 1/(1 + exp(-100 z)).
pub fn upwind_sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-UPWIND_SHARPNESS * z).exp())
}

/// Upwind trace value for normal velocity component `z`: the minus-side
/// value for z >> 0, the plus-side value for z << 0, their average at z = 0.
pub fn upwind_value(c_minus: f64, c_plus: f64, z: f64) -> f64 {
    let s = upwind_sigmoid(z);
    s * c_minus + (1.0 - s) * c_plus
}

/// Block compressed-sparse-row operator with dense square blocks.
#[derive(Debug, Clone)]
pub struct BlockSparseOperator {
    /// Block rows (= elements).
    pub n_el: usize,
    /// Block edge length (= local degrees of freedom).
    pub n_loc: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    blocks: Vec<f64>,
}

impl BlockSparseOperator {
    /// Zero operator on the grid's adjacency pattern (diagonal plus face
    /// neighbors), column indices sorted within each row.
    pub fn from_grid(grid: &VoxelGrid, n_loc: usize) -> Self {
        let n_el = grid.n_elements();
        let mut cols: Vec<Vec<u32>> = (0..n_el).map(|k| vec![k as u32]).collect();
        for face in &grid.interior_faces {
            cols[face.minus as usize].push(face.plus);
            cols[face.plus as usize].push(face.minus);
        }
        let mut row_ptr = Vec::with_capacity(n_el + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut cols {
            row.sort_unstable();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let blocks = vec![0.0; col_idx.len() * n_loc * n_loc];
        Self { n_el, n_loc, row_ptr, col_idx, blocks }
    }

    /// Total scalar dimension.
    pub fn n_rows(&self) -> usize {
        self.n_el * self.n_loc
    }

    /// Slot of block (row, col) in the pattern, if present.
    pub fn block_slot(&self, row: usize, col: usize) -> Option<usize> {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        self.col_idx[lo..hi]
            .binary_search(&(col as u32))
            .ok()
            .map(|offset| lo + offset)
    }

    /// Dense block at a slot.
    pub fn block(&self, slot: usize) -> &[f64] {
        let nb = self.n_loc * self.n_loc;
        &self.blocks[slot * nb..(slot + 1) * nb]
    }

    /// Mutable dense block at a slot.
    pub fn block_mut(&mut self, slot: usize) -> &mut [f64] {
        let nb = self.n_loc * self.n_loc;
        &mut self.blocks[slot * nb..(slot + 1) * nb]
    }

    /// Column indices and block storage of one block row.
    pub fn row(&self, row: usize) -> (&[u32], &[f64]) {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        let nb = self.n_loc * self.n_loc;
        (&self.col_idx[lo..hi], &self.blocks[lo * nb..hi * nb])
    }

    /// Diagonal block of a row.
    pub fn diag_block(&self, row: usize) -> &[f64] {
        let slot = self.block_slot(row, row).expect("pattern always holds the diagonal");
        self.block(slot)
    }

    /// Reset all stored values to zero, keeping the pattern.
    pub fn clear(&mut self) {
        self.blocks.fill(0.0);
    }

    /// y = A x.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        self.apply_scaled_add(x, y, 1.0);
    }

    /// y += A x.
    pub fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        self.apply_scaled_add(x, y, 1.0);
    }

    /// y += s A x.
    pub fn apply_scaled_add(&self, x: &[f64], y: &mut [f64], s: f64) {
        let nl = self.n_loc;
        let nb = nl * nl;
        for row in 0..self.n_el {
            let y_row = &mut y[row * nl..(row + 1) * nl];
            for slot in self.row_ptr[row]..self.row_ptr[row + 1] {
                let col = self.col_idx[slot] as usize;
                let x_col = &x[col * nl..(col + 1) * nl];
                let block = &self.blocks[slot * nb..(slot + 1) * nb];
                for i in 0..nl {
                    let mut acc = 0.0;
                    for j in 0..nl {
                        acc += block[i * nl + j] * x_col[j];
                    }
                    y_row[i] += s * acc;
                }
            }
        }
    }

    /// Dense copy for small verification problems.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n_rows();
        let nl = self.n_loc;
        let nb = nl * nl;
        let mut dense = nalgebra::DMatrix::zeros(n, n);
        for row in 0..self.n_el {
            for slot in self.row_ptr[row]..self.row_ptr[row + 1] {
                let col = self.col_idx[slot] as usize;
                let block = &self.blocks[slot * nb..(slot + 1) * nb];
                for i in 0..nl {
                    for j in 0..nl {
                        dense[(row * nl + i, col * nl + j)] = block[i * nl + j];
                    }
                }
            }
        }
        dense
    }
}

/// Block-diagonal operator (weighted mass matrices).
#[derive(Debug, Clone)]
pub struct BlockDiagonal {
    /// Block rows.
    pub n_el: usize,
    /// Block edge length.
    pub n_loc: usize,
    /// Dense blocks, row-major within each block.
    pub blocks: Vec<f64>,
}

impl BlockDiagonal {
    /// Zero block diagonal.
    pub fn zeros(n_el: usize, n_loc: usize) -> Self {
        Self { n_el, n_loc, blocks: vec![0.0; n_el * n_loc * n_loc] }
    }

    /// Dense block of one element.
    pub fn block(&self, k: usize) -> &[f64] {
        let nb = self.n_loc * self.n_loc;
        &self.blocks[k * nb..(k + 1) * nb]
    }

    /// y += s A x.
    pub fn apply_scaled_add(&self, x: &[f64], y: &mut [f64], s: f64) {
        let nl = self.n_loc;
        let nb = nl * nl;
        for k in 0..self.n_el {
            let block = &self.blocks[k * nb..(k + 1) * nb];
            let x_k = &x[k * nl..(k + 1) * nl];
            let y_k = &mut y[k * nl..(k + 1) * nl];
            for i in 0..nl {
                let mut acc = 0.0;
                for j in 0..nl {
                    acc += block[i * nl + j] * x_k[j];
                }
                y_k[i] += s * acc;
            }
        }
    }
}

/// Diffusion coefficient entering the weighted forms.
#[derive(Debug, Clone, Copy)]
pub enum DiffusionWeight<'a> {
    /// z = 1 (the interface term of the chemical potential equation).
    Unit,
    /// z = max(1 - beta c^2, 0) with c the previous-step field, evaluated
    /// pointwise at quadrature points.
    ClampedMobility {
        /// Degenerate-mobility switch (0 or 1 in practice).
        beta: f64,
        /// Previous time-level order parameter.
        c_prev: &'a DGField,
    },
}

impl DiffusionWeight<'_> {
    /// Weight values at all volume quadrature points of element `k`.
    fn volume_values(&self, basis: &ReferenceBasis, k: usize, out: &mut [f64]) {
        match self {
            DiffusionWeight::Unit => out.fill(1.0),
            DiffusionWeight::ClampedMobility { beta, c_prev } => {
                basis.field_at_volume_points(c_prev.element(k), out);
                for v in out.iter_mut() {
                    *v = mobility_clamped(*beta, *v);
                }
            }
        }
    }

    /// Weight values at all quadrature points of face `face_id` of element `k`.
    fn face_values(&self, basis: &ReferenceBasis, k: usize, face_id: usize, out: &mut [f64]) {
        match self {
            DiffusionWeight::Unit => out.fill(1.0),
            DiffusionWeight::ClampedMobility { beta, c_prev } => {
                basis.field_at_face_points(face_id, c_prev.element(k), out);
                for v in out.iter_mut() {
                    *v = mobility_clamped(*beta, *v);
                }
            }
        }
    }
}

/// Default interior penalty parameter for degree p.
pub fn default_penalty(p: usize) -> f64 {
    (1u64 << p) as f64
}

/// Weighted diffusion form. For p >= 1 this is the symmetric interior
/// penalty bilinear form (volume term, consistency and symmetry face terms
/// weighted by z, unweighted penalty sigma/h); at p = 0 it degenerates to
/// the two-point flux form (sigma/h) sum over faces of {z} [c][w].
pub fn assemble_diffusion(
    weight: &DiffusionWeight,
    grid: &VoxelGrid,
    basis: &ReferenceBasis,
    sigma: f64,
) -> BlockSparseOperator {
    let mut op = BlockSparseOperator::from_grid(grid, basis.n_loc);
    let nl = basis.n_loc;
    let h = grid.h;
    let penalty = sigma / h;

    if basis.p >= 1 {
        // Volume term: (h/2) sum_q w_q z_q grad phi_j . grad phi_i (the
        // physical 4/h^2 gradient scale against the h^3/8 volume Jacobian).
        let nv = basis.n_volume_points();
        let mut zbuf = vec![0.0; nv];
        for k in 0..grid.n_elements() {
            weight.volume_values(basis, k, &mut zbuf);
            let slot = op.block_slot(k, k).unwrap();
            let block = op.block_mut(slot);
            for q in 0..nv {
                let w = 0.5 * h * basis.volume_weight(q) * zbuf[q];
                for i in 0..nl {
                    let gi = basis.vol_grad(i, q);
                    for j in 0..nl {
                        let gj = basis.vol_grad(j, q);
                        block[i * nl + j] += w * (gi[0] * gj[0] + gi[1] * gj[1] + gi[2] * gj[2]);
                    }
                }
            }
        }
    }

    let nf = basis.n_face_points();
    let area_w = 0.25 * h * h;
    let dscale = 2.0 / h;
    let mut zm = vec![0.0; nf];
    let mut zp = vec![0.0; nf];
    let nb = nl * nl;
    let mut mm = vec![0.0; nb];
    let mut mp = vec![0.0; nb];
    let mut pm = vec![0.0; nb];
    let mut pp = vec![0.0; nb];

    for face in &grid.interior_faces {
        let (km, kp) = (face.minus as usize, face.plus as usize);
        let a = face.axis as usize;
        let fid_m = 2 * a + 1;
        let fid_p = 2 * a;
        weight.face_values(basis, km, fid_m, &mut zm);
        weight.face_values(basis, kp, fid_p, &mut zp);
        mm.fill(0.0);
        mp.fill(0.0);
        pm.fill(0.0);
        pp.fill(0.0);

        if basis.p == 0 {
            // Two-point flux: (sigma/h) {z} [c][w] with the arithmetic mean.
            let mut v = 0.0;
            for q in 0..nf {
                v += penalty * area_w * basis.face_weight(q) * 0.5 * (zm[q] + zp[q]) * PHI0 * PHI0;
            }
            mm[0] += v;
            mp[0] -= v;
            pm[0] -= v;
            pp[0] += v;
        } else {
            for q in 0..nf {
                let w = area_w * basis.face_weight(q);
                let (zmq, zpq) = (zm[q], zp[q]);
                for i in 0..nl {
                    let phi_m_i = basis.face_value(fid_m, i, q);
                    let phi_p_i = basis.face_value(fid_p, i, q);
                    let dn_m_i = dscale * basis.face_grad(fid_m, i, q)[a];
                    let dn_p_i = dscale * basis.face_grad(fid_p, i, q)[a];
                    for j in 0..nl {
                        let phi_m_j = basis.face_value(fid_m, j, q);
                        let phi_p_j = basis.face_value(fid_p, j, q);
                        let dn_m_j = dscale * basis.face_grad(fid_m, j, q)[a];
                        let dn_p_j = dscale * basis.face_grad(fid_p, j, q)[a];
                        mm[i * nl + j] += w
                            * (-0.5 * zmq * (dn_m_j * phi_m_i + dn_m_i * phi_m_j)
                                + penalty * phi_m_i * phi_m_j);
                        mp[i * nl + j] += w
                            * (-0.5 * zpq * dn_p_j * phi_m_i + 0.5 * zmq * dn_m_i * phi_p_j
                                - penalty * phi_m_i * phi_p_j);
                        pm[i * nl + j] += w
                            * (0.5 * zmq * dn_m_j * phi_p_i - 0.5 * zpq * dn_p_i * phi_m_j
                                - penalty * phi_p_i * phi_m_j);
                        pp[i * nl + j] += w
                            * (0.5 * zpq * (dn_p_j * phi_p_i + dn_p_i * phi_p_j)
                                + penalty * phi_p_i * phi_p_j);
                    }
                }
            }
        }

        for (row, col, local) in [(km, km, &mm), (km, kp, &mp), (kp, km, &pm), (kp, kp, &pp)] {
            let slot = op.block_slot(row, col).unwrap();
            let block = op.block_mut(slot);
            for (b, l) in block.iter_mut().zip(local.iter()) {
                *b += *l;
            }
        }
    }
    op
}

/// Normal velocity (in outward direction) at the center of every exterior
/// face, as (boundary face index, v.n) pairs; the sign decides inflow.
pub fn exterior_normal_velocities(
    grid: &VoxelGrid,
    velocity: &VelocityField,
    t: f64,
) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for (idx, face) in grid.boundary_faces.iter().enumerate() {
        if face.class != FaceClass::Exterior {
            continue;
        }
        let lower = lower_voxel_of_boundary_face(grid, face);
        let v_axis = velocity.normal_on_face(face.axis as usize, lower, face.center, t);
        out.push((idx, f64::from(face.orientation) * v_axis));
    }
    out
}

/// Inflow Dirichlet terms: the symmetric boundary penalty operator, the
/// boundary data vector, and the inflow face indices.
#[derive(Debug, Clone)]
pub struct InflowDirichlet {
    /// Boundary bilinear form, supported on inflow-adjacent diagonal blocks.
    pub op: BlockSparseOperator,
    /// Boundary data functional.
    pub data: Vec<f64>,
    /// Indices into the grid's boundary face list.
    pub inflow_faces: Vec<usize>,
}

/// Assemble the inflow Dirichlet forms at time `t`: exterior faces with
/// v.n < 0 at the face center get consistency/symmetry/penalty terms
/// (penalty only at p = 0) with unit weight and boundary data `c_in`.
pub fn assemble_inflow_dirichlet(
    grid: &VoxelGrid,
    basis: &ReferenceBasis,
    sigma: f64,
    t: f64,
    velocity: &VelocityField,
    c_in: &dyn Fn([f64; 3]) -> f64,
) -> InflowDirichlet {
    let mut op = BlockSparseOperator::from_grid(grid, basis.n_loc);
    let mut data = vec![0.0; op.n_rows()];
    let mut inflow_faces = Vec::new();

    let nl = basis.n_loc;
    let h = grid.h;
    let penalty = sigma / h;
    let area_w = 0.25 * h * h;
    let dscale = 2.0 / h;
    let nf = basis.n_face_points();

    for (idx, vn) in exterior_normal_velocities(grid, velocity, t) {
        if vn >= 0.0 {
            continue;
        }
        inflow_faces.push(idx);
        let face = &grid.boundary_faces[idx];
        let k = face.element as usize;
        let a = face.axis as usize;
        let fid = 2 * a + usize::from(face.orientation > 0);
        let o = f64::from(face.orientation);
        let centroid = grid.centroid(k);
        let half = 0.5 * h;
        let slot = op.block_slot(k, k).unwrap();

        for q in 0..nf {
            let w = area_w * basis.face_weight(q);
            let xr = basis.face_point(fid, q);
            let x = [
                centroid[0] + half * xr[0],
                centroid[1] + half * xr[1],
                centroid[2] + half * xr[2],
            ];
            let g = c_in(x);
            let block = op.block_mut(slot);
            if basis.p == 0 {
                block[0] += w * penalty * PHI0 * PHI0;
                data[k * nl] += w * penalty * g * PHI0;
            } else {
                for i in 0..nl {
                    let phi_i = basis.face_value(fid, i, q);
                    let dn_i = o * dscale * basis.face_grad(fid, i, q)[a];
                    for j in 0..nl {
                        let phi_j = basis.face_value(fid, j, q);
                        let dn_j = o * dscale * basis.face_grad(fid, j, q)[a];
                        block[i * nl + j] +=
                            w * (-dn_j * phi_i - dn_i * phi_j + penalty * phi_i * phi_j);
                    }
                    data[k * nl + i] += w * g * (-dn_i + penalty * phi_i);
                }
            }
        }
    }
    InflowDirichlet { op, data, inflow_faces }
}

/// Advective terms: the upwind transport operator and the inflow vector.
#[derive(Debug, Clone)]
pub struct Advection {
    /// Transport bilinear form.
    pub op: BlockSparseOperator,
    /// Inflow boundary functional (nonnegative for nonnegative data).
    pub inflow: Vec<f64>,
}

/// Assemble the advective form at time `t`: volume term (absent at p = 0),
/// sigmoid-upwinded interior face fluxes, outflow boundary fluxes, and the
/// inflow data vector. Wall faces contribute nothing.
pub fn assemble_advection(
    grid: &VoxelGrid,
    basis: &ReferenceBasis,
    velocity: &VelocityField,
    t: f64,
    c_in: &dyn Fn([f64; 3]) -> f64,
) -> Advection {
    let mut op = BlockSparseOperator::from_grid(grid, basis.n_loc);
    let mut inflow = vec![0.0; op.n_rows()];
    let nl = basis.n_loc;
    let h = grid.h;
    let half = 0.5 * h;
    let area_w = 0.25 * h * h;
    let nf = basis.n_face_points();

    if basis.p >= 1 {
        // Volume term -int c v.grad w: (h^2/4) carries the gradient scale.
        let nv = basis.n_volume_points();
        let vol_w = 0.25 * h * h;
        for k in 0..grid.n_elements() {
            let slot = op.block_slot(k, k).unwrap();
            let block = op.block_mut(slot);
            for q in 0..nv {
                let xr = basis.volume_point(q);
                let v = velocity.in_element(grid, k, xr, t);
                let w = vol_w * basis.volume_weight(q);
                for i in 0..nl {
                    let gi = basis.vol_grad(i, q);
                    let vdotg = v[0] * gi[0] + v[1] * gi[1] + v[2] * gi[2];
                    for j in 0..nl {
                        block[i * nl + j] -= w * basis.vol_value(j, q) * vdotg;
                    }
                }
            }
        }
    }

    let nb = nl * nl;
    let mut mm = vec![0.0; nb];
    let mut mp = vec![0.0; nb];
    let mut pm = vec![0.0; nb];
    let mut pp = vec![0.0; nb];
    for face in &grid.interior_faces {
        let (km, kp) = (face.minus as usize, face.plus as usize);
        let a = face.axis as usize;
        let fid_m = 2 * a + 1;
        let fid_p = 2 * a;
        let (i0, j0, k0) = grid.voxel_of(km);
        let lower = [i0 as i32, j0 as i32, k0 as i32];
        mm.fill(0.0);
        mp.fill(0.0);
        pm.fill(0.0);
        pp.fill(0.0);
        let centroid = grid.centroid(km);
        let mut any = false;
        for q in 0..nf {
            let xr = basis.face_point(fid_m, q);
            let x = [
                centroid[0] + half * xr[0],
                centroid[1] + half * xr[1],
                centroid[2] + half * xr[2],
            ];
            let vn = velocity.normal_on_face(a, lower, x, t);
            if vn == 0.0 {
                continue;
            }
            any = true;
            let s = upwind_sigmoid(vn);
            let w = area_w * basis.face_weight(q) * vn;
            for i in 0..nl {
                let phi_m_i = basis.face_value(fid_m, i, q);
                let phi_p_i = basis.face_value(fid_p, i, q);
                for j in 0..nl {
                    let phi_m_j = basis.face_value(fid_m, j, q);
                    let phi_p_j = basis.face_value(fid_p, j, q);
                    mm[i * nl + j] += w * s * phi_m_j * phi_m_i;
                    mp[i * nl + j] += w * (1.0 - s) * phi_p_j * phi_m_i;
                    pm[i * nl + j] -= w * s * phi_m_j * phi_p_i;
                    pp[i * nl + j] -= w * (1.0 - s) * phi_p_j * phi_p_i;
                }
            }
        }
        if !any {
            continue;
        }
        for (row, col, local) in [(km, km, &mm), (km, kp, &mp), (kp, km, &pm), (kp, kp, &pp)] {
            let slot = op.block_slot(row, col).unwrap();
            let block = op.block_mut(slot);
            for (b, l) in block.iter_mut().zip(local.iter()) {
                *b += *l;
            }
        }
    }

    for (idx, vn_center) in exterior_normal_velocities(grid, velocity, t) {
        let face = &grid.boundary_faces[idx];
        let k = face.element as usize;
        let a = face.axis as usize;
        let fid = 2 * a + usize::from(face.orientation > 0);
        let o = f64::from(face.orientation);
        let lower = lower_voxel_of_boundary_face(grid, face);
        let centroid = grid.centroid(k);
        let inflow_face = vn_center < 0.0;
        let slot = op.block_slot(k, k).unwrap();
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
                let g = c_in(x);
                for i in 0..nl {
                    inflow[k * nl + i] -= w * g * basis.face_value(fid, i, q);
                }
            } else {
                let block = op.block_mut(slot);
                for i in 0..nl {
                    let phi_i = basis.face_value(fid, i, q);
                    for j in 0..nl {
                        block[i * nl + j] += w * basis.face_value(fid, j, q) * phi_i;
                    }
                }
            }
        }
    }
    Advection { op, inflow }
}

/// Moment vector of the convex potential derivative: entries int c^3 phi_i
/// over each element, with c the field spanned by `x` on the given basis.
pub fn convex_potential_vector(grid: &VoxelGrid, basis: &ReferenceBasis, x: &[f64]) -> Vec<f64> {
    let nl = basis.n_loc;
    let nv = basis.n_volume_points();
    let vol_w = grid.h * grid.h * grid.h / 8.0;
    let mut out = vec![0.0; grid.n_elements() * nl];
    let mut cbuf = vec![0.0; nv];
    for k in 0..grid.n_elements() {
        basis.field_at_volume_points(&x[k * nl..(k + 1) * nl], &mut cbuf);
        let o = &mut out[k * nl..(k + 1) * nl];
        for q in 0..nv {
            let w = vol_w * basis.volume_weight(q) * cbuf[q].powi(3);
            for (i, oi) in o.iter_mut().enumerate() {
                *oi += w * basis.vol_value(i, q);
            }
        }
    }
    out
}

/// Weighted mass blocks of the convex curvature: int 3 c^2 phi_j phi_i per
/// element (the Jacobian of the convex moment vector).
pub fn assemble_weighted_mass(grid: &VoxelGrid, basis: &ReferenceBasis, x: &[f64]) -> BlockDiagonal {
    let nl = basis.n_loc;
    let nv = basis.n_volume_points();
    let vol_w = grid.h * grid.h * grid.h / 8.0;
    let mut out = BlockDiagonal::zeros(grid.n_elements(), nl);
    let mut cbuf = vec![0.0; nv];
    for k in 0..grid.n_elements() {
        basis.field_at_volume_points(&x[k * nl..(k + 1) * nl], &mut cbuf);
        let block = &mut out.blocks[k * nl * nl..(k + 1) * nl * nl];
        for q in 0..nv {
            let w = vol_w * basis.volume_weight(q) * 3.0 * cbuf[q] * cbuf[q];
            for i in 0..nl {
                let phi_i = basis.vol_value(i, q);
                for j in 0..nl {
                    block[i * nl + j] += w * basis.vol_value(j, q) * phi_i;
                }
            }
        }
    }
    out
}

/// Volume source vector: entries int f phi_i per element. Data terms use two
/// extra quadrature points per direction beyond the scheme rule so that rough
/// right-hand sides do not alias on coarse grids.
pub fn volume_source(
    grid: &VoxelGrid,
    basis: &ReferenceBasis,
    f: &dyn Fn([f64; 3]) -> f64,
) -> Vec<f64> {
    let nl = basis.n_loc;
    let rule = QuadratureRule::gauss_legendre(basis.quad.n_q + 2);
    let nq = rule.n_q;
    let vol_w = grid.h * grid.h * grid.h / 8.0;
    let half = 0.5 * grid.h;
    let mut points = Vec::with_capacity(nq * nq * nq);
    let mut table = Vec::with_capacity(nq * nq * nq * nl);
    for qz in 0..nq {
        for qy in 0..nq {
            for qx in 0..nq {
                let xr = [rule.points[qx], rule.points[qy], rule.points[qz]];
                points.push((xr, rule.weights[qx] * rule.weights[qy] * rule.weights[qz]));
                for &m in &basis.modes {
                    table.push(eval_mode(m, xr));
                }
            }
        }
    }
    let mut out = vec![0.0; grid.n_elements() * nl];
    for k in 0..grid.n_elements() {
        let c = grid.centroid(k);
        let o = &mut out[k * nl..(k + 1) * nl];
        for (q, &(xr, wq)) in points.iter().enumerate() {
            let x = [c[0] + half * xr[0], c[1] + half * xr[1], c[2] + half * xr[2]];
            let w = vol_w * wq * f(x);
            for (oi, &phi) in o.iter_mut().zip(&table[q * nl..(q + 1) * nl]) {
                *oi += w * phi;
            }
        }
    }
    out
}

/// Boundary source vector over every boundary face (wall and exterior):
/// entries int g(x, n) phi_i, with n the outward unit normal. Uses the same
/// over-integrated data rule as [`volume_source`].
pub fn boundary_source(
    grid: &VoxelGrid,
    basis: &ReferenceBasis,
    g: &dyn Fn([f64; 3], [f64; 3]) -> f64,
) -> Vec<f64> {
    let nl = basis.n_loc;
    let rule = QuadratureRule::gauss_legendre(basis.quad.n_q + 2);
    let nq = rule.n_q;
    let area_w = 0.25 * grid.h * grid.h;
    let half = 0.5 * grid.h;
    let mut fid_points: [Vec<([f64; 3], f64)>; 6] = Default::default();
    let mut fid_table: [Vec<f64>; 6] = Default::default();
    for a in 0..3 {
        let (t0, t1) = tangential_axes(a);
        for positive in [false, true] {
            let fid = 2 * a + usize::from(positive);
            for q1 in 0..nq {
                for q0 in 0..nq {
                    let mut xr = [0.0; 3];
                    xr[a] = if positive { 1.0 } else { -1.0 };
                    xr[t0] = rule.points[q0];
                    xr[t1] = rule.points[q1];
                    fid_points[fid].push((xr, rule.weights[q0] * rule.weights[q1]));
                    for &m in &basis.modes {
                        fid_table[fid].push(eval_mode(m, xr));
                    }
                }
            }
        }
    }
    let mut out = vec![0.0; grid.n_elements() * nl];
    for face in &grid.boundary_faces {
        let k = face.element as usize;
        let a = face.axis as usize;
        let fid = 2 * a + usize::from(face.orientation > 0);
        let mut normal = [0.0; 3];
        normal[a] = f64::from(face.orientation);
        let c = grid.centroid(k);
        let o = &mut out[k * nl..(k + 1) * nl];
        for (q, &(xr, wq)) in fid_points[fid].iter().enumerate() {
            let x = [c[0] + half * xr[0], c[1] + half * xr[1], c[2] + half * xr[2]];
            let w = area_w * wq * g(x, normal);
            for (oi, &phi) in o.iter_mut().zip(&fid_table[fid][q * nl..(q + 1) * nl]) {
                *oi += w * phi;
            }
        }
    }
    out
}
