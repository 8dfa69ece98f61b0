//! Tensor-product fast-diagonalization preconditioner for the Schur system.
//!
//! The dominant part of the reduced per-step operator is alpha I + kappa
//! z A^2 with A the unit-weight diffusion form. On the full cube that form
//! is a Kronecker sum of one identical 1D interior-penalty matrix per axis,
//! (h^2/4)(S (+) S (+) S) on the tensor-product space, so one symmetric
//! eigendecomposition S = V L V^T diagonalizes the whole model operator:
//! solving means three small dense multiplications per direction, a pointwise
//! scale by 1/(alpha + kappa z (L_i+L_j+L_k)^2), and three multiplications
//! back.
//!
//! Total-degree coefficients are zero-padded into the tensor space and
//! restricted back afterwards, and masked grids are handled the same way
//! (solid voxels padded with zeros), which keeps the map symmetric positive
//! definite in every case. The approximation ignores advection, boundary
//! penalties, the Newton term, and mobility variation (a mean value stands
//! in), so it degrades gracefully rather than failing when those matter;
//! at order zero with constant mobility on the full cube it is exact.

use std::cell::RefCell;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::basis::{legendre_normalized_all, ReferenceBasis};
use crate::grid::VoxelGrid;
use crate::krylov::LinOp;

/// 1D interior-penalty stiffness matrix on `n` cells of size `h` at degree
/// `p`, in the per-cell normalized Legendre basis (1D mass = (h/2) I).
fn assemble_1d_sipg(n: usize, p: usize, h: f64, sigma: f64) -> DMatrix<f64> {
    let pd = p + 1;
    let m = n * pd;
    let mut s = DMatrix::zeros(m, m);

    // Volume: (2/h) int p'_a p'_b over the reference cell.
    let quad = crate::basis::QuadratureRule::gauss_legendre(p + 2);
    let mut vol = vec![0.0; pd * pd];
    for (x, w) in quad.points.iter().zip(&quad.weights) {
        let (_, der) = legendre_normalized_all(p, *x);
        for a in 0..pd {
            for b in 0..pd {
                vol[a * pd + b] += w * der[a] * der[b];
            }
        }
    }
    for e in 0..n {
        for a in 0..pd {
            for b in 0..pd {
                s[(e * pd + a, e * pd + b)] += (2.0 / h) * vol[a * pd + b];
            }
        }
    }

    // Interior cell interfaces: jump/average point terms.
    let (val_r, der_r) = legendre_normalized_all(p, 1.0);
    let (val_l, der_l) = legendre_normalized_all(p, -1.0);
    let penalty = sigma / h;
    let dscale = 2.0 / h;
    for e in 0..n.saturating_sub(1) {
        // Trace sign T and averaged physical derivative D per local dof:
        // the left cell's dofs first, then the right cell's.
        let mut trace = vec![0.0; 2 * pd];
        let mut avg_d = vec![0.0; 2 * pd];
        for a in 0..pd {
            trace[a] = val_r[a];
            avg_d[a] = 0.5 * dscale * der_r[a];
            trace[pd + a] = -val_l[a];
            avg_d[pd + a] = 0.5 * dscale * der_l[a];
        }
        for i in 0..2 * pd {
            let gi = e * pd + i;
            for j in 0..2 * pd {
                let gj = e * pd + j;
                s[(gi, gj)] +=
                    -avg_d[j] * trace[i] - avg_d[i] * trace[j] + penalty * trace[i] * trace[j];
            }
        }
    }
    s
}

struct Scratch {
    tensor: Vec<f64>,
    tmp: Vec<f64>,
}

/// The fast-diagonalization preconditioner; build once per (grid, degree,
/// penalty), update the scalar coefficients every step.
pub struct FastDiag {
    pd: usize,
    m: usize,
    n_loc: usize,
    /// Eigenvector matrix of the 1D factor.
    v: DMatrix<f64>,
    /// Its transpose, kept explicitly for the forward transforms.
    vt: DMatrix<f64>,
    /// Per-direction eigenvalues already scaled by h^2/4.
    s_eig: Vec<f64>,
    /// Identity shift of the model operator.
    alpha: f64,
    /// Coefficient of the squared diffusion term (kappa times mean weight).
    kappa_z: f64,
    /// Tensor slot offset of each total-degree mode.
    mode_offset: Vec<[usize; 3]>,
    /// Element list as voxel tuples.
    voxels: Vec<(usize, usize, usize)>,
    scratch: RefCell<Scratch>,
}

impl FastDiag {
    /// Eigendecompose the 1D factor for this grid and basis.
    pub fn new(grid: &VoxelGrid, basis: &ReferenceBasis, sigma: f64) -> Self {
        let n = grid.n;
        let pd = basis.p + 1;
        let m = n * pd;
        let s = assemble_1d_sipg(n, basis.p, grid.h, sigma);
        let eig = SymmetricEigen::new(s);
        let scale = grid.h * grid.h / 4.0;
        let s_eig: Vec<f64> = eig.eigenvalues.iter().map(|l| scale * l).collect();
        let v = eig.eigenvectors;
        let vt = v.transpose();
        let mode_offset = basis
            .modes
            .iter()
            .map(|mo| [mo[0] as usize, mo[1] as usize, mo[2] as usize])
            .collect();
        let voxels = (0..grid.n_elements()).map(|k| grid.voxel_of(k)).collect();
        let len = m * m * m;
        Self {
            pd,
            m,
            n_loc: basis.n_loc,
            v,
            vt,
            s_eig,
            alpha: 1.0,
            kappa_z: 0.0,
            mode_offset,
            voxels,
            scratch: RefCell::new(Scratch { tensor: vec![0.0; len], tmp: vec![0.0; len] }),
        }
    }

    /// Set the model coefficients: identity shift and squared-diffusion
    /// weight (kappa times the mean diffusion coefficient).
    pub fn set_coefficients(&mut self, alpha: f64, kappa_z: f64) {
        assert!(alpha > 0.0, "the identity shift must be positive");
        self.alpha = alpha;
        self.kappa_z = kappa_z.max(0.0);
    }

    /// One Kronecker factor applied to the leading axis, output rotated so
    /// the next axis becomes leading: out[y,z,x] = sum_i mat[x,i] t[i,y,z].
    fn axis_apply(&self, mat: &DMatrix<f64>, src: &[f64], dst: &mut [f64]) {
        let m = self.m;
        let mm = m * m;
        // GEMM: view src as (m, m^2) column-major, then rotate the result.
        let src_mat = DMatrix::from_column_slice(m, mm, src);
        let out = mat * src_mat;
        for x in 0..m {
            for c in 0..mm {
                dst[c + mm * x] = out[(x, c)];
            }
        }
    }

    fn tensor_len(&self) -> usize {
        self.m * self.m * self.m
    }
}

impl LinOp for FastDiag {
    fn dim(&self) -> usize {
        self.voxels.len() * self.n_loc
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut sc = self.scratch.borrow_mut();
        let Scratch { tensor, tmp } = &mut *sc;
        let m = self.m;
        let pd = self.pd;

        tensor[..self.tensor_len()].fill(0.0);
        for (k, &(ex, ey, ez)) in self.voxels.iter().enumerate() {
            for (i, off) in self.mode_offset.iter().enumerate() {
                let ix = ex * pd + off[0];
                let iy = ey * pd + off[1];
                let iz = ez * pd + off[2];
                tensor[ix + m * iy + m * m * iz] = x[k * self.n_loc + i];
            }
        }

        for _ in 0..3 {
            self.axis_apply(&self.vt, tensor, tmp);
            std::mem::swap(tensor, tmp);
        }
        for iz in 0..m {
            for iy in 0..m {
                let base = m * iy + m * m * iz;
                let syz = self.s_eig[iy] + self.s_eig[iz];
                for ix in 0..m {
                    let lam = self.s_eig[ix] + syz;
                    tensor[base + ix] /= self.alpha + self.kappa_z * lam * lam;
                }
            }
        }
        for _ in 0..3 {
            self.axis_apply(&self.v, tensor, tmp);
            std::mem::swap(tensor, tmp);
        }

        for (k, &(ex, ey, ez)) in self.voxels.iter().enumerate() {
            for (i, off) in self.mode_offset.iter().enumerate() {
                let ix = ex * pd + off[0];
                let iy = ey * pd + off[1];
                let iz = ez * pd + off[2];
                y[k * self.n_loc + i] = tensor[ix + m * iy + m * m * iz];
            }
        }
    }
}
