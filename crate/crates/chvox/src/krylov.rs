//! Restarted GMRES with right preconditioning.
//!
//! Right preconditioning keeps the recurrence in the true residual of the
//! original system, so the stopping test needs no back-transformation. The
//! preconditioner is any linear operator approximating the inverse; identity
//! and block-Jacobi variants live here, the tensor-product one in
//! [`crate::fastdiag`].

use crate::operators::{BlockDiagonal, BlockSparseOperator};
use crate::{Error, Result};

/// A linear map y = A x on flat coefficient vectors.
pub trait LinOp {
    /// Vector dimension.
    fn dim(&self) -> usize;
    /// y = A x; `y` is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinOp for BlockSparseOperator {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        BlockSparseOperator::apply(self, x, y);
    }
}

/// Identity preconditioner.
pub struct IdentityPrecond {
    /// Vector dimension.
    pub n: usize,
}

impl LinOp for IdentityPrecond {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Block-Jacobi preconditioner: exact inverses of the diagonal blocks.
pub struct BlockJacobi {
    n_el: usize,
    n_loc: usize,
    inv_blocks: Vec<f64>,
}

impl BlockJacobi {
    /// Invert the given diagonal blocks (row-major, `n_loc` square each).
    pub fn new(diag: &BlockDiagonal) -> Result<Self> {
        let nl = diag.n_loc;
        let mut inv_blocks = vec![0.0; diag.blocks.len()];
        for k in 0..diag.n_el {
            let block = nalgebra::DMatrix::from_row_slice(nl, nl, diag.block(k));
            let inv = block.try_inverse().ok_or_else(|| {
                Error::KrylovFailure(format!("singular diagonal block on element {k}"))
            })?;
            for i in 0..nl {
                for j in 0..nl {
                    inv_blocks[(k * nl + i) * nl + j] = inv[(i, j)];
                }
            }
        }
        Ok(Self { n_el: diag.n_el, n_loc: nl, inv_blocks })
    }
}

impl LinOp for BlockJacobi {
    fn dim(&self) -> usize {
        self.n_el * self.n_loc
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nl = self.n_loc;
        for k in 0..self.n_el {
            let block = &self.inv_blocks[k * nl * nl..(k + 1) * nl * nl];
            let x_k = &x[k * nl..(k + 1) * nl];
            let y_k = &mut y[k * nl..(k + 1) * nl];
            for i in 0..nl {
                let mut acc = 0.0;
                for j in 0..nl {
                    acc += block[i * nl + j] * x_k[j];
                }
                y_k[i] = acc;
            }
        }
    }
}

/// GMRES controls.
#[derive(Debug, Clone)]
pub struct GmresConfig {
    /// Krylov subspace size before a restart.
    pub restart: usize,
    /// Relative residual target (scaled by the right-hand side norm).
    pub rel_tol: f64,
    /// Absolute residual floor.
    pub abs_tol: f64,
    /// Total inner iteration budget across restarts.
    pub max_iters: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self { restart: 60, rel_tol: 1e-8, abs_tol: 1e-14, max_iters: 2000 }
    }
}

/// GMRES outcome; `residual` is the true (unpreconditioned) residual norm.
#[derive(Debug, Clone)]
pub struct GmresResult {
    /// Approximate solution.
    pub x: Vec<f64>,
    /// Inner iterations spent.
    pub iterations: usize,
    /// Final residual 2-norm.
    pub residual: f64,
    /// Whether the tolerance was met.
    pub converged: bool,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Solve A x = b with restarted, right-preconditioned GMRES, starting from
/// `x0`. Stops at max(abs_tol, rel_tol * ||b||).
pub fn gmres(
    op: &dyn LinOp,
    precond: &dyn LinOp,
    b: &[f64],
    x0: &[f64],
    cfg: &GmresConfig,
) -> GmresResult {
    let n = op.dim();
    assert_eq!(b.len(), n);
    assert_eq!(precond.dim(), n);
    let tol = cfg.abs_tol.max(cfg.rel_tol * norm2(b));

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    op.apply(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut beta = norm2(&r);
    let mut iterations = 0;
    if beta <= tol {
        return GmresResult { x, iterations, residual: beta, converged: true };
    }

    let m = cfg.restart.max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut hess = vec![0.0; (m + 1) * m];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];

    'outer: while iterations < cfg.max_iters {
        basis.clear();
        let mut v0 = r.clone();
        for v in v0.iter_mut() {
            *v /= beta;
        }
        basis.push(v0);
        g.fill(0.0);
        g[0] = beta;

        let mut k_used = 0;
        for k in 0..m {
            if iterations >= cfg.max_iters {
                break;
            }
            iterations += 1;
            precond.apply(&basis[k], &mut z);
            op.apply(&z, &mut w);
            // Modified Gram-Schmidt.
            for (j, vj) in basis.iter().enumerate() {
                let hjk: f64 = vj.iter().zip(&w).map(|(a, b)| a * b).sum();
                hess[j * m + k] = hjk;
                for i in 0..n {
                    w[i] -= hjk * vj[i];
                }
            }
            let hnext = norm2(&w);
            hess[(k + 1) * m + k] = hnext;

            // Apply accumulated Givens rotations to the new column.
            for j in 0..k {
                let a = hess[j * m + k];
                let bb = hess[(j + 1) * m + k];
                hess[j * m + k] = cs[j] * a + sn[j] * bb;
                hess[(j + 1) * m + k] = -sn[j] * a + cs[j] * bb;
            }
            let a = hess[k * m + k];
            let rr = (a * a + hnext * hnext).sqrt();
            if rr == 0.0 {
                k_used = k + 1;
                break;
            }
            cs[k] = a / rr;
            sn[k] = hnext / rr;
            hess[k * m + k] = rr;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;

            let est = g[k + 1].abs();
            if est <= tol || hnext == 0.0 {
                break;
            }
            let mut v = w.clone();
            for vi in v.iter_mut() {
                *vi /= hnext;
            }
            basis.push(v);
        }

        if k_used > 0 {
            // Back-substitute the triangular system and expand in the basis.
            let mut y = vec![0.0; k_used];
            for i in (0..k_used).rev() {
                let mut acc = g[i];
                for j in (i + 1)..k_used {
                    acc -= hess[i * m + j] * y[j];
                }
                y[i] = acc / hess[i * m + i];
            }
            z.fill(0.0);
            for (j, &yj) in y.iter().enumerate() {
                for i in 0..n {
                    z[i] += yj * basis[j][i];
                }
            }
            precond.apply(&z, &mut w);
            for i in 0..n {
                x[i] += w[i];
            }
        }

        op.apply(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        beta = norm2(&r);
        if beta <= tol {
            return GmresResult { x, iterations, residual: beta, converged: true };
        }
        if beta == 0.0 {
            break 'outer;
        }
    }
    GmresResult { x, iterations, residual: beta, converged: beta <= tol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use approx::assert_abs_diff_eq;

    struct DenseOp(nalgebra::DMatrix<f64>);

    impl LinOp for DenseOp {
        fn dim(&self) -> usize {
            self.0.nrows()
        }

        fn apply(&self, x: &[f64], y: &mut [f64]) {
            let xv = nalgebra::DVector::from_column_slice(x);
            let yv = &self.0 * xv;
            y.copy_from_slice(yv.as_slice());
        }
    }

    fn random_diag_dominant(n: usize, seed: u64) -> nalgebra::DMatrix<f64> {
        let mut rng = SplitMix64::new(seed);
        let mut a = nalgebra::DMatrix::from_fn(n, n, |_, _| 0.3 * rng.next_symmetric() / n as f64);
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        a
    }

    #[test]
    fn solves_against_dense_factorization() {
        let n = 40;
        let a = random_diag_dominant(n, 9);
        let mut rng = SplitMix64::new(21);
        let b: Vec<f64> = (0..n).map(|_| rng.next_symmetric()).collect();
        let oracle = a
            .clone()
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&b))
            .unwrap();
        let op = DenseOp(a);
        let res = gmres(
            &op,
            &IdentityPrecond { n },
            &b,
            &vec![0.0; n],
            &GmresConfig { rel_tol: 1e-12, ..Default::default() },
        );
        assert!(res.converged);
        for i in 0..n {
            assert_abs_diff_eq!(res.x[i], oracle[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn restarting_still_converges() {
        let n = 40;
        let a = random_diag_dominant(n, 33);
        let mut rng = SplitMix64::new(5);
        let b: Vec<f64> = (0..n).map(|_| rng.next_symmetric()).collect();
        let op = DenseOp(a.clone());
        let cfg = GmresConfig { restart: 5, rel_tol: 1e-10, ..Default::default() };
        let res = gmres(&op, &IdentityPrecond { n }, &b, &vec![0.0; n], &cfg);
        assert!(res.converged, "residual {}", res.residual);
        let mut check = vec![0.0; n];
        op.apply(&res.x, &mut check);
        let defect = check
            .iter()
            .zip(&b)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max);
        assert!(defect < 1e-8);
    }

    #[test]
    fn exact_preconditioner_converges_in_one_iteration() {
        let n = 30;
        let a = random_diag_dominant(n, 77);
        let inv = a.clone().try_inverse().unwrap();
        let mut rng = SplitMix64::new(3);
        let b: Vec<f64> = (0..n).map(|_| rng.next_symmetric()).collect();
        let res = gmres(
            &DenseOp(a),
            &DenseOp(inv),
            &b,
            &vec![0.0; n],
            &GmresConfig::default(),
        );
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn block_jacobi_is_exact_on_block_diagonal_systems() {
        let n_el = 6;
        let nl = 3;
        let mut diag = BlockDiagonal::zeros(n_el, nl);
        let mut rng = SplitMix64::new(55);
        for k in 0..n_el {
            for i in 0..nl {
                for j in 0..nl {
                    let v = 0.2 * rng.next_symmetric() + if i == j { 1.5 } else { 0.0 };
                    diag.blocks[(k * nl + i) * nl + j] = v;
                }
            }
        }
        // Dense copy of the same block-diagonal operator.
        let n = n_el * nl;
        let mut dense = nalgebra::DMatrix::zeros(n, n);
        for k in 0..n_el {
            for i in 0..nl {
                for j in 0..nl {
                    dense[(k * nl + i, k * nl + j)] = diag.block(k)[i * nl + j];
                }
            }
        }
        let pc = BlockJacobi::new(&diag).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.next_symmetric()).collect();
        let res = gmres(&DenseOp(dense), &pc, &b, &vec![0.0; n], &GmresConfig::default());
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn zero_rhs_returns_immediately() {
        let n = 10;
        let a = random_diag_dominant(n, 2);
        let res = gmres(
            &DenseOp(a),
            &IdentityPrecond { n },
            &vec![0.0; n],
            &vec![0.0; n],
            &GmresConfig::default(),
        );
        assert!(res.converged);
        assert_eq!(res.iterations, 0);
        assert!(res.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn iteration_budget_is_honored() {
        let n = 40;
        // Shifted skew block makes a hard, non-normal system.
        let mut a = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            a[(i, i + 1)] = 1.0;
        }
        for i in 0..n {
            a[(i, i)] = 1e-3;
        }
        let b = vec![1.0; n];
        let cfg = GmresConfig { restart: 4, max_iters: 6, rel_tol: 1e-14, abs_tol: 1e-16 };
        let res = gmres(&DenseOp(a), &IdentityPrecond { n }, &b, &vec![0.0; n], &cfg);
        assert!(!res.converged);
        assert!(res.iterations <= 6);
    }

    #[test]
    fn singular_block_is_reported() {
        let diag = BlockDiagonal::zeros(2, 2);
        assert!(BlockJacobi::new(&diag).is_err());
    }
}
