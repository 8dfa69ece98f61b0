//! Hierarchical modal basis on the reference cube, quadrature, and L2
//! projection.
//!
//! The basis functions are tensor products of L2-normalized Legendre
//! polynomials on [-1,1], restricted to total degree <= p, so a field of
//! order p carries N_loc = (p+1)(p+2)(p+3)/6 coefficients per element and the
//! element mass matrix is (h^3/8) times the identity. Modes are ordered by
//! total degree first (hierarchy: the leading modes of a degree-p basis span
//! every lower-degree space), then lexicographically in the exponent triple.

use crate::grid::VoxelGrid;

/// Number of local degrees of freedom for total degree p.
pub fn n_loc(p: usize) -> usize {
    (p + 1) * (p + 2) * (p + 3) / 6
}

/// Value of the constant reference basis function, 1/(2 sqrt 2).
pub const PHI0: f64 = 0.3535533905932738;

/// Tensorized Gauss-Legendre quadrature data; `points`/`weights` are the 1D
/// rule, exact for 1D polynomials of degree <= 2 n_q - 1.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Points per direction.
    pub n_q: usize,
    /// 1D Gauss points in (-1, 1), ascending.
    pub points: Vec<f64>,
    /// 1D Gauss weights (sum = 2).
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Gauss-Legendre rule with `n` points, nodes found by Newton iteration
    /// on the Legendre polynomial.
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one point");
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Standard initial guess for the i-th root (descending order).
            let mut x = (std::f64::consts::PI * (4.0 * i as f64 + 3.0) / (4.0 * n as f64 + 2.0)).cos();
            for _ in 0..100 {
                let (pn, dpn) = legendre_with_derivative(n, x);
                let dx = pn / dpn;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dpn) = legendre_with_derivative(n, x);
            points[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dpn * dpn);
        }
        // Roots were generated in descending order; store ascending.
        points.reverse();
        weights.reverse();
        Self { n_q: n, points, weights }
    }
}

/// Rule used by the solver for degree p: n_q = max(1, 2p+1) points per
/// direction, which integrates the quartic nonlinear terms exactly.
pub fn quadrature_rule(p: usize) -> QuadratureRule {
    QuadratureRule::gauss_legendre((2 * p + 1).max(1))
}

/// Plain Legendre P_n and its derivative at x via the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    for k in 1..n {
        let next = ((2 * k + 1) as f64 * x * p - k as f64 * p_prev) / (k + 1) as f64;
        p_prev = p;
        p = next;
    }
    // P'_n(x) = n (x P_n - P_{n-1}) / (x^2 - 1).
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Values and derivatives of the normalized Legendre polynomials up to
/// degree `max_deg` at a point.
pub(crate) fn legendre_normalized_all(max_deg: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let mut vals = vec![0.0; max_deg + 1];
    let mut ders = vec![0.0; max_deg + 1];
    let mut p_prev = 1.0;
    let mut p = x;
    let mut dp_prev = 0.0;
    let mut dp = 1.0;
    vals[0] = p_prev;
    ders[0] = dp_prev;
    if max_deg >= 1 {
        vals[1] = p;
        ders[1] = dp;
    }
    for k in 1..max_deg {
        let next = ((2 * k + 1) as f64 * x * p - k as f64 * p_prev) / (k + 1) as f64;
        let dnext = ((2 * k + 1) as f64 * (p + x * dp) - k as f64 * dp_prev) / (k + 1) as f64;
        p_prev = p;
        p = next;
        dp_prev = dp;
        dp = dnext;
        vals[k + 1] = p;
        ders[k + 1] = dp;
    }
    for d in 0..=max_deg {
        let scale = ((2 * d + 1) as f64 / 2.0).sqrt();
        vals[d] *= scale;
        ders[d] *= scale;
    }
    (vals, ders)
}

/// Reference basis of total degree p with precomputed volume and face
/// evaluation tables at the solver quadrature points.
#[derive(Debug, Clone)]
pub struct ReferenceBasis {
    /// Polynomial degree.
    pub p: usize,
    /// Local degrees of freedom, (p+1)(p+2)(p+3)/6.
    pub n_loc: usize,
    /// Exponent triples (a, b, c), graded lexicographic.
    pub modes: Vec<[u8; 3]>,
    /// Solver quadrature rule (n_q = max(1, 2p+1) per direction).
    pub quad: QuadratureRule,
    /// Volume values: [mode * n_q^3 + q].
    vol_values: Vec<f64>,
    /// Volume reference gradients: [(mode * n_q^3 + q) * 3 + d].
    vol_grads: Vec<f64>,
    /// Face values per face id (2*axis + positive): [mode * n_q^2 + q].
    face_values: [Vec<f64>; 6],
    /// Face reference gradients per face id.
    face_grads: [Vec<f64>; 6],
}

impl ReferenceBasis {
    /// Build the degree-p basis with its quadrature tables.
    pub fn new(p: usize) -> Self {
        let modes = mode_triples(p);
        let nl = modes.len();
        let quad = quadrature_rule(p);
        let nq = quad.n_q;

        let nv = nq * nq * nq;
        let mut vol_values = vec![0.0; nl * nv];
        let mut vol_grads = vec![0.0; nl * nv * 3];
        for qz in 0..nq {
            for qy in 0..nq {
                for qx in 0..nq {
                    let q = qx + nq * (qy + nq * qz);
                    let point = [quad.points[qx], quad.points[qy], quad.points[qz]];
                    for (m, mode) in modes.iter().enumerate() {
                        vol_values[m * nv + q] = eval_mode(*mode, point);
                        let g = eval_mode_grad(*mode, point);
                        vol_grads[(m * nv + q) * 3..(m * nv + q) * 3 + 3].copy_from_slice(&g);
                    }
                }
            }
        }

        let nf = nq * nq;
        let mut face_values: [Vec<f64>; 6] = Default::default();
        let mut face_grads: [Vec<f64>; 6] = Default::default();
        for axis in 0..3usize {
            for positive in [false, true] {
                let fid = 2 * axis + usize::from(positive);
                let side = if positive { 1.0 } else { -1.0 };
                let (t1, t2) = tangential_axes(axis);
                let mut values = vec![0.0; nl * nf];
                let mut grads = vec![0.0; nl * nf * 3];
                for q2 in 0..nq {
                    for q1 in 0..nq {
                        let q = q1 + nq * q2;
                        let mut point = [0.0; 3];
                        point[axis] = side;
                        point[t1] = quad.points[q1];
                        point[t2] = quad.points[q2];
                        for (m, mode) in modes.iter().enumerate() {
                            values[m * nf + q] = eval_mode(*mode, point);
                            let g = eval_mode_grad(*mode, point);
                            grads[(m * nf + q) * 3..(m * nf + q) * 3 + 3].copy_from_slice(&g);
                        }
                    }
                }
                face_values[fid] = values;
                face_grads[fid] = grads;
            }
        }

        Self { p, n_loc: nl, modes, quad, vol_values, vol_grads, face_values, face_grads }
    }

    /// Number of volume quadrature points.
    pub fn n_volume_points(&self) -> usize {
        self.quad.n_q.pow(3)
    }

    /// Number of face quadrature points.
    pub fn n_face_points(&self) -> usize {
        self.quad.n_q.pow(2)
    }

    /// Tensor weight of a volume quadrature point.
    pub fn volume_weight(&self, q: usize) -> f64 {
        let nq = self.quad.n_q;
        let (qx, qy, qz) = (q % nq, (q / nq) % nq, q / (nq * nq));
        self.quad.weights[qx] * self.quad.weights[qy] * self.quad.weights[qz]
    }

    /// Reference coordinates of a volume quadrature point.
    pub fn volume_point(&self, q: usize) -> [f64; 3] {
        let nq = self.quad.n_q;
        let (qx, qy, qz) = (q % nq, (q / nq) % nq, q / (nq * nq));
        [self.quad.points[qx], self.quad.points[qy], self.quad.points[qz]]
    }

    /// Tensor weight of a face quadrature point.
    pub fn face_weight(&self, q: usize) -> f64 {
        let nq = self.quad.n_q;
        self.quad.weights[q % nq] * self.quad.weights[q / nq]
    }

    /// Reference coordinates of a face quadrature point on the given face.
    pub fn face_point(&self, face_id: usize, q: usize) -> [f64; 3] {
        let nq = self.quad.n_q;
        let axis = face_id / 2;
        let side = if face_id % 2 == 1 { 1.0 } else { -1.0 };
        let (t1, t2) = tangential_axes(axis);
        let mut point = [0.0; 3];
        point[axis] = side;
        point[t1] = self.quad.points[q % nq];
        point[t2] = self.quad.points[q / nq];
        point
    }

    /// Basis value of `mode` at volume point `q`.
    pub fn vol_value(&self, mode: usize, q: usize) -> f64 {
        self.vol_values[mode * self.n_volume_points() + q]
    }

    /// Reference gradient of `mode` at volume point `q`.
    pub fn vol_grad(&self, mode: usize, q: usize) -> [f64; 3] {
        let base = (mode * self.n_volume_points() + q) * 3;
        [self.vol_grads[base], self.vol_grads[base + 1], self.vol_grads[base + 2]]
    }

    /// Basis value of `mode` at face point `q` of face `face_id = 2*axis + positive`.
    pub fn face_value(&self, face_id: usize, mode: usize, q: usize) -> f64 {
        self.face_values[face_id][mode * self.n_face_points() + q]
    }

    /// Reference gradient of `mode` at a face point.
    pub fn face_grad(&self, face_id: usize, mode: usize, q: usize) -> [f64; 3] {
        let base = (mode * self.n_face_points() + q) * 3;
        let g = &self.face_grads[face_id];
        [g[base], g[base + 1], g[base + 2]]
    }

    /// Field values of one element's coefficients at all volume points.
    pub fn field_at_volume_points(&self, coeffs: &[f64], out: &mut [f64]) {
        let nv = self.n_volume_points();
        out[..nv].fill(0.0);
        for (m, &c) in coeffs.iter().enumerate() {
            let row = &self.vol_values[m * nv..(m + 1) * nv];
            for q in 0..nv {
                out[q] += c * row[q];
            }
        }
    }

    /// Field values of one element's coefficients at all points of a face.
    pub fn field_at_face_points(&self, face_id: usize, coeffs: &[f64], out: &mut [f64]) {
        let nf = self.n_face_points();
        out[..nf].fill(0.0);
        for (m, &c) in coeffs.iter().enumerate() {
            let row = &self.face_values[face_id][m * nf..(m + 1) * nf];
            for q in 0..nf {
                out[q] += c * row[q];
            }
        }
    }
}

/// Exponent triples with a+b+c <= p: total degree ascending, then
/// lexicographic in (a, b, c).
pub fn mode_triples(p: usize) -> Vec<[u8; 3]> {
    let mut modes = Vec::with_capacity(n_loc(p));
    for d in 0..=p {
        for a in 0..=d {
            for b in 0..=(d - a) {
                let c = d - a - b;
                modes.push([a as u8, b as u8, c as u8]);
            }
        }
    }
    modes
}

/// The two axes tangential to `axis`, ascending.
pub fn tangential_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        2 => (0, 1),
        _ => unreachable!("axis must be 0, 1, or 2"),
    }
}

/// Evaluate one basis mode at a reference point.
pub fn eval_mode(mode: [u8; 3], x: [f64; 3]) -> f64 {
    let deg = mode.iter().copied().max().unwrap() as usize;
    let mut value = 1.0;
    for d in 0..3 {
        let (vals, _) = legendre_normalized_all(deg, x[d]);
        value *= vals[mode[d] as usize];
    }
    value
}

/// Reference gradient of one basis mode at a reference point.
pub fn eval_mode_grad(mode: [u8; 3], x: [f64; 3]) -> [f64; 3] {
    let deg = mode.iter().copied().max().unwrap() as usize;
    let mut vbuf: [Vec<f64>; 3] = Default::default();
    let mut dbuf: [Vec<f64>; 3] = Default::default();
    for d in 0..3 {
        let (v, dv) = legendre_normalized_all(deg, x[d]);
        vbuf[d] = v;
        dbuf[d] = dv;
    }
    let value = |d: usize, k: usize| vbuf[d][k];
    let deriv = |d: usize, k: usize| dbuf[d][k];
    let (a, b, c) = (mode[0] as usize, mode[1] as usize, mode[2] as usize);
    [
        deriv(0, a) * value(1, b) * value(2, c),
        value(0, a) * deriv(1, b) * value(2, c),
        value(0, a) * value(1, b) * deriv(2, c),
    ]
}

/// Broken-polynomial field: `coeffs[element * n_loc + mode]`.
#[derive(Debug, Clone)]
pub struct DGField {
    /// Elements in the underlying grid.
    pub n_el: usize,
    /// Local degrees of freedom.
    pub n_loc: usize,
    /// Modal coefficients, element-major.
    pub coeffs: Vec<f64>,
}

impl DGField {
    /// All-zero field.
    pub fn zeros(n_el: usize, n_loc: usize) -> Self {
        Self { n_el, n_loc, coeffs: vec![0.0; n_el * n_loc] }
    }

    /// Coefficient slice of one element.
    pub fn element(&self, k: usize) -> &[f64] {
        &self.coeffs[k * self.n_loc..(k + 1) * self.n_loc]
    }

    /// Field value on element `k` at reference point `x`.
    pub fn value_at(&self, basis: &ReferenceBasis, k: usize, x: [f64; 3]) -> f64 {
        self.element(k)
            .iter()
            .zip(&basis.modes)
            .map(|(&c, &m)| c * eval_mode(m, x))
            .sum()
    }

    /// Mean value over element `k` (only the constant mode contributes).
    pub fn element_mean(&self, k: usize) -> f64 {
        self.coeffs[k * self.n_loc] * PHI0
    }
}

/// L2 projection of a function onto the broken space: the orthonormal basis
/// turns the projection into plain quadrature, c_ki = int_ref f(F_k(x)) phi_i.
pub fn l2_project<F: Fn([f64; 3]) -> f64>(grid: &VoxelGrid, basis: &ReferenceBasis, f: F) -> DGField {
    let mut field = DGField::zeros(grid.n_elements(), basis.n_loc);
    let half = 0.5 * grid.h;
    let nv = basis.n_volume_points();
    for k in 0..grid.n_elements() {
        let c = grid.centroid(k);
        let coeffs = &mut field.coeffs[k * basis.n_loc..(k + 1) * basis.n_loc];
        for q in 0..nv {
            let xr = basis.volume_point(q);
            let x = [c[0] + half * xr[0], c[1] + half * xr[1], c[2] + half * xr[2]];
            let w = basis.volume_weight(q) * f(x);
            for (i, ci) in coeffs.iter_mut().enumerate() {
                *ci += w * basis.vol_value(i, q);
            }
        }
    }
    field
}

/// Exact projection of voxel-wise constant data (only mode 0 is set).
pub fn project_element_constants(grid: &VoxelGrid, basis: &ReferenceBasis, values: &[f64]) -> DGField {
    assert_eq!(values.len(), grid.n_elements());
    let mut field = DGField::zeros(grid.n_elements(), basis.n_loc);
    for (k, &v) in values.iter().enumerate() {
        field.coeffs[k * basis.n_loc] = v / PHI0;
    }
    field
}
