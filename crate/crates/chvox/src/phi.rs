//! Double-well energy density, its convex-concave split, and the mobility.
//!
//! The chemical energy density is Phi(c) = (c^2 - 1)^2 / 4 with minima at the
//! bulk values c = -1 and c = 1. The time discretization treats the convex
//! part Phi_plus implicitly and the concave part Phi_minus explicitly, which
//! makes the scheme unconditionally energy stable.

/// Chemical energy density Phi(c) = (c^2 - 1)^2 / 4.
pub fn phi(c: f64) -> f64 {
    let s = c * c - 1.0;
    0.25 * s * s
}

/// Convex part Phi_plus(c) = (c^4 + 1) / 4.
pub fn phi_plus(c: f64) -> f64 {
    0.25 * (c * c * c * c + 1.0)
}

/// Concave part Phi_minus(c) = -c^2 / 2.
pub fn phi_minus(c: f64) -> f64 {
    -0.5 * c * c
}

/// First derivative of the full density, Phi'(c) = c^3 - c.
pub fn dphi(c: f64) -> f64 {
    c * c * c - c
}

/// Derivative of the convex part, Phi_plus'(c) = c^3 (implicit in time).
pub fn dphi_plus(c: f64) -> f64 {
    c * c * c
}

/// Derivative of the concave part, Phi_minus'(c) = -c (explicit in time).
pub fn dphi_minus(c: f64) -> f64 {
    -c
}

/// Second derivative of the convex part, Phi_plus''(c) = 3c^2.
pub fn d2phi_plus(c: f64) -> f64 {
    3.0 * c * c
}

/// Mobility M(c) = 1 - beta c^2; beta = 0 is the constant-mobility case.
pub fn mobility(beta: f64, c: f64) -> f64 {
    1.0 - beta * c * c
}

/// Clamped mobility M_plus(c) = max(M(c), 0), the coefficient actually
/// assembled; the clamp keeps the diffusion operator positive semidefinite
/// where the degenerate mobility would turn negative outside [-1, 1].
pub fn mobility_clamped(beta: f64, c: f64) -> f64 {
    mobility(beta, c).max(0.0)
}
