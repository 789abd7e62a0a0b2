//! Non-linear energy-harvesting model: a logistic map from received RF
//! power to harvested DC power, plus the derivative used for tangent cuts
//! and the outer Newton updates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exponent clamp before `exp()`; with charging rates like `a = 6400` the
/// raw exponent overflows f64 for inputs above ~0.11 W.
const EXP_CLAMP: f64 = 700.0;

#[derive(Debug, Error)]
pub enum EhError {
    #[error("received power must be nonnegative, got {0}")]
    NegativePower(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Per-receiver logistic model constants.
///
/// `m_sat` is the saturation power (W), `a` the charging-rate constant
/// (1/W), `b` the turn-on constant (W). `omega()` is the derived
/// normalization `1/(1+exp(a b))`, always recomputed rather than stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EhParams {
    pub m_sat: f64,
    pub a: f64,
    pub b: f64,
}

impl EhParams {
    pub fn new(m_sat: f64, a: f64, b: f64) -> Result<Self, EhError> {
        if !(m_sat > 0.0 && a > 0.0 && b > 0.0)
            || !m_sat.is_finite()
            || !a.is_finite()
            || !b.is_finite()
        {
            return Err(EhError::InvalidParams(format!(
                "need m_sat, a, b > 0 and finite; got ({m_sat}, {a}, {b})"
            )));
        }
        Ok(Self { m_sat, a, b })
    }

    /// Values measured for a 20 mW harvesting circuit: saturation 20 mW,
    /// charging rate 6400 /W, turn-on 3 mW.
    pub fn reference() -> Self {
        Self {
            m_sat: 0.02,
            a: 6400.0,
            b: 0.003,
        }
    }

    pub fn omega(&self) -> f64 {
        logistic(-(self.a * self.b))
    }
}

#[inline]
fn clamped_exp(x: f64) -> f64 {
    x.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
}

/// `1/(1+exp(-x))` with exponent clamping.
#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + clamped_exp(-x))
}

/// Raw logistic output `Psi = M / (1 + exp(-a (P - b)))`.
///
/// `Psi(0) = M * omega` holds bit-exactly because both sides evaluate the
/// same `M * logistic(..)` expression.
pub fn logistic_psi(p_recv: f64, params: &EhParams) -> Result<f64, EhError> {
    if p_recv < 0.0 || !p_recv.is_finite() {
        return Err(EhError::NegativePower(p_recv));
    }
    Ok(params.m_sat * logistic(params.a * (p_recv - params.b)))
}

/// Harvested power `Phi = (Psi - M omega) / (1 - omega)`: zero at zero
/// input, strictly increasing, bounded above by the saturation power.
pub fn harvested_power(p_recv: f64, params: &EhParams) -> Result<f64, EhError> {
    let psi = logistic_psi(p_recv, params)?;
    let omega = params.omega();
    Ok((psi - params.m_sat * omega) / (1.0 - omega))
}

/// Derivative of the parametric objective term
/// `mu [M - beta (1 + exp(-a (tau - b)))]` with respect to `tau`:
/// `mu * beta * a * exp(-a (tau - b))`. Nonnegative and decreasing in
/// `tau` for `mu, beta >= 0`.
pub fn psi_slope(tau: f64, params: &EhParams, mu: f64, beta: f64) -> f64 {
    mu * beta * params.a * clamped_exp(-params.a * (tau - params.b))
}

/// The factor `C(tau) = 1 + exp(-a (tau - b))` shared by the parametric
/// objective and the outer-loop optimality system.
pub fn sigmoid_factor(tau: f64, params: &EhParams) -> f64 {
    1.0 + clamped_exp(-params.a * (tau - params.b))
}

/// Objective term `mu [M - beta C(tau)]` of the parametric transformation.
pub fn parametric_term(tau: f64, params: &EhParams, mu: f64, beta: f64) -> f64 {
    mu * (params.m_sat - beta * sigmoid_factor(tau, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn psi_at_turn_on_is_half_saturation() {
        let p = EhParams::reference();
        assert_relative_eq!(logistic_psi(p.b, &p).unwrap(), p.m_sat / 2.0, epsilon = 1e-18);
    }

    #[test]
    fn psi_at_zero_is_m_omega_exactly() {
        let p = EhParams::reference();
        assert_eq!(logistic_psi(0.0, &p).unwrap(), p.m_sat * p.omega());
    }

    #[test]
    fn psi_reference_params_near_saturation() {
        // P = 0.01 W: Psi = 0.02 (1 + e^{-44.8})^{-1}, within 1e-12 of 0.02.
        let p = EhParams::reference();
        let psi = logistic_psi(0.01, &p).unwrap();
        let exact = 0.02 / (1.0 + (-44.8f64).exp());
        assert_relative_eq!(psi, exact, epsilon = 1e-15);
        assert!((psi - 0.02).abs() < 1e-12);
    }

    #[test]
    fn phi_zero_input_is_exactly_zero() {
        let p = EhParams::reference();
        assert_eq!(harvested_power(0.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn phi_at_turn_on_matches_scalar_evaluation() {
        let p = EhParams::reference();
        let omega = p.omega();
        let expect = (0.01 - 0.02 * omega) / (1.0 - omega);
        let phi = harvested_power(p.b, &p).unwrap();
        assert_relative_eq!(phi, expect, epsilon = 1e-14);
        // omega ~ 4.6e-9 makes this 0.01 W to 8 significant digits
        assert_relative_eq!(phi, 0.01, epsilon = 1e-8);
    }

    #[test]
    fn phi_saturates() {
        let p = EhParams::reference();
        let phi = harvested_power(0.02, &p).unwrap();
        assert!((phi - 0.02).abs() < 1e-9);
    }

    #[test]
    fn negative_power_rejected() {
        let p = EhParams::reference();
        assert!(logistic_psi(-1e-9, &p).is_err());
        assert!(harvested_power(-1.0, &p).is_err());
    }

    #[test]
    fn phi_increasing_and_bounded_on_grid() {
        // Beyond a(P-b) ~ 36 the logistic deficit is below one ulp of M, so
        // correctly rounded Phi values tie at the saturation value; strict
        // increase is only representable below that point.
        let p = EhParams::reference();
        let representable = |x: f64| p.a * (x - p.b) < 33.0;
        let mut prev = -1.0;
        let mut prev_x = 0.0;
        for k in 0..=1000 {
            let x = k as f64 / 1000.0; // [0, 1] W
            let phi = harvested_power(x, &p).unwrap();
            if representable(x) {
                assert!(phi > prev, "not strictly increasing at {x}");
            } else {
                assert!(phi >= prev, "decreasing at {x}");
            }
            assert!(phi >= 0.0 && phi <= p.m_sat);
            if representable(x) && x > 0.0 {
                assert!(phi < p.m_sat);
            }
            prev = phi;
            prev_x = x;
        }
        let _ = prev_x;
    }

    #[test]
    fn ranking_by_psi_equals_ranking_by_phi() {
        // Phi is affine increasing in Psi, so orderings of candidate designs
        // coincide when all receivers share (a, b, M).
        let p = EhParams::reference();
        let mut rng = rand::thread_rng();
        let candidates: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..4).map(|_| rng.gen::<f64>() * 0.02).collect())
            .collect();
        let psi_tot = |c: &Vec<f64>| -> f64 {
            c.iter().map(|&x| logistic_psi(x, &p).unwrap()).sum()
        };
        let phi_tot = |c: &Vec<f64>| -> f64 {
            c.iter().map(|&x| harvested_power(x, &p).unwrap()).sum()
        };
        let mut by_psi: Vec<usize> = (0..candidates.len()).collect();
        by_psi.sort_by(|&i, &j| psi_tot(&candidates[i]).total_cmp(&psi_tot(&candidates[j])));
        let mut by_phi: Vec<usize> = (0..candidates.len()).collect();
        by_phi.sort_by(|&i, &j| phi_tot(&candidates[i]).total_cmp(&phi_tot(&candidates[j])));
        assert_eq!(by_psi, by_phi);
    }

    #[test]
    fn slope_zero_beta() {
        let p = EhParams::reference();
        assert_eq!(psi_slope(0.001, &p, 0.7, 0.0), 0.0);
    }

    #[test]
    fn slope_at_turn_on() {
        let p = EhParams::reference();
        let (mu, beta) = (0.8, 0.013);
        assert_relative_eq!(psi_slope(p.b, &p, mu, beta), mu * beta * p.a, epsilon = 1e-12);
    }

    #[test]
    fn slope_matches_finite_difference() {
        // Moderate rate keeps the central difference well conditioned.
        let p = EhParams::new(0.02, 40.0, 0.05).unwrap();
        let mut rng = rand::thread_rng();
        for _ in 0..50 {
            let tau = rng.gen::<f64>() * 0.2;
            let mu = rng.gen::<f64>();
            let beta = rng.gen::<f64>() * 0.05;
            let h = 1e-6;
            let f = |t: f64| parametric_term(t, &p, mu, beta);
            let fd = (f(tau + h) - f(tau - h)) / (2.0 * h);
            let slope = psi_slope(tau, &p, mu, beta);
            if fd.abs() > 1e-12 {
                assert_relative_eq!(slope, fd, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn extreme_inputs_do_not_overflow() {
        let p = EhParams::reference();
        assert!(logistic_psi(5.0, &p).unwrap().is_finite());
        assert!(harvested_power(1e3, &p).unwrap().is_finite());
        assert!(psi_slope(-10.0, &p, 1.0, 1.0).is_finite());
        assert!(sigmoid_factor(-1.0, &p).is_finite());
    }
}
