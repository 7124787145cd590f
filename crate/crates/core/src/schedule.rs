//! Derived parameters and learning-rate weight sequences for the UCB
//! Q-learner.
//!
//! Everything here is a closed-form function of `(epsilon, gamma, delta)`; the
//! weight sequences `alpha_t^i` are exposed so their properties can be checked
//! numerically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const C2: f64 = 5.656854249492380195; // 4 * sqrt(2)
pub const C3: f64 = 3.0 * C2;

/// The full parameter chain driving the learner: target accuracy split
/// (`epsilon2`), lookahead window `R`, doubling levels `L`, tail threshold
/// `xi_l`, segment count `M`, internal accuracy `epsilon1`, and the rate
/// horizon `H` (kept real-valued; the schedule never needs an integer).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub epsilon: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon2: f64,
    pub r_horizon: u64,
    pub l_levels: u32,
    pub xi_l: f64,
    pub m_segments: u64,
    pub epsilon1: f64,
    pub h_rate: f64,
    pub c2: f64,
    pub c3: f64,
}

/// Compute the parameter chain. Requires `epsilon > 0`, `1/2 < gamma < 1`,
/// `0 < delta < 1`.
pub fn derive_params(epsilon: f64, gamma: f64, delta: f64) -> Result<DerivedParams> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} must be positive")));
    }
    if !(gamma > 0.5 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma {gamma} outside (1/2, 1); the guarantee only covers that range"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} outside (0, 1)")));
    }
    let epsilon2 = epsilon / 3.0;
    let r_real = ((1.0 / (epsilon2 * (1.0 - gamma))).ln() / (1.0 - gamma)).ceil();
    let r_horizon = if r_real >= 1.0 { r_real as u64 } else { 1 };
    let l_levels = 63 - r_horizon.leading_zeros(); // floor(log2 R)
    let ln_inv_one_minus_gamma = (1.0 / (1.0 - gamma)).ln();
    let xi_l = epsilon2 / (2f64.powi(l_levels as i32 + 2) * ln_inv_one_minus_gamma);
    let m_ceil = (2.0 * (1.0 / (xi_l * (1.0 - gamma))).log2()).ceil();
    let m_segments = (m_ceil.max(0.0) as u64).max(10);
    let epsilon1 =
        epsilon / (24.0 * r_horizon as f64 * m_segments as f64 * ln_inv_one_minus_gamma);
    let h_rate = (1.0 / ((1.0 - gamma) * epsilon1)).ln() / (1.0 / gamma).ln();
    Ok(DerivedParams {
        epsilon,
        gamma,
        delta,
        epsilon2,
        r_horizon,
        l_levels,
        xi_l,
        m_segments,
        epsilon1,
        h_rate,
        c2: C2,
        c3: C3,
    })
}

/// Learning rate `alpha_k = (H+1)/(H+k)` for the k-th visit.
pub fn alpha(k: u64, h: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("alpha requires k >= 1".into()));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("h {h} must be positive")));
    }
    Ok((h + 1.0) / (h + k as f64))
}

/// The weight vector `(alpha_t^0, ..., alpha_t^t)` induced by the schedule,
/// computed by the forward recursion `alpha_t^i = (1 - alpha_t) alpha_{t-1}^i`
/// to avoid product underflow.
pub fn alpha_weights(t: u64, h: f64) -> Vec<f64> {
    let mut w = vec![1.0];
    for k in 1..=t {
        let a = (h + 1.0) / (h + k as f64);
        for x in w.iter_mut() {
            *x *= 1.0 - a;
        }
        w.push(a);
    }
    w
}

/// Log factor `iota(k) = ln(S A (k+1)(k+2) / delta)`.
pub fn iota(k: u64, num_states: usize, num_actions: usize, delta: f64) -> f64 {
    let k = k as f64;
    ((num_states * num_actions) as f64 * (k + 1.0) * (k + 2.0) / delta).ln()
}

/// Exploration bonus `b_k = (c2/(1-gamma)) sqrt(H iota(k) / k)`.
pub fn bonus(
    k: u64,
    h: f64,
    num_states: usize,
    num_actions: usize,
    delta: f64,
    gamma: f64,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("bonus requires k >= 1".into()));
    }
    let i = iota(k, num_states, num_actions, delta);
    Ok(C2 / (1.0 - gamma) * (h * i / k as f64).sqrt())
}

/// Diagnostic concentration width `beta_t = (c3/(1-gamma)) sqrt(H iota(t) / t)`;
/// equals `3 b_t` by `c3 = 3 c2`.
pub fn beta(
    t: u64,
    h: f64,
    num_states: usize,
    num_actions: usize,
    delta: f64,
    gamma: f64,
) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidParameter("beta requires t >= 1".into()));
    }
    let i = iota(t, num_states, num_actions, delta);
    Ok(C3 / (1.0 - gamma) * (h * i / t as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn parameter_chain_reference_point() {
        // Independent recomputation of the chain for epsilon=0.1, gamma=0.9,
        // delta=0.05, frozen below.
        let p = derive_params(0.1, 0.9, 0.05).unwrap();
        assert!(rel_close(p.epsilon2, 0.1 / 3.0, 1e-12));
        assert_eq!(p.r_horizon, 58);
        assert_eq!(p.l_levels, 5);
        assert!(rel_close(p.xi_l, 1.1310e-4, 1e-4), "xi_l = {}", p.xi_l);
        assert_eq!(p.m_segments, 33);
        assert!(rel_close(p.epsilon1, 9.454e-7, 1e-3), "epsilon1 = {}", p.epsilon1);
        assert!(rel_close(p.h_rate, 153.5, 1e-3), "h = {}", p.h_rate);
        assert!(p.epsilon1 < p.epsilon);
        assert_eq!(p.c3, 3.0 * p.c2);
    }

    #[test]
    fn m_floor_applies() {
        // gamma barely above 1/2 and large epsilon make the ceil term small
        let p = derive_params(0.9, 0.51, 0.1).unwrap();
        assert!(p.m_segments >= 10);
        // direct check of the floor on a synthetic small ceil value
        let xi = 0.9 / 3.0; // large xi => small log term
        let m_ceil = (2.0 * (1.0 / (xi * 0.49)).log2()).ceil();
        assert!(m_ceil < 10.0 || p.m_segments == m_ceil.max(10.0) as u64);
    }

    #[test]
    fn gamma_range_enforced() {
        assert!(derive_params(0.1, 0.5, 0.05).is_err());
        assert!(derive_params(0.1, 1.0, 0.05).is_err());
        assert!(derive_params(0.1, 0.4, 0.05).is_err());
        assert!(derive_params(-0.1, 0.9, 0.05).is_err());
    }

    #[test]
    fn alpha_basic_values() {
        assert_eq!(alpha(1, 7.3).unwrap(), 1.0);
        assert!((alpha(2, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(alpha(0, 1.0).is_err());
        let mut prev = 1.0;
        for k in 2..1000 {
            let a = alpha(k, 10.0).unwrap();
            assert!(a < prev);
            prev = a;
        }
        assert!(alpha(1_000_000, 10.0).unwrap() < 1e-4);
    }

    #[test]
    fn alpha_weights_small_cases() {
        assert_eq!(alpha_weights(0, 1.0), vec![1.0]);
        assert_eq!(alpha_weights(1, 1.0), vec![0.0, 1.0]);
        let w = alpha_weights(2, 1.0);
        assert!((w[0]).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[2] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bonus_reference_point() {
        let b = bonus(1, 100.0, 3, 2, 0.05, 0.9).unwrap();
        let iota1 = (720.0f64).ln();
        let expected = C2 / 0.1 * (100.0 * iota1).sqrt();
        assert!(rel_close(b, expected, 1e-9));
        assert!(rel_close(b, 1450.9, 1e-3), "b = {b}");
    }

    #[test]
    fn bonus_vanishes_and_decreases() {
        assert!(bonus(1_000_000, 10.0, 3, 2, 0.05, 0.9).unwrap()
            < bonus(1_000, 10.0, 3, 2, 0.05, 0.9).unwrap());
        let mut prev = f64::INFINITY;
        for k in 2..2000 {
            let b = bonus(k, 10.0, 3, 2, 0.05, 0.9).unwrap();
            assert!(b < prev);
            prev = b;
        }
        assert!(bonus(0, 1.0, 1, 1, 0.5, 0.9).is_err());
    }

    #[test]
    fn iota_reference_point() {
        assert!((iota(1, 1, 1, 1.0) - 6.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn beta_is_three_times_bonus() {
        for t in [1u64, 2, 10, 999] {
            let b = bonus(t, 5.0, 3, 2, 0.1, 0.9).unwrap();
            let be = beta(t, 5.0, 3, 2, 0.1, 0.9).unwrap();
            assert!(rel_close(be, 3.0 * b, 1e-12));
        }
        let be = beta(1, 1.0, 1, 1, 1.0, 0.5).unwrap();
        let expected = C3 * 2.0 * (6.0f64.ln()).sqrt();
        assert!(rel_close(be, expected, 1e-9));
        assert!(rel_close(be, 45.43, 1e-3), "beta = {be}");
        assert!(beta(0, 1.0, 1, 1, 1.0, 0.5).is_err());
    }

    #[test]
    fn weight_sum_properties_small_t() {
        for t in 1..200u64 {
            for &h in &[1.0, 5.0, 153.5] {
                let w = alpha_weights(t, h);
                let sum: f64 = w.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(w.iter().all(|&x| x >= 0.0));
                assert!(w[0].abs() < 1e-300 || t == 0);
            }
        }
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(t in 0u64..400, h in 0.5f64..200.0) {
            let w = alpha_weights(t, h);
            let sum: f64 = w.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
