//! Assumption checks and closed-form constants (forgetting rate, bias-span
//! ceiling, filter-error Lipschitz constants).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, stationary_distribution};
use crate::model::PomdpModel;
use crate::scalar::Real;

/// Determinant threshold for invertibility and singular-value threshold for rank.
pub const INVERTIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct InvertibilityCheck<T: Real> {
    pub ok: bool,
    pub det_abs: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct ValidationReport<T: Real> {
    /// Smallest transition probability over all actions.
    pub epsilon: T,
    /// `min_{i,o} sum_m Omega(o|m,i)`.
    pub xi_assumption: T,
    /// `min_{i,o,m} sum_n Omega(o|n,i) P_i(m,n)`, the quantity the filter-error
    /// bound actually uses.
    pub xi_proof: T,
    pub invertible: Vec<InvertibilityCheck<T>>,
    /// Whether the observation rows of each action are linearly independent.
    pub obs_rank_ok: Vec<bool>,
    pub passed: bool,
}

pub fn validate_model<T: Real>(model: &PomdpModel<T>) -> ValidationReport<T> {
    let (m_count, i_count, o_count) = (model.num_states(), model.num_actions(), model.num_obs());
    let epsilon = model
        .transitions()
        .iter()
        .flat_map(|p| p.iter().copied())
        .fold(T::max_value().unwrap(), |a, b| a.min(b));

    let mut xi_assumption = T::max_value().unwrap();
    let mut xi_proof = T::max_value().unwrap();
    for i in 0..i_count {
        let omega = model.observation(i);
        let p = model.transition(i);
        for o in 0..o_count {
            let col: T = (0..m_count).fold(T::zero(), |acc, m| acc + omega[(m, o)]);
            xi_assumption = xi_assumption.min(col);
            for m in 0..m_count {
                let s = (0..m_count).fold(T::zero(), |acc, n| acc + omega[(n, o)] * p[(m, n)]);
                xi_proof = xi_proof.min(s);
            }
        }
    }

    let tol = T::lit(INVERTIBILITY_TOL);
    let invertible: Vec<_> = model
        .transitions()
        .iter()
        .map(|p| {
            let det_abs = p.determinant().abs();
            InvertibilityCheck {
                ok: det_abs > tol,
                det_abs,
            }
        })
        .collect();
    let obs_rank_ok: Vec<bool> = model
        .observations()
        .iter()
        .map(|w| numerical_rank(w, tol) == m_count)
        .collect();

    let passed = epsilon > T::zero()
        && xi_assumption > T::zero()
        && invertible.iter().all(|c| c.ok)
        && obs_rank_ok.iter().all(|&ok| ok);

    ValidationReport {
        epsilon,
        xi_assumption,
        xi_proof,
        invertible,
        obs_rank_ok,
        passed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct TheoryConstants<T: Real> {
    pub epsilon: T,
    pub xi_assumption: T,
    pub xi_proof: T,
    /// Geometric forgetting rate `1 - eps / (1 - eps)`.
    pub alpha: T,
    /// Forgetting prefactor `2 (1 - eps) / eps`.
    pub c3: T,
    /// `(1 - eps) / (1 - eps / 2)`.
    pub alpha_bar: T,
    /// Uniform ceiling on the span of the bias function.
    pub span_bound_d: T,
    /// Observation-error Lipschitz constant `4 (1-eps)^2 / (eps^2 xi_proof)`.
    pub l1: T,
    /// Same formula evaluated with `xi_assumption` instead of `xi_proof`.
    pub l1_assumption_xi: T,
    /// Transition-error Lipschitz constant `4 (1-eps)^2 / eps^3`.
    pub l2: T,
    /// Stationary distribution of each action's transition matrix.
    pub stationary: Vec<Vec<T>>,
}

pub fn theoretical_constants<T: Real>(model: &PomdpModel<T>) -> Result<TheoryConstants<T>> {
    let report = validate_model(model);
    let eps = report.epsilon;
    let one = T::one();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let eight = T::lit(8.0);
    if !(eps > T::zero()) {
        return Err(Error::AssumptionViolation(format!(
            "smallest transition probability is {eps}"
        )));
    }
    if !(report.xi_proof > T::zero()) || !(report.xi_assumption > T::zero()) {
        return Err(Error::AssumptionViolation(format!(
            "observation mass is not bounded away from zero (xi = {}, {})",
            report.xi_assumption, report.xi_proof
        )));
    }
    let alpha = one - eps / (one - eps);
    if !(alpha > T::zero() && alpha < one) {
        return Err(Error::AssumptionViolation(format!(
            "forgetting rate {alpha} outside (0, 1) for epsilon {eps}"
        )));
    }
    let c3 = two * (one - eps) / eps;
    let alpha_bar = (one - eps) / (one - eps / two);
    let gap = one - alpha_bar;
    let log_term = ((gap / eight).ln()) / alpha_bar.ln();
    let span_bound_d =
        eight * model.r_max() * (two / (gap * gap) + (one + alpha_bar) * log_term) / gap;
    let sq = (one - eps) * (one - eps);
    let l1 = four * sq / (eps * eps * report.xi_proof);
    let l1_assumption_xi = four * sq / (eps * eps * report.xi_assumption);
    let l2 = four * sq / (eps * eps * eps);
    let stationary = model
        .transitions()
        .iter()
        .map(|p| stationary_distribution(p).map(|w| w.iter().copied().collect()))
        .collect::<Result<Vec<Vec<T>>>>()?;
    Ok(TheoryConstants {
        epsilon: eps,
        xi_assumption: report.xi_assumption,
        xi_proof: report.xi_proof,
        alpha,
        c3,
        alpha_bar,
        span_bound_d,
        l1,
        l1_assumption_xi,
        l2,
        stationary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::benchmark_model;
    use nalgebra::DMatrix;

    #[test]
    fn benchmark_report() {
        let r = validate_model(&benchmark_model::<f64>());
        assert_eq!(r.epsilon, 0.1);
        assert!((r.xi_assumption - 0.9).abs() < 1e-12);
        // min over (i,o,m): action 2, obs 2, state 2 gives 0.3*0.8 + 0.7*0.1.
        assert!((r.xi_proof - 0.31).abs() < 1e-12);
        assert!(r.passed);
        assert!((r.invertible[0].det_abs - 0.7).abs() < 1e-12);
        assert!((r.invertible[1].det_abs - 0.3).abs() < 1e-12);
        assert_eq!(r.obs_rank_ok, vec![true, true]);
    }

    #[test]
    fn singular_transition_fails_validation() {
        let model = benchmark_model::<f64>();
        let mut ps = model.transitions().to_vec();
        ps[0] = DMatrix::from_element(2, 2, 0.5);
        let bad = model
            .with_parameters(ps, model.observations().to_vec())
            .unwrap();
        let r = validate_model(&bad);
        assert!(!r.invertible[0].ok);
        assert!(r.invertible[1].ok);
        assert!(!r.passed);
    }

    #[test]
    fn dependent_observation_rows_fail_validation() {
        let model = benchmark_model::<f64>();
        let mut ws = model.observations().to_vec();
        ws[1] = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.3, 0.7]);
        let bad = model
            .with_parameters(model.transitions().to_vec(), ws)
            .unwrap();
        let r = validate_model(&bad);
        assert_eq!(r.obs_rank_ok, vec![true, false]);
        assert!(!r.passed);
    }

    #[test]
    fn benchmark_constants() {
        let c = theoretical_constants(&benchmark_model::<f64>()).unwrap();
        assert!((c.alpha - 8.0 / 9.0).abs() < 1e-12);
        assert!((c.c3 - 18.0).abs() < 1e-12);
        assert!((c.alpha_bar - 0.9 / 0.95).abs() < 1e-12);
        assert!((c.l1_assumption_xi - 360.0).abs() < 1e-9);
        assert!((c.l1 - 3.24 / (0.01 * 0.31)).abs() < 1e-9);
        assert!((c.l2 - 3240.0).abs() < 1e-9);
        assert!((c.stationary[0][0] - 9.0 / 17.0).abs() < 1e-12);
        assert!((c.stationary[0][1] - 8.0 / 17.0).abs() < 1e-12);
        assert!(c.span_bound_d > 0.0);
        let model = benchmark_model::<f64>();
        for (w, p) in c.stationary.iter().zip(model.transitions()) {
            let row = nalgebra::RowDVector::from_row_slice(w);
            let residual = (&row * p - &row).abs().max();
            assert!(residual < 1e-10);
        }
    }

    #[test]
    fn span_bound_matches_closed_form() {
        let c = theoretical_constants(&benchmark_model::<f64>()).unwrap();
        let ab: f64 = 0.9 / 0.95;
        let g = 1.0 - ab;
        let d = 8.0 * 4.0 * (2.0 / (g * g) + (1.0 + ab) * ((g / 8.0).ln() / ab.ln())) / g;
        assert!((c.span_bound_d - d).abs() < 1e-6 * d);
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let model = benchmark_model::<f64>();
        let mut ps = model.transitions().to_vec();
        ps[1] = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 0.7]);
        let bad = model
            .with_parameters(ps, model.observations().to_vec())
            .unwrap();
        assert!(matches!(
            theoretical_constants(&bad),
            Err(Error::AssumptionViolation(_))
        ));
    }
}
