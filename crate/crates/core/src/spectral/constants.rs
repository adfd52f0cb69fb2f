//! Closed-form sample-size threshold and radius constants of the spectral
//! estimator, evaluated on a known model.
//!
//! The mixing parameters are the crude choice `G = 2`, `theta = 1 - eps`, and
//! the numerical constant `C0` is supplied by the caller. The values are
//! indicative only: they are many orders of magnitude above what the learner
//! needs in practice, which is why the learner takes hand-tuned `c1`, `c2`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{singular_values, stationary_distribution, RELATIVE_CUTOFF};
use crate::model::{validate_model, PomdpModel};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralConstants {
    pub action: usize,
    /// Smallest nonzero singular value of `W31`.
    pub sigma31: f64,
    /// Smallest nonzero singular values of `A1`, `A2`, `A3`.
    pub sigma_views: [f64; 3],
    pub omega_min: f64,
    pub c12: f64,
    pub c1: f64,
    pub c2: f64,
    pub n0: f64,
}

fn smallest_nonzero_sv<T: Real>(a: &DMatrix<T>) -> f64 {
    let sv = singular_values(a);
    let max = sv.first().map_or(0.0, |s| s.as_f64());
    sv.iter()
        .map(|s| s.as_f64())
        .filter(|&s| s > RELATIVE_CUTOFF * max)
        .fold(f64::INFINITY, f64::min)
}

/// Constants for every action, with mixing bound `G = 2`, `theta = 1 - eps`.
pub fn spectral_constants<T: Real>(
    model: &PomdpModel<T>,
    delta: f64,
    c0: f64,
) -> Result<Vec<SpectralConstants>> {
    let eps = validate_model(model).epsilon.as_f64();
    let (ns, no) = (model.num_states(), model.num_obs());
    let (m, o) = (ns as f64, no as f64);
    let g = 2.0;
    let theta = 1.0 - eps;
    let log_term = (6.0 * (o * o + o) / delta).ln();
    let r = 2.0 * 2f64.sqrt() + 1.0;

    let mut out = Vec::with_capacity(model.num_actions());
    for i in 0..model.num_actions() {
        let p = model.transition(i).map(|x| x.as_f64());
        let w = model.observation(i).map(|x| x.as_f64());
        let pi = stationary_distribution(&p)?;
        let a2 = w.transpose();
        let a3 = &a2 * p.transpose();
        // A1(o, m) = sum_n pi(n) P(n, m) / pi(m) * Omega(o | n).
        let a1 = DMatrix::from_fn(no, ns, |oo, mm| {
            (0..ns)
                .map(|n| pi[n] * p[(n, mm)] * w[(n, oo)])
                .sum::<f64>()
                / pi[mm]
        });
        let diag = DMatrix::from_diagonal(&pi);
        let w31 = &a3 * &diag * a1.transpose();

        let sigma31 = smallest_nonzero_sv(&w31);
        let sigma_views = [
            smallest_nonzero_sv(&a1),
            smallest_nonzero_sv(&a2),
            smallest_nonzero_sv(&a3),
        ];
        let sigma = sigma_views.iter().copied().fold(f64::INFINITY, f64::min);
        let omega_min = pi.iter().copied().fold(f64::INFINITY, f64::min);

        let c12 = 2.0 * g * r / ((1.0 - theta) * omega_min.sqrt())
            * (1.0
                + 8.0 * 2f64.sqrt() / (omega_min.powi(2) * sigma.powi(3))
                + 256.0 / (omega_min.powi(2) * sigma.powi(2)));
        let c1 = 21.0 * o.sqrt() / sigma31 * c12;
        let c2 = 4.0 / sigma_views[1] * (m.sqrt() + 21.0 * m / sigma31) * c12;
        let lead = (g * r / (1.0 - theta) / (omega_min * sigma * sigma)).powi(2);
        let inner = (16.0 * m.cbrt() / (c0.powf(2.0 / 3.0) * omega_min.cbrt()))
            .max(2.0 * 2f64.sqrt() * m / (c0 * c0 * omega_min * sigma * sigma))
            .max(4.0);
        let n0 = (4.0 / (sigma31 * sigma31)).max(lead * inner) * log_term;

        out.push(SpectralConstants {
            action: i,
            sigma31,
            sigma_views,
            omega_min,
            c12,
            c1,
            c2,
            n0,
        });
    }
    Ok(out)
}
