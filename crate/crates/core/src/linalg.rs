//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative singular-value cutoff used for pseudoinverses and rank decisions.
pub const RELATIVE_CUTOFF: f64 = 1e-10;

/// Chains with more states than this use power iteration for the stationary law.
pub const DIRECT_SOLVE_MAX_STATES: usize = 64;

/// Singular values of `a`, sorted descending.
pub fn singular_values<T: Real>(a: &DMatrix<T>) -> Vec<T> {
    let mut sv: Vec<T> = a
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Number of singular values strictly above `abs_cutoff`.
pub fn numerical_rank<T: Real>(a: &DMatrix<T>, abs_cutoff: T) -> usize {
    singular_values(a)
        .into_iter()
        .filter(|&s| s > abs_cutoff)
        .count()
}

/// Pseudoinverse keeping exactly the `rank` leading singular triplets.
///
/// Fails when the `rank`-th singular value is not above
/// `RELATIVE_CUTOFF * sigma_max`.
pub fn truncated_pinv<T: Real>(a: &DMatrix<T>, rank: usize) -> Result<DMatrix<T>> {
    let (rows, cols) = a.shape();
    if rank == 0 || rank > rows.min(cols) {
        return Err(Error::Dimension(format!(
            "rank {rank} requested from a {rows}x{cols} matrix"
        )));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sigma_max = svd.singular_values[order[0]];
    let sigma_r = svd.singular_values[order[rank - 1]];
    let cutoff = T::lit(RELATIVE_CUTOFF) * sigma_max;
    if !(sigma_r > cutoff) || !sigma_r.is_finite() {
        return Err(Error::Conditioning {
            action: None,
            detail: format!(
                "singular value {} of {rows}x{cols} matrix is {sigma_r} (max {sigma_max})",
                rank
            ),
        });
    }
    let mut pinv = DMatrix::<T>::zeros(cols, rows);
    for &k in order.iter().take(rank) {
        let s_inv = T::one() / svd.singular_values[k];
        let vk = v_t.row(k).transpose();
        let uk = u.column(k);
        pinv += (vk * uk.transpose()) * s_inv;
    }
    Ok(pinv)
}

/// Stationary distribution `w` of a row-stochastic matrix: `w P = w`, `sum w = 1`.
///
/// Direct solve for small chains, power iteration (tol 1e-12, cap 10^6) above
/// [`DIRECT_SOLVE_MAX_STATES`] or when the direct system is singular.
pub fn stationary_distribution<T: Real>(p: &DMatrix<T>) -> Result<DVector<T>> {
    let n = p.nrows();
    if n == 0 || p.ncols() != n {
        return Err(Error::Dimension(format!(
            "stationary distribution of a {}x{} matrix",
            p.nrows(),
            p.ncols()
        )));
    }
    if n <= DIRECT_SOLVE_MAX_STATES {
        // (P^T - I) w = 0 with the last equation replaced by sum(w) = 1.
        let mut a = p.transpose() - DMatrix::<T>::identity(n, n);
        for j in 0..n {
            a[(n - 1, j)] = T::one();
        }
        let mut rhs = DVector::<T>::zeros(n);
        rhs[n - 1] = T::one();
        if let Some(w) = a.lu().solve(&rhs) {
            if w.iter().all(|x| x.is_finite() && *x > -T::tol(1e-9)) {
                return Ok(clamp_normalize(w));
            }
        }
    }
    cesaro_stationary(p, 1_000_000, T::tol(1e-12))
}

/// Long-run Cesàro average of `u P^t` from the uniform start.
pub fn cesaro_stationary<T: Real>(p: &DMatrix<T>, max_iter: usize, tol: T) -> Result<DVector<T>> {
    let n = p.nrows();
    let uniform = T::one() / T::from_usize(n).unwrap();
    let mut row = DVector::<T>::from_element(n, uniform);
    let mut avg = row.clone();
    let pt = p.transpose();
    for it in 1..=max_iter {
        let next = &pt * &row;
        let weight = T::one() / T::from_usize(it + 1).unwrap();
        let new_avg = &avg * (T::one() - weight) + &next * weight;
        let delta = (&new_avg - &avg).abs().max();
        let step = (&next - &row).abs().max();
        avg = new_avg;
        row = next;
        // An aperiodic chain converges pointwise; stop on that first.
        if step <= tol {
            return Ok(clamp_normalize(row));
        }
        if it > 1000 && delta <= tol {
            return Ok(clamp_normalize(avg));
        }
    }
    Ok(clamp_normalize(avg))
}

fn clamp_normalize<T: Real>(mut w: DVector<T>) -> DVector<T> {
    for x in w.iter_mut() {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
    let s = w.sum();
    w / s
}
