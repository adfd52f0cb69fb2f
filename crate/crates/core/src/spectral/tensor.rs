//! Dense third-order tensors and the whitened robust power method.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::RELATIVE_CUTOFF;
use crate::scalar::Real;

/// Dense `n0 x n1 x n2` tensor, row-major (last index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T: Real> {
    dims: [usize; 3],
    data: Vec<T>,
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![T::zero(); dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn cubic(n: usize) -> Self {
        Self::zeros([n, n, n])
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut t = Self::zeros(dims);
        for a in 0..dims[0] {
            for b in 0..dims[1] {
                for c in 0..dims[2] {
                    let k = t.offset(a, b, c);
                    t.data[k] = f(a, b, c);
                }
            }
        }
        t
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    fn offset(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.dims[1] + b) * self.dims[2] + c
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> T {
        self.data[self.offset(a, b, c)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, x: T) {
        let k = self.offset(a, b, c);
        self.data[k] = x;
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x)
    }

    pub fn frobenius_distance(&self, other: &Self) -> T {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
            .sqrt()
    }

    /// Multiplies `mode` by `m`: the result's index `j` along that mode is
    /// `sum_k m(j, k) T(.., k, ..)`.
    pub fn mode_product(&self, mode: usize, m: &DMatrix<T>) -> Self {
        assert!(mode < 3);
        assert_eq!(m.ncols(), self.dims[mode], "mode {mode} size mismatch");
        let mut dims = self.dims;
        dims[mode] = m.nrows();
        let mut out = Self::zeros(dims);
        for a in 0..self.dims[0] {
            for b in 0..self.dims[1] {
                for c in 0..self.dims[2] {
                    let x = self.get(a, b, c);
                    if x == T::zero() {
                        continue;
                    }
                    let idx = [a, b, c];
                    for j in 0..m.nrows() {
                        let mut tgt = idx;
                        tgt[mode] = j;
                        let k = out.offset(tgt[0], tgt[1], tgt[2]);
                        out.data[k] += m[(j, idx[mode])] * x;
                    }
                }
            }
        }
        out
    }

    /// Matrix of sums over one mode; the two remaining modes keep their order.
    pub fn marginal(&self, mode: usize) -> DMatrix<T> {
        let keep: Vec<usize> = (0..3).filter(|&k| k != mode).collect();
        let mut out = DMatrix::zeros(self.dims[keep[0]], self.dims[keep[1]]);
        for a in 0..self.dims[0] {
            for b in 0..self.dims[1] {
                for c in 0..self.dims[2] {
                    let idx = [a, b, c];
                    out[(idx[keep[0]], idx[keep[1]])] += self.get(a, b, c);
                }
            }
        }
        out
    }

    /// Average over the six index permutations of a cubic tensor.
    pub fn symmetrized(&self) -> Self {
        let n = self.dims[0];
        assert!(
            self.dims.iter().all(|&d| d == n),
            "symmetrization needs a cubic tensor"
        );
        let sixth = T::lit(1.0 / 6.0);
        Self::from_fn(self.dims, |a, b, c| {
            (self.get(a, b, c)
                + self.get(a, c, b)
                + self.get(b, a, c)
                + self.get(b, c, a)
                + self.get(c, a, b)
                + self.get(c, b, a))
                * sixth
        })
    }

    /// Adds `w * v (x) v (x) v`.
    pub fn add_rank_one(&mut self, w: T, v: &[T]) {
        let n = self.dims[0];
        for a in 0..n {
            for b in 0..n {
                let ab = w * v[a] * v[b];
                for (c, &vc) in v.iter().enumerate().take(n) {
                    let k = self.offset(a, b, c);
                    self.data[k] += ab * vc;
                }
            }
        }
    }

    /// `T(I, v, v)`.
    pub fn apply_pair(&self, v: &[T]) -> Vec<T> {
        let n = self.dims[0];
        (0..n)
            .map(|a| {
                let mut s = T::zero();
                for b in 0..n {
                    for c in 0..n {
                        s += self.get(a, b, c) * v[b] * v[c];
                    }
                }
                s
            })
            .collect()
    }

    /// `T(v, v, v)`.
    pub fn apply_triple(&self, v: &[T]) -> T {
        self.apply_pair(v)
            .iter()
            .zip(v)
            .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
    }
}

/// Restarts and iteration counts of the robust power method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PowerConfig {
    pub restarts: usize,
    pub iterations: usize,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            restarts: 25,
            iterations: 50,
        }
    }
}

/// Components of `M2 = sum w theta theta^T`, `M3 = sum w theta^(x)3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<T: Real> {
    /// Positive, sums to one.
    pub weights: Vec<T>,
    /// Column `m` is `theta_m`.
    pub vectors: DMatrix<T>,
}

fn normalize<T: Real>(v: &mut [T]) -> T {
    let n = v.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
    if n > T::zero() {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn power_iterate<T: Real>(t: &Tensor3<T>, mut u: Vec<T>, iterations: usize) -> Vec<T> {
    for _ in 0..iterations {
        let mut next = t.apply_pair(&u);
        if normalize(&mut next) == T::zero() {
            break;
        }
        u = next;
    }
    u
}

/// Whitens `m3` with the top-`k` eigenpairs of the symmetrized `m2`, extracts
/// `k` components by power iteration with deflation and maps them back.
pub fn tensor_decompose<T: Real, R: Rng + ?Sized>(
    m2: &DMatrix<T>,
    m3: &Tensor3<T>,
    k: usize,
    config: PowerConfig,
    rng: &mut R,
) -> Result<Decomposition<T>> {
    let d = m2.nrows();
    if m2.ncols() != d || m3.dims() != [d, d, d] {
        return Err(Error::Dimension(format!(
            "second moment is {}x{}, third moment is {:?}",
            m2.nrows(),
            m2.ncols(),
            m3.dims()
        )));
    }
    if k == 0 || k > d {
        return Err(Error::Dimension(format!(
            "{k} components requested from dimension {d}"
        )));
    }
    if config.restarts == 0 {
        return Err(Error::InvalidArgument(
            "power method needs at least one restart".into(),
        ));
    }

    let sym = (m2 + m2.transpose()) * T::lit(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let top = eig.eigenvalues[order[0]];
    let scale = order
        .iter()
        .map(|&i| eig.eigenvalues[i].abs())
        .fold(T::zero(), |a, b| a.max(b));
    let cutoff = T::lit(RELATIVE_CUTOFF) * scale;
    let usable = order
        .iter()
        .filter(|&&i| eig.eigenvalues[i] > cutoff)
        .count();
    if usable < k || !(top > T::zero()) {
        return Err(Error::Conditioning {
            action: None,
            detail: format!("second moment has {usable} usable eigenvalues, need {k}"),
        });
    }

    let mut whiten = DMatrix::<T>::zeros(d, k);
    let mut unwhiten = DMatrix::<T>::zeros(d, k);
    for (col, &i) in order.iter().take(k).enumerate() {
        let lam = eig.eigenvalues[i];
        let v = eig.eigenvectors.column(i);
        whiten.set_column(col, &(v * (T::one() / lam.sqrt())));
        unwhiten.set_column(col, &(v * lam.sqrt()));
    }
    let wt = whiten.transpose();
    let mut t = m3
        .mode_product(0, &wt)
        .mode_product(1, &wt)
        .mode_product(2, &wt)
        .symmetrized();

    let mut weights = Vec::with_capacity(k);
    let mut vectors = DMatrix::<T>::zeros(d, k);
    for comp in 0..k {
        let mut best: Option<(T, Vec<T>)> = None;
        for _ in 0..config.restarts {
            let mut u: Vec<T> = (0..k)
                .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
                .collect();
            normalize(&mut u);
            let mut u = power_iterate(&t, u, config.iterations);
            let mut lam = t.apply_triple(&u);
            if lam < T::zero() {
                u.iter_mut().for_each(|x| *x = -*x);
                lam = -lam;
            }
            if best.as_ref().is_none_or(|(b, _)| lam > *b) {
                best = Some((lam, u));
            }
        }
        let (_, u) = best.expect("at least one restart");
        let mut u = power_iterate(&t, u, config.iterations);
        let mut lam = t.apply_triple(&u);
        if lam < T::zero() {
            u.iter_mut().for_each(|x| *x = -*x);
            lam = -lam;
        }
        if !(lam > T::lit(RELATIVE_CUTOFF)) || !lam.is_finite() {
            return Err(Error::Conditioning {
                action: None,
                detail: format!("power iteration found no component {comp} (eigenvalue {lam})"),
            });
        }
        let theta = &unwhiten * DVector::from_column_slice(&u) * lam;
        vectors.set_column(comp, &theta);
        weights.push(T::one() / (lam * lam));
        t.add_rank_one(-lam, &u);
    }
    let total = weights.iter().fold(T::zero(), |acc, &w| acc + w);
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Decomposition { weights, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn moments(weights: &[f64], thetas: &[Vec<f64>]) -> (DMatrix<f64>, Tensor3<f64>) {
        let d = thetas[0].len();
        let mut m2 = DMatrix::zeros(d, d);
        let mut m3 = Tensor3::cubic(d);
        for (w, th) in weights.iter().zip(thetas) {
            let v = DVector::from_column_slice(th);
            m2 += &v * v.transpose() * *w;
            m3.add_rank_one(*w, th);
        }
        (m2, m3)
    }

    #[test]
    fn rank_one_fixed_point() {
        let theta = vec![0.2, 0.5, 0.3];
        let (m2, m3) = moments(&[1.0], std::slice::from_ref(&theta));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dec = tensor_decompose(&m2, &m3, 1, PowerConfig::default(), &mut rng).unwrap();
        assert!((dec.weights[0] - 1.0).abs() < 1e-12);
        for (a, b) in dec.vectors.column(0).iter().zip(&theta) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    fn assert_same_set(dec: &Decomposition<f64>, weights: &[f64], thetas: &[Vec<f64>]) {
        for (w, th) in weights.iter().zip(thetas) {
            let hit = (0..dec.weights.len()).any(|c| {
                (dec.weights[c] - w).abs() < 1e-6
                    && dec
                        .vectors
                        .column(c)
                        .iter()
                        .zip(th)
                        .all(|(a, b)| (a - b).abs() < 1e-6)
            });
            assert!(hit, "component {th:?} with weight {w} not recovered");
        }
    }

    #[test]
    fn two_components_in_any_order() {
        let w = [0.35, 0.65];
        let th = vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]];
        let (m2, m3) = moments(&w, &th);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dec = tensor_decompose(&m2, &m3, 2, PowerConfig::default(), &mut rng).unwrap();
        assert_same_set(&dec, &w, &th);
        let (m2r, m3r) = moments(&[w[1], w[0]], &[th[1].clone(), th[0].clone()]);
        let dec_r = tensor_decompose(&m2r, &m3r, 2, PowerConfig::default(), &mut rng).unwrap();
        assert_same_set(&dec_r, &w, &th);
    }

    #[test]
    fn too_few_eigenvalues() {
        let (m2, m3) = moments(&[1.0], &[vec![0.5, 0.5]]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let err = tensor_decompose(&m2, &m3, 2, PowerConfig::default(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::Conditioning { .. }));
    }

    #[test]
    fn mode_product_and_marginals() {
        let t = Tensor3::from_fn([2, 3, 2], |a, b, c| (a * 6 + b * 2 + c) as f64);
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(t.mode_product(1, &id), t);
        let ones = DMatrix::<f64>::from_element(1, 2, 1.0);
        let summed = t.mode_product(0, &ones);
        let marg = t.marginal(0);
        for b in 0..3 {
            for c in 0..2 {
                assert_eq!(summed.get(0, b, c), marg[(b, c)]);
            }
        }
        let sym = Tensor3::from_fn([2, 2, 2], |a, b, c| (a + 2 * b + 4 * c) as f64).symmetrized();
        assert_eq!(sym.get(0, 1, 1), sym.get(1, 1, 0));
    }
}
