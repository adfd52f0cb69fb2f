//! Uniform lattice on the probability simplex.

use crate::error::{Error, Result};
use crate::model::BeliefState;
use crate::scalar::Real;

/// Default cap on the number of lattice points.
pub const DEFAULT_POINT_CAP: usize = 200_000;

/// `C(n, k)` in `u128`, saturating.
fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc.saturating_mul((n - j) as u128) / (j as u128 + 1);
    }
    acc
}

/// Number of ways to write `total` as an ordered sum of `parts` non-negative integers.
fn compositions(total: u64, parts: u64) -> u128 {
    if parts == 0 {
        return u128::from(total == 0);
    }
    binomial(total + parts - 1, parts - 1)
}

/// All points `k / G` with non-negative integer `k` summing to `G`, in
/// lexicographic order of `k` (first coordinate ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefGrid {
    num_states: usize,
    resolution: usize,
    coords: Vec<u32>,
}

impl BeliefGrid {
    pub fn new(num_states: usize, resolution: usize, cap: usize) -> Result<Self> {
        if num_states < 2 {
            return Err(Error::InvalidArgument(format!(
                "belief grid needs at least 2 states, got {num_states}"
            )));
        }
        if resolution == 0 {
            return Err(Error::InvalidArgument(
                "grid resolution must be at least 1".into(),
            ));
        }
        let points = compositions(resolution as u64, num_states as u64);
        if points > cap as u128 {
            return Err(Error::Capacity { points, cap });
        }
        let g = resolution as u32;
        let mut coords = Vec::with_capacity(points as usize * num_states);
        let mut k = vec![0u32; num_states];
        k[num_states - 1] = g;
        loop {
            coords.extend_from_slice(&k);
            // Next composition in lexicographic order: find the rightmost
            // position (excluding the last) that can grow.
            let mut j = num_states - 1;
            let advanced = loop {
                if j == 0 {
                    break false;
                }
                j -= 1;
                let used: u32 = k[..=j].iter().sum();
                if used < g {
                    k[j] += 1;
                    for x in &mut k[j + 1..] {
                        *x = 0;
                    }
                    let used: u32 = k[..=j].iter().sum();
                    k[num_states - 1] = g - used;
                    break true;
                }
            };
            if !advanced {
                break;
            }
        }
        debug_assert_eq!(coords.len(), points as usize * num_states);
        Ok(Self {
            num_states,
            resolution,
            coords,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.num_states
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Integer lattice coordinates of point `id`.
    pub fn lattice(&self, id: usize) -> &[u32] {
        &self.coords[id * self.num_states..(id + 1) * self.num_states]
    }

    pub fn point<T: Real>(&self, id: usize) -> Vec<T> {
        let g = T::from_usize(self.resolution).unwrap();
        self.lattice(id)
            .iter()
            .map(|&k| T::from_u32(k).unwrap() / g)
            .collect()
    }

    pub fn belief<T: Real>(&self, id: usize) -> BeliefState<T> {
        BeliefState::new(self.point(id)).expect("lattice points are distributions")
    }

    /// Id of the point with integer coordinates `k` (which must sum to `G`).
    pub fn id_of(&self, k: &[u32]) -> Option<usize> {
        if k.len() != self.num_states
            || k.iter().map(|&x| x as usize).sum::<usize>() != self.resolution
        {
            return None;
        }
        let mut rank: u128 = 0;
        let mut left = self.resolution as u64;
        for (j, &kj) in k.iter().enumerate().take(self.num_states - 1) {
            let rest = (self.num_states - j - 1) as u64;
            for v in 0..kj as u64 {
                rank += compositions(left - v, rest);
            }
            left -= kj as u64;
        }
        Some(rank as usize)
    }

    /// Nearest lattice point in L1 distance; exact ties go to the lowest id.
    pub fn nearest<T: Real>(&self, b: &[T]) -> usize {
        assert_eq!(b.len(), self.num_states, "belief length mismatch");
        let g = self.resolution as f64;
        let scaled: Vec<f64> = b.iter().map(|x| x.as_f64().max(0.0) * g).collect();
        let total: f64 = scaled.iter().sum();
        let scaled: Vec<f64> = if total > 0.0 {
            scaled.iter().map(|x| x * g / total).collect()
        } else {
            vec![g / self.num_states as f64; self.num_states]
        };
        let mut k: Vec<u32> = scaled.iter().map(|x| x.floor() as u32).collect();
        let used: u32 = k.iter().sum();
        let mut left = (self.resolution as u32).saturating_sub(used);
        // Largest remainders get the leftover units. Among equal remainders the
        // later coordinate goes first, which yields the lexicographically
        // smaller vector and so the lower id.
        let mut order: Vec<usize> = (0..self.num_states).collect();
        order.sort_by(|&a, &c| {
            let fa = scaled[a] - scaled[a].floor();
            let fc = scaled[c] - scaled[c].floor();
            fc.partial_cmp(&fa)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(c.cmp(&a))
        });
        for &j in &order {
            if left == 0 {
                break;
            }
            k[j] += 1;
            left -= 1;
        }
        // Rounding noise can leave the floors one unit too high.
        let mut excess = k.iter().sum::<u32>().saturating_sub(self.resolution as u32);
        for &j in order.iter().rev() {
            if excess == 0 {
                break;
            }
            if k[j] > 0 {
                k[j] -= 1;
                excess -= 1;
            }
        }
        self.id_of(&k).expect("rounded point lies on the lattice")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_grid() {
        let g = BeliefGrid::new(2, 4, DEFAULT_POINT_CAP).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.point::<f64>(0), vec![0.0, 1.0]);
        assert_eq!(g.point::<f64>(1), vec![0.25, 0.75]);
        assert_eq!(g.point::<f64>(4), vec![1.0, 0.0]);
    }

    #[test]
    fn counts_match_stars_and_bars() {
        assert_eq!(BeliefGrid::new(3, 2, DEFAULT_POINT_CAP).unwrap().len(), 6);
        assert_eq!(BeliefGrid::new(4, 5, DEFAULT_POINT_CAP).unwrap().len(), 56);
        assert_eq!(BeliefGrid::new(2, 50, DEFAULT_POINT_CAP).unwrap().len(), 51);
    }

    #[test]
    fn ids_round_trip() {
        let g = BeliefGrid::new(4, 6, DEFAULT_POINT_CAP).unwrap();
        for id in 0..g.len() {
            assert_eq!(g.id_of(g.lattice(id)), Some(id));
            assert_eq!(g.nearest(&g.point::<f64>(id)), id);
        }
    }

    #[test]
    fn capacity_and_argument_errors() {
        assert!(matches!(
            BeliefGrid::new(10, 100, DEFAULT_POINT_CAP),
            Err(Error::Capacity { .. })
        ));
        assert!(BeliefGrid::new(1, 10, DEFAULT_POINT_CAP).is_err());
        assert!(BeliefGrid::new(2, 0, DEFAULT_POINT_CAP).is_err());
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let g = BeliefGrid::new(2, 1, DEFAULT_POINT_CAP).unwrap();
        // (0.5, 0.5) is equidistant from (0, 1) [id 0] and (1, 0) [id 1].
        assert_eq!(g.nearest(&[0.5f64, 0.5]), 0);
        let g3 = BeliefGrid::new(3, 1, DEFAULT_POINT_CAP).unwrap();
        let third = 1.0 / 3.0;
        let id = g3.nearest(&[third, third, third]);
        assert_eq!(g3.lattice(id), &[0, 0, 1]);
        assert_eq!(id, 0);
    }
}
