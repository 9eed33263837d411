use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minplus::{min_assign, minplus_mul, minplus_power, CostMatrix};

/// Horizon of the liminf surrogate: `h = min_{n_max − window ≤ n ≤ n_max} Ĉ^n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierParams {
    pub n_max: u64,
    pub window: u64,
}

impl Default for BarrierParams {
    fn default() -> Self {
        Self { n_max: 1 << 14, window: 64 }
    }
}

/// Discrete Peierls barrier `h(x, y)` on all grid pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct BarrierMatrix {
    h: CostMatrix,
    pub alpha: f64,
    pub params: BarrierParams,
}

pub fn peierls_barrier(c: &CostMatrix, alpha: f64, n_max: u64, window: u64) -> Result<BarrierMatrix> {
    if n_max == 0 || window >= n_max {
        return Err(Error::input(format!("barrier window {window} must be smaller than n_max {n_max}")));
    }
    let calibrated = c.shifted(c.tau() * alpha);
    let mut power = minplus_power(&calibrated, n_max - window)?;
    let mut h = power.clone();
    for _ in 0..window {
        power = minplus_mul(&power, &calibrated);
        min_assign(&mut h, &power);
    }
    if !spans_period(&h, &minplus_mul(&power, &calibrated)) {
        log::warn!(
            "barrier window {window} is shorter than the period of the calibrated powers; \
             h is not a liminf and may break the triangle inequality"
        );
    }
    Ok(BarrierMatrix { h, alpha, params: BarrierParams { n_max, window } })
}

/// A window covering one full period of the eventually periodic powers
/// `Ĉ^n` already contains every value of the next power.
fn spans_period(h: &CostMatrix, next: &CostMatrix) -> bool {
    h.entries().iter().zip(next.entries()).all(|(&a, &b)| b >= a - 1e-12 * a.abs().max(1.0))
}

impl BarrierMatrix {
    /// Wraps a matrix read back from a file.
    pub fn from_matrix(h: CostMatrix, alpha: f64, params: BarrierParams) -> Self {
        Self { h, alpha, params }
    }

    pub fn n_states(&self) -> usize {
        self.h.n_states()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.h.entry(x, y)
    }

    pub fn matrix(&self) -> &CostMatrix {
        &self.h
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_states()).map(|x| self.get(x, x)).collect()
    }

    /// Row `h(ξ, ·)`.
    pub fn row(&self, xi: usize) -> Vec<f64> {
        self.h.row(xi).to_vec()
    }

    /// Column `h(·, ξ)`.
    pub fn column(&self, xi: usize) -> Vec<f64> {
        (0..self.n_states()).map(|x| self.get(x, xi)).collect()
    }

    /// `max_{x,y,z} h(x,z) − h(x,y) − h(y,z)`; nonpositive up to rounding.
    pub fn triangle_defect(&self) -> f64 {
        let n = self.n_states();
        let mut worst = f64::NEG_INFINITY;
        for x in 0..n {
            let hx = self.h.row(x);
            for (y, &hxy) in hx.iter().enumerate() {
                let hy = self.h.row(y);
                for z in 0..n {
                    worst = worst.max(hx[z] - hxy - hy[z]);
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::HamiltonianSpec;
    use crate::torus::{build_grid, OneForm};
    use crate::weak_kam::WeakKamSystem;

    #[test]
    fn free_barrier_examples() {
        let g8 = build_grid(1, 8, 0.25, 2.0).unwrap();
        let sys = WeakKamSystem::new(&g8, &HamiltonianSpec::free(1).unwrap(), &OneForm::constant(vec![0.0])).unwrap();
        let hm = sys.barrier(&BarrierParams { n_max: 256, window: 16 }).unwrap();
        for x in 0..8 {
            assert_eq!(hm.get(x, x), 0.0);
        }
        assert!((hm.get(0, 4) - 0.125).abs() < 1e-15);
        assert!(hm.triangle_defect() <= 1e-12);
    }

    #[test]
    fn window_must_be_shorter_than_horizon() {
        let g8 = build_grid(1, 8, 0.25, 2.0).unwrap();
        let sys = WeakKamSystem::new(&g8, &HamiltonianSpec::free(1).unwrap(), &OneForm::constant(vec![0.0])).unwrap();
        assert!(matches!(peierls_barrier(sys.cost(), 0.0, 8, 8), Err(Error::Input(_))));
    }

    #[test]
    fn short_windows_are_detected() {
        // free motion at velocity 1/2 on 8 cells returns every 8 steps
        let g = build_grid(2, 8, 0.25, 4.0).unwrap();
        let spec = crate::verify::fixtures::sep3().first;
        let sys = WeakKamSystem::new(&g, &spec, &OneForm::constant(vec![0.3, 0.5])).unwrap();
        let calibrated = sys.cost().shifted(sys.cost().tau() * sys.alpha());
        let next = minplus_power(&calibrated, 1025).unwrap();
        for (window, spans) in [(4, false), (8, true)] {
            let hm = sys.barrier(&BarrierParams { n_max: 1024, window }).unwrap();
            assert_eq!(spans_period(hm.matrix(), &next), spans);
            assert_eq!(hm.triangle_defect() <= 1e-12, spans);
        }
    }
}
