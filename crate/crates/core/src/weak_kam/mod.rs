//! Critical values, calibrated Lax-Oleinik semigroups, Peierls barriers and
//! the sets and functions derived from them, all at the level of a fixed
//! torus grid.
//!
//! The critical value is the negated minimum cycle mean of the one-step cost
//! graph divided by the time step. Calibrating the cost by `τ·α` makes every
//! cycle mean nonnegative with the optimal cycles at exactly zero, which is
//! what makes the barrier powers converge.

mod aubry;
mod barrier;
mod subsolution;

pub use aubry::{aubry_set, elementary_solutions, rho_quotient, second_barrier, AubryData, Quotient};
pub use barrier::{peierls_barrier, BarrierMatrix, BarrierParams};
pub use subsolution::{
    common_subsolution, gradient, second_difference, subsolution_check, CommonSubsolution, SubsolutionReport,
    VectorField, GRADIENT_SCHEME,
};

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::hamiltonian::{symmetrize, HamiltonianSpec};
use crate::minplus::{apply_with_argmin, build_cost, karp_min_mean_cycle, maxminus_apply, minplus_apply, CostMatrix, INF};
use crate::torus::{OneForm, ScalarField, TorusGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMethod {
    Karp,
    PowerIteration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalValue {
    pub alpha: f64,
    pub method: AlphaMethod,
    /// Karp: 0. Power iteration: sup-norm mismatch of the detected period.
    pub residual: f64,
    pub tau: f64,
    pub n_states: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerIterationOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub max_period: usize,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 100_000, max_period: 64 }
    }
}

pub fn critical_value(c: &CostMatrix, method: AlphaMethod) -> Result<CriticalValue> {
    critical_value_with(c, method, &PowerIterationOptions::default())
}

pub fn critical_value_with(c: &CostMatrix, method: AlphaMethod, opts: &PowerIterationOptions) -> Result<CriticalValue> {
    let (mean, residual) = match method {
        AlphaMethod::Karp => (karp_min_mean_cycle(c)?, 0.0),
        AlphaMethod::PowerIteration => power_iteration(c, opts)?,
    };
    Ok(CriticalValue { alpha: -mean / c.tau(), method, residual, tau: c.tau(), n_states: c.n_states() })
}

/// Normalized min-plus iteration until the normalized vector repeats with
/// some period `p`; the cycle mean is the accumulated shift over `p` steps
/// divided by `p`.
fn power_iteration(c: &CostMatrix, opts: &PowerIterationOptions) -> Result<(f64, f64)> {
    let n = c.n_states();
    let mut v = vec![0.0; n];
    let mut shift = 0.0;
    let mut history: VecDeque<(Vec<f64>, f64)> = VecDeque::with_capacity(opts.max_period + 1);
    let mut last_drift = INF;
    for _ in 0..opts.max_iters {
        let w = minplus_apply(c, &v);
        let s = w.iter().copied().fold(INF, f64::min);
        if s == INF {
            return Err(Error::input("power iteration reached an all-infinite vector"));
        }
        v = w.into_iter().map(|x| x - s).collect();
        shift += s;
        for (p, (old, old_shift)) in history.iter().rev().enumerate() {
            let drift = v
                .iter()
                .zip(old)
                .map(|(a, b)| if a == b { 0.0 } else { (a - b).abs() })
                .fold(0.0, f64::max);
            if drift <= opts.tol {
                let period = (p + 1) as f64;
                return Ok(((shift - old_shift) / period, drift));
            }
            last_drift = last_drift.min(drift);
        }
        history.push_back((v.clone(), shift));
        if history.len() > opts.max_period {
            history.pop_front();
        }
    }
    Err(Error::numeric(format!(
        "power iteration did not stabilize within {} iterations (best drift {last_drift:e}); use the karp method",
        opts.max_iters
    )))
}

/// A Hamiltonian, a closed form and a grid, with the one-step cost matrix and
/// its Karp critical value.
#[derive(Clone, Debug)]
pub struct WeakKamSystem {
    grid: TorusGrid,
    spec: HamiltonianSpec,
    form: OneForm,
    cost: CostMatrix,
    critical: CriticalValue,
    calibrated: CostMatrix,
}

impl WeakKamSystem {
    pub fn new(grid: &TorusGrid, spec: &HamiltonianSpec, form: &OneForm) -> Result<Self> {
        let cost = build_cost(grid, spec, form)?;
        Self::from_cost(grid, spec, form, cost)
    }

    /// Reuses an already built cost matrix (e.g. loaded from a cache).
    pub fn from_cost(grid: &TorusGrid, spec: &HamiltonianSpec, form: &OneForm, cost: CostMatrix) -> Result<Self> {
        if cost.n_states() != grid.n_states() {
            return Err(Error::input("cost matrix does not match the grid"));
        }
        let critical = critical_value(&cost, AlphaMethod::Karp)?;
        let calibrated = cost.shifted(cost.tau() * critical.alpha);
        Ok(Self { grid: grid.clone(), spec: spec.clone(), form: form.clone(), cost, critical, calibrated })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn spec(&self) -> &HamiltonianSpec {
        &self.spec
    }

    pub fn form(&self) -> &OneForm {
        &self.form
    }

    pub fn cost(&self) -> &CostMatrix {
        &self.cost
    }

    /// `C + τ·α`, entrywise.
    pub fn calibrated(&self) -> &CostMatrix {
        &self.calibrated
    }

    pub fn critical(&self) -> &CriticalValue {
        &self.critical
    }

    pub fn alpha(&self) -> f64 {
        self.critical.alpha
    }

    /// Discrete `T⁻` over `steps` time steps.
    pub fn backward_semigroup(&self, u: &ScalarField, steps: usize) -> Result<ScalarField> {
        u.check_grid(&self.grid)?;
        let mut cur = u.values.clone();
        let mut saturated = false;
        for _ in 0..steps {
            let (next, arg) = apply_with_argmin(&self.calibrated, &cur);
            if self.grid.cap_binds() && !saturated {
                saturated = self.hits_speed_cap(&arg);
            }
            cur = next;
        }
        if saturated {
            log::warn!(
                "optimal steps reach the speed cap v_max = {} (grid n = {}); minimizers may be truncated",
                self.grid.v_max(),
                self.grid.n_per_axis()
            );
        }
        Ok(ScalarField::new(cur))
    }

    /// Discrete `T⁺` over `steps` time steps.
    pub fn forward_semigroup(&self, u: &ScalarField, steps: usize) -> Result<ScalarField> {
        u.check_grid(&self.grid)?;
        let mut cur = u.values.clone();
        for _ in 0..steps {
            cur = maxminus_apply(&self.calibrated, &cur);
        }
        Ok(ScalarField::new(cur))
    }

    /// `T⁺u = −Ť⁻(−u)` with `Ť⁻` the backward semigroup of the symmetric
    /// Hamiltonian. Uses the cohomology class of the form only; exact parts
    /// are rejected.
    pub fn forward_via_symmetrized(&self, u: &ScalarField, steps: usize) -> Result<ScalarField> {
        if self.form.exact_part.is_some() {
            return Err(Error::input("symmetrized route requires a constant form"));
        }
        let sym = symmetrize(&self.spec, &self.form.c)?;
        let reversed = WeakKamSystem::new(&self.grid, &sym, &self.form)?;
        Ok(reversed.backward_semigroup(&u.neg(), steps)?.neg())
    }

    pub fn barrier(&self, params: &BarrierParams) -> Result<BarrierMatrix> {
        peierls_barrier(&self.cost, self.alpha(), params.n_max, params.window)
    }

    /// Default zero threshold `10·spacing²/τ`.
    pub fn default_tol_zero(&self) -> f64 {
        default_tol_zero(&self.grid)
    }

    fn hits_speed_cap(&self, argmin: &[usize]) -> bool {
        let r = self.grid.reach() as i64;
        argmin.iter().enumerate().any(|(x, &y)| {
            y != usize::MAX && self.grid.cell_displacement(x, y).iter().any(|k| k.abs() == r)
        })
    }
}

pub fn default_tol_zero(grid: &TorusGrid) -> f64 {
    10.0 * grid.spacing() * grid.spacing() / grid.tau()
}

pub fn backward_semigroup(system: &WeakKamSystem, u: &ScalarField, steps: usize) -> Result<ScalarField> {
    system.backward_semigroup(u, steps)
}

pub fn forward_semigroup(system: &WeakKamSystem, u: &ScalarField, steps: usize) -> Result<ScalarField> {
    system.forward_semigroup(u, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::CosineTerm;
    use crate::torus::build_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn free_system(n: usize, tau: f64, v_max: f64, c: f64) -> WeakKamSystem {
        let g = build_grid(1, n, tau, v_max).unwrap();
        WeakKamSystem::new(&g, &HamiltonianSpec::free(1).unwrap(), &OneForm::constant(vec![c])).unwrap()
    }

    fn pend_system(n: usize, tau: f64, v_max: f64) -> WeakKamSystem {
        let g = build_grid(1, n, tau, v_max).unwrap();
        WeakKamSystem::new(&g, &HamiltonianSpec::pendulum(), &OneForm::constant(vec![0.0])).unwrap()
    }

    #[test]
    fn critical_value_examples() {
        assert_eq!(free_system(8, 0.25, 2.0, 0.0).alpha(), 0.0);
        let g2 = free_system(2, 0.5, 1.0, 1.0);
        assert!((g2.alpha() - 0.5).abs() < 1e-15);
        let pi = critical_value(g2.cost(), AlphaMethod::PowerIteration).unwrap();
        assert!((pi.alpha - 0.5).abs() < 1e-12);
    }

    #[test]
    fn karp_and_power_iteration_agree() {
        let g = build_grid(1, 24, 0.2, 3.0).unwrap();
        let dw = HamiltonianSpec::mechanical(1, vec![CosineTerm { axis: 0, amplitude: 0.8, wavenumber: 2 }]).unwrap();
        for c in [0.0, 0.3, 1.1, 2.0] {
            let sys = WeakKamSystem::new(&g, &dw, &OneForm::constant(vec![c])).unwrap();
            let pi = critical_value(sys.cost(), AlphaMethod::PowerIteration).unwrap();
            assert!((pi.alpha - sys.alpha()).abs() < 1e-9, "c={c}: {} vs {}", pi.alpha, sys.alpha());
        }
    }

    #[test]
    fn power_iteration_reports_nonconvergence() {
        let sys = pend_system(32, 0.1, 4.0);
        let opts = PowerIterationOptions { max_iters: 2, ..Default::default() };
        let err = critical_value_with(sys.cost(), AlphaMethod::PowerIteration, &opts).unwrap_err();
        assert!(matches!(err, Error::Numeric(ref m) if m.contains("karp")));
    }

    #[test]
    fn semigroup_fixed_points_and_monotony() {
        let sys = free_system(8, 0.25, 2.0, 0.0);
        let five = ScalarField::constant(sys.grid(), 5.0);
        assert_eq!(sys.backward_semigroup(&five, 7).unwrap(), five);
        assert_eq!(sys.forward_semigroup(&five, 7).unwrap(), five);

        let pend = pend_system(32, 0.1, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = ScalarField::new((0..32).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let v = ScalarField::new(u.values.iter().map(|x| x + rng.gen_range(0.0..0.5)).collect());
        let (tu, tv) = (pend.backward_semigroup(&u, 5).unwrap(), pend.backward_semigroup(&v, 5).unwrap());
        assert!(tu.values.iter().zip(&tv.values).all(|(a, b)| a <= b));
    }

    #[test]
    fn backward_orbit_stabilizes() {
        let sys = pend_system(64, 0.1, 4.0);
        let mut u = ScalarField::constant(sys.grid(), 0.0);
        for _ in 0..40 {
            u = sys.backward_semigroup(&u, 50).unwrap();
        }
        let next = sys.backward_semigroup(&u, 1).unwrap();
        assert!(next.sup_distance(&u) < 1e-8);
    }

    #[test]
    fn forward_routes_agree() {
        let sys = pend_system(48, 0.1, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let u = ScalarField::new((0..48).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let direct = sys.forward_semigroup(&u, 10).unwrap();
        let via = sys.forward_via_symmetrized(&u, 10).unwrap();
        assert!(direct.sup_distance(&via) <= 1e-9, "{}", direct.sup_distance(&via));
    }

    #[test]
    fn forward_of_subsolution_is_nonincreasing() {
        let sys = free_system(16, 0.25, 2.0, 0.0);
        let u = ScalarField::constant(sys.grid(), 1.0);
        let mut prev = u.clone();
        for n in 1..5 {
            let next = sys.forward_semigroup(&u, n).unwrap();
            assert!(next.values.iter().zip(&prev.values).all(|(a, b)| a <= b));
            prev = next;
        }
    }

    #[test]
    fn field_size_is_checked() {
        let sys = free_system(8, 0.25, 2.0, 0.0);
        let bad = ScalarField::new(vec![0.0; 3]);
        assert!(matches!(sys.backward_semigroup(&bad, 1), Err(Error::Input(_))));
    }
}
