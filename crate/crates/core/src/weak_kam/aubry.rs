use serde::{Deserialize, Serialize};

use super::BarrierMatrix;
use crate::error::{Error, Result};
use crate::torus::ScalarField;

/// First barrier `B(q) = h(q, q)` and the projected Aubry set `{B ≤ tol}`.
pub fn aubry_set(hm: &BarrierMatrix, tol_zero: f64) -> Result<(ScalarField, Vec<usize>)> {
    let big_b = hm.diagonal();
    let aubry: Vec<usize> = (0..big_b.len()).filter(|&q| big_b[q] <= tol_zero).collect();
    if aubry.is_empty() {
        let min = big_b.iter().copied().fold(f64::INFINITY, f64::min);
        return Err(Error::Internal(format!(
            "empty Aubry set (min h(q,q) = {min:e}, tol {tol_zero:e}); calibration is inconsistent"
        )));
    }
    Ok((ScalarField::new(big_b), aubry))
}

/// Second barrier `b(q) = min_{ξ,ζ ∈ A} h(ξ,q) + h(q,ζ) − h(ξ,ζ)` and the
/// projected Mañé set `{b ≤ tol}`.
pub fn second_barrier(hm: &BarrierMatrix, aubry: &[usize], tol_zero: f64) -> Result<(ScalarField, Vec<usize>)> {
    if aubry.is_empty() {
        return Err(Error::input("second barrier needs a nonempty Aubry set"));
    }
    let n = hm.n_states();
    let small_b: Vec<f64> = (0..n)
        .map(|q| {
            let mut best = f64::INFINITY;
            for &xi in aubry {
                let into = hm.get(xi, q);
                for &zeta in aubry {
                    let v = into + hm.get(q, zeta) - hm.get(xi, zeta);
                    if v < best {
                        best = v;
                    }
                }
            }
            best
        })
        .collect();
    let mane = (0..n).filter(|&q| small_b[q] <= tol_zero).collect();
    Ok((ScalarField::new(small_b), mane))
}

/// Pseudo-metric `ρ(x,y) = h(x,y) + h(y,x)` on the Aubry set and its
/// zero-classes at threshold `tol_zero`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quotient {
    pub aubry: Vec<usize>,
    /// Row-major `|A| × |A|`.
    pub rho: Vec<f64>,
    /// Each class lists grid indices in increasing order; the first is the representative.
    pub classes: Vec<Vec<usize>>,
    /// Row-major `k × k` minimal `ρ` between members of different classes.
    pub class_distances: Vec<f64>,
}

impl Quotient {
    pub fn rho_at(&self, i: usize, j: usize) -> f64 {
        self.rho[i * self.aubry.len() + j]
    }

    pub fn representatives(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c[0]).collect()
    }

    pub fn class_distance(&self, a: usize, b: usize) -> f64 {
        self.class_distances[a * self.classes.len() + b]
    }
}

pub fn rho_quotient(hm: &BarrierMatrix, aubry: &[usize], tol_zero: f64) -> Result<Quotient> {
    if aubry.is_empty() {
        return Err(Error::input("quotient needs a nonempty Aubry set"));
    }
    let m = aubry.len();
    let mut rho = vec![0.0; m * m];
    for (i, &x) in aubry.iter().enumerate() {
        for (j, &y) in aubry.iter().enumerate() {
            rho[i * m + j] = hm.get(x, y) + hm.get(y, x);
        }
    }
    // connected components of {ρ ≤ tol}
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if rho[i * m + j] <= tol_zero {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut roots: Vec<usize> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut class_of = vec![0usize; m];
    for i in 0..m {
        let r = find(&mut parent, i);
        let k = match roots.iter().position(|&x| x == r) {
            Some(k) => k,
            None => {
                roots.push(r);
                members.push(Vec::new());
                roots.len() - 1
            }
        };
        members[k].push(i);
        class_of[i] = k;
    }
    let k = members.len();
    let mut class_distances = vec![f64::INFINITY; k * k];
    for i in 0..m {
        for j in 0..m {
            let (a, b) = (class_of[i], class_of[j]);
            let d = if a == b { 0.0 } else { rho[i * m + j] };
            if d < class_distances[a * k + b] {
                class_distances[a * k + b] = d;
            }
        }
    }
    let classes = members.into_iter().map(|c| c.into_iter().map(|i| aubry[i]).collect()).collect();
    Ok(Quotient { aubry: aubry.to_vec(), rho, classes, class_distances })
}

/// Elementary weak KAM pair through an Aubry point:
/// `u₋ = h(ξ, ·)` (backward) and `u₊ = −h(·, ξ)` (forward).
pub fn elementary_solutions(hm: &BarrierMatrix, xi: usize, aubry: &[usize]) -> Result<(ScalarField, ScalarField)> {
    if !aubry.contains(&xi) {
        return Err(Error::input(format!("state {xi} is not in the Aubry set")));
    }
    let u_minus = ScalarField::new(hm.row(xi));
    let u_plus = ScalarField::new(hm.column(xi).into_iter().map(|v| -v).collect());
    Ok((u_minus, u_plus))
}

/// Barrier functions, Aubry and Mañé sets and the quotient in one pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AubryData {
    pub first_barrier: ScalarField,
    pub second_barrier: ScalarField,
    pub aubry: Vec<usize>,
    pub mane: Vec<usize>,
    pub quotient: Quotient,
    pub tol_zero: f64,
}

impl AubryData {
    pub fn compute(hm: &BarrierMatrix, tol_zero: f64) -> Result<Self> {
        let (first_barrier, aubry) = aubry_set(hm, tol_zero)?;
        let (second_barrier, mane) = second_barrier(hm, &aubry, tol_zero)?;
        let quotient = rho_quotient(hm, &aubry, tol_zero)?;
        Ok(Self { first_barrier, second_barrier, aubry, mane, quotient, tol_zero })
    }

    pub fn is_aubry(&self, q: usize) -> bool {
        self.aubry.binary_search(&q).is_ok()
    }

    pub fn is_mane(&self, q: usize) -> bool {
        self.mane.binary_search(&q).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{CosineTerm, HamiltonianSpec};
    use crate::minplus::CostMatrix;
    use crate::torus::{build_grid, OneForm};
    use crate::weak_kam::{BarrierParams, WeakKamSystem};

    fn barrier(n: usize, spec: &HamiltonianSpec) -> (WeakKamSystem, BarrierMatrix) {
        let g = build_grid(1, n, 0.1, 4.0).unwrap();
        let sys = WeakKamSystem::new(&g, spec, &OneForm::constant(vec![0.0])).unwrap();
        let hm = sys.barrier(&BarrierParams { n_max: 1 << 12, window: 64 }).unwrap();
        (sys, hm)
    }

    #[test]
    fn free_sets_are_everything() {
        let g8 = build_grid(1, 8, 0.25, 2.0).unwrap();
        let sys = WeakKamSystem::new(&g8, &HamiltonianSpec::free(1).unwrap(), &OneForm::constant(vec![0.0])).unwrap();
        let hm = sys.barrier(&BarrierParams { n_max: 256, window: 16 }).unwrap();
        let data = AubryData::compute(&hm, sys.default_tol_zero()).unwrap();
        assert_eq!(data.aubry, (0..8).collect::<Vec<_>>());
        assert_eq!(data.mane, (0..8).collect::<Vec<_>>());
        assert!(data.first_barrier.values.iter().all(|&v| v == 0.0));
        assert!(data.second_barrier.values.iter().all(|&v| v == 0.0));
        assert_eq!(data.quotient.classes.len(), 1);
        let (um, up) = elementary_solutions(&hm, 3, &data.aubry).unwrap();
        // moving costs spacing^2/(2τ) per cell, nothing is free but the diagonal
        assert_eq!(um.values[3], 0.0);
        assert_eq!(up.values[3], 0.0);
    }

    #[test]
    fn pendulum_aubry_is_the_top() {
        let (sys, hm) = barrier(64, &HamiltonianSpec::pendulum());
        let (b, aubry) = aubry_set(&hm, 1e-6).unwrap();
        assert_eq!(aubry, vec![0]);
        assert!(b.values[32] > 1.0);
        let (sb, mane) = second_barrier(&hm, &aubry, 1e-6).unwrap();
        assert!(mane.contains(&0));
        assert!(sb.values.iter().all(|&v| v >= -1e-9));
        let q = rho_quotient(&hm, &aubry, sys.default_tol_zero()).unwrap();
        assert_eq!(q.classes, vec![vec![0]]);
        assert!(elementary_solutions(&hm, 5, &aubry).is_err());
    }

    #[test]
    fn double_well_has_two_aubry_points() {
        let dw = HamiltonianSpec::mechanical(1, vec![CosineTerm { axis: 0, amplitude: 1.0, wavenumber: 2 }]).unwrap();
        let (_, hm) = barrier(64, &dw);
        let (_, aubry) = aubry_set(&hm, 1e-6).unwrap();
        assert_eq!(aubry, vec![0, 32]);
        let tight = rho_quotient(&hm, &aubry, 1e-6).unwrap();
        assert_eq!(tight.classes.len(), 2);
        assert_eq!(tight.class_distance(0, 1), tight.rho_at(0, 1));
        let loose = rho_quotient(&hm, &aubry, 10.0).unwrap();
        assert_eq!(loose.classes.len(), 1);
    }

    #[test]
    fn empty_aubry_is_an_internal_error() {
        let m = CostMatrix::from_entries(2, vec![1.0, 2.0, 2.0, 1.0], 1.0).unwrap();
        let hm = BarrierMatrix::from_matrix(m, 0.0, BarrierParams { n_max: 2, window: 1 });
        assert!(matches!(aubry_set(&hm, 1e-9), Err(Error::Internal(_))));
    }
}
