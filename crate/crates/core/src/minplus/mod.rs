//! Min-plus (tropical) linear algebra over extended reals `R ∪ {+∞}`.
//!
//! Matrices are dense and row-major with `entry(y, x)` the cost of going from
//! state `y` to state `x`. One-step cost matrices also carry the list of
//! feasible targets per source, which the sparse kernels iterate instead of
//! the full row. `+∞` is IEEE infinity; min-plus addition never produces NaN
//! because `−∞` never occurs.

pub mod io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{lagrangian_raw, HamiltonianSpec};
use crate::torus::{OneForm, ScalarField, TorusGrid};

pub const INF: f64 = f64::INFINITY;

/// Where a cost matrix came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub grid: TorusGrid,
    pub spec: HamiltonianSpec,
    pub form: OneForm,
}

/// Feasible targets of every source state, `stride` per source.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    stride: usize,
    targets: Vec<u32>,
}

impl Band {
    pub fn from_grid(grid: &TorusGrid) -> Self {
        let n = grid.n_states();
        let first = grid.neighbors(0);
        let stride = first.len();
        let mut targets = Vec::with_capacity(n * stride);
        for y in 0..n {
            targets.extend(grid.neighbors(y).into_iter().map(|x| x as u32));
        }
        Self { stride, targets }
    }

    #[inline]
    pub fn targets(&self, y: usize) -> &[u32] {
        &self.targets[y * self.stride..(y + 1) * self.stride]
    }
}

#[derive(Clone, Debug)]
pub struct CostMatrix {
    n: usize,
    entries: Vec<f64>,
    /// Time horizon represented by one application.
    tau: f64,
    band: Option<Band>,
    provenance: Option<Box<Provenance>>,
}

impl PartialEq for CostMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.tau == other.tau && self.entries == other.entries
    }
}

impl CostMatrix {
    /// Dense matrix from row-major entries. Rejects NaN and `−∞`.
    pub fn from_entries(n: usize, entries: Vec<f64>, tau: f64) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::input(format!("{} entries for a {n}x{n} matrix", entries.len())));
        }
        if entries.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::input("matrix entries must be finite or +inf"));
        }
        Ok(Self { n, entries, tau, band: None, provenance: None })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    #[inline]
    pub fn entry(&self, y: usize, x: usize) -> f64 {
        self.entries[y * self.n + x]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f64] {
        &self.entries[y * self.n..(y + 1) * self.n]
    }

    pub fn band(&self) -> Option<&Band> {
        self.band.as_ref()
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_deref()
    }

    /// Adds `s` to every finite entry; the band is kept.
    pub fn shifted(&self, s: f64) -> CostMatrix {
        CostMatrix {
            n: self.n,
            entries: self.entries.iter().map(|v| v + s).collect(),
            tau: self.tau,
            band: self.band.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Restores the feasible-target band of a one-step matrix read back from
    /// storage. Fails if some entry outside the band is finite.
    pub fn with_band(mut self, grid: &TorusGrid) -> Result<Self> {
        if grid.n_states() != self.n {
            return Err(Error::input("band grid does not match the matrix size"));
        }
        let band = Band::from_grid(grid);
        let mut inside = vec![false; self.n];
        for y in 0..self.n {
            inside.iter_mut().for_each(|b| *b = false);
            for &x in band.targets(y) {
                inside[x as usize] = true;
            }
            if self.row(y).iter().zip(&inside).any(|(&c, &ok)| !ok && c < INF) {
                return Err(Error::input(format!("row {y} has finite entries outside the feasible band")));
            }
        }
        self.band = Some(band);
        Ok(self)
    }

    /// Transpose, used for time reversal. Bands are dropped.
    pub fn transposed(&self) -> CostMatrix {
        let n = self.n;
        let mut entries = vec![INF; n * n];
        for y in 0..n {
            for x in 0..n {
                entries[x * n + y] = self.entries[y * n + x];
            }
        }
        CostMatrix { n, entries, tau: self.tau, band: None, provenance: None }
    }

    /// Visits the finite-candidate targets of row `y`.
    #[inline]
    fn for_targets(&self, y: usize, mut f: impl FnMut(usize, f64)) {
        let row = self.row(y);
        match &self.band {
            Some(b) => {
                for &x in b.targets(y) {
                    f(x as usize, row[x as usize]);
                }
            }
            None => {
                for (x, &c) in row.iter().enumerate() {
                    if c < INF {
                        f(x, c);
                    }
                }
            }
        }
    }
}

/// One-step action costs `τ·L(midpoint, Δ/τ) − ∫η` for every feasible pair.
pub fn build_cost(grid: &TorusGrid, spec: &HamiltonianSpec, form: &OneForm) -> Result<CostMatrix> {
    if spec.dim != grid.dim() {
        return Err(Error::input(format!("spec dim {} on a dim-{} grid", spec.dim, grid.dim())));
    }
    form.check_grid(grid)?;
    let n = grid.n_states();
    let band = Band::from_grid(grid);
    let tau = grid.tau();
    let dim = grid.dim();
    let rows: Vec<Result<Vec<(u32, f64)>>> = (0..n)
        .into_par_iter()
        .map(|y| {
            let base = grid.point(y);
            band.targets(y)
                .iter()
                .map(|&x| {
                    let d = grid.min_displacement(x as usize, y);
                    let mut mid = [0.0; 2];
                    let mut v = [0.0; 2];
                    for a in 0..dim {
                        mid[a] = (base[a] + 0.5 * d[a]).rem_euclid(1.0);
                        v[a] = d[a] / tau;
                    }
                    let (l, _) = lagrangian_raw(spec, &mid[..dim], &v[..dim])?;
                    Ok((x, tau * l - form.pairing(grid, y, x as usize)))
                })
                .collect()
        })
        .collect();
    let mut entries = vec![INF; n * n];
    for (y, row) in rows.into_iter().enumerate() {
        for (x, c) in row? {
            entries[y * n + x as usize] = c;
        }
    }
    debug_assert!(entries.iter().all(|v| !v.is_nan()));
    Ok(CostMatrix {
        n,
        entries,
        tau,
        band: Some(band),
        provenance: Some(Box::new(Provenance { grid: grid.clone(), spec: spec.clone(), form: form.clone() })),
    })
}

/// `out(x) = min_y [u(y) + C(y, x)]`.
pub fn minplus_apply(c: &CostMatrix, u: &[f64]) -> Vec<f64> {
    apply_with_argmin(c, u).0
}

/// As [`minplus_apply`], also returning the minimizing source per target
/// (`usize::MAX` where the output is `+∞`). Ties keep the lowest source index.
pub fn apply_with_argmin(c: &CostMatrix, u: &[f64]) -> (Vec<f64>, Vec<usize>) {
    assert_eq!(u.len(), c.n, "vector length must match matrix size");
    let mut out = vec![INF; c.n];
    let mut arg = vec![usize::MAX; c.n];
    for (y, &uy) in u.iter().enumerate() {
        if uy == INF {
            continue;
        }
        c.for_targets(y, |x, cost| {
            let s = uy + cost;
            if s < out[x] {
                out[x] = s;
                arg[x] = y;
            }
        });
    }
    debug_assert!(out.iter().all(|v| !v.is_nan()));
    (out, arg)
}

/// `out(q) = max_y [u(y) − C(q, y)]`, the supremal dual of [`minplus_apply`].
pub fn maxminus_apply(c: &CostMatrix, u: &[f64]) -> Vec<f64> {
    assert_eq!(u.len(), c.n, "vector length must match matrix size");
    (0..c.n)
        .map(|q| {
            let mut best = f64::NEG_INFINITY;
            c.for_targets(q, |y, cost| {
                let s = u[y] - cost;
                if s > best {
                    best = s;
                }
            });
            best
        })
        .collect()
}

/// Min-plus product `(A ⊙ B)(x, z) = min_y A(x, y) + B(y, z)`.
/// The band of `b`, when present, restricts the inner loop.
pub fn minplus_mul(a: &CostMatrix, b: &CostMatrix) -> CostMatrix {
    assert_eq!(a.n, b.n, "matrix sizes must agree");
    let n = a.n;
    let mut entries = vec![INF; n * n];
    entries.par_chunks_mut(n).enumerate().for_each(|(x, out)| {
        let arow = a.row(x);
        for (y, &ay) in arow.iter().enumerate() {
            if ay == INF {
                continue;
            }
            let brow = b.row(y);
            match &b.band {
                Some(band) => {
                    for &z in band.targets(y) {
                        let s = ay + brow[z as usize];
                        let o = &mut out[z as usize];
                        if s < *o {
                            *o = s;
                        }
                    }
                }
                None => {
                    for (o, &bv) in out.iter_mut().zip(brow) {
                        let s = ay + bv;
                        if s < *o {
                            *o = s;
                        }
                    }
                }
            }
        }
    });
    CostMatrix { n, entries, tau: a.tau + b.tau, band: None, provenance: None }
}

/// Elementwise minimum, in place.
pub fn min_assign(acc: &mut CostMatrix, other: &CostMatrix) {
    for (a, &b) in acc.entries.iter_mut().zip(&other.entries) {
        if b < *a {
            *a = b;
        }
    }
}

/// `C^n` in the min-plus sense, by binary decomposition of `n`.
pub fn minplus_power(c: &CostMatrix, n: u64) -> Result<CostMatrix> {
    if n == 0 {
        return Err(Error::input("matrix power exponent must be at least 1"));
    }
    let mut result: Option<CostMatrix> = None;
    let mut base = c.clone();
    let mut k = n;
    loop {
        if k & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => minplus_mul(&r, &base),
            });
        }
        k >>= 1;
        if k == 0 {
            break;
        }
        base = minplus_mul(&base, &base);
    }
    Ok(result.expect("n >= 1"))
}

/// Minimum cycle mean of the weighted digraph `C` (Karp's recurrence with a
/// virtual source joined to every state at cost 0).
pub fn karp_min_mean_cycle(c: &CostMatrix) -> Result<f64> {
    let n = c.n;
    let mut d = vec![INF; (n + 1) * n];
    d[..n].fill(0.0);
    for k in 1..=n {
        let (prev, cur) = d[(k - 1) * n..(k + 1) * n].split_at_mut(n);
        for (y, &dy) in prev.iter().enumerate() {
            if dy == INF {
                continue;
            }
            c.for_targets(y, |x, cost| {
                let s = dy + cost;
                if s < cur[x] {
                    cur[x] = s;
                }
            });
        }
    }
    let last = &d[n * n..];
    let mut best = INF;
    for x in 0..n {
        if last[x] == INF {
            continue;
        }
        let mut worst = f64::NEG_INFINITY;
        for k in 0..n {
            let dk = d[k * n + x];
            if dk < INF {
                worst = worst.max((last[x] - dk) / (n - k) as f64);
            }
        }
        best = best.min(worst);
    }
    if best == INF {
        return Err(Error::input("matrix has no cycle of finite cost"));
    }
    Ok(best)
}

/// Shorthand for `minplus_apply` on a field.
pub fn apply_field(c: &CostMatrix, u: &ScalarField) -> ScalarField {
    ScalarField::new(minplus_apply(c, &u.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::build_grid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn free_cost(grid: &TorusGrid, c: f64) -> CostMatrix {
        let spec = HamiltonianSpec::free(grid.dim()).unwrap();
        build_cost(grid, &spec, &OneForm::constant(vec![c; grid.dim()])).unwrap()
    }

    fn random_matrix(n: usize, seed: u64, density: f64) -> CostMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = vec![INF; n * n];
        for y in 0..n {
            for x in 0..n {
                if x == y || rng.gen::<f64>() < density {
                    e[y * n + x] = rng.gen_range(-1.0..1.0);
                }
            }
        }
        CostMatrix::from_entries(n, e, 1.0).unwrap()
    }

    #[test]
    fn cost_examples() {
        let g8 = build_grid(1, 8, 0.25, 2.0).unwrap();
        let c = free_cost(&g8, 0.0);
        for y in 0..8 {
            assert_eq!(c.entry(y, y), 0.0);
        }
        assert!((c.entry(0, 1) - 0.03125).abs() < 1e-15);
        assert!((c.entry(1, 0) - 0.03125).abs() < 1e-15);

        let pend = HamiltonianSpec::pendulum();
        let cp = build_cost(&g8, &pend, &OneForm::constant(vec![0.0])).unwrap();
        assert!((cp.entry(0, 0) + 0.25).abs() < 1e-15);

        let narrow = build_grid(1, 8, 0.25, 0.5).unwrap();
        let cn = free_cost(&narrow, 0.0);
        assert!(cn.entry(0, 1).is_finite());
        assert_eq!(cn.entry(0, 2), INF);
    }

    #[test]
    fn cost_dim_mismatch() {
        let g = build_grid(2, 4, 0.25, 4.0).unwrap();
        let err = build_cost(&g, &HamiltonianSpec::pendulum(), &OneForm::constant(vec![0.0, 0.0]));
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn apply_examples() {
        let g8 = build_grid(1, 8, 0.25, 2.0).unwrap();
        let c = free_cost(&g8, 0.0);
        assert_eq!(minplus_apply(&c, &[3.5; 8]), vec![3.5; 8]);
        let mut unit = vec![INF; 8];
        unit[2] = 0.0;
        let out = minplus_apply(&c, &unit);
        for x in 0..8 {
            assert_eq!(out[x], c.entry(2, x));
        }
    }

    #[test]
    fn power_examples() {
        let g8 = build_grid(1, 8, 0.25, 2.0).unwrap();
        let c = free_cost(&g8, 0.0);
        assert_eq!(minplus_power(&c, 1).unwrap(), c);
        let c2 = minplus_power(&c, 2).unwrap();
        assert!((c2.entry(0, 2) - 0.0625).abs() < 1e-15);
        // exhaustive two-step enumeration
        for x in 0..8 {
            for z in 0..8 {
                let brute = (0..8).map(|y| c.entry(x, y) + c.entry(y, z)).fold(INF, f64::min);
                assert_eq!(c2.entry(x, z), brute);
            }
        }
        assert!(minplus_power(&c, 0).is_err());
    }

    #[test]
    fn power_semigroup_law() {
        let c = random_matrix(9, 7, 0.4);
        let lhs = minplus_power(&c, 8).unwrap();
        let rhs = minplus_mul(&minplus_power(&c, 3).unwrap(), &minplus_power(&c, 5).unwrap());
        for (a, b) in lhs.entries().iter().zip(rhs.entries()) {
            assert!((a - b).abs() <= 1e-12 || (a.is_infinite() && b.is_infinite()));
        }
    }

    #[test]
    fn karp_examples() {
        let g8 = build_grid(1, 8, 0.25, 2.0).unwrap();
        assert_eq!(karp_min_mean_cycle(&free_cost(&g8, 0.0)).unwrap(), 0.0);
        let g2 = build_grid(1, 2, 0.5, 1.0).unwrap();
        let c = free_cost(&g2, 1.0);
        assert!((c.entry(0, 1) + 0.25).abs() < 1e-15);
        assert!((c.entry(1, 0) + 0.25).abs() < 1e-15);
        assert!((karp_min_mean_cycle(&c).unwrap() + 0.25).abs() < 1e-15);

        let r = random_matrix(10, 3, 0.3);
        let base = karp_min_mean_cycle(&r).unwrap();
        let shifted = karp_min_mean_cycle(&r.shifted(0.75)).unwrap();
        assert!((shifted - base - 0.75).abs() < 1e-12);
    }

    #[test]
    fn maxminus_is_dual_of_minplus() {
        let c = random_matrix(7, 11, 0.5);
        let u: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let direct = maxminus_apply(&c, &u);
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        let via = minplus_apply(&c.transposed(), &neg);
        for (a, b) in direct.iter().zip(via) {
            assert_eq!(*a, -b);
        }
    }

    proptest! {
        #[test]
        fn apply_is_nonexpansive_and_homogeneous(seed in 0u64..500, k in -3.0f64..3.0) {
            let c = random_matrix(8, seed, 0.4);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
            let u: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (cu, cv) = (minplus_apply(&c, &u), minplus_apply(&c, &v));
            let d_in = u.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let d_out = cu.iter().zip(&cv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(d_out <= d_in + 1e-12);
            let uk: Vec<f64> = u.iter().map(|x| x + k).collect();
            let cuk = minplus_apply(&c, &uk);
            for (a, b) in cuk.iter().zip(&cu) {
                prop_assert!((a - (b + k)).abs() <= 1e-12);
            }
        }

        #[test]
        fn repeated_apply_matches_power(seed in 0u64..200, n in 1u64..12) {
            let c = random_matrix(6, seed, 0.5);
            let u: Vec<f64> = (0..6).map(|i| (seed as f64 + i as f64).cos()).collect();
            let mut iter = u.clone();
            for _ in 0..n {
                iter = minplus_apply(&c, &iter);
            }
            let once = minplus_apply(&minplus_power(&c, n).unwrap(), &u);
            for (a, b) in iter.iter().zip(&once) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
