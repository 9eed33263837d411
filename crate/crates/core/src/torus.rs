//! Uniform grids on the unit-period flat torus and closed 1-forms `c·dq + df`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    n_per_axis: usize,
    spacing: f64,
    tau: f64,
    v_max: f64,
    /// Largest feasible step, in cells per axis.
    reach: usize,
}

pub fn build_grid(dim: usize, n_per_axis: usize, tau: f64, v_max: f64) -> Result<TorusGrid> {
    TorusGrid::new(dim, n_per_axis, tau, v_max)
}

impl TorusGrid {
    pub fn new(dim: usize, n_per_axis: usize, tau: f64, v_max: f64) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(Error::config(format!("grid dim {dim} not supported (1 or 2)")));
        }
        if n_per_axis < 2 {
            return Err(Error::config(format!("grid needs at least 2 points per axis, got {n_per_axis}")));
        }
        if !(tau > 0.0 && tau.is_finite()) || !(v_max > 0.0 && v_max.is_finite()) {
            return Err(Error::config(format!("tau ({tau}) and v_max ({v_max}) must be positive")));
        }
        let spacing = 1.0 / n_per_axis as f64;
        let cells = v_max * tau / spacing;
        if cells < 1.0 - 1e-9 {
            return Err(Error::config(format!(
                "no motion possible: v_max*tau = {} < spacing {spacing}",
                v_max * tau
            )));
        }
        let reach = ((cells + 1e-9).floor() as usize).min(n_per_axis / 2);
        Ok(Self { dim, n_per_axis, spacing, tau, v_max, reach })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn reach(&self) -> usize {
        self.reach
    }

    /// True when the speed cap excludes some displacements.
    pub fn cap_binds(&self) -> bool {
        self.reach < self.n_per_axis / 2
    }

    pub fn n_states(&self) -> usize {
        self.n_per_axis.pow(self.dim as u32)
    }

    /// Per-axis cell coordinates of a state, axis 0 fastest.
    pub fn cells(&self, index: usize) -> [usize; 2] {
        let n = self.n_per_axis;
        if self.dim == 1 {
            [index, 0]
        } else {
            [index % n, index / n]
        }
    }

    pub fn index(&self, cells: [usize; 2]) -> usize {
        let n = self.n_per_axis;
        if self.dim == 1 {
            cells[0] % n
        } else {
            cells[0] % n + n * (cells[1] % n)
        }
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        let c = self.cells(index);
        c[..self.dim].iter().map(|&i| i as f64 * self.spacing).collect()
    }

    /// Index of the grid point nearest to `q` (coordinates taken mod 1).
    pub fn nearest(&self, q: &[f64]) -> usize {
        let n = self.n_per_axis as f64;
        let mut cells = [0usize; 2];
        for (c, &x) in cells.iter_mut().zip(q) {
            *c = ((x.rem_euclid(1.0) * n).round() as usize) % self.n_per_axis;
        }
        self.index(cells)
    }

    /// Signed cell displacement from `y` to `x`, minimal under wrap,
    /// with the half-period tie resolved toward `+`.
    pub fn cell_displacement(&self, x: usize, y: usize) -> [i64; 2] {
        let n = self.n_per_axis as i64;
        let (cx, cy) = (self.cells(x), self.cells(y));
        let mut d = [0i64; 2];
        for a in 0..self.dim {
            let mut k = (cx[a] as i64 - cy[a] as i64).rem_euclid(n);
            if 2 * k > n {
                k -= n;
            }
            d[a] = k;
        }
        d
    }

    /// Minimal displacement from `y` to `x` in torus coordinates.
    pub fn min_displacement(&self, x: usize, y: usize) -> Vec<f64> {
        let d = self.cell_displacement(x, y);
        d[..self.dim].iter().map(|&k| k as f64 * self.spacing).collect()
    }

    /// Torus distance between two states (Euclidean on minimal displacements).
    pub fn distance(&self, x: usize, y: usize) -> f64 {
        self.min_displacement(x, y).iter().map(|d| d * d).sum::<f64>().sqrt()
    }

    /// Flat-index offsets of every state reachable in one step from `y`, in a
    /// fixed order (axis 1 outer, axis 0 inner, both from `-reach` up).
    pub fn neighbors(&self, y: usize) -> Vec<usize> {
        let r = self.reach as i64;
        let n = self.n_per_axis as i64;
        let cy = self.cells(y);
        let wrap = |base: usize, k: i64| (base as i64 + k).rem_euclid(n) as usize;
        let mut out = Vec::new();
        let span = |_: ()| -> Vec<i64> {
            // with reach == n/2 and n even, -reach and +reach are the same cell
            let lo = if 2 * r == n { -r + 1 } else { -r };
            (lo..=r).collect()
        };
        match self.dim {
            1 => {
                for k in span(()) {
                    out.push(wrap(cy[0], k));
                }
            }
            _ => {
                for k1 in span(()) {
                    for k0 in span(()) {
                        out.push(self.index([wrap(cy[0], k0), wrap(cy[1], k1)]));
                    }
                }
            }
        }
        out
    }

    /// Copy with a different resolution, same dim and speed cap.
    pub fn with_resolution(&self, n_per_axis: usize, tau: f64) -> Result<Self> {
        Self::new(self.dim, n_per_axis, tau, self.v_max)
    }
}

/// Real-valued function on grid states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(grid: &TorusGrid, k: f64) -> Self {
        Self { values: vec![k; grid.n_states()] }
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        Self { values: (0..grid.n_states()).map(|i| f(&grid.point(i))).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn neg(&self) -> ScalarField {
        ScalarField { values: self.values.iter().map(|v| -v).collect() }
    }

    pub fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        if self.values.len() != grid.n_states() {
            return Err(Error::input(format!(
                "field has {} values, grid has {} states",
                self.values.len(),
                grid.n_states()
            )));
        }
        Ok(())
    }
}

/// Seeded random trigonometric polynomial with modes `|k_i| ≤ max_mode`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomField {
    pub seed: u64,
    pub amplitude: f64,
    pub max_mode: u32,
}

impl RandomField {
    /// Evaluates the same continuous function on any grid of the given dim.
    pub fn sample(&self, grid: &TorusGrid) -> ScalarField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        let k = self.max_mode as i64;
        let second: Vec<i64> = if grid.dim() == 2 { (-k..=k).collect() } else { vec![0] };
        let mut modes = Vec::new();
        for &k1 in &second {
            for k0 in -k..=k {
                // one mode from each ±k pair, no constant
                if k1 > 0 || (k1 == 0 && k0 > 0) {
                    let a: f64 = rng.gen_range(-1.0..1.0);
                    let b: f64 = rng.gen_range(-1.0..1.0);
                    modes.push((k0 as f64, k1 as f64, a, b));
                }
            }
        }
        let scale = self.amplitude / (modes.len().max(1) as f64).sqrt();
        ScalarField::from_fn(grid, |q| {
            let (x, y) = (q[0], q.get(1).copied().unwrap_or(0.0));
            modes
                .iter()
                .map(|&(k0, k1, a, b)| {
                    let phase = 2.0 * std::f64::consts::PI * (k0 * x + k1 * y);
                    a * phase.cos() + b * phase.sin()
                })
                .sum::<f64>()
                * scale
        })
    }
}

/// Named recipes for the exact part `f` of a form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExactPart {
    /// `amplitude · Σ_i sin(2π q_i)`.
    Sine { amplitude: f64 },
    Random(RandomField),
}

impl ExactPart {
    pub fn sample(&self, grid: &TorusGrid) -> ScalarField {
        match self {
            ExactPart::Sine { amplitude } => ScalarField::from_fn(grid, |q| {
                amplitude * q.iter().map(|x| (2.0 * std::f64::consts::PI * x).sin()).sum::<f64>()
            }),
            ExactPart::Random(r) => r.sample(grid),
        }
    }
}

/// Closed 1-form `c·dq + df` with `f` sampled on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneForm {
    pub c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_part: Option<ScalarField>,
}

impl OneForm {
    pub fn constant(c: Vec<f64>) -> Self {
        Self { c, exact_part: None }
    }

    pub fn with_exact_part(c: Vec<f64>, f: ScalarField) -> Self {
        Self { c, exact_part: Some(f) }
    }

    pub fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        if self.c.len() != grid.dim() {
            return Err(Error::input(format!("form class has {} components, grid dim {}", self.c.len(), grid.dim())));
        }
        if let Some(f) = &self.exact_part {
            f.check_grid(grid)?;
        }
        Ok(())
    }

    /// `∫η` along the minimal segment from `y` to `x`.
    pub fn pairing(&self, grid: &TorusGrid, y: usize, x: usize) -> f64 {
        let d = grid.cell_displacement(x, y);
        let linear: f64 = self.c.iter().zip(d).map(|(c, k)| c * k as f64 * grid.spacing()).sum();
        match &self.exact_part {
            Some(f) => linear + f.values[x] - f.values[y],
            None => linear,
        }
    }
}

pub fn form_pairing(form: &OneForm, y: usize, x: usize, grid: &TorusGrid) -> f64 {
    form.pairing(grid, y, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn g8() -> TorusGrid {
        build_grid(1, 8, 0.25, 2.0).unwrap()
    }

    #[test]
    fn build_examples() {
        let g = g8();
        assert_eq!(g.n_states(), 8);
        assert_eq!(g.spacing(), 0.125);
        assert_eq!(g.reach(), 4);
        assert_eq!(build_grid(2, 16, 0.25, 2.0).unwrap().n_states(), 256);
        let err = build_grid(1, 8, 0.25, 0.4).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("no motion")), "{err}");
    }

    #[test]
    fn displacement_examples() {
        let g = g8();
        assert_eq!(g.min_displacement(7, 0), vec![-0.125]);
        assert_eq!(g.min_displacement(3, 3), vec![0.0]);
        assert_eq!(g.min_displacement(4, 0), vec![0.5]);
        assert_eq!(g.min_displacement(0, 4), vec![0.5]);
    }

    #[test]
    fn pairing_examples() {
        let g = g8();
        let form = OneForm::constant(vec![1.0]);
        assert_eq!(form_pairing(&form, 0, 1, &g), 0.125);
        assert_eq!(form_pairing(&form, 5, 5, &g), 0.0);
        let f = ScalarField::from_fn(&g, |q| (2.0 * PI * q[0]).sin());
        let exact = OneForm::with_exact_part(vec![0.0], f);
        assert!((form_pairing(&exact, 0, 2, &g) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn neighbors_cover_reach_box() {
        let g = build_grid(2, 16, 0.25, 0.5).unwrap();
        assert_eq!(g.reach(), 2);
        let nb = g.neighbors(g.index([0, 15]));
        assert_eq!(nb.len(), 25);
        for &x in &nb {
            let d = g.cell_displacement(x, g.index([0, 15]));
            assert!(d[0].abs() <= 2 && d[1].abs() <= 2);
        }
        // reach capped at the half period: every state listed once
        let mut all = g8().neighbors(3);
        all.sort_unstable();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn displacement_is_at_most_half(n in 2usize..40, x in 0usize..1600, y in 0usize..1600) {
            let g = build_grid(2, n, 1.0, 1.0).unwrap();
            let (x, y) = (x % g.n_states(), y % g.n_states());
            for d in g.min_displacement(x, y) {
                prop_assert!(d.abs() <= 0.5 + 1e-15);
            }
        }

        #[test]
        fn pairing_antisymmetric_off_ties(seed in 0u64..1000, x in 0usize..256, y in 0usize..256) {
            let g = build_grid(2, 16, 0.25, 2.0).unwrap();
            let f = ScalarField::from_fn(&g, |q| ((seed as f64) * q[0] + 3.0 * q[1]).sin());
            let form = OneForm::with_exact_part(vec![0.3, -1.2], f);
            let d = g.cell_displacement(x, y);
            prop_assume!(d[0].abs() != 8 && d[1].abs() != 8);
            let a = form.pairing(&g, y, x);
            let b = form.pairing(&g, x, y);
            prop_assert!((a + b).abs() < 1e-12);
        }

        #[test]
        fn exact_part_telescopes(a in 0usize..64, b in 0usize..64, c in 0usize..64) {
            let g = build_grid(1, 64, 0.25, 2.0).unwrap();
            let f = ScalarField::from_fn(&g, |q| (2.0 * PI * q[0]).cos() + q[0]);
            let form = OneForm::with_exact_part(vec![0.0], f);
            let chain = form.pairing(&g, a, b) + form.pairing(&g, b, c);
            prop_assert!((chain - form.pairing(&g, a, c)).abs() < 1e-12);
        }
    }
}
