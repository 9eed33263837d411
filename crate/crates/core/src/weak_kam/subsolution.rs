use serde::{Deserialize, Serialize};

use super::{elementary_solutions, BarrierMatrix, WeakKamSystem};
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianSpec;
use crate::torus::{OneForm, ScalarField, TorusGrid};

pub const GRADIENT_SCHEME: &str = "centered-2";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    /// One field per axis.
    pub components: Vec<ScalarField>,
    pub scheme: String,
}

/// Centered differences with periodic wrap.
pub fn gradient(u: &ScalarField, grid: &TorusGrid) -> VectorField {
    let n = grid.n_per_axis();
    let h2 = 2.0 * grid.spacing();
    let components = (0..grid.dim())
        .map(|axis| {
            ScalarField::new(
                (0..grid.n_states())
                    .map(|i| {
                        let c = grid.cells(i);
                        let (mut fwd, mut back) = (c, c);
                        fwd[axis] = (c[axis] + 1) % n;
                        back[axis] = (c[axis] + n - 1) % n;
                        (u.values[grid.index(fwd)] - u.values[grid.index(back)]) / h2
                    })
                    .collect(),
            )
        })
        .collect();
    VectorField { components, scheme: GRADIENT_SCHEME.to_string() }
}

/// Largest `|u(i+1) − 2u(i) + u(i−1)| / spacing²` over axes and states.
pub fn second_difference(u: &ScalarField, grid: &TorusGrid) -> f64 {
    let n = grid.n_per_axis();
    let h2 = grid.spacing() * grid.spacing();
    let mut worst: f64 = 0.0;
    for axis in 0..grid.dim() {
        for i in 0..grid.n_states() {
            let c = grid.cells(i);
            let (mut fwd, mut back) = (c, c);
            fwd[axis] = (c[axis] + 1) % n;
            back[axis] = (c[axis] + n - 1) % n;
            let d = u.values[grid.index(fwd)] - 2.0 * u.values[i] + u.values[grid.index(back)];
            worst = worst.max(d.abs() / h2);
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionReport {
    /// `max_q H(q, η_q + Du(q)) − α`.
    pub max_violation: f64,
    /// States where the violation exceeds the tolerance.
    pub violating_points: Vec<usize>,
    pub scheme: String,
    pub tol: f64,
}

impl SubsolutionReport {
    pub fn passed(&self) -> bool {
        self.violating_points.is_empty()
    }
}

pub fn subsolution_check(
    spec: &HamiltonianSpec,
    form: &OneForm,
    alpha: f64,
    grid: &TorusGrid,
    u: &ScalarField,
    tol: f64,
) -> Result<SubsolutionReport> {
    u.check_grid(grid)?;
    form.check_grid(grid)?;
    if spec.dim != grid.dim() {
        return Err(Error::input("spec and grid dims differ"));
    }
    if u.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("subsolution check needs a finite function"));
    }
    let du = gradient(u, grid);
    let df = form.exact_part.as_ref().map(|f| gradient(f, grid));
    let dim = grid.dim();
    let mut max_violation = f64::NEG_INFINITY;
    let mut violating_points = Vec::new();
    for i in 0..grid.n_states() {
        let q = grid.point(i);
        let mut p = [0.0; 2];
        for a in 0..dim {
            p[a] = form.c[a] + du.components[a].values[i];
            if let Some(df) = &df {
                p[a] += df.components[a].values[i];
            }
        }
        let v = spec.value(&q, &p[..dim]) - alpha;
        max_violation = max_violation.max(v);
        if v > tol {
            violating_points.push(i);
        }
    }
    Ok(SubsolutionReport { max_violation, violating_points, scheme: du.scheme, tol })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommonSubsolution {
    pub u: ScalarField,
    pub first: SubsolutionReport,
    pub second: SubsolutionReport,
    /// Largest second difference of `u`, a `C^{1,1}` proxy.
    pub second_difference: f64,
}

/// `T⁻_{H₁,s} T⁻_{H₂,r} u₊` with `u₊ = −h₁(·, seed)`, checked as a
/// subsolution of both Hamiltonians.
pub fn common_subsolution(
    first: &WeakKamSystem,
    second: &WeakKamSystem,
    first_barrier: &BarrierMatrix,
    aubry: &[usize],
    s_steps: usize,
    r_steps: usize,
    seed: usize,
    tol: f64,
) -> Result<CommonSubsolution> {
    if first.grid() != second.grid() || first.form() != second.form() {
        return Err(Error::input("common subsolution needs both systems on the same grid and form"));
    }
    let (_, u_plus) = elementary_solutions(first_barrier, seed, aubry)?;
    let inner = second.backward_semigroup(&u_plus, r_steps)?;
    let u = first.backward_semigroup(&inner, s_steps)?;
    let grid = first.grid();
    let report1 = subsolution_check(first.spec(), first.form(), first.alpha(), grid, &u, tol)?;
    let report2 = subsolution_check(second.spec(), second.form(), second.alpha(), grid, &u, tol)?;
    let second_difference = second_difference(&u, grid);
    Ok(CommonSubsolution { u, first: report1, second: report2, second_difference })
}
