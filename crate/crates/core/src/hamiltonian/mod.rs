//! Parametric Tonelli Hamiltonians on `T^d x R^d` (d = 1 or 2).
//!
//! Every family carries analytic first and second momentum derivatives and
//! analytic position derivatives, so Poisson brackets are exact up to
//! floating point rounding and the Legendre transform can use Newton's method
//! without finite differences.

mod legendre;

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub use legendre::{eval_lagrangian, LagrangianValue};
pub(crate) use legendre::lagrangian_raw;

/// Largest supported configuration dimension.
pub const MAX_DIM: usize = 2;

/// `amplitude * cos(2π * wavenumber * q[axis])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineTerm {
    pub axis: usize,
    pub amplitude: f64,
    pub wavenumber: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `Σ_i P_i(p_i)`, one polynomial per axis, coefficients in increasing degree.
    Polynomial { coeffs: Vec<Vec<f64>> },
    /// `½|p|² + Σ a cos(2πk q_axis)`.
    Mechanical { potential: Vec<CosineTerm> },
    /// `Σ_i f_i(q_i, p_i)` with one-dimensional terms, term `i` acting on axis `i`.
    Separable { terms: Vec<HamiltonianSpec> },
    /// `Σ w_i H_i` with `w_i > 0`.
    Combination { parts: Vec<HamiltonianSpec>, weights: Vec<f64> },
    /// Momentum reflection about the class `c`: `Ȟ(q, P) = H(q, 2c - P)`.
    Symmetrized { base: Box<HamiltonianSpec>, class: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub dim: usize,
    #[serde(flatten)]
    pub family: Family,
}

/// Symmetric 2x2 (or 1x1, upper-left) momentum Hessian.
pub(crate) type Hessian = [[f64; 2]; 2];

impl HamiltonianSpec {
    pub fn polynomial(coeffs: Vec<Vec<f64>>) -> Result<Self> {
        let dim = coeffs.len();
        check_dim(dim)?;
        if coeffs.iter().any(|c| c.is_empty()) {
            return Err(Error::input("polynomial axis with no coefficients"));
        }
        Ok(Self { dim, family: Family::Polynomial { coeffs } })
    }

    /// `½|p|²` in `dim` dimensions.
    pub fn free(dim: usize) -> Result<Self> {
        Self::polynomial(vec![vec![0.0, 0.0, 0.5]; dim])
    }

    pub fn mechanical(dim: usize, potential: Vec<CosineTerm>) -> Result<Self> {
        check_dim(dim)?;
        if let Some(t) = potential.iter().find(|t| t.axis >= dim) {
            return Err(Error::input(format!("potential term on axis {} in dim {dim}", t.axis)));
        }
        Ok(Self { dim, family: Family::Mechanical { potential } })
    }

    /// `½p² + cos(2πq)` on `T¹`.
    pub fn pendulum() -> Self {
        Self::mechanical(1, vec![CosineTerm { axis: 0, amplitude: 1.0, wavenumber: 1 }])
            .expect("valid pendulum")
    }

    pub fn separable(terms: Vec<HamiltonianSpec>) -> Result<Self> {
        check_dim(terms.len())?;
        if let Some(t) = terms.iter().find(|t| t.dim != 1) {
            return Err(Error::input(format!("separable term of dim {} (must be 1)", t.dim)));
        }
        Ok(Self { dim: terms.len(), family: Family::Separable { terms } })
    }

    pub fn value(&self, q: &[f64], p: &[f64]) -> f64 {
        match &self.family {
            Family::Polynomial { coeffs } => {
                coeffs.iter().zip(p).map(|(c, &pi)| poly(c, pi, 0)).sum()
            }
            Family::Mechanical { potential } => {
                0.5 * p.iter().map(|x| x * x).sum::<f64>() + potential_value(potential, q)
            }
            Family::Separable { terms } => terms
                .iter()
                .enumerate()
                .map(|(i, t)| t.value(&q[i..=i], &p[i..=i]))
                .sum(),
            Family::Combination { parts, weights } => {
                parts.iter().zip(weights).map(|(h, w)| w * h.value(q, p)).sum()
            }
            Family::Symmetrized { base, class } => {
                let r = reflect(class, p);
                base.value(q, &r[..self.dim])
            }
        }
    }

    pub(crate) fn grad_p(&self, q: &[f64], p: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        match &self.family {
            Family::Polynomial { coeffs } => {
                for (i, c) in coeffs.iter().enumerate() {
                    g[i] = poly(c, p[i], 1);
                }
            }
            Family::Mechanical { .. } => g[..self.dim].copy_from_slice(p),
            Family::Separable { terms } => {
                for (i, t) in terms.iter().enumerate() {
                    g[i] = t.grad_p(&q[i..=i], &p[i..=i])[0];
                }
            }
            Family::Combination { parts, weights } => {
                for (h, w) in parts.iter().zip(weights) {
                    let gi = h.grad_p(q, p);
                    g[0] += w * gi[0];
                    g[1] += w * gi[1];
                }
            }
            Family::Symmetrized { base, class } => {
                let r = reflect(class, p);
                let gb = base.grad_p(q, &r[..self.dim]);
                g = [-gb[0], -gb[1]];
            }
        }
        g
    }

    pub(crate) fn grad_q(&self, q: &[f64], p: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        match &self.family {
            Family::Polynomial { .. } => {}
            Family::Mechanical { potential } => {
                for t in potential {
                    let k = 2.0 * PI * f64::from(t.wavenumber);
                    g[t.axis] -= t.amplitude * k * (k * q[t.axis]).sin();
                }
            }
            Family::Separable { terms } => {
                for (i, t) in terms.iter().enumerate() {
                    g[i] = t.grad_q(&q[i..=i], &p[i..=i])[0];
                }
            }
            Family::Combination { parts, weights } => {
                for (h, w) in parts.iter().zip(weights) {
                    let gi = h.grad_q(q, p);
                    g[0] += w * gi[0];
                    g[1] += w * gi[1];
                }
            }
            Family::Symmetrized { base, class } => {
                let r = reflect(class, p);
                g = base.grad_q(q, &r[..self.dim]);
            }
        }
        g
    }

    pub(crate) fn hess_p(&self, q: &[f64], p: &[f64]) -> Hessian {
        let mut h = [[0.0; 2]; 2];
        match &self.family {
            Family::Polynomial { coeffs } => {
                for (i, c) in coeffs.iter().enumerate() {
                    h[i][i] = poly(c, p[i], 2);
                }
            }
            Family::Mechanical { .. } => {
                for (i, row) in h.iter_mut().enumerate().take(self.dim) {
                    row[i] = 1.0;
                }
            }
            Family::Separable { terms } => {
                for (i, t) in terms.iter().enumerate() {
                    h[i][i] = t.hess_p(&q[i..=i], &p[i..=i])[0][0];
                }
            }
            Family::Combination { parts, weights } => {
                for (part, w) in parts.iter().zip(weights) {
                    let hi = part.hess_p(q, p);
                    for a in 0..2 {
                        for b in 0..2 {
                            h[a][b] += w * hi[a][b];
                        }
                    }
                }
            }
            Family::Symmetrized { base, class } => {
                let r = reflect(class, p);
                h = base.hess_p(q, &r[..self.dim]);
            }
        }
        h
    }

    /// True when the closed-form Legendre transform applies.
    pub(crate) fn quadratic_kinetic(&self) -> bool {
        match &self.family {
            Family::Mechanical { .. } => true,
            Family::Polynomial { coeffs } => coeffs
                .iter()
                .all(|c| c.len() <= 3 && c.get(2).is_some_and(|&a| a > 0.0)),
            _ => false,
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::input(format!("dimension {dim} not supported (1 or 2)")));
    }
    Ok(())
}

/// `d`-th derivative of `Σ c_k x^k` at `x`.
fn poly(c: &[f64], x: f64, d: usize) -> f64 {
    let mut acc = 0.0;
    for (k, &a) in c.iter().enumerate().skip(d).rev() {
        let falling: f64 = ((k - d + 1)..=k).map(|j| j as f64).product();
        acc = acc * x + a * falling;
    }
    acc
}

fn potential_value(terms: &[CosineTerm], q: &[f64]) -> f64 {
    terms
        .iter()
        .map(|t| t.amplitude * (2.0 * PI * f64::from(t.wavenumber) * q[t.axis]).cos())
        .sum()
}

fn reflect(class: &[f64], p: &[f64]) -> [f64; 2] {
    let mut r = [0.0; 2];
    for (i, (&c, &pi)) in class.iter().zip(p).enumerate() {
        r[i] = 2.0 * c - pi;
    }
    r
}

fn check_point(spec: &HamiltonianSpec, q: &[f64], p: &[f64]) -> Result<()> {
    if q.len() != spec.dim || p.len() != spec.dim {
        return Err(Error::input(format!(
            "dimension mismatch: spec dim {}, q has {}, p has {}",
            spec.dim,
            q.len(),
            p.len()
        )));
    }
    Ok(())
}

pub fn eval_hamiltonian(spec: &HamiltonianSpec, q: &[f64], p: &[f64]) -> Result<f64> {
    check_point(spec, q, p)?;
    Ok(spec.value(q, p))
}

/// `{H₁,H₂}(q,p) = Σ_i ∂_{p_i}H₁ ∂_{q_i}H₂ − ∂_{q_i}H₁ ∂_{p_i}H₂`.
pub fn poisson_bracket(a: &HamiltonianSpec, b: &HamiltonianSpec, q: &[f64], p: &[f64]) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::input(format!("bracket of dims {} and {}", a.dim, b.dim)));
    }
    check_point(a, q, p)?;
    Ok(bracket_raw(a, b, q, p))
}

fn bracket_raw(a: &HamiltonianSpec, b: &HamiltonianSpec, q: &[f64], p: &[f64]) -> f64 {
    let (pa, qa) = (a.grad_p(q, p), a.grad_q(q, p));
    let (pb, qb) = (b.grad_p(q, p), b.grad_q(q, p));
    (0..a.dim).map(|i| pa[i] * qb[i] - qa[i] * pb[i]).sum()
}

/// Sample points `(q, p)`: a regular `q` lattice on the torus times a regular
/// momentum box `[-p_max, p_max]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleLattice {
    pub q_per_axis: usize,
    pub p_per_axis: usize,
    pub p_max: f64,
}

impl Default for SampleLattice {
    fn default() -> Self {
        Self { q_per_axis: 32, p_per_axis: 9, p_max: 2.0 }
    }
}

impl SampleLattice {
    /// All `(q, p)` sample pairs for dimension `dim`, in a fixed order.
    pub fn points(&self, dim: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let qs: Vec<f64> = (0..self.q_per_axis).map(|i| i as f64 / self.q_per_axis as f64).collect();
        let ps: Vec<f64> = if self.p_per_axis <= 1 {
            vec![0.0]
        } else {
            (0..self.p_per_axis)
                .map(|i| -self.p_max + 2.0 * self.p_max * i as f64 / (self.p_per_axis - 1) as f64)
                .collect()
        };
        let q_grid = cartesian(&qs, dim);
        let p_grid = cartesian(&ps, dim);
        let mut out = Vec::with_capacity(q_grid.len() * p_grid.len());
        for q in &q_grid {
            for p in &p_grid {
                out.push((q.clone(), p.clone()));
            }
        }
        out
    }
}

fn cartesian(axis: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&x| {
                    let mut v = prefix.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    out
}

/// Largest `|{H₁,H₂}|` over the lattice, with the point where it occurs.
#[derive(Clone, Debug, PartialEq)]
pub struct BracketSample {
    pub max_abs: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

pub fn max_bracket(a: &HamiltonianSpec, b: &HamiltonianSpec, lattice: &SampleLattice) -> Result<BracketSample> {
    if a.dim != b.dim {
        return Err(Error::input(format!("bracket of dims {} and {}", a.dim, b.dim)));
    }
    let mut best = BracketSample { max_abs: -1.0, q: vec![], p: vec![] };
    for (q, p) in lattice.points(a.dim) {
        let v = bracket_raw(a, b, &q, &p).abs();
        if v > best.max_abs {
            best = BracketSample { max_abs: v, q, p };
        }
    }
    Ok(best)
}

/// Symmetric Hamiltonian with respect to the class `c`: `Ȟ(q, c + p) = H(q, c − p)`.
pub fn symmetrize(spec: &HamiltonianSpec, class: &[f64]) -> Result<HamiltonianSpec> {
    if class.len() != spec.dim {
        return Err(Error::input(format!("class of length {} for dim {}", class.len(), spec.dim)));
    }
    Ok(HamiltonianSpec {
        dim: spec.dim,
        family: Family::Symmetrized { base: Box::new(spec.clone()), class: class.to_vec() },
    })
}

/// Positive combination `Σ w_i H_i`. The result is re-checked for strict
/// fiberwise convexity on the default lattice.
pub fn combine(specs: &[HamiltonianSpec], weights: &[f64]) -> Result<HamiltonianSpec> {
    if specs.is_empty() || specs.len() != weights.len() {
        return Err(Error::input("combine needs one positive weight per spec"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::input(format!("non-positive weight {w}: convexity not guaranteed")));
    }
    let dim = specs[0].dim;
    if specs.iter().any(|s| s.dim != dim) {
        return Err(Error::input("combine of specs with different dims"));
    }
    let out = HamiltonianSpec {
        dim,
        family: Family::Combination { parts: specs.to_vec(), weights: weights.to_vec() },
    };
    check_convexity(&out, &SampleLattice::default())?;
    Ok(out)
}

/// Sampled Tonelli gate. Not a proof: strict convexity is checked on the
/// lattice, and superlinearity as "the momentum ball of radius `2·v_max`
/// reaches velocities beyond `v_max` in every sampled direction".
pub fn check_tonelli(spec: &HamiltonianSpec, v_max: f64) -> Result<()> {
    let radius = 2.0 * v_max;
    let lattice = SampleLattice { q_per_axis: 32, p_per_axis: 9, p_max: radius };
    check_convexity(spec, &lattice)?;
    let directions: Vec<Vec<f64>> = match spec.dim {
        1 => vec![vec![1.0], vec![-1.0]],
        _ => (0..8)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / 8.0;
                vec![t.cos(), t.sin()]
            })
            .collect(),
    };
    let centers = SampleLattice { p_per_axis: 1, ..lattice };
    for (q, _) in centers.points(spec.dim) {
        for d in &directions {
            let p: Vec<f64> = d.iter().map(|x| x * radius).collect();
            let g = spec.grad_p(&q, &p);
            let speed: f64 = d.iter().zip(g).map(|(a, b)| a * b).sum();
            if !(speed > v_max) {
                return Err(Error::input(format!(
                    "superlinearity gate failed at q={q:?}, |p|={radius}: speed {speed} <= v_max {v_max}"
                )));
            }
        }
    }
    Ok(())
}

fn check_convexity(spec: &HamiltonianSpec, lattice: &SampleLattice) -> Result<()> {
    for (q, p) in lattice.points(spec.dim) {
        let h = spec.hess_p(&q, &p);
        let pd = if spec.dim == 1 {
            h[0][0] > 0.0
        } else {
            h[0][0] > 0.0 && h[0][0] * h[1][1] - h[0][1] * h[1][0] > 0.0
        };
        if !pd {
            return Err(Error::input(format!("momentum Hessian not positive definite at q={q:?}, p={p:?}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sep3() -> (HamiltonianSpec, HamiltonianSpec) {
        let f = HamiltonianSpec::pendulum();
        let g = HamiltonianSpec::free(1).unwrap();
        let two_f = combine(std::slice::from_ref(&f), &[2.0]).unwrap();
        (
            HamiltonianSpec::separable(vec![f, g.clone()]).unwrap(),
            HamiltonianSpec::separable(vec![two_f, g]).unwrap(),
        )
    }

    fn nc() -> (HamiltonianSpec, HamiltonianSpec) {
        let t = |axis| CosineTerm { axis, amplitude: 1.0, wavenumber: 1 };
        (
            HamiltonianSpec::mechanical(2, vec![t(0)]).unwrap(),
            HamiltonianSpec::mechanical(2, vec![t(1)]).unwrap(),
        )
    }

    #[test]
    fn evaluation_examples() {
        let free = HamiltonianSpec::free(1).unwrap();
        assert_eq!(eval_hamiltonian(&free, &[0.3], &[0.0]).unwrap(), 0.0);
        assert_eq!(eval_hamiltonian(&HamiltonianSpec::pendulum(), &[0.0], &[0.0]).unwrap(), 1.0);
        let (_, h2) = sep3();
        let v = eval_hamiltonian(&h2, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - 3.5).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let free = HamiltonianSpec::free(2).unwrap();
        assert!(matches!(eval_hamiltonian(&free, &[0.0], &[0.0, 0.0]), Err(Error::Input(_))));
        let pend = HamiltonianSpec::pendulum();
        assert!(poisson_bracket(&free, &pend, &[0.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn polynomial_derivatives() {
        // 1 + 2x + 3x^2 + 4x^3
        let c = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(poly(&c, 2.0, 0), 1.0 + 4.0 + 12.0 + 32.0);
        assert_eq!(poly(&c, 2.0, 1), 2.0 + 12.0 + 48.0);
        assert_eq!(poly(&c, 2.0, 2), 6.0 + 48.0);
        assert_eq!(poly(&c, 2.0, 4), 0.0);
    }

    #[test]
    fn bracket_examples() {
        let (h1, h2) = sep3();
        for (q, p) in SampleLattice::default().points(2).iter().step_by(97) {
            assert_eq!(poisson_bracket(&h1, &h2, q, p).unwrap(), 0.0);
            assert_eq!(poisson_bracket(&h1, &h1, q, p).unwrap(), 0.0);
        }
        let (a, b) = nc();
        let v = poisson_bracket(&a, &b, &[0.25, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - 2.0 * PI).abs() < 1e-12, "{v}");
    }

    #[test]
    fn bracket_antisymmetry_is_exact() {
        let (a, b) = nc();
        for (q, p) in SampleLattice::default().points(2).iter().step_by(13) {
            let ab = poisson_bracket(&a, &b, q, p).unwrap();
            let ba = poisson_bracket(&b, &a, q, p).unwrap();
            assert_eq!(ab, -ba);
        }
    }

    #[test]
    fn symmetrize_examples() {
        let free = HamiltonianSpec::free(1).unwrap();
        let sym = symmetrize(&free, &[0.0]).unwrap();
        let pend = HamiltonianSpec::pendulum();
        let spend = symmetrize(&pend, &[0.0]).unwrap();
        let cubic = HamiltonianSpec::polynomial(vec![vec![0.0, 0.0, 0.5, 1.0]]).unwrap();
        let scubic = symmetrize(&cubic, &[0.0]).unwrap();
        for i in 0..21 {
            let p = -1.0 + 0.1 * i as f64;
            let q = 0.05 * i as f64;
            assert_eq!(sym.value(&[q], &[p]), free.value(&[q], &[p]));
            assert_eq!(spend.value(&[q], &[p]), pend.value(&[q], &[p]));
            let expected = 0.5 * p * p - p * p * p;
            assert!((scubic.value(&[q], &[p]) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn combine_examples() {
        let free = HamiltonianSpec::free(1).unwrap();
        let twice = combine(std::slice::from_ref(&free), &[2.0]).unwrap();
        assert_eq!(twice.value(&[0.0], &[1.0]), 1.0);

        let (h1, h2) = sep3();
        let sum = combine(&[h1.clone(), h2], &[1.0, 1.0]).unwrap();
        assert!((sum.value(&[0.0, 0.7], &[0.0, 0.0]) - 3.0).abs() < 1e-15);

        let f = HamiltonianSpec::pendulum();
        let g = HamiltonianSpec::free(1).unwrap();
        let fg = combine(&[HamiltonianSpec::separable(vec![f, g]).unwrap()], &[1.0]).unwrap();
        for (q, p) in SampleLattice::default().points(2) {
            assert_eq!(fg.value(&q, &p), h1.value(&q, &p));
        }

        assert!(matches!(combine(std::slice::from_ref(&free), &[0.0]), Err(Error::Input(_))));
        assert!(matches!(combine(&[free], &[-1.0]), Err(Error::Input(_))));
    }

    #[test]
    fn combine_is_linear() {
        let (h1, h2) = nc();
        let w = [0.3, 1.7];
        let sum = combine(&[h1.clone(), h2.clone()], &w).unwrap();
        for (q, p) in SampleLattice::default().points(2).iter().step_by(7) {
            let direct = w[0] * h1.value(q, p) + w[1] * h2.value(q, p);
            assert!((sum.value(q, p) - direct).abs() <= 4.0 * f64::EPSILON * direct.abs().max(1.0));
        }
    }

    #[test]
    fn tonelli_gate() {
        let (h1, h2) = sep3();
        check_tonelli(&h1, 2.0).unwrap();
        check_tonelli(&h2, 2.0).unwrap();
        check_tonelli(&HamiltonianSpec::pendulum(), 4.0).unwrap();
        let quartic = HamiltonianSpec::polynomial(vec![vec![0.0, 0.0, 0.0, 0.0, 0.25]]).unwrap();
        // p^3 vanishes to second order at the origin; strict convexity fails there.
        assert!(check_tonelli(&quartic, 2.0).is_err());
        let cubic = HamiltonianSpec::polynomial(vec![vec![0.0, 0.0, 0.5, 1.0]]).unwrap();
        assert!(check_tonelli(&cubic, 1.0).is_err());
    }

    #[test]
    fn position_gradient_matches_finite_difference() {
        let (a, _) = nc();
        let q = [0.137, 0.61];
        let p = [0.4, -0.2];
        let g = a.grad_q(&q, &p);
        let eps = 1e-6;
        let fd = (a.value(&[q[0] + eps, q[1]], &p) - a.value(&[q[0] - eps, q[1]], &p)) / (2.0 * eps);
        assert!((g[0] - fd).abs() < 1e-7);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn spec_serde_round_trip() {
        let (_, h2) = sep3();
        let json = serde_json::to_string(&h2).unwrap();
        let back: HamiltonianSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, h2);
    }
}
