use super::{Family, HamiltonianSpec};
use crate::error::{Error, Result};

const NEWTON_MAX_ITERS: usize = 60;
const SCAN_POINTS: usize = 201;

/// `L(q, v) = sup_p (p·v − H(q, p))` together with the maximizing momentum.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianValue {
    pub value: f64,
    pub argmax_p: Vec<f64>,
}

pub fn eval_lagrangian(spec: &HamiltonianSpec, q: &[f64], v: &[f64]) -> Result<LagrangianValue> {
    if q.len() != spec.dim || v.len() != spec.dim {
        return Err(Error::input(format!(
            "dimension mismatch: spec dim {}, q has {}, v has {}",
            spec.dim,
            q.len(),
            v.len()
        )));
    }
    let (value, p) = lagrangian_raw(spec, q, v)?;
    Ok(LagrangianValue { value, argmax_p: p[..spec.dim].to_vec() })
}

pub(crate) fn lagrangian_raw(spec: &HamiltonianSpec, q: &[f64], v: &[f64]) -> Result<(f64, [f64; 2])> {
    match &spec.family {
        Family::Mechanical { .. } => {
            let mut p = [0.0; 2];
            p[..spec.dim].copy_from_slice(v);
            let kinetic: f64 = 0.5 * v.iter().map(|x| x * x).sum::<f64>();
            let zero = [0.0; 2];
            Ok((kinetic - spec.value(q, &zero[..spec.dim]), p))
        }
        Family::Polynomial { coeffs } if spec.quadratic_kinetic() => {
            let mut p = [0.0; 2];
            let mut value = 0.0;
            for (i, c) in coeffs.iter().enumerate() {
                let (a0, a1, a2) = (c[0], c.get(1).copied().unwrap_or(0.0), c[2]);
                p[i] = (v[i] - a1) / (2.0 * a2);
                value += (v[i] - a1) * (v[i] - a1) / (4.0 * a2) - a0;
            }
            Ok((value, p))
        }
        Family::Separable { terms } => {
            let mut p = [0.0; 2];
            let mut value = 0.0;
            for (i, t) in terms.iter().enumerate() {
                let (li, pi) = lagrangian_raw(t, &q[i..=i], &v[i..=i])?;
                value += li;
                p[i] = pi[0];
            }
            Ok((value, p))
        }
        _ => newton(spec, q, v),
    }
}

fn objective(spec: &HamiltonianSpec, q: &[f64], v: &[f64], p: &[f64]) -> f64 {
    p.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() - spec.value(q, p)
}

fn residual_norm(spec: &HamiltonianSpec, q: &[f64], v: &[f64], p: &[f64]) -> f64 {
    let g = spec.grad_p(q, p);
    (0..spec.dim).map(|i| (v[i] - g[i]).abs()).fold(0.0, f64::max)
}

/// Safeguarded Newton ascent on the concave objective `p·v − H(q,p)`,
/// restarted from the best point of a dense momentum scan if it stalls.
fn newton(spec: &HamiltonianSpec, q: &[f64], v: &[f64]) -> Result<(f64, [f64; 2])> {
    let tol = 1e-13 * (1.0 + v.iter().fold(0.0_f64, |m, x| m.max(x.abs())));
    let mut start = [0.0; 2];
    start[..spec.dim].copy_from_slice(v);
    if let Some(p) = newton_from(spec, q, v, start, tol) {
        return Ok((objective(spec, q, v, &p[..spec.dim]), p));
    }
    let scanned = dense_scan(spec, q, v);
    if let Some(p) = newton_from(spec, q, v, scanned, tol) {
        return Ok((objective(spec, q, v, &p[..spec.dim]), p));
    }
    Err(Error::numeric(format!(
        "Legendre transform did not converge at q={q:?}, v={v:?}; best scan momentum {:?}, residual {:e}",
        &scanned[..spec.dim],
        residual_norm(spec, q, v, &scanned[..spec.dim])
    )))
}

fn newton_from(spec: &HamiltonianSpec, q: &[f64], v: &[f64], mut p: [f64; 2], tol: f64) -> Option<[f64; 2]> {
    let d = spec.dim;
    for _ in 0..NEWTON_MAX_ITERS {
        let g = spec.grad_p(q, &p[..d]);
        let r = [v[0] - g[0], if d == 2 { v[1] - g[1] } else { 0.0 }];
        if r[0].abs().max(r[1].abs()) <= tol {
            return Some(p);
        }
        let h = spec.hess_p(q, &p[..d]);
        let step = solve(h, r, d)?;
        let phi0 = objective(spec, q, v, &p[..d]);
        let mut t = 1.0;
        loop {
            let trial = [p[0] + t * step[0], p[1] + t * step[1]];
            if objective(spec, q, v, &trial[..d]) >= phi0 - 1e-15 * phi0.abs().max(1.0) {
                p = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return None;
            }
        }
    }
    (residual_norm(spec, q, v, &p[..d]) <= tol * 1e3).then_some(p)
}

fn solve(h: [[f64; 2]; 2], r: [f64; 2], dim: usize) -> Option<[f64; 2]> {
    if dim == 1 {
        return (h[0][0] > 0.0).then(|| [r[0] / h[0][0], 0.0]);
    }
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if !(h[0][0] > 0.0 && det > 0.0) {
        return None;
    }
    Some([(h[1][1] * r[0] - h[0][1] * r[1]) / det, (h[0][0] * r[1] - h[1][0] * r[0]) / det])
}

/// Grid maximization over `[-R, R]^d`, doubling `R` until the maximizer is interior.
fn dense_scan(spec: &HamiltonianSpec, q: &[f64], v: &[f64]) -> [f64; 2] {
    let d = spec.dim;
    let mut radius = 1.0 + v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut best = [0.0; 2];
    for _ in 0..24 {
        let step = 2.0 * radius / (SCAN_POINTS - 1) as f64;
        let mut best_val = f64::NEG_INFINITY;
        let mut best_idx = [0usize; 2];
        let n1 = if d == 2 { SCAN_POINTS } else { 1 };
        for i in 0..SCAN_POINTS {
            for j in 0..n1 {
                let p = [-radius + step * i as f64, if d == 2 { -radius + step * j as f64 } else { 0.0 }];
                let val = objective(spec, q, v, &p[..d]);
                if val > best_val {
                    best_val = val;
                    best = p;
                    best_idx = [i, j];
                }
            }
        }
        let on_edge = |i: usize| i == 0 || i == SCAN_POINTS - 1;
        if !(on_edge(best_idx[0]) || (d == 2 && on_edge(best_idx[1]))) {
            break;
        }
        radius *= 2.0;
    }
    best
}
