//! Two-resolution checks of identities that hold exactly for commuting
//! Hamiltonians in the continuum. On a grid each identity leaves a defect;
//! a check passes when the defect shrinks under one refinement doubling.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{Solved, SystemCache};
use crate::error::{Error, Result};
use crate::hamiltonian::{combine, CosineTerm, HamiltonianSpec};
use crate::torus::{ExactPart, OneForm, RandomField, TorusGrid};
use crate::weak_kam::{common_subsolution, BarrierParams};

/// Grid family: `τ(N) = tau_ref · (n_ref / N)^tau_exponent`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridTemplate {
    pub dim: usize,
    pub n_ref: usize,
    pub tau_ref: f64,
    pub tau_exponent: f64,
    pub v_max: f64,
}

impl GridTemplate {
    pub fn tau_at(&self, n: usize) -> f64 {
        self.tau_ref * (self.n_ref as f64 / n as f64).powf(self.tau_exponent)
    }

    pub fn grid_at(&self, n: usize) -> Result<TorusGrid> {
        TorusGrid::new(self.dim, n, self.tau_at(n), self.v_max)
    }
}

/// Physical times; step counts are `max(1, round(time / τ))` per grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckTimes {
    pub commutation_s: f64,
    pub commutation_r: f64,
    pub sum_t: f64,
    pub residual_t: f64,
    /// Step counts (not times) for the common subsolution smoothing.
    pub subsolution_s_steps: usize,
    pub subsolution_r_steps: usize,
}

impl Default for CheckTimes {
    fn default() -> Self {
        Self {
            commutation_s: 0.5,
            commutation_r: 0.5,
            sum_t: 0.5,
            residual_t: 0.5,
            subsolution_s_steps: 2,
            subsolution_r_steps: 2,
        }
    }
}

pub fn steps_for(time: f64, tau: f64) -> usize {
    ((time / tau).round() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateSettings {
    /// Largest allowed fine/coarse ratio per metric.
    pub shrink_ratio: f64,
    /// Largest allowed metric at the fine resolution.
    pub fine_max: f64,
    /// Metrics at or below this are treated as exactly zero.
    pub zero_floor: f64,
    /// Set checks pass when the fine Hausdorff distance is at most this many spacings.
    pub hausdorff_spacings: f64,
    /// Absolute tolerance of the gauge check, at every resolution.
    pub gauge_tol: f64,
}

impl Default for GateSettings {
    fn default() -> Self {
        Self { shrink_ratio: 0.7, fine_max: 1.0, zero_floor: 1e-9, hausdorff_spacings: 2.0, gauge_tol: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub grid: GridTemplate,
    pub resolutions: Vec<usize>,
    pub barrier: BarrierParams,
    /// `tol_zero = factor · spacing² / τ`.
    pub tol_zero_factor: f64,
    pub times: CheckTimes,
    pub u0: RandomField,
    pub gates: GateSettings,
    /// Classes `c` used by the quasi-linearity check.
    pub alpha_forms: Vec<Vec<f64>>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            // τ ∝ N^(-2/3) shrinks an O(τ) error and an O((spacing/τ)²) error at the same rate
            grid: GridTemplate { dim: 2, n_ref: 16, tau_ref: 0.2, tau_exponent: 2.0 / 3.0, v_max: 4.0 },
            resolutions: vec![16, 32],
            barrier: BarrierParams { n_max: 1 << 10, window: 4 },
            tol_zero_factor: 10.0,
            times: CheckTimes::default(),
            u0: RandomField { seed: 7, amplitude: 0.2, max_mode: 2 },
            gates: GateSettings::default(),
            alpha_forms: vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![1.0, 0.0]],
        }
    }
}

impl VerifySettings {
    pub fn validate(&self) -> Result<()> {
        if self.resolutions.len() != 2 || self.resolutions[0] >= self.resolutions[1] {
            return Err(Error::config(format!(
                "resolutions must be two increasing sizes, got {:?}",
                self.resolutions
            )));
        }
        for &n in &self.resolutions {
            self.grid.grid_at(n)?;
        }
        if self.barrier.window >= self.barrier.n_max {
            return Err(Error::config("barrier.window must be smaller than barrier.n_max"));
        }
        if !(self.tol_zero_factor > 0.0) {
            return Err(Error::config("tol_zero_factor must be positive"));
        }
        if self.alpha_forms.iter().any(|c| c.len() != self.grid.dim) {
            return Err(Error::config(format!("alpha_forms entries must have {} components", self.grid.dim)));
        }
        Ok(())
    }

    pub fn tol_zero(&self, grid: &TorusGrid) -> f64 {
        self.tol_zero_factor * grid.spacing() * grid.spacing() / grid.tau()
    }
}

/// Two Hamiltonians on the same torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pair {
    pub name: String,
    pub first: HamiltonianSpec,
    pub second: HamiltonianSpec,
}

impl Pair {
    pub fn new(name: &str, first: HamiltonianSpec, second: HamiltonianSpec) -> Result<Self> {
        if first.dim != second.dim {
            return Err(Error::input(format!("pair {name}: dims {} and {} differ", first.dim, second.dim)));
        }
        Ok(Self { name: name.to_string(), first, second })
    }

    pub fn dim(&self) -> usize {
        self.first.dim
    }
}

pub mod fixtures {
    use super::*;

    fn cosine(axis: usize, amplitude: f64, wavenumber: u32) -> CosineTerm {
        CosineTerm { axis, amplitude, wavenumber }
    }

    /// `f = ½p₁² + cos 2πq₁`, `g = ½p₂²`; `H₁ = f + g`, `H₂ = 2f + g`.
    pub fn sep3() -> Pair {
        let f = HamiltonianSpec::mechanical(1, vec![cosine(0, 1.0, 1)]).expect("valid");
        let g = HamiltonianSpec::free(1).expect("valid");
        let two_f = combine(std::slice::from_ref(&f), &[2.0]).expect("valid");
        let h1 = HamiltonianSpec::separable(vec![f, g.clone()]).expect("valid");
        let h2 = HamiltonianSpec::separable(vec![two_f, g]).expect("valid");
        Pair::new("sep3", h1, h2).expect("same dim")
    }

    /// `½|p|² + cos 2πq₁` against `½|p|² + cos 2πq₂`.
    pub fn nc() -> Pair {
        let h1 = HamiltonianSpec::mechanical(2, vec![cosine(0, 1.0, 1)]).expect("valid");
        let h2 = HamiltonianSpec::mechanical(2, vec![cosine(1, 1.0, 1)]).expect("valid");
        Pair::new("nc", h1, h2).expect("same dim")
    }

    pub fn free_pair(dim: usize) -> Pair {
        let h = HamiltonianSpec::free(dim).expect("valid");
        Pair::new("free", h.clone(), h).expect("same dim")
    }

    /// `H = ½p² + cos 4πq` and its commuting companion `2H`.
    pub fn double_well() -> Pair {
        let h = HamiltonianSpec::mechanical(1, vec![cosine(0, 1.0, 2)]).expect("valid");
        let twice = combine(std::slice::from_ref(&h), &[2.0]).expect("valid");
        Pair::new("double_well", h, twice).expect("same dim")
    }

    pub fn by_name(name: &str) -> Option<Pair> {
        match name {
            "sep3" => Some(sep3()),
            "nc" => Some(nc()),
            "free" => Some(free_pair(2)),
            "free1" => Some(free_pair(1)),
            "double_well" => Some(double_well()),
            _ => None,
        }
    }

    pub const NAMES: [&str; 5] = ["sep3", "nc", "free", "free1", "double_well"];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    SemigroupCommutation,
    SumSemigroup,
    SharedWeakKam,
    BarrierEquality,
    SetEquality,
    AlphaQuasilinearity,
    CommonSubsolution,
    QuotientIsometry,
    GaugeInvariance,
}

impl Check {
    /// The pair checks, in report order.
    pub const PAIR_CHECKS: [Check; 8] = [
        Check::SemigroupCommutation,
        Check::SumSemigroup,
        Check::SharedWeakKam,
        Check::BarrierEquality,
        Check::SetEquality,
        Check::AlphaQuasilinearity,
        Check::CommonSubsolution,
        Check::QuotientIsometry,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Check::SemigroupCommutation => "semigroup_commutation",
            Check::SumSemigroup => "sum_semigroup",
            Check::SharedWeakKam => "shared_weak_kam",
            Check::BarrierEquality => "barrier_equality",
            Check::SetEquality => "set_equality",
            Check::AlphaQuasilinearity => "alpha_quasilinearity",
            Check::CommonSubsolution => "common_subsolution",
            Check::QuotientIsometry => "quotient_isometry",
            Check::GaugeInvariance => "gauge_invariance",
        }
    }

    pub fn parse(s: &str) -> Option<Check> {
        Self::PAIR_CHECKS.iter().copied().chain([Check::GaugeInvariance]).find(|c| c.id() == s)
    }
}

/// How a report's metrics turn into pass/fail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gate {
    /// Every metric is at the floor at the fine level, or shrinks by at least
    /// `max_ratio` and stays below `fine_max`.
    Shrink { max_ratio: f64, fine_max: f64, floor: f64 },
    /// Every metric at the fine level is at most `bound`.
    FineBound { bound: f64 },
    /// Every metric at every level is at most `tol`.
    Absolute { tol: f64 },
}

impl Gate {
    /// Pure pass logic. Returns the worst fine/coarse ratio over metrics
    /// above the floor (`None` if there are none) and the verdict.
    pub fn evaluate(&self, metrics: &BTreeMap<String, Vec<f64>>) -> (Option<f64>, bool) {
        let ratio = worst_ratio(metrics, self.floor());
        let pass = match *self {
            Gate::Shrink { max_ratio, fine_max, floor } => metrics.values().all(|m| {
                let fine = *m.last().unwrap_or(&0.0);
                let coarse = m.first().copied().unwrap_or(0.0);
                fine <= floor || (fine <= fine_max && coarse > floor && fine / coarse <= max_ratio)
            }),
            Gate::FineBound { bound } => metrics.values().all(|m| *m.last().unwrap_or(&0.0) <= bound),
            Gate::Absolute { tol } => metrics.values().flatten().all(|v| *v <= tol),
        };
        (ratio, pass)
    }

    fn floor(&self) -> f64 {
        match *self {
            Gate::Shrink { floor, .. } => floor,
            Gate::Absolute { tol } => tol,
            Gate::FineBound { .. } => 0.0,
        }
    }
}

fn worst_ratio(metrics: &BTreeMap<String, Vec<f64>>, floor: f64) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for m in metrics.values() {
        let (coarse, fine) = (m.first().copied().unwrap_or(0.0), m.last().copied().unwrap_or(0.0));
        if fine <= floor && coarse <= floor {
            continue;
        }
        let r = if coarse > 0.0 { fine / coarse } else { f64::INFINITY };
        worst = Some(worst.map_or(r, |w: f64| w.max(r)));
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportError {
    /// `input`, `config`, `numeric`, `internal`, `format` or `io`.
    pub kind: String,
    pub message: String,
}

impl ReportError {
    fn from_error(e: &Error) -> Self {
        let kind = match e {
            Error::Input(_) => "input",
            Error::Config(_) => "config",
            Error::Numeric(_) => "numeric",
            Error::Internal(_) => "internal",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        };
        Self { kind: kind.to_string(), message: e.to_string() }
    }
}

/// Per-check outcome. Metrics hold one value per resolution, coarse first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub fixture: String,
    pub resolutions: Vec<usize>,
    pub metrics: BTreeMap<String, Vec<f64>>,
    /// Worst fine/coarse ratio among metrics above the zero floor.
    pub ratio: Option<f64>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<u64>,
    pub gate: Gate,
    /// Reported but never gated.
    #[serde(default)]
    pub diagnostics: BTreeMap<String, Vec<f64>>,
    /// Names of hard requirements that failed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hard_failures: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ReportError>,
}

impl VerificationReport {
    pub fn metric(&self, name: &str) -> Option<&[f64]> {
        self.metrics.get(name).map(|v| v.as_slice())
    }

    pub fn is_numeric_error(&self) -> bool {
        self.error.as_ref().is_some_and(|e| e.kind == "numeric")
    }
}

#[derive(Default)]
struct Collected {
    metrics: BTreeMap<String, Vec<f64>>,
    diagnostics: BTreeMap<String, Vec<f64>>,
    hard_failures: Vec<String>,
}

impl Collected {
    fn metric(&mut self, name: &str, v: f64) {
        self.metrics.entry(name.to_string()).or_default().push(v);
    }

    fn diag(&mut self, name: &str, v: f64) {
        self.diagnostics.entry(name.to_string()).or_default().push(v);
    }
}

/// Runs checks against a shared system cache.
pub struct Verifier {
    settings: VerifySettings,
    cache: Arc<SystemCache>,
    record_runtime: bool,
}

impl Verifier {
    pub fn new(settings: VerifySettings) -> Result<Self> {
        Self::with_cache(settings, Arc::new(SystemCache::new()))
    }

    pub fn with_cache(settings: VerifySettings, cache: Arc<SystemCache>) -> Result<Self> {
        settings.validate()?;
        Ok(Self { settings, cache, record_runtime: false })
    }

    /// Wall-clock times make reports non-reproducible, so they are opt-in.
    pub fn record_runtime(mut self, on: bool) -> Self {
        self.record_runtime = on;
        self
    }

    pub fn settings(&self) -> &VerifySettings {
        &self.settings
    }

    pub fn cache(&self) -> &SystemCache {
        &self.cache
    }

    fn shrink_gate(&self) -> Gate {
        let g = &self.settings.gates;
        Gate::Shrink { max_ratio: g.shrink_ratio, fine_max: g.fine_max, floor: g.zero_floor }
    }

    fn gate_for(&self, check: Check) -> Gate {
        let g = &self.settings.gates;
        match check {
            Check::SetEquality => {
                let fine = self.settings.grid.grid_at(self.settings.resolutions[1]).map(|g| g.spacing()).unwrap_or(0.0);
                Gate::FineBound { bound: g.hausdorff_spacings * fine }
            }
            Check::GaugeInvariance => Gate::Absolute { tol: g.gauge_tol },
            _ => self.shrink_gate(),
        }
    }

    /// Runs the given checks concurrently; reports come back in input order.
    pub fn run_suite(&self, pair: &Pair, form_c: &[f64], checks: &[Check]) -> Vec<VerificationReport> {
        checks.par_iter().map(|&c| self.run(c, pair, form_c)).collect()
    }

    /// One pair check. Errors are folded into a failing report.
    pub fn run(&self, check: Check, pair: &Pair, form_c: &[f64]) -> VerificationReport {
        let start = Instant::now();
        let gate = self.gate_for(check);
        let outcome = self.prepare(pair, form_c).and_then(|_| match check {
            Check::SemigroupCommutation => self.semigroup_commutation(pair, form_c),
            Check::SumSemigroup => self.sum_semigroup(pair, form_c),
            Check::SharedWeakKam => self.shared_weak_kam(pair, form_c),
            Check::BarrierEquality => self.barrier_equality(pair, form_c),
            Check::SetEquality => self.set_equality(pair, form_c),
            Check::AlphaQuasilinearity => self.alpha_quasilinearity(pair),
            Check::CommonSubsolution => self.common_subsolution(pair, form_c),
            Check::QuotientIsometry => self.quotient_isometry(pair, form_c),
            Check::GaugeInvariance => Err(Error::input("gauge_invariance takes a single Hamiltonian; use verify_gauge_invariance")),
        });
        self.finish(check.id(), &pair.name, gate, outcome, start)
    }

    fn finish(&self, check: &str, fixture: &str, gate: Gate, outcome: Result<Collected>, start: Instant) -> VerificationReport {
        let runtime_ms = self.record_runtime.then(|| start.elapsed().as_millis() as u64);
        match outcome {
            Ok(c) => {
                let (ratio, gate_pass) = gate.evaluate(&c.metrics);
                VerificationReport {
                    check: check.to_string(),
                    fixture: fixture.to_string(),
                    resolutions: self.settings.resolutions.clone(),
                    pass: gate_pass && c.hard_failures.is_empty(),
                    metrics: c.metrics,
                    ratio,
                    runtime_ms,
                    gate,
                    diagnostics: c.diagnostics,
                    hard_failures: c.hard_failures,
                    error: None,
                }
            }
            Err(e) => VerificationReport {
                check: check.to_string(),
                fixture: fixture.to_string(),
                resolutions: self.settings.resolutions.clone(),
                metrics: BTreeMap::new(),
                ratio: None,
                pass: false,
                runtime_ms,
                gate,
                diagnostics: BTreeMap::new(),
                hard_failures: Vec::new(),
                error: Some(ReportError::from_error(&e)),
            },
        }
    }

    fn prepare(&self, pair: &Pair, form_c: &[f64]) -> Result<()> {
        if pair.dim() != self.settings.grid.dim {
            return Err(Error::config(format!(
                "pair {} has dim {}, grid template has dim {}",
                pair.name,
                pair.dim(),
                self.settings.grid.dim
            )));
        }
        if form_c.len() != pair.dim() {
            return Err(Error::config(format!("form has {} components, pair dim is {}", form_c.len(), pair.dim())));
        }
        Ok(())
    }

    fn grids(&self) -> Result<Vec<TorusGrid>> {
        self.settings.resolutions.iter().map(|&n| self.settings.grid.grid_at(n)).collect()
    }

    fn solved(&self, grid: &TorusGrid, spec: &HamiltonianSpec, form: &OneForm) -> Result<Arc<Solved>> {
        self.cache.system(grid, spec, form)
    }

    fn both(&self, grid: &TorusGrid, pair: &Pair, form: &OneForm) -> Result<(Arc<Solved>, Arc<Solved>)> {
        Ok((self.solved(grid, &pair.first, form)?, self.solved(grid, &pair.second, form)?))
    }

    fn semigroup_commutation(&self, pair: &Pair, c: &[f64]) -> Result<Collected> {
        let mut out = Collected::default();
        let form = OneForm::constant(c.to_vec());
        let t = &self.settings.times;
        for grid in self.grids()? {
            let (a, b) = self.both(&grid, pair, &form)?;
            let (a, b) = (&a.system, &b.system);
            let u0 = self.settings.u0.sample(&grid);
            let s = steps_for(t.commutation_s, grid.tau());
            let r = steps_for(t.commutation_r, grid.tau());
            let ab = a.backward_semigroup(&b.backward_semigroup(&u0, r)?, s)?;
            let ba = b.backward_semigroup(&a.backward_semigroup(&u0, s)?, r)?;
            out.metric("backward", ab.sup_distance(&ba));
            let ab = a.forward_semigroup(&b.forward_semigroup(&u0, r)?, s)?;
            let ba = b.forward_semigroup(&a.forward_semigroup(&u0, s)?, r)?;
            out.metric("forward", ab.sup_distance(&ba));
            out.diag("s_steps", s as f64);
            out.diag("r_steps", r as f64);
        }
        Ok(out)
    }

    fn sum_semigroup(&self, pair: &Pair, c: &[f64]) -> Result<Collected> {
        let mut out = Collected::default();
        let form = OneForm::constant(c.to_vec());
        let sum = combine(&[pair.first.clone(), pair.second.clone()], &[1.0, 1.0])?;
        for grid in self.grids()? {
            let (a, b) = self.both(&grid, pair, &form)?;
            let total = self.solved(&grid, &sum, &form)?;
            let u0 = self.settings.u0.sample(&grid);
            let k = steps_for(self.settings.times.sum_t, grid.tau());
            let split = a.system.backward_semigroup(&b.system.backward_semigroup(&u0, k)?, k)?;
            let joint = total.system.backward_semigroup(&u0, k)?;
            out.metric("backward", split.sup_distance(&joint));
            let split = a.system.forward_semigroup(&b.system.forward_semigroup(&u0, k)?, k)?;
            let joint = total.system.forward_semigroup(&u0, k)?;
            out.metric("forward", split.sup_distance(&joint));
            out.diag("t_steps", k as f64);
        }
        Ok(out)
    }

    fn shared_weak_kam(&self, pair: &Pair, c: &[f64]) -> Result<Collected> {
        let mut out = Collected::default();
        let form = OneForm::constant(c.to_vec());
        let params = self.settings.barrier;
        for grid in self.grids()? {
            let (a, b) = self.both(&grid, pair, &form)?;
            let h = a.barrier(&params, self.cache.store())?;
            let data = a.aubry(&params, self.settings.tol_zero(&grid), self.cache.store())?;
            let k = steps_for(self.settings.times.residual_t, grid.tau());
            let (mut back, mut fwd, mut own) = (0.0_f64, 0.0_f64, 0.0_f64);
            for xi in data.quotient.representatives() {
                let (um, up) = crate::weak_kam::elementary_solutions(&h, xi, &data.aubry)?;
                back = back.max(b.system.backward_semigroup(&um, k)?.sup_distance(&um));
                fwd = fwd.max(b.system.forward_semigroup(&up, k)?.sup_distance(&up));
                own = own.max(a.system.backward_semigroup(&um, k)?.sup_distance(&um));
            }
            out.metric("backward", back);
            out.metric("forward", fwd);
            out.diag("first_fixed_point_residual", own);
            out.diag("steps", k as f64);
        }
        Ok(out)
    }

    fn barrier_equality(&self, pair: &Pair, c: &[f64]) -> Result<Collected> {
        let mut out = Collected::default();
        let form = OneForm::constant(c.to_vec());
        let params = self.settings.barrier;
        for grid in self.grids()? {
            let tol = self.settings.tol_zero(&grid);
            let (a, b) = self.both(&grid, pair, &form)?;
            let da = a.aubry(&params, tol, self.cache.store())?;
            let db = b.aubry(&params, tol, self.cache.store())?;
            out.metric("first_barrier", da.first_barrier.sup_distance(&db.first_barrier));
            out.metric("second_barrier", da.second_barrier.sup_distance(&db.second_barrier));
        }
        Ok(out)
    }

    fn set_equality(&self, pair: &Pair, c: &[f64]) -> Result<Collected> {
        let mut out = Collected::default();
        let form = OneForm::constant(c.to_vec());
        let params = self.settings.barrier;
        for grid in self.grids()? {
            let tol = self.settings.tol_zero(&grid);
            let (a, b) = self.both(&grid, pair, &form)?;
            let da = a.aubry(&params, tol, self.cache.store())?;
            let db = b.aubry(&params, tol, self.cache.store())?;
            out.metric("aubry_hausdorff", hausdorff(&grid, &da.aubry, &db.aubry));
            out.metric("mane_hausdorff", hausdorff(&grid, &da.mane, &db.mane));
            out.diag("aubry_sizes", da.aubry.len() as f64);
            out.diag("aubry_sizes", db.aubry.len() as f64);
            out.diag("spacing", grid.spacing());
        }
        Ok(out)
    }

    fn alpha_quasilinearity(&self, pair: &Pair) -> Result<Collected> {
        let mut out = Collected::default();
        let sum = combine(&[pair.first.clone(), pair.second.clone()], &[1.0, 1.0])?;
        for grid in self.grids()? {
            let mut worst = 0.0_f64;
            for c in &self.settings.alpha_forms {
                let form = OneForm::constant(c.clone());
                let (a, b) = self.both(&grid, pair, &form)?;
                let total = self.solved(&grid, &sum, &form)?;
                let defect = (total.system.alpha() - a.system.alpha() - b.system.alpha()).abs();
                worst = worst.max(defect);
                out.diag("alpha_first", a.system.alpha());
                out.diag("alpha_second", b.system.alpha());
                out.diag("alpha_sum", total.system.alpha());
            }
            out.metric("alpha_defect", worst);
        }
        Ok(out)
    }

    fn common_subsolution(&self, pair: &Pair, c: &[f64]) -> Result<Collected> {
        let mut out = Collected::default();
        let form = OneForm::constant(c.to_vec());
        let params = self.settings.barrier;
        let t = &self.settings.times;
        for grid in self.grids()? {
            let (a, b) = self.both(&grid, pair, &form)?;
            let h = a.barrier(&params, self.cache.store())?;
            let data = a.aubry(&params, self.settings.tol_zero(&grid), self.cache.store())?;
            let seed = data.quotient.representatives()[0];
            let cs = common_subsolution(
                &a.system,
                &b.system,
                &h,
                &data.aubry,
                t.subsolution_s_steps,
                t.subsolution_r_steps,
                seed,
                0.0,
            )?;
            out.metric("violation_first", cs.first.max_violation.max(0.0));
            out.metric("violation_second", cs.second.max_violation.max(0.0));
            out.diag("second_difference", cs.second_difference);
        }
        Ok(out)
    }

    fn quotient_isometry(&self, pair: &Pair, c: &[f64]) -> Result<Collected> {
        let mut out = Collected::default();
        let form = OneForm::constant(c.to_vec());
        let params = self.settings.barrier;
        for grid in self.grids()? {
            let tol = self.settings.tol_zero(&grid);
            let (a, b) = self.both(&grid, pair, &form)?;
            let qa = &a.aubry(&params, tol, self.cache.store())?.quotient;
            let qb = &b.aubry(&params, tol, self.cache.store())?.quotient;
            let (ka, kb) = (qa.classes.len(), qb.classes.len());
            out.metric("class_count_difference", ka.abs_diff(kb) as f64);
            out.diag("classes_first", ka as f64);
            out.diag("classes_second", kb as f64);
            if ka != kb {
                out.hard_failures.push(format!("class counts differ at n = {}: {ka} vs {kb}", grid.n_per_axis()));
            }
            let ra = qa.representatives();
            let rb = qb.representatives();
            // the smaller side is matched into the larger one
            let (small, large, sq, lq) = if ka <= kb { (&ra, &rb, qa, qb) } else { (&rb, &ra, qb, qa) };
            let matching = greedy_matching(&grid, small, large);
            let mut worst = 0.0_f64;
            for i in 0..small.len() {
                for j in 0..small.len() {
                    let d = (sq.class_distance(i, j) - lq.class_distance(matching[i], matching[j])).abs();
                    worst = worst.max(d);
                }
            }
            out.metric("matched_distance", worst);
        }
        Ok(out)
    }

    /// `α`, `B` and `b` with form `(c, 0)` against `(c, f)`.
    pub fn gauge_invariance(&self, fixture: &str, spec: &HamiltonianSpec, c: &[f64], exact: &ExactPart) -> VerificationReport {
        let start = Instant::now();
        let gate = Gate::Absolute { tol: self.settings.gates.gauge_tol };
        let outcome = (|| -> Result<Collected> {
            if spec.dim != self.settings.grid.dim || c.len() != spec.dim {
                return Err(Error::config("gauge check: spec, form and grid dims must agree"));
            }
            let mut out = Collected::default();
            let params = self.settings.barrier;
            for grid in self.grids()? {
                let tol = self.settings.tol_zero(&grid);
                let plain = OneForm::constant(c.to_vec());
                let shifted = OneForm::with_exact_part(c.to_vec(), exact.sample(&grid));
                let a = self.solved(&grid, spec, &plain)?;
                let b = self.solved(&grid, spec, &shifted)?;
                let da = a.aubry(&params, tol, self.cache.store())?;
                let db = b.aubry(&params, tol, self.cache.store())?;
                out.metric("alpha", (a.system.alpha() - b.system.alpha()).abs());
                out.metric("first_barrier", da.first_barrier.sup_distance(&db.first_barrier));
                out.metric("second_barrier", da.second_barrier.sup_distance(&db.second_barrier));
                let sets_agree = da.aubry == db.aubry && da.mane == db.mane;
                out.diag("sets_agree", if sets_agree { 1.0 } else { 0.0 });
            }
            Ok(out)
        })();
        self.finish(Check::GaugeInvariance.id(), fixture, gate, outcome, start)
    }
}

/// Hausdorff distance between two state sets under the torus metric.
pub fn hausdorff(grid: &TorusGrid, a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let one_sided = |from: &[usize], to: &[usize]| {
        from.iter()
            .map(|&x| to.iter().map(|&y| grid.distance(x, y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

/// Pairs each representative of `a` with the nearest unused one of `b`.
/// Needs `a.len() <= b.len()`.
fn greedy_matching(grid: &TorusGrid, a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut used = vec![false; b.len()];
    a.iter()
        .map(|&x| {
            let j = (0..b.len())
                .filter(|&j| !used[j])
                .min_by(|&i, &j| grid.distance(x, b[i]).total_cmp(&grid.distance(x, b[j])))
                .expect("b has at least as many classes");
            used[j] = true;
            j
        })
        .collect()
}

/// Convenience for one-off gauge checks on the default cache.
pub fn verify_gauge_invariance(
    settings: &VerifySettings,
    spec: &HamiltonianSpec,
    c: &[f64],
    exact: &ExactPart,
) -> Result<VerificationReport> {
    Ok(Verifier::new(settings.clone())?.gauge_invariance("custom", spec, c, exact))
}

pub fn verify_semigroup_commutation(v: &Verifier, pair: &Pair, c: &[f64]) -> VerificationReport {
    v.run(Check::SemigroupCommutation, pair, c)
}

pub fn verify_sum_semigroup(v: &Verifier, pair: &Pair, c: &[f64]) -> VerificationReport {
    v.run(Check::SumSemigroup, pair, c)
}

pub fn verify_shared_weak_kam(v: &Verifier, pair: &Pair, c: &[f64]) -> VerificationReport {
    v.run(Check::SharedWeakKam, pair, c)
}

pub fn verify_barrier_equality(v: &Verifier, pair: &Pair, c: &[f64]) -> VerificationReport {
    v.run(Check::BarrierEquality, pair, c)
}

pub fn verify_set_equality(v: &Verifier, pair: &Pair, c: &[f64]) -> VerificationReport {
    v.run(Check::SetEquality, pair, c)
}

/// Uses the settings' `alpha_forms` as the list of classes.
pub fn verify_alpha_quasilinearity(v: &Verifier, pair: &Pair) -> VerificationReport {
    let c = vec![0.0; pair.dim()];
    v.run(Check::AlphaQuasilinearity, pair, &c)
}

pub fn verify_common_subsolution(v: &Verifier, pair: &Pair, c: &[f64]) -> VerificationReport {
    v.run(Check::CommonSubsolution, pair, c)
}

pub fn verify_quotient_isometry(v: &Verifier, pair: &Pair, c: &[f64]) -> VerificationReport {
    v.run(Check::QuotientIsometry, pair, c)
}
