//! Run configuration: one TOML file with named sections.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use weak_kam::hamiltonian::{check_tonelli, CosineTerm};
use weak_kam::torus::{ExactPart, RandomField};
use weak_kam::verify::{fixtures, CheckTimes, GateSettings, GridTemplate, Pair, VerifySettings};
use weak_kam::weak_kam::{AlphaMethod, BarrierParams, PowerIterationOptions};
use weak_kam::{Error, HamiltonianSpec, OneForm, Result, TorusGrid};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub dim: usize,
    pub n: usize,
    pub tau: f64,
    pub v_max: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormBlock {
    /// Defaults to the zero class.
    pub c: Option<Vec<f64>>,
    pub exact_part: Option<ExactPart>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairBlock {
    pub first: String,
    pub second: String,
}

/// Either an explicit list of classes or a per-axis `start/stop/count` grid.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaBlock {
    pub hamiltonian: String,
    pub values: Option<Vec<Vec<f64>>>,
    pub start: Option<Vec<f64>>,
    pub stop: Option<Vec<f64>>,
    pub count: Option<Vec<usize>>,
    #[serde(default = "default_method")]
    pub method: AlphaMethod,
    #[serde(default)]
    pub power_iteration: PowerIterationOptions,
}

fn default_method() -> AlphaMethod {
    AlphaMethod::Karp
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierBlock {
    pub hamiltonian: String,
    #[serde(default)]
    pub params: BarrierParams,
    /// Absolute zero threshold; overrides `tol_zero_factor`.
    pub tol_zero: Option<f64>,
    #[serde(default = "default_tol_factor")]
    pub tol_zero_factor: f64,
}

fn default_tol_factor() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeBlock {
    pub hamiltonian: String,
    pub exact_part: ExactPart,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    pub pair: String,
    /// Check ids; all pair checks when absent.
    pub checks: Option<Vec<String>>,
    #[serde(default = "default_resolutions")]
    pub resolutions: Vec<usize>,
    #[serde(default = "default_tau_exponent")]
    pub tau_exponent: f64,
    pub barrier: Option<BarrierParams>,
    #[serde(default = "default_tol_factor")]
    pub tol_zero_factor: f64,
    #[serde(default)]
    pub times: CheckTimes,
    pub u0: Option<RandomField>,
    #[serde(default)]
    pub gates: GateSettings,
    pub alpha_forms: Option<Vec<Vec<f64>>>,
    pub gauge: Option<GaugeBlock>,
}

fn default_resolutions() -> Vec<usize> {
    VerifySettings::default().resolutions
}

fn default_tau_exponent() -> f64 {
    VerifySettings::default().grid.tau_exponent
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CachePolicy {
    #[serde(rename = "rw")]
    ReadWrite,
    #[serde(rename = "ro")]
    ReadOnly,
    #[serde(rename = "off")]
    Off,
}

impl std::str::FromStr for CachePolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rw" => Ok(CachePolicy::ReadWrite),
            "ro" => Ok(CachePolicy::ReadOnly),
            "off" => Ok(CachePolicy::Off),
            _ => Err(format!("cache policy must be rw, ro or off, got {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheBlock {
    #[serde(default = "default_policy")]
    pub policy: CachePolicy,
    #[serde(default = "default_cache_dir")]
    pub dir: PathBuf,
}

fn default_policy() -> CachePolicy {
    CachePolicy::ReadWrite
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from(".wkam-cache")
}

impl Default for CacheBlock {
    fn default() -> Self {
        Self { policy: default_policy(), dir: default_cache_dir() }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Wall-clock runtimes in reports; off keeps reports byte-reproducible.
    #[serde(default)]
    pub record_runtime: bool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: default_out_dir(), record_runtime: false }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: GridBlock,
    #[serde(default)]
    hamiltonians: BTreeMap<String, toml::Value>,
    #[serde(default)]
    pairs: BTreeMap<String, PairBlock>,
    #[serde(default)]
    form: FormBlock,
    alpha: Option<AlphaBlock>,
    barrier: Option<BarrierBlock>,
    verify: Option<VerifyBlock>,
    #[serde(default)]
    output: OutputBlock,
    #[serde(default)]
    cache: CacheBlock,
}

/// Parsed and validated configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: GridBlock,
    pub hamiltonians: BTreeMap<String, HamiltonianSpec>,
    pub pairs: BTreeMap<String, PairBlock>,
    pub form: FormBlock,
    pub alpha: Option<AlphaBlock>,
    pub barrier: Option<BarrierBlock>,
    pub verify: Option<VerifyBlock>,
    pub output: OutputBlock,
    pub cache: CacheBlock,
}

fn cfg(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

/// Re-labels any library error as a config error at `path`.
trait At<T> {
    fn at(self, path: &str) -> Result<T>;
}

impl<T> At<T> for Result<T> {
    fn at(self, path: &str) -> Result<T> {
        self.map_err(|e| cfg(path, e.detail()))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg(&path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut hamiltonians = BTreeMap::new();
        for (name, value) in raw.hamiltonians {
            let path = format!("hamiltonians.{name}");
            let spec: HamiltonianSpec = value.clone().try_into().map_err(|e: toml::de::Error| cfg(&path, e.message()))?;
            let echoed = toml::Value::try_from(&spec).map_err(|e| cfg(&path, e))?;
            reject_unknown(&value, &echoed, &path)?;
            hamiltonians.insert(name, spec);
        }
        let config = RunConfig {
            grid: raw.grid,
            hamiltonians,
            pairs: raw.pairs,
            form: raw.form,
            alpha: raw.alpha,
            barrier: raw.barrier,
            verify: raw.verify,
            output: raw.output,
            cache: raw.cache,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let g = &self.grid;
        TorusGrid::new(g.dim, g.n, g.tau, g.v_max).at("grid")?;
        for (name, spec) in &self.hamiltonians {
            let path = format!("hamiltonians.{name}");
            if spec.dim != g.dim {
                return Err(cfg(&path, format!("dim {} differs from grid dim {}", spec.dim, g.dim)));
            }
            check_tonelli(spec, g.v_max).at(&path)?;
        }
        for (name, p) in &self.pairs {
            for (slot, h) in [("first", &p.first), ("second", &p.second)] {
                self.hamiltonian(h).at(&format!("pairs.{name}.{slot}"))?;
            }
        }
        if let Some(c) = &self.form.c {
            if c.len() != g.dim {
                return Err(cfg("form.c", format!("needs {} components, got {}", g.dim, c.len())));
            }
        }
        if let Some(a) = &self.alpha {
            self.hamiltonian(&a.hamiltonian).at("alpha.hamiltonian")?;
            self.sweep(a)?;
            let p = &a.power_iteration;
            if !(p.tol.is_finite() && p.tol > 0.0) || p.max_iters == 0 || p.max_period == 0 {
                return Err(cfg("alpha.power_iteration", "tol must be positive and finite, max_iters and max_period at least 1"));
            }
        }
        if let Some(b) = &self.barrier {
            self.hamiltonian(&b.hamiltonian).at("barrier.hamiltonian")?;
            if b.params.window >= b.params.n_max {
                return Err(cfg("barrier.params", "window must be smaller than n_max"));
            }
            if !(b.tol_zero_factor > 0.0) || b.tol_zero.is_some_and(|t| !(t >= 0.0)) {
                return Err(cfg("barrier", "zero thresholds must be positive"));
            }
        }
        if let Some(v) = &self.verify {
            self.pair(&v.pair).at("verify.pair")?;
            if let Some(checks) = &v.checks {
                for c in checks {
                    if weak_kam::verify::Check::parse(c).is_none() {
                        return Err(cfg("verify.checks", format!("unknown check {c:?}")));
                    }
                }
            }
            if let Some(gauge) = &v.gauge {
                self.hamiltonian(&gauge.hamiltonian).at("verify.gauge.hamiltonian")?;
            }
            self.verify_settings(v, None).and_then(|s| s.validate()).at("verify")?;
        }
        Ok(())
    }

    pub fn form_class(&self) -> Vec<f64> {
        self.form.c.clone().unwrap_or_else(|| vec![0.0; self.grid.dim])
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.dim, self.grid.n, self.grid.tau, self.grid.v_max)
    }

    pub fn one_form(&self, grid: &TorusGrid) -> OneForm {
        match &self.form.exact_part {
            Some(f) => OneForm::with_exact_part(self.form_class(), f.sample(grid)),
            None => OneForm::constant(self.form_class()),
        }
    }

    /// Config names first, then built-ins (`free`, `pendulum`, `double_well`).
    pub fn hamiltonian(&self, name: &str) -> Result<HamiltonianSpec> {
        if let Some(s) = self.hamiltonians.get(name) {
            return Ok(s.clone());
        }
        let builtin = match name {
            "free" => HamiltonianSpec::free(self.grid.dim)?,
            "pendulum" => HamiltonianSpec::pendulum(),
            "double_well" => {
                HamiltonianSpec::mechanical(1, vec![CosineTerm { axis: 0, amplitude: 1.0, wavenumber: 2 }])?
            }
            _ => return Err(Error::Config(format!("unknown hamiltonian {name:?}"))),
        };
        if builtin.dim != self.grid.dim {
            return Err(Error::Config(format!("built-in {name:?} has dim {}, grid dim is {}", builtin.dim, self.grid.dim)));
        }
        Ok(builtin)
    }

    /// Config pairs first, then built-in fixtures.
    pub fn pair(&self, name: &str) -> Result<Pair> {
        if let Some(p) = self.pairs.get(name) {
            return Pair::new(name, self.hamiltonian(&p.first)?, self.hamiltonian(&p.second)?);
        }
        let pair = fixtures::by_name(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown pair {name:?} (built-ins: {})",
                fixtures::NAMES.join(", ")
            ))
        })?;
        if pair.dim() != self.grid.dim {
            return Err(Error::Config(format!("pair {name:?} has dim {}, grid dim is {}", pair.dim(), self.grid.dim)));
        }
        Ok(pair)
    }

    /// Classes of an alpha sweep, axis 0 outermost.
    pub fn sweep(&self, a: &AlphaBlock) -> Result<Vec<Vec<f64>>> {
        let dim = self.grid.dim;
        let values = match (&a.values, &a.start, &a.stop, &a.count) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(start), Some(stop), Some(count)) => {
                if start.len() != dim || stop.len() != dim || count.len() != dim {
                    return Err(cfg("alpha", format!("start, stop and count need {dim} components each")));
                }
                let axes: Vec<Vec<f64>> = (0..dim).map(|i| linspace(start[i], stop[i], count[i])).collect();
                let mut out = vec![vec![]];
                for axis in &axes {
                    out = out
                        .into_iter()
                        .flat_map(|prefix| {
                            axis.iter().map(move |&x| {
                                let mut p = prefix.clone();
                                p.push(x);
                                p
                            })
                        })
                        .collect();
                }
                out
            }
            _ => return Err(cfg("alpha", "give either values, or start, stop and count")),
        };
        if values.is_empty() {
            return Err(cfg("alpha", "empty sweep"));
        }
        if let Some(bad) = values.iter().find(|c| c.len() != dim || c.iter().any(|x| !x.is_finite())) {
            return Err(cfg("alpha.values", format!("class {bad:?} must have {dim} finite components")));
        }
        Ok(values)
    }

    /// Verification settings, with an optional resolution override.
    pub fn verify_settings(&self, v: &VerifyBlock, resolutions: Option<&[usize]>) -> Result<VerifySettings> {
        let defaults = VerifySettings::default();
        Ok(VerifySettings {
            grid: GridTemplate {
                dim: self.grid.dim,
                n_ref: self.grid.n,
                tau_ref: self.grid.tau,
                tau_exponent: v.tau_exponent,
                v_max: self.grid.v_max,
            },
            resolutions: resolutions.map(|r| r.to_vec()).unwrap_or_else(|| v.resolutions.clone()),
            barrier: v.barrier.unwrap_or(defaults.barrier),
            tol_zero_factor: v.tol_zero_factor,
            times: v.times.clone(),
            u0: v.u0.clone().unwrap_or(defaults.u0),
            gates: v.gates.clone(),
            alpha_forms: v.alpha_forms.clone().unwrap_or_else(|| {
                let mut forms = vec![vec![0.0; self.grid.dim]];
                for x in [0.5, 1.0] {
                    let mut c = vec![0.0; self.grid.dim];
                    c[0] = x;
                    forms.push(c);
                }
                forms
            }),
        })
    }
}

fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![start],
        _ => {
            let m = (count - 1) as f64;
            (0..count).map(|i| (start * (m - i as f64) + stop * i as f64) / m).collect()
        }
    }
}

/// Fails on any key of `original` that did not survive a parse/serialize
/// round trip, i.e. a key the schema ignored.
fn reject_unknown(original: &toml::Value, echoed: &toml::Value, path: &str) -> Result<()> {
    match (original, echoed) {
        (toml::Value::Table(a), toml::Value::Table(b)) => {
            for (k, v) in a {
                let sub = format!("{path}.{k}");
                match b.get(k) {
                    Some(w) => reject_unknown(v, w, &sub)?,
                    None => return Err(cfg(&sub, "unknown key")),
                }
            }
            Ok(())
        }
        (toml::Value::Array(a), toml::Value::Array(b)) => {
            for (i, (v, w)) in a.iter().zip(b).enumerate() {
                reject_unknown(v, w, &format!("{path}[{i}]"))?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "[grid]\ndim = 1\nn = 32\ntau = 0.1\nv_max = 4.0\n";

    #[test]
    fn minimal_config() {
        let c = RunConfig::parse(BASE).unwrap();
        assert_eq!(c.form_class(), vec![0.0]);
        assert_eq!(c.cache.policy, CachePolicy::ReadWrite);
        assert!(c.hamiltonian("pendulum").is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse(&format!("{BASE}bogus = 1\n")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = RunConfig::parse(&format!("{BASE}[output]\ndir = \"x\"\ncolour = 2\n")).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let text = format!(
            "{BASE}[hamiltonians.h]\ndim = 1\nfamily = \"mechanical\"\npotential = [{{ axis = 0, amplitude = 1.0, wavenumber = 1 }}]\nextra = 3\n"
        );
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("hamiltonians.h.extra"), "{err}");
    }

    #[test]
    fn named_hamiltonians_parse() {
        let text = format!(
            "{BASE}[hamiltonians.quartic]\ndim = 1\nfamily = \"polynomial\"\ncoeffs = [[0.0, 0.0, 0.5, 0.0, 0.25]]\n"
        );
        let c = RunConfig::parse(&text).unwrap();
        let h = c.hamiltonian("quartic").unwrap();
        assert_eq!(h.value(&[0.0], &[1.0]), 0.75);
    }

    #[test]
    fn non_tonelli_specs_fail_validation() {
        let text = format!("{BASE}[hamiltonians.cubic]\ndim = 1\nfamily = \"polynomial\"\ncoeffs = [[0.0, 0.0, 0.5, -1.0]]\n");
        let err = RunConfig::parse(&text).unwrap_err();
        assert!(err.to_string().starts_with("configuration error: hamiltonians.cubic"), "{err}");
    }

    #[test]
    fn sweeps() {
        let c = RunConfig::parse(&format!("{BASE}[alpha]\nhamiltonian = \"free\"\nstart = [-1.0]\nstop = [1.0]\ncount = [9]\n")).unwrap();
        let s = c.sweep(c.alpha.as_ref().unwrap()).unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!(s[1], vec![-0.75]);
        let err = RunConfig::parse(&format!("{BASE}[alpha]\nhamiltonian = \"free\"\nvalues = []\n")).unwrap_err();
        assert!(err.to_string().contains("empty sweep"), "{err}");
        let two = "[grid]\ndim = 2\nn = 8\ntau = 0.25\nv_max = 2.0\n[alpha]\nhamiltonian = \"free\"\nstart = [0.0, 0.0]\nstop = [1.0, 2.0]\ncount = [2, 3]\n";
        let c = RunConfig::parse(two).unwrap();
        let s = c.sweep(c.alpha.as_ref().unwrap()).unwrap();
        assert_eq!(s, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, 2.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
    }

    #[test]
    fn unknown_pair_is_a_config_error() {
        let err = RunConfig::parse(&format!("{BASE}[verify]\npair = \"nope\"\n")).unwrap_err();
        assert!(err.to_string().contains("verify.pair"), "{err}");
        let two = "[grid]\ndim = 2\nn = 16\ntau = 0.2\nv_max = 4.0\n[verify]\npair = \"sep3\"\n";
        assert!(RunConfig::parse(two).is_ok());
    }

    #[test]
    fn bad_grid_reports_its_section() {
        let err = RunConfig::parse("[grid]\ndim = 1\nn = 32\ntau = 0.001\nv_max = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("grid:"), "{err}");
    }
}
