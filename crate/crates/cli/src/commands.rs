use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use weak_kam::cache::SystemCache;
use weak_kam::verify::{Check, VerificationReport, Verifier};
use weak_kam::weak_kam::{critical_value_with, elementary_solutions, AlphaMethod};
use weak_kam::{AubryData, Error, OneForm, Result};

use crate::config::{CachePolicy, RunConfig};
use crate::store::DiskStore;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) | Error::Internal(_) => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

/// Command-line overrides of config values.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub cache: Option<CachePolicy>,
    pub resolutions: Option<Vec<usize>>,
    pub expect_fail: bool,
}

pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub cache: Arc<SystemCache>,
}

impl Context {
    pub fn new(config: RunConfig, o: &Overrides) -> Self {
        let out_dir = o.out.clone().unwrap_or_else(|| config.output.dir.clone());
        let policy = o.cache.unwrap_or(config.cache.policy);
        let cache = match policy {
            CachePolicy::Off => SystemCache::new(),
            CachePolicy::ReadOnly => SystemCache::with_store(Arc::new(DiskStore::new(&config.cache.dir, false))),
            CachePolicy::ReadWrite => SystemCache::with_store(Arc::new(DiskStore::new(&config.cache.dir, true))),
        };
        Self { config, out_dir, cache: Arc::new(cache) }
    }

    fn output(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(self.out_dir.join(name))
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn axis_names(prefix: &str, dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("{prefix}{i}")).collect()
}

/// α over the configured sweep, one CSV row per class.
pub fn alpha(ctx: &Context) -> Result<PathBuf> {
    let cfg = &ctx.config;
    let block = cfg.alpha.as_ref().ok_or_else(|| Error::Config("missing [alpha] section".into()))?;
    let grid = cfg.grid()?;
    let spec = cfg.hamiltonian(&block.hamiltonian)?;
    let mut rows = Vec::new();
    for c in cfg.sweep(block)? {
        let solved = ctx.cache.system(&grid, &spec, &OneForm::constant(c.clone()))?;
        let critical = match block.method {
            AlphaMethod::Karp => solved.system.critical().clone(),
            m => critical_value_with(solved.system.cost(), m, &block.power_iteration)?,
        };
        let method = match critical.method {
            AlphaMethod::Karp => "karp",
            AlphaMethod::PowerIteration => "power-iteration",
        };
        let mut row: Vec<String> = c.iter().map(|&x| fmt(x)).collect();
        row.extend([fmt(critical.alpha), method.to_string(), fmt(critical.residual)]);
        rows.push(row);
    }
    let mut header = axis_names("c", grid.dim());
    header.extend(["alpha", "method", "residual"].map(String::from));
    let path = ctx.output("alpha.csv")?;
    write_csv(&path, &header, &rows)?;
    Ok(path)
}

/// Barrier fields per grid point; the barrier matrix goes to the cache.
pub fn barrier(ctx: &Context) -> Result<PathBuf> {
    let cfg = &ctx.config;
    let block = cfg.barrier.as_ref().ok_or_else(|| Error::Config("missing [barrier] section".into()))?;
    let grid = cfg.grid()?;
    let spec = cfg.hamiltonian(&block.hamiltonian)?;
    let form = cfg.one_form(&grid);
    let solved = ctx.cache.system(&grid, &spec, &form)?;
    if ctx.cache.store().is_none() {
        log::info!("cache is off; the barrier matrix is not persisted");
    }
    let h = solved.barrier(&block.params, ctx.cache.store())?;
    let tol = block.tol_zero.unwrap_or(block.tol_zero_factor * grid.spacing() * grid.spacing() / grid.tau());
    let data = AubryData::compute(&h, tol)?;
    let (u_minus, _) = elementary_solutions(&h, data.aubry[0], &data.aubry)?;
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    let rows: Vec<Vec<String>> = (0..grid.n_states())
        .map(|i| {
            let mut row: Vec<String> = grid.point(i).into_iter().map(fmt).collect();
            row.extend([
                fmt(data.first_barrier.values[i]),
                fmt(data.second_barrier.values[i]),
                fmt(u_minus.values[i]),
                flag(data.is_aubry(i)),
                flag(data.is_mane(i)),
            ]);
            row
        })
        .collect();
    let mut header = axis_names("q", grid.dim());
    header.extend(["B", "b", "u_minus", "aubry", "mane"].map(String::from));
    let path = ctx.output("barrier.csv")?;
    write_csv(&path, &header, &rows)?;
    Ok(path)
}

pub struct VerifyOutcome {
    pub path: PathBuf,
    pub reports: Vec<VerificationReport>,
    pub exit_code: i32,
}

pub fn verify(ctx: &Context, o: &Overrides) -> Result<VerifyOutcome> {
    let cfg = &ctx.config;
    let block = cfg.verify.as_ref().ok_or_else(|| Error::Config("missing [verify] section".into()))?;
    let settings = cfg.verify_settings(block, o.resolutions.as_deref())?;
    settings.validate().map_err(|e| Error::Config(format!("verify: {}", e.detail())))?;
    let pair = cfg.pair(&block.pair)?;
    if cfg.form.exact_part.is_some() {
        log::warn!("pair checks use the class c only; form.exact_part enters the gauge check alone");
    }
    let checks: Vec<Check> = match &block.checks {
        Some(ids) => ids.iter().filter_map(|s| Check::parse(s)).filter(|c| *c != Check::GaugeInvariance).collect(),
        None => Check::PAIR_CHECKS.to_vec(),
    };
    let verifier = Verifier::with_cache(settings, ctx.cache.clone())?.record_runtime(cfg.output.record_runtime);
    let c = cfg.form_class();
    let mut reports = verifier.run_suite(&pair, &c, &checks);
    if let Some(g) = &block.gauge {
        let spec = cfg.hamiltonian(&g.hamiltonian)?;
        reports.push(verifier.gauge_invariance(&g.hamiltonian, &spec, &c, &g.exact_part));
    }
    let path = ctx.output(&format!("verify-{}.json", pair.name))?;
    let mut json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    json.push('\n');
    fs::write(&path, json)?;

    let numeric = reports.iter().any(|r| r.error.as_ref().is_some_and(|e| e.kind == "numeric" || e.kind == "internal"));
    let config = reports.iter().any(|r| r.error.as_ref().is_some_and(|e| e.kind != "numeric" && e.kind != "internal"));
    let all_pass = reports.iter().all(|r| r.pass);
    let exit_code = if numeric {
        EXIT_NUMERIC
    } else if config {
        EXIT_CONFIG
    } else if all_pass != o.expect_fail {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    };
    Ok(VerifyOutcome { path, reports, exit_code })
}

/// Plain-text summary, one line per report.
pub fn summary_table(reports: &[VerificationReport]) -> String {
    let mut out = format!("{:<24} {:<12} {:<6} {:>8}  metrics (coarse -> fine)\n", "check", "fixture", "result", "ratio");
    for r in reports {
        let ratio = r.ratio.map_or("-".to_string(), |x| format!("{x:.3}"));
        let metrics = match &r.error {
            Some(e) => format!("error ({}): {}", e.kind, e.message),
            None => r
                .metrics
                .iter()
                .map(|(k, v)| {
                    let vals: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
                    format!("{k} {}", vals.join(" -> "))
                })
                .collect::<Vec<_>>()
                .join("; "),
        };
        let result = if r.pass { "pass" } else { "FAIL" };
        out.push_str(&format!("{:<24} {:<12} {:<6} {:>8}  {metrics}\n", r.check, r.fixture, result, ratio));
    }
    out
}
