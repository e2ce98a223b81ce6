//! `ttreg`: simulate, fit, tune, test and benchmark tensor-response
//! regression models from the command line.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
//! Errors go to stderr as `error[CODE]: message`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use ttreg::distributions::Nu;
use ttreg::estimators::{fit, Dataset, FitConfig, FitResult, HostSplit, LambdaChoice, Method, PenaltyKind};
use ttreg::inference::{confidence_interval, method_covariance, sigma_x, wald_test, LinearRestriction};
use ttreg::io::{self, RunConfig};
use ttreg::par::{self, Parallelism};
use ttreg::simbench::{self, Model, SimConfig};
use ttreg::tensor::{linear_offset, DenseTensor, KroneckerScale};
use ttreg::{covariance, Error, Result};

#[derive(Parser)]
#[command(name = "ttreg", version, about = "Robust tensor-response regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one replicate of a simulation model.
    Simulate(SimulateArgs),
    /// Fit an estimator and write the coefficients and metadata.
    Fit(FitArgs),
    /// Write the cross-validation path of an estimator.
    Cv(FitArgs),
    /// Wald test on a saved fit.
    Test(TestArgs),
    /// Run replicate grids and write a metric table.
    Bench(BenchArgs),
    /// Convert between CSV matrices and TTR1 tensor files.
    Convert(ConvertArgs),
}

#[derive(Args, Clone)]
struct ModelFlags {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// Response dims, e.g. 32x32.
    #[arg(long)]
    dims: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    /// Degrees of freedom of the simulated errors.
    #[arg(long = "nu-star")]
    nu_star: Option<Nu>,
    #[arg(long)]
    signal: Option<f64>,
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct EstimatorFlags {
    #[arg(long)]
    method: Option<Method>,
    /// Working degrees of freedom (`inf` for the normal).
    #[arg(long)]
    nu: Option<Nu>,
    /// Fixed tuning parameter; omit to cross-validate.
    #[arg(long, conflicts_with = "cv")]
    lambda: Option<f64>,
    /// Choose lambda by cross-validation (the default).
    #[arg(long)]
    cv: bool,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    penalty: Option<PenaltyKind>,
    #[arg(long = "host-split")]
    host_split: Option<HostSplit>,
    /// Build the adaptive weights from an APL pilot instead of OLS.
    #[arg(long = "apl-pilot")]
    apl_pilot: bool,
}

#[derive(Args, Clone)]
struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Predictors, a q×n TTR1 matrix.
    #[arg(long)]
    x: Option<PathBuf>,
    /// Responses, a p_1×…×p_M×n TTR1 stack.
    #[arg(long)]
    y: Option<PathBuf>,
    #[command(flatten)]
    est: EstimatorFlags,
    /// Skip centering the data.
    #[arg(long = "no-center")]
    no_center: bool,
    /// Worker threads for cross-validation folds.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// 1-based coefficient coordinates `j1,…,jM,k`; repeat for a joint test.
    #[arg(long = "coef", required = true)]
    coef: Vec<String>,
    /// Hypothesized values, one per `--coef` (comma separated).
    #[arg(long, allow_hyphen_values = true)]
    value: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Divide `alpha` by this many tests.
    #[arg(long)]
    bonferroni: Option<usize>,
    /// Degrees of freedom for the covariance, overriding the fit's.
    #[arg(long)]
    nu: Option<Nu>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated methods.
    #[arg(long, default_value = "ost,apn,apl,ols")]
    methods: String,
    #[command(flatten)]
    est: BenchEstimatorFlags,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchEstimatorFlags {
    #[arg(long)]
    nu: Option<Nu>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    penalty: Option<PenaltyKind>,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 1 {
                eprintln!("error[E_USAGE]: {}", e.to_string().trim_end());
            } else {
                print!("{}", e);
            }
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e);
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let args: Vec<String> = std::env::args().collect();
    match cli.command {
        Command::Simulate(a) => simulate(a, &args),
        Command::Fit(a) => with_jobs(a.jobs, || fit_cmd(a, &args, false)),
        Command::Cv(a) => with_jobs(a.jobs, || fit_cmd(a, &args, true)),
        Command::Test(a) => test_cmd(a, &args),
        Command::Bench(a) => bench(a, &args),
        Command::Convert(a) => convert(a, &args),
    }
}

fn with_jobs(jobs: usize, f: impl FnOnce() -> Result<()> + Send) -> Result<()> {
    if jobs == 0 {
        return Err(usage("--jobs must be positive"));
    }
    par::install(Parallelism::from_jobs(jobs), f)
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split(['x', 'X', ','])
        .map(|d| d.trim().parse::<usize>().map_err(|_| usage(format!("invalid dims '{}'", s))))
        .collect()
}

fn sim_config(flags: &ModelFlags) -> Result<SimConfig> {
    let cfg = load_config(&flags.config)?;
    let mut c = cfg.sim_config()?;
    if let Some(m) = &flags.model {
        let model: Model = m.parse()?;
        let base = SimConfig::defaults(model);
        c.model = model;
        if cfg.sim.as_ref().and_then(|s| s.n).is_none() {
            c.n = base.n;
        }
        if cfg.sim.as_ref().and_then(|s| s.signal).is_none() {
            c.signal = base.signal;
        }
    }
    if let Some(d) = &flags.dims {
        c.dims = parse_dims(d)?;
    }
    if let Some(n) = flags.n {
        c.n = n;
    }
    if let Some(r) = flags.rho {
        c.rho = r;
    }
    if let Some(nu) = flags.nu_star {
        c.nu = nu;
    }
    if let Some(b) = flags.signal {
        c.signal = b;
    }
    if let Some(s) = flags.sparsity {
        c.sparsity = s;
    }
    if let Some(s) = flags.seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn sim_json(c: &SimConfig) -> Value {
    json!({
        "model": c.model.name(),
        "dims": c.dims,
        "n": c.n,
        "rho": c.rho,
        "nu": c.nu.to_string(),
        "signal": c.signal,
        "sparsity": c.sparsity,
        "seed": c.seed,
        "replicates": c.replicates,
    })
}

fn fit_config_json(c: &FitConfig, method: Method, center: bool) -> Value {
    let lambda = match c.lambda {
        LambdaChoice::Fixed(l) => json!({ "fixed": l }),
        LambdaChoice::Cv { folds, seed } => json!({ "cv": { "folds": folds, "seed": seed } }),
    };
    json!({
        "method": method.name(),
        "nu": c.nu.to_string(),
        "penalty": c.penalty.to_string(),
        "lambda": lambda,
        "host_split": match c.host_split { HostSplit::Reuse => "reuse", HostSplit::TwoBatch => "two-batch" },
        "apl_pilot": c.apl_pilot,
        "grid_len": c.grid_len,
        "grid_ratio": c.grid_ratio,
        "center": center,
    })
}

/// `manifest.json` next to the outputs: enough to rerun the command.
fn write_manifest(path: &Path, args: &[String], settings: Value) -> Result<()> {
    let doc = json!({
        "tool": "ttreg",
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
        "settings": settings,
    });
    write_json(path, &doc)
}

fn write_json(path: &Path, doc: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(doc).map_err(|e| Error::Format(e.to_string()))?;
    io::write_atomic(path, format!("{}\n", text).as_bytes())
}

fn read_json(path: &Path) -> Result<Value> {
    serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Format(format!("{}: {}", path.display(), e)))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn simulate(a: SimulateArgs, args: &[String]) -> Result<()> {
    let c = sim_config(&a.model)?;
    let rep = simbench::generate(&c, a.replicate)?;
    create_dir(&a.out)?;
    io::write_tensor(a.out.join("x.ttr"), &DenseTensor::from_matrix(rep.dataset.x()))?;
    io::write_tensor(a.out.join("y.ttr"), rep.dataset.y())?;
    let mut dims = c.dims.clone();
    dims.push(c.model.q());
    io::write_tensor(a.out.join("b_true.ttr"), &DenseTensor::new(dims, rep.truth.b.as_slice().to_vec())?)?;
    let mut settings = sim_json(&c);
    settings["replicate"] = json!(a.replicate);
    write_manifest(&a.out.join("manifest.json"), args, settings)?;
    println!("wrote replicate {} of {} to {}", a.replicate, c.model, a.out.display());
    Ok(())
}

/// Config file values, overridden by flags.
fn resolve_fit(a: &FitArgs) -> Result<(RunConfig, Method, FitConfig, bool)> {
    let cfg = load_config(&a.config)?;
    let method = a.est.method.or(cfg.method()?).unwrap_or(Method::Ost);
    let mut fc = cfg.fit_config()?;
    let e = &a.est;
    if let Some(nu) = e.nu {
        fc.nu = nu;
    }
    if let Some(p) = e.penalty {
        fc.penalty = p;
    }
    if let Some(h) = e.host_split {
        fc.host_split = h;
    }
    if e.apl_pilot {
        fc.apl_pilot = true;
    }
    let folds = e.folds.or(cfg.folds).unwrap_or(5);
    let seed = e.seed.or(cfg.seed).unwrap_or(0);
    if folds < 2 {
        return Err(usage(format!("--folds must be at least 2, got {}", folds)));
    }
    fc.lambda = match (e.lambda, e.cv) {
        (Some(l), _) if !(l >= 0.0 && l.is_finite()) => return Err(usage(format!("invalid --lambda {}", l))),
        (Some(l), _) => LambdaChoice::Fixed(l),
        (None, true) => LambdaChoice::Cv { folds, seed },
        (None, false) => match cfg.lambda {
            Some(l) => LambdaChoice::Fixed(l),
            None => LambdaChoice::Cv { folds, seed },
        },
    };
    let center = !a.no_center && cfg.center.unwrap_or(true);
    Ok((cfg, method, fc, center))
}

fn load_data(a: &FitArgs, cfg: &RunConfig, center: bool) -> Result<Dataset> {
    let x = a.x.clone().or(cfg.x.clone()).ok_or_else(|| usage("missing --x"))?;
    let y = a.y.clone().or(cfg.y.clone()).ok_or_else(|| usage("missing --y"))?;
    let ds = io::read_dataset(&x, &y)?;
    if center {
        io::center(&ds)
    } else {
        Ok(ds)
    }
}

fn write_xi(dir: &Path, xi: &KroneckerScale) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for (m, s) in xi.modes().iter().enumerate() {
        let name = format!("xi_{}.ttr", m + 1);
        io::write_tensor(dir.join(&name), &DenseTensor::from_matrix(s))?;
        names.push(name);
    }
    Ok(names)
}

fn fit_json(fit: &FitResult, ds: &Dataset, xi_files: &[String], xi_source: &str) -> Value {
    let d = &fit.diagnostics;
    json!({
        "method": fit.method.name(),
        "nu": fit.nu_used.to_string(),
        "penalty": fit.penalty.map(|p| p.to_string()),
        "lambda": fit.lambda,
        "lambda_pilot": fit.lambda_pilot,
        "coef_dims": fit.b_hat.dims(),
        "n": ds.n(),
        "sigma_x": sigma_x(ds).row_iter().map(|r| r.iter().cloned().collect::<Vec<f64>>()).collect::<Vec<_>>(),
        "xi_files": xi_files,
        "xi_source": xi_source,
        "sample_weights": fit.sample_weights,
        "diagnostics": {
            "iterations": d.iterations,
            "objective": d.objective,
            "converged": d.converged,
            "kkt": d.kkt,
            "objective_trace": d.objective_trace,
        },
    })
}

fn fit_cmd(a: FitArgs, args: &[String], cv_only: bool) -> Result<()> {
    let (cfg, method, mut fc, center) = resolve_fit(&a)?;
    let out = a.out.clone().or(cfg.output.clone()).ok_or_else(|| usage("missing --out"))?;
    let ds = load_data(&a, &cfg, center)?;
    create_dir(&out)?;
    let settings = fit_config_json(&fc, method, center);
    if cv_only {
        let (folds, seed) = match fc.lambda {
            LambdaChoice::Cv { folds, seed } => (folds, seed),
            LambdaChoice::Fixed(_) => return Err(usage("`cv` cannot take --lambda")),
        };
        let path = ttreg::estimators::cross_validate(&ds, method, None, &fc, folds, seed)?;
        io::write_atomic(out.join("cv_path.csv"), &io::cv_path_to_csv(&path)?)?;
        write_manifest(&out.join("manifest.json"), args, settings)?;
        println!("selected lambda {:.6e} ({} of {})", path.best_lambda(), path.best_index + 1, path.lambdas.len());
        return Ok(());
    }
    if method == Method::Apn {
        fc.nu = Nu::Infinite;
    }
    let f = fit(&ds, method, &fc)?;
    io::write_tensor(out.join("b_hat.ttr"), &f.b_hat)?;
    // Estimators without a scale estimate get the plug-in one at the working
    // ν, so the saved fit is enough for inference.
    let (xi, source) = match &f.xi_hat {
        Some(xi) => (xi.clone(), "estimator"),
        None => (covariance::plugin_xi(&ds, &f.b_matrix(), fc.nu)?.xi, "plugin"),
    };
    let xi_files = write_xi(&out, &xi)?;
    let mut meta = fit_json(&f, &ds, &xi_files, source);
    if matches!(method, Method::Ols | Method::Tols | Method::Apl) {
        meta["nu"] = json!(fc.nu.to_string());
    }
    write_json(&out.join("fit.json"), &meta)?;
    if let Some(path) = &f.cv {
        io::write_atomic(out.join("cv_path.csv"), &io::cv_path_to_csv(path)?)?;
    }
    write_manifest(&out.join("manifest.json"), args, settings)?;
    let nnz = f.b_hat.data().iter().filter(|v| **v != 0.0).count();
    println!("{}: lambda {:.6e}, {} nonzero of {}", method, f.lambda, nnz, f.b_hat.len());
    Ok(())
}

fn json_usizes(v: &Value, key: &str) -> Result<Vec<usize>> {
    v[key]
        .as_array()
        .ok_or_else(|| Error::Format(format!("fit.json: missing '{}'", key)))?
        .iter()
        .map(|x| x.as_u64().map(|x| x as usize).ok_or_else(|| Error::Format(format!("fit.json: bad '{}'", key))))
        .collect()
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| usage(format!("invalid {} '{}'", what, s))))
        .collect()
}

fn test_cmd(a: TestArgs, args: &[String]) -> Result<()> {
    let meta = read_json(&a.fit.join("fit.json"))?;
    let method: Method = meta["method"].as_str().ok_or_else(|| Error::Format("fit.json: missing method".into()))?.parse()?;
    let nu = match a.nu {
        Some(nu) => nu,
        None => meta["nu"].as_str().ok_or_else(|| Error::Format("fit.json: missing nu".into()))?.parse()?,
    };
    let n = meta["n"].as_u64().ok_or_else(|| Error::Format("fit.json: missing n".into()))? as usize;
    let coef_dims = json_usizes(&meta, "coef_dims")?;
    let rows: Vec<Vec<f64>> = serde_json::from_value(meta["sigma_x"].clone()).map_err(|e| Error::Format(e.to_string()))?;
    let q = *coef_dims.last().ok_or_else(|| Error::Format("fit.json: empty coef_dims".into()))?;
    if rows.len() != q || rows.iter().any(|r| r.len() != q) {
        return Err(Error::Format("fit.json: sigma_x has the wrong shape".into()));
    }
    let sx = nalgebra::DMatrix::from_fn(q, q, |i, j| rows[i][j]);
    let b_hat = io::read_tensor(a.fit.join("b_hat.ttr"))?;
    if b_hat.dims() != coef_dims.as_slice() {
        return Err(Error::Format("b_hat.ttr does not match fit.json".into()));
    }
    let files: Vec<String> = serde_json::from_value(meta["xi_files"].clone()).map_err(|e| Error::Format(e.to_string()))?;
    let modes = files
        .iter()
        .map(|f| {
            let t = io::read_tensor(a.fit.join(f))?;
            t.to_matrix(t.dims()[0])
        })
        .collect::<Result<Vec<_>>>()?;
    let xi = KroneckerScale::new(modes)?;
    let p = b_hat.len() / q;
    let b = nalgebra::DMatrix::from_column_slice(p, q, b_hat.data());

    let mut coords = Vec::new();
    for c in &a.coef {
        let idx: Vec<usize> = parse_list(c, "coordinate")?;
        if idx.len() != coef_dims.len() || idx.iter().zip(&coef_dims).any(|(i, d)| *i == 0 || i > d) {
            return Err(usage(format!("coordinate '{}' is outside 1..{:?}", c, coef_dims)));
        }
        let zero: Vec<usize> = idx.iter().map(|i| i - 1).collect();
        coords.push(linear_offset(&coef_dims, &zero));
    }
    let values: Vec<f64> = parse_list(&a.value, "value")?;
    if values.len() != coords.len() {
        return Err(usage(format!("{} values for {} coordinates", values.len(), coords.len())));
    }
    let alpha = a.alpha / a.bonferroni.unwrap_or(1).max(1) as f64;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!("significance level {} is outside (0,1)", alpha)));
    }
    let dims = &coef_dims[..coef_dims.len() - 1];
    let cov = method_covariance(method, &b, dims, Some(&xi), nu, &sx)?;
    let h = LinearRestriction::coordinates(&coords, p * q);
    let res = wald_test(&b, &cov, n, &h, &nalgebra::DVector::from_vec(values.clone()))?;
    let intervals: Vec<Value> = coords
        .iter()
        .map(|&c| {
            confidence_interval(&b, &cov, n, c, 1.0 - alpha)
                .map(|(lo, hi)| json!({ "coordinate": c, "estimate": b.as_slice()[c], "lower": lo, "upper": hi }))
        })
        .collect::<Result<Vec<_>>>()?;
    let doc = json!({
        "method": method.name(),
        "nu": nu.to_string(),
        "coordinates": a.coef,
        "values": values,
        "statistic": res.statistic,
        "df": res.df,
        "p_value": res.p_value,
        "alpha": alpha,
        "reject": res.p_value < alpha,
        "intervals": intervals,
    });
    if let Some(out) = &a.out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        write_json(out, &doc)?;
        write_manifest(&out.with_extension("manifest.json"), args, json!({ "fit": a.fit, "alpha": a.alpha }))?;
    }
    println!("T = {:.6}, df = {}, p = {:.6e}{}", res.statistic, res.df, res.p_value, if res.p_value < alpha { " (reject)" } else { "" });
    Ok(())
}

fn bench(a: BenchArgs, args: &[String]) -> Result<()> {
    let mut c = sim_config(&a.model)?;
    if let Some(r) = a.reps {
        c.replicates = r;
    }
    if c.replicates == 0 {
        return Err(usage("--reps must be positive"));
    }
    let methods: Vec<Method> = parse_list(&a.methods, "method list")?;
    let cfg = load_config(&a.model.config)?;
    let mut fc = cfg.fit_config()?;
    if let Some(nu) = a.est.nu {
        fc.nu = nu;
    }
    if let Some(p) = a.est.penalty {
        fc.penalty = p;
    }
    let folds = a.est.folds.or(cfg.folds).unwrap_or(5);
    fc.lambda = match a.est.lambda.or(cfg.lambda) {
        Some(l) => LambdaChoice::Fixed(l),
        None => LambdaChoice::Cv { folds, seed: 0 },
    };
    if a.jobs == 0 {
        return Err(usage("--jobs must be positive"));
    }
    let report = simbench::run_grid(std::slice::from_ref(&c), &methods, &fc, Parallelism::from_jobs(a.jobs))?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    io::write_atomic(&a.out, &io::report_to_csv(&report)?)?;
    let names: Vec<&str> = methods.iter().map(|m| m.name()).collect();
    let settings = json!({
        "sim": sim_json(&c),
        "methods": names,
        "fit": fit_config_json(&fc, methods.first().copied().unwrap_or(Method::Ost), true),
        "jobs": a.jobs,
    });
    write_manifest(&a.out.with_extension("manifest.json"), args, settings)?;
    for row in &report.rows {
        let ree = row.ree.map(|s| format!("{:.4}", s.mean)).unwrap_or_else(|| "NA".into());
        println!("{:6} REE {} ({} failures)", row.method.name(), ree, row.failures);
    }
    Ok(())
}

fn extension(p: &Path) -> String {
    p.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn convert(a: ConvertArgs, args: &[String]) -> Result<()> {
    match (extension(&a.input).as_str(), extension(&a.output).as_str()) {
        ("csv", "ttr") => {
            let m = io::read_matrix_csv(&a.input)?;
            io::write_tensor(&a.output, &DenseTensor::from_matrix(&m))?;
        }
        ("ttr", "csv") => {
            let t = io::read_tensor(&a.input)?;
            if t.order() != 2 {
                return Err(usage(format!("CSV holds matrices only; tensor has order {}", t.order())));
            }
            io::write_matrix_csv(&a.output, &t.to_matrix(t.dims()[0])?)?;
        }
        (i, o) => return Err(usage(format!("cannot convert .{} to .{}; use .csv and .ttr", i, o))),
    }
    write_manifest(&a.output.with_extension("manifest.json"), args, json!({ "input": a.input, "output": a.output }))?;
    Ok(())
}
