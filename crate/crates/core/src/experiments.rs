//! Benchmark problems, parameter sweeps, and convergence-rate fits.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::driver::{run_adaptive, AdaptiveConfig, Problem, RunLog};
use crate::error::{Error, Result};
use crate::mesh::{Domain, Point};
use crate::nonlinearity::Nonlinearity;

/// `u⋆ = r^β cos(β(φ - π/8))` on the Z-shape with `φ ∈ (-3π/4, π]`, which
/// vanishes on both edges of the re-entrant corner.
#[derive(Clone, Copy, Debug)]
pub struct ExactSolution {
    pub beta: f64,
    pub nonlinearity: Nonlinearity,
    /// Angle of the symmetry axis; the corner edges lie at `rotation ± π/(2β)`.
    pub rotation: f64,
    /// Branch cut: angles are taken in `(cut - 2π, cut]`.
    pub cut: f64,
}

pub fn zshape_exact() -> ExactSolution {
    ExactSolution {
        beta: 4.0 / 7.0,
        nonlinearity: Nonlinearity::ZShape,
        rotation: std::f64::consts::FRAC_PI_8,
        cut: std::f64::consts::PI,
    }
}

impl ExactSolution {
    fn polar(&self, p: Point) -> (f64, f64) {
        use std::f64::consts::TAU;
        let r = p[0].hypot(p[1]);
        let mut phi = p[1].atan2(p[0]);
        if phi > self.cut {
            phi -= TAU;
        }
        if phi <= self.cut - TAU {
            phi += TAU;
        }
        (r, phi)
    }

    pub fn value(&self, p: Point) -> f64 {
        let (r, phi) = self.polar(p);
        r.powf(self.beta) * (self.beta * (phi - self.rotation)).cos()
    }

    pub fn gradient(&self, p: Point) -> Point {
        let (r, phi) = self.polar(p);
        let b = self.beta;
        let s = b * r.powf(b - 1.0);
        let a = b * (phi - self.rotation) - phi;
        [s * a.cos(), -s * a.sin()]
    }

    /// `f = -div(mu(|grad u|²) grad u) = -mu'(s) grad s · grad u` since `u` is harmonic.
    pub fn source(&self, p: Point) -> f64 {
        let (r, phi) = self.polar(p);
        let b = self.beta;
        let s = b * b * r.powf(2.0 * b - 2.0);
        let ds_dr = b * b * (2.0 * b - 2.0) * r.powf(2.0 * b - 3.0);
        let du_dr = b * r.powf(b - 1.0) * (b * (phi - self.rotation)).cos();
        -self.nonlinearity.dmu_dt(p, s) * ds_dr * du_dr
    }

    /// Conormal derivative `mu(|grad u|²) grad u · n`.
    pub fn neumann(&self, p: Point, n: Point) -> f64 {
        let g = self.gradient(p);
        let s = g[0] * g[0] + g[1] * g[1];
        self.nonlinearity.mu(p, s) * (g[0] * n[0] + g[1] * n[1])
    }
}

/// Z-shape with the known singular solution and mixed boundary conditions.
pub fn zshape_known() -> Problem {
    let ex = zshape_exact();
    Problem {
        name: "zshape".into(),
        domain: Domain::ZShape,
        nonlinearity: ex.nonlinearity,
        f: Arc::new(move |p| ex.source(p)),
        g: Arc::new(move |p, n| ex.neumann(p, n)),
        exact_gradient: Some(Arc::new(move |p| ex.gradient(p))),
    }
}

/// L-shape with `f ≡ 1`, homogeneous Dirichlet data, and unknown solution.
pub fn lshape_unknown() -> Problem {
    Problem {
        name: "lshape".into(),
        domain: Domain::LShape,
        nonlinearity: Nonlinearity::LShape,
        f: Arc::new(|_| 1.0),
        g: Arc::new(|_, _| 0.0),
        exact_gradient: None,
    }
}

pub fn problem_for(domain: Domain) -> Result<Problem> {
    match domain {
        Domain::ZShape => Ok(zshape_known()),
        Domain::LShape => Ok(lshape_unknown()),
        Domain::UnitSquare => Err(Error::UnknownDomain("no benchmark on unit_square".into())),
    }
}

/// Expected asymptotic slope of `η` against `N`.
pub fn expected_rate(domain: Domain, uniform: bool) -> f64 {
    match (domain, uniform) {
        (Domain::ZShape, true) => -2.0 / 7.0,
        (Domain::LShape, true) => -1.0 / 3.0,
        _ => -0.5,
    }
}

/// Least-squares slope of `log ys` against `log xs` over the trailing
/// `window` fraction of the points.
pub fn fit_rate(xs: &[f64], ys: &[f64], window: f64) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    if xs.len() < 5 {
        return Err(Error::TooFewPoints { needed: 5, found: xs.len() });
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::InvalidConfig(format!("window {window} outside (0, 1]")));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidConfig("rate fit needs positive values".into()));
    }
    let m = ((window * xs.len() as f64).ceil() as usize).clamp(2, xs.len());
    let lx: Vec<f64> = xs[xs.len() - m..].iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys[ys.len() - m..].iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / m as f64;
    let my = ly.iter().sum::<f64>() / m as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("all sizes coincide".into()));
    }
    Ok(sxy / sxx)
}

/// Per-level data of a finished run, enough for all plots and rate fits.
#[derive(Clone, Debug, PartialEq)]
pub struct RunCurves {
    pub name: String,
    pub domain: Domain,
    pub uniform: bool,
    pub n: Vec<f64>,
    pub eta: Vec<f64>,
    pub cost: Vec<f64>,
    pub pcg: Vec<usize>,
}

impl RunCurves {
    pub fn from_log(name: &str, domain: Domain, log: &RunLog) -> Self {
        Self {
            name: name.to_string(),
            domain,
            uniform: log.config.uniform,
            n: log.levels.iter().map(|l| l.n_triangles as f64).collect(),
            eta: log.levels.iter().map(|l| l.eta).collect(),
            cost: log.levels.iter().map(|l| l.cumulative_cost as f64).collect(),
            pcg: log.levels.iter().map(|l| l.pcg_steps).collect(),
        }
    }

    /// Rebuilds the per-level data from a run CSV: the rows flagged as
    /// linearization stops mark the end of each level.
    pub fn from_csv(name: &str, domain: Domain, uniform: bool, csv: &str) -> Result<Self> {
        let mut lines = csv.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
        let cols: Vec<&str> = header.split(',').collect();
        let idx = |c: &str| {
            cols.iter().position(|h| *h == c).ok_or(Error::Parse { line: 1, message: format!("missing column {c}") })
        };
        let (ij, int, ieta, icost, ialg, ipic) =
            (idx("j")?, idx("nT")?, idx("eta")?, idx("cumcost")?, idx("alg_stop")?, idx("pic_stop")?);
        let mut c = Self { name: name.into(), domain, uniform, n: vec![], eta: vec![], cost: vec![], pcg: vec![] };
        let mut pcg = 0usize;
        for (i, line) in lines {
            let f: Vec<&str> = line.split(',').collect();
            let parse = |k: usize| -> Result<f64> {
                f.get(k)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or(Error::Parse { line: i + 1, message: format!("bad field {k}") })
            };
            if parse(ialg)? == 1.0 {
                pcg += parse(ij)? as usize;
            }
            if parse(ipic)? == 1.0 {
                c.n.push(parse(int)?);
                c.eta.push(parse(ieta)?);
                c.cost.push(parse(icost)?);
                c.pcg.push(pcg);
                pcg = 0;
            }
        }
        Ok(c)
    }

    pub fn slope_n(&self) -> Result<f64> {
        fit_rate(&self.n, &self.eta, 0.5)
    }

    pub fn slope_cost(&self) -> Result<f64> {
        fit_rate(&self.cost, &self.eta, 0.5)
    }

    pub fn pcg_max(&self) -> usize {
        self.pcg.iter().copied().max().unwrap_or(0)
    }

    pub fn pcg_median(&self) -> f64 {
        median(&self.pcg.iter().map(|&p| p as f64).collect::<Vec<_>>())
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchmarkName {
    ZShapeKnown,
    LShapeUnknown,
}

impl FromStr for BenchmarkName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zshape_known" | "zshape" => Ok(Self::ZShapeKnown),
            "lshape_unknown" | "lshape" => Ok(Self::LShapeUnknown),
            _ => Err(Error::UnknownDomain(s.into())),
        }
    }
}

impl BenchmarkName {
    pub fn domain(self) -> Domain {
        match self {
            Self::ZShapeKnown => Domain::ZShape,
            Self::LShapeUnknown => Domain::LShape,
        }
    }
}

/// How the parameter lists combine into runs.
#[derive(Clone, Debug, PartialEq)]
pub enum GridMode {
    /// Every combination.
    Product,
    /// Vary one parameter at a time around `(theta, lambda_alg, lambda_pic)`.
    Axes { base: (f64, f64, f64) },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSpec {
    pub name: BenchmarkName,
    pub thetas: Vec<f64>,
    pub lambda_algs: Vec<f64>,
    pub lambda_pics: Vec<f64>,
    pub max_elements: usize,
    pub mode: GridMode,
    pub diagnostics: bool,
}

impl BenchmarkSpec {
    /// Parses `key=value` lines; lists are comma separated, `#` starts a comment.
    ///
    /// Keys: `name`, `theta`, `lambda_alg`, `lambda_pic`, `max_elements`,
    /// `mode` (`product` or `axes`), `base` (three numbers, axes mode),
    /// `diagnostics`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = BenchmarkSpec {
            name: BenchmarkName::ZShapeKnown,
            thetas: vec![0.5],
            lambda_algs: vec![1e-2],
            lambda_pics: vec![1e-2],
            max_elements: 200_000,
            mode: GridMode::Product,
            diagnostics: false,
        };
        let mut axes = false;
        let mut base = (0.5, 1e-2, 1e-2);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::Parse { line: i + 1, message: m };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let list = || -> Result<Vec<f64>> {
                value
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|e| err(format!("{key}: {e}"))))
                    .collect()
            };
            match key {
                "name" => spec.name = value.parse().map_err(|_| err(format!("unknown benchmark {value}")))?,
                "theta" => spec.thetas = list()?,
                "lambda_alg" => spec.lambda_algs = list()?,
                "lambda_pic" => spec.lambda_pics = list()?,
                "max_elements" => {
                    spec.max_elements = value.parse().map_err(|e| err(format!("max_elements: {e}")))?
                }
                "mode" => match value {
                    "product" => axes = false,
                    "axes" => axes = true,
                    _ => return Err(err(format!("unknown mode {value}"))),
                },
                "base" => match list()?[..] {
                    [t, a, p] => base = (t, a, p),
                    _ => return Err(err("base needs theta, lambda_alg, lambda_pic".into())),
                },
                "diagnostics" => {
                    spec.diagnostics = value.parse().map_err(|e| err(format!("diagnostics: {e}")))?
                }
                _ => return Err(err(format!("unknown key {key}"))),
            }
        }
        if axes {
            spec.mode = GridMode::Axes { base };
        }
        for cfg in spec.configs() {
            cfg.validate()?;
        }
        Ok(spec)
    }

    /// One configuration per run; `theta = 1` means uniform refinement.
    pub fn configs(&self) -> Vec<AdaptiveConfig> {
        let mut triples = Vec::new();
        match self.mode {
            GridMode::Product => {
                for &t in &self.thetas {
                    for &a in &self.lambda_algs {
                        for &p in &self.lambda_pics {
                            triples.push((t, a, p));
                        }
                    }
                }
            }
            GridMode::Axes { base: (t0, a0, p0) } => {
                triples.push((t0, a0, p0));
                triples.extend(self.thetas.iter().map(|&t| (t, a0, p0)));
                triples.extend(self.lambda_algs.iter().map(|&a| (t0, a, p0)));
                triples.extend(self.lambda_pics.iter().map(|&p| (t0, a0, p)));
            }
        }
        let mut seen: Vec<(u64, u64, u64)> = Vec::new();
        triples.retain(|&(t, a, p)| {
            let key = (t.to_bits(), a.to_bits(), p.to_bits());
            !seen.contains(&key) && {
                seen.push(key);
                true
            }
        });
        triples
            .into_iter()
            .map(|(theta, lambda_alg, lambda_pic)| AdaptiveConfig {
                theta,
                lambda_alg,
                lambda_pic,
                uniform: theta == 1.0,
                max_elements: self.max_elements,
                diagnostics: self.diagnostics,
                ..Default::default()
            })
            .collect()
    }
}

/// File stem identifying a run, e.g. `zshape_t5e-1_a1e-2_p1e-2`.
pub fn run_name(domain: Domain, cfg: &AdaptiveConfig) -> String {
    let mut s = format!("{domain}_t{:e}_a{:e}_p{:e}", cfg.theta, cfg.lambda_alg, cfg.lambda_pic);
    if cfg.uniform {
        s.push_str("_uniform");
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub config: AdaptiveConfig,
    pub levels: usize,
    pub final_n: usize,
    pub final_eta: f64,
    pub slope_n: Option<f64>,
    pub slope_cost: Option<f64>,
    pub pcg_max: usize,
    pub pcg_median: f64,
}

impl RunSummary {
    pub fn new(name: &str, curves: &RunCurves, config: &AdaptiveConfig) -> Self {
        Self {
            name: name.into(),
            config: config.clone(),
            levels: curves.n.len(),
            final_n: curves.n.last().copied().unwrap_or(0.0) as usize,
            final_eta: curves.eta.last().copied().unwrap_or(f64::NAN),
            slope_n: curves.slope_n().ok(),
            slope_cost: curves.slope_cost().ok(),
            pcg_max: curves.pcg_max(),
            pcg_median: curves.pcg_median(),
        }
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

pub fn write_meta(path: &Path, domain: Domain, cfg: &AdaptiveConfig) -> Result<()> {
    let text = format!(
        "domain={domain}\ntheta={}\nlambda_alg={}\nlambda_pic={}\nuniform={}\nmax_elements={}\ndiagnostics={}\n",
        cfg.theta, cfg.lambda_alg, cfg.lambda_pic, cfg.uniform, cfg.max_elements, cfg.diagnostics
    );
    fs::write(path, text)?;
    Ok(())
}

fn read_meta(path: &Path) -> Result<(Domain, bool)> {
    let text = fs::read_to_string(path)?;
    let (mut domain, mut uniform) = (None, false);
    for (i, line) in text.lines().enumerate() {
        match line.split_once('=') {
            Some(("domain", v)) => domain = Some(v.parse::<Domain>()?),
            Some(("uniform", v)) => {
                uniform = v.parse().map_err(|_| Error::Parse { line: i + 1, message: format!("uniform={v}") })?
            }
            _ => {}
        }
    }
    Ok((domain.ok_or(Error::Parse { line: 0, message: "meta file without domain".into() })?, uniform))
}

/// Runs one configuration and writes `<name>.csv` and `<name>.meta` to `out`.
pub fn run_and_write(problem: &Problem, cfg: &AdaptiveConfig, out: &Path) -> Result<(RunLog, RunCurves)> {
    fs::create_dir_all(out)?;
    let log = run_adaptive(problem, cfg)?;
    let name = run_name(problem.domain, cfg);
    let file = fs::File::create(out.join(format!("{name}.csv")))?;
    log.write_csv(std::io::BufWriter::new(file))?;
    write_meta(&out.join(format!("{name}.meta")), problem.domain, cfg)?;
    let curves = RunCurves::from_log(&name, problem.domain, &log);
    Ok((log, curves))
}

pub fn write_summary(path: &Path, runs: &[RunSummary]) -> Result<()> {
    let mut s = String::from(
        "run,theta,lambda_alg,lambda_pic,uniform,levels,final_nT,final_eta,slope_N,slope_cost,pcg_max,pcg_median\n",
    );
    for r in runs {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{:.11e},{},{},{},{}\n",
            r.name,
            r.config.theta,
            r.config.lambda_alg,
            r.config.lambda_pic,
            u8::from(r.config.uniform),
            r.levels,
            r.final_n,
            r.final_eta,
            fmt_opt(r.slope_n),
            fmt_opt(r.slope_cost),
            r.pcg_max,
            r.pcg_median
        ));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Runs every configuration of `spec` (in parallel) and writes the run
/// files, `summary.csv` and the plot data to `out`.
pub fn run_benchmark(spec: &BenchmarkSpec, out: &Path) -> Result<Vec<RunSummary>> {
    let problem = problem_for(spec.name.domain())?;
    let configs = spec.configs();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(configs.len()).max(1);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<(RunSummary, RunCurves)>>>> =
        Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = configs.get(i) else { break };
                let r = run_and_write(&problem, cfg, out).map(|(_, curves)| {
                    let name = curves.name.clone();
                    (RunSummary::new(&name, &curves, cfg), curves)
                });
                results.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    let mut summaries = Vec::new();
    let mut curves = Vec::new();
    for r in results.into_inner().expect("worker panicked") {
        let (s, c) = r.expect("every run was scheduled")?;
        summaries.push(s);
        curves.push(c);
    }
    write_summary(&out.join("summary.csv"), &summaries)?;
    emit_plotdata(&curves, out)?;
    Ok(summaries)
}

/// Writes `eta_vs_n.csv`, `eta_vs_cost.csv` and `pcg_vs_n.csv` with one block
/// of rows per run and a reference-slope column anchored at the first level.
pub fn emit_plotdata(runs: &[RunCurves], out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut eta_n = String::from("run,N,eta,reference\n");
    let mut eta_cost = String::from("run,cumcost,eta,reference\n");
    let mut pcg_n = String::from("run,N,pcg\n");
    for r in runs {
        let rate = expected_rate(r.domain, r.uniform);
        for i in 0..r.n.len() {
            let ref_n = r.eta[0] * (r.n[i] / r.n[0]).powf(rate);
            let ref_c = r.eta[0] * (r.cost[i] / r.cost[0]).powf(rate);
            eta_n.push_str(&format!("{},{},{:.11e},{:.11e}\n", r.name, r.n[i], r.eta[i], ref_n));
            eta_cost.push_str(&format!("{},{},{:.11e},{:.11e}\n", r.name, r.cost[i], r.eta[i], ref_c));
            pcg_n.push_str(&format!("{},{},{}\n", r.name, r.n[i], r.pcg[i]));
        }
    }
    let files = [("eta_vs_n.csv", eta_n), ("eta_vs_cost.csv", eta_cost), ("pcg_vs_n.csv", pcg_n)];
    let mut paths = Vec::new();
    for (name, content) in files {
        let p = out.join(name);
        fs::write(&p, content)?;
        paths.push(p);
    }
    Ok(paths)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub run: String,
    pub expected: f64,
    pub slope_n: Option<f64>,
    pub slope_cost: Option<f64>,
    pub pcg_max: usize,
    pub pcg_median: f64,
}

impl RateRow {
    pub fn passes(&self, tol_n: f64, tol_cost: f64) -> bool {
        let ok = |s: Option<f64>, tol: f64| s.is_some_and(|s| (s - self.expected).abs() <= tol);
        ok(self.slope_n, tol_n) && ok(self.slope_cost, tol_cost)
    }
}

/// Fitted rates of every run in `dir` that has a `.meta` sidecar, sorted by name.
pub fn rates(dir: &Path) -> Result<Vec<RateRow>> {
    let mut rows = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "meta"))
        .collect();
    entries.sort();
    for meta in entries {
        let csv_path = meta.with_extension("csv");
        let (domain, uniform) = read_meta(&meta)?;
        let name = meta.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let curves = RunCurves::from_csv(&name, domain, uniform, &fs::read_to_string(&csv_path)?)?;
        rows.push(RateRow {
            run: name,
            expected: expected_rate(domain, uniform),
            slope_n: curves.slope_n().ok(),
            slope_cost: curves.slope_cost().ok(),
            pcg_max: curves.pcg_max(),
            pcg_median: curves.pcg_median(),
        });
    }
    Ok(rows)
}
