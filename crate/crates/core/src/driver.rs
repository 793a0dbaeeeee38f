//! The adaptive triple loop: mesh refinement around damped Picard
//! linearization around single PCG steps, with the stopping rules
//!
//! * algebraic: `|||u^{k,j} - u^{k,j-1}||| <= λ_alg (η(u^{k,j}) + |||u^{k,j} - u^{k-1,j̲}|||)`,
//! * linearization: `|||u^{k,j̲} - u^{k-1,j̲}||| <= λ_Pic η(u^{k,j̲})`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::algsolver::{DirectSolver, IdentityPreconditioner, MultilevelPreconditioner, Preconditioner, SolverState};
use crate::error::{Error, Result};
use crate::estimator::{doerfler_mark, Estimator};
use crate::fem::{FeFunction, FeSpace, SparseOperator};
use crate::mesh::{Domain, Mesh, Point};
use crate::nonlinearity::Nonlinearity;

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type BoundaryField = Arc<dyn Fn(Point, Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// Domain, nonlinearity and data `f`, `g` of a boundary value problem,
/// optionally with the gradient of its exact solution.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub domain: Domain,
    pub nonlinearity: Nonlinearity,
    pub f: ScalarField,
    /// Neumann data as a function of the point and the outward normal.
    pub g: BoundaryField,
    pub exact_gradient: Option<VectorField>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("nonlinearity", &self.nonlinearity)
            .field("exact", &self.exact_gradient.is_some())
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreconditionerKind {
    Multilevel,
    Identity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveConfig {
    pub theta: f64,
    pub lambda_alg: f64,
    pub lambda_pic: f64,
    /// Stop after solving on the first mesh with at least this many triangles.
    pub max_elements: usize,
    /// Stop once the final estimator on a mesh is at most this.
    pub eta_tol: f64,
    /// Hard cap on the number of refinement steps, mainly for tests.
    pub max_levels: usize,
    pub diagnostics: bool,
    /// In diagnostic mode, also compute the exact discrete solution `u_ℓ^⋆`.
    pub discrete_oracle: bool,
    /// Mark every triangle instead of Dörfler marking.
    pub uniform: bool,
    /// Abort when an inner loop needs more steps than this.
    pub max_pcg_steps: usize,
    pub max_picard_steps: usize,
    pub preconditioner: PreconditionerKind,
    pub neumann_term: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            lambda_alg: 1e-2,
            lambda_pic: 1e-2,
            max_elements: 1_000_000,
            eta_tol: 0.0,
            max_levels: usize::MAX,
            diagnostics: false,
            discrete_oracle: true,
            uniform: false,
            max_pcg_steps: 10_000,
            max_picard_steps: 10_000,
            preconditioner: PreconditionerKind::Multilevel,
            neumann_term: true,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta = {} outside (0, 1]", self.theta));
        }
        if !(self.lambda_alg > 0.0 && self.lambda_alg < 1.0) {
            return bad(format!("lambda_alg = {} outside (0, 1)", self.lambda_alg));
        }
        if !(self.lambda_pic > 0.0) {
            return bad(format!("lambda_pic = {} must be positive", self.lambda_pic));
        }
        if self.max_pcg_steps == 0 || self.max_picard_steps == 0 {
            return bad("step caps must be positive".into());
        }
        if !(self.eta_tol >= 0.0) {
            return bad(format!("eta_tol = {} must be nonnegative", self.eta_tol));
        }
        Ok(())
    }
}

/// One executed index `(ℓ, k, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub l: usize,
    pub k: usize,
    pub j: usize,
    /// Position in the executed index sequence, starting at 0.
    pub step: usize,
    pub n_triangles: usize,
    pub eta: f64,
    /// `|||u^{k,j} - u^{k,j-1}|||`; zero for `j = 0`.
    pub alg_inc: f64,
    /// `|||u^{k,j} - u^{k-1,j̲}|||`; zero for `j = 0`.
    pub pic_inc: f64,
    pub cumulative_cost: u64,
    pub alg_stop: bool,
    pub pic_stop: bool,
    /// `|||u⋆ - u^{k,j}|||`, or its surrogate without a known solution.
    pub err: Option<f64>,
    /// `|||u^{k,⋆} - u^{k,j}|||`.
    pub alg_err: Option<f64>,
    /// `|||u_ℓ^⋆ - u^{k,j}|||` with the exact discrete solution `u_ℓ^⋆`.
    pub disc_err: Option<f64>,
    pub delta: Option<f64>,
}

/// Per-mesh summary at the final iterate `u_ℓ^{k̲,j̲}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSummary {
    pub l: usize,
    pub n_triangles: usize,
    pub n_dofs: usize,
    pub picard_steps: usize,
    /// `Σ_k j̲(ℓ, k)`.
    pub pcg_steps: usize,
    pub eta: f64,
    pub cumulative_cost: u64,
    /// `|||u⋆ - u_ℓ^{k̲,j̲}|||` when the exact solution is known.
    pub energy_error: Option<f64>,
    /// `η_ℓ(u_ℓ^⋆)` in diagnostic mode.
    pub eta_discrete: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunLog {
    pub config: AdaptiveConfig,
    pub problem: String,
    pub records: Vec<StepRecord>,
    pub levels: Vec<LevelSummary>,
    /// `err` is a reliable upper-bound surrogate instead of the true error.
    pub err_is_surrogate: bool,
    pub final_mesh: Mesh,
    pub final_solution: FeFunction,
}

/// Right-hand side of the Picard step
/// `<u^{k,⋆}, v> = <u_prev, v> - (α/L²) <A u_prev - F, v>` as a dual vector.
pub fn picard_rhs(
    space: &FeSpace,
    laplacian: &SparseOperator,
    nl: &Nonlinearity,
    u_prev: &FeFunction,
    load: &[f64],
) -> Result<Vec<f64>> {
    let damping = nl.alpha() / (nl.lipschitz() * nl.lipschitz());
    let au = space.apply_nonlinear(nl, u_prev)?;
    let lu = laplacian.matvec(&u_prev.coefficients);
    Ok(lu.iter().zip(&au).zip(load).map(|((l, a), f)| l - damping * (a - f)).collect())
}

pub fn algebraic_stop(increment: f64, eta: f64, lin_increment: f64, lambda_alg: f64) -> bool {
    increment <= lambda_alg * (eta + lin_increment)
}

pub fn picard_stop(lin_increment: f64, eta: f64, lambda_pic: f64) -> bool {
    lin_increment <= lambda_pic * eta
}

/// The three parts of `Δ = |||u⋆ - u||| + |||u^{k,⋆} - u||| + η` and their sum.
pub fn quasi_error(err: Option<f64>, alg_err: Option<f64>, eta: f64) -> Result<(f64, f64, f64, f64)> {
    let err = err.ok_or(Error::OracleUnavailable("energy error"))?;
    let alg = alg_err.ok_or(Error::OracleUnavailable("exact Picard step"))?;
    Ok((err, alg, eta, err + alg + eta))
}

/// Exact discrete solution `u_ℓ^⋆` by Picard iteration with direct solves.
pub fn solve_discrete_exact(
    space: &FeSpace,
    laplacian: &SparseOperator,
    direct: &DirectSolver,
    nl: &Nonlinearity,
    load: &[f64],
    initial: &FeFunction,
) -> Result<FeFunction> {
    let mut u = initial.clone();
    for _ in 0..10_000 {
        let rhs = picard_rhs(space, laplacian, nl, &u, load)?;
        let next = FeFunction::from_vec(direct.solve(&rhs));
        let inc = space.energy_norm(laplacian, &next.sub(&u));
        let size = space.energy_norm(laplacian, &next);
        u = next;
        if inc <= 1e-12 * size || inc == 0.0 {
            return Ok(u);
        }
    }
    Err(Error::SolverCap(10_000))
}

struct LevelData {
    space: FeSpace,
    laplacian: SparseOperator,
    load: Vec<f64>,
    estimator: Estimator,
    direct: Option<DirectSolver>,
    discrete: Option<FeFunction>,
}

impl LevelData {
    fn new(mesh: Mesh, problem: &Problem, config: &AdaptiveConfig, u0: &FeFunction) -> Result<Self> {
        let space = FeSpace::new(mesh)?;
        let laplacian = space.assemble_laplacian();
        let (f, g) = (problem.f.clone(), problem.g.clone());
        let load = space.assemble_rhs(|x| f(x), |x, n| g(x, n));
        let mut estimator = Estimator::new(&space, |x| f(x), |x, n| g(x, n));
        estimator.include_neumann = config.neumann_term;
        let (direct, discrete) = if config.diagnostics {
            let d = DirectSolver::new(&laplacian)?;
            let u = if config.discrete_oracle {
                Some(solve_discrete_exact(&space, &laplacian, &d, &problem.nonlinearity, &load, u0)?)
            } else {
                None
            };
            (Some(d), u)
        } else {
            (None, None)
        };
        Ok(Self { space, laplacian, load, estimator, direct, discrete })
    }
}

enum Precond {
    Multilevel(MultilevelPreconditioner),
    Identity,
}

impl Precond {
    fn get(&self) -> &dyn Preconditioner {
        match self {
            Precond::Multilevel(p) => p,
            Precond::Identity => &IdentityPreconditioner,
        }
    }
}

struct Recorder<'a> {
    problem: &'a Problem,
    records: Vec<StepRecord>,
    cost: u64,
    surrogate_eta_discrete: Option<f64>,
}

impl Recorder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        lvl: &LevelData,
        (l, k, j): (usize, usize, usize),
        u: &FeFunction,
        eta: f64,
        alg_inc: f64,
        pic_inc: f64,
        stops: (bool, bool),
        exact_step: Option<&FeFunction>,
    ) -> Result<()> {
        let nt = lvl.space.mesh().n_triangles();
        self.cost += nt as u64;
        let mut rec = StepRecord {
            l,
            k,
            j,
            step: self.records.len(),
            n_triangles: nt,
            eta,
            alg_inc,
            pic_inc,
            cumulative_cost: self.cost,
            alg_stop: stops.0,
            pic_stop: stops.1,
            err: None,
            alg_err: None,
            disc_err: None,
            delta: None,
        };
        if lvl.direct.is_some() {
            rec.disc_err = lvl.discrete.as_ref().map(|ud| lvl.space.energy_norm(&lvl.laplacian, &ud.sub(u)));
            rec.alg_err = Some(exact_step.map_or(0.0, |s| lvl.space.energy_norm(&lvl.laplacian, &s.sub(u))));
            rec.err = match &self.problem.exact_gradient {
                Some(grad) => Some(lvl.space.energy_error_vs_exact(u, |x| grad(x))?),
                None => rec.disc_err.zip(self.surrogate_eta_discrete).map(|(d, e)| d + e),
            };
            rec.delta = rec.err.map(|e| e + rec.alg_err.unwrap_or(0.0) + eta);
        }
        self.records.push(rec);
        Ok(())
    }
}

/// Runs the adaptive algorithm from `u_0^{0,0} = 0` on the initial mesh of
/// the problem's domain.
pub fn run_adaptive(problem: &Problem, config: &AdaptiveConfig) -> Result<RunLog> {
    config.validate()?;
    let nl = problem.nonlinearity;
    let mesh0 = Mesh::create_initial(problem.domain);
    let n0 = crate::fem::DofMap::new(&mesh0).n_dofs();
    let mut u = FeFunction::zeros(n0);
    let mut lvl = LevelData::new(mesh0, problem, config, &u)?;
    let mut precond = match config.preconditioner {
        PreconditionerKind::Multilevel => Precond::Multilevel(MultilevelPreconditioner::new(&lvl.space)?),
        PreconditionerKind::Identity => Precond::Identity,
    };
    let mut rec = Recorder { problem, records: Vec::new(), cost: 0, surrogate_eta_discrete: None };
    let mut levels = Vec::new();

    for l in 0.. {
        rec.surrogate_eta_discrete = match &lvl.discrete {
            Some(ud) if problem.exact_gradient.is_none() => Some(lvl.estimator.indicators(&lvl.space, &nl, ud)?.total()),
            _ => None,
        };
        let mut eta = lvl.estimator.indicators(&lvl.space, &nl, &u)?.total();
        rec.push(&lvl, (l, 0, 0), &u, eta, 0.0, 0.0, (false, false), None)?;
        let mut pcg_steps = 0;
        let mut k = 0;
        // linearization loop
        loop {
            k += 1;
            if k > config.max_picard_steps {
                return Err(Error::SolverCap(config.max_picard_steps));
            }
            let rhs = picard_rhs(&lvl.space, &lvl.laplacian, &nl, &u, &lvl.load)?;
            let exact_step = lvl.direct.as_ref().map(|d| FeFunction::from_vec(d.solve(&rhs)));
            rec.push(&lvl, (l, k, 0), &u, eta, 0.0, 0.0, (false, false), exact_step.as_ref())?;
            let pc = precond.get();
            let mut state = SolverState::new(&lvl.laplacian, rhs, u.clone(), pc)?;
            let pic_done = loop {
                state.step(&lvl.laplacian, pc);
                let j = state.iteration_count;
                eta = lvl.estimator.indicators(&lvl.space, &nl, &state.iterate)?.total();
                let lin = lvl.space.energy_norm(&lvl.laplacian, &state.iterate.sub(&u));
                let alg_done = algebraic_stop(state.last_increment, eta, lin, config.lambda_alg);
                let pic_done = alg_done && picard_stop(lin, eta, config.lambda_pic);
                rec.push(
                    &lvl,
                    (l, k, j),
                    &state.iterate,
                    eta,
                    state.last_increment,
                    lin,
                    (alg_done, pic_done),
                    exact_step.as_ref(),
                )?;
                if alg_done {
                    pcg_steps += j;
                    break pic_done;
                }
                if j >= config.max_pcg_steps {
                    return Err(Error::SolverCap(config.max_pcg_steps));
                }
            };
            u = state.iterate;
            if pic_done {
                break;
            }
        }

        let mesh = lvl.space.mesh();
        let energy_error = match &problem.exact_gradient {
            Some(g) => Some(lvl.space.energy_error_vs_exact(&u, |x| g(x))?),
            None => None,
        };
        let eta_discrete = match &lvl.discrete {
            Some(ud) => Some(lvl.estimator.indicators(&lvl.space, &nl, ud)?.total()),
            None => None,
        };
        levels.push(LevelSummary {
            l,
            n_triangles: mesh.n_triangles(),
            n_dofs: lvl.space.n_dofs(),
            picard_steps: k,
            pcg_steps,
            eta,
            cumulative_cost: rec.cost,
            energy_error,
            eta_discrete,
        });

        if eta == 0.0
            || eta <= config.eta_tol
            || mesh.n_triangles() >= config.max_elements
            || l >= config.max_levels
        {
            break;
        }
        let field = lvl.estimator.indicators(&lvl.space, &nl, &u)?;
        let marked = if config.uniform {
            (0..mesh.n_triangles()).collect()
        } else {
            doerfler_mark(&field, config.theta)?
        };
        let fine = mesh.refine(&marked)?;
        let fine_space = FeSpace::new(fine.clone())?;
        let u_fine = fine_space.prolongate(&lvl.space, &u)?;
        let next = LevelData::new(fine, problem, config, &u_fine)?;
        if let Precond::Multilevel(p) = &mut precond {
            p.push_level(&next.space, &next.laplacian)?;
        }
        lvl = next;
        u = u_fine;
    }

    Ok(RunLog {
        config: config.clone(),
        problem: problem.name.clone(),
        records: rec.records,
        levels,
        err_is_surrogate: problem.exact_gradient.is_none(),
        final_mesh: lvl.space.mesh().clone(),
        final_solution: u,
    })
}

fn fmt_float(x: f64) -> String {
    format!("{x:.11e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

impl RunLog {
    pub fn has_diagnostics(&self) -> bool {
        self.records.first().is_some_and(|r| r.alg_err.is_some())
    }

    /// One row per executed step; oracle columns only in diagnostic runs.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let diag = self.has_diagnostics();
        write!(w, "l,k,j,step,nT,eta,alg_inc,pic_inc,cumcost,alg_stop,pic_stop")?;
        if diag {
            write!(w, ",err,delta,alg_err")?;
        }
        writeln!(w)?;
        for r in &self.records {
            write!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.l,
                r.k,
                r.j,
                r.step,
                r.n_triangles,
                fmt_float(r.eta),
                fmt_float(r.alg_inc),
                fmt_float(r.pic_inc),
                r.cumulative_cost,
                u8::from(r.alg_stop),
                u8::from(r.pic_stop)
            )?;
            if diag {
                write!(w, ",{},{},{}", fmt_opt(r.err), fmt_opt(r.delta), fmt_opt(r.alg_err))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Final step of every inner loop, i.e. the records with `j = j̲(ℓ, k)`.
    pub fn algebraic_stops(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(|r| r.alg_stop)
    }

    /// Largest observed `|||u^{k,⋆} - u^{k,j}||| / |||u^{k,⋆} - u^{k,j-1}|||`.
    pub fn measured_q_alg(&self) -> Option<f64> {
        let mut q: Option<f64> = None;
        for w in self.records.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.j == 0 || (a.l, a.k) != (b.l, b.k) {
                continue;
            }
            let (ea, eb) = (a.alg_err?, b.alg_err?);
            // below round-off the ratio carries no information
            if ea > 1e-10 * b.eta.max(1e-300) {
                q = Some(q.map_or(eb / ea, |q: f64| q.max(eb / ea)));
            }
        }
        q
    }

    /// Largest observed `|||u_ℓ^⋆ - u^{k,j̲}||| / |||u_ℓ^⋆ - u^{k-1,j̲}|||` for `k < k̲`.
    pub fn measured_q_picard(&self) -> Option<f64> {
        let mut q: Option<f64> = None;
        let mut prev: Option<(usize, f64)> = None;
        for r in &self.records {
            if r.j == 0 && r.k == 0 {
                prev = Some((r.l, r.disc_err?));
                continue;
            }
            if !r.alg_stop {
                continue;
            }
            let d = r.disc_err?;
            if let Some((l, dp)) = prev {
                if l == r.l && !r.pic_stop && dp > 0.0 {
                    q = Some(q.map_or(d / dp, |q: f64| q.max(d / dp)));
                }
            }
            prev = Some((r.l, d));
        }
        q
    }
}

/// Checks the bookkeeping of a run: step numbering, cost prefix sums, and
/// that each stopping rule holds first at the recorded stopping index.
pub fn audit_run(log: &RunLog) -> std::result::Result<(), String> {
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Fresh,
        LevelOpen(usize),
        Inner { l: usize, k: usize, j: usize },
        Closed { l: usize, k: usize, pic: bool },
    }
    let cfg = &log.config;
    let mut cost = 0u64;
    let mut state = State::Fresh;
    for (i, r) in log.records.iter().enumerate() {
        if r.step != i {
            return Err(format!("record {i} has step {}", r.step));
        }
        cost += r.n_triangles as u64;
        if r.cumulative_cost != cost {
            return Err(format!("record {i}: cumulative cost {} != {cost}", r.cumulative_cost));
        }
        let here = (r.l, r.k, r.j);
        state = match (state, r.k, r.j) {
            (State::Fresh, 0, 0) if r.l == 0 => State::LevelOpen(0),
            (State::Closed { l, pic: true, .. }, 0, 0) if r.l == l + 1 => State::LevelOpen(r.l),
            (State::LevelOpen(l), 1, 0) if r.l == l => State::Inner { l, k: 1, j: 0 },
            (State::Closed { l, k, pic: false }, _, 0) if r.l == l && r.k == k + 1 => State::Inner { l, k: r.k, j: 0 },
            (State::Inner { l, k, j }, _, _) if (r.l, r.k, r.j) == (l, k, j + 1) => {
                let alg = algebraic_stop(r.alg_inc, r.eta, r.pic_inc, cfg.lambda_alg);
                if alg != r.alg_stop {
                    return Err(format!("record {i}: algebraic stop flag {} but rule gives {alg}", r.alg_stop));
                }
                let pic = alg && picard_stop(r.pic_inc, r.eta, cfg.lambda_pic);
                if pic != r.pic_stop {
                    return Err(format!("record {i}: linearization stop flag {} but rule gives {pic}", r.pic_stop));
                }
                if alg {
                    State::Closed { l, k, pic }
                } else {
                    State::Inner { l, k, j: r.j }
                }
            }
            _ => return Err(format!("record {i}: index {here:?} out of order")),
        };
        if r.j == 0 && (r.alg_stop || r.pic_stop) {
            return Err(format!("record {i}: stop flag at j = 0"));
        }
    }
    if !matches!(state, State::Closed { pic: true, .. }) {
        return Err("run did not end at a linearization stop".into());
    }
    for lv in &log.levels {
        if lv.picard_steps == 0 || lv.pcg_steps < lv.picard_steps {
            return Err(format!("level {}: k = {}, total PCG steps = {}", lv.l, lv.picard_steps, lv.pcg_steps));
        }
    }
    Ok(())
}
