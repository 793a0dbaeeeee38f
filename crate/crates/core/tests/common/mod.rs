//! Oracle checks shared by the integration tests and the acceptance runner.
//! Each check returns a short report of the measured quantity or the reason
//! it failed.
#![allow(dead_code)]

use afem::algsolver::{solve_exact, DirectSolver};
use afem::driver::{picard_rhs, solve_discrete_exact, Problem};
use afem::estimator::{doerfler_mark, Estimator, IndicatorField};
use afem::experiments::{lshape_unknown, zshape_known};
use afem::fem::{dot, FeFunction, FeSpace, SparseOperator};
use afem::{Domain, Mesh, MeshHierarchy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Nested meshes obtained by marking a random quarter of the triangles
/// on each level, stopping before `max_triangles` is exceeded.
pub fn random_hierarchy(domain: Domain, levels: usize, max_triangles: usize, seed: u64) -> (MeshHierarchy, Vec<Vec<usize>>) {
    let mut r = rng(seed);
    let mut h = MeshHierarchy::new(Mesh::create_initial(domain));
    let mut markings = Vec::new();
    for _ in 0..levels {
        let n = h.finest().n_triangles();
        let marked: Vec<usize> = (0..n).filter(|_| r.gen_bool(0.25)).collect();
        let fine = h.finest().refine(&marked).expect("valid marking");
        if fine.n_triangles() > max_triangles {
            break;
        }
        h.push(fine).expect("direct refinement");
        markings.push(marked);
    }
    (h, markings)
}

pub fn random_function(n: usize, r: &mut ChaCha8Rng, scale: f64) -> FeFunction {
    FeFunction::from_vec((0..n).map(|_| scale * r.gen_range(-1.0..1.0)).collect())
}

/// Dual norm `sup <r, v> / |||v|||` of a dual vector.
pub fn dual_norm(direct: &DirectSolver, r: &[f64]) -> f64 {
    dot(r, &direct.solve(r)).max(0.0).sqrt()
}

pub struct Discrete {
    pub space: FeSpace,
    pub laplacian: SparseOperator,
    pub direct: DirectSolver,
    pub load: Vec<f64>,
    pub solution: FeFunction,
}

pub fn discrete(problem: &Problem, mesh: Mesh) -> Discrete {
    let space = FeSpace::new(mesh).unwrap();
    let laplacian = space.assemble_laplacian();
    let direct = DirectSolver::new(&laplacian).unwrap();
    let (f, g) = (problem.f.clone(), problem.g.clone());
    let load = space.assemble_rhs(|x| f(x), |x, n| g(x, n));
    let zero = FeFunction::zeros(space.n_dofs());
    let solution = solve_discrete_exact(&space, &laplacian, &direct, &problem.nonlinearity, &load, &zero).unwrap();
    Discrete { space, laplacian, direct, load, solution }
}

fn problems() -> [Problem; 2] {
    [zshape_known(), lshape_unknown()]
}

/// `|||u⋆ - Φ(w)||| <= q_Pic |||u⋆ - w||| + 1e-9` for the exact Picard map.
pub fn check_picard_contraction() -> Check {
    let mut worst: f64 = 0.0;
    for (pi, problem) in problems().iter().enumerate() {
        let nl = problem.nonlinearity;
        let q = nl.constants().q_pic;
        let (h, _) = random_hierarchy(problem.domain, 24, 9_000, 11 + pi as u64);
        let mut r = rng(5 + pi as u64);
        for mesh in h.levels().iter().step_by(3) {
            let d = discrete(problem, mesh.clone());
            if d.space.n_dofs() > 5000 {
                return Err(format!("mesh with {} dofs", d.space.n_dofs()));
            }
            for _ in 0..8 {
                let scale = 10f64.powf(r.gen_range(-3.0..1.0));
                let w = FeFunction::from_vec(
                    d.solution.coefficients.iter().map(|c| c + scale * r.gen_range(-1.0..1.0)).collect(),
                );
                let rhs = picard_rhs(&d.space, &d.laplacian, &nl, &w, &d.load).unwrap();
                let phi = FeFunction::from_vec(d.direct.solve(&rhs));
                let after = d.space.energy_norm(&d.laplacian, &d.solution.sub(&phi));
                let before = d.space.energy_norm(&d.laplacian, &d.solution.sub(&w));
                if after > q * before + 1e-9 {
                    return Err(format!("{}: {after:e} > q_Pic * {before:e}", problem.name));
                }
                worst = worst.max(after / before);
            }
        }
    }
    Ok(format!("max contraction ratio {worst:.4} (q_Pic = 0.7454 / 0.7834)"))
}

/// Strong monotonicity and Lipschitz continuity of the discrete operator on
/// random pairs, plus the pointwise bounds of `mu + 2t mu'`.
pub fn check_monotone_lipschitz() -> Check {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (pi, problem) in problems().iter().enumerate() {
        let nl = problem.nonlinearity;
        let report = nl.check_monotonicity_bounds(20_000);
        if !report.within_bounds {
            return Err(format!("{}: mu + 2t mu' in [{}, {}]", problem.name, report.min, report.max));
        }
        let (h, _) = random_hierarchy(problem.domain, 16, 4000, 21 + pi as u64);
        let mut r = rng(31 + pi as u64);
        for mesh in h.levels().iter().step_by(2) {
            let space = FeSpace::new(mesh.clone()).unwrap();
            let lap = space.assemble_laplacian();
            let direct = DirectSolver::new(&lap).unwrap();
            for _ in 0..10 {
                let scale = 10f64.powf(r.gen_range(-2.0..2.0));
                let w = random_function(space.n_dofs(), &mut r, scale);
                let v = random_function(space.n_dofs(), &mut r, scale);
                let aw = space.apply_nonlinear(&nl, &w).unwrap();
                let av = space.apply_nonlinear(&nl, &v).unwrap();
                let diff: Vec<f64> = aw.iter().zip(&av).map(|(a, b)| a - b).collect();
                let wv = w.sub(&v);
                let n2 = lap.quadratic_form(&wv.coefficients);
                let mono = dot(&diff, &wv.coefficients) / n2;
                let lip = dual_norm(&direct, &diff) / n2.sqrt();
                if mono < nl.alpha() * (1.0 - 1e-10) || lip > nl.lipschitz() * (1.0 + 1e-10) {
                    return Err(format!("{}: monotonicity {mono}, Lipschitz {lip}", problem.name));
                }
                lo = lo.min(mono / nl.alpha());
                hi = hi.max(lip / nl.lipschitz());
            }
        }
    }
    Ok(format!("min <Aw-Av,w-v>/(alpha|||w-v|||^2) = {lo:.4}, max |||Aw-Av|||*/(L|||w-v|||) = {hi:.4}"))
}

/// `α/2 |||v - u⋆|||² <= E(v) - E(u⋆) <= L/2 |||v - u⋆|||²` at discrete minimizers.
pub fn check_energy_bounds() -> Check {
    let mut range = (f64::INFINITY, 0.0f64);
    for (pi, problem) in problems().iter().enumerate() {
        let nl = problem.nonlinearity;
        let (h, _) = random_hierarchy(problem.domain, 18, 6000, 41 + pi as u64);
        let mut r = rng(51 + pi as u64);
        for mesh in h.levels().iter().step_by(3) {
            let d = discrete(problem, mesh.clone());
            let e0 = d.space.energy_functional(&nl, &d.solution, &d.load).unwrap();
            for _ in 0..10 {
                let scale = 10f64.powf(r.gen_range(-2.0..0.5));
                let v = FeFunction::from_vec(
                    d.solution.coefficients.iter().map(|c| c + scale * r.gen_range(-1.0..1.0)).collect(),
                );
                let gap = d.space.energy_functional(&nl, &v, &d.load).unwrap() - e0;
                let n2 = d.laplacian.quadratic_form(&v.sub(&d.solution).coefficients);
                let ratio = 2.0 * gap / n2;
                let slack = 1e-7;
                if ratio < nl.alpha() * (1.0 - slack) || ratio > nl.lipschitz() * (1.0 + slack) {
                    return Err(format!("{}: 2(E(v)-E(u))/|||v-u|||^2 = {ratio}", problem.name));
                }
                range = (range.0.min(ratio / nl.alpha()), range.1.max(ratio / nl.lipschitz()));
            }
        }
    }
    Ok(format!("2 gap / (alpha n^2) >= {:.4}, 2 gap / (L n^2) <= {:.4}", range.0, range.1))
}

fn estimator_for(problem: &Problem, space: &FeSpace) -> Estimator {
    let (f, g) = (problem.f.clone(), problem.g.clone());
    Estimator::new(space, |x| f(x), |x, n| g(x, n))
}

/// Measured stability constant over random nested pairs and the reduction
/// factor under uniform refinement.
pub fn check_stability_reduction() -> Check {
    let mut c_stab: f64 = 0.0;
    let mut q_red: f64 = 0.0;
    for (pi, problem) in problems().iter().enumerate() {
        let nl = problem.nonlinearity;
        let (h, _) = random_hierarchy(problem.domain, 18, 8000, 61 + pi as u64);
        let mut r = rng(71 + pi as u64);
        for pair in h.levels().windows(2) {
            let (coarse, fine) = (FeSpace::new(pair[0].clone()).unwrap(), FeSpace::new(pair[1].clone()).unwrap());
            let (ec, ef) = (estimator_for(problem, &coarse), estimator_for(problem, &fine));
            // unrefined triangles keep their index order among fine triangles
            let mut kids = vec![0usize; coarse.mesh().n_triangles()];
            for &p in fine.mesh().parent_of() {
                kids[p] += 1;
            }
            let mut common_coarse = Vec::new();
            let mut common_fine = Vec::new();
            for (t, &p) in fine.mesh().parent_of().iter().enumerate() {
                if kids[p] == 1 {
                    common_coarse.push(p);
                    common_fine.push(t);
                }
            }
            let lap = fine.assemble_laplacian();
            for _ in 0..4 {
                let vc = random_function(coarse.n_dofs(), &mut r, 1.0);
                let pv = fine.prolongate(&coarse, &vc).unwrap();
                let vf = FeFunction::from_vec(pv.coefficients.iter().map(|c| c + 0.1 * r.gen_range(-1.0..1.0)).collect());
                let etac = ec.indicators(&coarse, &nl, &vc).unwrap();
                let etaf = ef.indicators(&fine, &nl, &vf).unwrap();
                let dist = fine.energy_norm(&lap, &vf.sub(&pv));
                let jump = (etaf.total_over(&common_fine) - etac.total_over(&common_coarse)).abs();
                c_stab = c_stab.max(jump / dist);
            }
            // reduction of a fixed coarse function under one uniform bisection
            let uni = FeSpace::new(coarse.mesh().uniform_refine()).unwrap();
            let eu = estimator_for(problem, &uni);
            let vc = random_function(coarse.n_dofs(), &mut r, 1.0);
            let pv = uni.prolongate(&coarse, &vc).unwrap();
            let before = ec.indicators(&coarse, &nl, &vc).unwrap().total();
            let after = eu.indicators(&uni, &nl, &pv).unwrap().total();
            q_red = q_red.max(after / before);
        }
    }
    if !c_stab.is_finite() || !(q_red < 1.0) {
        return Err(format!("C_stab = {c_stab}, q_red = {q_red}"));
    }
    Ok(format!("measured C_stab = {c_stab:.3}, q_red = {q_red:.4}"))
}

/// Minimum cardinality of a subset carrying `θ²` of the mass, by enumeration.
pub fn brute_force_min_cardinality(sq: &[f64], theta: f64) -> usize {
    let total: f64 = sq.iter().sum();
    let goal = theta * theta * total;
    let n = sq.len();
    let mut best = n;
    for mask in 0u32..(1 << n) {
        let c = mask.count_ones() as usize;
        if c >= best {
            continue;
        }
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| sq[i]).sum();
        if s >= goal * (1.0 - 1e-14) {
            best = c;
        }
    }
    best
}

pub fn check_doerfler_minimality() -> Check {
    let mut r = rng(81);
    let mut cases = 0;
    for n in 1..=15usize {
        for _ in 0..6 {
            let sq: Vec<f64> = (0..n)
                .map(|_| if r.gen_bool(0.2) { r.gen_range(0..4) as f64 } else { r.gen_range(0.0..1.0) })
                .collect();
            if sq.iter().sum::<f64>() == 0.0 {
                continue;
            }
            let theta = r.gen_range(0.05..1.0);
            let f = IndicatorField::from_squared(sq.clone());
            let m = doerfler_mark(&f, theta).map_err(|e| e.to_string())?;
            if f.total_over(&m) < theta * f.total() * (1.0 - 1e-12) {
                return Err(format!("marking misses the bulk for {sq:?}"));
            }
            let best = brute_force_min_cardinality(&sq, theta);
            if m.len() != best {
                return Err(format!("greedy {} vs minimum {best} for {sq:?}, theta {theta}", m.len()));
            }
            cases += 1;
        }
    }
    for domain in [Domain::ZShape, Domain::LShape] {
        let problem = if domain == Domain::ZShape { zshape_known() } else { lshape_unknown() };
        let space = FeSpace::new(Mesh::create_initial(domain).uniform_refine()).unwrap();
        let est = estimator_for(&problem, &space);
        let field = est.indicators(&space, &problem.nonlinearity, &FeFunction::zeros(space.n_dofs())).unwrap();
        for theta in [0.3, 0.5, 0.8] {
            let m = doerfler_mark(&field, theta).map_err(|e| e.to_string())?;
            if m.len() != brute_force_min_cardinality(field.squared(), theta) {
                return Err(format!("{domain}: not minimal"));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} instances minimal"))
}

/// R1 with `C_son = 4`, R2 on small overlays, R3 closure ratio, and shape regularity.
pub fn check_mesh_axioms() -> Check {
    let mut closure: f64 = 0.0;
    let mut overlays = 0;
    for (di, domain) in [Domain::ZShape, Domain::LShape, Domain::UnitSquare].into_iter().enumerate() {
        let min_angle0 = Mesh::create_initial(domain).min_angle();
        for seed in 0..4u64 {
            let (h, markings) = random_hierarchy(domain, 14, 20_000, 100 * di as u64 + seed);
            for (pair, marked) in h.levels().windows(2).zip(&markings) {
                let (coarse, fine) = (&pair[0], &pair[1]);
                fine.validate().map_err(|e| e.to_string())?;
                let refined = coarse.refined_count(fine);
                let kept = coarse.n_triangles() - refined;
                if !(refined + coarse.n_triangles() <= fine.n_triangles() && fine.n_triangles() <= 4 * refined + kept) {
                    return Err(format!("R1 violated: {} -> {}", coarse.n_triangles(), fine.n_triangles()));
                }
                let mut kids = vec![0usize; coarse.n_triangles()];
                for &p in fine.parent_of() {
                    kids[p] += 1;
                }
                if marked.iter().any(|&t| kids[t] < 2) {
                    return Err("a marked triangle was not refined".into());
                }
                if fine.min_angle() < min_angle0 - 1e-12 {
                    return Err(format!("{domain}: angle {} below initial {}", fine.min_angle(), min_angle0));
                }
            }
            if !markings.is_empty() {
                closure = closure.max(h.closure_cost(&markings).map_err(|e| e.to_string())?);
            }
            // R2 on two small independent refinements of a common coarse mesh
            let root = h.levels()[h.len().min(3) - 1].clone();
            let (ha, _) = refine_from(&root, 3, seed * 7 + 1);
            let (hb, _) = refine_from(&root, 3, seed * 7 + 2);
            let (a, b) = (ha.last().unwrap(), hb.last().unwrap());
            if a.n_triangles() + b.n_triangles() < 600 {
                let o = Mesh::overlay(a, b, &root).map_err(|e| e.to_string())?;
                o.validate().map_err(|e| e.to_string())?;
                if o.n_triangles() + root.n_triangles() > a.n_triangles() + b.n_triangles() {
                    return Err(format!("R2 violated: {} > {} + {} - {}", o.n_triangles(), a.n_triangles(), b.n_triangles(), root.n_triangles()));
                }
                overlays += 1;
            }
        }
    }
    if !(closure.is_finite() && closure < 100.0) {
        return Err(format!("closure ratio {closure}"));
    }
    Ok(format!("R1 ok, R2 ok on {overlays} overlays, max closure ratio {closure:.3}"))
}

fn refine_from(root: &Mesh, levels: usize, seed: u64) -> (Vec<Mesh>, Vec<Vec<usize>>) {
    let mut r = rng(seed);
    let mut meshes = vec![root.clone()];
    let mut marks = Vec::new();
    for _ in 0..levels {
        let m = meshes.last().unwrap();
        let marked: Vec<usize> = (0..m.n_triangles()).filter(|_| r.gen_bool(0.2)).collect();
        meshes.push(m.refine(&marked).unwrap());
        marks.push(marked);
    }
    (meshes, marks)
}

/// Solve with the direct oracle and check the residual.
pub fn direct_residual(op: &SparseOperator, rhs: &[f64]) -> f64 {
    let x = solve_exact(op, rhs).unwrap();
    let ax = op.matvec(&x.coefficients);
    let num: f64 = ax.iter().zip(rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    num / dot(rhs, rhs).sqrt().max(f64::MIN_POSITIVE)
}
