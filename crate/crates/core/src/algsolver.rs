//! Preconditioned conjugate gradients with a one-step interface, a local
//! multilevel diagonal preconditioner on the bisection hierarchy, and a sparse
//! Cholesky solve used as an oracle.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::fem::{dot, FeFunction, FeSpace, SparseOperator, CONSTRAINED};

/// Symmetric positive definite approximation of the inverse operator.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// `P = I`, turning PCG into plain CG.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Sparse Cholesky factorization of an SPD operator.
pub struct DirectSolver {
    n: usize,
    llt: Option<faer::sparse::linalg::solvers::Llt<usize, f64>>,
}

impl std::fmt::Debug for DirectSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirectSolver").field("n", &self.n).finish()
    }
}

impl DirectSolver {
    pub fn new(op: &SparseOperator) -> Result<Self> {
        let n = op.n();
        if n == 0 {
            return Ok(Self { n, llt: None });
        }
        let triplets: Vec<Triplet<usize, usize, f64>> =
            op.upper_triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|_| Error::NotPositiveDefinite)?;
        let llt = mat.sp_cholesky(Side::Upper).map_err(|_| Error::NotPositiveDefinite)?;
        Ok(Self { n, llt: Some(llt) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let Some(llt) = &self.llt else {
            return Vec::new();
        };
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        llt.solve_in_place(x.as_mut());
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Direct solve of `op x = rhs`.
pub fn solve_exact(op: &SparseOperator, rhs: &[f64]) -> Result<FeFunction> {
    if rhs.len() != op.n() {
        return Err(Error::DimensionMismatch { expected: op.n(), found: rhs.len() });
    }
    Ok(FeFunction::from_vec(DirectSolver::new(op)?.solve(rhs)))
}

#[derive(Clone, Debug)]
struct Level {
    first_new: usize,
    parents: Vec<[usize; 2]>,
    /// Vertex and inverse stiffness diagonal on this level.
    smooth: Vec<(usize, f64)>,
}

/// Additive Schwarz preconditioner
/// `P = I_0 A_0^{-1} I_0^T + Σ_ℓ Σ_{z ∈ M̃_ℓ} φ_z^ℓ (φ_z^ℓ)^T / A_ℓ[z,z]`,
/// where `M̃_ℓ` holds the vertices of triangles created on level `ℓ`.
///
/// All levels share one vertex numbering, since bisection only appends.
#[derive(Debug)]
pub struct MultilevelPreconditioner {
    coarse: DirectSolver,
    coarse_free: Vec<usize>,
    levels: Vec<Level>,
    constrained: Vec<bool>,
    finest_free: Vec<usize>,
}

impl MultilevelPreconditioner {
    /// Starts a hierarchy at the coarse space.
    pub fn new(coarse: &FeSpace) -> Result<Self> {
        let a0 = coarse.assemble_laplacian();
        let dofs = coarse.dofs();
        Ok(Self {
            coarse: DirectSolver::new(&a0)?,
            coarse_free: dofs.free_vertices().to_vec(),
            levels: Vec::new(),
            constrained: dofs.vertex_to_dof().iter().map(|&d| d == CONSTRAINED).collect(),
            finest_free: dofs.free_vertices().to_vec(),
        })
    }

    /// Builds the preconditioner for the finest of a nested sequence of spaces.
    pub fn build(spaces: &[FeSpace]) -> Result<Self> {
        let (first, rest) = spaces.split_first().ok_or(Error::InvalidConfig("empty hierarchy".into()))?;
        let mut p = Self::new(first)?;
        for s in rest {
            p.push_level(s, &s.assemble_laplacian())?;
        }
        Ok(p)
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len() + 1
    }

    /// Adds the direct refinement `space` of the current finest level;
    /// `laplacian` is its stiffness matrix.
    pub fn push_level(&mut self, space: &FeSpace, laplacian: &SparseOperator) -> Result<()> {
        let mesh = space.mesh();
        if mesh.first_new_vertex() != self.constrained.len() {
            return Err(Error::NotNested);
        }
        let dofs = space.dofs();
        let diag = laplacian.diagonal();
        let mut children = vec![0u32; mesh.parent_of().iter().copied().max().map_or(0, |m| m + 1)];
        for &p in mesh.parent_of() {
            children[p] += 1;
        }
        let mut in_set = vec![false; mesh.n_vertices()];
        for (tri, &p) in mesh.triangles().iter().zip(mesh.parent_of()) {
            if children[p] >= 2 {
                for &v in tri {
                    in_set[v] = true;
                }
            }
        }
        let smooth = in_set
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s)
            .filter_map(|(v, _)| dofs.dof(v).map(|d| (v, 1.0 / diag[d])))
            .collect();
        self.constrained = dofs.vertex_to_dof().iter().map(|&d| d == CONSTRAINED).collect();
        self.finest_free = dofs.free_vertices().to_vec();
        self.levels.push(Level {
            first_new: mesh.first_new_vertex(),
            parents: mesh.midpoint_parents().to_vec(),
            smooth,
        });
        Ok(())
    }
}

impl Preconditioner for MultilevelPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let mut w = vec![0.0; self.constrained.len()];
        for (&v, &x) in self.finest_free.iter().zip(r) {
            w[v] = x;
        }
        let mut saved: Vec<f64> = Vec::new();
        let mut offsets = Vec::with_capacity(self.levels.len());
        for lvl in self.levels.iter().rev() {
            offsets.push(saved.len());
            saved.extend(lvl.smooth.iter().map(|&(v, _)| w[v]));
            // adjoint of midpoint interpolation
            for (i, &[a, b]) in lvl.parents.iter().enumerate().rev() {
                let m = lvl.first_new + i;
                let half = 0.5 * w[m];
                if !self.constrained[a] {
                    w[a] += half;
                }
                if !self.constrained[b] {
                    w[b] += half;
                }
            }
        }
        let rc: Vec<f64> = self.coarse_free.iter().map(|&v| w[v]).collect();
        let xc = self.coarse.solve(&rc);
        w.iter_mut().for_each(|x| *x = 0.0);
        for (&v, &x) in self.coarse_free.iter().zip(&xc) {
            w[v] = x;
        }
        for (lvl, &off) in self.levels.iter().zip(offsets.iter().rev()) {
            for (i, &[a, b]) in lvl.parents.iter().enumerate() {
                let m = lvl.first_new + i;
                w[m] = if self.constrained[m] { 0.0 } else { 0.5 * (w[a] + w[b]) };
            }
            for (&(v, weight), &s) in lvl.smooth.iter().zip(&saved[off..]) {
                w[v] += weight * s;
            }
        }
        for (zi, &v) in z.iter_mut().zip(&self.finest_free) {
            *zi = w[v];
        }
    }
}

/// One run of PCG on `A x = b`, advanced one iteration at a time.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub rhs: Vec<f64>,
    pub iterate: FeFunction,
    pub previous_iterate: FeFunction,
    residual: Vec<f64>,
    direction: Vec<f64>,
    preconditioned: Vec<f64>,
    rz: f64,
    pub iteration_count: usize,
    /// `|||x_j - x_{j-1}|||` of the latest step.
    pub last_increment: f64,
    scratch: Vec<f64>,
}

impl SolverState {
    pub fn new(
        op: &SparseOperator,
        rhs: Vec<f64>,
        initial: FeFunction,
        precond: &dyn Preconditioner,
    ) -> Result<Self> {
        let n = op.n();
        if rhs.len() != n || initial.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rhs.len().min(initial.len()) });
        }
        let ax = op.matvec(&initial.coefficients);
        let residual: Vec<f64> = rhs.iter().zip(&ax).map(|(b, y)| b - y).collect();
        let mut preconditioned = vec![0.0; n];
        precond.apply(&residual, &mut preconditioned);
        let rz = dot(&residual, &preconditioned);
        Ok(Self {
            rhs,
            previous_iterate: initial.clone(),
            iterate: initial,
            direction: preconditioned.clone(),
            preconditioned,
            residual,
            rz,
            iteration_count: 0,
            last_increment: 0.0,
            scratch: vec![0.0; n],
        })
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    /// One PCG iteration. A vanishing residual or direction leaves the
    /// iterate in place with zero increment.
    pub fn step(&mut self, op: &SparseOperator, precond: &dyn Preconditioner) {
        self.previous_iterate.coefficients.copy_from_slice(&self.iterate.coefficients);
        self.iteration_count += 1;
        op.matvec_into(&self.direction, &mut self.scratch);
        let pap = dot(&self.direction, &self.scratch);
        if !(self.rz > 0.0) || !(pap > 0.0) {
            self.last_increment = 0.0;
            return;
        }
        let alpha = self.rz / pap;
        for (x, p) in self.iterate.coefficients.iter_mut().zip(&self.direction) {
            *x += alpha * p;
        }
        for (r, q) in self.residual.iter_mut().zip(&self.scratch) {
            *r -= alpha * q;
        }
        self.last_increment = alpha.abs() * pap.sqrt();
        precond.apply(&self.residual, &mut self.preconditioned);
        let rz_new = dot(&self.residual, &self.preconditioned);
        let beta = rz_new / self.rz;
        self.rz = rz_new;
        for (p, z) in self.direction.iter_mut().zip(&self.preconditioned) {
            *p = z + beta * *p;
        }
    }
}

/// Number of PCG iterations needed to reduce the residual norm by `rtol`.
pub fn pcg_iterations_to(
    op: &SparseOperator,
    rhs: &[f64],
    precond: &dyn Preconditioner,
    rtol: f64,
    max_iter: usize,
) -> Result<usize> {
    let mut s = SolverState::new(op, rhs.to_vec(), FeFunction::zeros(op.n()), precond)?;
    let r0 = dot(rhs, rhs).sqrt();
    while dot(s.residual(), s.residual()).sqrt() > rtol * r0 {
        if s.iteration_count >= max_iter {
            return Err(Error::SolverCap(max_iter));
        }
        s.step(op, precond);
    }
    Ok(s.iteration_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Domain, Mesh};

    fn spd(n: usize) -> SparseOperator {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.5));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseOperator::from_triplets(n, t)
    }

    #[test]
    fn one_by_one_is_exact_after_one_step() {
        let a = SparseOperator::from_triplets(1, vec![(0, 0, 4.0)]);
        let mut s = SolverState::new(&a, vec![2.0], FeFunction::zeros(1), &IdentityPreconditioner).unwrap();
        s.step(&a, &IdentityPreconditioner);
        assert!((s.iterate.coefficients[0] - 0.5).abs() < 1e-15);
        assert!((s.last_increment - 1.0).abs() < 1e-15);
        s.step(&a, &IdentityPreconditioner);
        assert_eq!(s.last_increment, 0.0);
        assert_eq!(s.iteration_count, 2);
    }

    #[test]
    fn exact_iterate_is_a_fixed_point() {
        let a = spd(6);
        let x = FeFunction::from_vec((0..6).map(|i| i as f64).collect());
        let b = a.matvec(&x.coefficients);
        let mut s = SolverState::new(&a, b, x.clone(), &IdentityPreconditioner).unwrap();
        s.step(&a, &IdentityPreconditioner);
        assert_eq!(s.iterate, x);
        assert_eq!(s.last_increment, 0.0);
    }

    #[test]
    fn direct_solver_identity_and_tridiagonal() {
        let id = SparseOperator::identity(4);
        let b = vec![1.0, -2.0, 3.0, 0.5];
        assert_eq!(solve_exact(&id, &b).unwrap().coefficients, b);
        let a = spd(30);
        let x = solve_exact(&a, &b.iter().cycle().take(30).copied().collect::<Vec<_>>()).unwrap();
        let r = a.matvec(&x.coefficients);
        for (i, ri) in r.iter().enumerate() {
            assert!((ri - b[i % 4]).abs() < 1e-12);
        }
        assert!(solve_exact(&a, &b).is_err());
        let neg = SparseOperator::from_triplets(1, vec![(0, 0, -1.0)]);
        assert!(DirectSolver::new(&neg).is_err());
        assert!(solve_exact(&SparseOperator::identity(0), &[]).unwrap().is_empty());
    }

    #[test]
    fn single_level_preconditioner_is_exact() {
        let s = FeSpace::new(Mesh::create_initial(Domain::ZShape).uniform_refine()).unwrap();
        let a = s.assemble_laplacian();
        let p = MultilevelPreconditioner::new(&s).unwrap();
        let b = s.assemble_rhs(|_| 1.0, |_, _| 0.0);
        assert_eq!(pcg_iterations_to(&a, &b, &p, 1e-12, 10).unwrap(), 1);
    }

    #[test]
    fn preconditioner_is_symmetric_and_positive() {
        let mut spaces = vec![FeSpace::new(Mesh::create_initial(Domain::LShape)).unwrap()];
        for l in 0..6 {
            let m = spaces.last().unwrap().mesh();
            let marked: Vec<usize> = (0..m.n_triangles()).filter(|t| (t + l) % 3 == 0).collect();
            spaces.push(FeSpace::new(m.refine(&marked).unwrap()).unwrap());
        }
        let p = MultilevelPreconditioner::build(&spaces).unwrap();
        assert_eq!(p.n_levels(), 7);
        let n = spaces.last().unwrap().n_dofs();
        let z: Vec<f64> = (0..n).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let w: Vec<f64> = (0..n).map(|i| ((i * 104729) % 73) as f64 / 36.0 - 1.0).collect();
        let (mut pz, mut pw) = (vec![0.0; n], vec![0.0; n]);
        p.apply(&z, &mut pz);
        p.apply(&w, &mut pw);
        assert!((dot(&pz, &w) - dot(&z, &pw)).abs() < 1e-10 * dot(&pz, &z).abs().max(1.0));
        assert!(dot(&pz, &z) > 0.0);
    }

    #[test]
    fn push_level_rejects_non_nested_spaces() {
        let s = FeSpace::new(Mesh::create_initial(Domain::LShape)).unwrap();
        let mut p = MultilevelPreconditioner::new(&s).unwrap();
        let twice = FeSpace::new(s.mesh().uniform_refine().uniform_refine()).unwrap();
        assert!(p.push_level(&twice, &twice.assemble_laplacian()).is_err());
        assert!(MultilevelPreconditioner::build(&[]).is_err());
    }
}
