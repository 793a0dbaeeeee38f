//! P1 finite elements on a [`Mesh`]: degrees of freedom, stiffness assembly,
//! the nonlinear operator, load functional, norms and prolongation.
//!
//! Dofs are the vertices not lying on a Dirichlet edge; constrained values are
//! eliminated from every vector and matrix.

use crate::error::{Error, Result};
use crate::mesh::{BoundaryKind, EdgeTable, Mesh, Point, NONE};
use crate::nonlinearity::Nonlinearity;
use crate::quadrature::{edge_rule, map_barycentric, triangle_rule};

/// Marker value in [`DofMap::vertex_to_dof`] for constrained vertices.
pub const CONSTRAINED: usize = usize::MAX;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofMap {
    free_vertices: Vec<usize>,
    vertex_to_dof: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut constrained = vec![false; mesh.n_vertices()];
        for be in mesh.boundary() {
            if be.kind == BoundaryKind::Dirichlet {
                constrained[be.vertices[0]] = true;
                constrained[be.vertices[1]] = true;
            }
        }
        let mut free_vertices = Vec::new();
        let mut vertex_to_dof = vec![CONSTRAINED; mesh.n_vertices()];
        for (v, &c) in constrained.iter().enumerate() {
            if !c {
                vertex_to_dof[v] = free_vertices.len();
                free_vertices.push(v);
            }
        }
        Self { free_vertices, vertex_to_dof }
    }

    pub fn n_dofs(&self) -> usize {
        self.free_vertices.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertex_to_dof.len()
    }

    pub fn free_vertices(&self) -> &[usize] {
        &self.free_vertices
    }

    pub fn vertex_to_dof(&self) -> &[usize] {
        &self.vertex_to_dof
    }

    #[inline]
    pub fn dof(&self, vertex: usize) -> Option<usize> {
        let d = self.vertex_to_dof[vertex];
        (d != CONSTRAINED).then_some(d)
    }

    pub fn is_constrained(&self, vertex: usize) -> bool {
        self.vertex_to_dof[vertex] == CONSTRAINED
    }

    /// Dof vector to vertex vector with zeros at constrained vertices.
    pub fn scatter(&self, dofs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_vertices()];
        for (&v, &x) in self.free_vertices.iter().zip(dofs) {
            out[v] = x;
        }
        out
    }

    pub fn gather(&self, vertex_values: &[f64]) -> Vec<f64> {
        self.free_vertices.iter().map(|&v| vertex_values[v]).collect()
    }
}

/// A member of the discrete space, stored by its free nodal values.
#[derive(Clone, Debug, PartialEq)]
pub struct FeFunction {
    pub coefficients: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(n: usize) -> Self {
        Self { coefficients: vec![0.0; n] }
    }

    pub fn from_vec(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn sub(&self, other: &FeFunction) -> FeFunction {
        FeFunction::from_vec(self.coefficients.iter().zip(&other.coefficients).map(|(a, b)| a - b).collect())
    }
}

/// Symmetric sparse matrix in compressed row storage.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseOperator {
    /// Assembles from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len() / 2);
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len() / 2);
        let mut last = (NONE, NONE);
        for (i, j, v) in triplets {
            if (i, j) == last {
                *vals.last_mut().expect("entry exists") += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = (i, j);
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            let mut r = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                r += self.vals[k] * x[self.cols[k]];
            }
            s += x[i] * r;
        }
        s
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        dot(x, &ay)
    }

    /// Upper-triangle triplets, used to hand the matrix to the direct solver.
    pub fn upper_triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).filter(move |&(j, _)| j >= i).map(move |(j, v)| (i, j, v)))
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let scale = v.abs().max(self.get(j, i).abs()).max(f64::MIN_POSITIVE);
                worst = worst.max((v - self.get(j, i)).abs() / scale);
            }
        }
        worst
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Constant gradients of the three hat functions of a triangle.
#[derive(Clone, Copy, Debug)]
pub struct TriangleGeometry {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

fn triangle_geometry(p: &[Point; 3]) -> Option<TriangleGeometry> {
    let area = crate::mesh::signed_area(p[0], p[1], p[2]);
    if area <= 0.0 {
        return None;
    }
    let inv = 1.0 / (2.0 * area);
    let mut grads = [[0.0; 2]; 3];
    for i in 0..3 {
        let b = p[(i + 1) % 3];
        let c = p[(i + 2) % 3];
        // rotate the opposite edge by -90 degrees
        grads[i] = [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv];
    }
    Some(TriangleGeometry { area, grads })
}

/// Element matrix `∫_T grad φ_i · grad φ_j` for a counter-clockwise triangle.
pub fn element_stiffness(p: &[Point; 3]) -> Result<[[f64; 3]; 3]> {
    let g = triangle_geometry(p).ok_or(Error::DegenerateTriangle(0))?;
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = g.area * (g.grads[i][0] * g.grads[j][0] + g.grads[i][1] * g.grads[j][1]);
        }
    }
    Ok(k)
}

/// A boundary edge on the Neumann part with its owning triangle.
#[derive(Clone, Copy, Debug)]
pub struct NeumannEdge {
    pub vertices: [usize; 2],
    pub triangle: usize,
    pub length: f64,
    pub normal: [f64; 2],
}

/// Mesh plus everything derived from it that the solver needs repeatedly.
#[derive(Clone, Debug)]
pub struct FeSpace {
    mesh: Mesh,
    dofs: DofMap,
    geometry: Vec<TriangleGeometry>,
    edges: EdgeTable,
    neumann: Vec<NeumannEdge>,
}

impl FeSpace {
    pub fn new(mesh: Mesh) -> Result<Self> {
        let geometry = (0..mesh.n_triangles())
            .map(|t| triangle_geometry(&mesh.corners(t)).ok_or(Error::DegenerateTriangle(t)))
            .collect::<Result<Vec<_>>>()?;
        let dofs = DofMap::new(&mesh);
        let edges = mesh.edges();
        let mut neumann = Vec::new();
        for be in mesh.boundary() {
            if be.kind != BoundaryKind::Neumann {
                continue;
            }
            let [a, b] = be.vertices;
            let e = edges.find(a, b).ok_or_else(|| Error::InvalidMesh("dangling boundary edge".into()))?;
            let t = edges.edge_triangles[e][0];
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            let length = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            let mut normal = [(pb[1] - pa[1]) / length, (pa[0] - pb[0]) / length];
            // orient outward: away from the opposite vertex
            let tri = mesh.triangles()[t];
            let opp = tri.iter().copied().find(|&v| v != a && v != b).expect("triangle has a third vertex");
            let po = mesh.vertices()[opp];
            if normal[0] * (po[0] - pa[0]) + normal[1] * (po[1] - pa[1]) > 0.0 {
                normal = [-normal[0], -normal[1]];
            }
            neumann.push(NeumannEdge { vertices: [a, b], triangle: t, length, normal });
        }
        Ok(Self { mesh, dofs, geometry, edges, neumann })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.n_dofs()
    }

    pub fn geometry(&self) -> &[TriangleGeometry] {
        &self.geometry
    }

    pub fn edges(&self) -> &EdgeTable {
        &self.edges
    }

    pub fn neumann_edges(&self) -> &[NeumannEdge] {
        &self.neumann
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_dofs() {
            return Err(Error::DimensionMismatch { expected: self.n_dofs(), found: v.len() });
        }
        Ok(())
    }

    /// Constant gradient of `v` on every triangle.
    pub fn gradients(&self, v: &FeFunction) -> Result<Vec<[f64; 2]>> {
        self.check_len(&v.coefficients)?;
        let vtd = self.dofs.vertex_to_dof();
        let c = &v.coefficients;
        Ok(self
            .mesh
            .triangles()
            .iter()
            .zip(&self.geometry)
            .map(|(tri, g)| {
                let mut grad = [0.0; 2];
                for i in 0..3 {
                    let d = vtd[tri[i]];
                    if d != CONSTRAINED {
                        grad[0] += c[d] * g.grads[i][0];
                        grad[1] += c[d] * g.grads[i][1];
                    }
                }
                grad
            })
            .collect())
    }

    /// Stiffness matrix of `<grad ·, grad ·>` on the free dofs.
    pub fn assemble_laplacian(&self) -> SparseOperator {
        let vtd = self.dofs.vertex_to_dof();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(7); self.n_dofs()];
        for (tri, g) in self.mesh.triangles().iter().zip(&self.geometry) {
            for i in 0..3 {
                let di = vtd[tri[i]];
                if di == CONSTRAINED {
                    continue;
                }
                for j in 0..3 {
                    let dj = vtd[tri[j]];
                    if dj == CONSTRAINED {
                        continue;
                    }
                    let v = g.area * (g.grads[i][0] * g.grads[j][0] + g.grads[i][1] * g.grads[j][1]);
                    rows[di].push((dj, v));
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(self.n_dofs() + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let start = cols.len();
            for (j, v) in row {
                if cols.len() > start && *cols.last().expect("nonempty") == j {
                    *vals.last_mut().expect("nonempty") += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseOperator { n: self.n_dofs(), row_ptr, cols, vals }
    }

    /// Dual vector `<A w, φ_i>` with `A w = -div(mu(|grad w|^2) grad w)`.
    pub fn apply_nonlinear(&self, nl: &Nonlinearity, w: &FeFunction) -> Result<Vec<f64>> {
        self.check_len(&w.coefficients)?;
        let vtd = self.dofs.vertex_to_dof();
        let c = &w.coefficients;
        let rule = triangle_rule();
        let mut out = vec![0.0; self.n_dofs()];
        for (t, (tri, g)) in self.mesh.triangles().iter().zip(&self.geometry).enumerate() {
            let mut grad = [0.0; 2];
            for i in 0..3 {
                let d = vtd[tri[i]];
                if d != CONSTRAINED {
                    grad[0] += c[d] * g.grads[i][0];
                    grad[1] += c[d] * g.grads[i][1];
                }
            }
            let s = grad[0] * grad[0] + grad[1] * grad[1];
            // mean of mu over T; one evaluation is exact when mu ignores x
            let mu_mean = if nl.is_x_independent() {
                nl.mu([0.0, 0.0], s)
            } else {
                let p = self.mesh.corners(t);
                rule.iter().map(|&(l, wq)| wq * nl.mu(map_barycentric(&p, l), s)).sum()
            };
            let scale = mu_mean * g.area;
            for i in 0..3 {
                let d = vtd[tri[i]];
                if d != CONSTRAINED {
                    out[d] += scale * (grad[0] * g.grads[i][0] + grad[1] * g.grads[i][1]);
                }
            }
        }
        Ok(out)
    }

    /// Load vector `F(φ_i) = ∫ f φ_i + ∫_{Γ_N} g φ_i`; `g` receives the point
    /// and the outward unit normal.
    pub fn assemble_rhs(
        &self,
        f: impl Fn(Point) -> f64,
        g: impl Fn(Point, Point) -> f64,
    ) -> Vec<f64> {
        let vtd = self.dofs.vertex_to_dof();
        let rule = triangle_rule();
        let mut out = vec![0.0; self.n_dofs()];
        for (t, (tri, geo)) in self.mesh.triangles().iter().zip(&self.geometry).enumerate() {
            let p = self.mesh.corners(t);
            let mut local = [0.0; 3];
            for &(l, w) in &rule {
                let fx = f(map_barycentric(&p, l)) * w;
                for i in 0..3 {
                    local[i] += fx * l[i];
                }
            }
            for i in 0..3 {
                let d = vtd[tri[i]];
                if d != CONSTRAINED {
                    out[d] += local[i] * geo.area;
                }
            }
        }
        let verts = self.mesh.vertices();
        for ne in &self.neumann {
            let [a, b] = ne.vertices;
            let (pa, pb) = (verts[a], verts[b]);
            let mut la = 0.0;
            let mut lb = 0.0;
            for (s, w) in edge_rule() {
                let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                let gx = g(x, ne.normal) * w * ne.length;
                la += gx * (1.0 - s);
                lb += gx * s;
            }
            if let Some(d) = self.dofs.dof(a) {
                out[d] += la;
            }
            if let Some(d) = self.dofs.dof(b) {
                out[d] += lb;
            }
        }
        out
    }

    /// Energy norm `||grad v||_{L2}` via the stiffness quadratic form.
    pub fn energy_norm(&self, laplacian: &SparseOperator, v: &FeFunction) -> f64 {
        laplacian.quadratic_form(&v.coefficients).max(0.0).sqrt()
    }

    /// `E(v) = ∫ M(|grad v|^2) / 2 - F(v)` with `F` given as a dual vector.
    pub fn energy_functional(&self, nl: &Nonlinearity, v: &FeFunction, load: &[f64]) -> Result<f64> {
        let grads = self.gradients(v)?;
        let p: f64 = grads
            .iter()
            .zip(&self.geometry)
            .map(|(g, geo)| 0.5 * nl.antiderivative(g[0] * g[0] + g[1] * g[1]) * geo.area)
            .sum();
        Ok(p - dot(load, &v.coefficients))
    }

    /// P1 interpolation of a coarse function on the direct refinement `self`.
    pub fn prolongate(&self, coarse_space: &FeSpace, coarse: &FeFunction) -> Result<FeFunction> {
        coarse_space.check_len(&coarse.coefficients)?;
        let cm = coarse_space.mesh();
        let nested = self.mesh.level() == cm.level() + 1
            && self.mesh.first_new_vertex() == cm.n_vertices()
            && self.mesh.vertices()[..cm.n_vertices()] == cm.vertices()[..];
        if !nested {
            return Err(Error::NotNested);
        }
        let mut values = coarse_space.dofs.scatter(&coarse.coefficients);
        for &[a, b] in self.mesh.midpoint_parents() {
            values.push(0.5 * (values[a] + values[b]));
        }
        Ok(FeFunction::from_vec(self.dofs.gather(&values)))
    }

    /// `||grad(u - v)||_{L2}` against an exact gradient, by the 7-point rule.
    pub fn energy_error_vs_exact(&self, v: &FeFunction, grad_exact: impl Fn(Point) -> Point) -> Result<f64> {
        let grads = self.gradients(v)?;
        let rule = triangle_rule();
        let mut sum = 0.0;
        for (t, (gv, geo)) in grads.iter().zip(&self.geometry).enumerate() {
            let p = self.mesh.corners(t);
            let mut local = 0.0;
            for &(l, w) in &rule {
                let ge = grad_exact(map_barycentric(&p, l));
                local += w * ((ge[0] - gv[0]).powi(2) + (ge[1] - gv[1]).powi(2));
            }
            sum += local * geo.area;
        }
        Ok(sum.sqrt())
    }

    /// Nodal interpolant of a continuous function (values at free vertices).
    pub fn interpolate(&self, u: impl Fn(Point) -> f64) -> FeFunction {
        let verts = self.mesh.vertices();
        FeFunction::from_vec(self.dofs.free_vertices().iter().map(|&v| u(verts[v])).collect())
    }
}
