//! Conforming triangulations and newest-vertex bisection.
//!
//! Each triangle is stored as a vertex triple `[v0, v1, v2]` in counter-clockwise
//! order. The edge opposite `v0` is the refinement edge. Bisection places the new
//! vertex first in both children, so the refinement edge of a child is always
//! the edge of its parent that it inherited.
//!
//! One call to [`Mesh::refine`] marks the refinement edge of every selected
//! triangle, closes the marking (any triangle with a marked edge gets its
//! refinement edge marked as well) and then splits every triangle into two,
//! three or four children according to its marked edges. All new vertices of
//! one call are midpoints of edges of the input mesh.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Sentinel for "no triangle" in [`EdgeTable::edge_triangles`].
pub const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub kind: BoundaryKind,
}

/// Built-in geometries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    ZShape,
    LShape,
    UnitSquare,
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "z_shape" | "zshape" | "z" => Ok(Domain::ZShape),
            "l_shape" | "lshape" | "l" => Ok(Domain::LShape),
            "unit_square" | "square" => Ok(Domain::UnitSquare),
            other => Err(Error::UnknownDomain(other.to_string())),
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Domain::ZShape => "zshape",
            Domain::LShape => "lshape",
            Domain::UnitSquare => "unit_square",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    level: usize,
    /// Index of the ancestor triangle in the previous mesh. Identity on `T_0`.
    parent_of: Vec<usize>,
    /// Edge endpoints of every vertex created by the refinement that produced
    /// this mesh, in vertex order starting at `first_new_vertex`.
    midpoint_parents: Vec<[usize; 2]>,
}

/// Edge connectivity derived from the triangle list.
#[derive(Clone, Debug)]
pub struct EdgeTable {
    /// Vertex pairs with `e[0] < e[1]`, sorted lexicographically.
    pub edges: Vec<[usize; 2]>,
    /// `triangle_edges[t][i]` is the edge opposite local vertex `i`.
    pub triangle_edges: Vec<[usize; 3]>,
    /// Up to two triangles per edge; [`NONE`] fills the second slot on the boundary.
    pub edge_triangles: Vec<[usize; 2]>,
}

impl EdgeTable {
    pub fn new(triangles: &[[usize; 3]]) -> Self {
        let mut half: Vec<(usize, usize, u32)> = Vec::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                half.push((a, b, (3 * t + i) as u32));
            }
        }
        half.sort_unstable();

        let mut edges = Vec::with_capacity(half.len() / 2 + 2);
        let mut edge_triangles: Vec<[usize; 2]> = Vec::with_capacity(half.len() / 2 + 2);
        let mut triangle_edges = vec![[NONE; 3]; triangles.len()];
        for (a, b, slot) in half {
            let (t, i) = (slot as usize / 3, slot as usize % 3);
            let new_edge = edges.last().map_or(true, |e: &[usize; 2]| *e != [a, b]);
            if new_edge {
                edges.push([a, b]);
                edge_triangles.push([t, NONE]);
            } else {
                let last = edge_triangles.last_mut().expect("edge exists");
                last[1] = t;
            }
            triangle_edges[t][i] = edges.len() - 1;
        }
        Self { edges, triangle_edges, edge_triangles }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn is_boundary(&self, e: usize) -> bool {
        self.edge_triangles[e][1] == NONE
    }

    /// Edge id of the vertex pair, if it is an edge of the mesh.
    pub fn find(&self, a: usize, b: usize) -> Option<usize> {
        let key = if a < b { [a, b] } else { [b, a] };
        self.edges.binary_search(&key).ok()
    }
}

fn midpoint(p: Point, q: Point) -> Point {
    [(p[0] + q[0]) * 0.5, (p[1] + q[1]) * 0.5]
}

pub fn signed_area(p: Point, q: Point, r: Point) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
}

fn dist2(p: Point, q: Point) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}

impl Mesh {
    /// Builds a level-0 mesh. Each triangle is reordered counter-clockwise
    /// with its longest edge as refinement edge (ties: smallest opposite
    /// vertex index).
    pub fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        let triangles = triangles
            .into_iter()
            .map(|t| longest_edge_first(&vertices, t))
            .collect::<Result<Vec<_>>>()?;
        let n = triangles.len();
        let mesh = Mesh {
            vertices,
            triangles,
            boundary,
            level: 0,
            parent_of: (0..n).collect(),
            midpoint_parents: Vec::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Builds a mesh keeping the given vertex order, i.e. the refinement
    /// edge is taken to be opposite the first vertex of each triple.
    pub fn from_parts_raw(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        let n = triangles.len();
        let mesh = Mesh {
            vertices,
            triangles,
            boundary,
            level: 0,
            parent_of: (0..n).collect(),
            midpoint_parents: Vec::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Hard-coded initial triangulation `T_0` of a built-in domain.
    pub fn create_initial(domain: Domain) -> Self {
        use BoundaryKind::*;
        let (vertices, triangles, boundary): (Vec<Point>, Vec<[usize; 3]>, Vec<(usize, usize, BoundaryKind)>) =
            match domain {
                Domain::UnitSquare => (
                    vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                    vec![[0, 1, 2], [0, 2, 3]],
                    vec![(0, 1, Dirichlet), (1, 2, Dirichlet), (2, 3, Dirichlet), (3, 0, Dirichlet)],
                ),
                // (-1,1)^2 minus [0,1]x[-1,0]
                Domain::LShape => (
                    vec![
                        [-1.0, -1.0],
                        [0.0, -1.0],
                        [0.0, 0.0],
                        [1.0, 0.0],
                        [1.0, 1.0],
                        [0.0, 1.0],
                        [-1.0, 1.0],
                        [-1.0, 0.0],
                    ],
                    vec![[0, 1, 2], [0, 2, 7], [7, 2, 6], [2, 5, 6], [2, 3, 4], [2, 4, 5]],
                    vec![
                        (0, 1, Dirichlet),
                        (1, 2, Dirichlet),
                        (2, 3, Dirichlet),
                        (3, 4, Dirichlet),
                        (4, 5, Dirichlet),
                        (5, 6, Dirichlet),
                        (6, 7, Dirichlet),
                        (7, 0, Dirichlet),
                    ],
                ),
                // (-1,1)^2 minus conv{(-1,-1), (0,0), (-1,0)}; the two edges at
                // the re-entrant corner are Dirichlet, the rest is Neumann.
                Domain::ZShape => (
                    vec![
                        [0.0, 0.0],
                        [-1.0, -1.0],
                        [0.0, -1.0],
                        [1.0, -1.0],
                        [1.0, 0.0],
                        [1.0, 1.0],
                        [0.0, 1.0],
                        [-1.0, 1.0],
                        [-1.0, 0.0],
                    ],
                    vec![
                        [0, 1, 2],
                        [0, 2, 3],
                        [0, 3, 4],
                        [0, 4, 5],
                        [0, 5, 6],
                        [0, 6, 7],
                        [0, 7, 8],
                    ],
                    vec![
                        (0, 1, Dirichlet),
                        (1, 2, Neumann),
                        (2, 3, Neumann),
                        (3, 4, Neumann),
                        (4, 5, Neumann),
                        (5, 6, Neumann),
                        (6, 7, Neumann),
                        (7, 8, Neumann),
                        (8, 0, Dirichlet),
                    ],
                ),
            };
        let boundary = boundary
            .into_iter()
            .map(|(a, b, kind)| BoundaryEdge { vertices: [a, b], kind })
            .collect();
        Mesh::from_parts(vertices, triangles, boundary).expect("built-in mesh is valid")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn parent_of(&self) -> &[usize] {
        &self.parent_of
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Index of the first vertex created by the last refinement.
    pub fn first_new_vertex(&self) -> usize {
        self.vertices.len() - self.midpoint_parents.len()
    }

    /// Endpoints of the bisected edge for each vertex created by the last refinement.
    pub fn midpoint_parents(&self) -> &[[usize; 2]] {
        &self.midpoint_parents
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [p, q, r] = self.corners(t);
        signed_area(p, q, r)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn edges(&self) -> EdgeTable {
        EdgeTable::new(&self.triangles)
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.n_triangles() {
            let p = self.corners(t);
            for i in 0..3 {
                let a = p[i];
                let b = p[(i + 1) % 3];
                let c = p[(i + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (dist2(a, b) * dist2(a, c)).sqrt();
                min = min.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        min
    }

    /// Checks positivity, conformity and boundary marking.
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if self.area(t) <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} has non-positive signed area")));
            }
        }
        let edges = self.edges();
        let mut count = vec![0u8; edges.len()];
        for t in 0..self.n_triangles() {
            for &e in &edges.triangle_edges[t] {
                count[e] += 1;
            }
        }
        if let Some(e) = count.iter().position(|&c| c > 2) {
            return Err(Error::InvalidMesh(format!("edge {:?} shared by more than two triangles", edges.edges[e])));
        }
        let mut marked = vec![0u8; edges.len()];
        for be in &self.boundary {
            let [a, b] = be.vertices;
            let e = edges
                .find(a, b)
                .ok_or_else(|| Error::InvalidMesh(format!("boundary edge ({a},{b}) is not a mesh edge")))?;
            if !edges.is_boundary(e) {
                return Err(Error::InvalidMesh(format!("boundary marker on interior edge ({a},{b})")));
            }
            marked[e] += 1;
        }
        for e in 0..edges.len() {
            let expected = u8::from(edges.is_boundary(e));
            if marked[e] != expected {
                return Err(Error::InvalidMesh(format!(
                    "edge {:?} carries {} markers, expected {}",
                    edges.edges[e], marked[e], expected
                )));
            }
        }
        // A hanging node would sit in the interior of a boundary edge of the
        // edge graph; the edge count check above catches the combinatorial
        // part, the area check catches overlaps against the domain.
        Ok(())
    }

    /// `refine(T_H, M_H)`: the coarsest NVB refinement in which every marked
    /// triangle is bisected at least once.
    pub fn refine(&self, marked: &[usize]) -> Result<Mesh> {
        let nt = self.n_triangles();
        if let Some(&t) = marked.iter().find(|&&t| t >= nt) {
            return Err(Error::InvalidMarking(t));
        }
        let edges = self.edges();
        let mut edge_marked = vec![false; edges.len()];
        let mut work: Vec<usize> = Vec::new();
        for &t in marked {
            let e = edges.triangle_edges[t][0];
            if !edge_marked[e] {
                edge_marked[e] = true;
                work.extend(edges.edge_triangles[e].iter().copied().filter(|&s| s != NONE));
            }
        }
        // closure: a triangle with any marked edge needs its refinement edge marked
        while let Some(t) = work.pop() {
            let te = edges.triangle_edges[t];
            if !edge_marked[te[0]] && (edge_marked[te[1]] || edge_marked[te[2]]) {
                edge_marked[te[0]] = true;
                work.extend(edges.edge_triangles[te[0]].iter().copied().filter(|&s| s != NONE));
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoint_parents = Vec::new();
        let mut new_vertex = vec![NONE; edges.len()];
        for (e, &[a, b]) in edges.edges.iter().enumerate() {
            if edge_marked[e] {
                new_vertex[e] = vertices.len();
                vertices.push(midpoint(self.vertices[a], self.vertices[b]));
                midpoint_parents.push([a, b]);
            }
        }

        let mut triangles = Vec::with_capacity(nt + 2 * marked.len() + 8);
        let mut parent_of = Vec::with_capacity(triangles.capacity());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let te = edges.triangle_edges[t];
            let m0 = new_vertex[te[0]];
            if m0 == NONE {
                triangles.push([a, b, c]);
                parent_of.push(t);
                continue;
            }
            let m1 = new_vertex[te[1]]; // midpoint of (c, a)
            let m2 = new_vertex[te[2]]; // midpoint of (a, b)
            // first bisection: (m0; a, b) and (m0; c, a)
            if m2 == NONE {
                triangles.push([m0, a, b]);
            } else {
                triangles.push([m2, m0, a]);
                triangles.push([m2, b, m0]);
            }
            if m1 == NONE {
                triangles.push([m0, c, a]);
            } else {
                triangles.push([m1, m0, c]);
                triangles.push([m1, a, m0]);
            }
            let sons = 2 + usize::from(m1 != NONE) + usize::from(m2 != NONE);
            parent_of.extend(std::iter::repeat(t).take(sons));
        }

        let mut boundary = Vec::with_capacity(self.boundary.len() + 8);
        for be in &self.boundary {
            let [a, b] = be.vertices;
            let e = edges.find(a, b).expect("boundary edge present");
            let m = new_vertex[e];
            if m == NONE {
                boundary.push(*be);
            } else {
                boundary.push(BoundaryEdge { vertices: [a, m], kind: be.kind });
                boundary.push(BoundaryEdge { vertices: [m, b], kind: be.kind });
            }
        }

        Ok(Mesh {
            vertices,
            triangles,
            boundary,
            level: self.level + 1,
            parent_of,
            midpoint_parents,
        })
    }

    pub fn uniform_refine(&self) -> Mesh {
        let all: Vec<usize> = (0..self.n_triangles()).collect();
        self.refine(&all).expect("all indices are valid")
    }

    /// Number of triangles of `self` that were bisected to obtain `fine`,
    /// i.e. `#(T_H \ T_h)` when `fine` is the direct refinement of `self`.
    pub fn refined_count(&self, fine: &Mesh) -> usize {
        let mut children = vec![0usize; self.n_triangles()];
        for &p in &fine.parent_of {
            children[p] += 1;
        }
        children.iter().filter(|&&c| c >= 2).count()
    }

    /// Serializes to the line-oriented text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for p in &self.vertices {
            let _ = writeln!(s, "{:.16e} {:.16e}", p[0], p[1]);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "boundary {}", self.boundary.len());
        for be in &self.boundary {
            let k = match be.kind {
                BoundaryKind::Dirichlet => 'D',
                BoundaryKind::Neumann => 'N',
            };
            let _ = writeln!(s, "{} {} {}", be.vertices[0], be.vertices[1], k);
        }
        s
    }

    /// Parses the text format. The vertex order of each triangle is kept; the
    /// first vertex designates the refinement edge.
    pub fn from_text(text: &str) -> Result<Mesh> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |n: usize, msg: &str| Error::Parse { line: n + 1, message: msg.to_string() };

        let nv = read_header(&mut lines, "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (n, l) = lines.next().ok_or_else(|| bad(0, "missing vertex line"))?;
            let xs: Vec<f64> = l
                .split_whitespace()
                .map(|w| w.parse::<f64>().map_err(|_| bad(n, "bad coordinate")))
                .collect::<Result<_>>()?;
            if xs.len() != 2 {
                return Err(bad(n, "vertex needs two coordinates"));
            }
            vertices.push([xs[0], xs[1]]);
        }
        let nt = read_header(&mut lines, "triangles")?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (n, l) = lines.next().ok_or_else(|| bad(0, "missing triangle line"))?;
            let ix: Vec<usize> = l
                .split_whitespace()
                .map(|w| w.parse::<usize>().map_err(|_| bad(n, "bad index")))
                .collect::<Result<_>>()?;
            if ix.len() != 3 {
                return Err(bad(n, "triangle needs three indices"));
            }
            triangles.push([ix[0], ix[1], ix[2]]);
        }
        let nb = read_header(&mut lines, "boundary")?;
        let mut boundary = Vec::with_capacity(nb);
        for _ in 0..nb {
            let (n, l) = lines.next().ok_or_else(|| bad(0, "missing boundary line"))?;
            let w: Vec<&str> = l.split_whitespace().collect();
            if w.len() != 3 {
                return Err(bad(n, "boundary line needs `i j D|N`"));
            }
            let a = w[0].parse().map_err(|_| bad(n, "bad index"))?;
            let b = w[1].parse().map_err(|_| bad(n, "bad index"))?;
            let kind = match w[2] {
                "D" => BoundaryKind::Dirichlet,
                "N" => BoundaryKind::Neumann,
                _ => return Err(bad(n, "marker must be D or N")),
            };
            boundary.push(BoundaryEdge { vertices: [a, b], kind });
        }
        Mesh::from_parts_raw(vertices, triangles, boundary)
    }

    /// Coarsest common refinement `T_a ⊕ T_b` of two refinements of `root`.
    ///
    /// In NVB forests two triangles are either nested or have disjoint
    /// interiors, so the overlay keeps every triangle of either mesh that is
    /// contained in some triangle of the other one. Quadratic in the sizes;
    /// intended for small instances.
    pub fn overlay(a: &Mesh, b: &Mesh, root: &Mesh) -> Result<Mesh> {
        for m in [a, b] {
            let prefix_ok = m.vertices.len() >= root.vertices.len()
                && m.vertices[..root.vertices.len()] == root.vertices[..];
            let area_ok = (m.total_area() - root.total_area()).abs() <= 1e-12 * root.total_area();
            if !prefix_ok || !area_ok || m.level < root.level {
                return Err(Error::NotNested);
            }
            for t in 0..m.n_triangles() {
                let c = centroid(m.corners(t));
                if !(0..root.n_triangles()).any(|s| contains(root.corners(s), c)) {
                    return Err(Error::NotNested);
                }
            }
        }
        let key = |p: Point| (p[0].to_bits(), p[1].to_bits());
        let mut vertex_index: HashMap<(u64, u64), usize> = HashMap::new();
        let mut vertices: Vec<Point> = Vec::new();
        let mut intern = |p: Point, vertices: &mut Vec<Point>| -> usize {
            *vertex_index.entry(key(p)).or_insert_with(|| {
                vertices.push(p);
                vertices.len() - 1
            })
        };
        for &p in &root.vertices {
            intern(p, &mut vertices);
        }

        let mut seen: HashMap<[(u64, u64); 3], ()> = HashMap::new();
        let mut triangles = Vec::new();
        for (m, other) in [(a, b), (b, a)] {
            for t in 0..m.n_triangles() {
                let corners = m.corners(t);
                let c = centroid(corners);
                let area = m.area(t);
                let covered = (0..other.n_triangles()).any(|s| {
                    other.area(s) >= area * (1.0 - 1e-12) && contains(other.corners(s), c)
                });
                if !covered {
                    continue;
                }
                let mut k = [key(corners[0]), key(corners[1]), key(corners[2])];
                k.sort_unstable();
                if seen.insert(k, ()).is_some() {
                    continue;
                }
                let tri = [
                    intern(corners[0], &mut vertices),
                    intern(corners[1], &mut vertices),
                    intern(corners[2], &mut vertices),
                ];
                triangles.push(tri);
            }
        }

        let mut kinds: HashMap<[(u64, u64); 2], BoundaryKind> = HashMap::new();
        for m in [a, b] {
            for be in &m.boundary {
                let mut k = [key(m.vertices[be.vertices[0]]), key(m.vertices[be.vertices[1]])];
                k.sort_unstable();
                kinds.insert(k, be.kind);
            }
        }
        let edges = EdgeTable::new(&triangles);
        let mut boundary = Vec::new();
        for (e, &[p, q]) in edges.edges.iter().enumerate() {
            if edges.is_boundary(e) {
                let mut k = [key(vertices[p]), key(vertices[q])];
                k.sort_unstable();
                let kind = *kinds.get(&k).ok_or(Error::NotNested)?;
                boundary.push(BoundaryEdge { vertices: [p, q], kind });
            }
        }
        let n = triangles.len();
        let mesh = Mesh {
            vertices,
            triangles,
            boundary,
            level: a.level.max(b.level),
            parent_of: (0..n).collect(),
            midpoint_parents: Vec::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }
}

fn read_header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, name: &str) -> Result<usize> {
    let (n, l) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 0, message: format!("missing `{name}` section") })?;
    let mut it = l.split_whitespace();
    let count = if it.next() == Some(name) { it.next().and_then(|c| c.parse().ok()) } else { None };
    count.ok_or_else(|| Error::Parse { line: n + 1, message: format!("expected `{name} <count>`") })
}

fn centroid(p: [Point; 3]) -> Point {
    [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
}

fn contains(tri: [Point; 3], x: Point) -> bool {
    let tol = -1e-14 * signed_area(tri[0], tri[1], tri[2]).abs();
    signed_area(tri[0], tri[1], x) >= tol
        && signed_area(tri[1], tri[2], x) >= tol
        && signed_area(tri[2], tri[0], x) >= tol
}

fn longest_edge_first(vertices: &[Point], t: [usize; 3]) -> Result<[usize; 3]> {
    if t.iter().any(|&v| v >= vertices.len()) {
        return Err(Error::InvalidMesh("triangle references a missing vertex".into()));
    }
    let mut best = 0;
    let mut best_len = -1.0;
    for i in 0..3 {
        let len = dist2(vertices[t[(i + 1) % 3]], vertices[t[(i + 2) % 3]]);
        let better = len > best_len || (len == best_len && t[i] < t[best]);
        if better {
            best = i;
            best_len = len;
        }
    }
    let mut r = [t[best], t[(best + 1) % 3], t[(best + 2) % 3]];
    let area = signed_area(vertices[r[0]], vertices[r[1]], vertices[r[2]]);
    if area == 0.0 {
        return Err(Error::InvalidMesh(format!("degenerate triangle {t:?}")));
    }
    if area < 0.0 {
        r.swap(1, 2);
    }
    Ok(r)
}

/// Sequence of nested meshes `T_0, T_1, ...` with append-only vertex numbering.
#[derive(Clone, Debug, Default)]
pub struct MeshHierarchy {
    levels: Vec<Mesh>,
}

impl MeshHierarchy {
    pub fn new(root: Mesh) -> Self {
        Self { levels: vec![root] }
    }

    /// Appends a mesh that must be the direct refinement of the current finest level.
    pub fn push(&mut self, mesh: Mesh) -> Result<()> {
        if let Some(last) = self.levels.last() {
            let nested = mesh.level == last.level + 1
                && mesh.parent_of.len() == mesh.n_triangles()
                && mesh.first_new_vertex() == last.n_vertices()
                && mesh.vertices[..last.n_vertices()] == last.vertices[..];
            if !nested {
                return Err(Error::NotNested);
            }
        }
        self.levels.push(mesh);
        Ok(())
    }

    /// Refines the finest mesh with the given marking and appends the result.
    pub fn refine_finest(&mut self, marked: &[usize]) -> Result<&Mesh> {
        let fine = self.finest().refine(marked)?;
        self.levels.push(fine);
        Ok(self.finest())
    }

    pub fn levels(&self) -> &[Mesh] {
        &self.levels
    }

    pub fn finest(&self) -> &Mesh {
        self.levels.last().expect("hierarchy is never empty")
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Vertex indices created at `level` (empty for level 0).
    pub fn new_vertices(&self, level: usize) -> std::ops::Range<usize> {
        let m = &self.levels[level];
        m.first_new_vertex()..m.n_vertices()
    }

    /// `(#T_L - #T_0) / Σ_{j<L} #M_j` for the recorded markings.
    pub fn closure_cost(&self, markings: &[Vec<usize>]) -> Result<f64> {
        if markings.is_empty() || markings.len() + 1 != self.levels.len() {
            return Err(Error::EmptyMarking);
        }
        let marked: usize = markings.iter().map(Vec::len).sum();
        if marked == 0 {
            return Err(Error::EmptyMarking);
        }
        let added = self.finest().n_triangles() - self.levels[0].n_triangles();
        Ok(added as f64 / marked as f64)
    }
}
