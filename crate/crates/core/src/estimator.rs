//! Weighted residual indicators and Dörfler marking.

use crate::error::{Error, Result};
use crate::fem::{FeFunction, FeSpace};
use crate::mesh::{Point, NONE};
use crate::nonlinearity::Nonlinearity;
use crate::quadrature::{edge_rule, integrate_triangle};

/// `η(T)` for every triangle together with the total `η`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorField {
    squared: Vec<f64>,
    total: f64,
}

impl IndicatorField {
    pub fn from_squared(squared: Vec<f64>) -> Self {
        let total = squared.iter().sum::<f64>().sqrt();
        Self { squared, total }
    }

    pub fn len(&self) -> usize {
        self.squared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.squared.is_empty()
    }

    pub fn squared(&self) -> &[f64] {
        &self.squared
    }

    pub fn value(&self, t: usize) -> f64 {
        self.squared[t].sqrt()
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// `(Σ_{T ∈ subset} η(T)²)^{1/2}`.
    pub fn total_over(&self, subset: &[usize]) -> f64 {
        subset.iter().map(|&t| self.squared[t]).sum::<f64>().sqrt()
    }
}

/// Data-dependent parts of the estimator that do not change with the
/// discrete function: `|T| ||f||²_T` per triangle and the moments
/// `∫_e g`, `∫_e g²` per Neumann edge.
#[derive(Clone, Debug)]
pub struct Estimator {
    volume: Vec<f64>,
    neumann_moments: Vec<(f64, f64)>,
    sqrt_area: Vec<f64>,
    pub include_neumann: bool,
}

impl Estimator {
    pub fn new(space: &FeSpace, f: impl Fn(Point) -> f64, g: impl Fn(Point, Point) -> f64) -> Self {
        let mesh = space.mesh();
        let volume = space
            .geometry()
            .iter()
            .enumerate()
            .map(|(t, geo)| geo.area * integrate_triangle(&mesh.corners(t), geo.area, |x| f(x).powi(2)))
            .collect();
        let verts = mesh.vertices();
        let neumann_moments = space
            .neumann_edges()
            .iter()
            .map(|ne| {
                let (pa, pb) = (verts[ne.vertices[0]], verts[ne.vertices[1]]);
                let mut m = (0.0, 0.0);
                for (s, w) in edge_rule() {
                    let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                    let gx = g(x, ne.normal);
                    m.0 += w * ne.length * gx;
                    m.1 += w * ne.length * gx * gx;
                }
                m
            })
            .collect();
        let sqrt_area = space.geometry().iter().map(|g| g.area.sqrt()).collect();
        Self { volume, neumann_moments, sqrt_area, include_neumann: true }
    }

    /// `η(T, v)` for all triangles of `space`, which must be the space the
    /// estimator was built on.
    pub fn indicators(&self, space: &FeSpace, nl: &Nonlinearity, v: &FeFunction) -> Result<IndicatorField> {
        if self.volume.len() != space.mesh().n_triangles() {
            return Err(Error::DimensionMismatch { expected: self.volume.len(), found: space.mesh().n_triangles() });
        }
        let grads = space.gradients(v)?;
        let flux: Vec<[f64; 2]> = grads
            .iter()
            .map(|g| {
                let m = nl.mu([0.0, 0.0], g[0] * g[0] + g[1] * g[1]);
                [m * g[0], m * g[1]]
            })
            .collect();
        let mut sq = self.volume.clone();
        let edges = space.edges();
        let verts = space.mesh().vertices();
        for (e, &[a, b]) in edges.edges.iter().enumerate() {
            let [t1, t2] = edges.edge_triangles[e];
            if t2 == NONE {
                continue;
            }
            let (pa, pb) = (verts[a], verts[b]);
            // |e| n_e, unnormalized
            let nv = [pb[1] - pa[1], pa[0] - pb[0]];
            let j = (flux[t1][0] - flux[t2][0]) * nv[0] + (flux[t1][1] - flux[t2][1]) * nv[1];
            // |e| [σ·n]² = (|e| [σ·n])² / |e|
            let len = (nv[0] * nv[0] + nv[1] * nv[1]).sqrt();
            let contrib = j * j / len;
            sq[t1] += self.sqrt_area[t1] * contrib;
            sq[t2] += self.sqrt_area[t2] * contrib;
        }
        if self.include_neumann {
            for (ne, &(qg, qg2)) in space.neumann_edges().iter().zip(&self.neumann_moments) {
                let t = ne.triangle;
                let c = flux[t][0] * ne.normal[0] + flux[t][1] * ne.normal[1];
                let r = (qg2 - 2.0 * c * qg + c * c * ne.length).max(0.0);
                sq[t] += self.sqrt_area[t] * r;
            }
        }
        Ok(IndicatorField::from_squared(sq))
    }
}

/// Shortest prefix of the triangles sorted by `η(T)` (descending, ties by
/// index) carrying at least `θ²` of the estimator mass `η²`.
pub fn doerfler_mark(field: &IndicatorField, theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidConfig(format!("theta = {theta} outside (0, 1]")));
    }
    if !(field.total() > 0.0) {
        return Err(Error::ZeroEstimator);
    }
    let sq = field.squared();
    let mut order: Vec<usize> = (0..sq.len()).collect();
    order.sort_by(|&a, &b| sq[b].total_cmp(&sq[a]).then(a.cmp(&b)));
    if theta == 1.0 {
        order.retain(|&t| sq[t] > 0.0);
        return Ok(order);
    }
    let goal = theta * theta * order.iter().map(|&t| sq[t]).sum::<f64>();
    let mut acc = 0.0;
    for (i, &t) in order.iter().enumerate() {
        acc += sq[t];
        if acc >= goal {
            order.truncate(i + 1);
            return Ok(order);
        }
    }
    Ok(order)
}
