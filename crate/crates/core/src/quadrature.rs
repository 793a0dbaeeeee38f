//! Fixed quadrature rules: the symmetric 7-point degree-5 rule on triangles
//! and 3-point Gauss-Legendre on edges.

use crate::mesh::Point;

/// Barycentric coordinates and weights (summing to one) of the 7-point rule.
pub fn triangle_rule() -> [([f64; 3], f64); 7] {
    let s15 = 15f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let b1 = (9.0 + 2.0 * s15) / 21.0;
    let w1 = (155.0 - s15) / 1200.0;
    let a2 = (6.0 + s15) / 21.0;
    let b2 = (9.0 - 2.0 * s15) / 21.0;
    let w2 = (155.0 + s15) / 1200.0;
    let c = 1.0 / 3.0;
    [
        ([c, c, c], 9.0 / 40.0),
        ([b1, a1, a1], w1),
        ([a1, b1, a1], w1),
        ([a1, a1, b1], w1),
        ([b2, a2, a2], w2),
        ([a2, b2, a2], w2),
        ([a2, a2, b2], w2),
    ]
}

/// Parameters in `[0, 1]` along an edge and weights (summing to one).
pub fn edge_rule() -> [(f64, f64); 3] {
    let d = 0.5 * (0.6f64).sqrt();
    [(0.5 - d, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + d, 5.0 / 18.0)]
}

#[inline]
pub fn map_barycentric(p: &[Point; 3], l: [f64; 3]) -> Point {
    [
        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
    ]
}

/// `∫_T f` for the triangle with the given corners and area.
pub fn integrate_triangle(p: &[Point; 3], area: f64, f: impl Fn(Point) -> f64) -> f64 {
    triangle_rule().iter().map(|&(l, w)| w * f(map_barycentric(p, l))).sum::<f64>() * area
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_integral_reference(i: i32, j: i32) -> f64 {
        // ∫ over the reference triangle of x^i y^j = i! j! / (i + j + 2)!
        let fact = |n: i32| (1..=n).map(f64::from).product::<f64>();
        fact(i) * fact(j) / fact(i + j + 2)
    }

    #[test]
    fn triangle_rule_is_exact_to_degree_five() {
        let p = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for i in 0..=5 {
            for j in 0..=(5 - i) {
                let q = integrate_triangle(&p, 0.5, |x| x[0].powi(i) * x[1].powi(j));
                let exact = monomial_integral_reference(i, j);
                assert!((q - exact).abs() < 1e-15, "x^{i} y^{j}: {q} vs {exact}");
            }
        }
        let q = integrate_triangle(&p, 0.5, |x| x[0].powi(6));
        assert!((q - monomial_integral_reference(6, 0)).abs() > 1e-8);
    }

    #[test]
    fn edge_rule_is_exact_to_degree_five() {
        for k in 0..=5 {
            let q: f64 = edge_rule().iter().map(|&(s, w)| w * s.powi(k)).sum();
            assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-15);
        }
    }
}
