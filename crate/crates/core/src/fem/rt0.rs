//! Lowest-order Raviart–Thomas elements with unit-flux facet degrees of freedom.
//!
//! On a tet `K` with vertices `p_0..p_3`, the basis function attached to the
//! facet opposite `p_i` is `φ_i = s_i (x - p_i) / (3|K|)`, where `s_i = ±1`
//! is the orientation of that facet relative to the outward normal of `K`.
//! Then `∫_{F_i} φ_i·n = s_i`, `φ_i·n` vanishes on the other facets and
//! `∫_K div φ_i = s_i`.

use crate::geometry::{dot, sub, Point3};

/// `∫_K φ_i·φ_j` for signs `s`, volume `vol`.
pub fn local_mass(p: &[Point3; 4], s: &[f64; 4], vol: f64) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in i..4 {
            let y: [Point3; 4] = std::array::from_fn(|a| sub(&p[a], &p[i]));
            let z: [Point3; 4] = std::array::from_fn(|b| sub(&p[b], &p[j]));
            let sy = y.iter().fold([0.0; 3], |acc, v| [acc[0] + v[0], acc[1] + v[1], acc[2] + v[2]]);
            let sz = z.iter().fold([0.0; 3], |acc, v| [acc[0] + v[0], acc[1] + v[1], acc[2] + v[2]]);
            let diag: f64 = (0..4).map(|a| dot(&y[a], &z[a])).sum();
            let v = s[i] * s[j] * (dot(&sy, &sz) + diag) / (180.0 * vol);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Value of `φ_i` at `x`.
pub fn basis_value(p: &[Point3; 4], s: &[f64; 4], vol: f64, i: usize, x: &Point3) -> Point3 {
    let d = sub(x, &p[i]);
    let c = s[i] / (3.0 * vol);
    [c * d[0], c * d[1], c * d[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::p1::barycentric_gradients;

    /// Degree-2 exact rule on tets (4 points).
    fn quad_rule(p: &[Point3; 4]) -> Vec<(Point3, f64)> {
        let (_, vol) = barycentric_gradients(p);
        let a = 0.585_410_196_624_968_5;
        let b = 0.138_196_601_125_010_5;
        (0..4)
            .map(|k| {
                let mut x = [0.0; 3];
                for (v, pv) in p.iter().enumerate() {
                    let w = if v == k { a } else { b };
                    for d in 0..3 {
                        x[d] += w * pv[d];
                    }
                }
                (x, vol / 4.0)
            })
            .collect()
    }

    #[test]
    fn closed_form_mass_matches_quadrature() {
        let p = [[0.1, 0.0, 0.2], [1.3, 0.1, 0.0], [0.2, 0.9, 0.1], [0.0, 0.3, 1.1]];
        let s = [1.0, -1.0, 1.0, -1.0];
        let (_, vol) = barycentric_gradients(&p);
        let m = local_mass(&p, &s, vol);
        for i in 0..4 {
            for j in 0..4 {
                let q: f64 = quad_rule(&p)
                    .iter()
                    .map(|(x, w)| w * dot(&basis_value(&p, &s, vol, i, x), &basis_value(&p, &s, vol, j, x)))
                    .sum();
                assert!((m[i][j] - q).abs() < 1e-12 * q.abs().max(1.0), "{i}{j}: {} vs {q}", m[i][j]);
            }
        }
    }

    #[test]
    fn unit_flux_through_own_facet() {
        let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let vol = 1.0 / 6.0;
        let s = [1.0; 4];
        // facet opposite p_3 is z = 0, outward normal -z, area 1/2
        let centroid = [1.0 / 3.0, 1.0 / 3.0, 0.0];
        let phi = basis_value(&p, &s, vol, 3, &centroid);
        assert!((-phi[2] * 0.5 - 1.0).abs() < 1e-14);
        // φ_0 has zero normal component on z = 0
        assert!(basis_value(&p, &s, vol, 0, &centroid)[2].abs() < 1e-14);
    }
}
