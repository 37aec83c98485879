//! Linear Lagrange elements on tetrahedra and triangles.

use crate::geometry::{cross, norm, signed_volume, sub, Point3};

/// Gradients of the four barycentric coordinates and the volume.
pub fn barycentric_gradients(p: &[Point3; 4]) -> ([Point3; 4], f64) {
    let vol6 = 6.0 * signed_volume(&p[0], &p[1], &p[2], &p[3]);
    let mut g = [[0.0; 3]; 4];
    for (i, gi) in g.iter_mut().enumerate() {
        let [a, b, c] = [p[(i + 1) % 4], p[(i + 2) % 4], p[(i + 3) % 4]];
        // gradient is normal to the opposite face, scaled so that λ_i(p_i) = 1
        let n = cross(&sub(&b, &a), &sub(&c, &a));
        let s = n[0] * (p[i][0] - a[0]) + n[1] * (p[i][1] - a[1]) + n[2] * (p[i][2] - a[2]);
        *gi = [n[0] / s, n[1] / s, n[2] / s];
    }
    (g, vol6.abs() / 6.0)
}

/// `∫_K (D ∇λ_a)·∇λ_b` for a diagonal conductivity `D`.
pub fn local_stiffness(p: &[Point3; 4], diag: &Point3) -> [[f64; 4]; 4] {
    let (g, vol) = barycentric_gradients(p);
    let mut k = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            k[a][b] = vol * (0..3).map(|d| diag[d] * g[a][d] * g[b][d]).sum::<f64>();
        }
    }
    k
}

/// Consistent mass `∫_K λ_a λ_b = |K| (1 + δ_ab) / 20`.
pub fn local_mass(vol: f64) -> [[f64; 4]; 4] {
    let mut m = [[vol / 20.0; 4]; 4];
    for (a, row) in m.iter_mut().enumerate() {
        row[a] = vol / 10.0;
    }
    m
}

pub fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * norm(&cross(&sub(b, a), &sub(c, a)))
}

/// Surface mass `∫_F λ_a λ_b = |F| (1 + δ_ab) / 12`.
pub fn surface_mass(area: f64) -> [[f64; 3]; 3] {
    let mut m = [[area / 12.0; 3]; 3];
    for (a, row) in m.iter_mut().enumerate() {
        row[a] = area / 6.0;
    }
    m
}
