//! Backward-Euler system of the homogenized bidomain model with P1 elements.
//!
//! Unknowns are `[v | u_e]` at every mesh node. With `M` the mass matrix and
//! `K_i`, `K_e` the stiffness matrices scaled by `1/(χ C_m)`, one implicit
//! step solves
//!
//! ```text
//! [ M/dt + K_i   K_i       ] [v  ]   [ M ṽ / dt ]
//! [ K_i          K_i + K_e ] [u_e] = [ 0        ]
//! ```
//!
//! with homogeneous Neumann conditions. The `u_e` value of node 0 is pinned
//! to zero, which makes the matrix symmetric positive definite.

use super::{p1, CsrMatrix, DofMap, FemError, LinearSystem};
use crate::geometry::{Point3, TaggedMesh};

/// Conductivities (µA/(mV·mm)) are diagonal tensors in (x, y, z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidomainParams {
    pub sigma_i: Point3,
    pub sigma_e: Point3,
    /// µF/mm²
    pub capacitance: f64,
    /// Surface-to-volume ratio (1/mm).
    pub chi: f64,
}

impl Default for BidomainParams {
    fn default() -> Self {
        Self {
            sigma_i: [0.2525, 0.0222, 0.0222],
            sigma_e: [0.821, 0.215, 0.215],
            capacitance: 0.01,
            chi: 150.0,
        }
    }
}

impl BidomainParams {
    pub fn validate(&self) -> Result<(), FemError> {
        let named = [
            ("sigma_i.x", self.sigma_i[0]),
            ("sigma_i.y", self.sigma_i[1]),
            ("sigma_i.z", self.sigma_i[2]),
            ("sigma_e.x", self.sigma_e[0]),
            ("sigma_e.y", self.sigma_e[1]),
            ("sigma_e.z", self.sigma_e[2]),
            ("capacitance", self.capacitance),
            ("chi", self.chi),
        ];
        for (name, value) in named {
            if !(value > 0.0) || !value.is_finite() {
                return Err(FemError::InvalidParameter { name, value, reason: "must be positive" });
            }
        }
        Ok(())
    }
}

/// The unconstrained block operator (no pinning), for inspection and tests.
pub fn assemble_bidomain_operator(
    mesh: &TaggedMesh,
    params: &BidomainParams,
    dt: f64,
) -> Result<(CsrMatrix, CsrMatrix), FemError> {
    if !(dt > 0.0) {
        return Err(FemError::NonPositiveStep(dt));
    }
    if !(params.capacitance > 0.0 && params.chi > 0.0) {
        return Err(FemError::InvalidParameter {
            name: "capacitance*chi",
            value: params.capacitance * params.chi,
            reason: "must be positive",
        });
    }
    let n = mesh.vertices.len();
    let scale = 1.0 / (params.chi * params.capacitance);
    let mut block = Vec::with_capacity(mesh.tets.len() * 64);
    let mut mass = Vec::with_capacity(mesh.tets.len() * 16);
    for tet in &mesh.tets {
        let p = tet.map(|v| mesh.vertices[v as usize]);
        let (_, vol) = p1::barycentric_gradients(&p);
        let ki = p1::local_stiffness(&p, &params.sigma_i);
        let ke = p1::local_stiffness(&p, &params.sigma_e);
        let m = p1::local_mass(vol);
        for a in 0..4 {
            let i = tet[a] as usize;
            for b in 0..4 {
                let j = tet[b] as usize;
                let kij = scale * ki[a][b];
                mass.push((i, j, m[a][b]));
                block.push((i, j, m[a][b] / dt + kij));
                block.push((i, n + j, kij));
                block.push((n + i, j, kij));
                block.push((n + i, n + j, kij + scale * ke[a][b]));
            }
        }
    }
    Ok((CsrMatrix::from_triplets(2 * n, block), CsrMatrix::from_triplets(n, mass)))
}

/// Factorized bidomain step operator plus the mass matrix for right-hand sides.
#[derive(Debug)]
pub struct BidomainDiscretization {
    pub n_nodes: usize,
    pub dt: f64,
    pub mass: CsrMatrix,
    pub system: LinearSystem,
}

pub fn assemble_bidomain(
    mesh: &TaggedMesh,
    params: &BidomainParams,
    dt: f64,
) -> Result<BidomainDiscretization, FemError> {
    let (mut matrix, mass) = assemble_bidomain_operator(mesh, params, dt)?;
    let n = mesh.vertices.len();
    let pinned = n;
    let diag = matrix.get(pinned, pinned);
    matrix.pin(pinned, if diag > 0.0 { diag } else { 1.0 });
    let dofs = DofMap { blocks: vec![("v", 0..n), ("u_e", n..2 * n)], pinned };
    let system = LinearSystem::new(matrix, dofs, None)?;
    Ok(BidomainDiscretization { n_nodes: n, dt, mass, system })
}

impl BidomainDiscretization {
    pub fn rhs(&self, v_tilde: &[f64]) -> Vec<f64> {
        let mut b = self.mass.mul_vec(v_tilde);
        b.iter_mut().for_each(|x| *x /= self.dt);
        b.resize(2 * self.n_nodes, 0.0);
        b
    }

    /// One implicit diffusion step: returns `(v, u_e)`.
    pub fn step(&self, v_tilde: &[f64]) -> Result<(Vec<f64>, Vec<f64>), FemError> {
        let mut x = self.system.solve(&self.rhs(v_tilde))?;
        let ue = x.split_off(self.n_nodes);
        Ok((x, ue))
    }
}
