//! Backward-Euler system of the cell-by-cell model in mixed form.
//!
//! Unknowns, in order: the normal flux `q` of the current `σ∇u` on every
//! facet (RT0), the potential `u` on every tet (P0), the membrane potential
//! `v` at every (node, cell) pair on the membranes, and the junction
//! potential `w` at every (node, cell pair) on the gap junctions (both P1).
//!
//! With `A` the RT0 mass weighted by `1/σ`, `B` the divergence coupling and
//! `C`, `G` the traces on membranes and junctions:
//!
//! ```text
//! [ A    Bᵀ  -Cᵀ      -Gᵀ       ] [q]   [ 0                   ]
//! [ B    0    0        0        ] [u] = [ 0                   ]
//! [ -C   0   -Cm/dt M  0        ] [v]   [ -Cm/dt M ṽ          ]
//! [ -G   0    0       -Cg/dt αG ] [w]   [ -Cg/dt M_g wⁿ       ]
//! ```
//!
//! The membrane and gap rows express `C dv/dt = -q·n` with `n` pointing out
//! of the intracellular side (out of the lower-indexed cell on junctions),
//! negated so the matrix is symmetric. It is a saddle-point matrix, hence
//! indefinite. Exterior facets carry `q = 0`, and the potential of one
//! extracellular tet is pinned to zero.

use std::collections::HashMap;

use super::{constrain, p1, rt0, CsrMatrix, DofMap, FemError, LinearSystem};
use crate::geometry::{CellId, SurfaceTag, TaggedMesh, VolumeTag};

/// How the ohmic gap current enters the implicit junction equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapForm {
    /// `(C_g/dt)(1 + 1/R)`, the coefficient exactly as printed.
    Literal,
    /// `(C_g/dt)(1 + dt/(R C_g))`, Backward Euler applied to `C_g w' + w/R`.
    Dimensional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmiParams {
    pub sigma_i: f64,
    pub sigma_e: f64,
    /// Membrane capacitance, µF/mm².
    pub capacitance: f64,
    /// Gap-junction capacitance, µF/mm².
    pub gap_capacitance: f64,
    /// Gap-junction resistance, mV·mm²/µA.
    pub gap_resistance: f64,
    pub gap_form: GapForm,
}

impl Default for EmiParams {
    fn default() -> Self {
        Self {
            sigma_i: 0.5,
            sigma_e: 2.0,
            capacitance: 0.01,
            gap_capacitance: 0.01,
            gap_resistance: 0.15,
            gap_form: GapForm::Literal,
        }
    }
}

impl EmiParams {
    pub fn validate(&self) -> Result<(), FemError> {
        let named = [
            ("sigma_i", self.sigma_i),
            ("sigma_e", self.sigma_e),
            ("capacitance", self.capacitance),
            ("gap_capacitance", self.gap_capacitance),
        ];
        for (name, value) in named {
            if !(value > 0.0) || !value.is_finite() {
                return Err(FemError::InvalidParameter { name, value, reason: "must be positive" });
            }
        }
        if !(self.gap_resistance > 0.0) {
            return Err(FemError::InvalidParameter {
                name: "gap_resistance",
                value: self.gap_resistance,
                reason: "must be positive (may be infinite)",
            });
        }
        Ok(())
    }

    /// Multiplier `α` of `(C_g/dt) M_g` on the implicit side.
    pub fn gap_factor(&self, dt: f64) -> f64 {
        match self.gap_form {
            GapForm::Literal => 1.0 + 1.0 / self.gap_resistance,
            GapForm::Dimensional => 1.0 + dt / (self.gap_resistance * self.gap_capacitance),
        }
    }
}

/// Degree-of-freedom bookkeeping for the mixed system.
#[derive(Debug, Clone, PartialEq)]
pub struct EmiDofs {
    pub n_facets: usize,
    pub n_tets: usize,
    /// Membrane unknowns: (mesh vertex, owning cell).
    pub membrane: Vec<(u32, CellId)>,
    /// Junction unknowns: (mesh vertex, (lower cell, higher cell)).
    pub gap: Vec<(u32, (CellId, CellId))>,
    /// Tet whose potential is pinned.
    pub pinned_tet: usize,
}

impl EmiDofs {
    /// Enumerates unknowns by a single pass over the facets.
    pub fn enumerate(mesh: &TaggedMesh) -> Result<Self, FemError> {
        let mut membrane = Vec::new();
        let mut gap = Vec::new();
        let mut seen_m: HashMap<(u32, CellId), usize> = HashMap::new();
        let mut seen_g: HashMap<(u32, (CellId, CellId)), usize> = HashMap::new();
        for (f, tag) in mesh.facet_tags.iter().enumerate() {
            match *tag {
                SurfaceTag::Membrane(k) => {
                    for &v in &mesh.facets[f] {
                        seen_m.entry((v, k)).or_insert_with(|| {
                            membrane.push((v, k));
                            membrane.len() - 1
                        });
                    }
                }
                SurfaceTag::Gap(k, l) => {
                    for &v in &mesh.facets[f] {
                        seen_g.entry((v, (k, l))).or_insert_with(|| {
                            gap.push((v, (k, l)));
                            gap.len() - 1
                        });
                    }
                }
                _ => {}
            }
        }
        if membrane.is_empty() {
            return Err(FemError::NoCells);
        }
        let pinned_tet = mesh
            .tet_tags
            .iter()
            .position(|t| *t == VolumeTag::Extracellular)
            .ok_or(FemError::NoCells)?;
        Ok(Self { n_facets: mesh.facets.len(), n_tets: mesh.tets.len(), membrane, gap, pinned_tet })
    }

    pub fn len(&self) -> usize {
        self.n_facets + self.n_tets + self.membrane.len() + self.gap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn u_offset(&self) -> usize {
        self.n_facets
    }

    pub fn v_offset(&self) -> usize {
        self.n_facets + self.n_tets
    }

    pub fn w_offset(&self) -> usize {
        self.v_offset() + self.membrane.len()
    }

    pub fn dof_map(&self) -> DofMap {
        let (u, v, w) = (self.u_offset(), self.v_offset(), self.w_offset());
        DofMap {
            blocks: vec![("q", 0..u), ("u", u..v), ("v_m", v..w), ("w_g", w..self.len())],
            pinned: u + self.pinned_tet,
        }
    }
}

/// One implicit step's solution, split by field.
#[derive(Debug, Clone, PartialEq)]
pub struct EmiSolution {
    pub q: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug)]
pub struct EmiDiscretization {
    pub dofs: EmiDofs,
    pub dt: f64,
    pub params: EmiParams,
    pub membrane_mass: CsrMatrix,
    pub gap_mass: CsrMatrix,
    pub system: LinearSystem,
}

pub fn assemble_emi(mesh: &TaggedMesh, params: &EmiParams, dt: f64) -> Result<EmiDiscretization, FemError> {
    if !(dt > 0.0) {
        return Err(FemError::NonPositiveStep(dt));
    }
    params.validate()?;
    let dofs = EmiDofs::enumerate(mesh)?;
    let (matrix, membrane_mass, gap_mass) = assemble_matrix(mesh, &dofs, params, dt)?;
    let n = dofs.len();
    let mut signs = vec![-1i8; n];
    signs[..dofs.n_facets].iter_mut().for_each(|s| *s = 1);
    let system = LinearSystem::new(matrix, dofs.dof_map(), Some(&signs))?;
    Ok(EmiDiscretization { dofs, dt, params: *params, membrane_mass, gap_mass, system })
}

fn assemble_matrix(
    mesh: &TaggedMesh,
    dofs: &EmiDofs,
    params: &EmiParams,
    dt: f64,
) -> Result<(CsrMatrix, CsrMatrix, CsrMatrix), FemError> {
    let n = dofs.len();
    let (u0, v0, w0) = (dofs.u_offset(), dofs.v_offset(), dofs.w_offset());
    let m_index: HashMap<(u32, CellId), usize> =
        dofs.membrane.iter().enumerate().map(|(i, &key)| (key, i)).collect();
    let g_index: HashMap<(u32, (CellId, CellId)), usize> =
        dofs.gap.iter().enumerate().map(|(i, &key)| (key, i)).collect();

    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(mesh.tets.len() * 24);
    for (t, tet) in mesh.tets.iter().enumerate() {
        let p = tet.map(|v| mesh.vertices[v as usize]);
        let (_, vol) = p1::barycentric_gradients(&p);
        let sigma = match mesh.tet_tags[t] {
            VolumeTag::Intracellular(_) => params.sigma_i,
            VolumeTag::Extracellular => params.sigma_e,
        };
        let fids = mesh.tet_facets[t];
        let s: [f64; 4] = std::array::from_fn(|i| {
            if mesh.facet_tets[fids[i] as usize][0] as usize == t {
                1.0
            } else {
                -1.0
            }
        });
        let a = rt0::local_mass(&p, &s, vol);
        for i in 0..4 {
            let fi = fids[i] as usize;
            for j in 0..4 {
                entries.push((fi, fids[j] as usize, a[i][j] / sigma));
            }
            entries.push((u0 + t, fi, s[i]));
            entries.push((fi, u0 + t, s[i]));
        }
    }

    let c_m = params.capacitance / dt;
    let c_g = params.gap_capacitance / dt * params.gap_factor(dt);
    let mut m_mass = Vec::new();
    let mut g_mass = Vec::new();
    for (f, tag) in mesh.facet_tags.iter().enumerate() {
        let tri = mesh.facets[f];
        let [inner, outer] = mesh.facet_tets[f];
        let (offset, coef, local): (usize, f64, [usize; 3]) = match *tag {
            SurfaceTag::Membrane(k) => {
                if mesh.tet_tags[inner as usize] != VolumeTag::Intracellular(k)
                    || mesh.tet_tags[outer as usize] != VolumeTag::Extracellular
                {
                    return Err(FemError::Orientation { facet: f, reason: format!("membrane of cell {k}") });
                }
                (v0, c_m, tri.map(|v| m_index[&(v, k)]))
            }
            SurfaceTag::Gap(k, l) => {
                if mesh.tet_tags[inner as usize] != VolumeTag::Intracellular(k)
                    || mesh.tet_tags[outer as usize] != VolumeTag::Intracellular(l)
                {
                    return Err(FemError::Orientation { facet: f, reason: format!("junction {k}-{l}") });
                }
                (w0, c_g, tri.map(|v| g_index[&(v, (k, l))]))
            }
            _ => continue,
        };
        let area = mesh.facet_area(f);
        let sm = p1::surface_mass(area);
        for a in 0..3 {
            entries.push((f, offset + local[a], -1.0 / 3.0));
            entries.push((offset + local[a], f, -1.0 / 3.0));
            for b in 0..3 {
                entries.push((offset + local[a], offset + local[b], -coef * sm[a][b]));
                let target = if offset == v0 { &mut m_mass } else { &mut g_mass };
                target.push((local[a], local[b], sm[a][b]));
            }
        }
    }

    let mut fixed = vec![false; n];
    for (f, tag) in mesh.facet_tags.iter().enumerate() {
        fixed[f] = *tag == SurfaceTag::Exterior;
    }
    let pinned = u0 + dofs.pinned_tet;
    fixed[pinned] = true;
    constrain(&mut entries, &fixed, &|i| if i == pinned { -1.0 } else { 1.0 });

    Ok((
        CsrMatrix::from_triplets(n, entries),
        CsrMatrix::from_triplets(dofs.membrane.len(), m_mass),
        CsrMatrix::from_triplets(dofs.gap.len(), g_mass),
    ))
}

impl EmiDiscretization {
    pub fn rhs(&self, v_tilde: &[f64], w_prev: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.dofs.len()];
        let mv = self.membrane_mass.mul_vec(v_tilde);
        let c_m = self.params.capacitance / self.dt;
        for (i, x) in mv.iter().enumerate() {
            b[self.dofs.v_offset() + i] = -c_m * x;
        }
        if !w_prev.is_empty() {
            let mw = self.gap_mass.mul_vec(w_prev);
            let c_g = self.params.gap_capacitance / self.dt;
            for (i, x) in mw.iter().enumerate() {
                b[self.dofs.w_offset() + i] = -c_g * x;
            }
        }
        b
    }

    pub fn split(&self, x: &[f64]) -> EmiSolution {
        let d = &self.dofs;
        EmiSolution {
            q: x[..d.u_offset()].to_vec(),
            u: x[d.u_offset()..d.v_offset()].to_vec(),
            v: x[d.v_offset()..d.w_offset()].to_vec(),
            w: x[d.w_offset()..].to_vec(),
        }
    }

    pub fn step(&self, v_tilde: &[f64], w_prev: &[f64]) -> Result<EmiSolution, FemError> {
        let x = self.system.solve(&self.rhs(v_tilde, w_prev))?;
        Ok(self.split(&x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_emi_mesh, EmiCellLayout};

    const H: f64 = 0.005;

    #[test]
    fn two_cell_unknown_count_matches_traversal() {
        let mesh = build_emi_mesh(EmiCellLayout::with_cells(2, 1), H).unwrap();
        let d = assemble_emi(&mesh, &EmiParams::default(), 0.1).unwrap();
        // independent count: distinct (vertex, cell) over membrane facets
        let mut m = std::collections::BTreeSet::new();
        let mut g = std::collections::BTreeSet::new();
        for (f, t) in mesh.facet_tags.iter().enumerate() {
            for &v in &mesh.facets[f] {
                match t {
                    SurfaceTag::Membrane(k) => {
                        m.insert((v, *k));
                    }
                    SurfaceTag::Gap(..) => {
                        g.insert(v);
                    }
                    _ => {}
                }
            }
        }
        assert_eq!(d.dofs.len(), mesh.facets.len() + mesh.tets.len() + m.len() + g.len());
        assert_eq!(g.len(), 3 * 2);
        assert!(d.system.matrix().asymmetry() <= 1e-12);
    }

    #[test]
    fn isolated_cell_has_no_gap_unknowns() {
        let mesh = build_emi_mesh(EmiCellLayout::with_cells(1, 1), H).unwrap();
        let d = assemble_emi(&mesh, &EmiParams::default(), 0.1).unwrap();
        assert!(d.dofs.gap.is_empty());
        let v = vec![-83.0; d.dofs.membrane.len()];
        let sol = d.step(&v, &[]).unwrap();
        // uniform membrane potential is an equilibrium: no current flows
        assert!(sol.v.iter().all(|x| (x + 83.0).abs() < 1e-8));
        assert!(sol.q.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn infinite_resistance_is_purely_capacitive() {
        let p = EmiParams { gap_resistance: f64::INFINITY, ..Default::default() };
        assert_eq!(p.gap_factor(0.1), 1.0);
        let p = EmiParams { gap_resistance: f64::INFINITY, gap_form: GapForm::Dimensional, ..Default::default() };
        assert_eq!(p.gap_factor(0.1), 1.0);
    }

    #[test]
    fn membrane_perturbation_decays() {
        let mesh = build_emi_mesh(EmiCellLayout::with_cells(2, 1), H).unwrap();
        let d = assemble_emi(&mesh, &EmiParams::default(), 0.1).unwrap();
        let nm = d.dofs.membrane.len();
        let mut v = vec![-83.0; nm];
        for (i, &(_, k)) in d.dofs.membrane.iter().enumerate() {
            if k == 1 {
                v[i] = -40.0;
            }
        }
        let w = vec![0.0; d.dofs.gap.len()];
        let energy = |v: &[f64]| {
            let dv: Vec<f64> = v.iter().map(|x| x + 83.0).collect();
            let m = d.membrane_mass.mul_vec(&dv);
            dv.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>()
        };
        let sol = d.step(&v, &w).unwrap();
        assert!(energy(&sol.v) < energy(&v));
        // charge flows out of cell 1 into cell 2: cell 2 depolarizes slightly
        let mean = |k: CellId, v: &[f64]| {
            let xs: Vec<f64> = d.dofs.membrane.iter().zip(v).filter(|((_, c), _)| *c == k).map(|(_, x)| *x).collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        assert!(mean(2, &sol.v) > -83.0);
        assert!(mean(1, &sol.v) < -40.0);
    }

    /// Mixed Poisson `-div(σ∇u) = f` on the unit cube with `u = 0` on the
    /// boundary, imposed naturally; returns the L2 error of the P0 potential.
    fn mixed_poisson_error(cells: usize) -> f64 {
        use crate::fem::Factorization;
        use crate::geometry::{build_bidomain_mesh, BoxSpec};
        use std::f64::consts::PI;
        let h = 1.0 / cells as f64;
        let mesh = build_bidomain_mesh(BoxSpec::with_extents([1.0; 3]).unwrap(), h).unwrap();
        let sigma = 2.0;
        let exact = |x: &[f64; 3]| (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin();
        let (nf, nt) = (mesh.facets.len(), mesh.tets.len());
        let mut entries = Vec::new();
        let mut rhs = vec![0.0; nf + nt];
        for (t, tet) in mesh.tets.iter().enumerate() {
            let p = tet.map(|v| mesh.vertices[v as usize]);
            let vol = mesh.tet_volume(t);
            let fids = mesh.tet_facets[t];
            let s: [f64; 4] =
                std::array::from_fn(|i| if mesh.facet_tets[fids[i] as usize][0] as usize == t { 1.0 } else { -1.0 });
            let a = rt0::local_mass(&p, &s, vol);
            for i in 0..4 {
                for j in 0..4 {
                    entries.push((fids[i] as usize, fids[j] as usize, a[i][j] / sigma));
                }
                entries.push((nf + t, fids[i] as usize, s[i]));
                entries.push((fids[i] as usize, nf + t, s[i]));
            }
            // div q = -f with f = 3π²σ u*, centroid rule
            let fbar = exact(&mesh.tet_centroid(t));
            rhs[nf + t] = -3.0 * PI * PI * sigma * fbar * vol;
        }
        let m = CsrMatrix::from_triplets(nf + nt, entries);
        let mut signs = vec![1i8; nf + nt];
        signs[nf..].iter_mut().for_each(|s| *s = -1);
        let f = Factorization::new(m, Some(&signs)).unwrap();
        let x = f.solve(&rhs).unwrap();
        (0..nt)
            .map(|t| {
                let c = mesh.tet_centroid(t);
                mesh.tet_volume(t) * (x[nf + t] - exact(&c)).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn mixed_potential_converges_under_refinement() {
        let e1 = mixed_poisson_error(4);
        let e2 = mixed_poisson_error(8);
        let order = (e1 / e2).log2();
        assert!(order >= 0.9, "observed order {order} ({e1:e} -> {e2:e})");
    }
}
