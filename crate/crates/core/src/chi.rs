//! Surface-to-volume ratio of the homogenized model from the cell layout.
//!
//! Each cell is counted as a cuboid whose in-plane edges include the
//! junction gap (the full pericell pitch in x and y) and whose height is the
//! body height. The result overestimates the true membrane area because the
//! junctions do not span the whole cell face.

use crate::geometry::{BoxSpec, EmiCellLayout, TaggedMesh};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiReport {
    /// mm²
    pub single_cell_area: f64,
    /// mm²
    pub total_area: f64,
    /// mm³
    pub domain_volume: f64,
    /// mm⁻¹
    pub chi_raw: f64,
    /// mm⁻¹
    pub chi_rounded: f64,
}

/// Rounds `chi_raw` down to a multiple of `rounding`.
pub fn compute_chi(layout: &EmiCellLayout, domain: &BoxSpec, rounding: f64) -> ChiReport {
    let [lx, ly, _] = layout.pericell_box;
    let lz = layout.body_extents[2];
    let single_cell_area = 2.0 * (lx * ly + lx * lz + ly * lz);
    let total_area = single_cell_area * layout.n_cells() as f64;
    let domain_volume = domain.volume();
    let chi_raw = total_area / domain_volume;
    ChiReport { single_cell_area, total_area, domain_volume, chi_raw, chi_rounded: round_down(chi_raw, rounding) }
}

fn round_down(x: f64, step: f64) -> f64 {
    // tolerate representation error just below a multiple
    ((x / step) + 1e-9).floor() * step
}

/// Summed membrane facet area of `mesh` over the domain volume.
pub fn mesh_chi(mesh: &TaggedMesh, domain: &BoxSpec) -> f64 {
    mesh.total_membrane_area() / domain.volume()
}
