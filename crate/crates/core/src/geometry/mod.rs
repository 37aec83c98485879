//! Structured tetrahedral meshes with subdomain and interface tags.
//!
//! Two builders are provided: [`build_bidomain_mesh`] for the homogenized
//! cuboid and [`build_emi_mesh`] for the cell-by-cell tissue. Both go through
//! the same tensor-product hex grid, split every hex into six tetrahedra along
//! its main diagonal, and derive facet tags from the volume tags of the two
//! tets sharing each facet.

mod emi;
mod grid;

use std::collections::VecDeque;

pub use emi::{build_emi_mesh, EmiCellLayout};
pub use grid::TensorGrid;

use thiserror::Error;

/// Point or vector in millimetres.
pub type Point3 = [f64; 3];

/// 1-based cell index, row-major over the cell lattice with x fastest.
pub type CellId = u32;

/// Sentinel for the missing neighbour of a boundary facet.
pub const NO_TET: u32 = u32::MAX;

/// Closed-boundary tolerance (mm) for point-in-box tests.
pub const GEOM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box extents must be strictly positive, got {0:?}")]
    NonPositiveExtent(Point3),
    #[error("mesh pitch must be positive, got {0}")]
    NonPositivePitch(f64),
    #[error("extent {extent} mm along {axis} is not an integer multiple of h = {h} mm")]
    NotDivisible { axis: char, extent: f64, h: f64 },
    #[error("invalid cell layout: {0}")]
    Layout(String),
    #[error("junction would protrude outside the two cells' boxes: {0}")]
    JunctionProtrudes(String),
    #[error("region {0:?} selects nothing")]
    EmptySelection(BoxSpec),
}

/// Axis-aligned box given by its lower corner and extents (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSpec {
    pub origin: Point3,
    pub extents: Point3,
}

impl BoxSpec {
    pub fn new(origin: Point3, extents: Point3) -> Result<Self, GeometryError> {
        if extents.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(GeometryError::NonPositiveExtent(extents));
        }
        Ok(Self { origin, extents })
    }

    /// Box anchored at the origin.
    pub fn with_extents(extents: Point3) -> Result<Self, GeometryError> {
        Self::new([0.0; 3], extents)
    }

    pub fn upper(&self) -> Point3 {
        [
            self.origin[0] + self.extents[0],
            self.origin[1] + self.extents[1],
            self.origin[2] + self.extents[2],
        ]
    }

    pub fn center(&self) -> Point3 {
        [
            self.origin[0] + 0.5 * self.extents[0],
            self.origin[1] + 0.5 * self.extents[1],
            self.origin[2] + 0.5 * self.extents[2],
        ]
    }

    pub fn volume(&self) -> f64 {
        self.extents[0] * self.extents[1] * self.extents[2]
    }

    /// Closed containment with the [`GEOM_TOL`] slack.
    pub fn contains(&self, p: &Point3) -> bool {
        let hi = self.upper();
        (0..3).all(|a| p[a] >= self.origin[a] - GEOM_TOL && p[a] <= hi[a] + GEOM_TOL)
    }

    pub fn intersects(&self, other: &BoxSpec) -> bool {
        let (a_hi, b_hi) = (self.upper(), other.upper());
        (0..3).all(|a| self.origin[a] <= b_hi[a] + GEOM_TOL && other.origin[a] <= a_hi[a] + GEOM_TOL)
    }
}

/// Volume label of a tetrahedron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VolumeTag {
    Intracellular(CellId),
    Extracellular,
}

/// Surface label of a facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SurfaceTag {
    /// Between `Intracellular(k)` and `Extracellular`.
    Membrane(CellId),
    /// Between two intracellular subdomains, lower index first.
    Gap(CellId, CellId),
    /// On the bounding box.
    Exterior,
    /// Interior of a single subdomain.
    Internal,
}

/// Tetrahedral mesh with volume and surface tags.
///
/// Facets are oriented: the normal of facet `f` points from
/// `facet_tets[f][0]` into `facet_tets[f][1]`. Membrane facets list the
/// intracellular tet first, gap facets list the lower-indexed cell first,
/// internal facets list the lower tet index first, and exterior facets carry
/// [`NO_TET`] in the second slot.
#[derive(Debug, Clone)]
pub struct TaggedMesh {
    pub vertices: Vec<Point3>,
    pub tets: Vec<[u32; 4]>,
    pub tet_tags: Vec<VolumeTag>,
    pub facets: Vec<[u32; 3]>,
    pub facet_tags: Vec<SurfaceTag>,
    pub facet_tets: Vec<[u32; 2]>,
    /// Global facet opposite local vertex `i` of each tet.
    pub tet_facets: Vec<[u32; 4]>,
    /// `adjacency[k - 1]` lists the cells sharing a gap junction with cell `k`.
    pub adjacency: Vec<Vec<CellId>>,
    pub mesh_pitch: f64,
    pub bounds: BoxSpec,
}

/// What [`region_select`] collects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionTarget {
    VolumeNodes,
    MembraneFacets,
}

/// Sorted set of node or facet indices selected by a box.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionTag {
    pub target: RegionTarget,
    pub bounds: BoxSpec,
    pub indices: Vec<usize>,
}

impl TaggedMesh {
    pub fn n_cells(&self) -> usize {
        self.adjacency.len()
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tets[t].map(|i| self.vertices[i as usize]);
        signed_volume(&a, &b, &c, &d).abs()
    }

    pub fn facet_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.facets[f].map(|i| self.vertices[i as usize]);
        0.5 * norm(&cross(&sub(&b, &a), &sub(&c, &a)))
    }

    pub fn facet_centroid(&self, f: usize) -> Point3 {
        let [a, b, c] = self.facets[f].map(|i| self.vertices[i as usize]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0, (a[2] + b[2] + c[2]) / 3.0]
    }

    pub fn tet_centroid(&self, t: usize) -> Point3 {
        let mut c = [0.0; 3];
        for &v in &self.tets[t] {
            let p = self.vertices[v as usize];
            for a in 0..3 {
                c[a] += 0.25 * p[a];
            }
        }
        c
    }

    /// Unit normal of facet `f`, pointing out of `facet_tets[f][0]`.
    pub fn facet_normal(&self, f: usize) -> Point3 {
        let [a, b, c] = self.facets[f].map(|i| self.vertices[i as usize]);
        let mut n = cross(&sub(&b, &a), &sub(&c, &a));
        let len = norm(&n);
        for x in &mut n {
            *x /= len;
        }
        let inside = self.tet_centroid(self.facet_tets[f][0] as usize);
        if dot(&n, &sub(&inside, &a)) > 0.0 {
            n = n.map(|x| -x);
        }
        n
    }

    /// Total membrane area of cell `k` (mm²).
    pub fn membrane_area(&self, k: CellId) -> f64 {
        (0..self.facets.len())
            .filter(|&f| self.facet_tags[f] == SurfaceTag::Membrane(k))
            .map(|f| self.facet_area(f))
            .sum()
    }

    /// Total membrane area over all cells (mm²).
    pub fn total_membrane_area(&self) -> f64 {
        (0..self.facets.len())
            .filter(|&f| matches!(self.facet_tags[f], SurfaceTag::Membrane(_)))
            .map(|f| self.facet_area(f))
            .sum()
    }

    pub fn count_facets(&self, pred: impl Fn(&SurfaceTag) -> bool) -> usize {
        self.facet_tags.iter().filter(|t| pred(t)).count()
    }

    /// Number of face-connected components of the tets carrying `tag`.
    pub fn components(&self, tag: VolumeTag) -> usize {
        let mut seen = vec![false; self.tets.len()];
        let mut count = 0;
        for start in 0..self.tets.len() {
            if seen[start] || self.tet_tags[start] != tag {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(t) = queue.pop_front() {
                for &f in &self.tet_facets[t] {
                    let [a, b] = self.facet_tets[f as usize];
                    let other = if a as usize == t { b } else { a };
                    if other == NO_TET {
                        continue;
                    }
                    let o = other as usize;
                    if !seen[o] && self.tet_tags[o] == tag {
                        seen[o] = true;
                        queue.push_back(o);
                    }
                }
            }
        }
        count
    }
}

/// Structured mesh of the homogenized cuboid: `(ex/h)×(ey/h)×(ez/h)` hexes,
/// six tets each, every tet tagged `Extracellular`.
pub fn build_bidomain_mesh(bounds: BoxSpec, h: f64) -> Result<TaggedMesh, GeometryError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(GeometryError::NonPositivePitch(h));
    }
    let mut axes: [Vec<f64>; 3] = Default::default();
    for (a, axis) in ['x', 'y', 'z'].into_iter().enumerate() {
        let n = divisions(bounds.extents[a], h).ok_or(GeometryError::NotDivisible {
            axis,
            extent: bounds.extents[a],
            h,
        })?;
        axes[a] = (0..=n).map(|i| bounds.origin[a] + bounds.extents[a] * i as f64 / n as f64).collect();
    }
    let grid = TensorGrid::new(axes[0].clone(), axes[1].clone(), axes[2].clone());
    Ok(grid.into_mesh(h, 0, |_| VolumeTag::Extracellular))
}

/// Nodes (or membrane facets) whose position lies in the closed box.
pub fn region_select(
    mesh: &TaggedMesh,
    bounds: &BoxSpec,
    target: RegionTarget,
) -> Result<RegionTag, GeometryError> {
    if !bounds.intersects(&mesh.bounds) {
        return Err(GeometryError::EmptySelection(*bounds));
    }
    let indices: Vec<usize> = match target {
        RegionTarget::VolumeNodes => (0..mesh.vertices.len())
            .filter(|&i| bounds.contains(&mesh.vertices[i]))
            .collect(),
        RegionTarget::MembraneFacets => (0..mesh.facets.len())
            .filter(|&f| matches!(mesh.facet_tags[f], SurfaceTag::Membrane(_)))
            .filter(|&f| bounds.contains(&mesh.facet_centroid(f)))
            .collect(),
    };
    if indices.is_empty() {
        return Err(GeometryError::EmptySelection(*bounds));
    }
    Ok(RegionTag { target, bounds: *bounds, indices })
}

/// `Some(n)` when `extent / h` is within 1e-9 (relative) of the integer `n >= 1`.
pub(crate) fn divisions(extent: f64, h: f64) -> Option<usize> {
    let ratio = extent / h;
    let n = ratio.round();
    if n >= 1.0 && (ratio - n).abs() <= 1e-9 * ratio.max(1.0) {
        Some(n as usize)
    } else {
        None
    }
}

pub(crate) fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &Point3, b: &Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: &Point3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn signed_volume(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> f64 {
    dot(&sub(b, a), &cross(&sub(c, a), &sub(d, a))) / 6.0
}

pub(crate) fn distance2(a: &Point3, b: &Point3) -> f64 {
    let d = sub(a, b);
    dot(&d, &d)
}
