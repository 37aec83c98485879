//! Cell-by-cell tissue layout.
//!
//! Each cell sits centred in its own pericell box. Bodies leave a margin of
//! half the inter-body gap on every side, so the grid along each axis is the
//! union of the box faces, the body faces and the body interior lines at
//! pitch `h`. A junction cuboid bridging two neighbouring bodies is split at
//! the shared box face: each cell owns the half lying inside its own box, and
//! the gap interface is the junction mid-plane.

use super::grid::TensorGrid;
use super::{divisions, BoxSpec, CellId, GeometryError, Point3, TaggedMesh, VolumeTag};

/// Lattice of identical cells joined by gap junctions.
///
/// `junction_extents` is given for x-directed links as
/// (length along the link, width across in y, height in z). Links along y
/// reuse the same numbers with the roles of x and y swapped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmiCellLayout {
    pub nx: usize,
    pub ny: usize,
    pub body_extents: Point3,
    pub junction_extents: Point3,
    pub pericell_box: Point3,
}

impl Default for EmiCellLayout {
    fn default() -> Self {
        Self {
            nx: 25,
            ny: 25,
            body_extents: [0.155, 0.020, 0.020],
            junction_extents: [0.005, 0.010, 0.005],
            pericell_box: [0.16, 0.025, 0.025],
        }
    }
}

impl EmiCellLayout {
    pub fn with_cells(nx: usize, ny: usize) -> Self {
        Self { nx, ny, ..Self::default() }
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Bounding box of the whole tissue, anchored at the origin.
    pub fn bounds(&self) -> BoxSpec {
        BoxSpec {
            origin: [0.0; 3],
            extents: [
                self.nx as f64 * self.pericell_box[0],
                self.ny as f64 * self.pericell_box[1],
                self.pericell_box[2],
            ],
        }
    }

    pub fn cell_id(&self, ix: usize, iy: usize) -> CellId {
        (1 + ix + self.nx * iy) as CellId
    }

    /// Cell body of cell `(ix, iy)`, without its junction halves.
    pub fn body_box(&self, ix: usize, iy: usize) -> BoxSpec {
        let origin = [
            ix as f64 * self.pericell_box[0] + self.margin(0),
            iy as f64 * self.pericell_box[1] + self.margin(1),
            self.margin(2),
        ];
        BoxSpec { origin, extents: self.body_extents }
    }

    fn margin(&self, axis: usize) -> f64 {
        0.5 * (self.pericell_box[axis] - self.body_extents[axis])
    }

    /// Checks the structural invariants (independent of the mesh pitch).
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::Layout(msg));
        if self.nx == 0 || self.ny == 0 {
            return bad(format!("cell counts must be positive, got {}x{}", self.nx, self.ny));
        }
        for a in 0..3 {
            let (b, j, p) = (self.body_extents[a], self.junction_extents[a], self.pericell_box[a]);
            if !(b > 0.0 && j > 0.0 && p > 0.0) {
                return bad("all extents must be positive".into());
            }
            if b >= p {
                return bad(format!("body extent {b} does not fit strictly inside pericell box {p}"));
            }
            if j >= b {
                return bad(format!("junction extent {j} is not smaller than body extent {b}"));
            }
        }
        Ok(())
    }

    /// Junction cross-section intervals (relative to the box origin) for a
    /// link along `link_axis`, snapped to the body grid lines. Returns the two
    /// cross axes with their intervals.
    fn junction_cross(&self, link_axis: usize, h: f64) -> Result<[(usize, f64, f64); 2], GeometryError> {
        let (cross_a, width_a) = if link_axis == 0 { (1, self.junction_extents[1]) } else { (0, self.junction_extents[1]) };
        let spans = [(cross_a, width_a), (2, self.junction_extents[2])];
        let mut out = [(0, 0.0, 0.0); 2];
        for (slot, (axis, width)) in out.iter_mut().zip(spans) {
            let body = self.body_extents[axis];
            if width > body + 1e-12 {
                return Err(GeometryError::JunctionProtrudes(format!(
                    "width {width} mm exceeds body extent {body} mm along axis {axis}"
                )));
            }
            let n = divisions(width, h).ok_or(GeometryError::NotDivisible { axis: axis_name(axis), extent: width, h })?;
            let n_body = divisions(body, h).expect("body checked divisible");
            // Ties round toward the lower grid line.
            let start = (((n_body - n) as f64 / 2.0) - 1e-9).round() as usize;
            let m = self.margin(axis);
            *slot = (axis, m + start as f64 * h, m + (start + n) as f64 * h);
        }
        Ok(out)
    }
}

fn axis_name(a: usize) -> char {
    ['x', 'y', 'z'][a]
}

struct Junction {
    link_axis: usize,
    cross: [(usize, f64, f64); 2],
}

/// Builds the tagged EMI mesh for `layout` at pitch `h`.
pub fn build_emi_mesh(layout: EmiCellLayout, h: f64) -> Result<TaggedMesh, GeometryError> {
    layout.validate()?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(GeometryError::NonPositivePitch(h));
    }
    for a in 0..3 {
        for (extent, _) in [(layout.body_extents[a], "body"), (layout.pericell_box[a], "box")] {
            divisions(extent, h).ok_or(GeometryError::NotDivisible { axis: axis_name(a), extent, h })?;
        }
    }
    // Along the link, the junction must exactly bridge the two bodies.
    for (link_axis, along) in [(0, layout.junction_extents[0]), (1, layout.junction_extents[0])] {
        let gap = 2.0 * layout.margin(link_axis);
        if (along - gap).abs() > 1e-9 {
            return Err(GeometryError::JunctionProtrudes(format!(
                "junction length {along} mm differs from the {gap} mm gap between bodies along {}",
                axis_name(link_axis)
            )));
        }
    }
    let junctions = [
        Junction { link_axis: 0, cross: layout.junction_cross(0, h)? },
        Junction { link_axis: 1, cross: layout.junction_cross(1, h)? },
    ];

    let counts = [layout.nx, layout.ny, 1];
    let mut axes: [Vec<f64>; 3] = Default::default();
    for a in 0..3 {
        let (p, m) = (layout.pericell_box[a], layout.margin(a));
        let n_body = divisions(layout.body_extents[a], h).unwrap();
        let mut lines = vec![0.0];
        for c in 0..counts[a] {
            let base = c as f64 * p;
            for j in 0..=n_body {
                lines.push(base + m + j as f64 * h);
            }
            lines.push(base + p);
        }
        axes[a] = lines;
    }

    let grid = TensorGrid::new(axes[0].clone(), axes[1].clone(), axes[2].clone());
    let tagger = |c: &Point3| classify(&layout, &junctions, c);
    Ok(grid.into_mesh(h, layout.n_cells(), tagger))
}

fn classify(layout: &EmiCellLayout, junctions: &[Junction; 2], c: &Point3) -> VolumeTag {
    let counts = [layout.nx, layout.ny, 1];
    let mut idx = [0usize; 3];
    let mut local = [0.0; 3];
    for a in 0..3 {
        let p = layout.pericell_box[a];
        idx[a] = ((c[a] / p).floor() as usize).min(counts[a] - 1);
        local[a] = c[a] - idx[a] as f64 * p;
    }
    let cell = layout.cell_id(idx[0], idx[1]);
    let inside = |a: usize, lo: f64, hi: f64| local[a] > lo && local[a] < hi;
    let in_body = (0..3).all(|a| {
        let m = layout.margin(a);
        inside(a, m, m + layout.body_extents[a])
    });
    if in_body {
        return VolumeTag::Intracellular(cell);
    }
    for j in junctions {
        let a = j.link_axis;
        if !j.cross.iter().all(|&(ax, lo, hi)| inside(ax, lo, hi)) {
            continue;
        }
        let m = layout.margin(a);
        let p = layout.pericell_box[a];
        let toward_upper = local[a] > p - m && idx[a] + 1 < counts[a];
        let toward_lower = local[a] < m && idx[a] > 0;
        if toward_upper || toward_lower {
            return VolumeTag::Intracellular(cell);
        }
    }
    VolumeTag::Extracellular
}
