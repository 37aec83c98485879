//! Tensor-product hex grid and its conforming six-tet split.

use std::collections::HashMap;

use super::{signed_volume, BoxSpec, CellId, Point3, SurfaceTag, TaggedMesh, VolumeTag, NO_TET};

/// Grid lines along each axis; vertices are their Cartesian product with
/// index `i + nx*(j + ny*k)`.
#[derive(Debug, Clone)]
pub struct TensorGrid {
    pub axes: [Vec<f64>; 3],
}

// The six monotone lattice paths from corner 000 to corner 111 of a hex.
// Every hex uses the same paths, so shared faces split along the same
// diagonal and the mesh is conforming.
const KUHN_PATHS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

impl TensorGrid {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, zs: Vec<f64>) -> Self {
        Self { axes: [xs, ys, zs] }
    }

    fn dims(&self) -> [usize; 3] {
        [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()]
    }

    fn vertex(&self, i: usize, j: usize, k: usize) -> u32 {
        let [nx, ny, _] = self.dims();
        (i + nx * (j + ny * k)) as u32
    }

    /// Builds the tagged mesh. `tag` receives each hex centre; `n_cells` is
    /// the number of intracellular subdomains the tagger may produce.
    pub fn into_mesh(self, h: f64, n_cells: usize, tag: impl Fn(&Point3) -> VolumeTag) -> TaggedMesh {
        let [nx, ny, nz] = self.dims();
        let mut vertices = Vec::with_capacity(nx * ny * nz);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    vertices.push([self.axes[0][i], self.axes[1][j], self.axes[2][k]]);
                }
            }
        }

        let n_hex = (nx - 1) * (ny - 1) * (nz - 1);
        let mut tets = Vec::with_capacity(6 * n_hex);
        let mut tet_tags = Vec::with_capacity(6 * n_hex);
        for k in 0..nz - 1 {
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    let center = [
                        0.5 * (self.axes[0][i] + self.axes[0][i + 1]),
                        0.5 * (self.axes[1][j] + self.axes[1][j + 1]),
                        0.5 * (self.axes[2][k] + self.axes[2][k + 1]),
                    ];
                    let label = tag(&center);
                    for path in KUHN_PATHS {
                        let mut c = [i, j, k];
                        let mut tet = [0u32; 4];
                        tet[0] = self.vertex(c[0], c[1], c[2]);
                        for (step, &axis) in path.iter().enumerate() {
                            c[axis] += 1;
                            tet[step + 1] = self.vertex(c[0], c[1], c[2]);
                        }
                        let p = tet.map(|v| vertices[v as usize]);
                        if signed_volume(&p[0], &p[1], &p[2], &p[3]) < 0.0 {
                            tet.swap(2, 3);
                        }
                        tets.push(tet);
                        tet_tags.push(label);
                    }
                }
            }
        }

        let lo = [self.axes[0][0], self.axes[1][0], self.axes[2][0]];
        let hi = [self.axes[0][nx - 1], self.axes[1][ny - 1], self.axes[2][nz - 1]];
        let bounds = BoxSpec { origin: lo, extents: [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]] };
        finish_mesh(vertices, tets, tet_tags, h, n_cells, bounds)
    }
}

/// Extracts facets, tags and orients them, and derives gap adjacency.
fn finish_mesh(
    vertices: Vec<Point3>,
    tets: Vec<[u32; 4]>,
    tet_tags: Vec<VolumeTag>,
    h: f64,
    n_cells: usize,
    bounds: BoxSpec,
) -> TaggedMesh {
    let mut index: HashMap<[u32; 3], u32> = HashMap::with_capacity(tets.len() * 2 + 16);
    let mut facets: Vec<[u32; 3]> = Vec::with_capacity(tets.len() * 2 + 16);
    let mut facet_tets: Vec<[u32; 2]> = Vec::with_capacity(tets.len() * 2 + 16);
    let mut tet_facets = Vec::with_capacity(tets.len());

    for (t, tet) in tets.iter().enumerate() {
        let mut local = [0u32; 4];
        for (i, slot) in local.iter_mut().enumerate() {
            let mut key = [tet[(i + 1) % 4], tet[(i + 2) % 4], tet[(i + 3) % 4]];
            key.sort_unstable();
            let f = *index.entry(key).or_insert_with(|| {
                facets.push(key);
                facet_tets.push([t as u32, NO_TET]);
                (facets.len() - 1) as u32
            });
            if facet_tets[f as usize][0] != t as u32 {
                debug_assert_eq!(facet_tets[f as usize][1], NO_TET, "facet shared by more than two tets");
                facet_tets[f as usize][1] = t as u32;
            }
            *slot = f;
        }
        tet_facets.push(local);
    }

    let mut facet_tags = Vec::with_capacity(facets.len());
    let mut adjacency: Vec<Vec<CellId>> = vec![Vec::new(); n_cells];
    for pair in facet_tets.iter_mut() {
        let [a, b] = *pair;
        if b == NO_TET {
            facet_tags.push(SurfaceTag::Exterior);
            continue;
        }
        let (ta, tb) = (tet_tags[a as usize], tet_tags[b as usize]);
        let tag = match (ta, tb) {
            (VolumeTag::Intracellular(k), VolumeTag::Extracellular) => SurfaceTag::Membrane(k),
            (VolumeTag::Extracellular, VolumeTag::Intracellular(k)) => {
                *pair = [b, a];
                SurfaceTag::Membrane(k)
            }
            (VolumeTag::Intracellular(k), VolumeTag::Intracellular(l)) if k != l => {
                if k > l {
                    *pair = [b, a];
                }
                let (lo, hi) = (k.min(l), k.max(l));
                adjacency[lo as usize - 1].push(hi);
                adjacency[hi as usize - 1].push(lo);
                SurfaceTag::Gap(lo, hi)
            }
            _ => {
                if a > b {
                    *pair = [b, a];
                }
                SurfaceTag::Internal
            }
        };
        facet_tags.push(tag);
    }
    for set in &mut adjacency {
        set.sort_unstable();
        set.dedup();
    }

    TaggedMesh {
        vertices,
        tets,
        tet_tags,
        facets,
        facet_tags,
        facet_tets,
        tet_facets,
        adjacency,
        mesh_pitch: h,
        bounds,
    }
}
