//! Voxel-set triangulation of the unit cube: indexing, element and face
//! enumeration, and boundary classification.
//!
//! The computational domain is the union of the pore voxels of an N x N x N
//! occupancy mask over [0,1]^3, so every element is a cube of edge length
//! h = 1/N. Voxels are addressed by the flat index n = i + N j + N^2 k.
//! Faces between two pore voxels are interior; faces against solid voxels or
//! the outer cube boundary are either impermeable walls or exterior faces
//! (eligible for inflow/outflow), decided per cube side by [`ExteriorSpec`].

use crate::{Error, Result};
use std::path::Path;

/// Classification of a mesh face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceClass {
    /// Shared by two pore elements.
    Interior,
    /// Impermeable wall: no advective or Dirichlet terms ever apply.
    Wall,
    /// Exterior face: belongs to the inflow/outflow boundary.
    Exterior,
}

/// Which of the six cube sides are declared exterior (inflow/outflow
/// eligible). Order: x-min, x-max, y-min, y-max, z-min, z-max.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExteriorSpec {
    /// Per-side flags; `false` (the default) classifies that side as wall.
    pub sides: [bool; 6],
}

impl ExteriorSpec {
    /// All six sides wall (the default for closed-system scenarios).
    pub fn all_wall() -> Self {
        Self::default()
    }

    /// All six sides exterior.
    pub fn all_exterior() -> Self {
        Self { sides: [true; 6] }
    }

    /// Exterior on the two x-normal sides only (breakthrough inlet/outlet).
    pub fn x_open() -> Self {
        Self { sides: [true, true, false, false, false, false] }
    }
}

/// A face shared by two elements; the normal points from `minus` to `plus`,
/// and `minus` is always the element with the smaller flat voxel index.
#[derive(Debug, Clone, Copy)]
pub struct InteriorFace {
    /// Element on the negative side (smaller flat index).
    pub minus: u32,
    /// Element on the positive side.
    pub plus: u32,
    /// Face normal axis: 0 = x, 1 = y, 2 = z.
    pub axis: u8,
    /// Face centroid in physical coordinates.
    pub center: [f64; 3],
}

/// A face of one element on the domain boundary (wall or exterior).
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFace {
    /// The adjacent pore element.
    pub element: u32,
    /// Face normal axis: 0 = x, 1 = y, 2 = z.
    pub axis: u8,
    /// Outward normal direction along `axis`: +1 or -1.
    pub orientation: i8,
    /// Wall or exterior.
    pub class: FaceClass,
    /// Face centroid in physical coordinates.
    pub center: [f64; 3],
}

/// Immutable voxel-set mesh.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    /// Voxels per axis.
    pub n: usize,
    /// Mesh size h = 1/N.
    pub h: f64,
    /// N^3 occupancy flags, flat-indexed; `true` marks a pore element.
    mask: Vec<bool>,
    /// Flat voxel index -> element index, or `u32::MAX` for solid voxels.
    element_of_voxel: Vec<u32>,
    /// Element index -> flat voxel index (ascending; element order).
    voxel_of_element: Vec<u32>,
    /// All interior faces, in deterministic sweep order.
    pub interior_faces: Vec<InteriorFace>,
    /// All wall and exterior faces, in deterministic sweep order.
    pub boundary_faces: Vec<BoundaryFace>,
}

const SOLID: u32 = u32::MAX;

/// Flat voxel index n = i + N j + N^2 k.
pub fn flat_index(i: usize, j: usize, k: usize, n: usize) -> usize {
    debug_assert!(i < n && j < n && k < n, "voxel index out of range");
    i + n * j + n * n * k
}

/// Inverse of [`flat_index`]: recover (i, j, k).
pub fn tuple_index(flat: usize, n: usize) -> (usize, usize, usize) {
    let i = flat % n;
    let j = (flat / n) % n;
    let k = flat / (n * n);
    (i, j, k)
}

/// Build the mesh from an occupancy mask.
///
/// Faces between two pore voxels become interior faces with the smaller flat
/// index on the minus side. Faces against solid voxels are walls; faces on
/// the outer cube are walls unless their side is marked in `exterior`.
pub fn build_grid(n: usize, mask: &[bool], exterior: &ExteriorSpec) -> Result<VoxelGrid> {
    if n == 0 || mask.len() != n * n * n {
        return Err(Error::Contract(format!(
            "mask length {} does not match N^3 = {}",
            mask.len(),
            n * n * n
        )));
    }
    let mut element_of_voxel = vec![SOLID; mask.len()];
    let mut voxel_of_element = Vec::new();
    for (v, &pore) in mask.iter().enumerate() {
        if pore {
            element_of_voxel[v] = voxel_of_element.len() as u32;
            voxel_of_element.push(v as u32);
        }
    }
    if voxel_of_element.is_empty() {
        return Err(Error::EmptyDomain);
    }

    let h = 1.0 / n as f64;
    let mut interior_faces = Vec::new();
    let mut boundary_faces = Vec::new();
    // Sweep voxels in flat order; the +axis neighbor always has the larger
    // flat index, so emitting interior faces toward +axis lists each exactly
    // once with the minus element on the smaller-index side.
    for &v in &voxel_of_element {
        let v = v as usize;
        let (i, j, k) = tuple_index(v, n);
        let elem = element_of_voxel[v];
        let centroid = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h];
        for axis in 0..3u8 {
            for orientation in [-1i8, 1i8] {
                let coord = [i, j, k][axis as usize];
                let mut center = centroid;
                center[axis as usize] += 0.5 * h * orientation as f64;
                let on_cube_side = if orientation < 0 { coord == 0 } else { coord + 1 == n };
                if on_cube_side {
                    let side = 2 * axis as usize + usize::from(orientation > 0);
                    let class = if exterior.sides[side] { FaceClass::Exterior } else { FaceClass::Wall };
                    boundary_faces.push(BoundaryFace { element: elem, axis, orientation, class, center });
                    continue;
                }
                let step = [1, n, n * n][axis as usize];
                let neighbor = if orientation < 0 { v - step } else { v + step };
                let nb = element_of_voxel[neighbor];
                if nb == SOLID {
                    boundary_faces.push(BoundaryFace {
                        element: elem,
                        axis,
                        orientation,
                        class: FaceClass::Wall,
                        center,
                    });
                } else if orientation > 0 {
                    interior_faces.push(InteriorFace { minus: elem, plus: nb, axis, center });
                }
            }
        }
    }

    Ok(VoxelGrid {
        n,
        h,
        mask: mask.to_vec(),
        element_of_voxel,
        voxel_of_element,
        interior_faces,
        boundary_faces,
    })
}

impl VoxelGrid {
    /// Number of elements (pore voxels).
    pub fn n_elements(&self) -> usize {
        self.voxel_of_element.len()
    }

    /// Element index of a voxel, if it is pore.
    pub fn element_at(&self, i: usize, j: usize, k: usize) -> Option<usize> {
        let e = self.element_of_voxel[flat_index(i, j, k, self.n)];
        (e != SOLID).then_some(e as usize)
    }

    /// Voxel tuple (i, j, k) of an element.
    pub fn voxel_of(&self, element: usize) -> (usize, usize, usize) {
        tuple_index(self.voxel_of_element[element] as usize, self.n)
    }

    /// True if the voxel is a pore element.
    pub fn is_pore(&self, i: usize, j: usize, k: usize) -> bool {
        self.mask[flat_index(i, j, k, self.n)]
    }

    /// Physical centroid of an element.
    pub fn centroid(&self, element: usize) -> [f64; 3] {
        let (i, j, k) = self.voxel_of(element);
        [
            (i as f64 + 0.5) * self.h,
            (j as f64 + 0.5) * self.h,
            (k as f64 + 0.5) * self.h,
        ]
    }

    /// Pore fraction of the bounding cube.
    pub fn porosity(&self) -> f64 {
        self.n_elements() as f64 / (self.n * self.n * self.n) as f64
    }

    /// Label each element with its 6-connectivity component, 0-based in
    /// order of first appearance; returns (labels, component count).
    pub fn connected_components(&self) -> (Vec<u32>, usize) {
        let unvisited = u32::MAX;
        let mut label = vec![unvisited; self.n_elements()];
        let mut count = 0u32;
        let mut stack = Vec::new();
        for seed in 0..self.n_elements() {
            if label[seed] != unvisited {
                continue;
            }
            label[seed] = count;
            stack.push(seed);
            while let Some(e) = stack.pop() {
                let (i, j, k) = self.voxel_of(e);
                let mut visit = |cond: bool, ii: usize, jj: usize, kk: usize| {
                    if cond {
                        if let Some(nb) = self.element_at(ii, jj, kk) {
                            if label[nb] == unvisited {
                                label[nb] = count;
                                stack.push(nb);
                            }
                        }
                    }
                };
                visit(i > 0, i.wrapping_sub(1), j, k);
                visit(i + 1 < self.n, i + 1, j, k);
                visit(j > 0, i, j.wrapping_sub(1), k);
                visit(j + 1 < self.n, i, j + 1, k);
                visit(k > 0, i, j, k.wrapping_sub(1));
                visit(k + 1 < self.n, i, j, k + 1);
            }
            count += 1;
        }
        (label, count as usize)
    }
}

/// Parse a text mask file: first line `voxelmask <N>`, then N^3 characters
/// '0'/'1' in flat-index order (x fastest); all whitespace is ignored.
pub fn load_mask_text(path: &Path) -> Result<(usize, Vec<bool>)> {
    let content = std::fs::read_to_string(path)?;
    parse_mask_text(&content)
}

/// Parse the text mask format from an in-memory string.
pub fn parse_mask_text(content: &str) -> Result<(usize, Vec<bool>)> {
    let mut lines = content.lines();
    let header = lines.next().unwrap_or("");
    let mut words = header.split_whitespace();
    if words.next() != Some("voxelmask") {
        return Err(Error::InvalidInput(
            "mask file must start with a 'voxelmask <N>' header line".into(),
        ));
    }
    let n: usize = words
        .next()
        .and_then(|w| w.parse().ok())
        .ok_or_else(|| Error::InvalidInput("voxelmask header is missing the grid size".into()))?;
    if n == 0 {
        return Err(Error::InvalidInput("voxelmask grid size must be positive".into()));
    }
    let mut mask = Vec::with_capacity(n * n * n);
    for line in lines {
        for ch in line.chars() {
            match ch {
                '0' => mask.push(false),
                '1' => mask.push(true),
                c if c.is_whitespace() => {}
                c => {
                    return Err(Error::InvalidInput(format!(
                        "unexpected character {c:?} in mask body"
                    )))
                }
            }
        }
    }
    if mask.len() != n * n * n {
        return Err(Error::InvalidInput(format!(
            "mask body has {} entries, expected N^3 = {}",
            mask.len(),
            n * n * n
        )));
    }
    Ok((n, mask))
}

/// Read a raw binary mask: exactly N^3 bytes with values 0 or 1, flat order.
pub fn load_mask_binary(path: &Path, n: usize) -> Result<Vec<bool>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() != n * n * n {
        return Err(Error::InvalidInput(format!(
            "raw mask has {} bytes, expected N^3 = {}",
            bytes.len(),
            n * n * n
        )));
    }
    bytes
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::InvalidInput(format!(
                "raw mask bytes must be 0 or 1, found {other}"
            ))),
        })
        .collect()
}
