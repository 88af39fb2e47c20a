//! Genome → voxel grid → mass-spring network.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::{Genome, MATERIAL_COUNT};

/// Lower clamp applied to the sigmoid weight before it scales material
/// parameters.
pub const MIN_WEIGHT: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MorphologyError {
    #[error("robot has no occupied voxel")]
    EmptyRobot,
    #[error("grid dimensions must be positive")]
    InvalidDims,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Material {
    Empty,
    MuscleExpand,
    MuscleContract,
    SoftTissue,
    HardBone,
}

impl Material {
    pub const ALL: [Material; MATERIAL_COUNT] = [
        Material::Empty,
        Material::MuscleExpand,
        Material::MuscleContract,
        Material::SoftTissue,
        Material::HardBone,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_muscle(self) -> bool {
        matches!(self, Material::MuscleExpand | Material::MuscleContract)
    }

    pub fn name(self) -> &'static str {
        match self {
            Material::Empty => "empty",
            Material::MuscleExpand => "muscle_expand",
            Material::MuscleContract => "muscle_contract",
            Material::SoftTissue => "soft_tissue",
            Material::HardBone => "hard_bone",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Voxel {
    pub material: Material,
    pub weight: f64,
}

impl Voxel {
    pub const EMPTY: Voxel = Voxel {
        material: Material::Empty,
        weight: MIN_WEIGHT,
    };
}

/// Material assignment on a `W × H × D` lattice. Linear index is
/// `x + W·(y + H·z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub dims: [usize; 3],
    pub cells: Vec<Voxel>,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3]) -> Result<Self, MorphologyError> {
        if dims.contains(&0) {
            return Err(MorphologyError::InvalidDims);
        }
        Ok(Self {
            dims,
            cells: vec![Voxel::EMPTY; dims[0] * dims[1] * dims[2]],
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn coords(&self, i: usize) -> [usize; 3] {
        let [w, h, _] = self.dims;
        [i % w, (i / w) % h, i / (w * h)]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> Voxel {
        self.cells[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, material: Material, weight: f64) {
        let i = self.index(x, y, z);
        self.cells[i] = Voxel { material, weight };
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|c| c.material != Material::Empty).count()
    }

    pub fn has_muscle(&self) -> bool {
        self.cells.iter().any(|c| c.material.is_muscle())
    }

    /// Query point for voxel `(x, y, z)`: its centre normalised to `[0,1]³`.
    pub fn center(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        [
            (x as f64 + 0.5) / self.dims[0] as f64,
            (y as f64 + 0.5) / self.dims[1] as f64,
            (z as f64 + 0.5) / self.dims[2] as f64,
        ]
    }
}

/// Queries the genome at every voxel centre. Material is the argmax of the
/// softmax (ties resolve to the lower category); the weight is clamped to
/// `[MIN_WEIGHT, 1)`.
pub fn decode(genome: &Genome, dims: [usize; 3]) -> Result<VoxelGrid, MorphologyError> {
    let mut grid = VoxelGrid::new(dims)?;
    for i in 0..grid.len() {
        let [x, y, z] = grid.coords(i);
        let q = genome.forward(grid.center(x, y, z));
        let mut best = 0;
        for (k, &p) in q.probs.iter().enumerate().skip(1) {
            if p > q.probs[best] {
                best = k;
            }
        }
        grid.cells[i] = Voxel {
            material: Material::ALL[best],
            weight: q.weight.max(MIN_WEIGHT),
        };
    }
    Ok(grid)
}

/// Keeps the largest 6-connected component of non-empty voxels. Among equally
/// large components the one containing the lowest linear index wins.
pub fn largest_component(grid: &VoxelGrid) -> VoxelGrid {
    let n = grid.len();
    let mut label = vec![usize::MAX; n];
    let mut best: Option<(usize, usize)> = None; // (label, size)
    let mut stack = Vec::new();
    let mut next_label = 0;
    for start in 0..n {
        if grid.cells[start].material == Material::Empty || label[start] != usize::MAX {
            continue;
        }
        let id = next_label;
        next_label += 1;
        label[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            for j in face_neighbours(grid, i) {
                if grid.cells[j].material != Material::Empty && label[j] == usize::MAX {
                    label[j] = id;
                    stack.push(j);
                }
            }
        }
        // Components are discovered in order of their lowest index, so a strict
        // comparison keeps the earliest on ties.
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((id, size));
        }
    }
    let mut out = grid.clone();
    for (cell, l) in out.cells.iter_mut().zip(&label) {
        if best.is_none_or(|(id, _)| *l != id) {
            *cell = Voxel::EMPTY;
        }
    }
    out
}

fn face_neighbours(grid: &VoxelGrid, i: usize) -> impl Iterator<Item = usize> + '_ {
    let [x, y, z] = grid.coords(i);
    let [w, h, d] = grid.dims;
    let candidates = [
        (x > 0).then(|| grid.index(x - 1, y, z)),
        (x + 1 < w).then(|| grid.index(x + 1, y, z)),
        (y > 0).then(|| grid.index(x, y - 1, z)),
        (y + 1 < h).then(|| grid.index(x, y + 1, z)),
        (z > 0).then(|| grid.index(x, y, z - 1)),
        (z + 1 < d).then(|| grid.index(x, y, z + 1)),
    ];
    candidates.into_iter().flatten()
}

/// Base material and plane parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialTable {
    /// N/m
    pub k_muscle: f64,
    /// N/m
    pub k_soft: f64,
    /// N/m
    pub k_bone: f64,
    pub damping_ratio: f64,
    pub amp_max: f64,
    /// rad
    pub phase_max: f64,
    /// Lattice spacing and original rest length, m.
    pub voxel_edge: f64,
    /// Mass of every lattice vertex, kg.
    pub mass_per_index: f64,
    /// Per-material stiffness multipliers, indexed by [`Material::index`].
    pub stiffness_scale: [f64; MATERIAL_COUNT],
    pub plane: PlaneParams,
}

impl Default for MaterialTable {
    fn default() -> Self {
        Self {
            k_muscle: 2e3,
            k_soft: 1e3,
            k_bone: 1e4,
            damping_ratio: 0.1,
            amp_max: 0.25,
            phase_max: PI,
            voxel_edge: 0.1,
            mass_per_index: 0.1,
            stiffness_scale: [1.0; MATERIAL_COUNT],
            plane: PlaneParams::default(),
        }
    }
}

impl MaterialTable {
    /// Base stiffness for a material before the voxel weight is applied.
    pub fn base_stiffness(&self, m: Material) -> f64 {
        let k = match m {
            Material::Empty => 0.0,
            Material::MuscleExpand | Material::MuscleContract => self.k_muscle,
            Material::SoftTissue => self.k_soft,
            Material::HardBone => self.k_bone,
        };
        k * self.stiffness_scale[m.index()]
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("k_muscle", self.k_muscle),
            ("k_soft", self.k_soft),
            ("k_bone", self.k_bone),
            ("damping_ratio", self.damping_ratio),
            ("amp_max", self.amp_max),
            ("phase_max", self.phase_max),
            ("voxel_edge", self.voxel_edge),
            ("mass_per_index", self.mass_per_index),
            ("plane.stiffness", self.plane.stiffness),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be finite and > 0"));
            }
        }
        if self.amp_max >= 1.0 {
            return Err("amp_max must be < 1".into());
        }
        if self.stiffness_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err("stiffness_scale entries must be > 0".into());
        }
        for (name, v) in [
            ("plane.damping_ratio", self.plane.damping_ratio),
            ("plane.mu_static", self.plane.mu_static),
            ("plane.mu_kinetic", self.plane.mu_kinetic),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Penalty ground plane at `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaneParams {
    /// N/m
    pub stiffness: f64,
    pub damping_ratio: f64,
    pub mu_static: f64,
    pub mu_kinetic: f64,
}

impl Default for PlaneParams {
    fn default() -> Self {
        Self {
            stiffness: 1e5,
            damping_ratio: 0.1,
            mu_static: 0.6,
            mu_kinetic: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMass {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub mass: f64,
}

/// Sinusoidal rest-length modulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Actuation {
    /// `+1` expands, `-1` contracts.
    pub sign: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub i: usize,
    pub j: usize,
    pub stiffness: f64,
    pub rest_length: f64,
    pub damping_ratio: f64,
    pub actuation: Option<Actuation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSpringSystem {
    pub masses: Vec<PointMass>,
    pub springs: Vec<Spring>,
    pub plane: PlaneParams,
}

impl MassSpringSystem {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().map(|m| m.mass).sum()
    }

    pub fn center_of_mass(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        let mut total = 0.0;
        for m in &self.masses {
            for (ck, xk) in c.iter_mut().zip(m.position) {
                *ck += m.mass * xk;
            }
            total += m.mass;
        }
        c.map(|x| x / total)
    }

    pub fn momentum(&self) -> [f64; 3] {
        let mut p = [0.0; 3];
        for m in &self.masses {
            for (pk, vk) in p.iter_mut().zip(m.velocity) {
                *pk += m.mass * vk;
            }
        }
        p
    }

    pub fn has_actuation(&self) -> bool {
        self.springs.iter().any(|s| s.actuation.is_some())
    }
}

struct SpringAccumulator {
    stiffness_sum: f64,
    contributors: u32,
    damping_ratio: f64,
    actuation: Option<Actuation>,
}

/// Builds the mass-spring network for every occupied voxel.
///
/// Masses sit on lattice vertices (shared between neighbours, each
/// `mass_per_index`). Every occupied voxel contributes all 28 pairs of its
/// corners; a spring shared by several voxels takes the mean of their
/// `weight × base k`, and inherits actuation from the lowest-index muscle
/// voxel among them. Masses are ordered by lattice vertex index and springs
/// by `(i, j)`. The body is shifted so its lowest vertex rests at `z = 0`.
pub fn build_mass_spring(grid: &VoxelGrid, table: &MaterialTable) -> Result<MassSpringSystem, MorphologyError> {
    let [w, h, _] = grid.dims;
    let vertex_id = |x: usize, y: usize, z: usize| x + (w + 1) * (y + (h + 1) * z);

    let mut vertices: BTreeMap<usize, [usize; 3]> = BTreeMap::new();
    let mut springs: BTreeMap<(usize, usize), SpringAccumulator> = BTreeMap::new();

    for (idx, cell) in grid.cells.iter().enumerate() {
        if cell.material == Material::Empty {
            continue;
        }
        let [x, y, z] = grid.coords(idx);
        let mut corners = [(0usize, [0usize; 3]); 8];
        for (c, corner) in corners.iter_mut().enumerate() {
            let p = [x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1)];
            *corner = (vertex_id(p[0], p[1], p[2]), p);
            vertices.insert(corner.0, p);
        }
        let k = cell.weight * table.base_stiffness(cell.material);
        let actuation = cell.material.is_muscle().then(|| Actuation {
            sign: if cell.material == Material::MuscleExpand {
                1.0
            } else {
                -1.0
            },
            amplitude: cell.weight * table.amp_max,
            phase: cell.weight * table.phase_max,
        });
        for a in 0..8 {
            for b in a + 1..8 {
                let (ia, ib) = (corners[a].0, corners[b].0);
                let key = (ia.min(ib), ia.max(ib));
                let acc = springs.entry(key).or_insert(SpringAccumulator {
                    stiffness_sum: 0.0,
                    contributors: 0,
                    damping_ratio: table.damping_ratio,
                    actuation: None,
                });
                acc.stiffness_sum += k;
                acc.contributors += 1;
                if acc.actuation.is_none() {
                    acc.actuation = actuation;
                }
            }
        }
    }
    if vertices.is_empty() {
        return Err(MorphologyError::EmptyRobot);
    }

    let min_z = vertices.values().map(|p| p[2]).min().unwrap_or(0);
    let slot: BTreeMap<usize, usize> = vertices.keys().enumerate().map(|(s, &v)| (v, s)).collect();
    let masses: Vec<PointMass> = vertices
        .values()
        .map(|p| PointMass {
            position: [
                p[0] as f64 * table.voxel_edge,
                p[1] as f64 * table.voxel_edge,
                (p[2] - min_z) as f64 * table.voxel_edge,
            ],
            velocity: [0.0; 3],
            mass: table.mass_per_index,
        })
        .collect();

    let springs = springs
        .into_iter()
        .map(|((a, b), acc)| {
            let (i, j) = (slot[&a], slot[&b]);
            Spring {
                i,
                j,
                stiffness: acc.stiffness_sum / acc.contributors as f64,
                rest_length: distance(masses[i].position, masses[j].position),
                damping_ratio: acc.damping_ratio,
                actuation: acc.actuation,
            }
        })
        .collect();

    Ok(MassSpringSystem {
        masses,
        springs,
        plane: table.plane,
    })
}

pub(crate) fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}
