//! Text artifacts: learning curves, voxel listings, meshes, trajectories.

use std::io::{self, Write};

use crate::evolution::GenerationReport;
use crate::morphology::{Material, VoxelGrid};

pub const CURVES_SCHEMA: &str = "# voxevo curves v1";
pub const CURVES_HEADER: &str =
    "generation,mutation_rate,mutation_scale,crossover_rate,elite_fraction,best,mean,std,diversity,evaluations,wall_time";

/// One row per report. `wall_time` is written as 0 unless `record_wall_time`
/// is set, keeping the file reproducible.
pub fn write_curves<W: Write>(mut w: W, history: &[GenerationReport], record_wall_time: bool) -> io::Result<()> {
    writeln!(w, "{CURVES_SCHEMA}")?;
    writeln!(w, "{CURVES_HEADER}")?;
    for r in history {
        let p = &r.params;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.generation,
            p.mutation_rate,
            p.mutation_scale,
            p.crossover_rate,
            p.elite_fraction,
            r.best_fitness,
            r.mean_fitness,
            r.std_fitness,
            r.diversity,
            r.evaluations,
            if record_wall_time { r.wall_time } else { 0.0 }
        )?;
    }
    Ok(())
}

/// `x y z material weight` for every non-empty voxel; material is the
/// category index.
pub fn write_voxels<W: Write>(mut w: W, grid: &VoxelGrid) -> io::Result<()> {
    writeln!(w, "# dims {} {} {}", grid.dims[0], grid.dims[1], grid.dims[2])?;
    writeln!(
        w,
        "# material: 1 muscle_expand, 2 muscle_contract, 3 soft_tissue, 4 hard_bone"
    )?;
    writeln!(w, "# x y z material weight")?;
    for (i, c) in grid.cells.iter().enumerate() {
        if c.material == Material::Empty {
            continue;
        }
        let [x, y, z] = grid.coords(i);
        writeln!(w, "{x} {y} {z} {} {}", c.material.index(), c.weight)?;
    }
    Ok(())
}

const CUBE_FACES: [[usize; 3]; 12] = [
    [0, 2, 3],
    [0, 3, 1], // z-
    [4, 5, 7],
    [4, 7, 6], // z+
    [0, 1, 5],
    [0, 5, 4], // y-
    [2, 6, 7],
    [2, 7, 3], // y+
    [0, 4, 6],
    [0, 6, 2], // x-
    [1, 3, 7],
    [1, 7, 5], // x+
];

/// Wavefront OBJ: one axis-aligned cube (8 vertices, 12 triangles) per
/// non-empty voxel, faces grouped as `material_<index>_<name>`.
pub fn write_obj<W: Write>(mut w: W, grid: &VoxelGrid, edge: f64) -> io::Result<()> {
    writeln!(w, "# voxevo robot mesh, edge {edge} m")?;
    let mut cubes: Vec<(Material, usize)> = Vec::new();
    for (i, c) in grid.cells.iter().enumerate() {
        if c.material == Material::Empty {
            continue;
        }
        let [x, y, z] = grid.coords(i);
        for k in 0..8 {
            writeln!(
                w,
                "v {} {} {}",
                (x + (k & 1)) as f64 * edge,
                (y + ((k >> 1) & 1)) as f64 * edge,
                (z + ((k >> 2) & 1)) as f64 * edge
            )?;
        }
        cubes.push((c.material, cubes.len()));
    }
    for m in &Material::ALL[1..] {
        let members: Vec<usize> = cubes.iter().filter(|(cm, _)| cm == m).map(|&(_, n)| n).collect();
        if members.is_empty() {
            continue;
        }
        writeln!(w, "g material_{}_{}", m.index(), m.name())?;
        for n in members {
            let base = 8 * n + 1;
            for f in CUBE_FACES {
                writeln!(w, "f {} {} {}", base + f[0], base + f[1], base + f[2])?;
            }
        }
    }
    Ok(())
}

pub const TRAJECTORY_HEADER: &str = "t,x,y,z";

pub fn write_trajectory<W: Write>(mut w: W, samples: &[(f64, [f64; 3])]) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for (t, c) in samples {
        writeln!(w, "{t},{},{},{}", c[0], c[1], c[2])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::HyperParams;

    fn report(g: u64) -> GenerationReport {
        GenerationReport {
            generation: g,
            params: HyperParams::default(),
            best_fitness: 0.25,
            mean_fitness: 0.125,
            std_fitness: 0.5,
            diversity: 0.75,
            evaluations: 30,
            wall_time: 1.5,
        }
    }

    #[test]
    fn curves_rows_and_wall_time_toggle() {
        let mut out = Vec::new();
        write_curves(&mut out, &[report(0), report(1)], false).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], CURVES_HEADER);
        assert_eq!(lines[2], "0,0.1,0.1,0.4,0.3,0.25,0.125,0.5,0.75,30,0");
        let mut out = Vec::new();
        write_curves(&mut out, &[report(0)], true).unwrap();
        assert!(String::from_utf8(out).unwrap().trim_end().ends_with(",1.5"));
    }

    #[test]
    fn obj_has_twelve_triangles_per_voxel() {
        let mut grid = VoxelGrid::new([2, 1, 1]).unwrap();
        grid.set(0, 0, 0, Material::HardBone, 0.5);
        grid.set(1, 0, 0, Material::MuscleExpand, 0.5);
        let mut out = Vec::new();
        write_obj(&mut out, &grid, 0.1).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 16);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 24);
        assert!(text.contains("g material_1_muscle_expand"));
        assert!(text.contains("g material_4_hard_bone"));
        for l in text.lines().filter(|l| l.starts_with("f ")) {
            for idx in l[2..].split(' ') {
                let i: usize = idx.parse().unwrap();
                assert!((1..=16).contains(&i));
            }
        }
    }

    #[test]
    fn voxel_listing_skips_empty() {
        let mut grid = VoxelGrid::new([2, 2, 1]).unwrap();
        grid.set(1, 1, 0, Material::SoftTissue, 0.5);
        let mut out = Vec::new();
        write_voxels(&mut out, &grid).unwrap();
        let text = String::from_utf8(out).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data, vec!["1 1 0 3 0.5"]);
    }
}
