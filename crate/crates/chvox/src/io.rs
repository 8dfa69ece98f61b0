//! File output and exchange formats: legacy-ASCII VTK snapshots, the
//! time-series CSV schema shared by every scenario, text mask writing, and
//! a binary coefficient dump for checkpointing long runs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::basis::DGField;
use crate::grid::VoxelGrid;
use crate::{Error, Result};

/// Write the element means of one or more fields as a legacy VTK
/// unstructured grid of hexahedral cells. Corner points shared between
/// voxels are deduplicated; point ids follow ascending corner-lattice order.
pub fn write_vtk(grid: &VoxelGrid, fields: &[(&str, &DGField)], path: &Path) -> Result<()> {
    let n = grid.n;
    let m = n + 1;
    let corner = |i: usize, j: usize, k: usize| i + m * j + m * m * k;
    let mut used = vec![false; m * m * m];
    for el in 0..grid.n_elements() {
        let (i, j, k) = grid.voxel_of(el);
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    used[corner(i + dx, j + dy, k + dz)] = true;
                }
            }
        }
    }
    let mut point_id = vec![u32::MAX; used.len()];
    let mut n_points = 0u32;
    for (c, &u) in used.iter().enumerate() {
        if u {
            point_id[c] = n_points;
            n_points += 1;
        }
    }

    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "order parameter snapshot")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {n_points} double")?;
    let h = grid.h;
    for (c, &u) in used.iter().enumerate() {
        if u {
            let i = c % m;
            let j = (c / m) % m;
            let k = c / (m * m);
            writeln!(w, "{:e} {:e} {:e}", i as f64 * h, j as f64 * h, k as f64 * h)?;
        }
    }
    let n_cells = grid.n_elements();
    writeln!(w, "CELLS {n_cells} {}", 9 * n_cells)?;
    for el in 0..n_cells {
        let (i, j, k) = grid.voxel_of(el);
        // VTK hexahedron ordering: the z- quad counterclockwise, then z+.
        let ids = [
            point_id[corner(i, j, k)],
            point_id[corner(i + 1, j, k)],
            point_id[corner(i + 1, j + 1, k)],
            point_id[corner(i, j + 1, k)],
            point_id[corner(i, j, k + 1)],
            point_id[corner(i + 1, j, k + 1)],
            point_id[corner(i + 1, j + 1, k + 1)],
            point_id[corner(i, j + 1, k + 1)],
        ];
        write!(w, "8")?;
        for id in ids {
            write!(w, " {id}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {n_cells}")?;
    for _ in 0..n_cells {
        writeln!(w, "12")?;
    }
    writeln!(w, "CELL_DATA {n_cells}")?;
    for (name, field) in fields {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for el in 0..n_cells {
            writeln!(w, "{:e}", field.element_mean(el))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One accepted time step in the series every scenario records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSeriesRow {
    /// Step index (1-based; step 0 rows describe initial data).
    pub step: usize,
    /// Time after the step.
    pub time: f64,
    /// Total mass of the order parameter.
    pub mass: f64,
    /// Double-well part of the discrete free energy.
    pub chemical_energy: f64,
    /// Gradient (interfacial) part.
    pub gradient_energy: f64,
    /// Their sum.
    pub total_energy: f64,
    /// Nonlinear iterations this step.
    pub newton_iters: usize,
    /// Total linear iterations this step.
    pub krylov_iters_total: usize,
    /// Residual norm at acceptance.
    pub final_residual: f64,
    /// Whether the stationarity test fired.
    pub stationary: bool,
}

/// The fixed CSV header.
pub const CSV_HEADER: &str = "step,time,mass,chemical_energy,gradient_energy,total_energy,\
                              newton_iters,krylov_iters_total,final_residual,stationary_flag";

/// Write the time series. Floats use shortest round-trip formatting, so a
/// parse of the file reproduces the values exactly.
pub fn write_csv(rows: &[TimeSeriesRow], path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{},{},{:e},{}",
            r.step,
            r.time,
            r.mass,
            r.chemical_energy,
            r.gradient_energy,
            r.total_energy,
            r.newton_iters,
            r.krylov_iters_total,
            r.final_residual,
            u8::from(r.stationary),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a file written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<TimeSeriesRow>> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != CSV_HEADER {
        return Err(Error::InvalidInput(format!("unexpected CSV header '{header}'")));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::InvalidInput(format!(
                "CSV row {}: expected 10 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let bad = |what: &str| Error::InvalidInput(format!("CSV row {}: bad {what}", lineno + 2));
        let int = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(what));
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        rows.push(TimeSeriesRow {
            step: int(fields[0], "step")?,
            time: num(fields[1], "time")?,
            mass: num(fields[2], "mass")?,
            chemical_energy: num(fields[3], "chemical_energy")?,
            gradient_energy: num(fields[4], "gradient_energy")?,
            total_energy: num(fields[5], "total_energy")?,
            newton_iters: int(fields[6], "newton_iters")?,
            krylov_iters_total: int(fields[7], "krylov_iters_total")?,
            final_residual: num(fields[8], "final_residual")?,
            stationary: match fields[9].trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "CSV row {}: bad stationary flag '{other}'",
                        lineno + 2
                    )))
                }
            },
        });
    }
    Ok(rows)
}

/// Write an occupancy mask in the text format the grid loader accepts:
/// header line `voxelmask <N>`, then one line of N^3 '0'/'1' characters
/// per z-slice (x fastest).
pub fn write_mask_text(n: usize, mask: &[bool], path: &Path) -> Result<()> {
    if mask.len() != n * n * n {
        return Err(Error::InvalidInput(format!(
            "mask length {} does not match N = {n}",
            mask.len()
        )));
    }
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "voxelmask {n}")?;
    for slice in mask.chunks(n * n) {
        let line: String = slice.iter().map(|&b| if b { '1' } else { '0' }).collect();
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

const COEFF_MAGIC: &[u8; 8] = b"CHVXCOEF";

/// Binary checkpoint of a field: magic, element and local counts, then the
/// coefficient array in little-endian f64.
pub fn write_coefficients(field: &DGField, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(COEFF_MAGIC)?;
    w.write_all(&(field.n_el as u64).to_le_bytes())?;
    w.write_all(&(field.n_loc as u64).to_le_bytes())?;
    for &c in &field.coeffs {
        w.write_all(&c.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a checkpoint written by [`write_coefficients`].
pub fn read_coefficients(path: &Path) -> Result<DGField> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != COEFF_MAGIC {
        return Err(Error::InvalidInput("not a coefficient dump".into()));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let n_el = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let n_loc = u64::from_le_bytes(word) as usize;
    let count = n_el
        .checked_mul(n_loc)
        .filter(|&c| c <= 1 << 34)
        .ok_or_else(|| Error::InvalidInput("implausible coefficient dump header".into()))?;
    let mut coeffs = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut word)?;
        coeffs.push(f64::from_le_bytes(word));
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::InvalidInput("trailing bytes after coefficient dump".into()));
    }
    Ok(DGField { n_el, n_loc, coeffs })
}
