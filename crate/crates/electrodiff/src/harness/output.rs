//! Result files: functional-row CSVs, sweep summaries, per-step diagnostics,
//! and a self-describing binary layout for field snapshots.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reruns
//! of an identical configuration produce bit-identical files.

use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::diagnostics::FunctionalRow;
use crate::npns::StepDiagnostics;
use crate::spectral::{Grid, ScalarField};

use super::HarnessError;

/// Column names of the functional-row table: time plus one column per
/// metric (the four theorem norms and their sum, then the energy
/// functionals).
pub const FUNCTIONAL_COLUMNS: [&str; 10] = [
    "time",
    "state_h1",
    "dstate_l2",
    "efield_h2_lambda",
    "defield_h1_lambda",
    "theorem_sum",
    "h1_error",
    "gamma",
    "dissipation",
    "triple_norm_sq",
];

pub fn write_functional_rows_csv(path: &Path, rows: &[FunctionalRow]) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(HarnessError::io(path))?;
    let mut w = BufWriter::new(file);
    let emit = |w: &mut BufWriter<std::fs::File>| -> std::io::Result<()> {
        writeln!(w, "{}", FUNCTIONAL_COLUMNS.join(","))?;
        for r in rows {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.t,
                r.state_h1,
                r.dstate_l2,
                r.efield_h2_weighted,
                r.defield_h1_weighted,
                r.theorem_sum,
                r.h1_error,
                r.gamma,
                r.dissipation,
                r.triple_norm_sq
            )?;
        }
        w.flush()
    };
    emit(&mut w).map_err(HarnessError::io(path))
}

pub fn write_step_diagnostics_csv(
    path: &Path,
    steps: &[StepDiagnostics],
) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(HarnessError::io(path))?;
    let mut w = BufWriter::new(file);
    let emit = |w: &mut BufWriter<std::fs::File>| -> std::io::Result<()> {
        writeln!(
            w,
            "time,norm_n,norm_p,norm_z,norm_v,mean_n,mean_p,min_n,min_p,min_z,div_v_rel,residual_rel,elliptic_iterations"
        )?;
        for s in steps {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                s.t,
                s.norm_n,
                s.norm_p,
                s.norm_z,
                s.norm_v,
                s.mean_n,
                s.mean_p,
                s.min_n,
                s.min_p,
                s.min_z,
                s.div_v_rel,
                s.residual_rel,
                s.elliptic_iterations
            )?;
        }
        w.flush()
    };
    emit(&mut w).map_err(HarnessError::io(path))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| HarnessError::BadSnapshotFile(e.to_string()))?;
    std::fs::write(path, text).map_err(HarnessError::io(path))
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"EDLABFB1";

/// Writes named fields in the self-describing binary layout: magic string,
/// `dim`, `N`, field name table, then row-major little-endian 64-bit floats
/// per field.
pub fn write_field_snapshot(
    path: &Path,
    grid: &Grid,
    fields: &[(&str, &ScalarField)],
) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(HarnessError::io(path))?;
    let mut w = BufWriter::new(file);
    let emit = |w: &mut BufWriter<std::fs::File>| -> std::io::Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&(grid.dim() as u32).to_le_bytes())?;
        w.write_all(&(grid.n() as u32).to_le_bytes())?;
        w.write_all(&(fields.len() as u32).to_le_bytes())?;
        for (name, _) in fields {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
        }
        for (_, field) in fields {
            for &v in field.physical() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    };
    emit(&mut w).map_err(HarnessError::io(path))
}

/// Field table of a snapshot file.
pub type NamedFields = Vec<(String, ScalarField)>;

/// Reads a snapshot file back into named fields on a freshly built grid.
pub fn read_field_snapshot(path: &Path) -> Result<(Arc<Grid>, NamedFields), HarnessError> {
    let mut file = std::fs::File::open(path).map_err(HarnessError::io(path))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(HarnessError::io(path))?;
    let mut cursor = 0usize;
    let mut take = |len: usize| -> Result<&[u8], HarnessError> {
        if cursor + len > bytes.len() {
            return Err(HarnessError::BadSnapshotFile(format!(
                "truncated at byte {cursor}"
            )));
        }
        let slice = &bytes[cursor..cursor + len];
        cursor += len;
        Ok(slice)
    };
    let magic = take(8)?;
    if magic != SNAPSHOT_MAGIC {
        return Err(HarnessError::BadSnapshotFile("bad magic".to_string()));
    }
    let read_u32 = |slice: &[u8]| u32::from_le_bytes(slice.try_into().unwrap()) as usize;
    let dim = read_u32(take(4)?);
    let n = read_u32(take(4)?);
    let count = read_u32(take(4)?);
    let mut names = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(take(4)?);
        let name = std::str::from_utf8(take(len)?)
            .map_err(|e| HarnessError::BadSnapshotFile(e.to_string()))?
            .to_string();
        names.push(name);
    }
    let grid = Grid::new(dim, n).map_err(|e| HarnessError::BadSnapshotFile(e.to_string()))?;
    let mut fields = Vec::with_capacity(count);
    for name in names {
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            values.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        fields.push((name, ScalarField::from_physical(grid.clone(), values)));
    }
    if cursor != bytes.len() {
        return Err(HarnessError::BadSnapshotFile(format!(
            "{} trailing bytes",
            bytes.len() - cursor
        )));
    }
    Ok((grid, fields))
}
