//! ASCII exporters for nodal fields: CSV, legacy VTK structured points and
//! plain PGM.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::StructuredMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldFormat {
    Csv,
    Vtk,
    Pgm,
}

impl FieldFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            FieldFormat::Csv => "csv",
            FieldFormat::Vtk => "vtk",
            FieldFormat::Pgm => "pgm",
        }
    }

    pub const ALL: [FieldFormat; 3] = [FieldFormat::Csv, FieldFormat::Vtk, FieldFormat::Pgm];
}

/// Formats like C's `%.9g`.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let mantissa = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn csv_string(mesh: &StructuredMesh, field: &ScalarField) -> Result<String> {
    field.check_len(mesh.node_count())?;
    let mut out = String::from("x,y,value\n");
    for (&[x, y], &v) in mesh.coords().iter().zip(field.iter()) {
        let _ = writeln!(out, "{},{},{}", format_sig9(x), format_sig9(y), format_sig9(v));
    }
    Ok(out)
}

pub fn vtk_string(mesh: &StructuredMesh, field: &ScalarField, name: &str) -> Result<String> {
    field.check_len(mesh.node_count())?;
    let d = mesh.domain();
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "{name}");
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(out, "DIMENSIONS {} {} 1", mesh.nx() + 1, mesh.ny() + 1);
    let _ = writeln!(out, "ORIGIN {} {} 0", format_sig9(d.x0), format_sig9(d.y0));
    let _ = writeln!(out, "SPACING {} {} 1", format_sig9(mesh.hx()), format_sig9(mesh.hy()));
    let _ = writeln!(out, "POINT_DATA {}", mesh.node_count());
    let _ = writeln!(out, "SCALARS {name} double 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for &v in field.iter() {
        let _ = writeln!(out, "{}", format_sig9(v));
    }
    Ok(out)
}

/// Plain `P2` graymap, top row first. A field with zero range maps to 0.
pub fn pgm_string(mesh: &StructuredMesh, field: &ScalarField) -> Result<String> {
    field.check_len(mesh.node_count())?;
    let (lo, hi) = (field.min(), field.max());
    let range = hi - lo;
    let gray = |v: f64| -> u32 {
        if range > 0.0 {
            ((v - lo) / range * 255.0).round().clamp(0.0, 255.0) as u32
        } else {
            0
        }
    };
    let (w, h) = (mesh.nx() + 1, mesh.ny() + 1);
    let mut out = format!("P2\n{w} {h}\n255\n");
    for j in (0..h).rev() {
        // Keep lines under 70 characters.
        let mut line = String::new();
        for i in 0..w {
            let token = gray(field[mesh.node_index(i, j)]).to_string();
            if !line.is_empty() && line.len() + 1 + token.len() > 70 {
                out.push_str(&line);
                out.push('\n');
                line.clear();
            }
            if !line.is_empty() {
                line.push(' ');
            }
            line.push_str(&token);
        }
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub fn export_field(
    mesh: &StructuredMesh,
    field: &ScalarField,
    format: FieldFormat,
    path: &Path,
) -> Result<()> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty() && !s.contains(char::is_whitespace))
        .unwrap_or("value");
    let text = match format {
        FieldFormat::Csv => csv_string(mesh, field)?,
        FieldFormat::Vtk => vtk_string(mesh, field, name)?,
        FieldFormat::Pgm => pgm_string(mesh, field)?,
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `<dir>/<stem>.{csv,vtk,pgm}`.
pub fn export_all(mesh: &StructuredMesh, field: &ScalarField, dir: &Path, stem: &str) -> Result<()> {
    for format in FieldFormat::ALL {
        export_field(mesh, field, format, &dir.join(format!("{stem}.{}", format.extension())))?;
    }
    Ok(())
}

/// Parses CSV produced by [`csv_string`] into `(x, y, value)` rows.
pub fn parse_csv(text: &str) -> Result<Vec<[f64; 3]>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "x,y,value" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `x,y,value`".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let parsed: Option<Vec<f64>> = (parts.len() == 3)
            .then(|| parts.iter().map(|p| p.trim().parse().ok()).collect())
            .flatten();
        match parsed {
            Some(v) => rows.push([v[0], v[1], v[2]]),
            None => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("malformed row `{line}`"),
                })
            }
        }
    }
    Ok(rows)
}

/// Reads a field CSV and checks it was written for `mesh`.
pub fn read_field_csv(mesh: &StructuredMesh, path: &Path) -> Result<ScalarField> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = parse_csv(&text)?;
    if rows.len() != mesh.node_count() {
        return Err(Error::MeshMismatch {
            expected: mesh.node_count(),
            actual: rows.len(),
        });
    }
    let tol = 1e-7 * mesh.hx().min(mesh.hy()).max(f64::MIN_POSITIVE) + 1e-12;
    for (k, (row, c)) in rows.iter().zip(mesh.coords()).enumerate() {
        if (row[0] - c[0]).abs() > tol.max(1e-8 * c[0].abs()) || (row[1] - c[1]).abs() > tol.max(1e-8 * c[1].abs()) {
            return Err(Error::InvalidMesh(format!(
                "{}: node {k} at ({}, {}) does not match mesh node ({}, {})",
                path.display(),
                row[0],
                row[1],
                c[0],
                c[1]
            )));
        }
    }
    Ok(ScalarField::new(rows.iter().map(|r| r[2]).collect()))
}
