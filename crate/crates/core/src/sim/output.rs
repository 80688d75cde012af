//! Diagnostics CSV, legacy VTK snapshots and PPM images.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value read back parses to the identical `f64`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::energy::{DiagnosticsRecord, State};
use crate::mesh::TriMesh;

use super::config::Formats;

pub const CSV_HEADER: &str = "step,time,e_bulk,e_surf,e_total,mass_bulk,mass_surf,grad_mu_sq,grad_mug_sq,metric_cost";

fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn csv_row(r: &DiagnosticsRecord) -> String {
    let e = &r.energy;
    let fields = [r.time, e.e_bulk, e.e_surf, e.e_total, e.mass_bulk, e.mass_surf, e.grad_mu_sq, e.grad_mug_sq, r.metric_cost];
    let mut row = r.step.to_string();
    for v in fields {
        row.push(',');
        row.push_str(&num(v));
    }
    row
}

/// Streams `diagnostics.csv`, one row per call.
pub struct DiagnosticsWriter {
    out: BufWriter<File>,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{CSV_HEADER}")?;
        Ok(DiagnosticsWriter { out })
    }

    pub fn write(&mut self, record: &DiagnosticsRecord) -> io::Result<()> {
        writeln!(self.out, "{}", csv_row(record))
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Legacy ASCII unstructured grid with `phi` and `mu` as point data.
pub fn vtk_string(mesh: &TriMesh, state: &State) -> String {
    let n = mesh.num_vertices();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(&format!("phase field t={}\nASCII\nDATASET UNSTRUCTURED_GRID\n", num(state.t)));
    s.push_str(&format!("POINTS {n} double\n"));
    for p in &mesh.vertices {
        s.push_str(&format!("{} {} 0\n", num(p[0]), num(p[1])));
    }
    let nt = mesh.triangles.len();
    s.push_str(&format!("CELLS {nt} {}\n", 4 * nt));
    for t in &mesh.triangles {
        s.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    s.push_str(&format!("CELL_TYPES {nt}\n"));
    for _ in 0..nt {
        s.push_str("5\n");
    }
    s.push_str(&format!("POINT_DATA {n}\n"));
    push_scalars(&mut s, "phi", &state.phi);
    push_scalars(&mut s, "mu", &state.mu);
    s
}

/// Boundary vertices in loop order, without cells, carrying the trace of
/// `phi` and `mu_gamma` (zero for the classical model).
pub fn boundary_vtk_string(mesh: &TriMesh, state: &State) -> String {
    let nb = mesh.num_boundary();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(&format!("boundary t={}\nASCII\nDATASET UNSTRUCTURED_GRID\n", num(state.t)));
    s.push_str(&format!("POINTS {nb} double\n"));
    for &v in &mesh.boundary_loop {
        let p = mesh.vertices[v];
        s.push_str(&format!("{} {} 0\n", num(p[0]), num(p[1])));
    }
    s.push_str("CELLS 0 0\nCELL_TYPES 0\n");
    s.push_str(&format!("POINT_DATA {nb}\n"));
    push_scalars(&mut s, "phi", &mesh.trace(&state.phi));
    let mu_gamma = state.mu_gamma.clone().unwrap_or_else(|| vec![0.0; nb]);
    push_scalars(&mut s, "mu_gamma", &mu_gamma);
    s
}

fn push_scalars(s: &mut String, name: &str, values: &[f64]) {
    s.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
    for v in values {
        s.push_str(&num(*v));
        s.push('\n');
    }
}

/// Point coordinates and named point scalars of a legacy ASCII file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VtkData {
    pub points: Vec<[f64; 3]>,
    pub scalars: BTreeMap<String, Vec<f64>>,
}

/// Reads back the subset of the legacy format written here.
pub fn read_vtk(text: &str) -> Result<VtkData, String> {
    let mut tokens = text.lines().skip(2).flat_map(str::split_whitespace);
    let mut data = VtkData::default();
    let mut next = |what: &str| tokens.next().ok_or_else(|| format!("unexpected end of file reading {what}"));
    let count = |t: &str| t.parse::<usize>().map_err(|e| format!("bad count `{t}`: {e}"));
    let float = |t: &str| t.parse::<f64>().map_err(|e| format!("bad number `{t}`: {e}"));
    let mut npoints = 0;
    loop {
        let Ok(word) = next("keyword") else { break };
        match word {
            "ASCII" => {}
            "DATASET" => {
                next("dataset type")?;
            }
            "POINTS" => {
                npoints = count(next("point count")?)?;
                next("point type")?;
                for _ in 0..npoints {
                    let mut p = [0.0; 3];
                    for c in &mut p {
                        *c = float(next("coordinate")?)?;
                    }
                    data.points.push(p);
                }
            }
            "CELLS" => {
                count(next("cell count")?)?;
                let size = count(next("cell list size")?)?;
                for _ in 0..size {
                    next("cell entry")?;
                }
            }
            "CELL_TYPES" => {
                let nc = count(next("cell type count")?)?;
                for _ in 0..nc {
                    next("cell type")?;
                }
            }
            "POINT_DATA" => {
                if count(next("point data count")?)? != npoints {
                    return Err("POINT_DATA count differs from POINTS".into());
                }
            }
            "SCALARS" => {
                let name = next("scalar name")?.to_string();
                next("scalar type")?;
                next("component count")?;
                if next("lookup table")? != "LOOKUP_TABLE" {
                    return Err(format!("scalars `{name}` lack LOOKUP_TABLE"));
                }
                next("lookup table name")?;
                let values: Result<Vec<f64>, String> = (0..npoints).map(|_| float(next("scalar")?)).collect();
                data.scalars.insert(name, values?);
            }
            other => return Err(format!("unexpected token `{other}`")),
        }
    }
    Ok(data)
}

/// Colour of one node: blue at −1, white at 0, red at +1, clipped outside.
pub fn ramp(phi: f64) -> [u8; 3] {
    let p = if phi.is_nan() { 0.0 } else { phi.clamp(-1.0, 1.0) };
    let fade = |t: f64| (255.0 * t).round() as u8;
    if p >= 0.0 {
        [255, fade(1.0 - p), fade(1.0 - p)]
    } else {
        [fade(1.0 + p), fade(1.0 + p), 255]
    }
}

/// Binary P6 image with one pixel per grid node, top row at `y1`.
pub fn ppm_bytes(mesh: &TriMesh, phi: &[f64]) -> Vec<u8> {
    let (w, h) = (mesh.nx + 1, mesh.ny + 1);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * w * h);
    for j in (0..h).rev() {
        for i in 0..w {
            out.extend_from_slice(&ramp(phi[i + j * w]));
        }
    }
    out
}

/// Snapshot file stem for a step, e.g. `snap_000100`.
pub fn snapshot_stem(step: usize) -> String {
    format!("snap_{step:06}")
}

/// Writes the snapshot files selected by `formats` and returns their paths.
/// CSV is the run-level diagnostics file and is not written here.
pub fn write_outputs(mesh: &TriMesh, state: &State, step: usize, formats: Formats, dir: &Path) -> io::Result<Vec<PathBuf>> {
    let stem = snapshot_stem(step);
    let mut written = Vec::new();
    if formats.vtk {
        let path = dir.join(format!("{stem}.vtk"));
        std::fs::write(&path, vtk_string(mesh, state))?;
        written.push(path);
        let path = dir.join(format!("{stem}_boundary.vtk"));
        std::fs::write(&path, boundary_vtk_string(mesh, state))?;
        written.push(path);
    }
    if formats.ppm {
        let path = dir.join(format!("{stem}.ppm"));
        std::fs::write(&path, ppm_bytes(mesh, &state.phi))?;
        written.push(path);
    }
    Ok(written)
}
