//! Result files: CSV tables with a provenance comment, legacy-ASCII VTK
//! meshes and frame series, and SVG plots of strength-interval curves.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

use crate::calibration::Evaluation;
use crate::geometry::{SurfaceTag, TaggedMesh, VolumeTag};
use crate::protocol::{Mechanism, NormalizedSiCurve, SiCurve};
use crate::stepping::{Model, SimulationRecord};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path} line {line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
}

fn file_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv { path: path.to_path_buf(), source }
}

/// Header comment naming the configuration that produced a table.
pub fn provenance_line(config_hash: &str) -> String {
    format!("# config-sha256: {config_hash}")
}

/// Writes `rows` under `header`, preceded by the provenance comment.
pub fn write_csv(path: &Path, config_hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    let mut file = fs::File::create(path).map_err(file_err(path))?;
    writeln!(file, "{}", provenance_line(config_hash)).map_err(file_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(file_err(path))?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_traces(path: &Path, config_hash: &str, record: &SimulationRecord) -> Result<(), IoError> {
    let rows: Vec<Vec<String>> = record
        .times
        .iter()
        .zip(&record.probes)
        .map(|(t, p)| std::iter::once(num(*t)).chain(p.iter().map(|v| num(*v))).collect())
        .collect();
    write_csv(path, config_hash, &["t_ms", "probe1_mV", "probe2_mV", "probe3_mV", "probe4_mV"], &rows)
}

pub const SI_HEADER: [&str; 4] = ["interval_ms", "threshold_uA_per_uF", "normalized", "mechanism"];

pub fn write_si_curve(path: &Path, config_hash: &str, curve: &SiCurve) -> Result<(), IoError> {
    let norm = curve.normalize();
    let rows: Vec<Vec<String>> = curve
        .points
        .iter()
        .zip(&norm.points)
        .map(|(p, n)| vec![num(p.interval), num(p.threshold), num(n.1), p.mechanism.as_str().to_string()])
        .collect();
    write_csv(path, config_hash, &SI_HEADER, &rows)
}

/// One row of an SI table read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SiRow {
    pub interval: f64,
    pub threshold: f64,
    pub normalized: f64,
    pub mechanism: Option<Mechanism>,
}

/// Reads an SI table; `#` lines are comments and the mechanism column may be
/// empty.
pub fn read_si_curve(path: &Path) -> Result<Vec<SiRow>, IoError> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ci), Some(ct), cn, cm) = (col(SI_HEADER[0]), col(SI_HEADER[1]), col(SI_HEADER[2]), col(SI_HEADER[3])) else {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected columns {}", SI_HEADER.join(",")),
        });
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| IoError::Format { path: path.to_path_buf(), line, message };
        let field = |i: usize| -> Result<f64, IoError> {
            let s = rec.get(i).unwrap_or("");
            s.parse().map_err(|_| bad(format!("'{s}' is not a number")))
        };
        let interval = field(ci)?;
        let threshold = field(ct)?;
        let normalized = match cn {
            Some(i) if !rec.get(i).unwrap_or("").is_empty() => field(i)?,
            _ => f64::NAN,
        };
        let mechanism = match cm.and_then(|i| rec.get(i)).filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse().map_err(bad)?),
            None => None,
        };
        rows.push(SiRow { interval, threshold, normalized, mechanism });
    }
    Ok(rows)
}

pub fn write_calibration_history(path: &Path, config_hash: &str, history: &[Evaluation]) -> Result<(), IoError> {
    let opt = |x: Option<f64>| x.map_or(String::new(), num);
    let rows: Vec<Vec<String>> = history
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut r = vec![(i + 1).to_string()];
            r.extend(e.sigma.iter().map(|s| num(*s)));
            r.extend([opt(e.cv[0]), opt(e.cv[1]), num(e.objective)]);
            r
        })
        .collect();
    write_csv(
        path,
        config_hash,
        &["eval_id", "sigma_i_l", "sigma_i_t", "sigma_e_l", "sigma_e_t", "cv_long", "cv_trans", "objective"],
        &rows,
    )
}

fn volume_code(t: &VolumeTag) -> i64 {
    match t {
        VolumeTag::Extracellular => 0,
        VolumeTag::Intracellular(k) => i64::from(*k),
    }
}

/// `(kind, cell, peer)` with kind 1 = membrane, 2 = gap, 3 = exterior.
fn surface_code(t: &SurfaceTag) -> Option<(i64, i64, i64)> {
    match t {
        SurfaceTag::Membrane(k) => Some((1, i64::from(*k), 0)),
        SurfaceTag::Gap(k, l) => Some((2, i64::from(*k), i64::from(*l))),
        SurfaceTag::Exterior => Some((3, 0, 0)),
        SurfaceTag::Internal => None,
    }
}

/// Unstructured grid with every tet and every non-internal facet. Cell data:
/// `volume_tag` (cell id, 0 extracellular, -1 on facets), `surface_tag`
/// (1 membrane, 2 gap, 3 exterior, 0 on tets), `surface_cell` and
/// `surface_peer` (the two cells of a gap).
pub fn mesh_vtk(mesh: &TaggedMesh) -> String {
    let facets: Vec<(usize, (i64, i64, i64))> = mesh
        .facet_tags
        .iter()
        .enumerate()
        .filter_map(|(f, t)| surface_code(t).map(|c| (f, c)))
        .collect();
    let n_cells = mesh.tets.len() + facets.len();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\ntagged mesh\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.vertices.len());
    for p in &mesh.vertices {
        let _ = writeln!(s, "{:?} {:?} {:?}", p[0], p[1], p[2]);
    }
    let _ = writeln!(s, "CELLS {} {}", n_cells, mesh.tets.len() * 5 + facets.len() * 4);
    for t in &mesh.tets {
        let _ = writeln!(s, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    for (f, _) in &facets {
        let v = mesh.facets[*f];
        let _ = writeln!(s, "3 {} {} {}", v[0], v[1], v[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {n_cells}");
    s.push_str(&"10\n".repeat(mesh.tets.len()));
    s.push_str(&"5\n".repeat(facets.len()));
    let _ = writeln!(s, "CELL_DATA {n_cells}");
    let mut field = |name: &str, tet: &dyn Fn(usize) -> i64, tri: &dyn Fn(&(i64, i64, i64)) -> i64| {
        let _ = writeln!(s, "SCALARS {name} int 1\nLOOKUP_TABLE default");
        for t in 0..mesh.tets.len() {
            let _ = writeln!(s, "{}", tet(t));
        }
        for (_, c) in &facets {
            let _ = writeln!(s, "{}", tri(c));
        }
    };
    field("volume_tag", &|t| volume_code(&mesh.tet_tags[t]), &|_| -1);
    field("surface_tag", &|_| 0, &|c| c.0);
    field("surface_cell", &|_| 0, &|c| c.1);
    field("surface_peer", &|_| 0, &|c| c.2);
    s
}

/// Point cloud of the cell-model sites carrying `v` (mV).
pub fn frame_vtk(model: &Model, time: f64, v: &[f64]) -> String {
    let n = model.n_sites();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\nmembrane potential t = {time:?} ms\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {n} double");
    for i in 0..n {
        let p = model.site_position(i);
        let _ = writeln!(s, "{:?} {:?} {:?}", p[0], p[1], p[2]);
    }
    let _ = writeln!(s, "CELLS {} {}", n, 2 * n);
    for i in 0..n {
        let _ = writeln!(s, "1 {i}");
    }
    let _ = writeln!(s, "CELL_TYPES {n}");
    s.push_str(&"1\n".repeat(n));
    let _ = writeln!(s, "POINT_DATA {n}\nSCALARS v double 1\nLOOKUP_TABLE default");
    for x in v {
        let _ = writeln!(s, "{x:?}");
    }
    s
}

/// Writes `mesh.vtk`, one `frame_NNNN.vtk` per frame and a
/// `frames.vtk.series` index. Returns the written paths.
pub fn write_vtk_output(dir: &Path, model: &Model, record: &SimulationRecord) -> Result<Vec<PathBuf>, IoError> {
    fs::create_dir_all(dir).map_err(file_err(dir))?;
    let mut written = Vec::new();
    let mesh_path = dir.join("mesh.vtk");
    fs::write(&mesh_path, mesh_vtk(model.mesh())).map_err(file_err(&mesh_path))?;
    written.push(mesh_path);
    let mut files = Vec::new();
    for (i, f) in record.frames.iter().enumerate() {
        let name = format!("frame_{i:04}.vtk");
        let path = dir.join(&name);
        fs::write(&path, frame_vtk(model, f.time, &f.v)).map_err(file_err(&path))?;
        files.push(json!({ "name": name, "time": f.time }));
        written.push(path);
    }
    let series = json!({ "file-series-version": "1.0", "files": files });
    let series_path = dir.join("frames.vtk.series");
    fs::write(&series_path, serde_json::to_string_pretty(&series).expect("static JSON shape")).map_err(file_err(&series_path))?;
    written.push(series_path);
    Ok(written)
}

/// Pointwise comparison of two normalized curves on their shared intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveGap {
    pub interval: f64,
    pub a: f64,
    pub b: f64,
    pub gap: f64,
}

pub fn curve_gaps(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<CurveGap> {
    a.iter()
        .filter_map(|&(i, va)| {
            b.iter().find(|(j, _)| (i - j).abs() < 1e-9).map(|&(_, vb)| CurveGap { interval: i, a: va, b: vb, gap: vb - va })
        })
        .collect()
}

/// Normalized values of an SI table, recomputed from the thresholds when the
/// normalized column is missing (using the largest-interval threshold as the
/// resting reference).
pub fn normalized_points(rows: &[SiRow]) -> Vec<(f64, f64)> {
    if rows.iter().all(|r| r.normalized.is_finite()) {
        return rows.iter().map(|r| (r.interval, r.normalized)).collect();
    }
    let reference = rows
        .iter()
        .max_by(|a, b| a.interval.total_cmp(&b.interval))
        .map_or(1.0, |r| r.threshold);
    rows.iter().map(|r| (r.interval, r.threshold / reference)).collect()
}

pub fn normalized_of(curve: &NormalizedSiCurve) -> Vec<(f64, f64)> {
    curve.points.iter().map(|p| (p.0, p.1)).collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot of normalized threshold against interval, one series per curve.
pub fn si_plot_svg(series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, margin) = (640.0, 420.0, 60.0);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.1.iter().copied()).filter(|p| p.1.is_finite()).collect();
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let lo = all.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let (y0, y1) = (y0 - 0.05 * (y1 - y0), y1 + 0.05 * (y1 - y0));
    let sx = |x: f64| margin + (x - x0) / (x1 - x0) * (w - 2.0 * margin);
    let sy = |y: f64| h - margin - (y - y0) / (y1 - y0) * (h - 2.0 * margin);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<g stroke="#333" fill="none"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}"/></g>"##,
        m = margin,
        b = h - margin,
        r = w - margin,
        t = margin
    );
    for k in 0..=4 {
        let xv = x0 + (x1 - x0) * k as f64 / 4.0;
        let yv = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{:.0}</text>"#,
            sx(xv),
            h - margin + 16.0,
            xv
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{:.2}</text>"#,
            margin - 6.0,
            sy(yv) + 4.0,
            yv
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">S1-S2 interval (ms)</text>"#,
        w / 2.0,
        h - 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">normalized threshold</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for p in &path {
            let (cx, cy) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{color}">{}</text>"#,
            w - margin - 150.0,
            margin + 16.0 * (i as f64 + 1.0),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
