//! Files on disk: data bundles, run reports, VTK fields and manifests.
//!
//! Manifests are `key = value` lines. Floating point numbers are written in
//! their shortest round-trip form, so a saved bundle loads back bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::driver::RunReport;
use crate::fem::Field;
use crate::mesh::QuadMesh;
use crate::problem::{GridField, NoisyData, ObservationKind, Observed, SyntheticCase};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format { path: path.to_path_buf(), msg: msg.into() }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(file_err(dir))?;
    }
    fs::write(path, contents).map_err(file_err(path))
}

/// Ordered `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} = {v}");
            s
        })
    }

    pub fn parse(text: &str) -> Manifest {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        Manifest { entries }
    }

    pub fn read(path: &Path) -> Result<Manifest, IoError> {
        Ok(Manifest::parse(&fs::read_to_string(path).map_err(file_err(path))?))
    }

    fn require<T: std::str::FromStr>(&self, key: &str, path: &Path) -> Result<T, IoError> {
        self.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format_err(path, format!("missing or bad `{key}`")))
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Legacy ASCII VTK unstructured grid of quadrilaterals with vertex data.
pub fn mesh_vtk(mesh: &QuadMesh, fields: &[(&str, &Field)]) -> String {
    let mut s = String::from("# vtk DataFile Version 3.0\nadaptive quadrilateral mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let nv = mesh.num_vertices();
    let _ = writeln!(s, "POINTS {nv} double");
    for v in 0..nv {
        let p = mesh.vertex(v);
        let _ = writeln!(s, "{} {} 0", num(p[0]), num(p[1]));
    }
    let nc = mesh.num_cells();
    let _ = writeln!(s, "CELLS {nc} {}", 5 * nc);
    for k in 0..nc {
        let c = mesh.cell_vertices(k);
        let _ = writeln!(s, "4 {} {} {} {}", c[0], c[1], c[2], c[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {nc}");
    for _ in 0..nc {
        s.push_str("9\n");
    }
    let _ = writeln!(s, "CELL_DATA {nc}\nSCALARS level int 1\nLOOKUP_TABLE default");
    for k in 0..nc {
        let _ = writeln!(s, "{}", mesh.cell(k).level);
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {nv}");
        for (name, f) in fields {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in f.vertex_values() {
                let _ = writeln!(s, "{}", num(v));
            }
        }
    }
    s
}

/// Legacy ASCII VTK structured points for nodal grid data.
pub fn grid_vtk(fields: &[(&str, &GridField)]) -> String {
    let level = fields.first().map(|f| f.1.level).unwrap_or(0);
    let n = (1usize << level) + 1;
    let h = 1.0 / (n - 1) as f64;
    let mut s = String::from("# vtk DataFile Version 3.0\nnodal grid data\nASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(s, "DIMENSIONS {n} {n} 1\nORIGIN 0 0 0\nSPACING {} {} 1\nPOINT_DATA {}", num(h), num(h), n * n);
    for (name, g) in fields {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in &g.values {
            let _ = writeln!(s, "{}", num(*v));
        }
    }
    s
}

/// `x,y,value` per mesh vertex.
pub fn field_csv(field: &Field) -> String {
    let mesh = field.mesh();
    let mut s = String::from("x,y,value\n");
    for (v, val) in field.vertex_values().iter().enumerate() {
        let p = mesh.vertex(v);
        let _ = writeln!(s, "{},{},{}", num(p[0]), num(p[1]), num(*val));
    }
    s
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), IoError> {
    let csv_err = |source| IoError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush().map_err(file_err(path))
}

/// Columns of a numeric CSV file after the header.
fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>, IoError> {
    let csv_err = |source| IoError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let h = r.headers().map_err(csv_err)?;
    if h.iter().collect::<Vec<_>>() != header {
        return Err(format_err(path, format!("expected columns {}", header.join(","))));
    }
    let mut cols = vec![Vec::new(); header.len()];
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            c.push(field.parse().map_err(|_| format_err(path, format!("bad number `{field}`")))?);
        }
    }
    Ok(cols)
}

const BUNDLE_FORMAT: &str = "ggn-data-1";
const OBS_HEADER: [&str; 5] = ["index", "x", "y", "g", "g_delta"];
const TRUTH_HEADER: [&str; 5] = ["index", "x", "y", "q_dagger", "u_dagger"];

/// Writes `manifest.txt`, `observations.csv`, `truth.csv` and, for `L²` data, `observations.vtk`.
pub fn save_bundle(dir: &Path, data: &NoisyData, config_hash: &str) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(file_err(dir))?;
    let mut m = Manifest::default();
    m.push("format", BUNDLE_FORMAT)
        .push("case", data.case.label())
        .push("obs", data.obs.label())
        .push("points_per_side", match data.obs {
            ObservationKind::Point { n_side } => n_side,
            ObservationKind::L2 => 0,
        })
        .push("zeta", num(data.zeta))
        .push("noise", num(data.noise))
        .push("seed", data.seed)
        .push("fine_levels", data.fine_levels)
        .push("delta", num(data.delta))
        .push("config_hash", config_hash);
    write_file(&dir.join("manifest.txt"), &m.to_text())?;
    match &data.observed {
        Observed::Point { points, g, g_delta } => {
            let rows = (0..points.len())
                .map(|i| vec![i.to_string(), num(points[i][0]), num(points[i][1]), num(g[i]), num(g_delta[i])]);
            write_csv(&dir.join("observations.csv"), &OBS_HEADER, rows)?;
        }
        Observed::L2 { g, g_delta } => {
            let rows = (0..g.values.len()).map(|i| {
                let p = g.coords(i);
                vec![i.to_string(), num(p[0]), num(p[1]), num(g.values[i]), num(g_delta.values[i])]
            });
            write_csv(&dir.join("observations.csv"), &OBS_HEADER, rows)?;
            write_file(&dir.join("observations.vtk"), &grid_vtk(&[("g", g), ("g_delta", g_delta)]))?;
        }
    }
    let (q, u) = (&data.q_dagger, &data.u_dagger);
    let rows = (0..q.values.len()).map(|i| {
        let p = q.coords(i);
        vec![i.to_string(), num(p[0]), num(p[1]), num(q.values[i]), num(u.values[i])]
    });
    write_csv(&dir.join("truth.csv"), &TRUTH_HEADER, rows)
}

/// Reads a bundle written by [`save_bundle`].
pub fn load_bundle(dir: &Path) -> Result<NoisyData, IoError> {
    let mpath = dir.join("manifest.txt");
    let m = Manifest::read(&mpath)?;
    if m.get("format") != Some(BUNDLE_FORMAT) {
        return Err(format_err(&mpath, "not a data bundle"));
    }
    let case = m.get("case").and_then(SyntheticCase::parse).ok_or_else(|| format_err(&mpath, "bad `case`"))?;
    let n_side: usize = m.require("points_per_side", &mpath)?;
    let obs = match m.get("obs") {
        Some("point") if n_side > 0 => ObservationKind::Point { n_side },
        Some("l2") => ObservationKind::L2,
        _ => return Err(format_err(&mpath, "bad `obs`")),
    };
    let fine_levels: u8 = m.require("fine_levels", &mpath)?;
    if fine_levels > 14 {
        return Err(format_err(&mpath, "data mesh too deep"));
    }
    let nodes = ((1usize << fine_levels) + 1).pow(2);
    let tpath = dir.join("truth.csv");
    let truth = read_csv(&tpath, &TRUTH_HEADER)?;
    if truth[0].len() != nodes {
        return Err(format_err(&tpath, format!("expected {nodes} rows")));
    }
    let grid = |values: &Vec<f64>| GridField { level: fine_levels, values: values.clone() };
    let opath = dir.join("observations.csv");
    let o = read_csv(&opath, &OBS_HEADER)?;
    let observed = match obs {
        ObservationKind::Point { .. } => {
            if o[0].len() != n_side * n_side {
                return Err(format_err(&opath, "row count does not match the lattice"));
            }
            let points = o[1].iter().zip(&o[2]).map(|(x, y)| [*x, *y]).collect();
            Observed::Point { points, g: o[3].clone(), g_delta: o[4].clone() }
        }
        ObservationKind::L2 => {
            if o[0].len() != nodes {
                return Err(format_err(&opath, format!("expected {nodes} rows")));
            }
            Observed::L2 { g: grid(&o[3]), g_delta: grid(&o[4]) }
        }
    };
    Ok(NoisyData {
        case,
        obs,
        zeta: m.require("zeta", &mpath)?,
        noise: m.require("noise", &mpath)?,
        seed: m.require("seed", &mpath)?,
        fine_levels,
        delta: m.require("delta", &mpath)?,
        observed,
        q_dagger: grid(&truth[3]),
        u_dagger: grid(&truth[4]),
        warnings: Vec::new(),
    })
}

/// Writes `run.csv`, `fields.vtk`, `q.csv` and `manifest.txt` for one run.
pub fn save_run(dir: &Path, report: &RunReport, config_hash: &str) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(file_err(dir))?;
    write_file(&dir.join("run.csv"), &report.csv())?;
    let mut fields: Vec<(&str, &Field)> = vec![("q", &report.q)];
    if report.q.space().same_mesh(report.u.space()) {
        fields.push(("u", &report.u));
    }
    write_file(&dir.join("fields.vtk"), &mesh_vtk(report.q.mesh(), &fields))?;
    write_file(&dir.join("q.csv"), &field_csv(&report.q))?;
    write_file(&dir.join("manifest.txt"), &run_manifest(report, config_hash).to_text())
}

pub fn run_manifest(report: &RunReport, config_hash: &str) -> Manifest {
    let mut m = Manifest::default();
    m.push("method", report.method)
        .push("termination", report.termination.label())
        .push("iterations", report.iterations())
        .push("relative_error", num(report.rel_error))
        .push("beta", num(report.beta))
        .push("nodes", report.nodes)
        .push("final_discrepancy", num(report.final_i3))
        .push("threshold", num(report.threshold))
        .push("delta", num(report.delta))
        .push("monotone", report.monotone())
        .push("wall_time", num(report.wall_time))
        .push("config_hash", config_hash);
    for w in &report.warnings {
        m.push("warning", w);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let mut m = Manifest::default();
        m.push("a", 1).push("b", "x y");
        assert_eq!(Manifest::parse(&m.to_text()), m);
        assert_eq!(m.get("b"), Some("x y"));
    }

    #[test]
    fn vtk_counts() {
        let mesh = crate::mesh::uniform_mesh(1);
        let s = mesh_vtk(&mesh, &[]);
        assert!(s.contains("POINTS 9 double"));
        assert!(s.contains("CELLS 4 20"));
    }
}
