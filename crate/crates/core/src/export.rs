//! File output: versioned JSON reports, line-delimited catalogs, CSV tables
//! and OBJ/PLY meshes. Every file is written to a temporary sibling and
//! renamed into place.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cone2::ConeStrands;
use crate::cone3::{immersion3, TripleParams, TripleStrands};
use crate::geometry::ComplexTriple;
use crate::spectral::CurveSample;

/// Format version stamped on every output.
pub const SCHEMA_VERSION: u32 = crate::periodicity::SCHEMA_VERSION;

/// Write `contents` to `path` atomically.
pub fn write_atomic(path: &Path, contents: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut buf = io::BufWriter::new(tmp.as_file_mut());
        contents(&mut buf)?;
        buf.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Serialize `value` and add a top-level `schema_version`.
pub fn versioned<T: Serialize>(value: &T) -> io::Result<Value> {
    let mut v = serde_json::to_value(value).map_err(io::Error::other)?;
    match v.as_object_mut() {
        Some(map) => {
            map.insert("schema_version".into(), json!(SCHEMA_VERSION));
            Ok(v)
        }
        None => Ok(json!({ "schema_version": SCHEMA_VERSION, "data": v })),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let v = versioned(value)?;
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, &v).map_err(io::Error::other)?;
        writeln!(w)
    })
}

/// One JSON record per line.
pub fn write_ndjson<T: Serialize>(path: &Path, records: &[T]) -> io::Result<()> {
    write_atomic(path, |w| {
        for r in records {
            serde_json::to_writer(&mut *w, &versioned(r)?).map_err(io::Error::other)?;
            writeln!(w)?;
        }
        Ok(())
    })
}

/// Read a line-delimited catalog, skipping blank and truncated lines.
pub fn read_ndjson<T: DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(v) = serde_json::from_str(&line) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Spectral-curve samples: `λ` then the three roots, real and imaginary parts.
pub fn write_curve_csv(path: &Path, samples: &[CurveSample]) -> io::Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["lambda_re", "lambda_im", "mu1_re", "mu1_im", "mu2_re", "mu2_im", "mu3_re", "mu3_im"])?;
        for s in samples {
            let mut row = vec![s.lambda.re, s.lambda.im];
            for m in &s.mu_roots {
                row.extend([m.re, m.im]);
            }
            csv.write_record(row.iter().map(|x| format!("{x:.17e}")))?;
        }
        csv.flush()
    })
}

/// A real coordinate of `ℂ³`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coordinate {
    Re(usize),
    Im(usize),
}

impl Coordinate {
    pub fn of(&self, z: &ComplexTriple) -> f64 {
        match *self {
            Coordinate::Re(j) => z[j].re,
            Coordinate::Im(j) => z[j].im,
        }
    }
}

/// Choice of three real coordinates for projecting `ℂ³ → ℝ³`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Projection(pub [Coordinate; 3]);

impl Default for Projection {
    fn default() -> Self {
        Projection([Coordinate::Re(0), Coordinate::Re(1), Coordinate::Re(2)])
    }
}

impl std::str::FromStr for Projection {
    type Err = String;

    /// Parses `re1,re2,im3` (indices 1 to 3).
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("projection needs three coordinates, got {s:?}"));
        }
        let mut out = [Coordinate::Re(0); 3];
        for (slot, p) in out.iter_mut().zip(&parts) {
            let lower = p.to_ascii_lowercase();
            let (kind, idx) = lower.split_at(lower.len().min(2));
            let j: usize = idx.parse().map_err(|_| format!("bad coordinate {p:?}"))?;
            if !(1..=3).contains(&j) {
                return Err(format!("coordinate index must be 1..3 in {p:?}"));
            }
            *slot = match kind {
                "re" => Coordinate::Re(j - 1),
                "im" => Coordinate::Im(j - 1),
                _ => return Err(format!("bad coordinate {p:?}")),
            };
        }
        Ok(Projection(out))
    }
}

/// Triangulated surface.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    /// Regular `n × n` grid of points with two triangles per cell.
    pub fn from_grid(n: usize, point: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let mut vertices = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                vertices.push(point(i, j));
            }
        }
        let mut faces = Vec::with_capacity(2 * (n - 1) * (n - 1));
        for i in 0..n.saturating_sub(1) {
            for j in 0..n - 1 {
                let a = i * n + j;
                faces.push([a, a + n, a + 1]);
                faces.push([a + 1, a + n, a + n + 1]);
            }
        }
        Mesh { vertices, faces }
    }

    pub fn write_obj(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "# schema_version {SCHEMA_VERSION}")?;
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
        }
        for f in &self.faces {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        Ok(())
    }

    pub fn write_ply(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "ply\nformat ascii 1.0\ncomment schema_version {SCHEMA_VERSION}")?;
        writeln!(w, "element vertex {}\nproperty double x\nproperty double y\nproperty double z", self.vertices.len())?;
        writeln!(w, "element face {}\nproperty list uchar int vertex_indices\nend_header", self.faces.len())?;
        for v in &self.vertices {
            writeln!(w, "{} {} {}", v[0], v[1], v[2])?;
        }
        for f in &self.faces {
            writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
        }
        Ok(())
    }
}

/// Sample `Φ(1, s, t)` on an `n × n` grid and project.
pub fn cone_mesh(
    strands: &ConeStrands,
    s_range: (f64, f64),
    t_range: (f64, f64),
    n: usize,
    projection: &Projection,
) -> crate::Result<Mesh> {
    let n = n.max(2);
    let ys = strands.y.samples(s_range.0, s_range.1, n)?;
    let zs = strands.z.samples(t_range.0, t_range.1, n)?;
    Ok(Mesh::from_grid(n, |i, j| {
        let phi = ys[i].y.hadamard(&zs[j].y) * (1.0 / 3f64.sqrt());
        projection.0.map(|c| c.of(&phi))
    }))
}

/// Sample the three-variable immersion on an `n × n` grid in `(s, t)` at
/// fixed `r`.
pub fn triple_mesh(
    params: &TripleParams,
    strands: &TripleStrands,
    r: f64,
    s_range: (f64, f64),
    t_range: (f64, f64),
    n: usize,
    projection: &Projection,
) -> crate::Result<Mesh> {
    let n = n.max(2);
    let mut pts = vec![[0.0; 3]; n * n];
    for i in 0..n {
        let s = s_range.0 + (s_range.1 - s_range.0) * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let t = t_range.0 + (t_range.1 - t_range.0) * j as f64 / (n - 1) as f64;
            let phi = immersion3(params, strands, r, s, t)?;
            pts[i * n + j] = projection.0.map(|c| c.of(&phi));
        }
    }
    Ok(Mesh::from_grid(n, |i, j| pts[i * n + j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone2::derive_params;
    use crate::ode::IntegratorOptions;
    use crate::spectral::{CurveForm, SpectralCurve};
    use num_complex::Complex64;

    #[test]
    fn projection_parsing() {
        let p: Projection = "re1, im2,RE3".parse().unwrap();
        assert_eq!(p.0, [Coordinate::Re(0), Coordinate::Im(1), Coordinate::Re(2)]);
        assert!("re1,re2".parse::<Projection>().is_err());
        assert!("re1,re2,xx3".parse::<Projection>().is_err());
        assert!("re0,re2,re3".parse::<Projection>().is_err());
    }

    #[test]
    fn obj_has_one_vertex_per_sample() {
        let p = derive_params(1.0, 0.3, 0.4).unwrap();
        let st = ConeStrands::integrate(&p, (0.0, 6.0), (0.0, 6.0), &IntegratorOptions::default()).unwrap();
        let mesh = cone_mesh(&st, (0.0, 6.0), (0.0, 6.0), 64, &Projection::default()).unwrap();
        assert_eq!(mesh.vertices.len(), 4096);
        assert_eq!(mesh.faces.len(), 2 * 63 * 63);
        let mut buf = Vec::new();
        mesh.write_obj(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 4096);
        let mut ply = Vec::new();
        mesh.write_ply(&mut ply).unwrap();
        assert!(String::from_utf8(ply).unwrap().contains("element vertex 4096"));
    }

    #[test]
    fn evolving_quadrics_lie_on_the_cone() {
        let p = derive_params(0.9, 0.0, 0.0).unwrap();
        let st = ConeStrands::integrate(&p, (0.0, 5.0), (0.0, 5.0), &IntegratorOptions::with_tol(1e-12)).unwrap();
        let n = 16;
        let mesh = cone_mesh(&st, (0.0, 5.0), (0.0, 5.0), n, &Projection::default()).unwrap();
        let zs = st.z.samples(0.0, 5.0, n).unwrap();
        for (k, v) in mesh.vertices.iter().enumerate() {
            let z = zs[k % n].y;
            assert!(z.max_abs() > 0.0 && (0..3).all(|j| z[j].im.abs() < 1e-12));
            let cleared: f64 =
                (0..3).map(|j| p.gamma[j] * v[j] * v[j] * z[(j + 1) % 3].re.powi(2) * z[(j + 2) % 3].re.powi(2)).sum();
            assert!(cleared.abs() < 1e-6, "{cleared}");
        }
    }

    #[test]
    fn json_and_ndjson_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/report.json");
        write_json(&path, &json!({"x": 1})).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        let cat = dir.path().join("cat.ndjson");
        write_ndjson(&cat, &[json!({"a": 1}), json!({"a": 2})]).unwrap();
        fs::OpenOptions::new().append(true).open(&cat).unwrap().write_all(b"{\"a\": 3").unwrap();
        let back: Vec<Value> = read_ndjson(&cat).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1]["a"], 2);
    }

    #[test]
    fn curve_csv_columns() {
        let dir = tempfile::tempdir().unwrap();
        let curve =
            SpectralCurve { d: 1.0 / 12.0, e: 0.001, xi: Complex64::new(0.01, 0.02), form: CurveForm::Quadratic };
        let samples = curve.samples(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]).unwrap();
        let path = dir.path().join("curve.csv");
        write_curve_csv(&path, &samples).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.split(',').count() == 8));
    }
}
