//! Point cloud files, transform JSON and scenario pair directories.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};

/// Loads `.xyz`, `.off` or ASCII `.ply` by extension. Point order is preserved.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let points = match ext.as_str() {
        "xyz" | "txt" => parse_xyz(path, &text)?,
        "off" => parse_off(path, &text)?,
        "ply" => parse_ply(path, &text)?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "{}: unsupported point cloud extension {other:?}",
                path.display()
            )))
        }
    };
    if points.is_empty() {
        return Err(Error::parse(path, 0, "no points"));
    }
    PointCloud::new(points)
}

/// Writes whitespace-separated triples with 9 significant digits.
pub fn save_cloud(pc: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(pc.len() * 48);
    for p in pc.points() {
        out.push_str(&format!("{:.8e} {:.8e} {:.8e}\n", p.x, p.y, p.z));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn parse_triple(path: &Path, lineno: usize, tokens: &[&str]) -> Result<Vector3<f64>> {
    if tokens.len() < 3 {
        return Err(Error::parse(path, lineno, format!("expected 3 coordinates, found {}", tokens.len())));
    }
    let mut v = [0.0; 3];
    for (k, tok) in tokens[..3].iter().enumerate() {
        v[k] = tok
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("invalid number {tok:?}")))?;
    }
    Ok(Vector3::from(v))
}

fn parse_xyz(path: &Path, text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(Error::parse(path, i + 1, format!("expected 3 coordinates, found {}", tokens.len())));
        }
        points.push(parse_triple(path, i + 1, &tokens)?);
    }
    Ok(points)
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_off(path: &Path, text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut lines = content_lines(text);
    let (n0, first) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty OFF file"))?;
    // The counts may share the header line ("OFF 8 6 0") or follow it.
    let counts_line = match first.strip_prefix("OFF") {
        Some(rest) if !rest.trim().is_empty() => (n0, rest.trim()),
        Some(_) => lines.next().ok_or_else(|| Error::parse(path, n0 + 1, "missing OFF counts"))?,
        None => return Err(Error::parse(path, n0, "missing OFF header")),
    };
    let counts: Vec<&str> = counts_line.1.split_whitespace().collect();
    let n_vertices: usize = counts
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(path, counts_line.0, "invalid OFF vertex count"))?;
    let mut points = Vec::with_capacity(n_vertices);
    let mut last = counts_line.0;
    for _ in 0..n_vertices {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path, last + 1, "unexpected end of OFF vertex list"))?;
        last = lineno;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        points.push(parse_triple(path, lineno, &tokens)?);
    }
    Ok(points)
}

fn parse_ply(path: &Path, text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(path, 1, "missing ply magic")),
    }

    let mut n_vertices = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    let mut header_end = None;
    for (lineno, line) in lines.by_ref() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["format", fmt, ..] => {
                if *fmt != "ascii" {
                    return Err(Error::parse(path, lineno, format!("unsupported ply format {fmt:?}")));
                }
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    n_vertices = Some(
                        count
                            .parse::<usize>()
                            .map_err(|_| Error::parse(path, lineno, "invalid vertex count"))?,
                    );
                } else if n_vertices.is_none() {
                    return Err(Error::parse(path, lineno, "vertex element must come first"));
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::parse(path, lineno, "list properties on vertices are not supported"));
            }
            ["property", _, name] => {
                if in_vertex {
                    props.push(name.to_string());
                }
            }
            ["property", ..] => {}
            ["end_header"] => {
                header_end = Some(lineno);
                break;
            }
            _ => return Err(Error::parse(path, lineno, format!("malformed ply header line {line:?}"))),
        }
    }
    let header_end = header_end.ok_or_else(|| Error::parse(path, 0, "missing end_header"))?;
    let n_vertices = n_vertices.ok_or_else(|| Error::parse(path, header_end, "no vertex element"))?;
    let column = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::parse(path, header_end, format!("missing vertex property {name}")))
    };
    let cols = [column("x")?, column("y")?, column("z")?];

    let mut points = Vec::with_capacity(n_vertices);
    let mut last = header_end;
    while points.len() < n_vertices {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path, last + 1, "unexpected end of vertex data"))?;
        last = lineno;
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != props.len() {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {} vertex values, found {}", props.len(), tokens.len()),
            ));
        }
        let picked = [tokens[cols[0]], tokens[cols[1]], tokens[cols[2]]];
        points.push(parse_triple(path, lineno, &picked)?);
    }
    Ok(points)
}

/// JSON form of a rigid transform: row-major rotation and translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&RigidTransform> for TransformRecord {
    fn from(t: &RigidTransform) -> Self {
        let r = t.rotation();
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[3 * i + j] = r[(i, j)];
            }
        }
        let tr = t.translation();
        Self {
            rotation,
            translation: [tr.x, tr.y, tr.z],
        }
    }
}

impl TryFrom<&TransformRecord> for RigidTransform {
    type Error = Error;

    fn try_from(rec: &TransformRecord) -> Result<Self> {
        RigidTransform::new(
            Matrix3::from_row_slice(&rec.rotation),
            Vector3::from(rec.translation),
        )
    }
}

pub fn save_transform(t: &RigidTransform, path: impl AsRef<Path>) -> Result<()> {
    save_json(&TransformRecord::from(t), path)
}

pub fn load_transform(path: impl AsRef<Path>) -> Result<RigidTransform> {
    let rec: TransformRecord = load_json(path.as_ref())?;
    RigidTransform::try_from(&rec)
}

pub fn save_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub const SOURCE_FILE: &str = "source.xyz";
pub const TARGET_FILE: &str = "target.xyz";
pub const TRANSFORM_FILE: &str = "transform.json";

pub fn pair_dir_name(index: usize) -> String {
    format!("pair_{index:04}")
}

/// One pair loaded from a scenario directory.
#[derive(Debug, Clone)]
pub struct StoredPair {
    pub dir: PathBuf,
    pub source: PointCloud,
    pub target: PointCloud,
    pub transform: RigidTransform,
}

pub fn write_pair(dir: impl AsRef<Path>, source: &PointCloud, target: &PointCloud, transform: &RigidTransform) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_cloud(source, dir.join(SOURCE_FILE))?;
    save_cloud(target, dir.join(TARGET_FILE))?;
    save_transform(transform, dir.join(TRANSFORM_FILE))
}

pub fn read_pair(dir: impl AsRef<Path>) -> Result<StoredPair> {
    let dir = dir.as_ref();
    Ok(StoredPair {
        dir: dir.to_path_buf(),
        source: load_cloud(dir.join(SOURCE_FILE))?,
        target: load_cloud(dir.join(TARGET_FILE))?,
        transform: load_transform(dir.join(TRANSFORM_FILE))?,
    })
}

/// Pair subdirectories of a scenario directory, sorted by name.
pub fn list_pair_dirs(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let root = root.as_ref();
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name();
        if entry.path().is_dir() && name.to_string_lossy().starts_with("pair_") {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EulerAngles;
    use tempfile::tempdir;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn three_line_xyz() {
        let d = tempdir().unwrap();
        let p = write(d.path(), "a.xyz", "0 0 0\n1 2 3\n-1.5 2e-3 4\n");
        let pc = load_cloud(&p).unwrap();
        assert_eq!(pc.len(), 3);
        assert_eq!(pc.points()[2], Vector3::new(-1.5, 2e-3, 4.0));
    }

    #[test]
    fn off_faces_ignored() {
        let d = tempdir().unwrap();
        let text = "OFF\n# cube corner\n4 2 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n3 0 1 3\n";
        let pc = load_cloud(write(d.path(), "t.off", text)).unwrap();
        assert_eq!(pc.len(), 4);
        assert_eq!(pc.points()[3], Vector3::new(0.0, 0.0, 1.0));
        let inline = load_cloud(write(d.path(), "u.off", "OFF 2 0 0\n1 1 1\n2 2 2\n")).unwrap();
        assert_eq!(inline.len(), 2);
    }

    #[test]
    fn ascii_ply_vertices() {
        let d = tempdir().unwrap();
        let text = "ply\nformat ascii 1.0\ncomment x\nelement vertex 2\nproperty float nx\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n9 1 2 3\n9 4 5 6\n3 0 1 0\n";
        let pc = load_cloud(write(d.path(), "m.ply", text)).unwrap();
        assert_eq!(pc.points(), &[Vector3::new(1.0, 2.0, 3.0), Vector3::new(4.0, 5.0, 6.0)]);
    }

    #[test]
    fn binary_ply_rejected() {
        let d = tempdir().unwrap();
        let p = write(d.path(), "b.ply", "ply\nformat binary_little_endian 1.0\nend_header\n");
        let err = load_cloud(&p).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn malformed_row_names_line() {
        let d = tempdir().unwrap();
        let p = write(d.path(), "bad.xyz", "0 0 0\n\n1 2 x\n");
        let err = load_cloud(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let p = write(d.path(), "short.xyz", "0 0 0\n1 2\n");
        assert!(matches!(load_cloud(&p), Err(Error::Parse { line: 2, .. })));
        let p = write(d.path(), "trunc.off", "OFF\n3 0 0\n1 1 1\n");
        assert!(matches!(load_cloud(&p), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn empty_and_unknown_rejected() {
        let d = tempdir().unwrap();
        assert!(load_cloud(write(d.path(), "e.xyz", "\n")).is_err());
        assert!(matches!(
            load_cloud(write(d.path(), "e.obj", "v 1 2 3\n")),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(load_cloud(d.path().join("missing.xyz")), Err(Error::Io { .. })));
    }

    #[test]
    fn save_load_round_trip() {
        let d = tempdir().unwrap();
        let pc = crate::datagen::Shape::Torus.sample(500, &mut crate::random::seeded_rng(1));
        let p = d.path().join("r.xyz");
        save_cloud(&pc, &p).unwrap();
        let back = load_cloud(&p).unwrap();
        assert_eq!(back.len(), pc.len());
        for (a, b) in pc.points().iter().zip(back.points()) {
            assert!((a - b).amax() <= 1e-8);
        }
    }

    #[test]
    fn transform_json_round_trip() {
        let d = tempdir().unwrap();
        let t = RigidTransform::from_euler(EulerAngles::new(30.0, -10.0, 5.0), Vector3::new(0.1, -0.2, 0.3));
        let p = d.path().join("t.json");
        save_transform(&t, &p).unwrap();
        let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(value["rotation"].as_array().unwrap().len(), 9);
        assert_eq!(value["translation"].as_array().unwrap().len(), 3);
        assert_eq!(value["rotation"][1].as_f64().unwrap(), t.rotation()[(0, 1)]);
        assert_eq!(load_transform(&p).unwrap(), t);
    }

    #[test]
    fn non_rotation_json_rejected() {
        let d = tempdir().unwrap();
        let p = write(d.path(), "t.json", r#"{"rotation":[2,0,0,0,1,0,0,0,1],"translation":[0,0,0]}"#);
        assert!(matches!(load_transform(&p), Err(Error::InvalidTransform(_))));
        let p = write(d.path(), "u.json", r#"{"rotation":[1,0,0],"translation":[0,0,0]}"#);
        assert!(matches!(load_transform(&p), Err(Error::Json { .. })));
    }

    #[test]
    fn pair_directories() {
        let d = tempdir().unwrap();
        let pc = PointCloud::from_slices(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let t = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.0));
        write_pair(d.path().join(pair_dir_name(1)), &pc, &t.apply(&pc), &t).unwrap();
        write_pair(d.path().join(pair_dir_name(0)), &pc, &pc, &RigidTransform::identity()).unwrap();
        fs::create_dir(d.path().join("other")).unwrap();
        let dirs = list_pair_dirs(d.path()).unwrap();
        assert_eq!(dirs.len(), 2);
        assert!(dirs[0].ends_with("pair_0000"));
        let p = read_pair(&dirs[1]).unwrap();
        assert_eq!(p.transform, t);
        assert_eq!(p.target.points()[0], Vector3::new(0.0, 0.0, 1.0));
    }
}
