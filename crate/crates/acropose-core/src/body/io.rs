//! Body-model file container.
//!
//! Plain-text layout: a dimensions header, the skeleton, then row-major
//! float arrays. Floats are written in shortest round-trip form so a
//! save/load cycle is bit-exact.
//!
//! ```text
//! body_model v1
//! joints <J> vertices <V> faces <F> shape_dims <B>
//! joint <index> <name> <parent|-1>        (J lines)
//! template                                 (V lines: x y z)
//! faces                                    (F lines: a b c)
//! shape_basis <b>                          (V lines: x y z, repeated per dim)
//! joint_regressor                          (J lines: V floats)
//! skin_weights                             (V lines: J floats)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{BodyModelData, KinematicTree};
use crate::error::{Error, Result};

pub fn save_model(model: &BodyModelData, path: &Path) -> Result<()> {
    let mut out = String::new();
    let v = model.vertex_count();
    let j = model.joint_count();
    out.push_str("body_model v1\n");
    let _ = writeln!(
        out,
        "joints {j} vertices {v} faces {} shape_dims {}",
        model.faces.len(),
        model.shape_dims()
    );
    for (idx, name) in model.tree.names.iter().enumerate() {
        let parent = model.tree.parent[idx].map(|p| p as i64).unwrap_or(-1);
        let _ = writeln!(out, "joint {idx} {name} {parent}");
    }
    out.push_str("template\n");
    for p in &model.template {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out.push_str("faces\n");
    for f in &model.faces {
        let _ = writeln!(out, "{} {} {}", f[0], f[1], f[2]);
    }
    for (b, basis) in model.shape_basis.iter().enumerate() {
        let _ = writeln!(out, "shape_basis {b}");
        for p in basis {
            let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
        }
    }
    out.push_str("joint_regressor\n");
    for row in &model.joint_regressor {
        let mut dense = vec![0.0f64; v];
        for &(idx, w) in row {
            dense[idx] = w;
        }
        let _ = writeln!(out, "{}", join_floats(&dense));
    }
    out.push_str("skin_weights\n");
    for row in &model.skin_weights {
        let mut dense = vec![0.0f64; j];
        for &(idx, w) in row {
            dense[idx] = w;
        }
        let _ = writeln!(out, "{}", join_floats(&dense));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn join_floats(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

struct Lines<'a> {
    path: &'a Path,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        for (i, line) in self.iter.by_ref() {
            let trimmed = line.trim_end();
            if !trimmed.is_empty() {
                return Ok((i + 1, trimmed));
            }
        }
        Err(Error::Parse {
            path: self.path.to_path_buf(),
            line: 0,
            message: "unexpected end of file".into(),
        })
    }

    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn expect_header(&mut self, tag: &str) -> Result<(usize, Vec<String>)> {
        let (n, line) = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(tag) {
            return Err(self.error(n, format!("expected '{tag}' section, got '{line}'")));
        }
        Ok((n, parts.map(str::to_string).collect()))
    }

    fn floats(&mut self, count: usize) -> Result<Vec<f64>> {
        let (n, line) = self.next_line()?;
        let values: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let values = values.map_err(|e| self.error(n, format!("bad float: {e}")))?;
        if values.len() != count {
            return Err(self.error(n, format!("expected {count} values, got {}", values.len())));
        }
        Ok(values)
    }
}

pub fn load_model(path: &Path) -> Result<BodyModelData> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Lines {
        path,
        iter: text.lines().enumerate(),
    };

    let (n, magic) = lines.next_line()?;
    if magic != "body_model v1" {
        return Err(lines.error(n, format!("unknown container header '{magic}'")));
    }
    let (n, dims) = lines.next_line()?;
    let parts: Vec<&str> = dims.split_whitespace().collect();
    if parts.len() != 8 || parts[0] != "joints" || parts[2] != "vertices" || parts[4] != "faces" || parts[6] != "shape_dims" {
        return Err(lines.error(n, "malformed dimensions header"));
    }
    let parse_dim = |s: &str, what: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| lines.error(n, format!("bad {what} count '{s}'")))
    };
    let j_count = parse_dim(parts[1], "joint")?;
    let v_count = parse_dim(parts[3], "vertex")?;
    let f_count = parse_dim(parts[5], "face")?;
    let b_count = parse_dim(parts[7], "shape dim")?;

    let mut names = Vec::with_capacity(j_count);
    let mut parents = Vec::with_capacity(j_count);
    for expect in 0..j_count {
        let (n, line) = lines.next_line()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "joint" {
            return Err(lines.error(n, "malformed joint line"));
        }
        let idx: usize = parts[1]
            .parse()
            .map_err(|_| lines.error(n, "bad joint index"))?;
        if idx != expect {
            return Err(lines.error(n, format!("joint {expect} out of order")));
        }
        names.push(parts[2].to_string());
        let parent: i64 = parts[3]
            .parse()
            .map_err(|_| lines.error(n, "bad parent index"))?;
        parents.push(if parent < 0 { None } else { Some(parent as usize) });
    }

    lines.expect_header("template")?;
    let mut template = Vec::with_capacity(v_count);
    for _ in 0..v_count {
        let v = lines.floats(3)?;
        template.push(Vector3::new(v[0], v[1], v[2]));
    }

    lines.expect_header("faces")?;
    let mut faces = Vec::with_capacity(f_count);
    for _ in 0..f_count {
        let (n, line) = lines.next_line()?;
        let idx: std::result::Result<Vec<usize>, _> =
            line.split_whitespace().map(str::parse::<usize>).collect();
        let idx = idx.map_err(|e| lines.error(n, format!("bad face index: {e}")))?;
        if idx.len() != 3 {
            return Err(lines.error(n, "faces need exactly 3 indices"));
        }
        faces.push([idx[0], idx[1], idx[2]]);
    }

    let mut shape_basis = Vec::with_capacity(b_count);
    for b in 0..b_count {
        let (n, args) = lines.expect_header("shape_basis")?;
        if args.first().map(String::as_str) != Some(b.to_string().as_str()) {
            return Err(lines.error(n, format!("shape_basis {b} out of order")));
        }
        let mut basis = Vec::with_capacity(v_count);
        for _ in 0..v_count {
            let v = lines.floats(3)?;
            basis.push(Vector3::new(v[0], v[1], v[2]));
        }
        shape_basis.push(basis);
    }

    lines.expect_header("joint_regressor")?;
    let mut joint_regressor = Vec::with_capacity(j_count);
    for _ in 0..j_count {
        let dense = lines.floats(v_count)?;
        joint_regressor.push(sparsify(&dense));
    }

    lines.expect_header("skin_weights")?;
    let mut skin_weights = Vec::with_capacity(v_count);
    for _ in 0..v_count {
        let dense = lines.floats(j_count)?;
        skin_weights.push(sparsify(&dense));
    }

    BodyModelData::new(
        template,
        faces,
        shape_basis,
        joint_regressor,
        skin_weights,
        KinematicTree {
            parent: parents,
            names,
        },
    )
}

fn sparsify(dense: &[f64]) -> Vec<(usize, f64)> {
    dense
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(i, w)| (i, *w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{build_test_body, TestBodyConfig};

    #[test]
    fn model_round_trips_bit_exactly() {
        let model = build_test_body(&TestBodyConfig {
            shape_dims: 3,
            seed: 5,
            ..TestBodyConfig::default()
        })
        .unwrap();
        let dir = std::env::temp_dir().join("acropose_model_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.txt");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(model, loaded);
    }

    #[test]
    fn loader_rejects_corrupt_weights() {
        let model = build_test_body(&TestBodyConfig::default()).unwrap();
        let dir = std::env::temp_dir().join("acropose_model_io_test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.txt");
        save_model(&model, &path).unwrap();
        // Scale one skin-weight row so it no longer sums to 1.
        let text = std::fs::read_to_string(&path).unwrap();
        let marker = "skin_weights\n";
        let at = text.find(marker).unwrap() + marker.len();
        let line_end = text[at..].find('\n').unwrap() + at;
        let row: Vec<f64> = text[at..line_end]
            .split_whitespace()
            .map(|s| s.parse::<f64>().unwrap() * 2.0)
            .collect();
        let mut corrupted = text[..at].to_string();
        corrupted.push_str(&join_floats(&row));
        corrupted.push_str(&text[line_end..]);
        std::fs::write(&path, corrupted).unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(matches!(err, Error::InvalidModel(_)), "got {err:?}");
    }

    #[test]
    fn loader_reports_line_numbers() {
        let dir = std::env::temp_dir().join("acropose_model_io_test3");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.txt");
        std::fs::write(&path, "body_model v1\njoints x vertices 0 faces 0 shape_dims 0\n").unwrap();
        match load_model(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
