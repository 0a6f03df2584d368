//! Minimal ASCII OBJ reader: `v x y z` and triangular `f i j k` lines.
//!
//! Face entries may carry `/vt/vn` suffixes, which are dropped. Any other
//! record type is ignored.

use std::path::Path;

use nalgebra::Point3;

use super::{GeometryError, TriangleMesh};

pub fn load_obj(path: &Path) -> Result<TriangleMesh, GeometryError> {
    let text = std::fs::read_to_string(path).map_err(|e| GeometryError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_obj(&text)
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh, GeometryError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<&str> = tokens.collect();
                // A trailing w component is tolerated.
                if coords.len() < 3 || coords.len() > 4 {
                    return Err(obj_err(line, "vertex needs 3 coordinates"));
                }
                let mut xyz = [0.0; 3];
                for (slot, tok) in xyz.iter_mut().zip(&coords) {
                    *slot = tok
                        .parse()
                        .map_err(|_| obj_err(line, &format!("bad coordinate {tok:?}")))?;
                }
                vertices.push(Point3::from(xyz));
            }
            Some("f") => {
                let idx: Vec<&str> = tokens.collect();
                if idx.len() != 3 {
                    return Err(obj_err(
                        line,
                        &format!("face has {} vertices, only triangles are supported", idx.len()),
                    ));
                }
                let mut tri = [0usize; 3];
                for (slot, tok) in tri.iter_mut().zip(&idx) {
                    let head = tok.split('/').next().unwrap_or("");
                    let one_based: usize = head
                        .parse()
                        .map_err(|_| obj_err(line, &format!("bad face index {tok:?}")))?;
                    if one_based == 0 {
                        return Err(obj_err(line, "face indices are 1-based"));
                    }
                    *slot = one_based - 1;
                }
                faces.push(tri);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

fn obj_err(line: usize, reason: &str) -> GeometryError {
    GeometryError::Obj {
        line,
        reason: reason.to_string(),
    }
}
