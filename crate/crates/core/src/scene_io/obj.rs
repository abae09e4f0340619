//! Wavefront OBJ subset: `v`, `vt` and `f` records.

use std::collections::HashMap;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::geometry::TemplateMesh;

/// Loads a template; chart coordinates come from the `vt` records.
pub fn load_template(path: &Path) -> Result<TemplateMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, &path.display().to_string())
}

/// Parses OBJ text. Corners with identical position and chart coordinate
/// are merged; polygons are fan-triangulated. `v x y z r g b` colours are
/// kept when every vertex has them.
pub fn parse_obj(text: &str, ctx: &str) -> Result<TemplateMesh> {
    let mut v: Vec<[f64; 3]> = Vec::new();
    let mut col: Vec<Option<[f64; 3]>> = Vec::new();
    let mut vt: Vec<[f64; 2]> = Vec::new();
    let mut faces: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut ignored: HashMap<String, usize> = HashMap::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        let Some(tag) = it.next() else { continue };
        let at = || format!("{ctx} line {}", ln + 1);
        let nums = |it: std::str::SplitWhitespace| -> Result<Vec<f64>> {
            it.map(|s| s.parse::<f64>().map_err(|_| Error::parse(at(), format!("bad number `{s}`")))).collect()
        };
        match tag {
            "v" => {
                let n = nums(it)?;
                if n.len() < 3 {
                    return Err(Error::parse(at(), "vertex needs three coordinates"));
                }
                v.push([n[0], n[1], n[2]]);
                col.push(if n.len() >= 6 { Some([n[3], n[4], n[5]]) } else { None });
            }
            "vt" => {
                let n = nums(it)?;
                if n.len() < 2 {
                    return Err(Error::parse(at(), "texture coordinate needs two values"));
                }
                vt.push([n[0], n[1]]);
            }
            "f" => {
                let mut corners = Vec::new();
                for c in it {
                    let mut parts = c.split('/');
                    let resolve = |s: Option<&str>, n: usize| -> Result<Option<usize>> {
                        match s {
                            None | Some("") => Ok(None),
                            Some(s) => {
                                let i: i64 = s.parse().map_err(|_| Error::parse(at(), format!("bad index `{s}`")))?;
                                let k = if i > 0 { i - 1 } else { n as i64 + i };
                                if k < 0 || k as usize >= n {
                                    return Err(Error::parse(at(), format!("index {i} out of range")));
                                }
                                Ok(Some(k as usize))
                            }
                        }
                    };
                    let vi = resolve(parts.next(), v.len())?.ok_or_else(|| Error::parse(at(), "face corner without vertex"))?;
                    let ti = resolve(parts.next(), vt.len())?
                        .ok_or_else(|| Error::Invalid("template lacks chart coordinates".into()))?;
                    corners.push((vi, ti));
                }
                if corners.len() < 3 {
                    return Err(Error::parse(at(), "face needs at least three corners"));
                }
                faces.push(corners);
            }
            other => *ignored.entry(other.to_string()).or_default() += 1,
        }
    }
    for (k, n) in &ignored {
        warn!("{ctx}: ignored {n} `{k}` records");
    }
    if vt.is_empty() {
        return Err(Error::Invalid("template lacks chart coordinates".into()));
    }
    if faces.is_empty() {
        return Err(Error::Invalid("template has no faces".into()));
    }
    // one output vertex per distinct (position, chart coordinate) pair
    let mut index: HashMap<([u64; 3], [u64; 2]), u32> = HashMap::new();
    let mut positions = Vec::new();
    let mut uv = Vec::new();
    let mut colors = Vec::new();
    let mut corners_seen = std::collections::HashSet::new();
    let mut tris = Vec::new();
    for f in &faces {
        let ids: Vec<u32> = f
            .iter()
            .map(|&(vi, ti)| {
                corners_seen.insert((vi, ti));
                let key = (v[vi].map(f64::to_bits), vt[ti].map(f64::to_bits));
                *index.entry(key).or_insert_with(|| {
                    positions.push(v[vi]);
                    uv.push(vt[ti]);
                    colors.push(col[vi]);
                    (positions.len() - 1) as u32
                })
            })
            .collect();
        for k in 1..ids.len() - 1 {
            tris.push([ids[0], ids[k], ids[k + 1]]);
        }
    }
    let referenced: std::collections::HashSet<usize> = corners_seen.iter().map(|c| c.0).collect();
    let merged_vertices = referenced.len().saturating_sub(positions.len());
    let mut mesh = TemplateMesh::new(positions, uv, tris)?;
    mesh.merged_vertices = merged_vertices;
    if merged_vertices > 0 {
        warn!("{ctx}: merged {merged_vertices} duplicate vertices");
    }
    if colors.iter().all(|c| c.is_some()) {
        mesh.colors = Some(colors.into_iter().map(|c| c.unwrap()).collect());
    }
    Ok(mesh)
}

/// Writes a template with chart coordinates as OBJ.
pub fn write_obj(path: &Path, mesh: &TemplateMesh) -> Result<()> {
    let mut s = String::new();
    for (i, p) in mesh.positions.iter().enumerate() {
        match &mesh.colors {
            Some(c) => s += &format!("v {:?} {:?} {:?} {:?} {:?} {:?}\n", p[0], p[1], p[2], c[i][0], c[i][1], c[i][2]),
            None => s += &format!("v {:?} {:?} {:?}\n", p[0], p[1], p[2]),
        }
    }
    for t in &mesh.uv {
        s += &format!("vt {:?} {:?}\n", t[0], t[1]);
    }
    for f in &mesh.tris {
        s += &format!("f {0}/{0} {1}/{1} {2}/{2}\n", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD: &str = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3\nf 1/1 3/3 4/4\n";

    #[test]
    fn minimal_quad() {
        let m = parse_obj(QUAD, "quad").unwrap();
        assert_eq!(m.positions.len(), 4);
        assert_eq!(m.tris.len(), 2);
        assert_eq!(m.chart_bounds, crate::geometry::Rect::UNIT);
        assert_eq!(m.merged_vertices, 0);
    }

    #[test]
    fn missing_chart_coordinates() {
        let e = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", "x").unwrap_err();
        assert!(e.to_string().contains("template lacks chart coordinates"), "{e}");
    }

    #[test]
    fn duplicates_merged() {
        let dup = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3\nf 4/1 5/3 6/4\n";
        let m = parse_obj(dup, "dup").unwrap();
        assert_eq!(m.positions.len(), 4);
        assert_eq!(m.merged_vertices, 2);
        assert_eq!(m.tris, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn quads_fan_triangulated_and_roundtrip() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3 4/4\n", "q").unwrap();
        assert_eq!(m.tris.len(), 2);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.obj");
        write_obj(&p, &m).unwrap();
        assert_eq!(load_template(&p).unwrap(), m);
    }
}
