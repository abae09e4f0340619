//! PLY point clouds and triangle meshes, ASCII and binary little-endian.
//!
//! Written files store `double` coordinates so binary round trips are exact.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlyData {
    pub positions: Vec<[f64; 3]>,
    pub normals: Option<Vec<[f64; 3]>>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub faces: Vec<[u32; 3]>,
}

pub fn write_ply(path: &Path, data: &PlyData, format: PlyFormat) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_ply_to(&mut w, data, format).map_err(|e| Error::io(path, e))
}

pub fn write_ply_to<W: Write>(w: &mut W, data: &PlyData, format: PlyFormat) -> std::io::Result<()> {
    let n = data.positions.len();
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply\nformat {fmt} 1.0\nelement vertex {n}")?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    if data.normals.is_some() {
        writeln!(w, "property double nx\nproperty double ny\nproperty double nz")?;
    }
    if data.colors.is_some() {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
    }
    if !data.faces.is_empty() {
        writeln!(w, "element face {}\nproperty list uchar int vertex_indices", data.faces.len())?;
    }
    writeln!(w, "end_header")?;
    for i in 0..n {
        let p = data.positions[i];
        let nrm = data.normals.as_ref().map(|v| v[i]);
        let col = data.colors.as_ref().map(|v| v[i]);
        match format {
            PlyFormat::Ascii => {
                // `{:?}` prints the shortest representation that round-trips
                write!(w, "{:?} {:?} {:?}", p[0], p[1], p[2])?;
                if let Some(m) = nrm {
                    write!(w, " {:?} {:?} {:?}", m[0], m[1], m[2])?;
                }
                if let Some(c) = col {
                    write!(w, " {} {} {}", c[0], c[1], c[2])?;
                }
                writeln!(w)?;
            }
            PlyFormat::BinaryLittleEndian => {
                for v in p.iter().chain(nrm.iter().flatten()) {
                    w.write_all(&v.to_le_bytes())?;
                }
                if let Some(c) = col {
                    w.write_all(&c)?;
                }
            }
        }
    }
    for f in &data.faces {
        match format {
            PlyFormat::Ascii => writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?,
            PlyFormat::BinaryLittleEndian => {
                w.write_all(&[3u8])?;
                for i in f {
                    w.write_all(&(*i as i32).to_le_bytes())?;
                }
            }
        }
    }
    w.flush()
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Ty {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Ty {
    fn parse(s: &str) -> Option<Ty> {
        Some(match s {
            "char" | "int8" => Ty::I8,
            "uchar" | "uint8" => Ty::U8,
            "short" | "int16" => Ty::I16,
            "ushort" | "uint16" => Ty::U16,
            "int" | "int32" => Ty::I32,
            "uint" | "uint32" => Ty::U32,
            "float" | "float32" => Ty::F32,
            "double" | "float64" => Ty::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Ty::I8 | Ty::U8 => 1,
            Ty::I16 | Ty::U16 => 2,
            Ty::I32 | Ty::U32 | Ty::F32 => 4,
            Ty::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Ty::I8 => b[0] as i8 as f64,
            Ty::U8 => b[0] as f64,
            Ty::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Ty::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Ty::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Ty::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Ty::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Ty::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Prop {
    Scalar(String, Ty),
    List(String, Ty, Ty),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Prop>,
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ply_from(BufReader::new(f), &path.display().to_string())
}

pub fn read_ply_from<R: BufRead>(mut r: R, ctx: &str) -> Result<PlyData> {
    let perr = |m: String| Error::parse(ctx, m);
    let mut line = String::new();
    let next_line = |r: &mut R, line: &mut String| -> Result<()> {
        line.clear();
        let n = r.read_line(line).map_err(|e| Error::parse(ctx, e.to_string()))?;
        if n == 0 {
            return Err(Error::parse(ctx, "unexpected end of header"));
        }
        Ok(())
    };
    next_line(&mut r, &mut line)?;
    if line.trim() != "ply" {
        return Err(perr("missing `ply` magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next_line(&mut r, &mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", f, _] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(perr(format!("unsupported format `{other}`"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| perr(format!("bad element count `{count}`")))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let e = elements.last_mut().ok_or_else(|| perr("property before element".into()))?;
                let (ct, it) = (Ty::parse(ct), Ty::parse(it));
                match (ct, it) {
                    (Some(c), Some(i)) => e.props.push(Prop::List(name.to_string(), c, i)),
                    _ => return Err(perr(format!("bad list property `{}`", line.trim()))),
                }
            }
            ["property", ty, name] => {
                let e = elements.last_mut().ok_or_else(|| perr("property before element".into()))?;
                let t = Ty::parse(ty).ok_or_else(|| perr(format!("unknown type `{ty}`")))?;
                e.props.push(Prop::Scalar(name.to_string(), t));
            }
            _ => return Err(perr(format!("unrecognised header line `{}`", line.trim()))),
        }
    }
    let format = format.ok_or_else(|| perr("missing format line".into()))?;
    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(|e| perr(e.to_string()))?;
    let mut src = Source { format, body: &body, pos: 0, ctx };
    let mut out = PlyData::default();
    for e in &elements {
        let names: Vec<&str> = e
            .props
            .iter()
            .map(|p| match p {
                Prop::Scalar(n, _) | Prop::List(n, _, _) => n.as_str(),
            })
            .collect();
        let find = |n: &str| names.iter().position(|&m| m == n);
        let xyz = [find("x"), find("y"), find("z")];
        let nxyz = [find("nx"), find("ny"), find("nz")];
        let rgb = [find("red"), find("green"), find("blue")];
        let is_vertex = e.name == "vertex";
        if is_vertex {
            if xyz.iter().any(|i| i.is_none()) {
                return Err(perr("vertex element lacks x, y or z".into()));
            }
            if nxyz.iter().all(|i| i.is_some()) {
                out.normals = Some(Vec::with_capacity(e.count));
            }
            if rgb.iter().all(|i| i.is_some()) {
                out.colors = Some(Vec::with_capacity(e.count));
            }
        }
        for _ in 0..e.count {
            let mut scalars = vec![0.0; e.props.len()];
            let mut list: Option<Vec<f64>> = None;
            for (k, p) in e.props.iter().enumerate() {
                match p {
                    Prop::Scalar(_, t) => scalars[k] = src.scalar(*t)?,
                    Prop::List(name, ct, it) => {
                        let n = src.scalar(*ct)?;
                        if !(n >= 0.0 && n.fract() == 0.0) {
                            return Err(perr(format!("bad list length {n}")));
                        }
                        let vals = (0..n as usize).map(|_| src.scalar(*it)).collect::<Result<Vec<_>>>()?;
                        if name == "vertex_indices" || name == "vertex_index" {
                            list = Some(vals);
                        }
                    }
                }
            }
            if is_vertex {
                out.positions.push(xyz.map(|i| scalars[i.unwrap()]));
                if let Some(n) = out.normals.as_mut() {
                    n.push(nxyz.map(|i| scalars[i.unwrap()]));
                }
                if let Some(c) = out.colors.as_mut() {
                    c.push(rgb.map(|i| scalars[i.unwrap()].clamp(0.0, 255.0) as u8));
                }
            } else if e.name == "face" {
                let idx = list.ok_or_else(|| perr("face without vertex_indices".into()))?;
                if idx.len() < 3 {
                    return Err(perr(format!("face with {} vertices", idx.len())));
                }
                for k in 1..idx.len() - 1 {
                    out.faces.push([idx[0] as u32, idx[k] as u32, idx[k + 1] as u32]);
                }
            }
        }
    }
    let n = out.positions.len();
    if out.faces.iter().flatten().any(|&i| i as usize >= n) {
        return Err(perr("face references a missing vertex".into()));
    }
    Ok(out)
}

struct Source<'a> {
    format: PlyFormat,
    body: &'a [u8],
    pos: usize,
    ctx: &'a str,
}

impl Source<'_> {
    fn scalar(&mut self, t: Ty) -> Result<f64> {
        match self.format {
            PlyFormat::BinaryLittleEndian => {
                let s = t.size();
                if self.pos + s > self.body.len() {
                    return Err(Error::parse(self.ctx, "truncated binary body"));
                }
                let v = t.decode(&self.body[self.pos..self.pos + s]);
                self.pos += s;
                Ok(v)
            }
            PlyFormat::Ascii => {
                while self.pos < self.body.len() && self.body[self.pos].is_ascii_whitespace() {
                    self.pos += 1;
                }
                let start = self.pos;
                while self.pos < self.body.len() && !self.body[self.pos].is_ascii_whitespace() {
                    self.pos += 1;
                }
                if start == self.pos {
                    return Err(Error::parse(self.ctx, "truncated ascii body"));
                }
                let tok = std::str::from_utf8(&self.body[start..self.pos]).unwrap_or("");
                tok.parse::<f64>().map_err(|_| Error::parse(self.ctx, format!("bad number `{tok}`")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PlyData {
        PlyData {
            positions: vec![[0.1, 0.2, 0.3], [1.0 / 3.0, -2.5e-17, 7.0], [1.0, 1.0, 0.0]],
            normals: Some(vec![[0.0, 0.0, 1.0]; 3]),
            colors: None,
            faces: vec![[0, 1, 2]],
        }
    }

    #[test]
    fn roundtrip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        for f in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let p = dir.path().join("a.ply");
            write_ply(&p, &sample(), f).unwrap();
            assert_eq!(read_ply(&p).unwrap(), sample());
        }
    }

    #[test]
    fn foreign_header() {
        let text = "ply\nformat ascii 1.0\ncomment x\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nproperty uchar flags\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n0 0 0 1\n1 0 0 1\n1 1 0 1\n0 1 0 1\n4 0 1 2 3\n";
        let d = read_ply_from(text.as_bytes(), "test").unwrap();
        assert_eq!(d.positions.len(), 4);
        assert_eq!(d.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert!(read_ply_from("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n0\n".as_bytes(), "t").is_err());
    }
}
