//! Binary weight container.
//!
//! Layout (little endian): magic `SNFW`, `u32` version, `u32` header length,
//! UTF-8 JSON header echoing the field configuration, `u64` parameter count,
//! then the parameters as `f64`.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AnalyticChart, AnalyticKind, ChartDomain, MeshChart, Rect};

use super::ndf::{DeformationField, TemporalMode};
use super::nrf::{NeuralReference, ReferenceField};
use super::siren::{Siren, SirenConfig};

pub const MAGIC: &[u8; 4] = b"SNFW";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "snake_case")]
pub enum DomainDesc {
    Rect { bounds: Rect },
    Mesh { uv: Vec<[f64; 2]>, tris: Vec<[u32; 3]> },
}

impl DomainDesc {
    pub fn of(d: &ChartDomain) -> Self {
        match d {
            ChartDomain::Rect(r) => DomainDesc::Rect { bounds: *r },
            ChartDomain::Mesh(m) => DomainDesc::Mesh { uv: m.uv.clone(), tris: m.tris.clone() },
        }
    }

    pub fn build(&self) -> Result<ChartDomain> {
        Ok(match self {
            DomainDesc::Rect { bounds } => ChartDomain::Rect(*bounds),
            DomainDesc::Mesh { uv, tris } => {
                ChartDomain::Mesh(Arc::new(MeshChart::new(uv.clone(), tris.clone())?))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case")]
pub enum FieldHeader {
    AnalyticReference { chart: AnalyticKind, domain: DomainDesc },
    NeuralReference { config: SirenConfig, domain: DomainDesc },
    Deformation { config: SirenConfig, frames: usize, mode: TemporalMode, bounds: Rect },
}

pub fn write_container<W: Write>(mut w: W, header: &FieldHeader, params: &[f64]) -> std::io::Result<()> {
    let json = serde_json::to_vec(header).map_err(std::io::Error::other)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_container<R: Read>(mut r: R) -> Result<(FieldHeader, Vec<f64>)> {
    let io = |e: std::io::Error| Error::parse("weight container", e.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::parse("weight container", "bad magic"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(io)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::parse("weight container", format!("unsupported version {version}")));
    }
    r.read_exact(&mut b4).map_err(io)?;
    let mut json = vec![0u8; u32::from_le_bytes(b4) as usize];
    r.read_exact(&mut json).map_err(io)?;
    let header: FieldHeader = serde_json::from_slice(&json)?;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(io)?;
    let n = u64::from_le_bytes(b8) as usize;
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b8).map_err(io)?;
        params.push(f64::from_le_bytes(b8));
    }
    Ok((header, params))
}

fn save(path: &Path, header: &FieldHeader, params: &[f64]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_container(std::io::BufWriter::new(f), header, params).map_err(|e| Error::io(path, e))
}

fn load(path: &Path) -> Result<(FieldHeader, Vec<f64>)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_container(std::io::BufReader::new(f))
}

pub fn reference_header(field: &ReferenceField) -> (FieldHeader, Vec<f64>) {
    match field {
        ReferenceField::Analytic(c) => (
            FieldHeader::AnalyticReference { chart: c.kind.clone(), domain: DomainDesc::of(&c.domain) },
            Vec::new(),
        ),
        ReferenceField::Neural(n) => (
            FieldHeader::NeuralReference { config: n.net.cfg.clone(), domain: DomainDesc::of(&n.domain) },
            n.net.params.clone(),
        ),
    }
}

pub fn save_reference(path: &Path, field: &ReferenceField) -> Result<()> {
    let (h, p) = reference_header(field);
    save(path, &h, &p)
}

pub fn reference_from_parts(header: FieldHeader, params: Vec<f64>) -> Result<ReferenceField> {
    match header {
        FieldHeader::AnalyticReference { chart, domain } => {
            Ok(ReferenceField::Analytic(AnalyticChart { kind: chart, domain: domain.build()? }))
        }
        FieldHeader::NeuralReference { config, domain } => Ok(ReferenceField::Neural(NeuralReference {
            net: Siren::with_params(config, params)?,
            domain: domain.build()?,
        })),
        FieldHeader::Deformation { .. } => {
            Err(Error::parse("weight container", "expected a reference field, found a deformation field"))
        }
    }
}

pub fn load_reference(path: &Path) -> Result<ReferenceField> {
    let (h, p) = load(path)?;
    reference_from_parts(h, p)
}

pub fn save_deformation(path: &Path, field: &DeformationField) -> Result<()> {
    let h = FieldHeader::Deformation {
        config: field.net.cfg.clone(),
        frames: field.frames,
        mode: field.mode,
        bounds: field.bounds,
    };
    save(path, &h, &field.net.params)
}

pub fn load_deformation(path: &Path) -> Result<DeformationField> {
    match load(path)? {
        (FieldHeader::Deformation { config, frames, mode, bounds }, params) => {
            let mut f = DeformationField::new(config.clone(), frames, mode, bounds)?;
            f.net = Siren::with_params(config, params)?;
            Ok(f)
        }
        _ => Err(Error::parse("weight container", "expected a deformation field")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deformation_roundtrip() {
        let cfg = SirenConfig { hidden_layers: 1, width: 4, ..SirenConfig::ndf(2) };
        let f = DeformationField::new(cfg, 5, TemporalMode::Momentum { lambda: 0.4 }, Rect::UNIT).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ndf.bin");
        save_deformation(&p, &f).unwrap();
        assert_eq!(load_deformation(&p).unwrap(), f);
        assert!(load_reference(&p).is_err());
    }

    #[test]
    fn analytic_reference_roundtrip() {
        let f = ReferenceField::Analytic(AnalyticChart::cylinder(1.0, Rect::UNIT).unwrap());
        let mut buf = Vec::new();
        let (h, p) = reference_header(&f);
        write_container(&mut buf, &h, &p).unwrap();
        let (h2, p2) = read_container(&buf[..]).unwrap();
        assert_eq!(h2, h);
        assert!(p2.is_empty());
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(read_container(&b"XXXX\x01\0\0\0"[..]).is_err());
    }
}
