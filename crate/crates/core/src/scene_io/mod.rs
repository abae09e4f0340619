//! File formats and scene assembly: OBJ templates, images, JSON scene
//! descriptions, synthetic sequences and mesh export.

pub mod config;
pub mod image_io;
pub mod obj;
pub mod synth;

pub use config::{load_scene, merge_tracker, LoadedScene, SceneConfig, TemplateSpec, TextureSpec};
pub use image_io::{read_gray, read_image, write_gray, write_image};
pub use obj::{load_template, parse_obj, write_obj};
pub use synth::{grid_points, synth_scene, SynthFamily, SynthOptions, SyntheticScene};

use crate::diffmath::vec3;
use crate::error::{Error, Result};
use crate::eval::PlyData;
use crate::fields::{DeformationField, ReferenceField};
use crate::geometry::Surface;
use crate::track::reconstruct;

/// Triangulated `res × res` lattice over the chart bounds, deformed to
/// frame `t`. Connectivity is the same for every frame.
pub fn export_mesh(reference: &ReferenceField, field: &DeformationField, t: usize, res: usize) -> Result<PlyData> {
    if res < 2 {
        return Err(Error::Invalid(format!("mesh resolution must be at least 2, got {res}")));
    }
    let xis = grid_points(&reference.domain().bounds(), res);
    let positions = reconstruct(reference, field, &xis, t)?;
    let mut faces = Vec::with_capacity(2 * (res - 1) * (res - 1));
    for j in 0..res - 1 {
        for i in 0..res - 1 {
            let a = (j * res + i) as u32;
            let b = a + 1;
            let c = a + res as u32;
            let d = c + 1;
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    let normals = Some(vertex_normals(&positions, &faces));
    Ok(PlyData { positions, normals, faces, ..PlyData::default() })
}

/// Area-weighted vertex normals.
pub fn vertex_normals(positions: &[[f64; 3]], faces: &[[u32; 3]]) -> Vec<[f64; 3]> {
    let mut n = vec![[0.0; 3]; positions.len()];
    for f in faces {
        let [a, b, c] = f.map(|i| positions[i as usize]);
        let w = vec3::cross(vec3::sub(b, a), vec3::sub(c, a));
        for &i in f {
            n[i as usize] = vec3::add(n[i as usize], w);
        }
    }
    n.into_iter().map(|v| if vec3::norm(v) > 0.0 { vec3::normalize(v) } else { v }).collect()
}
