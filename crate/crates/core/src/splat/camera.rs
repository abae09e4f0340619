//! Pinhole camera with a world-to-camera rigid transform.
//!
//! Camera space looks down `+z`, `x` to the right and `y` down the image.
//! Pixel `(i, j)` has its centre at image coordinates `(i, j)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffmath::vec3;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Rotation rows of the world-to-camera transform.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub near: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Invalid(format!("focal lengths must be positive: {} {}", self.fx, self.fy)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invalid("camera image size must be positive".into()));
        }
        if !(self.near > 0.0) {
            return Err(Error::Invalid(format!("near plane {} must be positive", self.near)));
        }
        let r = self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let d = vec3::dot(r[i], r[j]) - if i == j { 1.0 } else { 0.0 };
                if d.abs() > 1e-9 {
                    return Err(Error::Invalid("camera rotation is not orthonormal".into()));
                }
            }
        }
        if vec3::dot(vec3::cross(r[0], r[1]), r[2]) < 0.0 {
            return Err(Error::Invalid("camera rotation is a reflection".into()));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`, with `up` roughly towards image top.
    pub fn look_at(eye: [f64; 3], target: [f64; 3], up: [f64; 3], fov_y_deg: f64, width: usize, height: usize) -> Result<Self> {
        let f = vec3::sub(target, eye);
        if vec3::norm(f) == 0.0 {
            return Err(Error::Invalid("camera eye equals target".into()));
        }
        let z = vec3::normalize(f);
        let xr = vec3::cross(z, up);
        if vec3::norm(xr) < 1e-12 {
            return Err(Error::Invalid("camera up vector is parallel to the view direction".into()));
        }
        let x = vec3::normalize(xr);
        let y = vec3::cross(z, x);
        let rotation = [x, y, z];
        let translation = [0, 1, 2].map(|i| -vec3::dot(rotation[i], eye));
        let fy = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        let cam = Camera {
            fx: fy,
            fy,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
            rotation,
            translation,
            near: 1e-3,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.rotation;
        [0, 1, 2].map(|i| vec3::dot(r[i], p) + self.translation[i])
    }

    /// Pixel coordinates and depth, or `None` in front of the near plane.
    pub fn project(&self, p: [f64; 3]) -> Option<([f64; 2], f64)> {
        let c = self.to_camera(p);
        if c[2] < self.near {
            return None;
        }
        Some(([self.fx * c[0] / c[2] + self.cx, self.fy * c[1] / c[2] + self.cy], c[2]))
    }

    /// Camera centre in world coordinates.
    pub fn centre(&self) -> [f64; 3] {
        let r = self.rotation;
        let t = self.translation;
        [0, 1, 2].map(|j| -(r[0][j] * t[0] + r[1][j] * t[1] + r[2][j] * t[2]))
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Key-value text: `fx fy cx cy width height near` plus `extrinsic` with
    /// twelve numbers, the row-major 3×4 matrix `[R | t]`.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "fx = {}\nfy = {}\ncx = {}\ncy = {}\nwidth = {}\nheight = {}\nnear = {}\nextrinsic =",
            self.fx, self.fy, self.cx, self.cy, self.width, self.height, self.near
        );
        for i in 0..3 {
            for j in 0..3 {
                s += &format!(" {}", self.rotation[i][j]);
            }
            s += &format!(" {}", self.translation[i]);
        }
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut vals: [Option<f64>; 7] = [None; 7];
        let keys = ["fx", "fy", "cx", "cy", "width", "height", "near"];
        let mut ext: Option<Vec<f64>> = None;
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let ctx = format!("camera line {}", ln + 1);
            let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(&ctx, "expected `key = value`"))?;
            let nums: Vec<f64> = v
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| Error::parse(&ctx, format!("bad number `{s}`"))))
                .collect::<Result<_>>()?;
            let k = k.trim();
            if k == "extrinsic" {
                if nums.len() != 12 {
                    return Err(Error::parse(&ctx, "extrinsic needs 12 numbers"));
                }
                ext = Some(nums);
            } else if let Some(i) = keys.iter().position(|&n| n == k) {
                if nums.len() != 1 {
                    return Err(Error::parse(&ctx, format!("`{k}` takes one value")));
                }
                vals[i] = Some(nums[0]);
            } else {
                return Err(Error::parse(&ctx, format!("unknown key `{k}`")));
            }
        }
        let get = |i: usize| vals[i].ok_or_else(|| Error::parse("camera file", format!("missing `{}`", keys[i])));
        let ext = ext.ok_or_else(|| Error::parse("camera file", "missing `extrinsic`"))?;
        let dim = |v: f64, name: &str| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::parse("camera file", format!("`{name}` must be a positive integer")))
            }
        };
        let mut rotation = [[0.0; 3]; 3];
        let mut translation = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                rotation[i][j] = ext[i * 4 + j];
            }
            translation[i] = ext[i * 4 + 3];
        }
        let cam = Camera {
            fx: get(0)?,
            fy: get(1)?,
            cx: get(2)?,
            cy: get(3)?,
            width: dim(get(4)?, "width")?,
            height: dim(get(5)?, "height")?,
            near: vals[6].unwrap_or(1e-3),
            rotation,
            translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_centres_target() {
        let c = Camera::look_at([0.5, -1.0, 2.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0], 40.0, 64, 48).unwrap();
        let (p, d) = c.project([0.5, 0.5, 0.0]).unwrap();
        assert!((p[0] - c.cx).abs() < 1e-9 && (p[1] - c.cy).abs() < 1e-9);
        assert!((d - (1.5f64 * 1.5 + 4.0).sqrt()).abs() < 1e-12);
        let e = c.centre();
        assert!(vec3::norm(vec3::sub(e, [0.5, -1.0, 2.0])) < 1e-12);
        // world up projects towards the top of the image
        let (q, _) = c.project([0.5, 0.5, 0.1]).unwrap();
        assert!(q[1] < p[1]);
    }

    #[test]
    fn text_roundtrip() {
        let c = Camera::look_at([0.1, 0.2, 3.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0], 30.0, 32, 32).unwrap();
        assert_eq!(Camera::parse(&c.to_text()).unwrap(), c);
        assert!(Camera::parse("fx = 1\n").is_err());
    }

    #[test]
    fn behind_camera_culled() {
        let c = Camera::look_at([0.0, 0.0, -3.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0], 30.0, 32, 32).unwrap();
        assert!(c.project([0.0, 0.0, -4.0]).is_none());
    }
}
