//! L1 photometric and silhouette losses with per-frame gradient routing.

use crate::error::{Error, Result};

use super::render::{render_backward, render_with_cache, CloudGrad, RenderOptions};
use super::{Camera, GaussianCloud, Image, SurfaceBinding};

/// Mean absolute error over pixels and channels, with `∂L/∂render`.
pub fn l1_image(render: &Image, target: &Image) -> Result<(f64, Vec<[f64; 3]>)> {
    if render.width != target.width || render.height != target.height {
        return Err(Error::Invalid(format!(
            "image size {}x{} does not match render size {}x{}",
            target.width, target.height, render.width, render.height
        )));
    }
    let n = 3.0 * render.data.len() as f64;
    let mut sum = 0.0;
    let grad = render
        .data
        .iter()
        .zip(&target.data)
        .map(|(r, t)| {
            [0, 1, 2].map(|k| {
                let d = r[k] - t[k];
                sum += d.abs();
                sign(d) / n
            })
        })
        .collect();
    Ok((sum / n, grad))
}

/// Mean absolute error of an alpha map against a mask.
pub fn l1_mask(alpha: &[f64], mask: &[f64]) -> Result<(f64, Vec<f64>)> {
    if alpha.len() != mask.len() {
        return Err(Error::Invalid(format!("mask has {} pixels, render has {}", mask.len(), alpha.len())));
    }
    let n = alpha.len() as f64;
    let mut sum = 0.0;
    let grad = alpha
        .iter()
        .zip(mask)
        .map(|(a, m)| {
            let d = a - m;
            sum += d.abs();
            sign(d) / n
        })
        .collect();
    Ok((sum / n, grad))
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug)]
pub struct FrameLoss {
    pub photometric: f64,
    pub mask: Option<f64>,
    pub grad: CloudGrad,
}

/// Loss of one frame. The silhouette term uses the alpha map, which is the
/// render of the same Gaussians recoloured white over black.
pub fn frame_loss(
    cloud: &GaussianCloud,
    cam: &Camera,
    target: &Image,
    mask: Option<&[f64]>,
    options: RenderOptions,
) -> Result<FrameLoss> {
    let (out, cache) = render_with_cache(cloud, cam, options)?;
    let (photometric, d_image) = l1_image(&out.image, target)?;
    let (mask_loss, d_alpha) = match mask {
        Some(m) => {
            let (l, g) = l1_mask(&out.alpha, m)?;
            (Some(l), Some(g))
        }
        None => (None, None),
    };
    let grad = render_backward(cloud, cam, &cache, &d_image, d_alpha.as_deref())?;
    Ok(FrameLoss { photometric, mask: mask_loss, grad })
}

#[derive(Clone, Debug)]
pub struct DataLoss {
    pub loss: f64,
    pub photometric: Vec<f64>,
    pub mask: Vec<Option<f64>>,
    /// `∂L_d/∂x_i` per frame; zero for frames that do not reach the field.
    pub position_grad: Vec<Vec<[f64; 3]>>,
    /// `∂L_d/∂params` of the binding.
    pub shared_grad: Vec<f64>,
}

/// `L_d` over all frames. Frame 1 trains only the shared parameters; later
/// frames add their photometric and silhouette terms and train only the
/// positions. With `shared_from_all_frames` every frame also trains the
/// shared parameters.
pub fn data_loss(
    binding: &SurfaceBinding,
    positions: &[Vec<[f64; 3]>],
    images: &[Image],
    masks: Option<&[Vec<f64>]>,
    cam: &Camera,
    options: RenderOptions,
    shared_from_all_frames: bool,
) -> Result<DataLoss> {
    if positions.len() != images.len() {
        return Err(Error::Invalid(format!("{} frames of positions for {} images", positions.len(), images.len())));
    }
    if let Some(m) = masks {
        if m.len() != images.len() {
            return Err(Error::Invalid(format!("{} masks for {} images", m.len(), images.len())));
        }
    }
    let n = binding.len();
    let mut out = DataLoss {
        loss: 0.0,
        photometric: Vec::with_capacity(images.len()),
        mask: Vec::with_capacity(images.len()),
        position_grad: Vec::with_capacity(images.len()),
        shared_grad: vec![0.0; binding.params.len()],
    };
    for (t, (pos, img)) in positions.iter().zip(images).enumerate() {
        if pos.len() != n {
            return Err(Error::Invalid(format!("frame {} has {} positions for {n} Gaussians", t + 1, pos.len())));
        }
        let cloud = binding.cloud(pos.clone());
        let mask = if t == 0 { None } else { masks.map(|m| m[t].as_slice()) };
        let f = frame_loss(&cloud, cam, img, mask, options)?;
        out.loss += f.photometric + f.mask.unwrap_or(0.0);
        out.photometric.push(f.photometric);
        out.mask.push(f.mask);
        if t == 0 || shared_from_all_frames {
            let g = binding.param_grad(&f.grad);
            for (a, b) in out.shared_grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        out.position_grad.push(if t == 0 { vec![[0.0; 3]; n] } else { f.grad.positions });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ReferenceField;
    use crate::geometry::{AnalyticChart, Rect};
    use crate::splat::{render, Texture};

    #[test]
    fn constant_offset_gives_mean_error() {
        let a = Image::new(8, 6, [0.2, 0.4, 0.6]);
        let b = Image::new(8, 6, [0.25, 0.45, 0.65]);
        let (l, _) = l1_image(&a, &b).unwrap();
        assert!((l - 0.05).abs() < 1e-12);
        assert_eq!(l1_image(&a, &a).unwrap().0, 0.0);
        assert!(l1_image(&a, &Image::new(6, 8, [0.0; 3])).is_err());
        assert!(l1_mask(&[0.0; 4], &[0.0; 3]).is_err());
    }

    fn setup() -> (SurfaceBinding, Camera, Vec<Vec<[f64; 3]>>) {
        let r = ReferenceField::Analytic(AnalyticChart::flat(Rect::UNIT));
        let anchors: Vec<[f64; 2]> = (0..9).map(|k| [0.2 + 0.3 * (k % 3) as f64, 0.2 + 0.3 * (k / 3) as f64]).collect();
        let b = SurfaceBinding::from_anchors(&r, &anchors, &Texture::Constant([0.8, 0.3, 0.2]), 1e-5).unwrap();
        let cam = Camera::look_at([0.5, 0.5, 2.5], [0.5, 0.5, 0.0], [0.0, 1.0, 0.0], 30.0, 24, 24).unwrap();
        let p0 = b.base_positions.clone();
        let p1: Vec<[f64; 3]> = p0.iter().map(|p| [p[0] + 0.02, p[1], p[2]]).collect();
        (b, cam, vec![p0, p1])
    }

    #[test]
    fn identical_targets_zero_and_routing() {
        let (b, cam, pos) = setup();
        let opts = RenderOptions::new([0.0; 3]);
        let imgs: Vec<Image> = pos.iter().map(|p| render(&b.cloud(p.clone()), &cam, [0.0; 3]).unwrap().image).collect();
        let l = data_loss(&b, &pos, &imgs, None, &cam, opts, false).unwrap();
        assert_eq!(l.loss, 0.0);
        // swap targets so both frames carry error
        let swapped = vec![imgs[1].clone(), imgs[0].clone()];
        let l = data_loss(&b, &pos, &swapped, None, &cam, opts, false).unwrap();
        assert!(l.loss > 0.0);
        assert!(l.position_grad[0].iter().all(|g| *g == [0.0; 3]));
        assert!(l.position_grad[1].iter().any(|g| g[0] != 0.0));
        assert!(l.shared_grad.iter().any(|g| *g != 0.0));
        // shared gradient comes from frame 1 only
        let only_first = data_loss(&b, &pos[..1], &swapped[..1], None, &cam, opts, false).unwrap();
        assert_eq!(only_first.shared_grad, l.shared_grad);
    }

    #[test]
    fn mask_term_on_later_frames() {
        let (b, cam, pos) = setup();
        let opts = RenderOptions::new([0.0; 3]);
        let imgs: Vec<Image> = pos.iter().map(|p| render(&b.cloud(p.clone()), &cam, [0.0; 3]).unwrap().image).collect();
        let masks = vec![vec![1.0; 24 * 24]; 2];
        let l = data_loss(&b, &pos, &imgs, Some(&masks), &cam, opts, false).unwrap();
        assert!(l.mask[0].is_none());
        assert!(l.mask[1].unwrap() > 0.0);
        assert!(data_loss(&b, &pos, &imgs, Some(&masks[..1]), &cam, opts, false).is_err());
    }
}
