//! Image and mask files: PNG, PPM (P6/P3) and PGM (P5/P2).

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::splat::Image;

fn quantise(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn open(path: &Path) -> Result<DynamicImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    image::load_from_memory(&bytes).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// RGB image in `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Image> {
    let img = open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0.map(|c| c as f64 / 255.0)).collect();
    Ok(Image { width: w as usize, height: h as usize, data })
}

/// Single-channel map in `[0, 1]` (a colour file is converted to luma).
pub fn read_gray(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok((w as usize, h as usize, img.pixels().map(|p| p.0[0] as f64 / 255.0).collect()))
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("png") => Ok(ImageFormat::Png),
        Some("ppm") | Some("pgm") | Some("pnm") => Ok(ImageFormat::Pnm),
        _ => Err(Error::Invalid(format!("{}: image files must end in .png, .ppm or .pgm", path.display()))),
    }
}

/// Writes 8-bit RGB as PNG or binary PPM, chosen by extension.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let fmt = format_for(path)?;
    let buf = RgbImage::from_fn(img.width as u32, img.height as u32, |x, y| {
        image::Rgb(img.get(x as usize, y as usize).map(quantise))
    });
    buf.save_with_format(path, fmt).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// Writes a single-channel map as PNG or binary PGM.
pub fn write_gray(path: &Path, width: usize, height: usize, v: &[f64]) -> Result<()> {
    if v.len() != width * height {
        return Err(Error::Invalid("grey map size does not match its dimensions".into()));
    }
    let fmt = format_for(path)?;
    let buf = GrayImage::from_fn(width as u32, height as u32, |x, y| image::Luma([quantise(v[y as usize * width + x as usize])]));
    buf.save_with_format(path, fmt).map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_formats() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::new(5, 3, [0.0; 3]);
        for (i, p) in img.data.iter_mut().enumerate() {
            *p = [i as f64 / 14.0, 1.0 - i as f64 / 14.0, 0.5];
        }
        let q: Vec<[f64; 3]> = img.data.iter().map(|p| p.map(|v| quantise(v) as f64 / 255.0)).collect();
        for name in ["a.png", "a.ppm"] {
            let p = dir.path().join(name);
            write_image(&p, &img).unwrap();
            let back = read_image(&p).unwrap();
            assert_eq!((back.width, back.height), (5, 3));
            assert_eq!(back.data, q);
        }
        let g: Vec<f64> = (0..15).map(|i| i as f64 / 14.0).collect();
        let p = dir.path().join("m.pgm");
        write_gray(&p, 5, 3, &g).unwrap();
        let (w, h, back) = read_gray(&p).unwrap();
        assert_eq!((w, h), (5, 3));
        assert!(back.iter().zip(&g).all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-12));
        assert!(write_image(&dir.path().join("a.bmp"), &img).is_err());
        assert!(read_image(&dir.path().join("missing.png")).is_err());
    }

    #[test]
    fn ascii_ppm_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ppm");
        std::fs::write(&p, "P3\n2 1\n255\n255 0 0  0 0 255\n").unwrap();
        let img = read_image(&p).unwrap();
        assert_eq!(img.data, vec![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
    }
}
