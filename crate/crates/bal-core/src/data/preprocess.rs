//! Image decoding, bilinear resize, and train-time augmentation.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ChannelStats;
use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tensor::{load_tensor, Tensor};

/// Geometry and augmentation settings for the input pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub target_size: usize,
    pub center_crop_fraction: f64,
    pub horizontal_flip_prob: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_size: 32,
            center_crop_fraction: 0.875,
            horizontal_flip_prob: 0.5,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.horizontal_flip_prob) {
            return Err(Error::config(format!(
                "flip probability must be in [0,1], got {}",
                self.horizontal_flip_prob
            )));
        }
        if !(self.center_crop_fraction > 0.0 && self.center_crop_fraction <= 1.0) {
            return Err(Error::config(format!(
                "crop fraction must be in (0,1], got {}",
                self.center_crop_fraction
            )));
        }
        if self.target_size == 0 {
            return Err(Error::config("target size must be positive"));
        }
        Ok(())
    }
}

/// Whether augmentation applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Bilinear resample of a [3,H,W] tensor using half-pixel-center sampling.
/// Same-size calls return the input unchanged so identity paths stay bit-exact.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let [c, h, w] = *img.shape() else {
        return Err(Error::data(format!("resize wants [C,H,W], got {:?}", img.shape())));
    };
    if h == out_h && w == out_w {
        return Ok(img.clone());
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::data("resize target must be positive"));
    }
    let mut out = Tensor::zeros(&[c, out_h, out_w]);
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    for ch in 0..c {
        let src = &img.data()[ch * h * w..(ch + 1) * h * w];
        for oy in 0..out_h {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let wy = fy - y0 as f64;
            for ox in 0..out_w {
                let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let wx = fx - x0 as f64;
                let v = (1.0 - wy) * ((1.0 - wx) * src[y0 * w + x0] + wx * src[y0 * w + x1])
                    + wy * ((1.0 - wx) * src[y1 * w + x0] + wx * src[y1 * w + x1]);
                out.data_mut()[(ch * out_h + oy) * out_w + ox] = v;
            }
        }
    }
    Ok(out)
}

/// Central crop to round(side * fraction); fraction 1 is the identity.
pub fn center_crop(img: &Tensor, fraction: f64) -> Result<Tensor> {
    let [c, h, w] = *img.shape() else {
        return Err(Error::data(format!("crop wants [C,H,W], got {:?}", img.shape())));
    };
    let ch_ = ((h as f64 * fraction).round() as usize).clamp(1, h);
    let cw = ((w as f64 * fraction).round() as usize).clamp(1, w);
    if ch_ == h && cw == w {
        return Ok(img.clone());
    }
    let oy = (h - ch_) / 2;
    let ox = (w - cw) / 2;
    let mut out = Tensor::zeros(&[c, ch_, cw]);
    for cc in 0..c {
        for y in 0..ch_ {
            let src = &img.data()[(cc * h + oy + y) * w + ox..][..cw];
            out.data_mut()[(cc * ch_ + y) * cw..][..cw].copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Mirror along the width axis.
pub fn hflip(img: &Tensor) -> Result<Tensor> {
    let [c, h, w] = *img.shape() else {
        return Err(Error::data(format!("flip wants [C,H,W], got {:?}", img.shape())));
    };
    let mut out = img.clone();
    for cc in 0..c {
        for y in 0..h {
            let row = &mut out.data_mut()[(cc * h + y) * w..][..w];
            row.reverse();
        }
    }
    Ok(out)
}

/// Full pipeline over a [3,H,W] tensor already scaled to [0,1]: resize to the
/// target size; in train mode, center-crop then resize back and flip with the
/// configured probability; finally standardize with the frozen train-split
/// stats. The rng is only consulted in train mode.
pub fn preprocess(
    base: &Tensor,
    cfg: &PreprocessConfig,
    stats: &ChannelStats,
    mode: Mode,
    rng: &mut Prng,
) -> Result<Tensor> {
    cfg.validate()?;
    let s = cfg.target_size;
    let mut img = resize_bilinear(base, s, s)?;
    if mode == Mode::Train {
        if cfg.center_crop_fraction < 1.0 {
            let cropped = center_crop(&img, cfg.center_crop_fraction)?;
            img = resize_bilinear(&cropped, s, s)?;
        }
        if cfg.horizontal_flip_prob > 0.0 && rng.random::<f64>() < cfg.horizontal_flip_prob {
            img = hflip(&img)?;
        }
    }
    stats.standardize(&mut img);
    Ok(img)
}

/// Decoded 8-bit RGB raster, row-major, channels interleaved.
pub struct Raster {
    pub height: usize,
    pub width: usize,
    pub rgb: Vec<u8>,
}

/// Decode a raster image file (png/jpeg/bmp) to RGB bytes.
pub fn decode_raster(path: &Path) -> Result<Raster> {
    let img = image::open(path)
        .map_err(|e| Error::data(format!("cannot decode image {}: {e}", path.display())))?
        .to_rgb8();
    let (width, height) = img.dimensions();
    Ok(Raster {
        height: height as usize,
        width: width as usize,
        rgb: img.into_raw(),
    })
}

/// HWC bytes to a [3,H,W] tensor scaled to [0,1].
pub fn raster_to_unit_tensor(r: &Raster) -> Result<Tensor> {
    if r.rgb.len() != r.height * r.width * 3 {
        return Err(Error::data(format!(
            "raster buffer of {} bytes does not match {}x{}x3",
            r.rgb.len(),
            r.height,
            r.width
        )));
    }
    let mut t = Tensor::zeros(&[3, r.height, r.width]);
    let plane = r.height * r.width;
    for y in 0..r.height {
        for x in 0..r.width {
            let src = (y * r.width + x) * 3;
            for ch in 0..3 {
                t.data_mut()[ch * plane + y * r.width + x] = f64::from(r.rgb[src + ch]) / 255.0;
            }
        }
    }
    Ok(t)
}

/// Load an image file as a [3,H,W] tensor in [0,1]. Files with the `.bt`
/// extension are read as raw tensors (no codec involved); anything else goes
/// through the raster decoder.
pub fn load_image_tensor(path: &Path) -> Result<Tensor> {
    let is_raw = path.extension().and_then(|e| e.to_str()) == Some("bt");
    let t = if is_raw {
        load_tensor(path).map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?
    } else {
        raster_to_unit_tensor(&decode_raster(path)?)?
    };
    if t.shape().len() != 3 || t.shape()[0] != 3 {
        return Err(Error::data(format!(
            "image {} decodes to shape {:?}, expected [3,H,W]",
            path.display(),
            t.shape()
        )));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive;

    fn gradient_image(h: usize, w: usize) -> Tensor {
        let mut t = Tensor::zeros(&[3, h, w]);
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    t.data_mut()[(c * h + y) * w + x] = (x + y + c) as f64 / (h + w + 3) as f64;
                }
            }
        }
        t
    }

    #[test]
    fn hflip_is_an_involution() {
        let img = gradient_image(5, 7);
        let twice = hflip(&hflip(&img).unwrap()).unwrap();
        assert_eq!(img, twice);
    }

    #[test]
    fn resize_identity_is_exact() {
        let img = gradient_image(8, 8);
        let same = resize_bilinear(&img, 8, 8).unwrap();
        assert_eq!(img, same);
    }

    #[test]
    fn resize_preserves_constant_images() {
        let img = Tensor::from_vec(&[3, 6, 6], vec![0.42; 108]).unwrap();
        let out = resize_bilinear(&img, 4, 4).unwrap();
        for &v in out.data() {
            assert!((v - 0.42).abs() < 1e-12);
        }
    }

    #[test]
    fn resize_downsamples_within_range() {
        let img = gradient_image(16, 16);
        let out = resize_bilinear(&img, 8, 8).unwrap();
        assert_eq!(out.shape(), &[3, 8, 8]);
        let (lo, hi) = img.data().iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(out.data().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn crop_fraction_one_is_identity() {
        let img = gradient_image(9, 9);
        assert_eq!(center_crop(&img, 1.0).unwrap(), img);
    }

    #[test]
    fn train_equals_eval_without_augmentation() {
        let img = gradient_image(10, 10);
        let cfg = PreprocessConfig {
            target_size: 8,
            center_crop_fraction: 1.0,
            horizontal_flip_prob: 0.0,
        };
        let stats = ChannelStats {
            mean: [0.2; 3],
            std: [0.5; 3],
        };
        let mut rng = derive(1, &[1]);
        let train = preprocess(&img, &cfg, &stats, Mode::Train, &mut rng).unwrap();
        let eval = preprocess(&img, &cfg, &stats, Mode::Eval, &mut rng).unwrap();
        assert_eq!(train, eval);
    }

    #[test]
    fn train_mode_flip_is_seeded() {
        let img = gradient_image(8, 8);
        let cfg = PreprocessConfig {
            target_size: 8,
            center_crop_fraction: 1.0,
            horizontal_flip_prob: 0.5,
        };
        let stats = ChannelStats {
            mean: [0.0; 3],
            std: [1.0; 3],
        };
        let a = preprocess(&img, &cfg, &stats, Mode::Train, &mut derive(7, &[1])).unwrap();
        let b = preprocess(&img, &cfg, &stats, Mode::Train, &mut derive(7, &[1])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_image_standardizes_to_zero_mean() {
        let img = Tensor::from_vec(&[3, 4, 4], vec![0.6; 48]).unwrap();
        let stats = ChannelStats::compute(&[&img]).unwrap();
        let cfg = PreprocessConfig {
            target_size: 4,
            center_crop_fraction: 1.0,
            horizontal_flip_prob: 0.0,
        };
        let out = preprocess(&img, &cfg, &stats, Mode::Eval, &mut derive(1, &[1])).unwrap();
        let mean = out.data().iter().sum::<f64>() / 48.0;
        assert!(mean.abs() < 1e-9);
    }

    #[test]
    fn bt_files_round_trip_through_loader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.bt");
        let img = gradient_image(6, 6);
        crate::tensor::save_tensor(&path, &img).unwrap();
        let loaded = load_image_tensor(&path).unwrap();
        assert_eq!(loaded, img);
    }

    #[test]
    fn undecodable_file_errors_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.png");
        std::fs::write(&path, b"not an image").unwrap();
        let err = load_image_tensor(&path).unwrap_err();
        assert!(err.to_string().contains("junk.png"), "{err}");
    }
}
