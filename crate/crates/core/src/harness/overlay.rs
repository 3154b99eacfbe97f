//! Attention maps blended over the network input images.

use std::path::{Path, PathBuf};

use super::data::{preprocess, Dataset};
use crate::depthproc::{roi_crop_resize, RgbImage, Roi};
use crate::error::{Error, Result};
use crate::model::{PonNet, Stream};
use crate::placesim::dataset::write_ppm;
use crate::placesim::Split;

pub const OVERLAY_ALPHA: f64 = 0.5;

const JET: [[f64; 3]; 5] = [[0.0, 0.0, 255.0], [0.0, 255.0, 255.0], [0.0, 255.0, 0.0], [255.0, 255.0, 0.0], [255.0, 0.0, 0.0]];

/// Blue (0) → cyan → green → yellow → red (1).
pub fn colormap(t: f64) -> [f64; 3] {
    let x = t.clamp(0.0, 1.0) * (JET.len() - 1) as f64;
    let i = (x.floor() as usize).min(JET.len() - 2);
    let f = x - i as f64;
    let (a, b) = (JET[i], JET[i + 1]);
    [0, 1, 2].map(|c| a[c] + f * (b[c] - a[c]))
}

/// Upsample an `s × s` attention map bilinearly to the image size, scale it
/// by its maximum and alpha-blend the colormapped result onto `image`.
pub fn overlay(image: &RgbImage, attention: &[f64], s: usize) -> Result<RgbImage> {
    if image.width != image.height {
        return Err(Error::Input("overlay needs a square image".into()));
    }
    let up = roi_crop_resize(attention, s, s, 1, &Roi::full(s, s), image.width)?;
    let max = up.iter().copied().fold(0.0, f64::max);
    let mut out = image.clone();
    for (i, a) in up.iter().enumerate() {
        let t = if max > 0.0 { a / max } else { 0.0 };
        let c = colormap(t);
        for k in 0..3 {
            let v = (1.0 - OVERLAY_ALPHA) * image.data[3 * i + k] as f64 + OVERLAY_ALPHA * c[k];
            out.data[3 * i + k] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}

/// Write the input RGB crop and the RGB and depth attention overlays of one
/// sample as `{id}_input.ppm`, `{id}_rgb_att.ppm`, `{id}_depth_att.ppm`.
pub fn export_attention_overlay(model: &mut PonNet, data: &Dataset, split: Split, index: usize, out: &Path) -> Result<[PathBuf; 3]> {
    let heads = model.config().heads;
    let (batch, _) = data.batch(split, &[index], heads)?;
    let pred = model.predict(&batch)?;
    let (Some(rgb_att), Some(depth_att)) = (pred.branch(Stream::Rgb), pred.branch(Stream::Depth)) else {
        return Err(Error::Config(format!("{} has no separate RGB and depth attention branches", model.config().variant)));
    };
    let sample = &data.split(split)[index];
    let r = data.record(sample);
    let (rgb, depth) = preprocess(&data.manifest.load_rgb(r)?, &data.manifest.load_depth(r)?, &r.intrinsics, &r.crop, data.side)?;
    let s = rgb_att.attention.shape()[2];
    let images = [rgb.clone(), overlay(&rgb, rgb_att.attention.data(), s)?, overlay(&depth, depth_att.attention.data(), s)?];
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let paths = ["input", "rgb_att", "depth_att"].map(|k| out.join(format!("{:06}_{k}.ppm", r.id)));
    for (p, img) in paths.iter().zip(&images) {
        write_ppm(p, img)?;
    }
    Ok(paths)
}
