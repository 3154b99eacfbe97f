//! Decoded, preprocessed datasets held in memory.

use std::path::Path;

use gradcore::Tensor;

use crate::depthproc::{colorize_depth, crop_resize_rgb, encode_planar, CameraIntrinsics, DepthMap, RgbImage, Roi};
use crate::error::{Error, Result};
use crate::model::{one_hot, Batch, HEURISTIC_DIM};
use crate::placesim::{DatasetManifest, LabelStats, Labels, SampleRecord, Split};

/// One preprocessed sample: planar `[3, S, S]` network encodings of the
/// cropped RGB image and of the colorized depth.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: usize,
    /// Index into the manifest records.
    pub record: usize,
    pub rgb: Vec<f64>,
    pub depth: Vec<f64>,
    pub x_h: [f64; HEURISTIC_DIM],
    pub labels: Labels,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub side: usize,
    splits: [Vec<Sample>; 3],
}

/// Crop both images to the network window and resize to `side`; returns the
/// RGB crop and the colorized depth crop.
pub fn preprocess(rgb: &RgbImage, depth: &DepthMap, k: &CameraIntrinsics, crop: &Roi, side: usize) -> Result<(RgbImage, RgbImage)> {
    let colored = colorize_depth(depth, k);
    Ok((crop_resize_rgb(rgb, crop, side)?, crop_resize_rgb(&colored, crop, side)?))
}

fn decode(manifest: &DatasetManifest, index: usize, side: usize) -> Result<Sample> {
    let r = &manifest.records[index];
    let fail = |m: String| Error::record(r.id.to_string(), m);
    if !r.labels.is_consistent() {
        return Err(fail("Any label disagrees with the collision-type labels".into()));
    }
    r.x_h.validate().map_err(|e| fail(e.to_string()))?;
    let rgb = manifest.load_rgb(r)?;
    let depth = manifest.load_depth(r)?;
    if (rgb.width, rgb.height) != (depth.width, depth.height) {
        return Err(fail(format!("rgb is {}x{} but depth is {}x{}", rgb.width, rgb.height, depth.width, depth.height)));
    }
    let (rgb, depth) = preprocess(&rgb, &depth, &r.intrinsics, &r.crop, side).map_err(|e| fail(e.to_string()))?;
    let mut a = Vec::with_capacity(3 * side * side);
    encode_planar(&rgb, &mut a);
    let mut b = Vec::with_capacity(3 * side * side);
    encode_planar(&depth, &mut b);
    Ok(Sample { id: r.id, record: index, rgb: a, depth: b, x_h: r.x_h.as_array(), labels: r.labels })
}

/// Read a dataset directory (or manifest file), decode and preprocess every
/// record to `side × side`. Fails on the first bad record, naming it; also
/// fails when the stored label statistics disagree with the records.
pub fn load_dataset(path: &Path, side: usize) -> Result<Dataset> {
    let manifest = DatasetManifest::read(path)?;
    let recomputed = LabelStats::from_records(&manifest.records);
    if recomputed != manifest.stats {
        return Err(Error::Config(format!("{}: stored label statistics do not match the manifest records", path.display())));
    }
    let mut splits: [Vec<Sample>; 3] = Default::default();
    for i in 0..manifest.records.len() {
        let s = decode(&manifest, i, side)?;
        splits[manifest.records[i].split.index()].push(s);
    }
    Ok(Dataset { manifest, side, splits })
}

impl Dataset {
    pub fn split(&self, s: Split) -> &[Sample] {
        &self.splits[s.index()]
    }

    pub fn record(&self, sample: &Sample) -> &SampleRecord {
        &self.manifest.records[sample.record]
    }

    pub fn stats(&self) -> &LabelStats {
        &self.manifest.stats
    }

    /// Network batch and per-head one-hot labels for `indices` of split `s`.
    pub fn batch(&self, s: Split, indices: &[usize], heads: usize) -> Result<(Batch, Vec<Tensor>)> {
        let samples = self.split(s);
        let n = indices.len();
        let plane = 3 * self.side * self.side;
        let mut rgb = Vec::with_capacity(n * plane);
        let mut depth = Vec::with_capacity(n * plane);
        let mut x_h = Vec::with_capacity(n * HEURISTIC_DIM);
        let mut dc: Vec<Vec<bool>> = vec![Vec::with_capacity(n); heads];
        for &i in indices {
            let smp = samples.get(i).ok_or_else(|| Error::Input(format!("sample index {i} out of range for {s:?}")))?;
            rgb.extend_from_slice(&smp.rgb);
            depth.extend_from_slice(&smp.depth);
            x_h.extend_from_slice(&smp.x_h);
            let labels = smp.labels.as_array();
            for (h, col) in dc.iter_mut().enumerate() {
                col.push(labels[h].is_dc());
            }
        }
        let shape = [n, 3, self.side, self.side];
        let batch = Batch {
            rgb: Tensor::new(shape.to_vec(), rgb)?,
            depth: Tensor::new(shape.to_vec(), depth)?,
            heuristic: Tensor::new(vec![n, HEURISTIC_DIM], x_h)?,
        };
        Ok((batch, dc.iter().map(|d| one_hot(d)).collect()))
    }
}
