//! Sample synthesis and the on-disk dataset: PPM/PGM-16 images, a JSON-lines
//! manifest, the generation config and label statistics.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::crop_window;
use super::{generate_scene, label_sample, render, simulate_placing, Camera, CollisionEvent, GenConfig, Labels, Scene, WorldRect};
use crate::depthproc::{CameraIntrinsics, DepthMap, RgbImage, Roi};
use crate::error::{Error, Result};
use crate::model::HeuristicInput;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const GEN_CONFIG_FILE: &str = "gen_config.json";
pub const STATS_FILE: &str = "stats.json";
pub const STATS_TABLE_FILE: &str = "stats.txt";
pub const DEFAULT_RATIOS: [f64; 3] = [10.0, 1.0, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Target size as held in the hand plus the camera height.
pub fn make_heuristic_input(scene: &Scene) -> HeuristicInput {
    let s = scene.target.size;
    HeuristicInput { width: s[0], height: s[2], length: s[1], camera_height: scene.camera.position[2] }
}

/// One placing trial with its images and labels.
#[derive(Clone, Debug)]
pub struct SceneSample {
    pub scene: Scene,
    pub rgb: RgbImage,
    pub depth: DepthMap,
    pub x_h: HeuristicInput,
    pub events: Vec<CollisionEvent>,
    pub labels: Labels,
}

pub fn sample_from_scene(scene: Scene, cfg: &GenConfig) -> SceneSample {
    let r = render(&scene);
    let events = simulate_placing(&scene, &cfg.motion);
    let labels = label_sample(&events, cfg.v_dc);
    SceneSample { x_h: make_heuristic_input(&scene), rgb: r.rgb, depth: r.depth, events, labels, scene }
}

pub fn make_sample(seed: u64, cfg: &GenConfig) -> Result<SceneSample> {
    Ok(sample_from_scene(generate_scene(seed, cfg)?, cfg))
}

/// Manifest entry. Image paths are relative to the manifest directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: usize,
    pub split: Split,
    pub rgb: String,
    pub depth: String,
    pub x_h: HeuristicInput,
    pub labels: Labels,
    pub seed: u64,
    pub location: usize,
    pub events: Vec<CollisionEvent>,
    pub intrinsics: CameraIntrinsics,
    pub camera: Camera,
    /// Image window fed to the network.
    pub crop: Roi,
    /// Surface square around the place point.
    pub roi: WorldRect,
    pub dest_height: f64,
    pub obstacles: usize,
}

/// DC/NDC counts of the `Any` label per split, plus per-head totals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelStats {
    /// `[split][0 = DC, 1 = NDC]`
    pub counts: [[usize; 2]; 3],
    /// `[head][0 = DC, 1 = NDC]` over all samples, heads Any, AO, TO, OO, OD.
    pub heads: [[usize; 2]; 5],
}

impl LabelStats {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a SampleRecord>) -> Self {
        let mut s = LabelStats::default();
        for r in records {
            let c = if r.labels.any.is_dc() { 0 } else { 1 };
            s.counts[r.split.index()][c] += 1;
            for (h, l) in r.labels.as_array().iter().enumerate() {
                s.heads[h][if l.is_dc() { 0 } else { 1 }] += 1;
            }
        }
        s
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn split_total(&self, s: Split) -> usize {
        self.counts[s.index()].iter().sum()
    }

    pub fn dc_fraction(&self) -> f64 {
        let dc: usize = self.counts.iter().map(|c| c[0]).sum();
        dc as f64 / self.total().max(1) as f64
    }

    /// Counts per split with row and column totals and percentages.
    pub fn table(&self) -> String {
        let n = self.total().max(1) as f64;
        let pct = |c: usize| format!("{c} ({:.1})", 100.0 * c as f64 / n);
        let mut rows = vec![vec![String::new(), "Train".to_string(), "Valid.".to_string(), "Test".to_string(), "Σ([%])".to_string()]];
        for (c, name) in ["DC", "NDC"].iter().enumerate() {
            let mut row = vec![name.to_string()];
            row.extend((0..3).map(|s| self.counts[s][c].to_string()));
            row.push(pct(self.counts.iter().map(|x| x[c]).sum()));
            rows.push(row);
        }
        let mut last = vec!["Σ([%])".to_string()];
        last.extend(Split::ALL.iter().map(|&s| pct(self.split_total(s))));
        last.push(format!("{} (100)", self.total()));
        rows.push(last);
        align(&rows)
    }
}

/// Left-aligned text table with two-space column gaps.
pub fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            let _ = write!(line, "{cell}{}", " ".repeat(pad));
            if c + 1 < r.len() {
                line.push_str("  ");
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Split sizes `(train, valid, test)` for `n` samples; valid and test are
/// rounded shares, train takes the rest.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) || !(sum > 0.0) {
        return Err(Error::Config(format!("invalid split ratios {ratios:?}")));
    }
    let v = (n as f64 * ratios[1] / sum).round() as usize;
    let t = (n as f64 * ratios[2] / sum).round() as usize;
    if v + t > n {
        return Err(Error::Config(format!("split ratios {ratios:?} leave no room for {n} samples")));
    }
    Ok([n - v - t, v, t])
}

#[derive(Clone, Debug)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub config: GenConfig,
    pub records: Vec<SampleRecord>,
    pub stats: LabelStats,
}

impl DatasetManifest {
    pub fn split(&self, s: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == s)
    }

    /// Read `manifest.jsonl` (and the config and stored statistics next to
    /// it) from a dataset directory or the manifest file itself.
    pub fn read(path: &Path) -> Result<Self> {
        let (root, file) = if path.is_dir() {
            (path.to_path_buf(), path.join(MANIFEST_FILE))
        } else {
            (path.parent().unwrap_or(Path::new(".")).to_path_buf(), path.to_path_buf())
        };
        let f = fs::File::open(&file).map_err(|e| Error::io(&file, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&file, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: SampleRecord = serde_json::from_str(&line).map_err(|e| Error::record(format!("line {}", i + 1), e.to_string()))?;
            records.push(r);
        }
        let cfg_path = root.join(GEN_CONFIG_FILE);
        let config = match fs::read_to_string(&cfg_path) {
            Ok(s) => serde_json::from_str(&s).map_err(|e| Error::Config(format!("{}: {e}", cfg_path.display())))?,
            Err(_) => GenConfig::default(),
        };
        let stats_path = root.join(STATS_FILE);
        let stats = match fs::read_to_string(&stats_path) {
            Ok(s) => serde_json::from_str(&s).map_err(|e| Error::Config(format!("{}: {e}", stats_path.display())))?,
            Err(_) => LabelStats::from_records(&records),
        };
        Ok(Self { root, config, records, stats })
    }

    pub fn write(&self) -> Result<()> {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        write_file(&self.root.join(MANIFEST_FILE), s.as_bytes())?;
        let cfg = serde_json::to_string_pretty(&self.config).expect("config serializes");
        write_file(&self.root.join(GEN_CONFIG_FILE), cfg.as_bytes())?;
        let stats = serde_json::to_string_pretty(&self.stats).expect("stats serialize");
        write_file(&self.root.join(STATS_FILE), stats.as_bytes())?;
        write_file(&self.root.join(STATS_TABLE_FILE), self.stats.table().as_bytes())
    }

    pub fn load_rgb(&self, r: &SampleRecord) -> Result<RgbImage> {
        read_ppm(&self.root.join(&r.rgb)).map_err(|e| Error::record(r.id.to_string(), e.to_string()))
    }

    pub fn load_depth(&self, r: &SampleRecord) -> Result<DepthMap> {
        read_pgm16(&self.root.join(&r.depth)).map_err(|e| Error::record(r.id.to_string(), e.to_string()))
    }
}

/// Generate `n` samples into `out`. Sample `i` uses seed
/// `mix_seed(seed, i)`; split membership is a seeded permutation.
pub fn generate_dataset(n: usize, seed: u64, ratios: [f64; 3], cfg: &GenConfig, out: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let sizes = split_sizes(n, ratios)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(gradcore::mix_seed(seed, u64::MAX)));
    let mut splits = vec![Split::Train; n];
    for (k, &i) in order.iter().enumerate() {
        splits[i] = if k < sizes[1] {
            Split::Valid
        } else if k < sizes[1] + sizes[2] {
            Split::Test
        } else {
            Split::Train
        };
    }
    for d in ["rgb", "depth"] {
        let p = out.join(d);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut records = Vec::with_capacity(n);
    for (i, &split) in splits.iter().enumerate() {
        let s = gradcore::mix_seed(seed, i as u64);
        let sample = make_sample(s, cfg)?;
        let rgb = format!("rgb/{i:06}.ppm");
        let depth = format!("depth/{i:06}.pgm");
        write_ppm(&out.join(&rgb), &sample.rgb)?;
        write_pgm16(&out.join(&depth), &sample.depth)?;
        let scene = &sample.scene;
        records.push(SampleRecord {
            id: i,
            split,
            rgb,
            depth,
            x_h: sample.x_h,
            labels: sample.labels,
            seed: s,
            location: scene.location,
            events: sample.events.clone(),
            intrinsics: scene.camera.intrinsics,
            camera: scene.camera.clone(),
            crop: crop_window(scene),
            roi: scene.roi,
            dest_height: scene.destination.height,
            obstacles: scene.obstacles.len(),
        });
    }
    let m = DatasetManifest { root: out.to_path_buf(), config: cfg.clone(), stats: LabelStats::from_records(&records), records };
    m.write()?;
    Ok(m)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    let mut b = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    b.extend_from_slice(&img.data);
    write_file(path, &b)
}

/// Depth in millimeters, 16-bit big-endian; 0 marks invalid pixels.
pub fn write_pgm16(path: &Path, d: &DepthMap) -> Result<()> {
    let mut b = format!("P5\n{} {}\n65535\n", d.width, d.height).into_bytes();
    for &z in &d.data {
        let mm = if z.is_finite() && z > 0.0 { (z * 1000.0).round().clamp(0.0, 65535.0) as u16 } else { 0 };
        b.extend_from_slice(&mm.to_be_bytes());
    }
    write_file(path, &b)
}

/// Parse a binary PNM header; returns magic, width, height, maxval and the
/// offset of the pixel data.
fn pnm_header(bytes: &[u8]) -> std::result::Result<(String, usize, usize, usize, usize), String> {
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err("truncated header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    i += 1;
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header field {s:?}"));
    Ok((fields[0].clone(), num(&fields[1])?, num(&fields[2])?, num(&fields[3])?, i))
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::Input(format!("{}: {m}", path.display()));
    let (magic, w, h, max, off) = pnm_header(&bytes).map_err(bad)?;
    if magic != "P6" || max != 255 {
        return Err(bad(format!("expected 8-bit P6, got {magic} maxval {max}")));
    }
    let data = bytes.get(off..off + w * h * 3).ok_or_else(|| bad("truncated pixel data".into()))?;
    RgbImage::new(w, h, data.to_vec())
}

pub fn read_pgm16(path: &Path) -> Result<DepthMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::Input(format!("{}: {m}", path.display()));
    let (magic, w, h, max, off) = pnm_header(&bytes).map_err(bad)?;
    if magic != "P5" || max != 65535 {
        return Err(bad(format!("expected 16-bit P5, got {magic} maxval {max}")));
    }
    let raw = bytes.get(off..off + w * h * 2).ok_or_else(|| bad("truncated pixel data".into()))?;
    let data = raw.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 1000.0).collect();
    DepthMap::new(w, h, data)
}
