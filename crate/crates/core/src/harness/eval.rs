//! Confusion matrices, metrics files and the confusion-table layout.

use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::train::TrainOutcome;
use crate::error::{Error, Result};
use crate::model::{PonNet, Stream, HEAD_NAMES};
use crate::placesim::dataset::align;
use crate::placesim::Split;
use crate::planedet::{predict_depth, BaselineParams};

pub const METRICS_VERSION: u32 = 1;

const EVAL_BATCH: usize = 64;

/// 2×2 counts indexed `[truth][prediction]`, index 0 = DC.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion(pub [[usize; 2]; 2]);

impl Confusion {
    pub fn add(&mut self, truth_dc: bool, pred_dc: bool) {
        self.0[usize::from(!truth_dc)][usize::from(!pred_dc)] += 1;
    }

    pub fn from_predictions(truth_dc: &[bool], pred_dc: &[bool]) -> Self {
        let mut c = Self::default();
        for (&t, &p) in truth_dc.iter().zip(pred_dc) {
            c.add(t, p);
        }
        c
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        self.0[0][0] + self.0[1][1]
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.correct() as f64 / self.total() as f64
        }
    }
}

/// DC when `p_DC ≥ p_NDC`: exact ties go to DC.
pub fn predicts_dc(pair: &[f64]) -> bool {
    pair[0] >= pair[1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchMetrics {
    pub branch: Stream,
    /// Per head.
    pub confusion: Vec<Confusion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub loss_curve: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    pub loss_reduction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub version: u32,
    pub method: String,
    pub split: Split,
    pub samples: usize,
    pub heads: Vec<String>,
    /// Accuracy of the first head.
    pub accuracy: f64,
    pub head_accuracy: Vec<f64>,
    pub confusion: Vec<Confusion>,
    pub branches: Vec<BranchMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSummary>,
}

impl Metrics {
    fn new(method: String, split: Split, heads: usize, confusion: Vec<Confusion>, branches: Vec<BranchMetrics>) -> Self {
        let head_accuracy: Vec<f64> = confusion.iter().map(Confusion::accuracy).collect();
        Self {
            version: METRICS_VERSION,
            method,
            split,
            samples: confusion.first().map_or(0, Confusion::total),
            heads: head_names(heads),
            accuracy: head_accuracy.first().copied().unwrap_or(0.0),
            head_accuracy,
            confusion,
            branches,
            training: None,
        }
    }

    pub fn attach_training(&mut self, seed: u64, outcome: &TrainOutcome) {
        self.training = Some(TrainingSummary {
            seed,
            epochs: outcome.history.len(),
            best_epoch: outcome.best_epoch,
            loss_curve: outcome.history.iter().map(|e| e.train_loss).collect(),
            val_accuracy: outcome.history.iter().map(|e| e.val_accuracy).collect(),
            loss_reduction: outcome.loss_reduction(),
        });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        if m.version != METRICS_VERSION {
            return Err(Error::Config(format!("unsupported metrics version {}", m.version)));
        }
        Ok(m)
    }

    /// Confusion table of one head: rows are true DC/NDC, column pairs are
    /// predicted DC/NDC for the total prediction and each attention branch.
    pub fn confusion_table(&self, head: usize) -> String {
        let mut groups = vec![("Total".to_string(), self.confusion[head])];
        for b in &self.branches {
            let name = match b.branch {
                Stream::Rgb => "RGB Att.",
                Stream::Depth => "Depth Att.",
                Stream::Rgbd => "RGBD Att.",
            };
            groups.push((name.to_string(), b.confusion[head]));
        }
        let mut top = vec![String::new()];
        let mut sub = vec!["y \\ ŷ".to_string()];
        for (name, _) in &groups {
            top.extend([name.clone(), String::new()]);
            sub.extend(["DC".to_string(), "NDC".to_string()]);
        }
        let mut rows = vec![top, sub];
        for (t, label) in ["DC", "NDC"].iter().enumerate() {
            let mut row = vec![label.to_string()];
            for (_, c) in &groups {
                row.extend([c.0[t][0].to_string(), c.0[t][1].to_string()]);
            }
            rows.push(row);
        }
        align(&rows)
    }
}

pub fn head_names(heads: usize) -> Vec<String> {
    if heads == 1 {
        vec!["DC".to_string()]
    } else {
        HEAD_NAMES.iter().take(heads).map(|s| s.to_string()).collect()
    }
}

/// Eval-mode predictions of `model` over a split.
pub fn evaluate(model: &mut PonNet, data: &Dataset, split: Split) -> Result<Metrics> {
    let heads = model.config().heads;
    if heads != 1 && heads != HEAD_NAMES.len() {
        return Err(Error::Config(format!("model has {heads} heads")));
    }
    let n = data.split(split).len();
    let streams = model.streams();
    let mut total = vec![Confusion::default(); heads];
    let mut branch = vec![vec![Confusion::default(); heads]; streams.len()];
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (batch, labels) = data.batch(split, chunk, heads)?;
        let out = model.predict(&batch)?;
        for h in 0..heads {
            let truth = labels[h].data();
            for i in 0..chunk.len() {
                let t = truth[2 * i] == 1.0;
                total[h].add(t, predicts_dc(&out.probs[h].data()[2 * i..2 * i + 2]));
                for (k, b) in out.branches.iter().enumerate() {
                    branch[k][h].add(t, predicts_dc(&b.logits[h].data()[2 * i..2 * i + 2]));
                }
            }
        }
    }
    let branches = streams
        .into_iter()
        .zip(branch)
        .filter(|_| model.config().variant.has_attention_branch())
        .map(|(branch, confusion)| BranchMetrics { branch, confusion })
        .collect();
    let cfg = model.config();
    let method = format!("{}/{}", cfg.variant, cfg.input_mode);
    Ok(Metrics::new(method, split, heads, total, branches))
}

/// Plane-detection baseline over a split, on full-resolution depth.
pub fn baseline_metrics(data: &Dataset, split: Split, params: &BaselineParams) -> Result<Metrics> {
    let mut c = Confusion::default();
    for s in data.split(split) {
        let r = data.record(s);
        let depth = data.manifest.load_depth(r)?;
        let pred = predict_depth(&depth, &r.camera, &r.roi, (r.x_h.width, r.x_h.length), r.dest_height, params);
        c.add(r.labels.any.is_dc(), pred.is_dc());
    }
    Ok(Metrics::new("baseline".into(), split, 1, vec![c], Vec::new()))
}
