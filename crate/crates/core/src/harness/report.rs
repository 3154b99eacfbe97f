//! Ablation and collision-type studies over trial seeds.

use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::eval::{baseline_metrics, METRICS_VERSION};
use super::train::{train_and_test, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{InputMode, ModelConfig, Variant, HEAD_NAMES};
use crate::placesim::dataset::align;
use crate::placesim::Split;
use crate::planedet::BaselineParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cell {
    Model { variant: Variant, input: InputMode },
    Baseline,
}

impl Cell {
    pub fn model(variant: Variant, input: InputMode) -> Self {
        Cell::Model { variant, input }
    }
}

/// Baseline, type1–3 on every input mode, type4 and the full model on RGBD.
pub fn default_grid() -> Vec<Cell> {
    let mut g = vec![Cell::Baseline];
    for v in [Variant::Type1, Variant::Type2, Variant::Type3] {
        g.extend(InputMode::ALL.iter().map(|&m| Cell::model(v, m)));
    }
    g.push(Cell::model(Variant::Type4, InputMode::Rgbd));
    g.push(Cell::model(Variant::Full, InputMode::Rgbd));
    g
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: Cell,
    pub method: String,
    /// Backbone: `deep` for the extra residual stage, `base` otherwise.
    pub bb: String,
    /// Attention branches: single or multiple.
    pub ab: String,
    /// Self-attention fusion.
    pub sa: String,
    pub input: String,
    pub seeds: Vec<u64>,
    /// `[trial][column]` accuracies.
    pub trials: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Sample standard deviation; absent for fewer than two trials.
    pub std: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub version: u32,
    pub columns: Vec<String>,
    pub epochs: usize,
    pub rows: Vec<AblationRow>,
}

/// Mean and sample standard deviation (`n − 1`); `None` below two values.
pub fn mean_std(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

fn describe(cell: Cell) -> (String, String, String, String, String) {
    let s = |x: &str| x.to_string();
    match cell {
        Cell::Baseline => (s("Plane detect. (baseline)"), s("-"), s("-"), s("-"), s("RGBD")),
        Cell::Model { variant, input } => {
            let input = match input {
                InputMode::Rgb => "RGB",
                InputMode::Depth => "D",
                InputMode::Rgbd => "RGBD",
            };
            let (method, bb, ab, sa) = match variant {
                Variant::Type1 => ("PonNet-type1", "deep", "-", "-"),
                Variant::Type2 => ("PonNet-type2", "base", "-", "-"),
                Variant::Type3 => ("PonNet-type3", "base", "S", "-"),
                Variant::Type4 => ("PonNet-type4", "base", "M", "N"),
                Variant::Full => ("PonNet", "base", "M", "Y"),
            };
            (s(method), s(bb), s(ab), s(sa), s(input))
        }
    }
}

fn row(cell: Cell, seeds: Vec<u64>, result: Result<Vec<Vec<f64>>>) -> AblationRow {
    let (method, bb, ab, sa, input) = describe(cell);
    let (trials, error) = match result {
        Ok(t) => (t, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let cols = trials.first().map_or(0, Vec::len);
    let (mean, std) = (0..cols).map(|c| mean_std(&trials.iter().map(|t| t[c]).collect::<Vec<_>>())).unzip();
    AblationRow { cell, method, bb, ab, sa, input, seeds, trials, mean, std, error }
}

fn trial_config(base: &TrainConfig, variant: Variant, input: InputMode, heads: usize, seed: u64) -> TrainConfig {
    let mut model = ModelConfig { variant, input_mode: input, ..base.model.clone() };
    if heads > 1 {
        model = model.collision_types();
    }
    TrainConfig { model, seed, ..base.clone() }
}

fn run_grid(
    grid: &[Cell],
    data: &Dataset,
    base: &TrainConfig,
    trials: usize,
    seed: u64,
    heads: usize,
    mut progress: impl FnMut(&AblationRow),
) -> Result<AblationReport> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &cell in grid {
        let r = match cell {
            Cell::Baseline => {
                row(cell, Vec::new(), baseline_metrics(data, Split::Test, &BaselineParams::default()).map(|m| vec![vec![m.accuracy]]))
            }
            Cell::Model { variant, input } => {
                let seeds: Vec<u64> = (0..trials as u64).map(|t| seed + t).collect();
                let result = seeds
                    .iter()
                    .map(|&s| {
                        let cfg = trial_config(base, variant, input, heads, s);
                        train_and_test(&cfg, data).map(|(_, m)| m.head_accuracy)
                    })
                    .collect::<Result<Vec<_>>>();
                row(cell, seeds, result)
            }
        };
        progress(&r);
        rows.push(r);
    }
    let columns = if heads == 1 { vec!["Accuracy".to_string()] } else { HEAD_NAMES.iter().map(|s| s.to_string()).collect() };
    Ok(AblationReport { version: METRICS_VERSION, columns, epochs: base.epochs, rows })
}

/// Train and test every grid cell over trial seeds `seed..seed + trials`;
/// the baseline is evaluated once. A failing cell is recorded in its row and
/// the remaining cells still run.
pub fn run_ablation(
    grid: &[Cell],
    data: &Dataset,
    base: &TrainConfig,
    trials: usize,
    seed: u64,
    progress: impl FnMut(&AblationRow),
) -> Result<AblationReport> {
    run_grid(grid, data, base, trials, seed, 1, progress)
}

/// Five-head variant of [`run_ablation`] reporting Any/AO/TO/OO/OD
/// accuracies. The baseline has no per-type output and is rejected.
pub fn run_collision_types(
    grid: &[Cell],
    data: &Dataset,
    base: &TrainConfig,
    trials: usize,
    seed: u64,
    progress: impl FnMut(&AblationRow),
) -> Result<AblationReport> {
    if grid.contains(&Cell::Baseline) {
        return Err(Error::Config("the plane baseline does not predict collision types".into()));
    }
    run_grid(grid, data, base, trials, seed, HEAD_NAMES.len(), progress)
}

fn percent(mean: f64, std: Option<f64>) -> String {
    match std {
        Some(s) => format!("{:.2}±{:.2}", 100.0 * mean, 100.0 * s),
        None => format!("{:.2}", 100.0 * mean),
    }
}

impl AblationReport {
    /// Accuracy table in percent: `Method | BB | AB | SA | Input | Accuracy`
    /// for single-head reports, `Method | Input | Any | AO | TO | OO | OD`
    /// for collision-type reports.
    pub fn table(&self) -> String {
        let single = self.columns.len() == 1;
        let mut header: Vec<String> = if single {
            ["Method", "BB", "AB", "SA", "Input"].iter().map(|s| s.to_string()).collect()
        } else {
            vec!["Method".to_string(), "Input".to_string()]
        };
        header.extend(self.columns.iter().cloned());
        let mut rows = vec![header];
        for r in &self.rows {
            let mut line = vec![r.method.clone()];
            if single {
                line.extend([r.bb.clone(), r.ab.clone(), r.sa.clone()]);
            }
            line.push(r.input.clone());
            match &r.error {
                Some(e) => line.push(format!("failed: {e}")),
                None => line.extend(r.mean.iter().zip(&r.std).map(|(&m, &s)| percent(m, s))),
            }
            rows.push(line);
        }
        align(&rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
