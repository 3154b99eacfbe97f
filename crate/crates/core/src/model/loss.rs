//! `J_total = λ_r J_r + λ_d J_d + λ_p J_p`, each term a cross-entropy summed
//! over heads and averaged over the batch.

use gradcore::{Graph, Tensor, Var};

use super::{ForwardVars, ModelConfig, Stream};
use crate::error::{Error, Result};

/// Graph handles of the individual loss terms. Terms a variant does not have
/// are `None`.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub rgb: Option<Var>,
    pub depth: Option<Var>,
    pub perception: Var,
}

fn weighted_ce(g: &mut Graph, logits: &[Var], labels: &[Tensor], weights: &[f64], n: usize) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for ((l, y), w) in logits.iter().zip(labels).zip(weights) {
        let ce = g.softmax_cross_entropy(*l, y)?;
        let term = g.scale(ce, w / n as f64);
        acc = Some(match acc {
            Some(a) => g.add(a, term)?,
            None => term,
        });
    }
    Ok(acc.expect("at least one head"))
}

/// Build the training objective. `labels` holds one `[N, 2]` one-hot matrix
/// per head (column 0 = DC); branch and perception terms share the labels.
///
/// A single-stream model with an attention branch weights its branch term by
/// `λ_d` for depth input and by `λ_r` otherwise.
pub fn total_loss(g: &mut Graph, config: &ModelConfig, out: &ForwardVars, labels: &[Tensor]) -> Result<LossTerms> {
    if labels.len() != config.heads || out.logits.len() != config.heads {
        return Err(Error::Input(format!("{} label heads for a {}-head model", labels.len(), config.heads)));
    }
    let n = g.shape(out.logits[0])[0];
    for y in labels {
        if y.shape() != [n, 2] {
            return Err(Error::Input(format!("labels must be [{n},2] per head, got {:?}", y.shape())));
        }
    }
    let w = &config.head_weights;
    let perception = weighted_ce(g, &out.logits, labels, w, n)?;
    let mut total = g.scale(perception, config.lambda_p);
    let (mut rgb, mut depth) = (None, None);
    for (stream, b) in &out.branches {
        let j = weighted_ce(g, &b.logits, labels, w, n)?;
        let lambda = match stream {
            Stream::Depth => {
                depth = Some(j);
                config.lambda_d
            }
            Stream::Rgb | Stream::Rgbd => {
                rgb = Some(j);
                config.lambda_r
            }
        };
        let term = g.scale(j, lambda);
        total = g.add(total, term)?;
    }
    Ok(LossTerms { total, rgb, depth, perception })
}

/// One-hot `[N, 2]` matrix from DC flags (column 0 = DC).
pub fn one_hot(is_dc: &[bool]) -> Tensor {
    let data = is_dc.iter().flat_map(|&dc| if dc { [1.0, 0.0] } else { [0.0, 1.0] }).collect();
    Tensor::new(vec![is_dc.len(), 2], data).expect("non-empty label batch")
}
