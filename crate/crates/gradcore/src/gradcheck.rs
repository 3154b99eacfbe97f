//! Central finite-difference checks of analytic gradients.

use crate::error::Result;
use crate::graph::{BnMode, Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Denominator floor of the relative error, so gradients that are zero up to
/// rounding compare by absolute difference.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input or parameter name, flat element index)` of the worst element.
    pub worst: (String, usize),
    pub checked: usize,
    /// Elements whose perturbation switched a ReLU unit, where the central
    /// difference is not a derivative; excluded from `max_rel_error`.
    pub skipped: usize,
}

impl GradCheckReport {
    fn new() -> Self {
        Self { max_rel_error: 0.0, worst: (String::new(), 0), checked: 0, skipped: 0 }
    }

    fn record(&mut self, name: impl FnOnce() -> String, index: usize, err: f64) {
        self.checked += 1;
        if err > self.max_rel_error || self.checked == 1 {
            self.max_rel_error = self.max_rel_error.max(err);
            self.worst = (name(), index);
        }
    }
}

/// Compare the gradient of a scalar function of `inputs` against central
/// differences with the given step, element by element.
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let pattern = g.activation_pattern();
    g.backward(loss, &mut ParamStore::new())?;
    let analytic: Vec<Vec<f64>> =
        vars.iter().zip(inputs).map(|(v, t)| g.grad(*v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec)).collect();

    let eval = |ts: &[Tensor]| -> Result<(f64, bool)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.input(t.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok((g.value(loss).item(), g.activation_pattern() == pattern))
    };

    let mut report = GradCheckReport::new();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].numel() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + step;
            let up = eval(&work)?;
            work[i].data_mut()[j] = orig - step;
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            if !(up.1 && down.1) {
                report.skipped += 1;
                continue;
            }
            let numeric = (up.0 - down.0) / (2.0 * step);
            report.record(|| format!("input{i}"), j, relative_error(analytic[i][j], numeric));
        }
    }
    Ok(report)
}

/// Same check over every element of every trainable parameter in `store`.
/// `f` must be a pure function of the parameter values; it may update
/// non-trainable buffers (running statistics), which are restored between
/// evaluations.
pub fn grad_check_params<F>(store: &mut ParamStore, f: F, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &mut ParamStore) -> Result<Var>,
{
    let pristine = store.clone();
    store.zero_grad();
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    let pattern = g.activation_pattern();
    g.backward(loss, store)?;
    let analytic: Vec<Vec<f64>> = store.iter().map(|(_, p)| p.grad.data().to_vec()).collect();

    let mut report = GradCheckReport::new();
    let ids: Vec<_> = pristine.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    let mut scratch = pristine.clone();
    for id in ids {
        let n = pristine.value(id).numel();
        for j in 0..n {
            let orig = pristine.value(id).data()[j];
            let mut eval = |delta: f64| -> Result<(f64, bool)> {
                scratch.clone_from(&pristine);
                scratch.get_mut(id).value.data_mut()[j] = orig + delta;
                let mut g = Graph::new();
                let loss = f(&mut g, &mut scratch)?;
                Ok((g.value(loss).item(), g.activation_pattern() == pattern))
            };
            let up = eval(step)?;
            let down = eval(-step)?;
            if !(up.1 && down.1) {
                report.skipped += 1;
                continue;
            }
            let numeric = (up.0 - down.0) / (2.0 * step);
            report.record(|| pristine.get(id).name.clone(), j, relative_error(analytic[id.index()][j], numeric));
        }
    }
    // restore buffers touched by the analytic pass, keep the gradients
    for (id, p) in pristine.iter() {
        store.get_mut(id).value = p.value.clone();
    }
    Ok(report)
}

/// Outcome of one named check of [`operator_suite`].
#[derive(Clone, Debug)]
pub struct OperatorCheck {
    pub name: &'static str,
    pub seed: u64,
    pub tolerance: f64,
    pub report: GradCheckReport,
}

impl OperatorCheck {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < self.tolerance
    }
}

fn random(shape: &[usize], seed: u64) -> Tensor {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// `Σ y ⊙ r` for a fixed random `r`, so every output element carries a
/// distinct upstream gradient. Rank-2 `y` is reduced row by row through
/// dense layers, rank-4 `y` through a full-size convolution kernel.
fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    if shape.len() == 4 {
        let k = g.constant(random(&[1, shape[1], shape[2], shape[3]], seed));
        let c = g.conv2d(y, k, None, 1, 0)?;
        return Ok(g.sum(c));
    }
    let (n, d) = (shape[0], shape[1]);
    let mut terms = Vec::with_capacity(n);
    for r in 0..n {
        let mut sel = Tensor::zeros(&[1, n]);
        sel.data_mut()[r] = 1.0;
        let s = g.constant(sel);
        let row = g.dense(s, y, None)?;
        let w = g.constant(random(&[d, 1], seed + r as u64));
        terms.push(g.dense(row, w, None)?);
    }
    let cat = g.concat(&terms)?;
    Ok(g.sum(cat))
}

type Case = (&'static str, f64, Vec<Vec<usize>>, fn(&mut Graph, &[Var]) -> Result<Var>);

fn cases() -> Vec<Case> {
    vec![
        ("dense", 1e-6, vec![vec![2, 3], vec![3, 4], vec![4]], |g, v| {
            let y = g.dense(v[0], v[1], Some(v[2]))?;
            weighted_sum(g, y, 7)
        }),
        ("conv2d", 1e-6, vec![vec![1, 1, 4, 4], vec![2, 1, 3, 3], vec![2]], |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), 1, 1)?;
            weighted_sum(g, y, 9)
        }),
        ("conv2d_stride2", 1e-6, vec![vec![2, 3, 5, 5], vec![4, 3, 3, 3], vec![4]], |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), 2, 1)?;
            weighted_sum(g, y, 9)
        }),
        ("batch_norm_train", 1e-5, vec![vec![4, 2, 2, 2], vec![2], vec![2]], |g, v| {
            let (y, _) = g.batch_norm(v[0], v[1], v[2], BnMode::Train, 1e-5)?;
            weighted_sum(g, y, 5)
        }),
        ("batch_norm_eval", 1e-4, vec![vec![3, 2, 2, 2], vec![2], vec![2]], |g, v| {
            let (mean, var) = ([0.2, -0.1], [0.5, 1.7]);
            let (y, _) = g.batch_norm(v[0], v[1], v[2], BnMode::Eval { mean: &mean, var: &var }, 1e-5)?;
            weighted_sum(g, y, 5)
        }),
        ("relu_pool", 1e-4, vec![vec![2, 3, 4, 4]], |g, v| {
            let r = g.relu(v[0]);
            let p = g.global_avg_pool(r)?;
            weighted_sum(g, p, 3)
        }),
        ("sigmoid_tanh_modulate", 1e-4, vec![vec![2, 3, 4, 4], vec![2, 1, 4, 4]], |g, v| {
            let a = g.sigmoid(v[1]);
            let w = g.modulate(v[0], a)?;
            let t = g.tanh(w);
            weighted_sum(g, t, 11)
        }),
        ("softmax_mix_concat", 1e-4, vec![vec![3, 2], vec![3, 4], vec![3, 4]], |g, v| {
            let alpha = g.softmax(v[0])?;
            let m = g.mix(alpha, &[v[1], v[2]])?;
            let cat = g.concat(&[m, v[0]])?;
            let s = g.scale(cat, 0.5);
            let y = g.add(s, cat)?;
            weighted_sum(g, y, 13)
        }),
        ("softmax_cross_entropy", 1e-4, vec![vec![3, 2]], |g, v| {
            let labels = Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).expect("static shape");
            g.softmax_cross_entropy(v[0], &labels)
        }),
    ]
}

/// Finite-difference check of every differentiable operator for each seed
/// (inputs drawn uniformly from [-1, 1]), at the given step.
pub fn operator_suite(seeds: std::ops::Range<u64>, step: f64) -> Result<Vec<OperatorCheck>> {
    let mut out = Vec::new();
    for seed in seeds {
        for (k, (name, tolerance, shapes, f)) in cases().into_iter().enumerate() {
            let inputs: Vec<Tensor> =
                shapes.iter().enumerate().map(|(i, s)| random(s, crate::mix_seed(seed, (k * 16 + i) as u64))).collect();
            let report = grad_check(f, &inputs, step)?;
            out.push(OperatorCheck { name, seed, tolerance, report });
        }
    }
    Ok(out)
}
