//! Baseline rating model: global mean plus per-user and per-item biases,
//! fit by regularized stochastic gradient descent. The fitted baseline is
//! subtracted from ratings to form the interaction observations the solver
//! completes, and added back to turn a completed matrix into predictions.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::RatingTriples;
use crate::error::{Error, Result};
use crate::lowrank::{MaskOperator, SparseObservations};

pub const RATING_MIN: f64 = 1.0;
pub const RATING_MAX: f64 = 5.0;

/// SGD hyperparameters for the bias fit.
#[derive(Debug, Clone, Copy)]
pub struct BiasConfig {
    pub delta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig {
            delta: 0.02,
            learning_rate: 0.005,
            epochs: 30,
            seed: 0,
        }
    }
}

/// Fitted baseline: `baseline(u, i) = mean_g + b_user[u] + b_item[i]`.
/// Users or items unseen in training keep bias 0 and predict the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasModel {
    pub mean_g: f64,
    pub b_user: Vec<f64>,
    pub b_item: Vec<f64>,
}

impl BiasModel {
    pub fn baseline(&self, user: u32, item: u32) -> f64 {
        self.mean_g + self.b_user[user as usize] + self.b_item[item as usize]
    }
}

fn objective(train: &RatingTriples, model: &BiasModel, delta: f64) -> f64 {
    let mut sq = 0.0;
    for e in &train.entries {
        let r = e.rating - model.baseline(e.user, e.item);
        sq += r * r;
    }
    let reg: f64 = model.b_user.iter().map(|b| b * b).sum::<f64>()
        + model.b_item.iter().map(|b| b * b).sum::<f64>();
    sq + delta * reg
}

/// Fits biases by SGD and returns the per-epoch objective trace alongside
/// the model.
///
/// The regularizer is applied as an implicit (proximal) step,
/// `b <- (b + lr * residual) / (1 + lr * delta)`, which matches the explicit
/// update to first order and stays stable for arbitrarily large `delta`.
pub fn fit_biases_traced(
    train: &RatingTriples,
    config: &BiasConfig,
) -> Result<(BiasModel, Vec<f64>)> {
    if train.is_empty() {
        return Err(Error::Validation("cannot fit biases on empty training set".into()));
    }
    let mean_g =
        train.entries.iter().map(|e| e.rating).sum::<f64>() / train.len() as f64;
    let mut model = BiasModel {
        mean_g,
        b_user: vec![0.0; train.num_users],
        b_item: vec![0.0; train.num_items],
    };

    let lr = config.learning_rate;
    let shrink = 1.0 + lr * config.delta;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = Vec::with_capacity(config.epochs + 1);
    trace.push(objective(train, &model, config.delta));

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            let e = &train.entries[k];
            let resid = e.rating - model.baseline(e.user, e.item);
            let bu = &mut model.b_user[e.user as usize];
            *bu = (*bu + lr * resid) / shrink;
            let bi = &mut model.b_item[e.item as usize];
            *bi = (*bi + lr * resid) / shrink;
        }
        let obj = objective(train, &model, config.delta);
        if !obj.is_finite() {
            return Err(Error::Divergence {
                context: "bias SGD (learning rate too high)".into(),
                iteration: epoch + 1,
            });
        }
        trace.push(obj);
    }
    Ok((model, trace))
}

pub fn fit_biases(train: &RatingTriples, config: &BiasConfig) -> Result<BiasModel> {
    fit_biases_traced(train, config).map(|(model, _)| model)
}

/// Interaction observations: `y = r - mean_g - b_user - b_item` on the
/// training support.
pub fn to_interactions(train: &RatingTriples, model: &BiasModel) -> Result<SparseObservations> {
    if model.b_user.len() != train.num_users || model.b_item.len() != train.num_items {
        return Err(Error::Validation(format!(
            "bias model fitted on {}x{} but triples span {}x{}",
            model.b_user.len(),
            model.b_item.len(),
            train.num_users,
            train.num_items
        )));
    }
    let mask = MaskOperator::from_triples(train);
    let values = train
        .entries
        .iter()
        .map(|e| e.rating - model.baseline(e.user, e.item))
        .collect();
    Ok(SparseObservations::new(mask, values))
}

/// Restores baselines on top of a completed interaction matrix and clips
/// the result into the rating scale.
pub fn from_interactions(z: &Array2<f64>, model: &BiasModel) -> Array2<f64> {
    let (m, n) = z.dim();
    assert_eq!(m, model.b_user.len(), "row count does not match bias model");
    assert_eq!(n, model.b_item.len(), "column count does not match bias model");
    Array2::from_shape_fn((m, n), |(u, i)| {
        (z[(u, i)] + model.mean_g + model.b_user[u] + model.b_item[i])
            .clamp(RATING_MIN, RATING_MAX)
    })
}

/// Writes the model in a flat text format: one `mean_g` line, then one
/// indexed line per user and item bias.
pub fn save_bias_model(path: &Path, model: &BiasModel) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("mean_g {:e}\n", model.mean_g));
    for (i, b) in model.b_user.iter().enumerate() {
        out.push_str(&format!("u {} {:e}\n", i, b));
    }
    for (i, b) in model.b_item.iter().enumerate() {
        out.push_str(&format!("i {} {:e}\n", i, b));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_bias_model(path: &Path) -> Result<BiasModel> {
    let text = fs::read_to_string(path)?;
    let mut mean_g = None;
    let mut users = Vec::new();
    let mut items = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::parse(path, lineno + 1, msg);
        match fields.as_slice() {
            ["mean_g", v] => mean_g = Some(v.parse().map_err(|_| bad("bad mean_g"))?),
            ["u", idx, v] => {
                let idx: usize = idx.parse().map_err(|_| bad("bad user index"))?;
                users.push((idx, v.parse::<f64>().map_err(|_| bad("bad user bias"))?));
            }
            ["i", idx, v] => {
                let idx: usize = idx.parse().map_err(|_| bad("bad item index"))?;
                items.push((idx, v.parse::<f64>().map_err(|_| bad("bad item bias"))?));
            }
            [] => {}
            _ => return Err(bad("unrecognized line")),
        }
    }
    let mean_g = mean_g.ok_or_else(|| Error::Validation(format!(
        "{}: missing mean_g line",
        path.display()
    )))?;
    let assemble = |pairs: Vec<(usize, f64)>| -> Result<Vec<f64>> {
        let len = pairs.iter().map(|&(i, _)| i + 1).max().unwrap_or(0);
        let mut v = vec![0.0; len];
        for (i, b) in pairs {
            v[i] = b;
        }
        Ok(v)
    };
    Ok(BiasModel {
        mean_g,
        b_user: assemble(users)?,
        b_item: assemble(items)?,
    })
}
