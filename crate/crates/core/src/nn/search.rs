//! Random hyperparameter search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::loss::LossBreakdown;
use super::model::{ArchitectureParams, Family, Model, ModelSpec};
use super::train::{train, TrainConfig};
use super::Example;
use crate::error::{Error, Result};
use crate::graph::{EdgeRelation, FeatureMode};

/// Ranges sampled by [`random_search`]. Integer ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    /// Total layer count, output layer included.
    pub layers: (usize, usize),
    pub hidden: (usize, usize),
    pub heads: (usize, usize),
    /// Clipped to the number of relation types.
    pub bases: (usize, usize),
    pub activations: Vec<Activation>,
    pub learning_rate: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            layers: (2, 6),
            hidden: (16, 128),
            heads: (1, 4),
            bases: (1, 8),
            activations: vec![Activation::Relu, Activation::Tanh],
            learning_rate: (3e-4, 1e-2),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let ranges = [self.layers, self.hidden, self.heads, self.bases];
        let ok = ranges.iter().all(|(lo, hi)| *lo >= 1 && lo <= hi)
            && self.layers.0 >= 2
            && !self.activations.is_empty()
            && self.learning_rate.0 > 0.0
            && self.learning_rate.0 <= self.learning_rate.1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid search space {self:?}")))
        }
    }
}

/// One sampled configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub architecture: ArchitectureParams,
    pub learning_rate: f64,
}

impl Candidate {
    pub fn spec(&self, mode: FeatureMode, num_cameras: usize) -> Result<ModelSpec> {
        ModelSpec::build(&self.architecture, mode, num_cameras)
    }
}

/// Draws one candidate for `family`.
///
/// For GAT the sampled width is shared by the heads, so every head gets
/// `ceil(hidden / heads)` units.
pub fn sample_candidate(space: &SearchSpace, family: Family, rng: &mut impl Rng) -> Candidate {
    let layers = rng.gen_range(space.layers.0..=space.layers.1);
    let hidden = rng.gen_range(space.hidden.0..=space.hidden.1);
    let heads = rng.gen_range(space.heads.0..=space.heads.1);
    let bases = rng.gen_range(space.bases.0..=space.bases.1);
    let activation = space.activations[rng.gen_range(0..space.activations.len())];
    let (lo, hi) = space.learning_rate;
    let learning_rate = (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp();

    let hidden_layers = layers - 1;
    let (hidden, head_hidden, heads) = match family {
        Family::Gat => (vec![hidden.div_ceil(heads); hidden_layers], vec![], heads),
        Family::Mlp => {
            let camera = hidden_layers.div_ceil(2);
            (vec![hidden; camera], vec![hidden; hidden_layers - camera], 1)
        }
        _ => (vec![hidden; hidden_layers], vec![], 1),
    };
    Candidate {
        architecture: ArchitectureParams {
            family,
            hidden,
            head_hidden,
            activation,
            heads,
            bases: bases.min(EdgeRelation::NUM_NEIGHBOR_RELATIONS),
        },
        learning_rate,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trial {
    pub candidate: Candidate,
    pub dev: LossBreakdown,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: Candidate,
    pub best_dev: LossBreakdown,
    pub model: Model,
    pub trials: Vec<Trial>,
}

/// Trains `budget` sampled configurations and keeps the one with the
/// lowest dev global MSE. `base` supplies everything but the learning rate.
#[allow(clippy::too_many_arguments)]
pub fn random_search(
    space: &SearchSpace,
    family: Family,
    mode: FeatureMode,
    num_cameras: usize,
    train_set: &[Example],
    dev_set: &[Example],
    budget: usize,
    base: &TrainConfig,
    seed: u64,
    mut on_trial: impl FnMut(usize, &Trial),
) -> Result<SearchOutcome> {
    space.validate()?;
    if budget == 0 {
        return Err(Error::Config("search budget must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Candidate, LossBreakdown, Model)> = None;
    let mut trials = Vec::with_capacity(budget);
    for i in 0..budget {
        let candidate = sample_candidate(space, family, &mut rng);
        let spec = candidate.spec(mode, num_cameras)?;
        let cfg = TrainConfig {
            learning_rate: candidate.learning_rate,
            seed: seed.wrapping_add(i as u64),
            ..base.clone()
        };
        let outcome = train(&spec, train_set, dev_set, &cfg)?;
        let trial = Trial {
            candidate: candidate.clone(),
            dev: outcome.best_dev,
            epochs_run: outcome.history.len(),
        };
        on_trial(i, &trial);
        if best.as_ref().is_none_or(|(_, d, _)| outcome.best_dev.global < d.global) {
            best = Some((candidate, outcome.best_dev, outcome.model));
        }
        trials.push(trial);
    }
    let (best, best_dev, model) = best.expect("budget >= 1");
    Ok(SearchOutcome {
        best,
        best_dev,
        model,
        trials,
    })
}
