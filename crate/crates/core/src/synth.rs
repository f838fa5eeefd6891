//! Synthetic rating-data generator with planted category structure.
//!
//! Stimuli are grouped into k equal blocks. Each block gets a mean rating
//! vector (rejection-sampled so any two means stay at least
//! `min_separation_sigmas × noise_sigma` apart), each stimulus gets a
//! persistent per-item offset shared by both views, and each view adds its
//! own independent observation noise. The shared offsets are what make
//! individual stimuli — not just categories — alignable across views.

use indexmap::IndexMap;
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::evaluation::CategoryAssignment;
use crate::ingest::RatingMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_stimuli: usize,
    pub k: usize,
    pub n_dims: usize,
    /// Rating scale upper bound; values are clipped into [0, scale].
    pub scale: f64,
    /// Per-view observation noise σ.
    pub noise_sigma: f64,
    /// σ of the per-stimulus offsets shared across views.
    pub item_sigma: f64,
    /// Minimum pairwise distance between category means, in noise σ units.
    pub min_separation_sigmas: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_stimuli: 200,
            k: 10,
            n_dims: 34,
            scale: 9.0,
            noise_sigma: 0.8,
            item_sigma: 2.4,
            min_separation_sigmas: 3.0,
            seed: 77,
        }
    }
}

/// Two rating views of the same planted structure, plus the ground truth.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub view1: RatingMatrix,
    pub view2: RatingMatrix,
    pub categories: CategoryAssignment,
    /// k × n_dims planted category means.
    pub category_means: Array2<f64>,
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    if config.k < 2 {
        return Err(Error::InvalidParameter {
            what: format!("need at least 2 categories, got {}", config.k),
        });
    }
    if config.n_stimuli < config.k || config.n_stimuli % config.k != 0 {
        return Err(Error::InvalidParameter {
            what: format!(
                "{} stimuli cannot split evenly into {} categories",
                config.n_stimuli, config.k
            ),
        });
    }
    if config.n_dims == 0 {
        return Err(Error::InvalidParameter {
            what: "need at least one rating dimension".to_string(),
        });
    }
    if !(config.scale > 0.0) || config.noise_sigma < 0.0 || config.item_sigma < 0.0 {
        return Err(Error::InvalidParameter {
            what: "scale must be positive and sigmas nonnegative".to_string(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (n, k, d) = (config.n_stimuli, config.k, config.n_dims);
    let separation = config.min_separation_sigmas * config.noise_sigma;

    // Means live away from the clip boundaries so noise rarely saturates.
    let (lo, hi) = (0.15 * config.scale, 0.85 * config.scale);
    let mut means = Array2::zeros((k, d));
    for c in 0..k {
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::InvalidParameter {
                    what: format!(
                        "could not place {k} category means ≥ {separation} apart; \
                         lower min_separation_sigmas or noise_sigma"
                    ),
                });
            }
            for j in 0..d {
                means[(c, j)] = rng.gen_range(lo..hi);
            }
            let far_enough = (0..c).all(|prev| {
                let dist2: f64 = (0..d)
                    .map(|j| {
                        let diff = means[(c, j)] - means[(prev, j)];
                        diff * diff
                    })
                    .sum();
                dist2.sqrt() >= separation
            });
            if far_enough {
                break;
            }
        }
    }

    let block = n / k;
    let labels: Vec<usize> = (0..n).map(|i| i / block).collect();

    let item_noise = Normal::new(0.0, config.item_sigma).expect("sigma checked nonnegative");
    let view_noise = Normal::new(0.0, config.noise_sigma).expect("sigma checked nonnegative");
    let mut offsets = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            offsets[(i, j)] = item_noise.sample(&mut rng);
        }
    }
    let draw_view = |rng: &mut ChaCha8Rng| {
        Array2::from_shape_fn((n, d), |(i, j)| {
            let raw = means[(labels[i], j)] + offsets[(i, j)] + view_noise.sample(rng);
            raw.clamp(0.0, config.scale)
        })
    };
    let values1 = draw_view(&mut rng);
    let values2 = draw_view(&mut rng);

    let width = (n.max(2) - 1).to_string().len();
    let stimulus_ids: Vec<String> = (0..n).map(|i| format!("v{i:0width$}")).collect();
    let category_names: Vec<String> = (0..d).map(|j| format!("dim{j:02}")).collect();

    let view1 = RatingMatrix::new(
        stimulus_ids.clone(),
        category_names.clone(),
        values1,
        config.scale,
    )?;
    let view2 = RatingMatrix::new(stimulus_ids.clone(), category_names, values2, config.scale)?;

    let mut category_of = IndexMap::new();
    for (id, &label) in stimulus_ids.iter().zip(labels.iter()) {
        category_of.insert(id.clone(), label);
    }
    let categories = CategoryAssignment::new(stimulus_ids, category_of, k)?;

    Ok(SynthData {
        view1,
        view2,
        categories,
        category_means: means,
    })
}
