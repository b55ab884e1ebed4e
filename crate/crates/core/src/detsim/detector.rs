use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::scene::{GroundTruthSequence, GtObject};
use crate::error::{Error, Result};
use crate::geometry::{inverse_sigmoid, BoundingBox};
use crate::posenc;
use crate::tensor::Matrix;

/// Fixed properties of the emulated frozen detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub d_model: usize,
    pub d_app: usize,
    pub grid_w: usize,
    pub grid_h: usize,
    pub temperature: f64,
    /// Seeds the frozen projection weights; fixed across sequences.
    pub weights_seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            d_model: 64,
            d_app: 16,
            grid_w: 8,
            grid_h: 8,
            temperature: posenc::DEFAULT_TEMPERATURE,
            weights_seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Std-dev of additive Gaussian noise on each normalized box coordinate.
    pub box_jitter: f64,
    pub miss_prob: f64,
    /// Chance that an occluded object still yields a detection.
    pub occluded_detect_prob: f64,
    /// Expected false positives per frame (Poisson).
    pub fp_rate: f64,
    /// Std-dev of the per-detection appearance perturbation.
    pub appearance_noise: f64,
    pub true_score_beta: (f64, f64),
    pub fp_score_beta: (f64, f64),
    pub fp_min_size: f64,
    pub fp_max_size: f64,
    /// Std-dev of the background texture in the feature grid.
    pub background_noise: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            box_jitter: 0.003,
            miss_prob: 0.03,
            occluded_detect_prob: 0.0,
            fp_rate: 0.5,
            appearance_noise: 0.3,
            true_score_beta: (8.0, 2.0),
            fp_score_beta: (2.0, 5.0),
            fp_min_size: 0.06,
            fp_max_size: 0.16,
            background_noise: 0.1,
        }
    }
}

impl NoiseConfig {
    /// No jitter, misses, or false positives; true scores sit near 1.
    pub fn clean() -> Self {
        NoiseConfig {
            box_jitter: 0.0,
            miss_prob: 0.0,
            fp_rate: 0.0,
            true_score_beta: (200.0, 1.0),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        if !(prob(self.miss_prob) && prob(self.occluded_detect_prob)) {
            return Err(Error::InvalidArgument(
                "detection probabilities must lie in [0, 1]".into(),
            ));
        }
        if self.box_jitter < 0.0
            || self.fp_rate < 0.0
            || self.appearance_noise < 0.0
            || self.background_noise < 0.0
        {
            return Err(Error::InvalidArgument(
                "noise magnitudes must be non-negative".into(),
            ));
        }
        let beta_ok = |(a, b): (f64, f64)| a > 0.0 && b > 0.0;
        if !(beta_ok(self.true_score_beta) && beta_ok(self.fp_score_beta)) {
            return Err(Error::InvalidArgument(
                "score Beta parameters must be positive".into(),
            ));
        }
        if !(self.fp_min_size > 0.0
            && self.fp_max_size >= self.fp_min_size
            && self.fp_max_size <= 1.0)
        {
            return Err(Error::InvalidArgument(
                "false-positive size range invalid".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
    pub content: Vec<f64>,
}

/// Everything the associator sees of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameObservation {
    pub detections: Vec<Detection>,
    /// Global feature tokens `F`, one row per grid cell.
    pub features: Matrix,
    /// 2D spatial encodings `P` of the same cells.
    pub positions: Matrix,
}

impl FrameObservation {
    pub fn n_tokens(&self) -> usize {
        self.features.rows()
    }
}

// Detection descriptor layout: appearance, box, logit box, score.
const BOX_FEATURES: usize = 9;

/// Emulates a frozen detector: fixed random projections from latent
/// appearance and box geometry into `d_model`-wide embeddings.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    query_projection: Matrix,
    feature_projection: Matrix,
    positions: Matrix,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        posenc::check_dims(config.d_model, config.temperature)?;
        if config.d_app == 0 || config.grid_w == 0 || config.grid_h == 0 {
            return Err(Error::InvalidArgument(
                "d_app and grid size must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.weights_seed);
        let mut gaussian = |rows: usize, cols: usize| {
            let scale = 1.0 / (rows as f64).sqrt();
            Matrix::from_vec(
                rows,
                cols,
                (0..rows * cols)
                    .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            )
        };
        let query_projection = gaussian(config.d_app + BOX_FEATURES, config.d_model);
        let feature_projection = gaussian(config.d_app + 1, config.d_model);
        let cells = posenc::encode_grid(
            config.grid_w,
            config.grid_h,
            config.d_model,
            config.temperature,
        )?;
        let rows: Vec<Vec<f64>> = cells.into_iter().map(|p| p.values).collect();
        let positions = Matrix::from_rows(&rows, config.d_model);
        Ok(Detector {
            config,
            query_projection,
            feature_projection,
            positions,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn positions(&self) -> &Matrix {
        &self.positions
    }

    fn embed(&self, appearance: &[f64], bbox: &BoundingBox, score: f64) -> Vec<f64> {
        let mut x = appearance.to_vec();
        x.extend(bbox.to_array().map(|v| 2.0 * v));
        x.extend(bbox.to_array().map(|v| 0.25 * inverse_sigmoid(v)));
        x.push(2.0 * score - 1.0);
        Matrix::row_vector(&x)
            .matmul(&self.query_projection)
            .into_data()
    }

    /// Runs the detector on one frame of ground truth.
    pub fn detect(
        &self,
        objects: &[GtObject],
        appearance: &BTreeMap<u32, Vec<f64>>,
        noise: &NoiseConfig,
        seed: u64,
    ) -> Result<FrameObservation> {
        noise.validate()?;
        let d_app = self.config.d_app;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jitter = Normal::new(0.0, noise.box_jitter.max(0.0)).expect("valid std-dev");
        let app_noise = Normal::new(0.0, noise.appearance_noise).expect("valid std-dev");
        let true_score =
            Beta::new(noise.true_score_beta.0, noise.true_score_beta.1).expect("positive beta");
        let fp_score =
            Beta::new(noise.fp_score_beta.0, noise.fp_score_beta.1).expect("positive beta");

        let mut detections = Vec::new();
        for obj in objects {
            let app = appearance.get(&obj.id).ok_or_else(|| {
                Error::InvalidArgument(format!("no appearance for identity {}", obj.id))
            })?;
            if app.len() != d_app {
                return Err(Error::Shape(format!(
                    "appearance width {} != {d_app}",
                    app.len()
                )));
            }
            let keep = if obj.visible {
                !rng.random_bool(noise.miss_prob)
            } else {
                rng.random_bool(noise.occluded_detect_prob)
            };
            if !keep {
                continue;
            }
            let b = obj.bbox;
            let bbox = if noise.box_jitter > 0.0 {
                BoundingBox::clamped(
                    b.cx + jitter.sample(&mut rng),
                    b.cy + jitter.sample(&mut rng),
                    b.w + jitter.sample(&mut rng),
                    b.h + jitter.sample(&mut rng),
                )
            } else {
                b
            };
            let visibility = if obj.visible { 1.0 } else { 0.5 };
            let score = true_score.sample(&mut rng) * visibility;
            let noisy: Vec<f64> = app.iter().map(|a| a + app_noise.sample(&mut rng)).collect();
            detections.push(Detection {
                bbox,
                score,
                content: self.embed(&noisy, &bbox, score),
            });
        }

        let n_fp = if noise.fp_rate > 0.0 {
            Poisson::new(noise.fp_rate)
                .expect("positive rate")
                .sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..n_fp {
            let bbox = BoundingBox::clamped(
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
                rng.random_range(noise.fp_min_size..=noise.fp_max_size),
                rng.random_range(noise.fp_min_size..=noise.fp_max_size),
            );
            let score = fp_score.sample(&mut rng);
            let fresh: Vec<f64> = (0..d_app).map(|_| rng.sample(StandardNormal)).collect();
            detections.push(Detection {
                bbox,
                score,
                content: self.embed(&fresh, &bbox, score),
            });
        }
        detections.shuffle(&mut rng);

        let features = self.rasterize(objects, appearance, noise, &mut rng);
        Ok(FrameObservation {
            detections,
            features,
            positions: self.positions.clone(),
        })
    }

    // Per-cell occupancy and coverage-weighted appearance, projected to d_model.
    fn rasterize(
        &self,
        objects: &[GtObject],
        appearance: &BTreeMap<u32, Vec<f64>>,
        noise: &NoiseConfig,
        rng: &mut ChaCha8Rng,
    ) -> Matrix {
        let (gw, gh, d_app) = (self.config.grid_w, self.config.grid_h, self.config.d_app);
        let cells = posenc::grid_cells(gw, gh);
        let mut raw = Matrix::zeros(cells.len(), d_app + 1);
        for (c, cell) in cells.iter().enumerate() {
            let cb = cell.to_xyxy();
            let mut occupancy = 0.0;
            let mut pooled = vec![0.0; d_app];
            for obj in objects.iter().filter(|o| o.visible) {
                let ob = obj.bbox.to_xyxy();
                let iw = (cb[2].min(ob[2]) - cb[0].max(ob[0])).max(0.0);
                let ih = (cb[3].min(ob[3]) - cb[1].max(ob[1])).max(0.0);
                let frac = iw * ih / cell.area();
                if frac <= 0.0 {
                    continue;
                }
                occupancy += frac;
                for (p, a) in pooled.iter_mut().zip(&appearance[&obj.id]) {
                    *p += frac * a;
                }
            }
            let row = raw.row_mut(c);
            if occupancy > 0.0 {
                for (r, p) in row.iter_mut().zip(&pooled) {
                    *r = p / occupancy.max(1.0);
                }
            }
            row[d_app] = occupancy.min(1.0);
        }
        let mut features = raw.matmul(&self.feature_projection);
        if noise.background_noise > 0.0 {
            let bg = Normal::new(0.0, noise.background_noise).expect("valid std-dev");
            for v in features.data_mut() {
                *v += bg.sample(rng);
            }
        }
        features
    }

    /// Detects every frame, deriving per-frame seeds from `seed`.
    pub fn detect_sequence(
        &self,
        seq: &GroundTruthSequence,
        noise: &NoiseConfig,
        seed: u64,
    ) -> Result<Vec<FrameObservation>> {
        seq.frames
            .iter()
            .enumerate()
            .map(|(t, frame)| self.detect(frame, &seq.appearance, noise, frame_seed(seed, t)))
            .collect()
    }
}

pub fn frame_seed(seed: u64, frame: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((frame as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03))
}
