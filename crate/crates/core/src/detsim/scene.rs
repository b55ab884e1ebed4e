use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionFamily {
    Linear,
    Sinusoidal,
    /// Objects move in pairs that meet head-on and pass through each other.
    Crossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub min_objects: usize,
    pub max_objects: usize,
    pub n_frames: usize,
    pub motion: MotionFamily,
    /// Per-frame chance that a visible object starts a random occlusion episode.
    pub occlusion_rate: f64,
    pub max_occlusion_frames: usize,
    /// Hide an object when a nearer object covers at least this fraction of it; 0 disables.
    pub depth_occlusion_coverage: f64,
    /// Fraction of non-crossing objects that enter late or leave early.
    pub partial_lifespan_fraction: f64,
    /// Mean per-frame displacement in normalized units.
    pub speed: f64,
    pub min_size: f64,
    pub max_size: f64,
    pub d_app: usize,
    pub image_width: u32,
    pub image_height: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            min_objects: 3,
            max_objects: 6,
            n_frames: 30,
            motion: MotionFamily::Sinusoidal,
            occlusion_rate: 0.0,
            max_occlusion_frames: 4,
            depth_occlusion_coverage: 0.0,
            partial_lifespan_fraction: 0.0,
            speed: 0.01,
            min_size: 0.08,
            max_size: 0.16,
            d_app: 16,
            image_width: 1280,
            image_height: 720,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::InvalidArgument("n_frames must be positive".into()));
        }
        if self.min_objects == 0 || self.max_objects < self.min_objects {
            return Err(Error::InvalidArgument(format!(
                "object count range [{}, {}] must be positive and ordered",
                self.min_objects, self.max_objects
            )));
        }
        if !(0.0..=1.0).contains(&self.occlusion_rate)
            || !(0.0..=1.0).contains(&self.depth_occlusion_coverage)
            || !(0.0..=1.0).contains(&self.partial_lifespan_fraction)
        {
            return Err(Error::InvalidArgument("rates must lie in [0, 1]".into()));
        }
        if !(self.min_size > 0.0 && self.max_size >= self.min_size && self.max_size <= 0.5) {
            return Err(Error::InvalidArgument(
                "object size range must lie in (0, 0.5]".into(),
            ));
        }
        if self.d_app == 0 || self.image_width == 0 || self.image_height == 0 {
            return Err(Error::InvalidArgument(
                "d_app and image size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub id: u32,
    pub bbox: BoundingBox,
    pub visible: bool,
}

/// Per-frame objects (alive ones only, sorted by id) plus per-identity appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSequence {
    pub frames: Vec<Vec<GtObject>>,
    pub appearance: BTreeMap<u32, Vec<f64>>,
    pub seed: u64,
    pub image_width: u32,
    pub image_height: u32,
}

impl GroundTruthSequence {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn identities(&self) -> Vec<u32> {
        self.appearance.keys().copied().collect()
    }
}

struct Track {
    size: (f64, f64),
    start: usize,
    end: usize,
    path: Box<dyn Fn(f64) -> (f64, f64)>,
}

fn random_unit(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    (a.cos(), a.sin())
}

/// Folds a coordinate back into `[lo, hi]` by mirror reflection.
fn reflect(v: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    let t = (v - lo).rem_euclid(2.0 * span);
    lo + if t > span { 2.0 * span - t } else { t }
}

pub fn generate_sequence(config: &SceneConfig, seed: u64) -> Result<GroundTruthSequence> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_objects = rng.random_range(config.min_objects..=config.max_objects);
    let n = config.n_frames;
    let mut tracks: Vec<Track> = Vec::with_capacity(n_objects);

    let crossing_pairs = if config.motion == MotionFamily::Crossing {
        n_objects / 2
    } else {
        0
    };
    for _ in 0..crossing_pairs {
        let w = rng.random_range(config.min_size..=config.max_size);
        let h = rng.random_range(config.min_size..=config.max_size) * 1.5;
        let (h, w) = (h.min(0.5), w);
        let meet_frame = if n > 2 {
            rng.random_range(n / 3..=(2 * n / 3).max(n / 3))
        } else {
            0
        };
        let speed = config.speed * rng.random_range(0.8..1.6);
        let (dx, dy) = random_unit(&mut rng);
        // Keep the whole path inside the frame: meet near the middle.
        let reach = speed * n as f64;
        let margin = (0.5 - reach.min(0.45)).max(0.05);
        let mx = rng.random_range(0.5 - margin..=0.5 + margin);
        let my = rng.random_range(0.5 - margin..=0.5 + margin);
        let offset = rng.random_range(-0.15..0.15) * w;
        for side in [1.0, -1.0] {
            let (ox, oy) = (-dy * offset * side, dx * offset * side);
            let scale = 1.0 + rng.random_range(-0.05..0.05);
            tracks.push(Track {
                size: (w * scale, h * scale),
                start: 0,
                end: n,
                path: Box::new(move |t| {
                    let s = side * speed * (t - meet_frame as f64);
                    (
                        reflect(mx + ox + dx * s, 0.02, 0.98),
                        reflect(my + oy + dy * s, 0.02, 0.98),
                    )
                }),
            });
        }
    }

    while tracks.len() < n_objects {
        let w = rng.random_range(config.min_size..=config.max_size);
        let h = (rng.random_range(config.min_size..=config.max_size) * 1.5).min(0.5);
        let (x0, y0) = (rng.random_range(0.1..0.9), rng.random_range(0.1..0.9));
        let speed = config.speed * rng.random_range(0.5..1.5);
        let (dx, dy) = random_unit(&mut rng);
        let (start, end) = if rng.random_bool(config.partial_lifespan_fraction) && n >= 4 {
            if rng.random_bool(0.5) {
                (rng.random_range(1..n / 2), n)
            } else {
                (0, rng.random_range(n / 2..n))
            }
        } else {
            (0, n)
        };
        let path: Box<dyn Fn(f64) -> (f64, f64)> = match config.motion {
            MotionFamily::Sinusoidal => {
                let amp = rng.random_range(0.5..1.5) * 4.0 * config.speed / 0.3;
                let omega = rng.random_range(0.15..0.45);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                Box::new(move |t| {
                    let wave = amp * (omega * t + phase).sin();
                    (
                        reflect(x0 + dx * speed * t - dy * wave, 0.02, 0.98),
                        reflect(y0 + dy * speed * t + dx * wave, 0.02, 0.98),
                    )
                })
            }
            _ => Box::new(move |t| {
                (
                    reflect(x0 + dx * speed * t, 0.02, 0.98),
                    reflect(y0 + dy * speed * t, 0.02, 0.98),
                )
            }),
        };
        tracks.push(Track {
            size: (w, h),
            start,
            end,
            path,
        });
    }

    let mut appearance = BTreeMap::new();
    for id in 1..=tracks.len() as u32 {
        let v: Vec<f64> = (0..config.d_app)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        appearance.insert(id, v);
    }

    let mut frames: Vec<Vec<GtObject>> = (0..n)
        .map(|t| {
            tracks
                .iter()
                .enumerate()
                .filter(|(_, tr)| t >= tr.start && t < tr.end)
                .map(|(k, tr)| {
                    let (cx, cy) = (tr.path)(t as f64);
                    GtObject {
                        id: k as u32 + 1,
                        bbox: BoundingBox::clamped(cx, cy, tr.size.0, tr.size.1),
                        visible: true,
                    }
                })
                .collect()
        })
        .collect();

    if config.occlusion_rate > 0.0 {
        let mut remaining = vec![0usize; tracks.len() + 1];
        for frame in frames.iter_mut() {
            for obj in frame.iter_mut() {
                let slot = &mut remaining[obj.id as usize];
                if *slot == 0 && rng.random_bool(config.occlusion_rate) {
                    *slot = rng.random_range(1..=config.max_occlusion_frames.max(1));
                }
                if *slot > 0 {
                    obj.visible = false;
                    *slot -= 1;
                }
            }
        }
    }

    if config.depth_occlusion_coverage > 0.0 {
        for frame in frames.iter_mut() {
            let boxes: Vec<BoundingBox> = frame.iter().map(|o| o.bbox).collect();
            for (i, obj) in frame.iter_mut().enumerate() {
                let bottom = boxes[i].cy + 0.5 * boxes[i].h;
                let hidden = boxes.iter().enumerate().any(|(j, other)| {
                    j != i
                        && other.cy + 0.5 * other.h > bottom
                        && coverage(&boxes[i], other) >= config.depth_occlusion_coverage
                });
                if hidden {
                    obj.visible = false;
                }
            }
        }
    }

    Ok(GroundTruthSequence {
        frames,
        appearance,
        seed,
        image_width: config.image_width,
        image_height: config.image_height,
    })
}

/// Fraction of `target` covered by `occluder`.
fn coverage(target: &BoundingBox, occluder: &BoundingBox) -> f64 {
    let (a, b) = (target.to_xyxy(), occluder.to_xyxy());
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    iw * ih / target.area()
}

/// Frames where two objects overlap above `threshold` IoU, as `(frame, id_a, id_b)`.
pub fn overlap_events(seq: &GroundTruthSequence, threshold: f64) -> Vec<(usize, u32, u32)> {
    let mut out = Vec::new();
    for (t, frame) in seq.frames.iter().enumerate() {
        for (i, a) in frame.iter().enumerate() {
            for b in &frame[i + 1..] {
                if iou(&a.bbox, &b.bbox) > threshold {
                    out.push((t, a.id, b.id));
                }
            }
        }
    }
    out
}
