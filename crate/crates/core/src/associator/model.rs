use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bii::{update_detection_queries, update_track_queries, BiiBlock, QuerySet};
use super::config::{AssociatorConfig, NoisySource};
use super::cpa::{box_logits, CpaBlock, Memory};
use super::decoder::DecoderLayer;
use super::query::{filter_detection_queries, top_by_score, ObjectQuery};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::nn::{mean_attention, LayerNorm, Linear, ParamStore};
use crate::posenc;
use crate::tensor::Matrix;

/// A track query as seen by one frame's forward pass.
#[derive(Debug, Clone, Copy)]
pub struct TrackInput {
    /// `1 × d_model` content.
    pub content: Var,
    pub bbox: BoundingBox,
    /// `1 × d_model` EMA history content.
    pub history: Var,
}

/// Head-averaged interaction weights for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMaps {
    /// Kept detections × (kept detections ++ track queries).
    pub detection: Matrix,
    /// Track queries × (kept detections ++ history queries).
    pub track: Matrix,
}

#[derive(Debug, Clone)]
pub struct AuxOutput {
    pub score_logits: Var,
    pub boxes: Var,
}

/// Predictions for one frame. Rows are the track queries in input order,
/// followed by the kept detection queries.
#[derive(Debug, Clone)]
pub struct FrameForward {
    /// Indices (into the input detections) of queries that passed `τ_q`.
    pub kept: Vec<usize>,
    pub n_tracks: usize,
    pub embeddings: Var,
    pub score_logits: Var,
    pub boxes: Var,
    /// Alignment-module outputs; absent when no track queries exist.
    pub aux: Option<AuxOutput>,
    pub attention: Option<AttentionMaps>,
}

impl FrameForward {
    pub fn len(&self) -> usize {
        self.n_tracks + self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct AssociatorModel {
    config: AssociatorConfig,
    pub params: ParamStore,
    det_in: Linear,
    det_norm: LayerNorm,
    mem_in: Linear,
    mem_norm: LayerNorm,
    bii_det: BiiBlock,
    bii_track: BiiBlock,
    cpa: CpaBlock,
    decoder: DecoderLayer,
}

fn encode_boxes(boxes: &[BoundingBox], d_model: usize, temperature: f64) -> Matrix {
    let mut m = Matrix::zeros(boxes.len(), d_model);
    for (i, b) in boxes.iter().enumerate() {
        posenc::write_encoding(b, temperature, m.row_mut(i));
    }
    m
}

fn read_boxes(m: &Matrix) -> Vec<BoundingBox> {
    (0..m.rows())
        .map(|r| {
            let v = m.row(r);
            BoundingBox::clamped(v[0], v[1], v[2], v[3])
        })
        .collect()
}

impl AssociatorModel {
    pub fn new(config: AssociatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let (d, h, f) = (config.d_model, config.n_heads, config.ffn_dim);
        let det_in = Linear::new(&mut params, "input.detection", d, d, &mut rng);
        let det_norm = LayerNorm::new(&mut params, "input.detection_norm", d);
        let mem_in = Linear::new(&mut params, "input.memory", d, d, &mut rng);
        let mem_norm = LayerNorm::new(&mut params, "input.memory_norm", d);
        let learned = config.use_learned_projections;
        let bii_det = BiiBlock::new(&mut params, "bii.detection", d, h, f, learned, &mut rng);
        let bii_track = BiiBlock::new(&mut params, "bii.track", d, h, f, learned, &mut rng);
        let cpa = CpaBlock::new(&mut params, "cpa", d, h, f, config.box_space, &mut rng);
        let decoder = DecoderLayer::new(&mut params, "decoder", d, h, f, &mut rng);
        Ok(AssociatorModel {
            config,
            params,
            det_in,
            det_norm,
            mem_in,
            mem_norm,
            bii_det,
            bii_track,
            cpa,
            decoder,
        })
    }

    /// Test mode: swaps both interaction blocks for the bare single-head
    /// formula (no projections, zero FFN, identity norm).
    pub fn use_literal_interaction(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.config.d_model;
        self.bii_det = BiiBlock::literal(&mut self.params, "bii_literal.detection", d, &mut rng);
        self.bii_track = BiiBlock::literal(&mut self.params, "bii_literal.track", d, &mut rng);
    }

    pub fn config(&self) -> &AssociatorConfig {
        &self.config
    }

    pub fn detection_block(&self) -> &BiiBlock {
        &self.bii_det
    }

    pub fn track_block(&self) -> &BiiBlock {
        &self.bii_track
    }

    pub fn cpa(&self) -> &CpaBlock {
        &self.cpa
    }

    pub fn decoder(&self) -> &DecoderLayer {
        &self.decoder
    }

    fn embed_detections(&self, g: &mut Graph, dets: &[ObjectQuery], indices: &[usize]) -> Var {
        let d = self.config.d_model;
        let rows: Vec<Vec<f64>> = indices.iter().map(|&i| dets[i].content.clone()).collect();
        let raw = g.constant(Matrix::from_rows(&rows, d));
        let x = self.det_in.forward(g, &self.params, raw);
        self.det_norm.forward(g, &self.params, x)
    }

    fn noisy_values(
        &self,
        g: &mut Graph,
        dets: &[ObjectQuery],
        rejected: &[usize],
        m: usize,
    ) -> Var {
        let d = self.config.d_model;
        let pool: Vec<usize> = match self.config.noisy_source {
            NoisySource::Zeros => Vec::new(),
            NoisySource::Hard => rejected.to_vec(),
            NoisySource::AllDetections => (0..dets.len()).collect(),
        };
        let picked = top_by_score(dets, &pool, m);
        let padding = m - picked.len();
        if picked.is_empty() {
            return g.constant(Matrix::zeros(m, d));
        }
        let embedded = self.embed_detections(g, dets, &picked);
        if padding == 0 {
            embedded
        } else {
            let zeros = g.constant(Matrix::zeros(padding, d));
            g.concat_rows(&[embedded, zeros])
        }
    }

    /// One frame of association and decoding.
    pub fn forward_frame(
        &self,
        g: &mut Graph,
        dets: &[ObjectQuery],
        tracks: &[TrackInput],
        features: &Matrix,
        positions: &Matrix,
        capture_attention: bool,
    ) -> Result<FrameForward> {
        let d = self.config.d_model;
        let temp = self.config.temperature;
        if features.cols() != d || positions.shape() != features.shape() {
            return Err(Error::Shape(format!(
                "feature tokens {:?} / positions {:?} for d_model {d}",
                features.shape(),
                positions.shape()
            )));
        }
        if let Some(q) = dets.iter().find(|q| q.content.len() != d) {
            return Err(Error::Shape(format!(
                "detection content width {} != {d}",
                q.content.len()
            )));
        }
        for t in tracks {
            if g.shape(t.content) != (1, d) || g.shape(t.history) != (1, d) {
                return Err(Error::Shape(
                    "track content/history must be 1 × d_model".into(),
                ));
            }
        }

        let part = filter_detection_queries(dets, self.config.tau_q);
        let n_tracks = tracks.len();
        let n_kept = part.kept.len();
        if n_tracks + n_kept == 0 {
            let e = g.constant(Matrix::zeros(0, d));
            return Ok(FrameForward {
                kept: part.kept,
                n_tracks,
                embeddings: e,
                score_logits: g.constant(Matrix::zeros(0, 1)),
                boxes: g.constant(Matrix::zeros(0, 4)),
                aux: None,
                attention: None,
            });
        }

        let features = g.constant(features.clone());
        let projected = self.mem_in.forward(g, &self.params, features);
        let memory = Memory {
            features: self.mem_norm.forward(g, &self.params, projected),
            positions: g.constant(positions.clone()),
        };

        let det_boxes: Vec<BoundingBox> = part.kept.iter().map(|&i| dets[i].bbox).collect();
        let det_set = (n_kept > 0).then(|| QuerySet {
            content: self.embed_detections(g, dets, &part.kept),
            position: g.constant(encode_boxes(&det_boxes, d, temp)),
        });

        if tracks.is_empty() {
            // Nothing to interact with: decode the detection queries directly.
            let dq = det_set.expect("non-empty");
            let ref_logits = g.constant(box_logits(&det_boxes));
            let out =
                self.decoder
                    .forward(g, &self.params, dq.content, dq.position, ref_logits, memory);
            return Ok(FrameForward {
                kept: part.kept,
                n_tracks,
                embeddings: out.embeddings,
                score_logits: out.score_logits,
                boxes: out.boxes,
                aux: None,
                attention: None,
            });
        }

        let track_boxes: Vec<BoundingBox> = tracks.iter().map(|t| t.bbox).collect();
        let contents: Vec<Var> = tracks.iter().map(|t| t.content).collect();
        let histories: Vec<Var> = tracks.iter().map(|t| t.history).collect();
        let track_set = QuerySet {
            content: g.concat_rows(&contents),
            position: g.constant(encode_boxes(&track_boxes, d, temp)),
        };
        let history = g.concat_rows(&histories);

        let det_update = match det_set {
            Some(ds) => {
                let noisy = self.noisy_values(g, dets, &part.rejected, n_tracks);
                Some(update_detection_queries(
                    g,
                    &self.params,
                    &self.bii_det,
                    ds,
                    Some(track_set),
                    noisy,
                )?)
            }
            None => None,
        };
        let track_update = update_track_queries(
            g,
            &self.params,
            &self.bii_track,
            track_set,
            history,
            det_set,
        )?;

        let attention = capture_attention.then(|| AttentionMaps {
            detection: det_update
                .as_ref()
                .map(|u| mean_attention(g, &u.weights))
                .unwrap_or_else(|| Matrix::zeros(0, n_tracks)),
            track: mean_attention(g, &track_update.weights),
        });

        let mut all_boxes = track_boxes;
        all_boxes.extend_from_slice(&det_boxes);
        let interacted = match &det_update {
            Some(u) => g.concat_rows(&[track_update.o3, u.o3]),
            None => track_update.o3,
        };
        let pos = g.constant(encode_boxes(&all_boxes, d, temp));
        let aligned = self
            .cpa
            .forward(g, &self.params, interacted, pos, &all_boxes, memory);
        let aux_scores = self.decoder.score(g, &self.params, aligned.contents);

        // The decoder references the aligned boxes without differentiating through them.
        let aligned_values = g.stop_gradient_value(aligned.boxes);
        let aligned_boxes = read_boxes(&aligned_values);
        let ref_pos = g.constant(encode_boxes(&aligned_boxes, d, temp));
        let ref_logits = g.constant(box_logits(&aligned_boxes));
        let out = self.decoder.forward(
            g,
            &self.params,
            aligned.contents,
            ref_pos,
            ref_logits,
            memory,
        );

        Ok(FrameForward {
            kept: part.kept,
            n_tracks,
            embeddings: out.embeddings,
            score_logits: out.score_logits,
            boxes: out.boxes,
            aux: Some(AuxOutput {
                score_logits: aux_scores,
                boxes: aligned.boxes,
            }),
            attention,
        })
    }
}
