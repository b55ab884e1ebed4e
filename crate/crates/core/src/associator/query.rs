use serde::{Deserialize, Serialize};

use crate::detsim::Detection;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::posenc;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Detection,
    Track,
}

/// A query's content part plus the box its positional part is derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectQuery {
    pub content: Vec<f64>,
    pub bbox: BoundingBox,
    pub score: f64,
    pub kind: QueryKind,
}

impl ObjectQuery {
    /// Content plus positional encoding of the current box.
    ///
    /// Always recomputed from `bbox`, never cached.
    pub fn full(&self, temperature: f64) -> Result<Vec<f64>> {
        let pe = posenc::encode_box_position(&self.bbox, self.content.len(), temperature)?;
        Ok(self
            .content
            .iter()
            .zip(&pe.values)
            .map(|(c, p)| c + p)
            .collect())
    }
}

impl From<&Detection> for ObjectQuery {
    fn from(d: &Detection) -> Self {
        ObjectQuery {
            content: d.content.clone(),
            bbox: d.bbox,
            score: d.score,
            kind: QueryKind::Detection,
        }
    }
}

/// Detection queries for one frame, in detector order.
pub fn detection_queries(dets: &[Detection]) -> Vec<ObjectQuery> {
    dets.iter().map(ObjectQuery::from).collect()
}

/// Indices of detection queries kept (`score ≥ τ_q`) and rejected, each in input order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueryPartition {
    pub kept: Vec<usize>,
    pub rejected: Vec<usize>,
}

pub fn filter_detection_queries(dets: &[ObjectQuery], tau_q: f64) -> QueryPartition {
    let mut part = QueryPartition::default();
    for (i, q) in dets.iter().enumerate() {
        debug_assert_eq!(q.kind, QueryKind::Detection);
        if q.score >= tau_q {
            part.kept.push(i);
        } else {
            part.rejected.push(i);
        }
    }
    part
}

/// Indices of the `m` highest-scoring queries among `pool`, best first.
///
/// Equal scores keep their pool order.
pub fn top_by_score(dets: &[ObjectQuery], pool: &[usize], m: usize) -> Vec<usize> {
    let mut order = pool.to_vec();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order.truncate(m);
    order
}

/// `m × d_model` hard negatives: contents of the `m` best-scoring `pool` queries,
/// padded with zero rows when the pool is smaller than `m`.
pub fn build_noisy_queries(pool: &[ObjectQuery], m: usize, d_model: usize) -> Result<Matrix> {
    let indices: Vec<usize> = (0..pool.len()).collect();
    let mut out = Matrix::zeros(m, d_model);
    for (row, &i) in top_by_score(pool, &indices, m).iter().enumerate() {
        let content = &pool[i].content;
        if content.len() != d_model {
            return Err(Error::Shape(format!(
                "noisy query width {} != d_model {d_model}",
                content.len()
            )));
        }
        out.row_mut(row).copy_from_slice(content);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(score: f64, fill: f64) -> ObjectQuery {
        ObjectQuery {
            content: vec![fill; 8],
            bbox: BoundingBox::new(0.5, 0.5, 0.1, 0.1).unwrap(),
            score,
            kind: QueryKind::Detection,
        }
    }

    #[test]
    fn filter_by_threshold() {
        let dets = vec![det(0.9, 0.0), det(0.25, 0.0), det(0.31, 0.0)];
        let p = filter_detection_queries(&dets, 0.3);
        assert_eq!(p.kept, vec![0, 2]);
        assert_eq!(p.rejected, vec![1]);
    }

    #[test]
    fn filter_empty_and_inclusive_boundary() {
        assert_eq!(
            filter_detection_queries(&[], 0.3),
            QueryPartition::default()
        );
        let dets = vec![det(0.3, 0.0), det(0.3, 1.0)];
        let p = filter_detection_queries(&dets, 0.3);
        assert_eq!(p.kept, vec![0, 1]);
        assert!(p.rejected.is_empty());
    }

    #[test]
    fn noisy_queries_take_top_scores_descending() {
        let rejected = vec![det(0.25, 1.0), det(0.29, 2.0), det(0.1, 3.0)];
        let n = build_noisy_queries(&rejected, 2, 8).unwrap();
        assert_eq!(n.row(0), &[2.0; 8]);
        assert_eq!(n.row(1), &[1.0; 8]);
    }

    #[test]
    fn noisy_queries_pad_and_empty() {
        let n = build_noisy_queries(&[], 3, 8).unwrap();
        assert_eq!(n.shape(), (3, 8));
        assert!(n.data().iter().all(|v| *v == 0.0));
        assert_eq!(
            build_noisy_queries(&[det(0.2, 1.0)], 0, 8).unwrap().shape(),
            (0, 8)
        );
    }

    #[test]
    fn full_query_tracks_box_changes() {
        let mut q = det(0.9, 0.0);
        let before = q.full(20.0).unwrap();
        q.bbox.cx = 0.1;
        assert_ne!(before, q.full(20.0).unwrap());
    }
}
