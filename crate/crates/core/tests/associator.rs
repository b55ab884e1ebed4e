use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tbdq_core::associator::checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint};
use tbdq_core::associator::cpa::{box_logits, Memory};
use tbdq_core::associator::{
    AssociatorConfig, AssociatorModel, BoxSpace, NoisySource, ObjectQuery, QueryKind, TrackInput,
};
use tbdq_core::autograd::Graph;
use tbdq_core::{BoundingBox, Matrix};

const TOKENS: usize = 6;

fn small_config() -> AssociatorConfig {
    AssociatorConfig {
        d_model: 16,
        n_heads: 2,
        ffn_dim: 24,
        ..AssociatorConfig::default()
    }
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
}

fn random_box(rng: &mut impl Rng) -> BoundingBox {
    BoundingBox::new(
        rng.random_range(0.2..0.8),
        rng.random_range(0.2..0.8),
        rng.random_range(0.05..0.2),
        rng.random_range(0.05..0.2),
    )
    .unwrap()
}

fn random_dets(rng: &mut impl Rng, n: usize, d: usize) -> Vec<ObjectQuery> {
    (0..n)
        .map(|_| ObjectQuery {
            content: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bbox: random_box(rng),
            score: rng.random_range(0.05..1.0),
            kind: QueryKind::Detection,
        })
        .collect()
}

fn random_tracks(g: &mut Graph, rng: &mut impl Rng, n: usize, d: usize) -> Vec<TrackInput> {
    (0..n)
        .map(|_| TrackInput {
            content: g.constant(random_matrix(rng, 1, d)),
            bbox: random_box(rng),
            history: g.constant(random_matrix(rng, 1, d)),
        })
        .collect()
}

fn memory(rng: &mut impl Rng, d: usize) -> (Matrix, Matrix) {
    (random_matrix(rng, TOKENS, d), random_matrix(rng, TOKENS, d))
}

#[test]
fn zero_box_update_keeps_boxes_in_both_spaces() {
    for space in [BoxSpace::InverseSigmoid, BoxSpace::Literal] {
        let cfg = AssociatorConfig {
            box_space: space,
            ..small_config()
        };
        let model = AssociatorModel::new(cfg, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut g = Graph::new();
        let mut dets = random_dets(&mut rng, 4, 16);
        for q in &mut dets {
            q.score = 0.9;
        }
        let tracks = random_tracks(&mut g, &mut rng, 3, 16);
        let (f, p) = memory(&mut rng, 16);
        let out = model
            .forward_frame(&mut g, &dets, &tracks, &f, &p, false)
            .unwrap();
        let aux = out.aux.expect("tracks present");
        let boxes = g.value(aux.boxes);
        let expected: Vec<BoundingBox> = tracks
            .iter()
            .map(|t| t.bbox)
            .chain(dets.iter().map(|q| q.bbox))
            .collect();
        assert_eq!(boxes.rows(), expected.len());
        for (r, b) in expected.iter().enumerate() {
            for (c, v) in b.to_array().iter().enumerate() {
                assert!((boxes.get(r, c) - v).abs() < 1e-9, "{space:?} row {r}");
            }
        }
    }
}

#[test]
fn empty_frame_gives_empty_outputs() {
    let model = AssociatorModel::new(small_config(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (f, p) = memory(&mut rng, 16);
    let mut g = Graph::new();
    let out = model.forward_frame(&mut g, &[], &[], &f, &p, true).unwrap();
    assert!(out.is_empty());
    assert_eq!(g.shape(out.score_logits), (0, 1));
    assert_eq!(g.shape(out.boxes), (0, 4));
}

#[test]
fn all_detections_rejected_with_tracks_still_runs() {
    let model = AssociatorModel::new(small_config(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut g = Graph::new();
    let mut dets = random_dets(&mut rng, 3, 16);
    for q in &mut dets {
        q.score = 0.1;
    }
    let tracks = random_tracks(&mut g, &mut rng, 2, 16);
    let (f, p) = memory(&mut rng, 16);
    let out = model
        .forward_frame(&mut g, &dets, &tracks, &f, &p, true)
        .unwrap();
    assert!(out.kept.is_empty());
    assert_eq!(g.shape(out.boxes), (2, 4));
    let maps = out.attention.unwrap();
    assert_eq!(maps.detection.rows(), 0);
    assert_eq!(maps.track.shape(), (2, 2));
}

#[test]
fn first_frame_decodes_detections_directly() {
    let model = AssociatorModel::new(small_config(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut dets = random_dets(&mut rng, 5, 16);
    dets[0].score = 0.3;
    dets[1].score = 0.29;
    let (f, p) = memory(&mut rng, 16);
    let mut g = Graph::new();
    let out = model
        .forward_frame(&mut g, &dets, &[], &f, &p, false)
        .unwrap();
    let expected: Vec<usize> = (0..5).filter(|&i| dets[i].score >= 0.3).collect();
    assert_eq!(out.kept, expected);
    assert!(out.kept.contains(&0) && !out.kept.contains(&1));
    assert!(out.aux.is_none());
    assert_eq!(g.shape(out.boxes), (expected.len(), 4));
}

#[test]
fn zero_score_head_gives_half() {
    let mut model = AssociatorModel::new(small_config(), 2).unwrap();
    let head = model.decoder().score_head().clone();
    for id in [head.weight, head.bias] {
        let (r, c) = model.params.get(id).shape();
        *model.params.get_mut(id) = Matrix::zeros(r, c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut g = Graph::new();
    let dets = random_dets(&mut rng, 4, 16);
    let tracks = random_tracks(&mut g, &mut rng, 2, 16);
    let (f, p) = memory(&mut rng, 16);
    let out = model
        .forward_frame(&mut g, &dets, &tracks, &f, &p, false)
        .unwrap();
    let scores = g.sigmoid(out.score_logits);
    assert!(g.value(scores).data().iter().all(|s| *s == 0.5));
}

#[test]
fn initial_scores_start_at_focal_prior() {
    let model = AssociatorModel::new(small_config(), 2).unwrap();
    let id = model.decoder().score_head().bias;
    let p = 1.0 / (1.0 + (-model.params.get(id).get(0, 0)).exp());
    assert!((p - 0.01).abs() < 1e-9);
}

#[test]
fn decoder_is_permutation_equivariant() {
    let model = AssociatorModel::new(small_config(), 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 5;
    let contents = random_matrix(&mut rng, n, 16);
    let pos = random_matrix(&mut rng, n, 16);
    let boxes: Vec<BoundingBox> = (0..n).map(|_| random_box(&mut rng)).collect();
    let (f, p) = memory(&mut rng, 16);
    let perm = [3, 0, 4, 1, 2];

    let run = |order: &[usize]| {
        let mut g = Graph::new();
        let pick = |m: &Matrix| {
            Matrix::from_rows(
                &order.iter().map(|&i| m.row(i).to_vec()).collect::<Vec<_>>(),
                m.cols(),
            )
        };
        let c = g.constant(pick(&contents));
        let q = g.constant(pick(&pos));
        let bx: Vec<BoundingBox> = order.iter().map(|&i| boxes[i]).collect();
        let r = g.constant(box_logits(&bx));
        let mem = Memory {
            features: g.constant(f.clone()),
            positions: g.constant(p.clone()),
        };
        let out = model.decoder().forward(&mut g, &model.params, c, q, r, mem);
        (
            g.value(out.score_logits).clone(),
            g.value(out.boxes).clone(),
        )
    };
    let identity: Vec<usize> = (0..n).collect();
    let (s0, b0) = run(&identity);
    let (s1, b1) = run(&perm);
    for (row, &src) in perm.iter().enumerate() {
        assert!((s1.get(row, 0) - s0.get(src, 0)).abs() < 1e-12);
        for c in 0..4 {
            assert!((b1.get(row, c) - b0.get(src, c)).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let model = AssociatorModel::new(small_config(), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..20 {
        let mut g = Graph::new();
        let n_det = rng.random_range(0..6);
        let n_trk = rng.random_range(1..5);
        let dets = random_dets(&mut rng, n_det, 16);
        let tracks = random_tracks(&mut g, &mut rng, n_trk, 16);
        let (f, p) = memory(&mut rng, 16);
        let out = model
            .forward_frame(&mut g, &dets, &tracks, &f, &p, true)
            .unwrap();
        let maps = out.attention.unwrap();
        for m in [&maps.detection, &maps.track] {
            for r in 0..m.rows() {
                let s: f64 = m.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-6, "trial {trial}");
            }
        }
        assert_eq!(maps.detection.cols(), out.kept.len() + n_trk);
        assert_eq!(maps.track.cols(), out.kept.len() + n_trk);
    }
}

#[test]
fn interaction_branches_have_separate_parameters() {
    let model = AssociatorModel::new(small_config(), 0).unwrap();
    let det: Vec<&str> = model
        .params
        .iter()
        .map(|(n, _)| n)
        .filter(|n| n.starts_with("bii.detection."))
        .collect();
    let trk: Vec<&str> = model
        .params
        .iter()
        .map(|(n, _)| n)
        .filter(|n| n.starts_with("bii.track."))
        .collect();
    assert!(!det.is_empty());
    assert_eq!(det.len(), trk.len());
    // Perturbing one branch leaves the other branch's tensors untouched.
    let mut perturbed = model.clone();
    for id in perturbed.params.ids().collect::<Vec<_>>() {
        if perturbed.params.name(id).starts_with("bii.detection.") {
            let m = perturbed.params.get(id).map(|v| v + 1.0);
            *perturbed.params.get_mut(id) = m;
        }
    }
    for (name, m) in perturbed.params.iter() {
        if name.starts_with("bii.track.") {
            let orig = model.params.get(model.params.find(name).unwrap());
            assert_eq!(orig, m);
        }
    }
}

#[test]
fn noisy_source_changes_detection_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut dets = random_dets(&mut rng, 5, 16);
    dets[0].score = 0.9;
    dets[1].score = 0.8;
    dets[2].score = 0.2;
    dets[3].score = 0.1;
    dets[4].score = 0.05;
    let (f, p) = memory(&mut rng, 16);
    let tracks_m = [
        random_matrix(&mut rng, 2, 16),
        random_matrix(&mut rng, 2, 16),
    ];
    let run = |source: NoisySource| {
        let model = AssociatorModel::new(
            AssociatorConfig {
                noisy_source: source,
                ..small_config()
            },
            4,
        )
        .unwrap();
        let mut g = Graph::new();
        let tracks: Vec<TrackInput> = (0..2)
            .map(|i| TrackInput {
                content: g.constant(Matrix::row_vector(tracks_m[0].row(i))),
                bbox: dets[i].bbox,
                history: g.constant(Matrix::row_vector(tracks_m[1].row(i))),
            })
            .collect();
        let out = model
            .forward_frame(&mut g, &dets, &tracks, &f, &p, false)
            .unwrap();
        g.value(out.embeddings).clone()
    };
    let hard = run(NoisySource::Hard);
    let zeros = run(NoisySource::Zeros);
    let all = run(NoisySource::AllDetections);
    assert!(hard.max_abs_diff(&zeros) > 1e-6);
    assert!(hard.max_abs_diff(&all) > 1e-6);
}

#[test]
fn literal_interaction_mode_runs_end_to_end() {
    let mut model = AssociatorModel::new(small_config(), 1).unwrap();
    model.use_literal_interaction(2);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut g = Graph::new();
    let dets = random_dets(&mut rng, 3, 16);
    let tracks = random_tracks(&mut g, &mut rng, 2, 16);
    let (f, p) = memory(&mut rng, 16);
    let out = model
        .forward_frame(&mut g, &dets, &tracks, &f, &p, true)
        .unwrap();
    assert!(g.value(out.boxes).is_finite());
}

#[test]
fn rejects_mismatched_widths() {
    let model = AssociatorModel::new(small_config(), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let dets = random_dets(&mut rng, 2, 8);
    let (f, p) = memory(&mut rng, 16);
    let mut g = Graph::new();
    assert!(model
        .forward_frame(&mut g, &dets, &[], &f, &p, false)
        .is_err());
    let bad = random_matrix(&mut rng, TOKENS, 8);
    assert!(model
        .forward_frame(&mut g, &[], &[], &bad, &bad, false)
        .is_err());
}

/// Auxiliary box loss gradient w.r.t. the alignment box head, checked by central differences.
#[test]
fn alignment_box_head_gradient_matches_finite_differences() {
    let cfg = AssociatorConfig {
        d_model: 8,
        n_heads: 1,
        ffn_dim: 8,
        ..AssociatorConfig::default()
    };
    let mut model = AssociatorModel::new(cfg, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let head_ids: Vec<_> = model
        .params
        .ids()
        .filter(|&id| model.params.name(id).starts_with("cpa.delta."))
        .collect();
    assert_eq!(head_ids.len(), 6);
    for &id in &head_ids {
        let (r, c) = model.params.get(id).shape();
        *model.params.get_mut(id) = random_matrix(&mut rng, r, c).scaled(0.3);
    }
    let mut dets = random_dets(&mut rng, 3, 8);
    for q in &mut dets {
        q.score = 0.8;
    }
    let track_rows = [random_matrix(&mut rng, 2, 8), random_matrix(&mut rng, 2, 8)];
    let track_boxes = [random_box(&mut rng), random_box(&mut rng)];
    let (f, p) = memory(&mut rng, 8);
    let target = Matrix::from_rows(
        &(0..5)
            .map(|_| random_box(&mut rng).to_array().to_vec())
            .collect::<Vec<_>>(),
        4,
    );

    let loss_of = |m: &AssociatorModel, g: &mut Graph| {
        let tracks: Vec<TrackInput> = (0..2)
            .map(|i| TrackInput {
                content: g.constant(Matrix::row_vector(track_rows[0].row(i))),
                bbox: track_boxes[i],
                history: g.constant(Matrix::row_vector(track_rows[1].row(i))),
            })
            .collect();
        let out = m.forward_frame(g, &dets, &tracks, &f, &p, false).unwrap();
        let aux = out.aux.unwrap();
        let l1 = g.l1_loss_sum(aux.boxes, target.clone());
        let gi = g.giou_loss_sum(aux.boxes, target.clone());
        let l1 = g.scale(l1, 5.0);
        let gi = g.scale(gi, 2.0);
        g.add(l1, gi)
    };

    let mut g = Graph::new();
    let loss = loss_of(&model, &mut g);
    let grads = g.backward(loss);
    let analytic = g.param_grads(&grads, &model.params);
    let index: Vec<usize> = model
        .params
        .ids()
        .enumerate()
        .filter(|(_, id)| head_ids.contains(id))
        .map(|(i, _)| i)
        .collect();

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (&slot, &id) in index.iter().zip(&head_ids) {
        let n = model.params.get(id).len();
        for k in 0..n {
            let orig = model.params.get(id).data()[k];
            model.params.get_mut(id).data_mut()[k] = orig + h;
            let mut gp = Graph::new();
            let lp = loss_of(&model, &mut gp);
            let up = gp.value(lp).get(0, 0);
            model.params.get_mut(id).data_mut()[k] = orig - h;
            let mut gm = Graph::new();
            let lm = loss_of(&model, &mut gm);
            let down = gm.value(lm).get(0, 0);
            model.params.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[slot].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn checkpoint_round_trip_and_fingerprint_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let mut model = AssociatorModel::new(small_config(), 5).unwrap();
    let id = model.params.ids().next().unwrap();
    model.params.get_mut(id).data_mut()[0] = 0.123456789;
    let weights = [2.0, 5.0, 2.0];
    save_checkpoint(&model, weights, &path).unwrap();

    let (loaded, w) = load_checkpoint(&path).unwrap();
    assert_eq!(w, weights);
    for ((na, a), (nb, b)) in model.params.iter().zip(loaded.params.iter()) {
        assert_eq!(na, nb);
        assert_eq!(a, b);
    }
    assert!(load_checkpoint_for(&path, &small_config(), weights).is_ok());

    let other = AssociatorConfig {
        tau_q: 0.4,
        ..small_config()
    };
    let err = load_checkpoint_for(&path, &other, weights).unwrap_err();
    assert_eq!(err.kind(), "fingerprint_mismatch");
    let err = load_checkpoint_for(&path, &small_config(), [1.0, 5.0, 2.0]).unwrap_err();
    assert_eq!(err.kind(), "fingerprint_mismatch");

    // Editing the stored config without updating the fingerprint is caught.
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("\"tau_q\":0.3", "\"tau_q\":0.35", 1)).unwrap();
    assert_eq!(
        load_checkpoint(&path).unwrap_err().kind(),
        "fingerprint_mismatch"
    );
}
