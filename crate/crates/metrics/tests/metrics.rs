use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tbdq_core::geometry::iou;
use tbdq_core::BoundingBox;
use tbdq_metrics::{
    clear_metrics, combine, evaluate, evaluate_all, hota, idf1, match_frame, MetricsError,
    Sequence, TrackBox, ALPHAS,
};

fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(cx, cy, w, h).unwrap()
}

fn tb(id: u32, bbox: BoundingBox) -> TrackBox {
    TrackBox { id, bbox }
}

fn random_box(rng: &mut impl Rng) -> BoundingBox {
    bx(
        rng.random_range(0.3..0.7),
        rng.random_range(0.3..0.7),
        rng.random_range(0.1..0.4),
        rng.random_range(0.1..0.4),
    )
}

/// Best (cardinality, total IoU) over every partial injection, by enumeration.
fn brute_match(gt: &[TrackBox], pred: &[TrackBox], alpha: f64) -> (usize, f64) {
    fn go(
        i: usize,
        gt: &[TrackBox],
        pred: &[TrackBox],
        used: &mut Vec<bool>,
        alpha: f64,
    ) -> (usize, f64) {
        if i == gt.len() {
            return (0, 0.0);
        }
        let mut best = go(i + 1, gt, pred, used, alpha);
        for j in 0..pred.len() {
            let s = iou(&gt[i].bbox, &pred[j].bbox);
            if used[j] || s < alpha {
                continue;
            }
            used[j] = true;
            let (c, w) = go(i + 1, gt, pred, used, alpha);
            used[j] = false;
            let cand = (c + 1, w + s);
            if cand.0 > best.0 || (cand.0 == best.0 && cand.1 > best.1 + 1e-12) {
                best = cand;
            }
        }
        best
    }
    go(0, gt, pred, &mut vec![false; pred.len()], alpha)
}

#[test]
fn frame_matching_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for draw in 0..1000 {
        let ng = rng.random_range(0..=4);
        let np = rng.random_range(0..=4);
        let gt: Vec<TrackBox> = (0..ng)
            .map(|i| tb(i as u32, random_box(&mut rng)))
            .collect();
        let pred: Vec<TrackBox> = (0..np)
            .map(|i| tb(10 + i as u32, random_box(&mut rng)))
            .collect();
        let alpha = [0.3, 0.5][draw % 2];
        let m = match_frame(&gt, &pred, alpha).unwrap();
        let (card, total) = brute_match(&gt, &pred, alpha);
        assert_eq!(m.pairs.len(), card, "draw {draw}");
        let got: f64 = m.ious.iter().sum();
        assert!((got - total).abs() < 1e-9, "draw {draw}: {got} vs {total}");
        assert!(m.ious.iter().all(|&s| s >= alpha));
    }
}

#[test]
fn cardinality_beats_total_overlap() {
    // One gt could take the best box alone, but two pairs at lower IoU cover more.
    let gt = [
        tb(1, bx(0.4, 0.5, 0.2, 0.2)),
        tb(2, bx(0.45, 0.5, 0.2, 0.2)),
    ];
    let pred = [
        tb(7, bx(0.42, 0.5, 0.2, 0.2)),
        tb(8, bx(0.35, 0.5, 0.2, 0.2)),
    ];
    let m = match_frame(&gt, &pred, 0.5).unwrap();
    assert_eq!(m.pairs.len(), 2);
}

#[test]
fn duplicate_ids_and_bad_thresholds_are_rejected() {
    let b = bx(0.5, 0.5, 0.1, 0.1);
    assert_eq!(
        match_frame(&[tb(1, b), tb(1, b)], &[], 0.5).unwrap_err(),
        MetricsError::DuplicateId { frame: 0, id: 1 }
    );
    assert!(match_frame(&[], &[], 1.0).is_err());
    assert!(evaluate(&[vec![]], &[vec![tb(3, b), tb(3, b)]]).is_err());
}

fn brute_idtp(gt: &Sequence, pred: &Sequence) -> usize {
    let ids = |s: &Sequence| {
        let mut v: Vec<u32> = s.iter().flatten().map(|b| b.id).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (gi, pi) = (ids(gt), ids(pred));
    let overlap = |g: u32, p: u32| {
        gt.iter()
            .zip(pred)
            .filter(|(fg, fp)| {
                let a = fg.iter().find(|b| b.id == g);
                let b = fp.iter().find(|b| b.id == p);
                matches!((a, b), (Some(a), Some(b)) if iou(&a.bbox, &b.bbox) >= 0.5)
            })
            .count()
    };
    fn go(
        i: usize,
        gi: &[u32],
        pi: &[u32],
        used: &mut Vec<bool>,
        f: &dyn Fn(u32, u32) -> usize,
    ) -> usize {
        if i == gi.len() {
            return 0;
        }
        let mut best = go(i + 1, gi, pi, used, f);
        for j in 0..pi.len() {
            if !used[j] {
                used[j] = true;
                best = best.max(f(gi[i], pi[j]) + go(i + 1, gi, pi, used, f));
                used[j] = false;
            }
        }
        best
    }
    go(0, &gi, &pi, &mut vec![false; pi.len()], &overlap)
}

/// Trajectories that jitter around a few anchors so overlaps are frequent.
fn random_sequence(rng: &mut impl Rng, n_ids: u32, frames: usize, id_base: u32) -> Sequence {
    let anchors = [
        bx(0.3, 0.3, 0.2, 0.2),
        bx(0.6, 0.6, 0.2, 0.2),
        bx(0.32, 0.6, 0.2, 0.2),
    ];
    (0..frames)
        .map(|_| {
            (0..n_ids)
                .filter_map(|id| {
                    if rng.random_bool(0.25) {
                        return None;
                    }
                    let a = anchors[rng.random_range(0..anchors.len())];
                    let b = bx(a.cx + rng.random_range(-0.03..0.03), a.cy, a.w, a.h);
                    Some(tb(id_base + id, b))
                })
                .collect()
        })
        .collect()
}

#[test]
fn idf1_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for draw in 0..300 {
        let frames = rng.random_range(1..6);
        let (ng, np) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let gt = random_sequence(&mut rng, ng, frames, 0);
        let pred = random_sequence(&mut rng, np, frames, 100);
        let m = idf1(&gt, &pred);
        assert_eq!(m.idtp, brute_idtp(&gt, &pred), "draw {draw}");
        let n: usize = gt.iter().chain(&pred).map(Vec::len).sum();
        if n > 0 {
            assert!((m.idf1 - 2.0 * m.idtp as f64 / n as f64).abs() < 1e-12);
        }
    }
}

fn two_objects(frames: usize, swap_at: Option<usize>) -> (Sequence, Sequence) {
    let a = bx(0.25, 0.5, 0.1, 0.1);
    let b = bx(0.75, 0.5, 0.1, 0.1);
    let gt = (0..frames).map(|_| vec![tb(1, a), tb(2, b)]).collect();
    let pred = (0..frames)
        .map(|t| {
            if swap_at.is_some_and(|s| t >= s) {
                vec![tb(11, b), tb(12, a)]
            } else {
                vec![tb(11, a), tb(12, b)]
            }
        })
        .collect();
    (gt, pred)
}

#[test]
fn identity_swap_counts_two_switches() {
    let (gt, pred) = two_objects(6, Some(3));
    let c = clear_metrics(&gt, &pred).unwrap();
    assert_eq!(c.idsw, 2);
    assert_eq!((c.fp, c.fn_, c.tp), (0, 0, 12));
    assert!((c.mota - (1.0 - 2.0 / 12.0)).abs() < 1e-12);
}

#[test]
fn switch_back_counts_against_latest_match() {
    // gt 1 is tracked as 11, then 12, then 11 again: two switches.
    let a = bx(0.5, 0.5, 0.1, 0.1);
    let gt: Sequence = (0..3).map(|_| vec![tb(1, a)]).collect();
    let pred: Sequence = vec![vec![tb(11, a)], vec![tb(12, a)], vec![tb(11, a)]];
    assert_eq!(clear_metrics(&gt, &pred).unwrap().idsw, 2);
}

#[test]
fn hota_hand_computed_swap_case() {
    // Perfect boxes, ids swap halfway through 4 frames: every gt/pred pair
    // shares 2 of 4 frames, so AssA = 4 · (2·2/6) / 8 = 1/3 at every α.
    let (gt, pred) = two_objects(4, Some(2));
    let h = hota(&gt, &pred);
    for a in 0..ALPHAS.len() {
        assert!((h.det_a_per_alpha[a] - 1.0).abs() < 1e-12);
        assert!((h.ass_a_per_alpha[a] - 1.0 / 3.0).abs() < 1e-12);
    }
    assert!((h.hota - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
}

#[test]
fn hota_hand_computed_localization_case() {
    // IoU = 0.16 / 0.24 = 2/3 in every frame, so α ∈ {0.05, …, 0.65} score 1
    // and the other six thresholds score 0.
    let g = bx(0.5, 0.5, 0.2, 0.2);
    let p = bx(0.54, 0.5, 0.2, 0.2);
    let gt: Sequence = (0..4).map(|_| vec![tb(1, g)]).collect();
    let pred: Sequence = (0..4).map(|_| vec![tb(9, p)]).collect();
    let h = hota(&gt, &pred);
    assert!((h.hota - 13.0 / 19.0).abs() < 1e-12, "{}", h.hota);
    assert_eq!(h.tp[12], 4);
    assert_eq!((h.tp[13], h.fn_[13], h.fp[13]), (0, 4, 4));
}

#[test]
fn perfect_tracking_scores_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gt = random_sequence(&mut rng, 4, 8, 0);
    let pred: Sequence = gt
        .iter()
        .map(|f| f.iter().map(|b| tb(b.id + 50, b.bbox)).collect())
        .collect();
    let r = evaluate(&gt, &pred).unwrap();
    // Random jitter can make two gt boxes overlap, but matching to identical
    // boxes still wins everywhere.
    for v in [r.hota, r.det_a, r.ass_a, r.mota, r.idf1] {
        assert!((v - 1.0).abs() < 1e-12, "{r:?}");
    }
    assert_eq!((r.fp, r.fn_, r.idsw), (0, 0, 0));
}

#[test]
fn relabeling_predictions_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let gt = random_sequence(&mut rng, 4, 6, 0);
        let pred = random_sequence(&mut rng, 4, 6, 100);
        let mut perm: Vec<u32> = (0..4).map(|i| 500 + i).collect();
        perm.shuffle(&mut rng);
        let relabeled: Sequence = pred
            .iter()
            .map(|f| {
                f.iter()
                    .map(|b| tb(perm[(b.id - 100) as usize], b.bbox))
                    .collect()
            })
            .collect();
        let a = evaluate(&gt, &pred).unwrap();
        let b = evaluate(&gt, &relabeled).unwrap();
        assert!((a.hota - b.hota).abs() < 1e-12);
        assert!((a.idf1 - b.idf1).abs() < 1e-12);
        assert_eq!((a.fp, a.fn_), (b.fp, b.fn_));
    }
}

#[test]
fn extra_false_positives_never_help() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let gt = random_sequence(&mut rng, 3, 6, 0);
        let pred = random_sequence(&mut rng, 3, 6, 100);
        let base = evaluate(&gt, &pred).unwrap();
        let mut noisy = pred.clone();
        let t = rng.random_range(0..noisy.len());
        noisy[t].push(tb(999, bx(0.9, 0.1, 0.05, 0.05)));
        let more = evaluate(&gt, &noisy).unwrap();
        assert!(more.hota <= base.hota + 1e-12);
        assert!(more.det_a <= base.det_a + 1e-12);
        assert!(more.idf1 <= base.idf1 + 1e-12);
        if base.mota_defined {
            assert!(more.mota < base.mota);
        }
        assert_eq!(more.fp, base.fp + 1);
    }
}

#[test]
fn empty_inputs_are_flagged() {
    let r = evaluate(&[vec![], vec![]], &[vec![], vec![]]).unwrap();
    assert!(r.empty);
    assert!(!r.mota_defined && r.mota.is_nan());
    assert_eq!((r.hota, r.idf1), (1.0, 1.0));

    // Predictions without ground truth: MOTA undefined, HOTA zero.
    let r = evaluate(&[vec![]], &[vec![tb(1, bx(0.5, 0.5, 0.1, 0.1))]]).unwrap();
    assert!(!r.empty && r.mota.is_nan());
    assert_eq!((r.hota, r.idf1, r.fp), (0.0, 0.0, 1));
}

#[test]
fn sequences_of_different_length_are_padded() {
    let a = bx(0.5, 0.5, 0.1, 0.1);
    let gt: Sequence = vec![vec![tb(1, a)], vec![tb(1, a)]];
    let pred: Sequence = vec![vec![tb(1, a)]];
    let r = evaluate(&gt, &pred).unwrap();
    assert_eq!((r.fn_, r.fp, r.gt), (1, 0, 2));
}

#[test]
fn report_renders_csv_and_table() {
    let (gt, pred) = two_objects(4, Some(2));
    let r = evaluate(&gt, &pred).unwrap();
    let row = r.csv_row();
    assert_eq!(
        row.split(',').count(),
        tbdq_metrics::MetricsReport::CSV_HEADER.split(',').count()
    );
    assert_eq!(r.per_alpha_csv().lines().count(), 20);
    assert!(r.to_string().contains("HOTA"));
}

#[test]
fn composite_identities_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let gt = random_sequence(&mut rng, 4, 5, 0);
        let pred = random_sequence(&mut rng, 4, 5, 100);
        let r = evaluate(&gt, &pred).unwrap();
        for a in 0..ALPHAS.len() {
            let expect = (r.det_a_per_alpha[a] * r.ass_a_per_alpha[a]).sqrt();
            assert!((r.hota_per_alpha[a] - expect).abs() < 1e-9);
        }
        if r.mota_defined {
            let expect = 1.0 - (r.fp + r.fn_ + r.idsw) as f64 / r.gt as f64;
            assert!((r.mota - expect).abs() < 1e-9);
        }
        assert!(
            (r.idf1 - 2.0 * r.idtp as f64 / (2 * r.idtp + r.idfp + r.idfn).max(1) as f64).abs()
                < 1e-9
        );
    }
}

#[test]
fn random_ids_keep_detection_but_lose_association() {
    let anchors: Vec<BoundingBox> = (0..4)
        .map(|i| bx(0.15 + 0.2 * i as f64, 0.5, 0.1, 0.1))
        .collect();
    let gt: Sequence = (0..20)
        .map(|_| {
            anchors
                .iter()
                .enumerate()
                .map(|(i, b)| tb(i as u32, *b))
                .collect()
        })
        .collect();
    let mut next = 100;
    let pred: Sequence = gt
        .iter()
        .map(|f| {
            f.iter()
                .map(|b| {
                    next += 1;
                    tb(next, b.bbox)
                })
                .collect()
        })
        .collect();
    let r = evaluate(&gt, &pred).unwrap();
    assert!((r.det_a - 1.0).abs() < 1e-12);
    assert!(r.ass_a < 0.1, "{}", r.ass_a);
    assert!(r.idf1 < 0.1);
}

#[test]
fn all_frames_missed_gives_zero_mota() {
    let (gt, _) = two_objects(5, None);
    let empty: Sequence = vec![vec![]; 5];
    let r = evaluate(&gt, &empty).unwrap();
    assert_eq!((r.fn_, r.fp), (10, 0));
    assert_eq!(r.mota, 0.0);
}

#[test]
fn combining_pools_counts_and_runs_in_parallel() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let seqs: Vec<(Sequence, Sequence)> = (0..4)
        .map(|_| {
            (
                random_sequence(&mut rng, 3, 6, 0),
                random_sequence(&mut rng, 3, 6, 100),
            )
        })
        .collect();
    let pairs: Vec<(&[Vec<TrackBox>], &[Vec<TrackBox>])> = seqs
        .iter()
        .map(|(g, p)| (g.as_slice(), p.as_slice()))
        .collect();
    let reports = evaluate_all(&pairs).unwrap();
    for ((g, p), r) in seqs.iter().zip(&reports) {
        assert_eq!(&evaluate(g, p).unwrap(), r);
    }
    let all = combine(&reports);
    assert_eq!(all.gt, reports.iter().map(|r| r.gt).sum::<usize>());
    // A single report combines to itself.
    let one = combine(&reports[..1]);
    assert!((one.hota - reports[0].hota).abs() < 1e-12);
    assert!((one.idf1 - reports[0].idf1).abs() < 1e-12);
    // Perfect sequences combine to perfect.
    let perfect: Vec<_> = seqs.iter().map(|(g, _)| evaluate(g, g).unwrap()).collect();
    assert!((combine(&perfect).hota - 1.0).abs() < 1e-12);
}
