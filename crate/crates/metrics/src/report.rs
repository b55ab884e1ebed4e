use std::fmt;

use serde::{Deserialize, Serialize};

use crate::clear::clear_metrics;
use crate::hota::{hota, ALPHAS};
use crate::idf1::idf1;
use crate::{check_unique, Result, TrackBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    /// NaN when `gt == 0`.
    pub mota: f64,
    pub idf1: f64,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    pub gt: usize,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
    pub mota_defined: bool,
    /// Both inputs empty: HOTA terms reported as 1.0 by convention.
    pub empty: bool,
    pub hota_per_alpha: Vec<f64>,
    pub det_a_per_alpha: Vec<f64>,
    pub ass_a_per_alpha: Vec<f64>,
    /// Per-α `[TP, FN, FP]`, kept so sequences can be combined.
    pub alpha_counts: Vec<[usize; 3]>,
}

/// All metrics for one sequence.
pub fn evaluate(gt: &[Vec<TrackBox>], pred: &[Vec<TrackBox>]) -> Result<MetricsReport> {
    check_unique(gt)?;
    check_unique(pred)?;
    let c = clear_metrics(gt, pred)?;
    let i = idf1(gt, pred);
    let h = hota(gt, pred);
    Ok(MetricsReport {
        hota: h.hota,
        det_a: h.det_a,
        ass_a: h.ass_a,
        mota: c.mota,
        idf1: i.idf1,
        fp: c.fp,
        fn_: c.fn_,
        idsw: c.idsw,
        gt: c.gt,
        idtp: i.idtp,
        idfp: i.idfp,
        idfn: i.idfn,
        mota_defined: c.defined,
        empty: h.empty,
        hota_per_alpha: h.hota_per_alpha,
        det_a_per_alpha: h.det_a_per_alpha,
        ass_a_per_alpha: h.ass_a_per_alpha,
        alpha_counts: (0..ALPHAS.len())
            .map(|a| [h.tp[a], h.fn_[a], h.fp[a]])
            .collect(),
    })
}

/// Evaluates sequences on separate threads; results come back in input order.
pub fn evaluate_all(pairs: &[(&[Vec<TrackBox>], &[Vec<TrackBox>])]) -> Result<Vec<MetricsReport>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .iter()
            .map(|(g, p)| s.spawn(move || evaluate(g, p)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect()
    })
}

/// Pools per-sequence reports: counts are summed, per-α AssA is averaged
/// weighted by TP, and the composite scores are recomputed from the pooled terms.
pub fn combine(reports: &[MetricsReport]) -> MetricsReport {
    let scored: Vec<&MetricsReport> = reports.iter().filter(|r| !r.empty).collect();
    if scored.is_empty() {
        if let Some(first) = reports.first() {
            return first.clone();
        }
    }
    let na = ALPHAS.len();
    let mut counts = vec![[0usize; 3]; na];
    let mut det_a = vec![1.0; na];
    let mut ass_a = vec![1.0; na];
    let mut h = vec![1.0; na];
    if !scored.is_empty() {
        for a in 0..na {
            let mut weighted = 0.0;
            for r in &scored {
                for k in 0..3 {
                    counts[a][k] += r.alpha_counts[a][k];
                }
                weighted += r.ass_a_per_alpha[a] * r.alpha_counts[a][0] as f64;
            }
            let [tp, fn_, fp] = counts[a];
            ass_a[a] = weighted / tp.max(1) as f64;
            det_a[a] = tp as f64 / (tp + fn_ + fp).max(1) as f64;
            h[a] = (det_a[a] * ass_a[a]).sqrt();
        }
    }
    let sum = |f: fn(&MetricsReport) -> usize| reports.iter().map(f).sum::<usize>();
    let (fp, fn_, idsw, gt) = (
        sum(|r| r.fp),
        sum(|r| r.fn_),
        sum(|r| r.idsw),
        sum(|r| r.gt),
    );
    let (idtp, idfp, idfn) = (sum(|r| r.idtp), sum(|r| r.idfp), sum(|r| r.idfn));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let id_denom = 2 * idtp + idfp + idfn;
    MetricsReport {
        hota: mean(&h),
        det_a: mean(&det_a),
        ass_a: mean(&ass_a),
        mota: if gt > 0 {
            1.0 - (fp + fn_ + idsw) as f64 / gt as f64
        } else {
            f64::NAN
        },
        idf1: if id_denom == 0 {
            1.0
        } else {
            2.0 * idtp as f64 / id_denom as f64
        },
        fp,
        fn_,
        idsw,
        gt,
        idtp,
        idfp,
        idfn,
        mota_defined: gt > 0,
        empty: scored.is_empty(),
        hota_per_alpha: h,
        det_a_per_alpha: det_a,
        ass_a_per_alpha: ass_a,
        alpha_counts: counts,
    }
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "HOTA,DetA,AssA,MOTA,IDF1,FP,FN,IDSW,GT,IDTP,IDFP,IDFN";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.hota,
            self.det_a,
            self.ass_a,
            self.mota,
            self.idf1,
            self.fp,
            self.fn_,
            self.idsw,
            self.gt,
            self.idtp,
            self.idfp,
            self.idfn
        )
    }

    /// `alpha,HOTA,DetA,AssA` lines.
    pub fn per_alpha_csv(&self) -> String {
        let mut s = String::from("alpha,HOTA,DetA,AssA\n");
        for (a, alpha) in ALPHAS.iter().enumerate() {
            s.push_str(&format!(
                "{alpha:.2},{},{},{}\n",
                self.hota_per_alpha[a], self.det_a_per_alpha[a], self.ass_a_per_alpha[a]
            ));
        }
        s
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |v: f64| 100.0 * v;
        writeln!(
            f,
            "{:>7} {:>7} {:>7} {:>7} {:>7} {:>6} {:>6} {:>5} {:>6}",
            "HOTA", "DetA", "AssA", "MOTA", "IDF1", "FP", "FN", "IDSW", "GT"
        )?;
        write!(
            f,
            "{:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>6} {:>6} {:>5} {:>6}",
            pct(self.hota),
            pct(self.det_a),
            pct(self.ass_a),
            pct(self.mota),
            pct(self.idf1),
            self.fp,
            self.fn_,
            self.idsw,
            self.gt
        )
    }
}
