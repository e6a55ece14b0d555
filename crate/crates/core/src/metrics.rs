//! CLEAR-MOT evaluation of tracker output against ground truth.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::assignment::{gated_assign, ScoreMatrix};
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::mot_io::FrameMap;
use crate::scalar::Scalar;

/// Fraction of its lifetime a trajectory must be tracked to count as mostly tracked.
pub const MOSTLY_TRACKED: f64 = 0.8;
/// Fraction at or below which a trajectory counts as mostly lost.
pub const MOSTLY_LOST: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport<T> {
    pub mota: T,
    /// Mean IoU over matched pairs.
    pub motp: T,
    pub id_switches: usize,
    pub fragmentations: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub mostly_tracked: usize,
    pub mostly_lost: usize,
    pub trajectories: usize,
    /// Considered ground-truth boxes over all frames.
    pub gt_total: usize,
    pub matches: usize,
    pub iou_sum: T,
}

impl<T: Scalar> EvalReport<T> {
    fn finish(mut self) -> Self {
        let errors = self.false_negatives + self.false_positives + self.id_switches;
        self.mota = T::one() - T::lit(errors as f64) / T::lit(self.gt_total.max(1) as f64);
        self.motp = if self.matches == 0 { T::zero() } else { self.iou_sum / T::lit(self.matches as f64) };
        self
    }

    pub fn mt_fraction(&self) -> T {
        T::lit(self.mostly_tracked as f64) / T::lit(self.trajectories.max(1) as f64)
    }

    pub fn ml_fraction(&self) -> T {
        T::lit(self.mostly_lost as f64) / T::lit(self.trajectories.max(1) as f64)
    }

    /// Sums the raw counts of several sequences and recomputes the ratios.
    pub fn combine(reports: &[Self]) -> Self {
        let mut acc = Self::empty();
        for r in reports {
            acc.id_switches += r.id_switches;
            acc.fragmentations += r.fragmentations;
            acc.false_positives += r.false_positives;
            acc.false_negatives += r.false_negatives;
            acc.mostly_tracked += r.mostly_tracked;
            acc.mostly_lost += r.mostly_lost;
            acc.trajectories += r.trajectories;
            acc.gt_total += r.gt_total;
            acc.matches += r.matches;
            acc.iou_sum += r.iou_sum;
        }
        acc.finish()
    }

    fn empty() -> Self {
        Self {
            mota: T::zero(),
            motp: T::zero(),
            id_switches: 0,
            fragmentations: 0,
            false_positives: 0,
            false_negatives: 0,
            mostly_tracked: 0,
            mostly_lost: 0,
            trajectories: 0,
            gt_total: 0,
            matches: 0,
            iou_sum: T::zero(),
        }
    }

    /// `(key, value)` pairs in a fixed order.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("mota", format!("{:.4}", self.mota)),
            ("motp", format!("{:.4}", self.motp)),
            ("mt", self.mostly_tracked.to_string()),
            ("mt_fraction", format!("{:.4}", self.mt_fraction())),
            ("ml", self.mostly_lost.to_string()),
            ("ml_fraction", format!("{:.4}", self.ml_fraction())),
            ("fp", self.false_positives.to_string()),
            ("fn", self.false_negatives.to_string()),
            ("ids", self.id_switches.to_string()),
            ("fm", self.fragmentations.to_string()),
            ("gt_total", self.gt_total.to_string()),
            ("trajectories", self.trajectories.to_string()),
        ]
    }

    pub fn render_key_values(&self) -> String {
        self.fields().into_iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k}={v}");
            s
        })
    }

    pub fn render_table(&self) -> String {
        let fields = self.fields();
        let widths: Vec<usize> = fields.iter().map(|(k, v)| k.len().max(v.len())).collect();
        let mut head = String::new();
        let mut row = String::new();
        for ((k, v), w) in fields.iter().zip(&widths) {
            let _ = write!(head, "{:>w$} ", k.to_uppercase(), w = w);
            let _ = write!(row, "{v:>w$} ", w = w);
        }
        format!("{}\n{}\n", head.trim_end(), row.trim_end())
    }
}

#[derive(Default)]
struct Trajectory {
    frames: usize,
    tracked: usize,
    fragments: usize,
    was_tracked: bool,
    ever_tracked: bool,
}

/// Sort key for ids within a frame so the result does not depend on row order.
fn by_id<T: Scalar>(rows: &mut [(i64, BoundingBox<T>)]) {
    rows.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            let ka = a.1.to_ltwh().map(Scalar::as_f64);
            let kb = b.1.to_ltwh().map(Scalar::as_f64);
            ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
}

/// CLEAR-MOT metrics of `hypotheses` against `ground_truth`.
///
/// Each frame first keeps last matches that still overlap by at least
/// `iou_threshold`, then solves the rest with a maximum-cardinality,
/// maximum-IoU assignment. Ground-truth rows whose flag column is zero are
/// not scored, and hypotheses that only cover such rows are not counted as
/// false positives.
pub fn evaluate<T: Scalar>(ground_truth: &FrameMap<T>, hypotheses: &FrameMap<T>, iou_threshold: T) -> Result<EvalReport<T>> {
    if !(iou_threshold > T::zero() && iou_threshold <= T::one()) {
        return Err(Error::InvalidParameter(format!("iou threshold {iou_threshold} outside (0, 1]")));
    }
    let frames: BTreeSet<u64> = ground_truth.keys().chain(hypotheses.keys()).copied().collect();
    let mut report = EvalReport::empty();
    let mut last_match: HashMap<i64, i64> = HashMap::new();
    let mut trajectories: HashMap<i64, Trajectory> = HashMap::new();

    for f in frames {
        let mut gt = Vec::new();
        let mut ignored = Vec::new();
        for r in ground_truth.get(&f).into_iter().flatten() {
            let b = r.bbox()?;
            if r.is_considered() {
                gt.push((r.id, b));
            } else {
                ignored.push(b);
            }
        }
        let mut hyp: Vec<(i64, BoundingBox<T>)> =
            hypotheses.get(&f).into_iter().flatten().map(|r| r.bbox().map(|b| (r.id, b))).collect::<Result<_>>()?;
        by_id(&mut gt);
        by_id(&mut hyp);

        let mut gt_match: Vec<Option<usize>> = vec![None; gt.len()];
        let mut hyp_taken = vec![false; hyp.len()];

        for (g, (gid, gb)) in gt.iter().enumerate() {
            let Some(prev) = last_match.get(gid) else { continue };
            if let Some(h) = hyp.iter().position(|(hid, _)| hid == prev) {
                if !hyp_taken[h] && iou(gb, &hyp[h].1) >= iou_threshold {
                    gt_match[g] = Some(h);
                    hyp_taken[h] = true;
                }
            }
        }

        let free_g: Vec<usize> = (0..gt.len()).filter(|&g| gt_match[g].is_none()).collect();
        let free_h: Vec<usize> = (0..hyp.len()).filter(|&h| !hyp_taken[h]).collect();
        if !free_g.is_empty() && !free_h.is_empty() {
            // one more match always outweighs any IoU gain
            let bonus = T::lit(free_g.len().min(free_h.len()) as f64 + 1.0);
            let m = ScoreMatrix::from_fn(free_g.len(), free_h.len(), |g, h| {
                let v = iou(&gt[free_g[g]].1, &hyp[free_h[h]].1);
                if v >= iou_threshold {
                    bonus + v
                } else {
                    T::zero()
                }
            });
            for (g, h) in gated_assign(&m, bonus).matches {
                gt_match[free_g[g]] = Some(free_h[h]);
                hyp_taken[free_h[h]] = true;
            }
        }

        for (g, (gid, gb)) in gt.iter().enumerate() {
            let traj = trajectories.entry(*gid).or_default();
            traj.frames += 1;
            match gt_match[g] {
                Some(h) => {
                    let (hid, hb) = hyp[h];
                    if last_match.get(gid).is_some_and(|&p| p != hid) {
                        report.id_switches += 1;
                    }
                    last_match.insert(*gid, hid);
                    report.matches += 1;
                    report.iou_sum += iou(gb, &hb);
                    traj.tracked += 1;
                    if traj.ever_tracked && !traj.was_tracked {
                        traj.fragments += 1;
                    }
                    traj.was_tracked = true;
                    traj.ever_tracked = true;
                }
                None => {
                    report.false_negatives += 1;
                    traj.was_tracked = false;
                }
            }
        }
        report.gt_total += gt.len();

        let stray: Vec<usize> = (0..hyp.len()).filter(|&h| !hyp_taken[h]).collect();
        let excused = if ignored.is_empty() || stray.is_empty() {
            0
        } else {
            let m = ScoreMatrix::from_fn(stray.len(), ignored.len(), |h, i| iou(&hyp[stray[h]].1, &ignored[i]));
            gated_assign(&m, iou_threshold).matches.len()
        };
        report.false_positives += stray.len() - excused;
    }

    for traj in trajectories.values() {
        report.trajectories += 1;
        report.fragmentations += traj.fragments;
        let ratio = traj.tracked as f64 / traj.frames as f64;
        if ratio >= MOSTLY_TRACKED {
            report.mostly_tracked += 1;
        } else if ratio <= MOSTLY_LOST {
            report.mostly_lost += 1;
        }
    }
    Ok(report.finish())
}
