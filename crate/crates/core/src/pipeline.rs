//! Whole-sequence runs and parameter sweeps.

use std::time::{Duration, Instant};

use crate::error::Result;
use crate::metrics::{evaluate, EvalReport};
use crate::mot_io::{format_results, parse_str, to_detections, FrameMap};
use crate::scalar::Scalar;
use crate::tracker::{Detection, FrameOutput, Tracker, TrackerConfig};

#[derive(Debug, Clone)]
pub struct SequenceRun<T> {
    pub outputs: Vec<FrameOutput<T>>,
    /// Time spent inside `Tracker::step`, excluding input conversion.
    pub core_time: Duration,
}

impl<T: Scalar> SequenceRun<T> {
    pub fn frames(&self) -> usize {
        self.outputs.len()
    }

    pub fn frames_per_second(&self) -> f64 {
        let s = self.core_time.as_secs_f64();
        if s > 0.0 {
            self.outputs.len() as f64 / s
        } else {
            f64::INFINITY
        }
    }

    /// Tracker output as it reads back from a results file, so scores match
    /// evaluating the written file.
    pub fn to_records(&self) -> Result<FrameMap<T>> {
        Ok(parse_str(&format_results(&self.outputs))?.frames)
    }
}

/// Runs a fresh tracker over frames `1..=frame_count`; frames without
/// detections are stepped with an empty list.
pub fn run_sequence<T: Scalar>(cfg: &TrackerConfig<T>, detections: &FrameMap<T>, frame_count: u64) -> Result<SequenceRun<T>> {
    let last = detections.keys().next_back().copied().unwrap_or(0).max(frame_count);
    let inputs: Vec<Vec<Detection<T>>> =
        (1..=last).map(|f| detections.get(&f).map(|rows| to_detections(rows)).unwrap_or_default()).collect();
    let mut tracker = Tracker::new(cfg.clone())?;
    let mut outputs = Vec::with_capacity(inputs.len());
    let start = Instant::now();
    for (i, dets) in inputs.iter().enumerate() {
        outputs.push(tracker.step(i as u64 + 1, dets)?);
    }
    Ok(SequenceRun { outputs, core_time: start.elapsed() })
}

/// One sequence of a sweep: detections, ground truth and length.
#[derive(Debug, Clone)]
pub struct SweepSequence<T> {
    pub name: String,
    pub detections: FrameMap<T>,
    pub ground_truth: FrameMap<T>,
    pub frame_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint<T> {
    pub conf_object: T,
    pub conf_target: T,
    pub report: EvalReport<T>,
    pub occluded_by_confidence: usize,
    pub occluded_by_coverage: usize,
}

/// Tracks and scores every sequence with `cfg`, pooling the counts.
pub fn evaluate_point<T: Scalar>(cfg: &TrackerConfig<T>, sequences: &[SweepSequence<T>], iou_threshold: T) -> Result<SweepPoint<T>> {
    let mut reports = Vec::with_capacity(sequences.len());
    let (mut by_conf, mut by_cover) = (0, 0);
    for seq in sequences {
        let run = run_sequence(cfg, &seq.detections, seq.frame_count)?;
        for o in &run.outputs {
            by_conf += o.diagnostics.occluded_by_confidence;
            by_cover += o.diagnostics.occluded_by_coverage;
        }
        reports.push(evaluate(&seq.ground_truth, &run.to_records()?, iou_threshold)?);
    }
    Ok(SweepPoint {
        conf_object: cfg.conf_object,
        conf_target: cfg.conf_target,
        report: EvalReport::combine(&reports),
        occluded_by_confidence: by_conf,
        occluded_by_coverage: by_cover,
    })
}

/// Configurations for every `(conf_object, conf_target)` pair, row-major.
pub fn sweep_grid<T: Scalar>(base: &TrackerConfig<T>, conf_object: &[T], conf_target: &[T]) -> Vec<TrackerConfig<T>> {
    conf_object
        .iter()
        .flat_map(|&co| conf_target.iter().map(move |&ct| (co, ct)))
        .map(|(co, ct)| TrackerConfig { conf_object: co, conf_target: ct, ..base.clone() })
        .collect()
}

pub fn sweep<T: Scalar>(
    base: &TrackerConfig<T>,
    sequences: &[SweepSequence<T>],
    conf_object: &[T],
    conf_target: &[T],
    iou_threshold: T,
) -> Result<Vec<SweepPoint<T>>> {
    sweep_grid(base, conf_object, conf_target).iter().map(|c| evaluate_point(c, sequences, iou_threshold)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSummary<T> {
    pub mota: (T, T),
    pub id_switches: (usize, usize),
    pub fragmentations: (usize, usize),
}

/// `(min, max)` of the headline metrics, `None` for an empty sweep.
pub fn summarize<T: Scalar>(points: &[SweepPoint<T>]) -> Option<SweepSummary<T>> {
    let first = points.first()?;
    let mut s = SweepSummary {
        mota: (first.report.mota, first.report.mota),
        id_switches: (first.report.id_switches, first.report.id_switches),
        fragmentations: (first.report.fragmentations, first.report.fragmentations),
    };
    for p in &points[1..] {
        let r = &p.report;
        s.mota = (s.mota.0.min(r.mota), s.mota.1.max(r.mota));
        s.id_switches = (s.id_switches.0.min(r.id_switches), s.id_switches.1.max(r.id_switches));
        s.fragmentations = (s.fragmentations.0.min(r.fragmentations), s.fragmentations.1.max(r.fragmentations));
    }
    Some(s)
}

pub fn format_sweep_csv<T: Scalar>(points: &[SweepPoint<T>]) -> String {
    let mut out = String::from("conf_object,conf_target,mota,motp,ids,fm,fp,fn,occluded_by_confidence,occluded_by_coverage\n");
    for p in points {
        let r = &p.report;
        out.push_str(&format!(
            "{:.2},{:.2},{:.4},{:.4},{},{},{},{},{},{}\n",
            p.conf_object,
            p.conf_target,
            r.mota,
            r.motp,
            r.id_switches,
            r.fragmentations,
            r.false_positives,
            r.false_negatives,
            p.occluded_by_confidence,
            p.occluded_by_coverage
        ));
    }
    out
}
