//! Per-frame tracking state machine.
//!
//! Each frame: predict every track, associate detections in three cascaded
//! stages (plain IoU, extended-box re-identification, occlusion
//! classification), correct matched filters, give occluded tracks the
//! halved area-rate update, create targets from three-frame chains of
//! unmatched detections and drop unmatched targets whose time since update
//! passes their age-dependent deadline.

use serde::{Deserialize, Serialize};

use crate::assignment::{gated_assign, two_step_match, ChainMatch, ScoreMatrix};
use crate::error::{Error, Result};
use crate::geometry::{covered_percent, extend_box, extended_iou, iou, BoundingBox};
use crate::motion::{self, MotionState, NoiseConfig};
use crate::scalar::Scalar;

/// Average area used when there are no tracks to average over.
pub const AREA_FALLBACK: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Active,
    Occluded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track<T> {
    pub id: u64,
    pub motion: MotionState<T>,
    /// Frames since creation, counting the creation frame.
    pub age: u32,
    /// Consecutive frames without a matched detection.
    pub time_since_observed: u32,
    /// Consecutive frames without a filter update.
    pub time_since_updated: u32,
    pub status: TrackStatus,
    pub hit_count: u32,
}

impl<T: Scalar> Track<T> {
    pub fn new(id: u64, motion: MotionState<T>) -> Self {
        Self {
            id,
            motion,
            age: 1,
            time_since_observed: 0,
            time_since_updated: 0,
            status: TrackStatus::Active,
            hit_count: 1,
        }
    }

    /// Box of the current state estimate.
    pub fn bbox(&self) -> BoundingBox<T> {
        motion::box_from_state(&self.motion).unwrap_or_else(|_| {
            let [u, v, ..] = self.motion.mean;
            BoundingBox { left: u, top: v, right: u, bottom: v }
        })
    }

    #[inline]
    pub fn area(&self) -> T {
        self.motion.area()
    }

    pub fn is_occluded(&self) -> bool {
        self.status == TrackStatus::Occluded
    }
}

/// Tracker hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct TrackerConfig<T> {
    /// Scale of the track confidence score.
    pub alpha: T,
    /// Confidence above which an unmatched track is occluded by a non-target object.
    pub conf_object: T,
    /// Confidence above which a sufficiently covered track is occluded by another target.
    pub conf_target: T,
    /// Covered fraction needed for target-target occlusion.
    pub min_coverage: T,
    /// Minimum IoU for any association.
    pub iou_gate: T,
    pub k_min: T,
    pub k_max: T,
    pub c_k: T,
    /// Number of initial frames in which every unmatched detection becomes a track.
    pub min_hits: u32,
    /// Per-frame growth of the re-identification box side lengths.
    pub extension_rate: T,
    pub detection_score_threshold: T,
    /// Re-identify only detections that also continue an unmatched detection from the previous frame.
    pub require_reid_support: bool,
    /// Also report occluded tracks' predicted boxes.
    pub emit_occluded: bool,
    /// Reset time-since-updated on occluded frames; otherwise it is held.
    pub occluded_resets_time_since_update: bool,
    pub noise: NoiseConfig<T>,
}

impl<T: Scalar> Default for TrackerConfig<T> {
    fn default() -> Self {
        let l = T::lit;
        Self {
            alpha: l(0.5),
            conf_object: l(0.75),
            conf_target: l(0.35),
            min_coverage: l(0.5),
            iou_gate: l(0.3),
            k_min: l(3.0),
            k_max: l(30.0),
            c_k: l(10.0),
            min_hits: 3,
            extension_rate: l(0.3),
            detection_score_threshold: l(0.3),
            require_reid_support: true,
            emit_occluded: false,
            occluded_resets_time_since_update: true,
            noise: NoiseConfig::default(),
        }
    }
}

impl<T: Scalar> TrackerConfig<T> {
    /// Configuration with both occlusion branches and long retention turned
    /// off: a track is removed after its second unobserved frame.
    pub fn without_occlusion_handling() -> Self {
        Self {
            conf_object: T::infinity(),
            conf_target: T::infinity(),
            k_min: T::one(),
            k_max: T::one(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.c_k > T::zero()) {
            return bad("c_k must be > 0");
        }
        if !(self.k_min <= self.k_max) {
            return bad("k_min must not exceed k_max");
        }
        if !(self.alpha >= T::zero()) {
            return bad("alpha must be >= 0");
        }
        if !(self.extension_rate >= T::zero()) {
            return bad("extension_rate must be >= 0");
        }
        if !(self.iou_gate >= T::zero() && self.iou_gate <= T::one()) {
            return bad("iou_gate must lie in [0, 1]");
        }
        if !(self.min_coverage >= T::zero() && self.min_coverage <= T::one()) {
            return bad("min_coverage must lie in [0, 1]");
        }
        self.noise.validate()?;
        let (co, ct) = (self.conf_object, self.conf_target);
        if !(T::zero() <= ct && ct <= co && co <= T::one()) {
            log::warn!("confidence thresholds outside 0 <= conf_target ({ct}) <= conf_object ({co}) <= 1");
        }
        Ok(())
    }
}

/// `min(1, alpha * age / max(t_so, 1) * area / avg_area)`.
#[inline]
pub fn confidence_value<T: Scalar>(alpha: T, age: u32, time_since_observed: u32, area: T, avg_area: T) -> T {
    let age = T::lit(f64::from(age));
    let t_so = T::lit(f64::from(time_since_observed.max(1)));
    T::one().min(alpha * (age / t_so) * (area / avg_area))
}

/// Confidence of a track given the average area of all predicted tracks.
pub fn confidence<T: Scalar>(track: &Track<T>, avg_area: T, alpha: T) -> T {
    confidence_value(alpha, track.age, track.time_since_observed, track.area(), avg_area)
}

/// Mean predicted area over `tracks`, or [`AREA_FALLBACK`] when empty.
pub fn average_area<T: Scalar>(tracks: &[Track<T>]) -> T {
    if tracks.is_empty() {
        return T::lit(AREA_FALLBACK);
    }
    let sum = tracks.iter().fold(T::zero(), |acc, t| acc + t.area());
    sum / T::lit(tracks.len() as f64)
}

/// `min(k_min + age / c_k, k_max)`: the largest time-since-update an
/// unmatched track survives.
#[inline]
pub fn removal_threshold<T: Scalar>(age: u32, k_min: T, c_k: T, k_max: T) -> T {
    (k_min + T::lit(f64::from(age)) / c_k).min(k_max)
}

/// Whether an unmatched track has passed its deadline. Occluded tracks never are.
pub fn should_remove<T: Scalar>(track: &Track<T>, cfg: &TrackerConfig<T>) -> bool {
    !track.is_occluded()
        && T::lit(f64::from(track.time_since_updated)) > removal_threshold(track.age, cfg.k_min, cfg.c_k, cfg.k_max)
}

/// Tracks among `unmatched` that are due for removal.
pub fn remove_targets<'a, T: Scalar>(unmatched: &'a [Track<T>], cfg: &TrackerConfig<T>) -> Vec<&'a Track<T>> {
    unmatched.iter().filter(|t| should_remove(t, cfg)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OcclusionCause {
    /// Confident enough on its own to be hidden by a non-target object.
    Confidence,
    /// Covered by another target and moderately confident.
    Coverage,
}

/// Partition of one frame's tracks and detections. Track indices refer to
/// the slice passed to [`associate`], detection indices to the detections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    /// `(track, detection)` pairs from both matching stages.
    pub matched: Vec<(usize, usize)>,
    /// Subset of `matched` produced by the extended-box stage.
    pub reidentified: Vec<(usize, usize)>,
    pub occluded: Vec<(usize, OcclusionCause)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Associates predicted tracks with this frame's detections.
///
/// `prev_unmatched` holds last frame's leftover detections; they support
/// re-identification when `cfg.require_reid_support` is set.
pub fn associate<T: Scalar>(
    tracks: &[Track<T>],
    detections: &[BoundingBox<T>],
    avg_area: T,
    prev_unmatched: &[BoundingBox<T>],
    cfg: &TrackerConfig<T>,
) -> Association {
    let boxes: Vec<BoundingBox<T>> = tracks.iter().map(Track::bbox).collect();

    // cascade: detections x all predicted tracks
    let p = ScoreMatrix::from_fn(detections.len(), tracks.len(), |d, t| iou(&detections[d], &boxes[t]));
    let first = gated_assign(&p, cfg.iou_gate);
    let mut matched: Vec<(usize, usize)> = first.matches.iter().map(|&(d, t)| (t, d)).collect();
    let mut free_tracks = first.unmatched_cols;
    let mut free_dets = first.unmatched_rows;

    // re-identification against extended boxes
    let mut reidentified = Vec::new();
    if !free_tracks.is_empty() && !free_dets.is_empty() {
        // growth stops after k_max unobserved frames
        let cap = cfg.k_max.to_u32().unwrap_or(u32::MAX);
        let extended: Vec<BoundingBox<T>> = free_tracks
            .iter()
            .map(|&t| extend_box(&boxes[t], tracks[t].time_since_observed.min(cap), cfg.extension_rate))
            .collect();
        let p_ext = ScoreMatrix::from_fn(free_dets.len(), free_tracks.len(), |d, t| {
            extended_iou(&detections[free_dets[d]], &boxes[free_tracks[t]], &extended[t]).unwrap_or(T::zero())
        });
        let pairs: Vec<(usize, usize)> = if cfg.require_reid_support {
            let p_d = ScoreMatrix::from_fn(free_dets.len(), prev_unmatched.len(), |d, a| {
                iou(&detections[free_dets[d]], &prev_unmatched[a])
            });
            two_step_match(&p_ext, &p_d, cfg.iou_gate)
                .unwrap_or_default()
                .into_iter()
                .map(|c| (c.shared, c.primary))
                .collect()
        } else {
            gated_assign(&p_ext, cfg.iou_gate).matches
        };
        for &(d, t) in &pairs {
            reidentified.push((free_tracks[t], free_dets[d]));
        }
        if !pairs.is_empty() {
            let taken_t: Vec<usize> = pairs.iter().map(|p| free_tracks[p.1]).collect();
            let taken_d: Vec<usize> = pairs.iter().map(|p| free_dets[p.0]).collect();
            free_tracks.retain(|t| !taken_t.contains(t));
            free_dets.retain(|d| !taken_d.contains(d));
        }
        reidentified.sort_unstable();
        matched.extend_from_slice(&reidentified);
    }
    matched.sort_unstable();

    // occlusion classification of what is still unmatched
    let mut occluded = Vec::new();
    let mut unmatched_tracks = Vec::new();
    for &u in &free_tracks {
        let c_u = confidence(&tracks[u], avg_area, cfg.alpha);
        if c_u > cfg.conf_object {
            occluded.push((u, OcclusionCause::Confidence));
            continue;
        }
        if c_u > cfg.conf_target {
            let covered = (0..boxes.len())
                .filter(|&o| o != u)
                .map(|o| covered_percent(&boxes[u], &boxes[o]).unwrap_or(T::zero()))
                .fold(T::zero(), T::max);
            if covered > cfg.min_coverage {
                occluded.push((u, OcclusionCause::Coverage));
                continue;
            }
        }
        unmatched_tracks.push(u);
    }

    Association { matched, reidentified, occluded, unmatched_tracks, unmatched_detections: free_dets }
}

/// Three unmatched detections from consecutive frames that were assigned to
/// each other. Indices refer to the three pools.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirthChain<T> {
    pub now: usize,
    pub prev: usize,
    pub prev2: usize,
    pub newest: BoundingBox<T>,
    pub oldest: BoundingBox<T>,
}

impl<T: Scalar> BirthChain<T> {
    /// Filter state at the newest box, with center and area rates taken from
    /// the displacement across the chain (zero if that is not finite).
    pub fn initial_state(&self, noise: &NoiseConfig<T>) -> Result<MotionState<T>> {
        let mut m = motion::init_track_state(&self.newest, noise)?;
        let z_new = motion::state_from_box(&self.newest)?;
        let z_old = motion::state_from_box(&self.oldest)?;
        let gap = T::lit(2.0);
        let rates = [(z_new[0] - z_old[0]) / gap, (z_new[1] - z_old[1]) / gap, (z_new[2] - z_old[2]) / gap];
        if rates.iter().all(|r| r.is_finite()) {
            m.mean[4..].copy_from_slice(&rates);
        }
        Ok(m)
    }
}

/// Links unmatched detections of the current and two previous frames.
///
/// The previous frame's pool is the shared side: a `prev` detection must be
/// assigned both to a current detection and to one from two frames back.
pub fn find_new_targets<T: Scalar>(
    now: &[BoundingBox<T>],
    prev: &[BoundingBox<T>],
    prev2: &[BoundingBox<T>],
    cfg: &TrackerConfig<T>,
) -> Vec<BirthChain<T>> {
    if now.is_empty() || prev.is_empty() || prev2.is_empty() {
        return Vec::new();
    }
    let p_d = ScoreMatrix::from_fn(prev.len(), now.len(), |b, c| iou(&prev[b], &now[c]));
    let p_db = ScoreMatrix::from_fn(prev.len(), prev2.len(), |b, a| iou(&prev[b], &prev2[a]));
    let mut chains: Vec<BirthChain<T>> = two_step_match(&p_d, &p_db, cfg.iou_gate)
        .unwrap_or_default()
        .into_iter()
        .map(|ChainMatch { shared, primary, support }| BirthChain {
            now: primary,
            prev: shared,
            prev2: support,
            newest: now[primary],
            oldest: prev2[support],
        })
        .collect();
    chains.sort_by_key(|c| c.now);
    chains
}

/// A detection as handed to the tracker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection<T> {
    pub bbox: BoundingBox<T>,
    pub score: T,
}

impl<T: Scalar> Detection<T> {
    pub fn new(bbox: BoundingBox<T>, score: T) -> Self {
        Self { bbox, score }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Detections accepted after score and size filtering.
    pub detections: usize,
    pub dropped_detections: usize,
    pub matched: usize,
    pub reidentified: usize,
    pub occluded: usize,
    pub occluded_by_confidence: usize,
    pub occluded_by_coverage: usize,
    pub unmatched_tracks: usize,
    pub created: usize,
    pub removed: usize,
    pub removed_ids: Vec<u64>,
    /// Current detections left in the unmatched pool.
    pub unmatched_detections: usize,
    pub live_tracks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput<T> {
    pub frame: u64,
    /// `(id, box)` of every reported track, sorted by id.
    pub emitted: Vec<(u64, BoundingBox<T>)>,
    /// Predicted boxes of occluded tracks, sorted by id. Reported in
    /// `emitted` too when `emit_occluded` is set.
    pub occluded: Vec<(u64, BoundingBox<T>)>,
    pub diagnostics: Diagnostics,
}

/// Sequential tracker for one video sequence.
#[derive(Debug, Clone)]
pub struct Tracker<T> {
    cfg: TrackerConfig<T>,
    tracks: Vec<Track<T>>,
    next_id: u64,
    steps: u64,
    last_frame: Option<u64>,
    pool_prev: Vec<BoundingBox<T>>,
    pool_prev2: Vec<BoundingBox<T>>,
}

impl<T: Scalar> Tracker<T> {
    pub fn new(cfg: TrackerConfig<T>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            steps: 0,
            last_frame: None,
            pool_prev: Vec::new(),
            pool_prev2: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrackerConfig<T> {
        &self.cfg
    }

    pub fn tracks(&self) -> &[Track<T>] {
        &self.tracks
    }

    /// Unmatched detections carried from the last processed frame.
    pub fn unmatched_pool(&self) -> &[BoundingBox<T>] {
        &self.pool_prev
    }

    /// Processes frame `frame`. Frame numbers must strictly increase.
    pub fn step(&mut self, frame: u64, detections: &[Detection<T>]) -> Result<FrameOutput<T>> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::OutOfOrderFrame { last, got: frame });
            }
        }
        self.last_frame = Some(frame);
        let step_index = self.steps;
        self.steps += 1;
        let cfg = &self.cfg;
        let mut diag = Diagnostics::default();

        let dets: Vec<BoundingBox<T>> = detections
            .iter()
            .filter(|d| d.score >= cfg.detection_score_threshold && d.bbox.has_positive_area())
            .map(|d| d.bbox)
            .collect();
        diag.detections = dets.len();
        diag.dropped_detections = detections.len() - dets.len();

        for t in &mut self.tracks {
            t.motion = motion::predict(&t.motion, &cfg.noise);
            t.age = t.age.saturating_add(1);
            t.time_since_observed = t.time_since_observed.saturating_add(1);
            t.time_since_updated = t.time_since_updated.saturating_add(1);
        }

        let avg_area = average_area(&self.tracks);
        let assoc = associate(&self.tracks, &dets, avg_area, &self.pool_prev, cfg);

        for &(t, d) in &assoc.matched {
            let track = &mut self.tracks[t];
            let z = motion::state_from_box(&dets[d])?;
            track.motion = motion::correct(&track.motion, &z, &cfg.noise)?;
            track.time_since_observed = 0;
            track.time_since_updated = 0;
            track.status = TrackStatus::Active;
            track.hit_count = track.hit_count.saturating_add(1);
        }
        for &(t, cause) in &assoc.occluded {
            let track = &mut self.tracks[t];
            track.motion = motion::occluded_update(&track.motion);
            track.status = TrackStatus::Occluded;
            if cfg.occluded_resets_time_since_update {
                track.time_since_updated = 0;
            } else {
                track.time_since_updated -= 1;
            }
            match cause {
                OcclusionCause::Confidence => diag.occluded_by_confidence += 1,
                OcclusionCause::Coverage => diag.occluded_by_coverage += 1,
            }
        }
        for &t in &assoc.unmatched_tracks {
            self.tracks[t].status = TrackStatus::Active;
        }
        diag.matched = assoc.matched.len();
        diag.reidentified = assoc.reidentified.len();
        diag.occluded = assoc.occluded.len();
        diag.unmatched_tracks = assoc.unmatched_tracks.len();

        // removal, then births
        let mut remove = vec![false; self.tracks.len()];
        for &t in &assoc.unmatched_tracks {
            if should_remove(&self.tracks[t], cfg) {
                remove[t] = true;
                diag.removed_ids.push(self.tracks[t].id);
            }
        }
        if !diag.removed_ids.is_empty() {
            let mut i = 0;
            self.tracks.retain(|_| {
                i += 1;
                !remove[i - 1]
            });
        }
        diag.removed = diag.removed_ids.len();

        let now: Vec<BoundingBox<T>> = assoc.unmatched_detections.iter().map(|&d| dets[d]).collect();
        let mut new_states = Vec::new();
        let (next_prev, next_prev2) = if step_index < u64::from(cfg.min_hits) {
            for b in &now {
                new_states.push(motion::init_track_state(b, &cfg.noise)?);
            }
            (Vec::new(), Vec::new())
        } else {
            let chains = find_new_targets(&now, &self.pool_prev, &self.pool_prev2, cfg);
            let mut used_now = vec![false; now.len()];
            let mut used_prev = vec![false; self.pool_prev.len()];
            for c in &chains {
                new_states.push(c.initial_state(&cfg.noise)?);
                used_now[c.now] = true;
                used_prev[c.prev] = true;
            }
            let keep = |pool: &[BoundingBox<T>], used: &[bool]| -> Vec<BoundingBox<T>> {
                pool.iter().zip(used).filter(|(_, u)| !**u).map(|(b, _)| *b).collect()
            };
            (keep(&now, &used_now), keep(&self.pool_prev, &used_prev))
        };
        self.pool_prev2 = next_prev2;
        self.pool_prev = next_prev;
        diag.created = new_states.len();
        diag.unmatched_detections = self.pool_prev.len();
        for m in new_states {
            self.tracks.push(Track::new(self.next_id, m));
            self.next_id += 1;
        }
        diag.live_tracks = self.tracks.len();

        let mut emitted = Vec::new();
        let mut occluded = Vec::new();
        for t in &self.tracks {
            if t.time_since_observed == 0 {
                emitted.push((t.id, t.bbox()));
            } else if t.is_occluded() {
                occluded.push((t.id, t.bbox()));
                if self.cfg.emit_occluded {
                    emitted.push((t.id, t.bbox()));
                }
            }
        }
        emitted.sort_by_key(|e| e.0);
        occluded.sort_by_key(|e| e.0);

        Ok(FrameOutput { frame, emitted, occluded, diagnostics: diag })
    }
}
