//! Seeded synthetic sequences: ground truth on exact linear trajectories and
//! a degraded detector (jitter, misses, occlusion by nearer actors).
//!
//! Depth is inferred from box area: of two overlapping actors the larger
//! one is nearer the camera. Every actor draws from its own ChaCha8 stream
//! (`seed`, stream = actor index), and draws the same amount per frame, so
//! adding or changing one actor never perturbs another actor's noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{covered_percent, BoundingBox};
use crate::mot_io::{FrameMap, FrameRecord, SequenceInfo};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    /// First frame the actor is present (1-based, inclusive).
    pub entry: u64,
    /// Last frame the actor is present (inclusive).
    pub exit: u64,
    /// `[left, top, width, height]` at the entry frame.
    pub start: [f64; 4],
    /// Pixels per frame along x and y.
    pub velocity: [f64; 2],
}

impl ActorSpec {
    pub fn box_at(&self, frame: u64) -> Option<BoundingBox<f64>> {
        if frame < self.entry || frame > self.exit {
            return None;
        }
        let k = (frame - self.entry) as f64;
        let [l, t, w, h] = self.start;
        BoundingBox::from_ltwh(l + self.velocity[0] * k, t + self.velocity[1] * k, w, h).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OcclusionRule {
    /// Detections ignore other actors.
    None,
    /// An actor whose box is covered by a nearer actor by more than
    /// `max_coverage` is not detected.
    Suppress { max_coverage: f64 },
    /// As `Suppress`, and partially covered actors are detected with the box
    /// of their visible remainder.
    Shrink { max_coverage: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorModel {
    pub miss_probability: f64,
    /// Standard deviation of the Gaussian noise on each of left, top, width and height.
    pub jitter_sigma: f64,
    /// Scores are uniform on `[lo, hi]`.
    pub score_range: [f64; 2],
    pub occlusion: OcclusionRule,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            miss_probability: 0.0,
            jitter_sigma: 0.0,
            score_range: [0.5, 1.0],
            occlusion: OcclusionRule::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    pub frame_count: u64,
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub detector: DetectorModel,
}

/// Generated sequence. Ground-truth rows carry the considered flag (0 while
/// the actor is suppressed by occlusion), class 1 and the visible fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub info: SequenceInfo,
    pub ground_truth: FrameMap<T>,
    pub detections: FrameMap<T>,
    /// Frames in which each actor was hidden by the occlusion rule.
    pub hidden: Vec<Vec<u64>>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.frame_count < 1 {
            return bad("frame_count must be >= 1".into());
        }
        for (i, a) in self.actors.iter().enumerate() {
            if !(a.entry >= 1 && a.entry < a.exit && a.exit <= self.frame_count) {
                return bad(format!("actor {i}: need 1 <= entry < exit <= frame_count, got {}..{}", a.entry, a.exit));
            }
            let [l, t, w, h] = a.start;
            if ![l, t, w, h, a.velocity[0], a.velocity[1]].iter().all(|v| v.is_finite()) || !(w > 0.0 && h > 0.0) {
                return bad(format!("actor {i}: box must be finite with positive size"));
            }
        }
        let d = &self.detector;
        if !(0.0..=1.0).contains(&d.miss_probability) {
            return bad("miss_probability must lie in [0, 1]".into());
        }
        if !(d.jitter_sigma >= 0.0 && d.jitter_sigma.is_finite()) {
            return bad("jitter_sigma must be finite and >= 0".into());
        }
        if !(d.score_range[0] <= d.score_range[1] && d.score_range.iter().all(|s| s.is_finite())) {
            return bad("score_range must be an ordered finite pair".into());
        }
        match d.occlusion {
            OcclusionRule::Suppress { max_coverage } | OcclusionRule::Shrink { max_coverage }
                if !(0.0..=1.0).contains(&max_coverage) =>
            {
                bad("max_coverage must lie in [0, 1]".into())
            }
            _ => Ok(()),
        }
    }

    /// Two pedestrians: a small far one walks behind a larger near one and
    /// is fully hidden in frames 25 to 29.
    pub fn crossing() -> Self {
        Self {
            name: Some("crossing".into()),
            seed: 17,
            frame_count: 60,
            actors: vec![
                ActorSpec { entry: 1, exit: 60, start: [300.0, 100.0, 60.0, 120.0], velocity: [1.0, 0.0] },
                ActorSpec { entry: 1, exit: 60, start: [206.0, 120.0, 40.0, 80.0], velocity: [5.0, 0.0] },
            ],
            detector: DetectorModel {
                miss_probability: 0.0,
                jitter_sigma: 1.0,
                score_range: [0.6, 1.0],
                occlusion: OcclusionRule::Suppress { max_coverage: 0.99 },
            },
        }
    }

    /// Actors in horizontal lanes 700 px apart, entering and leaving at
    /// random frames. Lanes are too far apart for an extended box (at most
    /// ten times the box height at the default settings) to reach across.
    pub fn lanes(seed: u64, actors: usize, frame_count: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actors = (0..actors)
            .map(|i| {
                let entry = rng.random_range(1..frame_count / 2);
                let exit = rng.random_range(entry + 10..frame_count);
                let h = rng.random_range(60.0..100.0);
                let w = h * rng.random_range(0.35..0.5);
                let speed = rng.random_range(0.5..4.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let x = rng.random_range(300.0..900.0);
                ActorSpec { entry, exit, start: [x, 700.0 * i as f64, w, h], velocity: [speed, 0.0] }
            })
            .collect();
        Self {
            name: Some(format!("lanes-{seed}")),
            seed,
            frame_count,
            actors,
            detector: DetectorModel { jitter_sigma: 0.5, ..DetectorModel::default() },
        }
    }

    /// `rows * cols` slowly drifting actors on a regular grid, present in every frame.
    pub fn grid(seed: u64, rows: usize, cols: usize, frame_count: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let drift = 40.0 / frame_count as f64;
        let mut actors = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let h = rng.random_range(70.0..100.0);
                let w = h * 0.4;
                actors.push(ActorSpec {
                    entry: 1,
                    exit: frame_count,
                    start: [60.0 + c as f64 * 150.0, 60.0 + r as f64 * 160.0, w, h],
                    velocity: [rng.random_range(-drift..drift), rng.random_range(-drift..drift)],
                });
            }
        }
        Self {
            name: Some(format!("grid-{seed}")),
            seed,
            frame_count: frame_count.max(2),
            actors,
            detector: DetectorModel { jitter_sigma: 1.0, ..DetectorModel::default() },
        }
    }
}

/// Bounding box of the part of `b` that `cover` leaves visible, when that
/// part is a single strip; `b` itself otherwise.
fn visible_remainder(b: &BoundingBox<f64>, cover: &BoundingBox<f64>) -> BoundingBox<f64> {
    let mut out = *b;
    if cover.top <= b.top && cover.bottom >= b.bottom {
        let left_piece = cover.left > b.left;
        let right_piece = cover.right < b.right;
        match (left_piece, right_piece) {
            (true, false) => out.right = cover.left.min(b.right),
            (false, true) => out.left = cover.right.max(b.left),
            _ => {}
        }
    } else if cover.left <= b.left && cover.right >= b.right {
        let top_piece = cover.top > b.top;
        let bottom_piece = cover.bottom < b.bottom;
        match (top_piece, bottom_piece) {
            (true, false) => out.bottom = cover.top.min(b.bottom),
            (false, true) => out.top = cover.bottom.max(b.top),
            _ => {}
        }
    }
    out
}

/// Renders a scenario. Identical specs give identical output.
pub fn generate<T: Scalar>(spec: &ScenarioSpec) -> Result<Scenario<T>> {
    spec.validate()?;
    let det_model = &spec.detector;
    let jitter = Normal::new(0.0, det_model.jitter_sigma).map_err(|e| Error::InvalidScenario(e.to_string()))?;
    let mut streams: Vec<ChaCha8Rng> = (0..spec.actors.len())
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(spec.seed);
            r.set_stream(i as u64);
            r
        })
        .collect();
    let mut ground_truth = FrameMap::new();
    let mut detections = FrameMap::new();
    let mut hidden = vec![Vec::new(); spec.actors.len()];
    let cast = |v: f64| T::lit(v);

    for frame in 1..=spec.frame_count {
        let present: Vec<(usize, BoundingBox<f64>)> =
            spec.actors.iter().enumerate().filter_map(|(i, a)| a.box_at(frame).map(|b| (i, b))).collect();
        let mut gt_rows = Vec::new();
        let mut det_rows = Vec::new();
        for &(i, b) in &present {
            let nearer = |j: usize, other: &BoundingBox<f64>| {
                j != i && (other.area() > b.area() || (other.area() == b.area() && j < i))
            };
            let mut coverage = 0.0;
            let mut coverer = None;
            for &(j, o) in &present {
                if nearer(j, &o) {
                    let c = covered_percent(&b, &o)?;
                    if c > coverage {
                        coverage = c;
                        coverer = Some(o);
                    }
                }
            }
            let (suppressed, visible) = match det_model.occlusion {
                OcclusionRule::None => (false, b),
                OcclusionRule::Suppress { max_coverage } => (coverage > max_coverage, b),
                OcclusionRule::Shrink { max_coverage } => {
                    let vis = coverer.map_or(b, |o| visible_remainder(&b, &o));
                    (coverage > max_coverage, vis)
                }
            };
            if suppressed {
                hidden[i].push(frame);
            }
            let [l, t, w, h] = b.to_ltwh();
            let id = i as i64 + 1;
            gt_rows.push(FrameRecord {
                frame,
                id,
                left: cast(l),
                top: cast(t),
                width: cast(w),
                height: cast(h),
                score: if suppressed { T::zero() } else { T::one() },
                world: [T::one(), cast(1.0 - coverage), -T::one()],
            });

            // fixed number of draws per present frame
            let rng = &mut streams[i];
            let missed = rng.random::<f64>() < det_model.miss_probability;
            let noise: [f64; 4] = std::array::from_fn(|_| jitter.sample(rng));
            let u: f64 = rng.random();
            let score = det_model.score_range[0] + u * (det_model.score_range[1] - det_model.score_range[0]);
            if suppressed || missed {
                continue;
            }
            let [vl, vt, vw, vh] = visible.to_ltwh();
            det_rows.push(FrameRecord {
                frame,
                id: -1,
                left: cast(vl + noise[0]),
                top: cast(vt + noise[1]),
                width: cast((vw + noise[2]).max(1.0)),
                height: cast((vh + noise[3]).max(1.0)),
                score: cast(score),
                world: [-T::one(); 3],
            });
        }
        if !gt_rows.is_empty() {
            ground_truth.insert(frame, gt_rows);
        }
        if !det_rows.is_empty() {
            detections.insert(frame, det_rows);
        }
    }

    Ok(Scenario {
        info: SequenceInfo {
            name: spec.name.clone().unwrap_or_else(|| format!("synthetic-{}", spec.seed)),
            frame_count: spec.frame_count,
            frame_rate: 30.0,
            image_width: 1920,
            image_height: 1080,
        },
        ground_truth,
        detections,
        hidden,
    })
}
