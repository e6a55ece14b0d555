//! MOTChallenge text formats: detection/ground-truth CSV rows, submission
//! files and `seqinfo.ini`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::scalar::Scalar;
use crate::tracker::{Detection, FrameOutput};

/// One CSV row: `frame, id, left, top, width, height, score[, x, y, z]`.
///
/// In ground-truth files the score column is the "considered" flag and the
/// trailing columns carry class and visibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord<T> {
    pub frame: u64,
    pub id: i64,
    pub left: T,
    pub top: T,
    pub width: T,
    pub height: T,
    pub score: T,
    pub world: [T; 3],
}

impl<T: Scalar> FrameRecord<T> {
    pub fn from_box(frame: u64, id: i64, bb: &BoundingBox<T>, score: T) -> Self {
        let [left, top, width, height] = bb.to_ltwh();
        let m1 = -T::one();
        Self { frame, id, left, top, width, height, score, world: [m1, m1, m1] }
    }

    pub fn bbox(&self) -> Result<BoundingBox<T>> {
        BoundingBox::from_ltwh(self.left, self.top, self.width, self.height)
    }

    /// Ground-truth rows with a zero flag are excluded from scoring.
    pub fn is_considered(&self) -> bool {
        self.score != T::zero()
    }
}

pub type FrameMap<T> = BTreeMap<u64, Vec<FrameRecord<T>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRecords<T> {
    pub frames: FrameMap<T>,
    /// Well-formed rows dropped for a nonpositive width or height.
    pub rejected: usize,
}

impl<T> ParsedRecords<T> {
    pub fn record_count(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }
}

fn parse_integer(field: &str, what: &str, line: usize) -> Result<i64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("{what} '{field}' is not a number") })?;
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::Parse { line, message: format!("{what} '{field}' is not an integer") });
    }
    Ok(v as i64)
}

fn parse_scalar<T: Scalar>(field: &str, what: &str, line: usize) -> Result<T> {
    field
        .parse::<T>()
        .map_err(|_| Error::Parse { line, message: format!("{what} '{field}' is not a number") })
}

/// Reads MOTChallenge rows, grouping them by frame in file order. Blank
/// lines are skipped.
pub fn parse_detections<T: Scalar, R: BufRead>(reader: R) -> Result<ParsedRecords<T>> {
    let mut frames: FrameMap<T> = BTreeMap::new();
    let mut rejected = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() < 7 {
            return Err(Error::Parse { line: line_no, message: format!("expected at least 7 columns, found {}", fields.len()) });
        }
        let frame = parse_integer(fields[0], "frame", line_no)?;
        if frame < 1 {
            return Err(Error::Parse { line: line_no, message: format!("frame {frame} must be >= 1") });
        }
        let id = parse_integer(fields[1], "id", line_no)?;
        let left: T = parse_scalar(fields[2], "left", line_no)?;
        let top: T = parse_scalar(fields[3], "top", line_no)?;
        let width: T = parse_scalar(fields[4], "width", line_no)?;
        let height: T = parse_scalar(fields[5], "height", line_no)?;
        let score: T = parse_scalar(fields[6], "score", line_no)?;
        let mut world = [-T::one(); 3];
        for (k, f) in fields.iter().skip(7).take(3).enumerate() {
            world[k] = parse_scalar(f, "world coordinate", line_no)?;
        }
        if ![left, top, width, height, score].iter().all(|v| v.is_finite()) {
            return Err(Error::Parse { line: line_no, message: "non-finite value".into() });
        }
        if !(width > T::zero() && height > T::zero()) {
            log::warn!("line {line_no}: rejected box with size {width}x{height}");
            rejected += 1;
            continue;
        }
        frames.entry(frame as u64).or_default().push(FrameRecord {
            frame: frame as u64,
            id,
            left,
            top,
            width,
            height,
            score,
            world,
        });
    }
    Ok(ParsedRecords { frames, rejected })
}

pub fn parse_str<T: Scalar>(text: &str) -> Result<ParsedRecords<T>> {
    parse_detections(text.as_bytes())
}

/// Keeps records with `score >= min_score`.
pub fn threshold_detections<T: Scalar>(records: &FrameMap<T>, min_score: T) -> FrameMap<T> {
    records
        .iter()
        .filter_map(|(f, rows)| {
            let kept: Vec<_> = rows.iter().filter(|r| r.score >= min_score).copied().collect();
            (!kept.is_empty()).then_some((*f, kept))
        })
        .collect()
}

/// Ground-truth classes that are neither scored nor penalized when tracked
/// (person on vehicle, static person, distractor, reflection).
pub const DISTRACTOR_CLASSES: [i64; 4] = [2, 7, 8, 12];

/// Prepares benchmark ground truth for scoring: pedestrians (class 1, or no
/// class column) are kept, distractor classes are kept with a zero flag so
/// hypotheses on them are excused, every other class is dropped.
pub fn pedestrian_ground_truth<T: Scalar>(records: &FrameMap<T>) -> FrameMap<T> {
    records
        .iter()
        .filter_map(|(f, rows)| {
            let kept: Vec<_> = rows
                .iter()
                .filter_map(|r| {
                    let class = r.world[0].to_i64().unwrap_or(-1);
                    if class == 1 || class < 0 {
                        Some(*r)
                    } else if DISTRACTOR_CLASSES.contains(&class) {
                        Some(FrameRecord { score: T::zero(), ..*r })
                    } else {
                        None
                    }
                })
                .collect();
            (!kept.is_empty()).then_some((*f, kept))
        })
        .collect()
}

pub fn to_detections<T: Scalar>(rows: &[FrameRecord<T>]) -> Vec<Detection<T>> {
    rows.iter().filter_map(|r| r.bbox().ok().map(|b| Detection::new(b, r.score))).collect()
}

#[inline]
fn fmt2<T: Scalar>(v: T) -> String {
    let s = format!("{v:.2}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|c| c == b'0' || c == b'.') => rest.to_string(),
        _ => s,
    }
}

/// Submission rows `frame,id,left,top,width,height,1,-1,-1,-1`, sorted by
/// frame then id, coordinates with two decimals.
pub fn format_results<T: Scalar>(outputs: &[FrameOutput<T>]) -> String {
    let mut rows: Vec<(u64, u64, BoundingBox<T>)> =
        outputs.iter().flat_map(|o| o.emitted.iter().map(move |(id, b)| (o.frame, *id, *b))).collect();
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = String::new();
    for (frame, id, b) in rows {
        let [l, t, w, h] = b.to_ltwh();
        let _ = writeln!(out, "{frame},{id},{},{},{},{},1,-1,-1,-1", fmt2(l), fmt2(t), fmt2(w), fmt2(h));
    }
    out
}

pub fn write_results<T: Scalar, W: Write>(outputs: &[FrameOutput<T>], mut w: W) -> io::Result<()> {
    w.write_all(format_results(outputs).as_bytes())
}

/// Writes records in file order: `frame,id,l,t,w,h,score,x,y,z`.
pub fn write_records<T: Scalar, W: Write>(records: &FrameMap<T>, mut w: W) -> io::Result<()> {
    let mut out = String::new();
    for r in records.values().flatten() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.frame,
            r.id,
            fmt2(r.left),
            fmt2(r.top),
            fmt2(r.width),
            fmt2(r.height),
            r.score + T::zero(),
            r.world[0],
            r.world[1],
            r.world[2]
        );
    }
    w.write_all(out.as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInfo {
    pub name: String,
    pub frame_count: u64,
    pub frame_rate: f64,
    pub image_width: u32,
    pub image_height: u32,
}

/// Parses `key=value` lines of a `seqinfo.ini`. Section headers and unknown
/// keys are ignored.
pub fn parse_seqinfo(text: &str) -> Result<SequenceInfo> {
    let mut name = None;
    let mut frame_count = None;
    let mut frame_rate = 0.0;
    let mut image_width = 0;
    let mut image_height = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('[') || line.starts_with(';') || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse { line: idx + 1, message: format!("expected key=value, got '{line}'") });
        };
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| Error::Parse { line: idx + 1, message: format!("{what} '{value}' is invalid") };
        match key {
            "name" => name = Some(value.to_string()),
            "seqLength" => frame_count = Some(value.parse::<u64>().map_err(|_| bad("seqLength"))?),
            "frameRate" => frame_rate = value.parse::<f64>().map_err(|_| bad("frameRate"))?,
            "imWidth" => image_width = value.parse::<u32>().map_err(|_| bad("imWidth"))?,
            "imHeight" => image_height = value.parse::<u32>().map_err(|_| bad("imHeight"))?,
            _ => {}
        }
    }
    let frame_count = frame_count.ok_or(Error::Parse { line: 0, message: "missing seqLength".into() })?;
    if frame_count < 1 {
        return Err(Error::Parse { line: 0, message: "seqLength must be >= 1".into() });
    }
    Ok(SequenceInfo {
        name: name.unwrap_or_default(),
        frame_count,
        frame_rate,
        image_width,
        image_height,
    })
}

pub fn format_seqinfo(info: &SequenceInfo) -> String {
    format!(
        "[Sequence]\nname={}\nimDir=img1\nframeRate={}\nseqLength={}\nimWidth={}\nimHeight={}\nimExt=.jpg\n",
        info.name, info.frame_rate, info.frame_count, info.image_width, info.image_height
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::Diagnostics;

    #[test]
    fn parses_one_row() {
        let p = parse_str::<f64>("1,-1,10,20,30,40,0.9").unwrap();
        let r = p.frames[&1][0];
        assert_eq!((r.frame, r.id), (1, -1));
        assert_eq!(r.bbox().unwrap().to_ltwh(), [10., 20., 30., 40.]);
        assert_eq!(r.score, 0.9);
        assert_eq!(r.world, [-1.0; 3]);
    }

    #[test]
    fn empty_and_blank_input() {
        assert!(parse_str::<f64>("").unwrap().frames.is_empty());
        assert!(parse_str::<f64>("\n  \n").unwrap().frames.is_empty());
    }

    #[test]
    fn rejects_nonpositive_size_with_count() {
        let p = parse_str::<f64>("1,-1,10,20,-5,40,0.9\n1,-1,10,20,5,40,0.9").unwrap();
        assert_eq!(p.rejected, 1);
        assert_eq!(p.record_count(), 1);
    }

    #[test]
    fn malformed_rows_name_their_line() {
        match parse_str::<f64>("1,-1,10,20,30,40,0.9\n2,-1,abc,20,30,40,0.9") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_str::<f64>("1,-1,10,20"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_str::<f64>("0,-1,10,20,1,1,1"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn keeps_file_order_within_frame() {
        let p = parse_str::<f32>("2,-1,5,5,1,1,0.5\n1,-1,0,0,1,1,0.5\n2,-1,1,1,1,1,0.7,1,2,3").unwrap();
        assert_eq!(p.frames[&2].iter().map(|r| r.left).collect::<Vec<_>>(), vec![5.0, 1.0]);
        assert_eq!(p.frames[&2][1].world, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn ground_truth_classes() {
        let text = "1,1,0,0,5,5,1,1,1\n1,2,0,0,5,5,1,7,1\n1,3,0,0,5,5,1,3,1\n1,4,0,0,5,5,0,1,0.1\n";
        let gt = pedestrian_ground_truth(&parse_str::<f64>(text).unwrap().frames);
        let rows: Vec<(i64, f64)> = gt[&1].iter().map(|r| (r.id, r.score)).collect();
        assert_eq!(rows, vec![(1, 1.0), (2, 0.0), (4, 0.0)]);
    }

    #[test]
    fn threshold_is_inclusive() {
        let p = parse_str::<f64>("1,-1,0,0,1,1,0.2\n1,-1,0,0,1,1,0.3\n1,-1,0,0,1,1,0.9").unwrap();
        let kept = threshold_detections(&p.frames, 0.3);
        assert_eq!(kept[&1].iter().map(|r| r.score).collect::<Vec<_>>(), vec![0.3, 0.9]);
        assert_eq!(threshold_detections(&p.frames, 0.0)[&1].len(), 3);
        assert!(threshold_detections(&p.frames, 1.1).is_empty());
    }

    fn output(frame: u64, emitted: Vec<(u64, BoundingBox<f64>)>) -> FrameOutput<f64> {
        FrameOutput { frame, emitted, occluded: vec![], diagnostics: Diagnostics::default() }
    }

    #[test]
    fn result_format() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(format_results(&[output(7, vec![(3, b)])]), "7,3,0.00,0.00,10.00,10.00,1,-1,-1,-1\n");
        assert_eq!(format_results::<f64>(&[]), "");
        let c = BoundingBox::new(-0.001, 1.234, 5.5, 9.0).unwrap();
        let text = format_results(&[output(2, vec![(9, b), (4, c)]), output(1, vec![(5, b)])]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "1,5,0.00,0.00,10.00,10.00,1,-1,-1,-1");
        assert_eq!(lines[1], "2,4,0.00,1.23,5.50,7.77,1,-1,-1,-1");
        assert_eq!(lines[2], "2,9,0.00,0.00,10.00,10.00,1,-1,-1,-1");
    }

    #[test]
    fn results_round_trip_at_printed_precision() {
        let boxes: Vec<(u64, BoundingBox<f64>)> = (0..50)
            .map(|i| {
                let x = i as f64 * 13.377 - 100.0;
                (i + 1, BoundingBox::from_ltwh(x, x * 0.31, 10.0 + i as f64 * 0.777, 33.3331).unwrap())
            })
            .collect();
        let text = format_results(&[output(4, boxes.clone())]);
        let back = parse_str::<f64>(&text).unwrap();
        for (rec, (id, b)) in back.frames[&4].iter().zip(&boxes) {
            assert_eq!(rec.id as u64, *id);
            for (x, y) in rec.bbox().unwrap().to_ltwh().iter().zip(b.to_ltwh()) {
                assert!((x - y).abs() <= 0.01, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn seqinfo_round_trip() {
        let text = "[Sequence]\nname=MOT17-02-DPM\nimDir=img1\nframeRate=30\nseqLength=600\nimWidth=1920\nimHeight=1080\nimExt=.jpg\n";
        let info = parse_seqinfo(text).unwrap();
        assert_eq!(info.name, "MOT17-02-DPM");
        assert_eq!((info.frame_count, info.image_width, info.image_height), (600, 1920, 1080));
        assert_eq!(parse_seqinfo(&format_seqinfo(&info)).unwrap(), info);
        assert!(parse_seqinfo("[Sequence]\nname=x\n").is_err());
        assert!(parse_seqinfo("seqLength=zero").is_err());
    }
}
