//! Text file formats: MOT detection/result rows, the embedding sidecar, the
//! camera transform sidecar and the evaluation report.
//!
//! MOT rows are `frame,target_id,left,top,width,height,score,category,
//! truncation,occlusion`. Truncation and occlusion are accepted on input and
//! written as zeros. Detection ordinals (the embedding sidecar key) are the
//! 0-based position of a row within its frame, in file order; every writer
//! here emits rows in a canonical order so ordinals are reproducible.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::appearance::{Embedding, EmbeddingProvider, EmbeddingTable};
use crate::camera::{AffineTransform, TransformTable};
use crate::evalsim::EvalReport;
use crate::model::{BBox, Detection, Entry, Tracklet, Trajectory};
use crate::online::ClassMap;
use crate::{Error, Result};

/// One parsed MOT text row.
#[derive(Debug, Clone, PartialEq)]
pub struct MotRow {
    pub frame: i64,
    pub target_id: i64,
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub score: f64,
    pub category: u32,
}

impl MotRow {
    fn bbox(&self) -> Result<BBox> {
        BBox::new(self.left, self.top, self.width, self.height)
    }

    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},0,0",
            self.frame,
            self.target_id,
            self.left,
            self.top,
            self.width,
            self.height,
            self.score,
            self.category
        )
    }
}

fn parse_error(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Parses MOT rows from text. `path` labels parse errors.
pub fn parse_mot_rows(text: &str, path: &str) -> Result<Vec<MotRow>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 8 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected at least 8 comma-separated fields, found {}", fields.len()),
            ));
        }
        let num = |idx: usize, name: &str| -> Result<f64> {
            fields[idx]
                .parse::<f64>()
                .map_err(|_| parse_error(path, line_no, format!("invalid {name} '{}'", fields[idx])))
        };
        let int = |idx: usize, name: &str| -> Result<i64> {
            fields[idx]
                .parse::<i64>()
                .map_err(|_| parse_error(path, line_no, format!("invalid {name} '{}'", fields[idx])))
        };
        let row = MotRow {
            frame: int(0, "frame")?,
            target_id: int(1, "target id")?,
            left: num(2, "left")?,
            top: num(3, "top")?,
            width: num(4, "width")?,
            height: num(5, "height")?,
            score: num(6, "score")?,
            category: int(7, "category")? as u32,
        };
        if row.frame < 1 {
            return Err(parse_error(path, line_no, format!("frame {} < 1", row.frame)));
        }
        row.bbox()
            .map_err(|e| parse_error(path, line_no, e.to_string()))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Assigns each row its 0-based ordinal within its frame, in file order.
fn frame_ordinals(rows: &[MotRow]) -> Vec<usize> {
    let mut counters: BTreeMap<i64, usize> = BTreeMap::new();
    rows.iter()
        .map(|r| {
            let c = counters.entry(r.frame).or_insert(0);
            let v = *c;
            *c += 1;
            v
        })
        .collect()
}

/// Reads a detection file. Ordinals key the embedding sidecar; rows are
/// returned sorted by frame with within-frame file order preserved.
pub fn read_detections(text: &str, path: &str) -> Result<Vec<Detection>> {
    let rows = parse_mot_rows(text, path)?;
    let ordinals = frame_ordinals(&rows);
    let mut dets: Vec<Detection> = rows
        .iter()
        .zip(ordinals)
        .map(|(r, det_idx)| {
            Ok(Detection {
                frame: r.frame,
                bbox: r.bbox()?,
                score: r.score,
                class_id: r.category,
                det_idx,
            })
        })
        .collect::<Result<_>>()?;
    for d in &dets {
        d.validate()?;
    }
    dets.sort_by_key(|d| d.frame);
    Ok(dets)
}

pub fn write_detections(detections: &[Detection]) -> String {
    let mut rows: Vec<MotRow> = detections
        .iter()
        .map(|d| MotRow {
            frame: d.frame,
            target_id: -1,
            left: d.bbox.left,
            top: d.bbox.top,
            width: d.bbox.width,
            height: d.bbox.height,
            score: d.score,
            category: d.class_id,
        })
        .collect();
    rows.sort_by(|a, b| (a.frame).cmp(&b.frame));
    let mut out = String::new();
    for r in rows {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// Reads tracklets: rows grouped by target id. Rows sharing (id, frame) are
/// the per-class copies of one voted entry and collapse back into it (same
/// box, summed score, top-scored class). Every tracklet must stay within one
/// rough class.
pub fn read_tracklets(text: &str, path: &str, class_map: &ClassMap) -> Result<Vec<Tracklet>> {
    let rows = parse_mot_rows(text, path)?;
    let ordinals = frame_ordinals(&rows);

    let mut groups: BTreeMap<i64, BTreeMap<i64, Vec<(&MotRow, usize)>>> = BTreeMap::new();
    for (row, ordinal) in rows.iter().zip(ordinals) {
        groups
            .entry(row.target_id)
            .or_default()
            .entry(row.frame)
            .or_default()
            .push((row, ordinal));
    }

    let mut tracklets = Vec::with_capacity(groups.len());
    for (id, frames) in groups {
        let mut entries = Vec::with_capacity(frames.len());
        for (frame, copies) in frames {
            let (first, ordinal) = copies[0];
            for (other, _) in &copies[1..] {
                if (other.left, other.top, other.width, other.height)
                    != (first.left, first.top, first.width, first.height)
                {
                    return Err(Error::input(format!(
                        "{path}: trajectory {id} has conflicting boxes in frame {frame}"
                    )));
                }
            }
            let score: f64 = copies.iter().map(|(r, _)| r.score).sum();
            let top_class = copies
                .iter()
                .max_by(|(a, _), (b, _)| {
                    a.score
                        .partial_cmp(&b.score)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(b.category.cmp(&a.category))
                })
                .map(|(r, _)| r.category)
                .expect("non-empty copies");
            entries.push(
                Entry::new(frame, first.bbox()?, score.min(1.0), top_class).with_det_idx(ordinal),
            );
        }
        let rough_class = class_map.rough(entries[0].class_id)?;
        for e in &entries {
            if class_map.rough(e.class_id)? != rough_class {
                return Err(Error::input(format!(
                    "{path}: tracklet {id} mixes rough classes"
                )));
            }
        }
        let t = Tracklet {
            id,
            entries,
            rough_class,
        };
        t.validate()?;
        tracklets.push(t);
    }
    Ok(tracklets)
}

/// Reads per-class trajectories: rows grouped by (target id, category). Used
/// by the post-processing, fusion and evaluation stages.
pub fn read_trajectories(text: &str, path: &str) -> Result<Vec<Trajectory>> {
    let rows = parse_mot_rows(text, path)?;
    let ordinals = frame_ordinals(&rows);
    let mut groups: BTreeMap<(i64, u32), Vec<(&MotRow, usize)>> = BTreeMap::new();
    for (row, ordinal) in rows.iter().zip(ordinals) {
        groups
            .entry((row.target_id, row.category))
            .or_default()
            .push((row, ordinal));
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((id, category), mut rows) in groups {
        rows.sort_by_key(|(r, _)| r.frame);
        let entries: Vec<Entry> = rows
            .iter()
            .map(|(r, ordinal)| {
                Ok(Entry::new(r.frame, r.bbox()?, r.score, r.category).with_det_idx(*ordinal))
            })
            .collect::<Result<_>>()?;
        let mut t = Trajectory::from_entries(id, entries);
        t.class_votes = vec![(category, 1.0)];
        t.validate().map_err(|e| {
            Error::input(format!("{path}: {e}"))
        })?;
        out.push(t);
    }
    Ok(out)
}

fn trajectory_rows(trajectories: &[Trajectory]) -> Vec<MotRow> {
    let mut rows = Vec::new();
    for t in trajectories {
        if t.class_votes.is_empty() {
            for e in &t.entries {
                rows.push(MotRow {
                    frame: e.frame,
                    target_id: t.id,
                    left: e.bbox.left,
                    top: e.bbox.top,
                    width: e.bbox.width,
                    height: e.bbox.height,
                    score: e.score,
                    category: e.class_id,
                });
            }
        } else {
            for (class_id, weight) in &t.class_votes {
                for e in &t.entries {
                    rows.push(MotRow {
                        frame: e.frame,
                        target_id: t.id,
                        left: e.bbox.left,
                        top: e.bbox.top,
                        width: e.bbox.width,
                        height: e.bbox.height,
                        score: e.score * weight,
                        category: *class_id,
                    });
                }
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.target_id, a.frame, a.category).cmp(&(b.target_id, b.frame, b.category))
    });
    rows
}

/// Writes trajectories in the canonical row order. Trajectories with class
/// votes emit one row per kept class and entry, with the entry score scaled
/// by the vote weight; un-voted trajectories emit their per-entry classes.
pub fn write_trajectories(trajectories: &[Trajectory]) -> String {
    let mut out = String::new();
    for r in trajectory_rows(trajectories) {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// Writes tracklets as raw rows (per-entry class and score).
pub fn write_tracklets(tracklets: &[Tracklet]) -> String {
    let trajs: Vec<Trajectory> = tracklets
        .iter()
        .map(|t| Trajectory::from_entries(t.id, t.entries.clone()))
        .collect();
    write_trajectories(&trajs)
}

/// Writes tracklets plus an embedding sidecar re-keyed to the written file:
/// each output row's ordinal within its frame becomes the sidecar key for
/// that entry's embedding.
pub fn write_tracklets_with_embeddings(
    tracklets: &[Tracklet],
    embeddings: &dyn EmbeddingProvider,
) -> (String, Option<String>) {
    let trajs: Vec<Trajectory> = tracklets
        .iter()
        .map(|t| Trajectory::from_entries(t.id, t.entries.clone()))
        .collect();
    let rows = trajectory_rows(&trajs);

    // map (id, frame) -> original det ordinal, to look embeddings up
    let mut original: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for t in tracklets {
        for e in &t.entries {
            original.insert((t.id, e.frame), e.det_idx);
        }
    }

    let mut text = String::new();
    let mut counters: BTreeMap<i64, usize> = BTreeMap::new();
    let mut sidecar: Vec<(i64, usize, Embedding)> = Vec::new();
    for r in &rows {
        let ordinal = {
            let c = counters.entry(r.frame).or_insert(0);
            let v = *c;
            *c += 1;
            v
        };
        if let Some(&orig_idx) = original.get(&(r.target_id, r.frame)) {
            if let Some(e) = embeddings.get(r.frame, orig_idx) {
                sidecar.push((r.frame, ordinal, e.clone()));
            }
        }
        text.push_str(&r.to_line());
        text.push('\n');
    }

    if sidecar.is_empty() {
        (text, None)
    } else {
        let dim = sidecar[0].2.dim();
        let mut table = EmbeddingTable::new(dim);
        for (frame, ordinal, e) in sidecar {
            table
                .insert(frame, ordinal, e)
                .expect("consistent embedding dimensions");
        }
        let side_text = write_embeddings(&table);
        (text, Some(side_text))
    }
}

/// Embedding sidecar: `dim=D` header, then `frame,det_idx,v0,...,v{D-1}`.
pub fn write_embeddings(table: &EmbeddingTable) -> String {
    let mut keys: Vec<(i64, usize)> = table.keys().collect();
    keys.sort_unstable();
    let mut out = String::new();
    let dim = table.dim().unwrap_or(0);
    let _ = writeln!(out, "dim={dim}");
    for (frame, det_idx) in keys {
        let e = table.get(frame, det_idx).expect("key from table");
        let mut line = format!("{frame},{det_idx}");
        for v in e.values() {
            let _ = write!(line, ",{v}");
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn read_embeddings(text: &str, path: &str) -> Result<EmbeddingTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "empty embedding sidecar"))?;
    let dim: usize = header
        .trim()
        .strip_prefix("dim=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_error(path, 1, "expected header 'dim=D'"))?;
    if dim == 0 {
        return Err(parse_error(path, 1, "embedding dimension must be positive"));
    }
    let mut table = EmbeddingTable::new(dim);
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 2 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected {} fields, found {}", dim + 2, fields.len()),
            ));
        }
        let frame: i64 = fields[0]
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("invalid frame '{}'", fields[0])))?;
        let det_idx: usize = fields[1]
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("invalid det_idx '{}'", fields[1])))?;
        let values: Vec<f64> = fields[2..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_error(path, line_no, format!("invalid value '{f}'")))
            })
            .collect::<Result<_>>()?;
        let e = Embedding::new(values).map_err(|e| parse_error(path, line_no, e.to_string()))?;
        table
            .insert(frame, det_idx, e)
            .map_err(|e| parse_error(path, line_no, e.to_string()))?;
    }
    Ok(table)
}

/// Transform sidecar: `frame,a11,a12,a21,a22,tx,ty`; frames without a line
/// are identity.
pub fn write_transforms(table: &TransformTable) -> String {
    let mut out = String::new();
    for (frame, t) in table.iter() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            frame, t.a11, t.a12, t.a21, t.a22, t.tx, t.ty
        );
    }
    out
}

pub fn read_transforms(text: &str, path: &str) -> Result<TransformTable> {
    let mut table = TransformTable::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let frame: i64 = fields[0]
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("invalid frame '{}'", fields[0])))?;
        let vals: Vec<f64> = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_error(path, line_no, format!("invalid value '{f}'")))
            })
            .collect::<Result<_>>()?;
        let t = AffineTransform::new(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5])
            .map_err(|e| parse_error(path, line_no, e.to_string()))?;
        table.insert(frame, t);
    }
    Ok(table)
}

/// Machine-readable report: `key = value` lines.
pub fn write_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "map = {}", report.map);
    for c in &report.cells {
        let _ = writeln!(out, "ap/{}/{} = {}", c.class_id, c.threshold, c.ap);
        let _ = writeln!(out, "matched/{}/{} = {}", c.class_id, c.threshold, c.matched);
        let _ = writeln!(out, "missed/{}/{} = {}", c.class_id, c.threshold, c.missed);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appearance::NoEmbeddings;

    fn sample_rows() -> &'static str {
        "1,-1,100,50,20,40,0.9,4,0,0\n\
         1,-1,300,80,22,44,0.8,5,0,0\n\
         2,-1,101,50,20,40,0.85,4,0,0\n"
    }

    #[test]
    fn detections_round_trip_with_ordinals() {
        let dets = read_detections(sample_rows(), "det.txt").unwrap();
        assert_eq!(dets.len(), 3);
        assert_eq!(dets[0].det_idx, 0);
        assert_eq!(dets[1].det_idx, 1);
        assert_eq!(dets[2].det_idx, 0);
        let text = write_detections(&dets);
        let again = read_detections(&text, "det2.txt").unwrap();
        assert_eq!(dets.len(), again.len());
        for (a, b) in dets.iter().zip(again.iter()) {
            assert_eq!(a.bbox, b.bbox);
            assert_eq!(a.score, b.score);
            assert_eq!(a.det_idx, b.det_idx);
        }
    }

    #[test]
    fn parse_error_cites_line() {
        let text = "1,-1,100,50,20,40,0.9,4,0,0\nbad line\n";
        let err = read_detections(text, "det.txt").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("det.txt:2"), "message was {msg}");
    }

    #[test]
    fn degenerate_box_rejected_with_line() {
        let text = "1,-1,100,50,0,40,0.9,4,0,0\n";
        let err = read_detections(text, "det.txt").unwrap_err();
        assert!(err.to_string().contains(":1"));
    }

    #[test]
    fn tracklet_round_trip() {
        let text = "1,7,100,50,20,40,0.9,4,0,0\n\
                    2,7,102,50,20,40,0.8,4,0,0\n\
                    1,9,300,80,22,44,0.7,1,0,0\n";
        let map = ClassMap::visdrone_default();
        let tracklets = read_tracklets(text, "trk.txt", &map).unwrap();
        assert_eq!(tracklets.len(), 2);
        let t7 = tracklets.iter().find(|t| t.id == 7).unwrap();
        assert_eq!(t7.entries.len(), 2);
        assert_eq!(t7.rough_class, 1);
        let out = write_tracklets(&tracklets);
        let again = read_tracklets(&out, "trk2.txt", &map).unwrap();
        assert_eq!(tracklets.len(), again.len());
        for (a, b) in tracklets.iter().zip(again.iter()) {
            assert_eq!(a.entries, b.entries);
        }
    }

    #[test]
    fn voted_rows_collapse_to_entries() {
        // two class rows of one entry: weights 0.6 / 0.4 over score 1.0
        let text = "5,3,100,50,20,40,0.6,4,0,0\n\
                    5,3,100,50,20,40,0.4,5,0,0\n\
                    6,3,102,50,20,40,0.54,4,0,0\n\
                    6,3,102,50,20,40,0.36,5,0,0\n";
        let map = ClassMap::visdrone_default();
        let tracklets = read_tracklets(text, "trk.txt", &map).unwrap();
        assert_eq!(tracklets.len(), 1);
        let t = &tracklets[0];
        assert_eq!(t.entries.len(), 2);
        assert!((t.entries[0].score - 1.0).abs() < 1e-12);
        assert_eq!(t.entries[0].class_id, 4);
        assert!((t.entries[1].score - 0.9).abs() < 1e-12);
    }

    #[test]
    fn mixed_rough_class_tracklet_rejected() {
        let text = "1,7,100,50,20,40,0.9,4,0,0\n\
                    2,7,102,50,20,40,0.8,1,0,0\n";
        let map = ClassMap::visdrone_default();
        assert!(read_tracklets(text, "trk.txt", &map).is_err());
    }

    #[test]
    fn trajectories_group_by_class() {
        let text = "1,7,100,50,20,40,0.9,4,0,0\n\
                    2,7,102,50,20,40,0.8,4,0,0\n\
                    1,7,100,50,20,40,0.1,5,0,0\n";
        let trajs = read_trajectories(text, "res.txt").unwrap();
        assert_eq!(trajs.len(), 2);
        assert_eq!(trajs[0].sole_class(), Some(4));
        assert_eq!(trajs[0].entries.len(), 2);
        assert_eq!(trajs[1].sole_class(), Some(5));
    }

    #[test]
    fn write_is_canonical_and_stable() {
        let text = "1,7,100,50,20,40,0.9,4,0,0\n\
                    2,7,102,50,20,40,0.8,4,0,0\n\
                    1,9,300,80,22,44,0.7,1,0,0\n";
        let trajs = read_trajectories(text, "res.txt").unwrap();
        let out = write_trajectories(&trajs);
        let again = read_trajectories(&out, "res2.txt").unwrap();
        let out2 = write_trajectories(&again);
        assert_eq!(out, out2);
    }

    #[test]
    fn voted_trajectory_writes_per_class_rows() {
        let text = "1,7,100,50,20,40,1,4,0,0\n";
        let mut trajs = read_trajectories(text, "res.txt").unwrap();
        trajs[0].class_votes = vec![(4, 0.75), (5, 0.25)];
        let out = write_trajectories(&trajs);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "1,7,100,50,20,40,0.75,4,0,0");
        assert_eq!(lines[1], "1,7,100,50,20,40,0.25,5,0,0");
    }

    #[test]
    fn embeddings_round_trip() {
        let mut table = EmbeddingTable::new(3);
        table
            .insert(1, 0, Embedding::new(vec![1.0, 0.0, 0.0]).unwrap())
            .unwrap();
        table
            .insert(2, 1, Embedding::new(vec![0.5, 0.5, 0.5]).unwrap())
            .unwrap();
        let text = write_embeddings(&table);
        assert!(text.starts_with("dim=3\n"));
        let again = read_embeddings(&text, "emb.txt").unwrap();
        assert_eq!(again.len(), 2);
        let e = again.get(2, 1).unwrap();
        let n = (3.0f64 * 0.25).sqrt();
        assert!((e.values()[0] - 0.5 / n).abs() < 1e-12);
    }

    #[test]
    fn embeddings_reject_bad_header_and_width() {
        assert!(read_embeddings("", "e.txt").is_err());
        assert!(read_embeddings("dim=x\n", "e.txt").is_err());
        let err = read_embeddings("dim=3\n1,0,1.0,0.0\n", "e.txt").unwrap_err();
        assert!(err.to_string().contains("e.txt:2"));
    }

    #[test]
    fn transforms_round_trip_and_default_identity() {
        let mut table = TransformTable::new();
        table.insert(2, AffineTransform::translation(1.5, -0.5));
        let text = write_transforms(&table);
        let again = read_transforms(&text, "cam.txt").unwrap();
        assert_eq!(again.get(2), AffineTransform::translation(1.5, -0.5));
        assert!(again.get(3).is_identity());
    }

    #[test]
    fn tracklet_bundle_rekeys_sidecar() {
        let map = ClassMap::visdrone_default();
        let text = "1,7,100,50,20,40,0.9,4,0,0\n\
                    1,9,300,80,22,44,0.7,4,0,0\n\
                    2,7,102,50,20,40,0.8,4,0,0\n";
        let tracklets = read_tracklets(text, "trk.txt", &map).unwrap();
        // original sidecar keyed by the ordinals of trk.txt rows
        let mut table = EmbeddingTable::new(2);
        for t in &tracklets {
            for e in &t.entries {
                let v = if t.id == 7 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
                table
                    .insert(e.frame, e.det_idx, Embedding::new(v).unwrap())
                    .unwrap();
            }
        }
        let (mot, sidecar) = write_tracklets_with_embeddings(&tracklets, &table);
        let sidecar = sidecar.unwrap();
        let reread = read_tracklets(&mot, "out.txt", &map).unwrap();
        let retable = read_embeddings(&sidecar, "out_emb.txt").unwrap();
        for t in &reread {
            for e in &t.entries {
                let emb = retable.get(e.frame, e.det_idx).expect("embedding present");
                let expected = if t.id == 7 { 1.0 } else { 0.0 };
                assert!((emb.values()[0] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bundle_without_embeddings_has_no_sidecar() {
        let map = ClassMap::visdrone_default();
        let text = "1,7,100,50,20,40,0.9,4,0,0\n";
        let tracklets = read_tracklets(text, "trk.txt", &map).unwrap();
        let (_, sidecar) = write_tracklets_with_embeddings(&tracklets, &NoEmbeddings);
        assert!(sidecar.is_none());
    }
}
