//! Unification of heterogeneous source annotations into the `vsgaze-1` schema.
//!
//! Gaze points are completed from shared-attention objects and mutual-gaze
//! partners where a dataset lacks them, head tracks are merged in, and the
//! pairwise social labels are derived from the per-person looking-at-human
//! targets. Unknown is kept distinct from negative throughout.

use std::collections::{BTreeMap, BTreeSet};

use crate::annotations::{
    ordered_pair, DatasetId, GazeSource, InOut, LahLabel, PairLabels, UnifiedFrameRecord,
    UnifiedPerson, SCHEMA_VERSION,
};
use crate::error::{ensure, Error, Result};
use crate::geometry::{nearest_containing, round6, BBox, Point};
use crate::source::{SourceRecord, TrackBox};

/// Ids of persons that only come from the external tracker are offset by this.
pub const TRACK_ID_OFFSET: u32 = 10_000;
pub const DEFAULT_TRACK_IOU: f64 = 0.5;
/// Annotator points that must agree on a target in multi-annotator mode.
pub const MULTI_ANNOTATOR_MIN_VOTES: usize = 2;

pub fn derive_gaze_point_from_object(object: &BBox) -> Result<Point> {
    object.validate()?;
    Ok(object.center())
}

pub fn derive_gaze_point_from_partner(partner_head: &BBox) -> Point {
    partner_head.center()
}

fn containing_target(point: &Point, self_id: u32, persons: &[UnifiedPerson]) -> Option<u32> {
    let others: Vec<&UnifiedPerson> = persons.iter().filter(|p| p.person_id != self_id).collect();
    nearest_containing(point, others.iter().map(|p| &p.head_box)).map(|k| others[k].person_id)
}

/// LAH label of one person from a single gaze point.
pub fn lah_single(point: &Point, self_id: u32, persons: &[UnifiedPerson]) -> LahLabel {
    match containing_target(point, self_id, persons) {
        Some(t) => LahLabel::Target(t),
        None => LahLabel::None,
    }
}

/// LAH label from several annotator points: the person hit by the most points,
/// provided at least two points agree; a tie between top targets is unknown.
pub fn lah_multi(points: &[Point], self_id: u32, persons: &[UnifiedPerson]) -> LahLabel {
    let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
    for p in points {
        if let Some(t) = containing_target(p, self_id, persons) {
            *votes.entry(t).or_default() += 1;
        }
    }
    let Some(best) = votes.values().copied().max() else {
        return LahLabel::None;
    };
    if best < MULTI_ANNOTATOR_MIN_VOTES {
        return LahLabel::None;
    }
    let mut top = votes.iter().filter(|(_, &v)| v == best);
    let (&first, _) = top.next().expect("max exists");
    if top.next().is_some() {
        LahLabel::Unknown
    } else {
        LahLabel::Target(first)
    }
}

/// LAH label for every person of a frame.
pub fn derive_lah(persons: &[UnifiedPerson]) -> BTreeMap<u32, LahLabel> {
    persons
        .iter()
        .map(|p| {
            let label = if p.annotator_points.len() >= 2 {
                lah_multi(&p.annotator_points, p.person_id, persons)
            } else if let Some(g) = p.gaze_point.as_ref().or(p.annotator_points.first()) {
                lah_single(g, p.person_id, persons)
            } else if p.inout == Some(InOut::Out) {
                LahLabel::None
            } else {
                LahLabel::Unknown
            };
            (p.person_id, label)
        })
        .collect()
}

fn label_of(lah: &BTreeMap<u32, LahLabel>, id: u32) -> LahLabel {
    lah.get(&id).copied().unwrap_or(LahLabel::Unknown)
}

fn derive_pairs<F>(lah: &BTreeMap<u32, LahLabel>, ids: &[u32], positive: F) -> PairLabels
where
    F: Fn(u32, LahLabel, u32, LahLabel) -> bool,
{
    let mut out = PairLabels::default();
    for (k, &a) in ids.iter().enumerate() {
        for &b in &ids[k + 1..] {
            let (la, lb) = (label_of(lah, a), label_of(lah, b));
            let key = ordered_pair(a, b);
            if la == LahLabel::Unknown || lb == LahLabel::Unknown {
                out.unknown.insert(key);
            } else if positive(a, la, b, lb) {
                out.positive.insert(key);
            }
        }
    }
    out
}

/// Mutual gaze: `i` looks at `j` and `j` looks at `i`.
pub fn derive_laeo(lah: &BTreeMap<u32, LahLabel>, ids: &[u32]) -> PairLabels {
    derive_pairs(lah, ids, |a, la, b, lb| {
        la == LahLabel::Target(b) && lb == LahLabel::Target(a)
    })
}

/// Shared attention: both look at the same third person.
pub fn derive_sa(lah: &BTreeMap<u32, LahLabel>, ids: &[u32]) -> PairLabels {
    derive_pairs(lah, ids, |a, la, b, lb| match (la.target(), lb.target()) {
        (Some(x), Some(y)) => x == y && x != a && x != b,
        _ => false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackConflict {
    pub clip_id: String,
    pub frame_idx: u32,
    pub track_id: u32,
    pub person_ids: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackMatch {
    /// For each annotated box, the index of its matched track.
    pub assignment: Vec<Option<usize>>,
    /// Tracks left unmatched, in input order.
    pub unmatched: Vec<usize>,
    /// Tracks overlapping two or more annotations above the threshold.
    pub conflicts: Vec<(usize, Vec<usize>)>,
}

/// Greedy one-to-one matching of annotated head boxes to tracked boxes by
/// descending IoU; pairs below `iou_threshold` never match.
pub fn merge_tracks(annotated: &[BBox], tracks: &[BBox], iou_threshold: f64) -> TrackMatch {
    let mut candidates = Vec::new();
    for (a, ab) in annotated.iter().enumerate() {
        for (t, tb) in tracks.iter().enumerate() {
            let iou = ab.iou(tb);
            if iou >= iou_threshold {
                candidates.push((iou, a, t));
            }
        }
    }
    let mut conflicts = Vec::new();
    for t in 0..tracks.len() {
        let hits: Vec<usize> = candidates.iter().filter(|c| c.2 == t).map(|c| c.1).collect();
        if hits.len() > 1 {
            conflicts.push((t, hits));
        }
    }
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut assignment = vec![None; annotated.len()];
    let mut taken = vec![false; tracks.len()];
    for (_, a, t) in candidates {
        if assignment[a].is_none() && !taken[t] {
            assignment[a] = Some(t);
            taken[t] = true;
        }
    }
    let unmatched = (0..tracks.len()).filter(|&t| !taken[t]).collect();
    TrackMatch {
        assignment,
        unmatched,
        conflicts,
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub track_iou: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            track_iou: DEFAULT_TRACK_IOU,
        }
    }
}

fn mean_point(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
    Point::new(sx / n, sy / n)
}

fn all_pairs(ids: &[u32]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for (k, &a) in ids.iter().enumerate() {
        for &b in &ids[k + 1..] {
            out.push(ordered_pair(a, b));
        }
    }
    out
}

/// Converts one source frame (plus the tracks of that frame) into a unified record.
pub fn process_frame(
    dataset: DatasetId,
    source: &SourceRecord,
    tracks: &[&TrackBox],
    opts: &PipelineOptions,
) -> Result<(UnifiedFrameRecord, Vec<TrackConflict>)> {
    source.validate()?;
    for p in &source.persons {
        ensure!(p.person_id < TRACK_ID_OFFSET, "annotated person id {} collides with the track id range", p.person_id);
    }

    let mut persons: Vec<UnifiedPerson> = source
        .persons
        .iter()
        .map(|sp| {
            let points: Vec<Point> = sp.gaze_points.iter().map(Point::rounded).collect();
            let (gaze_point, annotator_points) = match points.len() {
                0 => (None, Vec::new()),
                1 => (Some(points[0]), Vec::new()),
                _ => (Some(mean_point(&points).rounded()), points),
            };
            let inout = match (sp.inout, gaze_point) {
                (None, Some(_)) => Some(InOut::In),
                (io, _) => io,
            };
            UnifiedPerson {
                person_id: sp.person_id,
                head_box: sp.head_box.rounded(),
                gaze_point,
                inout,
                gaze_source: GazeSource::Native,
                annotator_points,
                speaking: sp.speaking.map(round6),
            }
        })
        .collect();
    for p in &persons {
        p.head_box.validate()?;
        if p.gaze_point.is_some() && p.inout == Some(InOut::Out) {
            return Err(Error::validation(format!(
                "person {} has a gaze point but is labelled out-of-frame",
                p.person_id
            )));
        }
    }

    let index_of = |persons: &[UnifiedPerson], id: u32| persons.iter().position(|p| p.person_id == id);

    match dataset {
        DatasetId::VideoCoAtt => {
            let mut assigned = BTreeSet::new();
            for g in &source.sa_groups {
                let target = derive_gaze_point_from_object(&source.objects[g.object].bbox.rounded())?.rounded();
                for &pid in &g.persons {
                    ensure!(assigned.insert(pid), "person {pid} belongs to two shared-attention groups");
                    let k = index_of(&persons, pid).expect("validated");
                    persons[k].gaze_point = Some(target);
                    persons[k].inout = Some(InOut::In);
                    persons[k].gaze_source = GazeSource::FromObjectCenter;
                    persons[k].annotator_points.clear();
                }
            }
        }
        DatasetId::UcoLaeo => {
            let mut assigned = BTreeSet::new();
            for &(a, b) in &source.laeo_pairs {
                ensure!(assigned.insert(a) && assigned.insert(b), "person in two mutual-gaze pairs at {}:{}", source.clip_id, source.frame_idx);
                let (ka, kb) = (index_of(&persons, a).expect("validated"), index_of(&persons, b).expect("validated"));
                let pa = derive_gaze_point_from_partner(&persons[kb].head_box).rounded();
                let pb = derive_gaze_point_from_partner(&persons[ka].head_box).rounded();
                for (k, point) in [(ka, pa), (kb, pb)] {
                    persons[k].gaze_point = Some(point);
                    persons[k].inout = Some(InOut::In);
                    persons[k].gaze_source = GazeSource::FromHeadCenter;
                    persons[k].annotator_points.clear();
                }
            }
        }
        _ => {}
    }

    let annotated_ids: Vec<u32> = persons.iter().map(|p| p.person_id).collect();

    let boxes: Vec<BBox> = persons.iter().map(|p| p.head_box).collect();
    let track_boxes: Vec<BBox> = tracks.iter().map(|t| t.bbox.rounded()).collect();
    let matching = merge_tracks(&boxes, &track_boxes, opts.track_iou);
    let conflicts = matching
        .conflicts
        .iter()
        .map(|(t, hits)| TrackConflict {
            clip_id: source.clip_id.clone(),
            frame_idx: source.frame_idx,
            track_id: tracks[*t].track_id,
            person_ids: hits.iter().map(|&a| persons[a].person_id).collect(),
        })
        .collect();
    for &t in &matching.unmatched {
        let id = TRACK_ID_OFFSET
            .checked_add(tracks[t].track_id)
            .ok_or_else(|| Error::validation("track id overflow"))?;
        ensure!(index_of(&persons, id).is_none(), "duplicate track {} in {}:{}", tracks[t].track_id, source.clip_id, source.frame_idx);
        persons.push(UnifiedPerson::track_only(id, track_boxes[t]));
    }
    persons.sort_by_key(|p| p.person_id);

    let mut record = UnifiedFrameRecord {
        schema: SCHEMA_VERSION.into(),
        dataset,
        clip_id: source.clip_id.clone(),
        frame_idx: source.frame_idx,
        persons,
        lah: BTreeMap::new(),
        laeo: PairLabels::default(),
        sa: PairLabels::default(),
    };
    record.lah = derive_lah(&record.persons);
    let ids = record.person_ids();

    record.laeo = match dataset {
        DatasetId::GazeFollow | DatasetId::VideoCoAtt => PairLabels::all_unknown(&ids),
        DatasetId::UcoLaeo => {
            let mut labels = PairLabels::default();
            for &(a, b) in &source.laeo_pairs {
                labels.positive.insert(ordered_pair(a, b));
            }
            for (a, b) in all_pairs(&ids) {
                if !(annotated_ids.contains(&a) && annotated_ids.contains(&b)) {
                    labels.unknown.insert((a, b));
                }
            }
            labels
        }
        DatasetId::Vat | DatasetId::ChildPlay | DatasetId::Synthetic => derive_laeo(&record.lah, &ids),
    };
    record.sa = match dataset {
        DatasetId::GazeFollow | DatasetId::UcoLaeo => PairLabels::all_unknown(&ids),
        DatasetId::VideoCoAtt => {
            let mut labels = PairLabels::default();
            for g in &source.sa_groups {
                for (a, b) in all_pairs(&g.persons) {
                    labels.positive.insert((a, b));
                }
            }
            labels
        }
        DatasetId::Vat | DatasetId::ChildPlay | DatasetId::Synthetic => derive_sa(&record.lah, &ids),
    };
    record.validate()?;
    Ok((record, conflicts))
}

/// Re-derives every label that is a function of the record's own geometry.
/// Labels that came from the source dataset (provided mutual gaze, provided
/// shared attention, unavailable tasks) are kept as they are.
pub fn reprocess_unified(record: &UnifiedFrameRecord) -> Result<UnifiedFrameRecord> {
    record.validate()?;
    let mut out = record.clone();
    for p in &mut out.persons {
        p.head_box = p.head_box.rounded();
        p.gaze_point = p.gaze_point.map(|g| g.rounded());
        p.annotator_points = p.annotator_points.iter().map(Point::rounded).collect();
        p.speaking = p.speaking.map(round6);
    }
    out.persons.sort_by_key(|p| p.person_id);
    out.lah = derive_lah(&out.persons);
    let ids = out.person_ids();
    if matches!(out.dataset, DatasetId::Vat | DatasetId::ChildPlay | DatasetId::Synthetic) {
        out.laeo = derive_laeo(&out.lah, &ids);
        out.sa = derive_sa(&out.lah, &ids);
    }
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Default)]
pub struct BuildOutput {
    pub records: Vec<UnifiedFrameRecord>,
    pub conflicts: Vec<TrackConflict>,
}

/// Runs [`process_frame`] over a whole source file.
pub fn build_annotations(
    dataset: DatasetId,
    sources: &[SourceRecord],
    tracks: &[TrackBox],
    opts: &PipelineOptions,
) -> Result<BuildOutput> {
    let mut by_frame: BTreeMap<(&str, u32), Vec<&TrackBox>> = BTreeMap::new();
    for t in tracks {
        by_frame.entry((t.clip_id.as_str(), t.frame_idx)).or_default().push(t);
    }
    for v in by_frame.values_mut() {
        v.sort_by_key(|t| t.track_id);
    }
    let mut out = BuildOutput::default();
    for s in sources {
        let frame_tracks = by_frame
            .get(&(s.clip_id.as_str(), s.frame_idx))
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let (rec, conflicts) = process_frame(dataset, s, frame_tracks, opts)?;
        out.records.push(rec);
        out.conflicts.extend(conflicts);
    }
    Ok(out)
}
