//! Vector floor plans: parsing, doorway closure, canonicalization, building
//! perimeter and exterior-window classification.
//!
//! A raw plan is a list of room polygons whose edges are labeled wall, door or
//! window. Canonicalization turns it into a flat list of labeled segments with
//! merged vertices, joined overlaps and no straight-through vertices.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::geom::{point_in_polygon, polyline_distance, signed_area, Point, Segment};

/// Vertices closer than this are merged (1 mm).
pub const VERTEX_MERGE_TOL: f64 = 1e-3;
/// Maximum angular deviation for two segments to count as collinear.
pub const COLLINEAR_ANGLE_DEG: f64 = 0.1;
/// Door pairs are closed with jamb walls when `‖uu'‖ + ‖vv'‖` is below this.
pub const DOOR_CLOSURE_MAX: f64 = 2.0;
/// Window endpoints within this distance of the perimeter make it exterior.
pub const EXTERIOR_WINDOW_TOL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentCategory {
    Wall,
    Door,
    Window,
}

impl SegmentCategory {
    /// Doors are open; windows and glass walls let light through.
    pub fn transparent(self) -> bool {
        matches!(self, SegmentCategory::Door | SegmentCategory::Window)
    }

    pub fn passable(self) -> bool {
        matches!(self, SegmentCategory::Door)
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "wall" => Some(SegmentCategory::Wall),
            "door" => Some(SegmentCategory::Door),
            "window" => Some(SegmentCategory::Window),
            _ => None,
        }
    }
}

impl fmt::Display for SegmentCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SegmentCategory::Wall => "wall",
            SegmentCategory::Door => "door",
            SegmentCategory::Window => "window",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSegment {
    pub segment: Segment,
    pub category: SegmentCategory,
}

/// A room polygon. Edge `i` joins vertex `i` to vertex `i + 1 (mod n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Room {
    pub vertices: Vec<Point>,
    pub categories: Vec<SegmentCategory>,
}

impl Room {
    pub fn edges(&self) -> impl Iterator<Item = LabeledSegment> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| LabeledSegment {
            segment: Segment::new(self.vertices[i], self.vertices[(i + 1) % n]),
            category: self.categories[i],
        })
    }
}

/// A floor plan as read from disk, before canonicalization.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawFloorPlan {
    pub rooms: Vec<Room>,
    /// Free-standing segments: inserted door jambs, or the segments of an
    /// already-canonical document.
    pub extra: Vec<LabeledSegment>,
}

impl RawFloorPlan {
    pub fn segments(&self) -> Vec<LabeledSegment> {
        self.rooms
            .iter()
            .flat_map(|r| r.edges())
            .chain(self.extra.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanSegment {
    pub a: Point,
    pub b: Point,
    pub category: SegmentCategory,
    #[serde(default)]
    pub exterior: bool,
}

impl PlanSegment {
    pub fn segment(&self) -> Segment {
        Segment::new(self.a, self.b)
    }
}

/// Which transparent segments stop LIDAR rays in addition to walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowTermination {
    #[default]
    Exterior,
    None,
    All,
}

impl std::str::FromStr for WindowTermination {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exterior" => Ok(WindowTermination::Exterior),
            "none" => Ok(WindowTermination::None),
            "all" => Ok(WindowTermination::All),
            other => Err(format!("unknown window termination mode '{other}'")),
        }
    }
}

/// A canonical floor plan.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FloorPlan {
    pub segments: Vec<PlanSegment>,
    /// Closed (first = last) counter-clockwise outer boundary.
    pub perimeter: Vec<Point>,
    /// Segments dropped because they collapsed to zero length.
    #[serde(default)]
    pub dropped_zero_length: usize,
}

impl FloorPlan {
    fn select(&self, pred: impl Fn(&PlanSegment) -> bool) -> Vec<Segment> {
        self.segments.iter().filter(|s| pred(s)).map(|s| s.segment()).collect()
    }

    /// Walls and windows; used for path planning.
    pub fn impassable(&self) -> Vec<Segment> {
        self.select(|s| !s.category.passable())
    }

    /// Walls only.
    pub fn nontransparent(&self) -> Vec<Segment> {
        self.select(|s| !s.category.transparent())
    }

    /// Segments that stop LIDAR rays under the given window mode.
    pub fn termination_set(&self, mode: WindowTermination) -> Vec<Segment> {
        self.select(|s| match s.category {
            SegmentCategory::Wall => true,
            SegmentCategory::Door => false,
            SegmentCategory::Window => match mode {
                WindowTermination::Exterior => s.exterior,
                WindowTermination::None => false,
                WindowTermination::All => true,
            },
        })
    }

    pub fn exterior_windows(&self) -> Vec<Segment> {
        self.select(|s| s.category == SegmentCategory::Window && s.exterior)
    }

    /// Segments a predictor is asked to reproduce: walls and windows.
    pub fn target_segments(&self) -> Vec<Segment> {
        self.impassable()
    }

    /// Axis-aligned bounding box `(min, max)` of all segments.
    pub fn bounds(&self) -> Option<(Point, Point)> {
        let mut it = self.segments.iter().flat_map(|s| [s.a, s.b]);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| {
            (
                Point::new(lo.x.min(p.x), lo.y.min(p.y)),
                Point::new(hi.x.max(p.x), hi.y.max(p.y)),
            )
        }))
    }

    pub fn contains(&self, p: Point) -> bool {
        point_in_polygon(&self.perimeter, p)
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RoomDoc {
    vertices: Vec<[f64; 2]>,
    edge_categories: Vec<String>,
}

#[derive(Deserialize)]
struct RoomsDoc {
    rooms: Vec<RoomDoc>,
}

#[derive(Deserialize)]
struct CanonicalDoc {
    segments: Vec<PlanSegment>,
}

/// Parses a floor-plan JSON document.
///
/// Two layouts are accepted: the room-polygon schema
/// `{ "rooms": [ { "vertices": [[x,y],...], "edge_categories": [...] } ] }`
/// and the canonical `{ "segments": [...] }` layout written by
/// [`write_canonical`]. Canonical segments come back as free-standing extras.
pub fn parse_floorplan(bytes: &[u8]) -> Result<RawFloorPlan> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| {
        ForgeError::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    if value.get("segments").is_some() && value.get("rooms").is_none() {
        let doc: CanonicalDoc = serde_json::from_value(value)
            .map_err(|e| ForgeError::parse("segments", e.to_string()))?;
        let extra = doc
            .segments
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                if !(s.a.is_finite() && s.b.is_finite()) {
                    return Err(ForgeError::validation(
                        format!("segments[{i}]"),
                        "non-finite coordinate",
                    ));
                }
                Ok(LabeledSegment {
                    segment: s.segment(),
                    category: s.category,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(RawFloorPlan {
            rooms: Vec::new(),
            extra,
        });
    }
    let doc: RoomsDoc =
        serde_json::from_value(value).map_err(|e| ForgeError::parse("rooms", e.to_string()))?;
    let mut rooms = Vec::with_capacity(doc.rooms.len());
    for (ri, room) in doc.rooms.into_iter().enumerate() {
        let mut vertices: Vec<Point> = room.vertices.iter().map(|&v| Point::from(v)).collect();
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(ForgeError::validation(
                format!("rooms[{ri}].vertices"),
                "non-finite coordinate",
            ));
        }
        // An explicitly repeated closing vertex is accepted and removed.
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(ForgeError::validation(
                format!("rooms[{ri}].vertices"),
                format!("polygon needs at least 3 distinct vertices, got {}", vertices.len()),
            ));
        }
        if room.edge_categories.len() != vertices.len() {
            return Err(ForgeError::validation(
                format!("rooms[{ri}].edge_categories"),
                format!(
                    "expected {} categories (one per edge), got {}",
                    vertices.len(),
                    room.edge_categories.len()
                ),
            ));
        }
        let categories = room
            .edge_categories
            .iter()
            .enumerate()
            .map(|(ei, c)| {
                SegmentCategory::parse(c).ok_or_else(|| {
                    ForgeError::validation(
                        format!("rooms[{ri}].edge_categories[{ei}]"),
                        format!("unknown category '{c}'"),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rooms.push(Room {
            vertices,
            categories,
        });
    }
    Ok(RawFloorPlan {
        rooms,
        extra: Vec::new(),
    })
}

pub fn load_floorplan(path: &Path) -> Result<RawFloorPlan> {
    let bytes = std::fs::read(path)?;
    parse_floorplan(&bytes)
}

/// Serializes a raw plan back into the room-polygon schema (extras are dropped
/// unless there are no rooms, in which case the canonical layout is used).
pub fn raw_to_json(plan: &RawFloorPlan) -> serde_json::Value {
    let rooms: Vec<serde_json::Value> = plan
        .rooms
        .iter()
        .map(|r| {
            serde_json::json!({
                "vertices": r.vertices.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
                "edge_categories": r.categories.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
            })
        })
        .collect();
    serde_json::json!({ "rooms": rooms })
}

pub fn write_canonical(plan: &FloorPlan) -> Result<String> {
    Ok(serde_json::to_string_pretty(plan)?)
}

/// Runs the whole preparation chain: doorway closure, canonicalization and
/// exterior-window classification.
pub fn prepare(raw: &RawFloorPlan) -> FloorPlan {
    classify_exterior_windows(canonicalize(&close_doorways(raw)))
}

// ---------------------------------------------------------------------------
// Doorway closure

/// Inserts jamb walls `uu'` and `vv'` between paired door segments.
///
/// Doors are paired greedily by increasing `‖uu'‖ + ‖vv'‖` (trying both
/// endpoint pairings); each door joins at most one pair.
pub fn close_doorways(plan: &RawFloorPlan) -> RawFloorPlan {
    let doors: Vec<Segment> = plan
        .segments()
        .into_iter()
        .filter(|s| s.category == SegmentCategory::Door)
        .map(|s| s.segment)
        .collect();
    let mut candidates = Vec::new();
    for i in 0..doors.len() {
        for j in i + 1..doors.len() {
            let (d, e) = (doors[i], doors[j]);
            let direct = d.a.dist(e.a) + d.b.dist(e.b);
            let crossed = d.a.dist(e.b) + d.b.dist(e.a);
            let (cost, flip) = if crossed < direct {
                (crossed, true)
            } else {
                (direct, false)
            };
            if cost < DOOR_CLOSURE_MAX {
                candidates.push((cost, i, j, flip));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used = vec![false; doors.len()];
    let mut out = plan.clone();
    for (_, i, j, flip) in candidates {
        if used[i] || used[j] {
            continue;
        }
        used[i] = true;
        used[j] = true;
        let (d, e) = (doors[i], doors[j]);
        let (ua, va) = if flip { (e.b, e.a) } else { (e.a, e.b) };
        for seg in [Segment::new(d.a, ua), Segment::new(d.b, va)] {
            out.extra.push(LabeledSegment {
                segment: seg,
                category: SegmentCategory::Wall,
            });
        }
    }
    let unpaired = used.iter().filter(|u| !**u).count();
    if unpaired > 0 {
        log::debug!("{unpaired} door segments left without a partner");
    }
    out
}

// ---------------------------------------------------------------------------
// Canonicalization

/// Clusters points that lie within `tol` of each other (transitively) and
/// returns, for each input point, the index of its cluster representative
/// (the lowest input index in the cluster).
pub(crate) fn cluster_points(points: &[Point], tol: f64) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..points.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let key = |p: Point| ((p.x / tol).floor() as i64, (p.y / tol).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in points.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(i);
    }
    for (i, &p) in points.iter().enumerate() {
        let (kx, ky) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = buckets.get(&(kx + dx, ky + dy)) {
                    for &j in ids {
                        if j != i && p.dist(points[j]) <= tol {
                            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                            if ri != rj {
                                let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                                parent[hi] = lo;
                            }
                        }
                    }
                }
            }
        }
    }
    (0..points.len()).map(|i| find(&mut parent, i)).collect()
}

fn merge_vertices(segs: &mut [LabeledSegment]) {
    let pts: Vec<Point> = segs.iter().flat_map(|s| [s.segment.a, s.segment.b]).collect();
    let rep = cluster_points(&pts, VERTEX_MERGE_TOL);
    for (i, s) in segs.iter_mut().enumerate() {
        s.segment.a = pts[rep[2 * i]];
        s.segment.b = pts[rep[2 * i + 1]];
    }
}

fn angle_between(u: Point, v: Point) -> f64 {
    let c = u.cross(v).abs();
    let d = u.dot(v).abs();
    c.atan2(d).to_degrees()
}

fn collinear(s: &Segment, t: &Segment) -> bool {
    angle_between(s.direction(), t.direction()) <= COLLINEAR_ANGLE_DEG
        && s.line_distance(t.a) <= VERTEX_MERGE_TOL
        && s.line_distance(t.b) <= VERTEX_MERGE_TOL
        && t.line_distance(s.a) <= VERTEX_MERGE_TOL
        && t.line_distance(s.b) <= VERTEX_MERGE_TOL
}

/// Union of two overlapping collinear segments, if they overlap by more than
/// the merge tolerance.
fn join_pair(s: &Segment, t: &Segment) -> Option<Segment> {
    if !collinear(s, t) {
        return None;
    }
    let d = s.direction();
    let len = d.norm();
    if len == 0.0 {
        return None;
    }
    let dir = d * (1.0 / len);
    let proj = |p: Point| (p - s.a).dot(dir);
    let (s0, s1) = (0.0f64, len);
    let (t0, t1) = {
        let (x, y) = (proj(t.a), proj(t.b));
        (x.min(y), x.max(y))
    };
    let overlap = s1.min(t1) - s0.max(t0);
    if overlap <= VERTEX_MERGE_TOL {
        return None;
    }
    let mut ends = [(s0, s.a), (s1, s.b), (proj(t.a), t.a), (proj(t.b), t.b)];
    ends.sort_by(|x, y| x.0.total_cmp(&y.0));
    Some(Segment::new(ends[0].1, ends[3].1))
}

fn join_overlaps(segs: &mut Vec<LabeledSegment>) -> bool {
    let mut changed = false;
    let mut i = 0;
    while i < segs.len() {
        let mut j = i + 1;
        let mut merged_any = false;
        while j < segs.len() {
            if segs[i].category == segs[j].category {
                if let Some(u) = join_pair(&segs[i].segment, &segs[j].segment) {
                    segs[i].segment = u;
                    segs.remove(j);
                    merged_any = true;
                    changed = true;
                    continue;
                }
            }
            j += 1;
        }
        if !merged_any {
            i += 1;
        }
    }
    changed
}

fn vkey(p: Point) -> (u64, u64) {
    (p.x.to_bits(), p.y.to_bits())
}

fn remove_non_corners(segs: &mut Vec<LabeledSegment>) -> bool {
    let mut changed = false;
    loop {
        let mut incident: HashMap<(u64, u64), Vec<usize>> = HashMap::new();
        for (i, s) in segs.iter().enumerate() {
            incident.entry(vkey(s.segment.a)).or_default().push(i);
            incident.entry(vkey(s.segment.b)).or_default().push(i);
        }
        let mut keys: Vec<_> = incident.keys().copied().collect();
        keys.sort_unstable();
        let mut found = None;
        for k in keys {
            let inc = &incident[&k];
            if inc.len() != 2 || inc[0] == inc[1] {
                continue;
            }
            let (i, j) = (inc[0], inc[1]);
            if segs[i].category != segs[j].category {
                continue;
            }
            let v = Point::new(f64::from_bits(k.0), f64::from_bits(k.1));
            let far = |s: &Segment| if vkey(s.a) == k { s.b } else { s.a };
            let u = far(&segs[i].segment);
            let w = far(&segs[j].segment);
            if u == w {
                continue;
            }
            let uw = Segment::new(u, w);
            if angle_between(v - u, w - v) <= COLLINEAR_ANGLE_DEG
                && (w - v).dot(v - u) > 0.0
                && uw.line_distance(v) <= VERTEX_MERGE_TOL
            {
                found = Some((i, j, uw));
                break;
            }
        }
        match found {
            Some((i, j, uw)) => {
                let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                segs[lo].segment = uw;
                segs.remove(hi);
                changed = true;
            }
            None => return changed,
        }
    }
}

/// Canonicalizes a raw plan: merges vertices within 1 mm, joins overlapping
/// collinear segments of the same category and removes straight-through
/// vertices, repeating until nothing changes. Also computes the perimeter.
pub fn canonicalize(plan: &RawFloorPlan) -> FloorPlan {
    let mut segs = plan.segments();
    let mut dropped = 0;
    loop {
        let before = segs.clone();
        merge_vertices(&mut segs);
        let n = segs.len();
        segs.retain(|s| s.segment.a != s.segment.b);
        dropped += n - segs.len();
        join_overlaps(&mut segs);
        remove_non_corners(&mut segs);
        if segs == before {
            break;
        }
    }
    if dropped > 0 {
        log::debug!("canonicalize dropped {dropped} zero-length segments");
    }
    let plain: Vec<Segment> = segs.iter().map(|s| s.segment).collect();
    let perimeter = compute_perimeter(&plain);
    FloorPlan {
        segments: segs
            .into_iter()
            .map(|s| PlanSegment {
                a: s.segment.a,
                b: s.segment.b,
                category: s.category,
                exterior: false,
            })
            .collect(),
        perimeter,
        dropped_zero_length: dropped,
    }
}

// ---------------------------------------------------------------------------
// Perimeter

/// Outer boundary of the segment arrangement: the face cycle that encloses the
/// largest area, returned closed and counter-clockwise. Empty if there is no
/// enclosed region.
pub fn compute_perimeter(segments: &[Segment]) -> Vec<Point> {
    let segments: Vec<Segment> = segments.iter().copied().filter(|s| s.length() > 0.0).collect();
    if segments.is_empty() {
        return Vec::new();
    }
    // Split every segment at crossings and at T-junctions.
    let mut pieces: Vec<(Point, Point)> = Vec::new();
    for (i, s) in segments.iter().enumerate() {
        let mut cuts: Vec<(f64, Point)> = vec![(0.0, s.a), (1.0, s.b)];
        for (j, o) in segments.iter().enumerate() {
            if i == j {
                continue;
            }
            if let Some((t, _)) = s.intersection_params(o) {
                cuts.push((t, s.at(t)));
            }
            for p in [o.a, o.b] {
                if s.distance_to_point(p) <= VERTEX_MERGE_TOL {
                    let t = s.closest_param(p);
                    cuts.push((t, p));
                }
            }
        }
        cuts.sort_by(|x, y| x.0.total_cmp(&y.0));
        for w in cuts.windows(2) {
            pieces.push((w[0].1, w[1].1));
        }
    }
    let pts: Vec<Point> = pieces.iter().flat_map(|&(a, b)| [a, b]).collect();
    let rep = cluster_points(&pts, VERTEX_MERGE_TOL);
    let mut node_of: HashMap<usize, usize> = HashMap::new();
    let mut nodes: Vec<Point> = Vec::new();
    let mut node_id = |r: usize, nodes: &mut Vec<Point>| -> usize {
        *node_of.entry(r).or_insert_with(|| {
            nodes.push(pts[r]);
            nodes.len() - 1
        })
    };
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for k in 0..pieces.len() {
        let u = node_id(rep[2 * k], &mut nodes);
        let v = node_id(rep[2 * k + 1], &mut nodes);
        if u != v {
            edges.push((u.min(v), u.max(v)));
        }
    }
    edges.sort_unstable();
    edges.dedup();

    // Half-edges: 2e = u -> v, 2e + 1 = v -> u.
    let half = |h: usize| -> (usize, usize) {
        let (u, v) = edges[h / 2];
        if h.is_multiple_of(2) {
            (u, v)
        } else {
            (v, u)
        }
    };
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for h in 0..2 * edges.len() {
        out[half(h).0].push(h);
    }
    let angle = |h: usize| {
        let (u, v) = half(h);
        let d = nodes[v] - nodes[u];
        d.y.atan2(d.x)
    };
    for list in &mut out {
        list.sort_by(|&a, &b| angle(a).total_cmp(&angle(b)));
    }
    let mut pos = vec![0usize; 2 * edges.len()];
    for list in &out {
        for (k, &h) in list.iter().enumerate() {
            pos[h] = k;
        }
    }
    let next = |h: usize| -> usize {
        let twin = h ^ 1;
        let v = half(h).1;
        let list = &out[v];
        let k = pos[twin];
        list[(k + list.len() - 1) % list.len()]
    };
    let mut visited = vec![false; 2 * edges.len()];
    let mut best: Option<(f64, Vec<Point>)> = None;
    for start in 0..2 * edges.len() {
        if visited[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut h = start;
        while !visited[h] {
            visited[h] = true;
            ring.push(nodes[half(h).0]);
            h = next(h);
        }
        let area = signed_area(&ring);
        if area < 0.0 && best.as_ref().is_none_or(|(a, _)| area < *a) {
            best = Some((area, ring));
        }
    }
    match best {
        Some((_, mut ring)) => {
            ring.reverse();
            ring.push(ring[0]);
            ring
        }
        None => Vec::new(),
    }
}

/// Flags windows whose endpoints both lie within 100 mm of the perimeter.
pub fn classify_exterior_windows(mut plan: FloorPlan) -> FloorPlan {
    let perimeter = plan.perimeter.clone();
    for s in &mut plan.segments {
        s.exterior = s.category == SegmentCategory::Window
            && !perimeter.is_empty()
            && polyline_distance(&perimeter, s.a) <= EXTERIOR_WINDOW_TOL
            && polyline_distance(&perimeter, s.b) <= EXTERIOR_WINDOW_TOL;
    }
    plan
}
