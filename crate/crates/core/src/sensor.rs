//! Virtual 360° LIDAR: ray casting against plan segments, world-to-grid
//! alignment estimation, and integration of scans into labeled grids.

use serde::{Deserialize, Serialize};

use crate::floorplan::{FloorPlan, WindowTermination};
use crate::geom::{circular_diff_deg, wrap_deg, Frame, Point, Segment};
use crate::grid::{traverse, GridGeometry, Label, OccupancyGrid};
use crate::mapops::recover_visible_segments;
use crate::pathgen::Path;

pub const DEFAULT_RAYS: usize = 720;
/// A hit this close to an exterior window labels its cell Window (10 mm).
pub const WINDOW_HIT_TOL: f64 = 0.01;
/// Consecutive hits farther apart than this are not paired for alignment.
pub const NEIGHBOR_MAX_GAP: f64 = 0.3;
/// Number of 1° bins over [0°, 90°).
pub const ALIGNMENT_BINS: usize = 90;
/// Clipped target pieces shorter than this are dropped (1 cm).
pub const MIN_TARGET_PIECE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub origin: Point,
    pub max_range: f64,
    /// End point of each ray: the hit point, or the point at max range.
    pub points: Vec<Point>,
    pub hit: Vec<bool>,
}

impl LidarScan {
    pub fn n_rays(&self) -> usize {
        self.points.len()
    }

    pub fn hit_points(&self) -> impl Iterator<Item = Point> + '_ {
        self.points.iter().zip(&self.hit).filter_map(|(&p, &h)| h.then_some(p))
    }

    pub fn hit_count(&self) -> usize {
        self.hit.iter().filter(|&&h| h).count()
    }

    pub fn ray_direction(n_rays: usize, i: usize) -> Point {
        let a = std::f64::consts::TAU * i as f64 / n_rays as f64;
        Point::new(a.cos(), a.sin())
    }

    /// The same scan expressed in another frame.
    pub fn to_frame(&self, frame: &Frame) -> LidarScan {
        LidarScan {
            origin: frame.to_local(self.origin),
            max_range: self.max_range,
            points: self.points.iter().map(|&p| frame.to_local(p)).collect(),
            hit: self.hit.clone(),
        }
    }
}

/// Casts `n_rays` uniformly spaced rays from `origin`; each stops at the
/// nearest occluder within `max_range`.
pub fn cast_scan(occluders: &[Segment], origin: Point, max_range: f64, n_rays: usize) -> LidarScan {
    let near: Vec<&Segment> = occluders
        .iter()
        .filter(|s| s.distance_to_point(origin) <= max_range)
        .collect();
    let mut points = Vec::with_capacity(n_rays);
    let mut hit = Vec::with_capacity(n_rays);
    for i in 0..n_rays {
        let dir = LidarScan::ray_direction(n_rays, i);
        let t = near
            .iter()
            .filter_map(|s| s.ray_hit(origin, dir))
            .fold(f64::INFINITY, f64::min);
        if t <= max_range {
            points.push(origin + dir * t);
            hit.push(true);
        } else {
            points.push(origin + dir * max_range);
            hit.push(false);
        }
    }
    LidarScan {
        origin,
        max_range,
        points,
        hit,
    }
}

/// Casts against the plan's termination set for the given window mode.
pub fn cast_plan_scan(
    plan: &FloorPlan,
    mode: WindowTermination,
    origin: Point,
    max_range: f64,
    n_rays: usize,
) -> LidarScan {
    cast_scan(&plan.termination_set(mode), origin, max_range, n_rays)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RayKind {
    Miss,
    Hit,
    WindowHit,
}

/// Classifies each ray; hits within [`WINDOW_HIT_TOL`] of an exterior window
/// become window hits.
pub fn classify_rays(scan: &LidarScan, exterior_windows: &[Segment]) -> Vec<RayKind> {
    let near: Vec<&Segment> = exterior_windows
        .iter()
        .filter(|s| s.distance_to_point(scan.origin) <= scan.max_range + WINDOW_HIT_TOL)
        .collect();
    scan.points
        .iter()
        .zip(&scan.hit)
        .map(|(&p, &h)| {
            if !h {
                RayKind::Miss
            } else if near.iter().any(|s| s.distance_to_point(p) <= WINDOW_HIT_TOL) {
                RayKind::WindowHit
            } else {
                RayKind::Hit
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    /// Radians in `[0, π/2)`.
    pub angle: f64,
    /// False when fewer than two neighboring hit pairs were available.
    pub confident: bool,
    pub pairs: usize,
}

impl Alignment {
    pub fn degrees(&self) -> f64 {
        self.angle.to_degrees()
    }
}

/// Angles (degrees, modulo 90) of lines through neighboring hit points.
fn neighbor_angles(scan: &LidarScan, out: &mut Vec<f64>) {
    let n = scan.n_rays();
    if n < 2 {
        return;
    }
    for i in 0..n {
        let j = (i + 1) % n;
        if j == i || !(scan.hit[i] && scan.hit[j]) {
            continue;
        }
        let d = scan.points[j] - scan.points[i];
        let len = d.norm();
        if len == 0.0 || len > NEIGHBOR_MAX_GAP {
            continue;
        }
        out.push(wrap_deg(d.y.atan2(d.x).to_degrees(), 90.0));
    }
}

/// Estimates the rotation between the world and the dominant wall directions.
///
/// Builds a 90-bin histogram (bin `k` centered on `k` degrees) over the
/// angles of neighboring hit pairs modulo 90°, then takes the
/// frequency-weighted circular mean of the mode bin and its two neighbors.
pub fn estimate_alignment<'a>(scans: impl IntoIterator<Item = &'a LidarScan>) -> Alignment {
    let mut angles = Vec::new();
    for s in scans {
        neighbor_angles(s, &mut angles);
    }
    alignment_from_angles(&angles)
}

pub fn alignment_from_angles(angles: &[f64]) -> Alignment {
    if angles.len() < 2 {
        return Alignment {
            angle: 0.0,
            confident: false,
            pairs: angles.len(),
        };
    }
    let mut hist = [0usize; ALIGNMENT_BINS];
    for &a in angles {
        let k = (a.round() as usize) % ALIGNMENT_BINS;
        hist[k] += 1;
    }
    let mode = (0..ALIGNMENT_BINS)
        .max_by(|&a, &b| hist[a].cmp(&hist[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    // circular mean with period 90°: map to the unit circle at 4x the angle
    let (mut sx, mut sy) = (0.0, 0.0);
    for k in [mode + ALIGNMENT_BINS - 1, mode, mode + 1] {
        let k = k % ALIGNMENT_BINS;
        let w = hist[k] as f64;
        let phi = (k as f64 * 4.0).to_radians();
        sx += w * phi.cos();
        sy += w * phi.sin();
    }
    let deg = wrap_deg(sy.atan2(sx).to_degrees() / 4.0, 90.0);
    Alignment {
        angle: deg.to_radians(),
        confident: true,
        pairs: angles.len(),
    }
}

/// Whether integration may overwrite already-known cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationMode {
    /// Free marks only Unknown cells; hits raise a cell to Occupied/Window.
    Accumulate,
    /// Only Unknown cells change.
    UnknownOnly,
}

fn raise(cell: &mut Label, to: Label, mode: IntegrationMode) {
    match mode {
        IntegrationMode::Accumulate => {
            if to > *cell {
                *cell = to;
            }
        }
        IntegrationMode::UnknownOnly => {
            if *cell == Label::Unknown {
                *cell = to;
            }
        }
    }
}

/// Ray-marches one scan expressed in the grid's local frame. Cells crossed by
/// a ray become Free; the cell holding a hit becomes Occupied or Window.
pub fn integrate_local(
    grid: &mut OccupancyGrid,
    origin: Point,
    ends: &[Point],
    kinds: &[RayKind],
    mode: IntegrationMode,
) {
    let geom = grid.geometry;
    for (&end, &kind) in ends.iter().zip(kinds) {
        traverse(&geom, origin, end, |idx, terminal| {
            let label = match (terminal, kind) {
                (true, RayKind::Hit) => Label::Occupied,
                (true, RayKind::WindowHit) => Label::Window,
                _ => Label::Free,
            };
            raise(&mut grid.cells[idx], label, mode);
        });
    }
}

/// Integrates a world-frame scan into a grid, rotating it by the grid's
/// alignment about the grid center.
pub fn integrate_scan(grid: &mut OccupancyGrid, scan: &LidarScan, exterior_windows: &[Segment]) {
    let kinds = classify_rays(scan, exterior_windows);
    integrate_classified(grid, scan, &kinds);
}

pub fn integrate_classified(grid: &mut OccupancyGrid, scan: &LidarScan, kinds: &[RayKind]) {
    let frame = grid.frame;
    let origin = frame.to_local(scan.origin);
    let ends: Vec<Point> = scan.points.iter().map(|&p| frame.to_local(p)).collect();
    integrate_local(grid, origin, &ends, kinds, IntegrationMode::Accumulate);
}

/// Pseudo-color of each cell, row-major: Unknown (-1,-1,-1), Free (-1,+1,-1),
/// Occupied (-1,-1,+1), Window (+1,-1,+1).
pub fn chromatize(grid: &OccupancyGrid) -> Vec<[f32; 3]> {
    grid.cells.iter().map(|&l| label_color(l)).collect()
}

pub fn label_color(l: Label) -> [f32; 3] {
    match l {
        Label::Unknown => [-1.0, -1.0, -1.0],
        Label::Free => [-1.0, 1.0, -1.0],
        Label::Occupied => [-1.0, -1.0, 1.0],
        Label::Window => [1.0, -1.0, 1.0],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub max_range: f64,
    pub n_rays: usize,
    pub step: f64,
    pub grid_size: usize,
    pub area: f64,
    pub window_termination: WindowTermination,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            max_range: 4.5,
            n_rays: DEFAULT_RAYS,
            step: 0.8,
            grid_size: 121,
            area: 15.0,
            window_termination: WindowTermination::Exterior,
        }
    }
}

impl SimConfig {
    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::new(self.grid_size, self.area)
    }
}

/// One training example: the grid at a pose plus its visible and target walls,
/// all in the aligned robot frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub plan_id: String,
    pub path_index: usize,
    pub step: usize,
    pub grid: OccupancyGrid,
    pub visible_segments: Vec<Segment>,
    pub target_segments: Vec<Segment>,
    /// Poses visited so far, local frame.
    pub trajectory: Vec<Point>,
    /// Robot position, world frame.
    pub pose: Point,
}

impl Sample {
    pub fn id(&self) -> String {
        sample_id(&self.plan_id, self.path_index, self.step)
    }

    pub fn alpha(&self) -> f64 {
        self.grid.frame.angle
    }
}

pub fn sample_id(plan_id: &str, path_index: usize, step: usize) -> String {
    format!("{plan_id}/{path_index}/{step}")
}

/// Points every `step` meters of arc length along a polyline, starting at its
/// first point.
pub fn resample_polyline(points: &[Point], step: f64) -> Vec<Point> {
    let Some(&first) = points.first() else {
        return Vec::new();
    };
    let total: f64 = points.windows(2).map(|w| w[0].dist(w[1])).sum();
    let n = ((total + 1e-9) / step).floor() as usize;
    let mut out = Vec::with_capacity(n + 1);
    out.push(first);
    let (mut seg, mut seg_start) = (0usize, 0.0f64);
    for k in 1..=n {
        let s = (k as f64 * step).min(total);
        while seg + 1 < points.len() - 1 && seg_start + points[seg].dist(points[seg + 1]) < s {
            seg_start += points[seg].dist(points[seg + 1]);
            seg += 1;
        }
        let len = points[seg].dist(points[seg + 1]);
        let t = if len > 0.0 { ((s - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(points[seg].lerp(points[seg + 1], t));
    }
    out
}

/// Removes the parts of local-frame target segments that lie inside solid
/// cells, after clipping them to the grid extent.
pub fn clip_targets(grid: &OccupancyGrid, targets: &[Segment]) -> Vec<Segment> {
    let geom = grid.geometry;
    let mut out = Vec::new();
    for s in targets {
        let Some(c) = geom.clip(s) else { continue };
        if c.length() == 0.0 {
            continue;
        }
        // cut at every cell boundary crossing
        let (u0, v0) = geom.to_uv(c.a);
        let (u1, v1) = geom.to_uv(c.b);
        let mut ts = vec![0.0, 1.0];
        for (a, b) in [(u0, u1), (v0, v1)] {
            if a != b {
                let (lo, hi) = (a.min(b).ceil() as i64, a.max(b).floor() as i64);
                for k in lo..=hi {
                    let t = (k as f64 - a) / (b - a);
                    if t > 0.0 && t < 1.0 {
                        ts.push(t);
                    }
                }
            }
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let mut run: Option<(f64, f64)> = None;
        let mut flush = |run: &mut Option<(f64, f64)>| {
            if let Some((ta, tb)) = run.take() {
                let piece = Segment::new(c.at(ta), c.at(tb));
                if piece.length() >= MIN_TARGET_PIECE {
                    out.push(piece);
                }
            }
        };
        for w in ts.windows(2) {
            let mid = c.at(0.5 * (w[0] + w[1]));
            let solid = grid.label_at(mid).is_some_and(Label::is_solid);
            if solid {
                flush(&mut run);
            } else {
                run = Some(match run {
                    Some((ta, _)) => (ta, w[1]),
                    None => (w[0], w[1]),
                });
            }
        }
        flush(&mut run);
    }
    out
}

/// Walks a path, emitting one [`Sample`] per sensor step.
///
/// Each step casts a scan, re-estimates the alignment from every scan so far,
/// re-renders the grid around the robot from all stored scans (see
/// [`snap_center`]), recovers the
/// visible segments and clips the targets.
pub struct TrajectorySimulator<'a> {
    cfg: SimConfig,
    plan_id: String,
    path_index: usize,
    poses: Vec<Point>,
    occluders: Vec<Segment>,
    windows: Vec<Segment>,
    targets: Vec<Segment>,
    scans: Vec<(LidarScan, Vec<RayKind>)>,
    next: usize,
    _plan: &'a FloorPlan,
}

impl<'a> TrajectorySimulator<'a> {
    pub fn new(
        plan: &'a FloorPlan,
        plan_id: &str,
        path_index: usize,
        path: &Path,
        cfg: SimConfig,
    ) -> Self {
        TrajectorySimulator {
            cfg,
            plan_id: plan_id.to_string(),
            path_index,
            poses: resample_polyline(&path.points, cfg.step),
            occluders: plan.termination_set(cfg.window_termination),
            windows: plan.exterior_windows(),
            targets: plan.target_segments(),
            scans: Vec::new(),
            next: 0,
            _plan: plan,
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

impl Iterator for TrajectorySimulator<'_> {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        let pose = *self.poses.get(self.next)?;
        let step = self.next;
        self.next += 1;
        let cfg = self.cfg;
        let scan = cast_scan(&self.occluders, pose, cfg.max_range, cfg.n_rays);
        let kinds = classify_rays(&scan, &self.windows);
        self.scans.push((scan, kinds));

        let alignment = estimate_alignment(self.scans.iter().map(|(s, _)| s));
        let geom = cfg.geometry();
        let frame = Frame::new(snap_center(pose, alignment.angle, geom.cell_size()), alignment.angle);
        let mut grid = OccupancyGrid::unknown(geom, frame);
        let reach = geom.half_extent_x().hypot(geom.half_extent_y()) + cfg.max_range;
        for (s, k) in &self.scans {
            if s.origin.dist(pose) <= reach {
                integrate_classified(&mut grid, s, k);
            }
        }
        let visible_segments = recover_visible_segments(&grid);
        let local_targets: Vec<Segment> =
            self.targets.iter().map(|s| frame.segment_to_local(s)).collect();
        let target_segments = clip_targets(&grid, &local_targets);
        let trajectory = self.poses[..=step].iter().map(|&p| frame.to_local(p)).collect();
        Some(Sample {
            plan_id: self.plan_id.clone(),
            path_index: self.path_index,
            step,
            grid,
            visible_segments,
            target_segments,
            trajectory,
            pose,
        })
    }
}

/// Grid center for a robot at `pose`: the nearest point of the world lattice
/// with spacing `cell` in the aligned frame. The robot stays inside the
/// central cell and grids rendered at different poses share cell boundaries.
pub fn snap_center(pose: Point, angle: f64, cell: f64) -> Point {
    let p = pose.rotate(-angle);
    Point::new((p.x / cell).round() * cell, (p.y / cell).round() * cell).rotate(angle)
}

/// Convenience wrapper collecting a whole trajectory.
pub fn simulate_trajectory(
    plan: &FloorPlan,
    plan_id: &str,
    path_index: usize,
    path: &Path,
    cfg: SimConfig,
) -> Vec<Sample> {
    TrajectorySimulator::new(plan, plan_id, path_index, path, cfg).collect()
}

/// Alignment angle comparison helper, degrees modulo 90.
pub fn alignment_error_deg(estimate: &Alignment, truth_deg: f64) -> f64 {
    circular_diff_deg(estimate.degrees(), truth_deg, 90.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floorplan::{prepare, LabeledSegment, RawFloorPlan, SegmentCategory};

    fn square_room(half: f64, angle: f64) -> Vec<Segment> {
        let c = [(-half, -half), (half, -half), (half, half), (-half, half)];
        (0..4)
            .map(|i| {
                let (a, b) = (c[i], c[(i + 1) % 4]);
                Segment::new(
                    Point::new(a.0, a.1).rotate(angle),
                    Point::new(b.0, b.1).rotate(angle),
                )
            })
            .collect()
    }

    #[test]
    fn empty_world_misses_everything() {
        let scan = cast_scan(&[], Point::new(0.0, 0.0), 4.5, 720);
        assert_eq!(scan.n_rays(), 720);
        assert_eq!(scan.hit_count(), 0);
        assert!(scan.points.iter().all(|p| (p.norm() - 4.5).abs() < 1e-12));
    }

    #[test]
    fn single_wall_hit() {
        let wall = [Segment::new(Point::new(2.0, -1.0), Point::new(2.0, 1.0))];
        let scan = cast_scan(&wall, Point::new(0.0, 0.0), 4.5, 720);
        assert!(scan.hit[0]);
        assert!(scan.points[0].dist(Point::new(2.0, 0.0)) < 1e-12);
        assert!(!scan.hit[360]);
    }

    #[test]
    fn square_room_hit_distances() {
        let room = square_room(2.0, 0.0);
        let scan = cast_scan(&room, Point::new(0.0, 0.0), 4.5, 720);
        assert_eq!(scan.hit_count(), 720);
        for (i, p) in scan.points.iter().enumerate() {
            let d = p.norm();
            // analytic ray-box distance
            let dir = LidarScan::ray_direction(720, i);
            let expected = 2.0 / dir.x.abs().max(dir.y.abs());
            assert!((d - expected).abs() < 1e-9);
            assert!((2.0 - 1e-9..=2.0 * std::f64::consts::SQRT_2 + 1e-9).contains(&d));
        }
    }

    #[test]
    fn alignment_of_axis_aligned_room() {
        let scan = cast_scan(&square_room(2.0, 0.0), Point::new(0.3, -0.2), 4.5, 720);
        let a = estimate_alignment([&scan]);
        assert!(a.confident);
        assert!(alignment_error_deg(&a, 0.0) < 0.5, "{}", a.degrees());
    }

    #[test]
    fn alignment_of_rotated_rooms() {
        for (rot, expect) in [(15.0, 15.0), (105.0, 15.0), (-30.0, 60.0), (44.6, 44.6)] {
            let room = square_room(2.5, f64::to_radians(rot));
            let scan = cast_scan(&room, Point::new(0.4, 0.1), 4.5, 720);
            let a = estimate_alignment([&scan]);
            let err = alignment_error_deg(&a, expect);
            assert!(err <= 1.0, "rot {rot}: got {} want {expect}", a.degrees());
            assert!((0.0..std::f64::consts::FRAC_PI_2).contains(&a.angle));
        }
    }

    #[test]
    fn alignment_low_confidence_without_hits() {
        let scan = cast_scan(&[], Point::new(0.0, 0.0), 4.5, 720);
        let a = estimate_alignment([&scan]);
        assert!(!a.confident);
        assert_eq!(a.angle, 0.0);
    }

    #[test]
    fn alignment_is_rotation_equivariant() {
        let room = square_room(2.0, 0.2);
        let scan = cast_scan(&room, Point::new(0.1, 0.3), 4.5, 720);
        let base = estimate_alignment([&scan]);
        for theta in [0.1f64, 0.5, 1.0, 2.0] {
            let rotated = LidarScan {
                origin: scan.origin.rotate(theta),
                max_range: scan.max_range,
                points: scan.points.iter().map(|p| p.rotate(theta)).collect(),
                hit: scan.hit.clone(),
            };
            let a = estimate_alignment([&rotated]);
            let err = circular_diff_deg(a.degrees(), base.degrees() + theta.to_degrees(), 90.0);
            assert!(err <= 1.0, "theta {theta}: {err}");
        }
    }

    fn small_grid() -> OccupancyGrid {
        OccupancyGrid::unknown(GridGeometry::new(41, 10.0), Frame::identity())
    }

    #[test]
    fn single_ray_marks_free_then_occupied() {
        let mut g = small_grid();
        let origin = Point::new(0.0, 0.0);
        let hit = Point::new(3.0 + 0.05, 0.0);
        integrate_local(&mut g, origin, &[hit], &[RayKind::Hit], IntegrationMode::Accumulate);
        assert_eq!(g.count(Label::Occupied), 1);
        assert_eq!(g.label_at(hit), Some(Label::Occupied));
        assert!(g.count(Label::Free) >= 12);
        assert_eq!(g.label_at(Point::new(1.5, 0.0)), Some(Label::Free));
        assert_eq!(g.label_at(Point::new(3.5, 0.0)), Some(Label::Unknown));
    }

    #[test]
    fn window_threshold() {
        let window = [Segment::new(Point::new(2.0, -1.0), Point::new(2.0, 1.0))];
        let scan = LidarScan {
            origin: Point::new(0.0, 0.0),
            max_range: 4.5,
            points: vec![Point::new(2.005, 0.0), Point::new(0.0, 1.5)],
            hit: vec![true, true],
        };
        let kinds = classify_rays(&scan, &window);
        assert_eq!(kinds, vec![RayKind::WindowHit, RayKind::Hit]);
        let mut g = small_grid();
        integrate_scan(&mut g, &scan, &window);
        assert_eq!(g.label_at(Point::new(2.005, 0.0)), Some(Label::Window));
    }

    #[test]
    fn occupied_cells_are_sticky() {
        let mut g = small_grid();
        let o = Point::new(0.0, 0.0);
        integrate_local(&mut g, o, &[Point::new(2.05, 0.0)], &[RayKind::Hit], IntegrationMode::Accumulate);
        integrate_local(&mut g, o, &[Point::new(4.0, 0.0)], &[RayKind::Miss], IntegrationMode::Accumulate);
        assert_eq!(g.label_at(Point::new(2.05, 0.0)), Some(Label::Occupied));
    }

    #[test]
    fn integration_order_insensitive_for_solid_cells() {
        let room = square_room(2.0, 0.3);
        let a = cast_scan(&room, Point::new(0.5, 0.0), 4.5, 360);
        let b = cast_scan(&room, Point::new(-0.8, 0.6), 4.5, 360);
        let mut g1 = small_grid();
        integrate_scan(&mut g1, &a, &[]);
        integrate_scan(&mut g1, &b, &[]);
        let mut g2 = small_grid();
        integrate_scan(&mut g2, &b, &[]);
        integrate_scan(&mut g2, &a, &[]);
        assert_eq!(g1, g2);
    }

    #[test]
    fn solid_cells_contain_hits() {
        let room = square_room(2.0, 0.3);
        let scan = cast_scan(&room, Point::new(0.5, 0.0), 4.5, 720);
        let mut g = small_grid();
        integrate_scan(&mut g, &scan, &[]);
        let half = 0.5 * g.geometry.cell_size() + 1e-9;
        for (i, l) in g.cells.iter().enumerate() {
            if l.is_solid() {
                let c = g.geometry.center(i);
                assert!(scan
                    .hit_points()
                    .any(|p| (p.x - c.x).abs() <= half && (p.y - c.y).abs() <= half));
            }
        }
        // no Free cell beyond any wall
        let reach = 2.0 + half * std::f64::consts::SQRT_2;
        for (i, l) in g.cells.iter().enumerate() {
            if *l == Label::Free {
                let c = g.geometry.center(i).rotate(-0.3);
                assert!(c.x.abs() <= reach && c.y.abs() <= reach);
            }
        }
    }

    #[test]
    fn chromatization() {
        let mut g = OccupancyGrid::unknown(GridGeometry::new(3, 3.0), Frame::identity());
        assert!(chromatize(&g).iter().all(|c| *c == [-1.0, -1.0, -1.0]));
        g.set(1, 1, Label::Window);
        assert_eq!(chromatize(&g)[4], [1.0, -1.0, 1.0]);
        let mut colors: Vec<[i8; 3]> = Label::ALL
            .iter()
            .map(|&l| label_color(l).map(|v| v as i8))
            .collect();
        colors.sort();
        colors.dedup();
        assert_eq!(colors.len(), 4);
    }

    #[test]
    fn resampling_steps() {
        let pts = [Point::new(0.0, 0.0), Point::new(0.8, 0.0)];
        assert_eq!(resample_polyline(&pts, 0.8).len(), 2);
        let l = [Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(2.0, 2.0)];
        let r = resample_polyline(&l, 0.8);
        assert_eq!(r.len(), 6);
        assert!(r[3].dist(Point::new(2.0, 0.4)) < 1e-12);
    }

    fn l_corridor() -> FloorPlan {
        let w = |a: [f64; 2], b: [f64; 2]| LabeledSegment {
            segment: Segment::new(a.into(), b.into()),
            category: SegmentCategory::Wall,
        };
        prepare(&RawFloorPlan {
            rooms: Vec::new(),
            extra: vec![
                w([0.0, 0.0], [6.0, 0.0]),
                w([6.0, 0.0], [6.0, 6.0]),
                w([6.0, 6.0], [4.0, 6.0]),
                w([4.0, 6.0], [4.0, 2.0]),
                w([4.0, 2.0], [0.0, 2.0]),
                w([0.0, 2.0], [0.0, 0.0]),
            ],
        })
    }

    #[test]
    fn two_samples_on_short_path() {
        let plan = l_corridor();
        let path = Path::from_points(vec![Point::new(1.0, 1.0), Point::new(1.8, 1.0)], 0.0);
        let samples = simulate_trajectory(&plan, "p", 0, &path, SimConfig::default());
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1].id(), "p/0/1");
    }

    #[test]
    fn l_corridor_knowledge_grows() {
        // the whole corridor stays inside the 15 m window, so nothing leaves view
        let plan = l_corridor();
        let path = Path::from_points(
            vec![Point::new(1.0, 1.0), Point::new(5.0, 1.0), Point::new(5.0, 5.0)],
            0.0,
        );
        let samples = simulate_trajectory(&plan, "l", 0, &path, SimConfig::default());
        assert_eq!(samples.len(), 11);
        let mut last = 0;
        for s in &samples {
            let k = s.grid.known_count();
            assert!(k >= last, "known count dropped: {k} after {last}");
            last = k;
            assert!(s.alpha().to_degrees() < 1.0 || s.alpha().to_degrees() > 89.0);
            assert!(!s.visible_segments.is_empty());
            for t in &s.target_segments {
                assert!(!s.grid.label_at(t.midpoint()).is_some_and(Label::is_solid));
                assert!(t.length() >= MIN_TARGET_PIECE);
            }
        }
        let total = |s: &Sample| s.target_segments.iter().map(Segment::length).sum::<f64>();
        assert!(total(&samples[10]) < total(&samples[0]));
    }

    #[test]
    fn fully_observed_wall_is_removed_from_targets() {
        let geom = GridGeometry::new(41, 10.0);
        let mut g = OccupancyGrid::unknown(geom, Frame::identity());
        // occupied row through y = 0 from x = -1 to 1
        for c in 16..=24 {
            g.set(20, c, Label::Occupied);
        }
        let wall = Segment::new(Point::new(-1.0, 0.0), Point::new(1.0, 0.0));
        assert!(clip_targets(&g, &[wall]).is_empty());
        let longer = Segment::new(Point::new(-2.0, 0.0), Point::new(2.0, 0.0));
        let kept = clip_targets(&g, &[longer]);
        assert_eq!(kept.len(), 2);
        let total: f64 = kept.iter().map(Segment::length).sum();
        assert!((total - (4.0 - 9.0 * geom.cell_size())).abs() < 1e-9, "{total}");
    }
}
