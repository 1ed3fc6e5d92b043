//! Seeded generator of corridor-style office floor plans.
//!
//! A straight corridor runs between two rows of rooms. Every room opens onto
//! the corridor through a door that appears in both polygons; outer walls may
//! carry windows and some partitions are glass. The whole building is rotated
//! and shifted by a random rigid motion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::floorplan::{RawFloorPlan, Room, SegmentCategory};
use crate::geom::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub min_length: f64,
    pub max_length: f64,
    pub corridor_width: (f64, f64),
    pub room_depth: (f64, f64),
    pub room_width: (f64, f64),
    pub door_width: f64,
    /// Chance that an outer room wall carries a window.
    pub window_prob: f64,
    /// Chance that a partition between rooms is glass.
    pub glass_prob: f64,
    /// Maximum offset of the building from the origin, meters.
    pub max_offset: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            min_length: 12.0,
            max_length: 22.0,
            corridor_width: (1.6, 2.4),
            room_depth: (3.0, 5.0),
            room_width: (2.6, 4.8),
            door_width: 0.9,
            window_prob: 0.7,
            glass_prob: 0.1,
            max_offset: 20.0,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Splits `[0, length]` into room widths drawn from `range`.
fn partition(rng: &mut ChaCha8Rng, length: f64, range: (f64, f64)) -> Vec<f64> {
    let mut cuts = vec![0.0];
    let mut x = 0.0;
    loop {
        let w = uniform(rng, range);
        if length - (x + w) < range.0 {
            break;
        }
        x += w;
        cuts.push(x);
    }
    cuts.push(length);
    cuts
}

/// Room and its door interval along the corridor side.
struct SideRoom {
    x0: f64,
    x1: f64,
    door: (f64, f64),
}

/// Polyline along `y` from `x_from` to `x_to` (either direction) with door
/// intervals, as consecutive vertices and the category of each edge.
fn run_with_doors(y: f64, x_from: f64, x_to: f64, doors: &[(f64, f64)]) -> (Vec<Point>, Vec<SegmentCategory>) {
    let forward = x_to > x_from;
    let mut ds: Vec<(f64, f64)> = doors
        .iter()
        .copied()
        .filter(|&(a, b)| a.min(b) > x_from.min(x_to) && a.max(b) < x_from.max(x_to))
        .collect();
    ds.sort_by(|a, b| a.0.total_cmp(&b.0));
    if !forward {
        ds.reverse();
    }
    let mut pts = vec![Point::new(x_from, y)];
    let mut cats = Vec::new();
    for (a, b) in ds {
        let (a, b) = if forward { (a, b) } else { (b, a) };
        pts.push(Point::new(a, y));
        cats.push(SegmentCategory::Wall);
        pts.push(Point::new(b, y));
        cats.push(SegmentCategory::Door);
    }
    pts.push(Point::new(x_to, y));
    cats.push(SegmentCategory::Wall);
    (pts, cats)
}

/// Generates one plan from a seed.
pub fn generate_plan(seed: u64, cfg: &SyntheticConfig) -> RawFloorPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let length = uniform(&mut rng, (cfg.min_length, cfg.max_length));
    let cw = uniform(&mut rng, cfg.corridor_width);
    let depths = [uniform(&mut rng, cfg.room_depth), uniform(&mut rng, cfg.room_depth)];

    let mut rooms = Vec::new();
    let mut corridor_doors: [Vec<(f64, f64)>; 2] = [Vec::new(), Vec::new()];
    for (side, doors) in corridor_doors.iter_mut().enumerate() {
        let cuts = partition(&mut rng, length, cfg.room_width);
        // partition i sits at cuts[i]; the two end walls are never glass
        let partitions: Vec<SegmentCategory> = (0..cuts.len())
            .map(|i| {
                let glass = rng.random::<f64>() < cfg.glass_prob;
                if glass && i != 0 && i != cuts.len() - 1 {
                    SegmentCategory::Window
                } else {
                    SegmentCategory::Wall
                }
            })
            .collect();
        let (y_in, y_out) = if side == 0 { (0.0, -depths[0]) } else { (cw, cw + depths[1]) };
        for (k, w) in cuts.windows(2).enumerate() {
            let slack = (w[1] - w[0] - cfg.door_width - 0.4).max(0.0);
            let d0 = w[0] + 0.2 + slack * rng.random::<f64>();
            let room = SideRoom {
                x0: w[0],
                x1: w[1],
                door: (d0, d0 + cfg.door_width),
            };
            let ww = (w[1] - w[0] - 1.0).clamp(0.0, 1.6);
            let wx = 0.5 * (w[0] + w[1]);
            let window = rng.random::<f64>() < cfg.window_prob && ww > 0.4;
            let openings = if window { vec![(wx - ww / 2.0, wx + ww / 2.0)] } else { Vec::new() };
            let walls = Walls {
                y_in,
                y_out,
                left: partitions[k],
                right: partitions[k + 1],
            };
            rooms.push(side_room(side, &room, &openings, &walls));
            doors.push(room.door);
        }
    }
    let end_cat = if rng.random::<f64>() < cfg.window_prob {
        SegmentCategory::Window
    } else {
        SegmentCategory::Wall
    };
    rooms.push(corridor_room(length, cw, &corridor_doors, end_cat));

    let angle = rng.random::<f64>() * std::f64::consts::TAU;
    let offset = Point::new(
        (rng.random::<f64>() * 2.0 - 1.0) * cfg.max_offset,
        (rng.random::<f64>() * 2.0 - 1.0) * cfg.max_offset,
    );
    for room in &mut rooms {
        for v in &mut room.vertices {
            *v = v.rotate(angle) + offset;
        }
    }
    RawFloorPlan {
        rooms,
        extra: Vec::new(),
    }
}

/// Polygon from a closed vertex loop; each entry holds a vertex and the
/// category of the edge leaving it.
fn room_from_loop(points: Vec<(Point, SegmentCategory)>) -> Room {
    Room {
        vertices: points.iter().map(|p| p.0).collect(),
        categories: points.iter().map(|p| p.1).collect(),
    }
}

/// Appends a horizontal run to a loop. Openings take `opening`; the run's
/// last vertex starts an edge of category `tail`.
fn push_run(
    loop_: &mut Vec<(Point, SegmentCategory)>,
    (y, from, to): (f64, f64, f64),
    openings: &[(f64, f64)],
    opening: SegmentCategory,
    tail: SegmentCategory,
) {
    let (pts, cats) = run_with_doors(y, from, to, openings);
    for i in 0..pts.len() - 1 {
        let c = if cats[i] == SegmentCategory::Door { opening } else { cats[i] };
        loop_.push((pts[i], c));
    }
    loop_.push((pts[pts.len() - 1], tail));
}

struct Walls {
    y_in: f64,
    y_out: f64,
    left: SegmentCategory,
    right: SegmentCategory,
}

/// Counter-clockwise room polygon. Side 0 lies below the corridor, side 1 above.
fn side_room(side: usize, r: &SideRoom, windows: &[(f64, f64)], w: &Walls) -> Room {
    use SegmentCategory::{Door, Window};
    let mut loop_ = Vec::new();
    if side == 0 {
        push_run(&mut loop_, (w.y_out, r.x0, r.x1), windows, Window, w.right);
        push_run(&mut loop_, (w.y_in, r.x1, r.x0), &[r.door], Door, w.left);
    } else {
        push_run(&mut loop_, (w.y_in, r.x0, r.x1), &[r.door], Door, w.right);
        push_run(&mut loop_, (w.y_out, r.x1, r.x0), windows, Window, w.left);
    }
    room_from_loop(loop_)
}

fn corridor_room(length: f64, cw: f64, doors: &[Vec<(f64, f64)>; 2], end_cat: SegmentCategory) -> Room {
    let mut loop_ = Vec::new();
    push_run(&mut loop_, (0.0, 0.0, length), &doors[0], SegmentCategory::Door, end_cat);
    push_run(&mut loop_, (cw, length, 0.0), &doors[1], SegmentCategory::Door, end_cat);
    room_from_loop(loop_)
}

/// Plans for seeds `base_seed..base_seed + count`.
pub fn generate_plans(base_seed: u64, count: usize, cfg: &SyntheticConfig) -> Vec<RawFloorPlan> {
    (0..count as u64)
        .map(|i| generate_plan(base_seed.wrapping_add(i), cfg))
        .collect()
}
