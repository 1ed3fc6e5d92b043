//! Robot trajectories through a floor plan: farthest-point waypoints joined by
//! clearance-weighted Dijkstra paths, filtered by length and number of turns.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::floorplan::FloorPlan;
use crate::geom::{Point, Segment};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavConfig {
    /// Meters per cell.
    pub resolution: f64,
    /// Minimum wall distance for waypoint candidates.
    pub clearance: f64,
    /// Wall distance beyond which the cost is flat.
    pub truncation: f64,
    /// Cost weight `w` in `1 + w * max(0, truncation - d)`.
    pub cost_weight: f64,
    /// Cells closer than this to an impassable segment are blocked.
    pub robot_radius: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        NavConfig {
            resolution: 0.1,
            clearance: 0.3,
            truncation: 1.0,
            cost_weight: 10.0,
            robot_radius: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathFilter {
    pub min_length: f64,
    pub max_length: f64,
    pub min_turns: usize,
}

impl Default for PathFilter {
    fn default() -> Self {
        PathFilter {
            min_length: 5.0,
            max_length: 100.0,
            min_turns: 3,
        }
    }
}

/// Douglas-Peucker tolerance applied before counting turns.
pub const TURN_SIMPLIFY_TOL: f64 = 0.2;
/// Heading change that counts as a turn.
pub const TURN_ANGLE_DEG: f64 = 30.0;

/// Planning raster over a floor plan. Cell `(col, row)` covers
/// `origin + [col, col+1) * resolution` by `origin + [row, row+1) * resolution`.
#[derive(Debug, Clone)]
pub struct NavGrid {
    pub origin: Point,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// Distance from each cell center to the nearest impassable segment.
    pub wall_distance: Vec<f64>,
    /// Traversal cost; `f64::INFINITY` on blocked cells.
    pub cost: Vec<f64>,
    /// Minimum wall distance for waypoint candidates.
    pub clearance: f64,
}

impl NavGrid {
    /// Grid with explicit costs (`INFINITY` = blocked) and no wall geometry.
    pub fn from_costs(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Point,
        cost: Vec<f64>,
    ) -> Self {
        assert_eq!(cost.len(), width * height);
        NavGrid {
            origin,
            resolution,
            width,
            height,
            wall_distance: vec![f64::INFINITY; width * height],
            cost,
            clearance: 0.0,
        }
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn center(&self, idx: usize) -> Point {
        let (col, row) = (idx % self.width, idx / self.width);
        Point::new(
            self.origin.x + (col as f64 + 0.5) * self.resolution,
            self.origin.y + (row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn cell_of(&self, p: Point) -> Option<usize> {
        let c = ((p.x - self.origin.x) / self.resolution).floor();
        let r = ((p.y - self.origin.y) / self.resolution).floor();
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        Some(self.index(c as usize, r as usize))
    }

    pub fn is_free(&self, idx: usize) -> bool {
        self.cost[idx].is_finite()
    }

    pub fn free_cells(&self) -> Vec<usize> {
        (0..self.cost.len()).filter(|&i| self.is_free(i)).collect()
    }

    fn neighbors(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (c, r) = ((idx % self.width) as isize, (idx / self.width) as isize);
        const STEPS: [(isize, isize); 8] = [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ];
        STEPS.iter().filter_map(move |&(dc, dr)| {
            let (nc, nr) = (c + dc, r + dr);
            if nc < 0 || nr < 0 || nc >= self.width as isize || nr >= self.height as isize {
                return None;
            }
            let n = self.index(nc as usize, nr as usize);
            if !self.is_free(n) {
                return None;
            }
            if dc != 0 && dr != 0 {
                // no corner cutting
                let a = self.index(nc as usize, r as usize);
                let b = self.index(c as usize, nr as usize);
                if !self.is_free(a) || !self.is_free(b) {
                    return None;
                }
                Some((n, std::f64::consts::SQRT_2))
            } else {
                Some((n, 1.0))
            }
        })
    }

    /// Cost of stepping between adjacent cells: step length (in cells) times
    /// the mean of the two cell costs, so the metric is symmetric.
    pub fn step_cost(&self, from: usize, to: usize, step: f64) -> f64 {
        step * 0.5 * (self.cost[from] + self.cost[to])
    }
}

/// Rasterizes the plan's impassable segments into a clearance-cost grid.
///
/// Cells outside the building perimeter are blocked, as are cells whose center
/// is within the robot radius of a wall or window.
pub fn build_navgrid(plan: &FloorPlan, cfg: &NavConfig) -> Result<NavGrid> {
    if cfg.resolution <= 0.0 {
        return Err(ForgeError::InvalidArgument("resolution must be positive".into()));
    }
    if !(cfg.truncation >= cfg.clearance && cfg.clearance >= 0.0) {
        return Err(ForgeError::InvalidArgument(
            "need truncation >= clearance >= 0".into(),
        ));
    }
    let (lo, hi) = plan.bounds().ok_or(ForgeError::EmptyFreeSpace)?;
    let pad = 2.0 * cfg.resolution;
    let origin = Point::new(lo.x - pad, lo.y - pad);
    let width = (((hi.x - lo.x) + 2.0 * pad) / cfg.resolution).ceil() as usize;
    let height = (((hi.y - lo.y) + 2.0 * pad) / cfg.resolution).ceil() as usize;
    let walls = plan.impassable();
    let mut grid = NavGrid {
        origin,
        resolution: cfg.resolution,
        width,
        height,
        wall_distance: Vec::new(),
        cost: Vec::new(),
        clearance: cfg.clearance,
    };
    let has_perimeter = plan.perimeter.len() >= 4;
    let cells: Vec<(f64, f64)> = par::map_range(width * height, |i| {
        let p = grid.center(i);
        let d = walls
            .iter()
            .map(|s| s.distance_to_point(p))
            .fold(f64::INFINITY, f64::min);
        let inside = !has_perimeter || plan.contains(p);
        let cost = if inside && d >= cfg.robot_radius {
            1.0 + cfg.cost_weight * (cfg.truncation - d).max(0.0)
        } else {
            f64::INFINITY
        };
        (d, cost)
    });
    grid.wall_distance = cells.iter().map(|c| c.0).collect();
    grid.cost = cells.iter().map(|c| c.1).collect();
    Ok(grid)
}

/// Greedy max-min (farthest point) selection starting from `first`.
/// Returns candidate indices in selection order; stops early once every
/// remaining candidate coincides with a chosen one.
pub fn farthest_point_sampling(points: &[Point], first: usize, k: usize) -> Vec<usize> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut chosen = vec![first];
    let mut min_d: Vec<f64> = par::map(points, |p| p.dist(points[first]));
    while chosen.len() < k {
        let Some((best, d)) = par::argmax_by_key(points.len(), |i| min_d[i]) else {
            break;
        };
        if d <= 0.0 {
            break;
        }
        chosen.push(best);
        let newest = points[best];
        par::for_each_mut(&mut min_d, |i, m| {
            *m = m.min(points[i].dist(newest));
        });
    }
    chosen
}

/// Samples `k` waypoints from the free cells by farthest point sampling; the
/// seed selects the first point.
pub fn sample_waypoints(grid: &NavGrid, k: usize, seed: u64) -> Result<Vec<Point>> {
    if k == 0 {
        return Err(ForgeError::InvalidArgument("k must be at least 1".into()));
    }
    let free = grid.free_cells();
    let roomy: Vec<usize> = free
        .iter()
        .copied()
        .filter(|&i| grid.wall_distance[i] >= grid.clearance)
        .collect();
    let cells = if roomy.is_empty() { free } else { roomy };
    if cells.is_empty() {
        return Err(ForgeError::EmptyFreeSpace);
    }
    let pts: Vec<Point> = cells.iter().map(|&i| grid.center(i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..pts.len());
    Ok(farthest_point_sampling(&pts, first, k)
        .into_iter()
        .map(|i| pts[i])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub points: Vec<Point>,
    pub length: f64,
    pub turn_count: usize,
    /// Accumulated planning cost (cell units).
    #[serde(default)]
    pub cost: f64,
}

impl Path {
    pub fn from_points(points: Vec<Point>, cost: f64) -> Self {
        let length = polyline_length(&points);
        let turn_count = count_turns(&points);
        Path {
            points,
            length,
            turn_count,
            cost,
        }
    }
}

pub fn polyline_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Douglas-Peucker simplification.
pub fn simplify(points: &[Point], tol: f64) -> Vec<Point> {
    if points.len() < 3 {
        return points.to_vec();
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    let mut stack = vec![(0, points.len() - 1)];
    while let Some((s, e)) = stack.pop() {
        if e <= s + 1 {
            continue;
        }
        let chord = Segment::new(points[s], points[e]);
        let (mut best, mut best_d) = (s, -1.0);
        for (i, &p) in points.iter().enumerate().take(e).skip(s + 1) {
            let d = chord.distance_to_point(p);
            if d > best_d {
                best = i;
                best_d = d;
            }
        }
        if best_d > tol {
            keep[best] = true;
            stack.push((s, best));
            stack.push((best, e));
        }
    }
    points
        .iter()
        .zip(keep)
        .filter_map(|(&p, k)| k.then_some(p))
        .collect()
}

/// Number of vertices of the simplified polyline where the heading changes
/// by more than [`TURN_ANGLE_DEG`].
pub fn count_turns(points: &[Point]) -> usize {
    let simple = simplify(points, TURN_SIMPLIFY_TOL);
    simple
        .windows(3)
        .filter(|w| {
            let (u, v) = (w[1] - w[0], w[2] - w[1]);
            let ang = u.cross(v).atan2(u.dot(v)).abs().to_degrees();
            ang > TURN_ANGLE_DEG
        })
        .count()
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    cell: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source Dijkstra. Stops early once every cell in `targets` is settled
/// (an empty target list explores the whole component).
fn dijkstra(grid: &NavGrid, source: usize, targets: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let n = grid.cost.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut remaining = targets.iter().filter(|&&t| t != source).count();
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry {
        cost: 0.0,
        cell: source,
    });
    while let Some(Entry { cost, cell }) = heap.pop() {
        if done[cell] {
            continue;
        }
        done[cell] = true;
        if cell != source && targets.contains(&cell) {
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
        for (nb, step) in grid.neighbors(cell) {
            let c = cost + grid.step_cost(cell, nb, step);
            if c < dist[nb] {
                dist[nb] = c;
                prev[nb] = cell;
                heap.push(Entry { cost: c, cell: nb });
            }
        }
    }
    (dist, prev)
}

fn trace(grid: &NavGrid, prev: &[usize], source: usize, target: usize) -> Vec<Point> {
    let mut cells = vec![target];
    let mut c = target;
    while c != source {
        c = prev[c];
        cells.push(c);
    }
    cells.reverse();
    cells.into_iter().map(|i| grid.center(i)).collect()
}

fn endpoint_cell(grid: &NavGrid, p: Point, a: Point, b: Point) -> Result<usize> {
    grid.cell_of(p)
        .filter(|&i| grid.is_free(i))
        .ok_or(ForgeError::Unreachable {
            from: (a.x, a.y),
            to: (b.x, b.y),
        })
}

/// Minimum-cost 8-connected path between the cells containing `a` and `b`.
pub fn shortest_path(grid: &NavGrid, a: Point, b: Point) -> Result<Path> {
    let src = endpoint_cell(grid, a, a, b)?;
    let dst = endpoint_cell(grid, b, a, b)?;
    if src == dst {
        return Ok(Path::from_points(vec![grid.center(src)], 0.0));
    }
    let (dist, prev) = dijkstra(grid, src, &[dst]);
    if !dist[dst].is_finite() {
        return Err(ForgeError::Unreachable {
            from: (a.x, a.y),
            to: (b.x, b.y),
        });
    }
    Ok(Path::from_points(trace(grid, &prev, src, dst), dist[dst]))
}

/// Paths between every waypoint pair `(i, j)`, `i < j`, in row-major pair
/// order. Unreachable pairs yield `None`.
pub fn all_pair_paths(grid: &NavGrid, waypoints: &[Point]) -> Vec<Option<Path>> {
    let cells: Vec<Option<usize>> = waypoints
        .iter()
        .map(|&p| grid.cell_of(p).filter(|&i| grid.is_free(i)))
        .collect();
    let per_source: Vec<Vec<Option<Path>>> = par::map_range(waypoints.len(), |i| {
        let Some(src) = cells[i] else {
            return vec![None; waypoints.len() - i - 1];
        };
        let targets: Vec<usize> = cells[i + 1..].iter().flatten().copied().collect();
        let (dist, prev) = dijkstra(grid, src, &targets);
        cells[i + 1..]
            .iter()
            .map(|c| {
                let dst = (*c)?;
                if dst == src {
                    return Some(Path::from_points(vec![grid.center(src)], 0.0));
                }
                dist[dst]
                    .is_finite()
                    .then(|| Path::from_points(trace(grid, &prev, src, dst), dist[dst]))
            })
            .collect()
    });
    per_source.into_iter().flatten().collect()
}

/// Keeps paths with an admissible length and enough turns.
pub fn filter_paths(paths: Vec<Path>, filter: &PathFilter) -> Vec<Path> {
    paths
        .into_iter()
        .filter(|p| {
            p.length >= filter.min_length
                && p.length <= filter.max_length
                && p.turn_count >= filter.min_turns
        })
        .collect()
}
