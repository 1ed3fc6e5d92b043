//! Information gain of a simulated scan at frontier locations, under naive,
//! predicted and ground-truth occluder sets.

use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::geom::{Point, Segment};
use crate::grid::{traverse_until, Label, OccupancyGrid};
use crate::mapops::FrontierCluster;
use crate::par;
use crate::sensor::{LidarScan, DEFAULT_RAYS};

pub const NAIVE: &str = "naive";
pub const PREDICTED: &str = "predicted";
pub const TRUTH: &str = "truth";

/// Label distribution induced by a cell: uniform when Unknown, otherwise an
/// indicator on the label. Indexed by `Label as usize`.
pub fn induced_distribution(l: Label) -> [f64; 4] {
    match l {
        Label::Unknown => [0.25; 4],
        known => {
            let mut p = [0.0; 4];
            p[known as usize] = 1.0;
            p
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    /// Unknown cells that became known.
    pub cells: u64,
    /// Sum over cells of `KL(after || before)` in bits.
    pub bits: f64,
}

/// Relative entropy of the after-grid's cell distributions with respect to
/// the before-grid's, summed over cells, along with the Unknown-to-known count.
///
/// Fails if a known cell changes label: its term would be infinite.
pub fn information_gain(before: &OccupancyGrid, after: &OccupancyGrid) -> Result<Gain> {
    if before.geometry != after.geometry {
        return Err(ForgeError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            before.h(),
            before.w(),
            after.h(),
            after.w()
        )));
    }
    let mut cells = 0u64;
    let mut bits = 0.0;
    for (i, (&b, &a)) in before.cells.iter().zip(&after.cells).enumerate() {
        if b == a {
            continue;
        }
        if b.is_known() {
            return Err(ForgeError::RefinementViolation { cell: i });
        }
        let (p, q) = (induced_distribution(a), induced_distribution(b));
        for k in 0..4 {
            if p[k] > 0.0 {
                bits += p[k] * (p[k] / q[k]).log2();
            }
        }
        cells += 1;
    }
    Ok(Gain { cells, bits })
}

/// Number of Unknown cells a scan from `origin` would reveal.
///
/// Every ray follows the same cell sequence as an unobstructed ray of length
/// `range` and stops at its first occluder, so growing the occluder set can
/// only shorten rays. Only Unknown cells count; the grid is not modified.
pub fn scan_gain(grid: &OccupancyGrid, origin: Point, occluders: &[Segment], range: f64, n_rays: usize) -> u64 {
    let near: Vec<&Segment> = occluders
        .iter()
        .filter(|s| s.distance_to_point(origin) <= range)
        .collect();
    let mut seen = vec![false; grid.cells.len()];
    let mut count = 0u64;
    for i in 0..n_rays {
        let dir = LidarScan::ray_direction(n_rays, i);
        let t = near
            .iter()
            .filter_map(|s| s.ray_hit(origin, dir))
            .fold(f64::INFINITY, f64::min);
        let stop = (t / range).min(1.0);
        traverse_until(&grid.geometry, origin, origin + dir * range, stop, |idx, _| {
            if !seen[idx] {
                seen[idx] = true;
                if grid.cells[idx] == Label::Unknown {
                    count += 1;
                }
            }
        });
    }
    count
}

/// Gain of one estimator at one frontier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    pub location: usize,
    pub size: usize,
    pub estimator: String,
    pub cells: u64,
    pub bits: f64,
}

/// Scans from the frontier's cell center against `occluders` (grid frame).
pub fn gain_at_frontier(
    grid: &OccupancyGrid,
    frontier: &FrontierCluster,
    occluders: &[Segment],
    range: f64,
    estimator: &str,
) -> Result<GainEstimate> {
    if grid.cells.get(frontier.location) != Some(&Label::Free) {
        return Err(ForgeError::FrontierNotFree {
            cell: frontier.location,
        });
    }
    let origin = grid.geometry.center(frontier.location);
    let cells = scan_gain(grid, origin, occluders, range, DEFAULT_RAYS);
    Ok(GainEstimate {
        location: frontier.location,
        size: frontier.size(),
        estimator: estimator.to_string(),
        cells,
        bits: cells as f64 * 2.0,
    })
}

/// Occluder sets to evaluate, all in the grid frame.
#[derive(Debug, Clone, Copy)]
pub struct Environments<'a> {
    pub visible: &'a [Segment],
    /// Extra segments from a predictor, with its estimator name.
    pub predicted: Option<(&'a str, &'a [Segment])>,
    pub truth: Option<&'a [Segment]>,
}

/// Gains at every frontier for the naive, predicted and truth environments,
/// in frontier order then estimator order.
pub fn estimate_all(
    grid: &OccupancyGrid,
    frontiers: &[FrontierCluster],
    env: &Environments,
    range: f64,
) -> Result<Vec<GainEstimate>> {
    let mut sets: Vec<(&str, Vec<Segment>)> = vec![(NAIVE, env.visible.to_vec())];
    if let Some((name, pred)) = env.predicted {
        sets.push((name, env.visible.iter().chain(pred).copied().collect()));
    }
    if let Some(truth) = env.truth {
        sets.push((TRUTH, truth.to_vec()));
    }
    let per_frontier = par::map(frontiers, |f| -> Result<Vec<GainEstimate>> {
        sets.iter()
            .map(|(name, occ)| gain_at_frontier(grid, f, occ, range, name))
            .collect()
    });
    let mut out = Vec::new();
    for r in per_frontier {
        out.extend(r?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Frame;
    use crate::grid::{traverse, GridGeometry};

    fn grid() -> OccupancyGrid {
        OccupancyGrid::unknown(GridGeometry::default(), Frame::identity())
    }

    #[test]
    fn identical_grids_gain_nothing() {
        let g = grid();
        assert_eq!(information_gain(&g, &g).unwrap(), Gain { cells: 0, bits: 0.0 });
    }

    #[test]
    fn five_new_free_cells_are_ten_bits() {
        let before = grid();
        let mut after = before.clone();
        for c in 0..5 {
            after.set(3, c, Label::Free);
        }
        assert_eq!(information_gain(&before, &after).unwrap(), Gain { cells: 5, bits: 10.0 });
    }

    #[test]
    fn relabeling_known_cells_is_rejected() {
        let mut before = grid();
        before.set(0, 0, Label::Free);
        let mut after = before.clone();
        after.set(0, 0, Label::Occupied);
        assert!(matches!(
            information_gain(&before, &after),
            Err(ForgeError::RefinementViolation { cell: 0 })
        ));
    }

    fn frontier_at(g: &mut OccupancyGrid, r: usize, c: usize) -> FrontierCluster {
        g.set(r, c, Label::Free);
        FrontierCluster {
            cells: vec![g.geometry.index(r, c)],
            location: g.geometry.index(r, c),
        }
    }

    #[test]
    fn enclosed_frontier_gains_nothing_new() {
        let mut g = grid();
        let f = frontier_at(&mut g, 60, 60);
        let c = g.geometry.center(f.location);
        let r = 0.3 / g.geometry.scale;
        let box_ = [
            Segment::new(c + Point::new(-r, -r), c + Point::new(r, -r)),
            Segment::new(c + Point::new(r, -r), c + Point::new(r, r)),
            Segment::new(c + Point::new(r, r), c + Point::new(-r, r)),
            Segment::new(c + Point::new(-r, r), c + Point::new(-r, -r)),
        ];
        let e = gain_at_frontier(&g, &f, &box_, 4.5, NAIVE).unwrap();
        assert_eq!(e.cells, 0);
    }

    #[test]
    fn open_disc_matches_ray_union() {
        let mut g = grid();
        let f = frontier_at(&mut g, 60, 60);
        let o = g.geometry.center(f.location);
        let e = gain_at_frontier(&g, &f, &[], 4.5, NAIVE).unwrap();
        // brute force: union of full-length ray traversals, minus the known start cell
        let mut hit = std::collections::HashSet::new();
        for i in 0..DEFAULT_RAYS {
            let d = LidarScan::ray_direction(DEFAULT_RAYS, i);
            traverse(&g.geometry, o, o + d * 4.5, |idx, _| {
                hit.insert(idx);
            });
        }
        assert_eq!(e.cells as usize, hit.len() - 1);
        // close to the disc area in cells
        let disc = std::f64::consts::PI * (4.5 * g.geometry.scale).powi(2);
        assert!((e.cells as f64 - disc).abs() / disc < 0.05, "{} vs {disc}", e.cells);
        assert_eq!(e.bits, 2.0 * e.cells as f64);
    }

    #[test]
    fn non_free_frontier_is_an_error() {
        let g = grid();
        let f = FrontierCluster {
            cells: vec![0],
            location: 0,
        };
        assert!(gain_at_frontier(&g, &f, &[], 4.5, NAIVE).is_err());
    }

    #[test]
    fn collapse_and_dominance() {
        let mut g = grid();
        let f = frontier_at(&mut g, 60, 60);
        let visible = [Segment::new(Point::new(1.0, -2.0), Point::new(1.0, 2.0))];
        let truth = [
            visible[0],
            Segment::new(Point::new(-2.0, 1.5), Point::new(2.0, 1.5)),
        ];
        let env = Environments {
            visible: &visible,
            predicted: Some((PREDICTED, &[])),
            truth: Some(&truth),
        };
        let est = estimate_all(&g, std::slice::from_ref(&f), &env, 4.5).unwrap();
        assert_eq!(est.len(), 3);
        assert_eq!(est[0].cells, est[1].cells);
        assert!(est[0].cells > est[2].cells);
        assert!(estimate_all(&g, &[], &env, 4.5).unwrap().is_empty());
    }
}
