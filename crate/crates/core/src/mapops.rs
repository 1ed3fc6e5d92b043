//! Grid analysis: marching-squares wall recovery, frontier detection and
//! frontier clustering.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geom::{Point, Segment};
use crate::grid::{GridGeometry, Label, OccupancyGrid};

/// Marching squares over the solid indicator (Occupied or Window vs Free).
///
/// Corners are cell centers, so a contour runs halfway between a solid cell
/// and a free one, i.e. along the shared cell face. Blocks touching an
/// Unknown cell emit nothing. Unit pieces are merged into maximal collinear
/// runs. Coordinates are in the grid's local metric frame.
pub fn recover_visible_segments(grid: &OccupancyGrid) -> Vec<Segment> {
    let geom = grid.geometry;
    let (h, w) = (geom.h, geom.w);
    if h < 2 || w < 2 {
        return Vec::new();
    }
    // endpoints on a doubled lattice: (2u, 2v) with u, v cell coordinates
    let mut pieces: Vec<([i64; 2], [i64; 2])> = Vec::new();
    for r in 0..h - 1 {
        for c in 0..w - 1 {
            let corners = [
                grid.get(r, c),
                grid.get(r, c + 1),
                grid.get(r + 1, c + 1),
                grid.get(r + 1, c),
            ];
            if corners.contains(&Label::Unknown) {
                continue;
            }
            let bit = |l: Label| l.is_solid() as u8;
            let case = bit(corners[0]) << 3 | bit(corners[1]) << 2 | bit(corners[2]) << 1 | bit(corners[3]);
            let (ri, ci) = (2 * r as i64, 2 * c as i64);
            let top = [ci + 2, ri + 1];
            let right = [ci + 3, ri + 2];
            let bottom = [ci + 2, ri + 3];
            let left = [ci + 1, ri + 2];
            let mut emit = |a: [i64; 2], b: [i64; 2]| pieces.push((a, b));
            match case {
                1 | 14 => emit(left, bottom),
                2 | 13 => emit(bottom, right),
                3 | 12 => emit(left, right),
                4 | 11 => emit(top, right),
                6 | 9 => emit(top, bottom),
                7 | 8 => emit(left, top),
                // saddles: the block center counts as solid, so the two
                // free corners are cut off
                5 => {
                    emit(left, top);
                    emit(bottom, right);
                }
                10 => {
                    emit(top, right);
                    emit(left, bottom);
                }
                _ => {}
            }
        }
    }
    merge_lattice_runs(&pieces)
        .into_iter()
        .map(|(a, b)| {
            let p = |q: [i64; 2]| geom.from_uv(q[0] as f64 / 2.0, q[1] as f64 / 2.0);
            Segment::new(p(a), p(b))
        })
        .collect()
}

/// Direction and line offset of a lattice line.
type LineKey = ([i64; 2], i64);

/// Merges lattice segments that share a supporting line and overlap or touch.
fn merge_lattice_runs(pieces: &[([i64; 2], [i64; 2])]) -> Vec<([i64; 2], [i64; 2])> {
    // key: (direction, line offset); value: intervals along the direction
    let mut lines: BTreeMap<LineKey, Vec<(i64, i64)>> = BTreeMap::new();
    for &(a, b) in pieces {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let d = [(b[0] - a[0]).signum(), (b[1] - a[1]).signum()];
        // offset: cross product with the direction identifies the line
        let offset = a[0] * d[1] - a[1] * d[0];
        let param = |p: [i64; 2]| if d[0] != 0 { p[0] } else { p[1] };
        lines.entry((d, offset)).or_default().push((param(a), param(b)));
    }
    let mut out = Vec::new();
    for ((d, offset), mut iv) in lines {
        iv.sort_unstable();
        let point = |t: i64| -> [i64; 2] {
            if d[0] != 0 {
                [t, t * d[1] - offset]
            } else {
                [offset, t]
            }
        };
        let mut cur = iv[0];
        for &(s, e) in &iv[1..] {
            if s <= cur.1 {
                cur.1 = cur.1.max(e);
            } else {
                out.push((point(cur.0), point(cur.1)));
                cur = (s, e);
            }
        }
        out.push((point(cur.0), point(cur.1)));
    }
    out
}

/// Free cells with at least one Free and at least one Unknown 4-neighbor.
/// Returned in row-major order.
pub fn detect_frontier_cells(grid: &OccupancyGrid) -> Vec<usize> {
    let (h, w) = (grid.h(), grid.w());
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if grid.get(r, c) != Label::Free {
                continue;
            }
            let (mut free, mut unknown) = (false, false);
            let nbrs = [
                (r.wrapping_sub(1), c),
                (r + 1, c),
                (r, c.wrapping_sub(1)),
                (r, c + 1),
            ];
            for (nr, nc) in nbrs {
                if nr < h && nc < w {
                    match grid.get(nr, nc) {
                        Label::Free => free = true,
                        Label::Unknown => unknown = true,
                        _ => {}
                    }
                }
            }
            if free && unknown {
                out.push(grid.geometry.index(r, c));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontierCluster {
    /// Member cells, row-major indices in ascending order.
    pub cells: Vec<usize>,
    /// Member closest to the centroid.
    pub location: usize,
}

impl FrontierCluster {
    pub fn size(&self) -> usize {
        self.cells.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// DBSCAN neighborhood radius in cells.
    pub eps: f64,
    pub min_pts: usize,
    pub min_size: usize,
    /// Clusters larger than this are split by k-means.
    pub max_size: usize,
    /// Clusters whose location is closer than this to the edge are dropped.
    pub edge_margin: usize,
    pub kmeans_iters: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            eps: 1.5,
            min_pts: 3,
            min_size: 3,
            max_size: 30,
            edge_margin: 5,
            kmeans_iters: 20,
        }
    }
}

/// DBSCAN over cell coordinates. Points are visited in the given order;
/// noise is omitted. Each returned cluster is sorted.
pub fn dbscan(geom: &GridGeometry, cells: &[usize], eps: f64, min_pts: usize) -> Vec<Vec<usize>> {
    let pos: HashMap<(i64, i64), usize> = cells
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let (r, col) = geom.row_col(c);
            ((r as i64, col as i64), i)
        })
        .collect();
    let reach = eps.floor() as i64;
    let eps2 = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        let (r, c) = geom.row_col(cells[i]);
        let (r, c) = (r as i64, c as i64);
        let mut out = Vec::new();
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                if ((dr * dr + dc * dc) as f64) <= eps2 {
                    if let Some(&j) = pos.get(&(r + dr, c + dc)) {
                        out.push(j);
                    }
                }
            }
        }
        out
    };
    const UNSEEN: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;
    let mut label = vec![UNSEEN; cells.len()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..cells.len() {
        if label[i] != UNSEEN {
            continue;
        }
        let nb = neighbors(i);
        if nb.len() < min_pts {
            label[i] = NOISE;
            continue;
        }
        let id = clusters.len();
        let mut members = vec![i];
        label[i] = id;
        let mut queue = nb;
        while let Some(j) = queue.pop() {
            if label[j] == NOISE {
                label[j] = id;
                members.push(j);
                continue;
            }
            if label[j] != UNSEEN {
                continue;
            }
            label[j] = id;
            members.push(j);
            let nj = neighbors(j);
            if nj.len() >= min_pts {
                queue.extend(nj);
            }
        }
        let mut m: Vec<usize> = members.into_iter().map(|k| cells[k]).collect();
        m.sort_unstable();
        clusters.push(m);
    }
    clusters
}

fn coords(geom: &GridGeometry, idx: usize) -> (f64, f64) {
    let (r, c) = geom.row_col(idx);
    (r as f64, c as f64)
}

/// Member nearest to the centroid; ties go to the lowest index.
pub fn cluster_location(geom: &GridGeometry, cells: &[usize]) -> Option<usize> {
    if cells.is_empty() {
        return None;
    }
    let n = cells.len() as f64;
    let (sr, sc) = cells.iter().fold((0.0, 0.0), |(a, b), &i| {
        let (r, c) = coords(geom, i);
        (a + r, b + c)
    });
    let (mr, mc) = (sr / n, sc / n);
    cells
        .iter()
        .map(|&i| {
            let (r, c) = coords(geom, i);
            ((r - mr).powi(2) + (c - mc).powi(2), i)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, i)| i)
}

fn cluster_seed(cells: &[usize]) -> u64 {
    let mut h = Sha256::new();
    for &c in cells {
        h.update((c as u64).to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Splits `cells` into `k` groups with k-means++ and Lloyd iterations.
/// Seeded from the cell set, so the split is deterministic. Groups smaller
/// than `min_size` are merged into the group with the nearest centroid, so
/// the output always tiles the input.
pub fn kmeans_split(
    geom: &GridGeometry,
    cells: &[usize],
    k: usize,
    iters: usize,
    min_size: usize,
) -> Vec<Vec<usize>> {
    let k = k.clamp(1, cells.len().max(1));
    if k <= 1 || cells.len() <= 1 {
        return vec![cells.to_vec()];
    }
    let pts: Vec<(f64, f64)> = cells.iter().map(|&i| coords(geom, i)).collect();
    let d2 = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    let mut rng = ChaCha8Rng::seed_from_u64(cluster_seed(cells));
    let mut centers = vec![pts[rng.random_range(0..pts.len())]];
    while centers.len() < k {
        let w: Vec<f64> = pts
            .iter()
            .map(|&p| centers.iter().map(|&c| d2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut t = rng.random::<f64>() * total;
        let mut pick = pts.len() - 1;
        for (i, &wi) in w.iter().enumerate() {
            if t < wi {
                pick = i;
                break;
            }
            t -= wi;
        }
        centers.push(pts[pick]);
    }
    let nearest = |p: (f64, f64), centers: &[(f64, f64)]| -> usize {
        let mut best = 0;
        for (j, &c) in centers.iter().enumerate() {
            if d2(p, c) < d2(p, centers[best]) {
                best = j;
            }
        }
        best
    };
    let mut assign: Vec<usize> = pts.iter().map(|&p| nearest(p, &centers)).collect();
    for _ in 0..iters {
        let mut sums = vec![(0.0, 0.0, 0usize); centers.len()];
        for (&p, &a) in pts.iter().zip(&assign) {
            sums[a].0 += p.0;
            sums[a].1 += p.1;
            sums[a].2 += 1;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s.2 > 0 {
                *c = (s.0 / s.2 as f64, s.1 / s.2 as f64);
            }
        }
        let next: Vec<usize> = pts.iter().map(|&p| nearest(p, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
    for (&cell, &a) in cells.iter().zip(&assign) {
        groups[a].push(cell);
    }
    groups.retain(|g| !g.is_empty());
    // fold undersized groups into the nearest remaining one
    loop {
        if groups.len() <= 1 {
            break;
        }
        let Some(small) = (0..groups.len()).find(|&i| groups[i].len() < min_size) else {
            break;
        };
        let centroid = |g: &[usize]| {
            let n = g.len() as f64;
            let (a, b) = g.iter().fold((0.0, 0.0), |(a, b), &i| {
                let (r, c) = coords(geom, i);
                (a + r, b + c)
            });
            (a / n, b / n)
        };
        let cs = centroid(&groups[small]);
        let target = (0..groups.len())
            .filter(|&j| j != small)
            .min_by(|&a, &b| d2(cs, centroid(&groups[a])).total_cmp(&d2(cs, centroid(&groups[b]))))
            .expect("at least two groups");
        let moved = std::mem::take(&mut groups[small]);
        groups[target].extend(moved);
        groups.remove(small);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups
}

/// DBSCAN, size filter, k-means splitting, location choice and edge filter.
/// Clusters are returned sorted by location.
pub fn cluster_frontiers(geom: &GridGeometry, cells: &[usize], params: &ClusterParams) -> Vec<FrontierCluster> {
    let mut out = Vec::new();
    for cluster in dbscan(geom, cells, params.eps, params.min_pts) {
        if cluster.len() < params.min_size {
            continue;
        }
        let pieces = if cluster.len() > params.max_size {
            let k = cluster.len().div_ceil(params.max_size);
            kmeans_split(geom, &cluster, k, params.kmeans_iters, params.min_size)
        } else {
            vec![cluster]
        };
        for cells in pieces {
            if cells.len() < params.min_size {
                continue;
            }
            let location = cluster_location(geom, &cells).expect("non-empty cluster");
            if geom.edge_distance(location) < params.edge_margin {
                continue;
            }
            out.push(FrontierCluster { cells, location });
        }
    }
    out.sort_by_key(|c| c.location);
    out
}

/// Frontier clusters of a grid with the given parameters.
pub fn find_frontiers(grid: &OccupancyGrid, params: &ClusterParams) -> Vec<FrontierCluster> {
    cluster_frontiers(&grid.geometry, &detect_frontier_cells(grid), params)
}

/// Cell-center position of a cluster location in the grid frame.
pub fn location_point(geom: &GridGeometry, cluster: &FrontierCluster) -> Point {
    geom.center(cluster.location)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Frame;

    fn grid_from(rows: &[&str]) -> OccupancyGrid {
        let text = rows.join("\n");
        let g = OccupancyGrid::from_ascii(1.0, Frame::identity(), &text);
        assert_eq!(g.h(), rows.len());
        g
    }

    fn uv_of(g: &OccupancyGrid, s: &Segment) -> ([f64; 2], [f64; 2]) {
        let (a, b) = (g.geometry.to_uv(s.a), g.geometry.to_uv(s.b));
        let (a, b) = ([a.0, a.1], [b.0, b.1]);
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    #[test]
    fn unknown_grid_has_no_segments() {
        let g = OccupancyGrid::unknown(GridGeometry::new(9, 3.0), Frame::identity());
        assert!(recover_visible_segments(&g).is_empty());
    }

    #[test]
    fn occupied_row_gives_two_faces() {
        let g = grid_from(&[".....", "#####", "....."]);
        let segs = recover_visible_segments(&g);
        let mut uv: Vec<_> = segs.iter().map(|s| uv_of(&g, s)).collect();
        uv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // faces between rows at v = 1 and v = 2, spanning the cell centers
        let mut want = vec![([0.5, 1.0], [4.5, 1.0]), ([0.5, 2.0], [4.5, 2.0])];
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(uv, want);
    }

    #[test]
    fn unknown_row_suppresses_upper_face() {
        let g = grid_from(&["?????", "#####", "....."]);
        let segs = recover_visible_segments(&g);
        assert_eq!(segs.len(), 1);
        assert_eq!(uv_of(&g, &segs[0]), ([0.5, 2.0], [4.5, 2.0]));
    }

    #[test]
    fn single_block_cell_yields_diamond() {
        let g = grid_from(&["...", ".#.", "..."]);
        let segs = recover_visible_segments(&g);
        assert_eq!(segs.len(), 4);
        let total: f64 = segs.iter().map(Segment::length).sum();
        assert!((total - 4.0 * std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn saddle_connects_solid_corners() {
        let g = grid_from(&["#.", ".#"]);
        let segs = recover_visible_segments(&g);
        assert_eq!(segs.len(), 2);
        // both pieces cut off the free corners (top right and bottom left)
        let mut uv: Vec<_> = segs.iter().map(|s| uv_of(&g, s)).collect();
        uv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(uv, vec![([0.5, 1.0], [1.0, 1.5]), ([1.0, 0.5], [1.5, 1.0])]);
    }

    #[test]
    fn frontier_rule() {
        let g = grid_from(&["###", "..?", "###"]);
        assert_eq!(detect_frontier_cells(&g), vec![4]);
        let all_free = grid_from(&["...", "...", "..."]);
        assert!(detect_frontier_cells(&all_free).is_empty());
        let isolated = grid_from(&["???", "?.?", "???"]);
        assert!(detect_frontier_cells(&isolated).is_empty());
    }

    #[test]
    fn isolated_pair_gives_no_cluster() {
        let geom = GridGeometry::new(41, 41.0);
        let cells = [geom.index(20, 10), geom.index(20, 30)];
        assert!(cluster_frontiers(&geom, &cells, &ClusterParams::default()).is_empty());
    }

    #[test]
    fn straight_line_cluster_location() {
        let geom = GridGeometry::new(41, 41.0);
        let cells: Vec<usize> = (10..20).map(|c| geom.index(20, c)).collect();
        let cl = cluster_frontiers(&geom, &cells, &ClusterParams::default());
        assert_eq!(cl.len(), 1);
        assert_eq!(cl[0].size(), 10);
        // brute force: centroid column 14.5, ties go to the lower index
        let best = cells
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let da = (geom.row_col(a).1 as f64 - 14.5).abs();
                let db = (geom.row_col(b).1 as f64 - 14.5).abs();
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .unwrap();
        assert_eq!(cl[0].location, best);
        assert_eq!(cl[0].location, geom.index(20, 14));
    }

    fn arc(geom: &GridGeometry, n: usize) -> Vec<usize> {
        let mut cells = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut k = 0;
        while cells.len() < n {
            let t = k as f64 * 0.004;
            let (r, c) = (60.0 - 40.0 * t.sin(), 60.0 + 40.0 * t.cos());
            let idx = geom.index(r.round() as usize, c.round() as usize);
            if seen.insert(idx) {
                cells.push(idx);
            }
            k += 1;
        }
        cells.sort_unstable();
        cells
    }

    #[test]
    fn long_arc_splits_into_three() {
        let geom = GridGeometry::new(121, 15.0);
        let cells = arc(&geom, 90);
        let cl = cluster_frontiers(&geom, &cells, &ClusterParams::default());
        assert_eq!(cl.len(), 3);
        let mut all: Vec<usize> = cl.iter().flat_map(|c| c.cells.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, cells);
        for c in &cl {
            assert!(c.size() >= 3 && c.cells.contains(&c.location));
        }
    }

    #[test]
    fn edge_clusters_are_dropped() {
        let geom = GridGeometry::new(41, 41.0);
        let near: Vec<usize> = (10..15).map(|c| geom.index(4, c)).collect();
        assert!(cluster_frontiers(&geom, &near, &ClusterParams::default()).is_empty());
        let ok: Vec<usize> = (10..15).map(|c| geom.index(5, c)).collect();
        assert_eq!(cluster_frontiers(&geom, &ok, &ClusterParams::default()).len(), 1);
    }

    #[test]
    fn kmeans_is_deterministic() {
        let geom = GridGeometry::new(121, 15.0);
        let cells = arc(&geom, 75);
        let a = kmeans_split(&geom, &cells, 3, 20, 3);
        let b = kmeans_split(&geom, &cells, 3, 20, 3);
        assert_eq!(a, b);
    }
}
