//! Robot-centered labeled occupancy grids.
//!
//! Cell `(row, col)` of an `H x W` grid at `s` cells/m covers the local metric
//! region where `floor(H/2 - s*y) = row` and `floor(W/2 + s*x) = col`: row 0 is
//! the top (largest `y`), and the robot sits at the local origin. The vertex
//! quantizer in [`crate::seq`] uses exactly the same cell geometry.

use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::geom::{Frame, Point, Segment};

/// Cell labels. The discriminant order is also the precedence used when
/// several observations land in the same cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(u8)]
pub enum Label {
    #[default]
    Unknown = 0,
    Free = 1,
    Occupied = 2,
    Window = 3,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Unknown, Label::Free, Label::Occupied, Label::Window];

    pub fn is_known(self) -> bool {
        self != Label::Unknown
    }

    /// Occupied or Window.
    pub fn is_solid(self) -> bool {
        matches!(self, Label::Occupied | Label::Window)
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        Label::ALL.get(v as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub h: usize,
    pub w: usize,
    /// Cells per meter along both axes.
    pub scale: f64,
}

impl Default for GridGeometry {
    fn default() -> Self {
        GridGeometry::new(121, 15.0)
    }
}

impl GridGeometry {
    /// Square grid of `size x size` cells covering `area` meters per side.
    pub fn new(size: usize, area: f64) -> Self {
        GridGeometry {
            h: size,
            w: size,
            scale: size as f64 / area,
        }
    }

    pub fn len(&self) -> usize {
        self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_size(&self) -> f64 {
        1.0 / self.scale
    }

    /// Metric half extent along x.
    pub fn half_extent_x(&self) -> f64 {
        self.w as f64 / (2.0 * self.scale)
    }

    pub fn half_extent_y(&self) -> f64 {
        self.h as f64 / (2.0 * self.scale)
    }

    /// Continuous cell coordinates `(u, v)`; the cell is `(floor(v), floor(u))`.
    pub fn to_uv(&self, p: Point) -> (f64, f64) {
        (
            self.w as f64 / 2.0 + self.scale * p.x,
            self.h as f64 / 2.0 - self.scale * p.y,
        )
    }

    pub fn from_uv(&self, u: f64, v: f64) -> Point {
        Point::new(
            (u - self.w as f64 / 2.0) / self.scale,
            (self.h as f64 / 2.0 - v) / self.scale,
        )
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.w + col
    }

    pub fn row_col(&self, idx: usize) -> (usize, usize) {
        (idx / self.w, idx % self.w)
    }

    pub fn cell_of(&self, p: Point) -> Option<usize> {
        let (u, v) = self.to_uv(p);
        let (c, r) = (u.floor(), v.floor());
        if c < 0.0 || r < 0.0 || c >= self.w as f64 || r >= self.h as f64 {
            return None;
        }
        Some(self.index(r as usize, c as usize))
    }

    pub fn center(&self, idx: usize) -> Point {
        let (r, c) = self.row_col(idx);
        self.from_uv(c as f64 + 0.5, r as f64 + 0.5)
    }

    /// Distance in cells from a cell to the nearest grid edge.
    pub fn edge_distance(&self, idx: usize) -> usize {
        let (r, c) = self.row_col(idx);
        r.min(c).min(self.h - 1 - r).min(self.w - 1 - c)
    }

    /// Clips a local-frame segment to the grid's metric extent.
    pub fn clip(&self, s: &Segment) -> Option<Segment> {
        let (hx, hy) = (self.half_extent_x(), self.half_extent_y());
        clip_to_box(s, Point::new(-hx, -hy), Point::new(hx, hy))
    }
}

/// Liang-Barsky clipping against an axis-aligned box.
pub fn clip_to_box(s: &Segment, lo: Point, hi: Point) -> Option<Segment> {
    let d = s.direction();
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let checks = [
        (-d.x, s.a.x - lo.x),
        (d.x, hi.x - s.a.x),
        (-d.y, s.a.y - lo.y),
        (d.y, hi.y - s.a.y),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t0 > t1 {
        return None;
    }
    Some(Segment::new(s.at(t0), s.at(t1)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub geometry: GridGeometry,
    pub cells: Vec<Label>,
    /// World pose of the grid: its center and the alignment angle.
    pub frame: Frame,
}

impl OccupancyGrid {
    pub fn unknown(geometry: GridGeometry, frame: Frame) -> Self {
        OccupancyGrid {
            geometry,
            cells: vec![Label::Unknown; geometry.len()],
            frame,
        }
    }

    pub fn h(&self) -> usize {
        self.geometry.h
    }

    pub fn w(&self) -> usize {
        self.geometry.w
    }

    pub fn get(&self, row: usize, col: usize) -> Label {
        self.cells[self.geometry.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, label: Label) {
        let i = self.geometry.index(row, col);
        self.cells[i] = label;
    }

    pub fn known_count(&self) -> usize {
        self.cells.iter().filter(|l| l.is_known()).count()
    }

    pub fn count(&self, label: Label) -> usize {
        self.cells.iter().filter(|&&l| l == label).count()
    }

    /// Label of the cell containing a local-frame point.
    pub fn label_at(&self, p: Point) -> Option<Label> {
        self.geometry.cell_of(p).map(|i| self.cells[i])
    }

    /// Row-major run-length encoding as `(label, run)` pairs.
    pub fn rle(&self) -> Vec<(u8, usize)> {
        let mut out: Vec<(u8, usize)> = Vec::new();
        for &l in &self.cells {
            match out.last_mut() {
                Some((prev, n)) if *prev == l as u8 => *n += 1,
                _ => out.push((l as u8, 1)),
            }
        }
        out
    }

    pub fn from_rle(geometry: GridGeometry, frame: Frame, rle: &[(u8, usize)]) -> Result<Self> {
        let mut cells = Vec::with_capacity(geometry.len());
        for (k, &(label, run)) in rle.iter().enumerate() {
            let l = Label::from_u8(label)
                .ok_or_else(|| ForgeError::parse(format!("rle[{k}]"), format!("bad label {label}")))?;
            cells.extend(std::iter::repeat_n(l, run));
        }
        if cells.len() != geometry.len() {
            return Err(ForgeError::ShapeMismatch(format!(
                "rle expands to {} cells, grid has {}",
                cells.len(),
                geometry.len()
            )));
        }
        Ok(OccupancyGrid {
            geometry,
            cells,
            frame,
        })
    }

    /// ASCII rendering for debugging: `?` unknown, `.` free, `#` occupied, `W` window.
    pub fn to_ascii(&self) -> String {
        let mut s = String::with_capacity(self.cells.len() + self.h());
        for r in 0..self.h() {
            for c in 0..self.w() {
                s.push(match self.get(r, c) {
                    Label::Unknown => '?',
                    Label::Free => '.',
                    Label::Occupied => '#',
                    Label::Window => 'W',
                });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_ascii(geometry_scale: f64, frame: Frame, text: &str) -> Self {
        let rows: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.chars().count());
        let geometry = GridGeometry {
            h,
            w,
            scale: geometry_scale,
        };
        let cells = rows
            .iter()
            .flat_map(|r| {
                r.chars().map(|ch| match ch {
                    '.' => Label::Free,
                    '#' => Label::Occupied,
                    'W' => Label::Window,
                    _ => Label::Unknown,
                })
            })
            .collect();
        OccupancyGrid {
            geometry,
            cells,
            frame,
        }
    }
}

/// Visits the cells crossed by the local-frame segment `from -> to`, clipped
/// to the grid, in traversal order. The callback receives the cell index and
/// whether it is the cell containing `to` (only when `to` is inside the grid).
///
/// Traversal stops just short of `to`, so an endpoint lying exactly on a cell
/// boundary belongs to the cell on the `from` side.
pub fn traverse(geom: &GridGeometry, from: Point, to: Point, visit: impl FnMut(usize, bool)) {
    traverse_until(geom, from, to, 1.0, visit);
}

/// Like [`traverse`] but stops at parameter `stop` in `[0, 1]` along
/// `from -> to`. Rays sharing `from` and `to` visit nested prefixes of the
/// same cell sequence as `stop` shrinks.
pub fn traverse_until(geom: &GridGeometry, from: Point, to: Point, stop: f64, mut visit: impl FnMut(usize, bool)) {
    const EPS: f64 = 1e-9;
    let (u0, v0) = geom.to_uv(from);
    let (u1, v1) = geom.to_uv(to);
    let (du, dv) = (u1 - u0, v1 - v0);
    let (w, h) = (geom.w as f64, geom.h as f64);
    // clip parameter range to the box [0, w] x [0, h]
    let (mut ta, mut tb) = (0.0f64, stop);
    for (p, q) in [(-du, u0), (du, w - u0), (-dv, v0), (dv, h - v0)] {
        if p == 0.0 {
            if q < 0.0 {
                return;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                ta = ta.max(r);
            } else {
                tb = tb.min(r);
            }
        }
    }
    if ta > tb {
        return;
    }
    let ends_inside = tb >= stop;
    let (su, sv) = (u0 + ta * du, v0 + ta * dv);
    let mut col = (su.floor() as isize).clamp(0, geom.w as isize - 1);
    let mut row = (sv.floor() as isize).clamp(0, geom.h as isize - 1);
    if du < 0.0 && su.fract() == 0.0 && ta > 0.0 {
        col = (su as isize - 1).clamp(0, geom.w as isize - 1);
    }
    if dv < 0.0 && sv.fract() == 0.0 && ta > 0.0 {
        row = (sv as isize - 1).clamp(0, geom.h as isize - 1);
    }
    let step_c: isize = if du > 0.0 { 1 } else { -1 };
    let step_r: isize = if dv > 0.0 { 1 } else { -1 };
    let mut t_max_c = if du > 0.0 {
        (col as f64 + 1.0 - u0) / du
    } else if du < 0.0 {
        (col as f64 - u0) / du
    } else {
        f64::INFINITY
    };
    let mut t_max_r = if dv > 0.0 {
        (row as f64 + 1.0 - v0) / dv
    } else if dv < 0.0 {
        (row as f64 - v0) / dv
    } else {
        f64::INFINITY
    };
    let t_delta_c = if du != 0.0 { 1.0 / du.abs() } else { f64::INFINITY };
    let t_delta_r = if dv != 0.0 { 1.0 / dv.abs() } else { f64::INFINITY };
    loop {
        let idx = geom.index(row as usize, col as usize);
        let t_next = t_max_c.min(t_max_r);
        let last = t_next >= tb - EPS;
        visit(idx, last && ends_inside);
        if last {
            return;
        }
        if t_max_c < t_max_r {
            col += step_c;
            t_max_c += t_delta_c;
        } else {
            row += step_r;
            t_max_r += t_delta_r;
        }
        if col < 0 || row < 0 || col >= geom.w as isize || row >= geom.h as isize {
            return;
        }
    }
}
