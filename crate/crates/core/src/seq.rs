//! Segment-sequence codec: vertex quantization, subdivision, ordering,
//! tokenization, top-p sampling and an n-gram next-token provider.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ForgeError, Result};
use crate::geom::{Point, Segment};
use crate::grid::{GridGeometry, Label, OccupancyGrid};

/// Number of subdivision cells per axis.
pub const SUBDIVISIONS: usize = 21;
pub const DEFAULT_TOP_P: f64 = 0.8;

/// Maps metric vertices to row-major cell indices of an `h x w` raster
/// centered on the origin. Vertex tokens are `0..h*w`; Start and End follow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    pub h: usize,
    pub w: usize,
    pub scale_x: f64,
    pub scale_y: f64,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        QuantizerConfig::from(GridGeometry::default())
    }
}

impl From<GridGeometry> for QuantizerConfig {
    fn from(g: GridGeometry) -> Self {
        QuantizerConfig {
            h: g.h,
            w: g.w,
            scale_x: g.scale,
            scale_y: g.scale,
        }
    }
}

impl QuantizerConfig {
    pub fn vertex_count(&self) -> u32 {
        (self.h * self.w) as u32
    }

    pub fn start_id(&self) -> u32 {
        self.vertex_count()
    }

    pub fn end_id(&self) -> u32 {
        self.vertex_count() + 1
    }

    pub fn vocab_size(&self) -> usize {
        self.h * self.w + 2
    }

    pub fn half_extent(&self) -> (f64, f64) {
        (self.w as f64 / (2.0 * self.scale_x), self.h as f64 / (2.0 * self.scale_y))
    }

    /// Row-major cell index `W * floor(H/2 - s_y y) + floor(W/2 + s_x x)`,
    /// clamped per axis. The flag is set when the point lies outside the
    /// closed extent.
    pub fn quantize(&self, p: Point) -> (u32, bool) {
        let v = self.h as f64 / 2.0 - self.scale_y * p.y;
        let u = self.w as f64 / 2.0 + self.scale_x * p.x;
        let outside = !(0.0..=self.h as f64).contains(&v) || !(0.0..=self.w as f64).contains(&u);
        let row = (v.floor().max(0.0) as usize).min(self.h - 1);
        let col = (u.floor().max(0.0) as usize).min(self.w - 1);
        ((row * self.w + col) as u32, outside)
    }

    /// Center of the cell for a vertex token.
    pub fn dequantize(&self, token: u32) -> Point {
        let (row, col) = (token as usize / self.w, token as usize % self.w);
        Point::new(
            (col as f64 + 0.5 - self.w as f64 / 2.0) / self.scale_x,
            (self.h as f64 / 2.0 - row as f64 - 0.5) / self.scale_y,
        )
    }

    pub fn token_id(&self, t: Token) -> u32 {
        match t {
            Token::Start => self.start_id(),
            Token::End => self.end_id(),
            Token::Vertex(v) => v,
        }
    }

    pub fn token(&self, id: u32) -> Option<Token> {
        match id {
            _ if id < self.vertex_count() => Some(Token::Vertex(id)),
            _ if id == self.start_id() => Some(Token::Start),
            _ if id == self.end_id() => Some(Token::End),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Start,
    End,
    Vertex(u32),
}

impl Serialize for Token {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Token::Start => s.serialize_str("S"),
            Token::End => s.serialize_str("E"),
            Token::Vertex(v) => s.serialize_u32(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(u32),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Id(v) => Ok(Token::Vertex(v)),
            Raw::Tag(t) if t == "S" => Ok(Token::Start),
            Raw::Tag(t) if t == "E" => Ok(Token::End),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("unknown token {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<Token>);

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks the Start, vertex pairs, End layout.
    pub fn validate(&self, cfg: &QuantizerConfig) -> Result<()> {
        let t = &self.0;
        let bad = |index: usize, message: &str| ForgeError::MalformedSequence {
            index,
            message: message.to_string(),
        };
        if t.first() != Some(&Token::Start) {
            return Err(bad(0, "sequence must begin with Start"));
        }
        if t.len() < 2 || t.last() != Some(&Token::End) {
            return Err(bad(t.len(), "sequence must end with End"));
        }
        let interior = &t[1..t.len() - 1];
        for (i, tok) in interior.iter().enumerate() {
            match tok {
                Token::Vertex(v) if *v < cfg.vertex_count() => {}
                Token::Vertex(_) => return Err(bad(i + 1, "vertex token out of range")),
                _ => return Err(bad(i + 1, "sentinel inside the sequence")),
            }
        }
        if interior.len() % 2 == 1 {
            return Err(bad(t.len() - 1, "odd number of vertex tokens"));
        }
        Ok(())
    }

    pub fn ids(&self, cfg: &QuantizerConfig) -> Vec<u32> {
        self.0.iter().map(|&t| cfg.token_id(t)).collect()
    }
}

/// Lexicographic vertex order: `x < x'`, or `x = x'` and `y <= y'`.
pub fn order_vertices(s: &Segment) -> Segment {
    s.lex_ordered()
}

fn lex_key(s: &Segment) -> [f64; 4] {
    [s.a.x, s.a.y, s.b.x, s.b.y]
}

fn cmp_rows(da: f64, a: &Segment, db: f64, b: &Segment) -> std::cmp::Ordering {
    da.total_cmp(&db).then_with(|| {
        let (ka, kb) = (lex_key(a), lex_key(b));
        ka.iter()
            .zip(&kb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

/// Sorts segments by distance from `robot`, nearest first, with vertices in
/// lexicographic order. Equal distances fall back to the vertex 4-tuple.
pub fn order_segments(segments: &[Segment], robot: Point) -> Vec<Segment> {
    let mut rows: Vec<(f64, Segment)> = segments
        .iter()
        .map(|s| {
            let s = order_vertices(s);
            (s.distance_to_point(robot), s)
        })
        .collect();
    rows.sort_by(|a, b| cmp_rows(a.0, &a.1, b.0, &b.1));
    rows.into_iter().map(|(_, s)| s).collect()
}

/// Interior cut lines of the subdivision raster, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdivisionGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl SubdivisionGrid {
    /// `n - 1` evenly spaced interior lines per axis over `[-extent/2, extent/2]`.
    pub fn uniform(extent: f64, n: usize) -> Self {
        let lines: Vec<f64> = (1..n)
            .map(|i| -extent / 2.0 + extent * i as f64 / n as f64)
            .collect();
        SubdivisionGrid {
            xs: lines.clone(),
            ys: lines,
        }
    }

    /// Evenly spaced lines moved to the nearest quantizer cell center. Cut
    /// points then dequantize back onto their line, so decoded pieces never
    /// straddle a cut and re-encoding is stable.
    pub fn snapped(cfg: &QuantizerConfig, n: usize) -> Self {
        let axis = |cells: usize, scale: f64, sign: f64| -> Vec<f64> {
            (1..n)
                .map(|i| {
                    let c = (i as f64 * cells as f64 / n as f64 - 0.5).round();
                    sign * (c + 0.5 - cells as f64 / 2.0) / scale
                })
                .collect()
        };
        let xs = axis(cfg.w, cfg.scale_x, 1.0);
        let mut ys = axis(cfg.h, cfg.scale_y, -1.0);
        ys.sort_by(f64::total_cmp);
        SubdivisionGrid { xs, ys }
    }
}

/// Cuts every segment at its crossings with the grid lines. Cut points lie
/// exactly on their line; no piece crosses a line in its interior.
pub fn subdivide(segments: &[Segment], grid: &SubdivisionGrid) -> Vec<Segment> {
    let mut out = Vec::with_capacity(segments.len());
    for s in segments {
        let d = s.direction();
        // (t, exact point) for every interior crossing
        let mut cuts: Vec<(f64, Point)> = Vec::new();
        if d.x != 0.0 {
            for &x in &grid.xs {
                let t = (x - s.a.x) / d.x;
                if t > 0.0 && t < 1.0 {
                    cuts.push((t, Point::new(x, s.a.y + t * d.y)));
                }
            }
        }
        if d.y != 0.0 {
            for &y in &grid.ys {
                let t = (y - s.a.y) / d.y;
                if t > 0.0 && t < 1.0 {
                    cuts.push((t, Point::new(s.a.x + t * d.x, y)));
                }
            }
        }
        cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
        // a crossing through a line intersection appears twice
        let first = out.len();
        let mut prev = s.a;
        for (_, p) in cuts {
            if p != prev {
                out.push(Segment::new(prev, p));
                prev = p;
            }
        }
        if s.b != prev || out.len() == first {
            out.push(Segment::new(prev, s.b));
        }
    }
    out
}

/// Tokenizer output with the rows that produced each vertex pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub tokens: TokenSequence,
    /// Subdivided pieces in sequence order, original coordinates, vertices
    /// in token order.
    pub rows: Vec<Segment>,
    /// Vertices outside the quantizer extent that were clamped.
    pub clamped: usize,
}

/// Subdivides, quantizes and orders a segment set.
///
/// Ordering and the vertex rule use the dequantized geometry, so decoding and
/// re-encoding reproduces the same sequence.
pub fn encode(segments: &[Segment], cfg: &QuantizerConfig, grid: &SubdivisionGrid, robot: Point) -> Encoded {
    let pieces = subdivide(segments, grid);
    let mut clamped = 0;
    let mut rows: Vec<(f64, Segment, [u32; 2], Segment)> = pieces
        .into_iter()
        .map(|p| {
            let (ta, ca) = cfg.quantize(p.a);
            let (tb, cb) = cfg.quantize(p.b);
            clamped += ca as usize + cb as usize;
            let q = Segment::new(cfg.dequantize(ta), cfg.dequantize(tb));
            let (q, toks, row) = if q.lex_ordered() == q {
                (q, [ta, tb], p)
            } else {
                (q.reversed(), [tb, ta], p.reversed())
            };
            (q.distance_to_point(robot), q, toks, row)
        })
        .collect();
    rows.sort_by(|a, b| cmp_rows(a.0, &a.1, b.0, &b.1));
    let mut tokens = Vec::with_capacity(2 * rows.len() + 2);
    tokens.push(Token::Start);
    for r in &rows {
        tokens.push(Token::Vertex(r.2[0]));
        tokens.push(Token::Vertex(r.2[1]));
    }
    tokens.push(Token::End);
    Encoded {
        tokens: TokenSequence(tokens),
        rows: rows.into_iter().map(|r| r.3).collect(),
        clamped,
    }
}

/// Tokenizes with the default snapped 21 x 21 subdivision.
pub fn tokenize(segments: &[Segment], cfg: &QuantizerConfig, robot: Point) -> TokenSequence {
    encode(segments, cfg, &SubdivisionGrid::snapped(cfg, SUBDIVISIONS), robot).tokens
}

/// Decodes a well-formed sequence into cell-center segments.
pub fn detokenize(seq: &TokenSequence, cfg: &QuantizerConfig) -> Result<Vec<Segment>> {
    seq.validate(cfg)?;
    Ok(decode_pairs(&seq.0, cfg))
}

/// Decodes the complete vertex pairs of a possibly truncated sequence.
pub fn decode_pairs(tokens: &[Token], cfg: &QuantizerConfig) -> Vec<Segment> {
    let verts: Vec<u32> = tokens
        .iter()
        .skip_while(|&&t| t == Token::Start)
        .take_while(|t| matches!(t, Token::Vertex(_)))
        .filter_map(|t| match t {
            Token::Vertex(v) if *v < cfg.vertex_count() => Some(*v),
            _ => None,
        })
        .collect();
    verts
        .chunks_exact(2)
        .map(|p| Segment::new(cfg.dequantize(p[0]), cfg.dequantize(p[1])))
        .collect()
}

/// Conditioning information available to a provider.
#[derive(Debug, Clone, Copy, Default)]
pub struct Context<'a> {
    pub grid: Option<&'a OccupancyGrid>,
    pub visible: &'a [Segment],
}

/// Conditional next-token distribution over token ids.
pub trait NextTokenProvider: Sync {
    fn vocab_size(&self) -> usize;

    /// Probability of every token id given the prefix; non-negative, sums to 1.
    fn next_token_distribution(&self, prefix: &[u32], ctx: &Context) -> Vec<f64>;
}

/// Token ids of the nucleus: the smallest set of most probable tokens whose
/// mass reaches `p`, ordered by descending probability then ascending id.
pub fn top_p_nucleus(probs: &[f64], p: f64) -> Vec<(u32, f64)> {
    let floor = probs
        .iter()
        .copied()
        .filter(|&x| x > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return Vec::new();
    }
    // entries above the floor need sorting; floor entries are already in id order
    let mut high: Vec<(u32, f64)> = probs
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > floor)
        .map(|(i, &x)| (i as u32, x))
        .collect();
    high.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let low = probs
        .iter()
        .enumerate()
        .filter(|(_, &x)| x == floor)
        .map(|(i, &x)| (i as u32, x));
    let mut out = Vec::new();
    let mut cum = 0.0;
    for (id, x) in high.into_iter().chain(low) {
        out.push((id, x));
        cum += x;
        if cum >= p - 1e-12 {
            break;
        }
    }
    out
}

/// Draws one token from the renormalized nucleus.
pub fn sample_top_p(probs: &[f64], p: f64, rng: &mut impl Rng) -> Option<u32> {
    let nucleus = top_p_nucleus(probs, p);
    let total: f64 = nucleus.iter().map(|x| x.1).sum();
    if nucleus.is_empty() || total <= 0.0 {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for &(id, x) in &nucleus {
        if u < x {
            return Some(id);
        }
        u -= x;
    }
    nucleus.last().map(|x| x.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSequence {
    pub ids: Vec<u32>,
    /// False when `max_len` was reached before End.
    pub complete: bool,
}

impl SampledSequence {
    pub fn tokens(&self, cfg: &QuantizerConfig) -> TokenSequence {
        TokenSequence(self.ids.iter().filter_map(|&i| cfg.token(i)).collect())
    }
}

/// Autoregressive top-p sampling from `[start]` until `end` or `max_len`.
pub fn sample_sequence(
    provider: &dyn NextTokenProvider,
    ctx: &Context,
    start: u32,
    end: u32,
    p: f64,
    max_len: usize,
    seed: u64,
) -> Result<SampledSequence> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(ForgeError::InvalidArgument(format!("top-p must be in (0, 1], got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = vec![start];
    while ids.len() < max_len {
        let probs = provider.next_token_distribution(&ids, ctx);
        let Some(t) = sample_top_p(&probs, p, &mut rng) else {
            break;
        };
        ids.push(t);
        if t == end {
            return Ok(SampledSequence { ids, complete: true });
        }
    }
    Ok(SampledSequence { ids, complete: false })
}

/// Additively smoothed n-gram model over token ids.
/// A context and its sorted `(token, count)` pairs.
type ContextRow = (Vec<u32>, Vec<(u32, u32)>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGram {
    pub order: usize,
    pub alpha: f64,
    pub vocab_size: usize,
    /// Context (the last `order - 1` ids, shorter near the start) to sorted
    /// `(token, count)` pairs.
    table: Vec<ContextRow>,
    #[serde(skip)]
    index: HashMap<Vec<u32>, usize>,
}

pub const DEFAULT_NGRAM_ALPHA: f64 = 1e-4;

impl NGram {
    fn context<'a>(&self, prefix: &'a [u32]) -> &'a [u32] {
        let k = self.order.saturating_sub(1).min(prefix.len());
        &prefix[prefix.len() - k..]
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .table
            .iter()
            .enumerate()
            .map(|(i, (c, _))| (c.clone(), i))
            .collect();
    }

    pub fn context_count(&self) -> usize {
        self.table.len()
    }

    pub fn write(&self, w: impl Write) -> Result<()> {
        ciborium::into_writer(self, w).map_err(|e| ForgeError::parse("ngram model", e.to_string()))
    }

    pub fn read(r: impl Read) -> Result<Self> {
        let mut m: NGram =
            ciborium::from_reader(r).map_err(|e| ForgeError::parse("ngram model", e.to_string()))?;
        m.rebuild_index();
        Ok(m)
    }
}

impl NextTokenProvider for NGram {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_token_distribution(&self, prefix: &[u32], _ctx: &Context) -> Vec<f64> {
        let v = self.vocab_size;
        let Some(&i) = self.index.get(self.context(prefix)) else {
            return vec![1.0 / v as f64; v];
        };
        let counts = &self.table[i].1;
        let total: u64 = counts.iter().map(|&(_, c)| c as u64).sum();
        let denom = total as f64 + self.alpha * v as f64;
        let mut out = vec![self.alpha / denom; v];
        for &(t, c) in counts {
            out[t as usize] = (c as f64 + self.alpha) / denom;
        }
        out
    }
}

/// Counts next-token occurrences for every context of length `order - 1`.
pub fn fit_ngram(corpus: &[Vec<u32>], order: usize, vocab_size: usize, alpha: f64) -> Result<NGram> {
    if order == 0 {
        return Err(ForgeError::InvalidArgument("n-gram order must be at least 1".into()));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(ForgeError::InvalidArgument("smoothing must be positive".into()));
    }
    let mut counts: HashMap<Vec<u32>, HashMap<u32, u32>> = HashMap::new();
    for seq in corpus {
        for i in 1..seq.len() {
            let t = seq[i];
            if t as usize >= vocab_size {
                return Err(ForgeError::InvalidArgument(format!("token {t} outside vocabulary")));
            }
            let k = (order - 1).min(i);
            *counts.entry(seq[i - k..i].to_vec()).or_default().entry(t).or_default() += 1;
        }
    }
    let mut table: Vec<ContextRow> = counts
        .into_iter()
        .map(|(c, m)| {
            let mut v: Vec<(u32, u32)> = m.into_iter().collect();
            v.sort_unstable();
            (c, v)
        })
        .collect();
    table.sort_unstable();
    let mut m = NGram {
        order,
        alpha,
        vocab_size,
        table,
        index: HashMap::new(),
    };
    m.rebuild_index();
    Ok(m)
}

/// Removes vertex tokens whose cell is already known to be Free and
/// renormalizes. Walls cannot lie in observed free space.
pub struct FreeCellMask<'p, P: ?Sized> {
    pub inner: &'p P,
    pub cfg: QuantizerConfig,
}

impl<P: NextTokenProvider + ?Sized> NextTokenProvider for FreeCellMask<'_, P> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn next_token_distribution(&self, prefix: &[u32], ctx: &Context) -> Vec<f64> {
        let mut d = self.inner.next_token_distribution(prefix, ctx);
        let Some(grid) = ctx.grid else { return d };
        if grid.cells.len() != self.cfg.vertex_count() as usize {
            return d;
        }
        let before: f64 = d.iter().sum();
        let mut masked = d.clone();
        for (i, l) in grid.cells.iter().enumerate() {
            if *l == Label::Free {
                masked[i] = 0.0;
            }
        }
        let total: f64 = masked.iter().sum();
        if total > 0.0 {
            masked.iter_mut().for_each(|x| *x *= before / total);
            d = masked;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuantizerConfig {
        QuantizerConfig::default()
    }

    fn seg(a: [f64; 2], b: [f64; 2]) -> Segment {
        Segment::new(a.into(), b.into())
    }

    #[test]
    fn origin_and_left_neighbor() {
        let q = cfg();
        // center row 60, center column 60
        assert_eq!(q.quantize(Point::new(0.0, 0.0)), (60 * 121 + 60, false));
        assert_eq!(q.quantize(Point::new(-1e-6 - 0.5 / q.scale_x, 0.0)).0, 60 * 121 + 59);
        assert_eq!(q.dequantize(7320), Point::new(0.0, 0.0));
    }

    #[test]
    fn clamping_is_flagged() {
        let q = cfg();
        let (t, c) = q.quantize(Point::new(100.0, -100.0));
        assert!(c);
        assert_eq!(t, 120 * 121 + 120);
        let (t, c) = q.quantize(Point::new(7.5, 7.5));
        assert!(!c);
        assert_eq!(t, 120);
    }

    #[test]
    fn ordering_examples() {
        let robot = Point::new(0.0, 0.0);
        let far = seg([3.0, -1.0], [3.0, 1.0]);
        let near = seg([1.0, -1.0], [1.0, 1.0]);
        assert_eq!(order_segments(&[far, near], robot), vec![near, far]);
        assert_eq!(order_segments(&[seg([2.0, 5.0], [1.0, 4.0])], robot), vec![seg([1.0, 4.0], [2.0, 5.0])]);
        assert_eq!(order_segments(&[seg([1.0, 9.0], [1.0, 2.0])], robot), vec![seg([1.0, 2.0], [1.0, 9.0])]);
    }

    #[test]
    fn ordering_ties_break_lexicographically() {
        let a = seg([1.0, 1.0], [1.0, 2.0]);
        let b = seg([-1.0, 1.0], [-1.0, 2.0]);
        assert_eq!(order_segments(&[a, b], Point::new(0.0, 0.0)), vec![b, a]);
    }

    #[test]
    fn subdivision_examples() {
        let g = SubdivisionGrid::uniform(15.0, 21);
        let inside = seg([0.05, 0.05], [0.2, 0.1]);
        assert_eq!(subdivide(&[inside], &g), vec![inside]);
        let full = seg([-7.5, 0.1], [7.5, 0.1]);
        let pieces = subdivide(&[full], &g);
        assert_eq!(pieces.len(), 21);
        let total: f64 = pieces.iter().map(Segment::length).sum();
        assert!((total - 15.0).abs() < 1e-12);
        // diagonal through a line intersection
        let x = g.xs[10];
        let y = g.ys[10];
        let d = seg([x - 0.1, y - 0.1], [x + 0.1, y + 0.1]);
        let pieces = subdivide(&[d], &g);
        assert_eq!(pieces.len(), 2);
        assert_eq!(pieces[0].b, Point::new(x, y));
        let total: f64 = pieces.iter().map(Segment::length).sum();
        assert!((total - d.length()).abs() < 1e-12);
    }

    #[test]
    fn snapped_lines_sit_on_cell_centers() {
        let q = cfg();
        let g = SubdivisionGrid::snapped(&q, 21);
        assert_eq!(g.xs.len(), 20);
        assert_eq!(g.xs, g.ys);
        let cell = 1.0 / q.scale_x;
        for (&x, u) in g.xs.iter().zip(SubdivisionGrid::uniform(15.0, 21).xs) {
            assert!((x - u).abs() <= cell / 2.0 + 1e-12);
            let (t, _) = q.quantize(Point::new(x, 0.0));
            assert!((q.dequantize(t).x - x).abs() < 1e-12);
        }
    }

    #[test]
    fn tokenize_shapes() {
        let q = cfg();
        let robot = Point::new(0.0, 0.0);
        assert_eq!(tokenize(&[], &q, robot).0, vec![Token::Start, Token::End]);
        let one = tokenize(&[seg([0.1, 0.1], [0.3, 0.2])], &q, robot);
        assert_eq!(one.len(), 4);
        one.validate(&q).unwrap();
    }

    #[test]
    fn detokenize_examples() {
        let q = cfg();
        assert!(detokenize(&TokenSequence(vec![Token::Start, Token::End]), &q).unwrap().is_empty());
        let s = detokenize(
            &TokenSequence(vec![Token::Start, Token::Vertex(7381), Token::Vertex(7382), Token::End]),
            &q,
        )
        .unwrap();
        assert_eq!(s, vec![Segment::new(q.dequantize(7381), q.dequantize(7382))]);
        assert!((s[0].length() - 1.0 / q.scale_x).abs() < 1e-12);
        let err = detokenize(&TokenSequence(vec![Token::Start, Token::Vertex(7381), Token::End]), &q);
        assert!(matches!(err, Err(ForgeError::MalformedSequence { index: 2, .. })));
        let err = detokenize(&TokenSequence(vec![Token::Vertex(1), Token::Vertex(2), Token::End]), &q);
        assert!(matches!(err, Err(ForgeError::MalformedSequence { index: 0, .. })));
    }

    #[test]
    fn token_json() {
        let s = TokenSequence(vec![Token::Start, Token::Vertex(5), Token::Vertex(9), Token::End]);
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"["S",5,9,"E"]"#);
        assert_eq!(serde_json::from_str::<TokenSequence>(&j).unwrap(), s);
        assert!(serde_json::from_str::<TokenSequence>(r#"["X"]"#).is_err());
    }

    #[test]
    fn round_trip_is_idempotent() {
        let q = cfg();
        let robot = Point::new(0.03, -0.02);
        let segs = vec![
            seg([-7.5, 2.0], [7.5, 2.0]),
            seg([1.234, -3.3], [1.234, 6.9]),
            seg([-5.0, -5.0], [4.0, 3.0]),
            seg([0.01, 0.01], [0.02, 0.02]),
        ];
        let t1 = tokenize(&segs, &q, robot);
        let back = detokenize(&t1, &q).unwrap();
        let t2 = tokenize(&back, &q, robot);
        assert_eq!(t1, t2);
    }

    struct Fixed(Vec<f64>);

    impl NextTokenProvider for Fixed {
        fn vocab_size(&self) -> usize {
            self.0.len()
        }
        fn next_token_distribution(&self, _: &[u32], _: &Context) -> Vec<f64> {
            self.0.clone()
        }
    }

    #[test]
    fn always_end_provider() {
        let p = Fixed(vec![0.0, 0.0, 1.0]);
        let s = sample_sequence(&p, &Context::default(), 1, 2, 0.8, 10, 7).unwrap();
        assert_eq!(s.ids, vec![1, 2]);
        assert!(s.complete);
    }

    #[test]
    fn nucleus_cutoff() {
        let n = top_p_nucleus(&[0.7, 0.2, 0.1], 0.8);
        assert_eq!(n.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1]);
        let all = top_p_nucleus(&[0.7, 0.2, 0.1], 1.0);
        assert_eq!(all.len(), 3);
        // ties keep id order
        let t = top_p_nucleus(&[0.25, 0.25, 0.25, 0.25], 0.5);
        assert_eq!(t.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn truncated_sampling_is_flagged() {
        let p = Fixed(vec![1.0, 0.0, 0.0]);
        let s = sample_sequence(&p, &Context::default(), 1, 2, 1.0, 5, 0).unwrap();
        assert_eq!(s.ids.len(), 5);
        assert!(!s.complete);
        assert!(sample_sequence(&p, &Context::default(), 1, 2, 0.0, 5, 0).is_err());
    }

    #[test]
    fn ngram_counts() {
        // vocabulary: a = 0, Start = 1, End = 2
        let m = fit_ngram(&[vec![1, 0, 2]], 2, 3, 0.01).unwrap();
        let d = m.next_token_distribution(&[1], &Context::default());
        assert!(d[0] > d[1] && d[0] > d[2]);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let u = m.next_token_distribution(&[2], &Context::default());
        assert!(u.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn ngram_delta_reproduces_training_sequence() {
        let q = cfg();
        let seq = tokenize(&[seg([0.5, 0.5], [2.0, 0.5]), seg([-1.0, 3.0], [-1.0, 1.0])], &q, Point::new(0.0, 0.0));
        let ids = seq.ids(&q);
        let m = fit_ngram(std::slice::from_ref(&ids), 3, q.vocab_size(), 1e-9).unwrap();
        let s = sample_sequence(&m, &Context::default(), q.start_id(), q.end_id(), 0.8, 100, 3).unwrap();
        assert_eq!(s.ids, ids);
    }

    #[test]
    fn ngram_serialization_round_trip() {
        let m = fit_ngram(&[vec![1, 0, 2], vec![1, 0, 0, 2]], 3, 3, 0.01).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let back = NGram::read(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let ctx = Context::default();
        assert_eq!(back.next_token_distribution(&[1, 0], &ctx), m.next_token_distribution(&[1, 0], &ctx));
    }
}
