//! End-to-end composition used by the command-line tool: dataset synthesis,
//! JSON Lines records, tokenization, n-gram prediction, frontier gains and
//! evaluation reports.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ForgeError, Result};
use crate::evalstats::{summarize, CdfRow, ErrorSample, EvalReport};
use crate::floorplan::{load_floorplan, prepare, FloorPlan, WindowTermination};
use crate::geom::{Frame, Point, Segment};
use crate::grid::{GridGeometry, OccupancyGrid};
use crate::infogain::{estimate_all, Environments, GainEstimate, TRUTH};
use crate::mapops::{find_frontiers, ClusterParams, FrontierCluster};
use crate::par;
use crate::pathgen::{all_pair_paths, build_navgrid, filter_paths, sample_waypoints, NavConfig, Path, PathFilter};
use crate::sensor::{Sample, SimConfig, TrajectorySimulator};
use crate::seq::{
    decode_pairs, encode, sample_sequence, Context, FreeCellMask, NGram, QuantizerConfig, SubdivisionGrid,
    TokenSequence, SUBDIVISIONS,
};

pub const TOOL: &str = "forge";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every knob that influences output bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub grid_size: usize,
    pub area: f64,
    pub range: f64,
    pub step: f64,
    pub rays: usize,
    pub seed: u64,
    pub waypoints: usize,
    /// Keep at most this many filtered paths per plan.
    pub max_paths: Option<usize>,
    pub nav: NavConfig,
    pub filter: PathFilter,
    pub window_termination: WindowTermination,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grid_size: 121,
            area: 15.0,
            range: 4.5,
            step: 0.8,
            rays: 720,
            seed: 0,
            waypoints: 12,
            max_paths: None,
            nav: NavConfig::default(),
            filter: PathFilter::default(),
            window_termination: WindowTermination::Exterior,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("area", self.area),
            ("range", self.range),
            ("step", self.step),
            ("nav.resolution", self.nav.resolution),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ForgeError::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.grid_size == 0 || self.rays == 0 || self.waypoints == 0 {
            return Err(ForgeError::InvalidArgument(
                "grid size, ray count and waypoint count must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            max_range: self.range,
            n_rays: self.rays,
            step: self.step,
            grid_size: self.grid_size,
            area: self.area,
            window_termination: self.window_termination,
        }
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::new(self.grid_size, self.area)
    }

    pub fn quantizer(&self) -> QuantizerConfig {
        QuantizerConfig::from(self.geometry())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Stable 64-bit seed derived from a base seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Provenance block written at the top of every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub config_hash: String,
    /// Extra parameters of the producing command.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, serde_json::Value>,
}

impl Header {
    pub fn new(config: &PipelineConfig) -> Self {
        Header {
            tool: TOOL.into(),
            version: VERSION.into(),
            config: config.clone(),
            config_hash: config.hash(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.params
            .insert(key.into(), serde_json::to_value(value).expect("parameter serializes"));
        self
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: Header,
}

/// A plan with the id used in sample ids.
#[derive(Debug, Clone)]
pub struct NamedPlan {
    pub id: String,
    pub plan: FloorPlan,
}

/// Loads and prepares a plan; its id is the file stem.
pub fn load_named_plan(path: &FsPath) -> Result<NamedPlan> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| ForgeError::InvalidArgument(format!("bad plan path {}", path.display())))?
        .to_string();
    Ok(NamedPlan {
        id,
        plan: prepare(&load_floorplan(path)?),
    })
}

/// Filtered waypoint-to-waypoint paths of a plan, in waypoint pair order.
pub fn plan_paths(plan: &FloorPlan, plan_id: &str, cfg: &PipelineConfig) -> Result<Vec<Path>> {
    let nav = build_navgrid(plan, &cfg.nav)?;
    let waypoints = sample_waypoints(&nav, cfg.waypoints, derive_seed(cfg.seed, plan_id))?;
    let paths: Vec<Path> = all_pair_paths(&nav, &waypoints).into_iter().flatten().collect();
    let mut kept = filter_paths(paths, &cfg.filter);
    if let Some(m) = cfg.max_paths {
        kept.truncate(m);
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub h: usize,
    pub w: usize,
    pub scale: f64,
    /// Row-major `[label, run]` pairs; labels 0 Unknown, 1 Free, 2 Occupied, 3 Window.
    pub rle: Vec<(u8, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub center: Point,
    pub angle: f64,
}

/// One dataset line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub plan_id: String,
    pub path: usize,
    pub step: usize,
    pub alpha_deg: f64,
    pub frame: FrameRecord,
    pub grid: GridRecord,
    pub visible_segments: Vec<[f64; 4]>,
    pub target_segments: Vec<[f64; 4]>,
    pub pose: Point,
    pub trajectory: Vec<Point>,
}

fn to_arrays(s: &[Segment]) -> Vec<[f64; 4]> {
    s.iter().map(Segment::to_array).collect()
}

pub fn from_arrays(s: &[[f64; 4]]) -> Vec<Segment> {
    s.iter().map(|&a| Segment::from_array(a)).collect()
}

impl From<&Sample> for SampleRecord {
    fn from(s: &Sample) -> Self {
        let g = &s.grid;
        SampleRecord {
            id: s.id(),
            plan_id: s.plan_id.clone(),
            path: s.path_index,
            step: s.step,
            alpha_deg: s.alpha().to_degrees(),
            frame: FrameRecord {
                center: g.frame.origin,
                angle: g.frame.angle,
            },
            grid: GridRecord {
                h: g.h(),
                w: g.w(),
                scale: g.geometry.scale,
                rle: g.rle(),
            },
            visible_segments: to_arrays(&s.visible_segments),
            target_segments: to_arrays(&s.target_segments),
            pose: s.pose,
            trajectory: s.trajectory.clone(),
        }
    }
}

impl SampleRecord {
    pub fn frame(&self) -> Frame {
        Frame::new(self.frame.center, self.frame.angle)
    }

    pub fn occupancy(&self) -> Result<OccupancyGrid> {
        let geom = GridGeometry {
            h: self.grid.h,
            w: self.grid.w,
            scale: self.grid.scale,
        };
        OccupancyGrid::from_rle(geom, self.frame(), &self.grid.rle)
    }

    /// Robot position in the grid frame.
    pub fn robot(&self) -> Point {
        self.frame().to_local(self.pose)
    }

    pub fn visible(&self) -> Vec<Segment> {
        from_arrays(&self.visible_segments)
    }

    pub fn targets(&self) -> Vec<Segment> {
        from_arrays(&self.target_segments)
    }
}

/// Result of synthesizing one plan.
#[derive(Debug)]
pub struct PlanOutcome {
    pub plan_id: String,
    pub result: Result<usize>,
}

/// Simulates every kept path of every plan. Trajectories run in parallel;
/// records come back ordered by plan, path and step.
pub fn run_synth(plans: &[NamedPlan], cfg: &PipelineConfig) -> (Vec<SampleRecord>, Vec<PlanOutcome>) {
    let paths: Vec<Result<Vec<Path>>> = par::map(plans, |p| plan_paths(&p.plan, &p.id, cfg));
    let mut jobs: Vec<(usize, usize, &Path)> = Vec::new();
    for (pi, r) in paths.iter().enumerate() {
        if let Ok(ps) = r {
            jobs.extend(ps.iter().enumerate().map(|(k, p)| (pi, k, p)));
        }
    }
    let sim = cfg.sim();
    let per_job: Vec<Vec<SampleRecord>> = par::map(&jobs, |&(pi, k, path)| {
        TrajectorySimulator::new(&plans[pi].plan, &plans[pi].id, k, path, sim)
            .map(|s| SampleRecord::from(&s))
            .collect()
    });
    let mut counts = vec![0usize; plans.len()];
    let mut records = Vec::new();
    for (job, recs) in jobs.iter().zip(per_job) {
        counts[job.0] += recs.len();
        records.extend(recs);
    }
    let outcomes = plans
        .iter()
        .zip(paths)
        .zip(counts)
        .map(|((p, r), n)| PlanOutcome {
            plan_id: p.id.clone(),
            result: r.map(|_| n),
        })
        .collect();
    (records, outcomes)
}

/// Writes a header line followed by one JSON object per item.
pub fn write_jsonl<T: Serialize>(mut w: impl Write, header: &Header, items: &[T]) -> Result<()> {
    serde_json::to_writer(
        &mut w,
        &HeaderLine {
            header: header.clone(),
        },
    )?;
    w.write_all(b"\n")?;
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSON Lines file with an optional leading header line.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(r: impl BufRead) -> Result<(Option<Header>, Vec<T>)> {
    let mut header = None;
    let mut items = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 && line.starts_with("{\"header\"") {
            let h: HeaderLine = serde_json::from_str(&line)
                .map_err(|e| ForgeError::parse(format!("line {}", i + 1), e.to_string()))?;
            header = Some(h.header);
            continue;
        }
        items.push(
            serde_json::from_str(&line).map_err(|e| ForgeError::parse(format!("line {}", i + 1), e.to_string()))?,
        );
    }
    Ok((header, items))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub sample_id: String,
    pub tokens: TokenSequence,
    pub clamped: usize,
}

/// Target segments of a record as a token sequence, ordered from the robot.
pub fn tokenize_record(rec: &SampleRecord, q: &QuantizerConfig) -> TokenRecord {
    let grid = SubdivisionGrid::snapped(q, SUBDIVISIONS);
    let e = encode(&rec.targets(), q, &grid, rec.robot());
    TokenRecord {
        sample_id: rec.id.clone(),
        tokens: e.tokens,
        clamped: e.clamped,
    }
}

/// Token-id corpus for n-gram fitting.
pub fn token_corpus(records: &[SampleRecord], q: &QuantizerConfig) -> Vec<Vec<u32>> {
    par::map(records, |r| tokenize_record(r, q).tokens.ids(q))
}

/// Predicted segments keyed by sample id.
pub type Predictions = BTreeMap<String, Vec<[f64; 4]>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictConfig {
    pub top_p: f64,
    pub seed: u64,
    pub max_len: usize,
    /// Forbid vertices in cells already observed as Free.
    pub mask_free: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            top_p: 0.8,
            seed: 0,
            max_len: 402,
            mask_free: false,
        }
    }
}

/// Sampled segments per sample id. Each sample draws from its own seed.
pub fn predict_segments(
    model: &NGram,
    records: &[SampleRecord],
    q: &QuantizerConfig,
    pc: &PredictConfig,
) -> Result<Predictions> {
    let results: Vec<Result<(String, Vec<[f64; 4]>)>> = par::map(records, |r| {
        let grid = r.occupancy()?;
        let visible = r.visible();
        let ctx = Context {
            grid: Some(&grid),
            visible: &visible,
        };
        let masked = FreeCellMask { inner: model, cfg: *q };
        let provider: &dyn crate::seq::NextTokenProvider = if pc.mask_free { &masked } else { model };
        let s = sample_sequence(
            provider,
            &ctx,
            q.start_id(),
            q.end_id(),
            pc.top_p,
            pc.max_len,
            derive_seed(pc.seed, &r.id),
        )?;
        let segs = decode_pairs(&s.tokens(q).0, q);
        Ok((r.id.clone(), to_arrays(&segs)))
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    /// `[row, col]` of the cluster location.
    pub location: [usize; 2],
    pub size: usize,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRecord {
    pub sample_id: String,
    pub clusters: Vec<ClusterRecord>,
}

fn cluster_record(geom: &GridGeometry, c: &FrontierCluster) -> ClusterRecord {
    let (r, col) = geom.row_col(c.location);
    ClusterRecord {
        location: [r, col],
        size: c.size(),
        cells: c.cells.clone(),
    }
}

pub fn frontier_records(records: &[SampleRecord]) -> Result<Vec<FrontierRecord>> {
    par::map(records, |r| {
        let grid = r.occupancy()?;
        let clusters = find_frontiers(&grid, &ClusterParams::default());
        Ok(FrontierRecord {
            sample_id: r.id.clone(),
            clusters: clusters.iter().map(|c| cluster_record(&grid.geometry, c)).collect(),
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRef {
    pub location: [usize; 2],
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRecord {
    pub sample_id: String,
    pub frontier: FrontierRef,
    pub estimator: String,
    pub gain_cells: u64,
    pub gain_bits: f64,
}

fn gain_record(geom: &GridGeometry, sample_id: &str, e: &GainEstimate) -> GainRecord {
    let (r, c) = geom.row_col(e.location);
    GainRecord {
        sample_id: sample_id.to_string(),
        frontier: FrontierRef {
            location: [r, c],
            size: e.size,
        },
        estimator: e.estimator.clone(),
        gain_cells: e.cells,
        gain_bits: e.bits,
    }
}

/// Gain records plus the sample ids that could not be evaluated and why.
#[derive(Debug, Default)]
pub struct GainOutput {
    pub records: Vec<GainRecord>,
    pub skipped: Vec<(String, String)>,
}

/// Frontier gains for every sample. `plans` supplies the truth environment by
/// plan id; `predictions` adds a predicted estimator named `predictor`.
pub fn compute_gains(
    records: &[SampleRecord],
    plans: &BTreeMap<String, FloorPlan>,
    predictions: Option<(&str, &Predictions)>,
    cfg: &PipelineConfig,
) -> GainOutput {
    let per: Vec<std::result::Result<Vec<GainRecord>, String>> = par::map(records, |r| {
        let grid = r.occupancy().map_err(|e| e.to_string())?;
        let frame = r.frame();
        let plan = plans.get(&r.plan_id).ok_or_else(|| format!("no plan '{}'", r.plan_id))?;
        let truth: Vec<Segment> = plan
            .termination_set(cfg.window_termination)
            .iter()
            .map(|s| frame.segment_to_local(s))
            .collect();
        let predicted = match predictions {
            Some((name, map)) => {
                let p = map.get(&r.id).ok_or_else(|| "no prediction for sample".to_string())?;
                Some((name, from_arrays(p)))
            }
            None => None,
        };
        let visible = r.visible();
        let env = Environments {
            visible: &visible,
            predicted: predicted.as_ref().map(|(n, p)| (*n, p.as_slice())),
            truth: Some(&truth),
        };
        let frontiers = find_frontiers(&grid, &ClusterParams::default());
        let est = estimate_all(&grid, &frontiers, &env, cfg.range).map_err(|e| e.to_string())?;
        Ok(est.iter().map(|e| gain_record(&grid.geometry, &r.id, e)).collect())
    });
    let mut out = GainOutput::default();
    for (r, res) in records.iter().zip(per) {
        match res {
            Ok(g) => out.records.extend(g),
            Err(why) => out.skipped.push((r.id.clone(), why)),
        }
    }
    out
}

/// Signed errors against the truth estimate of the same frontier.
pub fn error_samples(gains: &[GainRecord]) -> Vec<ErrorSample> {
    let key = |g: &GainRecord| format!("{}@{},{}", g.sample_id, g.frontier.location[0], g.frontier.location[1]);
    let truth: BTreeMap<String, u64> = gains
        .iter()
        .filter(|g| g.estimator == TRUTH)
        .map(|g| (key(g), g.gain_cells))
        .collect();
    gains
        .iter()
        .filter(|g| g.estimator != TRUTH)
        .filter_map(|g| {
            let k = key(g);
            let t = *truth.get(&k)?;
            Some(ErrorSample {
                frontier: k,
                estimator: g.estimator.clone(),
                d: g.gain_cells as i64 - t as i64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub header: Header,
    pub report: EvalReport,
    pub cdf: Vec<CdfRow>,
}

/// Report and CDF table for a set of gain records.
pub fn evaluate(gains: &[GainRecord], trials: usize, seed: u64, bins: Option<usize>) -> Result<(EvalReport, Vec<CdfRow>)> {
    let errors = error_samples(gains);
    let report = summarize(&errors, trials, seed)?;
    let cdf = crate::evalstats::export_cdf(&errors, bins);
    Ok((report, cdf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_plan, SyntheticConfig};

    fn small_cfg() -> PipelineConfig {
        PipelineConfig {
            waypoints: 4,
            max_paths: Some(1),
            ..PipelineConfig::default()
        }
    }

    fn synthetic(id: &str, seed: u64) -> NamedPlan {
        NamedPlan {
            id: id.into(),
            plan: prepare(&generate_plan(seed, &SyntheticConfig::default())),
        }
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.range = 9.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn synth_smoke_and_round_trip() {
        let plans = [synthetic("a", 1)];
        let cfg = small_cfg();
        let (records, outcomes) = run_synth(&plans, &cfg);
        assert!(outcomes[0].result.as_ref().is_ok_and(|&n| n >= 2));
        assert_eq!(records.len(), *outcomes[0].result.as_ref().unwrap());
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &Header::new(&cfg), &records).unwrap();
        let (h, back): (_, Vec<SampleRecord>) = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(h.unwrap().config, cfg);
        assert_eq!(back, records);
        let g = back[0].occupancy().unwrap();
        assert_eq!(g.h(), 121);
        assert!(g.known_count() > 0);
    }

    #[test]
    fn gains_and_report() {
        let plans = [synthetic("b", 5)];
        let cfg = small_cfg();
        let (records, _) = run_synth(&plans, &cfg);
        let map: BTreeMap<String, FloorPlan> = plans.iter().map(|p| (p.id.clone(), p.plan.clone())).collect();
        let out = compute_gains(&records, &map, None, &cfg);
        assert!(out.skipped.is_empty());
        assert!(!out.records.is_empty());
        let (report, cdf) = evaluate(&out.records, 100, 7, None).unwrap();
        assert_eq!(report.estimators.len(), 1);
        assert_eq!(report.estimators[0].estimator, "naive");
        assert!(!cdf.is_empty());
        let missing = compute_gains(&records, &BTreeMap::new(), None, &cfg);
        assert_eq!(missing.skipped.len(), records.len());
    }
}
