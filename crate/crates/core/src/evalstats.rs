//! Error statistics for gain estimators: median absolute error with
//! bootstrap intervals, over/under frequencies, two-sample KS distances,
//! empirical CDFs and the outside-perimeter length fraction.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::geom::{point_in_polygon, Point, Segment};
use crate::par;

/// Signed error of one estimator at one frontier, against the truth estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub frontier: String,
    pub estimator: String,
    /// Estimate minus truth, in cells.
    pub d: i64,
}

impl ErrorSample {
    pub fn abs(&self) -> u64 {
        self.d.unsigned_abs()
    }
}

/// Lower median: element `(n - 1) / 2` of the sorted values.
pub fn lower_median(sorted: &[f64]) -> Option<f64> {
    (!sorted.is_empty()).then(|| sorted[(sorted.len() - 1) / 2])
}

fn sorted(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Percentile bootstrap interval for the lower median. Trial `i` draws from a
/// generator seeded with `seed` on stream `i`, so results do not depend on
/// thread count.
pub fn bootstrap_median_ci(values: &[f64], trials: usize, seed: u64, level: f64) -> Option<Interval> {
    if values.is_empty() || trials == 0 {
        return None;
    }
    let n = values.len();
    let medians = par::map_range(trials, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut resample: Vec<f64> = (0..n).map(|_| values[rng.random_range(0..n)]).collect();
        resample.sort_by(f64::total_cmp);
        resample[(n - 1) / 2]
    });
    let medians = sorted(medians);
    let tail = (1.0 - level) / 2.0;
    let lo = ((tail * trials as f64).floor() as usize).min(trials - 1);
    let hi = (((1.0 - tail) * trials as f64).ceil() as usize).clamp(1, trials) - 1;
    Some(Interval {
        lo: medians[lo],
        hi: medians[hi],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub n: usize,
    /// Median absolute error, cells.
    pub mae: f64,
    pub ci: Interval,
    pub under: f64,
    pub over: f64,
    pub tie: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsEntry {
    pub a: String,
    pub b: String,
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorSummary>,
    pub ks: Vec<KsEntry>,
}

/// Absolute errors grouped by estimator name, sorted by name.
pub fn group_abs_errors(errors: &[ErrorSample]) -> BTreeMap<String, Vec<f64>> {
    let mut g: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for e in errors {
        g.entry(e.estimator.clone()).or_default().push(e.abs() as f64);
    }
    g
}

/// Per-estimator MAE, 95% bootstrap interval and over/under/tie frequencies,
/// plus KS statistics for every estimator pair.
pub fn summarize(errors: &[ErrorSample], trials: usize, seed: u64) -> Result<EvalReport> {
    if errors.is_empty() {
        return Err(ForgeError::InvalidArgument("no error samples to summarize".into()));
    }
    let mut signed: BTreeMap<&str, Vec<i64>> = BTreeMap::new();
    for e in errors {
        signed.entry(&e.estimator).or_default().push(e.d);
    }
    let groups = group_abs_errors(errors);
    let mut estimators = Vec::new();
    for (name, abs) in &groups {
        let d = &signed[name.as_str()];
        let n = d.len();
        let s = sorted(abs.iter().copied());
        let mae = lower_median(&s).expect("group is non-empty");
        let ci = bootstrap_median_ci(abs, trials.max(1), seed, 0.95).expect("group is non-empty");
        let frac = |pred: fn(&i64) -> bool| d.iter().filter(|x| pred(x)).count() as f64 / n as f64;
        estimators.push(EstimatorSummary {
            estimator: name.clone(),
            n,
            mae,
            ci,
            under: frac(|x| *x < 0),
            over: frac(|x| *x > 0),
            tie: frac(|x| *x == 0),
        });
    }
    let names: Vec<&String> = groups.keys().collect();
    let mut ks = Vec::new();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            ks.push(KsEntry {
                a: names[i].clone(),
                b: names[j].clone(),
                statistic: ks_two_sample(&groups[names[i]], &groups[names[j]])?,
            });
        }
    }
    Ok(EvalReport {
        trials,
        seed,
        estimators,
        ks,
    })
}

/// Largest vertical gap between the two empirical CDFs, evaluated at every
/// value of the merged sample.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(ForgeError::InvalidArgument("KS needs two non-empty samples".into()));
    }
    let (a, b) = (sorted(a.iter().copied()), sorted(b.iter().copied()));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Empirical CDF steps `(x, F(x))` at each distinct value.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let s = sorted(values.iter().copied());
    let n = s.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in s.iter().enumerate() {
        if i + 1 == s.len() || s[i + 1] != x {
            out.push((x, (i + 1) as f64 / n));
        }
    }
    out
}

/// `F(x)` of a sample.
pub fn ecdf_at(values: &[f64], x: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v <= x).count() as f64 / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub estimator: String,
    pub x: f64,
    pub f: f64,
}

/// CDF table per estimator. With `bins = None` the exact step points are
/// emitted; otherwise `bins + 1` evenly spaced points from 0 to the largest
/// error over all estimators.
pub fn export_cdf(errors: &[ErrorSample], bins: Option<usize>) -> Vec<CdfRow> {
    let groups = group_abs_errors(errors);
    let max = groups.values().flatten().copied().fold(0.0f64, f64::max);
    let mut rows = Vec::new();
    for (name, v) in &groups {
        match bins {
            None => rows.extend(ecdf(v).into_iter().map(|(x, f)| CdfRow {
                estimator: name.clone(),
                x,
                f,
            })),
            Some(b) => {
                let b = b.max(1);
                for k in 0..=b {
                    let x = if k == b { max } else { max * k as f64 / b as f64 };
                    rows.push(CdfRow {
                        estimator: name.clone(),
                        x,
                        f: ecdf_at(v, x),
                    });
                }
            }
        }
    }
    rows
}

pub fn cdf_csv(rows: &[CdfRow]) -> String {
    let mut s = String::from("estimator,x,F\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.estimator, r.x, r.f));
    }
    s
}

/// Fraction of total segment length lying strictly outside the closed
/// polygon `perimeter` (first vertex repeated at the end).
pub fn outside_perimeter_fraction(segments: &[Segment], perimeter: &[Point]) -> Result<f64> {
    if perimeter.len() < 4 || perimeter.first() != perimeter.last() {
        return Err(ForgeError::OpenPerimeter);
    }
    let edges: Vec<Segment> = perimeter.windows(2).map(|w| Segment::new(w[0], w[1])).collect();
    let (mut total, mut outside) = (0.0, 0.0);
    for s in segments {
        let len = s.length();
        if len == 0.0 {
            continue;
        }
        total += len;
        let mut ts = vec![0.0, 1.0];
        for e in &edges {
            if let Some((t, _)) = s.intersection_params(e) {
                if t > 0.0 && t < 1.0 {
                    ts.push(t);
                }
            }
        }
        ts.sort_by(f64::total_cmp);
        for w in ts.windows(2) {
            let mid = s.at(0.5 * (w[0] + w[1]));
            let on_boundary = edges.iter().any(|e| e.distance_to_point(mid) < 1e-12);
            if !on_boundary && !point_in_polygon(perimeter, mid) {
                outside += len * (w[1] - w[0]);
            }
        }
    }
    Ok(if total > 0.0 { outside / total } else { 0.0 })
}
