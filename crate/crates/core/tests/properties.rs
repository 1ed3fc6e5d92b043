use std::collections::BTreeSet;

use forge_core::evalstats::{bootstrap_median_ci, export_cdf, ks_two_sample, lower_median, ErrorSample};
use forge_core::floorplan::{canonicalize, parse_floorplan, prepare, write_canonical};
use forge_core::geom::{Frame, Point, Segment};
use forge_core::grid::{GridGeometry, Label, OccupancyGrid};
use forge_core::infogain::{information_gain, scan_gain};
use forge_core::mapops::detect_frontier_cells;
use forge_core::sensor::alignment_from_angles;
use forge_core::seq::{
    detokenize, order_segments, subdivide, tokenize, QuantizerConfig, SubdivisionGrid, SUBDIVISIONS,
};
use forge_core::synthetic::{generate_plan, SyntheticConfig};
use proptest::prelude::*;

const HALF: f64 = 7.4;

fn point() -> impl Strategy<Value = Point> {
    (-HALF..HALF, -HALF..HALF).prop_map(|(x, y)| Point::new(x, y))
}

fn segment() -> impl Strategy<Value = Segment> {
    (point(), point()).prop_map(|(a, b)| Segment::new(a, b))
}

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Unknown), Just(Label::Free), Just(Label::Occupied), Just(Label::Window)]
}

fn small_grid(n: usize) -> impl Strategy<Value = OccupancyGrid> {
    prop::collection::vec(label(), n * n).prop_map(move |cells| {
        let mut g = OccupancyGrid::unknown(GridGeometry::new(n, n as f64), Frame::identity());
        g.cells = cells;
        g
    })
}

/// Cell `(r, c)` of an `n`-square grid under symmetry `k` of the square.
fn symmetric(k: usize, n: usize, r: usize, c: usize) -> (usize, usize) {
    let (r, c) = if k & 4 != 0 { (c, r) } else { (r, c) };
    let r = if k & 1 != 0 { n - 1 - r } else { r };
    let c = if k & 2 != 0 { n - 1 - c } else { c };
    (r, c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quantize_lands_within_half_a_cell(p in point()) {
        let q = QuantizerConfig::default();
        let (t, clamped) = q.quantize(p);
        prop_assert!(!clamped);
        prop_assert!(t < q.vertex_count());
        let back = q.dequantize(t);
        prop_assert!((back.x - p.x).abs() <= 0.5 / q.scale_x + 1e-9);
        prop_assert!((back.y - p.y).abs() <= 0.5 / q.scale_y + 1e-9);
        prop_assert_eq!(q.quantize(back).0, t);
    }

    #[test]
    fn tokenization_is_idempotent(segs in prop::collection::vec(segment(), 0..12), robot in point()) {
        let q = QuantizerConfig::default();
        let first = tokenize(&segs, &q, robot);
        first.validate(&q).unwrap();
        let decoded = detokenize(&first, &q).unwrap();
        prop_assert_eq!(tokenize(&decoded, &q, robot), first);
    }

    #[test]
    fn subdivision_conserves_length(segs in prop::collection::vec(segment(), 1..12)) {
        let q = QuantizerConfig::default();
        let pieces = subdivide(&segs, &SubdivisionGrid::snapped(&q, SUBDIVISIONS));
        let before: f64 = segs.iter().map(Segment::length).sum();
        let after: f64 = pieces.iter().map(Segment::length).sum();
        prop_assert!((before - after).abs() <= 1e-9 * before.max(1.0));
    }

    #[test]
    fn ordering_is_a_permutation(segs in prop::collection::vec(segment(), 0..20), robot in point()) {
        let ordered = order_segments(&segs, robot);
        prop_assert_eq!(ordered.len(), segs.len());
        let key = |s: &Segment| {
            let l = s.lex_ordered();
            [l.a.x.to_bits(), l.a.y.to_bits(), l.b.x.to_bits(), l.b.y.to_bits()]
        };
        let mut a: Vec<_> = segs.iter().map(key).collect();
        let mut b: Vec<_> = ordered.iter().map(key).collect();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
        for w in ordered.windows(2) {
            prop_assert!(w[0].distance_to_point(robot) <= w[1].distance_to_point(robot));
        }
    }

    #[test]
    fn frontiers_commute_with_square_symmetries(g in small_grid(9), k in 0usize..8) {
        let n = 9;
        let mut t = g.clone();
        for r in 0..n {
            for c in 0..n {
                let (r2, c2) = symmetric(k, n, r, c);
                t.set(r2, c2, g.get(r, c));
            }
        }
        let mapped: BTreeSet<usize> = detect_frontier_cells(&g)
            .into_iter()
            .map(|i| {
                let (r, c) = g.geometry.row_col(i);
                let (r2, c2) = symmetric(k, n, r, c);
                t.geometry.index(r2, c2)
            })
            .collect();
        let direct: BTreeSet<usize> = detect_frontier_cells(&t).into_iter().collect();
        prop_assert_eq!(mapped, direct);
    }

    #[test]
    fn ks_is_symmetric_and_zero_on_self(
        a in prop::collection::vec(0u32..50, 1..60),
        b in prop::collection::vec(0u32..50, 1..60),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let ab = ks_two_sample(&a, &b).unwrap();
        prop_assert_eq!(ab, ks_two_sample(&b, &a).unwrap());
        prop_assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one(ds in prop::collection::vec(-200i64..200, 1..80), bins in prop::option::of(1usize..40)) {
        let errors: Vec<ErrorSample> = ds
            .iter()
            .enumerate()
            .map(|(i, &d)| ErrorSample { frontier: format!("f{i}"), estimator: "naive".into(), d })
            .collect();
        let rows = export_cdf(&errors, bins);
        prop_assert!(!rows.is_empty());
        for w in rows.windows(2) {
            prop_assert!(w[0].x <= w[1].x);
            prop_assert!(w[0].f <= w[1].f);
        }
        prop_assert_eq!(rows.last().unwrap().f, 1.0);
    }

    #[test]
    fn bootstrap_interval_contains_the_median(v in prop::collection::vec(0u32..1000, 1..50), seed in any::<u64>()) {
        let mut v: Vec<f64> = v.into_iter().map(f64::from).collect();
        v.sort_by(f64::total_cmp);
        let m = lower_median(&v).unwrap();
        let ci = bootstrap_median_ci(&v, 200, seed, 0.95).unwrap();
        prop_assert!(ci.lo <= m && m <= ci.hi, "{m} not in [{}, {}]", ci.lo, ci.hi);
    }

    #[test]
    fn alignment_shifts_with_integer_rotations(
        base in 0u32..90,
        noise in prop::collection::vec(-0.4f64..0.4, 4..40),
        shift in 0u32..90,
    ) {
        let angles: Vec<f64> = noise.iter().map(|e| f64::from(base) + e).collect();
        let shifted: Vec<f64> = angles.iter().map(|a| (a + f64::from(shift)).rem_euclid(90.0)).collect();
        let a = alignment_from_angles(&angles).degrees();
        let b = alignment_from_angles(&shifted).degrees();
        let diff = (b - a - f64::from(shift)).rem_euclid(90.0);
        prop_assert!(diff.min(90.0 - diff) < 1e-6, "{a} {b} {shift}");
    }

    #[test]
    fn gain_bits_are_two_per_revealed_cell(before in small_grid(8), reveal in prop::collection::vec((any::<bool>(), label()), 64)) {
        let mut after = before.clone();
        for (cell, &(flip, l)) in after.cells.iter_mut().zip(&reveal) {
            if flip && *cell == Label::Unknown {
                *cell = l;
            }
        }
        let g = information_gain(&before, &after).unwrap();
        prop_assert_eq!(g.bits, 2.0 * g.cells as f64);
    }

    #[test]
    fn more_occluders_never_raise_scan_gain(
        base in prop::collection::vec(segment(), 0..6),
        extra in prop::collection::vec(segment(), 0..6),
        o in (-2.0f64..2.0, -2.0f64..2.0),
    ) {
        let g = OccupancyGrid::unknown(GridGeometry::default(), Frame::identity());
        let origin = Point::new(o.0, o.1);
        let all: Vec<Segment> = base.iter().chain(&extra).copied().collect();
        prop_assert!(scan_gain(&g, origin, &all, 4.5, 360) <= scan_gain(&g, origin, &base, 4.5, 360));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn canonicalization_is_idempotent(seed in any::<u64>()) {
        let plan = canonicalize(&generate_plan(seed, &SyntheticConfig::default()));
        let text = write_canonical(&plan).unwrap();
        let again = canonicalize(&parse_floorplan(text.as_bytes()).unwrap());
        prop_assert_eq!(&again.segments, &plan.segments);
        prop_assert_eq!(write_canonical(&again).unwrap(), text);
    }

    #[test]
    fn prepared_plans_keep_windows_on_the_perimeter(seed in any::<u64>()) {
        let plan = prepare(&generate_plan(seed, &SyntheticConfig::default()));
        prop_assert!(plan.perimeter.len() >= 4);
        for w in plan.exterior_windows() {
            prop_assert!(plan.contains(w.midpoint()) || forge_core::geom::polyline_distance(&plan.perimeter, w.midpoint()) < 0.1);
        }
    }
}
