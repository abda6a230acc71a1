use proptest::prelude::*;
use qaa_lns::anneal::table_curve_mse;
use qaa_lns::delta::{
    eval_linear_scan, table_from_json, table_to_json, DeltaTable, PwlSegment, TargetCurve,
};
use qaa_lns::LnsFormat;

fn f(t: u32, fr: u32) -> LnsFormat {
    LnsFormat::new(t, fr).unwrap()
}

#[test]
fn binary_search_matches_linear_scan_exhaustively() {
    for (t, fr) in [(8, 4), (10, 5), (11, 5), (12, 6), (14, 8), (16, 8)] {
        let fmt = f(t, fr);
        let table = DeltaTable::uniform(&fmt, 16).unwrap();
        for curve in [table.plus(), table.minus()] {
            for d in 0..=fmt.d_limit() + 4 {
                assert_eq!(
                    curve.eval(d).unwrap(),
                    eval_linear_scan(curve, d),
                    "{fmt} d={d}"
                );
            }
        }
    }
}

/// Pinned from an independent 50-digit recomputation of the same fit.
#[test]
fn uniform_fit_matches_high_precision_recomputation() {
    let fmt = f(12, 6);
    let table = DeltaTable::uniform(&fmt, 16).unwrap();
    let want: [(i32, i8, i32, i32); 16] = [
        (0, -1, -1, 65),
        (48, -1, -2, 53),
        (96, -1, -2, 52),
        (144, -1, -3, 35),
        (192, -1, -4, 22),
        (240, -1, -4, 22),
        (288, -1, -5, 13),
        (336, -1, -5, 13),
        (384, 0, 0, 1),
        (432, 1, -8, -1),
        (480, -1, -6, 8),
        (528, 1, -8, -2),
        (576, 0, 0, 0),
        (624, -1, -7, 5),
        (672, 0, 0, 0),
        (720, 0, 0, 0),
    ];
    let got: Vec<_> = table
        .plus()
        .segments()
        .iter()
        .map(|s| (s.bin_start, s.slope_sign, s.slope_exponent, s.offset))
        .collect();
    assert_eq!(got, want);
    let (mse_plus, _) = table_curve_mse(&table, &fmt).unwrap();
    let oracle = 5.532_422_674_953_466e-5;
    assert!((mse_plus - oracle).abs() <= 1e-12 * oracle, "{mse_plus}");
}

#[test]
fn uniform_tables_track_the_curves() {
    for (t, fr) in [(11, 5), (12, 6), (14, 8)] {
        let fmt = f(t, fr);
        let table = DeltaTable::uniform(&fmt, 16).unwrap();
        let (p, m) = table_curve_mse(&table, &fmt).unwrap();
        assert!(p < 1e-3, "{fmt} plus {p}");
        assert!(m < 0.1, "{fmt} minus {m}");
        // Δ+(0) = 1, up to the least-squares fit of the first segment
        let at_zero = table.plus().eval(0).unwrap() as f64 / fmt.scale();
        assert!((at_zero - 1.0).abs() < 0.05, "{fmt} {at_zero}");
    }
}

#[test]
fn curves_vanish_past_d_max() {
    let fmt = f(12, 6);
    let table = DeltaTable::uniform(&fmt, 16).unwrap();
    for d in fmt.d_limit() + 1..fmt.d_limit() + 200 {
        assert_eq!(table.plus().eval(d).unwrap(), 0);
        assert_eq!(table.minus().eval(d).unwrap(), 0);
    }
    assert!(table.plus().eval(-1).is_err());
}

#[test]
fn non_monotone_bins_rejected() {
    let fmt = f(12, 6);
    let seg = |b| PwlSegment::constant(b, 0);
    assert!(DeltaTable::new(
        &fmt,
        vec![seg(0), seg(10), seg(10)],
        vec![seg(0)],
        Default::default()
    )
    .is_err());
    assert!(DeltaTable::new(
        &fmt,
        vec![seg(0), seg(20), seg(10)],
        vec![seg(0)],
        Default::default()
    )
    .is_err());
    assert!(DeltaTable::new(&fmt, vec![seg(1)], vec![seg(0)], Default::default()).is_err());
    assert!(DeltaTable::new(
        &fmt,
        vec![seg(0), seg(10)],
        vec![seg(0)],
        Default::default()
    )
    .is_ok());
}

#[test]
fn rescale_round_trip_keeps_bins() {
    let small = f(11, 5);
    let large = f(14, 8);
    let table = DeltaTable::uniform(&small, 16).unwrap();
    let up = table.rescale_to(&large).unwrap();
    up.check_format(&large).unwrap();
    let back = up.rescale_to(&small).unwrap();
    assert_eq!(back.plus().segments(), table.plus().segments());
    assert_eq!(back.minus().segments(), table.minus().segments());
}

fn segments(max_bin: i32) -> impl Strategy<Value = Vec<PwlSegment>> {
    prop::collection::btree_set(1..max_bin, 0..15).prop_flat_map(|bins| {
        let starts: Vec<i32> = std::iter::once(0).chain(bins).collect();
        let n = starts.len();
        (
            Just(starts),
            prop::collection::vec((-1i8..=1, -8i32..=1, -100i32..=100), n),
        )
            .prop_map(|(starts, params)| {
                starts
                    .into_iter()
                    .zip(params)
                    .map(|(b, (s, k, o))| PwlSegment {
                        bin_start: b,
                        slope_sign: s,
                        slope_exponent: if s == 0 { 0 } else { k },
                        offset: o,
                    })
                    .collect()
            })
    })
}

proptest! {
    #[test]
    fn serialization_round_trips(plus in segments(768), minus in segments(768)) {
        let fmt = f(12, 6);
        let minus: Vec<_> = minus.into_iter().map(|s| PwlSegment { offset: -s.offset.abs(), ..s }).collect();
        let table = DeltaTable::new(&fmt, plus, minus, Default::default()).unwrap();
        let text = table_to_json(&table);
        let back = table_from_json(&text).unwrap();
        prop_assert_eq!(&back, &table);
        prop_assert_eq!(table_to_json(&back), text);
    }

    #[test]
    fn random_curves_search_matches_scan(plus in segments(768), d in 0i64..800) {
        let fmt = f(12, 6);
        let table = DeltaTable::new(&fmt, plus, vec![PwlSegment::constant(0, 0)], Default::default()).unwrap();
        prop_assert_eq!(table.plus().eval(d).unwrap(), eval_linear_scan(table.plus(), d));
    }

    #[test]
    fn lookup_is_linear_within_a_segment(plus in segments(768), d in 0i64..766) {
        let fmt = f(12, 6);
        let table = DeltaTable::new(&fmt, plus, vec![PwlSegment::constant(0, 0)], Default::default()).unwrap();
        let c = table.plus();
        let i = c.segment_index(d);
        let (_, end) = c.segment_range(i);
        prop_assume!(d < end);
        let seg = c.segments()[i];
        let ideal = |x: i64| (seg.slope() * x as f64 + seg.offset as f64).max(0.0);
        // one rounding of the shifted term
        prop_assert!((c.eval(d).unwrap() as f64 - ideal(d)).abs() <= 0.5 + 1e-9);
        let step = c.eval(d + 1).unwrap() - c.eval(d).unwrap();
        prop_assert!((step as f64 - (ideal(d + 1) - ideal(d))).abs() <= 1.0 + 1e-9);
    }

    #[test]
    fn targets_have_the_right_sign(d in 0.0f64..800.0) {
        let fmt = f(12, 6);
        prop_assert!(TargetCurve::DeltaPlus.value(d, &fmt) >= 0.0);
        if d > 0.0 {
            prop_assert!(TargetCurve::DeltaMinus.value(d, &fmt) <= 0.0);
        }
    }
}
