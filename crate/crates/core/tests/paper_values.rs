use approx::assert_abs_diff_eq;
use readdisturb::analysis::{geomean_difference, pair_difference, DifferenceConvention};
use readdisturb::reference::{self, CHIPS};

fn table_geomean(pairs: Vec<(f64, f64)>, convention: DifferenceConvention) -> f64 {
    geomean_difference(&pairs, convention).unwrap()
}

#[test]
fn printed_differences_follow_the_table_conventions() {
    let s8b = reference::find("S-8Gb-B").unwrap();
    let t2 = pair_difference(s8b.hc_first[0], s8b.hc_first[1], DifferenceConvention::RelativeToSecond).unwrap();
    let t4 = pair_difference(s8b.hc_first[0], s8b.hc_exceeds, DifferenceConvention::RelativeToFirst).unwrap();
    assert_abs_diff_eq!(100.0 * t2, 26.2, epsilon = 0.05);
    assert_abs_diff_eq!(100.0 * t4, 451.4, epsilon = 0.05);
}

#[test]
fn geomeans_of_printed_means_are_near_the_printed_averages() {
    let t2 = table_geomean(CHIPS.iter().map(|c| (c.hc_first[0], c.hc_first[1])).collect(), DifferenceConvention::RelativeToSecond);
    let t3 = table_geomean(CHIPS.iter().map(|c| (c.maxflips[0], c.maxflips[1])).collect(), DifferenceConvention::RelativeToFirst);
    let t4 = table_geomean(CHIPS.iter().map(|c| (c.hc_first[0], c.hc_exceeds)).collect(), DifferenceConvention::RelativeToFirst);
    // The printed averages are computed from per-row data, so the recomputed
    // values only agree within the acceptance bands.
    assert!((t2 - reference::TABLE2_GEOMEAN_PCT).abs() <= 3.0, "{t2}");
    assert!((t3 - reference::TABLE3_GEOMEAN_PCT).abs() <= 10.0, "{t3}");
    assert!((t4 - reference::TABLE4_GEOMEAN_PCT).abs() <= 30.0, "{t4}");
}

#[test]
fn reference_means_are_ordered_like_the_observations() {
    for c in CHIPS {
        assert!(c.hc_first[0] < c.hc_first[1], "{}", c.name());
        assert!(c.maxflips[0] < c.maxflips[1], "{}", c.name());
        assert!(c.hc_exceeds > c.hc_first[0], "{}", c.name());
    }
    assert_eq!(CHIPS.len(), 12);
    assert_abs_diff_eq!(reference::ROWPRESS_SIDE_DIFFERENCE_PCT, 3.1);
}
