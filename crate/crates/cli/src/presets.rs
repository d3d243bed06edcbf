//! Built-in description of the Huangqiu seedling indicator set.

use ndarray::{array, Array2};
use sqcsef::dataset::{IndicatorConfig, IndicatorEntry};
use sqcsef::{Direction, IndicatorSpec};

use crate::synth::ColumnTarget;

pub fn huangqiu_indicators() -> Vec<IndicatorSpec> {
    vec![
        IndicatorSpec::new("seedling_height", "cm", Direction::Maximize).with_decimals(1),
        IndicatorSpec::new("ground_diameter", "cm", Direction::Maximize).with_decimals(3),
        IndicatorSpec::new("lateral_branches", "", Direction::Minimize).integer(),
        IndicatorSpec::new("root_length", "cm", Direction::Maximize).with_decimals(1),
        IndicatorSpec::new("fresh_weight", "g", Direction::Maximize).with_decimals(2),
        IndicatorSpec::new("leaf_chlorophyll", "SPAD", Direction::Maximize).with_decimals(1),
    ]
}

/// Observed range, mean and standard deviation of each indicator.
pub fn huangqiu_targets() -> Vec<ColumnTarget> {
    [
        (14.7, 63.2, 37.799, 10.0096),
        (0.275, 0.559, 0.42830, 0.082075),
        (0.0, 7.0, 0.98, 1.288),
        (4.650, 45.900, 18.64916, 8.740880),
        (6.920, 96.160, 37.19924, 18.483141),
        (29.5, 56.7, 42.731, 7.4509),
    ]
    .into_iter()
    .map(|(min, max, mean, std)| ColumnTarget {
        min,
        max,
        mean,
        std,
    })
    .collect()
}

/// Indicator correlations: Pearson among the five continuous indicators,
/// Spearman for lateral branches against the rest.
pub fn huangqiu_correlation() -> Array2<f64> {
    array![
        [1.0000, 0.5579, 0.2956, 0.6488, 0.8111, 0.9716],
        [0.5579, 1.0000, 0.2234, 0.6613, 0.6463, 0.5762],
        [0.2956, 0.2234, 1.0000, 0.2758, 0.2138, 0.2710],
        [0.6488, 0.6613, 0.2758, 1.0000, 0.6677, 0.6470],
        [0.8111, 0.6463, 0.2138, 0.6677, 1.0000, 0.7983],
        [0.9716, 0.5762, 0.2710, 0.6470, 0.7983, 1.0000],
    ]
}

/// Indicator config carrying the observed ranges, so published cluster
/// geometry can be denormalized without the raw table.
pub fn huangqiu_config() -> IndicatorConfig {
    IndicatorConfig {
        entries: huangqiu_indicators()
            .into_iter()
            .zip(huangqiu_targets())
            .map(|(spec, t)| IndicatorEntry {
                spec,
                min: Some(t.min),
                max: Some(t.max),
            })
            .collect(),
    }
}
