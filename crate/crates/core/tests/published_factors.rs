//! Factor analysis on the published indicator correlation matrix.

use ndarray::{array, Array2};
use sqcsef::factors;

fn published() -> Array2<f64> {
    array![
        [1.0000, 0.5579, 0.2956, 0.6488, 0.8111, 0.9716],
        [0.5579, 1.0000, 0.2234, 0.6613, 0.6463, 0.5762],
        [0.2956, 0.2234, 1.0000, 0.2758, 0.2138, 0.2710],
        [0.6488, 0.6613, 0.2758, 1.0000, 0.6677, 0.6470],
        [0.8111, 0.6463, 0.2138, 0.6677, 1.0000, 0.7983],
        [0.9716, 0.5762, 0.2710, 0.6470, 0.7983, 1.0000],
    ]
}

#[test]
fn adequacy_clears_the_gate() {
    let a = factors::adequacy(published().view(), 200).unwrap();
    assert!((a.kmo - 0.807).abs() < 5e-4, "kmo {}", a.kmo);
    assert_eq!(a.bartlett_dof, 15);
    assert!(a.bartlett_p < 1e-3);
    assert!(a.passes_gate());
}

#[test]
fn rotated_loadings_match_the_printed_table() {
    let m = factors::extract_factors(published().view(), 3).unwrap();
    let table = array![
        [0.928, 0.293, 0.152],
        [0.286, 0.892, 0.079],
        [0.126, 0.114, 0.984],
        [0.441, 0.752, 0.155],
        [0.765, 0.494, 0.045],
        [0.920, 0.309, 0.126],
    ];
    // column order and sign of rotated factors are arbitrary; the table's
    // ordering is by rotated eigenvalue with positive column sums
    for (got, want) in m.rotated_loadings.iter().zip(table.iter()) {
        assert!((got - want).abs() < 5e-4, "{got} vs {want}");
    }
    for (got, want) in m.rotated_eigenvalues.iter().zip([2.585, 1.799, 1.040]) {
        assert!((got - want).abs() < 5e-4);
    }
    let total: f64 = m.eigenvalues[..3].iter().sum();
    let rotated: f64 = m.rotated_eigenvalues.iter().sum();
    assert!(
        (total - rotated).abs() < 1e-9,
        "rotation preserves explained variance"
    );
}

#[test]
fn three_views_from_the_largest_loadings() {
    let m = factors::extract_factors(published().view(), 3).unwrap();
    let g = factors::factor_guidance(&m.eigenvalues);
    assert_eq!(g.kaiser, 1);
    assert_eq!(g.cumulative_80, 2);
    let p = factors::partition_views(&m, None).unwrap();
    let groups: Vec<Vec<usize>> = p.views.iter().map(|v| v.indicators.clone()).collect();
    assert_eq!(groups, vec![vec![0, 4, 5], vec![1, 3], vec![2]]);
    assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}
