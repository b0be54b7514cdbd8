use std::collections::VecDeque;

use dustmns::frame::{
    census_theta, compute_lags, empirical_quantile, lattice_edges, morans_i, ArealFrame, ArealUnit,
};
use proptest::prelude::*;

fn frame_from_edges(n: usize, edges: &[(usize, usize)]) -> ArealFrame {
    let units = (0..n)
        .map(|i| ArealUnit::new(format!("u{i}"), 1.0))
        .collect();
    ArealFrame::new(units, edges.iter().copied()).unwrap()
}

fn bfs_oracle(n: usize, edges: &[(usize, usize)], source: usize) -> Vec<Option<u32>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut dist = vec![None; n];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap();
        for &w in &adj[v] {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..60).prop_flat_map(|n| {
        let edges = prop::collection::vec((0..n, 0..n), 0..2 * n)
            .prop_map(|e| e.into_iter().filter(|(a, b)| a != b).collect::<Vec<_>>());
        (Just(n), edges)
    })
}

proptest! {
    #[test]
    fn lag_matrix_matches_bfs((n, edges) in random_graph()) {
        let frame = frame_from_edges(n, &edges);
        let lags = compute_lags(&frame, None);
        for src in 0..n {
            let oracle = bfs_oracle(n, &edges, src);
            for (j, want) in oracle.iter().enumerate() {
                prop_assert_eq!(lags.get(src, j), *want);
                prop_assert_eq!(frame.lag(src, j), *want);
            }
        }
    }

    #[test]
    fn morans_i_affine_invariant(
        values in prop::collection::vec(-5.0f64..5.0, 12),
        a in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        b in -100.0f64..100.0,
    ) {
        let frame = frame_from_edges(12, &lattice_edges(3, 4));
        let Ok(base) = morans_i(&frame, &values) else { return Ok(()) };
        let shifted: Vec<f64> = values.iter().map(|v| a * v + b).collect();
        let moved = morans_i(&frame, &shifted).unwrap();
        prop_assert!((base - moved).abs() < 1e-8, "{base} vs {moved}");
    }

    #[test]
    fn quantile_is_monotone_and_attained(
        values in prop::collection::vec(-1e3f64..1e3, 1..80),
        q1 in 0.001f64..0.999,
        q2 in 0.001f64..0.999,
    ) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        let a = empirical_quantile(&values, lo).unwrap();
        let b = empirical_quantile(&values, hi).unwrap();
        prop_assert!(a <= b);
        prop_assert!(values.contains(&a) && values.contains(&b));
    }
}

#[test]
fn lattice_lags_are_manhattan_distances() {
    let (rows, cols) = (7, 9);
    let frame = frame_from_edges(rows * cols, &lattice_edges(rows, cols));
    let lags = compute_lags(&frame, None);
    for i in 0..rows * cols {
        for j in 0..rows * cols {
            let d = (i / cols).abs_diff(j / cols) + (i % cols).abs_diff(j % cols);
            assert_eq!(lags.get(i, j), Some(d as u32));
        }
    }
}

#[test]
fn truncated_lags_drop_distant_pairs() {
    let frame = frame_from_edges(10, &(1..10).map(|i| (i - 1, i)).collect::<Vec<_>>());
    let lags = compute_lags(&frame, Some(3));
    assert_eq!(lags.get(0, 3), Some(3));
    assert_eq!(lags.get(0, 4), None);
}

#[test]
fn census_theta_excludes_ties_at_threshold() {
    let p = [0.1, 0.2, 0.2, 0.5];
    assert_eq!(census_theta(&p, 0.2), 0.25);
    assert_eq!(census_theta(&p, 0.19), 0.75);
}
