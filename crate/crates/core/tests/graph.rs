mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resgcn_core::graph::io::{read_edge_list, write_edge_list};
use resgcn_core::graph::{
    block_diagonalize, build_graph, dense_spectral_filter, estimate_lambda_max, fiedler, normalized_laplacian,
    scale_laplacian, SparseGraph,
};
use resgcn_core::testing::{random_connected_graph, random_graph, random_vec};

use common::{dense_laplacian, max_abs, max_abs_diff, max_eigenvalue};

fn graph_from(seed: u64, n: usize, p: f64, connected: bool) -> SparseGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if connected {
        random_connected_graph(&mut rng, n, p)
    } else {
        random_graph(&mut rng, n, p)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_spectrum_lies_in_zero_two(seed: u64, n in 1usize..=64, p in 0.0f64..0.6, connected: bool) {
        let g = graph_from(seed, n, p, connected);
        let lap = normalized_laplacian(&g);
        let dense = lap.matrix().to_nalgebra();
        prop_assert!(max_abs_diff(dense.as_slice(), dense.transpose().as_slice()) == 0.0);
        for &ev in common::eigen(&dense).eigenvalues.iter() {
            prop_assert!((-1e-10..=2.0 + 1e-10).contains(&ev), "eigenvalue {ev}");
        }
        for i in 0..n {
            prop_assert_eq!(lap.matrix().get(i, i), 1.0);
        }
    }

    #[test]
    fn laplacian_matches_the_dense_definition(seed: u64, n in 1usize..=40, p in 0.0f64..0.6) {
        let g = graph_from(seed, n, p, false);
        let ours = normalized_laplacian(&g).matrix().to_nalgebra();
        let oracle = dense_laplacian(&g);
        prop_assert!(max_abs_diff(ours.as_slice(), oracle.as_slice()) <= 1e-15);
    }

    #[test]
    fn power_iteration_agrees_with_dense_eigenvalue(seed: u64, n in 2usize..=64, p in 0.0f64..0.5) {
        let g = graph_from(seed, n, p, true);
        let lap = normalized_laplacian(&g);
        let exact = max_eigenvalue(&dense_laplacian(&g));
        let est = estimate_lambda_max(&lap, 1e-6).unwrap();
        prop_assert!((est - exact).abs() <= 1e-6 * exact, "{est} vs {exact}");
        prop_assert!(est > 0.0 && est <= 2.0);
    }

    #[test]
    fn scaled_laplacian_spectrum_fits_unit_interval(seed: u64, n in 2usize..=48) {
        let g = graph_from(seed, n, 0.3, true);
        let lap = normalized_laplacian(&g);
        let lmax = lap.lambda_max(1e-10).unwrap();
        let scaled = scale_laplacian(&lap, lmax).unwrap().to_nalgebra();
        let ev = common::eigen(&scaled).eigenvalues;
        let (lo, hi) = ev.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        prop_assert!(lo >= -1.0 - 1e-9 && hi <= 1.0 + 1e-9, "[{lo}, {hi}]");
        prop_assert!((hi - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn one_hot_filter_is_the_chebyshev_recurrence(seed: u64, n in 2usize..=40, k in 0usize..7) {
        let g = graph_from(seed, n, 0.3, true);
        let lap = normalized_laplacian(&g);
        let lmax = lap.lambda_max(1e-10).unwrap();
        let scaled = scale_laplacian(&lap, lmax).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let x = random_vec(&mut rng, n);
        // T_0 x = x, T_1 x = L~ x, T_k x = 2 L~ T_{k-1} x - T_{k-2} x.
        let (mut prev, mut cur) = (x.clone(), scaled.mul_vec(&x));
        let tk = match k {
            0 => x.clone(),
            1 => cur.clone(),
            _ => {
                for _ in 2..=k {
                    let next: Vec<f64> = scaled.mul_vec(&cur).iter().zip(&prev).map(|(a, b)| 2.0 * a - b).collect();
                    prev = std::mem::replace(&mut cur, next);
                }
                cur
            }
        };
        let mut theta = vec![0.0; k + 1];
        theta[k] = 1.0;
        let y = dense_spectral_filter(&lap, lmax, &theta, &x).unwrap();
        prop_assert!(max_abs_diff(&y, &tk) <= 1e-8 * max_abs(&tk).max(1e-300));
    }

    #[test]
    fn block_diagonal_laplacian_is_the_block_diagonal_of_laplacians(seeds in prop::collection::vec((any::<u64>(), 1usize..20), 1..5)) {
        let graphs: Vec<SparseGraph> = seeds.iter().map(|&(s, n)| graph_from(s, n, 0.3, false)).collect();
        let bd = block_diagonalize(&graphs).unwrap();
        let whole = normalized_laplacian(&bd.graph).matrix().to_nalgebra();
        let total = bd.offsets.last().copied().unwrap();
        prop_assert_eq!(whole.nrows(), total);
        let mut expected = nalgebra::DMatrix::zeros(total, total);
        for (c, g) in graphs.iter().enumerate() {
            let part = normalized_laplacian(g).matrix().to_nalgebra();
            expected.view_mut((bd.offsets[c], bd.offsets[c]), part.shape()).copy_from(&part);
            for v in bd.offsets[c]..bd.offsets[c + 1] {
                prop_assert_eq!(bd.component_of[v], c);
            }
        }
        prop_assert_eq!(whole, expected);
    }

    #[test]
    fn fiedler_pair_satisfies_the_eigen_equation(seed: u64, n in 2usize..=60) {
        let g = graph_from(seed, n, 0.2, true);
        let f = fiedler(&g).unwrap();
        let lap = normalized_laplacian(&g);
        let lv = lap.matrix().mul_vec(&f.vector);
        let residual = lv.iter().zip(&f.vector).map(|(a, v)| (a - f.value * v).powi(2)).sum::<f64>().sqrt();
        prop_assert!(residual <= 1e-6, "residual {residual}");
        let ortho: f64 = f.vector.iter().zip(g.degrees()).map(|(v, d)| v * d.sqrt()).sum();
        let norm = g.degrees().iter().sum::<f64>().sqrt();
        prop_assert!((ortho / norm).abs() <= 1e-6);
        let mut ev: Vec<f64> = common::eigen(&dense_laplacian(&g)).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        prop_assert!((f.value - ev[1]).abs() <= 1e-6);
    }

    #[test]
    fn edge_list_round_trips_exactly(seed: u64, n in 1usize..30, p in 0.0f64..0.6) {
        let g = graph_from(seed, n, p, false);
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let back = read_edge_list(buf.as_slice()).unwrap();
        prop_assert_eq!(back, g);
    }
}

#[test]
fn lambda_max_within_one_percent_on_100_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let n = rng.random_range(2..=64);
        let p = rng.random_range(0.0..0.4);
        let g = random_connected_graph(&mut rng, n, p);
        let exact = max_eigenvalue(&dense_laplacian(&g));
        let est = estimate_lambda_max(&normalized_laplacian(&g), 1e-6).unwrap();
        assert!((est - exact).abs() <= 0.01 * exact, "{est} vs {exact}");
    }
}

#[test]
fn regular_unit_graphs_have_laplacian_i_minus_a_over_d() {
    // Cycles (d = 2), complete graphs (d = n - 1) and the cube (d = 3).
    let cycle = |n: usize| (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect::<Vec<_>>();
    let complete = |n: usize| {
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j, 1.0)))
            .collect::<Vec<_>>()
    };
    let cube: Vec<_> = (0..8usize)
        .flat_map(|i| [1, 2, 4].into_iter().map(move |b| (i, i ^ b, 1.0)))
        .filter(|&(i, j, _)| i < j)
        .collect();
    let cases = [(5, cycle(5), 2.0), (12, cycle(12), 2.0), (6, complete(6), 5.0), (8, cube, 3.0)];
    for (n, edges, d) in cases {
        let g = build_graph(n, &edges).unwrap();
        let lap = normalized_laplacian(&g).matrix().to_nalgebra();
        let adj = g.adjacency_matrix().to_nalgebra();
        let expected = nalgebra::DMatrix::identity(n, n) - adj / d;
        assert_eq!(lap, expected, "n = {n}, d = {d}");
    }
}

#[test]
fn unit_triangle_examples() {
    let tri = build_graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
    let lap = normalized_laplacian(&tri);
    let mut ev: Vec<f64> = common::eigen(&lap.matrix().to_nalgebra()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    for (a, b) in ev.iter().zip([0.0, 1.5, 1.5]) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((lap.lambda_max(1e-6).unwrap() - 1.5).abs() <= 1.5e-6);
    let scaled = scale_laplacian(&lap, 1.5).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let expected = 4.0 / 3.0 * lap.matrix().get(i, j) - f64::from(u8::from(i == j));
            assert!((scaled.get(i, j) - expected).abs() < 1e-15);
        }
    }
}
