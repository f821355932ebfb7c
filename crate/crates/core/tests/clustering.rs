use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use turbine_states::clustering::{distance_matrix, silhouette};
use turbine_states::{bisecting_kmeans, kmeans_two, ClusterParams, SquareMatrix};

fn random_matrices(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<SquareMatrix> {
    (0..n)
        .map(|_| {
            let data = (0..dim * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            SquareMatrix::from_row_major(dim, data).unwrap()
        })
        .collect()
}

fn sse_of(objects: &[SquareMatrix], assignment: &[usize]) -> f64 {
    (0..2)
        .map(|c| {
            let members: Vec<&SquareMatrix> =
                objects.iter().zip(assignment).filter(|(_, &a)| a == c).map(|(o, _)| o).collect();
            if members.is_empty() {
                return 0.0;
            }
            let dim = members[0].dim();
            let mut mean = vec![0.0; dim * dim];
            for m in &members {
                for (s, x) in mean.iter_mut().zip(m.as_slice()) {
                    *s += x / members.len() as f64;
                }
            }
            members
                .iter()
                .map(|m| m.as_slice().iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .sum()
        })
        .sum()
}

/// Minimum SSE over all 2^(n-1) - 1 nontrivial bipartitions.
fn brute_force_sse(objects: &[SquareMatrix]) -> f64 {
    let n = objects.len();
    (1..(1u32 << (n - 1)))
        .map(|mask| {
            let assignment: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            sse_of(objects, &assignment)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn kmeans_two_reaches_brute_force_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for instance in 0..50 {
        let n = rng.random_range(3..=8);
        let objects = random_matrices(&mut rng, n, 3);
        let refs: Vec<&SquareMatrix> = objects.iter().collect();
        let best = brute_force_sse(&objects);
        let got = kmeans_two(&refs, instance, 16, 1000).unwrap();
        assert!(
            got.sse <= best * (1.0 + 1e-9) + 1e-12,
            "instance {instance}: {} vs optimum {best}",
            got.sse
        );
        assert!((sse_of(&objects, &got.assignment) - got.sse).abs() < 1e-9);
    }
}

fn clustered_instance(seed: u64, n: usize) -> Vec<SquareMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = random_matrices(&mut rng, 4, 3);
    (0..n)
        .map(|i| {
            let c = &centers[i % 4];
            let data = c.as_slice().iter().map(|x| x + rng.random_range(-0.1..0.1)).collect();
            SquareMatrix::from_row_major(3, data).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn solution_is_internally_consistent(seed in 0u64..1000, n in 6usize..40, k in 1usize..5) {
        let objects = clustered_instance(seed, n);
        let params = ClusterParams { seed, ..ClusterParams::default() };
        let s = bisecting_kmeans(&objects, k, &params, None).unwrap();
        prop_assert_eq!(s.n_clusters(), k);
        prop_assert_eq!(s.dendrogram.len(), k - 1);
        prop_assert_eq!(s.sizes.iter().sum::<usize>(), n);
        for label in 1..=k {
            let members: Vec<usize> = s.members(label).collect();
            prop_assert_eq!(members.len(), s.sizes[label - 1]);
            // centroid is the element-wise mean of its members
            let mean = SquareMatrix::mean_of(members.iter().map(|&i| &objects[i])).unwrap();
            for (a, b) in mean.as_slice().iter().zip(s.centroids[label - 1].as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
        // every split partitions its parent
        let nodes = s.node_members();
        prop_assert_eq!(nodes[0].len(), n);
        for split in &s.dendrogram {
            let mut union: Vec<usize> = nodes[split.children[0]].iter().chain(&nodes[split.children[1]]).copied().collect();
            union.sort_unstable();
            let mut parent = nodes[split.parent].clone();
            parent.sort_unstable();
            prop_assert_eq!(union, parent);
        }
        let mut leaves: Vec<usize> = s.leaf_nodes.iter().flat_map(|&l| nodes[l].clone()).collect();
        leaves.sort_unstable();
        prop_assert_eq!(leaves, (0..n).collect::<Vec<_>>());
        // deterministic per seed
        let again = bisecting_kmeans(&objects, k, &params, None).unwrap();
        prop_assert_eq!(&again, &s);
    }

    #[test]
    fn silhouettes_match_oracle(seed in 0u64..1000, n in 4usize..30, k in 2usize..5) {
        let objects = clustered_instance(seed, n);
        let params = ClusterParams { seed, ..ClusterParams::default() };
        let s = bisecting_kmeans(&objects, k, &params, None).unwrap();
        let sil = s.silhouettes.clone().unwrap();
        let d = |i: usize, j: usize| -> f64 {
            objects[i].as_slice().iter().zip(objects[j].as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        };
        for i in 0..n {
            let own = s.labels[i];
            let size = s.sizes[own - 1];
            let expected = if size == 1 {
                0.0
            } else {
                let a = (0..n).filter(|&j| j != i && s.labels[j] == own).map(|j| d(i, j)).sum::<f64>() / (size - 1) as f64;
                let b = (1..=k)
                    .filter(|&l| l != own)
                    .map(|l| {
                        let m: Vec<usize> = (0..n).filter(|&j| s.labels[j] == l).collect();
                        m.iter().map(|&j| d(i, j)).sum::<f64>() / m.len() as f64
                    })
                    .fold(f64::INFINITY, f64::min);
                if a.max(b) == 0.0 { 0.0 } else { (b - a) / a.max(b) }
            };
            prop_assert!((sil.values[i] - expected).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&sil.values[i]));
        }
        let mean = sil.values.iter().sum::<f64>() / n as f64;
        prop_assert!((sil.mean - mean).abs() < 1e-12);
        prop_assert_eq!(silhouette(&s.labels, &objects).unwrap(), sil);
    }
}

#[test]
fn distance_matrix_is_symmetric_with_zero_diagonal() {
    let objects = clustered_instance(5, 9);
    let d = distance_matrix(&objects);
    for i in 0..9 {
        assert_eq!(d[i * 9 + i], 0.0);
        for j in 0..9 {
            assert_eq!(d[i * 9 + j], d[j * 9 + i]);
        }
    }
}

#[test]
fn labels_follow_ascending_wind() {
    let objects = clustered_instance(11, 40);
    // objects cycle through four centers; give center c mean wind 10 - c
    let wind: Vec<f64> = (0..40).map(|i| 10.0 - (i % 4) as f64).collect();
    let s = bisecting_kmeans(&objects, 4, &ClusterParams::default(), Some(&wind)).unwrap();
    let mut means = vec![0.0; 4];
    for (i, &l) in s.labels.iter().enumerate() {
        means[l - 1] += wind[i] / s.sizes[l - 1] as f64;
    }
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
}
