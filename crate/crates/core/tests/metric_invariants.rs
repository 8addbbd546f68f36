use contrasim::corpus::MarketLabel;
use contrasim::embedding::normalize;
use contrasim::metrics::{LabeledPoint, Metric, NeighborGraph};
use proptest::prelude::*;

fn points(vectors: &[Vec<f64>], labels: &[usize]) -> Vec<LabeledPoint> {
    vectors
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (v, &l))| LabeledPoint {
            key: i.to_string(),
            vector: normalize(v.clone()).unwrap(),
            label: MarketLabel::ALL[l],
        })
        .collect()
}

fn labeled_set(max_n: usize, dim: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>, usize)> {
    (3..=max_n).prop_flat_map(move |n| {
        (
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), n),
            prop::collection::vec(0usize..3, n),
            1..n,
        )
    })
}

/// Orthogonal matrix from Gram–Schmidt on a random square matrix.
fn orthogonal(raw: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    for r in raw {
        let mut v = r.clone();
        for b in &q {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-3 {
            return None;
        }
        q.push(v.into_iter().map(|x| x / n).collect());
    }
    Some(q)
}

fn all_metrics(pts: &[LabeledPoint], k: usize) -> Vec<f64> {
    let g = NeighborGraph::build(pts, k).unwrap();
    Metric::ALL.iter().map(|m| g.evaluate(*m)).collect()
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_stay_in_range((vs, ls, k) in labeled_set(12, 4)) {
        let m = all_metrics(&points(&vs, &ls), k);
        prop_assert!((0.0..=1.0).contains(&m[0]));
        prop_assert!((0.0..=1.0).contains(&m[1]));
        prop_assert!(m[2] >= 0.0);
        prop_assert!((0.0..=1.0).contains(&m[3]));
    }

    #[test]
    fn relabeling_classes_changes_nothing((vs, ls, k) in labeled_set(10, 3), perm in Just(vec![0usize, 1, 2]).prop_shuffle()) {
        let before = all_metrics(&points(&vs, &ls), k);
        let relabeled: Vec<usize> = ls.iter().map(|&l| perm[l]).collect();
        let after = all_metrics(&points(&vs, &relabeled), k);
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rotation_changes_nothing((vs, ls, k) in labeled_set(10, 4), raw in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 4)) {
        let Some(q) = orthogonal(&raw) else { return Ok(()); };
        let unit: Vec<Vec<f64>> = vs.iter().map(|v| normalize(v.clone()).unwrap().into_inner()).collect();
        let rotated: Vec<Vec<f64>> = unit
            .iter()
            .map(|v| q.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect())
            .collect();
        let before = all_metrics(&points(&unit, &ls), k);
        let after = all_metrics(&points(&rotated, &ls), k);
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn k1_on_separated_pure_clusters_is_exact(n_a in 2usize..6, n_b in 2usize..6, jitter in prop::collection::vec(-0.01f64..0.01, 12)) {
        let mut vs = Vec::new();
        let mut ls = Vec::new();
        for i in 0..n_a {
            vs.push(vec![1.0, jitter[i]]);
            ls.push(0);
        }
        for i in 0..n_b {
            vs.push(vec![-1.0, jitter[6 + i]]);
            ls.push(2);
        }
        prop_assert_eq!(all_metrics(&points(&vs, &ls), 1)[1], 1.0);
    }

    #[test]
    fn permutation_average_ignores_geometry((a, ls, k) in labeled_set(6, 3), b in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 6)) {
        let n = ls.len();
        let ga = NeighborGraph::build(&points(&a, &ls), k).unwrap();
        let gb = NeighborGraph::build(&points(&b[..n], &ls), k).unwrap();
        let perms = permutations(&ga.labels);
        for metric in Metric::ALL {
            let avg = |g: &NeighborGraph| perms.iter().map(|p| g.evaluate_with(metric, p)).sum::<f64>() / perms.len() as f64;
            let (x, y) = (avg(&ga), avg(&gb));
            prop_assert!((x - y).abs() < 1e-9, "{metric:?}: {x} vs {y}");
        }
    }
}
