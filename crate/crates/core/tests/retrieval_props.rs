use chrono::{Days, NaiveDate};
use contrasim::corpus::{DailyNewsSet, Source};
use contrasim::embedding::{embed_dns, HashEmbedder};
use contrasim::projnet::ProjectionNet;
use contrasim::retrieval::{build_index, SearchSpace};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn days(texts: &[Vec<String>]) -> Vec<DailyNewsSet> {
    let start = NaiveDate::from_ymd_opt(2019, 6, 3).unwrap();
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| DailyNewsSet::from_texts(start + Days::new(i as u64), t, Source::Other, None, None).unwrap())
        .collect()
}

fn corpus() -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(prop::collection::vec("[a-z]{3,8}( [a-z]{2,6}){0,4}", 1..4), 2..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn results_sorted_and_exclude_query_date(texts in corpus(), q in any::<prop::sample::Index>(), k in 1usize..15, seed in 0u64..4) {
        let ds = days(&texts);
        let e = HashEmbedder::new(seed, 16).unwrap();
        let net = ProjectionNet::init(16, 8, 4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let idx = build_index(&ds, Some(&net), &e, "\n", SearchSpace::Projection).unwrap();
        let query = &ds[q.index(ds.len())];
        let r = idx.query_day(query, k, Some(&net), &e, "\n").unwrap();
        prop_assert!(r.hits.iter().all(|h| h.date != query.date));
        prop_assert!(r.hits.windows(2).all(|w| w[0].score > w[1].score || (w[0].score == w[1].score && w[0].date < w[1].date)));
        prop_assert_eq!(r.hits.len(), k.min(ds.len() - 1));
        prop_assert_eq!(r.truncated, k > ds.len() - 1);

        // Brute-force cosine ranking in projection space.
        let qv = net.project(&embed_dns(&e, query, "\n").unwrap()).unwrap();
        let mut oracle: Vec<(f64, NaiveDate)> = ds
            .iter()
            .filter(|d| d.date != query.date)
            .map(|d| {
                let v = net.project(&embed_dns(&e, d, "\n").unwrap()).unwrap();
                let c: f64 = v.as_slice().iter().zip(qv.as_slice()).map(|(a, b)| a * b).sum();
                (c, d.date)
            })
            .collect();
        oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (h, (c, d)) in r.hits.iter().zip(&oracle) {
            prop_assert_eq!(h.date, *d);
            prop_assert!((h.score - c).abs() < 1e-12);
        }

        let again = idx.query_day(query, k, Some(&net), &e, "\n").unwrap();
        prop_assert_eq!(r, again);
    }
}
