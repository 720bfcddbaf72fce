use std::collections::BTreeMap;

use proptest::prelude::*;
use tunebench_core::cbf::{
    cosine_similarity, genre_profile, recommend, round_score, CbfConfig, GenreVector,
};
use tunebench_core::metrics::{
    aggregate, like_rate, novelty_rate, successful_novelty_rate, EvaluationSheet, ModelLabel,
    TrackResponse,
};
use tunebench_core::{
    normalize_genre, sample_catalog, top_genres, top_played, Catalog, HistoryEntry, Track,
    UserHistory,
};

const GENRES: [&str; 10] = [
    "pop", "rock", "k-pop", "funk metal", "jazz", "samba", "mpb", "indie", "trap", "forró",
];

fn arb_catalog(max_tracks: usize) -> impl Strategy<Value = Catalog> {
    prop::collection::vec(prop::sample::subsequence(GENRES.to_vec(), 0..=4), 1..=max_tracks)
        .prop_map(|rows| {
            Catalog::new(
                rows.into_iter()
                    .enumerate()
                    .map(|(i, g)| {
                        Track::new(format!("t{i:02}"), format!("Song {i}"), vec!["A"], g).unwrap()
                    })
                    .collect(),
            )
            .unwrap()
        })
}

fn arb_history() -> impl Strategy<Value = UserHistory> {
    prop::collection::vec(
        (prop::sample::subsequence(GENRES.to_vec(), 1..=3), 1u64..20),
        1..8,
    )
    .prop_map(|rows| {
        UserHistory::new(
            "u",
            rows.into_iter()
                .enumerate()
                .map(|(i, (g, plays))| HistoryEntry {
                    track: Track::new(format!("h{i}"), format!("H {i}"), vec!["B"], g).unwrap(),
                    play_count: plays,
                    last_played: None,
                })
                .collect(),
        )
    })
}

/// Dense reference ranker: builds the vocabulary, weights and cosine from
/// scratch without touching the library's vector code.
fn brute_force_ranking(catalog: &Catalog, history: &UserHistory, k: usize) -> Vec<(String, f64)> {
    let mut weights: BTreeMap<String, u64> = BTreeMap::new();
    for e in history.entries() {
        for g in e.track.genres() {
            *weights.entry(normalize_genre(g)).or_default() += e.play_count;
        }
    }
    let mut profile: Vec<(String, u64)> = weights.into_iter().collect();
    profile.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    profile.truncate(5);

    let docs: Vec<Vec<String>> = catalog
        .tracks()
        .iter()
        .map(|t| t.genres().iter().map(|g| normalize_genre(g)).collect())
        .collect();
    let mut terms: Vec<String> = docs.iter().flatten().cloned().collect();
    terms.sort();
    terms.dedup();
    let n = docs.len() as f64;
    let idf: Vec<f64> = terms
        .iter()
        .map(|t| {
            let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
            ((1.0 + n) / (1.0 + df)).ln() + 1.0
        })
        .collect();
    let query: Vec<f64> = terms
        .iter()
        .zip(&idf)
        .map(|(t, w)| {
            profile
                .iter()
                .find(|(g, _)| g == t)
                .map_or(0.0, |(_, c)| *c as f64 * w)
        })
        .collect();
    let cos = |x: &[f64], y: &[f64]| {
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nx == 0.0 || ny == 0.0 {
            0.0
        } else {
            dot / (nx * ny)
        }
    };
    let mut scored: Vec<(String, f64)> = catalog
        .tracks()
        .iter()
        .zip(&docs)
        .map(|(t, d)| {
            let v: Vec<f64> = terms
                .iter()
                .zip(&idf)
                .map(|(term, w)| if d.contains(term) { *w } else { 0.0 })
                .collect();
            (t.track_id().to_string(), round_score(cos(&query, &v).min(1.0)))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn normalize_is_idempotent(s in "[ A-Za-z\\-\t]{0,20}") {
        let once = normalize_genre(&s);
        prop_assert_eq!(normalize_genre(&once), once);
    }

    #[test]
    fn top_genres_prefix(c in arb_catalog(15), k in 1usize..8) {
        let shorter = top_genres(&c, k).unwrap();
        let longer = top_genres(&c, k + 1).unwrap();
        prop_assert!(longer.starts_with(&shorter));
    }

    #[test]
    fn sample_is_subset(c in arb_catalog(20), n in 1usize..25, seed: u64) {
        if let Ok(s) = sample_catalog(&c, &["pop", "rock", "jazz"], n, seed) {
            prop_assert!(s.len() <= n);
            for t in s.tracks() {
                prop_assert_eq!(c.get(t.track_id()), Some(t));
            }
            prop_assert!(Catalog::new(s.tracks().to_vec()).is_ok());
        }
    }

    #[test]
    fn top_played_idempotent(h in arb_history(), n in 0usize..10) {
        let once = top_played(&h, n);
        prop_assert_eq!(top_played(&once, n), once);
    }

    #[test]
    fn cosine_symmetric_and_scale_free(
        x in prop::collection::vec(0.0f64..10.0, 6),
        y in prop::collection::vec(0.0f64..10.0, 6),
        scale in 0.01f64..100.0,
    ) {
        let vx = GenreVector::from_dense(&x).unwrap();
        let vy = GenreVector::from_dense(&y).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let vs = GenreVector::from_dense(&scaled).unwrap();
        let s = cosine_similarity(&vx, &vy).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s - cosine_similarity(&vy, &vx).unwrap()).abs() < 1e-9);
        prop_assert!((s - cosine_similarity(&vs, &vy).unwrap()).abs() < 1e-9);
        if !vx.is_zero() {
            prop_assert!((cosine_similarity(&vx, &vx).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn recommend_matches_brute_force(c in arb_catalog(20), h in arb_history()) {
        let Ok(recs) = recommend(&c, &h, CbfConfig::default()) else {
            // Only a genre-less catalog can fail here.
            prop_assert!(c.tracks().iter().all(|t| t.genres().is_empty()));
            return Ok(());
        };
        let got: Vec<(String, f64)> = recs
            .iter()
            .map(|r| (r.track.track_id().to_string(), r.score))
            .collect();
        prop_assert_eq!(got, brute_force_ranking(&c, &h, 20));
        prop_assert!(recs.windows(2).all(|w| w[0].score >= w[1].score));
        prop_assert!(recs.iter().all(|r| (0.0..=1.0).contains(&r.score)));
    }

    #[test]
    fn recommend_ignores_catalog_order(c in arb_catalog(20), h in arb_history(), seed: u64) {
        let mut tracks = c.tracks().to_vec();
        let len = tracks.len();
        for i in (1..len).rev() {
            tracks.swap(i, (seed as usize ^ i.wrapping_mul(31)) % (i + 1));
        }
        let shuffled = Catalog::new(tracks).unwrap();
        prop_assert_eq!(
            recommend(&c, &h, CbfConfig::default()),
            recommend(&shuffled, &h, CbfConfig::default())
        );
    }

    #[test]
    fn profile_is_bounded(h in arb_history()) {
        let p = genre_profile(&h, 5).unwrap();
        prop_assert!(p.len() <= 5);
        prop_assert!(p.genres().windows(2).all(|w| w[0].1 >= w[1].1));
        prop_assert!(p.genres().iter().all(|(_, w)| *w > 0));
    }

    #[test]
    fn metrics_ignore_response_order(flags in prop::collection::vec((any::<bool>(), any::<bool>()), 1..12), rot in 0usize..12) {
        let responses: Vec<TrackResponse> = flags
            .iter()
            .enumerate()
            .map(|(i, &(like, known))| TrackResponse { track_id: i.to_string(), like, known })
            .collect();
        let mut rotated = responses.clone();
        let len = rotated.len();
        rotated.rotate_left(rot % len);
        let a = sheet(responses);
        let b = sheet(rotated);
        prop_assert_eq!(like_rate(&a), like_rate(&b));
        prop_assert_eq!(novelty_rate(&a), novelty_rate(&b));
        prop_assert_eq!(successful_novelty_rate(&a), successful_novelty_rate(&b));
    }

    #[test]
    fn snr_is_one_when_every_new_track_liked(known in prop::collection::vec(any::<bool>(), 1..10), known_likes in prop::collection::vec(any::<bool>(), 10)) {
        let responses: Vec<TrackResponse> = known
            .iter()
            .enumerate()
            .map(|(i, &k)| TrackResponse { track_id: i.to_string(), like: !k || known_likes[i], known: k })
            .collect();
        let s = sheet(responses);
        let expected = if known.iter().all(|k| *k) { None } else { Some(1.0) };
        prop_assert_eq!(successful_novelty_rate(&s).unwrap(), expected);
    }

    #[test]
    fn aggregate_of_identical_sheets(flags in prop::collection::vec((any::<bool>(), any::<bool>()), 1..10), copies in 2usize..6) {
        let responses: Vec<TrackResponse> = flags
            .iter()
            .enumerate()
            .map(|(i, &(like, known))| TrackResponse { track_id: i.to_string(), like, known })
            .collect();
        let s = sheet(responses);
        let report = aggregate(&vec![s.clone(); copies], ModelLabel::Llama).unwrap();
        prop_assert!((report.like_rate.mean - 100.0 * like_rate(&s).unwrap()).abs() < 1e-9);
        prop_assert!(report.like_rate.std.abs() < 1e-9);
        prop_assert!(report.novelty_rate.std.abs() < 1e-9);
        prop_assert_eq!(report.n_sheets, copies);
    }
}

fn sheet(responses: Vec<TrackResponse>) -> EvaluationSheet {
    EvaluationSheet {
        user_id: "u".into(),
        model_label: ModelLabel::Llama,
        responses,
        rating: 5,
        inference_seconds: 2.0,
    }
}
