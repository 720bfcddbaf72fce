//! Content-based filtering over genre labels.
//!
//! Every catalog track becomes a TF-IDF vector over the catalog's genre
//! vocabulary. The user's most played genres form one weighted query
//! document, and tracks are ranked by cosine similarity to it.
//!
//! Weighting: `tf(t)` is the number of times `t` occurs in the document,
//! `idf(t) = ln((1 + n) / (1 + df(t))) + 1`, and vectors are L2-normalized.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{normalize_genre, Catalog, Track, UserHistory};

/// Number of profile genres used to build the query.
pub const DEFAULT_PROFILE_GENRES: usize = 5;
/// Number of tracks returned by [`recommend`].
pub const DEFAULT_RECOMMENDATIONS: usize = 20;

/// Scores are rounded to this many decimal places before ranking so that
/// mathematically equal similarities computed in different summation orders
/// tie exactly and fall back to the track_id order.
pub const SCORE_DECIMALS: i32 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CbfError {
    #[error("catalog has no tracks")]
    EmptyCatalog,
    #[error("catalog has no genres to build a vocabulary from")]
    EmptyVocabulary,
    #[error("history has no entries")]
    EmptyHistory,
    #[error("history yields no genre profile")]
    EmptyProfile,
    #[error("vector dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("weight at index {index} is negative or not finite")]
    InvalidWeight { index: usize },
    #[error("index {index} outside dimension {dim}")]
    IndexOutOfBounds { index: usize, dim: usize },
}

/// Genre vocabulary and document frequencies of a catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    document_frequency: Vec<usize>,
    n_documents: usize,
}

impl Vocabulary {
    pub fn build(catalog: &Catalog) -> Result<Self, CbfError> {
        if catalog.is_empty() {
            return Err(CbfError::EmptyCatalog);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for track in catalog.tracks() {
            // Track genres are unique after normalization.
            for genre in track.normalized_genres() {
                *df.entry(genre).or_default() += 1;
            }
        }
        if df.is_empty() {
            return Err(CbfError::EmptyVocabulary);
        }
        let (terms, document_frequency) = df.into_iter().unzip();
        Ok(Self {
            terms,
            document_frequency,
            n_documents: catalog.len(),
        })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn document_frequency(&self, term: &str) -> Option<usize> {
        self.index_of(term).map(|i| self.document_frequency[i])
    }

    pub fn n_documents(&self) -> usize {
        self.n_documents
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Position of an already normalized term.
    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.terms.binary_search_by(|t| t.as_str().cmp(term)).ok()
    }

    pub fn idf(&self, index: usize) -> f64 {
        let n = self.n_documents as f64;
        let df = self.document_frequency[index] as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }
}

/// Sparse non-negative vector. Entries are sorted by index and zero weights
/// are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct GenreVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl GenreVector {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds a vector from `(index, weight)` pairs; repeated indices add up.
    pub fn from_sparse(
        dim: usize,
        weights: impl IntoIterator<Item = (usize, f64)>,
    ) -> Result<Self, CbfError> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (index, w) in weights {
            if index >= dim {
                return Err(CbfError::IndexOutOfBounds { index, dim });
            }
            if !w.is_finite() || w < 0.0 {
                return Err(CbfError::InvalidWeight { index });
            }
            *acc.entry(index).or_default() += w;
        }
        let entries = acc.into_iter().filter(|&(_, w)| w > 0.0).collect();
        Ok(Self { dim, entries })
    }

    pub fn from_dense(weights: &[f64]) -> Result<Self, CbfError> {
        Self::from_sparse(weights.len(), weights.iter().copied().enumerate())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }

    /// Unit-length copy; the zero vector stays zero.
    pub fn normalized(&self) -> Self {
        let norm = self.norm();
        if norm == 0.0 {
            return self.clone();
        }
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, w)| (i, w / norm)).collect(),
        }
    }

    fn dot(&self, other: &Self) -> f64 {
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut sum = 0.0;
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    sum += x * y;
                    a.next();
                    b.next();
                }
            }
        }
        sum
    }
}

/// TF-IDF vector of a genre list. Labels are normalized first; labels outside
/// the vocabulary are ignored.
pub fn tfidf_vector<S: AsRef<str>>(genres: &[S], vocab: &Vocabulary) -> GenreVector {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for g in genres {
        let g = normalize_genre(g.as_ref());
        if !g.is_empty() {
            *counts.entry(g).or_default() += 1;
        }
    }
    tfidf_from_counts(counts.iter().map(|(g, &c)| (g.as_str(), c)), vocab)
}

/// TF-IDF vector of a document given as normalized `(term, occurrences)`.
pub fn tfidf_from_counts<'a>(
    counts: impl IntoIterator<Item = (&'a str, u64)>,
    vocab: &Vocabulary,
) -> GenreVector {
    let weights = counts.into_iter().filter_map(|(term, tf)| {
        vocab
            .index_of(term)
            .map(|i| (i, tf as f64 * vocab.idf(i)))
    });
    GenreVector::from_sparse(vocab.len(), weights)
        .expect("vocabulary indices and tf-idf weights are valid")
        .normalized()
}

/// Cosine of the angle between `x` and `y`; 0 when either vector is zero.
pub fn cosine_similarity(x: &GenreVector, y: &GenreVector) -> Result<f64, CbfError> {
    if x.dim != y.dim {
        return Err(CbfError::DimensionMismatch {
            left: x.dim,
            right: y.dim,
        });
    }
    let denom = x.norm() * y.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((x.dot(y) / denom).clamp(0.0, 1.0))
}

/// A user's most listened genres, weighted by total play count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenreProfile {
    genres: Vec<(String, u64)>,
}

impl GenreProfile {
    pub fn genres(&self) -> &[(String, u64)] {
        &self.genres
    }

    pub fn labels(&self) -> Vec<&str> {
        self.genres.iter().map(|(g, _)| g.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.genres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genres.is_empty()
    }

    /// Query vector: every genre repeated as many times as its weight.
    pub fn query_vector(&self, vocab: &Vocabulary) -> GenreVector {
        tfidf_from_counts(self.genres.iter().map(|(g, w)| (g.as_str(), *w)), vocab)
    }
}

/// Top `k` genres by the summed play count of the history entries carrying
/// them, ties broken by label. Genres with zero plays are left out.
pub fn genre_profile(history: &UserHistory, k: usize) -> Result<GenreProfile, CbfError> {
    if history.is_empty() {
        return Err(CbfError::EmptyHistory);
    }
    let mut weights: BTreeMap<String, u64> = BTreeMap::new();
    for entry in history.entries() {
        for genre in entry.track.normalized_genres() {
            *weights.entry(genre).or_default() += entry.play_count;
        }
    }
    let mut ranked: Vec<(String, u64)> = weights.into_iter().filter(|&(_, w)| w > 0).collect();
    ranked.sort_by_key(|&(_, w)| std::cmp::Reverse(w));
    ranked.truncate(k);
    if ranked.is_empty() {
        return Err(CbfError::EmptyProfile);
    }
    Ok(GenreProfile { genres: ranked })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedRecommendation {
    pub track: Track,
    pub score: f64,
    pub rank: usize,
    /// Track genre contributing most to the score, empty when nothing is shared.
    pub genre: String,
}

/// Serialized form of one recommendation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationRow {
    pub rank: usize,
    pub score: f64,
    pub genre: String,
    pub song_name: String,
    pub artist_name: String,
}

impl RankedRecommendation {
    pub fn to_row(&self) -> RecommendationRow {
        RecommendationRow {
            rank: self.rank,
            score: self.score,
            genre: self.genre.clone(),
            song_name: self.track.song_name().to_string(),
            artist_name: self.track.primary_artist().to_string(),
        }
    }
}

pub fn round_score(score: f64) -> f64 {
    let scale = 10f64.powi(SCORE_DECIMALS);
    (score * scale).round() / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CbfConfig {
    pub profile_genres: usize,
    pub recommendations: usize,
}

impl Default for CbfConfig {
    fn default() -> Self {
        Self {
            profile_genres: DEFAULT_PROFILE_GENRES,
            recommendations: DEFAULT_RECOMMENDATIONS,
        }
    }
}

/// Ranks catalog tracks against the user's genre profile.
///
/// Tracks the user already listened to stay in the candidate set.
pub fn recommend(
    catalog: &Catalog,
    history: &UserHistory,
    config: CbfConfig,
) -> Result<Vec<RankedRecommendation>, CbfError> {
    if catalog.is_empty() {
        return Err(CbfError::EmptyCatalog);
    }
    let profile = genre_profile(history, config.profile_genres)?;
    recommend_for_profile(catalog, &profile, config.recommendations)
}

pub fn recommend_for_profile(
    catalog: &Catalog,
    profile: &GenreProfile,
    k: usize,
) -> Result<Vec<RankedRecommendation>, CbfError> {
    if profile.is_empty() {
        return Err(CbfError::EmptyProfile);
    }
    let vocab = Vocabulary::build(catalog)?;
    let query = profile.query_vector(&vocab);

    let mut scored: Vec<(f64, &Track, String)> = catalog
        .tracks()
        .iter()
        .map(|track| {
            let vector = tfidf_vector(track.genres(), &vocab);
            let score = round_score(cosine_similarity(&query, &vector)?);
            Ok((score, track, dominant_genre(&query, &vector, track, &vocab)))
        })
        .collect::<Result<_, CbfError>>()?;

    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.track_id().cmp(b.1.track_id()))
    });
    Ok(scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (score, track, genre))| RankedRecommendation {
            track: track.clone(),
            score,
            rank: i + 1,
            genre,
        })
        .collect())
}

fn dominant_genre(
    query: &GenreVector,
    vector: &GenreVector,
    track: &Track,
    vocab: &Vocabulary,
) -> String {
    let mut best: Option<(usize, f64)> = None;
    for &(i, w) in vector.entries() {
        let contribution = w * query.weight(i);
        if contribution > 0.0 && best.is_none_or(|(_, b)| contribution > b) {
            best = Some((i, contribution));
        }
    }
    let Some((index, _)) = best else {
        return String::new();
    };
    let term = &vocab.terms()[index];
    let labels: HashMap<String, &String> = track
        .genres()
        .iter()
        .map(|g| (normalize_genre(g), g))
        .collect();
    labels.get(term).map_or_else(|| term.clone(), |g| (*g).clone())
}
