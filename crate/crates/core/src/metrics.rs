//! Playlist evaluation metrics.
//!
//! Each rater answers, per track, whether they liked it and whether they
//! already knew it, then rates the whole playlist from 0 to 10:
//!
//! * like rate `LR = (1/N) Σ 𝕀(like_i = 1)`
//! * novelty rate `NR = (1/N) Σ 𝕀(known_i = 0)`
//! * successful novelty rate `SNR = Σ 𝕀(known_i = 0 ∧ like_i = 1) / Σ 𝕀(known_i = 0)`,
//!   undefined when the playlist holds no new track.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const MAX_RATING: u8 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric undefined: sheet has no track responses")]
    NoResponses,
    #[error("no evaluation sheets for {0}")]
    NoSheets(ModelLabel),
    #[error("rating {0} outside 0..=10")]
    RatingOutOfRange(u8),
    #[error("inference time must be a non-negative number")]
    InvalidInferenceTime,
    #[error("line {line}: {reason}")]
    Jsonl { line: usize, reason: String },
}

/// Recommender under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelLabel {
    Traditional,
    Llama,
    Gemini,
}

impl ModelLabel {
    pub const ALL: [ModelLabel; 3] = [ModelLabel::Traditional, ModelLabel::Llama, ModelLabel::Gemini];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelLabel::Traditional => "traditional",
            ModelLabel::Llama => "llama",
            ModelLabel::Gemini => "gemini",
        }
    }
}

impl fmt::Display for ModelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "traditional" => Ok(ModelLabel::Traditional),
            "llama" => Ok(ModelLabel::Llama),
            "gemini" => Ok(ModelLabel::Gemini),
            other => Err(format!("unknown model label {other:?}")),
        }
    }
}

/// Accepts `true`/`false` or `1`/`0`.
pub fn deserialize_binary<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Binary {
        Bool(bool),
        Int(u64),
    }
    match Binary::deserialize(d)? {
        Binary::Bool(b) => Ok(b),
        Binary::Int(0) => Ok(false),
        Binary::Int(1) => Ok(true),
        Binary::Int(n) => Err(serde::de::Error::custom(format!(
            "expected 0 or 1, got {n}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackResponse {
    pub track_id: String,
    #[serde(deserialize_with = "deserialize_binary")]
    pub like: bool,
    #[serde(deserialize_with = "deserialize_binary")]
    pub known: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSheet {
    pub user_id: String,
    pub model_label: ModelLabel,
    pub responses: Vec<TrackResponse>,
    pub rating: u8,
    pub inference_seconds: f64,
}

impl EvaluationSheet {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.responses.is_empty() {
            return Err(MetricError::NoResponses);
        }
        if self.rating > MAX_RATING {
            return Err(MetricError::RatingOutOfRange(self.rating));
        }
        if !(self.inference_seconds.is_finite() && self.inference_seconds >= 0.0) {
            return Err(MetricError::InvalidInferenceTime);
        }
        Ok(())
    }

    fn count(&self, pred: impl Fn(&TrackResponse) -> bool) -> Result<(usize, usize), MetricError> {
        if self.responses.is_empty() {
            return Err(MetricError::NoResponses);
        }
        Ok((
            self.responses.iter().filter(|r| pred(r)).count(),
            self.responses.len(),
        ))
    }
}

pub fn like_rate(sheet: &EvaluationSheet) -> Result<f64, MetricError> {
    let (liked, n) = sheet.count(|r| r.like)?;
    Ok(liked as f64 / n as f64)
}

pub fn novelty_rate(sheet: &EvaluationSheet) -> Result<f64, MetricError> {
    let (new, n) = sheet.count(|r| !r.known)?;
    Ok(new as f64 / n as f64)
}

/// `Ok(None)` when no track in the sheet was new to the rater.
pub fn successful_novelty_rate(sheet: &EvaluationSheet) -> Result<Option<f64>, MetricError> {
    let (new, _) = sheet.count(|r| !r.known)?;
    if new == 0 {
        return Ok(None);
    }
    let (new_liked, _) = sheet.count(|r| !r.known && r.like)?;
    Ok(Some(new_liked as f64 / new as f64))
}

fn round2<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64((value * 100.0).round() / 100.0)
}

/// Mean and sample standard deviation of one metric column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(serialize_with = "round2")]
    pub mean: f64,
    #[serde(serialize_with = "round2")]
    pub std: f64,
    pub n: usize,
    /// Set when a single value was aggregated and `std` is reported as 0.
    pub degenerate: bool,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            std,
            n,
            degenerate: n == 1,
        })
    }

    fn scaled(self, factor: f64) -> Self {
        Self {
            mean: self.mean * factor,
            std: self.std * factor,
            ..self
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// Per-model aggregate. Rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model_label: ModelLabel,
    pub n_sheets: usize,
    pub n_sheets_with_novelty: usize,
    pub like_rate: Summary,
    pub novelty_rate: Summary,
    /// `None` when no sheet had a new track.
    pub successful_novelty_rate: Option<Summary>,
    pub rating: Summary,
    pub inference_seconds: Summary,
}

pub fn aggregate(
    sheets: &[EvaluationSheet],
    model_label: ModelLabel,
) -> Result<ModelReport, MetricError> {
    let mine: Vec<&EvaluationSheet> = sheets
        .iter()
        .filter(|s| s.model_label == model_label)
        .collect();
    if mine.is_empty() {
        return Err(MetricError::NoSheets(model_label));
    }
    let mut lr = Vec::with_capacity(mine.len());
    let mut nr = Vec::with_capacity(mine.len());
    let mut snr = Vec::new();
    for sheet in &mine {
        lr.push(like_rate(sheet)?);
        nr.push(novelty_rate(sheet)?);
        if let Some(v) = successful_novelty_rate(sheet)? {
            snr.push(v);
        }
    }
    let ratings: Vec<f64> = mine.iter().map(|s| f64::from(s.rating)).collect();
    let times: Vec<f64> = mine.iter().map(|s| s.inference_seconds).collect();
    let summary = |v: &[f64]| Summary::of(v).expect("non-empty");
    Ok(ModelReport {
        model_label,
        n_sheets: mine.len(),
        n_sheets_with_novelty: snr.len(),
        like_rate: summary(&lr).scaled(100.0),
        novelty_rate: summary(&nr).scaled(100.0),
        successful_novelty_rate: Summary::of(&snr).map(|s| s.scaled(100.0)),
        rating: summary(&ratings),
        inference_seconds: summary(&times),
    })
}

/// One report per model that has sheets, in traditional, llama, gemini order.
pub fn reports_by_model(sheets: &[EvaluationSheet]) -> Result<Vec<ModelReport>, MetricError> {
    ModelLabel::ALL
        .iter()
        .filter(|label| sheets.iter().any(|s| s.model_label == **label))
        .map(|label| aggregate(sheets, *label))
        .collect()
}

/// Aligned text table: model, LR, NR, SNR, rating, inference time.
pub fn render_table(reports: &[ModelReport]) -> String {
    let header = [
        "Model",
        "LR (%)",
        "NR (%)",
        "SNR (%)",
        "Rating (0-10)",
        "Inference time (s)",
    ];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
    for r in reports {
        rows.push(vec![
            r.model_label.to_string(),
            r.like_rate.to_string(),
            r.novelty_rate.to_string(),
            r.successful_novelty_rate
                .map_or_else(|| "n/a".to_string(), |s| s.to_string()),
            r.rating.to_string(),
            r.inference_seconds.to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| {
                let pad = w - cell.chars().count();
                if c == 0 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

pub fn write_sheets_jsonl(mut out: impl Write, sheets: &[EvaluationSheet]) -> std::io::Result<()> {
    for sheet in sheets {
        serde_json::to_writer(&mut out, sheet)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads and validates sheets, one JSON object per non-blank line.
pub fn read_sheets_jsonl(input: impl BufRead) -> Result<Vec<EvaluationSheet>, MetricError> {
    let mut sheets = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let err = |reason: String| MetricError::Jsonl {
            line: i + 1,
            reason,
        };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let sheet: EvaluationSheet =
            serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        sheet.validate().map_err(|e| err(e.to_string()))?;
        sheets.push(sheet);
    }
    Ok(sheets)
}
