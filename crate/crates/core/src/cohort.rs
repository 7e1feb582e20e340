//! Reader studies, case cohorts and AI predictions.
//!
//! Canonical interchange is CSV with a fixed header; JSON arrays of objects
//! with the same field names are accepted as an alternative. Errors carry the
//! CSV line number (or the 1-based record index for JSON).
//!
//! | file              | header                                                                                          |
//! |-------------------|-------------------------------------------------------------------------------------------------|
//! | `readings.csv`    | `case_id,reader_id,pirads`                                                                      |
//! | `cases.csv`       | `case_id,patient_id,age,psa,historical_pirads,verification,gleason_gg,age_band,pi_qual,ethnicity` |
//! | `predictions.csv` | `case_id,score`                                                                                 |
//!
//! `verification` is one of `HISTO`, `CONSENSUS_NEG`, `UNVERIFIED`; `gleason_gg`
//! (0 = benign, 1..=5 grade groups) is present only for `HISTO`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! id_newtype {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

id_newtype!(CaseId);
id_newtype!(ReaderId);
id_newtype!(PatientId);

pub const READINGS_HEADER: [&str; 3] = ["case_id", "reader_id", "pirads"];
pub const CASES_HEADER: [&str; 10] = [
    "case_id",
    "patient_id",
    "age",
    "psa",
    "historical_pirads",
    "verification",
    "gleason_gg",
    "age_band",
    "pi_qual",
    "ethnicity",
];
pub const PREDICTIONS_HEADER: [&str; 2] = ["case_id", "score"];

/// One radiologist's PI-RADS assessment of one case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReaderScore {
    pub case_id: CaseId,
    pub reader_id: ReaderId,
    pub pirads: u8,
}

/// Rule turning a PI-RADS score into a binary decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutoffRule {
    /// Primary diagnosis cut-off.
    #[serde(rename = "ge3")]
    PiradsGe3,
    /// Screening cut-off.
    #[serde(rename = "ge4")]
    PiradsGe4,
}

impl CutoffRule {
    pub fn binarize(self, pirads: u8) -> bool {
        match self {
            CutoffRule::PiradsGe3 => pirads >= 3,
            CutoffRule::PiradsGe4 => pirads >= 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CutoffRule::PiradsGe3 => "PI-RADS >= 3",
            CutoffRule::PiradsGe4 => "PI-RADS >= 4",
        }
    }
}

impl std::str::FromStr for CutoffRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ge3" | "3" | "pirads>=3" => Ok(CutoffRule::PiradsGe3),
            "ge4" | "4" | "pirads>=4" => Ok(CutoffRule::PiradsGe4),
            other => Err(Error::invalid(format!("unknown cutoff `{other}` (expected ge3|ge4)"))),
        }
    }
}

/// Reference-standard status of a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verification {
    /// Histopathology available; grade group 0 encodes benign tissue.
    HistologyVerified { gleason_grade_group: u8 },
    /// Negative by consensus of two expert radiologists.
    ConsensusNegative,
    /// No reference standard; label must be imputed.
    Unverified,
}

impl Verification {
    /// Clinically significant cancer is grade group 2 or higher.
    pub fn label(&self) -> Option<bool> {
        match *self {
            Verification::HistologyVerified { gleason_grade_group } => Some(gleason_grade_group >= 2),
            Verification::ConsensusNegative => Some(false),
            Verification::Unverified => None,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Verification::HistologyVerified { .. } => "HISTO",
            Verification::ConsensusNegative => "CONSENSUS_NEG",
            Verification::Unverified => "UNVERIFIED",
        }
    }

    pub fn grade_group(&self) -> Option<u8> {
        match *self {
            Verification::HistologyVerified { gleason_grade_group } => Some(gleason_grade_group),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBand {
    #[serde(rename = "<50")]
    Under50,
    #[serde(rename = "50-59")]
    From50To59,
    #[serde(rename = "60-69")]
    From60To69,
    #[serde(rename = ">=70")]
    From70,
}

impl AgeBand {
    pub const ALL: [AgeBand; 4] = [
        AgeBand::Under50,
        AgeBand::From50To59,
        AgeBand::From60To69,
        AgeBand::From70,
    ];

    pub fn from_age(age: u32) -> Self {
        match age {
            0..=49 => AgeBand::Under50,
            50..=59 => AgeBand::From50To59,
            60..=69 => AgeBand::From60To69,
            _ => AgeBand::From70,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeBand::Under50 => "<50",
            AgeBand::From50To59 => "50-59",
            AgeBand::From60To69 => "60-69",
            AgeBand::From70 => ">=70",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        let s = s.replace('–', "-").replace('≥', ">=");
        AgeBand::ALL.into_iter().find(|b| b.label() == s)
    }
}

/// Optional stratification labels. Missing values are excluded from the
/// corresponding stratified analysis.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strata {
    pub age_band: Option<AgeBand>,
    pub pi_qual: Option<u8>,
    pub ethnicity: Option<String>,
}

/// One patient examination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: CaseId,
    pub patient_id: PatientId,
    pub age: u32,
    pub psa: f64,
    pub historical_pirads: u8,
    pub verification: Verification,
    pub strata: Strata,
}

impl CaseRecord {
    pub fn label(&self) -> Option<bool> {
        self.verification.label()
    }

    pub fn is_unverified(&self) -> bool {
        matches!(self.verification, Verification::Unverified)
    }

    /// Age band from the explicit label when present, else derived from age.
    pub fn age_band(&self) -> AgeBand {
        self.strata.age_band.unwrap_or_else(|| AgeBand::from_age(self.age))
    }
}

/// One AI likelihood score (0–100) for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AiPrediction {
    pub case_id: CaseId,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Json,
}

impl DataFormat {
    /// `.json` selects JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => DataFormat::Json,
            _ => DataFormat::Csv,
        }
    }
}

// Flat on-disk rows. Every field optional so that absence is reported as
// `MissingField` with a line number instead of a generic decode error.

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawReading {
    case_id: Option<String>,
    reader_id: Option<String>,
    pirads: Option<i64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawCase {
    case_id: Option<String>,
    patient_id: Option<String>,
    age: Option<i64>,
    psa: Option<f64>,
    historical_pirads: Option<i64>,
    verification: Option<String>,
    gleason_gg: Option<i64>,
    age_band: Option<String>,
    pi_qual: Option<i64>,
    ethnicity: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawPrediction {
    case_id: Option<String>,
    score: Option<f64>,
}

fn read_rows<T, R>(source: R, format: DataFormat) -> Result<Vec<(u64, T)>>
where
    T: for<'de> Deserialize<'de>,
    R: Read,
{
    match format {
        DataFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .trim(csv::Trim::All)
                .from_reader(source);
            let headers = rdr
                .headers()
                .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
                .clone();
            let mut out = Vec::new();
            for record in rdr.records() {
                let record = record.map_err(|e| Error::Parse {
                    line: e.position().map_or(0, |p| p.line()),
                    message: e.to_string(),
                })?;
                let line = record.position().map_or(0, |p| p.line());
                let row = record
                    .deserialize::<T>(Some(&headers))
                    .map_err(|e| Error::Parse { line, message: format!("malformed row: {e}") })?;
                out.push((line, row));
            }
            Ok(out)
        }
        DataFormat::Json => {
            let rows: Vec<T> = serde_json::from_reader(source)
                .map_err(|e| Error::Parse { line: e.line() as u64, message: e.to_string() })?;
            Ok(rows.into_iter().enumerate().map(|(i, r)| (i as u64 + 1, r)).collect())
        }
    }
}

fn required<T>(value: Option<T>, line: u64, field: &'static str) -> Result<T> {
    value.ok_or(Error::MissingField { line, field })
}

fn required_str(value: Option<String>, line: u64, field: &'static str) -> Result<String> {
    match value {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(Error::MissingField { line, field }),
    }
}

fn non_empty(value: Option<String>) -> Option<String> {
    value.filter(|s| !s.is_empty())
}

/// Parse a reading set. Duplicate `(case_id, reader_id)` pairs are rejected.
pub fn load_readings<R: Read>(source: R, format: DataFormat) -> Result<Vec<ReaderScore>> {
    let rows: Vec<(u64, RawReading)> = read_rows(source, format)?;
    let mut seen = HashSet::with_capacity(rows.len());
    let mut out = Vec::with_capacity(rows.len());
    for (line, raw) in rows {
        let case_id = CaseId(required_str(raw.case_id, line, "case_id")?);
        let reader_id = ReaderId(required_str(raw.reader_id, line, "reader_id")?);
        let value = required(raw.pirads, line, "pirads")?;
        if !(1..=5).contains(&value) {
            return Err(Error::PiradsOutOfRange { line, value });
        }
        if !seen.insert((case_id.clone(), reader_id.clone())) {
            return Err(Error::Duplicate {
                line,
                what: "(case_id, reader_id) pair",
                key: format!("{case_id},{reader_id}"),
            });
        }
        out.push(ReaderScore { case_id, reader_id, pirads: value as u8 });
    }
    Ok(out)
}

/// Parse a case cohort.
pub fn load_cases<R: Read>(source: R, format: DataFormat) -> Result<Vec<CaseRecord>> {
    let rows: Vec<(u64, RawCase)> = read_rows(source, format)?;
    let mut seen = HashSet::with_capacity(rows.len());
    let mut out = Vec::with_capacity(rows.len());
    for (line, raw) in rows {
        let case_id = CaseId(required_str(raw.case_id, line, "case_id")?);
        let patient_id = PatientId(required_str(raw.patient_id, line, "patient_id")?);
        let age = required(raw.age, line, "age")?;
        if age <= 0 || age > 150 {
            return Err(Error::Parse { line, message: format!("age out of range: {age}") });
        }
        let psa = required(raw.psa, line, "psa")?;
        if !(psa.is_finite() && psa > 0.0) {
            return Err(Error::Parse { line, message: format!("psa must be positive: {psa}") });
        }
        let historical = required(raw.historical_pirads, line, "historical_pirads")?;
        if !(1..=5).contains(&historical) {
            return Err(Error::PiradsOutOfRange { line, value: historical });
        }
        let code = required_str(raw.verification, line, "verification")?;
        let verification = match code.as_str() {
            "HISTO" => {
                let gg = required(raw.gleason_gg, line, "gleason_gg")?;
                if !(0..=5).contains(&gg) {
                    return Err(Error::Parse {
                        line,
                        message: format!("gleason_gg out of range: {gg} (expected 0..=5)"),
                    });
                }
                Verification::HistologyVerified { gleason_grade_group: gg as u8 }
            }
            "CONSENSUS_NEG" | "UNVERIFIED" => {
                if raw.gleason_gg.is_some() {
                    return Err(Error::Parse {
                        line,
                        message: format!("gleason_gg must be empty for verification {code}"),
                    });
                }
                if code == "CONSENSUS_NEG" {
                    Verification::ConsensusNegative
                } else {
                    Verification::Unverified
                }
            }
            _ => return Err(Error::UnknownVerification { line, code }),
        };
        let age_band = match non_empty(raw.age_band) {
            None => None,
            Some(s) => Some(AgeBand::parse(&s).ok_or_else(|| Error::Parse {
                line,
                message: format!("unknown age_band `{s}` (expected <50, 50-59, 60-69, >=70)"),
            })?),
        };
        let pi_qual = match raw.pi_qual {
            None => None,
            Some(q @ 1..=3) => Some(q as u8),
            Some(q) => {
                return Err(Error::Parse { line, message: format!("pi_qual out of range: {q}") })
            }
        };
        if !seen.insert(case_id.clone()) {
            return Err(Error::Duplicate { line, what: "case_id", key: case_id.0 });
        }
        out.push(CaseRecord {
            case_id,
            patient_id,
            age: age as u32,
            psa,
            historical_pirads: historical as u8,
            verification,
            strata: Strata { age_band, pi_qual, ethnicity: non_empty(raw.ethnicity) },
        });
    }
    Ok(out)
}

/// Parse AI predictions. One prediction per case; scores must lie in [0, 100].
pub fn load_predictions<R: Read>(source: R, format: DataFormat) -> Result<Vec<AiPrediction>> {
    let rows: Vec<(u64, RawPrediction)> = read_rows(source, format)?;
    let mut seen = HashSet::with_capacity(rows.len());
    let mut out = Vec::with_capacity(rows.len());
    for (line, raw) in rows {
        let case_id = CaseId(required_str(raw.case_id, line, "case_id")?);
        let score = required(raw.score, line, "score")?;
        if !(0.0..=100.0).contains(&score) {
            return Err(Error::ScoreOutOfRange { line, value: score });
        }
        if !seen.insert(case_id.clone()) {
            return Err(Error::Duplicate { line, what: "prediction for case", key: case_id.0 });
        }
        out.push(AiPrediction { case_id, score });
    }
    Ok(out)
}

/// Load any of the three file kinds from a path, picking the format by extension.
pub fn load_readings_path(path: &Path) -> Result<Vec<ReaderScore>> {
    load_readings(std::fs::File::open(path)?, DataFormat::from_path(path))
}

pub fn load_cases_path(path: &Path) -> Result<Vec<CaseRecord>> {
    load_cases(std::fs::File::open(path)?, DataFormat::from_path(path))
}

pub fn load_predictions_path(path: &Path) -> Result<Vec<AiPrediction>> {
    load_predictions(std::fs::File::open(path)?, DataFormat::from_path(path))
}

fn write_rows<T: Serialize, W: Write>(sink: W, format: DataFormat, header: &[&str], rows: &[T]) -> Result<()> {
    match format {
        DataFormat::Csv => {
            let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
            wtr.write_record(header).map_err(csv_io)?;
            for row in rows {
                wtr.serialize(row).map_err(csv_io)?;
            }
            wtr.flush()?;
            Ok(())
        }
        DataFormat::Json => {
            serde_json::to_writer_pretty(sink, rows)?;
            Ok(())
        }
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub fn write_readings<W: Write>(sink: W, format: DataFormat, readings: &[ReaderScore]) -> Result<()> {
    let rows: Vec<RawReading> = readings
        .iter()
        .map(|r| RawReading {
            case_id: Some(r.case_id.0.clone()),
            reader_id: Some(r.reader_id.0.clone()),
            pirads: Some(i64::from(r.pirads)),
        })
        .collect();
    write_rows(sink, format, &READINGS_HEADER, &rows)
}

pub fn write_cases<W: Write>(sink: W, format: DataFormat, cases: &[CaseRecord]) -> Result<()> {
    let rows: Vec<RawCase> = cases
        .iter()
        .map(|c| RawCase {
            case_id: Some(c.case_id.0.clone()),
            patient_id: Some(c.patient_id.0.clone()),
            age: Some(i64::from(c.age)),
            psa: Some(c.psa),
            historical_pirads: Some(i64::from(c.historical_pirads)),
            verification: Some(c.verification.code().to_string()),
            gleason_gg: c.verification.grade_group().map(i64::from),
            age_band: c.strata.age_band.map(|b| b.label().to_string()),
            pi_qual: c.strata.pi_qual.map(i64::from),
            ethnicity: c.strata.ethnicity.clone(),
        })
        .collect();
    write_rows(sink, format, &CASES_HEADER, &rows)
}

pub fn write_predictions<W: Write>(sink: W, format: DataFormat, predictions: &[AiPrediction]) -> Result<()> {
    let rows: Vec<RawPrediction> = predictions
        .iter()
        .map(|p| RawPrediction { case_id: Some(p.case_id.0.clone()), score: Some(p.score) })
        .collect();
    write_rows(sink, format, &PREDICTIONS_HEADER, &rows)
}

/// Error on the first prediction whose case is not in the cohort.
pub fn check_prediction_cases(cases: &[CaseRecord], predictions: &[AiPrediction]) -> Result<()> {
    let known: HashSet<&CaseId> = cases.iter().map(|c| &c.case_id).collect();
    match predictions.iter().find(|p| !known.contains(&p.case_id)) {
        Some(p) => Err(Error::UnknownCase(p.case_id.0.clone())),
        None => Ok(()),
    }
}

/// Scores aligned to `cases` order; `None` where a case has no prediction.
pub fn align_predictions(cases: &[CaseRecord], predictions: &[AiPrediction]) -> Result<Vec<Option<f64>>> {
    check_prediction_cases(cases, predictions)?;
    let by_case: BTreeMap<&CaseId, f64> = predictions.iter().map(|p| (&p.case_id, p.score)).collect();
    Ok(cases.iter().map(|c| by_case.get(&c.case_id).copied()).collect())
}

/// Error unless every case carries a reference-standard label.
pub fn require_fully_verified(cases: &[CaseRecord]) -> Result<()> {
    match cases.iter().find(|c| c.is_unverified()) {
        Some(c) => Err(Error::invalid(format!(
            "cohort is not fully verified: case `{}` is UNVERIFIED",
            c.case_id
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderCountSummary {
    pub cases_with_readings: usize,
    pub min: usize,
    pub median: f64,
    pub max: usize,
}

/// Descriptive checks over one cohort. Never fails; problems are reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_cases: usize,
    pub n_patients: usize,
    pub n_readings: usize,
    pub n_readers: usize,
    pub readers_per_case: Option<ReaderCountSummary>,
    /// Cases scored by exactly one reader (excluded from inter-reader agreement).
    pub single_reader_cases: usize,
    pub n_labeled: usize,
    pub n_positive: usize,
    /// `n_positive / n_labeled`.
    pub prevalence: Option<f64>,
    pub n_unverified: usize,
    pub unverified_fraction: Option<f64>,
    pub fully_verified: bool,
    pub n_predictions: usize,
    pub cases_without_prediction: usize,
    pub unknown_reading_cases: Vec<String>,
    pub unknown_prediction_cases: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn referentially_intact(&self) -> bool {
        self.unknown_reading_cases.is_empty() && self.unknown_prediction_cases.is_empty()
    }
}

pub fn validate_cohort(
    cases: &[CaseRecord],
    readings: &[ReaderScore],
    predictions: &[AiPrediction],
) -> ValidationReport {
    let mut warnings = Vec::new();
    let known: HashSet<&CaseId> = cases.iter().map(|c| &c.case_id).collect();
    let patients: HashSet<&PatientId> = cases.iter().map(|c| &c.patient_id).collect();

    let mut per_case: BTreeMap<&CaseId, usize> = BTreeMap::new();
    let mut readers: HashSet<&ReaderId> = HashSet::new();
    for r in readings {
        *per_case.entry(&r.case_id).or_default() += 1;
        readers.insert(&r.reader_id);
    }
    let unknown_reading_cases: Vec<String> = per_case
        .keys()
        .filter(|c| !known.is_empty() && !known.contains(**c))
        .map(|c| c.0.clone())
        .collect();

    let readers_per_case = if per_case.is_empty() {
        warnings.push("no reader data".to_string());
        None
    } else {
        let mut counts: Vec<usize> = per_case.values().copied().collect();
        counts.sort_unstable();
        let n = counts.len();
        let median = if n % 2 == 1 {
            counts[n / 2] as f64
        } else {
            (counts[n / 2 - 1] + counts[n / 2]) as f64 / 2.0
        };
        Some(ReaderCountSummary {
            cases_with_readings: n,
            min: counts[0],
            median,
            max: counts[n - 1],
        })
    };
    let single_reader_cases = per_case.values().filter(|&&n| n == 1).count();
    if single_reader_cases > 0 {
        warnings.push(format!(
            "{single_reader_cases} case(s) have a single reader and are excluded from inter-reader agreement"
        ));
    }

    let n_labeled = cases.iter().filter(|c| c.label().is_some()).count();
    let n_positive = cases.iter().filter(|c| c.label() == Some(true)).count();
    let n_unverified = cases.len() - n_labeled;
    if cases.is_empty() {
        warnings.push("no cases".to_string());
    }

    let predicted: BTreeSet<&CaseId> = predictions.iter().map(|p| &p.case_id).collect();
    let unknown_prediction_cases: Vec<String> = predicted
        .iter()
        .filter(|c| !known.contains(**c))
        .map(|c| c.0.clone())
        .collect();
    let cases_without_prediction = if predictions.is_empty() {
        0
    } else {
        cases.iter().filter(|c| !predicted.contains(&c.case_id)).count()
    };
    if !unknown_prediction_cases.is_empty() {
        warnings.push(format!("{} prediction(s) reference unknown cases", unknown_prediction_cases.len()));
    }
    if !unknown_reading_cases.is_empty() {
        warnings.push(format!("{} reading case(s) not in the cohort", unknown_reading_cases.len()));
    }
    if cases_without_prediction > 0 {
        warnings.push(format!("{cases_without_prediction} case(s) have no AI prediction"));
    }

    ValidationReport {
        n_cases: cases.len(),
        n_patients: patients.len(),
        n_readings: readings.len(),
        n_readers: readers.len(),
        readers_per_case,
        single_reader_cases,
        n_labeled,
        n_positive,
        prevalence: (n_labeled > 0).then(|| n_positive as f64 / n_labeled as f64),
        n_unverified,
        unverified_fraction: (!cases.is_empty()).then(|| n_unverified as f64 / cases.len() as f64),
        fully_verified: n_unverified == 0,
        n_predictions: predictions.len(),
        cases_without_prediction,
        unknown_reading_cases,
        unknown_prediction_cases,
        warnings,
    }
}
