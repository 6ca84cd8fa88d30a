//! Observations, validated datasets and treatment pairs.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// One complete observation `(C0, E, C1, M, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub c0: Vec<f64>,
    pub e: u32,
    pub c1: Vec<f64>,
    pub m: f64,
    pub y: f64,
}

/// A candidate row before validation; `None` marks a missing field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawRecord {
    pub c0: Vec<Option<f64>>,
    pub e: Option<f64>,
    pub c1: Vec<Option<f64>>,
    pub m: Option<f64>,
    pub y: Option<f64>,
}

impl From<&Record> for RawRecord {
    fn from(r: &Record) -> Self {
        Self {
            c0: r.c0.iter().copied().map(Some).collect(),
            e: Some(f64::from(r.e)),
            c1: r.c1.iter().copied().map(Some).collect(),
            m: Some(r.m),
            y: Some(r.y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    Empty,
    DimensionMismatch { row: usize, block: &'static str, expected: usize, found: usize },
    Missing { row: usize, column: String },
    NonFinite { row: usize, column: String },
    InvalidTreatment { row: usize, value: f64 },
    LevelAbsent { level: u32 },
    IdentityPair { level: u32 },
}

impl core::error::Error for DataError {}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => write!(f, "dataset has no rows"),
            Self::DimensionMismatch { row, block, expected, found } => write!(
                f,
                "row {row}: expected {expected} {block} values, found {found}"
            ),
            Self::Missing { row, column } => write!(f, "row {row}: missing value in column {column}"),
            Self::NonFinite { row, column } => write!(f, "row {row}: non-finite value in column {column}"),
            Self::InvalidTreatment { row, value } => write!(
                f,
                "row {row}: treatment level {value} is not a non-negative integer"
            ),
            Self::LevelAbsent { level } => write!(f, "treatment level {level} does not occur in the data"),
            Self::IdentityPair { level } => write!(
                f,
                "comparison and baseline are both level {level}; identity-check mode must be requested explicitly"
            ),
        }
    }
}

/// A validated, immutable collection of records sharing dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
    d0: usize,
    d1: usize,
    levels: BTreeSet<u32>,
}

fn check_value(row: usize, column: impl FnOnce() -> String, v: Option<f64>) -> Result<f64, DataError> {
    match v {
        None => Err(DataError::Missing { row, column: column() }),
        Some(x) if !x.is_finite() => Err(DataError::NonFinite { row, column: column() }),
        Some(x) => Ok(x),
    }
}

/// Validates candidate rows against the declared dimensions. Errors carry
/// the zero-based row index and the CSV column name.
pub fn validate_dataset(rows: &[RawRecord], d0: usize, d1: usize) -> Result<Dataset, DataError> {
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    let mut records = Vec::with_capacity(rows.len());
    for (i, raw) in rows.iter().enumerate() {
        if raw.c0.len() != d0 {
            return Err(DataError::DimensionMismatch { row: i, block: "c0", expected: d0, found: raw.c0.len() });
        }
        if raw.c1.len() != d1 {
            return Err(DataError::DimensionMismatch { row: i, block: "c1", expected: d1, found: raw.c1.len() });
        }
        let c0 = raw
            .c0
            .iter()
            .enumerate()
            .map(|(j, v)| check_value(i, || alloc::format!("c0_{}", j + 1), *v))
            .collect::<Result<Vec<_>, _>>()?;
        let e_raw = check_value(i, || "e".into(), raw.e)?;
        if e_raw < 0.0 || e_raw != libm::trunc(e_raw) || e_raw > f64::from(u32::MAX) {
            return Err(DataError::InvalidTreatment { row: i, value: e_raw });
        }
        let c1 = raw
            .c1
            .iter()
            .enumerate()
            .map(|(j, v)| check_value(i, || alloc::format!("c1_{}", j + 1), *v))
            .collect::<Result<Vec<_>, _>>()?;
        let m = check_value(i, || "m".into(), raw.m)?;
        let y = check_value(i, || "y".into(), raw.y)?;
        records.push(Record { c0, e: e_raw as u32, c1, m, y });
    }
    Ok(Dataset::from_parts(records, d0, d1))
}

impl Dataset {
    /// Assembles a dataset from records already known to be well formed.
    ///
    /// # Panics
    /// If a record disagrees with `d0`/`d1`, holds a non-finite value, or
    /// `records` is empty.
    pub fn from_records(records: Vec<Record>, d0: usize, d1: usize) -> Self {
        assert!(!records.is_empty(), "dataset must be non-empty");
        for r in &records {
            assert!(r.c0.len() == d0 && r.c1.len() == d1, "record dimensions disagree");
            assert!(
                r.c0.iter().chain(&r.c1).chain([&r.m, &r.y]).all(|v| v.is_finite()),
                "record holds a non-finite value"
            );
        }
        Self::from_parts(records, d0, d1)
    }

    fn from_parts(records: Vec<Record>, d0: usize, d1: usize) -> Self {
        let levels = records.iter().map(|r| r.e).collect();
        Self { records, d0, d1, levels }
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn d0(&self) -> usize {
        self.d0
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn levels(&self) -> &BTreeSet<u32> {
        &self.levels
    }

    pub fn has_level(&self, level: u32) -> bool {
        self.levels.contains(&level)
    }

    /// Keeps the records whose treatment is one of the pair's levels, in order.
    pub fn restrict_to_pair(&self, pair: TreatmentPair) -> Result<Dataset, DataError> {
        for level in [pair.comparison, pair.baseline] {
            if !self.has_level(level) {
                return Err(DataError::LevelAbsent { level });
            }
        }
        let records: Vec<Record> = self
            .records
            .iter()
            .filter(|r| r.e == pair.comparison || r.e == pair.baseline)
            .cloned()
            .collect();
        Ok(Self::from_parts(records, self.d0, self.d1))
    }

    /// Resampled copy: record `indices[k]` becomes record `k`.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Self::from_parts(records, self.d0, self.d1)
    }

    /// Copy with every outcome shifted by `c`.
    pub fn with_outcome_shift(&self, c: f64) -> Dataset {
        let records = self
            .records
            .iter()
            .map(|r| Record { y: r.y + c, ..r.clone() })
            .collect();
        Self::from_parts(records, self.d0, self.d1)
    }

    /// True when every mediator value is 0 or 1.
    pub fn mediator_is_binary(&self) -> bool {
        self.records.iter().all(|r| r.m == 0.0 || r.m == 1.0)
    }

    /// True when every post-treatment covariate value is 0 or 1.
    pub fn c1_is_binary(&self) -> bool {
        self.records.iter().all(|r| r.c1.iter().all(|&v| v == 0.0 || v == 1.0))
    }

    pub fn outcome_is_binary(&self) -> bool {
        self.records.iter().all(|r| r.y == 0.0 || r.y == 1.0)
    }
}

/// Comparison level `e` and baseline (reference) level `e'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TreatmentPair {
    pub comparison: u32,
    pub baseline: u32,
}

impl TreatmentPair {
    pub const fn new(comparison: u32, baseline: u32) -> Self {
        Self { comparison, baseline }
    }

    pub fn is_identity(&self) -> bool {
        self.comparison == self.baseline
    }
}

impl fmt::Display for TreatmentPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} vs {}", self.comparison, self.baseline)
    }
}

/// Exposure coding used by every fit after pair preparation: records at the
/// comparison level carry `E = 1`, baseline records `E = 0`. In identity-check
/// mode both levels are the same and the coding is `1{E = level}` over the
/// full dataset, so the propensity models stay estimable.
pub const COMPARISON_CODE: u32 = 1;

/// A dataset restricted to a treatment pair and recoded to binary exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct PairData {
    data: Dataset,
    original: TreatmentPair,
    coded: TreatmentPair,
}

impl PairData {
    /// Restricts and recodes. A pair with equal levels is rejected unless
    /// `identity_check` is set.
    pub fn prepare(dataset: &Dataset, pair: TreatmentPair, identity_check: bool) -> Result<Self, DataError> {
        for level in [pair.comparison, pair.baseline] {
            if !dataset.has_level(level) {
                return Err(DataError::LevelAbsent { level });
            }
        }
        if pair.is_identity() {
            if !identity_check {
                return Err(DataError::IdentityPair { level: pair.comparison });
            }
            let records = dataset
                .records
                .iter()
                .map(|r| Record { e: u32::from(r.e == pair.comparison), ..r.clone() })
                .collect();
            return Ok(Self {
                data: Dataset::from_parts(records, dataset.d0, dataset.d1),
                original: pair,
                coded: TreatmentPair::new(COMPARISON_CODE, COMPARISON_CODE),
            });
        }
        let restricted = dataset.restrict_to_pair(pair)?;
        let records = restricted
            .records
            .into_iter()
            .map(|r| Record { e: u32::from(r.e == pair.comparison), ..r })
            .collect();
        Ok(Self {
            data: Dataset::from_parts(records, dataset.d0, dataset.d1),
            original: pair,
            coded: TreatmentPair::new(COMPARISON_CODE, 0),
        })
    }

    /// Wraps a dataset that is already coded 0 (baseline) / 1 (comparison).
    pub fn from_coded(data: Dataset) -> Result<Self, DataError> {
        for level in [0, 1] {
            if !data.has_level(level) {
                return Err(DataError::LevelAbsent { level });
            }
        }
        if data.levels.len() != 2 {
            let level = *data.levels.iter().find(|l| **l > 1).unwrap_or(&2);
            return Err(DataError::InvalidTreatment { row: 0, value: f64::from(level) });
        }
        let pair = TreatmentPair::new(COMPARISON_CODE, 0);
        Ok(Self { data, original: pair, coded: pair })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn original_pair(&self) -> TreatmentPair {
        self.original
    }

    /// The pair in the internal 0/1 coding.
    pub fn coded_pair(&self) -> TreatmentPair {
        self.coded
    }

    pub fn is_identity(&self) -> bool {
        self.coded.is_identity()
    }

    /// Same pair structure over a different (e.g. resampled) coded dataset.
    pub fn with_data(&self, data: Dataset) -> Self {
        Self { data, original: self.original, coded: self.coded }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn raw(c0: f64, e: f64, c1: [f64; 3], m: f64, y: f64) -> RawRecord {
        RawRecord {
            c0: vec![Some(c0)],
            e: Some(e),
            c1: c1.iter().copied().map(Some).collect(),
            m: Some(m),
            y: Some(y),
        }
    }

    #[test]
    fn validates_well_formed_rows() {
        let rows = vec![
            raw(1.0, 0.0, [1.0, 2.0, 3.0], 0.5, 1.0),
            raw(2.0, 1.0, [1.0, 2.0, 3.0], 0.5, 1.0),
            raw(0.5, 2.0, [1.0, 2.0, 3.0], 0.5, 1.0),
        ];
        let ds = validate_dataset(&rows, 1, 3).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.levels().iter().copied().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn nan_is_reported_with_row_and_column() {
        let mut rows = vec![raw(1.0, 0.0, [1.0, 2.0, 3.0], 0.5, 1.0); 3];
        rows[2].c1[1] = Some(f64::NAN);
        assert_eq!(
            validate_dataset(&rows, 1, 3),
            Err(DataError::NonFinite { row: 2, column: "c1_2".into() })
        );
    }

    #[test]
    fn missing_and_dimension_errors() {
        let mut rows = vec![raw(1.0, 0.0, [1.0, 2.0, 3.0], 0.5, 1.0); 2];
        rows[1].y = None;
        assert_eq!(validate_dataset(&rows, 1, 3), Err(DataError::Missing { row: 1, column: "y".into() }));
        assert!(matches!(validate_dataset(&rows, 2, 3), Err(DataError::DimensionMismatch { row: 0, .. })));
        assert_eq!(validate_dataset(&[], 1, 3), Err(DataError::Empty));
        rows[1].y = Some(1.0);
        rows[0].e = Some(1.5);
        assert!(matches!(validate_dataset(&rows, 1, 3), Err(DataError::InvalidTreatment { row: 0, .. })));
    }

    fn multi_level() -> Dataset {
        let rows: Vec<RawRecord> = (0..10)
            .map(|i| raw(i as f64, (1 + i % 5) as f64, [0.0, 1.0, 2.0], 0.0, i as f64))
            .collect();
        validate_dataset(&rows, 1, 3).unwrap()
    }

    #[test]
    fn restriction_filters_and_preserves_order() {
        let ds = multi_level();
        let r = ds.restrict_to_pair(TreatmentPair::new(1, 5)).unwrap();
        assert!(r.records().iter().all(|x| x.e == 1 || x.e == 5));
        let ys: Vec<f64> = r.records().iter().map(|x| x.y).collect();
        assert_eq!(ys, vec![0.0, 4.0, 5.0, 9.0]);
        assert_eq!(r.restrict_to_pair(TreatmentPair::new(1, 5)).unwrap(), r);
        assert_eq!(
            ds.restrict_to_pair(TreatmentPair::new(1, 7)),
            Err(DataError::LevelAbsent { level: 7 })
        );
    }

    #[test]
    fn binary_restriction_is_identity() {
        let rows: Vec<RawRecord> =
            (0..6).map(|i| raw(i as f64, (i % 2) as f64, [0.0; 3], 0.0, 0.0)).collect();
        let ds = validate_dataset(&rows, 1, 3).unwrap();
        assert_eq!(ds.restrict_to_pair(TreatmentPair::new(1, 0)).unwrap(), ds);
    }

    #[test]
    fn pair_preparation_codes_exposure() {
        let ds = multi_level();
        let pd = PairData::prepare(&ds, TreatmentPair::new(5, 1), false).unwrap();
        assert_eq!(pd.data().len(), 4);
        let es: Vec<u32> = pd.data().records().iter().map(|r| r.e).collect();
        assert_eq!(es, vec![0, 1, 0, 1]);
        assert_eq!(
            PairData::prepare(&ds, TreatmentPair::new(2, 2), false),
            Err(DataError::IdentityPair { level: 2 })
        );
        let id = PairData::prepare(&ds, TreatmentPair::new(2, 2), true).unwrap();
        assert_eq!(id.data().len(), 10);
        assert!(id.is_identity());
        assert_eq!(id.data().records().iter().filter(|r| r.e == 1).count(), 2);
    }
}
