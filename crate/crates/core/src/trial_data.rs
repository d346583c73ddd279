//! Longitudinal trial datasets with monotone dropout and the design matrices
//! of the three estimators.
//!
//! Timepoints are 1-based in the long-format CSV and in `dropout_time`, and
//! 0-based everywhere else (slice indices). A subject with dropout time `T`
//! has outcomes observed at (1-based) times `1..T`, so `T = J + 1` means fully
//! observed and `T = 1` means nothing was observed.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("NonMonotoneMissingness: subject {subject} has an observed outcome at time {time} after a missing one")]
    NonMonotoneMissingness { subject: u64, time: usize },
    #[error("InconsistentBaseline: covariates or treatment vary within subject {subject}")]
    InconsistentBaseline { subject: u64 },
    #[error("EmptyArm: treatment arm {arm} has no subjects")]
    EmptyArm { arm: u8 },
    #[error("dataset has no subjects")]
    NoSubjects,
    #[error("subject {subject}: time {time} outside 1..={max}")]
    TimeOutOfRange { subject: u64, time: usize, max: usize },
    #[error("subject {subject}: duplicate record for time {time}")]
    DuplicateTime { subject: u64, time: usize },
    #[error("subject {subject}: expected {expected} values, found {found}")]
    DimensionMismatch {
        subject: u64,
        expected: usize,
        found: usize,
    },
    #[error("subject {subject}: non-finite value")]
    NonFinite { subject: u64 },
    #[error("CSV error: {0}")]
    Csv(String),
}

/// One randomized subject: baseline covariates, arm, and the outcome sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject<T> {
    id: u64,
    covariates: Vec<T>,
    treatment: bool,
    outcomes: Vec<Option<T>>,
    dropout_time: usize,
}

impl<T: Scalar> Subject<T> {
    /// Validates monotone missingness and derives the dropout time.
    pub fn new(
        id: u64,
        covariates: Vec<T>,
        treatment: bool,
        outcomes: Vec<Option<T>>,
    ) -> Result<Self, DataError> {
        if covariates.iter().any(|x| !x.is_finite())
            || outcomes.iter().flatten().any(|y| !y.is_finite())
        {
            return Err(DataError::NonFinite { subject: id });
        }
        let observed = outcomes.iter().take_while(|y| y.is_some()).count();
        if let Some(offset) = outcomes[observed..].iter().position(Option::is_some) {
            return Err(DataError::NonMonotoneMissingness {
                subject: id,
                time: observed + offset + 1,
            });
        }
        Ok(Self {
            id,
            covariates,
            treatment,
            outcomes,
            dropout_time: observed + 1,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn covariates(&self) -> &[T] {
        &self.covariates
    }

    pub fn treatment(&self) -> bool {
        self.treatment
    }

    /// Treatment as 0/1 in the scalar type.
    pub fn treatment_value(&self) -> T {
        if self.treatment {
            T::one()
        } else {
            T::zero()
        }
    }

    pub fn outcomes(&self) -> &[Option<T>] {
        &self.outcomes
    }

    /// `T_i`: outcome at (1-based) time `j` is observed iff `j < T_i`.
    pub fn dropout_time(&self) -> usize {
        self.dropout_time
    }

    pub fn n_observed(&self) -> usize {
        self.dropout_time - 1
    }

    /// The observed prefix `Y†`.
    pub fn observed_outcomes(&self) -> impl Iterator<Item = T> + '_ {
        self.outcomes.iter().map_while(|y| *y)
    }

    /// Outcomes with missing entries zero-padded.
    pub fn padded_outcomes(&self) -> Vec<T> {
        self.outcomes.iter().map(|y| y.unwrap_or_else(T::zero)).collect()
    }

    /// Returns a copy censored at dropout time `t` (outcomes at times `>= t` removed).
    /// A later `t` than the current dropout time leaves the subject unchanged.
    pub fn censored_at(&self, t: usize) -> Self {
        let t = t.max(1).min(self.dropout_time);
        let mut out = self.clone();
        for y in out.outcomes.iter_mut().skip(t - 1) {
            *y = None;
        }
        out.dropout_time = t;
        out
    }

    pub fn with_treatment(&self, treatment: bool) -> Self {
        Self {
            treatment,
            ..self.clone()
        }
    }

    pub fn with_covariates(&self, covariates: Vec<T>) -> Self {
        Self {
            covariates,
            ..self.clone()
        }
    }
}

/// A validated set of subjects sharing the covariate count `K` and timepoint count `J`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset<T> {
    subjects: Vec<Subject<T>>,
    n_covariates: usize,
    n_times: usize,
}

impl<T: Scalar> TrialDataset<T> {
    pub fn new(subjects: Vec<Subject<T>>) -> Result<Self, DataError> {
        let first = subjects.first().ok_or(DataError::NoSubjects)?;
        let k = first.covariates.len();
        let j = first.outcomes.len();
        for s in &subjects {
            if s.covariates.len() != k {
                return Err(DataError::DimensionMismatch {
                    subject: s.id,
                    expected: k,
                    found: s.covariates.len(),
                });
            }
            if s.outcomes.len() != j {
                return Err(DataError::DimensionMismatch {
                    subject: s.id,
                    expected: j,
                    found: s.outcomes.len(),
                });
            }
        }
        for arm in [false, true] {
            if !subjects.iter().any(|s| s.treatment == arm) {
                return Err(DataError::EmptyArm { arm: arm as u8 });
            }
        }
        Ok(Self {
            subjects,
            n_covariates: k,
            n_times: j,
        })
    }

    pub fn subjects(&self) -> &[Subject<T>] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// `K`
    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    /// `J`
    pub fn n_times(&self) -> usize {
        self.n_times
    }

    /// Applies `f` to every subject and revalidates.
    pub fn map_subjects(
        &self,
        f: impl FnMut(&Subject<T>) -> Subject<T>,
    ) -> Result<Self, DataError> {
        Self::new(self.subjects.iter().map(f).collect())
    }

    /// Keeps only the first `j` timepoints.
    pub fn truncate_times(&self, j: usize) -> Result<Self, DataError> {
        let j = j.min(self.n_times);
        self.map_subjects(|s| {
            let outcomes = s.outcomes[..j].to_vec();
            Subject::new(s.id, s.covariates.clone(), s.treatment, outcomes)
                .expect("prefix of monotone outcomes is monotone")
        })
    }

    /// Complete cases at the final timepoint, reduced to that single outcome.
    /// This is the dataset complete-case ANCOVA sees.
    pub fn final_time_complete_cases(&self) -> Result<Self, DataError> {
        let j = self.n_times;
        let subjects: Vec<_> = self
            .subjects
            .iter()
            .filter(|s| s.dropout_time > j)
            .map(|s| {
                Subject::new(
                    s.id,
                    s.covariates.clone(),
                    s.treatment,
                    vec![s.outcomes[j - 1]],
                )
                .expect("single observed outcome")
            })
            .collect();
        Self::new(subjects)
    }

    /// Builds a dataset from long-format rows. Rows may come in any order; a
    /// timepoint without a row is treated as missing. `J` is the largest time seen
    /// unless `n_times` is given.
    pub fn from_long_records(
        records: &[LongRecord<T>],
        n_times: Option<usize>,
    ) -> Result<Self, DataError> {
        let j = match n_times {
            Some(j) => j,
            None => records.iter().map(|r| r.time).max().ok_or(DataError::NoSubjects)?,
        };
        struct Acc<T> {
            treatment: bool,
            covariates: Vec<T>,
            outcomes: Vec<Option<T>>,
            seen: Vec<bool>,
        }
        let mut by_id: BTreeMap<u64, Acc<T>> = BTreeMap::new();
        for r in records {
            if r.time == 0 || r.time > j {
                return Err(DataError::TimeOutOfRange {
                    subject: r.subject_id,
                    time: r.time,
                    max: j,
                });
            }
            let acc = by_id.entry(r.subject_id).or_insert_with(|| Acc {
                treatment: r.treatment,
                covariates: r.covariates.clone(),
                outcomes: vec![None; j],
                seen: vec![false; j],
            });
            if acc.treatment != r.treatment || acc.covariates != r.covariates {
                return Err(DataError::InconsistentBaseline {
                    subject: r.subject_id,
                });
            }
            if acc.seen[r.time - 1] {
                return Err(DataError::DuplicateTime {
                    subject: r.subject_id,
                    time: r.time,
                });
            }
            acc.seen[r.time - 1] = true;
            acc.outcomes[r.time - 1] = r.outcome;
        }
        let subjects = by_id
            .into_iter()
            .map(|(id, acc)| Subject::new(id, acc.covariates, acc.treatment, acc.outcomes))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(subjects)
    }

    /// One row per subject and timepoint, missing outcomes included as `None`.
    pub fn to_long_records(&self) -> Vec<LongRecord<T>> {
        self.subjects
            .iter()
            .flat_map(|s| {
                s.outcomes.iter().enumerate().map(move |(t, y)| LongRecord {
                    subject_id: s.id,
                    treatment: s.treatment,
                    covariates: s.covariates.clone(),
                    time: t + 1,
                    outcome: *y,
                })
            })
            .collect()
    }

    /// Reads the long-format CSV `subject_id,treatment,x1,...,xK,time,y`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let n = names.len();
        if n < 4
            || names[0] != "subject_id"
            || names[1] != "treatment"
            || names[n - 2] != "time"
            || names[n - 1] != "y"
        {
            return Err(DataError::Csv(format!(
                "expected header subject_id,treatment,x1,...,xK,time,y; found {}",
                names.join(",")
            )));
        }
        let k = n - 4;
        let mut records = Vec::new();
        for (line, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| DataError::Csv(e.to_string()))?;
            let at = |msg: &str, field: &str| {
                DataError::Csv(format!("data row {}: {msg} in `{field}`", line + 1))
            };
            let parse_real = |idx: usize| -> Result<T, DataError> {
                row[idx]
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|_| at("invalid number", &names[idx].to_string()))
            };
            let subject_id = row[0]
                .parse::<u64>()
                .map_err(|_| at("invalid integer", "subject_id"))?;
            let treatment = match &row[1] {
                "0" => false,
                "1" => true,
                _ => return Err(at("treatment must be 0 or 1", "treatment")),
            };
            let covariates = (0..k).map(|c| parse_real(2 + c)).collect::<Result<_, _>>()?;
            let time = row[n - 2]
                .parse::<usize>()
                .map_err(|_| at("invalid integer", "time"))?;
            let outcome = if row[n - 1].is_empty() {
                None
            } else {
                Some(parse_real(n - 1)?)
            };
            records.push(LongRecord {
                subject_id,
                treatment,
                covariates,
                time,
                outcome,
            });
        }
        Self::from_long_records(&records, None)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let err = |e: csv::Error| DataError::Csv(e.to_string());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["subject_id".to_string(), "treatment".to_string()];
        header.extend((1..=self.n_covariates).map(|k| format!("x{k}")));
        header.extend(["time".to_string(), "y".to_string()]);
        w.write_record(&header).map_err(err)?;
        for r in self.to_long_records() {
            let mut row = vec![r.subject_id.to_string(), (r.treatment as u8).to_string()];
            row.extend(r.covariates.iter().map(|x| x.to_string()));
            row.push(r.time.to_string());
            row.push(r.outcome.map(|y| y.to_string()).unwrap_or_default());
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| DataError::Csv(e.to_string()))
    }

    /// Arm fractions `(π̂₀, π̂₁)` over all subjects.
    pub fn arm_fractions(&self) -> (T, T) {
        let n1 = self.subjects.iter().filter(|s| s.treatment).count();
        let n = T::lit(self.len() as f64);
        let p1 = T::lit(n1 as f64) / n;
        (T::one() - p1, p1)
    }

    /// Grand mean of each covariate over all subjects.
    pub fn covariate_means(&self) -> Vec<T> {
        let n = T::lit(self.len() as f64);
        (0..self.n_covariates)
            .map(|k| self.subjects.iter().map(|s| s.covariates[k]).sum::<T>() / n)
            .collect()
    }
}

/// One long-format row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRecord<T> {
    pub subject_id: u64,
    pub treatment: bool,
    pub covariates: Vec<T>,
    /// 1-based timepoint.
    pub time: usize,
    pub outcome: Option<T>,
}

/// `D_ij = 1` iff subject `i` was last observed at time `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutIndicators {
    n_times: usize,
    d: Vec<u8>,
    no_outcomes: Vec<bool>,
}

impl DropoutIndicators {
    /// Row `i` of the n×J indicator matrix (0-based time index).
    pub fn row(&self, i: usize) -> &[u8] {
        &self.d[i * self.n_times..(i + 1) * self.n_times]
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.d[i * self.n_times + j]
    }

    /// Whether subject `i` has no observed outcome.
    pub fn no_outcomes(&self, i: usize) -> bool {
        self.no_outcomes[i]
    }

    pub fn n_subjects(&self) -> usize {
        self.no_outcomes.len()
    }
}

pub fn dropout_indicators<T: Scalar>(ds: &TrialDataset<T>) -> DropoutIndicators {
    let j = ds.n_times();
    let mut d = vec![0u8; ds.len() * j];
    let mut no_outcomes = vec![false; ds.len()];
    for (i, s) in ds.subjects().iter().enumerate() {
        match s.n_observed() {
            0 => no_outcomes[i] = true,
            m => d[i * j + m - 1] = 1,
        }
    }
    DropoutIndicators {
        n_times: j,
        d,
        no_outcomes,
    }
}

/// `C_{jj'}`: subjects observed at both times `j` and `j'`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSets {
    n_times: usize,
    sets: Vec<Vec<usize>>,
}

impl OverlapSets {
    /// Subject indices observed at 0-based times `a` and `b`.
    pub fn get(&self, a: usize, b: usize) -> &[usize] {
        &self.sets[a * self.n_times + b]
    }

    /// Pairs `(a, b)` with `a <= b` whose overlap set is empty.
    pub fn empty_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n_times)
            .flat_map(|a| (a..self.n_times).map(move |b| (a, b)))
            .filter(|&(a, b)| self.get(a, b).is_empty())
            .collect()
    }
}

pub fn overlap_sets<T: Scalar>(ds: &TrialDataset<T>) -> OverlapSets {
    let j = ds.n_times();
    let mut sets = vec![Vec::new(); j * j];
    for a in 0..j {
        for b in 0..j {
            let need = a.max(b);
            sets[a * j + b] = ds
                .subjects()
                .iter()
                .enumerate()
                .filter(|(_, s)| s.n_observed() > need)
                .map(|(i, _)| i)
                .collect();
        }
    }
    OverlapSets { n_times: j, sets }
}

/// Which of the three treatment-effect estimators to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Complete-case regression of the final outcome on covariates and treatment.
    Ancova,
    /// Repeated-measures model with covariate effects shared across time.
    Mmrm,
    /// Repeated-measures model with timepoint-specific covariate effects.
    MmrmInteract,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Ancova, Variant::Mmrm, Variant::MmrmInteract];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ancova => "ancova",
            Variant::Mmrm => "mmrm",
            Variant::MmrmInteract => "mmrmx",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

/// Positions of the α, β and τ blocks in the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub variant: Variant,
    /// Number of modelled timepoints (1 for ANCOVA).
    pub n_times: usize,
    pub n_covariates: usize,
}

impl ParamLayout {
    /// Layout for a dataset with `n_times` timepoints; ANCOVA always models one.
    pub fn new(variant: Variant, n_times: usize, n_covariates: usize) -> Self {
        let n_times = if variant == Variant::Ancova { 1 } else { n_times };
        Self {
            variant,
            n_times,
            n_covariates,
        }
    }

    fn beta_blocks(&self) -> usize {
        match self.variant {
            Variant::MmrmInteract => self.n_times,
            _ => 1,
        }
    }

    pub fn len(&self) -> usize {
        2 * self.n_times + self.beta_blocks() * self.n_covariates
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn alpha(&self, t: usize) -> usize {
        t
    }

    /// Index of coefficient `k` in the covariate block used at time `t`.
    pub fn beta(&self, t: usize, k: usize) -> usize {
        let block = if self.beta_blocks() == 1 { 0 } else { t };
        self.n_times + block * self.n_covariates + k
    }

    pub fn tau(&self, t: usize) -> usize {
        self.n_times + self.beta_blocks() * self.n_covariates + t
    }

    /// Index of the final-timepoint treatment effect.
    pub fn tau_last(&self) -> usize {
        self.tau(self.n_times - 1)
    }

    /// Model mean `α_t + Xᵀβ(_t) + Wτ_t` for parameter vector `theta`.
    pub fn mean<T: Scalar>(&self, theta: &[T], x: &[T], w: T, t: usize) -> T {
        let xb: T = x
            .iter()
            .enumerate()
            .map(|(k, &xk)| xk * theta[self.beta(t, k)])
            .sum();
        theta[self.alpha(t)] + xb + w * theta[self.tau(t)]
    }
}

/// Per-subject `Zᵢᵀ`: one row per modelled timepoint, one column per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    rows: Matrix<T>,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn n_times(&self) -> usize {
        self.rows.rows()
    }

    pub fn n_params(&self) -> usize {
        self.rows.cols()
    }

    /// Row for 0-based time `t`.
    pub fn row(&self, t: usize) -> &[T] {
        self.rows.row(t)
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.rows
    }

    fn build(layout: &ParamLayout, x: &[T], w: T) -> Self {
        let mut rows = Matrix::zeros(layout.n_times, layout.len());
        for t in 0..layout.n_times {
            rows[(t, layout.alpha(t))] = T::one();
            for (k, &xk) in x.iter().enumerate() {
                rows[(t, layout.beta(t, k))] = xk;
            }
            rows[(t, layout.tau(t))] = w;
        }
        Self { rows }
    }
}

/// Builds `Zᵢ` for every subject. With `centering`, covariates are shifted by
/// their grand mean over the dataset.
///
/// For [`Variant::Ancova`] each matrix has a single row; callers pair it with
/// the final-timepoint outcome.
pub fn design_matrix<T: Scalar>(
    ds: &TrialDataset<T>,
    variant: Variant,
    centering: bool,
) -> Vec<DesignMatrix<T>> {
    let layout = ParamLayout::new(variant, ds.n_times(), ds.n_covariates());
    let shift = if centering {
        ds.covariate_means()
    } else {
        vec![T::zero(); ds.n_covariates()]
    };
    ds.subjects()
        .iter()
        .map(|s| {
            let x: Vec<T> = s.covariates.iter().zip(&shift).map(|(&a, &m)| a - m).collect();
            DesignMatrix::build(&layout, &x, s.treatment_value())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, w: bool, x: f64, time: usize, y: Option<f64>) -> LongRecord<f64> {
        LongRecord {
            subject_id: id,
            treatment: w,
            covariates: vec![x],
            time,
            outcome: y,
        }
    }

    #[test]
    fn fully_observed_dropout_time() {
        let recs = vec![
            rec(1, false, 0.1, 1, Some(1.0)),
            rec(1, false, 0.1, 2, Some(2.0)),
            rec(2, true, 0.2, 2, Some(2.5)),
            rec(2, true, 0.2, 1, Some(1.5)),
        ];
        let ds = TrialDataset::from_long_records(&recs, None).unwrap();
        assert_eq!(ds.n_times(), 2);
        assert!(ds.subjects().iter().all(|s| s.dropout_time() == 3));
    }

    #[test]
    fn dropout_after_first_time() {
        let recs = vec![
            rec(1, false, 0.1, 1, Some(0.5)),
            rec(1, false, 0.1, 2, None),
            rec(2, true, 0.2, 1, Some(1.0)),
            rec(2, true, 0.2, 2, Some(1.0)),
        ];
        let ds = TrialDataset::from_long_records(&recs, None).unwrap();
        assert_eq!(ds.subjects()[0].dropout_time(), 2);
    }

    #[test]
    fn non_monotone_rejected() {
        let recs = vec![
            rec(1, false, 0.1, 1, None),
            rec(1, false, 0.1, 2, Some(1.0)),
            rec(2, true, 0.2, 1, Some(1.0)),
            rec(2, true, 0.2, 2, Some(1.0)),
        ];
        assert_eq!(
            TrialDataset::from_long_records(&recs, None).unwrap_err(),
            DataError::NonMonotoneMissingness { subject: 1, time: 2 }
        );
    }

    #[test]
    fn inconsistent_baseline_and_empty_arm() {
        let recs = vec![rec(1, false, 0.1, 1, Some(1.0)), rec(1, false, 0.3, 2, Some(1.0))];
        assert_eq!(
            TrialDataset::from_long_records(&recs, None).unwrap_err(),
            DataError::InconsistentBaseline { subject: 1 }
        );
        let recs = vec![rec(1, false, 0.1, 1, Some(1.0)), rec(2, false, 0.3, 1, Some(1.0))];
        assert_eq!(
            TrialDataset::from_long_records(&recs, None).unwrap_err(),
            DataError::EmptyArm { arm: 1 }
        );
    }

    fn subject(id: u64, w: bool, x: Vec<f64>, ys: &[Option<f64>]) -> Subject<f64> {
        Subject::new(id, x, w, ys.to_vec()).unwrap()
    }

    #[test]
    fn indicator_rows() {
        let ds = TrialDataset::new(vec![
            subject(1, false, vec![0.0], &[Some(1.0), Some(1.0), Some(1.0)]),
            subject(2, true, vec![0.0], &[Some(1.0), None, None]),
            subject(3, true, vec![0.0], &[None, None, None]),
        ])
        .unwrap();
        let d = dropout_indicators(&ds);
        assert_eq!(d.row(0), &[0, 0, 1]);
        assert_eq!(d.row(1), &[1, 0, 0]);
        assert_eq!(d.row(2), &[0, 0, 0]);
        assert!(d.no_outcomes(2) && !d.no_outcomes(0));
    }

    #[test]
    fn overlap_counts() {
        let mut subs: Vec<_> = (0..4)
            .map(|i| subject(i, i % 2 == 0, vec![0.0], &[Some(1.0), Some(2.0)]))
            .collect();
        subs.push(subject(4, true, vec![0.0], &[Some(1.0), None]));
        let ds = TrialDataset::new(subs).unwrap();
        let c = overlap_sets(&ds);
        assert_eq!(c.get(0, 1).len(), 4);
        assert_eq!(c.get(1, 0).len(), 4);
        assert_eq!(c.get(0, 0).len(), 5);
        assert!(c.empty_pairs().is_empty());

        let ds = TrialDataset::new(vec![
            subject(1, false, vec![0.0], &[Some(1.0), None]),
            subject(2, true, vec![0.0], &[Some(1.0), None]),
        ])
        .unwrap();
        assert_eq!(overlap_sets(&ds).empty_pairs(), vec![(0, 1), (1, 1)]);
    }

    #[test]
    fn design_layouts() {
        let ds = TrialDataset::new(vec![
            subject(1, true, vec![0.3], &[Some(1.0), Some(1.0)]),
            subject(2, false, vec![0.3], &[Some(1.0), Some(1.0)]),
        ])
        .unwrap();
        let z = design_matrix(&ds, Variant::Mmrm, false);
        assert_eq!(z[0].row(0), &[1.0, 0.0, 0.3, 1.0, 0.0]);
        assert_eq!(z[0].row(1), &[0.0, 1.0, 0.3, 0.0, 1.0]);
        let z = design_matrix(&ds, Variant::MmrmInteract, false);
        assert_eq!(z[0].row(0), &[1.0, 0.0, 0.3, 0.0, 1.0, 0.0]);
        assert_eq!(z[0].row(1), &[0.0, 1.0, 0.0, 0.3, 0.0, 1.0]);
        let z = design_matrix(&ds, Variant::Ancova, false);
        assert_eq!(z[1].n_times(), 1);
        assert_eq!(z[1].row(0), &[1.0, 0.3, 0.0]);
    }

    #[test]
    fn column_counts() {
        for (v, j, k, p) in [
            (Variant::Mmrm, 3, 2, 8),
            (Variant::MmrmInteract, 3, 2, 12),
            (Variant::Ancova, 3, 2, 4),
        ] {
            assert_eq!(ParamLayout::new(v, j, k).len(), p);
        }
    }

    #[test]
    fn csv_missing_outcome_is_empty_field() {
        let csv = "subject_id,treatment,x1,time,y\n1,0,0.5,1,2.0\n1,0,0.5,2,\n2,1,-0.5,1,1.0\n2,1,-0.5,2,3.0\n";
        let ds = TrialDataset::<f64>::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(ds.subjects()[0].dropout_time(), 2);
        let mut out = Vec::new();
        ds.write_csv(&mut out).unwrap();
        let back = TrialDataset::<f64>::read_csv(out.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_bad_header() {
        let csv = "id,treatment,x1,time,y\n";
        assert!(matches!(
            TrialDataset::<f64>::read_csv(csv.as_bytes()),
            Err(DataError::Csv(_))
        ));
    }
}
