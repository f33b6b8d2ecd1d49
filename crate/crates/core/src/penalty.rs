//! Per-edge penalty tables for the hierarchy term of the HBCE loss.
//!
//! A [`PenaltyTable`] maps each taxonomy edge `(parent, child)` to a
//! non-negative magnitude. Tables come from one of two strategies:
//!
//! * fixed: every edge gets the same constant β;
//! * data driven: each edge gets a Laplace-smoothed estimate of
//!   `P(child = 1 | parent = 0)` from observed label rows, so edges whose
//!   child-without-parent pattern actually occurs in the data carry larger
//!   magnitudes than edges where it never does.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::taxonomy::Taxonomy;

#[derive(Debug, Error, PartialEq)]
pub enum PenaltyError {
    #[error("label matrix row {row} has {got} entries, expected {expected}")]
    RowLengthMismatch {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("label matrix entries must be 0 or 1, got {value} at row {row}")]
    NonBinaryEntry { row: usize, value: u8 },
    #[error("label matrix has {got} columns but the taxonomy has {expected} labels")]
    ColumnCountMismatch { expected: usize, got: usize },
    #[error("smoothing epsilon must be non-negative, got {0}")]
    InvalidEpsilon(f64),
    #[error("no evidence for edge ({parent}, {child}) and epsilon is zero")]
    NoEvidence { parent: usize, child: usize },
    #[error("data-driven penalties require a label matrix")]
    MissingLabels,
    #[error("penalty for edge ({parent}, {child}) must be finite and non-negative, got {value}")]
    InvalidPenalty {
        parent: usize,
        child: usize,
        value: f64,
    },
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("csv is missing edge ({parent}, {child}) declared by the taxonomy")]
    MissingEdge { parent: usize, child: usize },
}

/// A dense matrix of binary labels, one row per sample, one column per
/// taxonomy label (in taxonomy index order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl LabelMatrix {
    pub fn from_rows(rows: Vec<Vec<u8>>, cols: usize) -> Result<Self, PenaltyError> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        let n_rows = rows.len();
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != cols {
                return Err(PenaltyError::RowLengthMismatch {
                    row: r,
                    expected: cols,
                    got: row.len(),
                });
            }
            for &v in &row {
                if v > 1 {
                    return Err(PenaltyError::NonBinaryEntry { row: r, value: v });
                }
            }
            data.extend_from_slice(&row);
        }
        Ok(LabelMatrix {
            rows: n_rows,
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

/// How to populate a [`PenaltyTable`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyStrategy {
    /// Every edge gets the constant `beta`.
    Fixed { beta: f64 },
    /// Each edge gets `(N[parent=0, child=1] + eps) / (N[parent=0] + 2 eps)`.
    DataDriven { epsilon: f64 },
}

impl PenaltyStrategy {
    /// Builds the table; `labels` is required for the data-driven strategy
    /// and ignored by the fixed one.
    pub fn build(
        &self,
        taxonomy: &Taxonomy,
        labels: Option<&LabelMatrix>,
    ) -> Result<PenaltyTable, PenaltyError> {
        match *self {
            PenaltyStrategy::Fixed { beta } => fixed_penalties(taxonomy, beta),
            PenaltyStrategy::DataDriven { epsilon } => {
                let labels = labels.ok_or(PenaltyError::MissingLabels)?;
                estimate_data_driven(taxonomy, labels, epsilon)
            }
        }
    }
}

/// Non-negative penalty magnitudes keyed by `(parent, child)` label index.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTable {
    values: BTreeMap<(usize, usize), f64>,
}

impl PenaltyTable {
    pub fn new(entries: Vec<((usize, usize), f64)>) -> Result<Self, PenaltyError> {
        let mut values = BTreeMap::new();
        for ((parent, child), value) in entries {
            if !value.is_finite() || value < 0.0 {
                return Err(PenaltyError::InvalidPenalty {
                    parent,
                    child,
                    value,
                });
            }
            values.insert((parent, child), value);
        }
        Ok(PenaltyTable { values })
    }

    pub fn get(&self, parent: usize, child: usize) -> Option<f64> {
        self.values.get(&(parent, child)).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Entries in `(parent, child)` index order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.values.iter().map(|(&k, &v)| (k, v))
    }

    /// Serializes as `parent,child,penalty` CSV with names from `taxonomy`
    /// and six decimal places, rows in taxonomy edge order.
    pub fn to_csv(&self, taxonomy: &Taxonomy) -> String {
        let mut out = String::from("parent,child,penalty\n");
        for &(p, c) in taxonomy.edges() {
            if let Some(v) = self.get(p, c) {
                let _ = writeln!(out, "{},{},{:.6}", taxonomy.name(p), taxonomy.name(c), v);
            }
        }
        // entries for edges unknown to the taxonomy are unreachable through
        // the public constructors used by the CLI, but keep them printable
        for (&(p, c), &v) in &self.values {
            if !taxonomy.has_edge(p, c) {
                let _ = writeln!(out, "{},{},{:.6}", taxonomy.name(p), taxonomy.name(c), v);
            }
        }
        out
    }

    /// Parses the CSV produced by [`PenaltyTable::to_csv`]. Every taxonomy
    /// edge must be present exactly once; unknown labels, unknown edges,
    /// duplicates, and malformed numbers are errors.
    pub fn from_csv(text: &str, taxonomy: &Taxonomy) -> Result<Self, PenaltyError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "parent,child,penalty" => {}
            other => {
                return Err(PenaltyError::Csv {
                    line: other.map_or(1, |(i, _)| i + 1),
                    msg: "expected header `parent,child,penalty`".into(),
                })
            }
        }
        let mut values = BTreeMap::new();
        for (i, raw) in lines {
            let line = i + 1;
            let row = raw.trim();
            if row.is_empty() {
                continue;
            }
            let parts: Vec<&str> = row.split(',').collect();
            if parts.len() != 3 {
                return Err(PenaltyError::Csv {
                    line,
                    msg: format!("expected 3 fields, got {}", parts.len()),
                });
            }
            let parent = taxonomy
                .index_of(parts[0])
                .ok_or_else(|| PenaltyError::Csv {
                    line,
                    msg: format!("unknown label {:?}", parts[0]),
                })?;
            let child = taxonomy
                .index_of(parts[1])
                .ok_or_else(|| PenaltyError::Csv {
                    line,
                    msg: format!("unknown label {:?}", parts[1]),
                })?;
            if !taxonomy.has_edge(parent, child) {
                return Err(PenaltyError::Csv {
                    line,
                    msg: format!("({:?}, {:?}) is not a taxonomy edge", parts[0], parts[1]),
                });
            }
            let value: f64 = parts[2].trim().parse().map_err(|_| PenaltyError::Csv {
                line,
                msg: format!("malformed penalty {:?}", parts[2]),
            })?;
            if !value.is_finite() || value < 0.0 {
                return Err(PenaltyError::InvalidPenalty {
                    parent,
                    child,
                    value,
                });
            }
            if values.insert((parent, child), value).is_some() {
                return Err(PenaltyError::Csv {
                    line,
                    msg: format!("duplicate edge ({:?}, {:?})", parts[0], parts[1]),
                });
            }
        }
        for &(p, c) in taxonomy.edges() {
            if !values.contains_key(&(p, c)) {
                return Err(PenaltyError::MissingEdge {
                    parent: p,
                    child: c,
                });
            }
        }
        Ok(PenaltyTable { values })
    }
}

/// The constant-β table over all taxonomy edges.
pub fn fixed_penalties(taxonomy: &Taxonomy, beta: f64) -> Result<PenaltyTable, PenaltyError> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(PenaltyError::InvalidPenalty {
            parent: 0,
            child: 0,
            value: beta,
        });
    }
    let values = taxonomy.edges().iter().map(|&e| (e, beta)).collect();
    Ok(PenaltyTable { values })
}

/// Laplace-smoothed `P(child = 1 | parent = 0)` per edge:
/// `(N[parent=0, child=1] + eps) / (N[parent=0] + 2 eps)`.
///
/// With `eps > 0` the estimate is defined even when the parent is never
/// negative (it degrades to 1/2, total ignorance). With `eps = 0` such an
/// edge has no evidence at all and estimation fails.
pub fn estimate_data_driven(
    taxonomy: &Taxonomy,
    labels: &LabelMatrix,
    epsilon: f64,
) -> Result<PenaltyTable, PenaltyError> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(PenaltyError::InvalidEpsilon(epsilon));
    }
    if labels.cols() != taxonomy.len() {
        return Err(PenaltyError::ColumnCountMismatch {
            expected: taxonomy.len(),
            got: labels.cols(),
        });
    }
    let mut values = BTreeMap::new();
    for &(p, c) in taxonomy.edges() {
        let mut parent_neg = 0u64;
        let mut parent_neg_child_pos = 0u64;
        for r in 0..labels.rows() {
            if labels.get(r, p) == 0 {
                parent_neg += 1;
                if labels.get(r, c) == 1 {
                    parent_neg_child_pos += 1;
                }
            }
        }
        let denom = parent_neg as f64 + 2.0 * epsilon;
        if denom == 0.0 {
            return Err(PenaltyError::NoEvidence {
                parent: p,
                child: c,
            });
        }
        values.insert((p, c), (parent_neg_child_pos as f64 + epsilon) / denom);
    }
    Ok(PenaltyTable { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level() -> Taxonomy {
        Taxonomy::new(vec!["P", "A", "B"], vec![(0, 1), (0, 2)]).unwrap()
    }

    #[test]
    fn fixed_covers_every_edge() {
        let t = two_level();
        let table = fixed_penalties(&t, 1.0).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.get(0, 1), Some(1.0));
        assert_eq!(table.get(0, 2), Some(1.0));
        assert_eq!(table.get(1, 2), None);
    }

    #[test]
    fn fixed_rejects_negative_beta() {
        let t = two_level();
        assert!(fixed_penalties(&t, -0.5).is_err());
        assert!(fixed_penalties(&t, f64::NAN).is_err());
    }

    #[test]
    fn data_driven_hand_example() {
        // 12 samples over P > A: parent negative in 10, child positive in 2
        // of those; with eps = 1 the estimate is (2 + 1) / (10 + 2) = 0.25.
        let t = Taxonomy::new(vec!["P", "A"], vec![(0, 1)]).unwrap();
        let mut rows = Vec::new();
        for i in 0..10 {
            rows.push(vec![0, u8::from(i < 2)]);
        }
        rows.push(vec![1, 0]);
        rows.push(vec![1, 1]);
        let labels = LabelMatrix::from_rows(rows, 2).unwrap();
        let table = estimate_data_driven(&t, &labels, 1.0).unwrap();
        assert_eq!(table.get(0, 1), Some(0.25));
    }

    #[test]
    fn data_driven_no_negative_parents_degrades_to_half() {
        let t = Taxonomy::new(vec!["P", "A"], vec![(0, 1)]).unwrap();
        let labels = LabelMatrix::from_rows(vec![vec![1, 0], vec![1, 1]], 2).unwrap();
        let table = estimate_data_driven(&t, &labels, 1.0).unwrap();
        assert_eq!(table.get(0, 1), Some(0.5));
    }

    #[test]
    fn data_driven_zero_epsilon_without_evidence_errors() {
        let t = Taxonomy::new(vec!["P", "A"], vec![(0, 1)]).unwrap();
        let labels = LabelMatrix::from_rows(vec![vec![1, 0]], 2).unwrap();
        assert_eq!(
            estimate_data_driven(&t, &labels, 0.0).unwrap_err(),
            PenaltyError::NoEvidence {
                parent: 0,
                child: 1
            }
        );
    }

    #[test]
    fn data_driven_unsmoothed_matches_raw_fraction() {
        let t = Taxonomy::new(vec!["P", "A"], vec![(0, 1)]).unwrap();
        let labels = LabelMatrix::from_rows(
            vec![vec![0, 1], vec![0, 0], vec![0, 0], vec![0, 0]],
            2,
        )
        .unwrap();
        let table = estimate_data_driven(&t, &labels, 0.0).unwrap();
        assert_eq!(table.get(0, 1), Some(0.25));
    }

    #[test]
    fn column_count_must_match_taxonomy() {
        let t = two_level();
        let labels = LabelMatrix::from_rows(vec![vec![0, 1]], 2).unwrap();
        assert_eq!(
            estimate_data_driven(&t, &labels, 1.0).unwrap_err(),
            PenaltyError::ColumnCountMismatch {
                expected: 3,
                got: 2
            }
        );
    }

    #[test]
    fn matrix_rejects_non_binary_and_ragged_rows() {
        assert_eq!(
            LabelMatrix::from_rows(vec![vec![0, 2]], 2).unwrap_err(),
            PenaltyError::NonBinaryEntry { row: 0, value: 2 }
        );
        assert_eq!(
            LabelMatrix::from_rows(vec![vec![0, 1], vec![0]], 2).unwrap_err(),
            PenaltyError::RowLengthMismatch {
                row: 1,
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn strategy_dispatch() {
        let t = two_level();
        let fixed = PenaltyStrategy::Fixed { beta: 0.7 }
            .build(&t, None)
            .unwrap();
        assert_eq!(fixed.get(0, 1), Some(0.7));
        assert_eq!(
            PenaltyStrategy::DataDriven { epsilon: 1.0 }
                .build(&t, None)
                .unwrap_err(),
            PenaltyError::MissingLabels
        );
    }

    #[test]
    fn csv_round_trip() {
        let t = two_level();
        let table = PenaltyTable::new(vec![((0, 1), 0.25), ((0, 2), 1.0)]).unwrap();
        let csv = table.to_csv(&t);
        assert_eq!(csv, "parent,child,penalty\nP,A,0.250000\nP,B,1.000000\n");
        let back = PenaltyTable::from_csv(&csv, &t).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn csv_rejects_unknown_labels_bad_numbers_and_gaps() {
        let t = two_level();
        let err = PenaltyTable::from_csv("parent,child,penalty\nP,Zed,1.0\n", &t).unwrap_err();
        assert!(matches!(err, PenaltyError::Csv { line: 2, .. }));

        let err = PenaltyTable::from_csv("parent,child,penalty\nP,A,oops\n", &t).unwrap_err();
        assert!(matches!(err, PenaltyError::Csv { line: 2, .. }));

        let err = PenaltyTable::from_csv("parent,child,penalty\nP,A,1.0\n", &t).unwrap_err();
        assert_eq!(
            err,
            PenaltyError::MissingEdge {
                parent: 0,
                child: 2
            }
        );

        let err = PenaltyTable::from_csv("parent,child,penalty\nA,B,1.0\n", &t).unwrap_err();
        assert!(matches!(err, PenaltyError::Csv { line: 2, .. }));

        let err = PenaltyTable::from_csv("nope\n", &t).unwrap_err();
        assert!(matches!(err, PenaltyError::Csv { line: 1, .. }));
    }

    #[test]
    fn table_rejects_negative_values() {
        assert!(PenaltyTable::new(vec![((0, 1), -1.0)]).is_err());
    }
}
