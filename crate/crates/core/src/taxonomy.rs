//! Label taxonomies: a flat label index plus a parent→child edge relation.
//!
//! The text format is line based, UTF-8, one statement per line:
//!
//! ```text
//! # comment
//! label <name>             — declares a label; indices follow declaration order
//! edge <parent> > <child>  — declares an edge between previously declared labels
//! ```
//!
//! Names may contain spaces (everything up to end of line). The literal
//! ` > ` separator is reserved and may not appear inside a name.
//!
//! Construction enforces referential integrity (valid endpoints, no
//! self-edges); acyclicity and single-parenthood are checked by
//! [`Taxonomy::validate`] so that broken inputs can be *reported* rather
//! than silently rejected.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

/// Name of the derived catch-all label. A label with this name is excluded
/// from the "original" label set that drives [`Taxonomy::derive_uncertain`].
pub const UNCERTAIN_LABEL: &str = "Uncertain";

/// Text of the shipped default taxonomy (six high-level categories, the
/// fourteen CheXpert labels, and "Uncertain").
pub const DEFAULT_TAXONOMY_TEXT: &str = include_str!("../../../taxonomy/default.tax");

/// Text of the compact taxonomy used by the synthetic desk-scale experiments.
pub const SYNTHETIC_TAXONOMY_TEXT: &str = include_str!("../../../taxonomy/synthetic.tax");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate label {name:?}")]
    DuplicateLabel { line: usize, name: String },
    #[error("line {line}: edge references undeclared label {name:?}")]
    UndeclaredLabel { line: usize, name: String },
    #[error("line {line}: self-edge on {name:?}")]
    SelfEdge { line: usize, name: String },
    #[error("invalid label name {name:?}: {reason}")]
    InvalidName { name: String, reason: String },
    #[error("edge ({parent}, {child}) out of range for {count} labels")]
    EdgeOutOfRange {
        parent: usize,
        child: usize,
        count: usize,
    },
    #[error("expected a row over {expected} original labels, got {got} entries")]
    RowLengthMismatch { expected: usize, got: usize },
    #[error("label rows must contain only 0 or 1, got {0}")]
    NonBinaryEntry(u8),
}

/// A named label with its position in the flat output vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Label {
    pub name: String,
    pub index: usize,
}

/// Ordered labels plus a parent→child edge relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    labels: Vec<Label>,
    edges: Vec<(usize, usize)>,
    by_name: HashMap<String, usize>,
}

/// One finding from [`Taxonomy::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationIssue {
    /// Labels forming a directed cycle (error).
    Cycle { members: Vec<usize> },
    /// A child with more than one parent (warning).
    MultiParent { child: usize, parents: Vec<usize> },
    /// A label with no incident edges at all (warning); typically either an
    /// intentionally standalone label or a parent whose edges were forgotten.
    Isolated { label: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

fn check_name(name: &str) -> Result<(), TaxonomyError> {
    if name.is_empty() {
        return Err(TaxonomyError::InvalidName {
            name: name.to_string(),
            reason: "empty".into(),
        });
    }
    if name.contains(" > ") {
        return Err(TaxonomyError::InvalidName {
            name: name.to_string(),
            reason: "contains the reserved ` > ` separator".into(),
        });
    }
    if name.contains('\n') || name.contains('\r') {
        return Err(TaxonomyError::InvalidName {
            name: name.to_string(),
            reason: "contains a line break".into(),
        });
    }
    if name.starts_with('#') {
        return Err(TaxonomyError::InvalidName {
            name: name.to_string(),
            reason: "starts with the comment character".into(),
        });
    }
    if name != name.trim() {
        return Err(TaxonomyError::InvalidName {
            name: name.to_string(),
            reason: "has leading or trailing whitespace".into(),
        });
    }
    Ok(())
}

impl Taxonomy {
    /// Builds a taxonomy from label names (declaration order = index order)
    /// and `(parent, child)` index pairs. Duplicate edges are collapsed.
    pub fn new<S: Into<String>>(
        names: Vec<S>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self, TaxonomyError> {
        let mut labels = Vec::with_capacity(names.len());
        let mut by_name = HashMap::new();
        for (index, name) in names.into_iter().enumerate() {
            let name = name.into();
            check_name(&name)?;
            if by_name.insert(name.clone(), index).is_some() {
                return Err(TaxonomyError::DuplicateLabel { line: 0, name });
            }
            labels.push(Label { name, index });
        }
        let count = labels.len();
        let mut seen = HashSet::new();
        let mut dedup = Vec::with_capacity(edges.len());
        for (p, c) in edges {
            if p >= count || c >= count {
                return Err(TaxonomyError::EdgeOutOfRange {
                    parent: p,
                    child: c,
                    count,
                });
            }
            if p == c {
                return Err(TaxonomyError::SelfEdge {
                    line: 0,
                    name: labels[p].name.clone(),
                });
            }
            if seen.insert((p, c)) {
                dedup.push((p, c));
            }
        }
        Ok(Taxonomy {
            labels,
            edges: dedup,
            by_name,
        })
    }

    /// Parses the line-based text format. Line numbers in errors are 1-based.
    pub fn parse(text: &str) -> Result<Self, TaxonomyError> {
        let mut names: Vec<String> = Vec::new();
        let mut by_name: HashMap<String, usize> = HashMap::new();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut seen_edges: HashSet<(usize, usize)> = HashSet::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stmt = raw.trim();
            if stmt.is_empty() || stmt.starts_with('#') {
                continue;
            }
            if let Some(rest) = stmt.strip_prefix("label ") {
                let name = rest.trim().to_string();
                check_name(&name).map_err(|e| TaxonomyError::Syntax {
                    line,
                    msg: e.to_string(),
                })?;
                if by_name.contains_key(&name) {
                    return Err(TaxonomyError::DuplicateLabel { line, name });
                }
                by_name.insert(name.clone(), names.len());
                names.push(name);
            } else if let Some(rest) = stmt.strip_prefix("edge ") {
                let Some((parent, child)) = rest.split_once(" > ") else {
                    return Err(TaxonomyError::Syntax {
                        line,
                        msg: "expected `edge <parent> > <child>`".into(),
                    });
                };
                let parent = parent.trim();
                let child = child.trim();
                let p = *by_name
                    .get(parent)
                    .ok_or_else(|| TaxonomyError::UndeclaredLabel {
                        line,
                        name: parent.to_string(),
                    })?;
                let c = *by_name
                    .get(child)
                    .ok_or_else(|| TaxonomyError::UndeclaredLabel {
                        line,
                        name: child.to_string(),
                    })?;
                if p == c {
                    return Err(TaxonomyError::SelfEdge {
                        line,
                        name: parent.to_string(),
                    });
                }
                if seen_edges.insert((p, c)) {
                    edges.push((p, c));
                }
            } else {
                return Err(TaxonomyError::Syntax {
                    line,
                    msg: format!("expected `label`, `edge`, or a `#` comment, got {stmt:?}"),
                });
            }
        }

        let labels = names
            .into_iter()
            .enumerate()
            .map(|(index, name)| Label { name, index })
            .collect();
        Ok(Taxonomy {
            labels,
            edges,
            by_name,
        })
    }

    /// Serializes back to the text format; `parse(to_text(t)) == t`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.labels {
            let _ = writeln!(out, "label {}", l.name);
        }
        for &(p, c) in &self.edges {
            let _ = writeln!(out, "edge {} > {}", self.labels[p].name, self.labels[c].name);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &Label {
        &self.labels[index]
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    /// Edges in declaration order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.edges.contains(&(parent, child))
    }

    pub fn parents_of(&self, child: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(_, c)| c == child)
            .map(|&(p, _)| p)
            .collect()
    }

    pub fn children_of(&self, parent: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(p, _)| p == parent)
            .map(|&(_, c)| c)
            .collect()
    }

    /// Index of the "Uncertain" label, if the taxonomy declares one.
    pub fn uncertain_index(&self) -> Option<usize> {
        self.index_of(UNCERTAIN_LABEL)
    }

    /// Indices of the original (non-derived) leaf labels: labels with no
    /// children that are not the "Uncertain" label. For the default taxonomy
    /// these are exactly the fourteen CheXpert labels.
    pub fn original_indices(&self) -> Vec<usize> {
        let has_children: HashSet<usize> = self.edges.iter().map(|&(p, _)| p).collect();
        let uncertain = self.uncertain_index();
        (0..self.labels.len())
            .filter(|i| !has_children.contains(i) && Some(*i) != uncertain)
            .collect()
    }

    /// The derived "Uncertain" flag: 1 iff every entry of `row` is 0, where
    /// `row` covers the original labels in index order.
    pub fn derive_uncertain(&self, row: &[u8]) -> Result<u8, TaxonomyError> {
        let expected = self.original_indices().len();
        if row.len() != expected {
            return Err(TaxonomyError::RowLengthMismatch {
                expected,
                got: row.len(),
            });
        }
        for &v in row {
            if v > 1 {
                return Err(TaxonomyError::NonBinaryEntry(v));
            }
        }
        Ok(if row.iter().all(|&v| v == 0) { 1 } else { 0 })
    }

    /// Labels with no parents (in-degree 0).
    pub fn roots(&self) -> Vec<usize> {
        let has_parent: HashSet<usize> = self.edges.iter().map(|&(_, c)| c).collect();
        (0..self.labels.len())
            .filter(|i| !has_parent.contains(i))
            .collect()
    }

    /// Topological order over the labels, or `None` if the edge relation is
    /// cyclic. Ties are broken by label index so the order is deterministic.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.labels.len();
        let mut in_degree = vec![0usize; n];
        for &(_, c) in &self.edges {
            in_degree[c] += 1;
        }
        // BTreeSet-like behaviour with a sorted queue: always pop the
        // smallest index first.
        let mut ready: VecDeque<usize> = (0..n).filter(|&i| in_degree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(node) = ready.pop_front() {
            order.push(node);
            for &(p, c) in &self.edges {
                if p == node {
                    in_degree[c] -= 1;
                    if in_degree[c] == 0 {
                        ready.push_back(c);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Checks structural health: cycles are errors; multi-parent children and
    /// labels with no incident edges are warnings.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.labels.len();

        // Kahn's algorithm; whatever it cannot consume sits on a cycle.
        let mut in_degree = vec![0usize; n];
        for &(_, c) in &self.edges {
            in_degree[c] += 1;
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| in_degree[i] == 0).collect();
        let mut alive = vec![true; n];
        while let Some(node) = queue.pop_front() {
            alive[node] = false;
            for &(p, c) in &self.edges {
                if p == node {
                    in_degree[c] -= 1;
                    if in_degree[c] == 0 {
                        queue.push_back(c);
                    }
                }
            }
        }
        // Extract one cycle per walk through the residual nodes.
        let mut visited = vec![false; n];
        for start in 0..n {
            if !alive[start] || visited[start] {
                continue;
            }
            let mut path = Vec::new();
            let mut on_path = vec![false; n];
            let mut node = start;
            loop {
                if visited[node] {
                    // ran into a previously reported cycle; this walk joins it
                    break;
                }
                if on_path[node] {
                    let pos = path.iter().position(|&x| x == node).unwrap();
                    let members: Vec<usize> = path[pos..].to_vec();
                    for &m in &path {
                        visited[m] = true;
                    }
                    report.errors.push(ValidationIssue::Cycle { members });
                    break;
                }
                on_path[node] = true;
                path.push(node);
                match self
                    .edges
                    .iter()
                    .find(|&&(p, c)| p == node && alive[c])
                    .map(|&(_, c)| c)
                {
                    Some(next) => node = next,
                    None => break,
                }
            }
            for &m in &path {
                visited[m] = true;
            }
        }

        for child in 0..n {
            let parents = self.parents_of(child);
            if parents.len() > 1 {
                report
                    .warnings
                    .push(ValidationIssue::MultiParent { child, parents });
            }
        }

        let mut touched = vec![false; n];
        for &(p, c) in &self.edges {
            touched[p] = true;
            touched[c] = true;
        }
        for (label, &t) in touched.iter().enumerate() {
            if !t {
                report.warnings.push(ValidationIssue::Isolated { label });
            }
        }

        report
    }
}

/// The shipped default taxonomy (21 labels).
pub fn default_taxonomy() -> Taxonomy {
    Taxonomy::parse(DEFAULT_TAXONOMY_TEXT).expect("shipped default taxonomy parses")
}

/// The compact taxonomy used for synthetic desk-scale experiments (7 labels).
pub fn synthetic_taxonomy() -> Taxonomy {
    Taxonomy::parse(SYNTHETIC_TAXONOMY_TEXT).expect("shipped synthetic taxonomy parses")
}
