//! Localization patterns for degree-`q` maps and the combinatorics built on
//! them: children in the bottom-pivot poset, root counting, and Pieri trees.
//!
//! Row indices in this module are 1-based rows of the concatenated layout,
//! where the coefficients of `s^k` sit in rows `k(m+p)+1 ..= (k+1)(m+p)`.
//! Top pivots are fixed to `1..=p`.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatternError {
    #[error("m and p must be at least 1 (got m={m}, p={p})")]
    InvalidSizes { m: usize, p: usize },
    #[error("expected {expected} bottom pivots, found {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("bottom pivot {pivot} of column {column} outside rows {top}..={height}")]
    OutOfColumn {
        column: usize,
        pivot: usize,
        top: usize,
        height: usize,
    },
    #[error("bottom pivots {pivots:?} are not strictly increasing")]
    NotIncreasing { pivots: Vec<usize> },
    #[error("bottom pivots {pivots:?} spread over {spread} >= m+p = {limit} rows")]
    SpreadTooLarge {
        pivots: Vec<usize>,
        spread: usize,
        limit: usize,
    },
}

fn check_sizes(m: usize, p: usize) -> Result<(), PatternError> {
    if m == 0 || p == 0 {
        return Err(PatternError::InvalidSizes { m, p });
    }
    Ok(())
}

/// Column heights of the concatenated layout: with `q = d p + r`, the
/// first `p - r` columns hold `(d+1)(m+p)` rows and the others `(d+2)(m+p)`.
pub fn column_heights(m: usize, p: usize, q: usize) -> Vec<usize> {
    let n = m + p;
    let (d, r) = (q / p, q % p);
    (0..p)
        .map(|j| if j < p - r { (d + 1) * n } else { (d + 2) * n })
        .collect()
}

/// Number of intersection conditions `mp + q(m+p)`.
pub fn condition_count(m: usize, p: usize, q: usize) -> usize {
    m * p + q * (m + p)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocalizationPattern {
    m: usize,
    p: usize,
    q: usize,
    bottom: Vec<usize>,
}

impl LocalizationPattern {
    pub fn new(m: usize, p: usize, q: usize, bottom: Vec<usize>) -> Result<Self, PatternError> {
        check_sizes(m, p)?;
        let pattern = Self { m, p, q, bottom };
        pattern.validate()?;
        Ok(pattern)
    }

    /// One star per column, on the top pivot.
    pub fn trivial(m: usize, p: usize, q: usize) -> Result<Self, PatternError> {
        Self::new(m, p, q, (1..=p).collect())
    }

    /// The pattern of general degree-`q` maps, root of the counting poset.
    pub fn target(m: usize, p: usize, q: usize) -> Result<Self, PatternError> {
        check_sizes(m, p)?;
        let n = m + p;
        let (d, r) = (q / p, q % p);
        let first = (d * n + m + r + 1..=d * n + n).collect::<Vec<_>>();
        let second = ((d + 1) * n + m + 1..=(d + 1) * n + m + r).collect::<Vec<_>>();
        Self::new(m, p, q, first.into_iter().chain(second).collect())
    }

    fn validate(&self) -> Result<(), PatternError> {
        if self.bottom.len() != self.p {
            return Err(PatternError::WrongLength {
                expected: self.p,
                found: self.bottom.len(),
            });
        }
        for (j, (&b, h)) in self.bottom.iter().zip(self.heights()).enumerate() {
            if b < j + 1 || b > h {
                return Err(PatternError::OutOfColumn {
                    column: j + 1,
                    pivot: b,
                    top: j + 1,
                    height: h,
                });
            }
        }
        if self.bottom.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PatternError::NotIncreasing {
                pivots: self.bottom.clone(),
            });
        }
        let spread = self.bottom[self.p - 1] - self.bottom[0];
        if spread >= self.m + self.p {
            return Err(PatternError::SpreadTooLarge {
                pivots: self.bottom.clone(),
                spread,
                limit: self.m + self.p,
            });
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Ambient dimension `m + p`.
    pub fn ambient(&self) -> usize {
        self.m + self.p
    }

    pub fn top(&self) -> Vec<usize> {
        (1..=self.p).collect()
    }

    pub fn bottom(&self) -> &[usize] {
        &self.bottom
    }

    pub fn heights(&self) -> Vec<usize> {
        column_heights(self.m, self.p, self.q)
    }

    /// Degree in `s` of column `j` (0-based): the coefficient block that
    /// holds its bottom pivot.
    pub fn column_degree(&self, j: usize) -> usize {
        (self.bottom[j] - 1) / self.ambient()
    }

    /// Physical row (0-based) of column `j`'s bottom pivot.
    pub fn bottom_residue(&self, j: usize) -> usize {
        (self.bottom[j] - 1) % self.ambient()
    }

    /// Number of stars beyond the top pivots: `sum_j bottom_j - top_j`.
    pub fn depth(&self) -> usize {
        self.bottom
            .iter()
            .enumerate()
            .map(|(j, &b)| b - (j + 1))
            .sum()
    }

    /// Star count minus the `p` normalized top-pivot entries.
    pub fn degrees_of_freedom(&self) -> usize {
        let stars: usize = self
            .bottom
            .iter()
            .enumerate()
            .map(|(j, &b)| b - (j + 1) + 1)
            .sum();
        stars - self.p
    }

    pub fn is_trivial(&self) -> bool {
        self.bottom.iter().enumerate().all(|(j, &b)| b == j + 1)
    }

    fn shifted(&self, column: usize, up: bool) -> Option<Self> {
        let mut bottom = self.bottom.clone();
        if up {
            bottom[column] += 1;
        } else {
            bottom[column] = bottom[column].checked_sub(1)?;
        }
        Self::new(self.m, self.p, self.q, bottom).ok()
    }

    /// Valid patterns with one bottom pivot lowered by one row, by column.
    pub fn children(&self) -> Vec<Self> {
        (0..self.p).filter_map(|j| self.shifted(j, false)).collect()
    }

    /// Valid patterns with one bottom pivot raised by one row, by column.
    pub fn parents(&self) -> Vec<Self> {
        (0..self.p).filter_map(|j| self.shifted(j, true)).collect()
    }

    /// Column `j` such that `raised` is `self` with `bottom_j` moved down
    /// one row, if the two patterns are one step apart.
    pub fn raised_column(&self, raised: &Self) -> Option<usize> {
        if self.p != raised.p {
            return None;
        }
        let diffs: Vec<usize> = (0..self.p)
            .filter(|&j| self.bottom[j] != raised.bottom[j])
            .collect();
        match diffs.as_slice() {
            [j] if raised.bottom[*j] == self.bottom[*j] + 1 => Some(*j),
            _ => None,
        }
    }
}

impl fmt::Display for LocalizationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, b) in self.bottom.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, "]")
    }
}

pub fn degrees_of_freedom(pattern: &LocalizationPattern) -> usize {
    pattern.degrees_of_freedom()
}

pub fn target_pattern(m: usize, p: usize, q: usize) -> Result<LocalizationPattern, PatternError> {
    LocalizationPattern::target(m, p, q)
}

pub fn children(pattern: &LocalizationPattern) -> Vec<LocalizationPattern> {
    pattern.children()
}

/// Memoized chain counts in the bottom-pivot poset between the trivial
/// pattern and the target.
#[derive(Debug, Clone)]
pub struct PosetCounter {
    target: LocalizationPattern,
    from_trivial: HashMap<Vec<usize>, BigUint>,
    to_target: HashMap<Vec<usize>, BigUint>,
}

impl PosetCounter {
    pub fn new(m: usize, p: usize, q: usize) -> Result<Self, PatternError> {
        Ok(Self {
            target: LocalizationPattern::target(m, p, q)?,
            from_trivial: HashMap::new(),
            to_target: HashMap::new(),
        })
    }

    pub fn target(&self) -> &LocalizationPattern {
        &self.target
    }

    /// Solutions fitting `pattern` and meeting `depth` general planes: one
    /// for the trivial pattern, else the sum over its children.
    pub fn count(&mut self, pattern: &LocalizationPattern) -> BigUint {
        if pattern.is_trivial() {
            return BigUint::one();
        }
        if let Some(v) = self.from_trivial.get(pattern.bottom()) {
            return v.clone();
        }
        let total = pattern
            .children()
            .iter()
            .fold(BigUint::zero(), |acc, child| acc + self.count(child));
        self.from_trivial
            .insert(pattern.bottom().to_vec(), total.clone());
        total
    }

    /// Number of raising chains from `pattern` up to the target.
    pub fn chains_to_target(&mut self, pattern: &LocalizationPattern) -> BigUint {
        if pattern.bottom() == self.target.bottom() {
            return BigUint::one();
        }
        if pattern
            .bottom()
            .iter()
            .zip(self.target.bottom())
            .any(|(a, b)| a > b)
        {
            return BigUint::zero();
        }
        if let Some(v) = self.to_target.get(pattern.bottom()) {
            return v.clone();
        }
        let total = pattern
            .parents()
            .iter()
            .fold(BigUint::zero(), |acc, parent| {
                acc + self.chains_to_target(parent)
            });
        self.to_target
            .insert(pattern.bottom().to_vec(), total.clone());
        total
    }

    /// Raising steps from `pattern` that still lead to the target; these are
    /// the outgoing edges of a Pieri tree node.
    pub fn tree_successors(&mut self, pattern: &LocalizationPattern) -> Vec<LocalizationPattern> {
        pattern
            .parents()
            .into_iter()
            .filter(|next| !self.chains_to_target(next).is_zero())
            .collect()
    }
}

pub fn pieri_root_count(m: usize, p: usize, q: usize) -> Result<BigUint, PatternError> {
    let mut counter = PosetCounter::new(m, p, q)?;
    let target = counter.target().clone();
    Ok(counter.count(&target))
}

fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * BigUint::from(k))
}

/// `1! 2! ... (p-1)! (mp)! / (m! (m+1)! ... (m+p-1)!)`.
pub fn dmp_count(m: usize, p: usize) -> Result<BigUint, PatternError> {
    check_sizes(m, p)?;
    let numerator = (1..p).fold(factorial(m * p), |acc, i| acc * factorial(i));
    let denominator = (0..p).fold(BigUint::one(), |acc, i| acc * factorial(m + i));
    Ok(numerator / denominator)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PieriTreeNode {
    pub pattern: LocalizationPattern,
    pub depth: usize,
    pub children: Vec<PieriTreeNode>,
}

impl PieriTreeNode {
    pub fn leaf_count(&self) -> usize {
        if self.children.is_empty() {
            1
        } else {
            self.children.iter().map(PieriTreeNode::leaf_count).sum()
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(PieriTreeNode::node_count)
            .sum::<usize>()
    }

    pub fn edge_count(&self) -> usize {
        self.node_count() - 1
    }

    pub fn leaves(&self) -> Vec<&PieriTreeNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            if node.children.is_empty() {
                out.push(node);
            } else {
                stack.extend(node.children.iter().rev());
            }
        }
        out
    }

    /// Nodes per depth, index 0 being the root.
    pub fn level_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        let mut frontier = vec![self];
        while !frontier.is_empty() {
            sizes.push(frontier.len());
            frontier = frontier.iter().flat_map(|n| n.children.iter()).collect();
        }
        sizes
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a PieriTreeNode)) {
        f(self);
        for child in &self.children {
            child.visit(f);
        }
    }
}

/// Fully materialized Pieri tree: root is the trivial pattern, every
/// root-to-leaf path is one raising chain to the target. Meant for small
/// cases; the solver expands the same tree lazily.
pub fn pieri_tree(m: usize, p: usize, q: usize) -> Result<PieriTreeNode, PatternError> {
    let mut counter = PosetCounter::new(m, p, q)?;
    let root = LocalizationPattern::trivial(m, p, q)?;

    fn grow(pattern: LocalizationPattern, counter: &mut PosetCounter) -> PieriTreeNode {
        let depth = pattern.depth();
        let children = counter
            .tree_successors(&pattern)
            .into_iter()
            .map(|next| grow(next, counter))
            .collect();
        PieriTreeNode {
            pattern,
            depth,
            children,
        }
    }

    Ok(grow(root, &mut counter))
}

/// Jobs per level of the Pieri tree without materializing it: entry `k-1`
/// counts edges that impose condition `k`.
pub fn level_job_counts(m: usize, p: usize, q: usize) -> Result<Vec<BigUint>, PatternError> {
    let mut counter = PosetCounter::new(m, p, q)?;
    let n = condition_count(m, p, q);
    let mut levels = vec![BigUint::zero(); n];
    // multiplicity of each pattern among tree nodes of the current depth
    let mut frontier: HashMap<LocalizationPattern, BigUint> = HashMap::new();
    frontier.insert(LocalizationPattern::trivial(m, p, q)?, BigUint::one());
    for level in levels.iter_mut() {
        let mut next: HashMap<LocalizationPattern, BigUint> = HashMap::new();
        for (pattern, mult) in &frontier {
            for succ in counter.tree_successors(pattern) {
                *next.entry(succ).or_insert_with(BigUint::zero) += mult;
            }
        }
        *level = next.values().fold(BigUint::zero(), |a, b| a + b);
        frontier = next;
    }
    Ok(levels)
}

/// Graphviz rendering of the counting poset, each node labelled with its
/// pivots and root count.
pub fn poset_dot(m: usize, p: usize, q: usize) -> Result<String, PatternError> {
    let mut counter = PosetCounter::new(m, p, q)?;
    let target = counter.target().clone();
    let mut seen = HashMap::new();
    let mut stack = vec![target];
    let mut edges = Vec::new();
    while let Some(pattern) = stack.pop() {
        if seen.contains_key(&pattern) {
            continue;
        }
        let count = counter.count(&pattern);
        for child in pattern.children() {
            if !counter.count(&child).is_zero() {
                edges.push((child.clone(), pattern.clone()));
                stack.push(child);
            }
        }
        seen.insert(pattern, count);
    }
    let mut nodes: Vec<_> = seen.into_iter().collect();
    nodes.sort();
    edges.sort();
    let mut out = String::from("digraph poset {\n  rankdir=TB;\n");
    for (pattern, count) in &nodes {
        let _ = writeln!(out, "  \"{pattern}\" [label=\"{pattern}\\n{count}\"];");
    }
    for (from, to) in edges {
        let _ = writeln!(out, "  \"{from}\" -> \"{to}\";");
    }
    out.push_str("}\n");
    Ok(out)
}

pub fn tree_dot(tree: &PieriTreeNode) -> String {
    let mut out = String::from("digraph pieri_tree {\n  rankdir=TB;\n");
    let mut next_id = 0usize;
    fn emit(node: &PieriTreeNode, id: usize, next_id: &mut usize, out: &mut String) {
        let _ = writeln!(out, "  n{id} [label=\"{}\"];", node.pattern);
        for child in &node.children {
            *next_id += 1;
            let child_id = *next_id;
            let _ = writeln!(out, "  n{id} -> n{child_id};");
            emit(child, child_id, next_id, out);
        }
    }
    emit(tree, 0, &mut next_id, &mut out);
    out.push_str("}\n");
    out
}
