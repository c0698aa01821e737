//! Ground-truth-to-slot assignment and permutation indexing.
//!
//! [`hungarian`] solves the rectangular linear assignment problem (rows are
//! ground-truth elements, columns are output slots, `rows <= cols`) in
//! `O(rows^2 * cols)` with the shortest-augmenting-path form of the
//! Kuhn-Munkres method. [`brute_force_assignment`] enumerates every injection
//! and exists as an oracle for it.
//!
//! Permutations of `n` slots are indexed by their lexicographic rank (Lehmer
//! code), which is how the permutation head addresses its `n!` classes.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Largest `n` for which `n!` permutations are ever enumerated.
pub const MAX_ENUM_SLOTS: usize = 8;

/// Largest row count accepted by [`brute_force_assignment`].
pub const MAX_BRUTE_FORCE_ROWS: usize = 8;

/// Dense `rows x cols` cost matrix with `rows <= cols` and finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    /// Builds a matrix from row-major `data`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(contract(format!(
                "cost matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        if rows > cols {
            return Err(contract(format!(
                "cost matrix has more rows ({rows}) than columns ({cols})"
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(contract(format!(
                "non-finite cost at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(contract("ragged cost matrix rows"));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    /// An empty (0-row) matrix over `cols` slots.
    pub fn empty(cols: usize) -> Self {
        CostMatrix {
            rows: 0,
            cols,
            data: Vec::new(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Sum of the entries selected by `perm` (row `j` picks column `perm[j]`).
    pub fn cost_of(&self, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(r, &c)| self.get(r, c)).sum()
    }

    /// Returns a copy with `offsets[c]` added to every entry of column `c`.
    pub fn with_column_offsets(&self, offsets: &[f64]) -> Result<Self> {
        if offsets.len() != self.cols {
            return Err(contract("column offset length mismatch"));
        }
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, v)| v + offsets[i % self.cols])
            .collect();
        Self::new(self.rows, self.cols, data)
    }
}

/// An injective row-to-column assignment and its total cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentResult {
    /// `perm[j]` is the column assigned to row `j`.
    pub perm: Vec<usize>,
    pub cost: f64,
}

/// Minimum-cost injective assignment of rows to columns.
pub fn hungarian(cost: &CostMatrix) -> AssignmentResult {
    let n = cost.rows();
    let m = cost.cols();
    if n == 0 {
        return AssignmentResult {
            perm: Vec::new(),
            cost: 0.0,
        };
    }

    // 1-based potentials; column 0 is a virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            let row = cost.row(i0 - 1);
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            perm[owner[j] - 1] = j - 1;
        }
    }
    let total = cost.cost_of(&perm);
    AssignmentResult { perm, cost: total }
}

/// Exhaustive minimum over all injections of rows into columns. Ties go to
/// the lexicographically smallest assignment vector.
pub fn brute_force_assignment(cost: &CostMatrix) -> Result<AssignmentResult> {
    let n = cost.rows();
    if n > MAX_BRUTE_FORCE_ROWS {
        return Err(Error::SizeLimit {
            what: "brute-force assignment rows",
            got: n,
            limit: MAX_BRUTE_FORCE_ROWS,
        });
    }

    struct Search<'a> {
        cost: &'a CostMatrix,
        current: Vec<usize>,
        used: Vec<bool>,
        best: Option<AssignmentResult>,
    }

    impl Search<'_> {
        fn visit(&mut self, row: usize) {
            if row == self.cost.rows() {
                let total = self.cost.cost_of(&self.current);
                if self.best.as_ref().is_none_or(|b| total < b.cost) {
                    self.best = Some(AssignmentResult {
                        perm: self.current.clone(),
                        cost: total,
                    });
                }
                return;
            }
            for c in 0..self.cost.cols() {
                if !self.used[c] {
                    self.used[c] = true;
                    self.current.push(c);
                    self.visit(row + 1);
                    self.current.pop();
                    self.used[c] = false;
                }
            }
        }
    }

    let mut search = Search {
        cost,
        current: Vec::with_capacity(n),
        used: vec![false; cost.cols()],
        best: None,
    };
    search.visit(0);
    Ok(search.best.expect("rows <= cols guarantees an injection"))
}

/// `n!` as `usize`.
pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

fn check_permutation(perm: &[usize]) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return Err(contract(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Lexicographic rank of a full permutation of `0..perm.len()`.
pub fn lehmer_encode(perm: &[usize]) -> Result<usize> {
    check_permutation(perm)?;
    if perm.len() > MAX_ENUM_SLOTS {
        return Err(Error::SizeLimit {
            what: "permutation length",
            got: perm.len(),
            limit: MAX_ENUM_SLOTS,
        });
    }
    let n = perm.len();
    let mut index = 0;
    for i in 0..n {
        let smaller_later = perm[i + 1..].iter().filter(|&&q| q < perm[i]).count();
        index += smaller_later * factorial(n - 1 - i);
    }
    Ok(index)
}

/// Inverse of [`lehmer_encode`].
pub fn lehmer_decode(index: usize, n: usize) -> Result<Vec<usize>> {
    if n > MAX_ENUM_SLOTS {
        return Err(Error::SizeLimit {
            what: "permutation length",
            got: n,
            limit: MAX_ENUM_SLOTS,
        });
    }
    if index >= factorial(n) {
        return Err(contract(format!("Lehmer index {index} out of range for n={n}")));
    }
    let mut pool: Vec<usize> = (0..n).collect();
    let mut rest = index;
    let mut perm = Vec::with_capacity(n);
    for i in 0..n {
        let f = factorial(n - 1 - i);
        perm.push(pool.remove(rest / f));
        rest %= f;
    }
    Ok(perm)
}

/// Advances `perm` to the next permutation in lexicographic order. Returns
/// `false` (leaving `perm` sorted descending) once the last one is reached.
pub fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}
