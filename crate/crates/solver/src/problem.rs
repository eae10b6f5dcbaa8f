//! Problem representation shared by the LP and MILP engines.

use crate::error::SolverError;

/// Row sense of a linear constraint `a·x (sense) rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

impl RowSense {
    /// Bounds `[lo, hi]` on the row activity implied by this sense.
    pub fn activity_bounds(self, rhs: f64) -> (f64, f64) {
        match self {
            RowSense::Le => (f64::NEG_INFINITY, rhs),
            RowSense::Ge => (rhs, f64::INFINITY),
            RowSense::Eq => (rhs, rhs),
        }
    }
}

/// A minimisation LP `min cᵀx + c0  s.t.  A x (sense) b,  l ≤ x ≤ u`.
///
/// The constraint matrix is stored column-major. Use [`LpBuilder`] to
/// assemble a problem row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub num_rows: usize,
    pub num_cols: usize,
    /// Column pointers into `row_index`/`value`, length `num_cols + 1`.
    pub col_start: Vec<usize>,
    pub row_index: Vec<usize>,
    pub value: Vec<f64>,
    pub senses: Vec<RowSense>,
    pub rhs: Vec<f64>,
    pub col_lower: Vec<f64>,
    pub col_upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    pub col_names: Vec<String>,
    pub row_names: Vec<String>,
}

impl LpProblem {
    /// Entries `(row, value)` of column `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_start[j]..self.col_start[j + 1];
        self.row_index[range.clone()]
            .iter()
            .copied()
            .zip(self.value[range].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.value.len()
    }

    /// Row-major copy of the constraint matrix as `(row_start, col_index, value)`.
    pub fn to_row_major(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let mut count = vec![0usize; self.num_rows + 1];
        for &r in &self.row_index {
            count[r + 1] += 1;
        }
        for i in 0..self.num_rows {
            count[i + 1] += count[i];
        }
        let start = count.clone();
        let mut next = count;
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for j in 0..self.num_cols {
            for (r, v) in self.column(j) {
                let p = next[r];
                cols[p] = j;
                vals[p] = v;
                next[r] += 1;
            }
        }
        (start, cols, vals)
    }

    /// Row activities `A x`.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.num_rows];
        for (j, &xj) in x.iter().enumerate().take(self.num_cols) {
            if xj != 0.0 {
                for (r, v) in self.column(j) {
                    act[r] += v * xj;
                }
            }
        }
        act
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset
            + self
                .objective
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.num_cols {
            worst = worst
                .max(self.col_lower[j] - x[j])
                .max(x[j] - self.col_upper[j]);
        }
        for (i, a) in self.row_activity(x).into_iter().enumerate() {
            let (lo, hi) = self.senses[i].activity_bounds(self.rhs[i]);
            worst = worst.max(lo - a).max(a - hi);
        }
        worst
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::Malformed(msg));
        if self.col_start.len() != self.num_cols + 1
            || self.col_lower.len() != self.num_cols
            || self.col_upper.len() != self.num_cols
            || self.objective.len() != self.num_cols
        {
            return bad("column arrays disagree with num_cols".into());
        }
        if self.senses.len() != self.num_rows || self.rhs.len() != self.num_rows {
            return bad("row arrays disagree with num_rows".into());
        }
        if self.row_index.iter().any(|&r| r >= self.num_rows) {
            return bad("row index out of range".into());
        }
        for j in 0..self.num_cols {
            if self.col_lower[j] > self.col_upper[j] || self.col_lower[j].is_nan() || self.col_upper[j].is_nan() {
                return bad(format!("column {j} has unordered bounds"));
            }
        }
        if self.value.iter().any(|v| !v.is_finite()) || self.rhs.iter().any(|v| !v.is_finite()) {
            return bad("non-finite coefficient or rhs".into());
        }
        Ok(())
    }
}

/// Row-wise assembler for [`LpProblem`].
#[derive(Debug, Clone, Default)]
pub struct LpBuilder {
    col_lower: Vec<f64>,
    col_upper: Vec<f64>,
    objective: Vec<f64>,
    col_names: Vec<String>,
    triplets: Vec<(usize, usize, f64)>,
    senses: Vec<RowSense>,
    rhs: Vec<f64>,
    row_names: Vec<String>,
    objective_offset: f64,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_col(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        let j = self.col_lower.len();
        self.col_lower.push(lower);
        self.col_upper.push(upper);
        self.objective.push(cost);
        self.col_names.push(format!("C{j}"));
        j
    }

    pub fn add_named_col(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        let j = self.add_col(lower, upper, cost);
        self.col_names[j] = name.into();
        j
    }

    /// Adds a row; duplicate column entries are summed.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], sense: RowSense, rhs: f64) -> usize {
        let i = self.senses.len();
        for &(j, v) in coeffs {
            if v != 0.0 {
                self.triplets.push((i, j, v));
            }
        }
        self.senses.push(sense);
        self.rhs.push(rhs);
        self.row_names.push(format!("R{i}"));
        i
    }

    pub fn add_named_row(&mut self, name: impl Into<String>, coeffs: &[(usize, f64)], sense: RowSense, rhs: f64) -> usize {
        let i = self.add_row(coeffs, sense, rhs);
        self.row_names[i] = name.into();
        i
    }

    /// Starts from an existing problem so rows and columns can be appended.
    pub fn from_problem(p: LpProblem) -> Self {
        let mut triplets = Vec::with_capacity(p.nnz());
        for j in 0..p.num_cols {
            for (i, v) in p.column(j) {
                triplets.push((i, j, v));
            }
        }
        Self {
            col_lower: p.col_lower,
            col_upper: p.col_upper,
            objective: p.objective,
            col_names: p.col_names,
            triplets,
            senses: p.senses,
            rhs: p.rhs,
            row_names: p.row_names,
            objective_offset: p.objective_offset,
        }
    }

    pub fn set_objective_offset(&mut self, offset: f64) {
        self.objective_offset = offset;
    }

    pub fn num_cols(&self) -> usize {
        self.col_lower.len()
    }

    pub fn num_rows(&self) -> usize {
        self.senses.len()
    }

    pub fn build(self) -> LpProblem {
        let n = self.col_lower.len();
        let mut trip = self.triplets;
        trip.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut col_start = vec![0usize; n + 1];
        let mut row_index = Vec::with_capacity(trip.len());
        let mut value: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trip {
            if last == Some((i, j)) {
                *value.last_mut().unwrap() += v;
                continue;
            }
            row_index.push(i);
            value.push(v);
            col_start[j + 1] += 1;
            last = Some((i, j));
        }
        for j in 0..n {
            col_start[j + 1] += col_start[j];
        }
        LpProblem {
            num_rows: self.senses.len(),
            num_cols: n,
            col_start,
            row_index,
            value,
            senses: self.senses,
            rhs: self.rhs,
            col_lower: self.col_lower,
            col_upper: self.col_upper,
            objective: self.objective,
            objective_offset: self.objective_offset,
            col_names: self.col_names,
            row_names: self.row_names,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_merges_duplicates_and_orders_columns() {
        let mut b = LpBuilder::new();
        let x = b.add_col(0.0, 1.0, 1.0);
        let y = b.add_col(0.0, 1.0, 2.0);
        b.add_row(&[(y, 1.0), (x, 2.0), (y, 3.0)], RowSense::Le, 4.0);
        b.add_row(&[(x, -1.0)], RowSense::Ge, -2.0);
        let p = b.build();
        assert_eq!(p.column(x).collect::<Vec<_>>(), vec![(0, 2.0), (1, -1.0)]);
        assert_eq!(p.column(y).collect::<Vec<_>>(), vec![(0, 4.0)]);
        let (start, cols, vals) = p.to_row_major();
        assert_eq!(start, vec![0, 2, 3]);
        assert_eq!(cols, vec![0, 1, 0]);
        assert_eq!(vals, vec![2.0, 4.0, -1.0]);
        p.validate().unwrap();
    }

    #[test]
    fn violation_measures_rows_and_bounds() {
        let mut b = LpBuilder::new();
        let x = b.add_col(0.0, 2.0, 0.0);
        b.add_row(&[(x, 1.0)], RowSense::Le, 1.0);
        let p = b.build();
        assert_eq!(p.max_violation(&[1.5]), 0.5);
        assert_eq!(p.max_violation(&[3.0]), 2.0);
        assert_eq!(p.max_violation(&[0.5]), 0.0);
    }
}
