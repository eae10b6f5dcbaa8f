//! Sparse LU factorisation of the simplex basis with product-form updates.
//!
//! Factorisation is left-looking (one basis column at a time, sparse
//! triangular solve over the already-factored part) with threshold partial
//! pivoting that prefers short rows. Updates after a basis change are kept as
//! eta columns until the next refactorisation.

const PIVOT_THRESHOLD: f64 = 0.1;
const SINGULAR_TOL: f64 = 1e-11;

/// A basis column given as sparse `(row, value)` entries.
pub(crate) type SparseColumn<'a> = (&'a [usize], &'a [f64]);

#[derive(Debug, Default)]
struct Eta {
    pos: usize,
    pivot: f64,
    idx: Vec<usize>,
    val: Vec<f64>,
}

#[derive(Debug, Default)]
pub(crate) struct LuFactor {
    m: usize,
    /// step -> pivot row
    pivot_row: Vec<usize>,
    /// step -> basis position
    pivot_pos: Vec<usize>,
    /// row -> step
    row_step: Vec<usize>,
    // L by step: entries at rows pivoted later
    l_start: Vec<usize>,
    l_row: Vec<usize>,
    l_val: Vec<f64>,
    // L by row-step (transpose), for BTRAN
    lt_start: Vec<usize>,
    lt_step: Vec<usize>,
    lt_val: Vec<f64>,
    // U by step (column), off-diagonal entries in earlier steps
    u_start: Vec<usize>,
    u_step: Vec<usize>,
    u_val: Vec<f64>,
    u_diag: Vec<f64>,
    // U by row-step (transpose)
    ut_start: Vec<usize>,
    ut_step: Vec<usize>,
    ut_val: Vec<f64>,
    etas: Vec<Eta>,
    eta_nnz: usize,
    work: Vec<f64>,
    work2: Vec<f64>,
}

/// Outcome of a factorisation: basis positions that had to be replaced by
/// the logical of the listed row because the basis was singular.
pub(crate) type Repairs = Vec<(usize, usize)>;

impl LuFactor {
    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    pub fn eta_nnz(&self) -> usize {
        self.eta_nnz
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_val.len() + self.u_val.len() + self.m
    }

    /// Factorises the basis whose position `p` holds column `cols[p]`.
    /// Singular positions are reported and treated as the unit column of an
    /// unpivoted row (the caller swaps in that row's logical).
    pub fn factor(&mut self, m: usize, cols: &[SparseColumn<'_>]) -> Repairs {
        assert_eq!(cols.len(), m);
        self.m = m;
        self.etas.clear();
        self.eta_nnz = 0;
        self.pivot_row = Vec::with_capacity(m);
        self.pivot_pos = Vec::with_capacity(m);
        self.row_step = vec![usize::MAX; m];
        self.l_start = vec![0];
        self.l_row.clear();
        self.l_val.clear();
        self.u_start = vec![0];
        self.u_step.clear();
        self.u_val.clear();
        self.u_diag = Vec::with_capacity(m);
        self.work = vec![0.0; m];
        self.work2 = vec![0.0; m];

        // static row counts for the pivot preference
        let mut row_count = vec![0usize; m];
        for (idx, _) in cols {
            for &r in idx.iter() {
                row_count[r] += 1;
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&p| (cols[p].0.len(), p));

        let mut x = vec![0.0; m];
        let mut in_pattern = vec![false; m];
        let mut pattern: Vec<usize> = Vec::new();
        // DFS state over steps
        let mut visited = vec![false; m];
        let mut topo: Vec<usize> = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new();
        let mut singular: Vec<usize> = Vec::new();

        for &pos in &order {
            let (idx, val) = cols[pos];
            pattern.clear();
            topo.clear();
            for (&r, &v) in idx.iter().zip(val.iter()) {
                x[r] += v;
                if !in_pattern[r] {
                    in_pattern[r] = true;
                    pattern.push(r);
                }
            }
            // reach: steps touched by the triangular solve, in topological order
            for &r in idx.iter() {
                let s = self.row_step[r];
                if s != usize::MAX && !visited[s] {
                    visited[s] = true;
                    stack.push((s, self.l_start[s]));
                    while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                        let end = self.l_start[node + 1];
                        let mut pushed = false;
                        while *next < end {
                            let row = self.l_row[*next];
                            *next += 1;
                            let child = self.row_step[row];
                            if child != usize::MAX && !visited[child] {
                                visited[child] = true;
                                stack.push((child, self.l_start[child]));
                                pushed = true;
                                break;
                            }
                        }
                        if !pushed {
                            topo.push(node);
                            stack.pop();
                        }
                    }
                }
            }
            for &s in topo.iter().rev() {
                visited[s] = false;
                let xr = x[self.pivot_row[s]];
                if xr == 0.0 {
                    continue;
                }
                for q in self.l_start[s]..self.l_start[s + 1] {
                    let r = self.l_row[q];
                    x[r] -= self.l_val[q] * xr;
                    if !in_pattern[r] {
                        in_pattern[r] = true;
                        pattern.push(r);
                    }
                }
            }
            // choose pivot among unpivoted rows
            let mut amax: f64 = 0.0;
            for &r in &pattern {
                if self.row_step[r] == usize::MAX {
                    amax = amax.max(x[r].abs());
                }
            }
            let step = self.pivot_row.len();
            if amax <= SINGULAR_TOL {
                singular.push(pos);
                for &r in &pattern {
                    x[r] = 0.0;
                    in_pattern[r] = false;
                }
                continue;
            }
            let mut best: Option<usize> = None;
            for &r in &pattern {
                if self.row_step[r] != usize::MAX || x[r].abs() < PIVOT_THRESHOLD * amax {
                    continue;
                }
                best = match best {
                    None => Some(r),
                    Some(b) => {
                        if (row_count[r], r) < (row_count[b], b) {
                            Some(r)
                        } else {
                            Some(b)
                        }
                    }
                };
            }
            let prow = best.unwrap();
            let piv = x[prow];
            // U column: entries at rows already pivoted
            let mut ucol: Vec<(usize, f64)> = Vec::new();
            let mut lcol: Vec<(usize, f64)> = Vec::new();
            for &r in &pattern {
                let v = x[r];
                x[r] = 0.0;
                in_pattern[r] = false;
                if v == 0.0 || r == prow {
                    continue;
                }
                let s = self.row_step[r];
                if s != usize::MAX {
                    ucol.push((s, v));
                } else {
                    lcol.push((r, v / piv));
                }
            }
            ucol.sort_unstable_by_key(|e| e.0);
            lcol.sort_unstable_by_key(|e| e.0);
            for (s, v) in ucol {
                self.u_step.push(s);
                self.u_val.push(v);
            }
            self.u_start.push(self.u_step.len());
            self.u_diag.push(piv);
            for (r, v) in lcol {
                self.l_row.push(r);
                self.l_val.push(v);
            }
            self.l_start.push(self.l_row.len());
            self.row_step[prow] = step;
            self.pivot_row.push(prow);
            self.pivot_pos.push(pos);
        }

        // pair singular positions with unpivoted rows (unit columns)
        let mut repairs = Vec::new();
        if !singular.is_empty() {
            let free_rows: Vec<usize> = (0..m).filter(|&r| self.row_step[r] == usize::MAX).collect();
            debug_assert_eq!(free_rows.len(), singular.len());
            for (&pos, &row) in singular.iter().zip(free_rows.iter()) {
                let step = self.pivot_row.len();
                self.u_start.push(self.u_step.len());
                // logical columns carry -1
                self.u_diag.push(-1.0);
                self.l_start.push(self.l_row.len());
                self.row_step[row] = step;
                self.pivot_row.push(row);
                self.pivot_pos.push(pos);
                repairs.push((pos, row));
            }
        }
        self.build_transposes();
        repairs
    }

    fn build_transposes(&mut self) {
        let m = self.m;
        // L transpose keyed by the step of the entry's row
        let mut cnt = vec![0usize; m + 1];
        for &r in &self.l_row {
            cnt[self.row_step[r] + 1] += 1;
        }
        for i in 0..m {
            cnt[i + 1] += cnt[i];
        }
        self.lt_start = cnt.clone();
        self.lt_step = vec![0; self.l_row.len()];
        self.lt_val = vec![0.0; self.l_row.len()];
        let mut next = cnt;
        for s in 0..m {
            for q in self.l_start[s]..self.l_start[s + 1] {
                let rs = self.row_step[self.l_row[q]];
                let p = next[rs];
                self.lt_step[p] = s;
                self.lt_val[p] = self.l_val[q];
                next[rs] += 1;
            }
        }
        let mut cnt = vec![0usize; m + 1];
        for &s in &self.u_step {
            cnt[s + 1] += 1;
        }
        for i in 0..m {
            cnt[i + 1] += cnt[i];
        }
        self.ut_start = cnt.clone();
        self.ut_step = vec![0; self.u_step.len()];
        self.ut_val = vec![0.0; self.u_step.len()];
        let mut next = cnt;
        for k in 0..m {
            for q in self.u_start[k]..self.u_start[k + 1] {
                let j = self.u_step[q];
                let p = next[j];
                self.ut_step[p] = k;
                self.ut_val[p] = self.u_val[q];
                next[j] += 1;
            }
        }
    }

    /// Solves `B w = b` in place: `b` is indexed by row on entry and by basis
    /// position on exit.
    pub fn ftran(&mut self, b: &mut [f64]) {
        let m = self.m;
        // L solve in row space
        for s in 0..m {
            let xr = b[self.pivot_row[s]];
            if xr == 0.0 {
                continue;
            }
            for q in self.l_start[s]..self.l_start[s + 1] {
                b[self.l_row[q]] -= self.l_val[q] * xr;
            }
        }
        // gather into step space
        let v = &mut self.work;
        for s in 0..m {
            v[s] = b[self.pivot_row[s]];
        }
        for k in (0..m).rev() {
            let vk = v[k];
            if vk == 0.0 {
                continue;
            }
            let w = vk / self.u_diag[k];
            v[k] = w;
            for q in self.u_start[k]..self.u_start[k + 1] {
                v[self.u_step[q]] -= self.u_val[q] * w;
            }
        }
        for s in 0..m {
            b[self.pivot_pos[s]] = v[s];
            v[s] = 0.0;
        }
        for eta in &self.etas {
            let wr = b[eta.pos] / eta.pivot;
            b[eta.pos] = wr;
            if wr != 0.0 {
                for (&i, &a) in eta.idx.iter().zip(eta.val.iter()) {
                    b[i] -= a * wr;
                }
            }
        }
    }

    /// Solves `Bᵀ y = c` in place: `c` is indexed by basis position on entry
    /// and by row on exit.
    pub fn btran(&mut self, c: &mut [f64]) {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let mut s = c[eta.pos];
            for (&i, &a) in eta.idx.iter().zip(eta.val.iter()) {
                s -= a * c[i];
            }
            c[eta.pos] = s / eta.pivot;
        }
        let z = &mut self.work;
        for s in 0..m {
            z[s] = c[self.pivot_pos[s]];
        }
        for k in 0..m {
            let zk = z[k];
            if zk == 0.0 {
                continue;
            }
            let w = zk / self.u_diag[k];
            z[k] = w;
            for q in self.ut_start[k]..self.ut_start[k + 1] {
                z[self.ut_step[q]] -= self.ut_val[q] * w;
            }
        }
        for j in (0..m).rev() {
            let yj = z[j];
            if yj == 0.0 {
                continue;
            }
            for q in self.lt_start[j]..self.lt_start[j + 1] {
                z[self.lt_step[q]] -= self.lt_val[q] * yj;
            }
        }
        let out = &mut self.work2;
        for s in 0..m {
            out[self.pivot_row[s]] = z[s];
            z[s] = 0.0;
        }
        c.copy_from_slice(&out[..m]);
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Records the replacement of basis position `pos` by a column whose
    /// FTRAN image is `alpha` (indexed by basis position).
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        let mut eta = Eta {
            pos,
            pivot: alpha[pos],
            ..Default::default()
        };
        for (i, &a) in alpha.iter().enumerate() {
            if i != pos && a.abs() > 1e-14 {
                eta.idx.push(i);
                eta.val.push(a);
            }
        }
        self.eta_nnz += eta.idx.len() + 1;
        self.etas.push(eta);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(cols: &[(Vec<usize>, Vec<f64>)], w: &[f64], m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m];
        for (p, (idx, val)) in cols.iter().enumerate() {
            for (&r, &v) in idx.iter().zip(val) {
                out[r] += v * w[p];
            }
        }
        out
    }

    #[test]
    fn ftran_btran_solve_small_system() {
        // B = [[2,1,0],[0,3,1],[1,0,4]] by columns
        let cols = vec![
            (vec![0, 2], vec![2.0, 1.0]),
            (vec![0, 1], vec![1.0, 3.0]),
            (vec![1, 2], vec![1.0, 4.0]),
        ];
        let views: Vec<SparseColumn> = cols.iter().map(|(i, v)| (i.as_slice(), v.as_slice())).collect();
        let mut lu = LuFactor::default();
        assert!(lu.factor(3, &views).is_empty());
        let rhs = vec![1.0, 2.0, 3.0];
        let mut w = rhs.clone();
        lu.ftran(&mut w);
        let back = dense_mul(&cols, &w, 3);
        for i in 0..3 {
            assert!((back[i] - rhs[i]).abs() < 1e-12);
        }
        // Bᵀ y = c  <=>  column_p · y = c_p
        let c = vec![1.0, -1.0, 0.5];
        let mut y = c.clone();
        lu.btran(&mut y);
        for (p, (idx, val)) in cols.iter().enumerate() {
            let dot: f64 = idx.iter().zip(val).map(|(&r, &v)| v * y[r]).sum();
            assert!((dot - c[p]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_basis_is_repaired_with_unit_column() {
        let cols = vec![(vec![0], vec![1.0]), (vec![0], vec![2.0])];
        let views: Vec<SparseColumn> = cols.iter().map(|(i, v)| (i.as_slice(), v.as_slice())).collect();
        let mut lu = LuFactor::default();
        let repairs = lu.factor(2, &views);
        assert_eq!(repairs, vec![(1, 1)]);
    }

    #[test]
    fn eta_update_tracks_column_replacement() {
        let cols = vec![(vec![0], vec![1.0]), (vec![1], vec![1.0])];
        let views: Vec<SparseColumn> = cols.iter().map(|(i, v)| (i.as_slice(), v.as_slice())).collect();
        let mut lu = LuFactor::default();
        lu.factor(2, &views);
        // replace position 1 by column (1, 2)
        let mut alpha = vec![1.0, 2.0];
        lu.ftran(&mut alpha);
        lu.update(1, &alpha);
        let mut w = vec![3.0, 4.0];
        lu.ftran(&mut w);
        // B = [[1,1],[0,2]] -> w = [1, 2]
        assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 2.0).abs() < 1e-12);
        let mut y = vec![1.0, 3.0];
        lu.btran(&mut y);
        // Bᵀ y = c: y0 = 1, y0 + 2 y1 = 3
        assert!((y[0] - 1.0).abs() < 1e-12 && (y[1] - 1.0).abs() < 1e-12);
    }
}
