//! Dense two-phase tableau simplex with Bland's rule.
//! Solves `min cᵀx  s.t.  A x = b, x ≥ 0` for small dense problems.

const EPS: f64 = 1e-12;

struct Tableau {
    /// rows × (cols + 1); last column is the right-hand side
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        self.t[row].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.t[row].clone();
        for (r, line) in self.t.iter_mut().enumerate() {
            if r != row {
                let f = line[col];
                if f != 0.0 {
                    for (v, pv) in line.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        self.basis[row] = col;
    }

    /// Minimizes `cost · x` over columns `allowed`; returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> bool {
        loop {
            let reduced = |c: usize, tab: &Tableau| {
                cost[c]
                    - tab
                        .basis
                        .iter()
                        .enumerate()
                        .map(|(r, &b)| cost[b] * tab.t[r][c])
                        .sum::<f64>()
            };
            let Some(enter) = (0..allowed).find(|&c| !self.basis.contains(&c) && reduced(c, self) < -EPS)
            else {
                return true;
            };
            let rhs = self.cols;
            let leave = (0..self.t.len())
                .filter(|&r| self.t[r][enter] > EPS)
                .min_by(|&a, &b| {
                    let ra = self.t[a][rhs] / self.t[a][enter];
                    let rb = self.t[b][rhs] / self.t[b][enter];
                    ra.total_cmp(&rb).then(self.basis[a].cmp(&self.basis[b]))
                });
            let Some(leave) = leave else {
                return false;
            };
            self.pivot(leave, enter);
        }
    }
}

/// Optimal objective value, or `None` when infeasible or unbounded.
pub fn minimize(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    let rows = a.len();
    let n = c.len();
    let cols = n + rows;
    let mut t = Vec::with_capacity(rows);
    for (r, (row, &rhs)) in a.iter().zip(b).enumerate() {
        let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
        let mut line: Vec<f64> = row.iter().map(|v| v * sign).collect();
        line.extend((0..rows).map(|k| if k == r { 1.0 } else { 0.0 }));
        line.push(rhs * sign);
        t.push(line);
    }
    let mut tab = Tableau {
        t,
        basis: (n..cols).collect(),
        cols,
    };
    let phase1: Vec<f64> = (0..cols).map(|k| if k >= n { 1.0 } else { 0.0 }).collect();
    tab.optimize(&phase1, cols);
    let infeasibility: f64 = (0..rows).filter(|&r| tab.basis[r] >= n).map(|r| tab.t[r][cols]).sum();
    if infeasibility > 1e-9 {
        return None;
    }
    // drive remaining artificials out; drop redundant rows
    let mut r = 0;
    while r < tab.t.len() {
        if tab.basis[r] >= n {
            match (0..n).find(|&c| tab.t[r][c].abs() > EPS) {
                Some(c) => tab.pivot(r, c),
                None => {
                    tab.t.remove(r);
                    tab.basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }
    let mut phase2 = c.to_vec();
    phase2.extend(std::iter::repeat_n(0.0, rows));
    if !tab.optimize(&phase2, n) {
        return None;
    }
    Some(
        tab.basis
            .iter()
            .enumerate()
            .map(|(r, &bv)| phase2[bv] * tab.t[r][cols])
            .sum(),
    )
}

/// Transportation problem as an LP: ship `supply` to `demand` at `cost[i][j]`.
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Option<f64> {
    let (s, d) = (supply.len(), demand.len());
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..s {
        a.push((0..s * d).map(|k| if k / d == i { 1.0 } else { 0.0 }).collect());
        b.push(supply[i]);
    }
    for j in 0..d {
        a.push((0..s * d).map(|k| if k % d == j { 1.0 } else { 0.0 }).collect());
        b.push(demand[j]);
    }
    let c: Vec<f64> = (0..s * d).map(|k| cost[k / d][k % d]).collect();
    minimize(&a, &b, &c)
}
