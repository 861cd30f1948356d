//! Exact earth mover's distance between copula grids.
//!
//! The transport problem is solved with successive shortest augmenting paths
//! (Dijkstra on reduced costs with node potentials) on the dense bipartite
//! graph of surplus and deficit cells. Mass shared by the same cell of both
//! grids is matched in place first; with a metric ground distance that never
//! changes the optimum.

use rayon::prelude::*;

use crate::copula::CopulaGrid;
use crate::error::{Error, Result};

/// Flows and leftover supplies below this are treated as zero.
const MASS_EPS: f64 = 1e-15;

/// Euclidean distance between the centres of cells `a` and `b` (row-major
/// indices) on the unit square.
#[inline]
pub fn ground_distance(m: usize, a: usize, b: usize) -> f64 {
    let di = (a / m) as f64 - (b / m) as f64;
    let dj = (a % m) as f64 - (b % m) as f64;
    (di * di + dj * dj).sqrt() / m as f64
}

/// Minimum cost of moving `supply` onto `demand` (equal totals) with the
/// given dense cost matrix, row-major `supply.len() × demand.len()`.
///
/// Returns the optimal cost together with the flow matrix.
pub fn transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> (f64, Vec<f64>) {
    let ns = supply.len();
    let nt = demand.len();
    debug_assert_eq!(cost.len(), ns * nt);
    let mut flow = vec![0.0; ns * nt];
    let mut left_s = supply.to_vec();
    let mut left_t = demand.to_vec();
    // potentials of sources then sinks
    let v = ns + nt;
    let mut pot = vec![0.0f64; v];
    let mut dist = vec![f64::INFINITY; v];
    let mut prev = vec![usize::MAX; v];
    let mut done = vec![false; v];

    loop {
        if left_s.iter().all(|&s| s <= MASS_EPS) || left_t.iter().all(|&d| d <= MASS_EPS) {
            break;
        }
        dist.fill(f64::INFINITY);
        prev.fill(usize::MAX);
        done.fill(false);
        for (i, &s) in left_s.iter().enumerate() {
            if s > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        let mut target = None;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for (x, (&d, &fin)) in dist.iter().zip(&done).enumerate() {
                if !fin && d < best {
                    best = d;
                    u = x;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= ns {
                let j = u - ns;
                if left_t[j] > MASS_EPS {
                    target = Some(u);
                    break;
                }
                // residual backward arcs sink j -> source i
                for i in 0..ns {
                    if done[i] || flow[i * nt + j] <= 0.0 {
                        continue;
                    }
                    let rc = (-cost[i * nt + j] + pot[u] - pot[i]).max(0.0);
                    let nd = best + rc;
                    if nd < dist[i] {
                        dist[i] = nd;
                        prev[i] = u;
                    }
                }
            } else {
                let i = u;
                let row = &cost[i * nt..(i + 1) * nt];
                for j in 0..nt {
                    let w = ns + j;
                    if done[w] {
                        continue;
                    }
                    let rc = (row[j] + pot[i] - pot[w]).max(0.0);
                    let nd = best + rc;
                    if nd < dist[w] {
                        dist[w] = nd;
                        prev[w] = i;
                    }
                }
            }
        }
        let Some(t) = target else {
            break;
        };
        let dt = dist[t];
        for x in 0..v {
            if done[x] {
                pot[x] += dist[x].min(dt);
            } else {
                pot[x] += dt;
            }
        }

        // bottleneck along the path
        let mut delta = left_t[t - ns];
        let mut x = t;
        while prev[x] != usize::MAX {
            let p = prev[x];
            if x < ns {
                // backward arc p (sink) -> x (source)
                delta = delta.min(flow[x * nt + (p - ns)]);
            }
            x = p;
        }
        delta = delta.min(left_s[x]);

        left_t[t - ns] -= delta;
        left_s[x] -= delta;
        let mut x = t;
        while prev[x] != usize::MAX {
            let p = prev[x];
            if x >= ns {
                flow[p * nt + (x - ns)] += delta;
            } else {
                let f = &mut flow[x * nt + (p - ns)];
                *f -= delta;
                if *f <= MASS_EPS {
                    *f = 0.0;
                }
            }
            x = p;
        }
        for s in left_s.iter_mut().chain(left_t.iter_mut()) {
            if *s <= MASS_EPS {
                *s = 0.0;
            }
        }
    }

    let total = flow.iter().zip(cost).map(|(f, c)| f * c).sum();
    (total, flow)
}

/// Earth mover's distance between two grids of equal resolution. Both are
/// renormalized to unit mass first.
pub fn emd(a: &CopulaGrid, b: &CopulaGrid) -> Result<f64> {
    if a.m() != b.m() {
        return Err(Error::Dimension(format!(
            "cannot compare grids with m={} and m={}",
            a.m(),
            b.m()
        )));
    }
    let m = a.m();
    let (ta, tb) = (a.total(), b.total());
    if ta <= 0.0 || tb <= 0.0 {
        return Err(Error::InvalidArgument("grid with zero total mass".into()));
    }
    let mut src = Vec::new();
    let mut supply = Vec::new();
    let mut dst = Vec::new();
    let mut demand = Vec::new();
    for k in 0..m * m {
        let diff = a.masses()[k] / ta - b.masses()[k] / tb;
        if diff > MASS_EPS {
            src.push(k);
            supply.push(diff);
        } else if diff < -MASS_EPS {
            dst.push(k);
            demand.push(-diff);
        }
    }
    if src.is_empty() || dst.is_empty() {
        return Ok(0.0);
    }
    let cost: Vec<f64> = src
        .iter()
        .flat_map(|&s| dst.iter().map(move |&d| ground_distance(m, s, d)))
        .collect();
    Ok(transport(&supply, &demand, &cost).0)
}

/// Symmetric matrix of pairwise distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = f(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self { n, data }
    }

    /// Validates symmetry, zero diagonal and nonnegativity.
    pub fn from_dense(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension(format!("{} entries for {n}x{n}", data.len())));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::InvalidArgument(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let d = data[i * n + j];
                if d.is_nan() || d < 0.0 || d != data[j * n + i] {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({i}, {j}) is negative, NaN or asymmetric"
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Entries strictly above the diagonal, row by row.
    pub fn upper_triangle(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).flat_map(move |i| ((i + 1)..self.n).map(move |j| self.get(i, j)))
    }
}

/// Pairwise EMD of `grids`; one solve per unordered pair.
pub fn distance_matrix(grids: &[CopulaGrid]) -> Result<DistanceMatrix> {
    let n = grids.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} grids; need at least 2")));
    }
    let m = grids[0].m();
    if let Some(g) = grids.iter().find(|g| g.m() != m) {
        return Err(Error::Dimension(format!("mixed resolutions {m} and {}", g.m())));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| emd(&grids[i], &grids[j]))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(DistanceMatrix::from_fn(n, |i, j| rows[i][j - i - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point_mass(m: usize, cell: usize) -> CopulaGrid {
        let mut mass = vec![0.0; m * m];
        mass[cell] = 1.0;
        CopulaGrid::from_mass(m, mass).unwrap()
    }

    #[test]
    fn identical_grids_are_at_zero() {
        let g = CopulaGrid::uniform(10);
        assert_eq!(emd(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn single_mover() {
        let d = emd(&point_mass(10, 0), &point_mass(10, 1)).unwrap();
        assert!((d - 0.1).abs() < 1e-15);
        let d = emd(&point_mass(10, 0), &point_mass(10, 99)).unwrap();
        assert!((d - 2f64.sqrt() * 0.9).abs() < 1e-15);
    }

    #[test]
    fn mismatched_resolution() {
        assert!(emd(&CopulaGrid::uniform(3), &CopulaGrid::uniform(4)).is_err());
    }

    #[test]
    fn one_dimensional_closed_form() {
        // along a single row EMD equals the L1 distance between CDFs times the cell width
        let m = 6;
        let a = [0.1, 0.3, 0.0, 0.2, 0.25, 0.15];
        let b = [0.3, 0.0, 0.1, 0.1, 0.1, 0.4];
        let grid = |row: &[f64]| {
            let mut mass = vec![0.0; m * m];
            mass[..m].copy_from_slice(row);
            CopulaGrid::from_mass(m, mass).unwrap()
        };
        let mut ca = 0.0f64;
        let mut cb = 0.0f64;
        let mut expect = 0.0;
        for k in 0..m {
            ca += a[k];
            cb += b[k];
            expect += (ca - cb).abs() / m as f64;
        }
        let d = emd(&grid(&a), &grid(&b)).unwrap();
        assert!((d - expect).abs() < 1e-12, "{d} vs {expect}");
    }

    #[test]
    fn transport_with_backward_arcs() {
        // greedy nearest assignment is suboptimal here
        let supply = [0.5, 0.5];
        let demand = [0.5, 0.5];
        let cost = [1.0, 2.0, 1.0, 10.0];
        let (c, flow) = transport(&supply, &demand, &cost);
        assert!((c - 1.5).abs() < 1e-15, "{c}");
        assert_eq!(flow, vec![0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn matrix_structure() {
        let grids = vec![point_mass(4, 0), point_mass(4, 5), point_mass(4, 15)];
        let d = distance_matrix(&grids).unwrap();
        for i in 0..3 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..3 {
                assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
        assert_eq!(d.upper_triangle().count(), 3);
        let same = distance_matrix(&[CopulaGrid::uniform(3), CopulaGrid::uniform(3)]).unwrap();
        assert_eq!(same.upper_triangle().collect::<Vec<_>>(), vec![0.0]);
        assert!(distance_matrix(&grids[..1]).is_err());
    }

    fn histogram(m: usize) -> impl Strategy<Value = CopulaGrid> {
        proptest::collection::vec(0.0f64..1.0, m * m).prop_filter_map("mass", move |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-3).then(|| CopulaGrid::from_mass(m, v.iter().map(|x| x / s).collect()).unwrap())
        })
    }

    proptest! {
        #[test]
        fn metric_properties(a in histogram(5), b in histogram(5), c in histogram(5)) {
            let ab = emd(&a, &b).unwrap();
            let ba = emd(&b, &a).unwrap();
            let bc = emd(&b, &c).unwrap();
            let ac = emd(&a, &c).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ac <= ab + bc + 1e-9);
            prop_assert!(ab <= 2f64.sqrt() * 4.0 / 5.0 + 1e-12);
            prop_assert!(emd(&a, &a).unwrap() < 1e-9);
        }
    }
}
