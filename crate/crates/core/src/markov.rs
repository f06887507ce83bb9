//! State-level Markov chain view of a machine.

use crate::error::{Error, Result};

const POWER_ITERATION_CAP: usize = 100_000;
const POWER_RESIDUAL: f64 = 1e-12;
/// Largest chain for which the dense solve fallback is attempted.
const DENSE_SOLVE_LIMIT: usize = 64;

/// Row-stochastic `|Q|×|Q|` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_flat(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let data = rows.iter().flat_map(|r| {
            assert_eq!(r.len(), n);
            r.iter().copied()
        });
        Self {
            n,
            data: data.collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// `x Π` for a row vector `x`.
    pub fn left_multiply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(i)) {
                *o += xi * p;
            }
        }
        out
    }

    /// `‖xΠ − x‖∞`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.left_multiply(x)
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Stationary distribution by power iteration, falling back to a dense
    /// linear solve when iteration does not settle (e.g. periodic chains).
    pub fn stationary_distribution(&self) -> Result<StationaryDistribution> {
        let n = self.n;
        let mut x = vec![1.0 / n as f64; n];
        let mut residual = f64::INFINITY;
        for _ in 0..POWER_ITERATION_CAP {
            let mut y = self.left_multiply(&x);
            let total: f64 = y.iter().sum();
            y.iter_mut().for_each(|v| *v /= total);
            residual = y
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            x = y;
            if residual < POWER_RESIDUAL {
                return StationaryDistribution::new(x);
            }
        }
        if n <= DENSE_SOLVE_LIMIT {
            if let Some(x) = self.solve_stationary() {
                let r = self.residual(&x);
                if r < 1e-10 && x.iter().all(|&v| v > 0.0) {
                    return StationaryDistribution::new(x);
                }
            }
        }
        Err(Error::ConvergenceFailure {
            iterations: POWER_ITERATION_CAP,
            residual,
        })
    }

    /// Solves `x(Π − I) = 0`, `Σx = 1` by Gaussian elimination with partial
    /// pivoting.
    fn solve_stationary(&self) -> Option<Vec<f64>> {
        let n = self.n;
        // Row r of the system is column r of (Π − I); the last equation is
        // replaced by the normalization constraint.
        let mut a = vec![vec![0.0; n + 1]; n];
        for (r, eq) in a.iter_mut().enumerate().take(n - 1) {
            for (c, v) in eq.iter_mut().enumerate().take(n) {
                *v = self.get(c, r) - if c == r { 1.0 } else { 0.0 };
            }
        }
        for v in a[n - 1].iter_mut() {
            *v = 1.0;
        }
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
            if a[pivot][col].abs() < 1e-300 {
                return None;
            }
            a.swap(col, pivot);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    if f != 0.0 {
                        for c in col..=n {
                            a[r][c] -= f * a[col][c];
                        }
                    }
                }
            }
        }
        Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
    }
}

/// Stationary distribution `℘` of an irreducible chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    values: Vec<f64>,
    min: f64,
}

impl StationaryDistribution {
    fn new(mut values: Vec<f64>) -> Result<Self> {
        let total: f64 = values.iter().sum();
        values.iter_mut().for_each(|v| *v /= total);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::NotIrreducible);
        }
        Ok(Self { values, min })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `℘⋆ = minᵢ ℘ᵢ`.
    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
