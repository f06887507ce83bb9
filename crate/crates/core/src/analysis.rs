//! Annihilation performance analytics.
//!
//! For a correctly synchronized annihilator a symbol survives at state `i`
//! with probability `𝓗ᵢ`, the harmonic mean of the morph row. The long-run
//! surviving fraction is therefore `λ = Σᵢ ℘ᵢ 𝓗ᵢ`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::machine::Pfsa;
use crate::markov::{StationaryDistribution, TransitionMatrix};

/// Slack allowed when checking `β₁ ≤ |Σ|/|Q|`.
pub const BOUND_SLACK: f64 = 1e-12;

/// `𝓗ᵢ = |Σ| / Σⱼ 1/Π̃ᵢⱼ` for every state.
pub fn harmonic_means(g: &Pfsa) -> Vec<f64> {
    (0..g.num_states())
        .map(|q| harmonic_mean(g.morph_row(q)))
        .collect()
}

pub fn harmonic_mean(row: &[f64]) -> f64 {
    row.len() as f64 / row.iter().map(|p| 1.0 / p).sum::<f64>()
}

/// The auxiliary machine over `Σ ∪ Σ′`.
///
/// At state `i`, unprimed `σ` carries `𝓗ᵢ/|Σ|` (the chance that an
/// annihilator component agrees on `σ`) and primed `σ′` carries the rest of
/// `Π̃ᵢσ`. Both copies move like `σ`. Only the unprimed symbols are
/// observable, so this is an analysis object and not a [`Pfsa`].
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryModel {
    symbols: usize,
    states: usize,
    /// `|Q| × 2|Σ|`; columns `0..|Σ|` unprimed, `|Σ|..2|Σ|` primed.
    morph: Vec<f64>,
    delta: Vec<usize>,
    labels: Vec<String>,
}

impl AuxiliaryModel {
    pub fn num_states(&self) -> usize {
        self.states
    }

    /// Size of the doubled alphabet.
    pub fn num_symbols(&self) -> usize {
        2 * self.symbols
    }

    /// Doubled alphabet labels: `σ…` followed by `σ′…`.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row(&self, q: usize) -> &[f64] {
        let w = self.num_symbols();
        &self.morph[q * w..(q + 1) * w]
    }

    pub fn unprimed(&self, q: usize) -> &[f64] {
        &self.row(q)[..self.symbols]
    }

    pub fn primed(&self, q: usize) -> &[f64] {
        &self.row(q)[self.symbols..]
    }

    pub fn next(&self, q: usize, symbol: usize) -> usize {
        self.delta[q * self.num_symbols() + symbol]
    }

    /// Smallest primed entry. Positive for every valid machine, since
    /// `𝓗ᵢ/|Σ| = 1/Σⱼ Π̃ᵢⱼ⁻¹ < minⱼ Π̃ᵢⱼ` whenever `|Σ| ≥ 2`.
    pub fn min_primed(&self) -> f64 {
        (0..self.states)
            .flat_map(|q| self.primed(q).iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn transition_matrix(&self) -> TransitionMatrix {
        let n = self.states;
        let mut data = vec![0.0; n * n];
        for q in 0..n {
            for (s, &p) in self.row(q).iter().enumerate() {
                data[q * n + self.next(q, s)] += p;
            }
        }
        TransitionMatrix::from_flat(n, data)
    }

    pub fn stationary_distribution(&self) -> Result<StationaryDistribution> {
        self.transition_matrix().stationary_distribution()
    }
}

pub fn auxiliary_pfsa(g: &Pfsa) -> AuxiliaryModel {
    let k = g.num_symbols();
    let n = g.num_states();
    let h = harmonic_means(g);
    let mut morph = Vec::with_capacity(n * 2 * k);
    let mut delta = Vec::with_capacity(n * 2 * k);
    for q in 0..n {
        let share = h[q] / k as f64;
        morph.extend(std::iter::repeat_n(share, k));
        morph.extend(g.morph_row(q).iter().map(|p| p - share));
        for _ in 0..2 {
            delta.extend((0..k).map(|s| g.next(q, s)));
        }
    }
    let labels = g
        .alphabet()
        .labels()
        .iter()
        .cloned()
        .chain(g.alphabet().labels().iter().map(|l| format!("{l}'")))
        .collect();
    AuxiliaryModel {
        symbols: k,
        states: n,
        morph,
        delta,
        labels,
    }
}

/// `λ = Σᵢ ℘ᵢ 𝓗ᵢ`.
pub fn expected_observable_fraction(g: &Pfsa) -> Result<f64> {
    let p = g.stationary_distribution()?;
    Ok(dot(p.values(), &harmonic_means(g)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn beta1_of(g: &Pfsa, p: &StationaryDistribution, h: &[f64], lambda: f64) -> f64 {
    let k = g.num_symbols() as f64;
    let n = g.num_states() as f64;
    let inv_sum: f64 = h.iter().map(|x| 1.0 / x).sum();
    k * n * p.min() / (lambda * inv_sum)
}

/// `(β₁, |Σ|/|Q|)`, the two upper bounds on the annihilation advantage.
///
/// White-noise machines make the first bound degenerate and are rejected
/// with [`Error::WhiteNoiseInput`], which carries both values.
pub fn beta_bounds(g: &Pfsa) -> Result<(f64, f64)> {
    let profile = AnnihilationProfile::of(g)?;
    if profile.white_noise {
        return Err(Error::WhiteNoiseInput {
            beta1: profile.beta1,
            ratio_bound: profile.ratio_bound,
        });
    }
    Ok((profile.beta1, profile.ratio_bound))
}

/// `β = L_w / (L_d λ)`.
pub fn measured_beta(white_length: f64, direct_length: f64, lambda: f64) -> f64 {
    white_length / (direct_length * lambda)
}

/// Everything the analysis knows about a machine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnihilationProfile {
    pub harmonic_means: Vec<f64>,
    pub stationary: Vec<f64>,
    pub lambda: f64,
    pub min_stationary: f64,
    pub beta1: f64,
    pub ratio_bound: f64,
    /// Every row is uniform; `β₁` then carries no information.
    pub white_noise: bool,
}

impl AnnihilationProfile {
    pub fn of(g: &Pfsa) -> Result<Self> {
        let p = g.stationary_distribution()?;
        let h = harmonic_means(g);
        let lambda = dot(p.values(), &h);
        let beta1 = beta1_of(g, &p, &h, lambda);
        let ratio_bound = g.num_symbols() as f64 / g.num_states() as f64;
        debug_assert!(beta1 <= ratio_bound * (1.0 + 1e-9) + BOUND_SLACK);
        Ok(Self {
            harmonic_means: h,
            stationary: p.values().to_vec(),
            lambda,
            min_stationary: p.min(),
            beta1,
            ratio_bound,
            white_noise: g.is_white_noise(),
        })
    }
}
