//! Symbol generation from machines.
//!
//! Symbols are drawn by inverting the cumulative morph row of the current
//! state with one uniform key, located by bisection in at most
//! `⌈log₂|Σ|⌉` comparisons.
//!
//! [`RandomSource`] wraps ChaCha8 seeded from a 64-bit value; keys are the
//! generator's standard `f64` draws in `[0, 1)`. Streams are reproducible for
//! a given seed and build, and statistical tests never rely on exact bytes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::machine::{Alphabet, Pfsa};

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for sub-stream `stream` of `seed`.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Seeded source of uniform keys in `[0, 1)`.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Source for sub-stream `stream` of `seed`; see [`mix_seed`].
    pub fn derive(seed: u64, stream: u64) -> Self {
        Self::new(mix_seed(seed, stream))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

/// Row-wise prefix sums of a morph matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeMorphMatrix {
    symbols: usize,
    data: Vec<f64>,
}

impl CumulativeMorphMatrix {
    pub fn row(&self, state: usize) -> &[f64] {
        &self.data[state * self.symbols..(state + 1) * self.symbols]
    }

    pub fn num_states(&self) -> usize {
        self.data.len() / self.symbols
    }
}

/// Prefix sums of every morph row; the last entry of each row is pinned to
/// exactly one so that every key in `[0, 1)` maps to a symbol.
pub fn cumulative_morph(g: &Pfsa) -> CumulativeMorphMatrix {
    let k = g.num_symbols();
    let mut data = Vec::with_capacity(g.num_states() * k);
    for q in 0..g.num_states() {
        let mut acc = 0.0;
        for &p in g.morph_row(q) {
            acc += p;
            data.push(acc);
        }
        *data.last_mut().expect("alphabet is non-empty") = 1.0;
    }
    CumulativeMorphMatrix { symbols: k, data }
}

/// Least index `j` with `key ≤ row[j]`.
#[inline]
pub fn sample_symbol(row: &[f64], key: f64) -> usize {
    sample_symbol_counted(row, key).0
}

/// [`sample_symbol`] that also reports the number of bisection steps.
#[inline]
pub fn sample_symbol_counted(row: &[f64], key: f64) -> (usize, u32) {
    let (mut lo, mut hi) = (0usize, row.len() - 1);
    let mut steps = 0;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        steps += 1;
        if key <= row[mid] {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    (lo, steps)
}

/// `⌈log₂ n⌉`, the bisection step bound for an `n`-symbol alphabet.
pub fn max_bisection_steps(n: usize) -> u32 {
    usize::BITS - (n.max(1) - 1).leading_zeros()
}

/// Running totals of sampling work.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BisectionStats {
    pub calls: u64,
    pub steps: u64,
    pub max_steps: u32,
}

impl BisectionStats {
    #[inline]
    pub fn record(&mut self, steps: u32) {
        self.calls += 1;
        self.steps += u64::from(steps);
        self.max_steps = self.max_steps.max(steps);
    }

    pub fn merge(&mut self, other: &BisectionStats) {
        self.calls += other.calls;
        self.steps += other.steps;
        self.max_steps = self.max_steps.max(other.max_steps);
    }
}

/// Where a stream came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StreamOrigin {
    pub model: Option<String>,
    pub seed: Option<u64>,
}

/// A finite sequence of symbol indices over an alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolStream {
    alphabet: Alphabet,
    symbols: Vec<usize>,
    pub origin: StreamOrigin,
}

impl SymbolStream {
    pub fn new(alphabet: Alphabet, symbols: Vec<usize>) -> Result<Self> {
        if let Some(&index) = symbols.iter().find(|&&s| s >= alphabet.len()) {
            return Err(Error::UnknownSymbol {
                index,
                size: alphabet.len(),
            });
        }
        Ok(Self {
            alphabet,
            symbols,
            origin: StreamOrigin::default(),
        })
    }

    pub fn with_origin(mut self, model: Option<String>, seed: Option<u64>) -> Self {
        self.origin = StreamOrigin { model, seed };
        self
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// The first `n` symbols (or all of them).
    pub fn prefix(&self, n: usize) -> SymbolStream {
        SymbolStream {
            alphabet: self.alphabet.clone(),
            symbols: self.symbols[..n.min(self.len())].to_vec(),
            origin: self.origin.clone(),
        }
    }

    /// Relative frequency of each symbol.
    pub fn frequencies(&self) -> Vec<f64> {
        let mut counts = vec![0u64; self.alphabet.len()];
        for &s in &self.symbols {
            counts[s] += 1;
        }
        let n = self.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }
}

/// Incremental symbol emitter for one machine.
#[derive(Debug, Clone)]
pub struct Generator<'a> {
    machine: &'a Pfsa,
    cumulative: CumulativeMorphMatrix,
    state: usize,
    source: RandomSource,
    stats: BisectionStats,
}

impl<'a> Generator<'a> {
    pub fn new(machine: &'a Pfsa, seed: u64) -> Self {
        Self {
            machine,
            cumulative: cumulative_morph(machine),
            state: machine.start(),
            source: RandomSource::new(seed),
            stats: BisectionStats::default(),
        }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn stats(&self) -> BisectionStats {
        self.stats
    }

    /// Emits one symbol and moves along its transition.
    pub fn next_symbol(&mut self) -> usize {
        let key = self.source.next_uniform();
        let (s, steps) = sample_symbol_counted(self.cumulative.row(self.state), key);
        self.stats.record(steps);
        self.state = self.machine.next(self.state, s);
        s
    }
}

/// `n` symbols emitted by `g` from its start state.
pub fn generate_stream(g: &Pfsa, n: usize, seed: u64) -> SymbolStream {
    let mut generator = Generator::new(g, seed);
    let symbols = (0..n).map(|_| generator.next_symbol()).collect();
    SymbolStream {
        alphabet: g.alphabet().clone(),
        symbols,
        origin: StreamOrigin {
            model: None,
            seed: Some(seed),
        },
    }
}

/// Result of a Plus-machine simulation.
#[derive(Debug, Clone)]
pub struct PlusRun {
    /// Observable output: symbols on which both components agreed.
    pub output: SymbolStream,
    /// State of the synchronized pair at each emission.
    pub emission_states: Vec<usize>,
    pub attempts: u64,
    pub attempts_per_state: Vec<u64>,
    /// `emissions[q][σ]`: number of times `σ` was emitted at state `q`.
    pub emissions: Vec<Vec<u64>>,
}

impl PlusRun {
    pub fn emitted(&self) -> u64 {
        self.output.len() as u64
    }

    /// Empirical distribution of emitted symbols at each state.
    pub fn emitted_conditionals(&self) -> Vec<Vec<f64>> {
        self.emissions
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| c as f64 / total.max(1) as f64)
                    .collect()
            })
            .collect()
    }

    /// Fraction of attempts at each state that produced an emission.
    pub fn match_rates(&self) -> Vec<f64> {
        self.emissions
            .iter()
            .zip(&self.attempts_per_state)
            .map(|(row, &a)| row.iter().sum::<u64>() as f64 / a.max(1) as f64)
            .collect()
    }
}

/// Runs the Plus-machine for `steps` generation attempts.
///
/// Both components start at `q₀` and draw symbols independently. On a match
/// the symbol is emitted and both move; otherwise nothing is emitted and
/// neither moves.
pub fn plus_machine_run(g1: &Pfsa, g2: &Pfsa, steps: u64, seed: u64) -> Result<PlusRun> {
    if !g1.structurally_equal(g2) {
        return Err(Error::StructureMismatch);
    }
    let (c1, c2) = (cumulative_morph(g1), cumulative_morph(g2));
    let (mut r1, mut r2) = (RandomSource::derive(seed, 1), RandomSource::derive(seed, 2));
    let n = g1.num_states();
    let k = g1.num_symbols();
    let mut state = g1.start();
    let mut symbols = Vec::new();
    let mut emission_states = Vec::new();
    let mut attempts_per_state = vec![0u64; n];
    let mut emissions = vec![vec![0u64; k]; n];
    for _ in 0..steps {
        attempts_per_state[state] += 1;
        let a = sample_symbol(c1.row(state), r1.next_uniform());
        let b = sample_symbol(c2.row(state), r2.next_uniform());
        if a == b {
            symbols.push(a);
            emission_states.push(state);
            emissions[state][a] += 1;
            state = g1.next(state, a);
        }
    }
    Ok(PlusRun {
        output: SymbolStream {
            alphabet: g1.alphabet().clone(),
            symbols,
            origin: StreamOrigin {
                model: None,
                seed: Some(seed),
            },
        },
        emission_states,
        attempts: steps,
        attempts_per_state,
        emissions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{add_same_structure, invert};
    use crate::analysis::harmonic_means;
    use crate::catalog;
    use crate::markov::TransitionMatrix;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cumulative_rows() {
        let g = catalog::e1();
        let c = cumulative_morph(&g);
        assert_eq!(c.row(0), &[0.2, 1.0]);

        let g = Pfsa::from_parts(
            Alphabet::numeric(4),
            vec!["a".into(), "b".into()],
            0,
            vec![vec![1; 4], vec![0; 4]],
            vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.25; 4]],
        )
        .unwrap();
        let c = cumulative_morph(&g);
        let expected = [0.1, 0.3, 0.6, 1.0];
        for (a, b) in c.row(0).iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(c.row(1), &[0.25, 0.5, 0.75, 1.0]);
        assert_eq!(c.row(0)[3], 1.0);
    }

    #[test]
    fn sampling_examples() {
        assert_eq!(sample_symbol(&[0.2, 1.0], 0.15), 0);
        assert_eq!(sample_symbol(&[0.2, 1.0], 0.95), 1);
        let (idx, steps) = sample_symbol_counted(&[0.1, 0.3, 0.6, 1.0], 0.45);
        assert_eq!(idx, 2);
        assert!(steps <= 2);
        assert_eq!(sample_symbol(&[0.1, 0.3, 0.6, 1.0], 0.0), 0);
        assert_eq!(sample_symbol(&[0.1, 0.3, 0.6, 1.0], 0.999_999), 3);
    }

    #[test]
    fn bisection_bound_holds_for_every_key_position() {
        for n in 1..=40usize {
            let row: Vec<f64> = (1..=n).map(|j| j as f64 / n as f64).collect();
            let bound = max_bisection_steps(n);
            assert_eq!(bound, (n as f64).log2().ceil() as u32);
            for i in 0..(4 * n) {
                let key = (i as f64 + 0.5) / (4 * n) as f64;
                let (idx, steps) = sample_symbol_counted(&row, key);
                assert!(steps <= bound);
                assert!(key <= row[idx] && (idx == 0 || key > row[idx - 1]));
            }
        }
    }

    #[test]
    fn uniform_keys_pass_kolmogorov_smirnov() {
        let mut src = RandomSource::new(99);
        let n = 100_000;
        let mut keys: Vec<f64> = (0..n).map(|_| src.next_uniform()).collect();
        keys.sort_by(f64::total_cmp);
        let d = keys
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let lo = x - i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64 - x;
                lo.max(hi)
            })
            .fold(0.0, f64::max);
        assert!(d < 0.01, "K-S statistic {d}");
        assert!(keys.iter().all(|&k| (0.0..1.0).contains(&k)));
    }

    #[test]
    fn streams_are_reproducible() {
        let g = catalog::m2();
        assert!(generate_stream(&g, 0, 1).is_empty());
        let a = generate_stream(&g, 500, 7);
        let b = generate_stream(&g, 500, 7);
        let c = generate_stream(&g, 500, 8);
        assert_eq!(a.symbols(), b.symbols());
        assert_ne!(a.symbols()[..64], c.symbols()[..64]);
        assert_eq!(a.origin.seed, Some(7));
    }

    #[test]
    fn white_stream_frequencies() {
        let w = catalog::white();
        let s = generate_stream(&w, 100_000, 3);
        for f in s.frequencies() {
            assert!((f - 0.5).abs() <= 0.006, "{f}");
        }
    }

    #[test]
    fn e1_symbol_frequency_matches_stationary_mix() {
        // ℘Π̃ column 1 = (1/3)(0.8) + (2/3)(0.6)
        let s = generate_stream(&catalog::e1(), 100_000, 4);
        assert_abs_diff_eq!(s.frequencies()[1], 2.0 / 3.0, epsilon = 0.005);
    }

    #[test]
    fn generator_respects_bisection_bound() {
        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(1);
        let g = Pfsa::random(&mut rng, 5, 7);
        let mut generator = Generator::new(&g, 2);
        for _ in 0..10_000 {
            generator.next_symbol();
        }
        let stats = generator.stats();
        assert_eq!(stats.calls, 10_000);
        assert!(stats.max_steps <= max_bisection_steps(7));
    }

    #[test]
    fn plus_machine_with_uniform_partner_reproduces_rows() {
        let g = catalog::m2();
        let run = plus_machine_run(&g, &g.uniform_lift(), 200_000, 5).unwrap();
        let target = add_same_structure(&g, &g.uniform_lift()).unwrap();
        for (q, row) in run.emitted_conditionals().iter().enumerate() {
            for (a, b) in row.iter().zip(target.morph_row(q)) {
                assert!((a - b).abs() <= 0.02, "state {q}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn plus_machine_with_inverse_is_white_at_harmonic_rate() {
        let g = catalog::e1();
        let run = plus_machine_run(&g, &invert(&g), 200_000, 6).unwrap();
        let h = harmonic_means(&g);
        for (q, row) in run.emitted_conditionals().iter().enumerate() {
            for &p in row {
                assert!((p - 0.5).abs() <= 0.02);
            }
            assert!((run.match_rates()[q] - h[q]).abs() <= 0.01);
        }
    }

    #[test]
    fn plus_machine_emitted_fraction() {
        // Attempts form a lazy chain: stay put unless the components agree.
        let g = catalog::m2();
        let inv = invert(&g);
        let run = plus_machine_run(&g, &inv, 500_000, 9).unwrap();
        let match_prob = harmonic_means(&g);
        let sum = add_same_structure(&g, &inv).unwrap();
        let n = g.num_states();
        let sum_t = sum.transition_matrix();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let stay = if i == j { 1.0 - match_prob[i] } else { 0.0 };
                        stay + match_prob[i] * sum_t.get(i, j)
                    })
                    .collect()
            })
            .collect();
        let lazy = TransitionMatrix::from_rows(&rows).stationary_distribution().unwrap();
        let expected: f64 = lazy
            .values()
            .iter()
            .zip(&match_prob)
            .map(|(w, m)| w * m)
            .sum();
        let observed = run.emitted() as f64 / run.attempts as f64;
        assert!((observed - expected).abs() / expected <= 0.02);
    }

    #[test]
    fn plus_machine_rejects_different_structures() {
        assert!(matches!(
            plus_machine_run(&catalog::e1(), &catalog::s1(), 10, 0),
            Err(Error::StructureMismatch)
        ));
    }
}
