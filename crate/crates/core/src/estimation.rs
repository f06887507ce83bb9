//! Direct compression and the white-noise detector.
//!
//! The baseline estimator is a D-Markov machine: one state per length-`d`
//! context, `δ(ab…, c) = b…c`, and morph rows from additively smoothed
//! next-symbol counts. Every context becomes a state, observed or not, so the
//! transition structure stays total; unobserved contexts get uniform rows and
//! are listed as undersampled.
//!
//! Distances between machines use `θ`, an exponentially weighted average over
//! word lengths of the total-variation distance between next-symbol
//! conditionals.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::machine::{Alphabet, Connectivity, Pfsa};
use crate::stream::SymbolStream;

/// Default additive smoothing constant.
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Streams shorter than this many symbols per context are rejected.
pub const FLOOR_PER_CONTEXT: usize = 10;
/// Largest context table built unless configured otherwise.
pub const DEFAULT_MAX_CONTEXTS: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DMarkovConfig {
    pub depth: usize,
    /// L∞ tolerance for the optional state-merging pass.
    pub merge_tolerance: Option<f64>,
    /// Contexts seen fewer times than this are reported as undersampled.
    pub n_min: u64,
    pub alpha: f64,
    pub max_contexts: usize,
}

impl Default for DMarkovConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            merge_tolerance: None,
            n_min: 20,
            alpha: DEFAULT_ALPHA,
            max_contexts: DEFAULT_MAX_CONTEXTS,
        }
    }
}

impl DMarkovConfig {
    pub fn with_depth(depth: usize) -> Self {
        Self {
            depth,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("context depth must be at least 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config("smoothing constant must be positive".into()));
        }
        if let Some(eps) = self.merge_tolerance {
            if !(eps >= 0.0) {
                return Err(Error::Config("merge tolerance must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// `k^d`, or an error when it exceeds `max`.
fn context_count(symbols: usize, depth: usize, max: usize) -> Result<usize> {
    u32::try_from(depth)
        .ok()
        .and_then(|d| symbols.checked_pow(d))
        .filter(|&n| n <= max)
        .ok_or(Error::TableTooLarge { depth, symbols })
}

/// Incremental next-symbol counts per length-`d` context.
///
/// A context is encoded base `|Σ|` with the oldest symbol most significant.
/// Counting starts once `d` symbols have been seen.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextCounts {
    symbols: usize,
    depth: usize,
    contexts: usize,
    counts: Vec<u64>,
    context: usize,
    seen: u64,
}

impl ContextCounts {
    pub fn new(symbols: usize, depth: usize) -> Result<Self> {
        Self::with_budget(symbols, depth, DEFAULT_MAX_CONTEXTS)
    }

    pub fn with_budget(symbols: usize, depth: usize, max_contexts: usize) -> Result<Self> {
        let contexts = context_count(symbols, depth, max_contexts)?;
        Ok(Self {
            symbols,
            depth,
            contexts,
            counts: vec![0; contexts * symbols],
            context: 0,
            seen: 0,
        })
    }

    pub fn from_stream(stream: &SymbolStream, depth: usize, max_contexts: usize) -> Result<Self> {
        let mut c = Self::with_budget(stream.alphabet().len(), depth, max_contexts)?;
        c.extend(stream.symbols());
        Ok(c)
    }

    #[inline]
    pub fn push(&mut self, symbol: usize) {
        debug_assert!(symbol < self.symbols);
        if self.seen >= self.depth as u64 {
            self.counts[self.context * self.symbols + symbol] += 1;
        }
        if self.contexts > 1 {
            self.context = (self.context * self.symbols + symbol) % self.contexts;
        }
        self.seen += 1;
    }

    pub fn extend(&mut self, symbols: &[usize]) {
        for &s in symbols {
            self.push(s);
        }
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts
    }

    /// Number of symbols pushed so far.
    pub fn len(&self) -> u64 {
        self.seen
    }

    pub fn is_empty(&self) -> bool {
        self.seen == 0
    }

    pub fn row(&self, context: usize) -> &[u64] {
        &self.counts[context * self.symbols..(context + 1) * self.symbols]
    }

    pub fn context_total(&self, context: usize) -> u64 {
        self.row(context).iter().sum()
    }

    /// Counts pooled onto suffixes of length `j ≤ d`: entry `x·k + σ` counts
    /// occurrences of `σ` after any context ending in `x`.
    pub fn pooled(&self, j: usize) -> Vec<u64> {
        assert!(j <= self.depth);
        let width = self.symbols.pow(j as u32);
        let mut out = vec![0u64; width * self.symbols];
        for c in 0..self.contexts {
            let x = c % width;
            for (o, &n) in out[x * self.symbols..(x + 1) * self.symbols]
                .iter_mut()
                .zip(self.row(c))
            {
                *o += n;
            }
        }
        out
    }

    /// Errors when fewer than `10·|Σ|^d` symbols have been seen.
    pub fn check_floor(&self) -> Result<()> {
        let required = FLOOR_PER_CONTEXT * self.contexts;
        if self.seen < required as u64 {
            return Err(Error::StreamTooShort {
                length: self.seen as usize,
                required,
            });
        }
        Ok(())
    }
}

fn smoothed(counts: &[u64], alpha: f64) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    let denom = total as f64 + alpha * counts.len() as f64;
    counts.iter().map(|&c| (c as f64 + alpha) / denom).collect()
}

/// A directly compressed model with its supporting counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedModel {
    pub model: Pfsa,
    /// Observations behind each state's row.
    pub state_counts: Vec<u64>,
    /// States backed by fewer than `n_min` observations.
    pub undersampled: Vec<usize>,
    /// Contexts represented by each state (one unless merged).
    pub contexts: Vec<Vec<usize>>,
    pub depth: usize,
}

/// Estimates a D-Markov machine from a stream.
pub fn estimate_dmarkov(stream: &SymbolStream, cfg: &DMarkovConfig) -> Result<EstimatedModel> {
    cfg.check()?;
    let counts = ContextCounts::from_stream(stream, cfg.depth, cfg.max_contexts)?;
    estimate_from_counts(&counts, stream.alphabet(), cfg)
}

/// Estimates from precomputed counts; the counts' depth wins over `cfg.depth`.
pub fn estimate_from_counts(
    counts: &ContextCounts,
    alphabet: &Alphabet,
    cfg: &DMarkovConfig,
) -> Result<EstimatedModel> {
    cfg.check()?;
    if alphabet.len() != counts.symbols() {
        return Err(Error::AlphabetMismatch);
    }
    counts.check_floor()?;
    let k = counts.symbols();
    let n = counts.num_contexts();
    let d = counts.depth();
    let classes: Vec<usize> = match cfg.merge_tolerance {
        Some(eps) => merge_classes(counts, cfg.alpha, eps),
        None => (0..n).collect(),
    };
    let blocks = classes.iter().copied().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); blocks];
    for (c, &b) in classes.iter().enumerate() {
        members[b].push(c);
    }
    let mut pooled = vec![vec![0u64; k]; blocks];
    for (c, &b) in classes.iter().enumerate() {
        for (p, &x) in pooled[b].iter_mut().zip(counts.row(c)) {
            *p += x;
        }
    }
    let delta: Vec<Vec<usize>> = members
        .iter()
        .map(|m| {
            let c = m[0];
            (0..k).map(|s| classes[(c * k + s) % n]).collect()
        })
        .collect();
    let morph = pooled.iter().map(|r| smoothed(r, cfg.alpha)).collect();
    let state_counts: Vec<u64> = pooled.iter().map(|r| r.iter().sum()).collect();
    let labels = members
        .iter()
        .map(|m| {
            m.iter()
                .map(|&c| context_label(alphabet, c, d))
                .collect::<Vec<_>>()
                .join("|")
        })
        .collect();
    let model = Pfsa::build(
        alphabet.clone(),
        labels,
        classes[0],
        delta,
        morph,
        Connectivity::FromStart,
    )?;
    let undersampled = state_counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c < cfg.n_min)
        .map(|(q, _)| q)
        .collect();
    Ok(EstimatedModel {
        model,
        state_counts,
        undersampled,
        contexts: members,
        depth: d,
    })
}

/// Decodes context `c` of length `d` into symbol indices, oldest first.
pub fn decode_context(mut c: usize, k: usize, d: usize) -> Vec<usize> {
    let mut word = vec![0; d];
    for slot in word.iter_mut().rev() {
        *slot = c % k;
        c /= k;
    }
    word
}

fn context_label(alphabet: &Alphabet, c: usize, d: usize) -> String {
    let word = decode_context(c, alphabet.len(), d);
    if alphabet.single_char_labels() {
        alphabet.render_word(&word)
    } else {
        word.iter()
            .map(|&s| alphabet.label(s))
            .collect::<Vec<_>>()
            .join(".")
    }
}

/// Groups contexts with similar rows, then splits groups until every group
/// maps each symbol into a single group.
///
/// Seeds are taken in decreasing count order; each absorbs the unassigned
/// contexts whose smoothed rows lie within `eps` of its own in L∞.
fn merge_classes(counts: &ContextCounts, alpha: f64, eps: f64) -> Vec<usize> {
    let n = counts.num_contexts();
    let k = counts.symbols();
    let rows: Vec<Vec<f64>> = (0..n).map(|c| smoothed(counts.row(c), alpha)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&c| std::cmp::Reverse(counts.context_total(c)));
    let mut class = vec![usize::MAX; n];
    let mut next = 0;
    for &seed in &order {
        if class[seed] != usize::MAX {
            continue;
        }
        for &c in &order {
            if class[c] == usize::MAX && linf(&rows[seed], &rows[c]) <= eps {
                class[c] = next;
            }
        }
        next += 1;
    }
    loop {
        let mut ids: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
        let refined: Vec<usize> = (0..n)
            .map(|c| {
                let signature = (0..k).map(|s| class[(c * k + s) % n]).collect();
                let fresh = ids.len();
                *ids.entry((class[c], signature)).or_insert(fresh)
            })
            .collect();
        let changed = ids.len() != next;
        next = ids.len();
        class = refined;
        if !changed {
            break;
        }
    }
    // Renumber so the start context's block comes first in context order.
    let mut renumber = HashMap::new();
    class
        .iter()
        .map(|&b| {
            let fresh = renumber.len();
            *renumber.entry(b).or_insert(fresh)
        })
        .collect()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Weight of word length `d` before renormalization.
fn depth_weight(d: usize) -> f64 {
    0.5f64.powi(d as i32 + 1)
}

/// `θ(g1, g2)` to word length `depth`.
///
/// For every word `x` with `|x| ≤ depth`, both machines are walked from their
/// start states and the total-variation distance of their next-symbol rows
/// is taken. Lengths are averaged uniformly over words and weighted by
/// `2^{-(d+1)}`, renormalized to sum to one, so `θ ∈ [0, 1]`.
pub fn theta_distance(g1: &Pfsa, g2: &Pfsa, depth: usize) -> Result<f64> {
    if g1.alphabet() != g2.alphabet() {
        return Err(Error::AlphabetMismatch);
    }
    let k = g1.num_symbols();
    let n2 = g2.num_states();
    // Number of words reaching each state pair; conditionals only depend on
    // the pair. Dense and ordered so sums are reproducible.
    let mut level = vec![0.0; g1.num_states() * n2];
    level[g1.start() * n2 + g2.start()] = 1.0;
    let mut words = 1.0;
    let mut total = 0.0;
    let mut weights = 0.0;
    for d in 0..=depth {
        let term: f64 = level
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(p, &w)| w * half_l1(g1.morph_row(p / n2), g2.morph_row(p % n2)))
            .sum::<f64>()
            / words;
        total += depth_weight(d) * term;
        weights += depth_weight(d);
        if d == depth {
            break;
        }
        let mut next = vec![0.0; level.len()];
        for (p, &w) in level.iter().enumerate().filter(|(_, &w)| w > 0.0) {
            let (a, b) = (p / n2, p % n2);
            for s in 0..k {
                next[g1.next(a, s) * n2 + g2.next(b, s)] += w;
            }
        }
        level = next;
        words *= k as f64;
    }
    Ok(total / weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WhiteNoiseConfig {
    /// Context depth of the estimate.
    pub depth: usize,
    /// Word length of the `θ` comparison.
    pub theta_depth: usize,
    /// Contexts observed fewer times are left out of the average.
    pub n_min: u64,
    pub alpha: f64,
}

impl Default for WhiteNoiseConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            theta_depth: 3,
            n_min: 20,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl WhiteNoiseConfig {
    /// Symbols needed before a score can be computed.
    pub fn floor(&self, symbols: usize) -> usize {
        FLOOR_PER_CONTEXT * symbols.pow(self.depth as u32)
    }
}

/// One word's share of a white-noise score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextContribution {
    pub word: Vec<usize>,
    pub count: u64,
    /// Total-variation distance of the word's next-symbol row from uniform.
    pub deviation: f64,
    pub included: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhiteNoiseScore {
    pub score: f64,
    pub length: u64,
    pub contributions: Vec<ContextContribution>,
}

/// `θ` between the depth-`d` estimate of `stream` and white noise.
pub fn white_noise_score(stream: &SymbolStream, cfg: &WhiteNoiseConfig) -> Result<WhiteNoiseScore> {
    let counts = ContextCounts::from_stream(stream, cfg.depth, DEFAULT_MAX_CONTEXTS)?;
    white_noise_score_counts(&counts, cfg)
}

/// [`white_noise_score`] on counts gathered incrementally.
///
/// The sensed process is stationary and its phase is unknown, so the
/// estimate is entered through its empirical context distribution: a word
/// shorter than `d` conditions on every context ending in it (pooled counts),
/// and a longer word on its last `d` symbols. White noise has the same
/// conditionals from every state, so no start state is involved. Words whose
/// context was seen fewer than `n_min` times are excluded; word lengths with
/// nothing included drop out of the weighting. With nothing included at all
/// the score is `1`.
pub fn white_noise_score_counts(
    counts: &ContextCounts,
    cfg: &WhiteNoiseConfig,
) -> Result<WhiteNoiseScore> {
    if counts.depth() != cfg.depth {
        return Err(Error::DepthMismatch(counts.depth(), cfg.depth));
    }
    counts.check_floor()?;
    let k = counts.symbols();
    let uniform = vec![1.0 / k as f64; k];
    let mut contributions = Vec::new();
    let mut level_means = Vec::with_capacity(cfg.depth + 1);
    for j in 0..=cfg.depth.min(cfg.theta_depth) {
        let pooled = counts.pooled(j);
        let (mut sum, mut included) = (0.0, 0usize);
        for (x, row) in pooled.chunks(k).enumerate() {
            let count: u64 = row.iter().sum();
            let deviation = half_l1(&smoothed(row, cfg.alpha), &uniform);
            let ok = count >= cfg.n_min;
            if ok {
                sum += deviation;
                included += 1;
            }
            contributions.push(ContextContribution {
                word: decode_context(x, k, j),
                count,
                deviation,
                included: ok,
            });
        }
        level_means.push((included > 0).then(|| sum / included as f64));
    }
    // Longer words condition on their last d symbols only; the mean over
    // words equals the mean over contexts.
    let deepest = *level_means.last().expect("at least one level");
    for _ in level_means.len()..=cfg.theta_depth {
        level_means.push(deepest);
    }
    let (mut total, mut weights) = (0.0, 0.0);
    for (d, mean) in level_means.iter().enumerate() {
        if let Some(m) = mean {
            total += depth_weight(d) * m;
            weights += depth_weight(d);
        }
    }
    let score = if weights > 0.0 { total / weights } else { 1.0 };
    Ok(WhiteNoiseScore {
        score,
        length: counts.len(),
        contributions,
    })
}
