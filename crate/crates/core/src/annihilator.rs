//! Online classification by semantic annihilation.
//!
//! A bank for pattern `G` runs one copy of `H = −G` from every state of `H`.
//! Each copy draws its own symbol for every sensed symbol and lets the sensed
//! symbol through only when the two agree; it then follows the *sensed*
//! symbol. The copy that happens to be synchronized with the source turns a
//! stream from `G` into symbolic white noise, which the detector recognizes.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::invert;
use crate::error::{Error, Result};
use crate::estimation::{white_noise_score_counts, ContextCounts, WhiteNoiseConfig};
use crate::machine::{Alphabet, Pfsa};
use crate::stream::{
    cumulative_morph, generate_stream, max_bisection_steps, mix_seed, sample_symbol_counted,
    BisectionStats, CumulativeMorphMatrix, RandomSource, SymbolStream,
};

/// `ξ`: the sensed symbol if the generated one agrees, otherwise nothing.
#[inline]
pub fn erase(sensed: usize, generated: usize) -> Option<usize> {
    (sensed == generated).then_some(sensed)
}

/// One copy of the inverse pattern.
#[derive(Debug, Clone)]
pub struct AnnihilatorComponent {
    inverse: Arc<Pfsa>,
    cumulative: Arc<CumulativeMorphMatrix>,
    initial: usize,
    state: usize,
    source: RandomSource,
    emitted: Vec<usize>,
    counts: ContextCounts,
    sensed: u64,
    stats: BisectionStats,
}

impl AnnihilatorComponent {
    fn new(
        inverse: Arc<Pfsa>,
        cumulative: Arc<CumulativeMorphMatrix>,
        initial: usize,
        seed: u64,
        depth: usize,
    ) -> Result<Self> {
        let counts = ContextCounts::new(inverse.num_symbols(), depth)?;
        Ok(Self {
            inverse,
            cumulative,
            initial,
            state: initial,
            source: RandomSource::new(seed),
            emitted: Vec::new(),
            counts,
            sensed: 0,
            stats: BisectionStats::default(),
        })
    }

    /// Draws a symbol from the current state and erases against it.
    #[inline]
    pub fn step(&mut self, sensed: usize) -> Option<usize> {
        let key = self.source.next_uniform();
        let (generated, steps) = sample_symbol_counted(self.cumulative.row(self.state), key);
        self.stats.record(steps);
        self.step_forced(sensed, generated)
    }

    /// [`step`](Self::step) with the generated symbol supplied by the caller.
    pub fn step_forced(&mut self, sensed: usize, generated: usize) -> Option<usize> {
        let out = erase(sensed, generated);
        if let Some(s) = out {
            self.emitted.push(s);
            self.counts.push(s);
        }
        self.state = self.inverse.next(self.state, sensed);
        self.sensed += 1;
        out
    }

    pub fn initial_state(&self) -> usize {
        self.initial
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn emitted(&self) -> &[usize] {
        &self.emitted
    }

    pub fn emitted_len(&self) -> u64 {
        self.emitted.len() as u64
    }

    pub fn sensed_len(&self) -> u64 {
        self.sensed
    }

    /// Context counts of the emitted stream, kept for the detector.
    pub fn counts(&self) -> &ContextCounts {
        &self.counts
    }

    pub fn stats(&self) -> BisectionStats {
        self.stats
    }

    pub fn seed(&self) -> u64 {
        self.source.seed()
    }
}

/// All copies of one inverse pattern.
#[derive(Debug, Clone)]
pub struct AnnihilatorBank {
    id: String,
    pattern: Pfsa,
    inverse: Arc<Pfsa>,
    components: Vec<AnnihilatorComponent>,
}

/// Detector depth used by [`build_bank`].
pub const DEFAULT_SCORE_DEPTH: usize = 3;

/// A bank for `pattern` with components seeded from `seed`.
pub fn build_bank(pattern: &Pfsa, seed: u64) -> AnnihilatorBank {
    AnnihilatorBank::new("pattern", pattern, seed, DEFAULT_SCORE_DEPTH)
        .expect("default detector depth fits")
}

impl AnnihilatorBank {
    /// Component `j` starts at state `j` of `−pattern` and draws from the
    /// seed `mix_seed(seed, j)`. Emitted symbols are counted at `depth` for
    /// the detector.
    pub fn new(id: impl Into<String>, pattern: &Pfsa, seed: u64, depth: usize) -> Result<Self> {
        let inverse = Arc::new(invert(pattern));
        let cumulative = Arc::new(cumulative_morph(&inverse));
        let components = (0..inverse.num_states())
            .map(|j| {
                AnnihilatorComponent::new(
                    inverse.clone(),
                    cumulative.clone(),
                    j,
                    mix_seed(seed, j as u64),
                    depth,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            id: id.into(),
            pattern: pattern.clone(),
            inverse,
            components,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn pattern(&self) -> &Pfsa {
        &self.pattern
    }

    pub fn inverse(&self) -> &Pfsa {
        &self.inverse
    }

    pub fn alphabet(&self) -> &Alphabet {
        self.inverse.alphabet()
    }

    pub fn components(&self) -> &[AnnihilatorComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Broadcasts one sensed symbol to every component.
    pub fn feed_symbol(&mut self, sensed: usize) {
        for c in &mut self.components {
            c.step(sensed);
        }
    }

    /// Feeds a run of sensed symbols; components run concurrently.
    pub fn feed_symbols(&mut self, sensed: &[usize]) {
        self.components.par_iter_mut().for_each(|c| {
            for &s in sensed {
                c.step(s);
            }
        });
    }

    pub fn feed(&mut self, stream: &SymbolStream) -> Result<()> {
        if stream.alphabet() != self.alphabet() {
            return Err(Error::AlphabetMismatch);
        }
        self.feed_symbols(stream.symbols());
        Ok(())
    }

    /// The stream emitted so far by every component.
    pub fn outputs(&self) -> Vec<SymbolStream> {
        self.components
            .iter()
            .map(|c| {
                SymbolStream::new(self.alphabet().clone(), c.emitted.clone())
                    .expect("emitted symbols come from the sensed alphabet")
            })
            .collect()
    }

    /// Combined sampling work of all components.
    pub fn stats(&self) -> BisectionStats {
        let mut total = BisectionStats::default();
        for c in &self.components {
            total.merge(&c.stats);
        }
        total
    }

    /// `m·⌈log₂|Σ|⌉`, the bound on sampling steps per sensed symbol.
    pub fn work_bound_per_symbol(&self) -> u64 {
        self.len() as u64 * u64::from(max_bisection_steps(self.alphabet().len()))
    }
}

/// Feeds `stream` to `bank` and returns every component's output.
pub fn bank_feed(bank: &mut AnnihilatorBank, stream: &SymbolStream) -> Result<Vec<SymbolStream>> {
    bank.feed(stream)?;
    Ok(bank.outputs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifyConfig {
    /// Fixed white-noise threshold.
    pub tau: f64,
    /// Replace `tau` by a Monte Carlo quantile of white-noise scores at the
    /// emitted length.
    pub calibrate: bool,
    pub calibration_trials: usize,
    pub calibration_quantile: f64,
    /// Emitted symbols required before a positive verdict.
    pub min_emitted: u64,
    /// Sensed symbols between online reports.
    pub check_interval: u64,
    /// Require the sensed stream itself to fail the white-noise test unless
    /// the pattern is white noise.
    pub cross_check: bool,
    pub detector: WhiteNoiseConfig,
    pub seed: u64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            calibrate: false,
            calibration_trials: 1000,
            calibration_quantile: 0.99,
            min_emitted: 2000,
            check_interval: 500,
            cross_check: true,
            detector: WhiteNoiseConfig::default(),
            seed: 0,
        }
    }
}

impl ClassifyConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if self.check_interval == 0 {
            return Err(Error::Config("check interval must be positive".into()));
        }
        if self.calibrate
            && (self.calibration_trials == 0
                || !(self.calibration_quantile > 0.0 && self.calibration_quantile < 1.0))
        {
            return Err(Error::Config("calibration needs trials and a quantile in (0, 1)".into()));
        }
        if self.detector.depth == 0 {
            return Err(Error::Config("detector depth must be at least 1".into()));
        }
        Ok(())
    }

    /// Threshold for a component that emitted `emitted` symbols.
    pub fn threshold(&self, symbols: usize, emitted: u64) -> f64 {
        if self.calibrate {
            calibrated_threshold(symbols, emitted, self)
        } else {
            self.tau
        }
    }
}

type CalibrationKey = (usize, u64, usize, usize, u64, usize, u64);

fn calibration_cache() -> &'static Mutex<HashMap<CalibrationKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<CalibrationKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Quantile of white-noise scores of true white streams.
///
/// Lengths are bucketed to the largest power of two not above `emitted`
/// (but at least the detector floor), so the threshold is computed on a
/// sample no longer than the one it judges. Results are cached per bucket.
pub fn calibrated_threshold(symbols: usize, emitted: u64, cfg: &ClassifyConfig) -> f64 {
    let floor = cfg.detector.floor(symbols) as u64;
    let bucket = if emitted <= floor {
        floor
    } else {
        (1u64 << (63 - emitted.leading_zeros())).max(floor)
    };
    let d = &cfg.detector;
    let key = (
        symbols,
        bucket,
        d.depth,
        d.theta_depth,
        d.n_min,
        cfg.calibration_trials,
        cfg.calibration_quantile.to_bits(),
    );
    if let Some(&t) = calibration_cache().lock().expect("cache lock").get(&key) {
        return t;
    }
    let white = Pfsa::white_noise(Alphabet::numeric(symbols));
    let mut scores: Vec<f64> = (0..cfg.calibration_trials as u64)
        .into_par_iter()
        .map(|trial| {
            let s = generate_stream(&white, bucket as usize, mix_seed(0xca1b, trial));
            let mut counts = ContextCounts::new(symbols, d.depth).expect("detector depth fits");
            counts.extend(s.symbols());
            white_noise_score_counts(&counts, d)
                .map(|w| w.score)
                .unwrap_or(1.0)
        })
        .collect();
    scores.sort_by(f64::total_cmp);
    let rank = (cfg.calibration_quantile * scores.len() as f64).ceil() as usize;
    let t = scores[rank.clamp(1, scores.len()) - 1];
    calibration_cache()
        .lock()
        .expect("cache lock")
        .insert(key, t);
    t
}

/// Why a verdict came out the way it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictReason {
    /// The best component is white noise and every extra check passed.
    Match,
    /// No component is white noise.
    ScoreAboveThreshold,
    /// The best component is white but emitted fewer than `min_emitted`.
    TooFewEmitted,
    /// The sensed stream is already white noise, so annihilation proves
    /// nothing about a non-white pattern.
    SensedStreamWhite,
    /// No component has emitted enough symbols to be scored.
    InsufficientData,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub pattern: String,
    /// Per-component score; `None` below the detector floor.
    pub scores: Vec<Option<f64>>,
    pub emitted: Vec<u64>,
    pub best: Option<usize>,
    pub best_score: Option<f64>,
    pub threshold: f64,
    /// The best score is at most the threshold.
    pub white: bool,
    pub verdict: bool,
    pub reason: VerdictReason,
    pub sensed: u64,
    /// Position after sorting by best score, starting at 1.
    pub rank: usize,
}

/// Scores banks online and reports at every check interval.
#[derive(Debug, Clone)]
pub struct StreamClassifier {
    banks: Vec<AnnihilatorBank>,
    sensed: ContextCounts,
    alphabet: Alphabet,
    config: ClassifyConfig,
    pending: Vec<usize>,
}

impl StreamClassifier {
    /// One bank per library entry; bank `i` is seeded with
    /// `mix_seed(config.seed, i)`.
    pub fn new(library: &[(String, Pfsa)], alphabet: &Alphabet, config: ClassifyConfig) -> Result<Self> {
        config.check()?;
        if library.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        let banks = library
            .iter()
            .enumerate()
            .map(|(i, (id, g))| {
                if g.alphabet() != alphabet {
                    return Err(Error::AlphabetMismatch);
                }
                AnnihilatorBank::new(
                    id.clone(),
                    g,
                    mix_seed(config.seed, i as u64),
                    config.detector.depth,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            banks,
            sensed: ContextCounts::new(alphabet.len(), config.detector.depth)?,
            alphabet: alphabet.clone(),
            config,
            pending: Vec::new(),
        })
    }

    pub fn banks(&self) -> &[AnnihilatorBank] {
        &self.banks
    }

    pub fn sensed_len(&self) -> u64 {
        self.sensed.len()
    }

    /// Adds one sensed symbol; returns reports when a check interval ends.
    pub fn push(&mut self, symbol: usize) -> Result<Option<Vec<ClassificationReport>>> {
        if symbol >= self.alphabet.len() {
            return Err(Error::UnknownSymbol {
                index: symbol,
                size: self.alphabet.len(),
            });
        }
        self.pending.push(symbol);
        if (self.sensed.len() + self.pending.len() as u64) % self.config.check_interval == 0 {
            self.flush();
            return Ok(Some(self.reports()));
        }
        Ok(None)
    }

    /// Feeds a whole block, reporting at every interval boundary crossed.
    pub fn feed(&mut self, symbols: &[usize]) -> Result<Vec<Vec<ClassificationReport>>> {
        if let Some(&bad) = symbols.iter().find(|&&s| s >= self.alphabet.len()) {
            return Err(Error::UnknownSymbol {
                index: bad,
                size: self.alphabet.len(),
            });
        }
        let interval = self.config.check_interval;
        let mut out = Vec::new();
        let mut rest = symbols;
        while !rest.is_empty() {
            let seen = self.sensed.len() + self.pending.len() as u64;
            let to_boundary = (interval - seen % interval) as usize;
            let (head, tail) = rest.split_at(to_boundary.min(rest.len()));
            self.pending.extend_from_slice(head);
            rest = tail;
            if head.len() == to_boundary {
                self.flush();
                out.push(self.reports());
            }
        }
        Ok(out)
    }

    fn flush(&mut self) {
        let pending = std::mem::take(&mut self.pending);
        self.sensed.extend(&pending);
        self.banks
            .par_iter_mut()
            .for_each(|b| b.feed_symbols(&pending));
    }

    /// Current verdicts, ranked by best score.
    pub fn reports(&mut self) -> Vec<ClassificationReport> {
        self.flush();
        let cfg = &self.config;
        let k = self.alphabet.len();
        let sensed_white = white_noise_score_counts(&self.sensed, &cfg.detector)
            .ok()
            .map(|s| s.score <= cfg.threshold(k, self.sensed.len()));
        let mut reports: Vec<ClassificationReport> = self
            .banks
            .par_iter()
            .map(|bank| report_for(bank, cfg, k, sensed_white))
            .collect();
        reports.sort_by(|a, b| {
            let key = |r: &ClassificationReport| r.best_score.unwrap_or(f64::INFINITY);
            key(a).total_cmp(&key(b))
        });
        for (i, r) in reports.iter_mut().enumerate() {
            r.rank = i + 1;
        }
        reports
    }
}

fn report_for(
    bank: &AnnihilatorBank,
    cfg: &ClassifyConfig,
    k: usize,
    sensed_white: Option<bool>,
) -> ClassificationReport {
    let scores: Vec<Option<f64>> = bank
        .components()
        .iter()
        .map(|c| {
            white_noise_score_counts(c.counts(), &cfg.detector)
                .ok()
                .map(|s| s.score)
        })
        .collect();
    let emitted: Vec<u64> = bank.components().iter().map(|c| c.emitted_len()).collect();
    let best = scores
        .iter()
        .enumerate()
        .filter_map(|(j, s)| s.map(|s| (j, s)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(j, _)| j);
    let best_score = best.and_then(|j| scores[j]);
    let threshold = match best {
        Some(j) => cfg.threshold(k, emitted[j]),
        None => cfg.tau,
    };
    let white = best_score.is_some_and(|s| s <= threshold);
    let reason = match best {
        None => VerdictReason::InsufficientData,
        Some(_) if !white => VerdictReason::ScoreAboveThreshold,
        Some(j) if emitted[j] < cfg.min_emitted => VerdictReason::TooFewEmitted,
        Some(_)
            if cfg.cross_check
                && !bank.pattern().is_white_noise()
                && sensed_white != Some(false) =>
        {
            VerdictReason::SensedStreamWhite
        }
        Some(_) => VerdictReason::Match,
    };
    ClassificationReport {
        pattern: bank.id().to_string(),
        scores,
        emitted,
        best,
        best_score,
        threshold,
        white,
        verdict: reason == VerdictReason::Match,
        reason,
        sensed: bank.components().first().map_or(0, |c| c.sensed_len()),
        rank: 0,
    }
}

/// Runs every library pattern over `stream` and ranks the results.
pub fn classify_stream(
    library: &[(String, Pfsa)],
    stream: &SymbolStream,
    config: &ClassifyConfig,
) -> Result<Vec<ClassificationReport>> {
    let mut classifier = StreamClassifier::new(library, stream.alphabet(), *config)?;
    classifier.pending.extend_from_slice(stream.symbols());
    Ok(classifier.reports())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::expected_observable_fraction;
    use crate::catalog;

    #[test]
    fn erase_definition() {
        assert_eq!(erase(1, 1), Some(1));
        assert_eq!(erase(0, 1), None);
        for a in 0..4 {
            for b in 0..4 {
                if let Some(x) = erase(a, b) {
                    assert_eq!(x, a);
                }
            }
        }
    }

    #[test]
    fn forced_mismatch_still_follows_sensed_symbol() {
        let mut bank = build_bank(&catalog::e1(), 1);
        let c = &mut bank.components[1];
        assert_eq!(c.state(), 1);
        assert_eq!(c.step_forced(0, 1), None);
        assert_eq!(c.state(), 0);
        assert_eq!(c.step_forced(1, 1), Some(1));
        assert_eq!(c.state(), 1);
        assert_eq!(c.emitted(), &[1]);
        assert_eq!(c.sensed_len(), 2);
    }

    #[test]
    fn bank_shape() {
        let m2 = catalog::m2();
        let bank = build_bank(&m2, 3);
        assert_eq!(bank.len(), 4);
        for (j, c) in bank.components().iter().enumerate() {
            assert_eq!(c.initial_state(), j);
            assert!(c.inverse.structurally_equal(&m2));
        }
        let seeds: std::collections::HashSet<u64> =
            bank.components().iter().map(|c| c.seed()).collect();
        assert_eq!(seeds.len(), 4);
        let w = build_bank(&catalog::white(), 3);
        assert_eq!(w.len(), 1);
        assert!(w.inverse().is_white_noise());
    }

    #[test]
    fn empty_feed_gives_empty_outputs() {
        let mut bank = build_bank(&catalog::m2(), 0);
        let empty = SymbolStream::new(Alphabet::binary(), vec![]).unwrap();
        let outs = bank_feed(&mut bank, &empty).unwrap();
        assert_eq!(outs.len(), 4);
        assert!(outs.iter().all(|o| o.is_empty()));
        let other = SymbolStream::new(Alphabet::numeric(3), vec![]).unwrap();
        assert!(matches!(bank.feed(&other), Err(Error::AlphabetMismatch)));
    }

    #[test]
    fn white_inverse_emits_at_chance_rate() {
        let mut bank = build_bank(&catalog::white(), 4);
        let s = generate_stream(&catalog::m2(), 100_000, 4);
        bank.feed(&s).unwrap();
        let rate = bank.components()[0].emitted_len() as f64 / 1e5;
        assert!((rate - 0.5).abs() < 0.005, "{rate}");
    }

    #[test]
    fn outputs_are_subsequences_and_states_ignore_randomness() {
        let s = generate_stream(&catalog::s1(), 5000, 8);
        let mut a = build_bank(&catalog::m2(), 1);
        let mut b = build_bank(&catalog::m2(), 2);
        a.feed(&s).unwrap();
        b.feed(&s).unwrap();
        for (ca, cb) in a.components().iter().zip(b.components()) {
            assert_eq!(ca.state(), cb.state());
            let mut it = s.symbols().iter();
            assert!(ca.emitted().iter().all(|e| it.any(|x| x == e)));
        }
    }

    #[test]
    fn synchronized_component_matches_lambda() {
        let g = catalog::e1();
        let n = 100_000;
        let s = generate_stream(&g, n, 12);
        let mut bank = build_bank(&g, 12);
        bank.feed(&s).unwrap();
        let lambda = expected_observable_fraction(&g).unwrap();
        // E1's states are fixed by the last symbol, so after one symbol every
        // component is synchronized with the source.
        let emitted = bank.components()[g.start()].emitted_len() as f64;
        assert!((emitted - lambda * n as f64).abs() <= 500.0, "{emitted}");
        let stats = bank.stats();
        assert!(stats.steps <= bank.work_bound_per_symbol() * n as u64);
        assert_eq!(stats.calls, 2 * n as u64);
    }

    fn library() -> Vec<(String, Pfsa)> {
        vec![
            ("M2".to_string(), catalog::m2()),
            ("S1".to_string(), catalog::s1()),
        ]
    }

    #[test]
    fn classify_m2_stream() {
        let s = generate_stream(&catalog::m2(), 50_000, 21);
        let reports = classify_stream(&library(), &s, &ClassifyConfig::default()).unwrap();
        assert_eq!(reports[0].pattern, "M2");
        assert!(reports[0].verdict);
        assert_eq!(reports[0].reason, VerdictReason::Match);
        assert_eq!(reports[1].pattern, "S1");
        assert!(!reports[1].verdict);
        assert_eq!(reports[0].rank, 1);
    }

    #[test]
    fn white_stream_is_not_m2() {
        // Erasing white noise against −M2 leaves symbols distributed like
        // −M2's rows, which are far from uniform.
        let s = generate_stream(&catalog::white(), 50_000, 22);
        let lib = vec![("M2".to_string(), catalog::m2())];
        let r = classify_stream(&lib, &s, &ClassifyConfig::default()).unwrap();
        assert!(!r[0].verdict);
        assert_eq!(r[0].reason, VerdictReason::ScoreAboveThreshold);

        let lib = vec![("W".to_string(), catalog::white())];
        let r = classify_stream(&lib, &s, &ClassifyConfig::default()).unwrap();
        assert!(r[0].verdict);
    }

    #[test]
    fn cross_check_rejects_near_white_patterns_on_white_input() {
        let near = catalog::last_symbol_machine([0.51, 0.49], [0.49, 0.51]);
        let s = generate_stream(&catalog::white(), 50_000, 23);
        let lib = vec![("near".to_string(), near)];
        let r = classify_stream(&lib, &s, &ClassifyConfig::default()).unwrap();
        assert!(r[0].white);
        assert!(!r[0].verdict);
        assert_eq!(r[0].reason, VerdictReason::SensedStreamWhite);
        let off = ClassifyConfig {
            cross_check: false,
            ..ClassifyConfig::default()
        };
        assert!(classify_stream(&lib, &s, &off).unwrap()[0].verdict);
    }

    #[test]
    fn classifier_errors() {
        let s = generate_stream(&catalog::white(), 10, 1);
        assert!(matches!(
            classify_stream(&[], &s, &ClassifyConfig::default()),
            Err(Error::EmptyLibrary)
        ));
        let lib = vec![("W3".to_string(), Pfsa::white_noise(Alphabet::numeric(3)))];
        assert!(matches!(
            classify_stream(&lib, &s, &ClassifyConfig::default()),
            Err(Error::AlphabetMismatch)
        ));
        let r = classify_stream(&library(), &s, &ClassifyConfig::default()).unwrap();
        assert!(r.iter().all(|r| r.reason == VerdictReason::InsufficientData));
    }

    #[test]
    fn online_reports_follow_the_interval() {
        let cfg = ClassifyConfig {
            check_interval: 1000,
            ..ClassifyConfig::default()
        };
        let s = generate_stream(&catalog::m2(), 5500, 5);
        let mut online = StreamClassifier::new(&library(), s.alphabet(), cfg).unwrap();
        let mut seen = 0;
        for &x in &s.symbols()[..2500] {
            if let Some(r) = online.push(x).unwrap() {
                seen += 1;
                assert_eq!(r[0].sensed % 1000, 0);
            }
        }
        assert_eq!(seen, 2);
        let batches = online.feed(&s.symbols()[2500..]).unwrap();
        assert_eq!(batches.len(), 3);
        assert_eq!(batches[2][0].sensed, 5000);
        assert_eq!(online.reports()[0].sensed, 5500);
        // Same seed, same symbols: identical to the one-shot classification.
        let once = classify_stream(&library(), &s, &cfg).unwrap();
        assert_eq!(once, online.reports());
    }

    #[test]
    fn calibrated_threshold_is_cached_and_small() {
        let cfg = ClassifyConfig {
            calibrate: true,
            calibration_trials: 200,
            ..ClassifyConfig::default()
        };
        let t = calibrated_threshold(2, 5000, &cfg);
        assert!(t > 0.0 && t < 0.05, "{t}");
        assert_eq!(calibrated_threshold(2, 8000, &cfg), t);
        assert!(calibrated_threshold(2, 200, &cfg) > t);
    }
}
