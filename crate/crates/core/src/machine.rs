//! Probabilistic finite state automata.
//!
//! A [`Pfsa`] is a deterministic transition structure over an [`Alphabet`]
//! together with a row-stochastic morph matrix giving, for every state, the
//! probability of emitting each symbol. Only the restricted class with
//! strictly positive morph entries is representable.
//!
//! Symbols and states are indices internally; labels exist for file formats
//! and display.

use std::collections::{HashMap, HashSet, VecDeque};

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, LabelKind, Result, ValidationError, Violation};
use crate::markov::{StationaryDistribution, TransitionMatrix};

/// Slack allowed on user-supplied morph row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// An ordered set of at least two distinct symbol labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Alphabet {
    symbols: Vec<String>,
}

impl Alphabet {
    pub fn new<I, S>(labels: I) -> std::result::Result<Self, ValidationError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let symbols: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut violations = Vec::new();
        if symbols.len() < 2 {
            violations.push(Violation::AlphabetTooSmall { size: symbols.len() });
        }
        violations.extend(duplicates(&symbols, LabelKind::Symbol));
        if violations.is_empty() {
            Ok(Self { symbols })
        } else {
            Err(ValidationError { violations })
        }
    }

    /// The alphabet `{0, 1}`.
    pub fn binary() -> Self {
        Self::numeric(2)
    }

    /// The alphabet `{0, 1, ..., size - 1}` with decimal labels.
    pub fn numeric(size: usize) -> Self {
        assert!(size >= 2, "alphabet needs at least two symbols");
        Self {
            symbols: (0..size).map(|i| i.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.symbols[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.symbols
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == label)
    }

    /// True when every label is exactly one character long.
    pub fn single_char_labels(&self) -> bool {
        self.symbols.iter().all(|s| s.chars().count() == 1)
    }

    /// Converts a sequence of labels into symbol indices.
    pub fn encode<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.index_of(l.as_ref())
                    .ok_or_else(|| Error::UnknownLabel(l.as_ref().to_string()))
            })
            .collect()
    }

    /// Parses a word of single-character labels, e.g. `"0110"`.
    pub fn parse_word(&self, word: &str) -> Result<Vec<usize>> {
        word.chars()
            .map(|c| {
                let mut buf = [0u8; 4];
                let s: &str = c.encode_utf8(&mut buf);
                self.index_of(s).ok_or_else(|| Error::UnknownLabel(s.to_string()))
            })
            .collect()
    }

    /// Renders a word by concatenating labels.
    pub fn render_word(&self, word: &[usize]) -> String {
        let sep = if self.single_char_labels() { "" } else { " " };
        word.iter()
            .map(|&s| self.label(s))
            .collect::<Vec<_>>()
            .join(sep)
    }
}

fn duplicates(labels: &[String], kind: LabelKind) -> Vec<Violation> {
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    let mut out = Vec::new();
    for l in labels {
        if !seen.insert(l.as_str()) && reported.insert(l.as_str()) {
            out.push(Violation::DuplicateLabel {
                kind,
                label: l.clone(),
            });
        }
    }
    out
}

/// Untrusted, label-based description of a machine.
///
/// This is the shape of the `model` section of a model file; turn it into a
/// [`Pfsa`] with [`validate_pfsa`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPfsa {
    pub alphabet: Vec<String>,
    pub states: Vec<String>,
    pub start: String,
    pub delta: IndexMap<String, IndexMap<String, String>>,
    pub morph: IndexMap<String, Vec<f64>>,
}

/// How much connectivity a constructed machine must have.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// The whole transition graph is strongly connected.
    Strong,
    /// Every state is reachable from the start state. Products of strongly
    /// connected machines only guarantee this.
    FromStart,
}

/// A probabilistic finite state automaton with strictly positive morph rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfsa {
    alphabet: Alphabet,
    states: Vec<String>,
    start: usize,
    delta: Vec<usize>,
    morph: Vec<f64>,
}

/// Validates an untrusted description, reporting every violated invariant.
pub fn validate_pfsa(raw: &RawPfsa) -> std::result::Result<Pfsa, ValidationError> {
    validate_pfsa_with(raw, Connectivity::Strong)
}

/// Like [`validate_pfsa`] with a selectable connectivity requirement.
pub fn validate_pfsa_with(
    raw: &RawPfsa,
    connectivity: Connectivity,
) -> std::result::Result<Pfsa, ValidationError> {
    let mut violations = Vec::new();
    if raw.alphabet.len() < 2 {
        violations.push(Violation::AlphabetTooSmall {
            size: raw.alphabet.len(),
        });
    }
    violations.extend(duplicates(&raw.alphabet, LabelKind::Symbol));
    if raw.states.is_empty() {
        violations.push(Violation::NoStates);
    }
    violations.extend(duplicates(&raw.states, LabelKind::State));

    let state_index: HashMap<&str, usize> = raw
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let symbol_index: HashMap<&str, usize> = raw
        .alphabet
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();

    let start = state_index.get(raw.start.as_str()).copied();
    if start.is_none() {
        violations.push(Violation::UnknownStart {
            label: raw.start.clone(),
        });
    }

    for (state, row) in &raw.delta {
        if !state_index.contains_key(state.as_str()) {
            violations.push(Violation::UnknownStateLabel {
                label: state.clone(),
            });
        }
        for (symbol, target) in row {
            if !symbol_index.contains_key(symbol.as_str()) {
                violations.push(Violation::UnknownSymbolLabel {
                    label: symbol.clone(),
                });
            }
            if !state_index.contains_key(target.as_str()) {
                violations.push(Violation::UnknownStateLabel {
                    label: target.clone(),
                });
            }
        }
    }
    for state in raw.morph.keys() {
        if !state_index.contains_key(state.as_str()) {
            violations.push(Violation::UnknownStateLabel {
                label: state.clone(),
            });
        }
    }

    let k = raw.alphabet.len();
    let mut delta = vec![Vec::with_capacity(k); raw.states.len()];
    let mut morph = vec![Vec::with_capacity(k); raw.states.len()];
    for (q, state) in raw.states.iter().enumerate() {
        let row = raw.delta.get(state);
        for symbol in &raw.alphabet {
            match row
                .and_then(|r| r.get(symbol))
                .and_then(|t| state_index.get(t.as_str()))
            {
                Some(&t) => delta[q].push(t),
                None => {
                    if row.and_then(|r| r.get(symbol)).is_none() {
                        violations.push(Violation::PartialDelta {
                            state: state.clone(),
                            symbol: symbol.clone(),
                        });
                    }
                    delta[q].push(usize::MAX);
                }
            }
        }
        match raw.morph.get(state) {
            None => violations.push(Violation::MissingMorphRow {
                state: state.clone(),
            }),
            Some(values) if values.len() != k => violations.push(Violation::MorphRowLength {
                state: state.clone(),
                expected: k,
                found: values.len(),
            }),
            Some(values) => morph[q] = values.clone(),
        }
    }

    if !violations.is_empty() {
        // Row and connectivity checks need a complete table; report what can
        // still be checked.
        for (q, row) in morph.iter().enumerate() {
            if row.len() == k {
                violations.extend(row_violations(&raw.states[q], &raw.alphabet, row));
            }
        }
        return Err(ValidationError { violations });
    }

    let alphabet = Alphabet {
        symbols: raw.alphabet.clone(),
    };
    Pfsa::build(
        alphabet,
        raw.states.clone(),
        start.expect("checked above"),
        delta,
        morph,
        connectivity,
    )
}

fn row_violations(state: &str, alphabet: &[String], row: &[f64]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (s, &p) in row.iter().enumerate() {
        if !(p > 0.0) || !p.is_finite() {
            out.push(Violation::ZeroMorphEntry {
                state: state.to_string(),
                symbol: alphabet[s].clone(),
                value: p,
            });
        }
    }
    let sum: f64 = row.iter().sum();
    if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
        out.push(Violation::NonStochasticRow {
            state: state.to_string(),
            sum,
        });
    }
    out
}

impl Pfsa {
    /// Builds a machine from index-based parts, requiring strong connectivity.
    pub fn from_parts(
        alphabet: Alphabet,
        states: Vec<String>,
        start: usize,
        delta: Vec<Vec<usize>>,
        morph: Vec<Vec<f64>>,
    ) -> std::result::Result<Self, ValidationError> {
        Self::build(alphabet, states, start, delta, morph, Connectivity::Strong)
    }

    /// Builds a machine from index-based parts with a chosen connectivity
    /// requirement.
    pub fn build(
        alphabet: Alphabet,
        states: Vec<String>,
        start: usize,
        delta: Vec<Vec<usize>>,
        morph: Vec<Vec<f64>>,
        connectivity: Connectivity,
    ) -> std::result::Result<Self, ValidationError> {
        let n = states.len();
        let k = alphabet.len();
        let mut violations = Vec::new();
        if n == 0 {
            violations.push(Violation::NoStates);
        }
        violations.extend(duplicates(&states, LabelKind::State));
        if start >= n && n > 0 {
            violations.push(Violation::UnknownStart {
                label: start.to_string(),
            });
        }
        let state_name = |q: usize| states.get(q).cloned().unwrap_or_else(|| q.to_string());

        let mut flat_delta = Vec::with_capacity(n * k);
        let mut flat_morph = Vec::with_capacity(n * k);
        for q in 0..n {
            let row = delta.get(q).map(Vec::as_slice).unwrap_or(&[]);
            for s in 0..k {
                match row.get(s) {
                    Some(&t) if t < n => flat_delta.push(t),
                    Some(&t) if t != usize::MAX => {
                        violations.push(Violation::UnknownStateLabel {
                            label: t.to_string(),
                        });
                        flat_delta.push(0);
                    }
                    _ => {
                        violations.push(Violation::PartialDelta {
                            state: state_name(q),
                            symbol: alphabet.label(s).to_string(),
                        });
                        flat_delta.push(0);
                    }
                }
            }
            match morph.get(q) {
                None => violations.push(Violation::MissingMorphRow {
                    state: state_name(q),
                }),
                Some(r) if r.len() != k => violations.push(Violation::MorphRowLength {
                    state: state_name(q),
                    expected: k,
                    found: r.len(),
                }),
                Some(r) => {
                    violations.extend(row_violations(&state_name(q), alphabet.labels(), r));
                    flat_morph.extend_from_slice(r);
                }
            }
        }

        if violations.is_empty() {
            let machine = Self {
                alphabet,
                states,
                start,
                delta: flat_delta,
                morph: flat_morph,
            };
            let v = machine.connectivity_violation(connectivity);
            match v {
                None => Ok(machine),
                Some(v) => Err(ValidationError { violations: vec![v] }),
            }
        } else {
            Err(ValidationError { violations })
        }
    }

    fn connectivity_violation(&self, connectivity: Connectivity) -> Option<Violation> {
        match connectivity {
            Connectivity::Strong => {
                let forward = self.reachable_from(0);
                let backward = self.reaching(0);
                let unreachable: Vec<String> = (0..self.num_states())
                    .filter(|&q| !forward[q])
                    .map(|q| self.states[q].clone())
                    .collect();
                let cannot_return: Vec<String> = (0..self.num_states())
                    .filter(|&q| !backward[q])
                    .map(|q| self.states[q].clone())
                    .collect();
                if unreachable.is_empty() && cannot_return.is_empty() {
                    None
                } else {
                    Some(Violation::NotStronglyConnected {
                        unreachable,
                        cannot_return,
                    })
                }
            }
            Connectivity::FromStart => {
                let forward = self.reachable_from(self.start);
                let unreachable: Vec<String> = (0..self.num_states())
                    .filter(|&q| !forward[q])
                    .map(|q| self.states[q].clone())
                    .collect();
                if unreachable.is_empty() {
                    None
                } else {
                    Some(Violation::NotStronglyConnected {
                        unreachable,
                        cannot_return: Vec::new(),
                    })
                }
            }
        }
    }

    fn reachable_from(&self, origin: usize) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        let mut queue = VecDeque::from([origin]);
        seen[origin] = true;
        while let Some(q) = queue.pop_front() {
            for s in 0..self.num_symbols() {
                let t = self.next(q, s);
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        seen
    }

    fn reaching(&self, target: usize) -> Vec<bool> {
        let n = self.num_states();
        let mut preds = vec![Vec::new(); n];
        for q in 0..n {
            for s in 0..self.num_symbols() {
                preds[self.next(q, s)].push(q);
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([target]);
        seen[target] = true;
        while let Some(q) = queue.pop_front() {
            for &p in &preds[q] {
                if !seen[p] {
                    seen[p] = true;
                    queue.push_back(p);
                }
            }
        }
        seen
    }

    pub fn is_strongly_connected(&self) -> bool {
        self.connectivity_violation(Connectivity::Strong).is_none()
    }

    /// The single-state machine emitting every symbol with probability `1/|Σ|`.
    pub fn white_noise(alphabet: Alphabet) -> Self {
        let k = alphabet.len();
        Self {
            alphabet,
            states: vec!["w".to_string()],
            start: 0,
            delta: vec![0; k],
            morph: vec![1.0 / k as f64; k],
        }
    }

    /// Returns a machine with the same structure and new morph rows.
    pub fn with_morph(&self, rows: Vec<Vec<f64>>) -> std::result::Result<Self, ValidationError> {
        Self::build(
            self.alphabet.clone(),
            self.states.clone(),
            self.start,
            self.delta_table(),
            rows,
            Connectivity::FromStart,
        )
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_symbols(&self) -> usize {
        self.alphabet.len()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn state_labels(&self) -> &[String] {
        &self.states
    }

    pub fn state_label(&self, q: usize) -> &str {
        &self.states[q]
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    /// `δ(q, σ)`.
    #[inline]
    pub fn next(&self, state: usize, symbol: usize) -> usize {
        self.delta[state * self.alphabet.len() + symbol]
    }

    /// `Π̃(q, σ)`.
    #[inline]
    pub fn prob(&self, state: usize, symbol: usize) -> f64 {
        self.morph[state * self.alphabet.len() + symbol]
    }

    #[inline]
    pub fn morph_row(&self, state: usize) -> &[f64] {
        let k = self.alphabet.len();
        &self.morph[state * k..(state + 1) * k]
    }

    pub fn morph_rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_states())
            .map(|q| self.morph_row(q).to_vec())
            .collect()
    }

    pub fn delta_table(&self) -> Vec<Vec<usize>> {
        let k = self.alphabet.len();
        self.delta.chunks(k).map(<[usize]>::to_vec).collect()
    }

    fn check_word(&self, word: &[usize]) -> Result<()> {
        match word.iter().find(|&&s| s >= self.num_symbols()) {
            Some(&index) => Err(Error::UnknownSymbol {
                index,
                size: self.num_symbols(),
            }),
            None => Ok(()),
        }
    }

    /// Extended transition function `δ*(from, word)`.
    pub fn delta_star(&self, from: usize, word: &[usize]) -> Result<usize> {
        if from >= self.num_states() {
            return Err(Error::UnknownState {
                index: from,
                size: self.num_states(),
            });
        }
        self.check_word(word)?;
        Ok(word.iter().fold(from, |q, &s| self.next(q, s)))
    }

    /// Probability that the machine, started at `q₀`, emits `word` as a prefix.
    pub fn string_probability(&self, word: &[usize]) -> Result<f64> {
        self.check_word(word)?;
        let mut q = self.start;
        let mut p = 1.0;
        for &s in word {
            p *= self.prob(q, s);
            q = self.next(q, s);
        }
        Ok(p)
    }

    pub fn transition_matrix(&self) -> TransitionMatrix {
        let n = self.num_states();
        let mut m = vec![0.0; n * n];
        for q in 0..n {
            for s in 0..self.num_symbols() {
                m[q * n + self.next(q, s)] += self.prob(q, s);
            }
        }
        TransitionMatrix::from_flat(n, m)
    }

    pub fn stationary_distribution(&self) -> Result<StationaryDistribution> {
        if !self.is_strongly_connected() {
            return Err(Error::NotIrreducible);
        }
        self.transition_matrix().stationary_distribution()
    }

    /// Same alphabet, state count, start index and transition table.
    pub fn structurally_equal(&self, other: &Pfsa) -> bool {
        self.alphabet == other.alphabet
            && self.num_states() == other.num_states()
            && self.start == other.start
            && self.delta == other.delta
    }

    /// True when every morph row is uniform, i.e. the machine realizes
    /// symbolic white noise.
    pub fn is_white_noise(&self) -> bool {
        let u = 1.0 / self.num_symbols() as f64;
        self.morph.iter().all(|&p| (p - u).abs() <= 1e-12)
    }

    /// Lifts the unlabeled structure of this machine with uniform rows.
    pub fn uniform_lift(&self) -> Self {
        let k = self.num_symbols();
        Self {
            morph: vec![1.0 / k as f64; self.num_states() * k],
            ..self.clone()
        }
    }

    /// Renames states, keeping structure. Labels must stay distinct.
    pub fn with_state_labels(
        &self,
        labels: Vec<String>,
    ) -> std::result::Result<Self, ValidationError> {
        Self::build(
            self.alphabet.clone(),
            labels,
            self.start,
            self.delta_table(),
            self.morph_rows(),
            Connectivity::FromStart,
        )
    }

    /// Label-based description, suitable for serialization.
    pub fn to_raw(&self) -> RawPfsa {
        let mut delta = IndexMap::new();
        let mut morph = IndexMap::new();
        for q in 0..self.num_states() {
            let row: IndexMap<String, String> = (0..self.num_symbols())
                .map(|s| {
                    (
                        self.alphabet.label(s).to_string(),
                        self.states[self.next(q, s)].clone(),
                    )
                })
                .collect();
            delta.insert(self.states[q].clone(), row);
            morph.insert(self.states[q].clone(), self.morph_row(q).to_vec());
        }
        RawPfsa {
            alphabet: self.alphabet.labels().to_vec(),
            states: self.states.clone(),
            start: self.states[self.start].clone(),
            delta,
            morph,
        }
    }

    /// A random strongly connected machine with `n_states` states over the
    /// numeric alphabet of size `n_symbols`. Morph entries are drawn from
    /// `[0.05, 1)` before normalization so rows stay well inside the
    /// positive class.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_symbols: usize) -> Self {
        assert!(n_states >= 1 && n_symbols >= 2);
        let alphabet = Alphabet::numeric(n_symbols);
        let states: Vec<String> = (0..n_states).map(|q| format!("q{q}")).collect();
        loop {
            let delta: Vec<Vec<usize>> = (0..n_states)
                .map(|_| (0..n_symbols).map(|_| rng.random_range(0..n_states)).collect())
                .collect();
            let morph: Vec<Vec<f64>> = (0..n_states)
                .map(|_| {
                    let raw: Vec<f64> = (0..n_symbols)
                        .map(|_| rng.random_range(0.05..1.0))
                        .collect();
                    let total: f64 = raw.iter().sum();
                    raw.into_iter().map(|x| x / total).collect()
                })
                .collect();
            let start = rng.random_range(0..n_states);
            if let Ok(m) = Self::from_parts(alphabet.clone(), states.clone(), start, delta, morph) {
                return m;
            }
        }
    }
}

/// `white_noise_pfsa` over the given alphabet.
pub fn white_noise_pfsa(alphabet: Alphabet) -> Pfsa {
    Pfsa::white_noise(alphabet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e1_raw() -> RawPfsa {
        catalog::e1().to_raw()
    }

    #[test]
    fn white_noise_machine_validates() {
        let w = Pfsa::white_noise(Alphabet::binary());
        let raw = w.to_raw();
        let back = validate_pfsa(&raw).unwrap();
        assert_eq!(back.morph_row(0), &[0.5, 0.5]);
        assert_eq!(back.num_states(), 1);
    }

    #[test]
    fn e1_validates() {
        let g = validate_pfsa(&e1_raw()).unwrap();
        assert_eq!(g.morph_row(0), &[0.2, 0.8]);
        assert_eq!(g.morph_row(1), &[0.4, 0.6]);
    }

    #[test]
    fn non_stochastic_row_is_rejected() {
        let mut raw = e1_raw();
        raw.morph.insert("A".into(), vec![0.2, 0.7]);
        let err = validate_pfsa(&raw).unwrap_err();
        assert!(matches!(
            err.violations.as_slice(),
            [Violation::NonStochasticRow { state, .. }] if state == "A"
        ));
    }

    #[test]
    fn every_violation_is_reported() {
        let mut raw = e1_raw();
        raw.alphabet.push("0".into());
        raw.morph.insert("B".into(), vec![0.0, 1.0]);
        raw.delta.get_mut("A").unwrap().shift_remove("1");
        let err = validate_pfsa(&raw).unwrap_err();
        let has = |f: &dyn Fn(&Violation) -> bool| err.violations.iter().any(f);
        assert!(has(&|v| matches!(v, Violation::DuplicateLabel { .. })));
        assert!(has(&|v| matches!(v, Violation::PartialDelta { .. })));
        assert!(has(&|v| matches!(v, Violation::MorphRowLength { .. })));
    }

    #[test]
    fn zero_entry_and_partial_delta() {
        let mut raw = e1_raw();
        raw.morph.insert("B".into(), vec![0.0, 1.0]);
        let err = validate_pfsa(&raw).unwrap_err();
        assert!(matches!(err.violations[0], Violation::ZeroMorphEntry { .. }));

        let mut raw = e1_raw();
        raw.delta.get_mut("B").unwrap().shift_remove("0");
        let err = validate_pfsa(&raw).unwrap_err();
        assert!(matches!(err.violations[0], Violation::PartialDelta { .. }));
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let mut raw = e1_raw();
        // B can no longer return to A.
        raw.delta.get_mut("B").unwrap().insert("0".into(), "B".into());
        let err = validate_pfsa(&raw).unwrap_err();
        assert!(matches!(
            err.violations.as_slice(),
            [Violation::NotStronglyConnected { cannot_return, .. }] if cannot_return == &["B".to_string()]
        ));
    }

    #[test]
    fn transition_matrix_examples() {
        let w = Pfsa::white_noise(Alphabet::binary());
        assert_eq!(w.transition_matrix().row(0), &[1.0]);

        let e1 = catalog::e1();
        let t = e1.transition_matrix();
        assert_eq!(t.row(0), &[0.2, 0.8]);
        assert_eq!(t.row(1), &[0.4, 0.6]);

        // Both symbols from A go to A; started at B so every state is reachable.
        let g = Pfsa::build(
            Alphabet::binary(),
            vec!["A".into(), "B".into()],
            1,
            vec![vec![0, 0], vec![0, 1]],
            vec![vec![0.2, 0.8], vec![0.4, 0.6]],
            Connectivity::FromStart,
        )
        .unwrap();
        assert_abs_diff_eq!(g.transition_matrix().row(0)[0], 1.0, epsilon = 1e-15);
        assert_eq!(g.transition_matrix().row(0)[1], 0.0);
    }

    #[test]
    fn delta_star_examples() {
        let e1 = catalog::e1();
        let a = e1.state_index("A").unwrap();
        let b = e1.state_index("B").unwrap();
        let w = |s: &str| e1.alphabet().parse_word(s).unwrap();
        assert_eq!(e1.delta_star(a, &[]).unwrap(), a);
        assert_eq!(e1.delta_star(a, &w("10")).unwrap(), a);
        assert_eq!(e1.delta_star(a, &w("11")).unwrap(), b);
        assert!(matches!(
            e1.delta_star(a, &[2]),
            Err(Error::UnknownSymbol { index: 2, size: 2 })
        ));
    }

    #[test]
    fn string_probability_examples() {
        let e1 = catalog::e1();
        let w = |s: &str| e1.alphabet().parse_word(s).unwrap();
        assert_eq!(e1.string_probability(&[]).unwrap(), 1.0);
        assert_abs_diff_eq!(e1.string_probability(&w("1")).unwrap(), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(e1.string_probability(&w("10")).unwrap(), 0.32, epsilon = 1e-15);
        assert!(e1.string_probability(&[5]).is_err());
    }

    #[test]
    fn white_noise_examples() {
        let w3 = Pfsa::white_noise(Alphabet::new(["a", "b", "c"]).unwrap());
        for &p in w3.morph_row(0) {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
        }
        let ab = w3.alphabet().parse_word("ab").unwrap();
        assert_abs_diff_eq!(w3.string_probability(&ab).unwrap(), 1.0 / 9.0, epsilon = 1e-15);
        assert!(w3.is_white_noise());
    }

    #[test]
    fn structural_equality_examples() {
        let e1 = catalog::e1();
        let relabeled = e1.with_morph(vec![vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap();
        assert!(e1.structurally_equal(&relabeled));
        assert!(!e1.structurally_equal(&Pfsa::white_noise(Alphabet::binary())));
        let altered = Pfsa::build(
            Alphabet::binary(),
            vec!["A".into(), "B".into()],
            0,
            vec![vec![0, 1], vec![1, 1]],
            e1.morph_rows(),
            Connectivity::FromStart,
        )
        .unwrap();
        assert!(!e1.structurally_equal(&altered));
    }

    #[test]
    fn alphabet_rejects_duplicates_and_singletons() {
        assert!(Alphabet::new(["a"]).is_err());
        assert!(Alphabet::new(["a", "b", "a"]).is_err());
        assert_eq!(Alphabet::new(["x", "y"]).unwrap().index_of("y"), Some(1));
    }

    #[test]
    fn random_machines_are_valid_and_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(1..=6);
            let k = rng.random_range(2..=5);
            let g = Pfsa::random(&mut rng, n, k);
            assert!(g.is_strongly_connected());
            let t = g.transition_matrix();
            for q in 0..n {
                let s: f64 = t.row(q).iter().sum();
                assert!((s - 1.0).abs() <= 1e-9);
            }
        }
    }

    fn word_strategy(k: usize, max: usize) -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0..k, 0..=max)
    }

    proptest! {
        #[test]
        fn measure_is_consistent(seed in any::<u64>(), n in 1usize..5, k in 2usize..4, x in word_strategy(2, 6)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = Pfsa::random(&mut rng, n, k);
            let px = g.string_probability(&x).unwrap();
            let children: f64 = (0..k)
                .map(|s| {
                    let mut y = x.clone();
                    y.push(s);
                    g.string_probability(&y).unwrap()
                })
                .sum();
            prop_assert!((children - px).abs() <= 1e-12);
            prop_assert!(px > 0.0 && px <= 1.0);
        }

        #[test]
        fn delta_star_composes(seed in any::<u64>(), x in word_strategy(3, 8), y in word_strategy(3, 8)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1 + (seed % 6) as usize;
            let g = Pfsa::random(&mut rng, n, 3);
            for q in 0..n {
                let mut xy = x.clone();
                xy.extend_from_slice(&y);
                let lhs = g.delta_star(q, &xy).unwrap();
                let rhs = g.delta_star(g.delta_star(q, &x).unwrap(), &y).unwrap();
                prop_assert_eq!(lhs, rhs);
            }
        }

        #[test]
        fn white_noise_measure_is_exact(k in 2usize..6, x in word_strategy(2, 20)) {
            let w = Pfsa::white_noise(Alphabet::numeric(k));
            let p = w.string_probability(&x).unwrap();
            let expected = (1.0 / k as f64).powi(x.len() as i32);
            prop_assert!((p - expected).abs() <= 1e-15);
        }
    }
}
