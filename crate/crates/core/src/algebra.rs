//! The abelian group on positive PFSA.
//!
//! Machines with identical structure add rowwise: the morph rows are
//! multiplied entrywise and renormalized. Machines with different structure
//! are first lifted onto a common product structure by synchronous
//! composition, which leaves each operand's measure unchanged. The identity
//! is symbolic white noise and the inverse replaces every row by its
//! normalized reciprocals.
//!
//! [`MeasureTable`] and [`measure_add`] evaluate the same sum directly on
//! string probabilities up to a finite depth, independent of any machine
//! structure. They serve as the oracle for [`add_general`].

use std::collections::{HashMap, HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::machine::{Connectivity, Pfsa};

/// Row sums below this indicate underflow from caller misuse.
const MIN_ROW_SUM: f64 = 1e-300;

/// Largest `|Σ|^D` a [`MeasureTable`] will enumerate.
pub const MAX_TABLE_LEAVES: usize = 1 << 24;

fn normalize(row: &mut [f64]) -> Result<()> {
    let total: f64 = row.iter().sum();
    if !(total >= MIN_ROW_SUM) {
        return Err(Error::Underflow(total));
    }
    row.iter_mut().for_each(|p| *p /= total);
    Ok(())
}

fn unique_labels(mut labels: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    for (i, l) in labels.iter_mut().enumerate() {
        if !seen.insert(l.clone()) {
            *l = format!("{l}#{i}");
            seen.insert(l.clone());
        }
    }
    labels
}

/// Product machine on the state pairs reachable from `(q₀¹, q₀²)`.
///
/// The emission row of `(qᵢ, qⱼ)` is copied from `g1`'s row `qᵢ`, so the
/// result realizes the same measure as `g1`. Not commutative.
pub fn synchronous_compose(g1: &Pfsa, g2: &Pfsa) -> Result<Pfsa> {
    Ok(compose_with_pairs(g1, g2)?.0)
}

/// [`synchronous_compose`] together with the `(q1, q2)` pair behind each
/// product state.
pub fn compose_with_pairs(g1: &Pfsa, g2: &Pfsa) -> Result<(Pfsa, Vec<(usize, usize)>)> {
    if g1.alphabet() != g2.alphabet() {
        return Err(Error::AlphabetMismatch);
    }
    let k = g1.num_symbols();
    let origin = (g1.start(), g2.start());
    let mut index: HashMap<(usize, usize), usize> = HashMap::from([(origin, 0)]);
    let mut pairs = vec![origin];
    let mut queue = VecDeque::from([origin]);
    let mut delta: Vec<Vec<usize>> = Vec::new();
    while let Some((a, b)) = queue.pop_front() {
        let mut row = Vec::with_capacity(k);
        for s in 0..k {
            let target = (g1.next(a, s), g2.next(b, s));
            let next_id = pairs.len();
            let id = *index.entry(target).or_insert_with(|| {
                pairs.push(target);
                queue.push_back(target);
                next_id
            });
            row.push(id);
        }
        delta.push(row);
    }
    let labels = pairs
        .iter()
        .map(|&(a, b)| format!("({},{})", g1.state_label(a), g2.state_label(b)))
        .collect();
    let morph = pairs.iter().map(|&(a, _)| g1.morph_row(a).to_vec()).collect();
    let machine = Pfsa::build(
        g1.alphabet().clone(),
        unique_labels(labels),
        0,
        delta,
        morph,
        Connectivity::FromStart,
    )?;
    Ok((machine, pairs))
}

/// Sum of two machines sharing one structure.
pub fn add_same_structure(g1: &Pfsa, g2: &Pfsa) -> Result<Pfsa> {
    if !g1.structurally_equal(g2) {
        return Err(Error::StructureMismatch);
    }
    let rows = (0..g1.num_states())
        .map(|q| {
            let mut row: Vec<f64> = g1
                .morph_row(q)
                .iter()
                .zip(g2.morph_row(q))
                .map(|(a, b)| a * b)
                .collect();
            normalize(&mut row)?;
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(g1.with_morph(rows)?)
}

/// Sum of two arbitrary machines over the same alphabet:
/// `(g1 ⊗ g2) + (g2 ⊗ g1)` after mapping each pair `(qⱼ, qᵢ)` of the second
/// product onto `(qᵢ, qⱼ)` of the first.
pub fn add_general(g1: &Pfsa, g2: &Pfsa) -> Result<Pfsa> {
    let (left, left_pairs) = compose_with_pairs(g1, g2)?;
    let (right, right_pairs) = compose_with_pairs(g2, g1)?;
    let right_index: HashMap<(usize, usize), usize> = right_pairs
        .iter()
        .enumerate()
        .map(|(i, &(b, a))| ((a, b), i))
        .collect();
    // Re-index the second product on the first product's state order.
    let order: Vec<usize> = left_pairs.iter().map(|p| right_index[p]).collect();
    let mut position = vec![0; order.len()];
    for (i, &j) in order.iter().enumerate() {
        position[j] = i;
    }
    let aligned_delta: Vec<Vec<usize>> = order
        .iter()
        .map(|&j| {
            (0..right.num_symbols())
                .map(|s| position[right.next(j, s)])
                .collect()
        })
        .collect();
    let aligned = Pfsa::build(
        right.alphabet().clone(),
        left.state_labels().to_vec(),
        position[right.start()],
        aligned_delta,
        order.iter().map(|&j| right.morph_row(j).to_vec()).collect(),
        Connectivity::FromStart,
    )?;
    add_same_structure(&left, &aligned)
}

/// Additive inverse: identical structure, each row replaced by its
/// reciprocals renormalized to sum one.
pub fn invert(g: &Pfsa) -> Pfsa {
    let rows = (0..g.num_states())
        .map(|q| {
            let mut row: Vec<f64> = g.morph_row(q).iter().map(|p| 1.0 / p).collect();
            normalize(&mut row).expect("positive rows have finite reciprocals");
            row
        })
        .collect();
    g.with_morph(rows).expect("inversion preserves validity")
}

/// String probabilities of every word up to a fixed depth.
///
/// Level `d` holds the `|Σ|^d` words of length `d` in base-`|Σ|` order with
/// the first symbol most significant, so the children of word `x` at level
/// `d` sit at `x·|Σ| .. x·|Σ| + |Σ|` on level `d + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureTable {
    symbols: usize,
    levels: Vec<Vec<f64>>,
}

fn check_table_size(symbols: usize, depth: usize) -> Result<()> {
    let too_large = (symbols as u128)
        .checked_pow(depth as u32)
        .is_none_or(|leaves| leaves > MAX_TABLE_LEAVES as u128);
    if too_large {
        Err(Error::TableTooLarge { depth, symbols })
    } else {
        Ok(())
    }
}

impl MeasureTable {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn level(&self, d: usize) -> &[f64] {
        &self.levels[d]
    }

    /// `p(word)` for `|word| ≤ depth`.
    pub fn get(&self, word: &[usize]) -> Option<f64> {
        let level = self.levels.get(word.len())?;
        let mut idx = 0usize;
        for &s in word {
            if s >= self.symbols {
                return None;
            }
            idx = idx * self.symbols + s;
        }
        Some(level[idx])
    }

    /// Largest `|p₁(x) − p₂(x)|` over the table, with its word.
    pub fn max_deviation(&self, other: &MeasureTable) -> Result<(f64, Vec<usize>)> {
        if self.symbols != other.symbols {
            return Err(Error::AlphabetMismatch);
        }
        if self.depth() != other.depth() {
            return Err(Error::DepthMismatch(self.depth(), other.depth()));
        }
        let mut best = (0.0, Vec::new());
        for (d, (a, b)) in self.levels.iter().zip(&other.levels).enumerate() {
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                let dev = (x - y).abs();
                if dev > best.0 {
                    best = (dev, decode_word(i, d, self.symbols));
                }
            }
        }
        Ok(best)
    }
}

fn decode_word(mut idx: usize, len: usize, symbols: usize) -> Vec<usize> {
    let mut word = vec![0; len];
    for slot in word.iter_mut().rev() {
        *slot = idx % symbols;
        idx /= symbols;
    }
    word
}

/// Tabulates `p(x)` for every word of length at most `depth`.
pub fn measure_table(g: &Pfsa, depth: usize) -> Result<MeasureTable> {
    let k = g.num_symbols();
    check_table_size(k, depth)?;
    let mut levels = vec![vec![1.0]];
    let mut states = vec![g.start()];
    for _ in 0..depth {
        let prev = levels.last().expect("non-empty");
        let mut probs = Vec::with_capacity(prev.len() * k);
        let mut next_states = Vec::with_capacity(prev.len() * k);
        for (&p, &q) in prev.iter().zip(&states) {
            for s in 0..k {
                probs.push(p * g.prob(q, s));
                next_states.push(g.next(q, s));
            }
        }
        levels.push(probs);
        states = next_states;
    }
    Ok(MeasureTable { symbols: k, levels })
}

/// `p₁ ⊕ p₂` on tables: `p₃(ε) = 1` and
/// `p₃(xτ) / p₃(x) = p₁(xτ)p₂(xτ) / Σ_α p₁(xα)p₂(xα)`.
pub fn measure_add(t1: &MeasureTable, t2: &MeasureTable) -> Result<MeasureTable> {
    if t1.symbols != t2.symbols {
        return Err(Error::AlphabetMismatch);
    }
    if t1.depth() != t2.depth() {
        return Err(Error::DepthMismatch(t1.depth(), t2.depth()));
    }
    let k = t1.symbols;
    let mut levels = vec![vec![1.0]];
    for d in 1..=t1.depth() {
        let parent = &levels[d - 1];
        let (a, b) = (&t1.levels[d], &t2.levels[d]);
        let mut level = Vec::with_capacity(a.len());
        for (x, &px) in parent.iter().enumerate() {
            let children = x * k..(x + 1) * k;
            let products: Vec<f64> = children.clone().map(|c| a[c] * b[c]).collect();
            let total: f64 = products.iter().sum();
            if !(total >= MIN_ROW_SUM) {
                return Err(Error::Underflow(total));
            }
            level.extend(products.into_iter().map(|p| px * p / total));
        }
        levels.push(level);
    }
    Ok(MeasureTable { symbols: k, levels })
}

/// Outcome of a finite-depth measure comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Equivalence {
    pub equivalent: bool,
    pub max_deviation: f64,
    /// Word attaining the largest deviation (empty when all agree).
    pub argmax: Vec<usize>,
}

/// Compares `p₁(x)` and `p₂(x)` for every `|x| ≤ depth`.
///
/// The paths of both machines are walked together, so no table is stored.
/// Ties keep the first word in length-then-lexicographic order.
pub fn measure_equivalent(g1: &Pfsa, g2: &Pfsa, depth: usize, tol: f64) -> Result<Equivalence> {
    if g1.alphabet() != g2.alphabet() {
        return Err(Error::AlphabetMismatch);
    }
    check_table_size(g1.num_symbols(), depth)?;
    let k = g1.num_symbols();
    let mut best = (0.0f64, 0usize, 0usize);
    // Frontier entries: (p1, p2, q1, q2) in word order.
    let mut frontier = vec![(1.0, 1.0, g1.start(), g2.start())];
    for d in 1..=depth {
        let mut next = Vec::with_capacity(frontier.len() * k);
        for &(p1, p2, q1, q2) in &frontier {
            for s in 0..k {
                let (c1, c2) = (p1 * g1.prob(q1, s), p2 * g2.prob(q2, s));
                let dev = (c1 - c2).abs();
                if dev > best.0 {
                    best = (dev, d, next.len());
                }
                next.push((c1, c2, g1.next(q1, s), g2.next(q2, s)));
            }
        }
        frontier = next;
    }
    Ok(Equivalence {
        equivalent: best.0 <= tol,
        max_deviation: best.0,
        argmax: decode_word(best.2, best.1, k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::machine::Alphabet;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn worked_pair() -> (Pfsa, Pfsa) {
        (
            catalog::last_symbol_machine([0.2, 0.8], [0.4, 0.6]),
            catalog::last_symbol_machine([0.1, 0.9], [0.6, 0.4]),
        )
    }

    fn white() -> Pfsa {
        Pfsa::white_noise(Alphabet::binary())
    }

    /// Brute-force `p(x)` by walking the machine for each word separately.
    fn enumerate(g: &Pfsa, depth: usize) -> Vec<(Vec<usize>, f64)> {
        let k = g.num_symbols();
        let mut out = Vec::new();
        for len in 0..=depth {
            for i in 0..k.pow(len as u32) {
                let w = decode_word(i, len, k);
                out.push((w.clone(), g.string_probability(&w).unwrap()));
            }
        }
        out
    }

    #[test]
    fn compose_white_with_e1() {
        let c = synchronous_compose(&white(), &catalog::e1()).unwrap();
        assert_eq!(c.num_states(), 2);
        for q in 0..2 {
            assert_eq!(c.morph_row(q), &[0.5, 0.5]);
        }
    }

    #[test]
    fn compose_preserves_first_measure() {
        let e1 = catalog::e1();
        let c = synchronous_compose(&e1, &white()).unwrap();
        assert!(measure_equivalent(&e1, &c, 6, 1e-12).unwrap().equivalent);

        let c = synchronous_compose(&e1, &catalog::m2()).unwrap();
        assert!(c.num_states() <= 8);
        let a = enumerate(&e1, 5);
        let b = enumerate(&c, 5);
        assert_eq!(a.len(), 63);
        for ((w1, p1), (w2, p2)) in a.iter().zip(&b) {
            assert_eq!(w1, w2);
            assert_abs_diff_eq!(p1, p2, epsilon = 1e-12);
        }
        assert!(measure_equivalent(&e1, &c, 5, 1e-12).unwrap().equivalent);
    }

    #[test]
    fn compose_is_not_symmetric() {
        let e1 = catalog::e1();
        let m2 = catalog::m2();
        let a = synchronous_compose(&e1, &m2).unwrap();
        let b = synchronous_compose(&m2, &e1).unwrap();
        assert!(!measure_equivalent(&a, &b, 3, 1e-9).unwrap().equivalent);
    }

    #[test]
    fn compose_rejects_alphabet_mismatch() {
        let w3 = Pfsa::white_noise(Alphabet::numeric(3));
        assert!(matches!(
            synchronous_compose(&w3, &white()),
            Err(Error::AlphabetMismatch)
        ));
    }

    #[test]
    fn worked_example_sum() {
        let (g1, g2) = worked_pair();
        let sum = add_same_structure(&g1, &g2).unwrap();
        assert_abs_diff_eq!(sum.morph_row(0)[0], 0.027, epsilon = 5e-4);
        assert_abs_diff_eq!(sum.morph_row(0)[1], 0.973, epsilon = 5e-4);
        assert_abs_diff_eq!(sum.morph_row(1)[0], 0.5, epsilon = 5e-4);
        assert_abs_diff_eq!(sum.morph_row(1)[1], 0.5, epsilon = 5e-4);
    }

    #[test]
    fn same_structure_identity_and_inverse() {
        let g = catalog::m2();
        let lifted = g.uniform_lift();
        let sum = add_same_structure(&g, &lifted).unwrap();
        for q in 0..g.num_states() {
            for (a, b) in sum.morph_row(q).iter().zip(g.morph_row(q)) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
        let zero = add_same_structure(&g, &invert(&g)).unwrap();
        for q in 0..g.num_states() {
            for &p in zero.morph_row(q) {
                assert_abs_diff_eq!(p, 0.5, epsilon = 1e-12);
            }
        }
        assert!(matches!(
            add_same_structure(&g, &catalog::s1()),
            Err(Error::StructureMismatch)
        ));
    }

    #[test]
    fn general_sum_group_laws_on_e1() {
        let e1 = catalog::e1();
        let s = add_general(&e1, &white()).unwrap();
        assert!(measure_equivalent(&s, &e1, 6, 1e-9).unwrap().equivalent);
        let z = add_general(&e1, &invert(&e1)).unwrap();
        assert!(measure_equivalent(&z, &white(), 6, 1e-9).unwrap().equivalent);
    }

    #[test]
    fn general_sum_commutes_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let k = rng.random_range(2..=3);
            let (n1, n2) = (rng.random_range(1..=4), rng.random_range(1..=4));
            let g1 = Pfsa::random(&mut rng, n1, k);
            let g2 = Pfsa::random(&mut rng, n2, k);
            let a = add_general(&g1, &g2).unwrap();
            let b = add_general(&g2, &g1).unwrap();
            assert!(measure_equivalent(&a, &b, 5, 1e-9).unwrap().equivalent);
        }
    }

    #[test]
    fn inverse_examples() {
        let g = last_row_machine(&[0.5, 0.5]);
        assert_eq!(invert(&g).morph_row(0), &[0.5, 0.5]);
        let g = last_row_machine(&[0.2, 0.8]);
        let inv = invert(&g);
        assert_abs_diff_eq!(inv.morph_row(0)[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(inv.morph_row(0)[1], 0.2, epsilon = 1e-15);
        // reciprocals (5, 10/3, 2) sum to 31/3
        let g = last_row_machine(&[0.2, 0.3, 0.5]);
        let inv = invert(&g);
        let expected = [15.0 / 31.0, 10.0 / 31.0, 6.0 / 31.0];
        for (a, b) in inv.morph_row(0).iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(inv.morph_row(0)[0], 0.48387, epsilon = 1e-5);
        assert_abs_diff_eq!(inv.morph_row(0)[1], 0.32258, epsilon = 1e-5);
        assert_abs_diff_eq!(inv.morph_row(0)[2], 0.19355, epsilon = 1e-5);
    }

    fn last_row_machine(row: &[f64]) -> Pfsa {
        Pfsa::from_parts(
            Alphabet::numeric(row.len()),
            vec!["q".into()],
            0,
            vec![vec![0; row.len()]],
            vec![row.to_vec()],
        )
        .unwrap()
    }

    #[test]
    fn binary_inverse_swaps_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(1..=5);
            let g = Pfsa::random(&mut rng, n, 2);
            let inv = invert(&g);
            for q in 0..n {
                let (r, i) = (g.morph_row(q), inv.morph_row(q));
                assert_abs_diff_eq!(i[0], r[1], epsilon = 1e-15);
                assert_abs_diff_eq!(i[1], r[0], epsilon = 1e-15);
            }
            let twice = invert(&inv);
            assert!(measure_equivalent(&twice, &g, 5, 1e-9).unwrap().equivalent);
        }
    }

    #[test]
    fn table_examples() {
        let t = measure_table(&white(), 2).unwrap();
        assert_eq!(t.level(0), &[1.0]);
        assert_eq!(t.level(1), &[0.5, 0.5]);
        assert_eq!(t.level(2), &[0.25; 4]);
        let t = measure_table(&catalog::e1(), 1).unwrap();
        assert_eq!(t.get(&[]), Some(1.0));
        assert_eq!(t.get(&[0]), Some(0.2));
        assert_eq!(t.get(&[1]), Some(0.8));
        assert!(matches!(
            measure_table(&Pfsa::white_noise(Alphabet::numeric(4)), 13),
            Err(Error::TableTooLarge { .. })
        ));
        assert!(check_table_size(4, 12).is_ok());
    }

    #[test]
    fn table_children_sum_to_parent() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let k = rng.random_range(2..=4);
            let n = rng.random_range(1..=5);
            let g = Pfsa::random(&mut rng, n, k);
            let t = measure_table(&g, 5).unwrap();
            for d in 0..5 {
                for (x, &px) in t.level(d).iter().enumerate() {
                    let children: f64 = t.level(d + 1)[x * k..(x + 1) * k].iter().sum();
                    assert_abs_diff_eq!(children, px, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn measure_add_matches_worked_example() {
        let (g1, g2) = worked_pair();
        let lhs = measure_add(&measure_table(&g1, 5).unwrap(), &measure_table(&g2, 5).unwrap())
            .unwrap();
        let rhs = measure_table(&add_same_structure(&g1, &g2).unwrap(), 5).unwrap();
        assert!(lhs.max_deviation(&rhs).unwrap().0 <= 1e-12);
    }

    #[test]
    fn measure_add_identity_and_depth_mismatch() {
        let t = measure_table(&catalog::m2(), 4).unwrap();
        let w = measure_table(&white(), 4).unwrap();
        let sum = measure_add(&t, &w).unwrap();
        assert!(sum.max_deviation(&t).unwrap().0 <= 1e-15);
        let shallow = measure_table(&white(), 3).unwrap();
        assert!(matches!(
            measure_add(&t, &shallow),
            Err(Error::DepthMismatch(4, 3))
        ));
    }

    #[test]
    fn measure_add_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..200 {
            let k = rng.random_range(2..=3);
            let tables: Vec<MeasureTable> = (0..3)
                .map(|_| {
                    let n = rng.random_range(1..=4);
                    measure_table(&Pfsa::random(&mut rng, n, k), 4).unwrap()
                })
                .collect();
            let left = measure_add(&measure_add(&tables[0], &tables[1]).unwrap(), &tables[2]).unwrap();
            let right = measure_add(&tables[0], &measure_add(&tables[1], &tables[2]).unwrap()).unwrap();
            assert!(left.max_deviation(&right).unwrap().0 <= 1e-12);
        }
    }

    #[test]
    fn equivalence_examples() {
        let g = catalog::m2();
        let e = measure_equivalent(&g, &g, 6, 1e-12).unwrap();
        assert!(e.equivalent);
        assert_eq!(e.max_deviation, 0.0);

        let e1 = catalog::e1();
        let c = synchronous_compose(&e1, &catalog::m2()).unwrap();
        assert!(measure_equivalent(&e1, &c, 5, 1e-12).unwrap().equivalent);

        let e = measure_equivalent(&e1, &white(), 3, 1e-3).unwrap();
        assert!(!e.equivalent);
        assert_abs_diff_eq!(e.max_deviation, 0.3, epsilon = 1e-12);
        assert_eq!(e1.alphabet().render_word(&e.argmax), "1");
    }
}
