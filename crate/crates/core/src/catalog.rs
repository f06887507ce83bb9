//! Built-in models.
//!
//! * `M2`: depth-2 suffix machine over `{0, 1}`; state `s_ab` means the last
//!   two symbols were `ab`.
//! * `S1`: two-state parity machine over `{0, 1}`; both symbols permute the
//!   states, so no word synchronizes it.
//! * `E1`: two-state "last symbol" machine used in the algebra examples.
//! * `W`: binary symbolic white noise.
//!
//! The morph values of `M2` and `S1` are declared defaults.

use crate::machine::{Alphabet, Pfsa};

pub const MODEL_IDS: [&str; 4] = ["M2", "S1", "E1", "W"];

/// Looks a catalog model up by id (case-insensitive).
pub fn by_id(id: &str) -> Option<Pfsa> {
    match id.to_ascii_uppercase().as_str() {
        "M2" => Some(m2()),
        "S1" => Some(s1()),
        "E1" => Some(e1()),
        "W" | "WHITE" => Some(white()),
        _ => None,
    }
}

/// All catalog models with their ids.
pub fn catalog() -> Vec<(&'static str, Pfsa)> {
    MODEL_IDS
        .iter()
        .map(|&id| (id, by_id(id).expect("catalog id")))
        .collect()
}

pub fn m2() -> Pfsa {
    m2_with_rows([[0.7, 0.3], [0.2, 0.8], [0.9, 0.1], [0.1, 0.9]])
}

/// The suffix structure of `M2` with caller-chosen rows for
/// `s00, s01, s10, s11`.
pub fn m2_with_rows(rows: [[f64; 2]; 4]) -> Pfsa {
    let states = ["s00", "s01", "s10", "s11"];
    // s_ab --c--> s_bc, with index(ab) = 2a + b
    let delta = (0..4)
        .map(|ab| (0..2).map(|c| ((ab & 1) << 1) | c).collect())
        .collect();
    Pfsa::from_parts(
        Alphabet::binary(),
        states.iter().map(|s| s.to_string()).collect(),
        0,
        delta,
        rows.iter().map(|r| r.to_vec()).collect(),
    )
    .expect("M2 is valid")
}

pub fn s1() -> Pfsa {
    s1_with_rows([0.6, 0.4], [0.15, 0.85])
}

pub fn s1_with_rows(even: [f64; 2], odd: [f64; 2]) -> Pfsa {
    Pfsa::from_parts(
        Alphabet::binary(),
        vec!["e".into(), "o".into()],
        0,
        vec![vec![0, 1], vec![1, 0]],
        vec![even.to_vec(), odd.to_vec()],
    )
    .expect("S1 is valid")
}

pub fn e1() -> Pfsa {
    last_symbol_machine([0.2, 0.8], [0.4, 0.6])
}

/// Two states `A`, `B`; every `0` leads to `A` and every `1` to `B`.
pub fn last_symbol_machine(a: [f64; 2], b: [f64; 2]) -> Pfsa {
    Pfsa::from_parts(
        Alphabet::binary(),
        vec!["A".into(), "B".into()],
        0,
        vec![vec![0, 1], vec![0, 1]],
        vec![a.to_vec(), b.to_vec()],
    )
    .expect("last-symbol machine is valid")
}

pub fn white() -> Pfsa {
    Pfsa::white_noise(Alphabet::binary())
}
