//! Probabilistic finite state automata, their group algebra, and online
//! stream classification by semantic annihilation.
//!
//! ```
//! use pfsa::{algebra, catalog};
//!
//! let g = catalog::e1();
//! let sum = algebra::add_same_structure(&g, &algebra::invert(&g)).unwrap();
//! assert!(sum.is_white_noise());
//! ```

pub mod algebra;
pub mod analysis;
pub mod annihilator;
pub mod bench;
pub mod catalog;
pub mod error;
pub mod estimation;
pub mod format;
pub mod machine;
pub mod markov;
pub mod stream;

pub use error::{Error, Result, ValidationError, Violation};
pub use machine::{validate_pfsa, white_noise_pfsa, Alphabet, Pfsa, RawPfsa};
pub use stream::SymbolStream;
