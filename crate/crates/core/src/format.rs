//! Model and stream files.
//!
//! A model file is a JSON object:
//!
//! ```json
//! {
//!   "metadata": { "name": "E1", "provenance": "catalog" },
//!   "alphabet": ["0", "1"],
//!   "states": ["A", "B"],
//!   "start": "A",
//!   "delta": { "A": { "0": "A", "1": "B" }, "B": { "0": "A", "1": "B" } },
//!   "morph": { "A": [0.2, 0.8], "B": [0.4, 0.6] }
//! }
//! ```
//!
//! Probabilities are written in shortest round-trip form, so reading a
//! written file reproduces every value exactly.
//!
//! A stream file holds one symbol label per line. When every label is a
//! single character the whole stream may instead be written on one line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::machine::{validate_pfsa, Alphabet, Pfsa, RawPfsa};
use crate::stream::SymbolStream;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default)]
    pub metadata: ModelMetadata,
    #[serde(flatten)]
    pub model: RawPfsa,
}

impl ModelFile {
    pub fn new(g: &Pfsa, name: Option<&str>, provenance: Option<&str>) -> Self {
        Self {
            metadata: ModelMetadata {
                name: name.map(str::to_string),
                provenance: provenance.map(str::to_string),
            },
            model: g.to_raw(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Validates the description into a machine.
    pub fn to_pfsa(&self) -> Result<Pfsa> {
        Ok(validate_pfsa(&self.model)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Reads and validates a model file.
pub fn read_model(path: impl AsRef<Path>) -> Result<(Pfsa, ModelMetadata)> {
    let file = ModelFile::read(path)?;
    Ok((file.to_pfsa()?, file.metadata))
}

pub fn write_model(path: impl AsRef<Path>, g: &Pfsa, name: Option<&str>, provenance: Option<&str>) -> Result<()> {
    ModelFile::new(g, name, provenance).write(path)
}

/// Writes labels one per line, or concatenated on a single line when
/// `compact` is set (single-character alphabets only).
pub fn write_stream<W: Write>(stream: &SymbolStream, mut out: W, compact: bool) -> Result<()> {
    let alphabet = stream.alphabet();
    if compact {
        if !alphabet.single_char_labels() {
            return Err(Error::Config(
                "compact streams need single-character labels".into(),
            ));
        }
        if !stream.is_empty() {
            writeln!(out, "{}", alphabet.render_word(stream.symbols()))?;
        }
    } else {
        for &s in stream.symbols() {
            writeln!(out, "{}", alphabet.label(s))?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_stream_file(path: impl AsRef<Path>, stream: &SymbolStream, compact: bool) -> Result<()> {
    write_stream(stream, BufWriter::new(fs::File::create(path)?), compact)
}

/// Appends the symbols of one stream-file line.
///
/// A line equal to a label is that symbol; otherwise, with single-character
/// labels, every character is a symbol.
pub fn parse_stream_line(line: &str, alphabet: &Alphabet, out: &mut Vec<usize>) -> Result<()> {
    let line = line.trim_end_matches('\r');
    if line.is_empty() {
        return Ok(());
    }
    if let Some(s) = alphabet.index_of(line) {
        out.push(s);
        return Ok(());
    }
    if alphabet.single_char_labels() {
        out.extend(alphabet.parse_word(line)?);
        return Ok(());
    }
    Err(Error::UnknownLabel(line.to_string()))
}

pub fn parse_stream(text: &str, alphabet: &Alphabet) -> Result<SymbolStream> {
    let mut symbols = Vec::new();
    for line in text.lines() {
        parse_stream_line(line, alphabet, &mut symbols)?;
    }
    SymbolStream::new(alphabet.clone(), symbols)
}

pub fn read_stream_file(path: impl AsRef<Path>, alphabet: &Alphabet) -> Result<SymbolStream> {
    parse_stream(&fs::read_to_string(path)?, alphabet)
}
