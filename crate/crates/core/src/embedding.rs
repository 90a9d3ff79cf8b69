//! Vocabulary construction and frozen pretrained word embeddings.
//!
//! Embeddings follow the frozen-table policy: vectors are read from a
//! plain-text file (one `token v1 .. vd` entry per line), tokens missing
//! from the file get zero vectors, and the table is never touched by the
//! optimizer. The padding column (index 0) and the unknown column
//! (index 1) are always zero.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token/index bijection with two reserved entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;

    /// Empty vocabulary containing only the reserved tokens.
    pub fn new() -> Self {
        let mut v = Vocabulary {
            index: HashMap::new(),
            tokens: Vec::new(),
        };
        v.add(PAD_TOKEN);
        v.add(UNK_TOKEN);
        v
    }

    /// Build from a token stream (normally the training split only);
    /// later splits map unseen tokens to [`Vocabulary::UNK`].
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocabulary::new();
        for t in tokens {
            v.add(t.as_ref());
        }
        v
    }

    /// Restore from an ordered token list, e.g. out of a checkpoint.
    pub fn from_ordered_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN)
            || tokens.get(1).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err(Error::Format(
                "vocabulary list must start with the reserved pad/unk tokens".into(),
            ));
        }
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { index, tokens })
    }

    /// Insert a token if new; returns its index either way.
    pub fn add(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        i
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn index_or_unknown(&self, token: &str) -> usize {
        self.index_of(token).unwrap_or(Self::UNK)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        // the reserved entries are always present
        self.tokens.len() <= 2
    }

    /// Map a token sequence to indices, sending unseen tokens to UNK.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_or_unknown(t)).collect()
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::new()
    }
}

/// Lowercased whitespace tokenization, for raw-text inputs. Datasets
/// normally arrive pre-tokenized and skip this.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// Frozen `d x |V|` embedding matrix; column `j` is the vector of token `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    matrix: Tensor,
    dim: usize,
}

impl EmbeddingTable {
    /// Read a text embedding file and fill columns for the tokens the
    /// vocabulary and the file share. Everything else stays zero.
    pub fn load_pretrained(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let file = File::open(path.as_ref())?;
        Self::parse_pretrained(BufReader::new(file), vocab)
    }

    pub fn parse_pretrained(reader: impl BufRead, vocab: &Vocabulary) -> Result<Self> {
        if vocab.is_empty() {
            return Err(Error::Contract(
                "cannot load embeddings for an empty vocabulary".into(),
            ));
        }
        let mut dim: Option<usize> = None;
        let mut columns: Vec<(usize, Vec<f64>)> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts
                .next()
                .ok_or_else(|| Error::format_at(lineno, "missing token"))?;
            let values: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>()
                        .map_err(|_| Error::format_at(lineno, format!("bad number {p:?}")))
                })
                .collect::<Result<_>>()?;
            if values.is_empty() {
                return Err(Error::format_at(lineno, "entry has no vector components"));
            }
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::format_at(
                        lineno,
                        format!("vector length {} does not match dimension {d}", values.len()),
                    ));
                }
                _ => {}
            }
            if let Some(idx) = vocab.index_of(token) {
                if idx != Vocabulary::PAD && idx != Vocabulary::UNK {
                    columns.push((idx, values));
                }
            }
        }
        let dim = dim.ok_or_else(|| Error::Format("embedding file has no entries".into()))?;
        let mut matrix = Tensor::zeros(&[dim, vocab.len()]);
        for (idx, values) in columns {
            for (r, v) in values.into_iter().enumerate() {
                matrix.set(r, idx, v);
            }
        }
        Ok(EmbeddingTable { matrix, dim })
    }

    /// Seeded random table for runs without a pretrained file. The
    /// reserved pad/unk columns stay zero.
    pub fn random(dim: usize, vocab: &Vocabulary, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut matrix = Tensor::zeros(&[dim, vocab.len()]);
        for j in 2..vocab.len() {
            for r in 0..dim {
                matrix.set(r, j, rng.random_range(-1.0..1.0));
            }
        }
        Ok(EmbeddingTable { matrix, dim })
    }

    /// Rebuild from a stored matrix, validating the zero columns.
    pub fn from_matrix(matrix: Tensor) -> Result<Self> {
        if !matrix.is_matrix() || matrix.rows() == 0 || matrix.cols() < 2 {
            return Err(Error::Format(format!(
                "embedding matrix has shape {}",
                matrix.shape_string()
            )));
        }
        for reserved in [Vocabulary::PAD, Vocabulary::UNK] {
            if matrix.column(reserved).iter().any(|&x| x != 0.0) {
                return Err(Error::Format(format!(
                    "reserved embedding column {reserved} is not zero"
                )));
            }
        }
        let dim = matrix.rows();
        Ok(EmbeddingTable { matrix, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    /// Always true: the table never receives gradient updates.
    pub fn is_frozen(&self) -> bool {
        true
    }

    /// FNV-1a hash over the exact bit patterns, for frozen-contract checks.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for x in self.matrix.data() {
            for byte in x.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }

    /// Gather columns for a token index sequence into a `d x L` matrix.
    pub fn lookup(&self, tokens: &[usize]) -> Result<Tensor> {
        let mut out = Tensor::zeros(&[self.dim, tokens.len()]);
        for (j, &idx) in tokens.iter().enumerate() {
            if idx >= self.vocab_size() {
                return Err(Error::Lookup(format!(
                    "token index {idx} at position {j} exceeds vocabulary size {}",
                    self.vocab_size()
                )));
            }
            for r in 0..self.dim {
                out.set(r, j, self.matrix.at(r, idx));
            }
        }
        Ok(out)
    }
}

/// Inverted dropout on an embedded sequence: at training time each entry
/// is zeroed with probability `rate` and survivors are scaled by
/// `1/(1-rate)`, so evaluation is a pure identity.
pub fn embedding_dropout<R: Rng>(
    x: &Tensor,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - rate;
    let data = x
        .data()
        .iter()
        .map(|&v| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                v / keep
            }
        })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(tokens: &[&str]) -> Vocabulary {
        Vocabulary::from_tokens(tokens.iter().copied())
    }

    #[test]
    fn stated_zero_oov_rule() {
        let v = vocab(&["cat", "dog"]);
        let table = EmbeddingTable::parse_pretrained("cat 1 2 3\n".as_bytes(), &v).unwrap();
        assert_eq!(table.dim(), 3);
        let cat = v.index_of("cat").unwrap();
        let dog = v.index_of("dog").unwrap();
        assert_eq!(table.matrix().column(cat), vec![1.0, 2.0, 3.0]);
        assert_eq!(table.matrix().column(dog), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_overlap_gives_all_zero_table() {
        let v = vocab(&["x", "y"]);
        let table =
            EmbeddingTable::parse_pretrained("cat 1 2\ndog 3 4\n".as_bytes(), &v).unwrap();
        assert_eq!(table.dim(), 2);
        assert!(table.matrix().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn overlap_count_matches_set_intersection() {
        // 50-token file, 30-token vocab, 17 overlapping tokens
        let file_tokens: Vec<String> = (0..50).map(|i| format!("f{i}")).collect();
        let vocab_tokens: Vec<String> = (0..13)
            .map(|i| format!("v{i}"))
            .chain((0..17).map(|i| format!("f{i}")))
            .collect();
        let mut file = String::new();
        for t in &file_tokens {
            file.push_str(&format!("{t} 1 1\n"));
        }
        let v = Vocabulary::from_tokens(vocab_tokens.iter());
        let table = EmbeddingTable::parse_pretrained(file.as_bytes(), &v).unwrap();
        let expected: std::collections::HashSet<_> = file_tokens
            .iter()
            .filter(|t| vocab_tokens.contains(t))
            .collect();
        let nonzero = (0..v.len())
            .filter(|&j| table.matrix().column(j).iter().any(|&x| x != 0.0))
            .count();
        assert_eq!(expected.len(), 17);
        assert_eq!(nonzero, 17);
    }

    #[test]
    fn inconsistent_width_names_the_line() {
        let v = vocab(&["a"]);
        let err =
            EmbeddingTable::parse_pretrained("a 1 2 3\nb 4 5\n".as_bytes(), &v).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn lookup_preserves_order_and_padding() {
        let v = vocab(&["a", "b"]);
        let table = EmbeddingTable::parse_pretrained("a 1 2\nb 3 4\n".as_bytes(), &v).unwrap();
        let empty = table.lookup(&[]).unwrap();
        assert_eq!(empty.shape(), &[2, 0]);
        let pads = table.lookup(&[Vocabulary::PAD, Vocabulary::PAD]).unwrap();
        assert!(pads.data().iter().all(|&x| x == 0.0));
        let seq = table
            .lookup(&[v.index_of("b").unwrap(), v.index_of("a").unwrap()])
            .unwrap();
        assert_eq!(seq.column(0), vec![3.0, 4.0]);
        assert_eq!(seq.column(1), vec![1.0, 2.0]);
    }

    #[test]
    fn lookup_rejects_out_of_range_index() {
        let v = vocab(&["a"]);
        let table = EmbeddingTable::parse_pretrained("a 1\n".as_bytes(), &v).unwrap();
        let err = table.lookup(&[99]).unwrap_err();
        assert!(err.to_string().contains("position 0"), "{err}");
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let x = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(embedding_dropout(&x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(embedding_dropout(&x, 0.7, false, &mut rng).unwrap(), x);
        assert!(embedding_dropout(&x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let n = 100_000;
        let x = Tensor::from_vec(&[n], vec![1.0; n]).unwrap();
        let dropped = embedding_dropout(&x, 0.5, true, &mut rng).unwrap();
        let mean: f64 = dropped.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(tokenize("The  Shire\tis Home"), vec!["the", "shire", "is", "home"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn lookup_distributes_over_concatenation() {
        let v = vocab(&["a", "b", "c"]);
        let table =
            EmbeddingTable::parse_pretrained("a 1 2\nb 3 4\nc 5 6\n".as_bytes(), &v).unwrap();
        let s1 = vec![v.index_of("c").unwrap(), v.index_of("a").unwrap()];
        let s2 = vec![v.index_of("b").unwrap()];
        let joined: Vec<usize> = s1.iter().chain(&s2).copied().collect();
        let whole = table.lookup(&joined).unwrap();
        let left = table.lookup(&s1).unwrap();
        let right = table.lookup(&s2).unwrap();
        for j in 0..s1.len() {
            assert_eq!(whole.column(j), left.column(j));
        }
        for j in 0..s2.len() {
            assert_eq!(whole.column(s1.len() + j), right.column(j));
        }
    }

    #[test]
    fn checksum_tracks_content() {
        let v = vocab(&["a"]);
        let t1 = EmbeddingTable::parse_pretrained("a 1 2\n".as_bytes(), &v).unwrap();
        let t2 = EmbeddingTable::parse_pretrained("a 1 2\n".as_bytes(), &v).unwrap();
        let t3 = EmbeddingTable::parse_pretrained("a 1 3\n".as_bytes(), &v).unwrap();
        assert_eq!(t1.checksum(), t2.checksum());
        assert_ne!(t1.checksum(), t3.checksum());
    }
}
