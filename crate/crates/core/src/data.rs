//! Dataset ingestion and synthetic task generation.
//!
//! Datasets are JSON Lines, one instance per line, in one of three
//! shapes:
//!
//! * `classify-pair` — `{"id"?, "premise": [..], "hypothesis": [..], "label": n}`
//! * `select-from-k` — `{"id"?, "question": [..], "candidates": [[..]..], "correct": [n..]}`
//! * `select-from-k-with-plot` — adds `"plot": [..]`; `"correct"` holds exactly one index
//!
//! Token lists are pre-tokenized. The synthetic generators produce small
//! separable tasks for desk-scale training and verification.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three task layouts the engine supports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskShape {
    #[serde(rename = "classify-pair")]
    ClassifyPair,
    #[serde(rename = "select-from-k")]
    SelectFromK,
    #[serde(rename = "select-from-k-with-plot")]
    SelectFromKWithPlot,
}

impl TaskShape {
    pub fn name(&self) -> &'static str {
        match self {
            TaskShape::ClassifyPair => "classify-pair",
            TaskShape::SelectFromK => "select-from-k",
            TaskShape::SelectFromKWithPlot => "select-from-k-with-plot",
        }
    }

    pub fn uses_plot(&self) -> bool {
        matches!(self, TaskShape::SelectFromKWithPlot)
    }
}

impl fmt::Display for TaskShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify-pair" => Ok(TaskShape::ClassifyPair),
            "select-from-k" => Ok(TaskShape::SelectFromK),
            "select-from-k-with-plot" => Ok(TaskShape::SelectFromKWithPlot),
            other => Err(Error::Config(format!(
                "unknown task shape {other:?} (expected classify-pair, select-from-k or select-from-k-with-plot)"
            ))),
        }
    }
}

/// Gold annotation of one instance.
#[derive(Clone, Debug, PartialEq)]
pub enum Label {
    /// Class index, for pair classification.
    Class(usize),
    /// Set of correct candidate indices, for selection.
    Correct(Vec<usize>),
}

impl Label {
    /// The single training target: the class, or the first correct index.
    pub fn primary_index(&self) -> usize {
        match self {
            Label::Class(c) => *c,
            Label::Correct(set) => set[0],
        }
    }

    /// All indices counted as correct at evaluation time.
    pub fn correct_indices(&self) -> Vec<usize> {
        match self {
            Label::Class(c) => vec![*c],
            Label::Correct(set) => set.clone(),
        }
    }
}

/// One training or evaluation example.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchInstance {
    pub id: String,
    /// Question for selection tasks, premise for classification.
    pub question: Vec<String>,
    /// Present only in the three-sequence shape.
    pub plot: Option<Vec<String>>,
    /// K candidate sequences; the hypothesis lives in `candidates[0]`
    /// for pair classification.
    pub candidates: Vec<Vec<String>>,
    pub label: Label,
}

impl MatchInstance {
    pub fn num_candidates(&self) -> usize {
        self.candidates.len()
    }

    fn validate(&self, shape: TaskShape) -> std::result::Result<(), String> {
        if self.question.is_empty() {
            return Err("field question/premise: empty token list".into());
        }
        if self.candidates.is_empty() {
            return Err("field candidates: empty candidate list".into());
        }
        for (k, c) in self.candidates.iter().enumerate() {
            if c.is_empty() {
                return Err(format!("field candidates[{k}]: empty token list"));
            }
        }
        match shape {
            TaskShape::ClassifyPair => {
                if self.candidates.len() != 1 {
                    return Err("field hypothesis: pair classification expects one".into());
                }
            }
            TaskShape::SelectFromK | TaskShape::SelectFromKWithPlot => {
                let correct = match &self.label {
                    Label::Correct(c) => c,
                    Label::Class(_) => return Err("field correct: missing index set".into()),
                };
                if correct.is_empty() {
                    return Err("field correct: no correct candidate listed".into());
                }
                if let Some(&bad) = correct.iter().find(|&&i| i >= self.candidates.len()) {
                    return Err(format!(
                        "field correct: index {bad} exceeds {} candidates",
                        self.candidates.len()
                    ));
                }
                if shape == TaskShape::SelectFromKWithPlot && correct.len() != 1 {
                    return Err("field correct: plot tasks expect exactly one index".into());
                }
            }
        }
        if shape.uses_plot() {
            match &self.plot {
                None => return Err("field plot: missing".into()),
                Some(p) if p.is_empty() => return Err("field plot: empty token list".into()),
                _ => {}
            }
        }
        Ok(())
    }

    /// Every token of the instance, for vocabulary construction.
    pub fn all_tokens(&self) -> impl Iterator<Item = &str> {
        self.question
            .iter()
            .map(String::as_str)
            .chain(self.plot.iter().flatten().map(String::as_str))
            .chain(self.candidates.iter().flatten().map(String::as_str))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoadMode {
    /// Fail on the first malformed line.
    Strict,
    /// Skip malformed lines, collecting one warning each.
    Lenient,
}

/// Result of loading a dataset file.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub instances: Vec<MatchInstance>,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct PairRecord {
    id: Option<String>,
    premise: Vec<String>,
    hypothesis: Vec<String>,
    label: usize,
}

#[derive(Deserialize)]
struct SelectRecord {
    id: Option<String>,
    question: Vec<String>,
    #[serde(default)]
    plot: Option<Vec<String>>,
    candidates: Vec<Vec<String>>,
    correct: Vec<usize>,
}

fn parse_line(line: &str, lineno: usize, shape: TaskShape) -> std::result::Result<MatchInstance, String> {
    let fallback_id = format!("line-{lineno}");
    let instance = match shape {
        TaskShape::ClassifyPair => {
            let rec: PairRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
            MatchInstance {
                id: rec.id.unwrap_or(fallback_id),
                question: rec.premise,
                plot: None,
                candidates: vec![rec.hypothesis],
                label: Label::Class(rec.label),
            }
        }
        TaskShape::SelectFromK | TaskShape::SelectFromKWithPlot => {
            let rec: SelectRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
            MatchInstance {
                id: rec.id.unwrap_or(fallback_id),
                question: rec.question,
                plot: rec.plot,
                candidates: rec.candidates,
                label: Label::Correct(rec.correct),
            }
        }
    };
    instance.validate(shape)?;
    Ok(instance)
}

/// Parse a JSON Lines dataset from any reader. Blank lines are skipped.
pub fn parse_dataset(reader: impl BufRead, shape: TaskShape, mode: LoadMode) -> Result<LoadedDataset> {
    let mut instances = Vec::new();
    let mut warnings = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, lineno, shape) {
            Ok(inst) => instances.push(inst),
            Err(msg) => match mode {
                LoadMode::Strict => return Err(Error::format_at(lineno, msg)),
                LoadMode::Lenient => warnings.push(format!("line {lineno}: {msg}")),
            },
        }
    }
    Ok(LoadedDataset { instances, warnings })
}

/// Load a JSON Lines dataset file.
pub fn load_dataset(path: impl AsRef<Path>, shape: TaskShape, mode: LoadMode) -> Result<LoadedDataset> {
    let file = File::open(path.as_ref())?;
    parse_dataset(BufReader::new(file), shape, mode)
}

/// Serialize one instance back to its JSON Lines form.
pub fn instance_json(inst: &MatchInstance, shape: TaskShape) -> serde_json::Value {
    match shape {
        TaskShape::ClassifyPair => serde_json::json!({
            "id": inst.id,
            "premise": inst.question,
            "hypothesis": inst.candidates[0],
            "label": inst.label.primary_index(),
        }),
        TaskShape::SelectFromK => serde_json::json!({
            "id": inst.id,
            "question": inst.question,
            "candidates": inst.candidates,
            "correct": inst.label.correct_indices(),
        }),
        TaskShape::SelectFromKWithPlot => serde_json::json!({
            "id": inst.id,
            "question": inst.question,
            "plot": inst.plot.as_deref().unwrap_or_default(),
            "candidates": inst.candidates,
            "correct": inst.label.correct_indices(),
        }),
    }
}

/// Write instances as JSON Lines.
pub fn write_jsonl(path: impl AsRef<Path>, instances: &[MatchInstance], shape: TaskShape) -> Result<()> {
    let mut file = File::create(path.as_ref())?;
    for inst in instances {
        serde_json::to_writer(&mut file, &instance_json(inst, shape))
            .map_err(|e| Error::Format(e.to_string()))?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// Synthetic task families for desk-scale runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticTask {
    /// K=5 selection: the correct candidate shares at least two tokens
    /// with the question, the others share none.
    Containment,
    /// Three-class pair classification: hypothesis is a subsequence of
    /// the premise (0), a subsequence with one token swapped for a
    /// foreign one (1), or unrelated (2).
    EntailmentToy,
    /// K=5 plot-grounded selection: the plot concatenates five
    /// "sentences"; candidate k overlaps sentence k, and the question
    /// overlaps the correct candidate's sentence.
    PlotContainment,
}

impl SyntheticTask {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticTask::Containment => "containment",
            SyntheticTask::EntailmentToy => "entailment-toy",
            SyntheticTask::PlotContainment => "plot",
        }
    }

    pub fn shape(&self) -> TaskShape {
        match self {
            SyntheticTask::Containment => TaskShape::SelectFromK,
            SyntheticTask::EntailmentToy => TaskShape::ClassifyPair,
            SyntheticTask::PlotContainment => TaskShape::SelectFromKWithPlot,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            SyntheticTask::EntailmentToy => 3,
            _ => 5,
        }
    }
}

impl fmt::Display for SyntheticTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "containment" => Ok(SyntheticTask::Containment),
            "entailment-toy" => Ok(SyntheticTask::EntailmentToy),
            "plot" => Ok(SyntheticTask::PlotContainment),
            other => Err(Error::Config(format!(
                "unknown synthetic task {other:?} (expected containment, entailment-toy or plot)"
            ))),
        }
    }
}

const CANDIDATES: usize = 5;
const PLOT_SENTENCES: usize = 5;

fn token(i: usize) -> String {
    format!("w{i:03}")
}

/// Sample `count` distinct indices from `pool`.
fn sample_distinct(pool: &[usize], count: usize, rng: &mut ChaCha20Rng) -> Vec<usize> {
    let mut picked: Vec<usize> = pool.to_vec();
    picked.shuffle(rng);
    picked.truncate(count);
    picked
}

/// Generate a reproducible synthetic dataset.
pub fn generate_synthetic(
    task: SyntheticTask,
    n: usize,
    vocab_size: usize,
    seed: u64,
) -> Result<Vec<MatchInstance>> {
    if n < 1 {
        return Err(Error::Config("synthetic dataset size must be at least 1".into()));
    }
    if vocab_size < 8 {
        return Err(Error::Config("synthetic vocabulary needs at least 8 tokens".into()));
    }
    if task == SyntheticTask::PlotContainment && vocab_size < 40 {
        return Err(Error::Config(
            "the plot task needs a vocabulary of at least 40 tokens".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let inst = match task {
            SyntheticTask::Containment => containment_instance(i, vocab_size, &mut rng),
            SyntheticTask::EntailmentToy => entailment_instance(i, vocab_size, &mut rng),
            SyntheticTask::PlotContainment => plot_instance(i, vocab_size, &mut rng),
        };
        debug_assert!(inst.validate(task.shape()).is_ok());
        out.push(inst);
    }
    Ok(out)
}

fn containment_instance(i: usize, vocab_size: usize, rng: &mut ChaCha20Rng) -> MatchInstance {
    let all: Vec<usize> = (0..vocab_size).collect();
    let q_len = rng.random_range(4..=8.min(vocab_size / 2));
    let question = sample_distinct(&all, q_len, rng);
    let q_set: HashSet<usize> = question.iter().copied().collect();
    let rest: Vec<usize> = all.iter().copied().filter(|t| !q_set.contains(t)).collect();

    let correct_pos = rng.random_range(0..CANDIDATES);
    let mut candidates = Vec::with_capacity(CANDIDATES);
    for k in 0..CANDIDATES {
        let tokens = if k == correct_pos {
            let overlap = rng.random_range(2..=3.min(q_len));
            let mut c = sample_distinct(&question, overlap, rng);
            let fill = rng.random_range(2..=4);
            c.extend(sample_distinct(&rest, fill.min(rest.len()), rng));
            c.shuffle(rng);
            c
        } else {
            let len = rng.random_range(4..=6);
            sample_distinct(&rest, len.min(rest.len()), rng)
        };
        candidates.push(tokens.into_iter().map(token).collect());
    }
    MatchInstance {
        id: format!("containment-{i}"),
        question: question.into_iter().map(token).collect(),
        plot: None,
        candidates,
        label: Label::Correct(vec![correct_pos]),
    }
}

fn entailment_instance(i: usize, vocab_size: usize, rng: &mut ChaCha20Rng) -> MatchInstance {
    let all: Vec<usize> = (0..vocab_size).collect();
    let p_len = rng.random_range(5..=8.min(vocab_size / 2 + 1).max(5));
    let premise = sample_distinct(&all, p_len.min(vocab_size / 2), rng);
    let p_set: HashSet<usize> = premise.iter().copied().collect();
    let rest: Vec<usize> = all.iter().copied().filter(|t| !p_set.contains(t)).collect();

    let class = rng.random_range(0..3usize);
    let hypothesis: Vec<usize> = match class {
        // ordered subsequence of the premise
        0 => {
            let keep = rng.random_range(2..=premise.len() - 1);
            let mut idx: Vec<usize> = (0..premise.len()).collect();
            idx.shuffle(rng);
            idx.truncate(keep);
            idx.sort_unstable();
            idx.into_iter().map(|j| premise[j]).collect()
        }
        // subsequence with one token replaced by a foreign one
        1 => {
            let keep = rng.random_range(2..=premise.len() - 1);
            let mut idx: Vec<usize> = (0..premise.len()).collect();
            idx.shuffle(rng);
            idx.truncate(keep);
            idx.sort_unstable();
            let mut h: Vec<usize> = idx.into_iter().map(|j| premise[j]).collect();
            let at = rng.random_range(0..h.len());
            h[at] = rest[rng.random_range(0..rest.len())];
            h
        }
        // unrelated tokens
        _ => {
            let len = rng.random_range(3..=6);
            sample_distinct(&rest, len.min(rest.len()), rng)
        }
    };
    MatchInstance {
        id: format!("entailment-{i}"),
        question: premise.into_iter().map(token).collect(),
        plot: None,
        candidates: vec![hypothesis.into_iter().map(token).collect()],
        label: Label::Class(class),
    }
}

fn plot_instance(i: usize, vocab_size: usize, rng: &mut ChaCha20Rng) -> MatchInstance {
    // Partition the vocabulary: one pool per plot sentence, the tail
    // kept for filler tokens that never carry signal.
    let per_sentence = vocab_size / (PLOT_SENTENCES + 1);
    let sent_len = per_sentence.clamp(4, 6);
    let mut plot = Vec::new();
    let mut sentences: Vec<Vec<usize>> = Vec::with_capacity(PLOT_SENTENCES);
    for s in 0..PLOT_SENTENCES {
        let pool: Vec<usize> = (s * per_sentence..(s + 1) * per_sentence).collect();
        let sent = sample_distinct(&pool, sent_len.min(pool.len()), rng);
        plot.extend(sent.iter().copied());
        sentences.push(sent);
    }
    let filler: Vec<usize> = (PLOT_SENTENCES * per_sentence..vocab_size).collect();

    let correct = rng.random_range(0..PLOT_SENTENCES);
    let q_overlap = rng.random_range(2..=3);
    let mut question = sample_distinct(&sentences[correct], q_overlap, rng);
    question.extend(sample_distinct(&filler, 2.min(filler.len()), rng));
    question.shuffle(rng);

    let mut candidates = Vec::with_capacity(PLOT_SENTENCES);
    for sentence in &sentences {
        let overlap = rng.random_range(2..=3);
        let mut c = sample_distinct(sentence, overlap, rng);
        c.extend(sample_distinct(&filler, 1.min(filler.len()), rng));
        c.shuffle(rng);
        candidates.push(c.into_iter().map(token).collect());
    }
    MatchInstance {
        id: format!("plot-{i}"),
        question: question.into_iter().map(token).collect(),
        plot: Some(plot.into_iter().map(token).collect()),
        candidates,
        label: Label::Correct(vec![correct]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_loads_one_instance() {
        let line = r#"{"question": ["a"], "candidates": [["b"], ["c"]], "correct": [1]}"#;
        let loaded =
            parse_dataset(line.as_bytes(), TaskShape::SelectFromK, LoadMode::Strict).unwrap();
        assert_eq!(loaded.instances.len(), 1);
        assert_eq!(loaded.instances[0].id, "line-1");
        assert_eq!(loaded.instances[0].label, Label::Correct(vec![1]));
    }

    #[test]
    fn missing_label_names_line_and_field() {
        let line = r#"{"premise": ["a"], "hypothesis": ["b"]}"#;
        let err = parse_dataset(line.as_bytes(), TaskShape::ClassifyPair, LoadMode::Strict)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1") && msg.contains("label"), "{msg}");
    }

    #[test]
    fn lenient_mode_skips_and_warns() {
        let good = r#"{"question": ["a"], "candidates": [["b"]], "correct": [0]}"#;
        let mut text = String::new();
        for i in 0..100 {
            if [10, 40, 70].contains(&i) {
                text.push_str("{\"broken\": true}\n");
            } else {
                text.push_str(good);
                text.push('\n');
            }
        }
        let strict = parse_dataset(text.as_bytes(), TaskShape::SelectFromK, LoadMode::Strict);
        assert!(strict.unwrap_err().to_string().contains("line 11"));
        let lenient =
            parse_dataset(text.as_bytes(), TaskShape::SelectFromK, LoadMode::Lenient).unwrap();
        assert_eq!(lenient.instances.len(), 97);
        assert_eq!(lenient.warnings.len(), 3);
    }

    #[test]
    fn empty_candidate_list_is_rejected() {
        let line = r#"{"question": ["a"], "candidates": [], "correct": [0]}"#;
        let err = parse_dataset(line.as_bytes(), TaskShape::SelectFromK, LoadMode::Strict)
            .unwrap_err();
        assert!(err.to_string().contains("candidates"), "{err}");
    }

    #[test]
    fn out_of_range_correct_index_is_rejected() {
        let line = r#"{"question": ["a"], "candidates": [["b"]], "correct": [3]}"#;
        assert!(parse_dataset(line.as_bytes(), TaskShape::SelectFromK, LoadMode::Strict).is_err());
    }

    #[test]
    fn round_trip_through_jsonl() {
        let data = generate_synthetic(SyntheticTask::Containment, 10, 64, 5).unwrap();
        let mut text = String::new();
        for inst in &data {
            text.push_str(&instance_json(inst, TaskShape::SelectFromK).to_string());
            text.push('\n');
        }
        let loaded =
            parse_dataset(text.as_bytes(), TaskShape::SelectFromK, LoadMode::Strict).unwrap();
        assert_eq!(loaded.instances, data);
    }

    #[test]
    fn generation_is_deterministic() {
        for task in [
            SyntheticTask::Containment,
            SyntheticTask::EntailmentToy,
            SyntheticTask::PlotContainment,
        ] {
            let a = generate_synthetic(task, 20, 64, 7).unwrap();
            let b = generate_synthetic(task, 20, 64, 7).unwrap();
            assert_eq!(a, b);
            let c = generate_synthetic(task, 20, 64, 8).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn containment_overlap_is_by_construction() {
        let data = generate_synthetic(SyntheticTask::Containment, 50, 64, 11).unwrap();
        for inst in &data {
            let q: HashSet<&String> = inst.question.iter().collect();
            let correct = inst.label.primary_index();
            for (k, cand) in inst.candidates.iter().enumerate() {
                let overlap = cand.iter().filter(|t| q.contains(t)).count();
                if k == correct {
                    assert!(overlap >= 2, "correct candidate of {} overlaps {overlap}", inst.id);
                } else {
                    assert_eq!(overlap, 0, "distractor of {} overlaps", inst.id);
                }
            }
        }
    }

    #[test]
    fn positions_and_classes_are_within_ten_percent_of_uniform() {
        let data = generate_synthetic(SyntheticTask::Containment, 1000, 8, 14).unwrap();
        let mut counts = [0usize; CANDIDATES];
        for inst in &data {
            counts[inst.label.primary_index()] += 1;
        }
        for c in counts {
            let freq = c as f64 / 1000.0;
            assert!((freq - 0.2).abs() <= 0.02, "position frequency {freq}");
        }

        let toy = generate_synthetic(SyntheticTask::EntailmentToy, 1000, 16, 14).unwrap();
        let mut classes = [0usize; 3];
        for inst in &toy {
            classes[inst.label.primary_index()] += 1;
        }
        for c in classes {
            let freq = c as f64 / 1000.0;
            assert!((freq - 1.0 / 3.0).abs() <= 1.0 / 30.0, "class frequency {freq}");
        }
    }

    #[test]
    fn plot_task_links_question_to_the_correct_sentence() {
        let data = generate_synthetic(SyntheticTask::PlotContainment, 30, 64, 17).unwrap();
        for inst in &data {
            let plot: HashSet<&String> = inst.plot.as_ref().unwrap().iter().collect();
            let correct = inst.label.primary_index();
            let q: HashSet<&String> = inst.question.iter().collect();
            let correct_cand: HashSet<&String> = inst.candidates[correct].iter().collect();
            // the correct candidate and the question intersect the plot,
            // and their plot overlaps share a sentence by construction
            assert!(q.intersection(&plot).count() >= 2);
            assert!(correct_cand.intersection(&plot).count() >= 2);
        }
    }

    #[test]
    fn overlap_counting_solves_containment_perfectly() {
        // sanity ceiling: a hand-written overlap-count classifier gets
        // every instance right, so the task is fully separable
        let data = generate_synthetic(SyntheticTask::Containment, 200, 64, 23).unwrap();
        for inst in &data {
            let q: HashSet<&String> = inst.question.iter().collect();
            let overlaps: Vec<usize> = inst
                .candidates
                .iter()
                .map(|c| c.iter().filter(|t| q.contains(t)).count())
                .collect();
            let mut best = 0;
            for (k, &o) in overlaps.iter().enumerate() {
                if o > overlaps[best] {
                    best = k;
                }
            }
            assert_eq!(best, inst.label.primary_index(), "{}", inst.id);
        }
    }

    #[test]
    fn small_vocab_is_rejected() {
        assert!(generate_synthetic(SyntheticTask::Containment, 5, 4, 1).is_err());
        assert!(generate_synthetic(SyntheticTask::PlotContainment, 5, 16, 1).is_err());
    }
}
