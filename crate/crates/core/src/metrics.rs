//! Evaluation metrics: accuracy for single-answer tasks, mean average
//! precision and mean reciprocal rank for ranked candidate lists.

use crate::error::{Error, Result};

/// Fraction of exact matches between predictions and golds.
pub fn accuracy(predictions: &[usize], golds: &[usize]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != golds.len() {
        return Err(Error::Input(format!(
            "accuracy over {} predictions and {} golds",
            predictions.len(),
            golds.len()
        )));
    }
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| p == g)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Candidate scores for one question plus the indices counted correct.
#[derive(Clone, Debug)]
pub struct ScoredQuestion {
    pub scores: Vec<f64>,
    pub correct: Vec<usize>,
}

/// MAP and MRR over a set of questions. Questions without any correct
/// candidate are skipped (and counted), mirroring common answer-
/// selection evaluation practice.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingMetrics {
    pub map: f64,
    pub mrr: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Candidate indices sorted by descending score, ties broken by the
/// lower original index.
pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Mean average precision and mean reciprocal rank.
///
/// Per question, candidates are ranked by descending score; average
/// precision is the mean over correct items of (correct items at rank
/// <= r) / r, and the reciprocal rank is 1/rank of the first correct
/// item. Both are averaged over the questions that have at least one
/// correct candidate.
pub fn map_mrr(questions: &[ScoredQuestion]) -> Result<RankingMetrics> {
    if questions.is_empty() {
        return Err(Error::Input("no questions to evaluate".into()));
    }
    let mut map_sum = 0.0;
    let mut mrr_sum = 0.0;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for (qi, q) in questions.iter().enumerate() {
        if q.scores.is_empty() {
            return Err(Error::Input(format!("question {qi} has no candidates")));
        }
        if let Some(&bad) = q.correct.iter().find(|&&c| c >= q.scores.len()) {
            return Err(Error::Input(format!(
                "question {qi}: correct index {bad} exceeds {} candidates",
                q.scores.len()
            )));
        }
        if q.correct.is_empty() {
            skipped += 1;
            continue;
        }
        let order = rank_by_score(&q.scores);
        let mut hits = 0usize;
        let mut ap = 0.0;
        let mut first_rank = None;
        for (rank0, &cand) in order.iter().enumerate() {
            if q.correct.contains(&cand) {
                hits += 1;
                ap += hits as f64 / (rank0 + 1) as f64;
                if first_rank.is_none() {
                    first_rank = Some(rank0 + 1);
                }
            }
        }
        map_sum += ap / q.correct.len() as f64;
        mrr_sum += 1.0 / first_rank.expect("at least one correct item") as f64;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::Input(
            "every question lacked a correct candidate".into(),
        ));
    }
    Ok(RankingMetrics {
        map: map_sum / evaluated as f64,
        mrr: mrr_sum / evaluated as f64,
        evaluated,
        skipped,
    })
}
