//! Exact-match span F1 over BIO tag sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub kind: String,
    pub start: usize,
    /// Exclusive.
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_tag(tag: &str) -> Option<Tag<'_>> {
    if tag == "O" {
        return Some(Tag::Outside);
    }
    match tag.split_once('-') {
        Some(("B", kind)) if !kind.is_empty() => Some(Tag::Begin(kind)),
        Some(("I", kind)) if !kind.is_empty() => Some(Tag::Inside(kind)),
        _ => None,
    }
}

/// Maximal spans of a BIO sequence.
///
/// With `strict`, an `I-X` that does not continue an `X` span is a data
/// error; otherwise it opens a new span, as if it were `B-X`.
pub fn extract_spans(tags: &[String], strict: bool) -> Result<Vec<Span>> {
    let mut spans = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (k, tag) in tags.iter().enumerate() {
        let parsed = parse_tag(tag).ok_or_else(|| Error::Data(format!("`{tag}` at position {k} is not a BIO tag")))?;
        match parsed {
            Tag::Inside(kind) if open.as_ref().is_some_and(|(o, _)| o == kind) => {}
            Tag::Inside(kind) if strict => {
                return Err(Error::Data(format!(
                    "I-{kind} at position {k} does not continue a {kind} span"
                )));
            }
            Tag::Outside => {
                if let Some((kind, start)) = open.take() {
                    spans.push(Span { kind, start, end: k });
                }
            }
            Tag::Begin(kind) | Tag::Inside(kind) => {
                if let Some((prev, start)) = open.take() {
                    spans.push(Span {
                        kind: prev,
                        start,
                        end: k,
                    });
                }
                open = Some((kind.to_string(), k));
            }
        }
    }
    if let Some((kind, start)) = open {
        spans.push(Span {
            kind,
            start,
            end: tags.len(),
        });
    }
    Ok(spans)
}

/// Micro-averaged span F1 over sentences. Gold must be well-formed BIO;
/// predictions are repaired. F1 is 0 when nothing is predicted but gold
/// spans exist, and 1 when both sides are empty.
pub fn evaluate_span_f1(gold: &[Vec<String>], predicted: &[Vec<String>]) -> Result<SpanScores> {
    if gold.len() != predicted.len() {
        return Err(Error::shape(gold.len(), predicted.len()));
    }
    let (mut correct, mut n_pred, mut n_gold) = (0usize, 0usize, 0usize);
    for (g, p) in gold.iter().zip(predicted) {
        if g.len() != p.len() {
            return Err(Error::shape(g.len(), p.len()));
        }
        let gs = extract_spans(g, true)?;
        let ps = extract_spans(p, false)?;
        correct += ps.iter().filter(|s| gs.contains(s)).count();
        n_pred += ps.len();
        n_gold += gs.len();
    }
    let precision = if n_pred == 0 {
        0.0
    } else {
        correct as f64 / n_pred as f64
    };
    let recall = if n_gold == 0 {
        0.0
    } else {
        correct as f64 / n_gold as f64
    };
    let f1 = match (n_pred, n_gold) {
        (0, 0) => 1.0,
        _ if precision + recall == 0.0 => 0.0,
        _ => 2.0 * precision * recall / (precision + recall),
    };
    Ok(SpanScores {
        precision,
        recall,
        f1,
        correct,
        predicted: n_pred,
        gold: n_gold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identity_scores_one() {
        let g = vec![tags("B-PER I-PER O B-LOC"), tags("O O B-ORG")];
        let r = evaluate_span_f1(&g, &g).unwrap();
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.gold, 3);
    }

    #[test]
    fn no_predictions_scores_zero() {
        let g = vec![tags("B-PER O")];
        let p = vec![tags("O O")];
        assert_eq!(evaluate_span_f1(&g, &p).unwrap().f1, 0.0);
    }

    #[test]
    fn hand_counted_half() {
        // gold: PER[0,2) LOC[3,4); predicted: PER[0,2) ✓, LOC[2,4) ✗
        let g = vec![tags("B-PER I-PER O B-LOC")];
        let p = vec![tags("B-PER I-PER B-LOC I-LOC")];
        let r = evaluate_span_f1(&g, &p).unwrap();
        assert_eq!((r.correct, r.predicted, r.gold), (1, 2, 2));
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.f1, 0.5);
    }

    #[test]
    fn stray_inside_is_repaired_in_predictions_only() {
        let p = tags("O I-PER I-PER O");
        assert_eq!(
            extract_spans(&p, false).unwrap(),
            vec![Span {
                kind: "PER".into(),
                start: 1,
                end: 3
            }]
        );
        assert!(matches!(extract_spans(&p, true), Err(Error::Data(_))));
        let g = vec![tags("O B-PER I-PER O")];
        assert_eq!(evaluate_span_f1(&g, &[p]).unwrap().f1, 1.0);
        assert!(evaluate_span_f1(&[tags("I-LOC O")], &[tags("O O")]).is_err());
    }

    #[test]
    fn type_change_splits_spans() {
        let s = extract_spans(&tags("B-PER I-LOC"), false).unwrap();
        assert_eq!(s.len(), 2);
        assert!(extract_spans(&tags("X-PER"), false).is_err());
    }
}
