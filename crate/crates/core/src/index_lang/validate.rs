use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{IndexExpression, IndexOccurrence, Level};

/// Free indices must appear once per term, on the same level everywhere.
pub const RULE_FREE: &str = "free-index";
/// A repeated index appears exactly twice in a term: once upper, once lower.
pub const RULE_SUMMATION: &str = "summation-index";

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Valid,
    Invalid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub index: String,
    pub start: usize,
    pub end: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexClass {
    pub index: String,
    pub level: Level,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermIndices {
    pub free: Vec<IndexClass>,
    pub summation: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub violations: Vec<Violation>,
    pub lhs: Vec<IndexClass>,
    pub terms: Vec<TermIndices>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.verdict == Verdict::Valid
    }
}

fn violation(rule: &str, occ: &IndexOccurrence, message: String) -> Violation {
    Violation {
        rule: rule.into(),
        index: occ.letter.to_string(),
        start: occ.span.start,
        end: occ.span.end,
        message,
    }
}

fn level_word(level: Level) -> &'static str {
    match level {
        Level::Upper => "upper",
        Level::Lower => "lower",
    }
}

/// Classifies the letters of one term (or of the left-hand side).
/// Returns free letters with their occurrence, summation letters, and the
/// occurrences that break the pairing rule.
fn classify<'a>(
    occurrences: impl Iterator<Item = &'a IndexOccurrence>,
    violations: &mut Vec<Violation>,
) -> (BTreeMap<char, &'a IndexOccurrence>, Vec<char>) {
    let mut seen: BTreeMap<char, Vec<&IndexOccurrence>> = BTreeMap::new();
    for occ in occurrences {
        seen.entry(occ.letter).or_default().push(occ);
    }
    let mut free = BTreeMap::new();
    let mut summation = Vec::new();
    for (letter, occs) in seen {
        match occs.as_slice() {
            [one] => {
                free.insert(letter, *one);
            }
            [a, b] if a.level != b.level => summation.push(letter),
            [_, b] => violations.push(violation(
                RULE_SUMMATION,
                b,
                format!(
                    "index {letter} appears twice as {}; a summation index needs one upper and one lower entry",
                    level_word(b.level)
                ),
            )),
            many => violations.push(violation(
                RULE_SUMMATION,
                many[2],
                format!("index {letter} appears {} times in one term; at most two entries are allowed", many.len()),
            )),
        }
    }
    (free, summation)
}

fn classes(free: &BTreeMap<char, &IndexOccurrence>) -> Vec<IndexClass> {
    free.iter().map(|(c, o)| IndexClass { index: c.to_string(), level: o.level }).collect()
}

/// Checks free-index and summation-index consistency. Violations are data.
pub fn validate(e: &IndexExpression) -> ValidationReport {
    let mut violations = Vec::new();
    let mut lhs_extra = Vec::new();
    let (lhs_free, lhs_repeated) = classify(e.lhs.occurrences(), &mut lhs_extra);
    for letter in lhs_repeated {
        let occ = e.lhs.occurrences().filter(|o| o.letter == letter).nth(1).expect("repeated letter");
        violations.push(violation(
            RULE_FREE,
            occ,
            format!("index {letter} is repeated on the left-hand side; its indices must all be free"),
        ));
    }
    for v in lhs_extra {
        violations.push(Violation { rule: RULE_FREE.into(), ..v });
    }

    let mut terms = Vec::with_capacity(e.terms.len());
    for term in &e.terms {
        let (free, summation) = classify(term.occurrences(), &mut violations);
        for (letter, occ) in &free {
            match lhs_free.get(letter) {
                None => violations.push(violation(
                    RULE_FREE,
                    occ,
                    format!("index {letter} is free in this term but absent from the left-hand side"),
                )),
                Some(l) if l.level != occ.level => violations.push(violation(
                    RULE_FREE,
                    occ,
                    format!(
                        "free index {letter} is {} here but {} on the left-hand side",
                        level_word(occ.level),
                        level_word(l.level)
                    ),
                )),
                Some(_) => {}
            }
        }
        for (letter, occ) in &lhs_free {
            if !free.contains_key(letter) {
                let repeated = summation.contains(letter) || term.occurrences().any(|o| o.letter == *letter);
                let here = term.occurrences().find(|o| o.letter == *letter).unwrap_or(occ);
                violations.push(violation(
                    RULE_FREE,
                    here,
                    if repeated {
                        format!("free index {letter} of the left-hand side is summed in this term")
                    } else {
                        format!(
                            "free index {letter} of the left-hand side is missing from the term at bytes {}..{}",
                            term.span.start, term.span.end
                        )
                    },
                ));
            }
        }
        terms.push(TermIndices {
            free: classes(&free),
            summation: summation.iter().map(char::to_string).collect(),
        });
    }
    ValidationReport {
        verdict: if violations.is_empty() { Verdict::Valid } else { Verdict::Invalid },
        violations,
        lhs: classes(&lhs_free),
        terms,
    }
}
