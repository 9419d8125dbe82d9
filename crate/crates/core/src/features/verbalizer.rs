use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::data::LabelSpace;
use crate::lm::TokenProbResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerbalizerKind {
    YesNo,
    ClassNames,
    TokenMap,
}

/// Maps LM output over a fixed token list to a single bit: the bit is set when the most
/// probable token is the positive one. Ties go to the lower token index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Verbalizer {
    pub id: String,
    pub kind: VerbalizerKind,
    pub tokens: Vec<String>,
    pub positive_index: usize,
}

/// Result of matching a completion against the verbalizer's tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    /// Index of the earliest-occurring token.
    Token(usize),
    Abstain,
}

fn spaced(token: &str, leading_space: bool) -> String {
    if leading_space {
        format!(" {token}")
    } else {
        token.to_string()
    }
}

impl Verbalizer {
    pub fn new(
        id: impl Into<String>,
        kind: VerbalizerKind,
        tokens: Vec<String>,
        positive_index: usize,
    ) -> Result<Self, FeatureError> {
        let v = Self {
            id: id.into(),
            kind,
            tokens,
            positive_index,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::Verbalizer(format!("{}: {m}", self.id)));
        if self.tokens.is_empty() {
            return bad("no tokens".into());
        }
        for (i, t) in self.tokens.iter().enumerate() {
            if t.trim().is_empty() {
                return bad(format!("token {i} is blank"));
            }
            if self.tokens[..i].contains(t) {
                return bad(format!("duplicate token {t:?}"));
            }
        }
        if self.positive_index >= self.tokens.len() {
            return bad(format!(
                "positive index {} out of range for {} tokens",
                self.positive_index,
                self.tokens.len()
            ));
        }
        Ok(())
    }

    /// `Yes`/`No`, positive on `Yes`.
    pub fn yes_no(leading_space: bool) -> Self {
        Self {
            id: "yes_no".into(),
            kind: VerbalizerKind::YesNo,
            tokens: vec![spaced("Yes", leading_space), spaced("No", leading_space)],
            positive_index: 0,
        }
    }

    /// One token per class name, positive on `positive_class`.
    pub fn class_names(labels: &LabelSpace, positive_class: usize, leading_space: bool) -> Result<Self, FeatureError> {
        let name = labels.name(positive_class).ok_or_else(|| {
            FeatureError::Verbalizer(format!("class index {positive_class} out of range"))
        })?;
        Self::new(
            format!("class_names:{name}"),
            VerbalizerKind::ClassNames,
            labels.names().iter().map(|n| spaced(n, leading_space)).collect(),
            positive_class,
        )
    }

    /// Bit for a probability vector aligned with `tokens`. An all-zero vector (every
    /// candidate abstained) yields 0.
    pub fn decide(&self, probs: &[f64]) -> Result<bool, FeatureError> {
        if probs.len() != self.tokens.len() {
            return Err(FeatureError::Misaligned {
                expected: self.tokens.len(),
                got: probs.len(),
            });
        }
        Ok(argmax_lowest(probs).is_some_and(|i| i == self.positive_index))
    }

    /// Case-insensitive earliest occurrence of any token (whitespace-trimmed) in `completion`.
    /// Two tokens starting at the same position go to the lower token index.
    pub fn match_completion(&self, completion: &str) -> MatchOutcome {
        let haystack = completion.to_lowercase();
        self.tokens
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                let needle = t.trim().to_lowercase();
                haystack.find(&needle).map(|pos| (pos, i))
            })
            .min()
            .map_or(MatchOutcome::Abstain, |(_, i)| MatchOutcome::Token(i))
    }

    /// One-hot vector for a matched token; all zeros for an abstention.
    pub fn match_vector(&self, outcome: MatchOutcome) -> Vec<f64> {
        let mut v = vec![0.0; self.tokens.len()];
        if let MatchOutcome::Token(i) = outcome {
            v[i] = 1.0;
        }
        v
    }
}

/// Index of the largest strictly positive entry, lowest index on ties. `None` if every entry
/// is zero (or the slice is empty).
pub(crate) fn argmax_lowest(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v > 0.0 && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

pub fn verbalize_bit(v: &Verbalizer, probs: &TokenProbResult) -> Result<bool, FeatureError> {
    v.decide(&probs.probs)
}

/// `Some(bit)` for a match, `None` for an abstention.
pub fn verbalize_by_matching(v: &Verbalizer, completion: &str) -> Option<bool> {
    match v.match_completion(completion) {
        MatchOutcome::Token(i) => Some(i == v.positive_index),
        MatchOutcome::Abstain => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn result(probs: &[f64]) -> TokenProbResult {
        TokenProbResult {
            probs: probs.to_vec(),
            backend_id: "t".into(),
        }
    }

    #[test]
    fn yes_no_argmax() {
        let v = Verbalizer::yes_no(false);
        assert!(verbalize_bit(&v, &result(&[0.7, 0.2])).unwrap());
        assert!(!verbalize_bit(&v, &result(&[0.2, 0.7])).unwrap());
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let mut v = Verbalizer::yes_no(false);
        assert!(verbalize_bit(&v, &result(&[0.4, 0.4])).unwrap());
        v.positive_index = 1;
        assert!(!verbalize_bit(&v, &result(&[0.4, 0.4])).unwrap());
    }

    #[test]
    fn class_names_argmax() {
        let labels = LabelSpace::new(["negative", "positive"]).unwrap();
        let v = Verbalizer::class_names(&labels, 1, true).unwrap();
        assert_eq!(v.tokens, [" negative", " positive"]);
        assert!(verbalize_bit(&v, &result(&[0.1, 0.3])).unwrap());
    }

    #[test]
    fn misaligned_is_an_error() {
        let v = Verbalizer::yes_no(false);
        assert!(matches!(
            verbalize_bit(&v, &result(&[0.1, 0.3, 0.6])),
            Err(FeatureError::Misaligned { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn all_zero_vector_is_zero_bit() {
        let v = Verbalizer::yes_no(false);
        assert!(!v.decide(&[0.0, 0.0]).unwrap());
    }

    #[test]
    fn word_matching() {
        let labels = LabelSpace::new(["negative", "positive"]).unwrap();
        let v = Verbalizer::class_names(&labels, 1, true).unwrap();
        assert_eq!(verbalize_by_matching(&v, " Positive, because..."), Some(true));
        assert_eq!(verbalize_by_matching(&v, " Positive\n"), Some(true));
        assert_eq!(verbalize_by_matching(&v, "I am unsure"), None);
        assert_eq!(verbalize_by_matching(&v, "negative, not positive"), Some(false));
        assert_eq!(verbalize_by_matching(&v, "positive, not negative"), Some(true));
    }

    #[test]
    fn rejects_bad_definitions() {
        assert!(Verbalizer::new("x", VerbalizerKind::TokenMap, vec!["a".into(), "a".into()], 0).is_err());
        assert!(Verbalizer::new("x", VerbalizerKind::TokenMap, vec!["a".into()], 1).is_err());
        assert!(Verbalizer::new("x", VerbalizerKind::TokenMap, vec![" ".into()], 0).is_err());
    }

    proptest! {
        #[test]
        fn invariant_to_rescaling_and_logit_shift(
            logits in proptest::collection::vec(-10.0f64..10.0, 2..6),
            scale in 0.01f64..100.0,
            shift in -50.0f64..50.0,
            positive in 0usize..6,
        ) {
            let k = logits.len();
            let v = Verbalizer::new("t", VerbalizerKind::TokenMap,
                (0..k).map(|i| format!("t{i}")).collect(), positive % k).unwrap();
            let base = crate::lm::softmax(&logits);
            let scaled: Vec<f64> = base.iter().map(|p| p * scale).collect();
            let shifted_logits: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let shifted = crate::lm::softmax(&shifted_logits);
            let bit = v.decide(&base).unwrap();
            prop_assert_eq!(bit, v.decide(&scaled).unwrap());
            // Shift invariance holds exactly for argmax over logits; softmax rounding can only
            // matter for near-ties.
            let mut sorted = logits.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            prop_assume!(sorted[0] - sorted[1] > 1e-9);
            prop_assert_eq!(bit, v.decide(&shifted).unwrap());
        }
    }
}
