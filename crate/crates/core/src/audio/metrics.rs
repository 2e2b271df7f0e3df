//! Evaluation metrics: word error rate and mean-squared error.

use super::{AudioError, MelSpec};

/// Unit-cost Levenshtein distance over arbitrary tokens.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word error rate in percent. May exceed 100 when the hypothesis is much
/// longer than the reference.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64, AudioError> {
    if reference.is_empty() {
        return Err(AudioError::EmptyReference);
    }
    Ok(100.0 * edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

pub fn wer_str(reference: &str, hypothesis: &str) -> Result<f64, AudioError> {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    wer(&r, &h)
}

pub fn mse_loss(pred: &MelSpec, target: &MelSpec) -> Result<f64, AudioError> {
    if pred.frames.shape() != target.frames.shape() {
        return Err(AudioError::ShapeMismatch(
            pred.frames.shape().to_vec(),
            target.frames.shape().to_vec(),
        ));
    }
    let (p, t) = (pred.values(), target.values());
    if p.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = p
        .iter()
        .zip(t)
        .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
        .sum();
    Ok(sum / p.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_is_zero() {
        assert_eq!(wer_str("a b c", "a b c").unwrap(), 0.0);
    }

    #[test]
    fn one_deletion_of_four() {
        assert_eq!(wer_str("how is it going", "how is it").unwrap(), 25.0);
    }

    #[test]
    fn can_exceed_hundred() {
        assert_eq!(wer_str("a", "b c d").unwrap(), 300.0);
    }

    #[test]
    fn empty_reference() {
        assert_eq!(wer_str("", "x"), Err(AudioError::EmptyReference));
    }

    #[test]
    fn mse_examples() {
        let z = MelSpec::from_rows(&[vec![0.0; 3], vec![0.0; 3]], 3, 160, 16000);
        let two = MelSpec::from_rows(&[vec![2.0; 3], vec![2.0; 3]], 3, 160, 16000);
        assert_eq!(mse_loss(&z, &z).unwrap(), 0.0);
        assert_eq!(mse_loss(&two, &z).unwrap(), 4.0);
        let other = MelSpec::from_rows(&[vec![0.0; 2]], 2, 160, 16000);
        assert!(matches!(mse_loss(&z, &other), Err(AudioError::ShapeMismatch(..))));
    }

    proptest! {
        #[test]
        fn wer_properties(
            a in proptest::collection::vec(0u8..5, 1..12),
            b in proptest::collection::vec(0u8..5, 0..12),
            extra in proptest::collection::vec(0u8..5, 0..4),
            at in 0usize..12,
        ) {
            prop_assert_eq!(wer(&a, &a).unwrap(), 0.0);
            prop_assert!(wer(&a, &b).unwrap() >= 0.0);
            let d = edit_distance(&a, &b);
            let mut longer = b.clone();
            let at = at.min(longer.len());
            for (i, t) in extra.iter().enumerate() {
                longer.insert(at + i, *t);
            }
            prop_assert!(edit_distance(&a, &longer) <= d + extra.len());
        }
    }
}
