//! Token choice over masked logits.

use rand::Rng;

use crate::token::{MaskedLogits, TokenError, TokenId, FORBIDDEN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodePolicy {
    Greedy,
    Sample { temperature: f64 },
}

impl DecodePolicy {
    /// Temperature 0 (or below) means greedy.
    pub fn from_temperature(t: f64) -> Self {
        if t > 0.0 {
            DecodePolicy::Sample { temperature: t }
        } else {
            DecodePolicy::Greedy
        }
    }
}

/// Greedy takes the argmax, lowest id on ties. Sampling draws from the
/// softmax over non-forbidden entries. Both only return allowed tokens.
pub fn decode_policy(
    masked: &MaskedLogits,
    policy: DecodePolicy,
    rng: &mut impl Rng,
) -> Result<TokenId, TokenError> {
    let values = masked.values();
    let mut best: Option<(usize, f32)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v != FORBIDDEN && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    let (argmax, max) = best.ok_or(TokenError::EmptyValidSet)?;
    let temperature = match policy {
        DecodePolicy::Greedy => return Ok(argmax as TokenId),
        DecodePolicy::Sample { temperature } if temperature > 0.0 => temperature,
        DecodePolicy::Sample { .. } => return Ok(argmax as TokenId),
    };
    let weights: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != FORBIDDEN)
        .map(|(i, &v)| (i, ((v as f64 - max as f64) / temperature).exp()))
        .collect();
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut draw = rng.gen::<f64>() * total;
    for &(i, w) in &weights {
        if draw < w {
            return Ok(i as TokenId);
        }
        draw -= w;
    }
    // Rounding left a sliver past the end: take the last positive weight.
    let last = weights
        .iter()
        .rev()
        .find(|(_, w)| *w > 0.0)
        .map_or(argmax, |&(i, _)| i);
    Ok(last as TokenId)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::{apply_mask, TokenSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn masked(logits: &[f32], valid: &[u32]) -> MaskedLogits {
        apply_mask(logits, &TokenSet::from_ids(logits.len(), valid.iter().copied())).unwrap()
    }

    #[test]
    fn greedy_tie_break_lowest_id() {
        let m = masked(&[1.0, 5.0, 1.0], &[0, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(decode_policy(&m, DecodePolicy::Greedy, &mut rng).unwrap(), 0);
    }

    #[test]
    fn forced_choice_under_both_modes() {
        let logits = [9.0, 8.0, 7.0, -3.0, 6.0, 5.0, 4.0, 3.0];
        let m = masked(&logits, &[3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(decode_policy(&m, DecodePolicy::Greedy, &mut rng).unwrap(), 3);
        for _ in 0..100 {
            let t = decode_policy(&m, DecodePolicy::Sample { temperature: 1.0 }, &mut rng).unwrap();
            assert_eq!(t, 3);
        }
    }

    #[test]
    fn equal_scores_split_evenly() {
        let m = masked(&[0.5, 2.0, 0.5], &[0, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let zeros = (0..n)
            .filter(|_| decode_policy(&m, DecodePolicy::Sample { temperature: 1.0 }, &mut rng).unwrap() == 0)
            .count();
        // Binomial(n, 1/2): sigma = sqrt(n)/2.
        let sigma = (n as f64).sqrt() / 2.0;
        assert!(((zeros as f64) - n as f64 / 2.0).abs() <= 3.0 * sigma, "{zeros}");
    }
}
