use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GenerateError;
use crate::vocab::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerParams {
    pub temperature: f64,
    pub top_p: f64,
    /// Token budget for one request; `None` means twice the predictor window.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for SamplerParams {
    fn default() -> Self {
        SamplerParams { temperature: 1.0, top_p: 1.0, max_steps: None, seed: 0 }
    }
}

impl SamplerParams {
    pub fn check(&self) -> Result<(), GenerateError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(GenerateError::InvalidRequest("temperature must be positive".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GenerateError::InvalidRequest("top_p must lie in (0, 1]".into()));
        }
        if self.max_steps == Some(0) {
            return Err(GenerateError::InvalidRequest("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Sampling distribution after masking, temperature and nucleus filtering,
/// as (token, probability) pairs in decreasing probability order.
pub fn sampling_distribution(scores: &[f64], params: &SamplerParams, mask: &[bool]) -> Result<Vec<(TokenId, f64)>, GenerateError> {
    let mut live: Vec<(TokenId, f64)> = scores
        .iter()
        .zip(mask)
        .enumerate()
        .filter(|(_, (_, &m))| m)
        .map(|(i, (&s, _))| (i as TokenId, s / params.temperature))
        .collect();
    if live.is_empty() {
        return Err(GenerateError::AllMasked);
    }
    let max = live.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        // every live score is -inf (or NaN): fall back to uniform over the mask
        live.iter_mut().for_each(|p| p.1 = 1.0);
    } else {
        live.iter_mut().for_each(|p| p.1 = (p.1 - max).exp());
    }
    let total: f64 = live.iter().map(|p| p.1).sum();
    live.iter_mut().for_each(|p| p.1 /= total);
    live.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    if params.top_p < 1.0 {
        let mut cum = 0.0;
        let mut keep = live.len();
        for (i, p) in live.iter().enumerate() {
            cum += p.1;
            if cum >= params.top_p {
                keep = i + 1;
                break;
            }
        }
        live.truncate(keep);
        let total: f64 = live.iter().map(|p| p.1).sum();
        live.iter_mut().for_each(|p| p.1 /= total);
    }
    Ok(live)
}

/// Draws one token id; masked ids have probability exactly zero.
pub fn sample_token<R: Rng>(scores: &[f64], params: &SamplerParams, mask: &[bool], rng: &mut R) -> Result<TokenId, GenerateError> {
    let dist = sampling_distribution(scores, params, mask)?;
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for &(t, p) in &dist {
        cum += p;
        if u < cum {
            return Ok(t);
        }
    }
    Ok(dist.last().expect("nonempty").0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_allowed_token() {
        let mut mask = vec![false; 10];
        mask[7] = true;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(sample_token(&[5.0; 10], &SamplerParams::default(), &mask, &mut rng).unwrap(), 7);
        }
        assert_eq!(sample_token(&[0.0; 10], &SamplerParams::default(), &[false; 10], &mut rng), Err(GenerateError::AllMasked));
    }

    #[test]
    fn uniform_scores_stay_uniform() {
        let mask = [true, false, true, true];
        for temperature in [0.1, 1.0, 7.0] {
            let p = SamplerParams { temperature, ..Default::default() };
            let d = sampling_distribution(&[0.3; 4], &p, &mask).unwrap();
            assert_eq!(d.len(), 3);
            assert!(d.iter().all(|x| (x.1 - 1.0 / 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn nucleus_keeps_smallest_prefix() {
        let scores: Vec<f64> = [0.6f64, 0.3, 0.1].iter().map(|p| p.ln()).collect();
        let p = SamplerParams { top_p: 0.5, ..Default::default() };
        assert_eq!(sampling_distribution(&scores, &p, &[true; 3]).unwrap(), vec![(0, 1.0)]);
        let p = SamplerParams { top_p: 0.85, ..Default::default() };
        let d = sampling_distribution(&scores, &p, &[true; 3]).unwrap();
        assert_eq!(d.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(SamplerParams { temperature: 0.0, ..Default::default() }.check().is_err());
        assert!(SamplerParams { top_p: 1.5, ..Default::default() }.check().is_err());
        assert!(SamplerParams { top_p: 0.0, ..Default::default() }.check().is_err());
        assert!(SamplerParams::default().check().is_ok());
    }
}
