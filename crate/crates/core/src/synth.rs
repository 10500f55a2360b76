//! Two-source synthetic corpus with a known generating process.
//!
//! Each document of source `z` has label `y ~ Bernoulli(base_rate[z])`, holds
//! the signal token with probability `signal_emit[y]`, the nuisance token with
//! probability `nuisance_emit[z]`, and `doc_len` filler tokens drawn uniformly
//! from `filler_vocab` terms. The nuisance token carries no label information
//! within a source, yet correlates with the label across sources whenever the
//! base rates differ.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus, Record};
use crate::error::{Error, Result};

pub const SIGNAL_TOKEN: &str = "signal";
pub const NUISANCE_TOKEN: &str = "nuisance";
pub const SOURCE_NAMES: [&str; 2] = ["site0", "site1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_per_source: [usize; 2],
    pub base_rate: [f64; 2],
    /// Signal emission probability given `y = 0` and `y = 1`.
    pub signal_emit: [f64; 2],
    /// Nuisance emission probability given `z = 0` and `z = 1`.
    pub nuisance_emit: [f64; 2],
    pub filler_vocab: usize,
    pub doc_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_per_source: [2500, 2000],
            base_rate: [0.411, 0.198],
            signal_emit: [0.2, 0.8],
            nuisance_emit: [0.1, 0.7],
            filler_vocab: 200,
            doc_len: 12,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = self
            .base_rate
            .iter()
            .chain(&self.signal_emit)
            .chain(&self.nuisance_emit);
        for &p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::SynthConfig(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
        }
        if self.filler_vocab == 0 {
            return Err(Error::SynthConfig("filler vocabulary is empty".into()));
        }
        if self.doc_len == 0 {
            return Err(Error::SynthConfig("doc_len must be positive".into()));
        }
        if self.n_per_source.contains(&0) {
            return Err(Error::SynthConfig("n_per_source must be positive".into()));
        }
        Ok(())
    }

    fn filler(&self, i: usize) -> String {
        format!("w{i}")
    }
}

/// Generates the corpus; identical configs give identical corpora.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.n_per_source.iter().sum());
    for z in 0..2u8 {
        for i in 0..cfg.n_per_source[z as usize] {
            let y = u8::from(rng.random_bool(cfg.base_rate[z as usize]));
            let mut tokens: Vec<String> = (0..cfg.doc_len)
                .map(|_| cfg.filler(rng.random_range(0..cfg.filler_vocab)))
                .collect();
            if rng.random_bool(cfg.signal_emit[y as usize]) {
                let at = rng.random_range(0..=tokens.len());
                tokens.insert(at, SIGNAL_TOKEN.to_string());
            }
            if rng.random_bool(cfg.nuisance_emit[z as usize]) {
                let at = rng.random_range(0..=tokens.len());
                tokens.insert(at, NUISANCE_TOKEN.to_string());
            }
            let id = format!("{}-{i:05}", SOURCE_NAMES[z as usize]);
            records.push(Record::new(id, Some(tokens.join(" ")), y, z)?);
        }
    }
    Corpus::new(records, SOURCE_NAMES.map(String::from))
}

/// Exact posterior `P(y = 1 | tokens, z)` under the generating config.
///
/// Filler tokens and the nuisance token have the same likelihood under both
/// labels, so only the signal token and the source prior matter.
pub fn oracle_score(record: &Record, cfg: &SynthConfig) -> Result<f64> {
    let text = record
        .text
        .as_deref()
        .ok_or_else(|| Error::MissingText(record.id.clone()))?;
    let impossible = |token: &str| Error::ImpossibleToken {
        id: record.id.clone(),
        token: token.to_string(),
    };
    let z = record.z as usize;
    let (mut signal, mut nuisance) = (0, 0);
    for token in tokenize(text) {
        match token.as_str() {
            SIGNAL_TOKEN => signal += 1,
            NUISANCE_TOKEN => nuisance += 1,
            t => {
                let ok = t
                    .strip_prefix('w')
                    .and_then(|k| k.parse::<usize>().ok())
                    .is_some_and(|k| k < cfg.filler_vocab);
                if !ok {
                    return Err(impossible(t));
                }
            }
        }
    }
    if signal > 1 {
        return Err(impossible(SIGNAL_TOKEN));
    }
    let r = cfg.nuisance_emit[z];
    if nuisance > 1 || (nuisance == 1 && r == 0.0) || (nuisance == 0 && r == 1.0) {
        return Err(impossible(NUISANCE_TOKEN));
    }
    let likelihood = |y: usize| {
        let q = cfg.signal_emit[y];
        if signal == 1 {
            q
        } else {
            1.0 - q
        }
    };
    let prior = cfg.base_rate[z];
    let pos = prior * likelihood(1);
    let neg = (1.0 - prior) * likelihood(0);
    if pos + neg == 0.0 {
        return Err(impossible(SIGNAL_TOKEN));
    }
    Ok(pos / (pos + neg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_per_source: [300, 200],
            seed,
            ..SynthConfig::default()
        }
    }

    fn doc(text: &str, z: u8) -> Record {
        Record::new("d", Some(text.to_string()), 0, z).unwrap()
    }

    #[test]
    fn deterministic_under_seed() {
        assert_eq!(
            generate_corpus(&small(4)).unwrap(),
            generate_corpus(&small(4)).unwrap()
        );
        assert_ne!(
            generate_corpus(&small(4)).unwrap(),
            generate_corpus(&small(5)).unwrap()
        );
    }

    #[test]
    fn uninformative_signal_is_uncorrelated() {
        let cfg = SynthConfig {
            n_per_source: [5000, 5000],
            signal_emit: [0.4, 0.4],
            ..SynthConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let n = corpus.len() as f64;
        let ys: Vec<f64> = corpus.records().iter().map(|r| r.y as f64).collect();
        let ss: Vec<f64> = corpus
            .records()
            .iter()
            .map(|r| {
                f64::from(u8::from(
                    tokenize(r.text.as_deref().unwrap()).contains(&SIGNAL_TOKEN.to_string()),
                ))
            })
            .collect();
        let my = ys.iter().sum::<f64>() / n;
        let ms = ss.iter().sum::<f64>() / n;
        let cov: f64 = ys
            .iter()
            .zip(&ss)
            .map(|(y, s)| (y - my) * (s - ms))
            .sum::<f64>()
            / n;
        let sy = (ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n).sqrt();
        let s_s = (ss.iter().map(|s| (s - ms).powi(2)).sum::<f64>() / n).sqrt();
        let corr = cov / (sy * s_s);
        // correlation standard error is about 1 / sqrt(n)
        assert!(corr.abs() < 3.0 / n.sqrt(), "corr = {corr}");
    }

    #[test]
    fn source_prevalences_follow_base_rates() {
        let cfg = SynthConfig::default();
        let corpus = generate_corpus(&cfg).unwrap();
        let cells = corpus.cell_counts();
        for z in 0..2u8 {
            let n = cells.z_total(z) as f64;
            let p = cfg.base_rate[z as usize];
            let rate = cells.get(1, z) as f64 / n;
            assert!((rate - p).abs() < 3.0 * (p * (1.0 - p) / n).sqrt());
        }
    }

    #[test]
    fn nuisance_depends_on_source_only() {
        let cfg = SynthConfig {
            n_per_source: [6000, 6000],
            ..SynthConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        for z in 0..2u8 {
            let mut hits = [0.0f64; 2];
            let mut totals = [0.0f64; 2];
            for r in corpus.records().iter().filter(|r| r.z == z) {
                totals[r.y as usize] += 1.0;
                if r.text.as_deref().unwrap().contains(NUISANCE_TOKEN) {
                    hits[r.y as usize] += 1.0;
                }
            }
            let p = [hits[0] / totals[0], hits[1] / totals[1]];
            let q = cfg.nuisance_emit[z as usize];
            let se = (q * (1.0 - q) * (1.0 / totals[0] + 1.0 / totals[1])).sqrt();
            assert!((p[1] - p[0]).abs() < 3.0 * se);
        }
    }

    #[test]
    fn oracle_examples() {
        let cfg = SynthConfig {
            base_rate: [0.5, 0.5],
            signal_emit: [0.2, 0.8],
            nuisance_emit: [0.5, 0.5],
            ..SynthConfig::default()
        };
        let p = oracle_score(&doc("w1 signal w2", 0), &cfg).unwrap();
        assert!((p - 0.8).abs() < 1e-15);

        let flat = SynthConfig {
            base_rate: [0.3, 0.6],
            signal_emit: [0.5, 0.5],
            ..cfg.clone()
        };
        assert!((oracle_score(&doc("signal w3", 1), &flat).unwrap() - 0.6).abs() < 1e-15);
        assert!((oracle_score(&doc("w3", 0), &flat).unwrap() - 0.3).abs() < 1e-15);

        let never = SynthConfig {
            base_rate: [0.37, 0.6],
            signal_emit: [0.0, 0.0],
            ..cfg.clone()
        };
        assert!((oracle_score(&doc("w1 w2", 0), &never).unwrap() - 0.37).abs() < 1e-15);
        assert!(matches!(
            oracle_score(&doc("signal", 0), &never),
            Err(Error::ImpossibleToken { .. })
        ));
        assert!(matches!(
            oracle_score(&doc("banana", 0), &cfg),
            Err(Error::ImpossibleToken { .. })
        ));
    }

    #[test]
    fn zero_vocabulary_rejected() {
        let cfg = SynthConfig {
            filler_vocab: 0,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_corpus(&cfg), Err(Error::SynthConfig(_))));
    }
}
