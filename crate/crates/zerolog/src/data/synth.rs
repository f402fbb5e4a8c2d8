//! Deterministic two-system log generator. It exists so every cross-system
//! claim is testable at desk scale without the public corpora: two systems
//! share latent event concepts but word them differently, anomalous sessions
//! inject failure concepts, and the whole thing is emitted as raw text so
//! runs exercise the real parser -> embedder -> trainer path.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::EvalGold;
use super::words::WORDS;
use crate::embed::WordVectorTable;
use crate::error::{Error, Result};
use crate::train::derive_seed;
use crate::train::task::shuffle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub templates_per_system: usize,
    /// Probability that a template slot is worded from the shared stock.
    pub vocabulary_overlap: f64,
    pub anomaly_rate: f64,
    /// Inclusive range of benign events per session, before injections.
    pub session_length: (usize, usize),
    /// Extra wording divergence applied to anomaly concepts only: their
    /// share probability is overlap * (1 - min(shift, 1)).
    pub shift_strength: f64,
    pub sessions_per_system: usize,
    /// Spread of the synthetic word vectors around their concept-slot base:
    /// 0 makes the two systems' wordings exact synonyms, large values decay
    /// toward unrelated vectors. Only [`synthetic_word_vectors`] reads it.
    pub synonym_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            templates_per_system: 12,
            vocabulary_overlap: 0.6,
            anomaly_rate: 0.15,
            session_length: (8, 16),
            shift_strength: 0.5,
            sessions_per_system: 200,
            synonym_noise: 0.35,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(4..=100).contains(&self.templates_per_system) {
            return Err(Error::Config("templates_per_system must be in 4..=100".into()));
        }
        if !self.vocabulary_overlap.is_finite()
            || !(0.0..=1.0).contains(&self.vocabulary_overlap)
        {
            return Err(Error::Config("vocabulary_overlap must be in [0, 1]".into()));
        }
        if !self.anomaly_rate.is_finite() || self.anomaly_rate <= 0.0 || self.anomaly_rate >= 1.0 {
            return Err(Error::Config("anomaly_rate must be in (0, 1)".into()));
        }
        let (lo, hi) = self.session_length;
        if lo < 1 || lo > hi {
            return Err(Error::Config("session_length needs 1 <= min <= max".into()));
        }
        if !self.shift_strength.is_finite() || self.shift_strength < 0.0 {
            return Err(Error::Config("shift_strength must be >= 0".into()));
        }
        if self.sessions_per_system < 2 {
            return Err(Error::Config("sessions_per_system must be >= 2".into()));
        }
        if !self.synonym_noise.is_finite() || self.synonym_noise < 0.0 {
            return Err(Error::Config("synonym_noise must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SyntheticPair {
    pub source_lines: Vec<String>,
    /// Session key -> anomalous, for every source session.
    pub source_labels: BTreeMap<String, bool>,
    pub target_lines: Vec<String>,
    /// Target labels never appear in corpus form; they are born behind the
    /// evaluation-only handle.
    pub target_gold: EvalGold,
}

/// Word pool layout inside WORDS: [0, POOL) shared stock, then one unique
/// stock per system, then one anchor word per concept. Slices are disjoint
/// so overlap is controlled purely by the share coin.
const POOL: usize = 96;

const SALT_STRUCT: u64 = 0x7374_7275;
const SALT_SOURCE: u64 = 0x7372_6321;
const SALT_TARGET: u64 = 0x7467_7421;
const SALT_VECS: u64 = 0x7665_6373;

fn u01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn pick(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

fn unit(rng: &mut ChaCha8Rng, dimension: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dimension).map(|_| 2.0 * u01(rng) - 1.0).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// The latent cross-system structure: per concept, a body length, and per
/// slot one shared candidate word, one unique-pair index, and the share
/// coin. Both systems read the same structure, so a slot that comes out
/// shared is shared in both, and a slot that comes out unique is worded as
/// the two flavors of the same pair index. A pair index reused across slots
/// therefore maps to the same two strings everywhere, like a real synonym
/// pair would.
struct Concepts {
    body_lens: Vec<usize>,
    shared: Vec<Vec<usize>>,
    unique: Vec<Vec<usize>>,
    coins: Vec<Vec<f64>>,
    benign: usize,
}

impl Concepts {
    fn build(spec: &SyntheticSpec) -> Concepts {
        let n = spec.templates_per_system;
        let anomalous = (n / 5).max(2);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, SALT_STRUCT));
        let mut body_lens = Vec::with_capacity(n);
        let mut shared = Vec::with_capacity(n);
        let mut unique = Vec::with_capacity(n);
        let mut coins = Vec::with_capacity(n);
        for _ in 0..n {
            let len = 2 + pick(&mut rng, 3);
            body_lens.push(len);
            shared.push((0..len).map(|_| pick(&mut rng, POOL)).collect());
            unique.push((0..len).map(|_| pick(&mut rng, POOL)).collect());
            coins.push((0..len).map(|_| u01(&mut rng)).collect());
        }
        Concepts { body_lens, shared, unique, coins, benign: n - anomalous }
    }

    fn total(&self) -> usize {
        self.body_lens.len()
    }

    fn anchor(&self, concept: usize) -> &'static str {
        WORDS[3 * POOL + concept]
    }

    /// Renders the stable wording of one concept for one system.
    fn body(&self, spec: &SyntheticSpec, system: usize, concept: usize) -> Vec<&'static str> {
        let shared_stock = (spec.vocabulary_overlap * POOL as f64).round() as usize;
        let share_p = if concept >= self.benign {
            spec.vocabulary_overlap * (1.0 - spec.shift_strength.min(1.0))
        } else {
            spec.vocabulary_overlap
        };
        (0..self.body_lens[concept])
            .map(|j| {
                if shared_stock > 0 && self.coins[concept][j] < share_p {
                    WORDS[self.shared[concept][j] % shared_stock]
                } else {
                    WORDS[(system + 1) * POOL + self.unique[concept][j]]
                }
            })
            .collect()
    }
}

/// Benign sessions walk a fixed local-transition chain; anomalous sessions
/// additionally splice in 1..=3 failure-concept events at random positions.
fn emit_system(
    spec: &SyntheticSpec,
    concepts: &Concepts,
    system: usize,
    salt: u64,
) -> (Vec<String>, BTreeMap<String, bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, salt));
    let n_sessions = spec.sessions_per_system;
    let n_anom = ((spec.anomaly_rate * n_sessions as f64).round() as usize)
        .max(1)
        .min(n_sessions - 1);
    let mut order: Vec<usize> = (0..n_sessions).collect();
    shuffle(&mut order, &mut rng);
    let mut anomalous = vec![false; n_sessions];
    for &i in order.iter().take(n_anom) {
        anomalous[i] = true;
    }

    let nb = concepts.benign;
    let na = concepts.total() - nb;
    let (lo, hi) = spec.session_length;
    let mut lines = Vec::new();
    let mut labels = BTreeMap::new();
    let mut counter = 0u64;
    for i in 0..n_sessions {
        let key = format!("sess_{i:05}");
        let len = lo + pick(&mut rng, hi - lo + 1);
        let mut events = Vec::with_capacity(len + 3);
        let mut state = pick(&mut rng, nb);
        for _ in 0..len {
            events.push(state);
            let u = u01(&mut rng);
            state = if u < 0.5 {
                (state + 1) % nb
            } else if u < 0.75 {
                (state + 2) % nb
            } else if u < 0.9 {
                state
            } else {
                pick(&mut rng, nb)
            };
        }
        if anomalous[i] {
            for _ in 0..1 + pick(&mut rng, 3) {
                let at = pick(&mut rng, events.len() + 1);
                events.insert(at, nb + pick(&mut rng, na));
            }
        }
        for concept in events {
            let body = concepts.body(spec, system, concept).join(" ");
            let volatile = rng.next_u64() & 0xffff;
            lines.push(format!(
                "{} {key} {} {body} h{volatile:04x} c={counter}",
                1_700_000_000 + counter,
                concepts.anchor(concept),
            ));
            counter += 1;
        }
        labels.insert(key, anomalous[i]);
    }
    (lines, labels)
}

/// Builds the word-vector table the generated pair is "pretrained" on.
/// Pre-trained vectors are what make differently-worded systems bridgeable
/// in the first place; without a table every word falls back to a seeded
/// hash and cross-system wordings are mutually orthogonal noise.
///
/// Every word the generator can emit gets a unit vector. The two flavors of
/// a unique pair are drawn around a shared base direction and spread by
/// `synonym_noise`: 0 makes them coincide, and the expected pair cosine
/// decays as roughly 1 / (1 + noise^2). Shared-stock words and anchors get
/// independent directions of their own.
pub fn synthetic_word_vectors(spec: &SyntheticSpec, dimension: usize) -> Result<WordVectorTable> {
    spec.validate()?;
    if dimension == 0 {
        return Err(Error::Config("word vector dimension must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, SALT_VECS));
    let mut table = WordVectorTable::empty(dimension);
    for u in 0..POOL {
        table.insert(WORDS[u], unit(&mut rng, dimension))?;
    }
    for u in 0..POOL {
        let base = unit(&mut rng, dimension);
        for flavor in 1..=2 {
            let jitter = unit(&mut rng, dimension);
            let mut v: Vec<f64> =
                base.iter().zip(&jitter).map(|(b, e)| b + spec.synonym_noise * e).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in &mut v {
                    *x /= norm;
                }
            }
            table.insert(WORDS[flavor * POOL + u], v)?;
        }
    }
    for c in 0..spec.templates_per_system {
        table.insert(WORDS[3 * POOL + c], unit(&mut rng, dimension))?;
    }
    Ok(table)
}

pub fn generate_synthetic_pair(spec: &SyntheticSpec) -> Result<SyntheticPair> {
    spec.validate()?;
    assert!(3 * POOL + spec.templates_per_system <= WORDS.len(), "word stock exhausted");
    let concepts = Concepts::build(spec);
    let (source_lines, source_labels) = emit_system(spec, &concepts, 0, SALT_SOURCE);
    let (target_lines, target_labels) = emit_system(spec, &concepts, 1, SALT_TARGET);
    Ok(SyntheticPair {
        source_lines,
        source_labels,
        target_lines,
        target_gold: EvalGold::new(target_labels),
    })
}
