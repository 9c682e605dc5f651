//! Note preprocessing, label-space construction, patient-level splitting and a
//! seeded synthetic clinical-note generator.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    #[serde(other)]
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ethnicity {
    White,
    Black,
    Hispanic,
    Asian,
    #[serde(other)]
    Other,
}

impl Gender {
    /// Groups that take part in gap computations.
    pub const GROUPS: [Gender; 2] = [Gender::Male, Gender::Female];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Other => "other",
        }
    }
}

impl Ethnicity {
    pub const GROUPS: [Ethnicity; 4] = [
        Ethnicity::White,
        Ethnicity::Black,
        Ethnicity::Hispanic,
        Ethnicity::Asian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ethnicity::White => "white",
            Ethnicity::Black => "black",
            Ethnicity::Hispanic => "hispanic",
            Ethnicity::Asian => "asian",
            Ethnicity::Other => "other",
        }
    }
}

/// One admission as it comes out of the source system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub admission_id: u64,
    pub patient_id: u64,
    pub text: String,
    pub codes: Vec<String>,
    pub gender: Gender,
    pub ethnicity: Ethnicity,
}

/// A preprocessed, vocabulary-encoded note with its top-K label vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledNote {
    pub admission_id: u64,
    pub patient_id: u64,
    pub tokens: Vec<usize>,
    pub labels: Vec<u8>,
    pub gender: Gender,
    pub ethnicity: Ethnicity,
}

impl LabeledNote {
    pub fn validate(&self, vocab_size: usize, num_labels: usize) -> Result<()> {
        let id = self.admission_id;
        if self.tokens.is_empty() {
            return Err(Error::Data(format!("note {id} has no tokens")));
        }
        if let Some(t) = self.tokens.iter().find(|&&t| t >= vocab_size) {
            return Err(Error::Data(format!("note {id}: token id {t} outside vocabulary of {vocab_size}")));
        }
        if self.labels.len() != num_labels || self.labels.iter().any(|&y| y > 1) {
            return Err(Error::Data(format!("note {id}: expected {num_labels} binary labels")));
        }
        if !self.labels.contains(&1) {
            return Err(Error::Data(format!("note {id} has no positive label")));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Text

/// Lowercases, replaces every non-alphanumeric character by a space, drops
/// tokens made only of digits and splits on whitespace.
pub fn preprocess_text(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|tok| !tok.chars().all(char::is_numeric))
        .map(str::to_owned)
        .collect()
}

/// Removes repeated codes, keeping first occurrences in order.
pub fn dedupe_codes(codes: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    codes.iter().filter(|c| seen.insert(c.as_str())).cloned().collect()
}

/// The `k` codes present in the most records, ties broken by code order.
pub fn build_label_space(records: &[RawRecord], k: usize) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::InvalidArgument("label space size must be positive".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        let distinct: BTreeSet<&str> = r.codes.iter().map(String::as_str).collect();
        for c in distinct {
            *counts.entry(c).or_default() += 1;
        }
    }
    if counts.len() < k {
        return Err(Error::Data(format!(
            "only {} distinct codes, cannot select the top {k}",
            counts.len()
        )));
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    // BTreeMap order is lexicographic and the sort is stable.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    Ok(ranked.into_iter().take(k).map(|(c, _)| c.to_owned()).collect())
}

// ---------------------------------------------------------------------------
// Splitting

pub const SPLIT_NAMES: [&str; 3] = ["train", "validation", "test"];
pub const SPLIT_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub admissions: Vec<u64>,
    pub patients: Vec<u64>,
}

/// Which admissions and patients ended up where, plus what was dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub label_space: Vec<String>,
    pub splits: BTreeMap<String, SplitEntry>,
    pub dropped_no_code: Vec<u64>,
    pub dropped_no_label: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Splits {
    /// Records in `SPLIT_NAMES` order.
    pub parts: [Vec<RawRecord>; 3],
    pub manifest: SplitManifest,
}

fn check_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }
    Ok(())
}

/// Drops records without codes or without any label-space code, then assigns
/// whole patients to splits.
///
/// Patients are shuffled with the seed, ordered by admission count (largest
/// first) and each goes to the split furthest below its target size.
pub fn filter_and_split(
    records: Vec<RawRecord>,
    label_space: &[String],
    ratios: [f64; 3],
    seed: u64,
) -> Result<Splits> {
    check_ratios(ratios)?;
    let labels: BTreeSet<&str> = label_space.iter().map(String::as_str).collect();
    let mut dropped_no_code = Vec::new();
    let mut dropped_no_label = Vec::new();
    let mut by_patient: BTreeMap<u64, Vec<RawRecord>> = BTreeMap::new();
    let mut seen_admissions = BTreeSet::new();
    for r in records {
        if !seen_admissions.insert(r.admission_id) {
            return Err(Error::Data(format!("duplicate admission id {}", r.admission_id)));
        }
        if r.codes.is_empty() {
            dropped_no_code.push(r.admission_id);
        } else if !r.codes.iter().any(|c| labels.contains(c.as_str())) {
            dropped_no_label.push(r.admission_id);
        } else {
            by_patient.entry(r.patient_id).or_default().push(r);
        }
    }
    let total: usize = by_patient.values().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::Data("no records left after filtering".into()));
    }

    let mut patients: Vec<u64> = by_patient.keys().copied().collect();
    let mut rng = rng::stream(seed, rng::SPLIT);
    patients.shuffle(&mut rng);
    patients.sort_by_key(|p| std::cmp::Reverse(by_patient[p].len()));

    let targets: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut sizes = [0usize; 3];
    let mut parts: [Vec<RawRecord>; 3] = Default::default();
    let mut entries: [SplitEntry; 3] = Default::default();
    for p in patients {
        let recs = by_patient.remove(&p).expect("patient present");
        let mut pick = 0;
        for s in 1..3 {
            if targets[s] - sizes[s] as f64 > targets[pick] - sizes[pick] as f64 {
                pick = s;
            }
        }
        sizes[pick] += recs.len();
        entries[pick].patients.push(p);
        entries[pick].admissions.extend(recs.iter().map(|r| r.admission_id));
        parts[pick].extend(recs);
    }

    for s in 0..3 {
        let share = sizes[s] as f64 / total as f64;
        if (share - ratios[s]).abs() > SPLIT_TOLERANCE {
            return Err(Error::Data(format!(
                "{} split holds {:.3} of admissions, target {:.3} ± {SPLIT_TOLERANCE}",
                SPLIT_NAMES[s], share, ratios[s]
            )));
        }
    }
    for (part, entry) in parts.iter_mut().zip(entries.iter_mut()) {
        part.sort_by_key(|r| r.admission_id);
        entry.admissions.sort_unstable();
        entry.patients.sort_unstable();
    }
    let manifest = SplitManifest {
        seed,
        ratios,
        label_space: label_space.to_vec(),
        splits: SPLIT_NAMES
            .iter()
            .zip(entries)
            .map(|(n, e)| (n.to_string(), e))
            .collect(),
        dropped_no_code,
        dropped_no_label,
    };
    Ok(Splits { parts, manifest })
}

// ---------------------------------------------------------------------------
// Vocabulary

pub const OOV_TOKEN: &str = "<unk>";
pub const OOV_ID: usize = 0;

/// Token ↔ id map with the out-of-vocabulary token at id 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Tokens seen at least `min_count` times, most frequent first (ties by
    /// token order), truncated to `max_size` entries including the OOV slot.
    pub fn build<'a, I>(documents: I, min_count: usize, max_size: Option<usize>) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in documents {
            for t in doc {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count.max(1) && *t != OOV_TOKEN)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1));
        let mut tokens = vec![OOV_TOKEN.to_owned()];
        let room = max_size.map_or(usize::MAX, |m| m.saturating_sub(1));
        tokens.extend(ranked.into_iter().take(room).map(|(t, _)| t.to_owned()));
        Self::from_tokens(tokens).expect("tokens are unique")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(OOV_TOKEN) {
            return Err(Error::Data(format!("vocabulary must start with {OOV_TOKEN}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary entry `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// One token per line; the line number is the id.
    pub fn from_lines(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_owned).collect())
    }

    pub fn to_lines(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(OOV_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// Everything `preprocess` produces from a raw corpus.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub label_space: Vec<String>,
    pub vocabulary: Vocabulary,
    /// Notes in `SPLIT_NAMES` order.
    pub splits: [Vec<LabeledNote>; 3],
    pub manifest: SplitManifest,
    /// Admissions whose text was empty after preprocessing.
    pub dropped_empty_text: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessOptions {
    pub top_k: usize,
    pub ratios: [f64; 3],
    pub min_count: usize,
    pub max_vocab: Option<usize>,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            top_k: 50,
            ratios: [0.7, 0.15, 0.15],
            min_count: 1,
            max_vocab: None,
        }
    }
}

/// Full pipeline: clean text and codes, pick the label space, split by
/// patient and encode with a training-split vocabulary.
pub fn prepare_corpus(records: Vec<RawRecord>, opts: &PreprocessOptions, seed: u64) -> Result<PreparedCorpus> {
    let mut dropped_empty_text = Vec::new();
    let mut cleaned = Vec::with_capacity(records.len());
    let mut tokenized: HashMap<u64, Vec<String>> = HashMap::with_capacity(records.len());
    for mut r in records {
        let tokens = preprocess_text(&r.text);
        if tokens.is_empty() {
            dropped_empty_text.push(r.admission_id);
            continue;
        }
        r.codes = dedupe_codes(&r.codes);
        tokenized.insert(r.admission_id, tokens);
        cleaned.push(r);
    }
    let label_space = build_label_space(&cleaned, opts.top_k)?;
    let Splits { parts, manifest } = filter_and_split(cleaned, &label_space, opts.ratios, seed)?;

    let vocabulary = Vocabulary::build(
        parts[0].iter().map(|r| tokenized[&r.admission_id].as_slice()),
        opts.min_count,
        opts.max_vocab,
    );
    let label_index: HashMap<&str, usize> = label_space.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let encode = |part: &[RawRecord]| -> Vec<LabeledNote> {
        part.iter()
            .map(|r| {
                let mut labels = vec![0u8; label_space.len()];
                for c in &r.codes {
                    if let Some(&i) = label_index.get(c.as_str()) {
                        labels[i] = 1;
                    }
                }
                LabeledNote {
                    admission_id: r.admission_id,
                    patient_id: r.patient_id,
                    tokens: vocabulary.encode(&tokenized[&r.admission_id]),
                    labels,
                    gender: r.gender,
                    ethnicity: r.ethnicity,
                }
            })
            .collect()
    };
    let splits = [encode(&parts[0]), encode(&parts[1]), encode(&parts[2])];
    Ok(PreparedCorpus {
        label_space,
        vocabulary,
        splits,
        manifest,
        dropped_empty_text,
    })
}

// ---------------------------------------------------------------------------
// Synthetic corpus

/// ICD-9-CM diagnosis and procedure codes frequent in intensive-care discharge
/// summaries, used as label names for generated notes.
pub const ICD9_CODES: [&str; 53] = [
    "401.9", "428.0", "427.31", "414.01", "584.9", "250.00", "272.4", "518.81", "599.0", "530.81",
    "272.0", "285.9", "244.9", "038.9", "995.92", "403.90", "785.52", "496", "305.1", "V58.61",
    "276.2", "276.1", "486", "287.5", "507.0", "285.1", "424.0", "V45.81", "311", "412", "585.9",
    "410.71", "V10.3", "96.04", "96.71", "96.72", "38.93", "99.04", "39.61", "38.91", "96.6",
    "88.56", "37.22", "36.15", "45.13", "33.24", "00.66", "99.15", "39.95", "88.72", "37.23",
    "36.07", "31.1",
];

const FILLER: [&str; 40] = [
    "patient", "admitted", "history", "presented", "denies", "stable", "discharged", "pain",
    "noted", "exam", "normal", "follow", "daily", "given", "started", "hospital", "course",
    "continued", "home", "left", "right", "chest", "review", "plan", "seen", "without", "with",
    "and", "the", "was", "for", "on", "of", "to", "in", "no", "at", "per", "mg", "bp",
];

fn default_gender_mix() -> BTreeMap<Gender, f64> {
    BTreeMap::from([(Gender::Male, 0.55), (Gender::Female, 0.45)])
}

fn default_ethnicity_mix() -> BTreeMap<Ethnicity, f64> {
    BTreeMap::from([
        (Ethnicity::White, 0.6),
        (Ethnicity::Black, 0.15),
        (Ethnicity::Hispanic, 0.1),
        (Ethnicity::Asian, 0.1),
        (Ethnicity::Other, 0.05),
    ])
}

/// Generator parameters. Group maps give mixture weights (normalized
/// internally) and keyword-emission multipliers (missing groups use 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub num_patients: usize,
    /// Weights for a patient having 1, 2, 3, ... admissions.
    pub notes_per_patient: Vec<f64>,
    pub num_labels: usize,
    /// Extra rare codes ranked after the main labels.
    pub tail_codes: usize,
    pub zipf_exponent: f64,
    /// Fraction of notes carrying the most frequent code.
    pub top_label_rate: f64,
    pub keywords_per_label: usize,
    /// Keyword draws per positive label, each kept with the emission probability.
    pub mentions_per_label: usize,
    pub background_vocab: usize,
    pub min_background_tokens: usize,
    pub max_background_tokens: usize,
    /// Base keyword-emission probability.
    pub signal: f64,
    /// Probability that a background slot carries a random code's keyword.
    pub noise: f64,
    pub gender_mix: BTreeMap<Gender, f64>,
    pub ethnicity_mix: BTreeMap<Ethnicity, f64>,
    pub gender_signal: BTreeMap<Gender, f64>,
    pub ethnicity_signal: BTreeMap<Ethnicity, f64>,
    /// Set from the experiment's master seed, never read from files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            num_patients: 2000,
            notes_per_patient: vec![0.6, 0.25, 0.15],
            num_labels: 20,
            tail_codes: 5,
            zipf_exponent: 1.1,
            top_label_rate: 0.35,
            keywords_per_label: 4,
            mentions_per_label: 2,
            background_vocab: 400,
            min_background_tokens: 30,
            max_background_tokens: 80,
            signal: 0.9,
            noise: 0.01,
            gender_mix: default_gender_mix(),
            ethnicity_mix: default_ethnicity_mix(),
            gender_signal: BTreeMap::new(),
            ethnicity_signal: BTreeMap::new(),
            seed: 0,
        }
    }
}

fn check_weights<K: std::fmt::Debug>(key: &str, w: &BTreeMap<K, f64>) -> Result<()> {
    if w.values().any(|x| !(x.is_finite() && *x >= 0.0)) || w.values().sum::<f64>() <= 0.0 {
        return Err(Error::config(key, format!("weights must be non-negative with a positive sum, got {w:?}")));
    }
    Ok(())
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let prob = |key: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(key, format!("must lie in [0, 1], got {v}")))
            }
        };
        if self.num_patients == 0 {
            return Err(Error::config("datagen.num_patients", "must be positive"));
        }
        if self.num_labels < 2 {
            return Err(Error::config("datagen.num_labels", "at least 2 labels are required"));
        }
        if self.num_labels + self.tail_codes > ICD9_CODES.len() {
            return Err(Error::config(
                "datagen.tail_codes",
                format!("at most {} codes are available in total", ICD9_CODES.len()),
            ));
        }
        if self.notes_per_patient.is_empty()
            || self.notes_per_patient.iter().any(|x| !(x.is_finite() && *x >= 0.0))
            || self.notes_per_patient.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::config("datagen.notes_per_patient", "weights must be non-negative with a positive sum"));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return Err(Error::config("datagen.zipf_exponent", "must be non-negative"));
        }
        prob("datagen.top_label_rate", self.top_label_rate)?;
        prob("datagen.signal", self.signal)?;
        prob("datagen.noise", self.noise)?;
        if self.keywords_per_label == 0 || self.mentions_per_label == 0 {
            return Err(Error::config("datagen.keywords_per_label", "keyword pools and mentions must be non-empty"));
        }
        if self.background_vocab == 0 || self.max_background_tokens == 0 {
            return Err(Error::config("datagen.background_vocab", "background text must be non-empty"));
        }
        if self.min_background_tokens > self.max_background_tokens {
            return Err(Error::config("datagen.min_background_tokens", "exceeds max_background_tokens"));
        }
        check_weights("datagen.gender_mix", &self.gender_mix)?;
        check_weights("datagen.ethnicity_mix", &self.ethnicity_mix)?;
        for (k, v) in &self.gender_signal {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::config("datagen.gender_signal", format!("{k:?}: must be non-negative")));
            }
        }
        for (k, v) in &self.ethnicity_signal {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::config("datagen.ethnicity_signal", format!("{k:?}: must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn codes(&self) -> &'static [&'static str] {
        &ICD9_CODES[..self.num_labels + self.tail_codes]
    }

    /// Probability that each keyword mention is emitted for a note of this group.
    pub fn emission_probability(&self, gender: Gender, ethnicity: Ethnicity) -> f64 {
        let g = self.gender_signal.get(&gender).copied().unwrap_or(1.0);
        let e = self.ethnicity_signal.get(&ethnicity).copied().unwrap_or(1.0);
        (self.signal * g * e).clamp(0.0, 1.0)
    }
}

/// Keyword pools and background words of a generated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub keywords: Vec<Vec<String>>,
    pub background: Vec<String>,
}

fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    const ONSETS: [&str; 16] = ["b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "th"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let syllables = rng.random_range(2..=4);
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS[rng.random_range(0..ONSETS.len())], VOWELS[rng.random_range(0..VOWELS.len())]))
        .collect()
}

pub fn build_lexicon<R: Rng>(spec: &CorpusSpec, rng: &mut R) -> Lexicon {
    let mut used: BTreeSet<String> = FILLER.iter().map(|s| s.to_string()).collect();
    let mut fresh = |rng: &mut R| loop {
        let w = pseudo_word(rng);
        if used.insert(w.clone()) {
            return w;
        }
    };
    let keywords = (0..spec.codes().len())
        .map(|_| (0..spec.keywords_per_label).map(|_| fresh(rng)).collect())
        .collect();
    let mut background: Vec<String> = FILLER.iter().map(|s| s.to_string()).collect();
    background.truncate(spec.background_vocab);
    while background.len() < spec.background_vocab {
        background.push(fresh(rng));
    }
    Lexicon { keywords, background }
}

fn pick_weighted<K: Copy, R: Rng>(weights: &BTreeMap<K, f64>, rng: &mut R) -> K {
    let total: f64 = weights.values().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (&k, &w) in weights {
        if w <= 0.0 {
            continue;
        }
        if u < w {
            return k;
        }
        u -= w;
        last = Some(k);
    }
    last.expect("at least one positive weight")
}

fn numeric_fragment<R: Rng>(rng: &mut R) -> String {
    match rng.random_range(0..4) {
        0 => format!("{}mg", 5 * rng.random_range(1..100)),
        1 => format!("{}/{}", rng.random_range(90..180), rng.random_range(50..110)),
        2 => format!("{}.{}", rng.random_range(35..41), rng.random_range(0..10)),
        _ => format!("{}", rng.random_range(1..1000)),
    }
}

fn render_text<R: Rng>(tokens: &[String], rng: &mut R) -> String {
    let mut out = String::new();
    let mut sentence_start = true;
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        if sentence_start {
            let mut chars = t.chars();
            if let Some(c) = chars.next() {
                out.extend(c.to_uppercase());
                out.push_str(chars.as_str());
            }
        } else {
            out.push_str(t);
        }
        sentence_start = false;
        match rng.random_range(0..20) {
            0 | 1 => {
                out.push('.');
                sentence_start = true;
            }
            2 => out.push(','),
            3 => out.push(';'),
            _ => {}
        }
    }
    out.push('.');
    out
}

/// Generates a corpus fully determined by `spec` (including its seed).
///
/// Code `r` (0-based frequency rank) is attached to exactly
/// `max(1, round(n_notes * top_label_rate * (r + 1)^-zipf_exponent))` notes
/// chosen uniformly, so code frequencies never increase with rank. Notes that
/// receive no code keep an empty code list.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<RawRecord>> {
    spec.validate()?;
    let mut rng: ChaCha20Rng = rng::stream(spec.seed, rng::DATAGEN);
    let lexicon = build_lexicon(spec, &mut rng);
    let codes = spec.codes();

    let notes_total: f64 = spec.notes_per_patient.iter().sum();
    let mut notes: Vec<(u64, Gender, Ethnicity)> = Vec::new();
    for p in 0..spec.num_patients {
        let patient_id = 10_000 + p as u64;
        let gender = pick_weighted(&spec.gender_mix, &mut rng);
        let ethnicity = pick_weighted(&spec.ethnicity_mix, &mut rng);
        let mut u = rng.random::<f64>() * notes_total;
        let mut count = spec.notes_per_patient.len();
        for (i, w) in spec.notes_per_patient.iter().enumerate() {
            if u < *w {
                count = i + 1;
                break;
            }
            u -= w;
        }
        notes.extend(std::iter::repeat_n((patient_id, gender, ethnicity), count));
    }

    let n = notes.len();
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 0..codes.len() {
        let rate = spec.top_label_rate * ((r + 1) as f64).powf(-spec.zipf_exponent);
        let count = ((n as f64 * rate).round() as usize).clamp(1, n);
        for i in index::sample(&mut rng, n, count) {
            assigned[i].push(r);
        }
    }

    let mut records = Vec::with_capacity(n);
    for (i, ((patient_id, gender, ethnicity), labels)) in notes.into_iter().zip(assigned).enumerate() {
        let emit = spec.emission_probability(gender, ethnicity);
        let len = rng.random_range(spec.min_background_tokens..=spec.max_background_tokens);
        let mut tokens: Vec<String> = (0..len)
            .map(|_| {
                if rng.random::<f64>() < spec.noise {
                    let pool = &lexicon.keywords[rng.random_range(0..codes.len())];
                    pool[rng.random_range(0..pool.len())].clone()
                } else {
                    lexicon.background[rng.random_range(0..lexicon.background.len())].clone()
                }
            })
            .collect();
        for &l in &labels {
            let pool = &lexicon.keywords[l];
            for _ in 0..spec.mentions_per_label {
                if rng.random::<f64>() < emit {
                    tokens.push(pool[rng.random_range(0..pool.len())].clone());
                }
            }
        }
        for _ in 0..rng.random_range(0..3) {
            tokens.push(numeric_fragment(&mut rng));
        }
        tokens.shuffle(&mut rng);
        let text = render_text(&tokens, &mut rng);
        let mut note_codes: Vec<String> = labels.iter().map(|&l| codes[l].to_owned()).collect();
        note_codes.shuffle(&mut rng);
        records.push(RawRecord {
            admission_id: 100_000 + i as u64,
            patient_id,
            text,
            codes: note_codes,
            gender,
            ethnicity,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn text_examples() {
        assert_eq!(preprocess_text("Patient took 120mg; BP 700!"), strings(&["patient", "took", "120mg", "bp"]));
        assert!(preprocess_text("").is_empty());
        assert_eq!(preprocess_text("A  a\tA"), strings(&["a", "a", "a"]));
        assert_eq!(preprocess_text("3.5 mg/dl x2"), strings(&["mg", "dl", "x2"]));
    }

    #[test]
    fn dedupe_keeps_first_occurrence() {
        assert_eq!(dedupe_codes(&strings(&["b", "a", "b", "c", "a"])), strings(&["b", "a", "c"]));
    }

    #[test]
    fn vocabulary_reserves_oov() {
        let docs = [strings(&["b", "a", "b"]), strings(&["c", "b", "a"])];
        let v = Vocabulary::build(docs.iter().map(Vec::as_slice), 1, None);
        assert_eq!(v.token(0), Some(OOV_TOKEN));
        assert_eq!(v.encode(&strings(&["b", "a", "c", "zzz"])), vec![1, 2, 3, 0]);
        assert_eq!(Vocabulary::from_lines(&v.to_lines()).unwrap(), v);
        let small = Vocabulary::build(docs.iter().map(Vec::as_slice), 2, None);
        assert_eq!(small.len(), 3);
        assert_eq!(Vocabulary::build(docs.iter().map(Vec::as_slice), 1, Some(2)).len(), 2);
    }

    #[test]
    fn lexicon_words_are_unique() {
        let spec = CorpusSpec::default();
        let lex = build_lexicon(&spec, &mut rng::stream(1, "t"));
        let mut all: Vec<&String> = lex.keywords.iter().flatten().chain(&lex.background).collect();
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
    }
}
