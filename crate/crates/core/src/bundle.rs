//! Model bundle: vocabulary, both scorers, envelope, thresholds, patient
//! patterns and data composition, persisted as a directory with a versioned
//! `key=value` manifest and one JSON member per artifact.
//!
//! The bundle digest combines the member digests and the envelope bounds.
//! Thresholds are deliberately excluded so recalibration keeps provenance.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{combine, sha256_hex};
use crate::models::{TrainedScorer, Vocabulary};
use crate::preprocess::{EnvelopeConfig, PatientPatterns};
use crate::rules::RuleThresholds;

pub const BUNDLE_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Member name and file name, in manifest order.
const MEMBERS: [(&str, &str); 5] = [
    ("vocab", "vocab.json"),
    ("scorer_a", "scorer_a.json"),
    ("scorer_b", "scorer_b.json"),
    ("patterns", "patterns.json"),
    ("composition", "composition.json"),
];

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest is missing key {0:?}")]
    MissingKey(String),
    #[error("manifest line {line} is not key=value: {text:?}")]
    MalformedManifest { line: usize, text: String },
    #[error("manifest key {key:?} has invalid value {value:?}")]
    InvalidValue { key: String, value: String },
    #[error("unsupported bundle version {found:?} (expected {expected:?})")]
    VersionMismatch { found: String, expected: String },
    #[error("digest mismatch for member {member}: manifest {expected}, file {actual}")]
    DigestMismatch {
        member: String,
        expected: String,
        actual: String,
    },
    #[error("cannot parse member {member}: {source}")]
    Parse {
        member: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Composition of the data the scorers were trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataComposition {
    /// Digest of the full labelled corpus the training split came from.
    pub corpus_digest: String,
    pub corpus_size: usize,
    /// Training split size before upsampling.
    pub training_size: usize,
    pub suspect_adverse: usize,
    pub not_suspect: usize,
    pub upsampled_size: usize,
    /// Training split counts per selection category.
    pub categories: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PatternsFile {
    patient: PatientPatterns,
    invalid_title_prefixes: Vec<String>,
    invalid_abstract_prefixes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub vocabulary: Vocabulary,
    pub scorer_a: TrainedScorer,
    pub scorer_b: TrainedScorer,
    pub envelope: EnvelopeConfig,
    pub thresholds: RuleThresholds,
    pub patterns: PatientPatterns,
    pub composition: DataComposition,
    pub created_utc: String,
    pub training_corpus_digest: String,
    pub seed: u64,
}

impl ModelBundle {
    fn member_bytes(&self) -> Vec<(&'static str, &'static str, Vec<u8>)> {
        let patterns = PatternsFile {
            patient: self.patterns.clone(),
            invalid_title_prefixes: self.envelope.invalid_title_prefixes.clone(),
            invalid_abstract_prefixes: self.envelope.invalid_abstract_prefixes.clone(),
        };
        let bytes = [
            serde_json::to_vec(&self.vocabulary),
            serde_json::to_vec(&self.scorer_a),
            serde_json::to_vec(&self.scorer_b),
            serde_json::to_vec_pretty(&patterns),
            serde_json::to_vec_pretty(&self.composition),
        ];
        MEMBERS
            .iter()
            .zip(bytes)
            .map(|(&(name, file), b)| (name, file, b.expect("bundle members serialize")))
            .collect()
    }

    fn envelope_line(&self) -> String {
        format!(
            "{}\t{}\t{}",
            self.envelope.min_tokens,
            self.envelope.max_tokens,
            self.envelope.allowed_languages.join(",")
        )
    }

    fn digest_from(members: &[(String, String)], envelope_line: &str) -> String {
        let mut pairs = members.to_vec();
        pairs.push(("envelope".into(), sha256_hex(envelope_line.as_bytes())));
        combine(&pairs)
    }

    /// Per-member SHA-256 digests, by member name.
    pub fn member_digests(&self) -> Vec<(String, String)> {
        self.member_bytes()
            .into_iter()
            .map(|(name, _, b)| (name.to_string(), sha256_hex(&b)))
            .collect()
    }

    pub fn digest(&self) -> String {
        Self::digest_from(&self.member_digests(), &self.envelope_line())
    }

    fn manifest(&self, member_digests: &[(String, String)]) -> String {
        let d = |name: &str| {
            member_digests
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.clone())
                .unwrap_or_default()
        };
        let lines = [
            ("bundle_version", BUNDLE_VERSION.to_string()),
            ("created_utc", self.created_utc.clone()),
            ("vocab_digest", d("vocab")),
            ("scorer_a_digest", d("scorer_a")),
            ("scorer_b_digest", d("scorer_b")),
            ("theta_a", self.thresholds.theta_a.to_string()),
            ("theta_b", self.thresholds.theta_b.to_string()),
            ("envelope_min_tokens", self.envelope.min_tokens.to_string()),
            ("envelope_max_tokens", self.envelope.max_tokens.to_string()),
            ("allowed_languages", self.envelope.allowed_languages.join(",")),
            ("training_corpus_digest", self.training_corpus_digest.clone()),
            ("seed", self.seed.to_string()),
            ("patterns_digest", d("patterns")),
            ("composition_digest", d("composition")),
            ("bundle_digest", Self::digest_from(member_digests, &self.envelope_line())),
        ];
        lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<(), BundleError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| BundleError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let members = self.member_bytes();
        let mut digests = Vec::new();
        for (name, file, bytes) in &members {
            let path = dir.join(file);
            fs::write(&path, bytes).map_err(io(&path))?;
            digests.push((name.to_string(), sha256_hex(bytes)));
        }
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.manifest(&digests)).map_err(io(&path))
    }

    /// Loads and verifies every member digest before parsing anything.
    pub fn load(dir: &Path) -> Result<Self, BundleError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|source| BundleError::Io {
            path: manifest_path.clone(),
            source,
        })?;
        let m = parse_manifest(&text)?;
        let get = |k: &str| m.get(k).cloned().ok_or_else(|| BundleError::MissingKey(k.to_string()));
        let version = get("bundle_version")?;
        if version != BUNDLE_VERSION {
            return Err(BundleError::VersionMismatch {
                found: version,
                expected: BUNDLE_VERSION.into(),
            });
        }
        let mut raw: HashMap<&str, Vec<u8>> = HashMap::new();
        let mut digests = Vec::new();
        for (name, file) in MEMBERS {
            let path = dir.join(file);
            let bytes = fs::read(&path).map_err(|source| BundleError::Io { path, source })?;
            let expected = get(&format!("{name}_digest"))?;
            let actual = sha256_hex(&bytes);
            if expected != actual {
                return Err(BundleError::DigestMismatch {
                    member: name.to_string(),
                    expected,
                    actual,
                });
            }
            digests.push((name.to_string(), actual));
            raw.insert(name, bytes);
        }
        fn parse<T: for<'de> Deserialize<'de>>(raw: &HashMap<&str, Vec<u8>>, name: &str) -> Result<T, BundleError> {
            serde_json::from_slice(&raw[name]).map_err(|source| BundleError::Parse {
                member: name.to_string(),
                source,
            })
        }
        let num = |k: &str| -> Result<f64, BundleError> {
            let v = get(k)?;
            v.parse().map_err(|_| BundleError::InvalidValue { key: k.into(), value: v })
        };
        let int = |k: &str| -> Result<u64, BundleError> {
            let v = get(k)?;
            v.parse().map_err(|_| BundleError::InvalidValue { key: k.into(), value: v })
        };
        let patterns: PatternsFile = parse(&raw, "patterns")?;
        let languages = get("allowed_languages")?;
        let envelope = EnvelopeConfig {
            min_tokens: int("envelope_min_tokens")? as usize,
            max_tokens: int("envelope_max_tokens")? as usize,
            allowed_languages: languages
                .split(',')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
            invalid_title_prefixes: patterns.invalid_title_prefixes,
            invalid_abstract_prefixes: patterns.invalid_abstract_prefixes,
        };
        let thresholds = RuleThresholds {
            theta_a: num("theta_a")?,
            theta_b: num("theta_b")?,
        };
        thresholds.validate().map_err(|_| BundleError::InvalidValue {
            key: "theta_a/theta_b".into(),
            value: format!("{}/{}", thresholds.theta_a, thresholds.theta_b),
        })?;
        let bundle = ModelBundle {
            vocabulary: parse(&raw, "vocab")?,
            scorer_a: parse(&raw, "scorer_a")?,
            scorer_b: parse(&raw, "scorer_b")?,
            envelope,
            thresholds,
            patterns: patterns.patient,
            composition: parse(&raw, "composition")?,
            created_utc: get("created_utc")?,
            training_corpus_digest: get("training_corpus_digest")?,
            seed: int("seed")?,
        };
        let expected = get("bundle_digest")?;
        let actual = Self::digest_from(&digests, &bundle.envelope_line());
        if expected != actual {
            return Err(BundleError::DigestMismatch {
                member: "manifest".into(),
                expected,
                actual,
            });
        }
        Ok(bundle)
    }
}

fn parse_manifest(text: &str) -> Result<HashMap<String, String>, BundleError> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| BundleError::MalformedManifest {
            line: i + 1,
            text: line.to_string(),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
