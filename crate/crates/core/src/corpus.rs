//! Evaluation dataset: citing papers, their gold related-work sections and the
//! papers they cite.
//!
//! The on-disk format is a single JSON array, one object per citing paper:
//!
//! ```json
//! [{
//!   "main": {"id": "...", "title": "...", "abstract": "...",
//!            "introduction": "...", "related_work": "... [1] ..."},
//!   "cited": [{"index": 1, "id": "...", "title": "...",
//!              "abstract": "...", "introduction": "..."}]
//! }]
//! ```
//!
//! Citation indices are renumbered to `1..=n` at load time (markers in the gold
//! text are rewritten accordingly); the original numbering is kept in
//! [`CitationSet::source_indices`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::textops::{self, CitationIndex};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus{}: {message}", record.map(|r| format!(" (record {r})")).unwrap_or_default())]
    Parse {
        record: Option<usize>,
        message: String,
    },
    #[error("paper {paper_id}: {rule}")]
    Validation { paper_id: String, rule: String },
    #[error("cannot build mismatch fixtures: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub introduction: String,
}

impl PaperRecord {
    /// Abstract and introduction joined by a blank line; the text a coherence
    /// judge sees for a cited paper.
    pub fn context(&self) -> String {
        format!("{}\n\n{}", self.abstract_text, self.introduction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationSet {
    pub main: PaperRecord,
    pub gold_related_work: String,
    pub cited: BTreeMap<CitationIndex, PaperRecord>,
    /// Normalized index -> index used in the source file. Empty when the source
    /// was already numbered `1..=n`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub source_indices: BTreeMap<CitationIndex, CitationIndex>,
}

impl CitationSet {
    pub fn id(&self) -> &str {
        &self.main.id
    }

    pub fn indices(&self) -> BTreeSet<CitationIndex> {
        self.cited.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.cited.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cited.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub paper_count: usize,
    pub total_citations: usize,
    pub mean_citations_per_paper: f64,
}

pub fn stats(corpus: &[CitationSet]) -> CorpusStats {
    let paper_count = corpus.len();
    let total_citations = corpus.iter().map(CitationSet::len).sum();
    let mean_citations_per_paper = if paper_count == 0 {
        0.0
    } else {
        total_citations as f64 / paper_count as f64
    };
    CorpusStats {
        paper_count,
        total_citations,
        mean_citations_per_paper,
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct RawMain {
    id: String,
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
    introduction: String,
    related_work: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawCited {
    index: i64,
    id: String,
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
    introduction: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawRecord {
    main: RawMain,
    cited: Vec<RawCited>,
}

const MAIN_FIELDS: &[&str] = &["id", "title", "abstract", "introduction", "related_work"];
const CITED_FIELDS: &[&str] = &["index", "id", "title", "abstract", "introduction"];

fn warn_unknown(value: &Value, known: &[&str], location: &str) {
    if let Some(obj) = value.as_object() {
        for key in obj.keys().filter(|k| !known.contains(&k.as_str())) {
            log::warn!("ignoring unknown field `{key}` in {location}");
        }
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CitationSet>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&text)
}

pub fn parse_corpus(text: &str) -> Result<Vec<CitationSet>, CorpusError> {
    let sets: Vec<CitationSet> = parse_records(text)?.into_iter().collect::<Result<_, _>>()?;
    let mut seen = std::collections::BTreeSet::new();
    for s in &sets {
        if !seen.insert(s.id()) {
            return Err(CorpusError::Validation {
                paper_id: s.id().to_string(),
                rule: "paper id appears more than once".into(),
            });
        }
    }
    Ok(sets)
}

/// Like [`parse_corpus`], but validates every record independently. Only a
/// malformed document as a whole is an outer error.
pub fn parse_records(text: &str) -> Result<Vec<Result<CitationSet, CorpusError>>, CorpusError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let root: Value = serde_json::from_str(text).map_err(|e| CorpusError::Parse {
        record: None,
        message: e.to_string(),
    })?;
    let Value::Array(items) = root else {
        return Err(CorpusError::Parse {
            record: None,
            message: "top level must be an array".into(),
        });
    };
    Ok(items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            warn_unknown(&item, &["main", "cited"], &format!("record {i}"));
            if let Some(main) = item.get("main") {
                warn_unknown(main, MAIN_FIELDS, &format!("record {i} main"));
            }
            if let Some(Value::Array(cited)) = item.get("cited") {
                for (j, c) in cited.iter().enumerate() {
                    warn_unknown(c, CITED_FIELDS, &format!("record {i} cited[{j}]"));
                }
            }
            let raw: RawRecord = serde_json::from_value(item).map_err(|e| CorpusError::Parse {
                record: Some(i),
                message: e.to_string(),
            })?;
            validate(raw)
        })
        .collect())
}

fn require_text(paper_id: &str, field: &str, value: &str) -> Result<(), CorpusError> {
    if value.trim().is_empty() {
        return Err(CorpusError::Validation {
            paper_id: paper_id.to_string(),
            rule: format!("{field} must be non-empty"),
        });
    }
    Ok(())
}

fn validate(raw: RawRecord) -> Result<CitationSet, CorpusError> {
    let RawRecord { main, cited } = raw;
    let pid = main.id.clone();
    let invalid = |rule: String| CorpusError::Validation {
        paper_id: pid.clone(),
        rule,
    };
    require_text(&pid, "main title", &main.title)?;
    require_text(&pid, "main abstract", &main.abstract_text)?;
    require_text(&pid, "main introduction", &main.introduction)?;
    require_text(&pid, "related_work", &main.related_work)?;

    let mut by_source: BTreeMap<CitationIndex, PaperRecord> = BTreeMap::new();
    for c in cited {
        let idx = CitationIndex::try_from(c.index)
            .ok()
            .filter(|&i| i >= 1)
            .ok_or_else(|| invalid(format!("citation index {} must be a positive integer", c.index)))?;
        let label = format!("cited paper [{idx}]");
        require_text(&pid, &format!("{label} title"), &c.title)?;
        require_text(&pid, &format!("{label} abstract"), &c.abstract_text)?;
        require_text(&pid, &format!("{label} introduction"), &c.introduction)?;
        let record = PaperRecord {
            id: c.id,
            title: c.title,
            abstract_text: c.abstract_text,
            introduction: c.introduction,
        };
        if by_source.insert(idx, record).is_some() {
            return Err(invalid(format!("duplicate citation index {idx}")));
        }
    }

    let gold_cites: BTreeSet<CitationIndex> = textops::extract_citations(&main.related_work).into_iter().collect();
    if gold_cites.is_empty() {
        return Err(invalid("related_work contains no citation markers".into()));
    }
    if let Some(missing) = gold_cites.iter().find(|i| !by_source.contains_key(i)) {
        return Err(invalid(format!(
            "related_work cites [{missing}] but no cited paper has index {missing}"
        )));
    }
    let uncited: Vec<_> = by_source.keys().filter(|i| !gold_cites.contains(i)).collect();
    if !uncited.is_empty() {
        log::warn!("paper {pid}: cited papers {uncited:?} never appear in related_work");
    }

    let renumber: BTreeMap<CitationIndex, CitationIndex> = by_source
        .keys()
        .zip(1..)
        .map(|(&src, new)| (src, new))
        .collect();
    let contiguous = renumber.iter().all(|(s, n)| s == n);
    let gold_related_work = if contiguous {
        main.related_work
    } else {
        textops::remap_citations(&main.related_work, |i| renumber.get(&i).copied())
    };
    let source_indices = if contiguous {
        BTreeMap::new()
    } else {
        renumber.iter().map(|(&s, &n)| (n, s)).collect()
    };
    let cited = by_source
        .into_iter()
        .map(|(src, rec)| (renumber[&src], rec))
        .collect();

    Ok(CitationSet {
        main: PaperRecord {
            id: main.id,
            title: main.title,
            abstract_text: main.abstract_text,
            introduction: main.introduction,
        },
        gold_related_work,
        cited,
        source_indices,
    })
}

/// Writes the corpus in its normalized form.
pub fn save_corpus(corpus: &[CitationSet], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let text = to_corpus_json(corpus);
    fs::write(path, text).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn to_corpus_json(corpus: &[CitationSet]) -> String {
    let raw: Vec<RawRecord> = corpus
        .iter()
        .map(|set| RawRecord {
            main: RawMain {
                id: set.main.id.clone(),
                title: set.main.title.clone(),
                abstract_text: set.main.abstract_text.clone(),
                introduction: set.main.introduction.clone(),
                related_work: set.gold_related_work.clone(),
            },
            cited: set
                .cited
                .iter()
                .map(|(&index, p)| RawCited {
                    index: i64::from(index),
                    id: p.id.clone(),
                    title: p.title.clone(),
                    abstract_text: p.abstract_text.clone(),
                    introduction: p.introduction.clone(),
                })
                .collect(),
        })
        .collect();
    serde_json::to_string_pretty(&raw).expect("corpus serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntailmentLabel {
    Entail,
    NonEntail,
}

/// One coherence meta-evaluation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceFixture {
    /// Citing paper the sentence comes from.
    pub source_paper: String,
    pub sentence: String,
    /// Marker number the judge is asked about.
    pub citation_index: CitationIndex,
    pub paper: PaperRecord,
    pub label: EntailmentLabel,
}

fn citation_sentences(set: &CitationSet) -> Vec<(String, Vec<CitationIndex>)> {
    textops::segment(&set.gold_related_work)
        .sentences()
        .filter(|s| s.has_citation())
        .map(|s| (s.text.clone(), s.cited_indices.clone()))
        .collect()
}

/// Pairs every gold citation sentence with a paper cited by a *different*
/// citing paper. The choice is a pure function of `seed`.
pub fn mismatch_fixtures(corpus: &[CitationSet], seed: u64) -> Result<Vec<CoherenceFixture>, CorpusError> {
    if corpus.len() < 2 {
        return Err(CorpusError::Mismatch(format!(
            "need at least two citing papers, got {}",
            corpus.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (i, set) in corpus.iter().enumerate() {
        for (sentence, indices) in citation_sentences(set) {
            let own_ids: BTreeSet<&str> = indices
                .iter()
                .filter_map(|k| set.cited.get(k))
                .map(|p| p.id.as_str())
                .collect();
            let candidates: Vec<&PaperRecord> = corpus
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, other)| other.cited.values())
                .filter(|p| !own_ids.contains(p.id.as_str()))
                .collect();
            let Some(paper) = candidates.choose(&mut rng) else {
                continue;
            };
            out.push(CoherenceFixture {
                source_paper: set.main.id.clone(),
                sentence,
                citation_index: indices[0],
                paper: (*paper).clone(),
                label: EntailmentLabel::NonEntail,
            });
        }
    }
    if out.is_empty() {
        return Err(CorpusError::Mismatch(
            "no sentence has a paper from another citing paper to pair with".into(),
        ));
    }
    Ok(out)
}

/// Untouched (sentence, cited paper) pairs, one per citation occurrence.
pub fn entailment_fixtures(corpus: &[CitationSet]) -> Vec<CoherenceFixture> {
    corpus
        .iter()
        .flat_map(|set| {
            citation_sentences(set).into_iter().flat_map(move |(sentence, indices)| {
                indices.into_iter().filter_map(move |k| {
                    set.cited.get(&k).map(|paper| CoherenceFixture {
                        source_paper: set.main.id.clone(),
                        sentence: sentence.clone(),
                        citation_index: k,
                        paper: paper.clone(),
                        label: EntailmentLabel::Entail,
                    })
                })
            })
        })
        .collect()
}

/// Balanced coherence meta-evaluation set: `per_class` positives followed by
/// `per_class` mismatched negatives, both sampled under `seed`.
pub fn meta_eval_set(
    corpus: &[CitationSet],
    per_class: usize,
    seed: u64,
) -> Result<Vec<CoherenceFixture>, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives = entailment_fixtures(corpus);
    let negatives = mismatch_fixtures(corpus, seed)?;
    if positives.len() < per_class || negatives.len() < per_class {
        return Err(CorpusError::Mismatch(format!(
            "requested {per_class} per class but only {} positives and {} negatives exist",
            positives.len(),
            negatives.len()
        )));
    }
    let mut out: Vec<CoherenceFixture> = positives.choose_multiple(&mut rng, per_class).cloned().collect();
    out.extend(negatives.choose_multiple(&mut rng, per_class).cloned());
    Ok(out)
}
