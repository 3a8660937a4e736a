//! File-level helpers: read and write the jsonl and json artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use regrel_core::corpus::{parse_documents_jsonl, CorpusBuilder, Paragraph, RegulatoryDocument, StudySet};
use regrel_core::eval::{GoldStandard, PredictionRecord};
use regrel_core::process::ProcessModel;
use regrel_core::{DocId, ParaId, ParagraphLabels};

use std::collections::BTreeMap;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes via a temporary sibling and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = tmp_sibling(path);
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn to_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    write_atomic(path, to_jsonl(items).as_bytes())
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, source: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{source}:{}", i + 1)))
        .collect()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    parse_jsonl(&read_text(path)?, &path.display().to_string())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_documents(path: &Path) -> Result<BTreeMap<DocId, RegulatoryDocument>> {
    let docs = parse_documents_jsonl(&path.display().to_string(), &read_text(path)?)?;
    Ok(docs.into_iter().map(|d| (d.doc_id.clone(), d)).collect())
}

/// Loads a study set; the use-case id defaults to the file stem.
pub fn read_study_set(path: &Path, use_case_id: Option<&str>) -> Result<StudySet> {
    let mut builder = CorpusBuilder::new();
    builder.add_jsonl(&path.display().to_string(), &read_text(path)?)?;
    let (corpus, report) = builder.finish();
    for s in report.flagged() {
        log::warn!("{}: skipped {}: {:?}", s.location, s.para_id, s.reason);
    }
    let id = use_case_id.map(String::from).unwrap_or_else(|| stem(path));
    Ok(StudySet::new(id, corpus.paragraphs)?)
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn read_process(path: &Path) -> Result<ProcessModel> {
    ProcessModel::load_json(&read_text(path)?).with_context(|| format!("loading {}", path.display()))
}

/// Structural checks only; skeletons with missing descriptions load.
pub fn read_process_skeleton(path: &Path) -> Result<ProcessModel> {
    let model: ProcessModel = read_json(path)?;
    model.validate()?;
    Ok(model)
}

pub fn read_gold(path: &Path, model: &ProcessModel, use_case_id: &str) -> Result<GoldStandard> {
    let records = GoldStandard::parse_jsonl(&read_text(path)?)?;
    Ok(GoldStandard::from_records(use_case_id, records, model, None)?)
}

pub fn read_predictions(path: &Path) -> Result<BTreeMap<ParaId, ParagraphLabels>> {
    let records = PredictionRecord::parse_jsonl(&read_text(path)?)?;
    Ok(PredictionRecord::into_map(records)?)
}

pub fn paragraph_index(paragraphs: &[Paragraph]) -> BTreeMap<&str, &Paragraph> {
    paragraphs.iter().map(|p| (p.para_id.as_str(), p)).collect()
}
