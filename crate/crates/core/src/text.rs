//! Tokenization and fragment heuristics shared by ingestion and retrieval.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Lowercasing, non-alphanumeric splitting tokenizer. No stemming.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    /// Tokens dropped after normalization. Empty by default.
    #[serde(default)]
    pub stopwords: BTreeSet<String>,
}

impl Tokenizer {
    pub fn with_stopwords<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tok = Tokenizer::default();
        let stopwords = words.into_iter().map(|w| tok.normalize_word(&w.into())).collect();
        Tokenizer { stopwords }
    }

    fn normalize_word(&self, word: &str) -> String {
        word.chars().flat_map(char::to_lowercase).collect()
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| self.normalize_word(w))
            .filter(|w| !self.stopwords.contains(w))
            .collect()
    }
}

/// Tokenize with the default tokenizer.
pub fn tokenize(text: &str) -> Vec<String> {
    Tokenizer::default().tokenize(text)
}

/// Whitespace-separated word count, as used for prompt length reporting.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// True when the text holds at least one alphanumeric character.
pub fn has_content(text: &str) -> bool {
    text.chars().any(char::is_alphanumeric)
}

/// Why a fragment was kept out of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    SuspectedTableOfContents,
    SuspectedTable,
}

impl ExclusionReason {
    pub fn describe(self) -> &'static str {
        match self {
            ExclusionReason::SuspectedTableOfContents => "suspected table of contents",
            ExclusionReason::SuspectedTable => "suspected table",
        }
    }
}

/// Minimum run of consecutive short headings that marks a table of contents.
pub const TOC_MIN_HEADINGS: usize = 3;
/// A heading is short when it has fewer words than this.
pub const TOC_MAX_HEADING_WORDS: usize = 5;

/// Applies the table-of-contents and table heuristics to a fragment.
///
/// A fragment is a table of contents when at least three consecutive
/// segments start with a numbered or lettered heading marker followed by
/// fewer than five words. Segments are lines, further split at inline
/// numeric markers such as `2.` so that flattened listings are caught too.
/// A fragment of two or more lines is a table when more than half of its
/// lines hold at least two tab- or multi-space-separated cells.
pub fn detect_excluded(body: &str) -> Option<ExclusionReason> {
    if looks_like_toc(body) {
        return Some(ExclusionReason::SuspectedTableOfContents);
    }
    if looks_like_table(body) {
        return Some(ExclusionReason::SuspectedTable);
    }
    None
}

fn is_word(token: &str) -> bool {
    has_content(token)
}

/// `1.`, `2.1`, `2.1.`, `3)` — digits joined by dots, ending in `.` or `)`
/// unless it contains an inner dot.
fn is_numeric_marker(token: &str) -> bool {
    let (core, closed) = match token.strip_suffix(['.', ')']) {
        Some(c) => (c, true),
        None => (token, false),
    };
    if core.is_empty() {
        return false;
    }
    let parts: Vec<&str> = core.split('.').collect();
    if parts
        .iter()
        .any(|p| p.is_empty() || !p.chars().all(|c| c.is_ascii_digit()))
    {
        return false;
    }
    closed || parts.len() > 1
}

/// `a.`, `(b)`, `c)`, `(iv)` — only recognized at the start of a line.
fn is_letter_marker(token: &str) -> bool {
    let inner = token.strip_prefix('(').unwrap_or(token);
    let Some(inner) = inner.strip_suffix(['.', ')']) else {
        return false;
    };
    if inner.is_empty() || !inner.chars().all(|c| c.is_ascii_alphabetic()) {
        return false;
    }
    inner.chars().count() == 1 || inner.chars().all(|c| matches!(c, 'i' | 'v' | 'x'))
}

fn looks_like_toc(body: &str) -> bool {
    let mut run = 0usize;
    for line in body.lines() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let mut start = 0usize;
        let mut seg_is_heading = is_numeric_marker(tokens[0]) || is_letter_marker(tokens[0]);
        if seg_is_heading {
            start = 1;
        }
        let mut words = 0usize;
        for tok in &tokens[start..] {
            if is_numeric_marker(tok) {
                // close the current segment, open a heading segment
                if seg_is_heading && words > 0 && words < TOC_MAX_HEADING_WORDS {
                    run += 1;
                    if run >= TOC_MIN_HEADINGS {
                        return true;
                    }
                } else {
                    run = 0;
                }
                seg_is_heading = true;
                words = 0;
            } else if is_word(tok) {
                words += 1;
            }
        }
        if seg_is_heading && words > 0 && words < TOC_MAX_HEADING_WORDS {
            run += 1;
            if run >= TOC_MIN_HEADINGS {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

fn cell_count(line: &str) -> usize {
    let mut cells = 0usize;
    let mut current = String::new();
    let mut spaces = 0usize;
    let flush = |cur: &mut String, cells: &mut usize| {
        if !cur.trim().is_empty() {
            *cells += 1;
        }
        cur.clear();
    };
    for c in line.chars() {
        if c == '\t' {
            flush(&mut current, &mut cells);
            spaces = 0;
        } else if c == ' ' {
            spaces += 1;
            if spaces == 2 {
                flush(&mut current, &mut cells);
            } else if spaces == 1 {
                current.push(' ');
            }
        } else {
            spaces = 0;
            current.push(c);
        }
    }
    flush(&mut current, &mut cells);
    cells
}

fn looks_like_table(body: &str) -> bool {
    let lines: Vec<&str> = body.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() < 2 {
        return false;
    }
    let tabular = lines.iter().filter(|l| cell_count(l.trim()) >= 2).count();
    tabular * 2 > lines.len()
}
