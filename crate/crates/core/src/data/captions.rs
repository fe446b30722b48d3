//! Caption files: one JSON object per line,
//! `{"image_id": "...", "captions": ["...", ...]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatErrorKind, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionRecord {
    pub image_id: String,
    pub captions: Vec<String>,
}

pub fn encode_captions(records: &[CaptionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("caption record serialises"));
        out.push('\n');
    }
    out
}

/// Parses JSON lines; error offsets are 1-based line numbers.
pub fn decode_captions(text: &str, path: &Path) -> Result<Vec<CaptionRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                kind: FormatErrorKind::Malformed,
                offset: i as u64 + 1,
                detail: e.to_string(),
            })
        })
        .collect()
}

pub fn write_captions(path: &Path, records: &[CaptionRecord]) -> Result<()> {
    std::fs::write(path, encode_captions(records)).map_err(|e| Error::io(path, e))
}

pub fn read_captions(path: &Path) -> Result<Vec<CaptionRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_captions(&text, path)
}
