//! CommonsenseQA-style multiple-choice records, one JSON object per line:
//!
//! ```json
//! {"answerKey":"B","id":"075e483d21c29a511267ef62bedc0461","question":{"question_concept":"punishing","choices":[{"label":"A","text":"ignore"},{"label":"B","text":"enforce"},{"label":"C","text":"authoritarian"},{"label":"D","text":"yell at"},{"label":"E","text":"avoid"}],"stem":"The sanctions against the school were a punishing blow, and they seemed to what the efforts the school had made to change?"}}
//! ```
//!
//! Question and choice text is kept as written; normalization happens only
//! during concept matching.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::extraction::{AnchorExample, CHOICE_COUNT};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record { path: String, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsqaChoice {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsqaQuestion {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_concept: Option<String>,
    pub choices: Vec<CsqaChoice>,
    pub stem: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CsqaRecord {
    pub answer_key: String,
    pub id: String,
    pub question: CsqaQuestion,
}

impl CsqaRecord {
    pub fn to_anchor(&self) -> Result<AnchorExample, String> {
        let choices = &self.question.choices;
        if choices.len() != CHOICE_COUNT {
            return Err(format!("expected {CHOICE_COUNT} choices, found {}", choices.len()));
        }
        let answer_index = choices
            .iter()
            .position(|c| c.label == self.answer_key)
            .ok_or_else(|| format!("answer key {:?} matches no choice label", self.answer_key))?;
        AnchorExample::new(
            self.id.clone(),
            self.question.stem.clone(),
            choices.iter().map(|c| c.text.clone()).collect(),
            answer_index,
        )
        .map_err(|e| e.to_string())
    }

    pub fn from_anchor(anchor: &AnchorExample) -> CsqaRecord {
        let label = |i: usize| ((b'A' + i as u8) as char).to_string();
        CsqaRecord {
            answer_key: label(anchor.answer_index()),
            id: anchor.id().to_owned(),
            question: CsqaQuestion {
                question_concept: None,
                choices: anchor
                    .choices()
                    .iter()
                    .enumerate()
                    .map(|(i, text)| CsqaChoice {
                        label: label(i),
                        text: text.clone(),
                    })
                    .collect(),
                stem: anchor.question().to_owned(),
            },
        }
    }
}

pub fn parse_dataset<R: BufRead>(reader: R, source: &str) -> Result<Vec<AnchorExample>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io {
            path: source.to_owned(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record_error = |message: String| DatasetError::Record {
            path: source.to_owned(),
            line: i + 1,
            message,
        };
        let record: CsqaRecord = serde_json::from_str(&line).map_err(|e| record_error(e.to_string()))?;
        out.push(record.to_anchor().map_err(record_error)?);
    }
    if out.is_empty() {
        log::warn!("{source}: dataset has no records");
    }
    Ok(out)
}

/// Loads every record; any malformed line aborts with its line number.
pub fn load_dataset(path: &Path) -> Result<Vec<AnchorExample>, DatasetError> {
    let reader = crate::kb::open_dump(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    parse_dataset(reader, &path.display().to_string())
}

pub fn write_dataset<W: Write>(mut out: W, anchors: &[AnchorExample]) -> std::io::Result<()> {
    for anchor in anchors {
        serde_json::to_writer(&mut out, &CsqaRecord::from_anchor(anchor))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{"answerKey":"B","id":"q1","question":{"question_concept":"book","choices":[{"label":"A","text":"oven"},{"label":"B","text":"shelf"},{"label":"C","text":"sky"},{"label":"D","text":"river"},{"label":"E","text":"shoe"}],"stem":"Where do you keep a book?"}}"#;

    #[test]
    fn parses_a_record() {
        let anchors = parse_dataset(SAMPLE.as_bytes(), "mem").unwrap();
        assert_eq!(anchors.len(), 1);
        assert_eq!(anchors[0].answer_index(), 1);
        assert_eq!(anchors[0].choices()[1], "shelf");
        assert_eq!(anchors[0].question(), "Where do you keep a book?");
    }

    #[test]
    fn four_choices_name_the_line() {
        let four = SAMPLE.replace(r#",{"label":"E","text":"shoe"}"#, "");
        let text = format!("{SAMPLE}\n{four}\n");
        match parse_dataset(text.as_bytes(), "dev.jsonl") {
            Err(DatasetError::Record { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("4"), "{message}");
            }
            other => panic!("expected a record error, got {other:?}"),
        }
        let bad_key = SAMPLE.replace(r#""answerKey":"B""#, r#""answerKey":"Z""#);
        assert!(parse_dataset(bad_key.as_bytes(), "x").is_err());
        assert!(parse_dataset("{not json".as_bytes(), "x").is_err());
    }

    #[test]
    fn empty_file_has_no_anchors() {
        assert!(parse_dataset("".as_bytes(), "empty").unwrap().is_empty());
    }

    #[test]
    fn round_trip() {
        let anchors = parse_dataset(SAMPLE.as_bytes(), "mem").unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &anchors).unwrap();
        assert_eq!(parse_dataset(buf.as_slice(), "mem").unwrap(), anchors);
    }
}
