//! Line-delimited JSON corpora: one `{"src": [..], "tgt": [..], "labels": [..]}`
//! object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use pprobe_core::data::SentenceRecord;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    src: Vec<String>,
    tgt: Vec<String>,
    labels: Vec<String>,
}

/// Parses a corpus from `reader`; `path` only labels errors. Blank lines
/// are skipped.
pub fn parse_corpus<R: BufRead>(reader: R, path: &Path) -> Result<Vec<SentenceRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let l: Line = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        let rec = SentenceRecord {
            src: l.src,
            tgt: l.tgt,
            labels: l.labels,
        };
        rec.validate().map_err(|e| parse(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<SentenceRecord>> {
    let f = File::open(path).map_err(io_err(path))?;
    parse_corpus(BufReader::new(f), path)
}

pub fn write_corpus_to<W: Write>(mut w: W, corpus: &[SentenceRecord]) -> std::io::Result<()> {
    for r in corpus {
        let line = Line {
            src: r.src.clone(),
            tgt: r.tgt.clone(),
            labels: r.labels.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_corpus(path: &Path, corpus: &[SentenceRecord]) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    write_corpus_to(BufWriter::new(f), corpus).map_err(io_err(path))
}
