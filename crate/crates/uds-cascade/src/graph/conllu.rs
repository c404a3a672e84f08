//! CoNLL-U reading and writing.
//!
//! Ten tab-separated columns, `#` comment lines, blank-line sentence
//! separation. Multiword-token ranges (`1-2`) and empty nodes (`1.1`) are
//! skipped. A HEAD of 0 is stored as the token's own index (root self-head
//! convention).

use crate::error::{Error, Result};
use crate::graph::AnnotatedSentence;

pub fn parse_conllu(text: &str) -> Result<Vec<AnnotatedSentence>> {
    let mut sentences = Vec::new();
    let mut forms = Vec::new();
    let mut pos = Vec::new();
    let mut heads: Vec<(usize, usize)> = Vec::new(); // (value, line) for error reporting
    let mut deprels = Vec::new();

    let mut flush = |forms: &mut Vec<String>,
                     pos: &mut Vec<String>,
                     heads: &mut Vec<(usize, usize)>,
                     deprels: &mut Vec<String>|
     -> Result<()> {
        if forms.is_empty() {
            return Ok(());
        }
        let n = forms.len();
        let resolved: Vec<usize> = heads
            .iter()
            .enumerate()
            .map(|(i, &(h, _))| if h == 0 { i + 1 } else { h })
            .collect();
        for (i, &(h, line)) in heads.iter().enumerate() {
            if h > n {
                return Err(Error::Parse {
                    line,
                    msg: format!(
                        "HEAD {} of token {} exceeds sentence length {}",
                        h,
                        i + 1,
                        n
                    ),
                });
            }
        }
        let sent = AnnotatedSentence::new(
            std::mem::take(forms),
            std::mem::take(pos),
            resolved,
            std::mem::take(deprels),
        )?;
        heads.clear();
        sentences.push(sent);
        Ok(())
    };

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            flush(&mut forms, &mut pos, &mut heads, &mut deprels)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        // skip multiword ranges and empty nodes
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad token id {:?}", cols[0]),
        })?;
        if id != forms.len() + 1 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!(
                    "non-contiguous token id {} (expected {})",
                    id,
                    forms.len() + 1
                ),
            });
        }
        let head: usize = cols[6].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad HEAD {:?}", cols[6]),
        })?;
        forms.push(cols[1].to_string());
        pos.push(cols[3].to_string());
        heads.push((head, lineno));
        deprels.push(cols[7].to_string());
    }
    flush(&mut forms, &mut pos, &mut heads, &mut deprels)?;
    Ok(sentences)
}

pub fn write_conllu(sentences: &[AnnotatedSentence]) -> String {
    let mut out = String::new();
    for sent in sentences {
        let root = sent.root();
        for (i, t) in sent.tokens.iter().enumerate() {
            let head = if i + 1 == root { 0 } else { sent.heads[i] };
            out.push_str(&format!(
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_\n",
                t.index, t.form, t.pos, head, sent.deprels[i]
            ));
        }
        out.push('\n');
    }
    out
}
