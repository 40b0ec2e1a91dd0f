//! Tab-separated task files.
//!
//! The first row is a header naming the columns. `text_a` is required;
//! `text_b` is required for pair tasks; `label` is required except for test
//! splits. A `guid`, `id`, or `index` column, if present, names each row.
//! Other columns are ignored.

use std::path::Path;

use super::task::{Example, InputArity, TaskSpec};
use crate::error::{CertError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

pub const LABEL_COLUMN: &str = "label";

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => CertError::io(path, io),
            other => CertError::data(path, 1, format!("{other:?}")),
        })
}

fn headers(path: &Path, rdr: &mut csv::Reader<std::fs::File>) -> Result<Vec<String>> {
    let h = rdr.headers().map_err(|e| CertError::data(path, 1, e.to_string()))?;
    if h.is_empty() || (h.len() == 1 && h[0].is_empty()) {
        return Err(CertError::data(path, 1, "missing header row"));
    }
    Ok(h.iter().map(|s| s.trim().to_string()).collect())
}

fn column(headers: &[String], name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

/// Reads every data row of `path` as an [`Example`] of `spec`.
pub fn load_tsv(path: &Path, spec: &TaskSpec, split: Split) -> Result<Vec<Example>> {
    let mut rdr = reader(path)?;
    let headers = headers(path, &mut rdr)?;
    let a_col = column(&headers, "text_a").ok_or_else(|| CertError::data(path, 1, "header lacks a `text_a` column"))?;
    let b_col = column(&headers, "text_b");
    if spec.input_arity == InputArity::Pair && b_col.is_none() {
        return Err(CertError::data(
            path,
            1,
            format!("pair task `{}` needs a `text_b` column", spec.name),
        ));
    }
    let b_col = if spec.input_arity == InputArity::Pair {
        b_col
    } else {
        None
    };
    let label_col = column(&headers, LABEL_COLUMN);
    if label_col.is_none() && split != Split::Test {
        return Err(CertError::data(path, 1, "header lacks a `label` column"));
    }
    let guid_col = ["guid", "id", "index"].iter().find_map(|n| column(&headers, n));

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CertError::data(path, line, e.to_string())
        })?;
        let line = line_of(&rec);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != headers.len() {
            return Err(CertError::data(
                path,
                line,
                format!("expected {} columns, found {}", headers.len(), rec.len()),
            ));
        }
        let label = match label_col.map(|c| rec[c].trim()) {
            Some(raw) if !raw.is_empty() => Some(
                spec.parse_label(raw)
                    .map_err(|e| CertError::data(path, line, e.to_string()))?,
            ),
            _ if split != Split::Test => {
                return Err(CertError::data(path, line, "missing label"));
            }
            _ => None,
        };
        out.push(Example {
            guid: guid_col
                .map(|c| rec[c].to_string())
                .unwrap_or_else(|| (out.len()).to_string()),
            text_a: rec[a_col].to_string(),
            text_b: b_col.map(|c| rec[c].to_string()),
            label,
        });
    }
    Ok(out)
}

/// Reads only the named text columns of a task file, concatenating the
/// columns of each row into a list of sentences (one per column per row).
///
/// Asking for the label column is refused: unlabeled consumers must never
/// see labels.
pub fn load_unlabeled_texts(path: &Path, columns: &[String]) -> Result<Vec<String>> {
    if let Some(c) = columns.iter().find(|c| c.as_str() == LABEL_COLUMN) {
        return Err(CertError::LabelLeakage(format!(
            "column `{c}` of {} requested by an unlabeled stage",
            path.display()
        )));
    }
    if columns.is_empty() {
        return Err(CertError::Config("no text columns requested".into()));
    }
    let mut rdr = reader(path)?;
    let headers = headers(path, &mut rdr)?;
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| column(&headers, c).ok_or_else(|| CertError::data(path, 1, format!("header lacks column `{c}`"))))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CertError::data(path, 0, e.to_string()))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != headers.len() {
            return Err(CertError::data(
                path,
                line_of(&rec),
                format!("expected {} columns, found {}", headers.len(), rec.len()),
            ));
        }
        for &i in &idx {
            out.push(rec[i].to_string());
        }
    }
    Ok(out)
}

/// Lines of a plain-text corpus, blank lines dropped.
pub fn load_corpus(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| CertError::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Label;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.tsv", "text_a\tlabel\n");
        let spec = TaskSpec::preset("cola").unwrap();
        assert!(load_tsv(&p, &spec, Split::Train).unwrap().is_empty());
    }

    #[test]
    fn bad_label_names_value_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.tsv", "text_a\tlabel\nfine\t1\nodd \"quote\t7\n");
        let spec = TaskSpec::preset("cola").unwrap();
        let err = load_tsv(&p, &spec, Split::Train).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
        assert!(err.contains("`7`"), "{err}");
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.tsv", "text_a\ttext_b\tlabel\na\tb\t1\nonly two\t0\n");
        let spec = TaskSpec::preset("mrpc").unwrap();
        let err = load_tsv(&p, &spec, Split::Train).unwrap_err();
        assert!(matches!(err, CertError::Data { line: 3, .. }), "{err}");
    }

    #[test]
    fn test_split_may_lack_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "t.tsv", "index\ttext_a\n0\tsome text\n1\tmore\n");
        let spec = TaskSpec::preset("sst2").unwrap();
        let ex = load_tsv(&p, &spec, Split::Test).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[1].guid, "1");
        assert!(ex[0].label.is_none());
        assert!(load_tsv(&p, &spec, Split::Dev).is_err());
    }

    #[test]
    fn pair_rows_and_regression_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "s.tsv", "text_a\ttext_b\tlabel\nA man.\tA person.\t4.5\n");
        let spec = TaskSpec::preset("stsb").unwrap();
        let ex = load_tsv(&p, &spec, Split::Dev).unwrap();
        assert_eq!(ex[0].text_b.as_deref(), Some("A person."));
        assert_eq!(ex[0].label, Some(Label::Real(4.5)));
    }

    #[test]
    fn unlabeled_loader_refuses_label_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.tsv", "text_a\tlabel\nhello\t1\n");
        let err = load_unlabeled_texts(&p, &["text_a".into(), "label".into()]).unwrap_err();
        assert!(matches!(err, CertError::LabelLeakage(_)));
        assert_eq!(load_unlabeled_texts(&p, &["text_a".into()]).unwrap(), vec!["hello"]);
    }
}
