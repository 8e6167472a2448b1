//! CSV files with a provenance comment line.
//!
//! Every file starts with `# config_hash=<sha256> seed=<seed>` followed by
//! the header row, so a table can be traced back to the exact config text
//! that produced it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {message}")]
pub struct OutputError {
    pub path: String,
    pub message: String,
}

impl OutputError {
    fn new(path: &Path, message: impl ToString) -> Self {
        Self {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }
}

impl CsvOut {
    pub fn create(path: &Path, hash: &str, seed: u64, header: &[&str]) -> Result<Self, OutputError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| OutputError::new(path, e))?;
        }
        let file = File::create(path).map_err(|e| OutputError::new(path, e))?;
        let mut inner = BufWriter::new(file);
        writeln!(inner, "# config_hash={hash} seed={seed}").map_err(|e| OutputError::new(path, e))?;
        let mut writer = csv::Writer::from_writer(inner);
        writer
            .write_record(header)
            .map_err(|e| OutputError::new(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<I, T>(&mut self, fields: I) -> Result<(), OutputError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|e| OutputError::new(&self.path, e))
    }

    pub fn finish(mut self) -> Result<PathBuf, OutputError> {
        self.writer
            .flush()
            .map_err(|e| OutputError::new(&self.path, e))?;
        Ok(self.path)
    }
}

/// Shortest round-trip formatting; NaN is written as an empty field.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

/// Reads a CSV written by [`CsvOut`], returning the comment line and the rows.
pub fn read(path: &Path) -> std::io::Result<(String, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)?;
    let (comment, body) = text.split_once('\n').unwrap_or((&text, ""));
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let mut rows = vec![reader
        .headers()
        .map_err(std::io::Error::other)?
        .iter()
        .map(str::to_string)
        .collect()];
    for rec in reader.records() {
        let rec = rec.map_err(std::io::Error::other)?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((comment.to_string(), rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comment_then_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/x.csv");
        let mut out = CsvOut::create(&path, "abc", 7, &["N", "mse"]).unwrap();
        out.row([num(10.0), num(0.5)]).unwrap();
        out.row([num(100.0), num(f64::NAN)]).unwrap();
        out.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "# config_hash=abc seed=7\nN,mse\n10,0.5\n100,\n");
        let (comment, rows) = read(&path).unwrap();
        assert_eq!(comment, "# config_hash=abc seed=7");
        assert_eq!(rows.len(), 3);
    }
}
