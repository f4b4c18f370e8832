use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

/// Shortest representation that parses back to the same value.
pub fn float(v: f64) -> String {
    format!("{v:?}")
}

pub fn csv_row(fields: &[String]) -> String {
    let mut line = fields.join(",");
    line.push('\n');
    line
}

/// Collects output and writes it in one go to `--out` or stdout.
pub struct Sink {
    path: Option<PathBuf>,
    buf: String,
}

impl Sink {
    pub fn new(path: Option<PathBuf>) -> Self {
        Sink { path, buf: String::new() }
    }

    pub fn push(&mut self, text: &str) {
        self.buf.push_str(text);
    }

    pub fn json<T: serde::Serialize>(&mut self, value: &T) -> Result<(), serde_json::Error> {
        self.buf.push_str(&serde_json::to_string_pretty(value)?);
        self.buf.push('\n');
        Ok(())
    }

    pub fn finish(self) -> io::Result<()> {
        match self.path {
            Some(p) => fs::write(p, self.buf),
            None => {
                let mut out = io::stdout().lock();
                out.write_all(self.buf.as_bytes())?;
                out.flush()
            }
        }
    }
}
