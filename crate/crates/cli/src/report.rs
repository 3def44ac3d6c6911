//! Ordered `key: value` report, written to the output directory and echoed
//! on stdout. Values go through `Display`, so repeated runs with the same
//! config and seed produce byte-identical files.

use std::fmt::Display;
use std::path::Path;

use freundlich::error::Result;

#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.lines {
            s.push_str(k);
            s.push_str(": ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), self.render())?;
        Ok(())
    }

    /// Values of all `...: fail` lines, if any.
    pub fn failures(&self) -> Vec<&str> {
        self.lines
            .iter()
            .filter(|(_, v)| v == "fail")
            .map(|(k, _)| k.as_str())
            .collect()
    }
}
