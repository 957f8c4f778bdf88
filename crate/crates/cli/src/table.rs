//! CSV output helpers. All reals are written with 17 significant digits so
//! files round-trip to the exact f64 values and reruns are comparable byte
//! for byte.

use std::io::Write;

/// Formats a float with full precision; empty cells stay empty.
pub fn cell(value: f64) -> String {
    format!("{value:.16e}")
}

/// A CSV file under construction with a fixed column set.
pub struct Table {
    writer: std::io::BufWriter<std::fs::File>,
    columns: usize,
}

impl Table {
    pub fn create(path: &std::path::Path, header: &[&str]) -> std::io::Result<Self> {
        let file = std::fs::File::create(path)?;
        let mut writer = std::io::BufWriter::new(file);
        writeln!(writer, "{}", header.join(","))?;
        Ok(Self {
            writer,
            columns: header.len(),
        })
    }

    /// Writes one row; the cell count must match the header.
    pub fn row(&mut self, cells: &[String]) -> std::io::Result<()> {
        assert_eq!(cells.len(), self.columns, "row width mismatch");
        writeln!(self.writer, "{}", cells.join(","))
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.writer.flush()
    }
}
