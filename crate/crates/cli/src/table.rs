//! Result tables rendered as aligned text and as comma-separated values.

use dsid_core::PooledScore;

/// Column headers after the row label.
pub const METRIC_COLUMNS: [&str; 4] = ["TER accuracy", "TER F1", "DER accuracy", "DER F1"];

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Fixed four-decimal rendering; absent values print as `-`.
pub fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl Table {
    pub fn new(first_column: &str) -> Self {
        let mut header = vec![first_column.to_string()];
        header.extend(METRIC_COLUMNS.iter().map(|s| s.to_string()));
        Self { header, rows: Vec::new() }
    }

    /// Adds a row of pooled (micro) accuracy and macro-F1 for both tasks.
    pub fn push_scores(&mut self, label: &str, ter: Option<&PooledScore>, der: Option<&PooledScore>) {
        let mut row = vec![label.to_string()];
        for s in [ter, der] {
            row.push(fmt_metric(s.map(|p| p.micro.accuracy)));
            row.push(fmt_metric(s.map(|p| p.micro.macro_f1)));
        }
        self.rows.push(row);
    }

    /// First column left-aligned, the rest right-aligned, two spaces apart.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| -> String {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let esc = |c: &String| {
            if c.contains([',', '"', '\n']) {
                format!("\"{}\"", c.replace('"', "\"\""))
            } else {
                c.clone()
            }
        };
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            out.push_str(&row.iter().map(esc).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}
