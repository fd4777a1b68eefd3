//! Manifests, key-value reports and plot-ready column files.

use std::fmt::Display;
use std::io::{self, Write};

use isaacs_core::ValueGrid;

use crate::{CliError, Command, RunConfig, TOOL_VERSION};

/// The resolved config followed by a `[manifest]` table. Loading the result
/// as a config reproduces the run.
pub fn manifest(command: Command, cfg: &RunConfig) -> Result<String, CliError> {
    let mut text = toml::to_string(cfg).map_err(|e| CliError::Internal(format!("manifest serialization: {e}")))?;
    if !text.ends_with('\n') {
        text.push('\n');
    }
    text.push_str("\n[manifest]\n");
    text.push_str(&format!("command = \"{}\"\n", command.name()));
    text.push_str(&format!("tool_version = \"{TOOL_VERSION}\"\n"));
    if let Some(seed) = cfg.mc.seed.filter(|_| command.stochastic()) {
        text.push_str(&format!("seed = {seed}\n"));
    }
    Ok(text)
}

/// Ordered `key=value` lines.
#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<String>,
}

impl Report {
    pub fn new(command: Command) -> Self {
        let mut r = Report::default();
        r.put("command", command.name());
        r
    }

    pub fn put(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.lines.push(format!("{key}={value}"));
        self
    }

    pub fn extend_raw(&mut self, text: &str) {
        self.lines.extend(text.lines().map(str::to_string));
    }

    pub fn render(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

/// Whitespace-separated columns of slice `k` with one `#` header line:
/// `x u` in 1-D, `x1 x2 u` in 2-D (node order).
pub fn write_plot_slice<W: Write>(vg: &ValueGrid, k: usize, mut w: W) -> io::Result<()> {
    let header = if vg.grid.dim() == 1 { "# x u" } else { "# x1 x2 u" };
    writeln!(w, "{header}")?;
    for (i, v) in vg.values[k].iter().enumerate() {
        for c in vg.grid.coords(i) {
            write!(w, "{c:.16e} ")?;
        }
        writeln!(w, "{v:.16e}")?;
    }
    Ok(())
}

/// Two whitespace-separated columns under a `# <a> <b>` header.
pub fn write_plot_columns<W: Write>(names: (&str, &str), rows: &[(f64, f64)], mut w: W) -> io::Result<()> {
    writeln!(w, "# {} {}", names.0, names.1)?;
    for (a, b) in rows {
        writeln!(w, "{a:.16e} {b:.16e}")?;
    }
    Ok(())
}
