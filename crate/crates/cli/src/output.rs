//! CSV emission: a `#` comment line echoing the resolved config, a header, then rows.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, SCHEMA_VERSION};

pub struct CsvOutput {
    writer: csv::Writer<Box<dyn Write>>,
}

impl CsvOutput {
    /// Opens `path` (stdout when `None`) and writes the comment line and header.
    pub fn create(path: Option<&Path>, config: &ExperimentConfig, header: &[&str]) -> io::Result<Self> {
        let mut sink: Box<dyn Write> = match path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                Box::new(BufWriter::new(File::create(p)?))
            }
            None => Box::new(BufWriter::new(io::stdout())),
        };
        writeln!(sink, "{}", comment_line(config))?;
        let mut writer = csv::WriterBuilder::new().from_writer(sink);
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> io::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(io::Error::from)
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.writer.flush()
    }
}

/// `# treeslice <command> schema=<v> config=<json>`; the JSON is a single line.
pub fn comment_line(config: &ExperimentConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    format!("# treeslice {} schema={SCHEMA_VERSION} config={json}", config.command.name())
}

/// `run.csv` → `run.config.toml`.
pub fn echo_path(output: &Path) -> PathBuf {
    output.with_extension("config.toml")
}

pub fn write_config_echo(output: &Path, config: &ExperimentConfig) -> io::Result<PathBuf> {
    let path = echo_path(output);
    let text = toml::to_string(config).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Shortest round-trip decimal form of `x`.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Command;

    fn cfg() -> ExperimentConfig {
        crate::config::parse("command = \"selftest\"\nseed = 2\n", Path::new("a.toml"))
            .unwrap()
            .config
    }

    #[test]
    fn comment_then_header_then_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/out.csv");
        let mut out = CsvOutput::create(Some(&path), &cfg(), &["a", "b"]).unwrap();
        out.row(["1", "x,y"]).unwrap();
        out.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# treeslice selftest schema=1 config={"));
        assert_eq!(lines[1], "a,b");
        assert_eq!(lines[2], "1,\"x,y\"");
    }

    #[test]
    fn echo_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r.csv");
        let p = write_config_echo(&out, &cfg()).unwrap();
        assert_eq!(p, dir.path().join("r.config.toml"));
        let back = crate::config::load(&p).unwrap().config;
        assert_eq!(back.command, Command::Selftest);
        assert_eq!(back.seed, 2);
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0, 1e-300, 0.1 + 0.2, -3.5e12] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
