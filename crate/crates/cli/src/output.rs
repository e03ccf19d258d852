//! CSV and JSON emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Fifteen significant digits; `NaN` for missing values.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.14e}")
    }
}

/// Where a command writes. A single-file command given `-o something.csv`
/// writes exactly that file; otherwise `-o` names a directory.
#[derive(Debug, Clone)]
pub struct Target {
    dir: PathBuf,
    file: Option<PathBuf>,
}

impl Target {
    pub fn new(out: Option<&Path>, single_ext: Option<&str>) -> Result<Self, CliError> {
        let out = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        let is_file = single_ext.is_some_and(|ext| out.extension().is_some_and(|e| e == ext));
        let (dir, file) = if is_file {
            let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
            (dir, Some(out))
        } else {
            (out, None)
        };
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(&dir)
                .map_err(|e| CliError::usage(format!("--out-dir {}: {e}", dir.display())))?;
        }
        Ok(Self { dir, file })
    }

    /// Path of the main output, `name` unless an explicit file was given.
    pub fn primary(&self, name: &str) -> PathBuf {
        self.file.clone().unwrap_or_else(|| self.dir.join(name))
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

/// CSV file whose first line echoes the resolved configuration.
pub struct CsvOut {
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, echo: &str, header: &[&str]) -> Result<Self, CliError> {
        let mut file = BufWriter::new(
            File::create(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?,
        );
        writeln!(file, "# config: {echo}")?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header)?;
        Ok(Self { inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::usage(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// `tau_int` as used in file names.
pub fn tag(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(num(0.0), "0");
        assert_eq!(num(f64::NAN), "NaN");
        assert_eq!(num(0.1), "1.00000000000000e-1");
        assert_eq!(num(-1.0 / 3.0).parse::<f64>().unwrap(), -0.333333333333333);
    }

    #[test]
    fn explicit_file_or_directory() {
        let tmp = std::env::temp_dir().join("almg-target-test");
        let t = Target::new(Some(&tmp.join("a/out.csv")), Some("csv")).unwrap();
        assert_eq!(t.primary("x.csv"), tmp.join("a/out.csv"));
        let t = Target::new(Some(&tmp.join("b")), Some("csv")).unwrap();
        assert_eq!(t.primary("x.csv"), tmp.join("b/x.csv"));
        let t = Target::new(Some(&tmp.join("c.csv")), None).unwrap();
        assert_eq!(t.primary("x.csv"), tmp.join("c.csv/x.csv"));
        std::fs::remove_dir_all(&tmp).ok();
    }
}
