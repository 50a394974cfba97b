//! Plain-text distribution and histogram files.
//!
//! Both formats are UTF-8 with one value per line. Lines whose first
//! non-blank character is `#` and blank lines are ignored.

use std::fs;
use std::path::Path;

use super::{DiscreteDistribution, SampleHistogram};
use crate::{Error, Result};

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, body: String) -> Result<()> {
    fs::write(path, body).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_distribution(text: &str, path: &Path) -> Result<DiscreteDistribution> {
    let mut probs = Vec::new();
    for (line, value) in data_lines(text) {
        let p: f64 = value.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("`{value}` is not a decimal"),
        })?;
        probs.push(p);
    }
    DiscreteDistribution::new(probs)
}

pub fn parse_histogram(text: &str, path: &Path) -> Result<SampleHistogram> {
    let mut counts = Vec::new();
    for (line, value) in data_lines(text) {
        let c: u64 = value.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("`{value}` is not a non-negative integer"),
        })?;
        counts.push(c);
    }
    SampleHistogram::from_counts(counts)
}

pub fn read_distribution(path: impl AsRef<Path>) -> Result<DiscreteDistribution> {
    let path = path.as_ref();
    parse_distribution(&read(path)?, path)
}

pub fn read_histogram(path: impl AsRef<Path>) -> Result<SampleHistogram> {
    let path = path.as_ref();
    parse_histogram(&read(path)?, path)
}

/// Writes one probability per line using the shortest representation that
/// parses back to the same `f64`.
pub fn write_distribution(path: impl AsRef<Path>, dist: &DiscreteDistribution) -> Result<()> {
    let body: String = dist.probs().iter().map(|p| format!("{p}\n")).collect();
    write(path.as_ref(), body)
}

pub fn write_histogram(path: impl AsRef<Path>, hist: &SampleHistogram) -> Result<()> {
    let body: String = hist.counts().iter().map(|c| format!("{c}\n")).collect();
    write(path.as_ref(), body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::make_zipf;

    #[test]
    fn parses_comments_and_blanks() {
        let text = "# header\n0.25\n\n  0.75 \n# trailer\n";
        let d = parse_distribution(text, Path::new("x")).unwrap();
        assert_eq!(d.probs(), &[0.25, 0.75]);
        let h = parse_histogram("#c\n3\n0\n5\n", Path::new("h")).unwrap();
        assert_eq!(h.counts(), &[3, 0, 5]);
        assert_eq!(h.total(), 8);
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_histogram("1\n2\n-3\n", Path::new("h.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(parse_distribution("0.5\n0.4\n", Path::new("d")).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = make_zipf(17, 0.7).unwrap();
        let path = dir.path().join("p.txt");
        write_distribution(&path, &d).unwrap();
        assert_eq!(read_distribution(&path).unwrap(), d);

        let h = SampleHistogram::from_counts(vec![0, 4, 19]).unwrap();
        let hpath = dir.path().join("h.txt");
        write_histogram(&hpath, &h).unwrap();
        assert_eq!(read_histogram(&hpath).unwrap(), h);

        let missing = read_histogram(dir.path().join("nope"));
        assert!(matches!(missing, Err(Error::Io { .. })));
    }
}
