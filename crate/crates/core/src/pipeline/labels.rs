use std::path::Path;

use crate::binio::{read_file, write_file};
use crate::segments::{parse_segments, segments_to_frames, LabelSequence};
use crate::{Error, Result};

/// Reads labels in either frame format (one class id per line) or segment
/// format (`start,end,class` lines). The first data line decides.
pub fn parse_labels(text: &str, origin: &str) -> Result<LabelSequence> {
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'));
    match first {
        None => Err(Error::EmptyInput { op: "load_labels" }),
        Some(l) if l.contains(',') => {
            let segs = parse_segments(text, origin)?;
            let t = segs.last().map_or(0, |s| s.end + 1);
            segments_to_frames(&segs, t)
        }
        Some(_) => {
            let mut labels = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let v = line.parse::<usize>().map_err(|e| Error::Parse {
                    path: origin.to_owned(),
                    line: i + 1,
                    reason: format!("{line:?}: {e}"),
                })?;
                labels.push(v);
            }
            Ok(LabelSequence::new(labels))
        }
    }
}

pub fn load_labels(path: &Path) -> Result<LabelSequence> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        reason: e.to_string(),
    })?;
    parse_labels(&text, &path.display().to_string())
}

/// Frame format, one id per line.
pub fn format_labels(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

pub fn save_labels(labels: &[usize], path: &Path) -> Result<()> {
    write_file(path, format_labels(labels).as_bytes())
}
