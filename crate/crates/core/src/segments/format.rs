use std::fmt::Write as _;

use super::Segment;
use crate::{Error, Result};

/// Parses `start,end,class_id` lines (inclusive frames). Blank lines and
/// `#` comments are skipped. `origin` names the source in errors.
pub fn parse_segments(text: &str, origin: &str) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(format!("expected start,end,class, got {line:?}")));
        }
        let nums = fields
            .iter()
            .map(|f| f.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(e.to_string()))?;
        if nums[0] > nums[1] {
            return Err(err(format!("start {} after end {}", nums[0], nums[1])));
        }
        out.push(Segment::new(nums[0], nums[1], nums[2]));
    }
    Ok(out)
}

pub fn write_segments(segments: &[Segment]) -> String {
    let mut s = String::from("# start,end,class_id\n");
    for seg in segments {
        let _ = writeln!(s, "{},{},{}", seg.start, seg.end, seg.class);
    }
    s
}
