use std::path::Path;

use super::features::{load_features, save_features};
use super::labels::{load_labels, save_labels};
use super::synth::SynthSequence;
use super::train::TrainSample;
use crate::binio::write_file;
use crate::segments::write_segments;
use crate::{Error, Result};

/// Writes `{name}.feat`, `{name}.labels` and `{name}.segments` for each
/// sequence, named `seq_000`, `seq_001`, ...
pub fn write_dataset(dir: &Path, seqs: &[SynthSequence]) -> Result<()> {
    for (i, s) in seqs.iter().enumerate() {
        let stem = format!("seq_{i:03}");
        save_features(&s.features, &dir.join(format!("{stem}.feat")))?;
        save_labels(&s.labels, &dir.join(format!("{stem}.labels")))?;
        write_file(
            &dir.join(format!("{stem}.segments")),
            write_segments(s.segments.items()).as_bytes(),
        )?;
    }
    Ok(())
}

/// Loads every `*.feat` in `dir` with its `.labels` (or `.segments`)
/// sibling, sorted by name.
pub fn load_dataset(dir: &Path) -> Result<Vec<TrainSample>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "feat") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_owned());
            }
        }
    }
    if stems.is_empty() {
        return Err(Error::invalid(
            "load_dataset",
            format!("no .feat files in {}", dir.display()),
        ));
    }
    stems.sort();
    stems
        .into_iter()
        .map(|stem| {
            let features = load_features(&dir.join(format!("{stem}.feat")))?;
            let lab = dir.join(format!("{stem}.labels"));
            let labels = if lab.exists() {
                load_labels(&lab)?
            } else {
                load_labels(&dir.join(format!("{stem}.segments")))?
            };
            if labels.len() != features.rows() {
                return Err(Error::invalid(
                    "load_dataset",
                    format!(
                        "{stem}: {} labels for {} frames",
                        labels.len(),
                        features.rows()
                    ),
                ));
            }
            Ok(TrainSample {
                name: stem,
                features,
                labels: labels.into_inner(),
            })
        })
        .collect()
}
