use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::features::save_features;
use super::labels::save_labels;
use crate::binio::write_file;
use crate::network::{Model, ModelOutput};
use crate::segments::{
    detect_boundaries, frames_to_segments, refine_prediction, write_segments, LabelSequence,
};
use crate::seqcore::SeqTensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferOptions {
    pub refine: bool,
    /// Boundary peak threshold.
    pub theta: f64,
    /// Minimum spacing between detected boundaries, frames.
    pub min_distance: usize,
    /// Average probabilities and boundary scores over all stages instead of
    /// using the last one.
    pub average_stages: bool,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            refine: true,
            theta: 0.5,
            min_distance: 8,
            average_stages: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub output: ModelOutput,
    /// `[T × C]` probabilities the labels were read from.
    pub probabilities: SeqTensor,
    pub boundary_scores: Vec<f64>,
    /// Per-frame argmax.
    pub raw: LabelSequence,
    pub boundaries: Vec<usize>,
    pub refined: Option<LabelSequence>,
}

impl Inference {
    /// Refined labels when refinement ran, raw otherwise.
    pub fn final_labels(&self) -> &LabelSequence {
        self.refined.as_ref().unwrap_or(&self.raw)
    }

    /// Writes `{stem}.labels`, `{stem}.segments`, `{stem}.raw.labels`,
    /// `{stem}.boundaries`, `{stem}.scores` and `{stem}.probs` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        let path = |ext: &str| dir.join(format!("{stem}.{ext}"));
        let mut written = Vec::new();
        let labels = path("labels");
        save_labels(self.final_labels(), &labels)?;
        written.push(labels);
        let segs = path("segments");
        write_file(
            &segs,
            write_segments(frames_to_segments(self.final_labels())?.items()).as_bytes(),
        )?;
        written.push(segs);
        let raw = path("raw.labels");
        save_labels(&self.raw, &raw)?;
        written.push(raw);
        let b = path("boundaries");
        write_file(
            &b,
            self.boundaries
                .iter()
                .map(|v| format!("{v}\n"))
                .collect::<String>()
                .as_bytes(),
        )?;
        written.push(b);
        let s = path("scores");
        write_file(
            &s,
            self.boundary_scores
                .iter()
                .map(|v| format!("{v}\n"))
                .collect::<String>()
                .as_bytes(),
        )?;
        written.push(s);
        let p = path("probs");
        save_features(&self.probabilities, &p)?;
        written.push(p);
        Ok(written)
    }
}

/// Forward pass, argmax labels, boundary peaks and optional refinement.
pub fn infer(model: &Model, features: &SeqTensor, opts: &InferOptions) -> Result<Inference> {
    let d_in = model.config.d_in;
    if features.rank() != 2 || features.cols() != d_in {
        return Err(Error::shape(
            "infer",
            features.shape(),
            &[features.rows(), d_in],
        ));
    }
    if !(0.0..=1.0).contains(&opts.theta) {
        return Err(Error::invalid(
            "infer",
            format!("theta {} outside [0, 1]", opts.theta),
        ));
    }
    let output = model.predict(features)?;
    let (probabilities, boundary_scores) = if opts.average_stages {
        let n = output.stages.len() as f64;
        let mut p = SeqTensor::zeros(output.last().action_logits.shape());
        let mut b = vec![0.0; features.rows()];
        for st in &output.stages {
            p.data_mut()
                .iter_mut()
                .zip(st.probabilities().data())
                .for_each(|(a, v)| *a += v / n);
            b.iter_mut()
                .zip(st.boundary_scores.data())
                .for_each(|(a, v)| *a += v / n);
        }
        (p, b)
    } else {
        let last = output.last();
        (last.probabilities(), last.boundary_scores.data().to_vec())
    };
    let raw = LabelSequence::new(probabilities.argmax_rows());
    let boundaries = detect_boundaries(&boundary_scores, opts.theta, opts.min_distance);
    let refined = if opts.refine {
        Some(refine_prediction(&probabilities, &boundaries)?)
    } else {
        None
    };
    Ok(Inference {
        output,
        probabilities,
        boundary_scores,
        raw,
        boundaries,
        refined,
    })
}

/// Parses one boundary index per line.
pub fn parse_boundaries(text: &str, origin: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(line.parse::<usize>().map_err(|e| Error::Parse {
            path: origin.to_owned(),
            line: i + 1,
            reason: format!("{line:?}: {e}"),
        })?);
    }
    Ok(out)
}
