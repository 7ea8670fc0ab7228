use super::EpisodeTrace;
use crate::error::{Error, Result};

/// Profiles cover offsets `-MAX_OFFSET..=MAX_OFFSET` around each switch.
pub const MAX_OFFSET: i64 = 5;
const MIN_SWITCHES: usize = 30;

/// Prediction error aligned on switches. Offset `k` of the switch at `s`
/// is the step predicting symbol `s + k`, so offset 0 is the first symbol of
/// the new event.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryProfile {
    pub offsets: Vec<i64>,
    pub mean_error: Vec<f64>,
    /// Steps predicting a symbol at least two steps into an event. The
    /// first event of each episode is left out.
    pub intra_mean: f64,
    pub intra_max: f64,
    pub intra_steps: usize,
    /// Mean error at offsets 0 and +1 over `intra_mean`.
    pub spike_ratio: f64,
    pub switches: usize,
}

impl BoundaryProfile {
    pub fn at(&self, offset: i64) -> Option<f64> {
        self.offsets.iter().position(|&o| o == offset).map(|i| self.mean_error[i])
    }
}

pub fn boundary_profile(traces: &[EpisodeTrace]) -> Result<BoundaryProfile> {
    let width = (2 * MAX_OFFSET + 1) as usize;
    let mut sums = vec![0.0; width];
    let mut counts = vec![0usize; width];
    let mut spike = Vec::new();
    let mut intra = Vec::new();
    let mut switches = 0;

    for tr in traces {
        let rows = tr.steps.len() as i64;
        for &s in &tr.switch_times {
            switches += 1;
            for k in -MAX_OFFSET..=MAX_OFFSET {
                let r = s as i64 + k - 1;
                if (0..rows).contains(&r) {
                    let e = tr.steps[r as usize].error;
                    let i = (k + MAX_OFFSET) as usize;
                    sums[i] += e;
                    counts[i] += 1;
                    if k == 0 || k == 1 {
                        spike.push(e);
                    }
                }
            }
        }
        let mut next = 0;
        let mut last = None;
        for (r, step) in tr.steps.iter().enumerate() {
            let target = r + 1;
            while next < tr.switch_times.len() && tr.switch_times[next] <= target {
                last = Some(tr.switch_times[next]);
                next += 1;
            }
            if let Some(l) = last {
                if target - l >= 2 {
                    intra.push(step.error);
                }
            }
        }
    }

    if switches < MIN_SWITCHES {
        return Err(Error::TooFew {
            what: "switches",
            got: switches,
            need: MIN_SWITCHES,
        });
    }
    if intra.is_empty() || spike.is_empty() {
        return Err(Error::TooFew {
            what: "intra-event steps",
            got: intra.len(),
            need: 1,
        });
    }
    let intra_mean = shifted_mean(&intra, intra[0]);
    let spike_ratio = shifted_mean(&spike, intra[0]) / intra_mean;
    let intra_max = intra.iter().copied().fold(f64::MIN, f64::max);
    let mean_error = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    Ok(BoundaryProfile {
        offsets: (-MAX_OFFSET..=MAX_OFFSET).collect(),
        mean_error,
        intra_mean,
        intra_max,
        intra_steps: intra.len(),
        spike_ratio,
        switches,
    })
}

/// Mean accumulated relative to `reference`, so a constant series averages
/// to exactly its value.
fn shifted_mean(values: &[f64], reference: f64) -> f64 {
    reference + values.iter().map(|v| v - reference).sum::<f64>() / values.len() as f64
}
