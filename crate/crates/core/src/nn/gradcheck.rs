use std::fmt;

use super::ParamBlocks;

/// Smallest denominator [`grad_check`] ever uses in [`relative_error`].
const ABS_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

#[derive(Clone, Debug)]
pub struct BlockReport {
    pub name: String,
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_relative_error)
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            writeln!(
                f,
                "{:<32} max_rel_err={:.3e} at [{}] (analytic {:.6e}, numeric {:.6e})",
                b.name, b.max_relative_error, b.worst_index, b.analytic, b.numeric
            )?;
        }
        write!(
            f,
            "max relative error {:.3e} vs tolerance {:.1e}: {}",
            self.max_relative_error(),
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// Compares `analytic` (same layout as `params`) against central differences
/// of `loss` with step `h`, entry by entry.
///
/// Central differences carry a roundoff error of roughly `4·ε·|L|/h`. Entries
/// whose gradient is below `roundoff / tolerance` are therefore compared
/// against that floor instead of their own magnitude.
pub fn grad_check<P, F>(params: &P, analytic: &P, loss: F, h: f64, tolerance: f64) -> GradCheckReport
where
    P: ParamBlocks + Clone,
    F: Fn(&P) -> f64,
{
    let mut probe = params.clone();
    let analytic_blocks: Vec<Vec<f64>> = analytic.blocks().into_iter().map(|(_, b)| b.to_vec()).collect();
    let names: Vec<String> = params.blocks().into_iter().map(|(n, _)| n).collect();
    let mut blocks = Vec::with_capacity(names.len());
    let roundoff = 4.0 * f64::EPSILON * loss(params).abs().max(1.0) / h;
    let floor = ABS_FLOOR.max(roundoff / tolerance);

    for (bi, name) in names.iter().enumerate() {
        let len = analytic_blocks[bi].len();
        let mut worst = BlockReport {
            name: name.clone(),
            max_relative_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..len {
            let orig = nth_block(&mut probe, bi)[i];
            nth_block(&mut probe, bi)[i] = orig + h;
            let up = loss(&probe);
            nth_block(&mut probe, bi)[i] = orig - h;
            let down = loss(&probe);
            nth_block(&mut probe, bi)[i] = orig;

            let numeric = (up - down) / (2.0 * h);
            let a = analytic_blocks[bi][i];
            let err = relative_error(a, numeric, floor);
            if err > worst.max_relative_error || !err.is_finite() {
                worst = BlockReport {
                    name: name.clone(),
                    max_relative_error: err,
                    worst_index: i,
                    analytic: a,
                    numeric,
                };
            }
        }
        blocks.push(worst);
    }

    let passed = blocks.iter().all(|b| b.max_relative_error <= tolerance);
    GradCheckReport {
        blocks,
        tolerance,
        passed,
    }
}

fn nth_block<P: ParamBlocks>(p: &mut P, i: usize) -> &mut [f64] {
    p.blocks_mut().swap_remove(i).1
}
