use super::EpisodeTrace;
use crate::error::{Error, Result};

const MIN_OCCURRENCES: usize = 10;

/// Mean latent code of one problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemCode {
    pub problem_id: u8,
    /// Mean `x_o` over every retained step of every occurrence.
    pub mean: Vec<f64>,
    /// Mean distance of per-occurrence means to `mean`.
    pub dispersion: f64,
    pub occurrences: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentCodeSummary {
    /// Sorted by problem id.
    pub problems: Vec<ProblemCode>,
}

impl LatentCodeSummary {
    pub fn code(&self, problem_id: u8) -> Option<&ProblemCode> {
        self.problems.iter().find(|p| p.problem_id == problem_id)
    }

    /// Euclidean distance between two problems' mean codes.
    pub fn distance(&self, a: u8, b: u8) -> Option<f64> {
        Some(euclidean(&self.code(a)?.mean, &self.code(b)?.mean))
    }

    /// Smallest distance between any two problem codes.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, p) in self.problems.iter().enumerate() {
            for q in &self.problems[i + 1..] {
                best = best.min(euclidean(&p.mean, &q.mean));
            }
        }
        best
    }

    pub fn max_dispersion(&self) -> f64 {
        self.problems.iter().map(|p| p.dispersion).fold(0.0, f64::max)
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Collects `x_o` over each complete event (between two switches), skipping
/// the steps predicting its first two symbols and the first step of the
/// next switch's anticipation window.
pub fn extract_latent_codes(traces: &[EpisodeTrace]) -> Result<LatentCodeSummary> {
    // Sums are taken relative to a reference code so that a constant code
    // averages to exactly itself.
    struct Acc {
        problem_id: u8,
        reference: Vec<f64>,
        sum: Vec<f64>,
        steps: usize,
        means: Vec<Vec<f64>>,
    }
    let mut by_problem: Vec<Acc> = Vec::new();
    for tr in traces {
        for pair in tr.switch_times.windows(2) {
            let (s, next) = (pair[0], pair[1]);
            let rows = (s + 1)..(next - 2).min(tr.steps.len());
            if rows.is_empty() {
                continue;
            }
            let pid = tr.problem_id[s];
            let dim = tr.steps[rows.start].x_o.len();
            let slot = match by_problem.iter().position(|a| a.problem_id == pid) {
                Some(i) => i,
                None => {
                    by_problem.push(Acc {
                        problem_id: pid,
                        reference: tr.steps[rows.start].x_o.clone(),
                        sum: vec![0.0; dim],
                        steps: 0,
                        means: Vec::new(),
                    });
                    by_problem.len() - 1
                }
            };
            let acc = &mut by_problem[slot];
            let mut occ = vec![0.0; dim];
            for r in rows.clone() {
                for (k, v) in tr.steps[r].x_o.iter().enumerate() {
                    let d = v - acc.reference[k];
                    occ[k] += d;
                    acc.sum[k] += d;
                }
            }
            for (m, r) in occ.iter_mut().zip(&acc.reference) {
                *m = r + *m / rows.len() as f64;
            }
            acc.steps += rows.len();
            acc.means.push(occ);
        }
    }
    by_problem.sort_by_key(|a| a.problem_id);

    let mut problems = Vec::new();
    for acc in by_problem {
        if acc.means.len() < MIN_OCCURRENCES {
            return Err(Error::TooFew {
                what: "event occurrences per problem",
                got: acc.means.len(),
                need: MIN_OCCURRENCES,
            });
        }
        let center: Vec<f64> = acc
            .sum
            .iter()
            .zip(&acc.reference)
            .map(|(v, r)| r + v / acc.steps as f64)
            .collect();
        let dispersion = acc.means.iter().map(|m| euclidean(m, &center)).sum::<f64>() / acc.means.len() as f64;
        problems.push(ProblemCode {
            problem_id: acc.problem_id,
            mean: center,
            dispersion,
            occurrences: acc.means.len(),
        });
    }
    if problems.is_empty() {
        return Err(Error::TooFew {
            what: "event occurrences per problem",
            got: 0,
            need: MIN_OCCURRENCES,
        });
    }
    Ok(LatentCodeSummary { problems })
}

/// Whether the Problem 3 code sits between the Problem 1 and Problem 2
/// codes, nearer to Problem 1.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositionalCheck {
    pub closer_to_first: bool,
    /// Parameter of the orthogonal projection of `c3` onto the line through
    /// `c1` and `c2` (0 at `c1`, 1 at `c2`); `None` when `c1 == c2`.
    pub projection: Option<f64>,
}

impl CompositionalCheck {
    pub fn degenerate(&self) -> bool {
        self.projection.is_none()
    }

    pub fn passed(&self) -> bool {
        self.closer_to_first && self.projection.is_some_and(|l| l > 0.0 && l < 1.0)
    }
}

pub fn compositional_check(c1: &[f64], c2: &[f64], c3: &[f64]) -> CompositionalCheck {
    let d: Vec<f64> = c2.iter().zip(c1).map(|(b, a)| b - a).collect();
    let norm2: f64 = d.iter().map(|x| x * x).sum();
    let projection = (norm2 > 0.0).then(|| c3.iter().zip(c1).zip(&d).map(|((z, a), e)| (z - a) * e).sum::<f64>() / norm2);
    CompositionalCheck {
        closer_to_first: euclidean(c3, c1) < euclidean(c3, c2),
        projection,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositionalReport {
    /// One entry per summary; `None` when it lacks one of problems 1–3.
    pub checks: Vec<Option<CompositionalCheck>>,
    pub passed: usize,
    /// Runs left out because `c1 == c2`.
    pub degenerate: usize,
}

pub fn compositional_analysis(summaries: &[LatentCodeSummary]) -> CompositionalReport {
    let checks: Vec<Option<CompositionalCheck>> = summaries
        .iter()
        .map(|s| Some(compositional_check(&s.code(1)?.mean, &s.code(2)?.mean, &s.code(3)?.mean)))
        .collect();
    CompositionalReport {
        passed: checks.iter().flatten().filter(|c| c.passed()).count(),
        degenerate: checks.iter().flatten().filter(|c| c.degenerate()).count(),
        checks,
    }
}
