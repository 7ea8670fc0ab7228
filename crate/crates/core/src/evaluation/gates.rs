use super::EpisodeTrace;

/// Gate behaviour inside events and just before switches.
#[derive(Clone, Debug, PartialEq)]
pub struct GateStats {
    /// Openings per complete event (between two switches), excluding the
    /// two-step anticipation window that precedes the closing switch.
    pub interior_openings: Vec<usize>,
    pub median_interior_openings: f64,
    /// Openings on the two steps before a switch, summed over switches.
    pub openings_in_anticipation_window: usize,
    pub switches: usize,
    /// Switches with at least one opening in their anticipation window.
    pub hits: usize,
    pub hit_rate: f64,
}

/// The anticipation window of the switch at `s` is the pair of steps
/// predicting symbols `s - 1` and `s`.
pub fn gate_stats(traces: &[EpisodeTrace]) -> GateStats {
    let mut interior = Vec::new();
    let (mut window_openings, mut switches, mut hits) = (0, 0, 0);
    for tr in traces {
        let open = |r: usize| tr.steps.get(r).is_some_and(|s| s.gate_open);
        for &s in &tr.switch_times {
            if s < 2 || s > tr.steps.len() {
                continue;
            }
            switches += 1;
            let n = open(s - 2) as usize + open(s - 1) as usize;
            window_openings += n;
            hits += (n > 0) as usize;
        }
        for pair in tr.switch_times.windows(2) {
            let (start, end) = (pair[0], pair[1] - 2);
            interior.push((start..end.min(tr.steps.len())).filter(|&r| open(r)).count());
        }
    }
    GateStats {
        median_interior_openings: median(&interior),
        interior_openings: interior,
        openings_in_anticipation_window: window_openings,
        switches,
        hits,
        hit_rate: if switches == 0 { 0.0 } else { hits as f64 / switches as f64 },
    }
}

fn median(values: &[usize]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid] as f64
    } else {
        (v[mid - 1] + v[mid]) as f64 / 2.0
    }
}
