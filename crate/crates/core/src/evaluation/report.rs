use std::io::{self, Write};

use super::{BoundaryProfile, EpisodeTrace, GateStats, LatentCodeSummary};

/// `offset,<label>...` with one error column per labelled profile.
pub fn write_profile_csv<W: Write>(mut w: W, profiles: &[(&str, &BoundaryProfile)]) -> io::Result<()> {
    write!(w, "offset")?;
    for (label, _) in profiles {
        write!(w, ",{label}")?;
    }
    writeln!(w)?;
    let Some((_, first)) = profiles.first() else {
        return Ok(());
    };
    for (i, offset) in first.offsets.iter().enumerate() {
        write!(w, "{offset}")?;
        for (_, p) in profiles {
            write!(w, ",{}", p.mean_error[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_gates_csv<W: Write>(mut w: W, stats: &[(&str, &GateStats)]) -> io::Result<()> {
    writeln!(
        w,
        "run,switches,hits,hit_rate,openings_in_anticipation_window,events,median_interior_openings"
    )?;
    for (label, g) in stats {
        writeln!(
            w,
            "{label},{},{},{},{},{},{}",
            g.switches,
            g.hits,
            g.hit_rate,
            g.openings_in_anticipation_window,
            g.interior_openings.len(),
            g.median_interior_openings
        )?;
    }
    Ok(())
}

/// `run,problem_id,seed,c_0..,dispersion,occurrences`, one row per problem
/// per run. All summaries must share one code width.
pub fn write_codes_csv<W: Write>(mut w: W, runs: &[(&str, u64, &LatentCodeSummary)]) -> io::Result<()> {
    let dim = runs
        .iter()
        .flat_map(|(_, _, s)| s.problems.first())
        .map(|p| p.mean.len())
        .next()
        .unwrap_or(0);
    write!(w, "run,problem_id,seed")?;
    for k in 0..dim {
        write!(w, ",c_{k}")?;
    }
    writeln!(w, ",dispersion,occurrences")?;
    for (label, seed, summary) in runs {
        for p in &summary.problems {
            write!(w, "{label},{},{seed}", p.problem_id)?;
            for c in &p.mean {
                write!(w, ",{c}")?;
            }
            writeln!(w, ",{},{}", p.dispersion, p.occurrences)?;
        }
    }
    Ok(())
}

/// Per-step trace rows for every episode; `y_cf_error` is empty on steps
/// without a counterfactual pass.
pub fn write_trace_csv<W: Write>(mut w: W, traces: &[EpisodeTrace]) -> io::Result<()> {
    let dim = traces
        .iter()
        .flat_map(|t| t.steps.first())
        .map(|s| s.x_o.len())
        .next()
        .unwrap_or(0);
    write!(w, "episode,t,symbol,problem_id,switch_flag,error,surprise,x_zeta,gate_open")?;
    for k in 0..dim {
        write!(w, ",x_o_{k}")?;
    }
    writeln!(w, ",y_cf_error")?;
    for (e, tr) in traces.iter().enumerate() {
        for s in &tr.steps {
            write!(
                w,
                "{e},{},{},{},{},{},{},{},{}",
                s.t,
                s.symbol,
                tr.problem_id[s.t],
                tr.switch_flag[s.t] as u8,
                s.error,
                s.surprise,
                s.x_zeta,
                s.gate_open as u8
            )?;
            for v in &s.x_o {
                write!(w, ",{v}")?;
            }
            match s.y_cf_error() {
                Some(v) => writeln!(w, ",{v}")?,
                None => writeln!(w, ",")?,
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::profile::tests::synthetic;
    use super::super::{boundary_profile, gate_stats};
    use super::*;

    #[test]
    fn profile_csv_layout() {
        let switches: Vec<usize> = (1..=30).map(|i| i * 15).collect();
        let p = boundary_profile(&[synthetic(switches, vec![0.5; 470])]).unwrap();
        let mut out = Vec::new();
        write_profile_csv(&mut out, &[("a", &p), ("closed", &p)]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "offset,a,closed");
        assert_eq!(lines.len(), 12);
        assert_eq!(lines[1], "-5,0.5,0.5");
    }

    #[test]
    fn trace_csv_has_one_row_per_step() {
        let mut tr = synthetic(vec![5], vec![0.25; 9]);
        tr.steps[3].y_cf = Some(vec![1.0, 0.0, 0.0]);
        let mut out = Vec::new();
        write_trace_csv(&mut out, &[tr]).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 10);
        assert!(lines[0].ends_with("x_o_3,y_cf_error"));
        assert!(lines[1].ends_with(','));
        assert!(!lines[4].ends_with(','));
        assert_eq!(lines[6].split(',').nth(4), Some("1"));
        let g = gate_stats(&[]);
        let mut out = Vec::new();
        write_gates_csv(&mut out, &[("c", &g)]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 2);
    }
}
