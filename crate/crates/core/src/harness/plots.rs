//! Whitespace-separated data and gnuplot stubs for speed profiles,
//! speed-coloured trajectories and slip-angle box plots.

use crate::csvio::{fmt_sig, Header};
use crate::error::{Error, Result};
use crate::sim::EpisodeRecord;

pub const SPEED_PROFILE_HEADER: &str = "# s_m v_mps";
pub const TRAJECTORY_HEADER: &str = "# x_m y_m v_mps";
pub const SLIP_BOX_HEADER: &str = "# index label n min_deg q1_deg median_deg q3_deg max_deg";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub beta: f64,
    /// Distance covered since the start of the run (m).
    pub s: f64,
}

/// The per-control-step columns the plots need from one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub label: String,
    pub rows: Vec<TraceRow>,
}

fn clean_label(label: &str) -> String {
    let l: String = label.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    if l.is_empty() {
        "run".into()
    } else {
        l
    }
}

impl Trace {
    pub fn from_record(label: &str, r: &EpisodeRecord) -> Self {
        Self {
            label: clean_label(label),
            rows: r
                .steps
                .iter()
                .map(|s| TraceRow {
                    t: s.t,
                    x: s.pose.x,
                    y: s.pose.y,
                    v: s.v,
                    beta: s.beta,
                    s: s.progress,
                })
                .collect(),
        }
    }

    /// Reads an episode record CSV; `#` lines are skipped.
    pub fn parse(label: &str, text: &str, context: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (_, head) = lines.next().ok_or_else(|| Error::schema(context, 1, "empty record"))?;
        let header = Header::parse(head);
        let col = |names: &[&str]| header.require(names, context);
        let idx = [
            col(&["t_s"])?,
            col(&["x_m"])?,
            col(&["y_m"])?,
            col(&["v_mps"])?,
            col(&["beta_rad"])?,
            col(&["progress_m"])?,
        ];
        let rows = lines
            .map(|(i, line)| {
                let f: Vec<&str> = line.split(',').map(str::trim).collect();
                if f.len() != header.len() {
                    return Err(Error::schema(context, i + 1, format!("expected {} fields", header.len())));
                }
                let v: Vec<f64> = idx
                    .iter()
                    .map(|&k| {
                        f[k].parse::<f64>()
                            .map_err(|_| Error::schema(context, i + 1, format!("non-numeric field `{}`", f[k])))
                    })
                    .collect::<Result<_>>()?;
                Ok(TraceRow {
                    t: v[0],
                    x: v[1],
                    y: v[2],
                    v: v[3],
                    beta: v[4],
                    s: v[5],
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            label: clean_label(label),
            rows,
        })
    }
}

/// Linear interpolation between closest ranks of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxStats {
    pub label: String,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Slip-angle magnitude (degrees) summarised per label, in order of first
/// appearance.
pub fn slip_box(traces: &[Trace]) -> Vec<BoxStats> {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for t in traces {
        let vals = t.rows.iter().map(|r| r.beta.abs().to_degrees());
        match groups.iter_mut().find(|(l, _)| *l == t.label) {
            Some((_, v)) => v.extend(vals),
            None => groups.push((t.label.clone(), vals.collect())),
        }
    }
    groups
        .into_iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(label, mut v)| {
            v.sort_by(f64::total_cmp);
            BoxStats {
                n: v.len(),
                min: v[0],
                q1: percentile(&v, 0.25),
                median: percentile(&v, 0.5),
                q3: percentile(&v, 0.75),
                max: v[v.len() - 1],
                label,
            }
        })
        .collect()
}

fn blocks(traces: &[Trace], header: &str, row: impl Fn(&TraceRow) -> String) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for (i, t) in traces.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&format!("# run {}\n", t.label));
        for r in &t.rows {
            out.push_str(&row(r));
            out.push('\n');
        }
    }
    out
}

pub fn speed_profile_data(traces: &[Trace]) -> String {
    blocks(traces, SPEED_PROFILE_HEADER, |r| format!("{} {}", fmt_sig(r.s, 9), fmt_sig(r.v, 9)))
}

pub fn trajectory_data(traces: &[Trace]) -> String {
    blocks(traces, TRAJECTORY_HEADER, |r| {
        format!("{} {} {}", fmt_sig(r.x, 9), fmt_sig(r.y, 9), fmt_sig(r.v, 9))
    })
}

pub fn slip_box_data(stats: &[BoxStats]) -> String {
    let mut out = String::from(SLIP_BOX_HEADER);
    out.push('\n');
    for (i, b) in stats.iter().enumerate() {
        out.push_str(&format!(
            "{i} {} {} {} {} {} {} {}\n",
            b.label,
            b.n,
            fmt_sig(b.min, 9),
            fmt_sig(b.q1, 9),
            fmt_sig(b.median, 9),
            fmt_sig(b.q3, 9),
            fmt_sig(b.max, 9)
        ));
    }
    out
}

const SPEED_PROFILE_GP: &str = "set xlabel 's [m]'
set ylabel 'v [m/s]'
plot 'speed_profile.dat' using 1:2 with lines notitle
";

const TRAJECTORY_GP: &str = "set size ratio -1
set xlabel 'x [m]'
set ylabel 'y [m]'
set cblabel 'v [m/s]'
plot 'trajectory.dat' using 1:2:3 with lines palette notitle
";

const SLIP_BOX_GP: &str = "set ylabel '|slip angle| [deg]'
set boxwidth 0.5
set style fill empty
plot 'slip_box.dat' using 1:5:4:8:7:xticlabels(2) with candlesticks whiskerbars notitle, \\
     '' using 1:6:6:6:6 with candlesticks lw 2 notitle
";

/// File name and content of every plot artifact for `traces`.
pub fn plot_files(traces: &[Trace]) -> Vec<(&'static str, String)> {
    vec![
        ("speed_profile.dat", speed_profile_data(traces)),
        ("speed_profile.gp", SPEED_PROFILE_GP.to_string()),
        ("trajectory.dat", trajectory_data(traces)),
        ("trajectory.gp", TRAJECTORY_GP.to_string()),
        ("slip_box.dat", slip_box_data(&slip_box(traces))),
        ("slip_box.gp", SLIP_BOX_GP.to_string()),
    ]
}
