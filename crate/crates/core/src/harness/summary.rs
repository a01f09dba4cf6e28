use crate::csvio::{fmt_sig, Header};
use crate::error::{Error, Result};
use crate::sim::{EpisodeRecord, Terminal};

pub const DETAIL_HEADER: &str = "lap,start_s_m,terminal,lap_time_s,progress_pct,flagged_steps";
pub const SUMMARY_HEADER: &str = "planner,map,laps,completed,mean_lap_time_s,completion_pct,mean_progress_pct";

/// Agreement required between a stored summary and the one recomputed from
/// its detail rows; both sides went through nine significant digits.
const RECOMPUTE_RTOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct LapRow {
    pub lap: usize,
    pub start_s: f64,
    pub terminal: Terminal,
    pub lap_time: Option<f64>,
    pub progress_pct: f64,
    pub flagged_steps: usize,
}

impl LapRow {
    pub fn from_record(lap: usize, r: &EpisodeRecord) -> Self {
        Self {
            lap,
            start_s: r.start_s,
            terminal: r.terminal,
            lap_time: r.lap_time,
            progress_pct: 100.0 * r.progress_fraction(),
            flagged_steps: r.flagged_steps(),
        }
    }

    pub fn completed(&self) -> bool {
        self.terminal == Terminal::LapComplete
    }
}

/// Metrics of one planner on one map.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSummary {
    pub planner: String,
    pub map: String,
    pub laps: Vec<LapRow>,
    /// Mean over completed laps only; `None` when no lap completed.
    pub mean_lap_time: Option<f64>,
    pub completion_pct: f64,
    pub mean_progress_pct: f64,
}

impl BenchmarkSummary {
    pub fn from_laps(planner: impl Into<String>, map: impl Into<String>, laps: Vec<LapRow>) -> Self {
        let times: Vec<f64> = laps.iter().filter(|l| l.completed()).filter_map(|l| l.lap_time).collect();
        let n = laps.len().max(1) as f64;
        Self {
            planner: planner.into(),
            map: map.into(),
            mean_lap_time: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
            completion_pct: 100.0 * laps.iter().filter(|l| l.completed()).count() as f64 / n,
            mean_progress_pct: laps.iter().map(|l| l.progress_pct).sum::<f64>() / n,
            laps,
        }
    }

    pub fn completed(&self) -> usize {
        self.laps.iter().filter(|l| l.completed()).count()
    }

    pub fn detail_csv(&self) -> String {
        let mut out = String::from(DETAIL_HEADER);
        out.push('\n');
        for l in &self.laps {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                l.lap,
                fmt_sig(l.start_s, 9),
                l.terminal,
                l.lap_time.map(|t| fmt_sig(t, 9)).unwrap_or_default(),
                fmt_sig(l.progress_pct, 9),
                l.flagged_steps
            ));
        }
        out
    }

    pub fn summary_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.planner,
            self.map,
            self.laps.len(),
            self.completed(),
            self.mean_lap_time.map(|t| fmt_sig(t, 9)).unwrap_or_default(),
            fmt_sig(self.completion_pct, 9),
            fmt_sig(self.mean_progress_pct, 9)
        )
    }

    pub fn summary_csv(&self) -> String {
        format!("{SUMMARY_HEADER}\n{}\n", self.summary_row())
    }

    pub fn parse_detail(text: &str, context: &str) -> Result<Vec<LapRow>> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == DETAIL_HEADER => {}
            _ => return Err(Error::schema(context, 1, "expected the lap detail header")),
        }
        lines
            .map(|(i, line)| {
                let n = i + 1;
                let f: Vec<&str> = line.split(',').map(str::trim).collect();
                if f.len() != 6 {
                    return Err(Error::schema(context, n, format!("expected 6 fields, found {}", f.len())));
                }
                let num = |s: &str| -> Result<f64> {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::schema(context, n, format!("non-numeric field `{s}`")))
                };
                let int = |s: &str| -> Result<usize> {
                    s.parse().map_err(|_| Error::schema(context, n, format!("bad integer `{s}`")))
                };
                Ok(LapRow {
                    lap: int(f[0])?,
                    start_s: num(f[1])?,
                    terminal: f[2].parse().map_err(|_| Error::schema(context, n, format!("bad terminal `{}`", f[2])))?,
                    lap_time: if f[3].is_empty() { None } else { Some(num(f[3])?) },
                    progress_pct: num(f[4])?,
                    flagged_steps: int(f[5])?,
                })
            })
            .collect()
    }

    /// Reads a summary and its detail file, recomputing every summary value
    /// from the detail rows and failing when they disagree.
    pub fn load(summary_text: &str, detail_text: &str, context: &str) -> Result<Self> {
        let mut lines = summary_text.lines().filter(|l| !l.trim().is_empty());
        let header = Header::parse(lines.next().unwrap_or_default());
        if header.len() != 7 || lines.clone().count() != 1 {
            return Err(Error::schema(context, 1, "expected the summary header and one row"));
        }
        let row: Vec<&str> = lines.next().unwrap_or_default().split(',').map(str::trim).collect();
        if row.len() != 7 {
            return Err(Error::schema(context, 2, "expected 7 fields"));
        }
        let laps = Self::parse_detail(detail_text, context)?;
        let s = Self::from_laps(row[0], row[1], laps);
        let mismatch = |what: &str| Error::schema(context, 2, format!("{what} does not match the detail rows"));
        let close = |stored: &str, value: f64| -> bool {
            stored
                .parse::<f64>()
                .map(|v| (v - value).abs() <= RECOMPUTE_RTOL * value.abs().max(1.0))
                .unwrap_or(false)
        };
        if row[2].parse::<usize>().ok() != Some(s.laps.len()) {
            return Err(mismatch("lap count"));
        }
        if row[3].parse::<usize>().ok() != Some(s.completed()) {
            return Err(mismatch("completed count"));
        }
        let lap_ok = match s.mean_lap_time {
            None => row[4].is_empty(),
            Some(t) => close(row[4], t),
        };
        if !lap_ok {
            return Err(mismatch("mean lap time"));
        }
        if !close(row[5], s.completion_pct) {
            return Err(mismatch("completion rate"));
        }
        if !close(row[6], s.mean_progress_pct) {
            return Err(mismatch("mean progress"));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap(i: usize, done: bool, t: f64, p: f64) -> LapRow {
        LapRow {
            lap: i,
            start_s: i as f64,
            terminal: if done { Terminal::LapComplete } else { Terminal::Crash },
            lap_time: done.then_some(t),
            progress_pct: p,
            flagged_steps: 0,
        }
    }

    #[test]
    fn eight_of_ten_complete() {
        let laps = (0..10).map(|i| lap(i, i < 8, 10.0 + i as f64, if i < 8 { 100.0 } else { 40.0 })).collect();
        let s = BenchmarkSummary::from_laps("pp", "oval", laps);
        assert_eq!(s.completion_pct, 80.0);
        assert_eq!(s.mean_lap_time, Some(13.5));
        assert_eq!(s.mean_progress_pct, 88.0);
    }

    #[test]
    fn all_crash_halfway() {
        let laps = (0..4).map(|i| lap(i, false, 0.0, 50.0)).collect();
        let s = BenchmarkSummary::from_laps("ftg", "oval", laps);
        assert_eq!((s.mean_lap_time, s.completion_pct, s.mean_progress_pct), (None, 0.0, 50.0));
        assert_eq!(s.summary_row(), "ftg,oval,4,0,,0,50.0000000");
    }

    #[test]
    fn load_recomputes_and_catches_edits() {
        let laps = (0..5).map(|i| lap(i, i % 2 == 0, 11.0 + 0.1234567891 * i as f64, 70.0 + i as f64)).collect();
        let s = BenchmarkSummary::from_laps("mpcc", "stadium", laps);
        let back = BenchmarkSummary::load(&s.summary_csv(), &s.detail_csv(), "t").unwrap();
        assert_eq!(back.completed(), 3);
        let edited = s.summary_csv().replace(",60.0000000,", ",70.0000000,");
        assert_ne!(edited, s.summary_csv());
        assert!(BenchmarkSummary::load(&edited, &s.detail_csv(), "t").is_err());
    }
}
