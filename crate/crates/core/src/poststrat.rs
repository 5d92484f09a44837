//! Post-stratification of monthly aggregates to a fixed case mix.
//!
//! When the composition of cases changes over time, raw monthly outcomes
//! mix composition change with treatment change. Reweighting each month's
//! per-group aggregates to a fixed target mix removes the former, giving
//! an adjusted series the ordinary pipeline can analyze as-is. This is a
//! sensitivity check, not a replacement for the raw analysis.

use std::path::Path;

use crate::error::{Error, Result};
use crate::series::{Column, TimeSeriesData};

/// Whether group outcomes are means/proportions or raw counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    MeanOrProportion,
    Count,
}

/// Per-month, per-group aggregates on a complete time-by-group grid.
#[derive(Debug, Clone)]
pub struct GroupedMonthly {
    times: Vec<i64>,
    groups: Vec<String>,
    /// counts[time][group]
    counts: Vec<Vec<u64>>,
    /// outcomes[time][group]
    outcomes: Vec<Vec<f64>>,
    kind: OutcomeKind,
    month_anchor: Option<(i64, u32)>,
}

/// One input row: month, group label, case count, group outcome.
#[derive(Debug, Clone)]
pub struct GroupedRow {
    pub time: i64,
    pub group: String,
    pub count: u64,
    pub outcome: f64,
    pub month: Option<u32>,
}

impl GroupedMonthly {
    /// Assembles the grid from unordered rows. Every group must appear in
    /// every month exactly once; merge sparse groups upstream before
    /// loading.
    pub fn from_rows(rows: Vec<GroupedRow>, kind: OutcomeKind) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDesign);
        }
        let mut times: Vec<i64> = rows.iter().map(|r| r.time).collect();
        times.sort_unstable();
        times.dedup();
        for w in times.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(Error::NonConsecutiveTimes {
                    previous: w[0],
                    expected: w[0] + 1,
                    found: w[1],
                });
            }
        }
        let mut groups: Vec<String> = Vec::new();
        for r in &rows {
            if !groups.contains(&r.group) {
                groups.push(r.group.clone());
            }
        }

        let t_index = |t: i64| (t - times[0]) as usize;
        let g_index =
            |g: &str| groups.iter().position(|x| x == g).expect("collected above");
        let mut counts = vec![vec![0u64; groups.len()]; times.len()];
        let mut outcomes = vec![vec![f64::NAN; groups.len()]; times.len()];
        let mut month_anchor = None;
        for r in &rows {
            let (ti, gi) = (t_index(r.time), g_index(&r.group));
            if !outcomes[ti][gi].is_nan() {
                return Err(Error::DuplicateGroupRow {
                    group: r.group.clone(),
                    time: r.time,
                });
            }
            counts[ti][gi] = r.count;
            outcomes[ti][gi] = r.outcome;
            if let Some(m) = r.month {
                if !(1..=12).contains(&m) {
                    return Err(Error::BadMonth {
                        value: m as i64,
                        time: r.time,
                    });
                }
                if month_anchor.is_none() {
                    let offset = (r.time - times[0]).rem_euclid(12) as u32;
                    let m0 = ((m as i64 - 1 - offset as i64).rem_euclid(12) + 1) as u32;
                    month_anchor = Some((times[0], m0));
                }
            }
        }
        for (ti, row) in outcomes.iter().enumerate() {
            for (gi, v) in row.iter().enumerate() {
                if v.is_nan() {
                    return Err(Error::IncompleteGroupGrid {
                        group: groups[gi].clone(),
                        time: times[ti],
                    });
                }
            }
        }

        Ok(GroupedMonthly {
            times,
            groups,
            counts,
            outcomes,
            kind,
            month_anchor,
        })
    }

    /// Loads grouped aggregates from CSV with columns `t`, `group`, `n`,
    /// `y` and an optional `M` month column.
    pub fn load_csv(path: impl AsRef<Path>, kind: OutcomeKind) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path.as_ref())?;
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.into()))
        };
        let (ti, gi, ni, yi) = (col("t")?, col("group")?, col("n")?, col("y")?);
        let mi = headers.iter().position(|h| h == "M");

        let mut rows = Vec::new();
        for (row_no, record) in reader.records().enumerate() {
            let record = record?;
            let cell = |idx: usize| record.get(idx).unwrap_or("").to_string();
            let parse = |idx: usize| -> Result<f64> {
                cell(idx).parse::<f64>().map_err(|_| Error::NonNumericCell {
                    column: headers[idx].clone(),
                    row: row_no + 1,
                    value: cell(idx),
                })
            };
            let parse_int = |idx: usize| -> Result<i64> {
                cell(idx).parse::<i64>().map_err(|_| Error::NonNumericCell {
                    column: headers[idx].clone(),
                    row: row_no + 1,
                    value: cell(idx),
                })
            };
            rows.push(GroupedRow {
                time: parse_int(ti)?,
                group: cell(gi),
                count: parse_int(ni)?.max(0) as u64,
                outcome: parse(yi)?,
                month: match mi {
                    Some(idx) => Some(parse_int(idx)? as u32),
                    None => None,
                },
            });
        }
        GroupedMonthly::from_rows(rows, kind)
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn kind(&self) -> OutcomeKind {
        self.kind
    }

    pub fn month_anchor(&self) -> Option<(i64, u32)> {
        self.month_anchor
    }

    fn time_index(&self, t: i64) -> Option<usize> {
        let offset = t - self.times[0];
        if offset >= 0 && (offset as usize) < self.times.len() {
            Some(offset as usize)
        } else {
            None
        }
    }

    /// Total cases in month `t` across groups.
    pub fn total_count(&self, t: i64) -> Option<u64> {
        self.time_index(t)
            .map(|ti| self.counts[ti].iter().sum())
    }
}

/// Target case mix: nonnegative per-group weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MixTarget {
    weights: Vec<(String, f64)>,
}

impl MixTarget {
    pub fn new(weights: Vec<(String, f64)>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidMix("no groups".into()));
        }
        let mut sum = 0.0;
        for (g, w) in &weights {
            if *w < 0.0 || !w.is_finite() {
                return Err(Error::InvalidMix(format!("weight for `{g}` is {w}")));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidMix(format!("weights sum to {sum}, not 1")));
        }
        Ok(MixTarget { weights })
    }

    pub fn weights(&self) -> &[(String, f64)] {
        &self.weights
    }

    pub fn weight(&self, group: &str) -> Option<f64> {
        self.weights
            .iter()
            .find(|(g, _)| g == group)
            .map(|(_, w)| *w)
    }
}

/// Case-mix proportions over an inclusive window of months:
/// `pi_s = sum_t N_t^s / sum_t N_t`.
pub fn compute_target_mix(data: &GroupedMonthly, window: (i64, i64)) -> Result<MixTarget> {
    let (from, to) = window;
    let mut group_totals = vec![0u64; data.groups.len()];
    let mut total = 0u64;
    for (ti, &t) in data.times.iter().enumerate() {
        if t < from || t > to {
            continue;
        }
        for (gi, &n) in data.counts[ti].iter().enumerate() {
            group_totals[gi] += n;
            total += n;
        }
    }
    if total == 0 {
        return Err(Error::ZeroWindowTotal { from, to });
    }
    MixTarget::new(
        data.groups
            .iter()
            .zip(&group_totals)
            .map(|(g, &n)| (g.clone(), n as f64 / total as f64))
            .collect(),
    )
}

/// Reweights each month to the target mix. For means and proportions the
/// adjusted outcome is the weight-averaged group outcome; for counts each
/// group is first converted to a per-case rate, averaged under the target
/// mix, then scaled back by the month's total count.
pub fn adjust_series(data: &GroupedMonthly, target: &MixTarget) -> Result<Vec<f64>> {
    for (g, w) in target.weights() {
        if *w > 0.0 && !data.groups.contains(g) {
            return Err(Error::InvalidMix(format!(
                "target group `{g}` not present in data"
            )));
        }
    }
    let mut adjusted = Vec::with_capacity(data.times.len());
    for (ti, &t) in data.times.iter().enumerate() {
        let mut value = 0.0;
        for (g, w) in target.weights() {
            if *w == 0.0 {
                continue;
            }
            let gi = data.groups.iter().position(|x| x == g).expect("checked");
            match data.kind {
                OutcomeKind::MeanOrProportion => {
                    value += w * data.outcomes[ti][gi];
                }
                OutcomeKind::Count => {
                    let n_group = data.counts[ti][gi];
                    if n_group == 0 {
                        return Err(Error::ZeroGroupCount {
                            group: g.clone(),
                            time: t,
                        });
                    }
                    value += w * data.outcomes[ti][gi] / n_group as f64;
                }
            }
        }
        if data.kind == OutcomeKind::Count {
            let total: u64 = data.counts[ti].iter().sum();
            value *= total as f64;
        }
        adjusted.push(value);
    }
    Ok(adjusted)
}

/// Adjusts and wraps the result as a plain series ready for the ordinary
/// fitting pipeline.
pub fn adjusted_time_series(
    data: &GroupedMonthly,
    target: &MixTarget,
    t0: i64,
    outcome_name: &str,
) -> Result<TimeSeriesData> {
    let adjusted = adjust_series(data, target)?;
    let columns: Vec<Column> = Vec::new();
    TimeSeriesData::new(
        data.times.to_vec(),
        adjusted,
        outcome_name,
        columns,
        t0,
        data.month_anchor,
    )
}
