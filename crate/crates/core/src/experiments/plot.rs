//! Long-format CSV tables for external plotting.
//!
//! | kind | file | columns |
//! |---|---|---|
//! | capacity-curve | `capacity-curve.csv` | `x-param,series,mean,std` (x is the slot count `k`, series names the other cell parameters, mean/std are the seed-averaged MAE) |
//! | recovery-phase | `recovery-phase.csv` | `m,sample-count,recovery-rate`, one row per echo run |
//! | discrepancy-heatmap | `discrepancy-heatmap.csv` | `c1-hat,c2-hat,value` in row-major grid order (`ĉ₁` slowest), value = mean score reduction |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::runners::EchoRow;
use crate::capacity_bench::CellResult;
use crate::error::{Error, FormatError, Result};
use crate::steering_lab::SweepPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    CapacityCurve,
    RecoveryPhase,
    DiscrepancyHeatmap,
}

impl PlotKind {
    pub fn file_name(self) -> &'static str {
        match self {
            Self::CapacityCurve => "capacity-curve.csv",
            Self::RecoveryPhase => "recovery-phase.csv",
            Self::DiscrepancyHeatmap => "discrepancy-heatmap.csv",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Self::CapacityCurve => &["x-param", "series", "mean", "std"],
            Self::RecoveryPhase => &["m", "sample-count", "recovery-rate"],
            Self::DiscrepancyHeatmap => &["c1-hat", "c2-hat", "value"],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub series: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub m: usize,
    pub sample_count: usize,
    pub recovery_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatCell {
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlotData {
    CapacityCurve(Vec<CurvePoint>),
    RecoveryPhase(Vec<PhasePoint>),
    DiscrepancyHeatmap(Vec<HeatCell>),
}

fn nonempty<T>(rows: Vec<T>, what: &str) -> Result<Vec<T>> {
    if rows.is_empty() {
        Err(Error::InvalidParameter(format!("no rows for {what}")))
    } else {
        Ok(rows)
    }
}

/// MAE against slot count, one series per remaining parameter combination.
/// Failed cells are left out.
pub fn capacity_curve(table: &[CellResult]) -> Result<PlotData> {
    let rows = table
        .iter()
        .filter_map(|c| {
            let p = &c.params;
            c.metrics.map(|m| CurvePoint {
                x: p.k as f64,
                series: format!("{} n={} m={} rank={} p={}", p.mechanism.name(), p.n, p.m, p.rank, p.p),
                mean: m.mae_mean,
                std: m.mae_std,
            })
        })
        .collect();
    Ok(PlotData::CapacityCurve(nonempty(rows, "capacity-curve")?))
}

pub fn recovery_phase(rows: &[EchoRow]) -> Result<PlotData> {
    let rows = rows
        .iter()
        .map(|r| PhasePoint {
            m: r.m,
            sample_count: r.sample_count,
            recovery_rate: r.recovery_rate,
        })
        .collect();
    Ok(PlotData::RecoveryPhase(nonempty(rows, "recovery-phase")?))
}

/// Every grid point in order; the zero direction, which the sweep skips,
/// reduces nothing and is reported as 0.
pub fn discrepancy_heatmap(grid: &[(f64, f64)], points: &[SweepPoint]) -> Result<PlotData> {
    let mut evaluated = points.iter().peekable();
    let rows = grid
        .iter()
        .map(|&(c1, c2)| {
            let value = match evaluated.peek() {
                Some(p) if p.c1_hat == c1 && p.c2_hat == c2 => evaluated.next().map_or(0.0, |p| p.mean_score_reduction),
                _ => 0.0,
            };
            HeatCell {
                c1_hat: c1,
                c2_hat: c2,
                value,
            }
        })
        .collect();
    Ok(PlotData::DiscrepancyHeatmap(nonempty(rows, "discrepancy-heatmap")?))
}

impl PlotData {
    pub fn kind(&self) -> PlotKind {
        match self {
            PlotData::CapacityCurve(_) => PlotKind::CapacityCurve,
            PlotData::RecoveryPhase(_) => PlotKind::RecoveryPhase,
            PlotData::DiscrepancyHeatmap(_) => PlotKind::DiscrepancyHeatmap,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let record = |w: &mut csv::Writer<Vec<u8>>, fields: &[String]| {
            w.write_record(fields).expect("in-memory csv write");
        };
        w.write_record(self.kind().columns()).expect("in-memory csv write");
        match self {
            PlotData::CapacityCurve(rows) => {
                for r in rows {
                    record(&mut w, &[r.x.to_string(), r.series.clone(), r.mean.to_string(), r.std.to_string()]);
                }
            }
            PlotData::RecoveryPhase(rows) => {
                for r in rows {
                    record(&mut w, &[r.m.to_string(), r.sample_count.to_string(), r.recovery_rate.to_string()]);
                }
            }
            PlotData::DiscrepancyHeatmap(rows) => {
                for r in rows {
                    record(&mut w, &[r.c1_hat.to_string(), r.c2_hat.to_string(), r.value.to_string()]);
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
    }

    /// Parse a table written by [`PlotData::to_csv`].
    pub fn from_csv(kind: PlotKind, text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| FormatError::MalformedHeader(e.to_string()))?
            .clone();
        if header.iter().collect::<Vec<_>>() != kind.columns() {
            return Err(FormatError::MalformedHeader(format!("unexpected columns {header:?}")).into());
        }
        let mut records = Vec::new();
        for (k, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| FormatError::BadToken {
                token: e.to_string(),
                line: k + 2,
            })?;
            records.push((k + 2, rec));
        }
        fn num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
            let token = rec.get(i).unwrap_or("");
            token.parse().map_err(|_| {
                FormatError::BadToken {
                    token: token.to_string(),
                    line,
                }
                .into()
            })
        }
        Ok(match kind {
            PlotKind::CapacityCurve => PlotData::CapacityCurve(
                records
                    .iter()
                    .map(|(line, r)| {
                        Ok(CurvePoint {
                            x: num(r, 0, *line)?,
                            series: r.get(1).unwrap_or("").to_string(),
                            mean: num(r, 2, *line)?,
                            std: num(r, 3, *line)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
            PlotKind::RecoveryPhase => PlotData::RecoveryPhase(
                records
                    .iter()
                    .map(|(line, r)| {
                        Ok(PhasePoint {
                            m: num(r, 0, *line)?,
                            sample_count: num(r, 1, *line)?,
                            recovery_rate: num(r, 2, *line)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
            PlotKind::DiscrepancyHeatmap => PlotData::DiscrepancyHeatmap(
                records
                    .iter()
                    .map(|(line, r)| {
                        Ok(HeatCell {
                            c1_hat: num(r, 0, *line)?,
                            c2_hat: num(r, 1, *line)?,
                            value: num(r, 2, *line)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

/// Write `data` into `dir` under its kind's file name.
pub fn emit_plot_data(data: &PlotData, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(data.kind().file_name());
    std::fs::write(&path, data.to_csv()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
