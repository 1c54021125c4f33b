//! Per-step trajectory records and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::env::{EnvState, RewardBreakdown};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Pursuer,
    Evader,
}

/// One agent at one step. The evader's `agent_id` is the pursuer count and
/// its reward columns are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub agent_id: usize,
    pub role: Role,
    pub x_mm: f64,
    pub y_mm: f64,
    pub heading_rad: f64,
    pub captured: bool,
    pub r_main: f64,
    pub r_time: f64,
    pub r_tm: f64,
    pub r_o: f64,
    pub r_pot: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    /// Appends every agent of `state`. `rewards` are the ones received on
    /// the transition into `state`; pass `None` for the initial state.
    pub fn record(&mut self, state: &EnvState, rewards: Option<&[RewardBreakdown]>) {
        for (i, p) in state.pursuers.iter().enumerate() {
            let r = rewards.and_then(|r| r.get(i)).copied().unwrap_or_default();
            self.rows.push(TrajectoryRow {
                step: state.step,
                agent_id: i,
                role: Role::Pursuer,
                x_mm: p.position.x,
                y_mm: p.position.y,
                heading_rad: p.heading,
                captured: p.captured,
                r_main: r.r_main,
                r_time: r.r_time,
                r_tm: r.r_tm,
                r_o: r.r_o,
                r_pot: r.r_pot,
            });
        }
        self.rows.push(TrajectoryRow {
            step: state.step,
            agent_id: state.pursuers.len(),
            role: Role::Evader,
            x_mm: state.evader.position.x,
            y_mm: state.evader.position.y,
            heading_rad: state.evader.heading,
            captured: false,
            r_main: 0.0,
            r_time: 0.0,
            r_tm: 0.0,
            r_o: 0.0,
            r_pot: 0.0,
        });
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if self.rows.is_empty() {
            w.write_record([
                "step",
                "agent_id",
                "role",
                "x_mm",
                "y_mm",
                "heading_rad",
                "captured",
                "r_main",
                "r_time",
                "r_tm",
                "r_o",
                "r_pot",
            ])
            .map_err(csv_error)?;
        }
        for row in &self.rows {
            w.serialize(row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Parses the CSV form; errors carry the 1-based file line of the bad row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for record in r.deserialize::<TrajectoryRow>() {
            let row = record.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            rows.push(row);
        }
        Ok(Self { rows })
    }

    pub fn agent_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.rows.iter().map(|r| r.agent_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
