//! Episode traces: a header line, then one JSON object per step.

use std::io::Write;

use blockdrive_core::env::{Episode, StepResult};
use blockdrive_core::vehicle::Action;
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Serialize)]
pub struct TraceHeader {
    pub seed: u64,
    pub policy: String,
    pub density: f64,
    pub blocks: usize,
    pub max_steps: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TracePose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TraceStep {
    pub t: usize,
    pub pose: TracePose,
    pub speed: f64,
    pub action: [f64; 2],
    pub reward: f64,
    pub terminal: &'static str,
}

impl TraceStep {
    pub fn new(ep: &Episode, action: Action, r: &StepResult) -> Self {
        let p = ep.ego.pose;
        Self {
            t: r.info.step,
            pose: TracePose {
                x: p.position.x,
                y: p.position.y,
                heading: p.heading,
            },
            speed: ep.ego.speed,
            action: [action.steering, action.throttle],
            reward: r.reward,
            terminal: r.info.terminal.name(),
        }
    }
}

pub struct TraceWriter<W: Write> {
    out: W,
    lines: usize,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, header: &TraceHeader) -> Result<Self> {
        write_line(&mut out, header)?;
        Ok(Self { out, lines: 1 })
    }

    pub fn step(&mut self, s: &TraceStep) -> Result<()> {
        write_line(&mut self.out, s)?;
        self.lines += 1;
        Ok(())
    }

    /// Lines written so far, header included.
    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| CliError::io("trace", e))?;
        Ok(self.out)
    }
}

fn write_line<W: Write>(out: &mut W, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n").map_err(|e| CliError::io("trace", e))
}
