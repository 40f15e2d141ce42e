use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::{par, Result, TOOL_VERSION};

/// Whose cost a stage belongs to: model building (developer) or checking a
/// DPA with trained models (user).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perspective {
    Developer,
    User,
}

pub struct Stage<'a> {
    pub name: String,
    pub perspective: Perspective,
    /// Input size reported next to the timing (sentences, DPAs, ...).
    pub items: usize,
    pub run: Box<dyn FnMut() -> Result<()> + Send + 'a>,
}

impl<'a> Stage<'a> {
    pub fn new<F>(name: impl Into<String>, perspective: Perspective, items: usize, run: F) -> Self
    where
        F: FnMut() -> Result<()> + Send + 'a,
    {
        Stage {
            name: name.into(),
            perspective,
            items,
            run: Box::new(run),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineInfo {
    pub os: String,
    pub arch: String,
    pub cpu: String,
    pub logical_cpus: usize,
    pub worker_threads: usize,
    pub tool_version: String,
}

impl MachineInfo {
    pub fn current(worker_threads: usize) -> Self {
        let cpu = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split(':').nth(1))
                    .map(|v| v.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".into());
        MachineInfo {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            cpu,
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            worker_threads,
            tool_version: TOOL_VERSION.into(),
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "{} {} | {} | {} logical cpus | {} worker threads | {}",
            self.os, self.arch, self.cpu, self.logical_cpus, self.worker_threads, self.tool_version
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub name: String,
    pub perspective: Perspective,
    pub items: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeTable {
    pub machine: MachineInfo,
    pub stages: Vec<StageTiming>,
    pub developer_seconds: f64,
    pub user_seconds: f64,
    pub total_seconds: f64,
}

impl RuntimeTable {
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "# {}\nstage\tperspective\titems\tseconds\n",
            self.machine.describe()
        );
        for s in &self.stages {
            let p = match s.perspective {
                Perspective::Developer => "developer",
                Perspective::User => "user",
            };
            let _ = writeln!(out, "{}\t{p}\t{}\t{:.6}", s.name, s.items, s.seconds);
        }
        let _ = writeln!(out, "developer total\t\t\t{:.6}", self.developer_seconds);
        let _ = writeln!(out, "user total\t\t\t{:.6}", self.user_seconds);
        let _ = writeln!(out, "end to end\t\t\t{:.6}", self.total_seconds);
        out
    }
}

/// Times each stage once, in order, with the parallel helpers limited to
/// `threads` workers (1 keeps timings stable). Stops at the first failing
/// stage.
pub fn benchmark_runtime(stages: Vec<Stage<'_>>, threads: usize) -> Result<RuntimeTable> {
    let threads = threads.max(1);
    let timings = par::with_threads(threads, move || -> Result<Vec<StageTiming>> {
        let mut out = Vec::new();
        for mut s in stages {
            let start = Instant::now();
            (s.run)()?;
            out.push(StageTiming {
                name: s.name,
                perspective: s.perspective,
                items: s.items,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        Ok(out)
    })?;
    let sum = |p: Perspective| {
        timings
            .iter()
            .filter(|t| t.perspective == p)
            .fold(0.0, |acc, t| acc + t.seconds)
    };
    let (developer_seconds, user_seconds) = (sum(Perspective::Developer), sum(Perspective::User));
    Ok(RuntimeTable {
        machine: MachineInfo::current(threads),
        developer_seconds,
        user_seconds,
        total_seconds: developer_seconds + user_seconds,
        stages: timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_near_zero() {
        let t = benchmark_runtime(
            vec![Stage::new("check", Perspective::User, 0, || Ok(()))],
            1,
        )
        .unwrap();
        assert_eq!(t.stages[0].items, 0);
        assert!(t.total_seconds < 0.05);
        assert!(t.to_tsv().contains("check\tuser\t0\t"));
    }

    #[test]
    fn perspectives_are_summed_separately() {
        let spin = |ms: u64| {
            move || {
                std::thread::sleep(std::time::Duration::from_millis(ms));
                Ok(())
            }
        };
        let t = benchmark_runtime(
            vec![
                Stage::new("train", Perspective::Developer, 10, spin(20)),
                Stage::new("predict", Perspective::User, 10, spin(5)),
            ],
            1,
        )
        .unwrap();
        assert!(t.developer_seconds >= 0.02 && t.user_seconds >= 0.005);
        assert!((t.total_seconds - t.developer_seconds - t.user_seconds).abs() < 1e-12);
        assert_eq!(t.machine.worker_threads, 1);
    }

    #[test]
    fn failing_stage_stops_the_run() {
        let r = benchmark_runtime(
            vec![Stage::new("bad", Perspective::User, 1, || {
                Err(crate::Error::InvalidInput("x".into()))
            })],
            1,
        );
        assert!(r.is_err());
    }
}
