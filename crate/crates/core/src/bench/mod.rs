//! Benchmark harness: workloads, repeated timed runs, summary statistics
//! and report writers.

pub mod drivers;
pub mod report;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::Statistics;

use crate::frontend::{load, ValidateOptions};
use crate::model::{compile, Program};
use crate::sched::deque::{Steal, Worker};
use crate::sched::{self, Config, Mode, Outcome, TraceHash};
use drivers::Workload;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bench {
    Doubler,
    PriorityQueue,
    LeafTree,
    MapReduce,
}

impl Bench {
    pub const ALL: [Bench; 4] = [
        Bench::Doubler,
        Bench::PriorityQueue,
        Bench::LeafTree,
        Bench::MapReduce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Bench::Doubler => "doubler",
            Bench::PriorityQueue => "priority-queue",
            Bench::LeafTree => "leaf-tree",
            Bench::MapReduce => "map-reduce",
        }
    }

    pub fn workload(self, p: &Params) -> Workload {
        match self {
            Bench::Doubler => drivers::doubler(),
            Bench::PriorityQueue => drivers::priority_queue(p.num, p.seed),
            Bench::LeafTree => drivers::leaf_tree(p.num, p.seed),
            Bench::MapReduce => drivers::map_reduce(p.num, p.repeat),
        }
    }
}

impl fmt::Display for Bench {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Bench {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "doubler" => Ok(Bench::Doubler),
            "pq" | "priority-queue" => Ok(Bench::PriorityQueue),
            "leaf-tree" | "tree" => Ok(Bench::LeafTree),
            "map-reduce" | "mapreduce" => Ok(Bench::MapReduce),
            other => Err(BenchError::UnknownBench(other.to_string())),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Params {
    pub num: usize,
    pub repeat: usize,
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("unknown benchmark `{0}` (expected doubler, pq, leaf-tree or map-reduce)")]
    UnknownBench(String),
    #[error("generated program does not validate: {0}")]
    Invalid(String),
    #[error("{bench} with {workers} worker(s), repetition {rep}: output differs from the oracle")]
    WrongOutput {
        bench: Bench,
        workers: usize,
        rep: usize,
    },
    #[error("{bench} with {workers} worker(s): {outcome}")]
    Failed {
        bench: Bench,
        workers: usize,
        outcome: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn compile_source(src: &str) -> Result<Program, BenchError> {
    let ast = load(
        src,
        ValidateOptions {
            require_start: true,
        },
    )
    .map_err(|ds| {
        BenchError::Invalid(
            ds.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        )
    })?;
    Ok(compile(&ast))
}

/// Mean, spread and a two-sided 95% Student-t interval of one sample set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub bench: Bench,
    pub mode: &'static str,
    pub num: usize,
    pub repeat: usize,
    pub workers: usize,
    pub reps: usize,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub ci95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    /// FNV-1a of the checked output.
    pub output_hash: String,
}

/// Half-width of the 95% confidence interval of the mean.
pub fn ci95_half_width(samples: &[f64]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let n = samples.len() as f64;
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("valid degrees of freedom")
        .inverse_cdf(0.975);
    t * samples.std_dev() / n.sqrt()
}

pub fn summarize(samples: &[f64]) -> (f64, f64, f64, f64, f64) {
    let mean = samples.mean();
    let sd = if samples.len() > 1 {
        samples.std_dev()
    } else {
        0.0
    };
    (
        mean,
        sd,
        ci95_half_width(samples),
        samples.min(),
        samples.max(),
    )
}

pub fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Parallel => "m:n",
        Mode::Deterministic => "deterministic",
        Mode::ThreadPerObject => "thread-per-object",
    }
}

fn output_hash(out: &[crate::model::Value]) -> String {
    let mut h = TraceHash::default();
    for v in out {
        h.value(*v);
    }
    format!("{:016x}", h.finish())
}

/// Run `bench` `reps` times. Every run's output is checked against the
/// oracle before any timing is reported.
pub fn measure(
    bench: Bench,
    params: &Params,
    cfg: &Config,
    reps: usize,
) -> Result<Summary, BenchError> {
    let w = bench.workload(params);
    let program = compile_source(&w.source)?;
    let root = program.start().expect("validated");
    let mut samples = Vec::with_capacity(reps);
    for rep in 0..reps.max(1) {
        let cfg = Config {
            seed: cfg.seed.wrapping_add(rep as u64),
            ..cfg.clone()
        };
        let t = Instant::now();
        let r = sched::run(&program, root, &cfg);
        let ms = t.elapsed().as_secs_f64() * 1e3;
        if r.outcome != Outcome::Quiescent {
            return Err(BenchError::Failed {
                bench,
                workers: cfg.workers,
                outcome: match r.outcome {
                    Outcome::Fault(f) => f.to_string(),
                    _ => "aborted".into(),
                },
            });
        }
        if r.output != w.expected {
            return Err(BenchError::WrongOutput {
                bench,
                workers: cfg.workers,
                rep,
            });
        }
        samples.push(ms);
    }
    let (mean_ms, stddev_ms, ci95_ms, min_ms, max_ms) = summarize(&samples);
    Ok(Summary {
        bench,
        mode: mode_name(cfg.mode),
        num: params.num,
        repeat: params.repeat,
        workers: if cfg.mode == Mode::Parallel {
            cfg.workers
        } else {
            1
        },
        reps: samples.len(),
        mean_ms,
        stddev_ms,
        ci95_ms,
        min_ms,
        max_ms,
        output_hash: output_hash(&w.expected),
    })
}

/// Result of [`deque_stress`].
#[derive(Clone, Debug, Serialize)]
pub struct DequeStress {
    pub units: usize,
    pub thieves: usize,
    pub popped: usize,
    pub stolen: usize,
    /// Units consumed zero times or more than once.
    pub miscounted: usize,
    pub elapsed: Duration,
}

/// One owner pushing `units` numbers (popping every other push) while
/// `thieves` threads steal. Checks that every unit is consumed once.
pub fn deque_stress(units: usize, thieves: usize) -> DequeStress {
    let worker = Worker::<usize>::new();
    let seen: Vec<AtomicUsize> = (0..units).map(|_| AtomicUsize::new(0)).collect();
    let done = AtomicBool::new(false);
    let stolen = AtomicUsize::new(0);
    let mut popped = 0;
    let t = Instant::now();
    std::thread::scope(|s| {
        for _ in 0..thieves {
            let st = worker.stealer();
            let (seen, done, stolen) = (&seen, &done, &stolen);
            s.spawn(move || {
                let mut mine = 0;
                loop {
                    match st.steal() {
                        Steal::Success(i) => {
                            seen[i].fetch_add(1, Ordering::Relaxed);
                            mine += 1;
                        }
                        Steal::Retry => {}
                        Steal::Empty if done.load(Ordering::Acquire) => break,
                        Steal::Empty => std::hint::spin_loop(),
                    }
                }
                stolen.fetch_add(mine, Ordering::Relaxed);
            });
        }
        for i in 0..units {
            worker.push(i);
            if i % 2 == 1 {
                if let Some(j) = worker.pop() {
                    seen[j].fetch_add(1, Ordering::Relaxed);
                    popped += 1;
                }
            }
        }
        while let Some(j) = worker.pop() {
            seen[j].fetch_add(1, Ordering::Relaxed);
            popped += 1;
        }
        done.store(true, Ordering::Release);
    });
    DequeStress {
        units,
        thieves,
        popped,
        stolen: stolen.into_inner(),
        miscounted: seen
            .iter()
            .filter(|c| c.load(Ordering::Relaxed) != 1)
            .count(),
        elapsed: t.elapsed(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_quantile_matches_tables() {
        // Two-sided 95% critical values from standard t tables.
        for (df, t) in [(1.0, 12.706), (9.0, 2.262), (29.0, 2.045)] {
            let q = StudentsT::new(0.0, 1.0, df).unwrap().inverse_cdf(0.975);
            assert!((q - t).abs() < 1e-3, "df={df}: {q}");
        }
    }

    #[test]
    fn ci_of_known_sample() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        // sd = sqrt(2.5), t(4) = 2.776
        let expect = 2.776_445 * 2.5f64.sqrt() / 5f64.sqrt();
        assert!((ci95_half_width(&s) - expect).abs() < 1e-4);
        let (mean, sd, _, lo, hi) = summarize(&s);
        assert_eq!((mean, lo, hi), (3.0, 1.0, 5.0));
        assert!((sd - 2.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn measure_checks_output() {
        let p = Params {
            num: 30,
            repeat: 2,
            seed: 4,
        };
        for b in Bench::ALL {
            let s = measure(
                b,
                &p,
                &Config {
                    workers: 2,
                    ..Config::default()
                },
                3,
            )
            .unwrap();
            assert_eq!(s.reps, 3);
            assert!(s.min_ms <= s.mean_ms && s.mean_ms <= s.max_ms);
        }
    }

    #[test]
    fn names_roundtrip() {
        for b in Bench::ALL {
            assert_eq!(b.name().parse::<Bench>().unwrap(), b);
        }
        assert!("nope".parse::<Bench>().is_err());
    }

    #[test]
    fn small_deque_stress() {
        let r = deque_stress(20_000, 3);
        assert_eq!(r.miscounted, 0);
        assert_eq!(r.popped + r.stolen, 20_000);
    }
}
