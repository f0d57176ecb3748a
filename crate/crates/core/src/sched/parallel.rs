//! M:N work-stealing driver.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use parking_lot::{Condvar, Mutex};

use super::deque::{Steal, Stealer, Worker};
use super::{Config, Ctx, RunReport, Shared, Sink, StealBatch, Unit};
use crate::model::{ClassId, Program, Store};
use crate::rng::SplitMix64;

/// Steps a resumed activation may take before going back to its deque.
const BUDGET: u32 = 64;
/// Every this many ticks a worker looks at the global queue first.
const GLOBAL_EVERY: u64 = 61;

struct Pool<'a> {
    sh: Shared<'a>,
    global: Mutex<VecDeque<Unit>>,
    global_len: AtomicUsize,
    stealers: Vec<Stealer<Unit>>,
    sleepers: AtomicUsize,
    idle: Mutex<()>,
    wake: Condvar,
}

impl Pool<'_> {
    fn notify(&self) {
        if self.sleepers.load(Ordering::SeqCst) > 0 {
            self.wake.notify_one();
        }
    }

    fn push_global(&self, unit: Unit) {
        let mut g = self.global.lock();
        g.push_back(unit);
        self.global_len.fetch_add(1, Ordering::SeqCst);
        drop(g);
        self.notify();
    }

    fn pop_global(&self) -> Option<Unit> {
        if self.global_len.load(Ordering::SeqCst) == 0 {
            return None;
        }
        let mut g = self.global.lock();
        let u = g.pop_front();
        if u.is_some() {
            self.global_len.fetch_sub(1, Ordering::SeqCst);
        }
        u
    }
}

struct Local<'p, 'a> {
    pool: &'p Pool<'a>,
    deque: &'p Worker<Unit>,
}

impl Sink for Local<'_, '_> {
    fn push(&mut self, unit: Unit) {
        self.deque.push(unit);
        self.pool.notify();
    }

    fn retry(&mut self, unit: Unit) {
        self.pool.push_global(unit);
    }
}

fn steal(
    pool: &Pool<'_>,
    me: usize,
    deque: &Worker<Unit>,
    rng: &mut SplitMix64,
    batch: StealBatch,
) -> Option<Unit> {
    let n = pool.stealers.len();
    if n < 2 {
        return None;
    }
    let start = rng.below(n as u64) as usize;
    for k in 0..n {
        let victim = (start + k) % n;
        if victim == me {
            continue;
        }
        let s = &pool.stealers[victim];
        loop {
            match s.steal() {
                Steal::Success(first) => {
                    pool.sh.steals.fetch_add(1, Ordering::Relaxed);
                    if batch == StealBatch::Half {
                        for _ in 0..s.len() / 2 {
                            match s.steal() {
                                Steal::Success(u) => deque.push(u),
                                _ => break,
                            }
                        }
                    }
                    return Some(first);
                }
                Steal::Retry => continue,
                Steal::Empty => break,
            }
        }
    }
    None
}

fn worker_loop(pool: &Pool<'_>, me: usize, deque: &Worker<Unit>) {
    let sh = &pool.sh;
    let mut rng = SplitMix64::new(sh.cfg.seed ^ (me as u64).wrapping_mul(0x9E37_79B9));
    let mut ctx = Ctx::new(sh, Local { pool, deque }, false);
    let mut tick = 0u64;
    loop {
        tick += 1;
        if (tick.is_multiple_of(256) && sh.check_abort()) || sh.stop.load(Ordering::Relaxed) {
            break;
        }
        let unit = if tick.is_multiple_of(GLOBAL_EVERY) {
            pool.pop_global().or_else(|| deque.pop())
        } else {
            deque.pop().or_else(|| pool.pop_global())
        }
        .or_else(|| steal(pool, me, deque, &mut rng, sh.cfg.steal_batch));
        match unit {
            Some(u) => {
                ctx.handle(u, BUDGET);
                if sh.pending.fetch_sub(1, Ordering::SeqCst) == 1 {
                    pool.wake.notify_all();
                }
            }
            None => {
                if sh.pending.load(Ordering::SeqCst) == 0 || sh.check_abort() {
                    break;
                }
                let mut g = pool.idle.lock();
                pool.sleepers.fetch_add(1, Ordering::SeqCst);
                pool.wake.wait_for(&mut g, Duration::from_millis(1));
                pool.sleepers.fetch_sub(1, Ordering::SeqCst);
            }
        }
    }
    ctx.flush_counters();
    pool.wake.notify_all();
}

pub(super) fn run(program: &Program, root: ClassId, cfg: &Config) -> RunReport {
    let store = Store::new();
    let workers = cfg.workers.max(1);
    let deques: Vec<Worker<Unit>> = (0..workers).map(|_| Worker::new()).collect();
    let pool = Pool {
        sh: Shared::new(program, &store, cfg),
        global: Mutex::new(VecDeque::new()),
        global_len: AtomicUsize::new(0),
        stealers: deques.iter().map(Worker::stealer).collect(),
        sleepers: AtomicUsize::new(0),
        idle: Mutex::new(()),
        wake: Condvar::new(),
    };
    {
        let mut ctx = Ctx::new(
            &pool.sh,
            Local {
                pool: &pool,
                deque: &deques[0],
            },
            false,
        );
        ctx.start(root);
        ctx.flush_counters();
    }
    std::thread::scope(|s| {
        let mut rest = deques.into_iter().enumerate();
        let (_, first) = rest.next().expect("one worker");
        for (i, d) in rest {
            let pool = &pool;
            s.spawn(move || worker_loop(pool, i, &d));
        }
        worker_loop(&pool, 0, &first);
    });
    let Pool { sh, .. } = pool;
    sh.finish(&store, None)
}
