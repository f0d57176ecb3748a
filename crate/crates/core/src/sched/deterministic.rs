//! Seeded single-threaded driver: one engine step per pick.

use super::{Config, Ctx, RunReport, Shared, Sink, Unit};
use crate::model::{ClassId, Program, Store};
use crate::rng::SplitMix64;

struct Ready(Vec<Unit>);

impl Sink for Ready {
    fn push(&mut self, unit: Unit) {
        self.0.push(unit);
    }
}

pub(super) fn run(program: &Program, root: ClassId, cfg: &Config) -> RunReport {
    let store = Store::new();
    let sh = Shared::new(program, &store, cfg);
    let mut rng = SplitMix64::new(cfg.seed);
    let mut ctx = Ctx::new(&sh, Ready(Vec::new()), true);
    ctx.start(root);
    let mut ticks = 0u64;
    while !ctx.sink.0.is_empty() {
        ticks += 1;
        if ticks.is_multiple_of(1024) && sh.check_abort() {
            break;
        }
        let i = rng.below(ctx.sink.0.len() as u64) as usize;
        let unit = ctx.sink.0.swap_remove(i);
        ctx.handle(unit, 1);
        sh.pending
            .fetch_sub(1, std::sync::atomic::Ordering::Relaxed);
        if sh.stop.load(std::sync::atomic::Ordering::Relaxed) {
            break;
        }
    }
    ctx.flush_counters();
    let hash = ctx.hash.take().map(|h| h.finish());
    drop(ctx);
    sh.finish(&store, hash)
}
