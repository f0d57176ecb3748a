//! Thread-per-object baseline: every originating object gets its own OS
//! thread, which runs its init and its actions.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::thread::Scope;
use std::time::Duration;

use parking_lot::{Condvar, Mutex, RwLock};

use super::{Config, Ctx, RunReport, Shared, Sink, Unit};
use crate::engine::{Fault, FaultKind};
use crate::model::{ClassId, ObjId, Program, Store};

const STACK: usize = 256 << 10;
/// Past this many threads the process tends to hit the kernel's map or task
/// limits, which abort rather than return an error.
const MAX_THREADS: usize = 16_000;

#[derive(Default)]
struct Mailbox {
    queue: Mutex<VecDeque<Unit>>,
    cv: Condvar,
}

struct Hub<'a> {
    sh: Shared<'a>,
    boxes: RwLock<HashMap<ObjId, Arc<Mailbox>>>,
    /// Signalled when `pending` drops to zero or the run stops.
    done: Mutex<bool>,
    done_cv: Condvar,
}

impl Hub<'_> {
    fn finish(&self) {
        *self.done.lock() = true;
        self.done_cv.notify_all();
        for b in self.boxes.read().values() {
            let _q = b.queue.lock();
            b.cv.notify_all();
        }
    }

    fn is_done(&self) -> bool {
        *self.done.lock()
    }
}

struct Route<'h, 'a, 'sc, 'env> {
    hub: &'h Hub<'a>,
    scope: &'sc Scope<'sc, 'env>,
}

impl<'h, 'a, 'sc, 'env> Sink for Route<'h, 'a, 'sc, 'env>
where
    'h: 'sc,
    'a: 'h,
{
    fn push(&mut self, unit: Unit) {
        let id = unit.originator();
        let existing = self.hub.boxes.read().get(&id).cloned();
        let mailbox = match existing {
            Some(m) => m,
            None => {
                let mut map = self.hub.boxes.write();
                match map.get(&id) {
                    Some(m) => m.clone(),
                    None => {
                        let m = Arc::new(Mailbox::default());
                        map.insert(id, m.clone());
                        let (hub, scope, mine) = (self.hub, self.scope, m.clone());
                        let spawned = if map.len() > MAX_THREADS {
                            Err(std::io::Error::other(format!(
                                "more than {MAX_THREADS} object threads"
                            )))
                        } else {
                            Ok(())
                        };
                        drop(map);
                        let spawned = spawned.and_then(|()| {
                            std::thread::Builder::new()
                                .name(format!("obj-{}", id.0))
                                .stack_size(STACK)
                                .spawn_scoped(scope, move || object_thread(hub, scope, &mine))
                        });
                        if let Err(e) = spawned {
                            self.hub.sh.fail(Fault {
                                kind: FaultKind::ThreadSpawn(id.0, e.to_string()),
                                backtrace: Vec::new(),
                            });
                            self.hub.finish();
                            return;
                        }
                        m
                    }
                }
            }
        };
        mailbox.queue.lock().push_back(unit);
        mailbox.cv.notify_one();
    }
}

fn object_thread<'h, 'a, 'sc, 'env>(
    hub: &'h Hub<'a>,
    scope: &'sc Scope<'sc, 'env>,
    mailbox: &Mailbox,
) where
    'h: 'sc,
    'a: 'h,
{
    let sh = &hub.sh;
    let mut ctx = Ctx::new(sh, Route { hub, scope }, false);
    while !sh.stop.load(Ordering::Relaxed) {
        let unit = {
            let mut q = mailbox.queue.lock();
            loop {
                if let Some(u) = q.pop_front() {
                    break Some(u);
                }
                if hub.is_done() {
                    break None;
                }
                // `finish` notifies under this lock, so the wakeup cannot be lost.
                mailbox.cv.wait(&mut q);
            }
        };
        let Some(u) = unit else { break };
        ctx.handle(u, u32::MAX);
        if sh.pending.fetch_sub(1, Ordering::SeqCst) == 1 || sh.stop.load(Ordering::Relaxed) {
            hub.finish();
        }
        ctx.flush_counters();
    }
    ctx.flush_counters();
}

pub(super) fn run(program: &Program, root: ClassId, cfg: &Config) -> RunReport {
    let store = Store::new();
    let hub = Hub {
        sh: Shared::new(program, &store, cfg),
        boxes: RwLock::new(HashMap::new()),
        done: Mutex::new(false),
        done_cv: Condvar::new(),
    };
    std::thread::scope(|scope| {
        let mut ctx = Ctx::new(&hub.sh, Route { hub: &hub, scope }, false);
        ctx.start(root);
        ctx.flush_counters();
        if hub.sh.pending.load(Ordering::SeqCst) == 0 {
            hub.finish();
        }
        let mut done = hub.done.lock();
        while !*done {
            hub.done_cv.wait_for(&mut done, Duration::from_millis(5));
            drop(done);
            if hub.sh.check_abort() {
                hub.finish();
            }
            done = hub.done.lock();
        }
    });
    let Hub { sh, .. } = hub;
    sh.finish(&store, None)
}
