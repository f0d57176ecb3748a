//! Append-only object arena with per-object test-and-set locks.
//!
//! Fields are reachable only through a [`Held`] token, which exists only
//! while the object's lock is held.

use std::cell::UnsafeCell;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, AtomicU8, Ordering};
use std::sync::OnceLock;

use parking_lot::Mutex;

use super::{ClassId, ObjId, Program, Value};
use crate::sched::Waiters;

/// Number of lock-ownership checks performed (debug builds only).
pub static OWNERSHIP_CHECKS: AtomicU64 = AtomicU64::new(0);

struct Cell {
    fields: Vec<Value>,
    /// Round-robin cursor over the class's actions.
    rr: u32,
}

pub struct Object {
    lock: AtomicBool,
    /// Activation holding the lock, plus one (0 = none). Debug builds only.
    owner: AtomicU64,
    class: AtomicU32,
    cell: UnsafeCell<Cell>,
    /// Scheduling status, see `sched`.
    pub sched: AtomicU8,
    /// Set while `waiters` may be non-empty.
    pub has_waiters: AtomicBool,
    pub waiters: Mutex<Waiters>,
}

// SAFETY: `cell` is only accessed through `Held`, which requires the lock.
unsafe impl Sync for Object {}

impl Default for Object {
    fn default() -> Self {
        Object {
            lock: AtomicBool::new(false),
            owner: AtomicU64::new(0),
            class: AtomicU32::new(0),
            cell: UnsafeCell::new(Cell {
                fields: Vec::new(),
                rr: 0,
            }),
            sched: AtomicU8::new(0),
            has_waiters: AtomicBool::new(false),
            waiters: Mutex::new(Waiters::default()),
        }
    }
}

impl Object {
    pub fn class(&self) -> ClassId {
        self.class.load(Ordering::Relaxed)
    }

    pub fn is_locked(&self) -> bool {
        self.lock.load(Ordering::SeqCst)
    }
}

/// Exclusive access to one object's fields, proof that its lock is held.
#[must_use = "a held lock must be released with `unlock`"]
pub struct Held<'s> {
    obj: &'s Object,
    id: ObjId,
}

impl<'s> Held<'s> {
    pub fn id(&self) -> ObjId {
        self.id
    }

    pub fn class(&self) -> ClassId {
        self.obj.class()
    }

    pub fn fields(&self) -> &[Value] {
        // SAFETY: the lock is held, so no other thread touches the cell.
        unsafe { &(*self.obj.cell.get()).fields }
    }

    pub fn fields_mut(&mut self) -> &mut [Value] {
        // SAFETY: as above; `&mut self` prevents aliasing through this token.
        unsafe { &mut (*self.obj.cell.get()).fields }
    }

    pub fn field(&self, i: u32) -> Value {
        self.fields()[i as usize]
    }

    /// Round-robin cursor for action selection.
    pub fn rr_mut(&mut self) -> &mut u32 {
        // SAFETY: lock held.
        unsafe { &mut (*self.obj.cell.get()).rr }
    }

    pub fn object(&self) -> &'s Object {
        self.obj
    }

    /// Release the lock. The store has release ordering, so every write
    /// made through this token is visible to the next holder.
    pub fn unlock(self) -> ObjId {
        if cfg!(debug_assertions) {
            self.obj.owner.store(0, Ordering::Relaxed);
        }
        let was = self.obj.lock.swap(false, Ordering::SeqCst);
        debug_assert!(was, "unlock of unlocked object {}", self.id);
        self.id
    }

    /// Check that `owner` holds this lock (debug builds).
    pub fn assert_owner(&self, owner: u64) {
        if cfg!(debug_assertions) {
            OWNERSHIP_CHECKS.fetch_add(1, Ordering::Relaxed);
            let actual = self.obj.owner.load(Ordering::Relaxed);
            assert_eq!(
                actual, owner,
                "lock of {} held by activation {} but used by {}",
                self.id, actual, owner
            );
        }
    }
}

const BASE_SHIFT: u32 = 4;
const SEGMENTS: usize = 28;

/// Growable arena of objects. Segment `k` holds `16 << k` objects, so
/// references into it stay valid while it grows.
pub struct Store {
    segments: [OnceLock<Box<[Object]>>; SEGMENTS],
    next: AtomicU32,
}

impl Default for Store {
    fn default() -> Self {
        Store {
            segments: std::array::from_fn(|_| OnceLock::new()),
            next: AtomicU32::new(0),
        }
    }
}

fn locate(id: u32) -> (usize, usize) {
    let j = id as u64 + (1u64 << BASE_SHIFT);
    let k = 63 - j.leading_zeros() - BASE_SHIFT;
    (k as usize, (j - (1u64 << (k + BASE_SHIFT))) as usize)
}

/// Plain copy of one object, used by the explorer.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ObjSnap {
    pub class: ClassId,
    pub fields: Vec<Value>,
    pub rr: u32,
    /// Lock owner (activation id plus one), if locked.
    pub locked: Option<u64>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of objects allocated so far.
    pub fn len(&self) -> u32 {
        self.next.load(Ordering::Acquire)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn object(&self, id: ObjId) -> &Object {
        let (seg, off) = locate(id.0);
        &self.segments[seg].get().expect("dangling object id")[off]
    }

    fn slot(&self, id: u32) -> &Object {
        let (seg, off) = locate(id);
        let segment = self.segments[seg].get_or_init(|| {
            (0..(1usize << (seg as u32 + BASE_SHIFT)))
                .map(|_| Object::default())
                .collect()
        });
        &segment[off]
    }

    /// Allocate a fresh object whose lock is already held by `owner`.
    pub fn alloc_locked(&self, class: ClassId, fields: Vec<Value>, owner: u64) -> Held<'_> {
        let id = self.next.fetch_add(1, Ordering::AcqRel);
        assert!(id < u32::MAX, "object id space exhausted");
        let obj = self.slot(id);
        obj.class.store(class, Ordering::Relaxed);
        // SAFETY: the id was just reserved; nobody else can reach the object.
        unsafe {
            let cell = &mut *obj.cell.get();
            cell.fields = fields;
            cell.rr = 0;
        }
        if cfg!(debug_assertions) {
            obj.owner.store(owner, Ordering::Relaxed);
        }
        obj.lock.store(true, Ordering::SeqCst);
        Held { obj, id: ObjId(id) }
    }

    /// Atomically set the lock if it is free.
    pub fn try_lock(&self, id: ObjId, owner: u64) -> Option<Held<'_>> {
        let obj = self.object(id);
        if obj
            .lock
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::Relaxed)
            .is_ok()
        {
            if cfg!(debug_assertions) {
                obj.owner.store(owner, Ordering::Relaxed);
            }
            Some(Held { obj, id })
        } else {
            None
        }
    }

    /// Re-obtain the token for a lock that `owner` kept across steps
    /// (instruction-granularity exploration only).
    pub fn reclaim(&self, id: ObjId, owner: u64) -> Held<'_> {
        let obj = self.object(id);
        assert!(obj.is_locked(), "reclaim of unlocked object {id}");
        let held = Held { obj, id };
        held.assert_owner(owner);
        held
    }

    pub fn snapshot(&self) -> Vec<ObjSnap> {
        (0..self.len())
            .map(|i| {
                let obj = self.object(ObjId(i));
                // SAFETY: snapshots are taken only when no worker runs.
                let cell = unsafe { &*obj.cell.get() };
                ObjSnap {
                    class: obj.class(),
                    fields: cell.fields.clone(),
                    rr: cell.rr,
                    locked: obj.is_locked().then(|| obj.owner.load(Ordering::Relaxed)),
                }
            })
            .collect()
    }

    pub fn from_snapshot(snap: &[ObjSnap]) -> Store {
        let store = Store::new();
        for s in snap {
            let held = store.alloc_locked(s.class, s.fields.clone(), 0);
            // SAFETY: freshly allocated and not shared.
            unsafe { (*held.obj.cell.get()).rr = s.rr };
            match s.locked {
                Some(owner) => {
                    if cfg!(debug_assertions) {
                        held.obj.owner.store(owner, Ordering::Relaxed);
                    }
                }
                None => {
                    held.unlock();
                }
            }
        }
        store
    }

    /// One line per object: id, class, fields and lock.
    pub fn dump(&self, program: &Program) -> String {
        let mut out = String::new();
        for (i, s) in self.snapshot().iter().enumerate() {
            let class = program.class(s.class);
            let fields: Vec<String> = class
                .fields
                .iter()
                .zip(&s.fields)
                .map(|(n, v)| format!("{n}={v}"))
                .collect();
            let _ = writeln!(
                out,
                "#{i} {} {{{}}} lock={}",
                class.name,
                fields.join(", "),
                s.locked.is_some()
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn segment_arithmetic() {
        assert_eq!(locate(0), (0, 0));
        assert_eq!(locate(15), (0, 15));
        assert_eq!(locate(16), (1, 0));
        assert_eq!(locate(47), (1, 31));
        assert_eq!(locate(48), (2, 0));
    }

    #[test]
    fn try_lock_is_exclusive() {
        let store = Store::new();
        let id = store.alloc_locked(0, vec![Value::Int(0)], 1).unlock();
        let a = store.try_lock(id, 1).expect("free");
        assert!(store.try_lock(id, 2).is_none());
        a.unlock();
        assert!(!store.object(id).is_locked());
        store.try_lock(id, 2).expect("free again").unlock();
    }

    #[test]
    fn ids_are_fresh() {
        let store = Store::new();
        let a = store.alloc_locked(0, vec![], 1).unlock();
        let b = store.alloc_locked(0, vec![], 1).unlock();
        assert_ne!(a, b);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn concurrent_try_lock_has_one_winner() {
        for _ in 0..200 {
            let store = Arc::new(Store::new());
            let id = store.alloc_locked(0, vec![], 1).unlock();
            let wins = Arc::new(AtomicU32::new(0));
            let barrier = Arc::new(std::sync::Barrier::new(4));
            let handles: Vec<_> = (0..4)
                .map(|t| {
                    let (store, wins, barrier) = (store.clone(), wins.clone(), barrier.clone());
                    std::thread::spawn(move || {
                        barrier.wait();
                        if let Some(h) = store.try_lock(id, t + 10) {
                            wins.fetch_add(1, Ordering::SeqCst);
                            // Never unlocked: the others must all lose.
                            let _ = h;
                        }
                    })
                })
                .collect();
            for h in handles {
                h.join().unwrap();
            }
            assert_eq!(wins.load(Ordering::SeqCst), 1);
        }
    }

    #[test]
    fn unlock_publishes_writes() {
        let store = Arc::new(Store::new());
        let id = store.alloc_locked(0, vec![Value::Int(0)], 1).unlock();
        let writer = {
            let store = store.clone();
            std::thread::spawn(move || {
                let mut h = loop {
                    if let Some(h) = store.try_lock(id, 2) {
                        break h;
                    }
                };
                h.fields_mut()[0] = Value::Int(6);
                h.unlock();
            })
        };
        writer.join().unwrap();
        let h = store.try_lock(id, 3).unwrap();
        assert_eq!(h.field(0), Value::Int(6));
        h.unlock();
    }

    #[test]
    #[cfg(debug_assertions)]
    #[should_panic(expected = "held by activation")]
    fn foreign_owner_is_detected() {
        let store = Store::new();
        let h = store.alloc_locked(0, vec![], 7);
        h.assert_owner(8);
    }

    #[test]
    fn snapshot_roundtrip() {
        let store = Store::new();
        let a = store
            .alloc_locked(1, vec![Value::Int(3), Value::Nil], 1)
            .unlock();
        let _b = store.alloc_locked(0, vec![Value::Ref(a)], 5);
        let snap = store.snapshot();
        assert_eq!(
            snap[1].locked,
            Some(if cfg!(debug_assertions) { 5 } else { 0 })
        );
        let again = Store::from_snapshot(&snap);
        assert_eq!(again.snapshot(), snap);
    }
}
