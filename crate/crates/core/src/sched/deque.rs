//! Chase-Lev work-stealing deque.
//!
//! The owner pushes and pops at the bottom; thieves steal from the top.
//! The ring grows on demand. Retired rings are kept until the deque is
//! dropped because a thief may still be reading one.

use std::cell::UnsafeCell;
use std::marker::PhantomData;
use std::sync::atomic::{fence, AtomicIsize, AtomicPtr, AtomicUsize, Ordering};
use std::sync::Arc;

/// Values that fit in one machine word.
pub trait Word: Sized {
    fn into_word(self) -> usize;
    /// # Safety
    /// `w` must come from `into_word` and be converted back at most once.
    unsafe fn from_word(w: usize) -> Self;
}

impl Word for usize {
    fn into_word(self) -> usize {
        self
    }
    unsafe fn from_word(w: usize) -> Self {
        w
    }
}

struct Ring {
    slots: Box<[AtomicUsize]>,
    mask: isize,
}

impl Ring {
    fn new(cap: usize) -> Box<Ring> {
        debug_assert!(cap.is_power_of_two());
        Box::new(Ring {
            slots: (0..cap).map(|_| AtomicUsize::new(0)).collect(),
            mask: cap as isize - 1,
        })
    }

    fn cap(&self) -> isize {
        self.mask + 1
    }

    fn get(&self, i: isize) -> usize {
        self.slots[(i & self.mask) as usize].load(Ordering::Relaxed)
    }

    fn put(&self, i: isize, w: usize) {
        self.slots[(i & self.mask) as usize].store(w, Ordering::Relaxed)
    }
}

struct Inner<T> {
    top: AtomicIsize,
    bottom: AtomicIsize,
    ring: AtomicPtr<Ring>,
    /// Owner only. Boxed so thieves' pointers stay valid when this grows.
    #[allow(clippy::vec_box)]
    retired: UnsafeCell<Vec<Box<Ring>>>,
    _marker: PhantomData<T>,
}

// SAFETY: `retired` is touched only by the owner handle (and by Drop, when
// no handle remains); everything else is atomic.
unsafe impl<T: Send> Sync for Inner<T> {}
unsafe impl<T: Send> Send for Inner<T> {}

impl<T> Drop for Inner<T> {
    fn drop(&mut self) {
        // SAFETY: exclusive access; the ring pointer came from Box::into_raw.
        unsafe { drop(Box::from_raw(*self.ring.get_mut())) };
    }
}

/// Owner end. Neither `Clone` nor `Sync`: exactly one thread pushes and pops.
pub struct Worker<T: Word> {
    inner: Arc<Inner<T>>,
    _not_sync: PhantomData<std::cell::Cell<()>>,
}

/// Thief end.
pub struct Stealer<T: Word> {
    inner: Arc<Inner<T>>,
}

impl<T: Word> Clone for Stealer<T> {
    fn clone(&self) -> Self {
        Stealer {
            inner: self.inner.clone(),
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum Steal<T> {
    Empty,
    /// Lost a race with another thief or the owner; try again.
    Retry,
    Success(T),
}

const INITIAL_CAP: usize = 64;

impl<T: Word> Default for Worker<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Word> Worker<T> {
    pub fn new() -> Self {
        Worker {
            inner: Arc::new(Inner {
                top: AtomicIsize::new(0),
                bottom: AtomicIsize::new(0),
                ring: AtomicPtr::new(Box::into_raw(Ring::new(INITIAL_CAP))),
                retired: UnsafeCell::new(Vec::new()),
                _marker: PhantomData,
            }),
            _not_sync: PhantomData,
        }
    }

    pub fn stealer(&self) -> Stealer<T> {
        Stealer {
            inner: self.inner.clone(),
        }
    }

    pub fn len(&self) -> usize {
        let b = self.inner.bottom.load(Ordering::Relaxed);
        let t = self.inner.top.load(Ordering::Relaxed);
        (b - t).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn grow(&self, ring: &Ring, t: isize, b: isize) -> *mut Ring {
        let bigger = Ring::new(ring.cap() as usize * 2);
        for i in t..b {
            bigger.put(i, ring.get(i));
        }
        let new = Box::into_raw(bigger);
        let old = self.inner.ring.swap(new, Ordering::Release);
        // SAFETY: owner-only field; `old` came from Box::into_raw.
        unsafe { (*self.inner.retired.get()).push(Box::from_raw(old)) };
        new
    }

    pub fn push(&self, value: T) {
        let inner = &*self.inner;
        let b = inner.bottom.load(Ordering::Relaxed);
        let t = inner.top.load(Ordering::Acquire);
        let mut ring = inner.ring.load(Ordering::Relaxed);
        // SAFETY: rings are freed only in Drop.
        if b - t >= unsafe { (*ring).cap() } {
            ring = self.grow(unsafe { &*ring }, t, b);
        }
        unsafe { (*ring).put(b, value.into_word()) };
        fence(Ordering::Release);
        inner.bottom.store(b + 1, Ordering::Relaxed);
    }

    pub fn pop(&self) -> Option<T> {
        let inner = &*self.inner;
        let b = inner.bottom.load(Ordering::Relaxed) - 1;
        let ring = inner.ring.load(Ordering::Relaxed);
        inner.bottom.store(b, Ordering::Relaxed);
        fence(Ordering::SeqCst);
        let t = inner.top.load(Ordering::Relaxed);
        if t > b {
            inner.bottom.store(b + 1, Ordering::Relaxed);
            return None;
        }
        // SAFETY: as in push.
        let w = unsafe { (*ring).get(b) };
        if t == b {
            let won = inner
                .top
                .compare_exchange(t, t + 1, Ordering::SeqCst, Ordering::Relaxed)
                .is_ok();
            inner.bottom.store(b + 1, Ordering::Relaxed);
            if !won {
                return None;
            }
        }
        // SAFETY: the slot at `b` was claimed by this pop alone.
        Some(unsafe { T::from_word(w) })
    }
}

impl<T: Word> Drop for Worker<T> {
    fn drop(&mut self) {
        while self.pop().is_some() {}
    }
}

impl<T: Word> Stealer<T> {
    pub fn steal(&self) -> Steal<T> {
        let inner = &*self.inner;
        let t = inner.top.load(Ordering::Acquire);
        fence(Ordering::SeqCst);
        let b = inner.bottom.load(Ordering::Acquire);
        if t >= b {
            return Steal::Empty;
        }
        let ring = inner.ring.load(Ordering::Acquire);
        // SAFETY: rings are freed only in Drop.
        let w = unsafe { (*ring).get(t) };
        if inner
            .top
            .compare_exchange(t, t + 1, Ordering::SeqCst, Ordering::Relaxed)
            .is_err()
        {
            return Steal::Retry;
        }
        // SAFETY: the CAS on `top` gave this thief sole claim to slot `t`.
        Steal::Success(unsafe { T::from_word(w) })
    }

    /// Approximate number of items.
    pub fn len(&self) -> usize {
        let t = self.inner.top.load(Ordering::Relaxed);
        let b = self.inner.bottom.load(Ordering::Relaxed);
        (b - t).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
