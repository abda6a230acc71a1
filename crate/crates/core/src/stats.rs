//! Per-thread event counters for silent saturation and decode fix-ups.
//!
//! Counters are thread-local so concurrent workers never contend; callers that
//! fan out work aggregate the per-thread snapshots themselves.

use std::cell::Cell;

thread_local! {
    static SATURATIONS: Cell<u64> = const { Cell::new(0) };
    static DECODE_FIXUPS: Cell<u64> = const { Cell::new(0) };
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub saturations: u64,
    pub decode_fixups: u64,
}

#[inline]
pub(crate) fn note_saturation() {
    SATURATIONS.with(|c| c.set(c.get() + 1));
}

#[inline]
pub(crate) fn note_decode_fixup() {
    DECODE_FIXUPS.with(|c| c.set(c.get() + 1));
}

pub fn snapshot() -> Counters {
    Counters {
        saturations: SATURATIONS.with(Cell::get),
        decode_fixups: DECODE_FIXUPS.with(Cell::get),
    }
}

pub fn reset() {
    SATURATIONS.with(|c| c.set(0));
    DECODE_FIXUPS.with(|c| c.set(0));
}
