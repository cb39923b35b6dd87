//! Deterministic discrete-event engine.
//!
//! Events are totally ordered by `(fire_time, priority, seq)`. `seq` is the
//! insertion counter, so two runs that schedule the same events in the same
//! order replay identically.

use alloc::collections::{BTreeSet, BinaryHeap};
use core::cmp::Ordering;
use core::fmt;

use crate::time::SimTime;

/// Event priority classes. Lower fires first at equal time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Priority {
    LinkArrival = 0,
    Mac = 1,
    Traffic = 2,
    Metrics = 3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelError {
    SchedulingInPast { now: SimTime, requested: SimTime },
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelError::SchedulingInPast { now, requested } => {
                write!(f, "cannot schedule at {requested}, clock is already at {now}")
            }
        }
    }
}

/// A scheduled unit of work.
#[derive(Clone, Debug)]
pub struct SimEvent<A> {
    pub fire_time: SimTime,
    pub priority: Priority,
    pub seq: u64,
    pub action: A,
}

impl<A> SimEvent<A> {
    fn key(&self) -> (SimTime, Priority, u64) {
        (self.fire_time, self.priority, self.seq)
    }
}

impl<A> PartialEq for SimEvent<A> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<A> Eq for SimEvent<A> {}

impl<A> PartialOrd for SimEvent<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for SimEvent<A> {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse for earliest-first.
        other.key().cmp(&self.key())
    }
}

/// Clock plus pending-event queue.
pub struct Scheduler<A> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<SimEvent<A>>,
    cancelled: BTreeSet<u64>,
    last_fired: Option<SimTime>,
}

impl<A> Default for Scheduler<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> Scheduler<A> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            cancelled: BTreeSet::new(),
            last_fired: None,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn schedule(&mut self, t: SimTime, priority: Priority, action: A) -> Result<EventId, KernelError> {
        if t < self.now {
            return Err(KernelError::SchedulingInPast { now: self.now, requested: t });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent { fire_time: t, priority, seq, action });
        Ok(EventId(seq))
    }

    /// Returns `true` if the event was still pending.
    pub fn cancel(&mut self, id: EventId) -> bool {
        if id.0 >= self.next_seq {
            return false;
        }
        if self.heap.iter().any(|e| e.seq == id.0) {
            self.cancelled.insert(id.0)
        } else {
            false
        }
    }

    /// Pops the next live event with `fire_time <= t_end` and advances the
    /// clock to it.
    pub fn pop_due(&mut self, t_end: SimTime) -> Option<SimEvent<A>> {
        loop {
            let head = self.heap.peek()?;
            if head.fire_time > t_end {
                return None;
            }
            let ev = self.heap.pop()?;
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            debug_assert!(self.last_fired.map_or(true, |t| t <= ev.fire_time));
            self.now = ev.fire_time;
            self.last_fired = Some(ev.fire_time);
            return Some(ev);
        }
    }

    /// Fires every event with `fire_time <= t_end`, in order, and leaves the
    /// clock at `t_end`. Handlers may schedule further events, including at
    /// the current instant.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, SimEvent<A>),
    {
        let mut fired = 0;
        while let Some(ev) = self.pop_due(t_end) {
            handler(self, ev);
            fired += 1;
        }
        if self.now < t_end {
            self.now = t_end;
        }
        fired
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn equal_time_ties_break_by_insertion() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::ZERO, Priority::Mac, 'A').unwrap();
        s.schedule(SimTime::ZERO, Priority::Mac, 'B').unwrap();
        let mut order = Vec::new();
        s.run_until(SimTime::from_ms(1), |_, e| order.push(e.action));
        assert_eq!(order, ['A', 'B']);
    }

    #[test]
    fn time_order_beats_insertion() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_ms(2), Priority::Mac, 'X').unwrap();
        s.schedule(SimTime::from_ms(1), Priority::Mac, 'Y').unwrap();
        let mut order = Vec::new();
        s.run_until(SimTime::from_ms(3), |_, e| order.push(e.action));
        assert_eq!(order, ['Y', 'X']);
    }

    #[test]
    fn priority_beats_insertion_at_equal_time() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_us(125), Priority::Mac, "dba").unwrap();
        s.schedule(SimTime::from_us(125), Priority::LinkArrival, "arrival").unwrap();
        let e = s.pop_due(SimTime::MAX).unwrap();
        assert_eq!(e.action, "arrival");
    }

    #[test]
    fn past_scheduling_is_rejected() {
        let mut s: Scheduler<()> = Scheduler::new();
        s.run_until(SimTime::from_ms(5), |_, _| {});
        let err = s.schedule(SimTime::from_ms(4), Priority::Mac, ()).unwrap_err();
        assert_eq!(
            err,
            KernelError::SchedulingInPast { now: SimTime::from_ms(5), requested: SimTime::from_ms(4) }
        );
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut s: Scheduler<()> = Scheduler::new();
        assert_eq!(s.run_until(SimTime::from_secs_f64(1.0), |_, _| {}), 0);
        assert_eq!(s.now(), SimTime::from_secs_f64(1.0));
    }

    #[test]
    fn run_until_stops_at_horizon() {
        let mut s = Scheduler::new();
        for ms in [100u64, 200, 300] {
            s.schedule(SimTime::from_ms(ms), Priority::Mac, ms).unwrap();
        }
        assert_eq!(s.run_until(SimTime::from_ms(250), |_, _| {}), 2);
        assert_eq!(s.now(), SimTime::from_ms(250));
        assert_eq!(s.pending(), 1);
    }

    #[test]
    fn zero_delay_follow_up_fires_in_same_run() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_ms(1), Priority::Mac, 0u32).unwrap();
        s.schedule(SimTime::from_ms(1), Priority::Mac, 1u32).unwrap();
        let mut order = Vec::new();
        s.run_until(SimTime::from_ms(2), |sched, e| {
            order.push(e.action);
            if e.action == 0 {
                let now = sched.now();
                sched.schedule(now, Priority::Mac, 2).unwrap();
            }
        });
        assert_eq!(order, [0, 1, 2]);
    }

    #[test]
    fn cancelled_events_do_not_fire() {
        let mut s = Scheduler::new();
        let a = s.schedule(SimTime::from_ms(1), Priority::Mac, 'a').unwrap();
        s.schedule(SimTime::from_ms(2), Priority::Mac, 'b').unwrap();
        assert!(s.cancel(a));
        assert!(!s.cancel(a));
        let mut order = Vec::new();
        s.run_until(SimTime::from_ms(3), |_, e| order.push(e.action));
        assert_eq!(order, ['b']);
    }
}
