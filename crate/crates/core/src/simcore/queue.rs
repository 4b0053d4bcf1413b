use std::collections::BTreeMap;

use super::SimTime;

/// Queue lanes. Controller traffic has its own lane and sequence counter so
/// that it can never shift the numbering of network events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Lane {
    Controller,
    Network,
}

/// Position of an event: ordered by time, then lane, then per-lane sequence
/// number assigned at scheduling time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventKey {
    pub time: SimTime,
    pub lane: Lane,
    pub seq: u64,
}

/// Priority queue with cancellation.
#[derive(Debug, Clone)]
pub struct EventQueue<E> {
    pending: BTreeMap<EventKey, E>,
    next_seq: [u64; 2],
    popped: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self {
            pending: BTreeMap::new(),
            next_seq: [0; 2],
            popped: 0,
        }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: SimTime, lane: Lane, event: E) -> EventKey {
        let counter = &mut self.next_seq[lane as usize];
        let key = EventKey { time, lane, seq: *counter };
        *counter += 1;
        self.pending.insert(key, event);
        key
    }

    pub fn cancel(&mut self, key: EventKey) -> Option<E> {
        self.pending.remove(&key)
    }

    pub fn peek_key(&self) -> Option<EventKey> {
        self.pending.keys().next().copied()
    }

    pub fn pop(&mut self) -> Option<(EventKey, E)> {
        let next = self.pending.pop_first();
        if next.is_some() {
            self.popped += 1;
        }
        next
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Events executed so far.
    pub fn popped(&self) -> u64 {
        self.popped
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_time_then_lane_then_seq() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(10), Lane::Network, "b");
        q.schedule(SimTime(5), Lane::Network, "a");
        q.schedule(SimTime(10), Lane::Network, "c");
        q.schedule(SimTime(10), Lane::Controller, "ctl");
        let order: Vec<_> = std::iter::from_fn(|| q.pop().map(|(_, e)| e)).collect();
        assert_eq!(order, vec!["a", "ctl", "b", "c"]);
        assert_eq!(q.popped(), 4);
    }

    #[test]
    fn lanes_number_independently() {
        let mut q = EventQueue::new();
        let a = q.schedule(SimTime(1), Lane::Network, ());
        q.schedule(SimTime(1), Lane::Controller, ());
        let b = q.schedule(SimTime(1), Lane::Network, ());
        assert_eq!((a.seq, b.seq), (0, 1));
    }

    #[test]
    fn cancelled_events_never_run() {
        let mut q = EventQueue::new();
        let k = q.schedule(SimTime(1), Lane::Network, 1);
        q.schedule(SimTime(2), Lane::Network, 2);
        assert_eq!(q.cancel(k), Some(1));
        assert_eq!(q.cancel(k), None);
        assert_eq!(q.pop().map(|(_, e)| e), Some(2));
        assert!(q.is_empty());
    }
}
