use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferStatus {
    pub fill: usize,
    pub is_full: bool,
    pub pending: usize,
}

/// Bounded store of novel samples. Pushes beyond capacity wait in an
/// overflow queue and are promoted, in arrival order, on the next drain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    pending: VecDeque<T>,
}

impl<T> NoveltyBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::validation("novelty buffer capacity must be positive"));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity),
            pending: VecDeque::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn pending(&self) -> impl Iterator<Item = &T> {
        self.pending.iter()
    }

    pub fn items_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.items.iter_mut().chain(self.pending.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    pub fn status(&self) -> BufferStatus {
        BufferStatus {
            fill: self.items.len(),
            is_full: self.is_full(),
            pending: self.pending.len(),
        }
    }

    pub fn push(&mut self, item: T) -> BufferStatus {
        if self.is_full() || !self.pending.is_empty() {
            self.pending.push_back(item);
        } else {
            self.items.push(item);
        }
        self.status()
    }

    /// Empties the buffer, returning its items in arrival order, then
    /// refills it from the overflow queue.
    pub fn drain(&mut self) -> Vec<T> {
        let drained = std::mem::take(&mut self.items);
        self.promote();
        drained
    }

    /// Discards buffer and overflow contents, returning both in arrival order.
    pub fn clear_all(&mut self) -> Vec<T> {
        let mut all = std::mem::take(&mut self.items);
        all.extend(self.pending.drain(..));
        all
    }

    /// Changes capacity. Items beyond a smaller capacity move to the front
    /// of the overflow queue; a larger capacity pulls pending items in.
    pub fn set_capacity(&mut self, capacity: usize) -> Result<BufferStatus> {
        if capacity == 0 {
            return Err(Error::validation("novelty buffer capacity must be positive"));
        }
        self.capacity = capacity;
        if self.items.len() > capacity {
            for item in self.items.drain(capacity..).rev() {
                self.pending.push_front(item);
            }
        }
        self.promote();
        Ok(self.status())
    }

    fn promote(&mut self) {
        while self.items.len() < self.capacity {
            match self.pending.pop_front() {
                Some(item) => self.items.push(item),
                None => break,
            }
        }
    }
}

/// Unbounded store of familiar samples, optionally capped (oldest evicted first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamiliarityBuffer<T> {
    retention_cap: Option<usize>,
    items: VecDeque<T>,
}

impl<T> FamiliarityBuffer<T> {
    pub fn new(retention_cap: Option<usize>) -> Self {
        Self {
            retention_cap,
            items: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn retention_cap(&self) -> Option<usize> {
        self.retention_cap
    }

    pub fn items(&self) -> impl ExactSizeIterator<Item = &T> + DoubleEndedIterator {
        self.items.iter()
    }

    pub fn items_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.items.iter_mut()
    }

    pub fn get(&self, index: usize) -> Option<&T> {
        self.items.get(index)
    }

    /// Never reports full. Returns samples evicted by the retention cap.
    pub fn push(&mut self, item: T) -> (BufferStatus, Vec<T>) {
        self.items.push_back(item);
        let evicted = self.enforce_cap();
        (
            BufferStatus {
                fill: self.items.len(),
                is_full: false,
                pending: 0,
            },
            evicted,
        )
    }

    pub fn set_retention_cap(&mut self, cap: Option<usize>) -> Vec<T> {
        self.retention_cap = cap;
        self.enforce_cap()
    }

    pub fn drain(&mut self) -> Vec<T> {
        self.items.drain(..).collect()
    }

    fn enforce_cap(&mut self) -> Vec<T> {
        let mut evicted = Vec::new();
        if let Some(cap) = self.retention_cap {
            while self.items.len() > cap {
                evicted.extend(self.items.pop_front());
            }
        }
        evicted
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_to_capacity() {
        let mut b = NoveltyBuffer::new(3).unwrap();
        b.push('a');
        b.push('b');
        let s = b.push('c');
        assert!(s.is_full);
        assert_eq!(s.fill, 3);
    }

    #[test]
    fn overflow_goes_pending() {
        let mut b = NoveltyBuffer::new(3).unwrap();
        for c in ['a', 'b', 'c'] {
            b.push(c);
        }
        let s = b.push('d');
        assert_eq!(s.pending, 1);
        assert_eq!(b.items(), &['a', 'b', 'c']);
    }

    #[test]
    fn drain_is_fifo_and_promotes_pending() {
        let mut b = NoveltyBuffer::new(3).unwrap();
        for c in ['a', 'b', 'c', 'd', 'e'] {
            b.push(c);
        }
        assert_eq!(b.drain(), vec!['a', 'b', 'c']);
        assert_eq!(b.items(), &['d', 'e']);
        assert_eq!(b.status().pending, 0);
        assert_eq!(b.drain(), vec!['d', 'e']);
        assert!(b.drain().is_empty());
    }

    #[test]
    fn pushes_queue_behind_pending_until_drained() {
        let mut b = NoveltyBuffer::new(2).unwrap();
        for c in ['a', 'b', 'c'] {
            b.push(c);
        }
        b.set_capacity(4).unwrap();
        assert_eq!(b.items(), &['a', 'b', 'c']);
        b.push('d');
        assert_eq!(b.items(), &['a', 'b', 'c', 'd']);
    }

    #[test]
    fn shrinking_moves_newest_items_to_pending_front() {
        let mut b = NoveltyBuffer::new(4).unwrap();
        for c in ['a', 'b', 'c', 'd', 'e'] {
            b.push(c);
        }
        let s = b.set_capacity(2).unwrap();
        assert!(s.is_full);
        assert_eq!(b.items(), &['a', 'b']);
        assert_eq!(b.pending().copied().collect::<Vec<_>>(), vec!['c', 'd', 'e']);
        assert_eq!(b.drain(), vec!['a', 'b']);
        assert_eq!(b.items(), &['c', 'd']);
    }

    #[test]
    fn zero_capacity_invalid() {
        assert!(NoveltyBuffer::<u8>::new(0).is_err());
    }

    #[test]
    fn familiarity_never_full() {
        let mut f = FamiliarityBuffer::new(None);
        for i in 0..1000 {
            assert!(!f.push(i).0.is_full);
        }
        assert_eq!(f.len(), 1000);
    }

    #[test]
    fn familiarity_cap_evicts_oldest() {
        let mut f = FamiliarityBuffer::new(Some(2));
        f.push(1);
        f.push(2);
        let (_, evicted) = f.push(3);
        assert_eq!(evicted, vec![1]);
        assert_eq!(f.items().copied().collect::<Vec<_>>(), vec![2, 3]);
    }
}
