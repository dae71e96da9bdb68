use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::Digest;

/// Used-token sets. Request and report identifiers are kept per task, credit
/// preimages per window.
#[derive(Debug, Clone, Default)]
pub struct TokenLedger {
    used_request: BTreeMap<u64, BTreeSet<Digest>>,
    used_report: BTreeMap<u64, BTreeSet<Digest>>,
    used_credit: BTreeMap<u64, BTreeSet<Vec<u8>>>,
    peak_total: usize,
    peak_credit: usize,
}

/// Current ledger sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct LedgerCounts {
    pub request: usize,
    pub report: usize,
    pub credit: usize,
}

impl LedgerCounts {
    pub fn total(&self) -> usize {
        self.request + self.report + self.credit
    }
}

impl TokenLedger {
    pub fn contains_request(&self, task: u64, id: &Digest) -> bool {
        self.used_request.get(&task).is_some_and(|s| s.contains(id))
    }

    pub fn contains_report(&self, task: u64, id: &Digest) -> bool {
        self.used_report.get(&task).is_some_and(|s| s.contains(id))
    }

    pub fn contains_credit(&self, window: u64, m: &[u8]) -> bool {
        self.used_credit.get(&window).is_some_and(|s| s.contains(m))
    }

    /// Returns false if already present.
    pub fn insert_request(&mut self, task: u64, id: Digest) -> bool {
        let fresh = self.used_request.entry(task).or_default().insert(id);
        self.track();
        fresh
    }

    pub fn insert_report(&mut self, task: u64, id: Digest) -> bool {
        let fresh = self.used_report.entry(task).or_default().insert(id);
        self.track();
        fresh
    }

    pub fn insert_credit(&mut self, window: u64, m: Vec<u8>) -> bool {
        let fresh = self.used_credit.entry(window).or_default().insert(m);
        self.track();
        fresh
    }

    /// Drops the request and report identifiers of one task.
    pub fn release_task(&mut self, task: u64) {
        self.used_request.remove(&task);
        self.used_report.remove(&task);
    }

    pub fn release_window_credits(&mut self, window: u64) {
        self.used_credit.remove(&window);
    }

    pub fn counts(&self) -> LedgerCounts {
        LedgerCounts {
            request: self.used_request.values().map(BTreeSet::len).sum(),
            report: self.used_report.values().map(BTreeSet::len).sum(),
            credit: self.used_credit.values().map(BTreeSet::len).sum(),
        }
    }

    pub fn credit_count(&self, window: u64) -> usize {
        self.used_credit.get(&window).map_or(0, BTreeSet::len)
    }

    /// Largest total size seen so far.
    pub fn peak_total(&self) -> usize {
        self.peak_total
    }

    pub fn peak_credit(&self) -> usize {
        self.peak_credit
    }

    fn track(&mut self) {
        let c = self.counts();
        self.peak_total = self.peak_total.max(c.total());
        self.peak_credit = self.peak_credit.max(c.credit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_once_and_release_rules() {
        let mut l = TokenLedger::default();
        assert!(l.insert_request(1, Digest([1; 32])));
        assert!(!l.insert_request(1, Digest([1; 32])));
        assert!(l.insert_request(2, Digest([1; 32])));
        assert!(l.insert_report(1, Digest([2; 32])));
        assert!(l.insert_credit(0, vec![1, 2]));
        assert!(!l.insert_credit(0, vec![1, 2]));
        assert!(l.insert_credit(1, vec![1, 2]));

        l.release_task(1);
        assert!(!l.contains_request(1, &Digest([1; 32])));
        assert!(l.contains_request(2, &Digest([1; 32])));
        assert!(!l.contains_report(1, &Digest([2; 32])));
        assert_eq!(l.counts().credit, 2);

        l.release_window_credits(0);
        assert!(!l.contains_credit(0, &[1, 2]));
        assert!(l.contains_credit(1, &[1, 2]));
        assert_eq!(l.peak_total(), 5);
        assert_eq!(l.peak_credit(), 2);
    }
}
