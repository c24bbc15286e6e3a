use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::env::Matured;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Matured,
    Imputed,
    DoublyRobust,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub s: usize,
    pub a: usize,
    pub reward_target: f64,
    pub s_next: usize,
    pub provenance: Provenance,
    /// Decision epoch.
    pub epoch: usize,
    /// No bootstrap from `s_next`.
    pub terminal: bool,
    /// Some outcome was resolved early at episode end.
    pub forced: bool,
    /// Clock value at which the record became available for learning.
    pub available_at: usize,
}

/// Stable reference to a replay slot; stale once the slot is overwritten.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Handle {
    pub slot: usize,
    pub generation: u64,
}

pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<(TransitionRecord, u64)>,
    head: usize,
    pushes: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), head: 0, pushes: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, rec: TransitionRecord) -> Handle {
        let generation = self.pushes;
        self.pushes += 1;
        let slot = if self.items.len() < self.capacity {
            self.items.push((rec, generation));
            self.items.len() - 1
        } else {
            let slot = self.head;
            self.items[slot] = (rec, generation);
            self.head = (self.head + 1) % self.capacity;
            slot
        };
        Handle { slot, generation }
    }

    pub fn get_mut(&mut self, h: Handle) -> Option<&mut TransitionRecord> {
        match self.items.get_mut(h.slot) {
            Some((rec, g)) if *g == h.generation => Some(rec),
            _ => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransitionRecord> {
        self.items.iter().map(|(r, _)| r)
    }

    /// Uniform batch, distinct slots.
    pub fn sample(&self, batch: usize, rng: &mut Rng) -> Result<Vec<TransitionRecord>> {
        if batch == 0 || batch > self.items.len() {
            return Err(Error::Invalid(format!("cannot draw {batch} from {} records", self.items.len())));
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), batch)
            .into_iter()
            .map(|i| self.items[i].0.clone())
            .collect())
    }
}

struct Held {
    rec: TransitionRecord,
    outstanding: usize,
}

/// Holds partial transitions until every order they created has matured.
#[derive(Default)]
pub struct MaturityBuffer {
    held: BTreeMap<u64, Held>,
    by_order: HashMap<u64, u64>,
    /// Release epoch -> held transitions due then.
    by_maturity: BTreeMap<usize, Vec<u64>>,
    next: u64,
}

impl MaturityBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.held.len()
    }

    pub fn is_empty(&self) -> bool {
        self.held.is_empty()
    }

    /// Transitions due at `epoch` under their nominal delays.
    pub fn due_at(&self, epoch: usize) -> usize {
        self.by_maturity.get(&epoch).map_or(0, Vec::len)
    }

    /// Holds `(s, a, s', r_imm)` until `orders` (id, maturity epoch) resolve.
    /// A transition without orders is released at once.
    #[allow(clippy::too_many_arguments)]
    pub fn hold(
        &mut self,
        s: usize,
        a: usize,
        s_next: usize,
        r_imm: f64,
        epoch: usize,
        terminal: bool,
        orders: &[(u64, usize)],
    ) -> Option<TransitionRecord> {
        let rec = TransitionRecord {
            s,
            a,
            reward_target: r_imm,
            s_next,
            provenance: Provenance::Matured,
            epoch,
            terminal,
            forced: false,
            available_at: epoch,
        };
        if orders.is_empty() {
            return Some(rec);
        }
        let key = self.next;
        self.next += 1;
        for (id, _) in orders {
            self.by_order.insert(*id, key);
        }
        let due = orders.iter().map(|o| o.1).max().unwrap_or(epoch);
        self.by_maturity.entry(due).or_default().push(key);
        self.held.insert(key, Held { rec, outstanding: orders.len() });
        None
    }

    /// Applies outcomes revealed when the clock reads `clock` and releases
    /// every transition that is now complete, oldest first.
    pub fn admit(&mut self, clock: usize, matured: &[Matured]) -> Result<Vec<TransitionRecord>> {
        if let Some(m) = matured.iter().find(|m| !self.by_order.contains_key(&m.id)) {
            return Err(Error::OrderMismatch(format!("order {} is not held", m.id)));
        }
        let mut done = Vec::new();
        for m in matured {
            let key = self.by_order.remove(&m.id).expect("checked above");
            let h = self.held.get_mut(&key).expect("held transition");
            h.rec.reward_target += m.revenue;
            h.rec.forced |= m.forced;
            h.outstanding -= 1;
            if h.outstanding == 0 {
                done.push(key);
            }
        }
        done.sort_unstable();
        let mut out = Vec::with_capacity(done.len());
        for key in done {
            let mut h = self.held.remove(&key).expect("held transition");
            h.rec.available_at = clock;
            out.push(h.rec);
        }
        self.by_maturity.retain(|_, keys| {
            keys.retain(|k| self.held.contains_key(k));
            !keys.is_empty()
        });
        Ok(out)
    }
}
