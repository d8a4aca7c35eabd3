//! Client-selection strategies.
//!
//! [`select_fedentopt`] builds a cohort greedily: after a uniformly random
//! first pick, every subsequent pick maximizes the Shannon entropy of the
//! cohort's combined label distribution. A FIFO buffer of recently selected
//! clients is excluded from the candidate pool, which keeps the otherwise
//! deterministic greedy from converging onto one fixed subset.
//! [`select_random`] is the uniform baseline; it reports cohort entropy the
//! same way so the two are directly comparable.

use crate::error::{Error, Result};
use crate::labelstats::{self, ClientId, LabelCounts};
use rand::Rng;
use std::collections::VecDeque;
use std::io::Write;

/// The server's pre-training view: one label-count vector per client.
///
/// When differential privacy is enabled the registry is built from the
/// privatized vectors; raw counts never enter it.
#[derive(Debug, Clone)]
pub struct ClientRegistry {
    counts: Vec<LabelCounts>,
    num_classes: usize,
}

impl ClientRegistry {
    /// Build a registry from per-client counts, id = position.
    ///
    /// Every client must have positive total mass to be admissible for
    /// selection, and all vectors must agree on the class count.
    pub fn new(counts: Vec<LabelCounts>) -> Result<Self> {
        let first = counts
            .first()
            .ok_or_else(|| Error::Domain("registry needs at least one client".into()))?;
        let num_classes = first.num_classes();
        for (client, c) in counts.iter().enumerate() {
            if c.num_classes() != num_classes {
                return Err(Error::Dimension {
                    expected: num_classes,
                    got: c.num_classes(),
                });
            }
            if c.total() <= 0.0 {
                return Err(Error::Domain(format!(
                    "client {client} has zero label mass"
                )));
            }
        }
        Ok(Self {
            counts,
            num_classes,
        })
    }

    pub fn num_clients(&self) -> usize {
        self.counts.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn counts(&self, id: ClientId) -> &LabelCounts {
        &self.counts[id.index()]
    }

    pub fn ids(&self) -> impl Iterator<Item = ClientId> {
        (0..self.counts.len() as u64).map(ClientId)
    }
}

/// FIFO buffer of recently selected clients, excluded from selection.
///
/// Capacity 0 disables the exclusion entirely. With capacity `Q <= K - M`
/// a round of `M` picks can never starve; configurations beyond that bound
/// must opt into starvation relief, which evicts oldest entries early when
/// the pool runs dry mid-round.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionState {
    buffer: VecDeque<ClientId>,
    capacity: usize,
    relax_on_starvation: bool,
}

impl SelectionState {
    pub fn new(capacity: usize) -> Self {
        Self {
            buffer: VecDeque::new(),
            capacity,
            relax_on_starvation: false,
        }
    }

    /// Like [`SelectionState::new`], but a starved pick evicts oldest buffer
    /// entries until a candidate becomes available instead of failing.
    pub fn with_starvation_relief(capacity: usize) -> Self {
        Self {
            relax_on_starvation: true,
            ..Self::new(capacity)
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn buffer(&self) -> impl Iterator<Item = ClientId> + '_ {
        self.buffer.iter().copied()
    }

    fn contains(&self, id: ClientId) -> bool {
        self.buffer.contains(&id)
    }

    /// Eviction-then-append, once per pick: drop the oldest entry if the
    /// buffer is at capacity, then record the pick.
    fn record_pick(&mut self, id: ClientId) {
        if self.capacity == 0 {
            return;
        }
        if self.buffer.len() >= self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(id);
    }

    fn evict_oldest(&mut self) -> Option<ClientId> {
        self.buffer.pop_front()
    }
}

/// One greedy pick: the chosen client and the cohort entropy right after it.
#[derive(Debug, Clone, PartialEq)]
pub struct PickRecord {
    pub client_id: ClientId,
    pub entropy_bits: f64,
}

/// A selected cohort with its combined-label-distribution entropy and the
/// per-pick trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub cohort: Vec<ClientId>,
    pub cohort_entropy: f64,
    pub trace: Vec<PickRecord>,
}

/// Entropy (bits) of the normalized sum of `running` and `candidate`.
fn entropy_after_adding(running: &LabelCounts, candidate: &LabelCounts) -> f64 {
    let total = running.total() + candidate.total();
    let mut h = 0.0;
    for (a, b) in running.as_slice().iter().zip(candidate.as_slice()) {
        let c = a + b;
        if c > 0.0 {
            let p = c / total;
            h -= p * p.log2();
        }
    }
    h.max(0.0)
}

/// Entropy-greedy cohort selection with FIFO exclusion.
///
/// The first pick is uniform over the clients outside the buffer; each later
/// pick maximizes the entropy of the combined label distribution over the
/// clients that are neither picked this round nor currently buffered, ties
/// broken by the lowest client id. The buffer is updated after every pick.
pub fn select_fedentopt<R: Rng + ?Sized>(
    registry: &ClientRegistry,
    cohort_size: usize,
    state: &mut SelectionState,
    rng: &mut R,
) -> Result<SelectionResult> {
    let num_clients = registry.num_clients();
    if cohort_size == 0 {
        return Err(Error::Domain("cohort size must be at least 1".into()));
    }
    if cohort_size > num_clients {
        return Err(Error::Domain(format!(
            "cohort size {cohort_size} exceeds the {num_clients} registered clients"
        )));
    }

    let mut picked = vec![false; num_clients];
    let mut running = LabelCounts::zeros(registry.num_classes());
    let mut cohort = Vec::with_capacity(cohort_size);
    let mut trace = Vec::with_capacity(cohort_size);

    for _ in 0..cohort_size {
        // Availability is recomputed per pick: clients evicted from the
        // buffer mid-round rejoin the pool, clients picked this round never do.
        let mut candidates: Vec<ClientId> = registry
            .ids()
            .filter(|id| !picked[id.index()] && !state.contains(*id))
            .collect();
        while candidates.is_empty() {
            if !state.relax_on_starvation {
                return Err(Error::Infeasible(
                    "no selectable clients left; buffer capacity exceeds K - M".into(),
                ));
            }
            match state.evict_oldest() {
                Some(id) if !picked[id.index()] => candidates.push(id),
                Some(_) => continue,
                None => {
                    return Err(Error::Infeasible(
                        "selection pool exhausted even with an empty buffer".into(),
                    ))
                }
            }
        }

        let chosen = if cohort.is_empty() {
            candidates[rng.random_range(0..candidates.len())]
        } else {
            // Candidates iterate in ascending id order, and only a strictly
            // greater entropy replaces the incumbent: ties go to the lowest id.
            let mut best = candidates[0];
            let mut best_entropy = entropy_after_adding(&running, registry.counts(best));
            for &id in &candidates[1..] {
                let h = entropy_after_adding(&running, registry.counts(id));
                if h > best_entropy {
                    best = id;
                    best_entropy = h;
                }
            }
            best
        };

        state.record_pick(chosen);
        running.add_assign(registry.counts(chosen))?;
        picked[chosen.index()] = true;
        cohort.push(chosen);
        trace.push(PickRecord {
            client_id: chosen,
            entropy_bits: labelstats::entropy(&labelstats::normalize(&running)?),
        });
    }

    let cohort_entropy = trace.last().expect("cohort_size >= 1").entropy_bits;
    Ok(SelectionResult {
        cohort,
        cohort_entropy,
        trace,
    })
}

/// Uniform-random baseline: `cohort_size` distinct clients, each subset
/// equally likely. Cohort entropy is reported exactly as in
/// [`select_fedentopt`] so the two strategies are comparable.
pub fn select_random<R: Rng + ?Sized>(
    registry: &ClientRegistry,
    cohort_size: usize,
    rng: &mut R,
) -> Result<SelectionResult> {
    let num_clients = registry.num_clients();
    if cohort_size == 0 {
        return Err(Error::Domain("cohort size must be at least 1".into()));
    }
    if cohort_size > num_clients {
        return Err(Error::Domain(format!(
            "cohort size {cohort_size} exceeds the {num_clients} registered clients"
        )));
    }

    let drawn = rand::seq::index::sample(rng, num_clients, cohort_size);
    let mut running = LabelCounts::zeros(registry.num_classes());
    let mut cohort = Vec::with_capacity(cohort_size);
    let mut trace = Vec::with_capacity(cohort_size);
    for ix in drawn.iter() {
        let id = ClientId(ix as u64);
        running.add_assign(registry.counts(id))?;
        cohort.push(id);
        trace.push(PickRecord {
            client_id: id,
            entropy_bits: labelstats::entropy(&labelstats::normalize(&running)?),
        });
    }
    let cohort_entropy = trace.last().expect("cohort_size >= 1").entropy_bits;
    Ok(SelectionResult {
        cohort,
        cohort_entropy,
        trace,
    })
}

/// Reference evaluation of one greedy step, written independently of
/// [`select_fedentopt`]: exhaustively scores every client outside
/// `picked`/`excluded` and returns the entropy maximizer, ties to the lowest
/// id. Intended for validating the selector pick by pick.
pub fn greedy_step_oracle(
    registry: &ClientRegistry,
    picked: &[ClientId],
    excluded: &[ClientId],
    running: &LabelCounts,
) -> Result<ClientId> {
    let mut best: Option<(ClientId, f64)> = None;
    for id in registry.ids() {
        if picked.contains(&id) || excluded.contains(&id) {
            continue;
        }
        let candidate = registry.counts(id);
        let total = running.total() + candidate.total();
        let mut h = 0.0;
        for (a, b) in running.as_slice().iter().zip(candidate.as_slice()) {
            let c = a + b;
            if c > 0.0 {
                let p = c / total;
                h -= p * p.log2();
            }
        }
        let h = h.max(0.0);
        match best {
            Some((_, best_h)) if h <= best_h => {}
            _ => best = Some((id, h)),
        }
    }
    best.map(|(id, _)| id)
        .ok_or_else(|| Error::Infeasible("no candidates outside picked/excluded".into()))
}

/// One row of the selection trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub round: usize,
    pub pick_index: usize,
    pub client_id: ClientId,
    pub entropy_bits: f64,
}

pub const TRACE_HEADER: &str = "round,pick_index,client_id,entropy_bits";

/// Write the selection trace CSV (`round,pick_index,client_id,entropy_bits`,
/// entropies with six decimal places).
pub fn write_selection_trace<W: Write>(writer: &mut W, rows: &[TraceRow]) -> std::io::Result<()> {
    writeln!(writer, "{TRACE_HEADER}")?;
    for row in rows {
        writeln!(
            writer,
            "{},{},{},{:.6}",
            row.round, row.pick_index, row.client_id, row.entropy_bits
        )?;
    }
    Ok(())
}

/// Flatten a round's picks into trace rows.
pub fn trace_rows(round: usize, result: &SelectionResult) -> Vec<TraceRow> {
    result
        .trace
        .iter()
        .enumerate()
        .map(|(pick_index, pick)| TraceRow {
            round,
            pick_index,
            client_id: pick.client_id,
            entropy_bits: pick.entropy_bits,
        })
        .collect()
}
