//! Label-skew partitioning of a pooled labeled dataset across clients.
//!
//! Two regimes are supported: quantity-based skew, where every client holds
//! samples of exactly `j` distinct labels, and distribution-based skew, where
//! the per-class allocation proportions are drawn from a Dirichlet with
//! concentration `beta` (one draw per class, over clients). Both are
//! deterministic functions of `(labels, spec)` including the seed: every
//! class consumes its own derived RNG stream, so per-class work can be
//! reordered or parallelized without changing the result.

use crate::error::{Error, Result};
use crate::labelstats::LabelCounts;
use crate::rng;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use std::io::{BufRead, Write};

/// Which skew regime to generate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SkewKind {
    /// Every client holds samples of exactly this many distinct labels.
    Quantity { labels_per_client: usize },
    /// Per-class client proportions drawn from Dirichlet(beta).
    Dirichlet { beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub kind: SkewKind,
    pub num_clients: usize,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::Domain("need at least one client".into()));
        }
        match self.kind {
            SkewKind::Quantity { labels_per_client } => {
                if labels_per_client < 1 || labels_per_client > num_classes {
                    return Err(Error::Domain(format!(
                        "labels per client must be in 1..={num_classes}, got {labels_per_client}"
                    )));
                }
            }
            SkewKind::Dirichlet { beta } => {
                if beta <= 0.0 || !beta.is_finite() {
                    return Err(Error::Domain(format!(
                        "dirichlet beta must be > 0, got {beta}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-client lists of sample indices into the pooled dataset.
///
/// Invariant: the lists are disjoint, cover every pooled index exactly once,
/// and none is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignment: Vec<Vec<usize>>,
}

impl Partition {
    fn checked(assignment: Vec<Vec<usize>>, num_samples: usize) -> Result<Self> {
        let mut seen = vec![false; num_samples];
        for (client, samples) in assignment.iter().enumerate() {
            if samples.is_empty() {
                return Err(Error::Infeasible(format!(
                    "client {client} received no samples"
                )));
            }
            for &ix in samples {
                if ix >= num_samples || seen[ix] {
                    return Err(Error::Format(format!(
                        "sample index {ix} out of range or assigned twice"
                    )));
                }
                seen[ix] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Format(
                "assignment does not cover all samples".into(),
            ));
        }
        Ok(Self { assignment })
    }

    pub fn num_clients(&self) -> usize {
        self.assignment.len()
    }

    pub fn client_samples(&self, client: usize) -> &[usize] {
        &self.assignment[client]
    }

    pub fn assignment(&self) -> &[Vec<usize>] {
        &self.assignment
    }
}

/// Dispatch on the spec's skew kind.
pub fn generate(labels: &[usize], num_classes: usize, spec: &PartitionSpec) -> Result<Partition> {
    spec.validate(num_classes)?;
    match spec.kind {
        SkewKind::Quantity { labels_per_client } => partition_quantity(
            labels,
            num_classes,
            spec.num_clients,
            labels_per_client,
            spec.seed,
        ),
        SkewKind::Dirichlet { beta } => {
            partition_dirichlet(labels, num_classes, spec.num_clients, beta, spec.seed)
        }
    }
}

fn samples_by_class(labels: &[usize], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    let mut by_class = vec![Vec::new(); num_classes];
    for (ix, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::Format(format!(
                "label {label} out of range 0..{num_classes}"
            )));
        }
        by_class[label].push(ix);
    }
    for (class, samples) in by_class.iter().enumerate() {
        if samples.is_empty() {
            return Err(Error::EmptyClass { class });
        }
    }
    Ok(by_class)
}

/// Quantity-based skew: every client holds samples of exactly
/// `labels_per_client` distinct labels.
///
/// Classes are dealt round-robin to clients in a seeded shuffled order, so
/// every class is covered before any repeats; each class's samples are then
/// split evenly among its holders, with the remainder spread one sample per
/// holder starting from the lowest client id.
pub fn partition_quantity(
    labels: &[usize],
    num_classes: usize,
    num_clients: usize,
    labels_per_client: usize,
    seed: u64,
) -> Result<Partition> {
    let spec = PartitionSpec {
        kind: SkewKind::Quantity { labels_per_client },
        num_clients,
        seed,
    };
    spec.validate(num_classes)?;
    if labels_per_client * num_clients < num_classes {
        return Err(Error::Infeasible(format!(
            "{num_clients} clients with {labels_per_client} labels each cannot cover {num_classes} classes"
        )));
    }
    let by_class = samples_by_class(labels, num_classes)?;

    // Deal classes j at a time to clients in shuffled order, cycling through
    // the class ids. Consecutive ids mod C are distinct because j <= C.
    let mut client_order: Vec<usize> = (0..num_clients).collect();
    client_order.shuffle(&mut rng::derive_rng(seed, "quantity-client-order", &[]));
    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    let mut next_class = 0usize;
    for &client in &client_order {
        for _ in 0..labels_per_client {
            holders[next_class % num_classes].push(client);
            next_class += 1;
        }
    }

    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    for (class, class_holders) in holders.iter_mut().enumerate() {
        class_holders.sort_unstable();
        let mut samples = by_class[class].clone();
        samples.shuffle(&mut rng::derive_rng(
            seed,
            "partition-class",
            &[class as u64],
        ));

        let holders_count = class_holders.len();
        if samples.len() < holders_count {
            return Err(Error::Infeasible(format!(
                "class {class} has {} samples but {holders_count} holding clients",
                samples.len()
            )));
        }
        let base = samples.len() / holders_count;
        let remainder = samples.len() % holders_count;
        let mut cursor = 0;
        for (rank, &client) in class_holders.iter().enumerate() {
            let share = base + usize::from(rank < remainder);
            assignment[client].extend_from_slice(&samples[cursor..cursor + share]);
            cursor += share;
        }
    }

    for samples in &mut assignment {
        samples.sort_unstable();
    }
    Partition::checked(assignment, labels.len())
}

/// Distribution-based skew: for each class, client proportions are drawn
/// from Dirichlet(beta) and converted to integer sample counts by
/// largest-remainder rounding, so per-class totals are conserved exactly.
///
/// Clients that end up with no samples at all receive one sample moved from
/// the currently largest client, repeated until every client is non-empty.
pub fn partition_dirichlet(
    labels: &[usize],
    num_classes: usize,
    num_clients: usize,
    beta: f64,
    seed: u64,
) -> Result<Partition> {
    let spec = PartitionSpec {
        kind: SkewKind::Dirichlet { beta },
        num_clients,
        seed,
    };
    spec.validate(num_classes)?;
    let by_class = samples_by_class(labels, num_classes)?;
    if labels.len() < num_clients {
        return Err(Error::Infeasible(format!(
            "{} samples cannot make {num_clients} clients non-empty",
            labels.len()
        )));
    }

    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    for (class, class_samples) in by_class.iter().enumerate() {
        let mut class_rng = rng::derive_rng(seed, "partition-class", &[class as u64]);

        let gamma =
            Gamma::new(beta, 1.0).map_err(|e| Error::Domain(format!("gamma(beta={beta}): {e}")))?;
        let mut proportions: Vec<f64> = (0..num_clients)
            .map(|_| gamma.sample(&mut class_rng))
            .collect();
        let sum: f64 = proportions.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            // Degenerate draw; fall back to an even split.
            proportions = vec![1.0 / num_clients as f64; num_clients];
        } else {
            for p in &mut proportions {
                *p /= sum;
            }
        }

        let shares = largest_remainder_counts(&proportions, class_samples.len());

        let mut samples = class_samples.clone();
        samples.shuffle(&mut class_rng);
        let mut cursor = 0;
        for (client, &share) in shares.iter().enumerate() {
            assignment[client].extend_from_slice(&samples[cursor..cursor + share]);
            cursor += share;
        }
    }

    repair_empty_clients(&mut assignment)?;
    for samples in &mut assignment {
        samples.sort_unstable();
    }
    Partition::checked(assignment, labels.len())
}

/// Round fractional shares to integers that sum exactly to `total`.
///
/// Floors every share, then hands out the remaining units to the largest
/// fractional parts (ties to the lower index).
fn largest_remainder_counts(proportions: &[f64], total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = Vec::with_capacity(proportions.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(proportions.len());
    for (ix, &p) in proportions.iter().enumerate() {
        let raw = p * total as f64;
        let base = raw.floor();
        counts.push(base as usize);
        remainders.push((raw - base, ix));
    }
    let assigned: usize = counts.iter().sum();
    let deficit = total - assigned.min(total);
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, ix) in remainders.iter().take(deficit) {
        counts[ix] += 1;
    }
    counts
}

/// Move single samples from the largest client to empty ones until every
/// client holds at least one sample. Donors are picked by largest size, ties
/// to the lowest client id; the donated sample is the donor's last.
fn repair_empty_clients(assignment: &mut [Vec<usize>]) -> Result<()> {
    loop {
        let Some(empty) = assignment.iter().position(|a| a.is_empty()) else {
            return Ok(());
        };
        let donor = assignment
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
            .map(|(ix, _)| ix)
            .expect("assignment is non-empty");
        if assignment[donor].len() <= 1 {
            return Err(Error::Infeasible(
                "not enough samples to make every client non-empty".into(),
            ));
        }
        let moved = assignment[donor].pop().expect("donor has samples");
        assignment[empty].push(moved);
    }
}

/// Per-client label histograms; summed over clients they reproduce the
/// pooled class histogram exactly.
pub fn counts_from_partition(
    partition: &Partition,
    labels: &[usize],
    num_classes: usize,
) -> Result<Vec<LabelCounts>> {
    partition
        .assignment
        .iter()
        .map(|samples| {
            let mut counts = vec![0.0; num_classes];
            for &ix in samples {
                let label = *labels.get(ix).ok_or_else(|| {
                    Error::Format(format!("sample index {ix} outside the label array"))
                })?;
                if label >= num_classes {
                    return Err(Error::Format(format!("label {label} out of range")));
                }
                counts[label] += 1.0;
            }
            LabelCounts::new(counts)
        })
        .collect()
}

/// Write the line-oriented partition format:
/// `client_id<TAB>comma-separated sample indices`, one line per client.
pub fn write_partition<W: Write>(partition: &Partition, writer: &mut W) -> std::io::Result<()> {
    for (client, samples) in partition.assignment.iter().enumerate() {
        let joined: Vec<String> = samples.iter().map(|s| s.to_string()).collect();
        writeln!(writer, "{client}\t{}", joined.join(","))?;
    }
    Ok(())
}

/// Parse the format emitted by [`write_partition`] and re-validate the
/// disjoint-exhaustive invariant.
pub fn read_partition<R: BufRead>(reader: R) -> Result<Partition> {
    let mut assignment = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Format(format!("line {}: {e}", line_no + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id_part, samples_part) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("line {}: missing tab separator", line_no + 1)))?;
        let client: usize = id_part.trim().parse().map_err(|_| {
            Error::Format(format!("line {}: bad client id {id_part:?}", line_no + 1))
        })?;
        if client != assignment.len() {
            return Err(Error::Format(format!(
                "line {}: client ids must be dense and ordered, expected {}, got {client}",
                line_no + 1,
                assignment.len()
            )));
        }
        let samples: Vec<usize> = samples_part
            .split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    Error::Format(format!("line {}: bad sample index {s:?}", line_no + 1))
                })
            })
            .collect::<Result<_>>()?;
        assignment.push(samples);
    }
    let total: usize = assignment.iter().map(Vec::len).sum();
    Partition::checked(assignment, total)
}
