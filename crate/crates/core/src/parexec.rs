//! Partitioned aggregation.
//!
//! An [`Aggregate`] is the usual init/accumulate/merge/terminate contract.
//! [`run_parallel`] splits the input rows into `k` partitions, folds each on
//! its own worker and merges the partial states in partition order, so the
//! result is byte-identical for every `k`. With the `parallel` feature off
//! the partitions are folded one after another on the calling thread.
//!
//! [`run_parallel_ordered`] covers work that cannot be merged freely but can
//! be cut into ordered ranges whose results are concatenated.

use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::sync::Arc;
use std::time::Instant;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `merge` must be associative and commutative over reachable states, and
/// `terminate(merge(a, b))` must not depend on merge order.
pub trait Aggregate: Sync {
    type Row: Send;
    type State: Send;
    type Output;
    type Error: Send;

    fn init(&self) -> Self::State;
    fn accumulate(&self, state: &mut Self::State, row: Self::Row) -> Result<(), Self::Error>;
    fn merge(&self, left: Self::State, right: Self::State) -> Self::State;
    fn terminate(&self, state: Self::State) -> Self::Output;
}

pub type KeyFn<R> = Arc<dyn Fn(&R) -> u64 + Send + Sync>;

/// How rows are routed to partitions.
pub enum Splitter<R> {
    /// Contiguous runs of the input order.
    Range,
    /// `key(row) % k`.
    Hash(KeyFn<R>),
}

impl<R> Clone for Splitter<R> {
    fn clone(&self) -> Self {
        match self {
            Splitter::Range => Splitter::Range,
            Splitter::Hash(f) => Splitter::Hash(Arc::clone(f)),
        }
    }
}

pub struct PartitionPlan<R> {
    pub workers: usize,
    pub splitter: Splitter<R>,
}

impl<R> Clone for PartitionPlan<R> {
    fn clone(&self) -> Self {
        PartitionPlan {
            workers: self.workers,
            splitter: self.splitter.clone(),
        }
    }
}

impl<R> PartitionPlan<R> {
    pub fn range(workers: usize) -> Self {
        PartitionPlan {
            workers: workers.max(1),
            splitter: Splitter::Range,
        }
    }

    pub fn hashed(workers: usize, key: impl Fn(&R) -> u64 + Send + Sync + 'static) -> Self {
        PartitionPlan {
            workers: workers.max(1),
            splitter: Splitter::Hash(Arc::new(key)),
        }
    }

    /// Routes every row to exactly one partition.
    pub fn split<I: IntoIterator<Item = R>>(&self, rows: I) -> Vec<Vec<R>> {
        let k = self.workers.max(1);
        match &self.splitter {
            Splitter::Range => {
                let rows: Vec<R> = rows.into_iter().collect();
                let chunk = rows.len().div_ceil(k).max(1);
                let mut parts: Vec<Vec<R>> = Vec::with_capacity(k);
                let mut it = rows.into_iter();
                for _ in 0..k {
                    parts.push(it.by_ref().take(chunk).collect());
                }
                parts
            }
            Splitter::Hash(key) => {
                let mut parts: Vec<Vec<R>> = (0..k).map(|_| Vec::new()).collect();
                for r in rows {
                    let i = (key(&r) % k as u64) as usize;
                    parts[i].push(r);
                }
                parts
            }
        }
    }
}

/// Stable 64-bit hash for hash partitioning.
pub fn stable_hash<T: Hash + ?Sized>(v: &T) -> u64 {
    let mut h = DefaultHasher::new();
    v.hash(&mut h);
    h.finish()
}

/// Hardware parallelism, falling back to 1.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Applies `f` to every item, concurrently when the `parallel` feature is on,
/// returning results in input order.
pub fn map_ordered<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Folds `rows` under `contract` across the partitions of `plan`. The first
/// error, by partition index, aborts the run.
pub fn run_parallel<A, I>(rows: I, contract: &A, plan: &PartitionPlan<A::Row>) -> Result<A::Output, A::Error>
where
    A: Aggregate,
    I: IntoIterator<Item = A::Row>,
{
    let parts = plan.split(rows);
    let states = map_ordered(parts, |part| {
        let mut state = contract.init();
        for row in part {
            contract.accumulate(&mut state, row)?;
        }
        Ok(state)
    });
    let mut merged: Option<A::State> = None;
    for s in states {
        let s = s?;
        merged = Some(match merged {
            None => s,
            Some(acc) => contract.merge(acc, s),
        });
    }
    Ok(contract.terminate(merged.unwrap_or_else(|| contract.init())))
}

/// Runs `work` on every range and hands the per-range results, in range
/// order, to `finalize`.
pub fn run_parallel_ordered<I, T, E, F, G, O>(ranges: Vec<I>, work: F, finalize: G) -> Result<O, E>
where
    I: Send,
    T: Send,
    E: Send,
    F: Fn(I) -> Result<T, E> + Sync + Send,
    G: FnOnce(Vec<T>) -> O,
{
    let results = map_ordered(ranges, work);
    let results: Result<Vec<T>, E> = results.into_iter().collect();
    Ok(finalize(results?))
}

/// `COUNT(*)`.
pub struct CountAggregate<R>(std::marker::PhantomData<fn(R)>);

impl<R> Default for CountAggregate<R> {
    fn default() -> Self {
        CountAggregate(std::marker::PhantomData)
    }
}

impl<R: Send> Aggregate for CountAggregate<R> {
    type Row = R;
    type State = u64;
    type Output = u64;
    type Error = std::convert::Infallible;

    fn init(&self) -> u64 {
        0
    }
    fn accumulate(&self, state: &mut u64, _row: R) -> Result<(), Self::Error> {
        *state += 1;
        Ok(())
    }
    fn merge(&self, left: u64, right: u64) -> u64 {
        left + right
    }
    fn terminate(&self, state: u64) -> u64 {
        state
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub phase: String,
    pub k: usize,
    pub millis: f64,
}

/// Wall-clock record per phase and worker count.
#[derive(Debug, Clone, Default)]
pub struct TimingReport {
    pub rows: Vec<Timing>,
}

impl TimingReport {
    pub fn time<T>(&mut self, phase: &str, k: usize, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.rows.push(Timing {
            phase: phase.to_string(),
            k,
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
        out
    }

    /// `phase\tk\tmillis` with a header row.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("phase\tk\tmillis\n");
        for t in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{:.3}", t.phase, t.k, t.millis);
        }
        s
    }
}
