use super::model::SessionModel;
use super::schedule::{classify, RoundClass};
use crate::error::{Error, Result};
use crate::tgi::CorrelationAccumulator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Chunked across a pool of worker threads. Falls back to sequential
    /// when built without the `parallel` feature.
    Parallel { workers: usize },
}

impl Execution {
    pub fn with_workers(workers: usize) -> Self {
        if workers <= 1 {
            Execution::Sequential
        } else {
            Execution::Parallel { workers }
        }
    }

    pub fn workers(&self) -> usize {
        match self {
            Execution::Sequential => 1,
            Execution::Parallel { workers } => *workers,
        }
    }
}

/// Sufficient statistics of one simulated session, sifted by round class.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionStats {
    pub rounds: u64,
    pub joint_rounds: u64,
    pub local_rounds: u64,
    pub qkd_rounds: u64,
    pub abandoned: u64,
    pub qkd_clicks: u64,
    /// Ground truth over all rounds; annotation only.
    pub forced_clicks: u64,
    pub forced_silences: u64,
    pub joint: CorrelationAccumulator,
    /// Paired with the TGI-only click of each local round.
    pub local: CorrelationAccumulator,
}

impl SessionStats {
    fn empty(model: &SessionModel, joint_cap: usize, local_cap: usize) -> Self {
        let grid = *model.grid();
        Self {
            rounds: 0,
            joint_rounds: 0,
            local_rounds: 0,
            qkd_rounds: 0,
            abandoned: 0,
            qkd_clicks: 0,
            forced_clicks: 0,
            forced_silences: 0,
            joint: CorrelationAccumulator::new(grid).with_retention(joint_cap),
            local: CorrelationAccumulator::paired(grid).with_retention(local_cap),
        }
    }

    /// Appends `other`, whose rounds follow those of `self`.
    pub fn merge(&mut self, other: &SessionStats) -> Result<()> {
        self.rounds += other.rounds;
        self.joint_rounds += other.joint_rounds;
        self.local_rounds += other.local_rounds;
        self.qkd_rounds += other.qkd_rounds;
        self.abandoned += other.abandoned;
        self.qkd_clicks += other.qkd_clicks;
        self.forced_clicks += other.forced_clicks;
        self.forced_silences += other.forced_silences;
        self.joint.merge(&other.joint)?;
        self.local.merge(&other.local)
    }

    pub fn qkd_click_rate(&self) -> Option<f64> {
        (self.qkd_rounds > 0).then(|| self.qkd_clicks as f64 / self.qkd_rounds as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionPlan {
    pub rounds: u64,
    pub chunk_rounds: u64,
    /// Raw rounds kept per TGI type for the noise floor.
    pub retained_rounds: usize,
}

fn run_chunk(model: &SessionModel, start: u64, end: u64, joint_cap: usize, local_cap: usize) -> Result<SessionStats> {
    let mut stats = SessionStats::empty(model, joint_cap, local_cap);
    let mut scratch = model.scratch();
    for index in start..end {
        let core = model.simulate(index, &mut scratch)?;
        stats.rounds += 1;
        stats.forced_clicks += core.truth.blinding.i_te1 as u64;
        stats.forced_silences += core.truth.blinding.i_te0 as u64;
        match classify(core.alice, core.bob) {
            RoundClass::Joint => {
                stats.joint_rounds += 1;
                model.joint_reference(&mut scratch);
                stats.joint.push(&scratch.reference, core.click, false);
            }
            RoundClass::Local => {
                stats.local_rounds += 1;
                model.local_reference(&mut scratch);
                stats.local.push(&scratch.reference, core.click, core.truth.sources.i_tb);
            }
            RoundClass::Qkd => {
                stats.qkd_rounds += 1;
                stats.qkd_clicks += core.click as u64;
            }
            RoundClass::Abandoned => stats.abandoned += 1,
        }
    }
    Ok(stats)
}

/// Simulates rounds `0..plan.rounds` and merges chunk statistics in chunk
/// order, so the result does not depend on the execution mode.
pub fn run_session(model: &SessionModel, plan: SessionPlan, exec: Execution) -> Result<SessionStats> {
    if plan.chunk_rounds == 0 {
        return Err(Error::config("protocol.chunk_rounds", "must be positive"));
    }
    let cap = plan.retained_rounds;
    let mut total = SessionStats::empty(model, cap, cap);
    let n_chunks = plan.rounds.div_ceil(plan.chunk_rounds);
    let bounds = |c: u64| (c * plan.chunk_rounds, ((c + 1) * plan.chunk_rounds).min(plan.rounds));
    let batch = (exec.workers() * 4) as u64;
    let pool = build_pool(exec)?;
    let mut next = 0;
    while next < n_chunks {
        let chunks: Vec<u64> = (next..(next + batch).min(n_chunks)).collect();
        next += chunks.len() as u64;
        // any chunk in this batch can contribute at most the room left now
        let joint_cap = cap - total.joint.retained_len();
        let local_cap = cap - total.local.retained_len();
        let job = |c: &u64| {
            let (s, e) = bounds(*c);
            run_chunk(model, s, e, joint_cap, local_cap)
        };
        let results = map_chunks(pool.as_ref(), &chunks, job);
        for r in results {
            total.merge(&r?)?;
        }
    }
    Ok(total)
}

#[cfg(feature = "parallel")]
type Pool = rayon::ThreadPool;
#[cfg(not(feature = "parallel"))]
type Pool = ();

#[cfg(feature = "parallel")]
fn build_pool(exec: Execution) -> Result<Option<Pool>> {
    match exec {
        Execution::Sequential => Ok(None),
        Execution::Parallel { workers } => rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map(Some)
            .map_err(|e| Error::config("workers", e.to_string())),
    }
}

#[cfg(not(feature = "parallel"))]
fn build_pool(_exec: Execution) -> Result<Option<Pool>> {
    Ok(None)
}

#[cfg(feature = "parallel")]
fn map_chunks<F>(pool: Option<&Pool>, chunks: &[u64], job: F) -> Vec<Result<SessionStats>>
where
    F: Fn(&u64) -> Result<SessionStats> + Sync,
{
    use rayon::prelude::*;
    match pool {
        Some(p) => p.install(|| chunks.par_iter().map(&job).collect()),
        None => chunks.iter().map(job).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_chunks<F>(_pool: Option<&Pool>, chunks: &[u64], job: F) -> Vec<Result<SessionStats>>
where
    F: Fn(&u64) -> Result<SessionStats> + Sync,
{
    chunks.iter().map(job).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ExperimentConfig;
    use crate::tgi::{brute_force_reconstruct, reconstruct};

    fn model() -> SessionModel {
        let mut c = ExperimentConfig::default();
        c.protocol.duty_joint = 0.3;
        c.protocol.duty_local = 0.3;
        SessionModel::new(&c).unwrap()
    }

    fn plan(rounds: u64, chunk_rounds: u64) -> SessionPlan {
        SessionPlan {
            rounds,
            chunk_rounds,
            retained_rounds: 300,
        }
    }

    #[test]
    fn chunking_and_workers_do_not_change_results() {
        let m = model();
        let a = run_session(&m, plan(20_000, 20_000), Execution::Sequential).unwrap();
        let b = run_session(&m, plan(20_000, 1_000), Execution::Sequential).unwrap();
        let c = run_session(&m, plan(20_000, 1_000), Execution::with_workers(3)).unwrap();
        assert_eq!(b, c);
        assert_eq!(a.joint.n(), b.joint.n());
        assert_eq!(a.local.clicks(), b.local.clicks());
        assert_eq!(a.joint.retained_len(), 300);
        let (ia, ib) = (reconstruct(&a.joint).unwrap(), reconstruct(&b.joint).unwrap());
        let scale = ia.m().iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for (x, y) in ia.m().iter().zip(ib.m()) {
            assert!((x - y).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn session_matches_round_records() {
        let m = model();
        let n = 5_000;
        let stats = run_session(&m, plan(n, 512), Execution::Sequential).unwrap();
        let records: Vec<_> = (0..n).map(|i| m.run_round(i).unwrap()).collect();
        let count = |c: RoundClass| records.iter().filter(|r| r.class() == c).count() as u64;
        assert_eq!(stats.joint_rounds, count(RoundClass::Joint));
        assert_eq!(stats.local_rounds, count(RoundClass::Local));
        assert_eq!(stats.qkd_rounds, count(RoundClass::Qkd));
        assert_eq!(stats.abandoned, count(RoundClass::Abandoned));
        assert_eq!(stats.rounds, n);

        let joint: Vec<_> = records.iter().filter(|r| r.class() == RoundClass::Joint).cloned().collect();
        let brute = brute_force_reconstruct(&joint).unwrap();
        let fast = reconstruct(&stats.joint).unwrap();
        let scale = brute.m().iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for (x, y) in fast.m().iter().zip(brute.m()) {
            assert!((x - y).abs() <= 1e-9 * scale);
        }
    }
}
