//! Master/worker job dispatch.
//!
//! Workers are threads that only ever see messages: a job, or the request
//! to terminate. The master owns every piece of scheduler state and
//! consumes results one at a time, so job generation that depends on
//! earlier results (the Pieri tree) needs no locking. Replacing the channel
//! layer with a network transport would not touch the job code.

use std::collections::{HashMap, VecDeque};
use std::fmt::{self, Write as _};
use std::panic::{self, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;

pub type JobId = u64;

/// Depth of each worker's inbound channel.
const WORKER_BUFFER: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobKind {
    IndependentPath,
    PieriEdge,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Static,
    Dynamic,
}

impl FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(Schedule::Static),
            "dynamic" => Ok(Schedule::Dynamic),
            other => Err(format!(
                "unknown schedule `{other}` (expected static or dynamic)"
            )),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::Static => "static",
            Schedule::Dynamic => "dynamic",
        })
    }
}

/// A self-contained unit of work.
#[derive(Debug, Clone)]
pub struct JobMessage<P> {
    pub id: JobId,
    pub kind: JobKind,
    pub payload: P,
}

impl<P> JobMessage<P> {
    pub fn new(id: JobId, kind: JobKind, payload: P) -> Self {
        Self { id, kind, payload }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Completed,
    Failed,
}

/// Offsets from the start of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JobTiming {
    pub started: Duration,
    pub finished: Duration,
}

impl JobTiming {
    pub fn busy(&self) -> Duration {
        self.finished.saturating_sub(self.started)
    }
}

#[derive(Debug, Clone)]
pub struct ResultMessage<R> {
    pub id: JobId,
    pub kind: JobKind,
    pub status: JobStatus,
    /// `None` when the worker crashed while running the job.
    pub payload: Option<R>,
    pub worker: usize,
    pub timing: JobTiming,
}

enum WorkerMessage<P> {
    Job(JobMessage<P>),
    Terminate,
}

/// Produces jobs for [`run_dynamic`], possibly in response to results.
pub trait JobSource<P, R> {
    fn initial_jobs(&mut self) -> Vec<JobMessage<P>>;

    /// Called by the master for every result, in arrival order.
    fn on_result(&mut self, result: &ResultMessage<R>) -> Vec<JobMessage<P>>;
}

impl<P, R, S: JobSource<P, R> + ?Sized> JobSource<P, R> for &mut S {
    fn initial_jobs(&mut self) -> Vec<JobMessage<P>> {
        (**self).initial_jobs()
    }

    fn on_result(&mut self, result: &ResultMessage<R>) -> Vec<JobMessage<P>> {
        (**self).on_result(result)
    }
}

/// A source with a fixed job list and no follow-up work.
pub struct FixedJobs<P> {
    jobs: Option<Vec<JobMessage<P>>>,
}

impl<P> FixedJobs<P> {
    pub fn new(jobs: Vec<JobMessage<P>>) -> Self {
        Self { jobs: Some(jobs) }
    }
}

impl<P, R> JobSource<P, R> for FixedJobs<P> {
    fn initial_jobs(&mut self) -> Vec<JobMessage<P>> {
        self.jobs.take().unwrap_or_default()
    }

    fn on_result(&mut self, _result: &ResultMessage<R>) -> Vec<JobMessage<P>> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Dispatch,
    Complete,
    Idle,
    Terminate,
}

/// One line of the event log. `ready` and `idle` are the queue lengths
/// right after the master handled the event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerEvent {
    pub kind: EventKind,
    pub worker: usize,
    pub job: Option<JobId>,
    pub at_us: u64,
    pub ready: usize,
    pub idle: usize,
}

pub fn events_to_json_lines(events: &[SchedulerEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("serializable"));
        out.push('\n');
    }
    out
}

/// Master-side bookkeeping for a dynamic run.
#[derive(Debug)]
pub struct SchedulerState<P> {
    pub ready: VecDeque<JobMessage<P>>,
    pub running: HashMap<JobId, usize>,
    pub idle: VecDeque<usize>,
    pub completed: usize,
}

impl<P> SchedulerState<P> {
    fn new(workers: usize) -> Self {
        Self {
            ready: VecDeque::new(),
            running: HashMap::new(),
            // first round goes out by worker rank
            idle: (0..workers).collect(),
            completed: 0,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.ready.is_empty() && self.running.is_empty()
    }
}

#[derive(Debug)]
pub struct DynamicRun<R> {
    /// Sorted by job id.
    pub results: Vec<ResultMessage<R>>,
    pub events: Vec<SchedulerEvent>,
    pub dispatch_order: Vec<JobId>,
    pub wall: Duration,
}

fn execute<P, R, F>(job: JobMessage<P>, worker: usize, work: &F, clock: Instant) -> ResultMessage<R>
where
    F: Fn(&P) -> (JobStatus, R),
{
    let started = clock.elapsed();
    let outcome = panic::catch_unwind(AssertUnwindSafe(|| work(&job.payload)));
    let finished = clock.elapsed();
    let (status, payload) = match outcome {
        Ok((status, r)) => (status, Some(r)),
        Err(_) => (JobStatus::Failed, None),
    };
    ResultMessage {
        id: job.id,
        kind: job.kind,
        status,
        payload,
        worker,
        timing: JobTiming { started, finished },
    }
}

/// Round-robin assignment of job indices to workers.
pub fn static_partition(jobs: usize, workers: usize) -> Vec<Vec<usize>> {
    let workers = workers.max(1);
    let mut parts = vec![Vec::new(); workers];
    for i in 0..jobs {
        parts[i % workers].push(i);
    }
    parts
}

/// Static distribution: the job list is split round-robin once, each worker
/// runs its share in order. Only for independent jobs.
pub fn run_static<P, R, F>(
    jobs: Vec<JobMessage<P>>,
    workers: usize,
    work: F,
) -> Vec<ResultMessage<R>>
where
    P: Send,
    R: Send,
    F: Fn(&P) -> (JobStatus, R) + Sync,
{
    run_static_clocked(jobs, workers, &work, Instant::now())
}

fn run_static_clocked<P, R, F>(
    jobs: Vec<JobMessage<P>>,
    workers: usize,
    work: &F,
    clock: Instant,
) -> Vec<ResultMessage<R>>
where
    P: Send,
    R: Send,
    F: Fn(&P) -> (JobStatus, R) + Sync,
{
    let workers = workers.max(1);
    let mut shares: Vec<Vec<JobMessage<P>>> = (0..workers).map(|_| Vec::new()).collect();
    for (i, job) in jobs.into_iter().enumerate() {
        shares[i % workers].push(job);
    }

    let mut results = thread::scope(|scope| {
        let (result_tx, result_rx) = mpsc::channel();
        for (w, share) in shares.into_iter().enumerate() {
            let result_tx = result_tx.clone();
            scope.spawn(move || {
                for job in share {
                    if result_tx.send(execute(job, w, work, clock)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(result_tx);
        result_rx.into_iter().collect::<Vec<_>>()
    });
    results.sort_by_key(|r| r.id);
    results
}

/// Static distribution for jobs with dependencies: all ready jobs form a
/// round that is split round-robin; the results of a round, in id order,
/// produce the next one.
pub fn run_static_rounds<P, R, S, F>(
    mut source: S,
    workers: usize,
    work: F,
) -> Vec<ResultMessage<R>>
where
    P: Send,
    R: Send,
    S: JobSource<P, R>,
    F: Fn(&P) -> (JobStatus, R) + Sync,
{
    let clock = Instant::now();
    let mut round = source.initial_jobs();
    let mut results = Vec::new();
    while !round.is_empty() {
        let done = run_static_clocked(std::mem::take(&mut round), workers, &work, clock);
        for r in &done {
            round.extend(source.on_result(r));
        }
        results.extend(done);
    }
    results.sort_by_key(|r| r.id);
    results
}

/// Dynamic first-come-first-serve dispatch.
///
/// Every worker starts idle; the master hands out ready jobs in FIFO order to
/// idle workers in the order they became idle, then blocks for the next
/// result. A worker that returns while nothing is ready is parked and
/// reactivated as soon as new jobs appear. The run ends when no job is
/// ready or running, after which each worker is told to terminate.
pub fn run_dynamic<P, R, S, F>(mut source: S, workers: usize, work: F) -> DynamicRun<R>
where
    P: Send,
    R: Send,
    S: JobSource<P, R>,
    F: Fn(&P) -> (JobStatus, R) + Sync,
{
    let workers = workers.max(1);
    let clock = Instant::now();
    let stamp = |clock: Instant| clock.elapsed().as_micros() as u64;

    thread::scope(|scope| {
        let (result_tx, result_rx) = mpsc::channel::<ResultMessage<R>>();
        let mut inboxes = Vec::with_capacity(workers);
        for w in 0..workers {
            let (tx, rx) = mpsc::sync_channel::<WorkerMessage<P>>(WORKER_BUFFER);
            inboxes.push(tx);
            let result_tx = result_tx.clone();
            let work = &work;
            scope.spawn(move || {
                while let Ok(WorkerMessage::Job(job)) = rx.recv() {
                    if result_tx.send(execute(job, w, work, clock)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(result_tx);

        let mut state = SchedulerState::new(workers);
        let mut events = Vec::new();
        let mut results = Vec::new();
        let mut dispatch_order = Vec::new();
        state.ready.extend(source.initial_jobs());

        loop {
            while !state.ready.is_empty() && !state.idle.is_empty() {
                let job = state.ready.pop_front().expect("non-empty");
                let worker = state.idle.pop_front().expect("non-empty");
                let id = job.id;
                debug_assert!(!state.running.contains_key(&id), "duplicate job id {id}");
                state.running.insert(id, worker);
                dispatch_order.push(id);
                inboxes[worker]
                    .send(WorkerMessage::Job(job))
                    .expect("worker alive while master runs");
                events.push(SchedulerEvent {
                    kind: EventKind::Dispatch,
                    worker,
                    job: Some(id),
                    at_us: stamp(clock),
                    ready: state.ready.len(),
                    idle: state.idle.len(),
                });
            }
            if state.is_finished() {
                break;
            }
            let Ok(result) = result_rx.recv() else { break };
            state.running.remove(&result.id);
            state.idle.push_back(result.worker);
            state.completed += 1;
            let follow_up = source.on_result(&result);
            state.ready.extend(follow_up);
            events.push(SchedulerEvent {
                kind: EventKind::Complete,
                worker: result.worker,
                job: Some(result.id),
                at_us: stamp(clock),
                ready: state.ready.len(),
                idle: state.idle.len(),
            });
            if state.ready.is_empty() {
                events.push(SchedulerEvent {
                    kind: EventKind::Idle,
                    worker: result.worker,
                    job: None,
                    at_us: stamp(clock),
                    ready: 0,
                    idle: state.idle.len(),
                });
            }
            results.push(result);
        }

        for (w, inbox) in inboxes.iter().enumerate() {
            let _ = inbox.send(WorkerMessage::Terminate);
            events.push(SchedulerEvent {
                kind: EventKind::Terminate,
                worker: w,
                job: None,
                at_us: stamp(clock),
                ready: state.ready.len(),
                idle: state.idle.len(),
            });
        }
        results.sort_by_key(|r| r.id);
        DynamicRun {
            results,
            events,
            dispatch_order,
            wall: clock.elapsed(),
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerSummary {
    pub worker: usize,
    pub jobs: usize,
    pub busy: Duration,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScheduleReport {
    pub workers: Vec<WorkerSummary>,
    /// Span from the first job start to the last job finish.
    pub wall: Duration,
}

impl ScheduleReport {
    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }

    /// Max over min per-worker busy time.
    pub fn busy_spread(&self) -> f64 {
        let busy = self.workers.iter().map(|w| w.busy.as_secs_f64());
        let (lo, hi) = busy.fold((f64::INFINITY, 0.0_f64), |(lo, hi), b| {
            (lo.min(b), hi.max(b))
        });
        if self.workers.is_empty() {
            1.0
        } else if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    pub fn total_busy(&self) -> Duration {
        self.workers.iter().map(|w| w.busy).sum()
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>6} {:>6} {:>12}", "worker", "jobs", "busy(ms)");
        for w in &self.workers {
            let _ = writeln!(
                out,
                "{:>6} {:>6} {:>12.3}",
                w.worker,
                w.jobs,
                w.busy.as_secs_f64() * 1e3
            );
        }
        let _ = writeln!(
            out,
            "wall {:.3} ms, busy spread {:.3}",
            self.wall.as_secs_f64() * 1e3,
            self.busy_spread()
        );
        out
    }
}

/// Per-worker job counts and busy times. `workers` fixes the pool size so
/// workers that never ran a job still appear.
pub fn schedule_report<R>(results: &[ResultMessage<R>], workers: Option<usize>) -> ScheduleReport {
    if results.is_empty() {
        return ScheduleReport::default();
    }
    let count = workers.unwrap_or_else(|| results.iter().map(|r| r.worker + 1).max().unwrap_or(0));
    let mut summary: Vec<WorkerSummary> = (0..count)
        .map(|worker| WorkerSummary {
            worker,
            jobs: 0,
            busy: Duration::ZERO,
        })
        .collect();
    for r in results {
        let s = &mut summary[r.worker];
        s.jobs += 1;
        s.busy += r.timing.busy();
    }
    let first = results
        .iter()
        .map(|r| r.timing.started)
        .min()
        .unwrap_or_default();
    let last = results
        .iter()
        .map(|r| r.timing.finished)
        .max()
        .unwrap_or_default();
    ScheduleReport {
        workers: summary,
        wall: last.saturating_sub(first),
    }
}

/// Duration profile for synthetic benchmark jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobProfile {
    Uniform,
    HeavyTailed,
}

impl FromStr for JobProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(JobProfile::Uniform),
            "heavy" | "heavy-tailed" => Ok(JobProfile::HeavyTailed),
            other => Err(format!(
                "unknown job profile `{other}` (expected uniform or heavy)"
            )),
        }
    }
}

/// Seeded job durations. The heavy-tailed profile is Pareto with shape 1.1
/// on a 1 ms base, capped at 40 ms.
pub fn synthetic_durations(profile: JobProfile, jobs: usize, seed: u64) -> Vec<Duration> {
    let mut rng = SeededRng::new(seed);
    (0..jobs)
        .map(|_| match profile {
            JobProfile::Uniform => Duration::from_millis(3),
            JobProfile::HeavyTailed => {
                let u = 1.0 - rng.uniform();
                let ms = (u.powf(-1.0 / 1.1)).min(40.0);
                Duration::from_secs_f64(ms * 1e-3)
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub workers: usize,
    pub static_report: ScheduleReport,
    pub dynamic_report: ScheduleReport,
}

impl BenchRow {
    /// Relative wall-time gain of dynamic over static.
    pub fn improvement(&self) -> f64 {
        let s = self.static_report.wall.as_secs_f64();
        let d = self.dynamic_report.wall.as_secs_f64();
        if s == 0.0 {
            0.0
        } else {
            (s - d) / s
        }
    }
}

/// Runs the sleeping jobs under both schedules.
pub fn bench_schedules(durations: &[Duration], workers: usize) -> BenchRow {
    let jobs = || -> Vec<JobMessage<Duration>> {
        durations
            .iter()
            .enumerate()
            .map(|(i, &d)| JobMessage::new(i as u64, JobKind::Synthetic, d))
            .collect()
    };
    let sleep = |d: &Duration| {
        thread::sleep(*d);
        (JobStatus::Completed, ())
    };
    let static_results = run_static(jobs(), workers, sleep);
    let dynamic = run_dynamic(FixedJobs::new(jobs()), workers, sleep);
    BenchRow {
        workers,
        static_report: schedule_report(&static_results, Some(workers)),
        dynamic_report: schedule_report(&dynamic.results, Some(workers)),
    }
}

pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>7} | {:>11} {:>7} | {:>11} {:>7} | {:>12}",
        "workers", "static(ms)", "spread", "dynamic(ms)", "spread", "improvement"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>7} | {:>11.3} {:>7.3} | {:>11.3} {:>7.3} | {:>11.2}%",
            r.workers,
            r.static_report.wall.as_secs_f64() * 1e3,
            r.static_report.busy_spread(),
            r.dynamic_report.wall.as_secs_f64() * 1e3,
            r.dynamic_report.busy_spread(),
            r.improvement() * 100.0
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn numbered(n: usize) -> Vec<JobMessage<u64>> {
        (0..n as u64)
            .map(|i| JobMessage::new(i, JobKind::Synthetic, i))
            .collect()
    }

    #[test]
    fn round_robin_sizes() {
        let parts = static_partition(8, 4);
        assert!(parts.iter().all(|p| p.len() == 2));
        let sizes: Vec<usize> = static_partition(5, 4).iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 1, 1, 1]);
    }

    #[test]
    fn static_results_in_id_order() {
        let results = run_static(numbered(13), 4, |x: &u64| (JobStatus::Completed, x * x));
        let ids: Vec<u64> = results.iter().map(|r| r.id).collect();
        assert_eq!(ids, (0..13).collect::<Vec<_>>());
        for r in &results {
            assert_eq!(r.payload, Some(r.id * r.id));
            assert_eq!(r.worker, r.id as usize % 4);
        }
    }

    #[test]
    fn empty_source_terminates() {
        let run = run_dynamic(FixedJobs::<u64>::new(vec![]), 3, |x: &u64| {
            (JobStatus::Completed, *x)
        });
        assert!(run.results.is_empty());
        let terminations = run
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Terminate)
            .count();
        assert_eq!(terminations, 3);
    }

    #[test]
    fn single_worker_is_fifo() {
        let run = run_dynamic(FixedJobs::new(numbered(10)), 1, |x: &u64| {
            (JobStatus::Completed, *x)
        });
        assert_eq!(run.dispatch_order, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn panicking_job_reports_failure() {
        let run = run_dynamic(FixedJobs::new(numbered(6)), 2, |x: &u64| {
            if *x == 3 {
                panic!("worker crash");
            }
            (JobStatus::Completed, *x)
        });
        assert_eq!(run.results.len(), 6);
        assert_eq!(run.results[3].status, JobStatus::Failed);
        assert!(run.results[3].payload.is_none());
        assert!(run
            .results
            .iter()
            .filter(|r| r.id != 3)
            .all(|r| r.status == JobStatus::Completed));
    }

    /// Random tree: each completed job spawns up to `fanout` children until
    /// `limit` jobs exist. Payload is the parent id.
    struct RandomTree {
        rng: SeededRng,
        next: JobId,
        limit: JobId,
        fanout: usize,
        parents: HashMap<JobId, Option<JobId>>,
    }

    impl RandomTree {
        fn new(seed: u64, limit: JobId, fanout: usize) -> Self {
            Self {
                rng: SeededRng::new(seed),
                next: 0,
                limit,
                fanout,
                parents: HashMap::new(),
            }
        }

        fn spawn(&mut self, parent: Option<JobId>, count: usize) -> Vec<JobMessage<Option<JobId>>> {
            let mut out = Vec::new();
            for _ in 0..count {
                if self.next >= self.limit {
                    break;
                }
                let id = self.next;
                self.next += 1;
                self.parents.insert(id, parent);
                out.push(JobMessage::new(id, JobKind::PieriEdge, parent));
            }
            out
        }
    }

    impl JobSource<Option<JobId>, u64> for RandomTree {
        fn initial_jobs(&mut self) -> Vec<JobMessage<Option<JobId>>> {
            self.spawn(None, 1)
        }

        fn on_result(&mut self, result: &ResultMessage<u64>) -> Vec<JobMessage<Option<JobId>>> {
            // keep at least one child alive until the budget is used
            let k = 1 + self.rng.below(self.fanout);
            self.spawn(Some(result.id), k)
        }
    }

    #[test]
    fn tree_generation_exactly_once_and_dependency_safe() {
        for (seed, workers) in [(1, 1), (2, 3), (3, 4), (4, 8)] {
            let limit = 10_000;
            let mut source = RandomTree::new(seed, limit, 3);
            let run = run_dynamic(&mut source, workers, |_: &Option<JobId>| {
                (JobStatus::Completed, 0u64)
            });
            let ids: HashSet<JobId> = run.results.iter().map(|r| r.id).collect();
            assert_eq!(ids.len(), limit as usize);
            assert_eq!(run.results.len(), limit as usize);
            assert_eq!(run.dispatch_order.len(), limit as usize);

            let mut completed_at = HashMap::new();
            let mut dispatched_at = HashMap::new();
            for (pos, e) in run.events.iter().enumerate() {
                match e.kind {
                    EventKind::Complete => {
                        completed_at.insert(e.job.unwrap(), pos);
                    }
                    EventKind::Dispatch => {
                        assert!(dispatched_at.insert(e.job.unwrap(), pos).is_none());
                    }
                    _ => {}
                }
            }
            assert_no_starvation(&run.events);
            for (id, parent) in &source.parents {
                if let Some(parent) = parent {
                    assert!(completed_at[parent] < dispatched_at[id]);
                }
            }
        }
    }

    #[test]
    fn no_idle_worker_while_work_is_ready() {
        let mut source = RandomTree::new(9, 2_000, 4);
        let run = run_dynamic(&mut source, 4, |_: &Option<JobId>| {
            thread::sleep(Duration::from_micros(20));
            (JobStatus::Completed, 0u64)
        });
        assert_no_starvation(&run.events);
        assert_eq!(run.results.len(), 2_000);
    }

    /// After every master step (a completion plus the dispatches it
    /// triggers) either nothing is ready or nobody is idle.
    fn assert_no_starvation(events: &[SchedulerEvent]) {
        let mut last: Option<&SchedulerEvent> = None;
        for e in events {
            if e.kind == EventKind::Complete {
                if let Some(prev) = last {
                    assert!(!(prev.ready > 0 && prev.idle > 0), "starvation at {prev:?}");
                }
            }
            if matches!(e.kind, EventKind::Dispatch | EventKind::Complete) {
                last = Some(e);
            }
        }
        if let Some(prev) = last {
            assert!(!(prev.ready > 0 && prev.idle > 0), "starvation at {prev:?}");
        }
    }

    #[test]
    fn static_rounds_respect_dependencies() {
        let mut source = RandomTree::new(5, 3_000, 3);
        let results = run_static_rounds(&mut source, 3, |_: &Option<JobId>| {
            (JobStatus::Completed, 0u64)
        });
        assert_eq!(results.len(), 3_000);
        let ids: HashSet<JobId> = results.iter().map(|r| r.id).collect();
        assert_eq!(ids.len(), 3_000);
        // a child is created only from its parent's result, so every parent
        // finished no later than its child started
        let by_id: HashMap<JobId, &ResultMessage<u64>> =
            results.iter().map(|r| (r.id, r)).collect();
        for (id, parent) in &source.parents {
            if let Some(parent) = parent {
                assert!(by_id[parent].timing.finished <= by_id[id].timing.started);
            }
        }
    }

    #[test]
    fn report_counts_jobs_and_busy_time() {
        assert!(schedule_report::<()>(&[], None).is_empty());
        let durations = vec![Duration::from_millis(2); 6];
        let row = bench_schedules(&durations, 1);
        let report = &row.dynamic_report;
        assert_eq!(report.workers.len(), 1);
        assert_eq!(report.workers[0].jobs, 6);
        let busy = report.total_busy().as_secs_f64();
        let wall = report.wall.as_secs_f64();
        assert!(busy <= wall + 1e-9 && busy >= 0.9 * wall);
        assert!(row.static_report.workers[0].jobs == 6);
    }

    #[test]
    fn event_log_is_json_lines() {
        let run = run_dynamic(FixedJobs::new(numbered(3)), 2, |x: &u64| {
            (JobStatus::Completed, *x)
        });
        let text = events_to_json_lines(&run.events);
        for line in text.lines() {
            let parsed: SchedulerEvent = serde_json::from_str(line).unwrap();
            assert!(parsed.worker < 2);
        }
        assert_eq!(text.lines().count(), run.events.len());
    }

    #[test]
    fn parse_schedule_and_profile() {
        assert_eq!("static".parse::<Schedule>().unwrap(), Schedule::Static);
        assert_eq!("dynamic".parse::<Schedule>().unwrap(), Schedule::Dynamic);
        assert!("round-robin".parse::<Schedule>().is_err());
        assert_eq!(
            "heavy".parse::<JobProfile>().unwrap(),
            JobProfile::HeavyTailed
        );
    }
}
