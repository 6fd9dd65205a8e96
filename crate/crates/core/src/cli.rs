//! Command-line front end. Exit codes: 0 success, 1 solve with lost
//! subtrees, 2 usage or input error.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::pieri_comb::{
    dmp_count, level_job_counts, pieri_root_count, pieri_tree, poset_dot, target_pattern, tree_dot,
};
use crate::pieri_engine::{solve_pieri, verify, ProblemInput, SolutionFile};
use crate::polysys::{total_degree_start, Homotopy, PolySystem};
use crate::rng::SeededRng;
use crate::scheduler::{bench_schedules, bench_table, synthetic_durations, JobProfile, Schedule};
use crate::tracker::{track_all, PathStatus, TrackerOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_LOSSES: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "pieri",
    version,
    about = "Pieri homotopies for output feedback, path tracking and scheduling"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count feedback laws for (m, p, q).
    Count(CountArgs),
    /// Solve a pole placement problem with Pieri homotopies.
    Solve(SolveArgs),
    /// Track all total-degree start paths of a polynomial system.
    Track(TrackArgs),
    /// Compare static and dynamic scheduling on synthetic jobs.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DotKind {
    Poset,
    Tree,
}

#[derive(Debug, Args)]
pub struct Sizes {
    #[arg(short = 'm')]
    pub m: usize,
    #[arg(short = 'p')]
    pub p: usize,
    #[arg(short = 'q', default_value_t = 0)]
    pub q: usize,
}

#[derive(Debug, Args)]
pub struct TrackerFlags {
    /// Newton corrector tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-steps")]
    pub max_steps: Option<usize>,
}

impl TrackerFlags {
    fn options(&self) -> TrackerOptions {
        let mut opts = TrackerOptions::default();
        if let Some(tol) = self.tol {
            opts.corrector_tol = tol;
        }
        if let Some(steps) = self.max_steps {
            opts.max_steps = steps;
        }
        opts
    }
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[command(flatten)]
    pub sizes: Sizes,
    /// Also print the poset or the Pieri tree in DOT format.
    #[arg(long, value_enum)]
    pub dot: Option<DotKind>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub sizes: Sizes,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value = "dynamic")]
    pub schedule: Schedule,
    /// Problem file with planes and points; random input from the seed otherwise.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Solution file to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub tracker: TrackerFlags,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Polynomial system file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value = "dynamic")]
    pub schedule: Schedule,
    #[command(flatten)]
    pub tracker: TrackerFlags,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated worker counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub workers: Vec<usize>,
    #[arg(long, default_value = "heavy")]
    pub profile: JobProfile,
    #[arg(long, default_value_t = 200)]
    pub jobs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the dynamic run's event log of the last worker count as JSON lines.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.to_string(),
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Count(a) => cmd_count(a, out),
        Command::Solve(a) => cmd_solve(a, out),
        Command::Track(a) => cmd_track(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn cmd_count(a: &CountArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let Sizes { m, p, q } = a.sizes;
    let count = pieri_root_count(m, p, q).map_err(usage)?;
    let target = target_pattern(m, p, q).map_err(usage)?;
    let n = crate::pieri_comb::condition_count(m, p, q);
    let _ = writeln!(out, "m = {m}, p = {p}, q = {q}, conditions n = {n}");
    let _ = writeln!(
        out,
        "target pivots: top {:?} bottom {:?}",
        target.top(),
        target.bottom()
    );
    let _ = writeln!(out, "pieri root count: {count}");
    if q == 0 {
        let _ = writeln!(out, "dmp count: {}", dmp_count(m, p).map_err(usage)?);
    }
    match a.dot {
        Some(DotKind::Poset) => {
            let _ = write!(out, "{}", poset_dot(m, p, q).map_err(usage)?);
        }
        Some(DotKind::Tree) => {
            if n > 16 {
                return Err(usage(format!("tree output is limited to n <= 16, got {n}")));
            }
            let _ = write!(out, "{}", tree_dot(&pieri_tree(m, p, q).map_err(usage)?));
        }
        None => {}
    }
    Ok(EXIT_OK)
}

fn cmd_solve(a: &SolveArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if a.workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    if a.schedule == Schedule::Static {
        return Err(usage(
            "static schedule is not available for solve: tree jobs depend on their parents",
        ));
    }
    let Sizes { m, p, q } = a.sizes;
    let input = match &a.input {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let input = ProblemInput::from_json(&text).map_err(usage)?;
            if (input.m, input.p, input.q) != (m, p, q) {
                return Err(usage(format!(
                    "input file is for (m, p, q) = ({}, {}, {}), flags say ({m}, {p}, {q})",
                    input.m, input.p, input.q
                )));
            }
            input
        }
        None => ProblemInput::random(m, p, q, a.seed).map_err(usage)?,
    };
    let opts = a.tracker.options();
    let solution = solve_pieri(&input, a.schedule, a.workers, &opts).map_err(usage)?;
    let expected = pieri_root_count(m, p, q).map_err(usage)?;
    let report = verify(&solution.solutions, &input);

    let _ = writeln!(
        out,
        "solutions: {} (expected {expected})",
        solution.solutions.len()
    );
    let _ = writeln!(out, "max normalized residual: {:.3e}", report.max_residual);
    if solution.solutions.len() > 1 {
        let _ = writeln!(out, "min pairwise distance: {:.3e}", report.min_distance);
    }
    let levels: Vec<String> = solution.level_jobs.iter().map(|c| c.to_string()).collect();
    let _ = writeln!(out, "jobs per level: {}", levels.join(" "));
    if let Ok(planned) = level_job_counts(m, p, q) {
        let total: usize = solution.level_jobs.iter().sum();
        let planned: num_bigint::BigUint = planned.iter().sum();
        let _ = writeln!(out, "paths tracked: {total} of {planned}");
    }
    let _ = writeln!(out, "wall time: {:.3} s", solution.wall.as_secs_f64());
    let _ = write!(out, "{}", solution.report.to_table());

    if let Some(path) = &a.output {
        let file = SolutionFile::new(&input, &solution);
        fs::write(path, file.to_json() + "\n")
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    if !report.duplicates.is_empty() {
        let _ = writeln!(out, "duplicate solutions: {:?}", report.duplicates);
    }
    if solution.lost.is_empty() {
        Ok(EXIT_OK)
    } else {
        let _ = writeln!(
            out,
            "lost subtrees: {} ({} leaves)",
            solution.lost.len(),
            solution.leaves_lost()
        );
        for l in &solution.lost {
            let _ = writeln!(
                out,
                "  condition {} bottom {:?}: {} leaves, {}",
                l.condition, l.bottom, l.leaves_lost, l.reason
            );
        }
        Ok(EXIT_LOSSES)
    }
}

#[derive(Serialize)]
struct EndpointRecord {
    status: PathStatus,
    endpoint: Vec<[f64; 2]>,
    residual: f64,
    steps: usize,
}

#[derive(Serialize)]
struct EndpointFile {
    starts: usize,
    converged: usize,
    diverged: usize,
    failed: usize,
    paths: Vec<EndpointRecord>,
}

fn cmd_track(a: &TrackArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if a.workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    let text =
        fs::read_to_string(&a.input).map_err(|e| usage(format!("{}: {e}", a.input.display())))?;
    let target = PolySystem::from_json(&text).map_err(usage)?;
    let mut rng = SeededRng::new(a.seed);
    let (start, starts) = total_degree_start(&target, &mut rng).map_err(usage)?;
    let h = Homotopy::with_random_gamma(target, start, &mut rng).map_err(usage)?;
    let opts = a.tracker.options();
    opts.validate().map_err(usage)?;
    let results = track_all(&h, &starts, a.schedule, a.workers, &opts);

    let tally = |s: PathStatus| results.iter().filter(|r| r.status == s).count();
    let file = EndpointFile {
        starts: starts.len(),
        converged: tally(PathStatus::Converged),
        diverged: tally(PathStatus::Diverged),
        failed: tally(PathStatus::Failed),
        paths: results
            .iter()
            .map(|r| EndpointRecord {
                status: r.status,
                endpoint: r.endpoint.iter().map(|z| [z.re, z.im]).collect(),
                residual: r.residual,
                steps: r.steps_used,
            })
            .collect(),
    };
    let _ = writeln!(
        out,
        "starts: {}, converged: {}, diverged: {}, failed: {}",
        file.starts, file.converged, file.diverged, file.failed
    );
    if let Some(path) = &a.output {
        let json = serde_json::to_string_pretty(&file).expect("serializable");
        fs::write(path, json + "\n").map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    Ok(EXIT_OK)
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if a.workers.is_empty() || a.workers.contains(&0) {
        return Err(usage("worker counts must be at least 1"));
    }
    let durations = synthetic_durations(a.profile, a.jobs, a.seed);
    let rows: Vec<_> = a
        .workers
        .iter()
        .map(|&w| bench_schedules(&durations, w))
        .collect();
    let _ = writeln!(out, "{} jobs, {:?} profile", a.jobs, a.profile);
    let _ = write!(out, "{}", bench_table(&rows));
    if let Some(path) = &a.output {
        let workers = *a.workers.last().expect("non-empty");
        let jobs = durations
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                crate::scheduler::JobMessage::new(i as u64, crate::scheduler::JobKind::Synthetic, d)
            })
            .collect();
        let run =
            crate::scheduler::run_dynamic(crate::scheduler::FixedJobs::new(jobs), workers, |d| {
                std::thread::sleep(*d);
                (crate::scheduler::JobStatus::Completed, ())
            });
        fs::write(path, crate::scheduler::events_to_json_lines(&run.events))
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("pieri").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn count_examples() {
        let (code, out, _) = run_args(&["count", "-m", "3", "-p", "3", "-q", "1"]);
        assert_eq!(code, 0);
        assert!(out.contains("pieri root count: 2730"));
        let (_, out, _) = run_args(&["count", "-m", "4", "-p", "4"]);
        assert!(out.contains("pieri root count: 24024"));
        assert!(out.contains("dmp count: 24024"));
        let (_, out, _) = run_args(&["count", "-m", "1", "-p", "1", "-q", "0"]);
        assert!(out.contains("pieri root count: 1"));
        let (_, out, _) = run_args(&["count", "-m", "2", "-p", "2", "-q", "1"]);
        assert!(out.contains("bottom [4, 7]"));
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run_args(&["count", "-m", "0", "-p", "2"]).0, 2);
        assert_eq!(run_args(&["count", "-p", "2"]).0, 2);
        assert_eq!(run_args(&["frobnicate"]).0, 2);
        assert_eq!(
            run_args(&["solve", "-m", "2", "-p", "2", "--schedule", "static"]).0,
            2
        );
        assert_eq!(
            run_args(&["solve", "-m", "2", "-p", "2", "--workers", "0"]).0,
            2
        );
        assert_eq!(run_args(&["bench", "--workers", "0"]).0, 2);
        assert_eq!(
            run_args(&["track", "--input", "/nonexistent/system.json"]).0,
            2
        );
    }

    #[test]
    fn count_dot_output() {
        let (code, out, _) = run_args(&["count", "-m", "2", "-p", "2", "-q", "0", "--dot", "tree"]);
        assert_eq!(code, 0);
        assert!(out.contains("digraph"));
    }
}
