//! The `sigrefine` command line.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 protocol or slice
//! mismatch, 3 arithmetic overflow in a monoid, 4 disagreement with the
//! exhaustive oracle.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xxhash_rust::xxh3::xxh3_64;

use sigrefine_core::dist::{read_manifest, run_worker, write_slice, Manifest, SliceEntry};
use sigrefine_core::memory::{is_tracking, process_peak_rss, MemoryTag};
use sigrefine_core::oracle::{self, OracleError, RANDOM_TERMS};
use sigrefine_core::refine::refine_with_observer;
use sigrefine_core::transport::{free_local_roster, parse_roster, Roster, TcpTransport};
use sigrefine_core::{
    desort, parse_file, run_inproc, split_states, write_partition,
    EncodedCoalgebra, Error, HashMode, NestedCoalgebra, Partition, ProtocolError, Scheduler,
    SigId, SignatureError, Transport, WtaMonoid, WtaSpec,
};

#[derive(Parser, Debug)]
#[command(name = "sigrefine", version, about = "Minimize state-based systems by signature refinement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    SeqExact,
    SeqHashed,
    DistInproc,
    DistTcp,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("named").get_name())
    }
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Compute the coarsest behavioural equivalence of an input file.
    Minimize {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Engine::SeqExact)]
        engine: Engine,
        #[arg(long, default_value_t = 1)]
        workers: u32,
        /// Seed of the adversarial message scheduler (in-process engine).
        #[arg(long)]
        seed: Option<u64>,
        /// Roster for dist-tcp; a free localhost roster is used otherwise.
        #[arg(long)]
        roster: Option<PathBuf>,
        /// Partition file; standard output if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Write a random weighted tree automaton.
    GenerateWta {
        #[arg(long)]
        states: usize,
        #[arg(long, default_value_t = 1)]
        rank: u32,
        #[arg(long, default_value = "natmax")]
        monoid: WtaMonoid,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cut an input file into per-worker slices and a manifest.
    Split {
        input: PathBuf,
        #[arg(long)]
        workers: u32,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run one worker of a distributed run over TCP.
    Worker {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        id: u32,
        #[arg(long)]
        roster: PathBuf,
        /// Where to write this worker's result fragment.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seconds to wait for peers and messages.
        #[arg(long, default_value_t = 600)]
        timeout: u64,
    },
    /// Compare the refinement engine with exhaustive search on small inputs.
    OracleCheck {
        /// Input file with at most 8 states; random instances if absent.
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        random: usize,
        #[arg(long, default_value_t = 6)]
        states: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// An error together with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    fn input(message: impl Into<String>) -> Self {
        Failure::new(1, message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_overflow() {
            3
        } else {
            match e {
                Error::Protocol(_) => 2,
                _ => 1,
            }
        };
        Failure::new(code, e.to_string())
    }
}

impl From<SignatureError> for Failure {
    fn from(e: SignatureError) -> Self {
        Error::from(e).into()
    }
}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T> = Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> CliResult<NestedCoalgebra> {
    let text = read(path)?;
    parse_file(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Parses arguments and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("sigrefine: {}", f.message);
            f.code
        }
    }
}

pub fn execute(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Minimize {
            input,
            engine,
            workers,
            seed,
            roster,
            out,
            stats,
        } => {
            if workers == 0 {
                return Err(Failure::input("--workers must be at least 1"));
            }
            let nested = load(&input)?;
            let outcome = minimize(&nested, engine, workers, seed, roster.as_deref())?;
            let partition = write_partition(outcome.partition.block_of(), &nested.names);
            match out {
                Some(path) => write(&path, partition)?,
                None => print!("{partition}"),
            }
            if let Some(path) = stats {
                write(&path, outcome.stats.to_text())?;
            }
            Ok(())
        }
        Cmd::GenerateWta {
            states,
            rank,
            monoid,
            seed,
            out,
        } => {
            let spec = WtaSpec {
                states,
                rank,
                monoid,
                seed,
            };
            let text = sigrefine_core::generate_wta(&spec).map_err(Failure::input)?;
            match out {
                Some(path) => write(&path, text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Cmd::Split {
            input,
            workers,
            out_dir,
        } => {
            if workers == 0 {
                return Err(Failure::input("--workers must be at least 1"));
            }
            let nested = load(&input)?;
            let c = desort(&nested)?;
            split(&nested, &c, workers, &out_dir)?;
            Ok(())
        }
        Cmd::Worker {
            manifest,
            id,
            roster,
            out,
            timeout,
        } => worker(&manifest, id, &roster, out.as_deref(), Duration::from_secs(timeout)),
        Cmd::OracleCheck {
            input,
            random,
            states,
            seed,
        } => oracle_check(input.as_deref(), random, states, seed),
    }
}

/// Contents of the stats file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stats {
    pub engine: Engine,
    pub workers: u32,
    pub n: usize,
    pub m: usize,
    pub n_prime: usize,
    pub iterations: usize,
    pub splitting_rounds: usize,
    pub blocks: usize,
    pub wall_ms: u128,
    /// Heap high-water mark per worker when measured in-process, resident
    /// set high-water mark per process otherwise.
    pub peak_rss_bytes_per_worker: Vec<u64>,
    pub peak_source: &'static str,
    /// Digest of the final block ids; only for hash-based engines, whose
    /// ids agree with each other.
    pub sig_digest: Option<u64>,
}

impl Stats {
    pub fn to_text(&self) -> String {
        let peaks: Vec<String> = self
            .peak_rss_bytes_per_worker
            .iter()
            .map(u64::to_string)
            .collect();
        let mut out = format!(
            "engine={}\nworkers={}\nn={}\nm={}\nn_prime={}\niterations={}\nsplitting_rounds={}\nblocks={}\nwall_ms={}\npeak_rss_bytes_per_worker={}\npeak_source={}\n",
            self.engine,
            self.workers,
            self.n,
            self.m,
            self.n_prime,
            self.iterations,
            self.splitting_rounds,
            self.blocks,
            self.wall_ms,
            peaks.join(","),
            self.peak_source,
        );
        if let Some(d) = self.sig_digest {
            out.push_str(&format!("sig_digest={d:016x}\n"));
        }
        out
    }
}

/// Reads a stats file into `key -> value`.
pub fn parse_stats(text: &str) -> std::collections::BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

pub struct Minimized {
    pub partition: Partition,
    pub stats: Stats,
}

fn digest(ids: &[SigId]) -> u64 {
    let mut bytes = Vec::with_capacity(16 * ids.len());
    for id in ids {
        bytes.extend_from_slice(&id.0.to_le_bytes());
    }
    xxh3_64(&bytes)
}

pub fn minimize(
    nested: &NestedCoalgebra,
    engine: Engine,
    workers: u32,
    seed: Option<u64>,
    roster: Option<&Path>,
) -> CliResult<Minimized> {
    let start = Instant::now();
    let c = desort(nested)?;
    let n = nested.len();
    let (result, ids, peaks, source) = match engine {
        Engine::SeqExact | Engine::SeqHashed => {
            let mode = if engine == Engine::SeqExact {
                HashMode::Exact
            } else {
                HashMode::Hashed
            };
            let tag = is_tracking().then(MemoryTag::acquire).flatten();
            let mut last: Vec<SigId> = Vec::new();
            let result = {
                let _guard = tag.as_ref().map(MemoryTag::enter);
                refine_with_observer(&c, mode, |round| {
                    if mode == HashMode::Hashed {
                        last.clear();
                        last.extend(round.block_of[..n].iter().map(|&b| SigId(b)));
                    }
                })?
            };
            let (peak, source) = match &tag {
                Some(t) => (t.peak_bytes(), "heap"),
                None => (process_peak_rss().unwrap_or(0), "rss"),
            };
            let ids = (mode == HashMode::Hashed && last.len() == n).then_some(last);
            (result, ids, vec![peak], source)
        }
        Engine::DistInproc => {
            let scheduler = seed.map_or(Scheduler::Fifo, Scheduler::Adversarial);
            let run = run_inproc(&c, workers, scheduler)?;
            let source = if is_tracking() { "heap" } else { "none" };
            (run.result, Some(run.ids), run.peaks, source)
        }
        Engine::DistTcp => {
            let (result, ids, peaks) = dist_tcp(nested, &c, workers, roster)?;
            (result, Some(ids), peaks, "rss")
        }
    };
    let partition = result.partition.restrict(n);
    let stats = Stats {
        engine,
        workers: if matches!(engine, Engine::SeqExact | Engine::SeqHashed) { 1 } else { workers },
        n,
        m: c.edge_count(),
        n_prime: c.state_count(),
        iterations: result.iterations,
        splitting_rounds: result.splitting_rounds(),
        blocks: partition.size(),
        wall_ms: start.elapsed().as_millis(),
        peak_rss_bytes_per_worker: peaks,
        peak_source: source,
        sig_digest: ids.as_deref().map(digest),
    };
    Ok(Minimized { partition, stats })
}

/// Writes `slice-<i>.bin`, `names.txt` and `manifest.txt` into `dir`.
pub fn split(
    nested: &NestedCoalgebra,
    c: &EncodedCoalgebra,
    workers: u32,
    dir: &Path,
) -> CliResult<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    let mut slices = Vec::with_capacity(workers as usize);
    for (i, range) in split_states(c.state_count(), workers).into_iter().enumerate() {
        let bytes = write_slice(&c.slice(range.clone()), workers, i as u32);
        let file = format!("slice-{i}.bin");
        write(&dir.join(&file), &bytes)?;
        slices.push(SliceEntry {
            id: i as u32,
            range,
            file,
            checksum: Manifest::checksum(&bytes),
        });
    }
    let mut names = nested.names.join("\n");
    names.push('\n');
    write(&dir.join("names.txt"), names)?;
    let manifest = Manifest {
        workers,
        states: nested.len(),
        n_prime: c.state_count(),
        edges: c.edge_count(),
        functor: c.term().to_string(),
        names: Some("names.txt".into()),
        slices,
    };
    write(&dir.join("manifest.txt"), manifest.to_text())?;
    Ok(manifest)
}

fn load_roster(path: &Path) -> CliResult<Roster> {
    parse_roster(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn worker(
    manifest_path: &Path,
    id: u32,
    roster_path: &Path,
    out: Option<&Path>,
    timeout: Duration,
) -> CliResult<()> {
    let manifest = read_manifest(&read(manifest_path)?)
        .map_err(|e| Failure::new(2, format!("{}: {e}", manifest_path.display())))?;
    let roster = load_roster(roster_path)?;
    if roster.len() != manifest.workers as usize {
        return Err(Failure::new(
            2,
            format!(
                "roster lists {} workers, manifest was cut for {}",
                roster.len(),
                manifest.workers
            ),
        ));
    }
    let entry = manifest
        .slices
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Failure::new(2, format!("manifest has no slice {id}")))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let bytes = fs::read(dir.join(&entry.file))
        .map_err(|e| Failure::input(format!("{}: {e}", entry.file)))?;
    let slice = manifest.verify(id, &bytes)?;
    drop(bytes);

    let mut transport = TcpTransport::connect(&roster, id, timeout).map_err(ProtocolError::from)?;
    transport.set_recv_timeout(timeout);
    let peak = || process_peak_rss().unwrap_or(0);
    let outcome = match run_worker(&slice, &mut transport, &peak) {
        Ok(o) => o,
        Err(e) => {
            transport.abort();
            return Err(e.into());
        }
    };
    drop(transport);

    let mut text = format!("worker={id}\npeak_rss_bytes={}\n", peak());
    if let Some(g) = outcome.gathered {
        let join = |v: &[u64]| v.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        text.push_str(&format!("history={}\npeaks={}\n", join(&g.history), join(&g.peaks)));
        for id in &g.ids {
            text.push_str(&format!("id={id}\n"));
        }
    }
    if let Some(path) = out {
        write(path, text)?;
    }
    Ok(())
}

fn dist_tcp(
    nested: &NestedCoalgebra,
    c: &EncodedCoalgebra,
    workers: u32,
    roster: Option<&Path>,
) -> CliResult<(sigrefine_core::RefineResult, Vec<SigId>, Vec<u64>)> {
    let dir = tempfile::tempdir().map_err(|e| Failure::input(format!("temporary directory: {e}")))?;
    split(nested, c, workers, dir.path())?;
    let roster_path = match roster {
        Some(p) => p.to_path_buf(),
        None => {
            let r = free_local_roster(workers)
                .map_err(|e| Failure::new(2, format!("no free local ports: {e}")))?;
            let p = dir.path().join("roster.txt");
            write(&p, r.to_text())?;
            p
        }
    };
    let exe = std::env::current_exe().map_err(|e| Failure::input(e.to_string()))?;
    let fragment = |i: u32| dir.path().join(format!("result-{i}.txt"));
    let mut children = Vec::with_capacity(workers as usize);
    for i in 0..workers {
        let child = Command::new(&exe)
            .arg("worker")
            .arg("--manifest")
            .arg(dir.path().join("manifest.txt"))
            .arg("--id")
            .arg(i.to_string())
            .arg("--roster")
            .arg(&roster_path)
            .arg("--out")
            .arg(fragment(i))
            .spawn()
            .map_err(|e| Failure::new(2, format!("starting worker {i}: {e}")))?;
        children.push(child);
    }
    let mut worst = 0;
    for (i, mut child) in children.into_iter().enumerate() {
        let status = child
            .wait()
            .map_err(|e| Failure::new(2, format!("worker {i}: {e}")))?;
        if !status.success() {
            let code = status.code().unwrap_or(2);
            log::error!("worker {i} exited with {status}");
            // keep the most specific failure: overflow over protocol
            worst = worst.max(code);
        }
    }
    if worst != 0 {
        return Err(Failure::new(worst, "a worker process failed"));
    }

    let mut peaks = vec![0u64; workers as usize];
    let mut history = Vec::new();
    let mut ids = Vec::new();
    for i in 0..workers {
        let text = read(&fragment(i))?;
        for (k, v) in text.lines().filter_map(|l| l.split_once('=')) {
            let bad = || Failure::new(2, format!("bad line in result of worker {i}"));
            match k {
                "peak_rss_bytes" => peaks[i as usize] = v.parse().map_err(|_| bad())?,
                "history" if !v.is_empty() => {
                    history = v
                        .split(',')
                        .map(str::parse)
                        .collect::<Result<Vec<usize>, _>>()
                        .map_err(|_| bad())?
                }
                "id" => ids.push(SigId(u128::from_str_radix(v, 16).map_err(|_| bad())?)),
                _ => {}
            }
        }
    }
    if ids.len() != nested.len() {
        return Err(Failure::new(2, "worker 0 returned an incomplete result"));
    }
    let result = sigrefine_core::RefineResult {
        partition: Partition::from_keys(&ids),
        iterations: history.len(),
        history,
    };
    Ok((result, ids, peaks))
}

fn oracle_check(input: Option<&Path>, random: usize, states: usize, seed: u64) -> CliResult<()> {
    let check = |c: &NestedCoalgebra, what: &str| -> CliResult<()> {
        let cmp = oracle::compare(c).map_err(|e| match e {
            OracleError::Signature(s) => Failure::from(s),
            OracleError::NotUnique => Failure::new(4, format!("{what}: {e}")),
            OracleError::TooLarge(_) => Failure::input(format!("{what}: {e}")),
        })?;
        if cmp.agrees() {
            Ok(())
        } else {
            Err(Failure::new(
                4,
                format!(
                    "{what}: expected\n{}got\n{}",
                    write_partition(cmp.expected.block_of(), &c.names),
                    write_partition(cmp.actual.block_of(), &c.names)
                ),
            ))
        }
    };
    match input {
        Some(path) => {
            let c = load(path)?;
            check(&c, &path.display().to_string())?;
            println!("agree: {} states, {} blocks", c.len(), oracle::brute_force_coarsest(&c).map(|p| p.size()).unwrap_or(0));
        }
        None => {
            if states == 0 || states > oracle::MAX_STATES {
                return Err(Failure::input(format!("--states must be in 1..={}", oracle::MAX_STATES)));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for term in RANDOM_TERMS {
                for i in 0..random {
                    let c = oracle::random_instance(term, states, &mut rng);
                    check(&c, &format!("`{term}` instance {i}"))?;
                }
            }
            println!("agree: {} instances", random * RANDOM_TERMS.len());
        }
    }
    Ok(())
}
