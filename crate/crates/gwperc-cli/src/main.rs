//! Batch command-line front end: every experiment is a single reproducible
//! invocation. Human-readable tables go to stdout; `--json` / `--csv` write
//! machine-readable copies. Exit codes: 0 success, 1 failed verification
//! criterion, 2 usage error, 3 violated precondition or runtime failure.

use clap::{Args, Parser, Subcommand};
use gwperc::acceptance::{run_all, Budget};
use gwperc::annealed::{
    annealed_iic_sizes, annealed_survival_exact, annealed_yaglom, DEFAULT_MAX_ATTEMPTS,
};
use gwperc::deep::{DeepPrefix, DeepTree};
use gwperc::iic;
use gwperc::martingale::increment_study;
use gwperc::offspring::{CriticalParams, OffspringSpec, DEFAULT_K_MAX};
use gwperc::percolation::{
    conditioned_sizes, factorial_moments_exact, point_probability_exact, spread_diagnostics,
    survival_deep, survival_exact, survival_mc, survival_regular, survival_with_boundary,
};
use gwperc::stats::{exp_cdf, gamma2_cdf, EmpiricalSummary};
use gwperc::tree::GwTree;
use serde_json::{json, Value};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Vertex budget for materialized prefixes of implicit trees.
const PREFIX_BUDGET: u64 = 4_000_000;

#[derive(Parser)]
#[command(
    name = "gwperc",
    version,
    about = "Critical percolation and the incipient infinite cluster on Galton-Watson trees"
)]
struct Cli {
    /// Worker threads for replicate parallelism (results are independent of
    /// this by the per-replicate stream contract).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputArgs {
    /// Write the full machine-readable result to this JSON file.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the main table to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TreeSourceArgs {
    /// Tree file produced by gen-tree (materialized arena).
    #[arg(long, conflicts_with_all = ["dist", "tree_seed"])]
    tree: Option<PathBuf>,
    /// Offspring spec string: det:d | unif:a:b | pmf:p1,p2,... | geom:q | poisplus:theta.
    #[arg(long)]
    dist: Option<String>,
    /// Master seed fixing an implicit tree (used with --dist for depths no
    /// arena can hold).
    #[arg(long)]
    tree_seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a tree to a fixed depth and write its file format.
    GenTree {
        #[arg(long)]
        dist: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-depth survival probabilities q_n with n*q_n and lambda*W_n.
    Survival {
        #[command(flatten)]
        source: TreeSourceArgs,
        #[arg(long)]
        depth: usize,
        /// Exact sweep (default).
        #[arg(long, conflicts_with = "mc")]
        exact: bool,
        /// Monte Carlo with this many replicates instead of the exact sweep.
        #[arg(long)]
        mc: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Exact factorial moment table and corrected-statistic trace.
    Moments {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Increment statistics of the corrected moment martingale over
    /// independent trees, with the fitted decay slope.
    MartingaleDecay {
        #[arg(long)]
        dist: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        nmax: usize,
        #[arg(long)]
        trees: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Conditioned cluster sizes |Y_n|/n with the KS distance to the
    /// exponential limit law.
    Yaglom {
        #[command(flatten)]
        source: TreeSourceArgs,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        accepted: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Incipient-infinite-cluster sizes C_n/n with the KS distance to the
    /// Gamma(2, lambda) limit law.
    Iic {
        #[command(flatten)]
        source: TreeSourceArgs,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        reps: usize,
        #[arg(long, default_value_t = 10)]
        lookahead: usize,
        #[arg(long)]
        seed: u64,
        /// Comma-separated lookahead list for a sensitivity report.
        #[arg(long)]
        sensitivity: Option<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Annealed counterparts: tree and percolation averaged jointly.
    Annealed {
        #[command(subcommand)]
        what: AnnealedCommand,
    },
    /// Conditioned spread diagnostics over a doubling depth sequence.
    Spread {
        #[command(flatten)]
        source: TreeSourceArgs,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the verification suite; exit 0 iff every criterion passes.
    VerifyAll {
        #[arg(long, default_value = "smoke")]
        budget: String,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Subcommand)]
enum AnnealedCommand {
    Survival {
        #[arg(long)]
        dist: String,
        #[arg(long)]
        depth: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    Yaglom {
        #[arg(long)]
        dist: String,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        accepted: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    Iic {
        #[arg(long)]
        dist: String,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        reps: usize,
        #[arg(long, default_value_t = 10)]
        lookahead: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .ok();
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

/// Table + optional JSON/CSV emission shared by every subcommand.
struct Report {
    command: &'static str,
    started: Instant,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    meta: Value,
    results: Value,
}

impl Report {
    fn new(command: &'static str) -> Self {
        Report {
            command,
            started: Instant::now(),
            header: Vec::new(),
            rows: Vec::new(),
            meta: json!({}),
            results: json!({}),
        }
    }

    fn emit(mut self, output: &OutputArgs) -> gwperc::Result<()> {
        if !self.header.is_empty() {
            let widths: Vec<usize> = self
                .header
                .iter()
                .enumerate()
                .map(|(i, h)| {
                    self.rows
                        .iter()
                        .map(|r| r[i].len())
                        .chain(std::iter::once(h.len()))
                        .max()
                        .unwrap()
                })
                .collect();
            let line = |cells: &[String]| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            let head: Vec<String> = self.header.iter().map(|s| s.to_string()).collect();
            println!("{}", line(&head));
            for row in &self.rows {
                println!("{}", line(row));
            }
        }
        let wall = self.started.elapsed().as_secs_f64();
        if let Some(path) = &output.csv {
            let mut text = self.header.join(",") + "\n";
            for row in &self.rows {
                text.push_str(&row.join(","));
                text.push('\n');
            }
            std::fs::write(path, text)?;
        }
        if let Some(path) = &output.json {
            if let Value::Object(meta) = std::mem::take(&mut self.meta) {
                let mut doc = serde_json::Map::new();
                doc.insert("command".into(), json!(self.command));
                doc.insert("artifact_version".into(), json!(VERSION));
                for (k, v) in meta {
                    doc.insert(k, v);
                }
                doc.insert("wall_time_s".into(), json!(wall));
                doc.insert("results".into(), std::mem::take(&mut self.results));
                let text = serde_json::to_string_pretty(&Value::Object(doc))
                    .expect("report serializes");
                std::fs::write(path, text)?;
            }
        }
        Ok(())
    }
}

/// Either a materialized tree from a file or an implicit deep tree.
enum TreeSource {
    Arena(GwTree),
    Deep(DeepTree),
}

impl TreeSource {
    fn resolve(args: &TreeSourceArgs) -> gwperc::Result<Self> {
        match (&args.tree, &args.dist) {
            (Some(path), None) => Ok(TreeSource::Arena(GwTree::load(path)?)),
            (None, Some(dist)) => {
                let spec: OffspringSpec = dist.parse()?;
                match (args.tree_seed, spec.is_deterministic()) {
                    (Some(seed), _) => Ok(TreeSource::Deep(DeepTree::new(spec, seed))),
                    // A deterministic law names a unique tree; no seed needed.
                    (None, true) => Ok(TreeSource::Deep(DeepTree::new(spec, 0))),
                    (None, false) => Err(gwperc::Error::InvalidInput(
                        "a random offspring law needs --tree-seed (or --tree <file>) to fix a tree"
                            .into(),
                    )),
                }
            }
            _ => Err(gwperc::Error::InvalidInput(
                "give exactly one tree source: --tree <file> or --dist <spec> [--tree-seed <u64>]"
                    .into(),
            )),
        }
    }

    fn spec(&self) -> &OffspringSpec {
        match self {
            TreeSource::Arena(t) => t.spec(),
            TreeSource::Deep(t) => t.spec(),
        }
    }

    fn params(&self) -> gwperc::Result<CriticalParams> {
        self.spec().derive_params(DEFAULT_K_MAX)
    }

    fn describe(&self) -> Value {
        match self {
            TreeSource::Arena(t) => json!({
                "kind": "arena",
                "spec": t.spec().name(),
                "tree_seed": t.master_seed(),
                "generated_depth": t.generated_depth(),
            }),
            TreeSource::Deep(t) => json!({
                "kind": "implicit",
                "spec": t.spec().name(),
                "tree_seed": t.master_seed(),
            }),
        }
    }
}

fn format_sig(x: f64) -> String {
    format!("{x:.6e}")
}

fn dispatch(command: Command) -> gwperc::Result<ExitCode> {
    match command {
        Command::GenTree {
            dist,
            seed,
            depth,
            out,
        } => {
            let spec: OffspringSpec = dist.parse()?;
            let tree = GwTree::generate(spec, seed, depth)?;
            tree.save(&out)?;
            println!(
                "wrote {} ({} vertices to depth {depth})",
                out.display(),
                tree.vertex_count()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Survival {
            source,
            depth,
            exact: _,
            mc,
            seed,
            output,
        } => cmd_survival(source, depth, mc, seed, output),
        Command::Moments {
            tree,
            depth,
            k,
            output,
        } => cmd_moments(tree, depth, k, output),
        Command::MartingaleDecay {
            dist,
            k,
            nmax,
            trees,
            seed,
            output,
        } => cmd_martingale(dist, k, nmax, trees, seed, output),
        Command::Yaglom {
            source,
            depth,
            accepted,
            seed,
            output,
        } => cmd_yaglom(source, depth, accepted, seed, output),
        Command::Iic {
            source,
            depth,
            reps,
            lookahead,
            seed,
            sensitivity,
            output,
        } => cmd_iic(source, depth, reps, lookahead, seed, sensitivity, output),
        Command::Annealed { what } => match what {
            AnnealedCommand::Survival {
                dist,
                depth,
                output,
            } => cmd_annealed_survival(dist, depth, output),
            AnnealedCommand::Yaglom {
                dist,
                depth,
                accepted,
                seed,
                output,
            } => cmd_annealed_yaglom(dist, depth, accepted, seed, output),
            AnnealedCommand::Iic {
                dist,
                depth,
                reps,
                lookahead,
                seed,
                output,
            } => cmd_annealed_iic(dist, depth, reps, lookahead, seed, output),
        },
        Command::Spread {
            source,
            depth,
            reps,
            seed,
            output,
        } => cmd_spread(source, depth, reps, seed, output),
        Command::VerifyAll { budget, output } => cmd_verify(budget, output),
    }
}

/// Depths reported for deep curves: powers of two plus the target.
fn report_depths(n: usize) -> Vec<usize> {
    let mut out = vec![0usize];
    let mut d = 1usize;
    while d < n {
        out.push(d);
        d *= 2;
    }
    out.push(n);
    out
}

fn cmd_survival(
    source: TreeSourceArgs,
    depth: usize,
    mc: Option<u64>,
    seed: u64,
    output: OutputArgs,
) -> gwperc::Result<ExitCode> {
    let source = TreeSource::resolve(&source)?;
    let lambda = source.params()?.lambda;
    let mut report = Report::new("survival");
    report.header = vec!["n", "q_n", "n*q_n", "lambda*W_n"];

    // (depth, q, W) triples; W is NaN where no exact value exists.
    let mut curve: Vec<(usize, f64, f64)> = Vec::new();
    match (&source, mc) {
        (TreeSource::Arena(tree), None) => {
            let q = survival_exact(tree, depth)?;
            for j in 0..=depth {
                curve.push((j, q.q[j], tree.w(j)));
            }
        }
        (TreeSource::Arena(tree), Some(reps)) => {
            tree.ensure_depth(depth)?;
            let freq = survival_mc(tree, depth, reps, seed);
            for j in 0..=depth {
                curve.push((j, freq[j], tree.w(j)));
            }
        }
        (TreeSource::Deep(dt), None) => {
            if dt.spec().is_deterministic() {
                let q = survival_regular(dt.spec().max_children(), dt.spec().pc(), depth);
                for j in report_depths(depth) {
                    curve.push((j, q[j], 1.0));
                }
            } else {
                let prefix = dt.prefix(PREFIX_BUDGET, 40);
                let tail = annealed_survival_exact(dt.spec(), depth);
                for j in report_depths(depth) {
                    let (q, w) = deep_point(&prefix, dt.spec().pc(), &tail, j)?;
                    curve.push((j, q, w));
                }
            }
        }
        (TreeSource::Deep(dt), Some(reps)) => {
            let freq = survival_mc(dt, depth, reps, seed);
            for j in report_depths(depth) {
                curve.push((j, freq[j], f64::NAN));
            }
        }
    }
    for &(j, q, w) in &curve {
        report.rows.push(vec![
            j.to_string(),
            format_sig(q),
            format_sig(j as f64 * q),
            if w.is_nan() {
                "-".into()
            } else {
                format_sig(lambda * w)
            },
        ]);
    }
    report.meta = json!({
        "tree": source.describe(),
        "seeds": {"seed": seed},
        "params": {"depth": depth, "mode": if mc.is_some() { "mc" } else { "exact" }, "mc_replicates": mc},
    });
    report.results = json!({
        "lambda": lambda,
        "curve": curve.iter().map(|&(j, q, w)| json!({
            "n": j, "q": q, "w": if w.is_nan() { None } else { Some(w) }
        })).collect::<Vec<_>>(),
    });
    report.emit(&output)?;
    Ok(ExitCode::SUCCESS)
}

/// Survival and weight at depth `j` of an implicit tree: exact inside the
/// materialized prefix, annealed-tail boundary beyond it.
fn deep_point(
    prefix: &DeepPrefix,
    pc: f64,
    tail: &[f64],
    j: usize,
) -> gwperc::Result<(f64, f64)> {
    let w = if j <= prefix.depth() {
        prefix.w[j]
    } else {
        prefix.w_estimate()
    };
    Ok((survival_deep(prefix, pc, tail, j)?, w))
}

fn cmd_moments(
    tree: PathBuf,
    depth: usize,
    k: usize,
    output: OutputArgs,
) -> gwperc::Result<ExitCode> {
    let tree = GwTree::load(tree)?;
    let params = tree.spec().derive_params(k.max(DEFAULT_K_MAX))?;
    let table = factorial_moments_exact(&tree, depth, k)?;
    let trace = gwperc::martingale::trace(&params, &table, k, tree.master_seed())?;
    let mut report = Report::new("moments");
    report.header = vec!["j", "i", "E[binom(|Y_j|,i)]"];
    for j in 0..=depth {
        for i in 0..=k {
            report.rows.push(vec![
                j.to_string(),
                i.to_string(),
                format_sig(table.entry(j, i)),
            ]);
        }
    }
    report.meta = json!({
        "tree": {"spec": tree.spec().name(), "tree_seed": tree.master_seed()},
        "seeds": {},
        "params": {"depth": depth, "k": k},
    });
    report.results = json!({
        "moments": (0..=depth).map(|j| table.row(j).to_vec()).collect::<Vec<_>>(),
        "m_trace": trace.values,
    });
    report.emit(&output)?;
    println!("corrected statistic M_n({k}):");
    for (n, v) in trace.values.iter().enumerate() {
        println!("  n = {n:>3}  {v:+.9e}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_martingale(
    dist: String,
    k: usize,
    nmax: usize,
    trees: usize,
    seed: u64,
    output: OutputArgs,
) -> gwperc::Result<ExitCode> {
    let spec: OffspringSpec = dist.parse()?;
    let study = increment_study(&spec, k, nmax, trees, seed)?;
    let mut report = Report::new("martingale-decay");
    report.header = vec!["n", "mean_increment", "std_err", "l2_increment"];
    for s in &study.per_n {
        report.rows.push(vec![
            s.n.to_string(),
            format_sig(s.mean),
            format_sig(s.std_err),
            format_sig(s.l2),
        ]);
    }
    report.meta = json!({
        "spec": spec.name(),
        "seeds": {"seed": seed},
        "params": {"k": k, "nmax": nmax, "trees": trees},
    });
    report.results = json!({
        "slope": study.slope,
        "per_n": study.per_n.iter().map(|s| json!({
            "n": s.n, "mean": s.mean, "std_err": s.std_err, "l2": s.l2
        })).collect::<Vec<_>>(),
    });
    report.emit(&output)?;
    println!("fitted log-L2 slope: {:+.4}", study.slope);
    Ok(ExitCode::SUCCESS)
}

fn cmd_yaglom(
    source: TreeSourceArgs,
    depth: usize,
    accepted: usize,
    seed: u64,
    output: OutputArgs,
) -> gwperc::Result<ExitCode> {
    let source = TreeSource::resolve(&source)?;
    let lambda = source.params()?.lambda;
    let sample = match &source {
        TreeSource::Arena(t) => conditioned_sizes(t, depth, accepted, seed, DEFAULT_MAX_ATTEMPTS)?,
        TreeSource::Deep(t) => conditioned_sizes(t, depth, accepted, seed, DEFAULT_MAX_ATTEMPTS)?,
    };
    let normalized = sample.normalized();
    let summary = EmpiricalSummary::from_samples(normalized.clone())?;
    let ks = summary.ks_distance(exp_cdf(lambda)?);
    let mut report = Report::new("yaglom");
    report.header = vec!["quantity", "value"];
    for (q, v) in [
        ("accepted", sample.sizes.len() as f64),
        ("attempts", sample.attempts as f64),
        ("acceptance_rate", sample.acceptance_rate),
        ("mean |Y_n|/n", summary.mean),
        ("target mean 1/lambda", 1.0 / lambda),
        ("ks_distance_to_exponential", ks),
    ] {
        report.rows.push(vec![q.to_string(), format_sig(v)]);
    }
    report.meta = json!({
        "tree": source.describe(),
        "seeds": {"seed": seed},
        "params": {"depth": depth, "accepted": accepted},
    });
    report.results = json!({
        "lambda": lambda,
        "ks_distance": ks,
        "mean": summary.mean,
        "acceptance_rate": sample.acceptance_rate,
        "attempts": sample.attempts,
        "normalized_sizes": normalized,
    });
    report.emit(&output)?;
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_iic(
    source: TreeSourceArgs,
    depth: usize,
    reps: usize,
    lookahead: usize,
    seed: u64,
    sensitivity: Option<String>,
    output: OutputArgs,
) -> gwperc::Result<ExitCode> {
    let source = TreeSource::resolve(&source)?;
    let lambda = source.params()?.lambda;
    let lookaheads: Vec<usize> = match &sensitivity {
        Some(list) => list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| gwperc::Error::InvalidInput(format!("bad lookahead {t:?}")))
            })
            .collect::<gwperc::Result<_>>()?,
        None => vec![lookahead],
    };
    let mut report = Report::new("iic");
    report.header = vec!["lookahead", "mean C_n/n", "target 2/lambda", "ks_to_gamma2"];
    let mut runs = Vec::new();
    for &m in &lookaheads {
        let sizes = match &source {
            TreeSource::Arena(t) => iic::iic_sizes_arena(t, depth, m, reps, seed)?,
            TreeSource::Deep(t) => iic::iic_sizes_deep(t, depth, m, reps, seed)?,
        };
        let summary = EmpiricalSummary::from_samples(sizes.clone())?;
        let ks = summary.ks_distance(gamma2_cdf(lambda)?);
        report.rows.push(vec![
            m.to_string(),
            format_sig(summary.mean),
            format_sig(2.0 / lambda),
            format_sig(ks),
        ]);
        runs.push(json!({
            "lookahead": m,
            "mean": summary.mean,
            "ks_distance": ks,
            "normalized_sizes": if lookaheads.len() == 1 { json!(sizes) } else { json!(null) },
        }));
    }
    report.meta = json!({
        "tree": source.describe(),
        "seeds": {"seed": seed},
        "params": {"depth": depth, "reps": reps, "lookaheads": lookaheads},
    });
    report.results = json!({"lambda": lambda, "runs": runs});
    report.emit(&output)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_annealed_survival(
    dist: String,
    depth: usize,
    output: OutputArgs,
) -> gwperc::Result<ExitCode> {
    let spec: OffspringSpec = dist.parse()?;
    let lambda = spec.derive_params(2)?.lambda;
    let q = annealed_survival_exact(&spec, depth);
    let mut report = Report::new("annealed-survival");
    report.header = vec!["n", "q_n", "n*q_n", "lambda"];
    for j in report_depths(depth) {
        report.rows.push(vec![
            j.to_string(),
            format_sig(q[j]),
            format_sig(j as f64 * q[j]),
            format_sig(lambda),
        ]);
    }
    report.meta = json!({
        "spec": spec.name(),
        "seeds": {},
        "params": {"depth": depth},
    });
    report.results = json!({"lambda": lambda, "q": q});
    report.emit(&output)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_annealed_yaglom(
    dist: String,
    depth: usize,
    accepted: usize,
    seed: u64,
    output: OutputArgs,
) -> gwperc::Result<ExitCode> {
    let spec: OffspringSpec = dist.parse()?;
    let lambda = spec.derive_params(2)?.lambda;
    let out = annealed_yaglom(&spec, depth, accepted, seed, DEFAULT_MAX_ATTEMPTS)?;
    let normalized: Vec<f64> = out.sizes.iter().map(|&s| s as f64 / depth as f64).collect();
    let summary = EmpiricalSummary::from_samples(normalized.clone())?;
    let ks = summary.ks_distance(exp_cdf(lambda)?);
    let exact_q = annealed_survival_exact(&spec, depth)[depth];
    let mut report = Report::new("annealed-yaglom");
    report.header = vec!["quantity", "value"];
    for (q, v) in [
        ("accepted", out.sizes.len() as f64),
        ("acceptance_rate", out.acceptance_rate),
        ("exact q_n", exact_q),
        ("mean Z_n/n", summary.mean),
        ("ks_distance_to_exponential", ks),
    ] {
        report.rows.push(vec![q.to_string(), format_sig(v)]);
    }
    report.meta = json!({
        "spec": spec.name(),
        "seeds": {"seed": seed},
        "params": {"depth": depth, "accepted": accepted},
    });
    report.results = json!({
        "lambda": lambda,
        "ks_distance": ks,
        "acceptance_rate": out.acceptance_rate,
        "exact_q": exact_q,
        "normalized_sizes": normalized,
    });
    report.emit(&output)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_annealed_iic(
    dist: String,
    depth: usize,
    reps: usize,
    lookahead: usize,
    seed: u64,
    output: OutputArgs,
) -> gwperc::Result<ExitCode> {
    let spec: OffspringSpec = dist.parse()?;
    let lambda = spec.derive_params(2)?.lambda;
    let sizes = annealed_iic_sizes(&spec, depth, lookahead, reps, seed)?;
    let summary = EmpiricalSummary::from_samples(sizes.clone())?;
    let ks = summary.ks_distance(gamma2_cdf(lambda)?);
    let mut report = Report::new("annealed-iic");
    report.header = vec!["quantity", "value"];
    for (q, v) in [
        ("replicates", sizes.len() as f64),
        ("mean C_n/n", summary.mean),
        ("target 2/lambda", 2.0 / lambda),
        ("ks_to_gamma2", ks),
    ] {
        report.rows.push(vec![q.to_string(), format_sig(v)]);
    }
    report.meta = json!({
        "spec": spec.name(),
        "seeds": {"seed": seed},
        "params": {"depth": depth, "reps": reps, "lookahead": lookahead},
    });
    report.results = json!({
        "lambda": lambda,
        "ks_distance": ks,
        "mean": summary.mean,
        "normalized_sizes": sizes,
    });
    report.emit(&output)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_spread(
    source: TreeSourceArgs,
    depth: usize,
    reps: usize,
    seed: u64,
    output: OutputArgs,
) -> gwperc::Result<ExitCode> {
    let source = TreeSource::resolve(&source)?;
    let pc = source.spec().pc();
    let depths: Vec<usize> = [depth / 4, depth / 2, depth]
        .into_iter()
        .filter(|&n| n >= 1)
        .collect();
    let tail = annealed_survival_exact(source.spec(), depth);
    let mut report = Report::new("spread");
    report.header = vec![
        "n",
        "m",
        "accepted",
        "p_multi",
        "p_max_mc",
        "p_max_exact",
        "mean_size",
        "low_confidence",
    ];
    let mut rows_json = Vec::new();
    for &n in &depths {
        let (rep, q_n) = match &source {
            TreeSource::Arena(t) => {
                let rep = spread_diagnostics(t, n, reps, seed, DEFAULT_MAX_ATTEMPTS)?;
                (rep, survival_exact(t, n)?.q[n])
            }
            TreeSource::Deep(t) => {
                let rep = spread_diagnostics(t, n, reps, seed, DEFAULT_MAX_ATTEMPTS)?;
                let q = if t.spec().is_deterministic() {
                    survival_regular(t.spec().max_children(), pc, n)[n]
                } else {
                    let prefix = t.prefix(PREFIX_BUDGET, 40);
                    survival_deep(&prefix, pc, &tail, n)?
                };
                (rep, q)
            }
        };
        let exact = point_probability_exact(pc, n, q_n);
        report.rows.push(vec![
            n.to_string(),
            rep.m.to_string(),
            rep.accepted.to_string(),
            format_sig(rep.p_multi),
            format_sig(rep.p_max),
            format_sig(exact),
            format_sig(rep.mean_size),
            rep.low_confidence.to_string(),
        ]);
        rows_json.push(json!({
            "n": n, "m": rep.m, "accepted": rep.accepted, "attempts": rep.attempts,
            "p_multi": rep.p_multi, "p_max_mc": rep.p_max, "p_max_exact": exact,
            "mean_size": rep.mean_size, "low_confidence": rep.low_confidence,
        }));
    }
    report.meta = json!({
        "tree": source.describe(),
        "seeds": {"seed": seed},
        "params": {"depth": depth, "reps": reps},
    });
    report.results = json!({"per_depth": rows_json});
    report.emit(&output)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(budget: String, output: OutputArgs) -> gwperc::Result<ExitCode> {
    let budget = Budget::parse(&budget)
        .ok_or_else(|| gwperc::Error::InvalidInput(format!("unknown budget {budget:?}")))?;
    let started = Instant::now();
    let results = run_all(budget);
    for r in &results {
        println!("{}", r.line());
    }
    let all_passed = results.iter().all(|r| r.passed);
    println!(
        "{}: {}/{} criteria passed in {:.1}s",
        if all_passed { "OK" } else { "FAILED" },
        results.iter().filter(|r| r.passed).count(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if let Some(path) = &output.json {
        let doc = json!({
            "command": "verify-all",
            "artifact_version": VERSION,
            "params": {"budget": format!("{budget:?}").to_lowercase()},
            "wall_time_s": started.elapsed().as_secs_f64(),
            "results": results.iter().map(|r| json!({
                "index": r.index,
                "name": r.name,
                "passed": r.passed,
                "details": r.details,
                "seconds": r.seconds,
            })).collect::<Vec<_>>(),
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc).expect("serializes"))?;
    }
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
