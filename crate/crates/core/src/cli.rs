//! Command-line front end. [`run`] parses arguments, loads every input before
//! computing anything, and returns the process exit code: 0 on success, 1 on a
//! domain error, 2 on a usage or input error.

use crate::assignment::Assignment;
use crate::bandits::{self, BanditEnv, BetaPosterior, Policy, RegretMode, SimConfig};
use crate::data::DiscreteDataset;
use crate::discovery::{self, ChiSquareOracle};
use crate::estimation::{self, Smoothing};
use crate::graph::CausalGraph;
use crate::missing::{self, MGraph, Recovery};
use crate::scm::{CptDoc, DiscreteScm};
use crate::transport::{self, StratumEffects};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "causalkit", version, about = "Discrete causal inference toolkit")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub out: Format,
    /// Seed for randomized subcommands (required by them).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Significance level for independence tests.
    #[arg(long, global = true, default_value_t = discovery::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// CSV field delimiter.
    #[arg(long, global = true, default_value_t = ',')]
    pub delimiter: char,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test d-separation of two node sets given a third.
    Dsep(DsepArgs),
    /// List every path between two nodes, ignoring direction.
    Paths(PathsArgs),
    /// Check whether a set satisfies the backdoor criterion.
    BackdoorCheck(BackdoorArgs),
    /// Remove the edges into the intervened nodes.
    Mutilate(MutilateArgs),
    /// Report which do-calculus reductions apply to P(y | do(x)).
    Identify(IdentifyArgs),
    #[command(subcommand)]
    Scm(ScmCommand),
    #[command(subcommand)]
    Estimate(EstimateCommand),
    /// List backdoor paths through selection nodes.
    SelectionCheck(SelectionArgs),
    /// Stratified estimate of P(y | x) from selection-masked data.
    Debias(DebiasArgs),
    /// Re-weight stratum effects into a target population.
    Transport(TransportArgs),
    #[command(subcommand)]
    Missing(MissingCommand),
    #[command(subcommand)]
    Bandit(BanditCommand),
    #[command(subcommand)]
    Discover(DiscoverCommand),
}

#[derive(Debug, Args)]
pub struct DsepArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    #[arg(long, default_value = "")]
    pub given: String,
}

#[derive(Debug, Args)]
pub struct PathsArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
}

#[derive(Debug, Args)]
pub struct MutilateArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long = "do")]
    pub do_: String,
}

#[derive(Debug, Args)]
pub struct BackdoorArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    #[arg(long, default_value = "")]
    pub adjust: String,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    #[arg(long)]
    pub adjust: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum ScmCommand {
    /// Draw records by ancestral sampling.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        include_latent: bool,
        /// Write CSV here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Exact P(target | evidence), optionally under do(...).
    Query {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, default_value = "")]
        given: String,
        #[arg(long = "do", default_value = "")]
        do_: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum EstimateCommand {
    /// Empirical P(target | given) from complete rows.
    Prob {
        #[arg(long)]
        data: PathBuf,
        /// Target as VAR=STATE.
        #[arg(long)]
        target: String,
        #[arg(long, default_value = "")]
        given: String,
    },
    /// Backdoor-adjusted P(y | do(x)).
    Do {
        #[arg(long)]
        data: PathBuf,
        /// Treatment as VAR=STATE.
        #[arg(long)]
        x: String,
        /// Outcome as VAR=STATE.
        #[arg(long)]
        y: String,
        #[arg(long, default_value = "")]
        adjust: String,
        /// Use the joint-over-propensity form.
        #[arg(long)]
        ratio: bool,
        /// Add-one smoothing (exploratory only).
        #[arg(long)]
        laplace: bool,
    },
    /// Average causal effect between two treatment states.
    Ace {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        treat: String,
        #[arg(long)]
        control: String,
        #[arg(long)]
        y: String,
        #[arg(long, default_value = "")]
        adjust: String,
    },
    /// Compare aggregate and stratified rates for a binary treatment.
    Simpson {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        by: String,
    },
}

#[derive(Debug, Args)]
pub struct SelectionArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
}

#[derive(Debug, Args)]
pub struct DebiasArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    #[arg(long, default_value = "")]
    pub strata: String,
}

#[derive(Debug, Args)]
pub struct TransportArgs {
    #[arg(long)]
    pub effects: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum MissingCommand {
    /// MCAR / MAR / MNAR from the m-graph.
    Classify {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Sample indicators and blank the masked cells.
    Mask {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// JSON map from indicator name to its table.
        #[arg(long)]
        cpts: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Recover P(X, Y) from masked data.
    Recover {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// The two variables, as X,Y.
        #[arg(long)]
        vars: String,
    },
    /// Check whether X ⫫ Y | Z is directly testable.
    Testable {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long, default_value = "")]
        given: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum BanditCommand {
    /// Simulate a policy; several runs are swept in parallel.
    Sim {
        #[arg(long)]
        env: PathBuf,
        /// oracle, uniform, greedy, epsilon, thompson or causal-thompson.
        #[arg(long)]
        policy: String,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Number of runs, seeded seed..seed+runs.
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long, default_value_t = 1.0)]
        prior_alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        prior_beta: f64,
        /// Pulls credited before the first round, as ARM:REWARD,...
        #[arg(long, default_value = "")]
        warm_start: String,
        /// Measure regret against the marginal best arm.
        #[arg(long)]
        marginal_regret: bool,
        /// Write the per-round trace of the first run as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DiscoverCommand {
    /// PC search with chi-square independence tests.
    Pc {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = discovery::DEFAULT_MAX_COND_SIZE)]
        max_cond: usize,
        /// Emit DOT instead of the text summary.
        #[arg(long)]
        dot: bool,
    },
    /// Greedy BIC hill climbing.
    Ges {
        #[arg(long)]
        data: PathBuf,
    },
}

enum CliError {
    Usage(String),
    Domain(String),
}

type CliResult<T> = Result<T, CliError>;

fn domain<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Domain(e.to_string())
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

struct Output {
    text: String,
    json: Value,
}

fn p3(p: f64) -> String {
    format!("{p:.3}")
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(str::to_string).collect()
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_data(path: &Path, delimiter: char) -> CliResult<DiscreteDataset> {
    let d = u8::try_from(delimiter).map_err(|_| CliError::Usage("delimiter must be a single byte".into()))?;
    DiscreteDataset::read_csv_path(path, d).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// `VAR=STATE` with exactly one pair.
fn single(s: &str) -> CliResult<(String, String)> {
    let a: Assignment = s.parse().map_err(usage)?;
    if a.len() != 1 {
        return Err(CliError::Usage(format!("expected one VAR=STATE, got {s:?}")));
    }
    let (k, v) = a.iter().next().unwrap();
    Ok((k.to_string(), v.to_string()))
}

fn assignment(s: &str) -> CliResult<Assignment> {
    s.parse().map_err(usage)
}

fn require_seed(seed: Option<u64>) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::Usage("this subcommand is randomized; pass --seed".into()))
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable output")
}

fn write_or_print(path: &Option<PathBuf>, body: &[u8], what: &str) -> CliResult<String> {
    match path {
        Some(p) => {
            std::fs::write(p, body).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display())))?;
            Ok(format!("wrote {what} to {}", p.display()))
        }
        None => Ok(String::from_utf8_lossy(body).trim_end().to_string()),
    }
}

fn execute(cli: &Cli) -> CliResult<Output> {
    match &cli.command {
        Command::Dsep(a) => {
            let g: CausalGraph = read_json(&a.graph)?;
            let (x, y, z) = (list(&a.x), list(&a.y), list(&a.given));
            let sep = g.is_d_separated(&refs(&x), &refs(&y), &refs(&z)).map_err(domain)?;
            Ok(Output {
                text: format!("d-separated: {sep}"),
                json: json!({"x": x, "y": y, "given": z, "d_separated": sep}),
            })
        }
        Command::Paths(a) => {
            let g: CausalGraph = read_json(&a.graph)?;
            let paths: Vec<String> = g.undirected_paths(&a.x, &a.y).map_err(domain)?.iter().map(|p| p.to_string()).collect();
            Ok(Output { text: paths.join("\n"), json: json!({"x": a.x, "y": a.y, "paths": paths}) })
        }
        Command::Mutilate(a) => {
            let g: CausalGraph = read_json(&a.graph)?;
            let m = g.mutilate(&refs(&list(&a.do_))).map_err(domain)?;
            let edges: Vec<String> = m.edges().map(|(a, b)| format!("{a}->{b}")).collect();
            Ok(Output { text: format!("edges: {}", edges.join(" ")), json: to_json(&m) })
        }
        Command::BackdoorCheck(a) => {
            let g: CausalGraph = read_json(&a.graph)?;
            let z = list(&a.adjust);
            let ok = g.satisfies_backdoor_criterion(&a.x, &a.y, &refs(&z)).map_err(domain)?;
            let paths = g.backdoor_paths(&a.x, &a.y).map_err(domain)?;
            let mut shown = Vec::new();
            for p in &paths {
                shown.push(json!({"path": p.to_string(), "blocked": g.is_path_blocked(p, &refs(&z)).map_err(domain)?}));
            }
            let mut text = format!("backdoor criterion: {ok}");
            for s in &shown {
                let _ = write!(text, "\n  {} blocked={}", s["path"].as_str().unwrap(), s["blocked"]);
            }
            Ok(Output { text, json: json!({"x": a.x, "y": a.y, "adjust": z, "satisfied": ok, "backdoor_paths": shown}) })
        }
        Command::Identify(a) => {
            let g: CausalGraph = read_json(&a.graph)?;
            let adj = a.adjust.as_deref().map(list);
            let r = g.identify(&a.x, &a.y, adj.as_deref().map(refs).as_deref()).map_err(domain)?;
            let mut text = format!("rule 3 (no causal path {} -> {}): {}", a.x, a.y, r.rule3_no_causal_path);
            if let Some((z, ok)) = &r.given_adjustment {
                let _ = write!(text, "\ngiven adjustment {{{}}}: {}", z.join(","), ok);
            }
            if let Some(z) = &r.parent_adjustment {
                let _ = write!(text, "\nparent adjustment: {{{}}}", z.join(","));
            }
            if let Some(z) = &r.minimal_adjustment {
                let _ = write!(text, "\nminimal adjustment: {{{}}}", z.join(","));
            }
            let _ = write!(text, "\nestimand: {}", r.estimand);
            Ok(Output { text, json: to_json(&r) })
        }
        Command::Scm(ScmCommand::Sample { model, n, include_latent, output }) => {
            let seed = require_seed(cli.seed)?;
            let m: DiscreteScm = read_json(model)?;
            let ds = m.sample(*n, seed, *include_latent).map_err(domain)?;
            let mut buf = Vec::new();
            ds.write_csv(&mut buf, cli.delimiter as u8).map_err(domain)?;
            let text = write_or_print(output, &buf, "samples")?;
            Ok(Output {
                json: json!({"rows": ds.len(), "columns": ds.column_names().collect::<Vec<_>>(), "seed": seed,
                             "output": output.as_ref().map(|p| p.display().to_string())}),
                text,
            })
        }
        Command::Scm(ScmCommand::Query { model, target, given, do_ }) => {
            let m: DiscreteScm = read_json(model)?;
            let (t, e, d) = (assignment(target)?, assignment(given)?, assignment(do_)?);
            let p = if d.is_empty() { m.query_conditional(&t, &e) } else { m.interventional(&t, &d, &e) }.map_err(domain)?;
            let mut label = format!("P({t}");
            if !d.is_empty() || !e.is_empty() {
                label.push_str(" | ");
                let mut parts = Vec::new();
                if !d.is_empty() {
                    parts.push(format!("do({d})"));
                }
                if !e.is_empty() {
                    parts.push(e.to_string());
                }
                label.push_str(&parts.join(", "));
            }
            label.push(')');
            Ok(Output { text: format!("{label} = {}", p3(p)), json: json!({"target": t, "given": e, "do": d, "probability": p}) })
        }
        Command::Estimate(EstimateCommand::Prob { data, target, given }) => {
            let ds = read_data(data, cli.delimiter)?;
            let ((tv, ts), e) = (single(target)?, assignment(given)?);
            let dist = estimation::empirical_conditional(&ds, &tv, &e).map_err(domain)?;
            let p = dist[ds.state_of(&tv, &ts).map_err(domain)?.1 as usize];
            let label = if e.is_empty() { format!("P({tv}={ts})") } else { format!("P({tv}={ts} | {e})") };
            Ok(Output { text: format!("{label} = {}", p3(p)), json: json!({"target": tv, "state": ts, "given": e, "probability": p}) })
        }
        Command::Estimate(EstimateCommand::Do { data, x, y, adjust, ratio, laplace }) => {
            let ds = read_data(data, cli.delimiter)?;
            let ((xv, xs), (yv, ys), z) = (single(x)?, single(y)?, list(adjust));
            if *ratio && *laplace {
                return Err(CliError::Usage("--ratio and --laplace cannot be combined".into()));
            }
            let p = if *ratio {
                estimation::backdoor_adjust_ratio(&ds, &xv, &xs, &yv, &ys, &refs(&z))
            } else {
                let s = if *laplace { Smoothing::Laplace } else { Smoothing::None };
                estimation::backdoor_adjust_with(&ds, &xv, &xs, &yv, &ys, &refs(&z), s)
            }
            .map_err(domain)?;
            Ok(Output {
                text: format!("P({yv}={ys} | do({xv}={xs})) = {}", p3(p)),
                json: json!({"x": xv, "x_val": xs, "y": yv, "y_val": ys, "adjust": z, "probability": p}),
            })
        }
        Command::Estimate(EstimateCommand::Ace { data, x, treat, control, y, adjust }) => {
            let ds = read_data(data, cli.delimiter)?;
            let ((yv, ys), z) = (single(y)?, list(adjust));
            let ace = estimation::compute_ace(&ds, x, treat, control, &yv, &ys, &refs(&z)).map_err(domain)?;
            Ok(Output {
                text: format!("ACE({x}={treat} vs {x}={control}) on {yv}={ys} = {}", p3(ace)),
                json: json!({"x": x, "treat": treat, "control": control, "y": yv, "y_val": ys, "adjust": z, "ace": ace}),
            })
        }
        Command::Estimate(EstimateCommand::Simpson { data, x, y, by }) => {
            let ds = read_data(data, cli.delimiter)?;
            let ((yv, ys), z) = (single(y)?, list(by));
            let r = estimation::detect_simpson_reversal(&ds, x, &yv, &ys, &refs(&z)).map_err(domain)?;
            let [a, b] = &r.x_states;
            let mut text = format!(
                "aggregate: {x}={a} {} vs {x}={b} {}",
                p3(r.aggregate.rates[0]),
                p3(r.aggregate.rates[1])
            );
            for (s, c) in &r.strata {
                let _ = write!(text, "\n{s}: {x}={a} {} vs {x}={b} {}", p3(c.rates[0]), p3(c.rates[1]));
            }
            let _ = write!(text, "\nreversal: {}", r.reversal);
            if r.verdict == estimation::SimpsonVerdict::Mixed {
                text.push_str(" (mixed)");
            }
            Ok(Output { text, json: to_json(&r) })
        }
        Command::SelectionCheck(a) => {
            let g: CausalGraph = read_json(&a.graph)?;
            let r = transport::detect_selection_bias(&g, &a.x, &a.y).map_err(domain)?;
            let mut text = format!("selection bias: {}", r.biased);
            for p in &r.paths {
                let _ = write!(
                    text,
                    "\n  {}: blocked without selection={}, given selection={}",
                    p.path, p.blocked_without_selection, p.blocked_given_selection
                );
            }
            Ok(Output { text, json: to_json(&r) })
        }
        Command::Debias(a) => {
            let ds = read_data(&a.data, cli.delimiter)?;
            let ((xv, xs), (yv, ys), s) = (single(&a.x)?, single(&a.y)?, list(&a.strata));
            let p = transport::stratified_debias(&ds, &xv, &xs, &yv, &ys, &refs(&s)).map_err(domain)?;
            Ok(Output {
                text: format!("P({yv}={ys} | {xv}={xs}) stratified on {{{}}} = {}", s.join(","), p3(p)),
                json: json!({"x": xv, "x_val": xs, "y": yv, "y_val": ys, "strata": s, "probability": p}),
            })
        }
        Command::Transport(a) => {
            let se: StratumEffects = read_json(&a.effects)?;
            let p = transport::transport_estimate(&se).map_err(domain)?;
            Ok(Output { text: format!("transported effect = {}", p3(p)), json: json!({"stratum": se.stratum, "estimate": p}) })
        }
        Command::Missing(MissingCommand::Classify { graph }) => {
            let mg: MGraph = read_json(graph)?;
            let m = missing::classify_mechanism(&mg);
            Ok(Output { text: format!("mechanism: {m}"), json: json!({"mechanism": m}) })
        }
        Command::Missing(MissingCommand::Mask { graph, data, cpts, output }) => {
            let seed = require_seed(cli.seed)?;
            let mg: MGraph = read_json(graph)?;
            let ds = read_data(data, cli.delimiter)?;
            let tables: BTreeMap<String, CptDoc> = read_json(cpts)?;
            let masked = missing::apply_missingness(&ds, &mg, &tables, seed).map_err(domain)?;
            let mut buf = Vec::new();
            masked.write_csv(&mut buf, cli.delimiter as u8).map_err(domain)?;
            let counts: BTreeMap<String, usize> = mg
                .partial()
                .iter()
                .map(|p| (p.var.clone(), masked.index_of(&p.var).map(|c| masked.missing_count(c)).unwrap_or(0)))
                .collect();
            let text = write_or_print(output, &buf, "masked data")?;
            Ok(Output { text, json: json!({"rows": masked.len(), "missing": counts, "seed": seed}) })
        }
        Command::Missing(MissingCommand::Recover { graph, data, vars }) => {
            let mg: MGraph = read_json(graph)?;
            let ds = read_data(data, cli.delimiter)?;
            let v = list(vars);
            let [a, b] = v.as_slice() else {
                return Err(CliError::Usage("--vars takes exactly two names".into()));
            };
            let r = missing::recover_joint(&mg, &ds, [a, b]).map_err(domain)?;
            let text = match &r {
                Recovery::Recovered { family, estimand, table } => {
                    let mut t = format!("recovered ({family:?}) via {estimand}");
                    for (k, p) in table.entries() {
                        let _ = write!(t, "\n  P({a}={},{b}={}) = {}", k[0], k[1], p3(*p));
                    }
                    t
                }
                Recovery::NotRecoverable { family, reason } => format!("not recoverable ({family:?}): {reason}"),
            };
            Ok(Output { text, json: to_json(&r) })
        }
        Command::Missing(MissingCommand::Testable { graph, x, y, given }) => {
            let mg: MGraph = read_json(graph)?;
            let (x, y, z) = (list(x), list(y), list(given));
            let t = missing::is_ci_testable(&mg, &refs(&x), &refs(&y), &refs(&z)).map_err(domain)?;
            Ok(Output {
                text: format!(
                    "testable: {} (condition 1: {}, condition 2: {}, condition 3: {})",
                    t.testable, t.condition1, t.condition2, t.condition3
                ),
                json: to_json(&t),
            })
        }
        Command::Bandit(BanditCommand::Sim {
            env,
            policy,
            horizon,
            epsilon,
            runs,
            prior_alpha,
            prior_beta,
            warm_start,
            marginal_regret,
            csv,
        }) => {
            let seed = require_seed(cli.seed)?;
            let env: BanditEnv = read_json(env)?;
            let policy = Policy::parse(policy, *epsilon).map_err(usage)?;
            let mut cfg = SimConfig::new(policy, *horizon);
            cfg.prior = BetaPosterior::new(*prior_alpha, *prior_beta).map_err(usage)?;
            cfg.regret = if *marginal_regret { RegretMode::Marginal } else { RegretMode::Conditional };
            for part in list(warm_start) {
                let (a, r) = part.split_once(':').ok_or_else(|| CliError::Usage(format!("warm start {part:?} is not ARM:REWARD")))?;
                cfg.warm_start.push((a.trim().parse().map_err(usage)?, r.trim().parse().map_err(usage)?));
            }
            if *runs == 0 {
                return Err(CliError::Usage("--runs must be at least 1".into()));
            }
            let results = bandits::sweep(&env, &cfg, seed..seed + runs).map_err(domain)?;
            let summary = bandits::summarize(&results);
            let mut text = format!(
                "policy {}: {} run(s), horizon {}, mean cumulative regret {}, optimal-arm frequency (last 10%) {}, mean reward {}",
                policy.name(),
                summary.runs,
                horizon,
                p3(summary.mean_cumulative_regret),
                p3(summary.mean_optimal_frequency_last_10pct),
                p3(summary.mean_reward)
            );
            if let Some(path) = csv {
                let mut buf = Vec::new();
                results[0].write_csv(&mut buf).map_err(domain)?;
                let _ = write!(text, "\n{}", write_or_print(&Some(path.clone()), &buf, "trace")?);
            }
            Ok(Output { text, json: json!({"policy": policy.name(), "horizon": horizon, "seed": seed, "summary": summary}) })
        }
        Command::Discover(DiscoverCommand::Pc { data, max_cond, dot }) => {
            let ds = read_data(data, cli.delimiter)?;
            let oracle = ChiSquareOracle { data: &ds, alpha: cli.alpha };
            let (skel, pattern) = discovery::pc(&oracle, *max_cond).map_err(domain)?;
            let text = if *dot {
                pattern.to_dot().trim_end().to_string()
            } else {
                let mut t = String::new();
                let arrows: Vec<String> = pattern.directed.iter().map(|(a, b)| format!("{a}->{b}")).collect();
                let lines: Vec<String> = pattern.undirected.iter().map(|(a, b)| format!("{a}-{b}")).collect();
                let _ = write!(t, "directed: {}\nundirected: {}", arrows.join(" "), lines.join(" "));
                for (k, s) in &skel.sepsets {
                    let _ = write!(t, "\nsepset({}) = {{{}}}", k.replace('|', ","), s.join(","));
                }
                for (a, b) in &pattern.conflicts {
                    let _ = write!(t, "\nConflictingOrientation: {a}-{b} left undirected");
                }
                t
            };
            Ok(Output { text, json: json!({"pattern": pattern, "sepsets": skel.sepsets}) })
        }
        Command::Discover(DiscoverCommand::Ges { data }) => {
            let ds = read_data(data, cli.delimiter)?;
            let r = discovery::greedy_score_search(&ds).map_err(domain)?;
            let edges: Vec<String> = r.graph.edges().map(|(a, b)| format!("{a}->{b}")).collect();
            Ok(Output {
                text: format!("edges: {}\nBIC: {:.3}", edges.join(" "), r.score),
                json: json!({"graph": r.graph, "score": r.score, "trace": r.trace}),
            })
        }
    }
}

/// Runs one invocation. `argv[0]` is the program name.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(out, "{}", e.render());
                    return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 };
                }
                _ => 2,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match execute(&cli) {
        Ok(o) => {
            let _ = match cli.out {
                Format::Text => writeln!(out, "{}", o.text),
                Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&o.json).expect("json value")),
            };
            0
        }
        Err(CliError::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
        Err(CliError::Domain(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut argv = vec!["causalkit"];
        argv.extend(args);
        let code = run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(call(&["discover", "pc", "--data", "/nonexistent.csv"]).0, 2);
        assert_eq!(call(&["no-such-command"]).0, 2);
        assert_eq!(call(&["--help"]).0, 0);
    }

    #[test]
    fn randomized_commands_need_seed() {
        let dir = tempfile::tempdir().unwrap();
        let env = dir.path().join("env.json");
        std::fs::write(&env, r#"{"arms":2,"payout":[0.7,0.3]}"#).unwrap();
        let e = env.to_str().unwrap();
        let (code, _, err) = call(&["bandit", "sim", "--env", e, "--policy", "thompson", "--horizon", "10"]);
        assert_eq!(code, 2);
        assert!(err.contains("--seed"));
        let (code, out, _) = call(&["bandit", "sim", "--env", e, "--policy", "oracle", "--horizon", "10", "--seed", "1"]);
        assert_eq!(code, 0);
        assert!(out.contains("mean cumulative regret 0.000"));
    }

    #[test]
    fn domain_errors_exit_1_with_name() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.csv");
        std::fs::write(&data, "Z,X,Y\n0,0,1\n0,1,0\n1,0,1\n").unwrap();
        let (code, _, err) = call(&["estimate", "do", "--data", data.to_str().unwrap(), "--x", "X=1", "--y", "Y=1", "--adjust", "Z"]);
        assert_eq!(code, 1);
        assert!(err.contains("PositivityViolation"));
    }
}
