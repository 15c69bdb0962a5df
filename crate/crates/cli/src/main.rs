//! `fairpart`: generate instances, run the sequential allocators, check
//! their guarantees and brute-force the lower-bound instance.
//!
//! Exit status: 0 when every requested check passes, 2 when a guarantee
//! check fails, 1 on usage or input errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use fairpart::arrival::{
    check_transcript, run_static, specs_for_transcript, verify_transcript, TiePolicy, Transcript, VerifyReport,
};
use fairpart::dynamic::{all_pos_val, bounded_prop, fair_arrival_order, run_fair_order, RrVariant};
use fairpart::gen::{generate, Family, GenSpec, SwapKind};
use fairpart::lowerbound::{build_lowerbound_instance, witness_check, WitnessMode};
use fairpart::masterlist::{
    adjacent_swap_distance, bubble_decomposition, is_linearly_separable, laminar_depth, lipschitz_delta,
    masterlist_partition, min_linsep_layers, sigma_of, transposition_distance, verify_masterlist_guarantees,
    AgentClass, MasterlistReport, Swap,
};
use fairpart::model::{
    format_rational, instance_from_json, instance_from_str, instance_to_string, parse_rational, rescale_to_unit, Instance,
    Rational,
};
use fairpart::roundrobin::{round_robin, rows_of};
use fairpart::structured::{bounded_indifference, bounded_influence, influence_specs, sorted_prop_order};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "fairpart", version, about = "Dynamic partitioning for sequential fair division")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
enum Command {
    /// Write a seeded random instance.
    Gen(GenArgs),
    /// Run an allocator on an instance and check its guarantee.
    Run(RunArgs),
    /// Check a saved transcript against a theorem bound.
    Verify(VerifyArgs),
    /// Search the Hadamard instance for partitions without a deficit witness.
    Bruteforce(BruteArgs),
    /// Print a saved run or verify report as a table.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FamilyArg {
    Uniform,
    Positive,
    BoundedProp,
    Hypergraph,
    Masterlist,
    Lipschitz,
    Fixture,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SwapArg {
    Ordered,
    Adjacent,
    Arbitrary,
    Linsep,
    LinsepT,
    Laminar,
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long)]
    n: usize,
    /// Item count (ignored by the fixture family).
    #[arg(long, default_value_t = 0)]
    m: usize,
    #[arg(long, env = "FAIRPART_SEED", default_value_t = 0)]
    seed: u64,
    /// Largest group of equal values per agent (uniform family).
    #[arg(long)]
    max_tie: Option<usize>,
    /// Smallest value (positive family), as `p/q` or a decimal.
    #[arg(long, default_value = "1/100")]
    floor: String,
    /// Percentage of zero entries (bounded-prop family).
    #[arg(long, default_value_t = 0)]
    zero_percent: u32,
    /// Block size of the influence sets (hypergraph family).
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Redraw until every agent meets the bounded-influence share condition.
    #[arg(long)]
    require_precondition: bool,
    #[arg(long, value_enum, default_value_t = SwapArg::Ordered)]
    swaps: SwapArg,
    /// Swap count per agent (master-list and Lipschitz families).
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Layer count for `--swaps linsep-t`.
    #[arg(long, default_value_t = 2)]
    t: usize,
    /// Nesting depth for `--swaps laminar`.
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Lipschitz constant, as `p/q` or a decimal.
    #[arg(long, default_value = "1/10")]
    delta: String,
    /// Proportional share of the fixture.
    #[arg(long, default_value_t = 1)]
    prop: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Alg {
    Roundrobin,
    Allpos,
    Boundedprop,
    BoundedpropG,
    BoundedpropModified,
    FairOrder,
    Influence,
    Indiff,
    Masterlist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum OrderArg {
    Identity,
    /// The `arrival` field of the instance.
    Given,
    Fair,
    SortedProp,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum TieArg {
    Lowest,
    Highest,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ClassArg {
    /// Ordered when the agent follows the list, else whichever measured class gives the best bound.
    Auto,
    Ordered,
    Adjacent,
    Arbitrary,
    Linsep,
    Laminar,
    Lipschitz,
}

#[derive(Args, Debug, Serialize)]
struct RunArgs {
    #[arg(long)]
    inst: PathBuf,
    #[arg(long, value_enum)]
    alg: Alg,
    #[arg(long, value_enum, default_value_t = OrderArg::Identity)]
    order: OrderArg,
    /// Tie policy between equally valued parts; `highest` is the adversarial one.
    #[arg(long, value_enum, default_value_t = TieArg::Highest)]
    tie: TieArg,
    /// Seed for `--tie random`.
    #[arg(long, env = "FAIRPART_SEED", default_value_t = 0)]
    seed: u64,
    /// Master list as a JSON array of 1-based item ids (masterlist only).
    #[arg(long)]
    pi: Option<PathBuf>,
    /// How agent classes are measured (masterlist only).
    #[arg(long, value_enum, default_value_t = ClassArg::Auto)]
    class: ClassArg,
    /// Transcript output.
    #[arg(short, long)]
    output: PathBuf,
    /// JSON report output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-agent verdicts as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Skip the guarantee check.
    #[arg(long)]
    no_check: bool,
    /// Accept values above 1 by dividing every entry by the largest one.
    /// Bounds are checked on the rescaled instance; the report also gives
    /// values and shares in the original scale.
    #[arg(long)]
    rescale: bool,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    transcript: PathBuf,
    /// Theorem id, or `bounded_influence` for the early/late pair.
    #[arg(long)]
    theorem: String,
    /// Instance to check the transcript against.
    #[arg(long)]
    inst: Option<PathBuf>,
    /// Extra bound parameter, `name=value`.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, String)>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Exhaustive,
    Sampled,
}

#[derive(Args, Debug, Serialize)]
struct BruteArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Exhaustive)]
    mode: ModeArg,
    #[arg(long, default_value_t = 100_000)]
    count: u64,
    #[arg(long, env = "FAIRPART_SEED", default_value_t = 0)]
    seed: u64,
    /// JSON summary output.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Worst deficit of every checked partition.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ReportArgs {
    /// A report written by `run` or `verify`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_param(raw: &str) -> std::result::Result<(String, String), String> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected name=value, got `{raw}`"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Runs one subcommand; `Ok(false)` means a guarantee check failed.
fn dispatch(cmd: &Command) -> Result<bool> {
    match cmd {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a, cmd),
        Command::Verify(a) => verify(a, cmd),
        Command::Bruteforce(a) => bruteforce(a, cmd),
        Command::Report(a) => report(a),
    }
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot write to {}", dir.display()))?;
    tmp.write_all(text.as_bytes())?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_instance(path: &Path) -> Result<(Instance, Option<Value>)> {
    instance_from_str(&read(path)?).with_context(|| format!("in {}", path.display()))
}

/// Loads an instance whose values may exceed 1, dividing by the largest entry.
fn load_rescaled(path: &Path) -> Result<(Instance, Option<Value>, Rational)> {
    let mut raw: Value = serde_json::from_str(&read(path)?).with_context(|| format!("{} is not JSON", path.display()))?;
    let rows = raw["values"].as_array().ok_or_else(|| anyhow!("{}: `values` must be an array of rows", path.display()))?;
    let values = rows
        .iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(|| anyhow!("each row of `values` must be an array"))?
                .iter()
                .map(|v| match v {
                    Value::String(t) => Ok(parse_rational(t)?),
                    Value::Number(x) => Ok(parse_rational(&x.to_string())?),
                    other => bail!("value {other} is neither a string nor a number"),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let (scaled, divisor) = rescale_to_unit(&values)?;
    raw["values"] = json!(scaled.iter().map(|r| r.iter().map(format_rational).collect::<Vec<_>>()).collect::<Vec<_>>());
    let (inst, meta) = instance_from_json(&raw).with_context(|| format!("in {}", path.display()))?;
    Ok((inst, meta, divisor))
}

fn rational(raw: &str, what: &str) -> Result<Rational> {
    parse_rational(raw).with_context(|| format!("--{what}"))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value prints");
    s.push('\n');
    s
}

fn gen(a: &GenArgs) -> Result<bool> {
    let swap_kind = || match a.swaps {
        SwapArg::Ordered => SwapKind::Ordered,
        SwapArg::Adjacent => SwapKind::Adjacent { k: a.k },
        SwapArg::Arbitrary => SwapKind::Arbitrary { k: a.k },
        SwapArg::Linsep => SwapKind::Linsep { k: a.k },
        SwapArg::LinsepT => SwapKind::LinsepT { t: a.t, k: a.k },
        SwapArg::Laminar => SwapKind::Laminar { depth: a.depth, k: a.k },
    };
    let family = match a.family {
        FamilyArg::Uniform => Family::Uniform { max_tie: a.max_tie },
        FamilyArg::Positive => Family::StrictlyPositive { floor: rational(&a.floor, "floor")? },
        FamilyArg::BoundedProp => Family::BoundedProp { zero_percent: a.zero_percent },
        FamilyArg::Hypergraph => Family::Hypergraph { d: a.d, require_precondition: a.require_precondition },
        FamilyArg::Masterlist => Family::MasterlistSwaps { swaps: swap_kind() },
        FamilyArg::Lipschitz => Family::Lipschitz { delta: rational(&a.delta, "delta")?, k: a.k },
        FamilyArg::Fixture => Family::RebundlingFixture { prop: a.prop },
    };
    let g = generate(&GenSpec { n: a.n, m: a.m, seed: a.seed, family })?;
    let mut meta = g.meta.clone();
    if let Some(p) = &g.partition {
        meta["partition"] = json!(p.parts.iter().map(|part| part.iter().map(|x| x + 1).collect::<Vec<_>>()).collect::<Vec<_>>());
    }
    let mut text = instance_to_string(&g.instance, Some(meta));
    text.push('\n');
    write_atomic(&a.output, &text)?;
    println!("wrote {} ({} agents, {} items)", a.output.display(), g.instance.n(), g.instance.m());
    Ok(true)
}

fn tie_policy(tie: TieArg, seed: u64) -> TiePolicy {
    match tie {
        TieArg::Lowest => TiePolicy::LowestPartIndex,
        TieArg::Highest => TiePolicy::HighestPartIndex,
        TieArg::Random => TiePolicy::SeededRandom { seed },
    }
}

fn arrival_order(inst: &Instance, order: OrderArg) -> Result<Vec<usize>> {
    Ok(match order {
        OrderArg::Identity => (0..inst.n()).collect(),
        OrderArg::Given => inst
            .arrival()
            .map(<[usize]>::to_vec)
            .ok_or_else(|| anyhow!("--order given needs an `arrival` field in the instance"))?,
        OrderArg::Fair => fair_arrival_order(inst).order,
        OrderArg::SortedProp => sorted_prop_order(inst),
    })
}

/// What a run checked, ready to serialize.
enum Checked {
    Arrivals(VerifyReport),
    Masterlist(MasterlistReport),
    Skipped,
}

impl Checked {
    fn pass(&self) -> bool {
        match self {
            Checked::Arrivals(r) => r.pass,
            Checked::Masterlist(r) => r.pass,
            Checked::Skipped => true,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Checked::Arrivals(r) => serde_json::to_value(r).expect("report serializes"),
            Checked::Masterlist(r) => serde_json::to_value(r).expect("report serializes"),
            Checked::Skipped => Value::Null,
        }
    }
}

fn check(theorem: &str, t: &Transcript, skip: bool) -> Result<Checked> {
    if skip {
        return Ok(Checked::Skipped);
    }
    let specs = specs_for_transcript(theorem, t, &BTreeMap::new())?;
    Ok(Checked::Arrivals(verify_transcript(t, &specs)?))
}

fn run(a: &RunArgs, cmd: &Command) -> Result<bool> {
    let (inst, meta, divisor) = if a.rescale {
        load_rescaled(&a.inst)?
    } else {
        let (inst, meta) = load_instance(&a.inst)?;
        (inst, meta, Rational::from_integer(1.into()))
    };
    let policy = tie_policy(a.tie, a.seed);
    if a.alg == Alg::FairOrder && a.order != OrderArg::Identity {
        bail!("--alg fair-order computes its own arrival order; drop --order");
    }
    if a.alg != Alg::Masterlist && (a.pi.is_some() || a.class != ClassArg::Auto) {
        bail!("--pi and --class only apply to --alg masterlist");
    }
    let order = arrival_order(&inst, a.order)?;
    let skip = a.no_check;
    let mut extra = json!({});
    let (transcript, theorem, checked) = match a.alg {
        Alg::Roundrobin => {
            let (partition, _) = round_robin(&inst.items(), &rows_of(&inst, &order));
            let mut t = run_static(&inst, &partition, &order, policy)?;
            t.algorithm = "roundrobin".into();
            let c = check("round_robin", &t, skip)?;
            (t, "round_robin", c)
        }
        Alg::Allpos => {
            let t = all_pos_val(&inst, &order, policy)?.transcript;
            let c = check("all_pos", &t, skip)?;
            (t, "all_pos", c)
        }
        Alg::Boundedprop | Alg::BoundedpropG | Alg::BoundedpropModified => {
            let variant = if a.alg == Alg::BoundedpropModified { RrVariant::Modified } else { RrVariant::Plain };
            let theorem = if a.alg == Alg::BoundedpropG { "bounded_prop_g" } else { "bounded_prop" };
            let t = bounded_prop(&inst, &order, policy, variant)?.transcript;
            let c = check(theorem, &t, skip)?;
            (t, theorem, c)
        }
        Alg::FairOrder => {
            let (fair, run) = run_fair_order(&inst, policy)?;
            extra["fair_order"] = json!({
                "order": fair.order.iter().map(|x| x + 1).collect::<Vec<_>>(),
                "prefix_length": fair.split,
            });
            let c = check("fair_order", &run.transcript, skip)?;
            (run.transcript, "fair_order", c)
        }
        Alg::Influence => {
            let run = bounded_influence(&inst, &order, policy)?;
            extra["influence"] = json!({ "d": run.d, "late_from": run.late_from + 1 });
            let c = if skip { Checked::Skipped } else { Checked::Arrivals(verify_transcript(&run.transcript, &influence_specs(&run))?) };
            (run.transcript, "bounded_influence", c)
        }
        Alg::Indiff => {
            let run = bounded_indifference(&inst, &order, policy)?;
            extra["indifference"] = json!({ "t": run.ties.t, "core_size": run.k, "share_gate": run.share_gate });
            let c = check("bounded_indiff", &run.transcript, skip)?;
            (run.transcript, "bounded_indiff", c)
        }
        Alg::Masterlist => {
            let pi = master_list(&inst, a.pi.as_deref())?;
            let partition = masterlist_partition(&inst, &pi)?;
            let mut t = run_static(&inst, &partition, &order, policy)?;
            t.algorithm = "masterlist".into();
            let c = if skip {
                Checked::Skipped
            } else {
                let classes = measure_classes(&inst, &pi, a.class, meta.as_ref())?;
                Checked::Masterlist(verify_masterlist_guarantees(&inst, &pi, &classes)?)
            };
            extra["master_list"] = json!(pi.iter().map(|x| x + 1).collect::<Vec<_>>());
            (t, "masterlist", c)
        }
    };
    if a.rescale {
        extra["rescale"] = json!({
            "divisor": format_rational(&divisor),
            "original_scale": transcript
                .records
                .iter()
                .map(|r| json!({
                    "position": r.position + 1,
                    "agent": r.agent + 1,
                    "value": format_rational(&(&r.value * &divisor)),
                    "prop": format_rational(&(&r.prop * &divisor)),
                }))
                .collect::<Vec<_>>(),
        });
    }
    let issues = check_transcript(&inst, &transcript);
    write_atomic(&a.output, &pretty(&transcript.to_json()))?;
    let pass = checked.pass() && issues.is_empty();
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "config": cmd,
        "algorithm": transcript.algorithm,
        "theorem": if skip { Value::Null } else { json!(theorem) },
        "pass": pass,
        "consistency_issues": issues,
        "notes": transcript.notes,
        "details": extra,
        "verdicts": checked.to_json(),
    });
    if let Some(path) = &a.report {
        write_atomic(path, &pretty(&doc))?;
    }
    if let Some(path) = &a.csv {
        write_atomic(path, &verdict_csv(&doc["verdicts"]))?;
    }
    for issue in doc["consistency_issues"].as_array().into_iter().flatten() {
        eprintln!("inconsistent transcript: {}", issue.as_str().unwrap_or_default());
    }
    println!("{}", summary_line(&doc));
    Ok(pass)
}

fn master_list(inst: &Instance, path: Option<&Path>) -> Result<Vec<usize>> {
    let Some(path) = path else {
        return Ok(inst.master_list().map_or_else(|| inst.items(), <[usize]>::to_vec));
    };
    let ids: Vec<usize> = serde_json::from_str(&read(path)?).with_context(|| format!("{} must hold a JSON array of item ids", path.display()))?;
    let pi = ids
        .iter()
        .map(|&x| x.checked_sub(1).ok_or_else(|| anyhow!("item ids in {} are 1-based", path.display())))
        .collect::<Result<Vec<_>>>()?;
    fairpart::model::check_permutation(&pi, inst.m())?;
    Ok(pi)
}

/// Swap sets recorded by `gen`, as 0-based pairs.
fn recorded_swaps(meta: Option<&Value>, n: usize) -> Result<Vec<Vec<Swap>>> {
    let raw = meta
        .and_then(|m| m.get("swaps"))
        .ok_or_else(|| anyhow!("this class needs the swap sets that `gen` records in the instance meta"))?;
    let pairs: Vec<Vec<[usize; 2]>> = serde_json::from_value(raw.clone()).context("meta.swaps")?;
    if pairs.len() != n {
        bail!("meta.swaps has {} entries for {n} agents", pairs.len());
    }
    pairs
        .iter()
        .map(|set| {
            set.iter()
                .map(|&[l, r]| match (l.checked_sub(1), r.checked_sub(1)) {
                    (Some(l), Some(r)) => Ok(Swap::new(l, r)?),
                    _ => bail!("swap positions are 1-based"),
                })
                .collect()
        })
        .collect()
}

fn measure_classes(inst: &Instance, pi: &[usize], class: ClassArg, meta: Option<&Value>) -> Result<Vec<AgentClass>> {
    let recorded = match class {
        ClassArg::Linsep | ClassArg::Laminar => {
            if inst.master_list().map_or_else(|| inst.items(), <[usize]>::to_vec) != pi {
                bail!("recorded swap sets are relative to the instance's own master list; drop --pi");
            }
            Some(recorded_swaps(meta, inst.n())?)
        }
        _ => None,
    };
    let delta = if class == ClassArg::Lipschitz { Some(lipschitz_delta(inst, pi)?) } else { None };
    (0..inst.n())
        .map(|a| {
            let sigma = sigma_of(inst.row(a), pi);
            let adjacent = || adjacent_swap_distance(&sigma, pi);
            Ok(match class {
                ClassArg::Ordered => AgentClass::Ordered,
                ClassArg::Adjacent => AgentClass::Adjacent { k: adjacent()? },
                ClassArg::Arbitrary => AgentClass::Arbitrary { k: transposition_distance(&sigma, pi)? as u64 },
                ClassArg::Lipschitz => AgentClass::Lipschitz { delta: delta.clone().expect("measured above"), k: adjacent()? },
                ClassArg::Linsep => {
                    let set = &recorded.as_ref().expect("loaded above")[a];
                    if is_linearly_separable(set) {
                        AgentClass::Linsep
                    } else {
                        AgentClass::LinsepT { t: min_linsep_layers(set).len() as u64 }
                    }
                }
                ClassArg::Laminar => {
                    AgentClass::Laminar { depth: laminar_depth(&recorded.as_ref().expect("loaded above")[a])?.len() as u64 }
                }
                ClassArg::Auto => {
                    if sigma == pi {
                        AgentClass::Ordered
                    } else {
                        let k_adj = adjacent()?;
                        let k_arb = transposition_distance(&sigma, pi)? as u64;
                        let layers = bubble_decomposition(&sigma, pi)?.layers.len() as u64;
                        // Bounds below PROP - 1: k_arb, layers, sqrt(2 k_adj). Keep the smallest.
                        if k_arb * k_arb <= 2 * k_adj && k_arb <= layers {
                            AgentClass::Arbitrary { k: k_arb }
                        } else if layers * layers <= 2 * k_adj {
                            AgentClass::LinsepT { t: layers }
                        } else {
                            AgentClass::Adjacent { k: k_adj }
                        }
                    }
                }
            })
        })
        .collect()
}

fn verify(a: &VerifyArgs, cmd: &Command) -> Result<bool> {
    let text = read(&a.transcript)?;
    let raw: Value = serde_json::from_str(&text).with_context(|| format!("{} is not JSON", a.transcript.display()))?;
    let t = Transcript::from_json(&raw)?;
    let mut overrides = BTreeMap::new();
    for (k, v) in &a.params {
        overrides.insert(k.clone(), parse_rational(v).with_context(|| format!("--param {k}"))?);
    }
    let specs = if a.theorem == "bounded_influence" {
        let d = match overrides.get("d") {
            Some(d) => d.to_integer().try_into().map_err(|_| anyhow!("--param d must be a small integer"))?,
            None => t.d.ok_or_else(|| anyhow!("transcript has no measured d; pass --param d=D"))?,
        };
        let late_from = t.n.saturating_sub(2 * d.max(1) - 1);
        let early = specs_for_transcript("bounded_influence_early", &t, &overrides)?;
        let late = specs_for_transcript("bounded_influence_late", &t, &overrides)?;
        t.records
            .iter()
            .zip(early.into_iter().zip(late))
            .map(|(r, (e, l))| if r.position < late_from { e } else { l })
            .collect()
    } else {
        specs_for_transcript(&a.theorem, &t, &overrides)?
    };
    let report = verify_transcript(&t, &specs)?;
    let issues = match &a.inst {
        Some(path) => check_transcript(&load_instance(path)?.0, &t),
        None => Vec::new(),
    };
    let pass = report.pass && issues.is_empty();
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "config": cmd,
        "algorithm": t.algorithm,
        "theorem": a.theorem,
        "pass": pass,
        "consistency_issues": issues,
        "verdicts": report,
    });
    if let Some(path) = &a.output {
        write_atomic(path, &pretty(&doc))?;
    }
    if let Some(path) = &a.csv {
        write_atomic(path, &verdict_csv(&doc["verdicts"]))?;
    }
    println!("{}", summary_line(&doc));
    Ok(pass)
}

fn bruteforce(a: &BruteArgs, cmd: &Command) -> Result<bool> {
    let h = build_lowerbound_instance(a.n)?;
    let mode = match a.mode {
        ModeArg::Exhaustive => WitnessMode::Exhaustive,
        ModeArg::Sampled => WitnessMode::Sampled { count: a.count, seed: a.seed },
    };
    let r = witness_check(&h, mode)?;
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "config": cmd,
        "n": r.n,
        "items": h.instance.m(),
        "checked": r.checked,
        "with_witness": r.with_witness,
        "direct_case": r.direct_case,
        "opposite_case": r.opposite_case,
        "failed_case": r.failed_case,
        "zero_agent_never_witness": r.zero_agent_never_witness,
        "pigeonhole_ok": r.pigeonhole_ok,
        "min_worst_deficit": format_rational(&r.min_worst_deficit),
        "verdict": r.verdict,
        "pass": r.pass(),
    });
    if let Some(path) = &a.output {
        write_atomic(path, &pretty(&doc))?;
    }
    if let Some(path) = &a.csv {
        write_atomic(path, &r.to_csv())?;
    }
    println!("n={}: {} ({} of {} partitions have a witness)", r.n, r.verdict, r.with_witness, r.checked);
    Ok(r.pass())
}

fn report(a: &ReportArgs) -> Result<bool> {
    let raw: Value = serde_json::from_str(&read(&a.input)?).with_context(|| format!("{} is not JSON", a.input.display()))?;
    match raw.get("schema_version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(v) => bail!("report schema version {v} is not supported (expected {SCHEMA_VERSION})"),
        None => bail!("{} is not a run or verify report", a.input.display()),
    }
    let verdicts = &raw["verdicts"];
    let agents = verdicts["agents"].as_array().cloned().unwrap_or_default();
    let mut out = String::new();
    writeln!(out, "{}", summary_line(&raw))?;
    let masterlist = agents.first().is_some_and(|v| v.get("worst_part").is_some());
    if masterlist {
        writeln!(out, "{:>6} {:>12} {:>6} {:>12} {:>12}  result", "agent", "PROP", "part", "worst", "bound")?;
    } else {
        writeln!(out, "{:>6} {:>6} {:>12} {:>12} {:>12}  result", "pos", "agent", "value", "PROP", "bound")?;
    }
    for v in &agents {
        let num = |k: &str| v[k].as_str().and_then(|s| parse_rational(s).ok()).map_or(f64::NAN, |r| approx(&r));
        let idx = |k: &str| v[k].as_u64().map_or(0, |x| x + 1);
        let result = match (v["pass"].as_bool(), v["trivial"].as_bool()) {
            (Some(true), Some(true)) => "pass (trivial)",
            (Some(true), _) => "pass",
            _ => "FAIL",
        };
        let bound = v["bound_decimal"].as_f64().unwrap_or(f64::NAN);
        if masterlist {
            writeln!(out, "{:>6} {:>12.4} {:>6} {:>12.4} {:>12.4}  {result}", idx("agent"), num("prop"), idx("worst_part"), num("worst_value"), bound)?;
        } else {
            writeln!(out, "{:>6} {:>6} {:>12.4} {:>12.4} {:>12.4}  {result}", idx("position"), idx("agent"), num("value"), num("prop"), bound)?;
        }
    }
    print!("{out}");
    if let Some(path) = &a.csv {
        write_atomic(path, &verdict_csv(verdicts))?;
    }
    Ok(true)
}

fn approx(r: &Rational) -> f64 {
    use fairpart::model::int;
    // Enough for display; exact values stay in the JSON.
    let scaled = (r * int(1_000_000)).round().to_integer();
    scaled.to_string().parse::<f64>().unwrap_or(f64::NAN) / 1e6
}

fn summary_line(doc: &Value) -> String {
    let agents = doc["verdicts"]["agents"].as_array().map_or(0, Vec::len);
    let failed = doc["verdicts"]["agents"]
        .as_array()
        .map_or(0, |a| a.iter().filter(|v| v["pass"] == json!(false)).count());
    let status = if doc["pass"] == json!(true) { "PASS" } else { "FAIL" };
    match doc["theorem"].as_str() {
        Some(th) => format!("{status}: {} checked against {th}, {failed} of {agents} agents below their bound", doc["algorithm"].as_str().unwrap_or("?")),
        None => format!("{status}: {} ran without a guarantee check", doc["algorithm"].as_str().unwrap_or("?")),
    }
}

/// Verdict rows with 1-based indices and exact values.
fn verdict_csv(verdicts: &Value) -> String {
    let agents = verdicts["agents"].as_array().cloned().unwrap_or_default();
    let masterlist = agents.first().is_some_and(|v| v.get("worst_part").is_some());
    let mut out = String::from(if masterlist {
        "agent,prop,worst_part,worst_value,bound,bound_decimal,pass,trivial\n"
    } else {
        "position,agent,value,prop,bound,bound_decimal,pass,trivial\n"
    });
    let s = |v: &Value| match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    };
    let idx = |v: &Value| v.as_u64().map_or(String::new(), |x| (x + 1).to_string());
    for v in &agents {
        let fields = if masterlist {
            [idx(&v["agent"]), s(&v["prop"]), idx(&v["worst_part"]), s(&v["worst_value"]), s(&v["bound"]), s(&v["bound_decimal"]), s(&v["pass"]), s(&v["trivial"])]
        } else {
            [idx(&v["position"]), idx(&v["agent"]), s(&v["value"]), s(&v["prop"]), s(&v["bound"]), s(&v["bound_decimal"]), s(&v["pass"]), s(&v["trivial"])]
        };
        let quoted: Vec<String> = fields.iter().map(|f| if f.contains(',') { format!("\"{f}\"") } else { f.clone() }).collect();
        out.push_str(&quoted.join(","));
        out.push('\n');
    }
    out
}
