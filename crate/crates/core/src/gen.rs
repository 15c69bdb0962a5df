//! Seeded instance generators. Random values sit on the grid `q / 2^16` so
//! every run is exact and bit-for-bit reproducible from the seed.

use num_bigint::BigInt;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::arrival::{run_static, run_static_with, TiePolicy, Transcript};
use crate::dynamic::meets_share_threshold;
use crate::error::{Error, Result};
use crate::masterlist::{
    adjacent_swap_distance, apply_swaps, is_linearly_separable, laminar_depth, lipschitz_delta, min_linsep_layers,
    sigma_of, transposition_distance, AgentClass, Swap,
};
use crate::model::{ceil_log2, format_rational, int, Instance, Partition, Rational};
use crate::structured::{influence_precondition, influence_profile};

pub const GRID: u64 = 1 << 16;
const RETRIES: usize = 1000;

fn grid(q: u64) -> Rational {
    Rational::new(BigInt::from(q), BigInt::from(GRID))
}

/// How each agent's list departs from the master list (the identity).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SwapKind {
    Ordered,
    /// Exactly `k` inversions.
    Adjacent { k: usize },
    /// Exactly `k` transpositions (cycle-merging, so the distance is `k`).
    Arbitrary { k: usize },
    /// `k` pairwise disjoint swaps.
    Linsep { k: usize },
    /// `t` rounds of disjoint swaps, `k` per round.
    LinsepT { t: usize, k: usize },
    /// Nested swaps up to `depth` levels, about `k` in total.
    Laminar { depth: usize, k: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Independent grid values in `[0, 1]`. With `max_tie`, each row uses
    /// distinct positive values repeated at most `max_tie` times.
    Uniform {
        #[serde(default)]
        max_tie: Option<usize>,
    },
    /// Grid values in `[floor, 1]`.
    StrictlyPositive {
        #[serde(with = "crate::model::rational::serde_string")]
        floor: Rational,
    },
    /// Rows re-drawn until `PROP_i >= 2 (ceil(log i) + 1)` for agent `i`.
    BoundedProp {
        #[serde(default)]
        zero_percent: u32,
    },
    /// Agents grouped in blocks of `d`; each item is valued by a random
    /// non-empty subset of one block, so every influence set has size at most `d`.
    Hypergraph {
        d: usize,
        #[serde(default)]
        require_precondition: bool,
    },
    MasterlistSwaps { swaps: SwapKind },
    /// Values falling by at most `delta` per position, then `k` adjacent swaps.
    Lipschitz {
        #[serde(with = "crate::model::rational::serde_string")]
        delta: Rational,
        k: usize,
    },
    /// The chained-preference example: `n` even, shares all equal to `prop`.
    RebundlingFixture { prop: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub family: Family,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub instance: Instance,
    pub meta: Value,
    /// Designated starting partition (fixture only).
    pub partition: Option<Partition>,
    /// Per-agent swaps that turn the master list into the agent's list.
    pub swaps: Option<Vec<Vec<Swap>>>,
    pub spec: GenSpec,
}

impl Generated {
    /// Agent classes for the master-list check, with parameters measured from
    /// the generated data rather than copied from the request.
    pub fn classes(&self) -> Result<Option<Vec<AgentClass>>> {
        let kind = match &self.spec.family {
            Family::MasterlistSwaps { swaps } => swaps,
            Family::Lipschitz { .. } => return self.lipschitz_classes().map(Some),
            _ => return Ok(None),
        };
        let swaps = self.swaps.as_ref().expect("swap families record their swaps");
        let inst = &self.instance;
        let pi: Vec<usize> = (0..inst.m()).collect();
        let mut out = Vec::with_capacity(inst.n());
        for (a, set) in swaps.iter().enumerate() {
            let sigma = sigma_of(inst.row(a), &pi);
            out.push(match kind {
                SwapKind::Ordered => AgentClass::Ordered,
                SwapKind::Adjacent { .. } => AgentClass::Adjacent { k: adjacent_swap_distance(&sigma, &pi)? },
                SwapKind::Arbitrary { .. } => AgentClass::Arbitrary { k: transposition_distance(&sigma, &pi)? as u64 },
                SwapKind::Linsep { .. } if is_linearly_separable(set) => AgentClass::Linsep,
                SwapKind::Linsep { .. } | SwapKind::LinsepT { .. } => {
                    AgentClass::LinsepT { t: min_linsep_layers(set).len() as u64 }
                }
                SwapKind::Laminar { .. } => AgentClass::Laminar { depth: laminar_depth(set)?.len() as u64 },
            });
        }
        Ok(Some(out))
    }

    fn lipschitz_classes(&self) -> Result<Vec<AgentClass>> {
        let inst = &self.instance;
        let pi: Vec<usize> = (0..inst.m()).collect();
        let delta = lipschitz_delta(inst, &pi)?;
        (0..inst.n())
            .map(|a| {
                let k = adjacent_swap_distance(&sigma_of(inst.row(a), &pi), &pi)?;
                Ok(AgentClass::Lipschitz { delta: delta.clone(), k })
            })
            .collect()
    }
}

fn base_meta(spec: &GenSpec) -> Value {
    json!({
        "generator": serde_json::to_value(spec).expect("spec serializes"),
        "distribution": format!("independent uniform grid q/{GRID}"),
    })
}

pub fn generate(spec: &GenSpec) -> Result<Generated> {
    if spec.n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, m) = (spec.n, spec.m);
    let plain = |instance: Instance, meta: Value| Generated {
        instance,
        meta,
        partition: None,
        swaps: None,
        spec: spec.clone(),
    };
    match &spec.family {
        Family::Uniform { max_tie: None } => {
            let values = (0..n).map(|_| (0..m).map(|_| grid(rng.gen_range(0..=GRID))).collect()).collect();
            Ok(plain(Instance::with_dims(n, m, values)?, base_meta(spec)))
        }
        Family::Uniform { max_tie: Some(t) } => {
            if *t == 0 {
                return Err(Error::InvalidArgument("max_tie must be at least 1".into()));
            }
            let values = (0..n).map(|_| tied_row(&mut rng, m, *t)).collect();
            Ok(plain(Instance::with_dims(n, m, values)?, base_meta(spec)))
        }
        Family::StrictlyPositive { floor } => {
            if *floor <= int(0) || *floor > int(1) {
                return Err(Error::InvalidArgument(format!("floor {} must lie in (0, 1]", format_rational(floor))));
            }
            // floor + (1 - floor) q / GRID over one denominator.
            let (a, b) = (floor.numer(), floor.denom());
            let den = b * BigInt::from(GRID);
            let base = a * BigInt::from(GRID);
            let step = b - a;
            let values = (0..n)
                .map(|_| {
                    (0..m)
                        .map(|_| Rational::new(&base + &step * BigInt::from(rng.gen_range(0..=GRID)), den.clone()))
                        .collect()
                })
                .collect();
            Ok(plain(Instance::with_dims(n, m, values)?, base_meta(spec)))
        }
        Family::BoundedProp { zero_percent } => bounded_prop_family(spec, &mut rng, *zero_percent).map(|i| plain(i, base_meta(spec))),
        Family::Hypergraph { d, require_precondition } => hypergraph_family(spec, &mut rng, *d, *require_precondition),
        Family::MasterlistSwaps { swaps } => masterlist_family(spec, &mut rng, swaps),
        Family::Lipschitz { delta, k } => lipschitz_family(spec, &mut rng, delta, *k),
        Family::RebundlingFixture { prop } => {
            let (instance, partition) = rebundling_fixture(n, *prop)?;
            let mut meta = base_meta(spec);
            meta["distribution"] = json!("fixed binary fixture");
            Ok(Generated { instance, meta, partition: Some(partition), swaps: None, spec: spec.clone() })
        }
    }
}

/// Distinct positive grid values, each used by a group of at most `t` items;
/// the first group has exactly `min(t, m)` items.
fn tied_row(rng: &mut ChaCha8Rng, m: usize, t: usize) -> Vec<Rational> {
    let mut items: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        items.swap(i, rng.gen_range(0..=i));
    }
    let mut groups = Vec::new();
    let mut at = 0;
    while at < m {
        let size = if groups.is_empty() { t.min(m) } else { rng.gen_range(1..=t).min(m - at) };
        groups.push(&items[at..at + size]);
        at += size;
    }
    let levels = sample(rng, GRID as usize, groups.len());
    let mut row = vec![int(0); m];
    for (group, q) in groups.iter().zip(levels.iter()) {
        for &g in *group {
            row[g] = grid(q as u64 + 1);
        }
    }
    row
}

fn bounded_prop_family(spec: &GenSpec, rng: &mut ChaCha8Rng, zero_percent: u32) -> Result<Instance> {
    let (n, m) = (spec.n, spec.m);
    let need = 2 * n * (ceil_log2(n as u64) as usize + 1);
    if m < need {
        return Err(Error::Infeasible(format!("m = {m} is below 2n(ceil(log n) + 1) = {need}")));
    }
    if zero_percent >= 100 {
        return Err(Error::InvalidArgument("zero_percent must be below 100".into()));
    }
    let mut values = Vec::with_capacity(n);
    for a in 0..n {
        let mut found = None;
        for _ in 0..RETRIES {
            let row: Vec<u64> = (0..m)
                .map(|_| if rng.gen_range(0..100) < zero_percent { 0 } else { rng.gen_range(0..=GRID) })
                .collect();
            let sum: u64 = row.iter().sum();
            let prop = Rational::new(BigInt::from(sum), BigInt::from(GRID) * BigInt::from(n));
            if meets_share_threshold(&prop, a + 1) {
                found = Some(row.into_iter().map(grid).collect::<Vec<_>>());
                break;
            }
        }
        values.push(found.ok_or_else(|| {
            Error::Infeasible(format!("no row for agent {} reached the share threshold in {RETRIES} draws", a + 1))
        })?);
    }
    Instance::with_dims(n, m, values)
}

fn hypergraph_family(spec: &GenSpec, rng: &mut ChaCha8Rng, d: usize, require: bool) -> Result<Generated> {
    let (n, m) = (spec.n, spec.m);
    if d == 0 {
        return Err(Error::InvalidArgument("d must be at least 1".into()));
    }
    let blocks: Vec<Vec<usize>> = (0..n).step_by(d).map(|s| (s..(s + d).min(n)).collect()).collect();
    for attempt in 0..RETRIES {
        let mut values = vec![vec![int(0); m]; n];
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let g = edges.len();
            let block = &blocks[rng.gen_range(0..blocks.len())];
            let mut edge: Vec<usize> = block.iter().copied().filter(|_| rng.gen_range(0..4) < 3).collect();
            if edge.is_empty() {
                edge.push(block[rng.gen_range(0..block.len())]);
            }
            for &a in &edge {
                values[a][g] = grid(GRID / 2 + rng.gen_range(0..=GRID / 2));
            }
            edges.push(edge);
        }
        let instance = Instance::with_dims(n, m, values)?.with_hypergraph(edges)?;
        let measured = influence_profile(&instance).d.max(1);
        let ok = (0..n).all(|a| influence_precondition(&instance.total_value(a).expect("agent exists"), measured));
        if ok || !require {
            let mut meta = base_meta(spec);
            meta["d"] = json!(measured);
            meta["attempts"] = json!(attempt + 1);
            meta["precondition"] = json!(ok);
            return Ok(Generated { instance, meta, partition: None, swaps: None, spec: spec.clone() });
        }
    }
    Err(Error::Infeasible(format!(
        "no draw with m = {m} met V/D >= 2 ceil(log(2D - 1)) + 2 in {RETRIES} attempts"
    )))
}

/// Strictly decreasing grid values.
fn decreasing_values(rng: &mut ChaCha8Rng, m: usize) -> Result<Vec<Rational>> {
    if m as u64 > GRID {
        return Err(Error::InvalidArgument(format!("m = {m} exceeds the {GRID} grid values")));
    }
    let mut qs: Vec<u64> = sample(rng, GRID as usize, m).iter().map(|q| q as u64 + 1).collect();
    qs.sort_unstable_by(|a, b| b.cmp(a));
    Ok(qs.into_iter().map(grid).collect())
}

/// Lehmer code with exactly `k` inversions, drawn one unit at a time.
fn permutation_with_inversions(rng: &mut ChaCha8Rng, m: usize, k: usize) -> Result<Vec<usize>> {
    let max = m * m.saturating_sub(1) / 2;
    if k > max {
        return Err(Error::Infeasible(format!("{k} inversions exceed the maximum {max} for m = {m}")));
    }
    let mut code = vec![0usize; m];
    for _ in 0..k {
        let open: Vec<usize> = (0..m).filter(|&p| code[p] < m - 1 - p).collect();
        code[open[rng.gen_range(0..open.len())]] += 1;
    }
    let mut pool: Vec<usize> = (0..m).collect();
    Ok(code.iter().map(|&c| pool.remove(c)).collect())
}

fn cycle_ids(list: &[usize]) -> Vec<usize> {
    let mut id = vec![usize::MAX; list.len()];
    for s in 0..list.len() {
        let mut p = s;
        while id[p] == usize::MAX {
            id[p] = s;
            p = list[p];
        }
    }
    id
}

fn draw_swaps(rng: &mut ChaCha8Rng, m: usize, kind: &SwapKind) -> Result<Vec<Swap>> {
    let disjoint = |rng: &mut ChaCha8Rng, k: usize| -> Result<Vec<Swap>> {
        if 2 * k > m {
            return Err(Error::Infeasible(format!("{k} disjoint swaps need m >= {}", 2 * k)));
        }
        let mut ends: Vec<usize> = sample(rng, m, 2 * k).into_vec();
        ends.sort_unstable();
        Ok(ends.chunks(2).map(|c| Swap { left: c[0], right: c[1] }).collect())
    };
    match kind {
        SwapKind::Ordered => Ok(Vec::new()),
        SwapKind::Adjacent { k } => {
            let sigma = permutation_with_inversions(rng, m, *k)?;
            let pi: Vec<usize> = (0..m).collect();
            let mut swaps = crate::masterlist::bubble_decomposition(&sigma, &pi)?.swaps;
            swaps.reverse();
            Ok(swaps)
        }
        SwapKind::Arbitrary { k } => {
            if *k >= m.max(1) {
                return Err(Error::Infeasible(format!("{k} cycle-merging swaps need m > {k}")));
            }
            let mut list: Vec<usize> = (0..m).collect();
            let mut swaps = Vec::with_capacity(*k);
            for _ in 0..*k {
                let ids = cycle_ids(&list);
                loop {
                    let (a, b) = (rng.gen_range(0..m), rng.gen_range(0..m));
                    if ids[a] != ids[b] {
                        let s = Swap { left: a.min(b), right: a.max(b) };
                        list.swap(s.left, s.right);
                        swaps.push(s);
                        break;
                    }
                }
            }
            Ok(swaps)
        }
        SwapKind::Linsep { k } => disjoint(rng, *k),
        SwapKind::LinsepT { t, k } => {
            let mut all = Vec::new();
            for _ in 0..*t {
                all.extend(disjoint(rng, *k)?);
            }
            Ok(all)
        }
        SwapKind::Laminar { depth, k } => {
            let mut out = Vec::new();
            nest(rng, 0, m, 1, *depth, *k, &mut out);
            Ok(out)
        }
    }
}

/// Places disjoint swaps inside positions `lo..hi`, then recurses strictly
/// inside each one.
fn nest(rng: &mut ChaCha8Rng, lo: usize, hi: usize, level: usize, depth: usize, budget: usize, out: &mut Vec<Swap>) {
    if level > depth || hi < lo + 2 || out.len() >= budget {
        return;
    }
    let room = (hi - lo) / 2;
    let count = rng.gen_range(1..=room.clamp(1, 3));
    let mut ends: Vec<usize> = sample(rng, hi - lo, 2 * count).iter().map(|e| e + lo).collect();
    ends.sort_unstable();
    for c in ends.chunks(2) {
        if out.len() >= budget {
            return;
        }
        out.push(Swap { left: c[0], right: c[1] });
        nest(rng, c[0] + 1, c[1], level + 1, depth, budget, out);
    }
}

fn layout(values: &[Rational], sigma: &[usize]) -> Vec<Rational> {
    let mut row = vec![int(0); values.len()];
    for (p, &g) in sigma.iter().enumerate() {
        row[g] = values[p].clone();
    }
    row
}

fn swaps_json(swaps: &[Vec<Swap>]) -> Value {
    json!(swaps
        .iter()
        .map(|s| s.iter().map(|w| [w.left + 1, w.right + 1]).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn masterlist_family(spec: &GenSpec, rng: &mut ChaCha8Rng, kind: &SwapKind) -> Result<Generated> {
    let (n, m) = (spec.n, spec.m);
    let pi: Vec<usize> = (0..m).collect();
    let mut values = Vec::with_capacity(n);
    let mut all = Vec::with_capacity(n);
    for _ in 0..n {
        let sorted = decreasing_values(rng, m)?;
        let swaps = draw_swaps(rng, m, kind)?;
        let sigma = apply_swaps(&pi, &swaps)?;
        values.push(layout(&sorted, &sigma));
        all.push(swaps);
    }
    let instance = Instance::with_dims(n, m, values)?.with_master_list(pi)?;
    let mut meta = base_meta(spec);
    meta["distribution"] = json!(format!("distinct grid values q/{GRID}, sorted along each agent's list"));
    meta["master_list"] = json!((1..=m).collect::<Vec<_>>());
    meta["swaps"] = swaps_json(&all);
    Ok(Generated { instance, meta, partition: None, swaps: Some(all), spec: spec.clone() })
}

fn lipschitz_family(spec: &GenSpec, rng: &mut ChaCha8Rng, delta: &Rational, k: usize) -> Result<Generated> {
    let (n, m) = (spec.n, spec.m);
    if *delta <= int(0) {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    let pi: Vec<usize> = (0..m).collect();
    let mut values = Vec::with_capacity(n);
    let mut all = Vec::with_capacity(n);
    for _ in 0..n {
        // Start at 1 and step down by a grid fraction of delta, never below 0.
        let mut sorted = Vec::with_capacity(m);
        let mut v = int(1);
        for _ in 0..m {
            sorted.push(v.clone());
            let step = delta * grid(rng.gen_range(0..=GRID));
            v = if step > v { int(0) } else { &v - step };
        }
        let sigma = permutation_with_inversions(rng, m, k)?;
        let mut swaps = crate::masterlist::bubble_decomposition(&sigma, &pi)?.swaps;
        swaps.reverse();
        values.push(layout(&sorted, &sigma));
        all.push(swaps);
    }
    let instance = Instance::with_dims(n, m, values)?.with_master_list(pi.clone())?;
    let measured = lipschitz_delta(&instance, &pi)?;
    let mut meta = base_meta(spec);
    meta["delta"] = json!(format_rational(&measured));
    meta["swaps"] = swaps_json(&all);
    Ok(Generated { instance, meta, partition: None, swaps: Some(all), spec: spec.clone() })
}

/// Binary instance with parts of `n * prop` items. Agent `i < n` values the
/// last half of part `i` and the first half of part `i + 1`; the last agent
/// values all of its own part.
pub fn rebundling_fixture(n: usize, prop: usize) -> Result<(Instance, Partition)> {
    if n < 4 || n % 2 == 1 {
        return Err(Error::InvalidArgument(format!("n = {n} must be even and at least 4")));
    }
    if prop == 0 {
        return Err(Error::InvalidArgument("prop must be at least 1".into()));
    }
    let half = n / 2 * prop;
    let size = 2 * half;
    let m = n * size;
    let parts: Vec<Vec<usize>> = (0..n).map(|j| (j * size..(j + 1) * size).collect()).collect();
    let mut values = vec![vec![int(0); m]; n];
    for i in 0..n - 1 {
        for &g in parts[i][half..].iter().chain(&parts[i + 1][..half]) {
            values[i][g] = int(1);
        }
    }
    for &g in &parts[n - 1] {
        values[n - 1][g] = int(1);
    }
    Ok((Instance::with_dims(n, m, values)?, Partition::new(parts)))
}

/// Runs the fixture in order `1..n`, with or without moving two items the
/// arriving agent likes from the next part into its own part.
pub fn run_rebundling_fixture(inst: &Instance, partition: &Partition, rebundle: bool, policy: TiePolicy) -> Result<Transcript> {
    let order: Vec<usize> = (0..inst.n()).collect();
    if !rebundle {
        return run_static(inst, partition, &order, policy);
    }
    let n = inst.n();
    run_static_with(inst, partition, &order, policy, |pos, agent, parts, taken| {
        if pos + 1 >= n || taken[pos + 1] || taken[pos] {
            return;
        }
        let row = inst.row(agent);
        let mut liked: Vec<usize> = parts[pos + 1].iter().copied().filter(|&g| row.is_positive(g)).collect();
        liked.sort_unstable();
        for g in liked.into_iter().take(2) {
            parts[pos + 1].retain(|&x| x != g);
            parts[pos].push(g);
        }
    })
}
