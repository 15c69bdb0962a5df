//! Valuations close to a shared master list: projected valuations, the common
//! Round-Robin partition, swap distances, swap-set structure and per-class
//! guarantee checks.
//!
//! Lists are item sequences (`list[p]` is the item at position `p`); swaps
//! name positions, 0-based here and 1-based on disk.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_permutation, format_rational, theorem_bound, Instance, Partition, Rational, Row, TheoremBoundSpec};
use crate::roundrobin::round_robin_ranked;

/// Exchange of the items at positions `left < right`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Swap {
    pub left: usize,
    pub right: usize,
}

impl Swap {
    pub fn new(left: usize, right: usize) -> Result<Swap> {
        if left >= right {
            return Err(Error::InvalidArgument(format!(
                "swap ({}, {}) needs left < right",
                left + 1,
                right + 1
            )));
        }
        Ok(Swap { left, right })
    }

    fn contains(&self, other: &Swap) -> bool {
        self.left <= other.left && other.right <= self.right
    }

    fn crosses(&self, other: &Swap) -> bool {
        let (a, b) = if self.left <= other.left { (self, other) } else { (other, self) };
        a.left < b.left && b.left < a.right && a.right < b.right
    }
}

/// Applies `swaps` in order to a copy of `list`.
pub fn apply_swaps(list: &[usize], swaps: &[Swap]) -> Result<Vec<usize>> {
    let mut out = list.to_vec();
    for s in swaps {
        if s.right >= out.len() {
            return Err(Error::ItemOutOfRange { index: s.right, m: out.len() });
        }
        out.swap(s.left, s.right);
    }
    Ok(out)
}

fn positions(list: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; list.len()];
    for (p, &g) in list.iter().enumerate() {
        pos[g] = p;
    }
    pos
}

fn check_pair(sigma: &[usize], pi: &[usize]) -> Result<()> {
    if sigma.len() != pi.len() {
        return Err(Error::LengthMismatch { expected: pi.len(), got: sigma.len() });
    }
    check_permutation(sigma, sigma.len())?;
    check_permutation(pi, pi.len())
}

/// Each agent's values, sorted in non-increasing order, laid out along `pi`.
pub fn projected_valuations(inst: &Instance, pi: &[usize]) -> Result<Instance> {
    check_permutation(pi, inst.m())?;
    let values = inst
        .values()
        .iter()
        .map(|row| {
            let mut sorted = row.clone();
            sorted.sort_by(|a, b| b.cmp(a));
            let mut out = vec![Rational::zero(); row.len()];
            for (p, v) in sorted.into_iter().enumerate() {
                out[pi[p]] = v;
            }
            out
        })
        .collect();
    Instance::with_dims(inst.n(), inst.m(), values)?.with_master_list(pi.to_vec())
}

/// Round-Robin on the projected valuations with ties broken along `pi`. Every
/// picker then follows `pi`, so part `j` is `pi[j], pi[j + n], ...`.
pub fn masterlist_partition(inst: &Instance, pi: &[usize]) -> Result<Partition> {
    let projected = projected_valuations(inst, pi)?;
    let rank = positions(pi);
    let rows: Vec<&Row> = projected.rows().iter().collect();
    Ok(round_robin_ranked(&inst.items(), &rows, Some(&rank)).to_partition())
}

/// Partition obtained when one projected row is used by every picker.
pub fn single_row_partition(inst: &Instance, pi: &[usize], agent: usize) -> Result<Partition> {
    let projected = projected_valuations(inst, pi)?;
    let rank = positions(pi);
    let rows = vec![projected.row(agent); inst.n()];
    Ok(round_robin_ranked(&inst.items(), &rows, Some(&rank)).to_partition())
}

fn count_inversions(seq: &mut [usize], buf: &mut Vec<usize>) -> u64 {
    let len = seq.len();
    if len < 2 {
        return 0;
    }
    let mid = len / 2;
    let mut count = count_inversions(&mut seq[..mid], buf) + count_inversions(&mut seq[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < len {
        if seq[i] <= seq[j] {
            buf.push(seq[i]);
            i += 1;
        } else {
            buf.push(seq[j]);
            count += (mid - i) as u64;
            j += 1;
        }
    }
    buf.extend_from_slice(&seq[i..mid]);
    buf.extend_from_slice(&seq[j..]);
    seq.copy_from_slice(buf);
    count
}

/// Number of pairs ordered differently by the two lists, which is the least
/// number of adjacent swaps turning one into the other.
pub fn adjacent_swap_distance(sigma: &[usize], pi: &[usize]) -> Result<u64> {
    check_pair(sigma, pi)?;
    let pos = positions(pi);
    let mut seq: Vec<usize> = sigma.iter().map(|&g| pos[g]).collect();
    let mut buf = Vec::with_capacity(seq.len());
    Ok(count_inversions(&mut seq, &mut buf))
}

/// Least number of arbitrary swaps: `m` minus the number of cycles.
pub fn transposition_distance(sigma: &[usize], pi: &[usize]) -> Result<usize> {
    check_pair(sigma, pi)?;
    let pos = positions(pi);
    let target: Vec<usize> = sigma.iter().map(|&g| pos[g]).collect();
    let mut seen = vec![false; target.len()];
    let mut cycles = 0;
    for start in 0..target.len() {
        if seen[start] {
            continue;
        }
        cycles += 1;
        let mut p = start;
        while !seen[p] {
            seen[p] = true;
            p = target[p];
        }
    }
    Ok(target.len() - cycles)
}

/// For every pair with `s1 <= s3`: `s2 <= s3` and `s1 < s4`. Intervals may
/// share endpoints but no interior point; equal left ends never separate.
pub fn is_linearly_separable(swaps: &[Swap]) -> bool {
    let mut sorted = swaps.to_vec();
    sorted.sort_unstable();
    sorted.windows(2).all(|w| w[0].left < w[1].left && w[0].right <= w[1].left)
}

/// Splits `swaps` into the fewest linearly separable layers (interval
/// colouring sweep; a layer is free again once its last right end is at or
/// before the next left end).
pub fn min_linsep_layers(swaps: &[Swap]) -> Vec<Vec<Swap>> {
    let mut sorted = swaps.to_vec();
    sorted.sort_unstable();
    let mut layers: Vec<Vec<Swap>> = Vec::new();
    let mut ends: BinaryHeap<Reverse<(usize, usize)>> = BinaryHeap::new();
    for s in sorted {
        let layer = match ends.peek() {
            Some(&Reverse((end, layer))) if end <= s.left => {
                ends.pop();
                layer
            }
            _ => {
                layers.push(Vec::new());
                layers.len() - 1
            }
        };
        layers[layer].push(s);
        ends.push(Reverse((s.right, layer)));
    }
    layers
}

/// Every pair is disjoint (shared endpoints allowed) or nested.
pub fn is_laminar(swaps: &[Swap]) -> bool {
    swaps.iter().enumerate().all(|(i, a)| swaps[i + 1..].iter().all(|b| !a.crosses(b)))
}

/// Peels one copy of every maximal swap per layer; the depth is the number of
/// layers.
pub fn laminar_depth(swaps: &[Swap]) -> Result<Vec<Vec<Swap>>> {
    if !is_laminar(swaps) {
        return Err(Error::NotLaminar("two swaps overlap without nesting".into()));
    }
    let mut rest = swaps.to_vec();
    rest.sort_unstable();
    let mut layers = Vec::new();
    while !rest.is_empty() {
        let mut distinct = rest.clone();
        distinct.dedup();
        let maximal: Vec<Swap> = distinct
            .iter()
            .copied()
            .filter(|s| !distinct.iter().any(|o| o != s && o.contains(s)))
            .collect();
        for s in &maximal {
            let at = rest.iter().position(|x| x == s).expect("maximal swap is present");
            rest.remove(at);
        }
        layers.push(maximal);
    }
    Ok(layers)
}

/// Adjacent swaps from the bubbling procedure, grouped by copy index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BubbleDecomposition {
    /// Swaps in the order performed while turning `sigma` into `pi`.
    pub swaps: Vec<Swap>,
    /// Layer `c` holds the `c`-th copy of every swap used at least `c + 1` times.
    pub layers: Vec<Vec<Swap>>,
    /// `layers.len() <= ceil(sqrt(2k))` with `k = swaps.len()`.
    pub within_bound: bool,
}

/// Smallest `s` with `s * s >= x`.
pub fn ceil_sqrt(x: u64) -> u64 {
    let mut s = (x as f64).sqrt() as u64;
    while s * s < x {
        s += 1;
    }
    while s > 0 && (s - 1) * (s - 1) >= x {
        s -= 1;
    }
    s
}

/// Repeatedly fixes the leftmost wrong position of `sigma` by bubbling the
/// item that belongs there to the left.
pub fn bubble_decomposition(sigma: &[usize], pi: &[usize]) -> Result<BubbleDecomposition> {
    check_pair(sigma, pi)?;
    let mut cur = sigma.to_vec();
    let mut swaps = Vec::new();
    for p in 0..pi.len() {
        let from = p + cur[p..].iter().position(|&g| g == pi[p]).expect("item is to the right");
        for q in (p..from).rev() {
            cur.swap(q, q + 1);
            swaps.push(Swap { left: q, right: q + 1 });
        }
    }
    let mut copies = vec![0usize; pi.len()];
    let mut layers: Vec<Vec<Swap>> = Vec::new();
    for s in &swaps {
        let c = copies[s.left];
        copies[s.left] += 1;
        if layers.len() <= c {
            layers.push(Vec::new());
        }
        layers[c].push(*s);
    }
    for layer in &mut layers {
        layer.sort_unstable();
    }
    let within_bound = layers.len() as u64 <= ceil_sqrt(2 * swaps.len() as u64);
    Ok(BubbleDecomposition { swaps, layers, within_bound })
}

/// Largest gap between neighbouring projected values over all agents.
pub fn lipschitz_delta(inst: &Instance, pi: &[usize]) -> Result<Rational> {
    let projected = projected_valuations(inst, pi)?;
    let mut delta = Rational::zero();
    for row in projected.values() {
        for w in pi.windows(2) {
            let gap = &row[w[0]] - &row[w[1]];
            let gap = if gap < Rational::zero() { -gap } else { gap };
            if gap > delta {
                delta = gap;
            }
        }
    }
    Ok(delta)
}

/// The agent's own list: decreasing value, ties in master-list order.
pub fn sigma_of(row: &Row, pi: &[usize]) -> Vec<usize> {
    let pos = positions(pi);
    let mut list = pi.to_vec();
    list.sort_by(|&a, &b| row.scaled_value(b).cmp(&row.scaled_value(a)).then(pos[a].cmp(&pos[b])));
    list
}

/// Total rise from the projected to the true values, and the total positional
/// drop over `swaps`. The first never exceeds the second when `swaps`, applied
/// to `pi`, produce the agent's list.
pub fn change_accounting(inst: &Instance, agent: usize, pi: &[usize], swaps: &[Swap]) -> Result<(Rational, Rational)> {
    let projected = projected_valuations(inst, pi)?;
    let truth = &inst.values()[agent];
    let hat = &projected.values()[agent];
    let mut rise = Rational::zero();
    for g in 0..inst.m() {
        if hat[g] > truth[g] {
            rise += &hat[g] - &truth[g];
        }
    }
    let mut drop = Rational::zero();
    for s in swaps {
        if s.right >= pi.len() {
            return Err(Error::ItemOutOfRange { index: s.right, m: pi.len() });
        }
        let d = &hat[pi[s.left]] - &hat[pi[s.right]];
        if d > Rational::zero() {
            drop += d;
        }
    }
    Ok((rise, drop))
}

/// How an agent's valuation relates to the master list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum AgentClass {
    Ordered,
    Linsep,
    LinsepT { t: u64 },
    Adjacent { k: u64 },
    Arbitrary { k: u64 },
    Laminar { depth: u64 },
    Lipschitz {
        #[serde(with = "crate::model::rational::serde_string")]
        delta: Rational,
        k: u64,
    },
}

impl AgentClass {
    pub fn spec(&self) -> TheoremBoundSpec {
        match self {
            AgentClass::Ordered => TheoremBoundSpec::MlOrdered,
            AgentClass::Linsep => TheoremBoundSpec::MlLinsep,
            AgentClass::LinsepT { t } => TheoremBoundSpec::MlLinsepT { t: *t },
            AgentClass::Adjacent { k } => TheoremBoundSpec::MlAdjacent { k: *k },
            AgentClass::Arbitrary { k } => TheoremBoundSpec::MlArbitrary { k: *k },
            AgentClass::Laminar { depth } => TheoremBoundSpec::MlLaminar { depth: *depth },
            AgentClass::Lipschitz { delta, k } => TheoremBoundSpec::MlLipschitz { delta: delta.clone(), k: *k },
        }
    }

    /// Parses a class name with its parameter (`k`, `t`, `depth` or `delta`, `k`).
    pub fn parse(name: &str, param: Option<u64>, delta: Option<Rational>) -> Result<AgentClass> {
        let need = |p: Option<u64>| {
            p.ok_or_else(|| Error::MissingParameter { theorem: name.to_string(), param: "k".into() })
        };
        Ok(match name {
            "ordered" => AgentClass::Ordered,
            "linsep" => AgentClass::Linsep,
            "linsep_t" => AgentClass::LinsepT { t: need(param)? },
            "adjacent" => AgentClass::Adjacent { k: need(param)? },
            "arbitrary" => AgentClass::Arbitrary { k: need(param)? },
            "laminar" => AgentClass::Laminar { depth: need(param)? },
            "lipschitz" => AgentClass::Lipschitz {
                delta: delta.ok_or_else(|| Error::MissingParameter {
                    theorem: name.to_string(),
                    param: "delta".into(),
                })?,
                k: need(param)?,
            },
            other => return Err(Error::UnknownTheorem(other.to_string())),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterlistVerdict {
    pub agent: usize,
    #[serde(with = "crate::model::rational::serde_string")]
    pub prop: Rational,
    /// The part this agent values least, and its value.
    pub worst_part: usize,
    #[serde(with = "crate::model::rational::serde_string")]
    pub worst_value: Rational,
    pub bound: String,
    pub bound_decimal: f64,
    pub margin: Option<String>,
    pub pass: bool,
    pub trivial: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterlistReport {
    pub partition: Partition,
    pub agents: Vec<MasterlistVerdict>,
    pub pass: bool,
}

/// Checks every part of the shared partition against each agent's class bound.
pub fn verify_masterlist_guarantees(inst: &Instance, pi: &[usize], classes: &[AgentClass]) -> Result<MasterlistReport> {
    if classes.len() != inst.n() {
        return Err(Error::LengthMismatch { expected: inst.n(), got: classes.len() });
    }
    let partition = masterlist_partition(inst, pi)?;
    let shares = inst.prop_shares();
    let mut agents = Vec::with_capacity(inst.n());
    for (a, class) in classes.iter().enumerate() {
        let row = inst.row(a);
        let (worst_part, worst) = partition
            .parts
            .iter()
            .enumerate()
            .map(|(j, p)| (j, row.scaled_sum(p)))
            .min_by_key(|&(j, v)| (v, j))
            .expect("at least one part");
        let worst_value = row.to_rational(worst);
        let bound = theorem_bound(&class.spec(), &shares[a]);
        agents.push(MasterlistVerdict {
            agent: a,
            prop: shares[a].clone(),
            worst_part,
            bound: bound.to_string(),
            bound_decimal: bound.approx(),
            margin: bound.exact_margin(&worst_value).map(|m| format_rational(&m)),
            pass: bound.is_satisfied_by(&worst_value),
            trivial: bound.is_trivial(),
            worst_value,
        });
    }
    let pass = agents.iter().all(|v| v.pass);
    Ok(MasterlistReport { partition, agents, pass })
}
