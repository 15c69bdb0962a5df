//! Allocators for restricted valuations: bounded influence over a hypergraph
//! of shared interests, and bounded indifference (few equal positive values).

use std::collections::HashMap;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::arrival::{run_static, Annotation, Branch, MenuEntry, Session, TiePolicy, Transcript};
use crate::dynamic::{bounded_prop_stages, RrVariant, StageLog};
use crate::error::Result;
use crate::model::{ceil_log2, check_permutation, int, Instance, Partition, Rational, TheoremBoundSpec};
use crate::roundrobin::{modified_round_robin, round_robin_ranked, rows_of};

/// Influence sets: `sets[a]` lists every agent sharing a positively valued
/// item with `a` (including `a` itself when it values anything).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfluenceProfile {
    pub sets: Vec<Vec<usize>>,
    pub d: usize,
}

pub fn influence_profile(inst: &Instance) -> InfluenceProfile {
    let n = inst.n();
    let mut linked = vec![vec![false; n]; n];
    for g in 0..inst.m() {
        let fans: Vec<usize> = (0..n).filter(|&a| inst.row(a).is_positive(g)).collect();
        for &a in &fans {
            for &b in &fans {
                linked[a][b] = true;
            }
        }
    }
    let sets: Vec<Vec<usize>> = linked.iter().map(|l| (0..n).filter(|&b| l[b]).collect()).collect();
    let d = sets.iter().map(Vec::len).max().unwrap_or(0);
    InfluenceProfile { sets, d }
}

/// `V_a / D >= 2 ceil(log(2D - 1)) + 2`.
pub fn influence_precondition(total: &Rational, d: usize) -> bool {
    let d = d.max(1);
    let need = 2 * ceil_log2(2 * d as u64 - 1) + 2;
    total / Rational::from_integer(BigInt::from(d)) >= int(need as i64)
}

/// Per-arrival facts from the swap phase.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapStats {
    pub equals: usize,
    pub zeros: usize,
    pub swaps: usize,
    /// Ran out of zero-valued parts while equal parts remained.
    pub zeros_exhausted: bool,
    /// After the swaps the agent's own part beat every other open part.
    pub strict: bool,
    /// No zero-valued part received more than one item.
    pub one_item_per_zero: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InfluenceRun {
    pub transcript: Transcript,
    pub profile: InfluenceProfile,
    /// `D` used by the allocator (at least 1).
    pub d: usize,
    /// Positions below this index went through the swap phase.
    pub late_from: usize,
    pub swap_stats: Vec<SwapStats>,
    pub stages: Vec<StageLog>,
}

fn scaled(inst: &Instance, agent: usize, part: &[usize]) -> u128 {
    inst.row(agent).scaled_sum(part)
}

/// Bounded-influence allocator. Agents are relabelled by arrival position.
/// Early agents (all but the last `2D - 1`) receive at least `V_a/D - 1`,
/// the rest at least `V_a/D - 2 ceil(log(2D - 1)) - 1`.
pub fn bounded_influence(inst: &Instance, order: &[usize], policy: TiePolicy) -> Result<InfluenceRun> {
    check_permutation(order, inst.n())?;
    let n = inst.n();
    let profile = influence_profile(inst);
    let d = profile.d.max(1);
    let totals: Vec<Rational> = (0..n).map(|a| inst.total_value(a)).collect::<Result<_>>()?;
    let precondition = |p: usize| influence_precondition(&totals[order[p]], d);

    let rows = rows_of(inst, order);
    let mut parts = modified_round_robin(&inst.items(), &rows).partition.parts;
    let mut taken = vec![false; n];
    let late_from = n.saturating_sub(2 * d - 1);
    let mut session = Session::new(inst, policy);
    let mut swap_stats = Vec::new();

    for i in 0..late_from {
        let agent = order[i];
        let row = inst.row(agent);
        let mut stats = SwapStats::default();
        let mut received = vec![0usize; n];
        let own = scaled(inst, agent, &parts[i]);
        let mut used = vec![false; n];
        if own > 0 {
            let mut first = true;
            // Every pass fills a distinct zero part, so n passes suffice.
            for _ in 0..n {
                let open = |j: &usize| *j > i && !taken[*j];
                let equals: Vec<usize> =
                    (0..n).filter(open).filter(|&j| scaled(inst, agent, &parts[j]) == own).collect();
                let zeros: Vec<usize> = (0..n)
                    .filter(open)
                    .filter(|&j| !used[j] && scaled(inst, agent, &parts[j]) == 0)
                    .collect();
                if first {
                    stats.equals = equals.len();
                    stats.zeros = zeros.len();
                    first = false;
                }
                let Some(&r) = equals.first() else { break };
                let Some(&z) = zeros.first() else {
                    stats.zeros_exhausted = true;
                    break;
                };
                let best = row.top_item(&parts[r]).expect("an equal part holds a positive item");
                let filler = parts[z].iter().copied().min();
                parts[r].retain(|&g| g != best);
                parts[z].push(best);
                received[z] += 1;
                if let Some(f) = filler {
                    parts[z].retain(|&g| g != f);
                    parts[r].push(f);
                }
                used[z] = true;
                stats.swaps += 1;
            }
        }
        stats.one_item_per_zero = received.iter().all(|&c| c <= 1);
        stats.strict =
            (0..n).filter(|&j| j != i && !taken[j]).all(|j| scaled(inst, agent, &parts[j]) < scaled(inst, agent, &parts[i]));
        let menu: Vec<MenuEntry> = (0..n)
            .filter(|&j| !taken[j])
            .map(|j| {
                let mut items = parts[j].clone();
                items.sort_unstable();
                MenuEntry::new(j, items)
            })
            .collect();
        let note = Annotation {
            designated: Some(i),
            branch: Some(Branch::Swap),
            precondition: Some(precondition(i)),
            equals: Some(stats.equals),
            zeros: Some(stats.zeros),
            swaps: Some(stats.swaps),
            ..Annotation::default()
        };
        let chosen = session.present(agent, menu, note)?;
        taken[chosen] = true;
        swap_stats.push(stats);
    }

    let mut pooled: Vec<usize> = (0..n).filter(|&j| !taken[j]).flat_map(|j| parts[j].clone()).collect();
    pooled.sort_unstable();
    let mut stages = Vec::new();
    let leftover = bounded_prop_stages(
        &mut session,
        order,
        pooled,
        (late_from..n).collect(),
        RrVariant::Modified,
        &precondition,
        &mut stages,
    )?;
    let mut transcript = session.finish("influence", leftover);
    transcript.d = Some(d);
    if let Some(p) = (0..n).find(|&p| !precondition(p)) {
        transcript.notes.push(format!("influence precondition fails at position {}", p + 1));
    }
    if swap_stats.iter().any(|s| s.zeros_exhausted) {
        transcript.notes.push("zero-valued parts ran out during swaps".into());
    }
    Ok(InfluenceRun { transcript, profile, d, late_from, swap_stats, stages })
}

/// Bound specs for an influence transcript: early bound before `late_from`,
/// late bound after.
pub fn influence_specs(run: &InfluenceRun) -> Vec<TheoremBoundSpec> {
    run.transcript
        .records
        .iter()
        .map(|r| {
            if r.position < run.late_from {
                TheoremBoundSpec::BoundedInfluenceEarly { total: r.total.clone(), d: run.d as u64 }
            } else {
                TheoremBoundSpec::BoundedInfluenceLate { total: r.total.clone(), d: run.d as u64 }
            }
        })
        .collect()
}

/// `per_agent[a]` is the largest number of items sharing one positive value
/// in `a`'s row; `t` is the maximum over agents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieProfile {
    pub per_agent: Vec<usize>,
    pub t: usize,
}

pub fn tie_profile(inst: &Instance) -> TieProfile {
    let per_agent: Vec<usize> = inst
        .rows()
        .iter()
        .map(|row| {
            let mut counts: HashMap<u64, usize> = HashMap::new();
            for g in 0..row.len() {
                if row.is_positive(g) {
                    *counts.entry(row.scaled_value(g)).or_default() += 1;
                }
            }
            counts.into_values().max().unwrap_or(0)
        })
        .collect();
    let t = per_agent.iter().copied().max().unwrap_or(0);
    TieProfile { per_agent, t }
}

/// Core size `ceil((t + 1) / 2)`.
pub fn core_size(t: usize) -> usize {
    (t + 2) / 2
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndifferenceRun {
    pub transcript: Transcript,
    pub ties: TieProfile,
    pub k: usize,
    /// `cores[p]` is the reserved core of position `p`.
    pub cores: Vec<Vec<usize>>,
    pub partition: Partition,
    /// Every item in core `p` is worth at least every item in later cores to
    /// the agent at `p`.
    pub dominance: Vec<bool>,
    /// The agent at `p` values strictly more its own core than any later core.
    pub strict: Vec<bool>,
    /// `PROP >= k` for the agent at `p`.
    pub share_gate: Vec<bool>,
}

/// Bounded-indifference allocator: greedy cores of `k` items in arrival
/// order, Round-Robin on the rest, then a static run over the merged parts.
pub fn bounded_indifference(inst: &Instance, order: &[usize], policy: TiePolicy) -> Result<IndifferenceRun> {
    check_permutation(order, inst.n())?;
    let n = inst.n();
    let ties = tie_profile(inst);
    let k = core_size(ties.t);
    let mut taken = vec![false; inst.m()];
    let mut cores = Vec::with_capacity(n);
    for &a in order {
        let free: Vec<usize> = (0..inst.m()).filter(|&g| !taken[g]).collect();
        let core: Vec<usize> = inst.row(a).preference_order(&free).into_iter().take(k).collect();
        for &g in &core {
            taken[g] = true;
        }
        cores.push(core);
    }
    let rest: Vec<usize> = (0..inst.m()).filter(|&g| !taken[g]).collect();
    let matrix = round_robin_ranked(&rest, &rows_of(inst, order), None);
    let parts: Vec<Vec<usize>> = cores
        .iter()
        .zip(matrix.columns())
        .map(|(c, col)| {
            let mut p: Vec<usize> = c.iter().chain(col).copied().collect();
            p.sort_unstable();
            p
        })
        .collect();
    let partition = Partition::new(parts);
    let mut transcript = run_static(inst, &partition, order, policy)?;

    let shares = inst.prop_shares();
    let mut dominance = Vec::with_capacity(n);
    let mut strict = Vec::with_capacity(n);
    let mut share_gate = Vec::with_capacity(n);
    for (p, &a) in order.iter().enumerate() {
        let row = inst.row(a);
        let worst_own = cores[p].iter().map(|&g| row.scaled_value(g)).min();
        let best_later = cores[p + 1..].iter().flatten().map(|&g| row.scaled_value(g)).max();
        dominance.push(match (worst_own, best_later) {
            (Some(w), Some(b)) => w >= b,
            _ => true,
        });
        let own = row.scaled_sum(&cores[p]);
        strict.push(cores[p + 1..].iter().all(|c| row.scaled_sum(c) < own));
        share_gate.push(shares[a] >= int(k as i64));
        let positives = (0..inst.m()).filter(|&g| row.is_positive(g)).count();
        let rec = &mut transcript.records[p];
        rec.note.designated = Some(p);
        rec.note.precondition = Some(positives >= (p + 1) * k);
    }
    transcript.algorithm = "indiff".into();
    transcript.t = Some(ties.t);
    Ok(IndifferenceRun { transcript, ties, k, cores, partition, dominance, strict, share_gate })
}

/// Agents by decreasing proportional share, ties to the lowest id.
pub fn sorted_prop_order(inst: &Instance) -> Vec<usize> {
    let shares = inst.prop_shares();
    let mut order: Vec<usize> = (0..inst.n()).collect();
    order.sort_by(|&a, &b| shares[b].cmp(&shares[a]).then(a.cmp(&b)));
    order
}
