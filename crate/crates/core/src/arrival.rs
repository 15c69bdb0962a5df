//! Sequential arrivals: each agent takes a most valuable part from the menu it
//! is shown. Runs are recorded as transcripts that can be re-checked and
//! compared against the closed-form bounds.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::rational::{self, serde_string};
use crate::model::{
    check_partition, check_permutation, format_rational, theorem_bound, Instance, Partition, Rational, Row,
    TheoremBoundSpec,
};

/// How an agent chooses among parts of equal maximum value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TiePolicy {
    #[default]
    LowestPartIndex,
    HighestPartIndex,
    SeededRandom { seed: u64 },
}

/// One part on offer: its id and a snapshot of its items.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MenuEntry {
    pub part: usize,
    pub items: Vec<usize>,
}

impl MenuEntry {
    pub fn new(part: usize, items: Vec<usize>) -> MenuEntry {
        MenuEntry { part, items }
    }
}

/// Stateful chooser; the seeded policy draws from one stream per run.
pub struct Picker {
    policy: TiePolicy,
    rng: Option<ChaCha8Rng>,
}

impl Picker {
    pub fn new(policy: TiePolicy) -> Picker {
        let rng = match policy {
            TiePolicy::SeededRandom { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Picker { policy, rng }
    }

    /// Returns the chosen menu position and whether the maximum was unique.
    fn choose(&mut self, row: &Row, menu: &[MenuEntry]) -> Result<(usize, bool)> {
        if menu.is_empty() {
            return Err(Error::EmptyMenu);
        }
        let values: Vec<u128> = menu.iter().map(|e| row.scaled_sum(&e.items)).collect();
        let best = *values.iter().max().expect("menu is non-empty");
        let mut ties: Vec<usize> = (0..menu.len()).filter(|&k| values[k] == best).collect();
        ties.sort_by_key(|&k| menu[k].part);
        let unique = ties.len() == 1;
        let k = match self.policy {
            TiePolicy::LowestPartIndex => ties[0],
            TiePolicy::HighestPartIndex => *ties.last().expect("at least one maximizer"),
            TiePolicy::SeededRandom { .. } => {
                let rng = self.rng.as_mut().expect("seeded picker has a stream");
                ties[rng.gen_range(0..ties.len())]
            }
        };
        Ok((k, unique))
    }
}

/// Part id a rational agent with valuation `row` picks from `menu`.
pub fn rational_pick(row: &Row, menu: &[MenuEntry], policy: TiePolicy) -> Result<usize> {
    let (k, _) = Picker::new(policy).choose(row, menu)?;
    Ok(menu[k].part)
}

/// What the allocator did right before an arrival.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Fixed partition, no intervention.
    Static,
    /// A single agent is shown everything that is left.
    Sole,
    /// A donor item was moved into the designated part.
    Transfer,
    /// No donor item was available; the transfer was skipped.
    NoDonor,
    /// A temporary re-bundled menu was shown.
    Rebundle,
    /// Remaining top-row donor items were folded into the designated part.
    Fold,
    /// Middle agent of an odd-sized stage, shown the parts unchanged.
    Middle,
    /// Equal-valued parts were broken by swaps with zero-valued parts.
    Swap,
}

/// Optional annotations attached to an arrival.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designated: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<Branch>,
    /// Whether the agent meets the allocator's precondition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precondition: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equals: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeros: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swaps: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrivalRecord {
    pub position: usize,
    pub agent: usize,
    pub menu: Vec<MenuEntry>,
    pub chosen: usize,
    pub items: Vec<usize>,
    #[serde(with = "serde_string")]
    pub value: Rational,
    #[serde(with = "serde_string")]
    pub prop: Rational,
    #[serde(with = "serde_string")]
    pub total: Rational,
    /// The chosen part was the only maximizer on the menu.
    pub unique_max: bool,
    #[serde(flatten)]
    pub note: Annotation,
}

impl ArrivalRecord {
    /// The agent took the part the allocator meant for it.
    pub fn took_designated(&self) -> Option<bool> {
        self.note.designated.map(|d| d == self.chosen)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub algorithm: String,
    pub n: usize,
    pub m: usize,
    pub records: Vec<ArrivalRecord>,
    pub leftover: Vec<usize>,
    /// Maximum influence set size, when the allocator measured it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Maximum tie size, when the allocator measured it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn shift(xs: &mut [usize], up: bool) -> Result<()> {
    for x in xs {
        if up {
            *x += 1;
        } else {
            *x = x
                .checked_sub(1)
                .ok_or_else(|| Error::Malformed("transcript uses index 0; indices are 1-based".into()))?;
        }
    }
    Ok(())
}

impl Transcript {
    fn shifted(&self, up: bool) -> Result<Transcript> {
        let mut t = self.clone();
        shift(&mut t.leftover, up)?;
        for r in &mut t.records {
            let mut ids = vec![r.position, r.agent, r.chosen];
            shift(&mut ids, up)?;
            (r.position, r.agent, r.chosen) = (ids[0], ids[1], ids[2]);
            shift(&mut r.items, up)?;
            if let Some(d) = r.note.designated.as_mut() {
                shift(std::slice::from_mut(d), up)?;
            }
            for e in &mut r.menu {
                shift(std::slice::from_mut(&mut e.part), up)?;
                shift(&mut e.items, up)?;
            }
        }
        Ok(t)
    }

    /// JSON document with 1-based agents, items, parts and positions.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.shifted(true).expect("shifting up cannot fail")).expect("transcript serializes")
    }

    pub fn from_json(raw: &serde_json::Value) -> Result<Transcript> {
        let t: Transcript = serde_json::from_value(raw.clone()).map_err(|e| Error::Malformed(e.to_string()))?;
        t.shifted(false)
    }

    /// Value received by each agent, indexed by agent id.
    pub fn values_by_agent(&self) -> Vec<Option<Rational>> {
        let mut out = vec![None; self.n];
        for r in &self.records {
            out[r.agent] = Some(r.value.clone());
        }
        out
    }

    pub fn final_partition(&self) -> Partition {
        let mut parts = vec![Vec::new(); self.n];
        for r in &self.records {
            parts[r.agent] = r.items.clone();
        }
        Partition::new(parts)
    }
}

/// Drives arrivals for any allocator: shows a menu, records the pick.
pub struct Session<'a> {
    inst: &'a Instance,
    picker: Picker,
    records: Vec<ArrivalRecord>,
    shares: Vec<Rational>,
}

impl<'a> Session<'a> {
    pub fn new(inst: &'a Instance, policy: TiePolicy) -> Session<'a> {
        Session { inst, picker: Picker::new(policy), records: Vec::new(), shares: inst.prop_shares() }
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    /// Shows `menu` to `agent` and returns the id of the part taken.
    pub fn present(&mut self, agent: usize, menu: Vec<MenuEntry>, note: Annotation) -> Result<usize> {
        let row = self.inst.row(agent);
        let (k, unique_max) = self.picker.choose(row, &menu)?;
        let chosen = menu[k].part;
        let items = menu[k].items.clone();
        let value = row.sum(&items);
        self.records.push(ArrivalRecord {
            position: self.records.len(),
            agent,
            menu,
            chosen,
            items,
            value,
            prop: self.shares[agent].clone(),
            total: self.inst.total_value(agent)?,
            unique_max,
            note,
        });
        Ok(chosen)
    }

    pub fn finish(self, algorithm: &str, leftover: Vec<usize>) -> Transcript {
        Transcript {
            algorithm: algorithm.to_string(),
            n: self.inst.n(),
            m: self.inst.m(),
            records: self.records,
            leftover,
            d: None,
            t: None,
            notes: Vec::new(),
        }
    }
}

/// Menu made of the parts not yet taken.
pub fn open_menu(parts: &[Vec<usize>], taken: &[bool]) -> Vec<MenuEntry> {
    parts
        .iter()
        .enumerate()
        .filter(|(j, _)| !taken[*j])
        .map(|(j, p)| MenuEntry::new(j, p.clone()))
        .collect()
}

fn check_static_inputs(inst: &Instance, partition: &Partition, order: &[usize]) -> Result<()> {
    if partition.len() != inst.n() {
        return Err(Error::InvalidPartition(format!(
            "{} parts for {} agents",
            partition.len(),
            inst.n()
        )));
    }
    let report = check_partition(&inst.items(), partition);
    if !report.is_valid() {
        return Err(Error::InvalidPartition(format!(
            "duplicates {:?}, missing {:?}, foreign {:?}",
            report.duplicates, report.missing, report.foreign
        )));
    }
    check_permutation(order, inst.n())
}

/// Agents in `order` pick from a fixed partition.
pub fn run_static(inst: &Instance, partition: &Partition, order: &[usize], policy: TiePolicy) -> Result<Transcript> {
    run_static_with(inst, partition, order, policy, |_, _, _, _| {})
}

/// Like [`run_static`] but calls `rebundle(position, agent, parts, taken)`
/// before each arrival so the unpicked parts can be changed.
pub fn run_static_with<F>(
    inst: &Instance,
    partition: &Partition,
    order: &[usize],
    policy: TiePolicy,
    mut rebundle: F,
) -> Result<Transcript>
where
    F: FnMut(usize, usize, &mut [Vec<usize>], &[bool]),
{
    check_static_inputs(inst, partition, order)?;
    let mut parts = partition.parts.clone();
    let mut taken = vec![false; parts.len()];
    let mut session = Session::new(inst, policy);
    for (pos, &agent) in order.iter().enumerate() {
        rebundle(pos, agent, &mut parts, &taken);
        let menu = open_menu(&parts, &taken);
        let note = Annotation { branch: Some(Branch::Static), ..Annotation::default() };
        let chosen = session.present(agent, menu, note)?;
        taken[chosen] = true;
    }
    let leftover = parts
        .iter()
        .enumerate()
        .filter(|(j, _)| !taken[*j])
        .flat_map(|(_, p)| p.iter().copied())
        .collect();
    Ok(session.finish("static", leftover))
}

/// Re-checks the structural invariants of a transcript against its instance.
/// Returns a list of problems (empty when the transcript is sound).
pub fn check_transcript(inst: &Instance, t: &Transcript) -> Vec<String> {
    let mut issues = Vec::new();
    if t.n != inst.n() || t.m != inst.m() {
        issues.push(format!("dimensions {}x{} do not match the instance", t.n, t.m));
        return issues;
    }
    let mut chosen_parts = Vec::new();
    let mut covered = vec![0usize; inst.m()];
    for r in &t.records {
        let row = inst.row(r.agent);
        let Some(entry) = r.menu.iter().find(|e| e.part == r.chosen) else {
            issues.push(format!("arrival {}: chosen part not on the menu", r.position + 1));
            continue;
        };
        if entry.items != r.items {
            issues.push(format!("arrival {}: received items differ from the menu entry", r.position + 1));
        }
        let got = row.scaled_sum(&r.items);
        if let Some(best) = r.menu.iter().map(|e| row.scaled_sum(&e.items)).max() {
            if got < best {
                issues.push(format!("arrival {}: chosen part is not a maximizer", r.position + 1));
            }
        }
        if row.sum(&r.items) != r.value {
            issues.push(format!("arrival {}: recorded value is wrong", r.position + 1));
        }
        // Dynamic allocators rebuild parts every stage, so labels only need to
        // be unique within one.
        let key = (r.note.stage, r.chosen);
        if chosen_parts.contains(&key) {
            issues.push(format!("arrival {}: part {} chosen twice", r.position + 1, r.chosen + 1));
        }
        chosen_parts.push(key);
        for &g in &r.items {
            match covered.get_mut(g) {
                Some(c) => *c += 1,
                None => issues.push(format!("arrival {}: item {} out of range", r.position + 1, g + 1)),
            }
        }
    }
    for &g in &t.leftover {
        match covered.get_mut(g) {
            Some(c) => *c += 1,
            None => issues.push(format!("leftover item {} out of range", g + 1)),
        }
    }
    for (g, &c) in covered.iter().enumerate() {
        if c != 1 {
            issues.push(format!("item {} allocated {c} times", g + 1));
        }
    }
    issues
}

/// Verdict for one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentVerdict {
    pub agent: usize,
    pub position: usize,
    #[serde(with = "serde_string")]
    pub value: Rational,
    #[serde(with = "serde_string")]
    pub prop: Rational,
    pub bound: String,
    pub bound_decimal: f64,
    /// `value - bound` when the bound is rational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<String>,
    pub pass: bool,
    /// The bound is at most zero, so any part meets it.
    pub trivial: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub theorem: String,
    pub agents: Vec<AgentVerdict>,
    pub pass: bool,
}

/// Compares each arrival's value with the bound given by `specs[position]`.
pub fn verify_transcript(t: &Transcript, specs: &[TheoremBoundSpec]) -> Result<VerifyReport> {
    if specs.len() != t.records.len() {
        return Err(Error::LengthMismatch { expected: t.records.len(), got: specs.len() });
    }
    let mut agents = Vec::new();
    for (r, spec) in t.records.iter().zip(specs) {
        let bound = theorem_bound(spec, &r.prop);
        agents.push(AgentVerdict {
            agent: r.agent,
            position: r.position,
            value: r.value.clone(),
            prop: r.prop.clone(),
            bound: bound.to_string(),
            bound_decimal: bound.approx(),
            margin: bound.exact_margin(&r.value).map(|m| format_rational(&m)),
            pass: bound.is_satisfied_by(&r.value),
            trivial: bound.is_trivial(),
        });
    }
    let pass = agents.iter().all(|a| a.pass);
    let theorem = specs.first().map_or("none", TheoremBoundSpec::id).to_string();
    Ok(VerifyReport { theorem, agents, pass })
}

/// Per-arrival bound specs for `theorem`, filled in from the transcript:
/// arrival position, stage, total value and the measured `d` / `t`.
/// `overrides` supplies or replaces named parameters.
pub fn specs_for_transcript(
    theorem: &str,
    t: &Transcript,
    overrides: &BTreeMap<String, Rational>,
) -> Result<Vec<TheoremBoundSpec>> {
    t.records
        .iter()
        .map(|r| {
            let mut params = BTreeMap::new();
            let count = |x: usize| rational::int(x as i64);
            params.insert("n".to_string(), count(t.n));
            params.insert("i".to_string(), count(r.position + 1));
            params.insert("total".to_string(), r.total.clone());
            if let Some(g) = r.note.stage {
                params.insert("g".to_string(), count(g));
            }
            if let Some(d) = t.d {
                params.insert("d".to_string(), count(d));
            }
            if let Some(tie) = t.t {
                params.insert("t".to_string(), count(tie));
            }
            for (k, v) in overrides {
                params.insert(k.clone(), v.clone());
            }
            TheoremBoundSpec::from_params(theorem, &params)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{frac, int};

    fn menu_of(values: &[u64]) -> (Row, Vec<MenuEntry>) {
        let row = Row::from_scaled(1, values.to_vec());
        let menu = (0..values.len()).map(|j| MenuEntry::new(j, vec![j])).collect();
        (row, menu)
    }

    #[test]
    fn pick_respects_policy() {
        let (row, menu) = menu_of(&[3, 5, 5]);
        assert_eq!(rational_pick(&row, &menu, TiePolicy::LowestPartIndex).unwrap(), 1);
        assert_eq!(rational_pick(&row, &menu, TiePolicy::HighestPartIndex).unwrap(), 2);
        let seeded = rational_pick(&row, &menu, TiePolicy::SeededRandom { seed: 9 }).unwrap();
        assert!(seeded == 1 || seeded == 2);
        let (row, menu) = menu_of(&[0]);
        assert_eq!(rational_pick(&row, &menu, TiePolicy::HighestPartIndex).unwrap(), 0);
        assert_eq!(rational_pick(&row, &[], TiePolicy::LowestPartIndex), Err(Error::EmptyMenu));
    }

    #[test]
    fn single_agent_takes_single_part() {
        let inst = Instance::from_tokens(&[&["1/2", "1/4"]]).unwrap();
        let t = run_static(&inst, &Partition::new(vec![vec![0, 1]]), &[0], TiePolicy::default()).unwrap();
        assert_eq!(t.records[0].value, frac(3, 4));
        assert!(check_transcript(&inst, &t).is_empty());
    }

    #[test]
    fn static_run_rejects_bad_inputs() {
        let inst = Instance::from_tokens(&[&["1", "1"], &["1", "1"]]).unwrap();
        let bad = Partition::new(vec![vec![0], vec![0]]);
        assert!(run_static(&inst, &bad, &[0, 1], TiePolicy::default()).is_err());
        let good = Partition::new(vec![vec![0], vec![1]]);
        assert!(run_static(&inst, &good, &[0, 0], TiePolicy::default()).is_err());
    }

    #[test]
    fn manual_failure_has_negative_margin() {
        let inst = Instance::from_tokens(&[&["1", "1"], &["0", "0"]]).unwrap();
        let p = Partition::new(vec![vec![], vec![0, 1]]);
        let mut t = run_static(&inst, &p, &[1, 0], TiePolicy::LowestPartIndex).unwrap();
        // agent 2 (zero row) takes the empty part; agent 1 then gets both items.
        assert_eq!(t.records[1].value, int(2));
        t.records[1].value = int(0);
        let spec = vec![TheoremBoundSpec::RoundRobin, TheoremBoundSpec::ModRr { total: int(4), d: 2 }];
        let report = verify_transcript(&t, &spec).unwrap();
        assert!(!report.pass);
        assert_eq!(report.agents[1].margin.as_deref(), Some("-1"));
        assert!(report.agents[0].trivial && report.agents[0].pass);
    }

    #[test]
    fn transcript_json_is_one_based_and_round_trips() {
        let inst = Instance::from_tokens(&[&["1", "0"], &["0", "1"]]).unwrap();
        let p = Partition::new(vec![vec![0], vec![1]]);
        let t = run_static(&inst, &p, &[1, 0], TiePolicy::default()).unwrap();
        let v = t.to_json();
        assert_eq!(v["records"][0]["agent"], serde_json::json!(2));
        assert_eq!(v["records"][0]["value"], serde_json::json!("1"));
        assert_eq!(Transcript::from_json(&v).unwrap(), t);
    }

    #[test]
    fn checker_catches_tampering() {
        let inst = Instance::from_tokens(&[&["1", "0"], &["0", "1"]]).unwrap();
        let p = Partition::new(vec![vec![0], vec![1]]);
        let mut t = run_static(&inst, &p, &[0, 1], TiePolicy::default()).unwrap();
        t.records[0].chosen = 1;
        t.records[0].items = vec![1];
        let issues = check_transcript(&inst, &t);
        assert!(issues.iter().any(|s| s.contains("maximizer")));
        assert!(issues.iter().any(|s| s.contains("chosen twice")));
    }
}
