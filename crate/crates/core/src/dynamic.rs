//! Allocators that rebuild the offered parts between arrivals: the
//! positive-values allocator, the bounded-share allocator with its temporary
//! re-bundled menus, the stage function and the fair arrival order.

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::arrival::{Annotation, Branch, MenuEntry, Session, TiePolicy, Transcript};
use crate::error::{Error, Result};
use crate::model::{ceil_log2, check_permutation, Instance, Rational, Row};
use crate::roundrobin::{modified_round_robin, round_robin_ranked, PickMatrix};

/// Stage in which the agent at 1-based position `i` of `n` picks.
pub fn stage_of(i: usize, n: usize) -> Result<usize> {
    if i == 0 || i > n {
        return Err(Error::AgentOutOfRange { index: i, n });
    }
    let (mut i, mut n, mut g) = (i, n, 1);
    while i > n / 2 && n > 1 {
        i -= n / 2;
        n -= n / 2;
        g += 1;
    }
    Ok(g)
}

/// Which Round-Robin builds the parts at every stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RrVariant {
    #[default]
    Plain,
    Modified,
}

/// The parts built at the start of one stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: usize,
    /// Arrival positions taking part, in picking order. Column `c` of the
    /// matrix is the designated part of `positions[c]`.
    pub positions: Vec<usize>,
    pub matrix: PickMatrix,
    /// Items taken out of each column during the stage.
    pub removed: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DynamicRun {
    pub transcript: Transcript,
    pub stages: Vec<StageLog>,
    pub order: Vec<usize>,
}

impl DynamicRun {
    /// Stage number of each arrival position, as executed.
    pub fn stage_by_position(&self) -> Vec<usize> {
        self.transcript.records.iter().map(|r| r.note.stage.unwrap_or(0)).collect()
    }
}

fn rows_for<'a>(inst: &'a Instance, order: &[usize], positions: &[usize]) -> Vec<&'a Row> {
    positions.iter().map(|&p| inst.row(order[p])).collect()
}

fn open_entries(positions: &[usize], parts: &[Vec<usize>], taken: &[bool]) -> Vec<MenuEntry> {
    (0..parts.len())
        .filter(|&c| !taken[c])
        .map(|c| {
            let mut items = parts[c].clone();
            items.sort_unstable();
            MenuEntry::new(positions[c], items)
        })
        .collect()
}

fn column_of(positions: &[usize], part: usize) -> usize {
    positions.iter().position(|&p| p == part).expect("chosen part belongs to this stage")
}

fn pool(parts: &[Vec<usize>], taken: &[bool]) -> Vec<usize> {
    let mut items: Vec<usize> = (0..parts.len()).filter(|&c| !taken[c]).flat_map(|c| parts[c].clone()).collect();
    items.sort_unstable();
    items
}

/// Allocator for instances whose values are all strictly positive. Each agent
/// at position `i` receives at least `PROP - ceil(log n)`.
pub fn all_pos_val(inst: &Instance, order: &[usize], policy: TiePolicy) -> Result<DynamicRun> {
    check_permutation(order, inst.n())?;
    if !inst.all_strictly_positive() {
        return Err(Error::Precondition("every value must be strictly positive".into()));
    }
    let mut session = Session::new(inst, policy);
    let mut stages = Vec::new();
    let mut items = inst.items();
    let mut positions: Vec<usize> = (0..inst.n()).collect();
    let mut stage = 1;
    loop {
        let k = positions.len();
        if k == 1 {
            let note = Annotation {
                designated: Some(positions[0]),
                stage: Some(stage),
                branch: Some(Branch::Sole),
                precondition: Some(true),
                ..Annotation::default()
            };
            session.present(order[positions[0]], vec![MenuEntry::new(positions[0], items)], note)?;
            break;
        }
        let rows = rows_for(inst, order, &positions);
        let matrix = round_robin_ranked(&items, &rows, None);
        let mut parts = matrix.columns().to_vec();
        let mut taken = vec![false; k];
        let mut removed = vec![0; k];
        let (mid, offset) = (k / 2, k.div_ceil(2));
        let mut arrive = |i: usize, branch: Branch, parts: &[Vec<usize>], taken: &mut [bool]| -> Result<()> {
            let note = Annotation {
                designated: Some(positions[i]),
                stage: Some(stage),
                branch: Some(branch),
                precondition: Some(true),
                ..Annotation::default()
            };
            let chosen = session.present(order[positions[i]], open_entries(&positions, parts, taken), note)?;
            taken[column_of(&positions, chosen)] = true;
            Ok(())
        };
        for i in 0..mid {
            let don = i + offset;
            let donor_row = rows[don];
            let branch = match donor_row.top_item(&parts[don]) {
                Some(g) if !taken[don] && !taken[i] => {
                    parts[don].retain(|&x| x != g);
                    parts[i].push(g);
                    removed[don] += 1;
                    Branch::Transfer
                }
                _ => Branch::NoDonor,
            };
            arrive(i, branch, &parts, &mut taken)?;
        }
        if k % 2 == 1 {
            arrive(mid, Branch::Middle, &parts, &mut taken)?;
        }
        items = pool(&parts, &taken);
        stages.push(StageLog { stage, positions: positions.clone(), matrix, removed });
        positions = positions[offset..].to_vec();
        stage += 1;
    }
    let mut transcript = session.finish("allpos", Vec::new());
    transcript.notes.push(format!("stages: {}", stage));
    Ok(DynamicRun { transcript, stages, order: order.to_vec() })
}

/// `PROP >= 2 (ceil(log i) + 1)` for 1-based position `i`.
pub fn meets_share_threshold(prop: &Rational, i: usize) -> bool {
    *prop >= Rational::from_integer(BigInt::from(2 * (ceil_log2(i as u64) + 1)))
}

/// Working state of one stage of the bounded-share allocator: the grid of
/// Round-Robin picks with taken cells cleared, plus items added to each column.
#[derive(Clone)]
struct Grid {
    cells: Vec<Vec<Option<usize>>>,
    extra: Vec<Vec<usize>>,
}

impl Grid {
    fn part(&self, c: usize) -> Vec<usize> {
        let mut items: Vec<usize> = self.cells[c].iter().flatten().copied().chain(self.extra[c].iter().copied()).collect();
        items.sort_unstable();
        items
    }

    fn parts(&self) -> Vec<Vec<usize>> {
        (0..self.cells.len()).map(|c| self.part(c)).collect()
    }

    fn top_cell(&self, c: usize) -> Option<usize> {
        self.cells[c].first().copied().flatten()
    }

    fn set_top(&mut self, c: usize, g: Option<usize>) {
        match self.cells[c].first_mut() {
            Some(cell) => *cell = g,
            None => {
                if let Some(g) = g {
                    self.cells[c].push(Some(g));
                }
            }
        }
    }
}

/// Runs the bounded-share stages for agents at `positions` (global arrival
/// positions, in order) over `items`. Appends stage logs and returns the
/// items nobody took.
pub(crate) fn bounded_prop_stages(
    session: &mut Session,
    order: &[usize],
    mut items: Vec<usize>,
    mut positions: Vec<usize>,
    variant: RrVariant,
    precondition: &dyn Fn(usize) -> bool,
    stages: &mut Vec<StageLog>,
) -> Result<Vec<usize>> {
    let inst = session.instance();
    let mut stage = 1;
    loop {
        let k = positions.len();
        if k == 0 {
            return Ok(items);
        }
        let note = |p: usize, branch: Branch, stage: usize| Annotation {
            designated: Some(p),
            stage: Some(stage),
            branch: Some(branch),
            precondition: Some(precondition(p)),
            ..Annotation::default()
        };
        if k == 1 {
            let p = positions[0];
            session.present(order[p], vec![MenuEntry::new(p, items)], note(p, Branch::Sole, stage))?;
            return Ok(Vec::new());
        }
        let rows = rows_for(inst, order, &positions);
        let (matrix, dumped) = match variant {
            RrVariant::Plain => (round_robin_ranked(&items, &rows, None), Vec::new()),
            RrVariant::Modified => {
                let out = modified_round_robin(&items, &rows);
                (out.matrix, out.leftovers)
            }
        };
        let mut grid = Grid {
            cells: matrix.columns().iter().map(|c| c.iter().map(|&g| Some(g)).collect()).collect(),
            extra: vec![Vec::new(); k],
        };
        grid.extra[0] = dumped;
        let mut taken = vec![false; k];
        let mut removed = vec![0; k];
        let mid = k / 2;
        for i in 0..mid {
            let agent = order[positions[i]];
            let row = inst.row(agent);
            let mut shown = None;
            let branch = if taken[i] {
                Branch::NoDonor
            } else if i + 1 == mid {
                for (cells, count) in grid.cells[mid..].iter_mut().zip(&mut removed[mid..]) {
                    for r in 0..2 {
                        if let Some(g) = cells.get_mut(r).and_then(Option::take) {
                            grid.extra[i].push(g);
                            *count += 1;
                        }
                    }
                }
                Branch::Fold
            } else {
                let donor = (mid..k)
                    .flat_map(|c| (0..2).map(move |r| (c, r)))
                    .find(|&(c, r)| matches!(grid.cells[c].get(r), Some(Some(g)) if row.is_positive(*g)));
                match donor {
                    Some((c, r)) => {
                        let g = grid.cells[c][r].take().expect("donor cell holds an item");
                        grid.extra[i].push(g);
                        removed[c] += 1;
                        Branch::Transfer
                    }
                    None => {
                        let mut temp = grid.clone();
                        for step in 1..mid - i {
                            let (near, far) = (i + step, mid + step - 1);
                            let x = temp.top_cell(near);
                            if x.is_none() || taken[near] || taken[far] {
                                continue;
                            }
                            let y = temp.top_cell(far);
                            temp.set_top(near, y);
                            temp.set_top(far, x);
                        }
                        shown = Some(temp);
                        Branch::Rebundle
                    }
                }
            };
            let view = shown.as_ref().unwrap_or(&grid);
            let menu = open_entries(&positions, &view.parts(), &taken);
            let chosen = session.present(agent, menu, note(positions[i], branch, stage))?;
            let col = column_of(&positions, chosen);
            if col != i {
                if let Some(temp) = shown {
                    // The agent left with a re-bundled part, so the temporary menu stands.
                    grid = temp;
                }
            }
            taken[col] = true;
            // The column has left with its agent, so later folds and donor
            // searches must not reach into it.
            grid.cells[col].clear();
            grid.extra[col].clear();
        }
        items = pool(&grid.parts(), &taken);
        stages.push(StageLog { stage, positions: positions.clone(), matrix, removed });
        positions = positions[mid..].to_vec();
        stage += 1;
    }
}

/// Allocator for agents with large enough proportional shares. The agent at
/// position `i` with `PROP >= 2 (ceil(log i) + 1)` receives at least
/// `PROP - 2 ceil(log i) - 1`; agents below the threshold are flagged.
pub fn bounded_prop(inst: &Instance, order: &[usize], policy: TiePolicy, variant: RrVariant) -> Result<DynamicRun> {
    check_permutation(order, inst.n())?;
    let shares = inst.prop_shares();
    let precondition = |p: usize| meets_share_threshold(&shares[order[p]], p + 1);
    let mut session = Session::new(inst, policy);
    let mut stages = Vec::new();
    let leftover = bounded_prop_stages(
        &mut session,
        order,
        inst.items(),
        (0..inst.n()).collect(),
        variant,
        &precondition,
        &mut stages,
    )?;
    let name = match variant {
        RrVariant::Plain => "boundedprop",
        RrVariant::Modified => "boundedprop-modified",
    };
    let mut transcript = session.finish(name, leftover);
    if let Some(p) = (0..inst.n()).find(|&p| !precondition(p)) {
        transcript
            .notes
            .push(format!("share threshold first violated at position {}; later guarantees are void", p + 1));
    }
    Ok(DynamicRun { transcript, stages, order: order.to_vec() })
}

/// Checks that every designated part, at the stage its owner picks, equals its
/// first-stage column minus the top `per_stage * (stage - 1)` items.
pub fn stage_accounting(run: &DynamicRun, per_stage: usize) -> Vec<String> {
    let mut issues = Vec::new();
    let Some(first) = run.stages.first() else {
        return issues;
    };
    for log in &run.stages[1..] {
        for (c, &p) in log.positions.iter().enumerate() {
            let Some(c0) = first.positions.iter().position(|&q| q == p) else {
                issues.push(format!("position {} missing from the first stage", p + 1));
                continue;
            };
            let lost = per_stage * (log.stage - 1);
            let expected: Vec<usize> = first.matrix.column(c0).iter().skip(lost).copied().collect();
            if log.matrix.column(c).to_vec() != expected {
                issues.push(format!(
                    "position {}: stage {} column is not the first-stage column minus {lost} items",
                    p + 1,
                    log.stage
                ));
            }
        }
    }
    issues
}

/// Arrival order built greedily from the candidate sets
/// `C_i = {a : PROP_a >= 2 (ceil(log i) + 1)}`; `split` is the length of the
/// prefix drawn from non-empty candidate sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FairOrder {
    pub order: Vec<usize>,
    pub split: usize,
}

/// Within each candidate set the agent with the largest share goes first
/// (ties: lowest id); the remaining agents follow by decreasing share.
pub fn fair_arrival_order(inst: &Instance) -> FairOrder {
    let shares = inst.prop_shares();
    let mut by_share: Vec<usize> = (0..inst.n()).collect();
    by_share.sort_by(|&a, &b| shares[b].cmp(&shares[a]).then(a.cmp(&b)));
    let mut order = Vec::with_capacity(inst.n());
    let mut split = inst.n();
    for (idx, &a) in by_share.iter().enumerate() {
        if split == inst.n() && !meets_share_threshold(&shares[a], idx + 1) {
            split = idx;
        }
        order.push(a);
    }
    FairOrder { order, split }
}

/// Runs the bounded-share allocator under the fair arrival order.
pub fn run_fair_order(inst: &Instance, policy: TiePolicy) -> Result<(FairOrder, DynamicRun)> {
    let fair = fair_arrival_order(inst);
    let mut run = bounded_prop(inst, &fair.order, policy, RrVariant::Plain)?;
    run.transcript.algorithm = "fair-order".into();
    run.transcript.notes.push(format!("candidate prefix length {}", fair.split));
    Ok((fair, run))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrival::check_transcript;
    use crate::model::{frac, int};

    #[test]
    fn stage_examples() {
        assert_eq!(stage_of(4, 8).unwrap(), 1);
        assert_eq!(stage_of(5, 8).unwrap(), 2);
        assert_eq!(stage_of(8, 8).unwrap(), 4);
        assert_eq!(stage_of(1, 1).unwrap(), 1);
        assert!(stage_of(0, 3).is_err());
        assert!(stage_of(4, 3).is_err());
    }

    #[test]
    fn stage_recursion_matches_definition() {
        fn g(i: usize, n: usize) -> usize {
            if n == 1 || i <= n / 2 {
                1
            } else {
                1 + g(i - n / 2, n - n / 2)
            }
        }
        for n in 2..200 {
            for i in 1..=n {
                assert_eq!(stage_of(i, n).unwrap(), g(i, n), "i={i} n={n}");
            }
        }
    }

    #[test]
    fn two_agents_positive() {
        let inst = Instance::from_tokens(&[&["0.9", "0.8", "0.7", "0.6"], &["0.9", "0.8", "0.7", "0.6"]]).unwrap();
        let run = all_pos_val(&inst, &[0, 1], TiePolicy::HighestPartIndex).unwrap();
        let t = &run.transcript;
        assert_eq!(t.records[0].items, vec![0, 1, 2]);
        assert_eq!(t.records[0].value, frac(12, 5));
        assert_eq!(t.records[1].items, vec![3]);
        assert_eq!(t.records[1].value, frac(3, 5));
        assert!(check_transcript(&inst, t).is_empty());
    }

    #[test]
    fn single_agent_gets_everything() {
        let inst = Instance::from_tokens(&[&["1/2", "1/3"]]).unwrap();
        let run = all_pos_val(&inst, &[0], TiePolicy::default()).unwrap();
        assert_eq!(run.transcript.records[0].items, vec![0, 1]);
        let run = bounded_prop(&inst, &[0], TiePolicy::default(), RrVariant::Plain).unwrap();
        assert_eq!(run.transcript.records[0].value, frac(5, 6));
    }

    #[test]
    fn zero_entry_is_rejected() {
        let inst = Instance::from_tokens(&[&["1", "0"], &["1", "1"]]).unwrap();
        assert!(matches!(all_pos_val(&inst, &[0, 1], TiePolicy::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn fair_order_examples() {
        // PROPs 5 and 1 with n = 2: ten items, agent 1 values all, agent 2 values two.
        let mut rows = vec![vec![int(1); 10], vec![int(0); 10]];
        rows[1][0] = int(1);
        rows[1][1] = int(1);
        let inst = Instance::new(rows).unwrap();
        assert_eq!(inst.prop_shares(), vec![int(5), int(1)]);
        let f = fair_arrival_order(&inst);
        assert_eq!(f, FairOrder { order: vec![0, 1], split: 1 });

        let zeros = Instance::new(vec![vec![int(0); 3]; 3]).unwrap();
        let f = fair_arrival_order(&zeros);
        assert_eq!(f.split, 0);
        assert_eq!(f.order, vec![0, 1, 2]);
    }

    #[test]
    fn rebundle_branch_keeps_designated_part_unique() {
        // Agent 1 values only its own Round-Robin column; every donor item is
        // worth zero to it, so the temporary menu must be used.
        let n = 6;
        let m = 4 * n;
        let mut rows = vec![vec![int(0); m]; n];
        for g in 0..m {
            rows[0][g] = if g % n == 0 || g % n == 1 { int(1) } else { int(0) };
            for (a, row) in rows.iter_mut().enumerate().skip(1) {
                row[g] = frac((m - g) as i64, m as i64 + a as i64);
            }
        }
        let inst = Instance::new(rows).unwrap();
        let run = bounded_prop(&inst, &(0..n).collect::<Vec<_>>(), TiePolicy::HighestPartIndex, RrVariant::Plain)
            .unwrap();
        let first = &run.transcript.records[0];
        assert_eq!(first.note.branch, Some(Branch::Rebundle));
        assert_eq!(first.took_designated(), Some(true));
        assert!(first.unique_max);
        let issues = check_transcript(&inst, &run.transcript);
        assert!(issues.is_empty(), "{issues:?}");
    }

    #[test]
    fn deviation_does_not_reallocate_taken_column() {
        // Too few items for the threshold. The first agent leaves the
        // rebundled menu for an upper-half part, which the fold must skip.
        let q = |n: i64| frac(n, 16);
        let inst = Instance::new(vec![
            vec![int(0), int(0), int(0)],
            vec![q(2), q(11), q(6)],
            vec![q(1), q(14), q(5)],
            vec![q(4), q(10), q(16)],
            vec![q(11), q(0), q(11)],
        ])
        .unwrap();
        let order: Vec<usize> = (0..5).rev().collect();
        for variant in [RrVariant::Plain, RrVariant::Modified] {
            let run = bounded_prop(&inst, &order, TiePolicy::HighestPartIndex, variant).unwrap();
            let first = &run.transcript.records[0];
            assert_eq!(first.note.branch, Some(Branch::Rebundle));
            assert_ne!(Some(first.chosen), first.note.designated);
            let issues = check_transcript(&inst, &run.transcript);
            assert!(issues.is_empty(), "{variant:?}: {issues:?}");
        }
    }
}
