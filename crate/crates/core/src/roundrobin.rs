//! Round-Robin picking and the modified variant in which agents with nothing
//! of positive value left drop out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Partition, Row};

/// Round-Robin output as a grid: `column(c)[r]` is the `r`-th pick of picker `c`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PickMatrix {
    columns: Vec<Vec<usize>>,
}

impl PickMatrix {
    pub fn from_columns(columns: Vec<Vec<usize>>) -> PickMatrix {
        PickMatrix { columns }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Number of rows that hold at least one item.
    pub fn depth(&self) -> usize {
        self.columns.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<usize> {
        self.columns.get(col).and_then(|c| c.get(row)).copied()
    }

    pub fn column(&self, col: usize) -> &[usize] {
        &self.columns[col]
    }

    pub fn columns(&self) -> &[Vec<usize>] {
        &self.columns
    }

    pub fn to_partition(&self) -> Partition {
        Partition::new(self.columns.clone())
    }

    /// True when the filled cells form a row-major prefix of the grid.
    pub fn is_row_major_prefix(&self) -> bool {
        let depth = self.depth();
        if depth == 0 {
            return true;
        }
        let full = self.columns.iter().take_while(|c| c.len() == depth).count();
        self.columns[full..].iter().all(|c| c.len() + 1 == depth)
    }

    /// CSV view: one line per round, 1-based item ids, blank for empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round");
        for c in 0..self.width() {
            out.push_str(&format!(",picker{}", c + 1));
        }
        out.push('\n');
        for r in 0..self.depth() {
            out.push_str(&(r + 1).to_string());
            for c in 0..self.width() {
                out.push(',');
                if let Some(g) = self.cell(r, c) {
                    out.push_str(&(g + 1).to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Preference list of one picker over `items`: decreasing value, ties by `rank`
/// (item id when no rank is given).
fn preference_list(row: &Row, items: &[usize], rank: Option<&[usize]>) -> Vec<usize> {
    let mut list = items.to_vec();
    match rank {
        None => list.sort_unstable_by(|&a, &b| row.scaled_value(b).cmp(&row.scaled_value(a)).then(a.cmp(&b))),
        Some(rank) => list.sort_unstable_by(|&a, &b| {
            row.scaled_value(b)
                .cmp(&row.scaled_value(a))
                .then(rank[a].cmp(&rank[b]))
        }),
    }
    list
}

/// Pointer walk over a preference list that skips allocated items.
struct Cursor {
    list: Vec<usize>,
    next: usize,
}

impl Cursor {
    fn top(&mut self, taken: &[bool]) -> Option<usize> {
        while self.next < self.list.len() && taken[self.list[self.next]] {
            self.next += 1;
        }
        self.list.get(self.next).copied()
    }
}

fn cursors(items: &[usize], rows: &[&Row], rank: Option<&[usize]>) -> Vec<Cursor> {
    rows.iter()
        .map(|r| Cursor { list: preference_list(r, items, rank), next: 0 })
        .collect()
}

fn taken_mask(items: &[usize]) -> Vec<bool> {
    let size = items.iter().max().map_or(0, |&g| g + 1);
    let mut taken = vec![true; size];
    for &g in items {
        taken[g] = false;
    }
    taken
}

/// Plain Round-Robin over `items` with pickers `rows` in order. Each pick is a
/// most valuable unallocated item, ties to the lowest item id.
pub fn round_robin(items: &[usize], rows: &[&Row]) -> (Partition, PickMatrix) {
    let pm = round_robin_ranked(items, rows, None);
    (pm.to_partition(), pm)
}

/// Round-Robin with item ties broken by `rank[item]` (lower first) instead of item id.
pub fn round_robin_ranked(items: &[usize], rows: &[&Row], rank: Option<&[usize]>) -> PickMatrix {
    assert!(!rows.is_empty() || items.is_empty(), "picking sequence must be non-empty");
    let mut columns = vec![Vec::new(); rows.len()];
    if items.is_empty() {
        return PickMatrix { columns };
    }
    let mut cur = cursors(items, rows, rank);
    let mut taken = taken_mask(items);
    let mut p = 0;
    for _ in 0..items.len() {
        let g = cur[p].top(&taken).expect("an item remains");
        taken[g] = true;
        columns[p].push(g);
        p = (p + 1) % rows.len();
    }
    PickMatrix { columns }
}

/// One picker leaving the modified Round-Robin.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropout {
    pub picker: usize,
    /// Items the picker had collected when dropping out.
    pub picks: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModifiedOutcome {
    pub partition: Partition,
    pub matrix: PickMatrix,
    pub dropouts: Vec<Dropout>,
    /// Items nobody active valued, appended to the first part.
    pub leftovers: Vec<usize>,
}

/// Round-Robin in which a picker whose best remaining item is worth zero
/// leaves for good; leftovers go to the first part.
pub fn modified_round_robin(items: &[usize], rows: &[&Row]) -> ModifiedOutcome {
    assert!(!rows.is_empty(), "picking sequence must be non-empty");
    let mut columns = vec![Vec::new(); rows.len()];
    let mut cur = cursors(items, rows, None);
    let mut taken = taken_mask(items);
    let mut active: Vec<usize> = (0..rows.len()).collect();
    let mut dropouts = Vec::new();
    let mut remaining = items.len();
    let mut ptr = 0;
    while remaining > 0 && !active.is_empty() {
        let p = active[ptr];
        let g = cur[p].top(&taken).expect("an item remains");
        if rows[p].is_positive(g) {
            taken[g] = true;
            remaining -= 1;
            columns[p].push(g);
            ptr = (ptr + 1) % active.len();
        } else {
            active.remove(ptr);
            dropouts.push(Dropout { picker: p, picks: columns[p].len() });
            if ptr >= active.len() {
                ptr = 0;
            }
        }
    }
    let mut leftovers: Vec<usize> = items.iter().copied().filter(|&g| !taken[g]).collect();
    leftovers.sort_unstable();
    let matrix = PickMatrix { columns };
    let mut parts = matrix.columns.clone();
    parts[0].extend(leftovers.iter().copied());
    ModifiedOutcome { partition: Partition::new(parts), matrix, dropouts, leftovers }
}

/// Removes the first `drop_rows` rows and keeps columns `keep_from..`.
pub fn restrict(pm: &PickMatrix, drop_rows: usize, keep_from: usize) -> Result<PickMatrix> {
    if keep_from > pm.width() {
        return Err(Error::InvalidArgument(format!(
            "column suffix starts at {} but the matrix has {} columns",
            keep_from + 1,
            pm.width()
        )));
    }
    let kept = &pm.columns[keep_from..];
    let depth = kept.iter().map(Vec::len).max().unwrap_or(0);
    if drop_rows > depth {
        return Err(Error::InvalidArgument(format!(
            "cannot drop {drop_rows} rows from columns holding at most {depth}"
        )));
    }
    Ok(PickMatrix {
        columns: kept.iter().map(|c| c.iter().skip(drop_rows).copied().collect()).collect(),
    })
}

/// Checks that the restricted matrix equals a fresh Round-Robin of the
/// surviving items with the surviving pickers in the same order.
pub fn restriction_holds(rows: &[&Row], pm: &PickMatrix, drop_rows: usize, keep_from: usize) -> Result<bool> {
    let view = restrict(pm, drop_rows, keep_from)?;
    let survivors: Vec<usize> = view.columns.iter().flatten().copied().collect();
    if keep_from == pm.width() {
        return Ok(survivors.is_empty());
    }
    let fresh = round_robin_ranked(&survivors, &rows[keep_from..], None);
    Ok(fresh == view)
}

/// Rows of `agents` in order, borrowed from `inst`.
pub fn rows_of<'a>(inst: &'a Instance, agents: &[usize]) -> Vec<&'a Row> {
    agents.iter().map(|&a| inst.row(a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{frac, Instance};

    fn inst(rows: &[&[&str]]) -> Instance {
        Instance::from_tokens(rows).unwrap()
    }

    #[test]
    fn two_identical_agents() {
        let i = inst(&[&["1", "3/4", "1/2", "1/4"], &["1", "3/4", "1/2", "1/4"]]);
        let (p, pm) = round_robin(&i.items(), &rows_of(&i, &[0, 1]));
        assert_eq!(p.parts, vec![vec![0, 2], vec![1, 3]]);
        assert_eq!(pm.cell(1, 0), Some(2));
        assert!(pm.is_row_major_prefix());
    }

    #[test]
    fn ties_go_to_lowest_item() {
        let i = inst(&[&["1/2", "1/2", "1/2"]]);
        let (_, pm) = round_robin(&[2, 0, 1], &rows_of(&i, &[0]));
        assert_eq!(pm.column(0), &[0, 1, 2]);
        let ranked = round_robin_ranked(&[0, 1, 2], &rows_of(&i, &[0]), Some(&[2, 1, 0]));
        assert_eq!(ranked.column(0), &[2, 1, 0]);
    }

    #[test]
    fn modified_drops_and_keeps_order() {
        let i = inst(&[&["1", "1", "0"], &["0", "0", "1"]]);
        let out = modified_round_robin(&i.items(), &rows_of(&i, &[0, 1]));
        assert_eq!(out.partition.parts, vec![vec![0, 1], vec![2]]);
        assert!(out.leftovers.is_empty());
        assert_eq!(out.dropouts.len(), 0);
    }

    #[test]
    fn modified_all_zero_dumps_everything() {
        let i = inst(&[&["0", "0"], &["0", "0"]]);
        let out = modified_round_robin(&i.items(), &rows_of(&i, &[0, 1]));
        assert_eq!(out.partition.parts, vec![vec![0, 1], vec![]]);
        assert_eq!(out.dropouts.iter().map(|d| d.picker).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(out.leftovers, vec![0, 1]);
    }

    #[test]
    fn modified_pointer_wraps_after_last_dropout() {
        // picker 2 (last) drops first; pointer wraps to picker 1
        let i = inst(&[&["1", "1", "1/2"], &["0", "0", "0"]]);
        let out = modified_round_robin(&i.items(), &rows_of(&i, &[0, 1]));
        assert_eq!(out.partition.parts, vec![vec![0, 1, 2], vec![]]);
        assert_eq!(out.dropouts, vec![Dropout { picker: 1, picks: 0 }]);
    }

    #[test]
    fn restrict_edge_cases() {
        let i = inst(&[&["1", "1/2", "1/3", "1/4", "1/5"], &["1/5", "1/4", "1/3", "1/2", "1"]]);
        let rows = rows_of(&i, &[0, 1]);
        let (_, pm) = round_robin(&i.items(), &rows);
        assert_eq!(restrict(&pm, 0, 0).unwrap(), pm);
        let emptied = restrict(&pm, pm.depth(), 0).unwrap();
        assert!(emptied.columns().iter().all(Vec::is_empty));
        assert!(restrict(&pm, 0, 3).is_err());
        assert!(restrict(&pm, 4, 0).is_err());
        assert!(restriction_holds(&rows, &pm, 1, 1).unwrap());
    }

    #[test]
    fn csv_lists_rounds() {
        let i = inst(&[&["1", "1/2", "1/3"], &["1", "1/2", "1/3"]]);
        let (_, pm) = round_robin(&i.items(), &rows_of(&i, &[0, 1]));
        assert_eq!(pm.to_csv(), "round,picker1,picker2\n1,1,2\n2,3,\n");
        assert_eq!(i.part_value(0, pm.column(0)).unwrap(), frac(4, 3));
    }
}
