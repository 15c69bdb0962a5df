//! The Hadamard instance family on which every `n`-partition leaves some
//! agent `sqrt(n/32)` below its proportional share, the norm identities used
//! to show it, witness search over partitions, and exact discrepancy for tiny
//! matrices.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{frac, int, Instance, Rational};

/// Sylvester construction `H_2s = [[H, H], [H, -H]]`.
pub fn sylvester_hadamard(order: usize) -> Result<Vec<Vec<i8>>> {
    if order == 0 || !order.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("Hadamard order {order} is not a power of two")));
    }
    let mut h = vec![vec![1i8]];
    while h.len() < order {
        let s = h.len();
        let mut next = vec![vec![0i8; 2 * s]; 2 * s];
        for r in 0..s {
            for c in 0..s {
                next[r][c] = h[r][c];
                next[r][c + s] = h[r][c];
                next[r + s][c] = h[r][c];
                next[r + s][c + s] = -h[r][c];
            }
        }
        h = next;
    }
    Ok(h)
}

/// Every pair of distinct columns has dot product zero.
pub fn columns_orthogonal(h: &[Vec<i8>]) -> bool {
    let s = h.len();
    (0..s).all(|a| (a + 1..s).all(|b| (0..s).map(|r| i32::from(h[r][a]) * i32::from(h[r][b])).sum::<i32>() == 0))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HadamardInstance {
    pub n: usize,
    /// Number of horizontal copies, `n / 4`.
    pub t: usize,
    pub h: Vec<Vec<i8>>,
    pub a: Vec<Vec<u8>>,
    pub a_opp: Vec<Vec<u8>>,
    /// `[[A, A], [A_opp, A_opp]]`, an `n x n` matrix.
    pub tilde: Vec<Vec<u8>>,
    /// `t` copies of `tilde` side by side; row `r` is agent `r`'s valuation.
    pub b: Vec<Vec<u8>>,
    pub instance: Instance,
}

impl HadamardInstance {
    /// Agent whose row complements row `r`.
    pub fn opposite(&self, r: usize) -> usize {
        (r + self.n / 2) % self.n
    }
}

pub fn build_lowerbound_instance(n: usize) -> Result<HadamardInstance> {
    if n < 4 || !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("n = {n} must be a power of two and at least 4")));
    }
    let half = n / 2;
    let h = sylvester_hadamard(half)?;
    let a: Vec<Vec<u8>> = h.iter().map(|row| row.iter().map(|&x| u8::from(x == 1)).collect()).collect();
    let a_opp: Vec<Vec<u8>> = a.iter().map(|row| row.iter().map(|&x| 1 - x).collect()).collect();
    let tilde: Vec<Vec<u8>> = a
        .iter()
        .chain(&a_opp)
        .map(|row| row.iter().chain(row).copied().collect())
        .collect();
    let t = n / 4;
    let b: Vec<Vec<u8>> = tilde.iter().map(|row| row.repeat(t)).collect();
    let values = b.iter().map(|row| row.iter().map(|&x| int(i64::from(x))).collect()).collect();
    let instance = Instance::new(values)?;
    Ok(HadamardInstance { n, t, h, a, a_opp, tilde, b, instance })
}

/// Both sides of `|A y|^2 = (n/4)(sum y)^2 + (n/4) sum_{i <= n/2} (y_i + y_{i+n/2})^2`.
pub fn l2_identity_gap(tilde: &[Vec<u8>], y: &[Rational]) -> Result<(Rational, Rational)> {
    let n = tilde.len();
    if y.len() != n || tilde.iter().any(|row| row.len() != n) {
        return Err(Error::LengthMismatch { expected: n, got: y.len() });
    }
    let lhs = tilde
        .iter()
        .map(|row| {
            let dot: Rational = row.iter().zip(y).filter(|(&b, _)| b == 1).map(|(_, v)| v.clone()).sum();
            &dot * &dot
        })
        .sum();
    let quarter = frac(n as i64, 4);
    let total: Rational = y.iter().sum();
    let pairs: Rational = (0..n / 2)
        .map(|i| {
            let s = &y[i] + &y[i + n / 2];
            &s * &s
        })
        .sum();
    let rhs = &quarter * (&total * &total) + &quarter * pairs;
    Ok((lhs, rhs))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deviation {
    /// `B (1/n - x)` entry by entry: each agent's share minus its value for `x`.
    #[serde(with = "crate::model::rational::serde_string::vec")]
    pub entries: Vec<Rational>,
    #[serde(with = "crate::model::rational::serde_string")]
    pub inf: Rational,
    #[serde(with = "crate::model::rational::serde_string")]
    pub l2_squared: Rational,
    /// `inf^2 >= n/32`.
    pub meets_bound: bool,
    /// `inf^2 >= l2^2 / n`.
    pub norm_relation: bool,
}

pub fn inf_norm_deviation(b: &[Vec<u8>], x: &[u8]) -> Result<Deviation> {
    let n = b.len();
    let width = b.first().map_or(0, Vec::len);
    if x.len() != width {
        return Err(Error::LengthMismatch { expected: width, got: x.len() });
    }
    if x.iter().any(|&v| v > 1) {
        return Err(Error::InvalidArgument("x must be a 0/1 vector".into()));
    }
    let entries: Vec<Rational> = b
        .iter()
        .map(|row| {
            let sum = row.iter().map(|&v| i64::from(v)).sum::<i64>();
            let hit = row.iter().zip(x).map(|(&v, &s)| i64::from(v & s)).sum::<i64>();
            frac(sum, n as i64) - int(hit)
        })
        .collect();
    let inf = entries.iter().map(Signed::abs).max().unwrap_or_else(Rational::zero);
    let l2_squared: Rational = entries.iter().map(|e| e * e).sum();
    let meets_bound = &inf * &inf >= frac(n as i64, 32);
    let norm_relation = &inf * &inf * int(n as i64) >= l2_squared;
    Ok(Deviation { entries, inf, l2_squared, meets_bound, norm_relation })
}

/// `z_i = sum_j x_{i + n j}`.
pub fn fold(x: &[u8], n: usize) -> Vec<u64> {
    let mut z = vec![0u64; n];
    for (i, &v) in x.iter().enumerate() {
        z[i % n] += u64::from(v);
    }
    z
}

/// `B (p 1 - x) = A~ (p t 1 - z)` with `p = 1/n`.
pub fn folding_holds(h: &HadamardInstance, x: &[u8]) -> Result<bool> {
    let direct = inf_norm_deviation(&h.b, x)?.entries;
    let z = fold(x, h.n);
    let pt = frac(h.t as i64, h.n as i64);
    let folded: Vec<Rational> = h
        .tilde
        .iter()
        .map(|row| {
            row.iter()
                .zip(&z)
                .filter(|(&a, _)| a == 1)
                .map(|(_, &zi)| &pt - int(zi as i64))
                .sum()
        })
        .collect();
    Ok(direct == folded)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WitnessMode {
    Exhaustive,
    Sampled { count: u64, seed: u64 },
}

/// How the argument via the smallest part found its witness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessCase {
    /// The agent deviating most on the smallest part is itself below its share.
    Direct,
    /// That agent is above its share; its complementary agent is below.
    Opposite,
    /// The argument did not produce a witness.
    Failed,
}

/// Result for one partition. Deficits are scaled by `n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionOutcome {
    pub index: u64,
    pub assignment: Vec<usize>,
    /// Largest `n (PROP_a - v_a(P_j))` over agents and parts.
    pub worst_scaled: i64,
    pub worst_agent: usize,
    pub worst_part: usize,
    pub case: WitnessCase,
    pub smallest_part_size: usize,
}

impl PartitionOutcome {
    pub fn worst_deficit(&self, n: usize) -> Rational {
        frac(self.worst_scaled, n as i64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub n: usize,
    pub mode: WitnessMode,
    pub checked: u64,
    /// Partitions with some agent at least `sqrt(n/32)` below its share.
    pub with_witness: u64,
    pub direct_case: u64,
    pub opposite_case: u64,
    pub failed_case: u64,
    /// No witness ever came from the agent that values nothing.
    pub zero_agent_never_witness: bool,
    /// The smallest part never held more than `m/n` items.
    pub pigeonhole_ok: bool,
    #[serde(with = "crate::model::rational::serde_string")]
    pub min_worst_deficit: Rational,
    pub verdict: String,
    pub outcomes: Vec<PartitionOutcome>,
}

impl WitnessReport {
    pub fn pass(&self) -> bool {
        self.with_witness == self.checked && self.failed_case == 0
    }

    /// One line per partition: index, worst agent, worst part, deficit.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("partition,agent,part,deficit,case\n");
        for o in &self.outcomes {
            let case = match o.case {
                WitnessCase::Direct => "direct",
                WitnessCase::Opposite => "opposite",
                WitnessCase::Failed => "failed",
            };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                o.index + 1,
                o.worst_agent + 1,
                o.worst_part + 1,
                crate::model::format_rational(&o.worst_deficit(self.n)),
                case
            ));
        }
        out
    }
}

/// `32 d^2 >= n^3` for a deficit `d` scaled by `n`.
fn deep_enough(scaled: i64, n: usize) -> bool {
    scaled >= 0 && 32 * (scaled as i128) * (scaled as i128) >= (n as i128).pow(3)
}

fn evaluate(h: &HadamardInstance, index: u64, assignment: Vec<usize>, row_sums: &[i64]) -> PartitionOutcome {
    let n = h.n;
    let mut counts = vec![vec![0i64; n]; n];
    let mut sizes = vec![0usize; n];
    for (g, &part) in assignment.iter().enumerate() {
        sizes[part] += 1;
        for (row, b) in counts.iter_mut().zip(&h.b) {
            row[part] += i64::from(b[g]);
        }
    }
    // Scaled deviation n (PROP_a - v_a(P_j)) = rowsum_a - n v_a(P_j).
    let dev = |a: usize, j: usize| row_sums[a] - n as i64 * counts[a][j];
    let (mut worst_scaled, mut worst_agent, mut worst_part) = (i64::MIN, 0, 0);
    for a in 0..n {
        for j in 0..n {
            let d = dev(a, j);
            if d > worst_scaled {
                (worst_scaled, worst_agent, worst_part) = (d, a, j);
            }
        }
    }
    let small = (0..n).min_by_key(|&j| (sizes[j], j)).expect("n >= 4");
    let lead = (0..n).max_by_key(|&a| (dev(a, small).abs(), std::cmp::Reverse(a))).expect("n >= 4");
    let case = if deep_enough(dev(lead, small), n) {
        WitnessCase::Direct
    } else if deep_enough(dev(h.opposite(lead), small), n) {
        WitnessCase::Opposite
    } else {
        WitnessCase::Failed
    };
    PartitionOutcome { index, assignment, worst_scaled, worst_agent, worst_part, case, smallest_part_size: sizes[small] }
}

/// Searches every (or a sample of) assignment of items to `n` ordered parts
/// for an agent and a part with `PROP_a - v_a(P_j) >= sqrt(n/32)`.
pub fn witness_check(h: &HadamardInstance, mode: WitnessMode) -> Result<WitnessReport> {
    let n = h.n;
    let m = h.instance.m();
    let row_sums: Vec<i64> = h.b.iter().map(|r| r.iter().map(|&v| i64::from(v)).sum()).collect();
    let outcomes: Vec<PartitionOutcome> = match mode {
        WitnessMode::Exhaustive => {
            if n != 4 {
                return Err(Error::InvalidArgument(format!("exhaustive search is limited to n = 4, got {n}")));
            }
            let total = (n as u64).pow(m as u32);
            (0..total)
                .into_par_iter()
                .map(|idx| {
                    let mut rest = idx;
                    let assignment = (0..m)
                        .map(|_| {
                            let p = (rest % n as u64) as usize;
                            rest /= n as u64;
                            p
                        })
                        .collect();
                    evaluate(h, idx, assignment, &row_sums)
                })
                .collect()
        }
        WitnessMode::Sampled { count, seed } => (0..count)
            .into_par_iter()
            .map(|idx| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(idx);
                let assignment = (0..m).map(|_| rng.gen_range(0..n)).collect();
                evaluate(h, idx, assignment, &row_sums)
            })
            .collect(),
    };
    let zero_agent = (0..n).find(|&a| row_sums[a] == 0);
    let checked = outcomes.len() as u64;
    let with_witness = outcomes.iter().filter(|o| deep_enough(o.worst_scaled, n)).count() as u64;
    let count_case = |c: WitnessCase| outcomes.iter().filter(|o| o.case == c).count() as u64;
    let min_worst = outcomes.iter().map(|o| o.worst_scaled).min().unwrap_or(0);
    let report = WitnessReport {
        n,
        mode,
        checked,
        with_witness,
        direct_case: count_case(WitnessCase::Direct),
        opposite_case: count_case(WitnessCase::Opposite),
        failed_case: count_case(WitnessCase::Failed),
        zero_agent_never_witness: zero_agent.is_none_or(|z| outcomes.iter().all(|o| o.worst_agent != z)),
        pigeonhole_ok: outcomes.iter().all(|o| o.smallest_part_size * n <= m),
        min_worst_deficit: frac(min_worst, n as i64),
        verdict: String::new(),
        outcomes,
    };
    let verdict = match (mode, report.with_witness == checked) {
        (WitnessMode::Exhaustive, true) => format!("every one of {checked} partitions has a witness"),
        (WitnessMode::Sampled { .. }, true) => format!("no counterexample found in {checked} samples"),
        (_, false) => format!("{} of {checked} partitions lack a witness", checked - report.with_witness),
    };
    Ok(WitnessReport { verdict, ..report })
}

/// Smallest, over all colourings of the columns with `k` colours, of the
/// largest `|A (1/k - 1_c)|` entry over colours `c`.
pub fn exact_discrepancy(matrix: &[Vec<Rational>], k: usize, max_m: usize) -> Result<Rational> {
    let m = matrix.first().map_or(0, Vec::len);
    if matrix.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidInstance("rows differ in length".into()));
    }
    if m > max_m.min(12) {
        return Err(Error::InvalidArgument(format!("{m} columns is too many to enumerate (limit {})", max_m.min(12))));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one colour".into()));
    }
    if m == 0 || matrix.is_empty() {
        return Ok(Rational::zero());
    }
    let lcm = matrix
        .iter()
        .flatten()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
    let scaled: Vec<Vec<i128>> = matrix
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| {
                    let s = v.numer() * (&lcm / v.denom());
                    i128::try_from(s).map_err(|_| Error::InvalidArgument("entries too large".into()))
                })
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let row_sums: Vec<i128> = scaled.iter().map(|r| r.iter().sum()).collect();
    let total = (k as u64)
        .checked_pow(m as u32)
        .ok_or_else(|| Error::InvalidArgument("too many colourings".into()))?;
    // Scaled by k * lcm: |row_sum - k * (row . 1_c)|.
    let best = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut colour = vec![0usize; m];
            let mut rest = idx;
            for c in colour.iter_mut() {
                *c = (rest % k as u64) as usize;
                rest /= k as u64;
            }
            let mut worst = 0i128;
            for (row, &sum) in scaled.iter().zip(&row_sums) {
                let mut hits = vec![0i128; k];
                for (g, &v) in row.iter().enumerate() {
                    hits[colour[g]] += v;
                }
                for &h in &hits {
                    worst = worst.max((sum - k as i128 * h).abs());
                }
            }
            worst
        })
        .min()
        .expect("at least one colouring");
    Ok(Rational::new(BigInt::from(best), lcm * BigInt::from(k)))
}
