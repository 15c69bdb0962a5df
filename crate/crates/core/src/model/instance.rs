use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::rational::Rational;
use crate::error::{Error, Result};

/// One agent's valuation scaled to a common integer denominator.
///
/// `value(g) = nums[g] / den`. Sums over item sets stay in `u128`, so every
/// comparison between bundles of the same agent is an integer comparison.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    den: u64,
    nums: Vec<u64>,
}

impl Row {
    /// Builds a row from non-negative rationals. Fails if the least common
    /// denominator or any scaled numerator does not fit in 64 bits.
    pub fn from_rationals(values: &[Rational]) -> Result<Row> {
        let too_wide = || Error::InvalidInstance("row denominators exceed 64 bits".into());
        let mut lcm: u64 = 1;
        let mut parts = Vec::with_capacity(values.len());
        for v in values {
            if v.is_negative() {
                return Err(Error::InvalidInstance(format!("negative value {v}")));
            }
            let den = v.denom().to_u64().ok_or_else(too_wide)?;
            if !lcm.is_multiple_of(den) {
                let wide = u128::from(lcm) / u128::from(lcm.gcd(&den)) * u128::from(den);
                lcm = u64::try_from(wide).map_err(|_| too_wide())?;
            }
            let num = v
                .numer()
                .to_u64()
                .ok_or_else(|| Error::InvalidInstance("scaled value exceeds 64 bits".into()))?;
            parts.push((num, den));
        }
        let nums = parts
            .into_iter()
            .map(|(num, den)| {
                u64::try_from(u128::from(num) * u128::from(lcm / den))
                    .map_err(|_| Error::InvalidInstance("scaled value exceeds 64 bits".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Row { den: lcm, nums })
    }

    pub fn from_scaled(den: u64, nums: Vec<u64>) -> Row {
        assert!(den > 0, "denominator must be positive");
        Row { den, nums }
    }

    pub fn len(&self) -> usize {
        self.nums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nums.is_empty()
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn scaled_value(&self, item: usize) -> u64 {
        self.nums[item]
    }

    pub fn is_positive(&self, item: usize) -> bool {
        self.nums[item] > 0
    }

    pub fn scaled_sum<'a, I>(&self, items: I) -> u128
    where
        I: IntoIterator<Item = &'a usize>,
    {
        items.into_iter().map(|&g| u128::from(self.nums[g])).sum()
    }

    pub fn scaled_total(&self) -> u128 {
        self.nums.iter().map(|&x| u128::from(x)).sum()
    }

    pub fn value(&self, item: usize) -> Rational {
        self.to_rational(u128::from(self.nums[item]))
    }

    pub fn sum<'a, I>(&self, items: I) -> Rational
    where
        I: IntoIterator<Item = &'a usize>,
    {
        self.to_rational(self.scaled_sum(items))
    }

    pub fn to_rational(&self, scaled: u128) -> Rational {
        Rational::new(BigInt::from(scaled), BigInt::from(self.den))
    }

    /// Items sorted by decreasing value, ties broken by increasing item id.
    pub fn preference_order(&self, items: &[usize]) -> Vec<usize> {
        let mut sorted = items.to_vec();
        sorted.sort_by(|&a, &b| self.nums[b].cmp(&self.nums[a]).then(a.cmp(&b)));
        sorted
    }

    /// The most preferred item among `items` (ties: lowest id).
    pub fn top_item<'a, I>(&self, items: I) -> Option<usize>
    where
        I: IntoIterator<Item = &'a usize>,
    {
        items
            .into_iter()
            .copied()
            .max_by(|&a, &b| self.nums[a].cmp(&self.nums[b]).then(b.cmp(&a)))
    }

    /// The row multiplied by a positive rational factor.
    pub fn scaled_by(&self, factor: &Rational) -> Result<Row> {
        if !factor.is_positive() {
            return Err(Error::InvalidArgument("scale factor must be positive".into()));
        }
        let values: Vec<Rational> = (0..self.len()).map(|g| self.value(g) * factor).collect();
        Row::from_rationals(&values)
    }
}

/// `n` agents with additive valuations over `m` items, values in `[0, 1]`.
///
/// Indices are 0-based in the API; the JSON codec converts to and from the
/// 1-based form used in documents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    n: usize,
    m: usize,
    values: Vec<Vec<Rational>>,
    arrival: Option<Vec<usize>>,
    master_list: Option<Vec<usize>>,
    hypergraph: Option<Vec<Vec<usize>>>,
    rows: Vec<Row>,
}

impl Instance {
    /// Validates `values` as an `n x m` matrix with entries in `[0, 1]`.
    pub fn new(values: Vec<Vec<Rational>>) -> Result<Instance> {
        let n = values.len();
        let m = values.first().map_or(0, Vec::len);
        Instance::with_dims(n, m, values)
    }

    pub fn with_dims(n: usize, m: usize, values: Vec<Vec<Rational>>) -> Result<Instance> {
        if n == 0 {
            return Err(Error::InvalidInstance("at least one agent is required".into()));
        }
        if values.len() != n {
            return Err(Error::InvalidInstance(format!("expected {n} rows, found {}", values.len())));
        }
        let one = Rational::one();
        for (a, row) in values.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidInstance(format!(
                    "row {} has {} entries, expected {m}",
                    a + 1,
                    row.len()
                )));
            }
            for (g, v) in row.iter().enumerate() {
                if v.is_negative() || *v > one {
                    return Err(Error::InvalidInstance(format!(
                        "value {v} for agent {} item {} is outside [0, 1]",
                        a + 1,
                        g + 1
                    )));
                }
            }
        }
        let rows = values
            .iter()
            .map(|r| Row::from_rationals(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Instance {
            n,
            m,
            values,
            arrival: None,
            master_list: None,
            hypergraph: None,
            rows,
        })
    }

    /// Convenience constructor from `"p/q"` or decimal tokens.
    pub fn from_tokens(rows: &[&[&str]]) -> Result<Instance> {
        let values = rows
            .iter()
            .map(|r| r.iter().map(|t| super::parse_rational(t)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Instance::new(values)
    }

    pub fn with_arrival(mut self, order: Vec<usize>) -> Result<Instance> {
        check_permutation(&order, self.n)?;
        self.arrival = Some(order);
        Ok(self)
    }

    pub fn with_master_list(mut self, list: Vec<usize>) -> Result<Instance> {
        check_permutation(&list, self.m)?;
        self.master_list = Some(list);
        Ok(self)
    }

    /// Attaches one agent set per item. Every positive value must be covered
    /// by its item's agent set.
    pub fn with_hypergraph(mut self, edges: Vec<Vec<usize>>) -> Result<Instance> {
        if edges.len() != self.m {
            return Err(Error::InvalidInstance(format!(
                "hypergraph has {} edges, expected one per item ({})",
                edges.len(),
                self.m
            )));
        }
        for (g, edge) in edges.iter().enumerate() {
            if let Some(&a) = edge.iter().find(|&&a| a >= self.n) {
                return Err(Error::AgentOutOfRange { index: a, n: self.n });
            }
            for a in 0..self.n {
                if self.rows[a].is_positive(g) && !edge.contains(&a) {
                    return Err(Error::InvalidInstance(format!(
                        "agent {} values item {} positively but is not in its edge",
                        a + 1,
                        g + 1
                    )));
                }
            }
        }
        self.hypergraph = Some(edges);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[Vec<Rational>] {
        &self.values
    }

    pub fn value(&self, agent: usize, item: usize) -> &Rational {
        &self.values[agent][item]
    }

    pub fn arrival(&self) -> Option<&[usize]> {
        self.arrival.as_deref()
    }

    pub fn master_list(&self) -> Option<&[usize]> {
        self.master_list.as_deref()
    }

    pub fn hypergraph(&self) -> Option<&[Vec<usize>]> {
        self.hypergraph.as_deref()
    }

    pub fn row(&self, agent: usize) -> &Row {
        &self.rows[agent]
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn items(&self) -> Vec<usize> {
        (0..self.m).collect()
    }

    fn check_agent(&self, agent: usize) -> Result<()> {
        if agent >= self.n {
            return Err(Error::AgentOutOfRange { index: agent, n: self.n });
        }
        Ok(())
    }

    /// `v_a([m])`.
    pub fn total_value(&self, agent: usize) -> Result<Rational> {
        self.check_agent(agent)?;
        Ok(self.rows[agent].to_rational(self.rows[agent].scaled_total()))
    }

    /// Proportional share `v_a([m]) / n`.
    pub fn prop_share(&self, agent: usize) -> Result<Rational> {
        Ok(self.total_value(agent)? / BigInt::from(self.n))
    }

    pub fn prop_shares(&self) -> Vec<Rational> {
        (0..self.n).map(|a| self.prop_share(a).expect("agent in range")).collect()
    }

    /// Additive value of an item set for one agent.
    pub fn part_value(&self, agent: usize, part: &[usize]) -> Result<Rational> {
        self.check_agent(agent)?;
        if let Some(&g) = part.iter().find(|&&g| g >= self.m) {
            return Err(Error::ItemOutOfRange { index: g, m: self.m });
        }
        Ok(self.rows[agent].sum(part))
    }

    pub fn all_strictly_positive(&self) -> bool {
        self.rows.iter().all(|r| (0..self.m).all(|g| r.is_positive(g)))
    }
}

/// Checks that `perm` lists each of `0..len` exactly once.
pub fn check_permutation(perm: &[usize], len: usize) -> Result<()> {
    if perm.len() != len {
        return Err(Error::InvalidPermutation(format!(
            "length {} but expected {len}",
            perm.len()
        )));
    }
    let mut seen = vec![false; len];
    for &x in perm {
        if x >= len {
            return Err(Error::InvalidPermutation(format!("entry {} out of range", x + 1)));
        }
        if std::mem::replace(&mut seen[x], true) {
            return Err(Error::InvalidPermutation(format!("entry {} repeated", x + 1)));
        }
    }
    Ok(())
}

/// Divides every entry by the largest entry so that the maximum becomes 1.
///
/// Returns the rescaled matrix and the divisor (1 when the matrix is all zero).
/// Loading never applies this implicitly.
pub fn rescale_to_unit(values: &[Vec<Rational>]) -> Result<(Vec<Vec<Rational>>, Rational)> {
    if values.iter().flatten().any(Signed::is_negative) {
        return Err(Error::InvalidInstance("negative value".into()));
    }
    let max = values
        .iter()
        .flatten()
        .max()
        .cloned()
        .unwrap_or_else(Rational::zero);
    let divisor = if max.is_zero() { Rational::one() } else { max };
    let scaled = values
        .iter()
        .map(|r| r.iter().map(|v| v / &divisor).collect())
        .collect();
    Ok((scaled, divisor))
}
