//! Closed-form lower bounds on the value an agent receives.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::rational::{ceil_log2, format_rational, ge_base_minus_sqrt, int, to_f64, Rational};
use crate::error::{Error, Result};

/// A theorem id together with the parameters its bound needs.
///
/// `total` is the agent's value for all items; `d` the maximum influence set
/// size; `t` a tie size or a linearly separable layer count depending on the
/// theorem.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "theorem", rename_all = "snake_case")]
pub enum TheoremBoundSpec {
    RoundRobin,
    AllPos { n: u64 },
    BoundedProp { i: u64 },
    BoundedPropG { g: u64 },
    FairOrder { i: u64 },
    ModRr {
        #[serde(with = "super::rational::serde_string")]
        total: Rational,
        d: u64,
    },
    BoundedInfluenceEarly {
        #[serde(with = "super::rational::serde_string")]
        total: Rational,
        d: u64,
    },
    BoundedInfluenceLate {
        #[serde(with = "super::rational::serde_string")]
        total: Rational,
        d: u64,
    },
    BoundedIndiff { t: u64 },
    MlOrdered,
    MlLinsep,
    MlLinsepT { t: u64 },
    MlAdjacent { k: u64 },
    MlArbitrary { k: u64 },
    MlLaminar { depth: u64 },
    MlLipschitz {
        #[serde(with = "super::rational::serde_string")]
        delta: Rational,
        k: u64,
    },
}

pub const THEOREM_IDS: [&str; 16] = [
    "round_robin",
    "all_pos",
    "bounded_prop",
    "bounded_prop_g",
    "fair_order",
    "mod_rr",
    "bounded_influence_early",
    "bounded_influence_late",
    "bounded_indiff",
    "ml_ordered",
    "ml_linsep",
    "ml_linsep_t",
    "ml_adjacent",
    "ml_arbitrary",
    "ml_laminar",
    "ml_lipschitz",
];

impl TheoremBoundSpec {
    pub fn id(&self) -> &'static str {
        use TheoremBoundSpec::*;
        match self {
            RoundRobin => "round_robin",
            AllPos { .. } => "all_pos",
            BoundedProp { .. } => "bounded_prop",
            BoundedPropG { .. } => "bounded_prop_g",
            FairOrder { .. } => "fair_order",
            ModRr { .. } => "mod_rr",
            BoundedInfluenceEarly { .. } => "bounded_influence_early",
            BoundedInfluenceLate { .. } => "bounded_influence_late",
            BoundedIndiff { .. } => "bounded_indiff",
            MlOrdered => "ml_ordered",
            MlLinsep => "ml_linsep",
            MlLinsepT { .. } => "ml_linsep_t",
            MlAdjacent { .. } => "ml_adjacent",
            MlArbitrary { .. } => "ml_arbitrary",
            MlLaminar { .. } => "ml_laminar",
            MlLipschitz { .. } => "ml_lipschitz",
        }
    }

    /// Builds a spec from a theorem id and a map of named parameters.
    pub fn from_params(id: &str, params: &BTreeMap<String, Rational>) -> Result<TheoremBoundSpec> {
        let get = |name: &str| -> Result<&Rational> {
            params.get(name).ok_or_else(|| Error::MissingParameter {
                theorem: id.to_string(),
                param: name.to_string(),
            })
        };
        let count = |name: &str| -> Result<u64> {
            let v = get(name)?;
            if !v.is_integer() || v.is_negative() {
                return Err(Error::InvalidArgument(format!(
                    "parameter `{name}` of `{id}` must be a non-negative integer"
                )));
            }
            v.to_integer()
                .to_u64()
                .ok_or_else(|| Error::InvalidArgument(format!("parameter `{name}` too large")))
        };
        use TheoremBoundSpec::*;
        Ok(match id {
            "round_robin" => RoundRobin,
            "all_pos" => AllPos { n: count("n")? },
            "bounded_prop" => BoundedProp { i: count("i")? },
            "bounded_prop_g" => BoundedPropG { g: count("g")? },
            "fair_order" => FairOrder { i: count("i")? },
            "mod_rr" => ModRr { total: get("total")?.clone(), d: count("d")? },
            "bounded_influence_early" => BoundedInfluenceEarly { total: get("total")?.clone(), d: count("d")? },
            "bounded_influence_late" => BoundedInfluenceLate { total: get("total")?.clone(), d: count("d")? },
            "bounded_indiff" => BoundedIndiff { t: count("t")? },
            "ml_ordered" => MlOrdered,
            "ml_linsep" => MlLinsep,
            "ml_linsep_t" => MlLinsepT { t: count("t")? },
            "ml_adjacent" => MlAdjacent { k: count("k")? },
            "ml_arbitrary" => MlArbitrary { k: count("k")? },
            "ml_laminar" => MlLaminar { depth: count("depth")? },
            "ml_lipschitz" => MlLipschitz { delta: get("delta")?.clone(), k: count("k")? },
            other => return Err(Error::UnknownTheorem(other.to_string())),
        })
    }
}

/// A lower bound, either rational or of the form `base - sqrt(radicand)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Bound {
    Exact(Rational),
    BaseMinusSqrt { base: Rational, radicand: Rational },
}

impl Bound {
    pub fn is_satisfied_by(&self, value: &Rational) -> bool {
        match self {
            Bound::Exact(b) => value >= b,
            Bound::BaseMinusSqrt { base, radicand } => ge_base_minus_sqrt(value, base, radicand),
        }
    }

    /// True when the bound is at most zero, so any bundle meets it.
    pub fn is_trivial(&self) -> bool {
        match self {
            Bound::Exact(b) => !b.is_positive(),
            Bound::BaseMinusSqrt { base, radicand } => !base.is_positive() || &(base * base) <= radicand,
        }
    }

    /// `value - bound` when it is rational.
    pub fn exact_margin(&self, value: &Rational) -> Option<Rational> {
        match self {
            Bound::Exact(b) => Some(value - b),
            Bound::BaseMinusSqrt { base, radicand } => {
                let root = rational_sqrt(radicand)?;
                Some(value - (base - root))
            }
        }
    }

    pub fn approx(&self) -> f64 {
        match self {
            Bound::Exact(b) => to_f64(b),
            Bound::BaseMinusSqrt { base, radicand } => to_f64(base) - to_f64(radicand).sqrt(),
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Exact(b) => write!(f, "{}", format_rational(b)),
            Bound::BaseMinusSqrt { base, radicand } => {
                write!(f, "{} - sqrt({})", format_rational(base), format_rational(radicand))
            }
        }
    }
}

/// Exact square root of a rational when both terms are perfect squares.
fn rational_sqrt(value: &Rational) -> Option<Rational> {
    if value.is_negative() {
        return None;
    }
    let n = value.numer().sqrt();
    let d = value.denom().sqrt();
    if &(&n * &n) == value.numer() && &(&d * &d) == value.denom() {
        Some(Rational::new(n, d))
    } else {
        None
    }
}

/// Evaluates the closed-form lower bound of `spec` for an agent whose
/// proportional share is `prop`. Logs are base 2 with `ceil(log 1) = 0`.
pub fn theorem_bound(spec: &TheoremBoundSpec, prop: &Rational) -> Bound {
    use TheoremBoundSpec::*;
    let minus = |c: u64| Bound::Exact(prop - Rational::from_integer(BigInt::from(c)));
    let share = |total: &Rational, d: u64| total / BigInt::from(d.max(1));
    match spec {
        RoundRobin | MlOrdered => minus(1),
        AllPos { n } => minus(ceil_log2(*n)),
        BoundedProp { i } => minus(2 * ceil_log2(*i) + 1),
        BoundedPropG { g } => Bound::Exact(prop - int(2 * *g as i64) + int(1)),
        FairOrder { i } => minus(2 * ceil_log2(*i) + 2),
        ModRr { total, d } | BoundedInfluenceEarly { total, d } => Bound::Exact(share(total, *d) - int(1)),
        BoundedInfluenceLate { total, d } => {
            let c = 2 * ceil_log2(2 * d.max(&1) - 1) + 1;
            Bound::Exact(share(total, *d) - Rational::from_integer(BigInt::from(c)))
        }
        BoundedIndiff { t } => minus((t + 3).div_ceil(2)),
        MlLinsep => minus(2),
        MlLinsepT { t } => minus(1 + t),
        MlAdjacent { k } => Bound::BaseMinusSqrt {
            base: prop - int(1),
            radicand: Rational::from_integer(BigInt::from(2 * k)),
        },
        MlArbitrary { k } => minus(1 + k),
        MlLaminar { depth } => minus(1 + depth),
        MlLipschitz { delta, k } => {
            Bound::Exact(prop - int(1) - delta * Rational::from_integer(BigInt::from(*k)))
        }
    }
}

impl Default for Bound {
    fn default() -> Bound {
        Bound::Exact(Rational::zero())
    }
}
