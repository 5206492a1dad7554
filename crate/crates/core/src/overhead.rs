//! Block-space, computation and communication overhead of evidence-carrying
//! blocks, in closed form.

use std::fmt;
use std::ops::{Add, Sub};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverheadParams {
    /// Attestors per sub-committee.
    pub n_att: u64,
    /// Aggregators per sub-committee.
    pub n_agg: u64,
    /// Evidence threshold.
    pub n_limit: u64,
    pub sig_bytes: u64,
    pub subcommittees_per_slot: u64,
    pub aggregates_per_block: u64,
    /// Average block size in kilobytes, as `"203/2"` or an integer.
    #[serde(with = "ratio_u64")]
    pub avg_block_kb: Ratio<u64>,
}

impl Default for OverheadParams {
    fn default() -> Self {
        Self {
            n_att: 524,
            n_agg: 16,
            n_limit: 8,
            sig_bytes: 96,
            subcommittees_per_slot: 64,
            aggregates_per_block: 128,
            avg_block_kb: Ratio::new(203, 2),
        }
    }
}

impl OverheadParams {
    pub fn with_agg(n_agg: u64, n_limit: u64) -> Self {
        Self { n_agg, n_limit, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self;
        if [p.n_att, p.n_agg, p.sig_bytes, p.subcommittees_per_slot, p.aggregates_per_block].contains(&0)
            || *p.avg_block_kb.numer() == 0
        {
            return Err(Error::Validation("overhead parameters must be positive".into()));
        }
        if p.n_limit >= p.n_agg {
            return Err(Error::Validation(format!("n_limit {} must be below n_agg {}", p.n_limit, p.n_agg)));
        }
        Ok(())
    }
}

mod ratio_u64 {
    use num_rational::Ratio;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio<u64>, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let text = match &v {
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::String(s) => s.clone(),
            _ => return Err(de::Error::custom("expected a number or a fraction string")),
        };
        let r = crate::ratio_serde::parse(&text).map_err(de::Error::custom)?;
        if *r.numer() < 0 || *r.denom() < 0 {
            return Err(de::Error::custom("negative block size"));
        }
        Ok(Ratio::new(*r.numer() as u64, *r.denom() as u64))
    }
}

/// A size kept in bits so that per-attestor bitfields stay exact. Serialized
/// as whole bytes, or as an exact fraction string when not byte-aligned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Size {
    pub bits: u64,
}

impl Serialize for Size {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.exact_bytes() {
            Some(b) => s.serialize_u64(b),
            None => s.serialize_str(&self.as_bytes().to_string()),
        }
    }
}

impl Size {
    pub fn bytes(b: u64) -> Self {
        Self { bits: 8 * b }
    }

    /// Whole bytes, when the size is byte-aligned.
    pub fn exact_bytes(&self) -> Option<u64> {
        self.bits.is_multiple_of(8).then_some(self.bits / 8)
    }

    pub fn as_bytes(&self) -> Ratio<u64> {
        Ratio::new(self.bits, 8)
    }

    pub fn kilobytes(&self) -> Ratio<u64> {
        Ratio::new(self.bits, 8000)
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exact_bytes() {
            Some(b) => write!(f, "{b}"),
            None => write!(f, "{}", self.as_bytes()),
        }
    }
}

fn per_aggregate(p: &OverheadParams, sig_count: u64, list_bits: u64) -> u64 {
    p.aggregates_per_block * (8 * sig_count * p.sig_bytes + list_bits)
}

/// Aggregated signatures and aggregation bitfields in one block today.
pub fn current_block_aggregate_bytes(p: &OverheadParams) -> Size {
    Size { bits: per_aggregate(p, 1, p.n_att) }
}

/// Evidence-carrying aggregates when every aggregate is complete.
pub fn optimistic_evidence_bytes(p: &OverheadParams) -> Size {
    Size { bits: per_aggregate(p, 2, p.n_agg + p.n_att) }
}

/// One evidence per aggregator in every sub-committee.
pub fn worst_case_evidence_bytes(p: &OverheadParams) -> Size {
    Size { bits: p.n_agg * per_aggregate(p, 2, p.n_att) }
}

/// Growth over today's aggregates, absolute and as a share of an average block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Growth {
    pub size: Size,
    pub delta: Size,
    #[serde(serialize_with = "ser_ratio")]
    pub fraction_of_block: Ratio<u64>,
}

fn ser_ratio<S: serde::Serializer>(r: &Ratio<u64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

impl Growth {
    pub fn percent(&self) -> f64 {
        100.0 * *self.fraction_of_block.numer() as f64 / *self.fraction_of_block.denom() as f64
    }
}

pub fn optimistic_growth(p: &OverheadParams) -> Growth {
    let size = optimistic_evidence_bytes(p);
    let delta = Size { bits: size.bits - current_block_aggregate_bytes(p).bits };
    Growth { size, delta, fraction_of_block: delta.kilobytes() / p.avg_block_kb }
}

/// Coefficients of the addition, multiplication and pairing costs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CostVector {
    pub add: u64,
    pub mul: u64,
    pub pair: u64,
}

impl CostVector {
    pub fn new(add: u64, mul: u64, pair: u64) -> Self {
        Self { add, mul, pair }
    }

    pub fn checked_sub(self, o: Self) -> Option<Self> {
        Some(Self { add: self.add.checked_sub(o.add)?, mul: self.mul.checked_sub(o.mul)?, pair: self.pair.checked_sub(o.pair)? })
    }
}

impl Add for CostVector {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { add: self.add + o.add, mul: self.mul + o.mul, pair: self.pair + o.pair }
    }
}

impl Sub for CostVector {
    type Output = Self;

    fn sub(self, o: Self) -> Self {
        self.checked_sub(o).expect("cost vectors are non-negative")
    }
}

impl fmt::Display for CostVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} C_add + {} C_mul + {} C_pair", self.add, self.mul, self.pair)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Current,
    Practical,
    Optimistic,
    Worst,
}

pub fn aggregator_cost(p: &OverheadParams, mode: Mode) -> Result<CostVector> {
    let n = p.n_att;
    match mode {
        Mode::Current => Ok(CostVector::new(n.saturating_sub(1), 1, 2 * n)),
        Mode::Practical => Ok(CostVector::new(2 * n.saturating_sub(1), 2, 2 * (n + 1))),
        m => Err(Error::Validation(format!("aggregator cost has no {m:?} mode"))),
    }
}

pub fn proposer_extra_cost(p: &OverheadParams, mode: Mode) -> Result<CostVector> {
    let k = p.n_agg;
    match mode {
        Mode::Optimistic => Ok(CostVector::new(64 * k.saturating_sub(1), 0, 128 * k)),
        Mode::Worst => Ok(CostVector::new(0, 0, 128 * k)),
        m => Err(Error::Validation(format!("proposer cost has no {m:?} mode"))),
    }
}

pub fn verifier_cost(p: &OverheadParams, mode: Mode) -> Result<CostVector> {
    let (n, k) = (p.n_att, p.n_agg);
    match mode {
        Mode::Current => Ok(CostVector::new(64 * n.saturating_sub(1), 0, 128)),
        Mode::Optimistic => Ok(CostVector::new(64 * (2 * n + k).saturating_sub(3), 0, 384)),
        Mode::Worst => Ok(CostVector::new(64 * n.saturating_sub(1) * (k + 1), 0, 64 * (2 + 4 * k))),
        m => Err(Error::Validation(format!("verifier cost has no {m:?} mode"))),
    }
}

/// Extra bytes each aggregator sends.
pub fn aggregator_comm_overhead_bytes(p: &OverheadParams) -> u64 {
    2 * p.sig_bytes
}

/// One row of the overhead table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OverheadRow {
    pub n_agg: u64,
    pub n_limit: u64,
    pub current_bytes: Size,
    pub optimistic: Growth,
    pub worst_bytes: Size,
    pub aggregator_current: CostVector,
    pub aggregator_practical: CostVector,
    pub proposer_optimistic: CostVector,
    pub proposer_worst: CostVector,
    pub verifier_current: CostVector,
    pub verifier_optimistic: CostVector,
    pub verifier_worst: CostVector,
    pub aggregator_comm_bytes: u64,
}

pub fn overhead_row(p: &OverheadParams) -> Result<OverheadRow> {
    Ok(OverheadRow {
        n_agg: p.n_agg,
        n_limit: p.n_limit,
        current_bytes: current_block_aggregate_bytes(p),
        optimistic: optimistic_growth(p),
        worst_bytes: worst_case_evidence_bytes(p),
        aggregator_current: aggregator_cost(p, Mode::Current)?,
        aggregator_practical: aggregator_cost(p, Mode::Practical)?,
        proposer_optimistic: proposer_extra_cost(p, Mode::Optimistic)?,
        proposer_worst: proposer_extra_cost(p, Mode::Worst)?,
        verifier_current: verifier_cost(p, Mode::Current)?,
        verifier_optimistic: verifier_cost(p, Mode::Optimistic)?,
        verifier_worst: verifier_cost(p, Mode::Worst)?,
        aggregator_comm_bytes: aggregator_comm_overhead_bytes(p),
    })
}
