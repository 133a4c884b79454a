//! Effort model for the three ways of answering qualification requests.
//!
//! Each approach costs a fixed setup (person-days) plus a per-component
//! effort (person-minutes). A person-day is 480 person-minutes. All
//! arithmetic is exact over rationals; floats appear only at the output.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_rational::Ratio;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Exact = Ratio<i128>;

pub const MINUTES_PER_PERSON_DAY: i128 = 480;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("invalid cost model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Approach {
    AsIs,
    Rag,
    VkgLlm,
}

impl Approach {
    pub fn as_str(self) -> &'static str {
        match self {
            Approach::AsIs => "AsIs",
            Approach::Rag => "Rag",
            Approach::VkgLlm => "VkgLlm",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Approach {
    type Err = CostError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_', '+'], "").as_str() {
            "asis" => Ok(Approach::AsIs),
            "rag" => Ok(Approach::Rag),
            "vkgllm" | "vkg" => Ok(Approach::VkgLlm),
            _ => Err(CostError::Invalid(format!("unknown approach {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproachCost {
    pub name: Approach,
    pub setup_person_days: Decimal,
    pub per_component_minutes: Decimal,
}

impl ApproachCost {
    pub fn new(name: Approach, setup_person_days: Decimal, per_component_minutes: Decimal) -> Result<Self, CostError> {
        let cost = Self {
            name,
            setup_person_days,
            per_component_minutes,
        };
        cost.validate()?;
        Ok(cost)
    }

    /// Manual search of both catalogs: 40 minutes per component.
    pub fn as_is() -> Self {
        Self {
            name: Approach::AsIs,
            setup_person_days: Decimal::ZERO,
            per_component_minutes: Decimal::from(40),
        }
    }

    /// 10 days of setup, then 15 minutes per component.
    pub fn rag() -> Self {
        Self {
            name: Approach::Rag,
            setup_person_days: Decimal::from(10),
            per_component_minutes: Decimal::from(15),
        }
    }

    /// 60 days of setup, then 5 minutes per component.
    pub fn vkg_llm() -> Self {
        Self {
            name: Approach::VkgLlm,
            setup_person_days: Decimal::from(60),
            per_component_minutes: Decimal::from(5),
        }
    }

    pub fn defaults() -> [Self; 3] {
        [Self::as_is(), Self::rag(), Self::vkg_llm()]
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if self.setup_person_days < Decimal::ZERO || self.per_component_minutes < Decimal::ZERO {
            return Err(CostError::Invalid(format!("{} has a negative cost", self.name)));
        }
        if self.name == Approach::AsIs && !self.setup_person_days.is_zero() {
            return Err(CostError::Invalid("AsIs has no setup cost".into()));
        }
        Ok(())
    }

    /// Scales the per-component effort by `1 + percent / 100`.
    pub fn scaled(&self, percent: Decimal) -> Result<Self, CostError> {
        let per = self.per_component_minutes * (Decimal::ONE + percent / Decimal::from(100));
        Self::new(self.name, self.setup_person_days, per)
    }

    fn setup_minutes(&self) -> Exact {
        exact(self.setup_person_days) * MINUTES_PER_PERSON_DAY
    }

    fn slope(&self) -> Exact {
        exact(self.per_component_minutes)
    }
}

pub fn exact(d: Decimal) -> Exact {
    Ratio::new(d.mantissa(), 10i128.pow(d.scale()))
}

pub fn to_f64(r: Exact) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn cumulative_minutes(a: &ApproachCost, n: u64) -> Exact {
    a.setup_minutes() + a.slope() * i128::from(n)
}

/// Person-days spent after handling `n` components.
pub fn cumulative_effort(a: &ApproachCost, n: u64) -> Exact {
    cumulative_minutes(a, n) / MINUTES_PER_PERSON_DAY
}

/// Smallest `n >= 0` (real-valued) from which `b` costs no more than `a`.
pub fn break_even(a: &ApproachCost, b: &ApproachCost) -> Option<Exact> {
    let gap = b.setup_minutes() - a.setup_minutes();
    if gap <= Exact::from_integer(0) {
        return Some(Exact::from_integer(0));
    }
    let slope_gain = a.slope() - b.slope();
    (slope_gain > Exact::from_integer(0)).then(|| gap / slope_gain)
}

/// `approach / baseline` at `n`; 1 when the baseline is still zero.
pub fn relative(approach: &ApproachCost, baseline: &ApproachCost, n: u64) -> Exact {
    let base = cumulative_minutes(baseline, n);
    if base == Exact::from_integer(0) {
        return Exact::from_integer(1);
    }
    cumulative_minutes(approach, n) / base
}

pub fn savings(approach: &ApproachCost, baseline: &ApproachCost, n: u64) -> Exact {
    Exact::from_integer(1) - relative(approach, baseline, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub n: u64,
    pub asis_days: f64,
    pub rag_days: f64,
    pub vkg_days: f64,
    pub rag_relative: f64,
    pub vkg_relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsAt {
    pub n: u64,
    pub rag_relative: f64,
    pub vkg_relative: f64,
    pub rag_savings: f64,
    pub vkg_savings: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub minutes_per_person_day: i128,
    pub approaches: Vec<ApproachCost>,
    pub break_even_asis_rag: Option<f64>,
    pub break_even_rag_vkg: Option<f64>,
    pub break_even_asis_vkg: Option<f64>,
    pub savings: Vec<SavingsAt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub as_is: ApproachCost,
    pub rag: ApproachCost,
    pub vkg: ApproachCost,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            as_is: ApproachCost::as_is(),
            rag: ApproachCost::rag(),
            vkg: ApproachCost::vkg_llm(),
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), CostError> {
        for (a, want) in [(&self.as_is, Approach::AsIs), (&self.rag, Approach::Rag), (&self.vkg, Approach::VkgLlm)] {
            if a.name != want {
                return Err(CostError::Invalid(format!("expected {want}, got {}", a.name)));
            }
            a.validate()?;
        }
        Ok(())
    }

    /// Applies the same percentage change to every per-component effort.
    pub fn sensitivity(&self, percent: Decimal) -> Result<Self, CostError> {
        Ok(Self {
            as_is: self.as_is.scaled(percent)?,
            rag: self.rag.scaled(percent)?,
            vkg: self.vkg.scaled(percent)?,
        })
    }

    pub fn row(&self, n: u64) -> CostRow {
        CostRow {
            n,
            asis_days: to_f64(cumulative_effort(&self.as_is, n)),
            rag_days: to_f64(cumulative_effort(&self.rag, n)),
            vkg_days: to_f64(cumulative_effort(&self.vkg, n)),
            rag_relative: to_f64(relative(&self.rag, &self.as_is, n)),
            vkg_relative: to_f64(relative(&self.vkg, &self.as_is, n)),
        }
    }

    pub fn rows(&self, n_max: u64, step: u64) -> Result<Vec<CostRow>, CostError> {
        if step == 0 || n_max < step {
            return Err(CostError::Invalid(format!("need n_max >= step >= 1, got n_max={n_max} step={step}")));
        }
        Ok((0..=n_max).step_by(step as usize).map(|n| self.row(n)).collect())
    }

    pub fn savings_at(&self, n: u64) -> SavingsAt {
        SavingsAt {
            n,
            rag_relative: to_f64(relative(&self.rag, &self.as_is, n)),
            vkg_relative: to_f64(relative(&self.vkg, &self.as_is, n)),
            rag_savings: to_f64(savings(&self.rag, &self.as_is, n)),
            vkg_savings: to_f64(savings(&self.vkg, &self.as_is, n)),
        }
    }

    pub fn summary(&self) -> CostSummary {
        CostSummary {
            minutes_per_person_day: MINUTES_PER_PERSON_DAY,
            approaches: vec![self.as_is.clone(), self.rag.clone(), self.vkg.clone()],
            break_even_asis_rag: break_even(&self.as_is, &self.rag).map(to_f64),
            break_even_rag_vkg: break_even(&self.rag, &self.vkg).map(to_f64),
            break_even_asis_vkg: break_even(&self.as_is, &self.vkg).map(to_f64),
            savings: [5000, 10000].map(|n| self.savings_at(n)).to_vec(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W, n_max: u64, step: u64) -> Result<(), CostError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "asis_days", "rag_days", "vkg_days", "rag_relative", "vkg_relative"])?;
        for r in self.rows(n_max, step)? {
            w.write_record([
                r.n.to_string(),
                format!("{:.6}", r.asis_days),
                format!("{:.6}", r.rag_days),
                format!("{:.6}", r.vkg_days),
                format!("{:.6}", r.rag_relative),
                format!("{:.6}", r.vkg_relative),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headline_numbers() {
        let m = CostModel::default();
        assert_eq!(break_even(&m.as_is, &m.rag), Some(Exact::from_integer(192)));
        assert_eq!(break_even(&m.rag, &m.vkg), Some(Exact::from_integer(2400)));
        assert_eq!(break_even(&m.rag, &m.rag), Some(Exact::from_integer(0)));
        assert_eq!(break_even(&m.vkg, &m.as_is), Some(Exact::from_integer(0)));
        assert_eq!(break_even(&m.vkg, &m.rag), Some(Exact::from_integer(0)));
        let steep = ApproachCost::new(Approach::Rag, Decimal::ONE, Decimal::from(40)).unwrap();
        assert_eq!(break_even(&m.as_is, &steep), None);
        assert_eq!(cumulative_minutes(&m.vkg, 10_000), Exact::from_integer(78_800));
        assert_eq!(cumulative_effort(&m.as_is, 0), Exact::from_integer(0));
        assert_eq!(relative(&m.vkg, &m.as_is, 10_000), Exact::new(197, 1000));
        assert_eq!(relative(&m.vkg, &m.as_is, 0), Exact::from_integer(1));
    }

    #[test]
    fn exact_from_decimal() {
        assert_eq!(exact(Decimal::new(125, 2)), Exact::new(5, 4));
        assert_eq!(exact(Decimal::from(-3)), Exact::from_integer(-3));
    }

    #[test]
    fn rejects_bad_models() {
        assert!(ApproachCost::new(Approach::AsIs, Decimal::ONE, Decimal::ONE).is_err());
        assert!(ApproachCost::new(Approach::Rag, Decimal::ONE, Decimal::NEGATIVE_ONE).is_err());
        assert!(CostModel::default().rows(10, 0).is_err());
        assert!(CostModel::default().rows(5, 10).is_err());
        assert_eq!("vkg-llm".parse::<Approach>().unwrap(), Approach::VkgLlm);
    }
}
