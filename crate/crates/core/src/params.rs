//! Named hyperparameter sets, the payload of built-in candidates.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Choice(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Self::Real(v) => Some(*v),
            Self::Int(v) => Some(*v as f64),
            Self::Choice(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Self::Choice(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamKind {
    Real { lo: f64, hi: f64 },
    Int { lo: i64, hi: i64 },
    Choice { options: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn real(name: &str, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), kind: ParamKind::Real { lo, hi } }
    }

    pub fn int(name: &str, lo: i64, hi: i64) -> Self {
        Self { name: name.into(), kind: ParamKind::Int { lo, hi } }
    }

    pub fn choice(name: &str, options: &[&str]) -> Self {
        Self { name: name.into(), kind: ParamKind::Choice { options: options.iter().map(|s| (*s).into()).collect() } }
    }

    fn clamp(&self, v: ParamValue) -> ParamValue {
        match (&self.kind, v) {
            (ParamKind::Real { lo, hi }, ParamValue::Real(x)) => ParamValue::Real(x.clamp(*lo, *hi)),
            (ParamKind::Real { lo, hi }, ParamValue::Int(x)) => ParamValue::Real((x as f64).clamp(*lo, *hi)),
            (ParamKind::Int { lo, hi }, ParamValue::Int(x)) => ParamValue::Int(x.clamp(*lo, *hi)),
            (ParamKind::Int { lo, hi }, ParamValue::Real(x)) => ParamValue::Int((libm::round(x) as i64).clamp(*lo, *hi)),
            (_, v) => v,
        }
    }
}

/// Ordered map of hyperparameter values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSet(pub BTreeMap<String, ParamValue>);

impl ParamSet {
    pub fn with(mut self, name: &str, value: ParamValue) -> Self {
        self.0.insert(name.into(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.0.get(name)
    }

    pub fn real(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(ParamValue::as_f64)
    }

    pub fn int(&self, name: &str) -> Option<i64> {
        match self.get(name)? {
            ParamValue::Int(v) => Some(*v),
            ParamValue::Real(v) => Some(libm::round(*v) as i64),
            ParamValue::Choice(_) => None,
        }
    }

    pub fn choice(&self, name: &str) -> Option<&str> {
        self.get(name).and_then(ParamValue::as_str)
    }
}

/// Multiplicative log-normal spread of numeric fields.
pub const MUTATION_LOG_STD: f64 = 0.2;
pub const CHOICE_FLIP_PROBABILITY: f64 = 0.1;

/// Offline mutation: every field comes from a random parent, numeric fields
/// are scaled by `exp(N(0, log_std))` and clamped, choices flip with
/// probability [`CHOICE_FLIP_PROBABILITY`]. `log_std = 0` disables all
/// randomness except the parent pick.
pub fn mutate_builtin(parents: &[ParamSet], schema: &[ParamSpec], seed: u64, log_std: f64) -> ParamSet {
    assert!(!parents.is_empty(), "mutation needs at least one parent");
    let mut rng = rng::seeded(seed);
    let noise = Normal::new(0.0, log_std.max(0.0)).expect("finite std");
    let mut child = ParamSet::default();
    for spec in schema {
        let donor = &parents[rng.random_range(0..parents.len())];
        let Some(value) = donor.get(&spec.name).cloned() else { continue };
        let value = match (&spec.kind, value) {
            (ParamKind::Real { .. }, v @ (ParamValue::Real(_) | ParamValue::Int(_))) => {
                let x = v.as_f64().unwrap_or(0.0);
                ParamValue::Real(x * libm::exp(noise.sample(&mut rng)))
            }
            (ParamKind::Int { .. }, v @ (ParamValue::Real(_) | ParamValue::Int(_))) => {
                let x = v.as_f64().unwrap_or(0.0);
                ParamValue::Real(x * libm::exp(noise.sample(&mut rng)))
            }
            (ParamKind::Choice { options }, ParamValue::Choice(current)) => {
                let flip = log_std > 0.0 && options.len() > 1 && rng.random::<f64>() < CHOICE_FLIP_PROBABILITY;
                if flip {
                    let others: Vec<&String> = options.iter().filter(|o| **o != current).collect();
                    ParamValue::Choice(others[rng.random_range(0..others.len())].clone())
                } else {
                    ParamValue::Choice(current)
                }
            }
            (_, v) => v,
        };
        child.0.insert(spec.name.clone(), spec.clamp(value));
    }
    // fields outside the schema pass through from the first parent
    for (k, v) in &parents[0].0 {
        child.0.entry(k.clone()).or_insert_with(|| v.clone());
    }
    child
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Vec<ParamSpec> {
        alloc::vec![ParamSpec::real("a", 0.0, 1.0), ParamSpec::int("b", 1, 10), ParamSpec::choice("m", &["x", "y"])]
    }

    fn set(a: f64, b: i64, m: &str) -> ParamSet {
        ParamSet::default()
            .with("a", ParamValue::Real(a))
            .with("b", ParamValue::Int(b))
            .with("m", ParamValue::Choice(m.into()))
    }

    #[test]
    fn zero_variance_single_parent_is_identity() {
        let p = set(0.5, 4, "x");
        for seed in 0..20 {
            assert_eq!(mutate_builtin(&[p.clone()], &schema(), seed, 0.0), p);
        }
    }

    #[test]
    fn child_takes_either_parent_value() {
        let p = [set(0.2, 4, "x"), set(0.7, 4, "x")];
        let mut seen = [false; 2];
        for seed in 0..50 {
            let a = mutate_builtin(&p, &schema(), seed, 0.0).real("a").unwrap();
            assert!(a == 0.2 || a == 0.7);
            seen[(a == 0.7) as usize] = true;
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn bounded_fields_stay_in_bounds() {
        let p = set(1.0, 10, "y");
        for seed in 0..200 {
            let c = mutate_builtin(&[p.clone()], &schema(), seed, 0.2);
            let a = c.real("a").unwrap();
            let b = c.int("b").unwrap();
            assert!((0.0..=1.0).contains(&a) && (1..=10).contains(&b));
            assert!(matches!(c.get("b"), Some(ParamValue::Int(_))));
        }
    }

    #[test]
    fn choices_flip_sometimes() {
        let p = set(0.5, 5, "x");
        let flips = (0..1000).filter(|&s| mutate_builtin(&[p.clone()], &schema(), s, 0.2).choice("m") == Some("y")).count();
        assert!((50..=150).contains(&flips), "{flips}");
    }

    #[test]
    fn untagged_serialization() {
        let s = set(0.5, 3, "x");
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"a":0.5,"b":3,"m":"x"}"#);
        assert_eq!(serde_json::from_str::<ParamSet>(&json).unwrap(), s);
    }
}
