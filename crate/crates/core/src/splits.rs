//! Dialogue-level 3-fold cross-validation with an 85/15 train/val split of
//! the non-test folds, plus nested fractional training subsets.
//!
//! Every random choice is drawn from ChaCha8 seeded with the plan seed: the
//! fold shuffle uses stream 0 and fold `k`'s training order uses stream `k + 1`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FOLDS: usize = 3;
pub const VAL_SHARE: f64 = 0.15;
pub const FRACTIONS: [u8; 7] = [10, 20, 30, 40, 50, 75, 100];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("corpus too small: {0} dialogues, need at least {FOLDS}")]
    TooSmall(usize),
    #[error("duplicate dialogue id \"{0}\"")]
    DuplicateId(String),
    #[error("invalid fraction {0}: expected one of 10, 20, 30, 40, 50, 75, 100")]
    InvalidFraction(String),
    #[error("fold {0} out of range")]
    NoSuchFold(usize),
}

/// A training-set percentage from the fixed menu.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Fraction(u8);

impl Fraction {
    pub const FULL: Fraction = Fraction(100);

    pub fn new(percent: u8) -> Result<Self, SplitError> {
        if FRACTIONS.contains(&percent) {
            Ok(Self(percent))
        } else {
            Err(SplitError::InvalidFraction(percent.to_string()))
        }
    }

    pub fn all() -> impl Iterator<Item = Fraction> {
        FRACTIONS.iter().map(|&p| Fraction(p))
    }

    pub fn percent(self) -> u8 {
        self.0
    }

    /// `ceil(percent · n / 100)`.
    pub fn of(self, n: usize) -> usize {
        (usize::from(self.0) * n).div_ceil(100)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Fraction {
    type Err = SplitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().trim_end_matches('%');
        t.parse::<u8>()
            .map_err(|_| SplitError::InvalidFraction(s.to_string()))
            .and_then(Fraction::new)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Fraction::new(u8::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Role::Train),
            "val" => Ok(Role::Val),
            "test" => Ok(Role::Test),
            other => Err(format!("unknown role \"{other}\"")),
        }
    }
}

/// One fold of the cross-validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub seed: u64,
    pub fold: usize,
    pub fraction: Fraction,
    /// Full training pool in its seeded order; subsets are prefixes of it.
    pub train_pool: Vec<String>,
    /// Selected training dialogues, sorted.
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitPlan {
    pub fn ids(&self, role: Role) -> &[String] {
        match role {
            Role::Train => &self.train,
            Role::Val => &self.val,
            Role::Test => &self.test,
        }
    }
}

fn sorted(mut v: Vec<String>) -> Vec<String> {
    v.sort();
    v
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Builds the three fold plans with full training sets.
pub fn make_splits<I, S>(ids: I, seed: u64) -> Result<Vec<SplitPlan>, SplitError>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut ids: Vec<String> = ids.into_iter().map(Into::into).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(SplitError::DuplicateId(w[0].clone()));
    }
    let n = ids.len();
    if n < FOLDS {
        return Err(SplitError::TooSmall(n));
    }
    ids.shuffle(&mut stream(seed, 0));

    let (base, extra) = (n / FOLDS, n % FOLDS);
    let mut chunks: Vec<&[String]> = Vec::with_capacity(FOLDS);
    let mut start = 0;
    for k in 0..FOLDS {
        let len = base + usize::from(k < extra);
        chunks.push(&ids[start..start + len]);
        start += len;
    }

    let plans = (0..FOLDS)
        .map(|k| {
            let rest: Vec<String> = (0..FOLDS)
                .filter(|&j| j != k)
                .flat_map(|j| chunks[j].iter().cloned())
                .collect();
            let n_val = (VAL_SHARE * rest.len() as f64).round() as usize;
            let (val, train) = rest.split_at(n_val);
            let mut pool = train.to_vec();
            pool.shuffle(&mut stream(seed, k as u64 + 1));
            SplitPlan {
                seed,
                fold: k,
                fraction: Fraction::FULL,
                train: sorted(pool.clone()),
                train_pool: pool,
                val: sorted(val.to_vec()),
                test: sorted(chunks[k].to_vec()),
            }
        })
        .collect();
    Ok(plans)
}

/// Restricts a plan's training set to the first `ceil(f · |pool|)` dialogues
/// of its seeded pool order. Validation and test sets are untouched.
pub fn fractional_subset(plan: &SplitPlan, fraction: Fraction) -> SplitPlan {
    let k = fraction.of(plan.train_pool.len());
    SplitPlan {
        fraction,
        train: sorted(plan.train_pool[..k].to_vec()),
        ..plan.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldManifest {
    pub fold: usize,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    /// Training ids per fraction percent.
    pub subsets: BTreeMap<u8, Vec<String>>,
}

/// On-disk form of a split: every role list for every fold and fraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub fold_assignments: BTreeMap<String, usize>,
    pub folds: Vec<FoldManifest>,
}

impl SplitManifest {
    pub fn from_plans(plans: &[SplitPlan]) -> Self {
        let seed = plans.first().map_or(0, |p| p.seed);
        let fold_assignments = plans
            .iter()
            .flat_map(|p| p.test.iter().map(move |id| (id.clone(), p.fold)))
            .collect();
        let folds = plans
            .iter()
            .map(|p| FoldManifest {
                fold: p.fold,
                train: p.train.clone(),
                val: p.val.clone(),
                test: p.test.clone(),
                subsets: Fraction::all()
                    .map(|f| (f.percent(), fractional_subset(p, f).train))
                    .collect(),
            })
            .collect();
        Self {
            seed,
            fold_assignments,
            folds,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Ids for one role of one fold; `fraction` applies to the training role only.
    pub fn ids(
        &self,
        fold: usize,
        role: Role,
        fraction: Fraction,
    ) -> Result<&[String], SplitError> {
        let f = self
            .folds
            .iter()
            .find(|f| f.fold == fold)
            .ok_or(SplitError::NoSuchFold(fold))?;
        Ok(match role {
            Role::Train => f
                .subsets
                .get(&fraction.percent())
                .map_or(&f.train[..], |v| &v[..]),
            Role::Val => &f.val,
            Role::Test => &f.test,
        })
    }
}

/// Checks the partition invariants of a set of plans; returns the first violation.
pub fn check_plans(plans: &[SplitPlan]) -> Result<(), String> {
    let mut seen_test = BTreeSet::new();
    for p in plans {
        let train: BTreeSet<_> = p.train.iter().collect();
        let val: BTreeSet<_> = p.val.iter().collect();
        let test: BTreeSet<_> = p.test.iter().collect();
        if !train.is_disjoint(&val) {
            return Err(format!("fold {}: train and val overlap", p.fold));
        }
        if !train.is_disjoint(&test) || !val.is_disjoint(&test) {
            return Err(format!("fold {}: test overlaps train or val", p.fold));
        }
        if !p.train.iter().all(|id| p.train_pool.contains(id)) {
            return Err(format!("fold {}: train outside its pool", p.fold));
        }
        for id in &p.test {
            if !seen_test.insert(id.clone()) {
                return Err(format!("dialogue {id} is in more than one test fold"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i:03}")).collect()
    }

    #[test]
    fn hundred_five_dialogues() {
        let plans = make_splits(ids(105), 13).unwrap();
        assert_eq!(plans.len(), 3);
        for p in &plans {
            assert_eq!(p.test.len(), 35);
            assert_eq!(p.val.len(), 11);
            assert_eq!(p.train.len(), 59);
        }
        check_plans(&plans).unwrap();
    }

    #[test]
    fn minimal_and_too_small() {
        let plans = make_splits(ids(3), 1).unwrap();
        assert!(plans
            .iter()
            .all(|p| p.test.len() == 1 && p.train.len() + p.val.len() == 2));
        assert_eq!(make_splits(ids(2), 1), Err(SplitError::TooSmall(2)));
        assert_eq!(
            make_splits(["a", "b", "a"], 1),
            Err(SplitError::DuplicateId("a".into()))
        );
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        assert_eq!(
            make_splits(ids(40), 5).unwrap(),
            make_splits(ids(40), 5).unwrap()
        );
        assert_ne!(
            make_splits(ids(40), 5).unwrap(),
            make_splits(ids(40), 6).unwrap()
        );
        let mut rev = ids(40);
        rev.reverse();
        assert_eq!(
            make_splits(rev, 5).unwrap(),
            make_splits(ids(40), 5).unwrap()
        );
    }

    #[test]
    fn fractions() {
        assert_eq!(Fraction::new(10).unwrap().of(60), 6);
        assert_eq!(Fraction::new(75).unwrap().of(59), 45);
        assert!(matches!(
            Fraction::new(25),
            Err(SplitError::InvalidFraction(_))
        ));
        assert!("15".parse::<Fraction>().is_err());
        assert_eq!("50%".parse::<Fraction>().unwrap().percent(), 50);

        let plan = &make_splits(ids(90), 2).unwrap()[0];
        assert_eq!(fractional_subset(plan, Fraction::FULL).train, plan.train);
    }

    #[test]
    fn manifest_round_trip() {
        let plans = make_splits(ids(30), 9).unwrap();
        let m = SplitManifest::from_plans(&plans);
        assert_eq!(m.fold_assignments.len(), 30);
        assert_eq!(SplitManifest::from_json(&m.to_json()).unwrap(), m);
        let ten = m.ids(1, Role::Train, Fraction::new(10).unwrap()).unwrap();
        assert_eq!(
            ten,
            &fractional_subset(&plans[1], Fraction::new(10).unwrap()).train[..]
        );
        assert_eq!(
            m.ids(2, Role::Test, Fraction::FULL).unwrap(),
            &plans[2].test[..]
        );
        assert_eq!(
            m.ids(3, Role::Val, Fraction::FULL),
            Err(SplitError::NoSuchFold(3))
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn partition_and_nesting(n in 3usize..150, seed in any::<u64>()) {
                let plans = make_splits(ids(n), seed).unwrap();
                check_plans(&plans).unwrap();
                let tests: usize = plans.iter().map(|p| p.test.len()).sum();
                prop_assert_eq!(tests, n);
                let (lo, hi) = (plans.iter().map(|p| p.test.len()).min().unwrap(), plans.iter().map(|p| p.test.len()).max().unwrap());
                prop_assert!(hi - lo <= 1);
                for p in &plans {
                    prop_assert_eq!(p.train.len() + p.val.len() + p.test.len(), n);
                    let mut prev: BTreeSet<String> = BTreeSet::new();
                    for f in Fraction::all() {
                        let sub = fractional_subset(p, f);
                        prop_assert_eq!(sub.train.len(), f.of(p.train_pool.len()));
                        let cur: BTreeSet<String> = sub.train.into_iter().collect();
                        prop_assert!(prev.is_subset(&cur));
                        prev = cur;
                    }
                }
            }
        }
    }
}
