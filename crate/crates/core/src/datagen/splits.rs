use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{ClientDataset, SemSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetRole {
    Train,
    Holdout,
}

/// A disjoint slice of the corpus assigned to one owner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetPlan {
    pub name: String,
    pub count: usize,
    pub owner: String,
    pub role: SubsetRole,
}

/// A named concatenation of earlier subsets (e.g. the centralized upper bound).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnionPlan {
    pub name: String,
    pub members: Vec<String>,
    pub owner: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub subsets: Vec<SubsetPlan>,
    #[serde(default)]
    pub unions: Vec<UnionPlan>,
}

const TRAIN_NAMES: [&str; 9] = ["A", "B", "C", "D", "E", "F", "G", "H", "I"];

impl SplitPlan {
    /// Nine training subsets A–I of 10 samples (clients 1–9), hold-out J of
    /// 10 samples (client 10) and K = A ∪ … ∪ I.
    pub fn standard() -> Self {
        Self::with_per_subset(10)
    }

    /// The standard ten-subset layout shrunk proportionally to a corpus of `total` images.
    pub fn scaled(total: usize) -> Self {
        Self::with_per_subset(((total as f64 / 10.0).floor() as usize).max(1))
    }

    /// A–I training subsets plus hold-out J, each of `per_subset` samples.
    pub fn with_per_subset(per_subset: usize) -> Self {
        let mut subsets: Vec<SubsetPlan> = TRAIN_NAMES
            .iter()
            .enumerate()
            .map(|(i, name)| SubsetPlan {
                name: (*name).into(),
                count: per_subset,
                owner: format!("client-{}", i + 1),
                role: SubsetRole::Train,
            })
            .collect();
        subsets.push(SubsetPlan { name: "J".into(), count: per_subset, owner: "client-10".into(), role: SubsetRole::Holdout });
        let unions = vec![UnionPlan {
            name: "K".into(),
            members: TRAIN_NAMES.iter().map(|s| (*s).into()).collect(),
            owner: "client-1".into(),
        }];
        SplitPlan { subsets, unions }
    }

    pub fn total(&self) -> usize {
        self.subsets.iter().map(|s| s.count).sum()
    }

    pub fn subset_names(&self) -> impl Iterator<Item = &str> {
        self.subsets.iter().map(|s| s.name.as_str()).chain(self.unions.iter().map(|u| u.name.as_str()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for name in self.subset_names() {
            if !seen.insert(name) {
                return Err(Error::DuplicateSubset(name.to_string()));
            }
        }
        for u in &self.unions {
            for m in &u.members {
                if !self.subsets.iter().any(|s| &s.name == m) {
                    return Err(Error::InvalidArgument(format!("union `{}` references unknown subset `{m}`", u.name)));
                }
            }
        }
        Ok(())
    }
}

/// Partition `samples` into the plan's subsets in order, then append unions.
pub fn build_experiment_splits(samples: &[SemSample], plan: &SplitPlan) -> Result<Vec<ClientDataset>> {
    plan.validate()?;
    let requested = plan.total();
    if requested > samples.len() {
        return Err(Error::InsufficientSamples { requested, available: samples.len() });
    }
    let mut out = Vec::with_capacity(plan.subsets.len() + plan.unions.len());
    let mut cursor = 0;
    for s in &plan.subsets {
        out.push(ClientDataset {
            subset_name: s.name.clone(),
            owner: s.owner.clone(),
            role: s.role,
            samples: samples[cursor..cursor + s.count].to_vec(),
        });
        cursor += s.count;
    }
    for u in &plan.unions {
        let samples = u
            .members
            .iter()
            .flat_map(|m| out.iter().find(|d| &d.subset_name == m).expect("validated").samples.iter().cloned())
            .collect();
        out.push(ClientDataset { subset_name: u.name.clone(), owner: u.owner.clone(), role: SubsetRole::Train, samples });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_corpus, NoiseConfig};

    fn corpus(n: usize) -> Vec<SemSample> {
        generate_corpus(n, 8, 8, 0.5, &NoiseConfig::default(), 1).unwrap()
    }

    #[test]
    fn standard_manifest_on_hundred_samples() {
        let samples = corpus(100);
        let splits = build_experiment_splits(&samples, &SplitPlan::standard()).unwrap();
        assert_eq!(splits.len(), 11);
        let names: Vec<_> = splits.iter().map(|d| d.subset_name.as_str()).collect();
        assert_eq!(names, ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K"]);
        for d in &splits[..10] {
            assert_eq!(d.len(), 10);
        }
        assert_eq!(splits[9].role, SubsetRole::Holdout);
        assert_eq!(splits[10].len(), 90);

        // disjoint partition whose union is the consumed ids
        let mut ids = HashSet::new();
        for d in &splits[..10] {
            for s in &d.samples {
                assert!(ids.insert(s.id.clone()), "duplicate {}", s.id);
            }
        }
        assert_eq!(ids.len(), 100);
        let k: HashSet<_> = splits[10].samples.iter().map(|s| s.id.clone()).collect();
        assert!(splits[9].samples.iter().all(|s| !k.contains(&s.id)));
    }

    #[test]
    fn single_subset_takes_everything() {
        let samples = corpus(10);
        let plan = SplitPlan {
            subsets: vec![SubsetPlan { name: "A".into(), count: 10, owner: "c1".into(), role: SubsetRole::Train }],
            unions: vec![],
        };
        let splits = build_experiment_splits(&samples, &plan).unwrap();
        assert_eq!(splits.len(), 1);
        assert_eq!(splits[0].samples, samples);
    }

    #[test]
    fn over_request_is_an_error() {
        let samples = corpus(100);
        let mut plan = SplitPlan::standard();
        plan.subsets[0].count = 20;
        assert!(matches!(
            build_experiment_splits(&samples, &plan),
            Err(Error::InsufficientSamples { requested: 110, available: 100 })
        ));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let samples = corpus(20);
        let mut plan = SplitPlan::with_per_subset(1);
        plan.subsets[1].name = "A".into();
        assert!(matches!(build_experiment_splits(&samples, &plan), Err(Error::DuplicateSubset(n)) if n == "A"));
    }

    #[test]
    fn scaled_manifest_for_forty_images() {
        let plan = SplitPlan::scaled(40);
        assert_eq!(plan.total(), 40);
        assert!(plan.subsets.iter().all(|s| s.count == 4));
        assert_eq!(SplitPlan::scaled(100), SplitPlan::standard());
    }
}
