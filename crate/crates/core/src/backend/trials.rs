use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::parallel::{try_map_range, Parallelism};

/// Number of same-class and cross-class trials drawn by default.
pub const DEFAULT_TRIALS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    /// Same class (within-language/speaker) when true.
    pub target: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialSet {
    pub pairs: Vec<Trial>,
}

impl TrialSet {
    /// Draws `n_target` same-class and `n_nontarget` cross-class pairs
    /// uniformly at random (with replacement, never pairing a vector with
    /// itself).
    pub fn sample(
        vectors: &[DVector<f64>],
        labels: &[usize],
        n_target: usize,
        n_nontarget: usize,
        seed: u64,
    ) -> Result<TrialSet> {
        if vectors.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: vectors.len(),
                found: labels.len(),
            });
        }
        let mut classes: Vec<usize> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::Invalid("trials need at least 2 classes".into()));
        }
        let members: Vec<Vec<usize>> = classes
            .iter()
            .map(|c| (0..labels.len()).filter(|&i| labels[i] == *c).collect())
            .collect();
        let multi: Vec<&Vec<usize>> = members.iter().filter(|m| m.len() >= 2).collect();
        if multi.is_empty() && n_target > 0 {
            return Err(Error::Invalid("no class has two vectors for a target trial".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::with_capacity(n_target + n_nontarget);
        for _ in 0..n_target {
            let m = multi[rng.random_range(0..multi.len())];
            let i = rng.random_range(0..m.len());
            let mut j = rng.random_range(0..m.len() - 1);
            if j >= i {
                j += 1;
            }
            pairs.push(Trial {
                a: vectors[m[i]].clone(),
                b: vectors[m[j]].clone(),
                target: true,
            });
        }
        for _ in 0..n_nontarget {
            let ci = rng.random_range(0..members.len());
            let mut cj = rng.random_range(0..members.len() - 1);
            if cj >= ci {
                cj += 1;
            }
            let a = members[ci][rng.random_range(0..members[ci].len())];
            let b = members[cj][rng.random_range(0..members[cj].len())];
            pairs.push(Trial {
                a: vectors[a].clone(),
                b: vectors[b].clone(),
                target: false,
            });
        }
        Ok(TrialSet { pairs })
    }

    pub fn validate(&self) -> Result<()> {
        let targets = self.pairs.iter().filter(|p| p.target).count();
        if targets == 0 || targets == self.pairs.len() {
            return Err(Error::Invalid(
                "trial set needs at least one target and one nontarget pair".into(),
            ));
        }
        Ok(())
    }
}

/// Similarity scores split by trial type, each in trial order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialScores {
    pub target: Vec<f64>,
    pub nontarget: Vec<f64>,
}

/// Scores each trial with `similarity` (higher = same class).
pub fn score_trials<F>(similarity: F, trials: &TrialSet) -> Result<TrialScores>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> Result<f64> + Sync + Send,
{
    score_trials_with(similarity, trials, Parallelism::default())
}

pub fn score_trials_with<F>(similarity: F, trials: &TrialSet, par: Parallelism) -> Result<TrialScores>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> Result<f64> + Sync + Send,
{
    trials.validate()?;
    let scores = try_map_range(trials.pairs.len(), par, |i| {
        similarity(&trials.pairs[i].a, &trials.pairs[i].b)
    })?;
    let mut out = TrialScores::default();
    for (t, s) in trials.pairs.iter().zip(scores) {
        if t.target {
            out.target.push(s);
        } else {
            out.nontarget.push(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecs() -> (Vec<DVector<f64>>, Vec<usize>) {
        let xs = (0..10).map(|i| DVector::from_element(2, i as f64)).collect();
        let labels = (0..10).map(|i| i / 5).collect();
        (xs, labels)
    }

    #[test]
    fn sampled_pairs_respect_labels() {
        let (xs, labels) = vecs();
        let t = TrialSet::sample(&xs, &labels, 50, 40, 1).unwrap();
        assert_eq!(t.pairs.len(), 90);
        for p in &t.pairs {
            let (a, b) = (p.a[0] as usize / 5, p.b[0] as usize / 5);
            assert_eq!(p.target, a == b);
            assert_ne!(p.a[0], p.b[0]);
        }
        assert_eq!(t, TrialSet::sample(&xs, &labels, 50, 40, 1).unwrap());
    }

    #[test]
    fn perfect_scorer_separates() {
        let (xs, labels) = vecs();
        let t = TrialSet::sample(&xs, &labels, 20, 20, 2).unwrap();
        let s = score_trials(
            |a, b| Ok(if (a[0] as usize / 5) == (b[0] as usize / 5) { 1.0 } else { 0.0 }),
            &t,
        )
        .unwrap();
        assert!(s.target.iter().all(|&v| v == 1.0));
        assert!(s.nontarget.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_sided_trials_rejected() {
        let (xs, labels) = vecs();
        let t = TrialSet::sample(&xs, &labels, 5, 0, 2).unwrap();
        assert!(score_trials(|_, _| Ok(0.0), &t).is_err());
        assert!(TrialSet::sample(&xs, &[0; 10], 5, 5, 2).is_err());
    }
}
