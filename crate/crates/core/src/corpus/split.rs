//! Stratified train/validation/test splitting over group ids.
//!
//! Groups are bucketed by joint label pattern, shuffled within each bucket
//! by seed, then assigned greedily to the split whose per-dimension
//! positive rates deviate least from the whole-dataset rates, subject to
//! exact split-size targets. A bounded pattern-level swap pass then
//! tightens marginal balance. Deterministic for a fixed
//! (dataset, ratios, seed).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// Disjoint group-id partitions covering the whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub ratios: (f64, f64, f64),
}

impl DatasetSplit {
    pub fn part(&self, which: usize) -> &[String] {
        match which {
            0 => &self.train,
            1 => &self.validation,
            _ => &self.test,
        }
    }
}

/// Largest-remainder apportionment of `n` into three integer targets.
fn targets(n: usize, ratios: (f64, f64, f64)) -> [usize; 3] {
    let r = [ratios.0, ratios.1, ratios.2];
    let exact: Vec<f64> = r.iter().map(|x| x * n as f64).collect();
    let mut t: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut rem: usize = n - t.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if rem == 0 {
            break;
        }
        t[i] += 1;
        rem -= 1;
    }
    [t[0], t[1], t[2]]
}

struct Assignment {
    // group index per split
    members: [Vec<usize>; 3],
    // positive counts per split per dimension
    pos: [Vec<f64>; 3],
}

impl Assignment {
    fn rate(&self, split: usize, dim: usize) -> f64 {
        let n = self.members[split].len();
        if n == 0 {
            0.0
        } else {
            self.pos[split][dim] / n as f64
        }
    }

    fn max_deviation(&self, global: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for s in 0..3 {
            for (j, &g) in global.iter().enumerate() {
                worst = worst.max((self.rate(s, j) - g).abs());
            }
        }
        worst
    }

    /// Sum of squared per-cell rate deviations; the descent objective for
    /// the swap pass.
    fn squared_deviation(&self, global: &[f64]) -> f64 {
        let mut total = 0.0;
        for s in 0..3 {
            for (j, &g) in global.iter().enumerate() {
                let d = self.rate(s, j) - g;
                total += d * d;
            }
        }
        total
    }
}

/// Splits a dataset into train/validation/test group-id lists with
/// per-dimension positive rates balanced across splits.
pub fn stratified_split(
    dataset: &Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit> {
    let (r0, r1, r2) = ratios;
    if r0 <= 0.0 || r1 <= 0.0 || r2 <= 0.0 {
        return Err(Error::Config("split ratios must be positive".into()));
    }
    if (r0 + r1 + r2 - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios sum to {}, expected 1",
            r0 + r1 + r2
        )));
    }

    let ids: Vec<String> = dataset.group_ids().iter().map(|s| s.to_string()).collect();
    let n = ids.len();
    if n < 3 {
        return Err(Error::Config(format!(
            "dataset has {n} groups, need at least one per split"
        )));
    }
    let target = targets(n, ratios);
    if target.contains(&0) {
        return Err(Error::Config(
            "ratios leave a split empty for this dataset size".into(),
        ));
    }

    let labels: Vec<Vec<u8>> = ids
        .iter()
        .map(|id| {
            dataset
                .group_labels(id)
                .expect("group id came from the dataset")
                .bits()
                .to_vec()
        })
        .collect();
    let dims = labels.first().map(|l| l.len()).unwrap_or(0);
    let mut global = vec![0.0; dims];
    for l in &labels {
        for (j, &b) in l.iter().enumerate() {
            global[j] += b as f64;
        }
    }
    for g in global.iter_mut() {
        *g /= n as f64;
    }

    // Bucket by joint label pattern, most frequent pattern first; shuffle
    // within each bucket by seed.
    let mut buckets: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        buckets.entry(l.clone()).or_default().push(i);
    }
    let mut bucket_list: Vec<(Vec<u8>, Vec<usize>)> = buckets.into_iter().collect();
    bucket_list.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(n);
    for (_, mut members) in bucket_list {
        members.shuffle(&mut rng);
        order.extend(members);
    }

    let mut asg = Assignment {
        members: [Vec::new(), Vec::new(), Vec::new()],
        pos: [vec![0.0; dims], vec![0.0; dims], vec![0.0; dims]],
    };

    for &gi in &order {
        let y = &labels[gi];
        let mut best: Option<(f64, f64, usize)> = None;
        for s in 0..3 {
            if asg.members[s].len() >= target[s] {
                continue;
            }
            // Squared shortfall of positives against the expected count at
            // the current fill, normalized by the final target so splits of
            // different sizes compare fairly.
            let n_after = (asg.members[s].len() + 1) as f64;
            let mut cost = 0.0;
            for j in 0..dims {
                let d = (asg.pos[s][j] + y[j] as f64 - global[j] * n_after) / target[s] as f64;
                cost += d * d;
            }
            // Tie-break on the largest relative remaining deficit.
            let deficit = (target[s] - asg.members[s].len()) as f64 / target[s] as f64;
            let candidate = (cost, -deficit, s);
            if best.is_none_or(|b| candidate < b) {
                best = Some(candidate);
            }
        }
        let (_, _, s) = best.expect("targets sum to n, so one split has room");
        asg.members[s].push(gi);
        for j in 0..dims {
            asg.pos[s][j] += y[j] as f64;
        }
    }

    repair(&mut asg, &labels, &global, dims);

    let collect = |members: &[usize]| -> Vec<String> {
        let mut sorted = members.to_vec();
        sorted.sort();
        sorted.into_iter().map(|i| ids[i].clone()).collect()
    };
    Ok(DatasetSplit {
        train: collect(&asg.members[0]),
        validation: collect(&asg.members[1]),
        test: collect(&asg.members[2]),
        ratios,
    })
}

/// Pattern-level swap pass: exchanges one group between two splits while
/// the swap lowers the summed squared rate deviation. Counts are
/// preserved, so split sizes stay exact.
fn repair(asg: &mut Assignment, labels: &[Vec<u8>], global: &[f64], dims: usize) {
    for _round in 0..5000 {
        if asg.max_deviation(global) <= 0.01 {
            return;
        }
        let current = asg.squared_deviation(global);
        // Distinct patterns present per split (pattern -> first member pos).
        let mut per_split: [BTreeMap<&[u8], usize>; 3] = Default::default();
        for s in 0..3 {
            for (k, &gi) in asg.members[s].iter().enumerate() {
                per_split[s].entry(&labels[gi]).or_insert(k);
            }
        }
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for sa in 0..3 {
            for sb in (sa + 1)..3 {
                let (na, nb) = (
                    asg.members[sa].len() as f64,
                    asg.members[sb].len() as f64,
                );
                for (pa, &ka) in &per_split[sa] {
                    for (pb, &kb) in &per_split[sb] {
                        if pa == pb {
                            continue;
                        }
                        let mut obj = asg.squared_deviation(global);
                        for j in 0..dims {
                            let delta = pb[j] as f64 - pa[j] as f64;
                            if delta == 0.0 {
                                continue;
                            }
                            let old_a = asg.pos[sa][j] / na - global[j];
                            let new_a = (asg.pos[sa][j] + delta) / na - global[j];
                            let old_b = asg.pos[sb][j] / nb - global[j];
                            let new_b = (asg.pos[sb][j] - delta) / nb - global[j];
                            obj += new_a * new_a - old_a * old_a;
                            obj += new_b * new_b - old_b * old_b;
                        }
                        let cand = (obj, sa, sb, ka, kb);
                        if best.is_none_or(|b| cand < b) {
                            best = Some(cand);
                        }
                    }
                }
            }
        }
        match best {
            Some((obj, sa, sb, ka, kb)) if obj < current - 1e-15 => {
                let ga = asg.members[sa][ka];
                let gb = asg.members[sb][kb];
                asg.members[sa][ka] = gb;
                asg.members[sb][kb] = ga;
                for j in 0..dims {
                    let delta = labels[gb][j] as f64 - labels[ga][j] as f64;
                    asg.pos[sa][j] += delta;
                    asg.pos[sb][j] -= delta;
                }
            }
            _ => return,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_dataset_from, TraitScheme};
    use std::collections::BTreeSet;
    use std::io::Cursor;

    fn synthetic_dataset(n: usize, dims: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = String::new();
        for i in 0..n {
            let bits: Vec<String> = (0..dims)
                .map(|_| if rng.gen_bool(0.5) { "1" } else { "0" }.to_string())
                .collect();
            data.push_str(&format!(
                r#"{{"group_id": "g{i:05}", "language": "en", "variant": "regular", "text": "t", "labels": [{}]}}"#,
                bits.join(",")
            ));
            data.push('\n');
        }
        let scheme = if dims == 5 {
            TraitScheme::big5()
        } else {
            TraitScheme::mbti4()
        };
        load_dataset_from(Cursor::new(data), &scheme).unwrap()
    }

    #[test]
    fn four_groups_split_two_one_one() {
        let ds = synthetic_dataset(4, 5, 0);
        let split = stratified_split(&ds, (0.5, 0.25, 0.25), 3).unwrap();
        assert_eq!(split.train.len(), 2);
        assert_eq!(split.validation.len(), 1);
        assert_eq!(split.test.len(), 1);
    }

    #[test]
    fn essays_shaped_counts() {
        // 2,467 groups at the dataset's own subset proportions.
        let n = 2467.0;
        let ds = synthetic_dataset(2467, 5, 1);
        let split = stratified_split(&ds, (1578.0 / n, 395.0 / n, 494.0 / n), 9).unwrap();
        assert_eq!(split.train.len(), 1578);
        assert_eq!(split.validation.len(), 395);
        assert_eq!(split.test.len(), 494);
    }

    #[test]
    fn all_positive_dimension_keeps_rate_one() {
        let mut data = String::new();
        for i in 0..40 {
            data.push_str(&format!(
                r#"{{"group_id": "g{i}", "language": "en", "variant": "regular", "text": "t", "labels": [1,1,1,1]}}"#
            ));
            data.push('\n');
        }
        let ds = load_dataset_from(Cursor::new(data), &TraitScheme::mbti4()).unwrap();
        let split = stratified_split(&ds, (0.5, 0.25, 0.25), 0).unwrap();
        let report = crate::corpus::label_balance_report(&split, &ds).unwrap();
        for rates in report.split_rates.values() {
            assert!(rates.iter().all(|&r| r == 1.0));
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let ds = synthetic_dataset(300, 5, 2);
        let a = stratified_split(&ds, (0.6, 0.2, 0.2), 42).unwrap();
        let b = stratified_split(&ds, (0.6, 0.2, 0.2), 42).unwrap();
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
        let c = stratified_split(&ds, (0.6, 0.2, 0.2), 43).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn groups_never_straddle_splits() {
        let ds = synthetic_dataset(100, 5, 3);
        let split = stratified_split(&ds, (0.7, 0.15, 0.15), 5).unwrap();
        let train: BTreeSet<_> = split.train.iter().collect();
        let val: BTreeSet<_> = split.validation.iter().collect();
        let test: BTreeSet<_> = split.test.iter().collect();
        assert!(train.is_disjoint(&val));
        assert!(train.is_disjoint(&test));
        assert!(val.is_disjoint(&test));
        assert_eq!(train.len() + val.len() + test.len(), 100);
    }

    #[test]
    fn too_few_groups_errors() {
        let ds = synthetic_dataset(2, 5, 4);
        assert!(stratified_split(&ds, (0.5, 0.25, 0.25), 0).is_err());
    }

    #[test]
    fn stratification_within_tolerance_on_random_matrices() {
        for seed in 0..12u64 {
            let n = 200 + (seed as usize % 5) * 173;
            let ds = synthetic_dataset(n, 5, seed * 7 + 1);
            let split = stratified_split(&ds, (0.5, 0.25, 0.25), seed).unwrap();
            let report = crate::corpus::label_balance_report(&split, &ds).unwrap();
            for (name, rates) in &report.split_rates {
                for (j, (&r, &g)) in rates.iter().zip(&report.dataset_rates).enumerate() {
                    assert!(
                        (r - g).abs() <= 0.02,
                        "seed {seed} n {n}: {name} dim {j} rate {r} vs global {g}"
                    );
                }
            }
        }
    }
}
