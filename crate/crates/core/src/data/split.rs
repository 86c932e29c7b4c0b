use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AffectiveDataset, DataError};

/// Stratified train/validation partition.
///
/// The train part has exactly `round(train_fraction * N)` records. Each
/// category contributes `floor(fraction * n_c)` records plus possibly one
/// more, handed out by largest fractional remainder. Categories with fewer
/// than two records go to train whole. Both parts keep the dataset's order.
pub fn split(
    ds: &AffectiveDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(AffectiveDataset, AffectiveDataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidFraction(train_fraction));
    }
    let n = ds.len();
    let target = (train_fraction * n as f64).round() as usize;

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in ds.class_indices().into_iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }

    let mut quota: BTreeMap<usize, usize> = BTreeMap::new();
    let mut fixed = 0usize;
    let mut remainders = Vec::new();
    for (&class, members) in &by_class {
        if members.len() < 2 {
            warn!(
                "category `{}` has {} record(s); cannot stratify, assigning to train",
                ds.category_map().classes()[class],
                members.len()
            );
            quota.insert(class, members.len());
            fixed += members.len();
            continue;
        }
        let exact = train_fraction * members.len() as f64;
        let floor = exact.floor() as usize;
        quota.insert(class, floor);
        fixed += floor;
        remainders.push((exact - floor as f64, class, members.len()));
    }

    // Largest remainder first; ties broken by class index for determinism.
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    if target > fixed {
        let mut extra = target - fixed;
        for &(_, class, size) in &remainders {
            if extra == 0 {
                break;
            }
            let q = quota.get_mut(&class).expect("quota");
            if *q < size {
                *q += 1;
                extra -= 1;
            }
        }
    } else if fixed > target {
        let mut surplus = fixed - target;
        for &(_, class, _) in remainders.iter().rev() {
            if surplus == 0 {
                break;
            }
            let q = quota.get_mut(&class).expect("quota");
            if *q > 0 {
                *q -= 1;
                surplus -= 1;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; n];
    for (class, members) in &by_class {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..quota[class]] {
            in_train[i] = true;
        }
    }
    let train: Vec<usize> = (0..n).filter(|&i| in_train[i]).collect();
    let val: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
    Ok((ds.subset(&train)?, ds.subset(&val)?))
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;

    use super::*;
    use crate::data::{assign_category, assign_quadrant, AffectiveRecord, CategoryMap};

    fn dataset(points: &[(f64, f64)]) -> AffectiveDataset {
        let map = CategoryMap::default();
        let records = points
            .iter()
            .enumerate()
            .map(|(i, &(v, a))| AffectiveRecord {
                image_path: PathBuf::from(format!("img_{i}.png")),
                source: "synthetic".into(),
                valence_raw: v,
                arousal_raw: a,
                valence: v,
                arousal: a,
                quadrant: assign_quadrant(v, a),
                category: assign_category(v, a, &map).to_string(),
                augmentation: None,
            })
            .collect();
        AffectiveDataset::new(records, map).unwrap()
    }

    fn spread(n: usize) -> Vec<(f64, f64)> {
        let map = CategoryMap::default();
        (0..n).map(|i| map.class_centre(i % 13, 0.3 + 0.5 * (i % 7) as f64 / 7.0)).collect()
    }

    #[test]
    fn sizes_follow_rounding_rule() {
        let (train, val) = split(&dataset(&spread(100)), 0.8, 1).unwrap();
        assert_eq!((train.len(), val.len()), (80, 20));
        let (train, val) = split(&dataset(&spread(5866)), 0.8, 1).unwrap();
        assert_eq!((train.len(), val.len()), (4693, 1173));
    }

    #[test]
    fn deterministic_and_disjoint() {
        let ds = dataset(&spread(250));
        let (a_train, a_val) = split(&ds, 0.7, 42).unwrap();
        let (b_train, b_val) = split(&ds, 0.7, 42).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_val, b_val);
        for r in a_val.records() {
            assert!(!a_train.records().iter().any(|t| t.image_path == r.image_path));
        }
        assert_eq!(a_train.len() + a_val.len(), ds.len());
        let (c_train, _) = split(&ds, 0.7, 43).unwrap();
        assert_ne!(a_train, c_train);
    }

    #[test]
    fn stratification_within_one_record() {
        let ds = dataset(&spread(397));
        let (train, _) = split(&ds, 0.8, 5).unwrap();
        let all = ds.category_counts();
        let got = train.category_counts();
        for (label, &n) in &all {
            let expected = 0.8 * n as f64;
            assert!((got[label] as f64 - expected).abs() <= 1.0, "{label}: {} vs {expected}", got[label]);
        }
    }

    #[test]
    fn singleton_category_goes_to_train() {
        let mut points = vec![(0.0, 0.0); 9];
        points.push((0.9, 0.1));
        let ds = dataset(&points);
        let (train, val) = split(&ds, 0.5, 0).unwrap();
        assert!(train.records().iter().any(|r| r.category == "Happy"));
        assert_eq!(train.len() + val.len(), 10);
        assert_eq!(train.len(), 5);
    }

    #[test]
    fn rejects_bad_fraction() {
        let ds = dataset(&spread(10));
        assert!(split(&ds, 0.0, 0).is_err());
        assert!(split(&ds, 1.0, 0).is_err());
    }
}
