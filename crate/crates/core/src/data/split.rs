use std::collections::BTreeSet;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset};

#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    pub train: Dataset,
    pub holdout: Dataset,
    /// Held-out calendar days, ascending.
    pub holdout_days: Vec<NaiveDate>,
}

/// Holds out every record of `n_days` whole calendar days, drawn uniformly
/// without replacement. The training side must keep at least one day.
pub fn split_holdout(d: &Dataset, n_days: usize, seed: u64) -> Result<HoldoutSplit, DataError> {
    let days = d.days();
    if n_days == 0 || n_days >= days.len() {
        return Err(DataError::InsufficientDays { requested: n_days, available: days.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: BTreeSet<NaiveDate> =
        rand::seq::index::sample(&mut rng, days.len(), n_days).into_iter().map(|i| days[i]).collect();
    Ok(HoldoutSplit {
        train: d.filter(|r| !chosen.contains(&r.date())),
        holdout: d.filter(|r| chosen.contains(&r.date())),
        holdout_days: chosen.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testutil;

    #[test]
    fn year_split_30_days() {
        let d = testutil::hourly(365 * 24);
        let s = split_holdout(&d, 30, 1).unwrap();
        assert_eq!(s.holdout_days.len(), 30);
        assert_eq!(s.holdout.len(), 30 * 24);
        assert_eq!(s.train.days().len(), 335);
        assert_eq!(s.train.len() + s.holdout.len(), d.len());
    }

    #[test]
    fn whole_dataset_is_insufficient() {
        let d = testutil::hourly(3 * 24);
        assert!(matches!(split_holdout(&d, 3, 0), Err(DataError::InsufficientDays { requested: 3, available: 3 })));
        assert!(split_holdout(&d, 0, 0).is_err());
    }

    #[test]
    fn seeded_selection_is_repeatable() {
        let d = testutil::hourly(60 * 24);
        let a = split_holdout(&d, 10, 99).unwrap();
        let b = split_holdout(&d, 10, 99).unwrap();
        assert_eq!(a.holdout_days, b.holdout_days);
        let c = split_holdout(&d, 10, 100).unwrap();
        assert_ne!(a.holdout_days, c.holdout_days);
    }
}
