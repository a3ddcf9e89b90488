use rand::seq::SliceRandom;

use crate::error::{data_err, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(data_err!("unknown split '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn of(&self, id: &str) -> Option<SplitName> {
        if self.train.iter().any(|x| x == id) {
            Some(SplitName::Train)
        } else if self.val.iter().any(|x| x == id) {
            Some(SplitName::Val)
        } else if self.test.iter().any(|x| x == id) {
            Some(SplitName::Test)
        } else {
            None
        }
    }
}

/// Seeded 80/10/10 partition: `train = ⌊0.8·n⌋`, `val = ⌊0.1·n⌋`, and test
/// takes the rest (787 → 629/78/80). Input order does not matter.
pub fn split<S: AsRef<str>>(ids: &[S], seed: u64) -> Result<DatasetSplit> {
    let n = ids.len();
    if n < 10 {
        return Err(data_err!("need at least 10 frames to split, got {n}"));
    }
    let mut sorted: Vec<String> = ids.iter().map(|s| s.as_ref().to_string()).collect();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(data_err!("duplicate frame ids"));
    }
    sorted.shuffle(&mut rng_for(seed, "split"));
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let test = sorted.split_off(n_train + n_val);
    let val = sorted.split_off(n_train);
    Ok(DatasetSplit {
        train: sorted,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i:04}")).collect()
    }

    #[test]
    fn reported_proportions() {
        let s = split(&ids(787), 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (629, 78, 80));
        let s = split(&ids(10), 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        let s = split(&ids(200), 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (160, 20, 20));
    }

    #[test]
    fn deterministic_and_order_free() {
        let a = split(&ids(50), 9).unwrap();
        let mut rev = ids(50);
        rev.reverse();
        assert_eq!(a, split(&rev, 9).unwrap());
        assert_ne!(a, split(&ids(50), 10).unwrap());
        assert!(split(&ids(9), 0).is_err());
    }

    proptest! {
        #[test]
        fn is_a_partition(n in 10usize..300, seed in any::<u64>()) {
            let all = ids(n);
            let s = split(&all, seed).unwrap();
            let mut joined: Vec<String> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
            joined.sort();
            prop_assert_eq!(joined, all);
        }
    }
}
