use crate::error::{Error, Result};
use rand::Rng;

/// Multiplicity histogram of one bootstrap draw: `counts[i]` is the number
/// of occurrences h_i of instance i, with sum(counts) = n. An instance is
/// out-of-bag for the tree iff its count is zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapSample {
    counts: Vec<u32>,
}

impl BootstrapSample {
    pub fn from_counts(counts: Vec<u32>) -> Result<Self> {
        let n = counts.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty bootstrap".into()));
        }
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total != n as u64 {
            return Err(Error::InvalidArgument(format!(
                "bootstrap counts sum to {total}, expected {n}"
            )));
        }
        Ok(Self { counts })
    }

    #[inline]
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.counts.len()
    }

    #[inline]
    pub fn is_oob(&self, i: usize) -> bool {
        self.counts[i] == 0
    }

    pub fn oob_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
    }

    /// In-bag instances as (index, multiplicity) pairs.
    pub fn members(&self) -> Vec<(u32, u32)> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as u32, c))
            .collect()
    }
}

/// Draw n i.i.d. uniform indices from {0..n-1} and return their
/// multiplicity histogram.
pub fn bootstrap_sample<R: Rng>(n: usize, rng: &mut R) -> Result<BootstrapSample> {
    if n == 0 {
        return Err(Error::InvalidArgument("bootstrap of size 0".into()));
    }
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    BootstrapSample::from_counts(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::tree_rng;

    #[test]
    fn single_instance() {
        let mut rng = tree_rng(1, 0);
        let s = bootstrap_sample(1, &mut rng).unwrap();
        assert_eq!(s.counts(), &[1]);
    }

    #[test]
    fn zero_size_rejected() {
        let mut rng = tree_rng(1, 0);
        assert!(bootstrap_sample(0, &mut rng).is_err());
    }

    #[test]
    fn totals_and_oob_fraction() {
        // fraction of zeros approaches (1 - 1/n)^n -> e^{-1} = 0.3679
        let mut rng = tree_rng(7, 0);
        let s = bootstrap_sample(1000, &mut rng).unwrap();
        let total: u64 = s.counts().iter().map(|&c| c as u64).sum();
        assert_eq!(total, 1000);
        let zeros = s.counts().iter().filter(|&&c| c == 0).count() as f64 / 1000.0;
        assert!((zeros - 0.368).abs() < 0.05, "oob fraction {zeros}");
    }

    #[test]
    fn same_seed_same_counts() {
        let a = bootstrap_sample(50, &mut tree_rng(9, 3)).unwrap();
        let b = bootstrap_sample(50, &mut tree_rng(9, 3)).unwrap();
        assert_eq!(a, b);
    }
}
