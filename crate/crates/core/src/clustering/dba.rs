use crate::distance::dtw_align_into;

use super::ClusterError;

/// DTW barycenter averaging.
///
/// Starting from `init`, every member is aligned to the current barycenter
/// with the banded DP and each barycenter coordinate is replaced by the mean
/// of the member values aligned to it. Stops after `iters` refinements or as
/// soon as the total accumulated DTW cost stops decreasing; the cheapest
/// barycenter seen is returned.
pub fn dba_barycenter(
    members: &[Vec<f64>],
    radius: usize,
    iters: usize,
    init: &[f64],
) -> Result<Vec<f64>, ClusterError> {
    if members.is_empty() {
        return Err(ClusterError::NoProfiles);
    }
    if members.iter().any(|m| m.len() != init.len()) {
        return Err(ClusterError::RaggedProfiles);
    }
    Ok(refine(members.iter().map(Vec::as_slice), radius, iters, init).0)
}

/// Returns the barycenter and its total accumulated cost to the members.
pub(crate) fn refine<'a, I>(members: I, radius: usize, iters: usize, init: &[f64]) -> (Vec<f64>, f64)
where
    I: Iterator<Item = &'a [f64]> + Clone,
{
    let n = init.len();
    let mut current = init.to_vec();
    let mut best = current.clone();
    let mut best_cost = f64::INFINITY;
    for it in 0..=iters {
        let mut sums = vec![0.0; n];
        let mut counts = vec![0usize; n];
        let mut cost = 0.0;
        for m in members.clone() {
            cost += dtw_align_into(&current, m, radius, &mut sums, &mut counts);
        }
        if cost < best_cost {
            best_cost = cost;
            best.clone_from(&current);
        } else {
            break;
        }
        if it == iters {
            break;
        }
        for ((c, s), k) in current.iter_mut().zip(&sums).zip(&counts) {
            *c = s / *k as f64;
        }
    }
    (best, best_cost)
}

#[cfg(test)]
/// Total accumulated banded DTW cost of `center` to `members`.
pub(crate) fn total_cost<'a>(members: impl Iterator<Item = &'a [f64]>, center: &[f64], radius: usize) -> f64 {
    members.map(|m| crate::distance::dtw_cost(center, m, radius, f64::INFINITY)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::mean_of;

    fn impulse(at: usize) -> Vec<f64> {
        let mut v = vec![0.0; 24];
        v[at] = 1.0;
        v
    }

    #[test]
    fn single_and_identical_members() {
        let m = vec![(0..24).map(|h| h as f64 / 100.0).collect::<Vec<_>>()];
        assert_eq!(dba_barycenter(&m, 1, 10, &vec![0.0; 24]).unwrap(), m[0]);
        let same = vec![m[0].clone(); 4];
        assert_eq!(dba_barycenter(&same, 1, 10, &m[0]).unwrap(), m[0]);
        assert_eq!(
            dba_barycenter(&[], 1, 10, &m[0]),
            Err(ClusterError::NoProfiles)
        );
    }

    #[test]
    fn beats_arithmetic_mean_on_shifted_impulses() {
        let members = vec![impulse(10), impulse(11)];
        let mean = mean_of(&members, 24);
        let bary = dba_barycenter(&members, 1, 10, &mean).unwrap();
        let slices = || members.iter().map(Vec::as_slice);
        let c_mean = total_cost(slices(), &mean, 1);
        let c_bary = total_cost(slices(), &bary, 1);
        assert!(c_bary <= c_mean, "{c_bary} > {c_mean}");
    }
}
