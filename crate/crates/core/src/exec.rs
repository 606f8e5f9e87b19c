//! Data-parallel execution with a sequential fallback.
//!
//! Results always come back in index order, so anything reduced from them
//! is independent of the thread count.

/// How independent work items are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Uses the current rayon pool. Without the `parallel` feature this is
    /// the same as [`Exec::Sequential`].
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn map<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Runs `f(k, chunk)` on the `k`-th consecutive chunk of `out`.
    pub fn for_each_chunk<T, F>(self, out: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                out.par_chunks_mut(chunk)
                    .enumerate()
                    .for_each(|(i, c)| f(i, c));
            }
            _ => out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c)),
        }
    }
}

/// Pairwise summation in a fixed tree order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let a = Exec::Sequential.map(100, |i| (i * i) as f64);
        let b = Exec::Parallel.map(100, |i| (i * i) as f64);
        assert_eq!(a, b);
        let mut x = vec![0usize; 10];
        let mut y = vec![0usize; 10];
        Exec::Sequential.for_each_chunk(&mut x, 3, |k, c| c.iter_mut().for_each(|v| *v = k));
        Exec::Parallel.for_each_chunk(&mut y, 3, |k, c| c.iter_mut().for_each(|v| *v = k));
        assert_eq!(x, y);
        assert_eq!(x[9], 3);
    }

    #[test]
    fn pairwise_sum_matches_exact_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
