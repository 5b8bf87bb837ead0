/// Execution strategy for the data-parallel loops (support counting,
/// candidate scoring, pattern scoring, evaluation rows).
///
/// Results are identical under both strategies; only wall time differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        Self::auto()
    }
}

impl Exec {
    /// Parallel when the `parallel` feature is compiled in.
    pub fn auto() -> Self {
        #[cfg(feature = "parallel")]
        {
            Exec::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Exec::Sequential
        }
    }

    /// Order-preserving map.
    pub(crate) fn map<'a, T, R, F>(self, items: &'a [T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&'a T) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
        }
    }

    /// Fold every item into an accumulator, then merge accumulators. `merge`
    /// must be associative and commutative for the parallel result to match.
    pub(crate) fn fold<'a, T, A, I, F, M>(self, items: &'a [T], init: I, fold: F, merge: M) -> A
    where
        T: Sync,
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(A, &'a T) -> A + Sync + Send,
        M: Fn(A, A) -> A + Sync + Send,
    {
        match self {
            Exec::Sequential => {
                let _ = &merge;
                items.iter().fold(init(), fold)
            }
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().fold(&init, fold).reduce(&init, merge)
            }
        }
    }
}
