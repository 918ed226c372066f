//! Order-preserving map over independent work items.
//!
//! With the `parallel` feature the map runs on the rayon global pool;
//! without it, or when [`Execution::Sequential`] is requested, it is a plain
//! iterator. Results are returned in input order either way, so callers see
//! identical output regardless of the execution mode.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// True when this mode will actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

pub fn map<T, R, F>(mode: Execution, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == Execution::Parallel {
        use rayon::prelude::*;
        return items.into_par_iter().map(f).collect();
    }
    let _ = mode;
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let input: Vec<u64> = (0..1000).collect();
        let a = map(Execution::Parallel, input.clone(), |x| x * x);
        let b = map(Execution::Sequential, input, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(a[31], 961);
    }
}
