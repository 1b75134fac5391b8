//! Data-parallel helpers. With the `parallel` feature the closures run on the
//! rayon pool; without it they run in a plain loop. Results are always
//! returned in index order, so callers reduce them sequentially and get the
//! same answer for any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f(0..n)` and collects the results in order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps a slice in order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Fallible [`map_range`]; returns the error of the lowest failing index.
pub fn try_map_range<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_range(n, f).into_iter().collect()
}

/// Whether this build runs the data-parallel paths on rayon.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let v = map_range(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
        let s = map_slice(&[3, 1, 2], |x| x + 1);
        assert_eq!(s, vec![4, 2, 3]);
    }

    #[test]
    fn first_error_wins() {
        let r: Result<Vec<usize>, usize> = try_map_range(100, |i| if i % 30 == 29 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(29));
    }
}
