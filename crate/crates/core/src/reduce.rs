//! Fixed-shape batch reductions.
//!
//! Samples are grouped into consecutive blocks of [`BLOCK`] samples. Inside a
//! block, values are accumulated left to right starting from the first sample.
//! Block partials are then combined by a pairwise tree: a run of `n` partials
//! is split at `n / 2`, both halves are reduced recursively and the left result
//! absorbs the right one. The shape depends only on the sample count, so batch
//! sums are reproducible bit for bit however they are scheduled.

/// Samples per sequential accumulation block.
pub const BLOCK: usize = 8;

/// Reduces `items` with the pairwise tree described in the module docs.
/// Returns `None` for an empty input.
pub fn pairwise<T>(mut items: Vec<T>, combine: &mut impl FnMut(&mut T, T)) -> Option<T> {
    match items.len() {
        0 => None,
        1 => items.pop(),
        n => {
            let right = items.split_off(n / 2);
            let mut left = pairwise(items, combine)?;
            let right = pairwise(right, combine)?;
            combine(&mut left, right);
            Some(left)
        }
    }
}

/// Block-then-pairwise sum of a slice of scalars.
pub fn sum(values: &[f64]) -> f64 {
    let partials: Vec<f64> = values
        .chunks(BLOCK)
        .map(|block| block[1..].iter().fold(block[0], |acc, v| acc + v))
        .collect();
    pairwise(partials, &mut |a, b| *a += b).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_shape() {
        // n = 3 splits into [a] and [b, c]
        let out = pairwise(vec!["a".to_string(), "b".into(), "c".into()], &mut |l, r| {
            *l = format!("({l}+{r})")
        });
        assert_eq!(out.unwrap(), "(a+(b+c))");
        let out = pairwise((0..4).map(|i| i.to_string()).collect(), &mut |l, r| {
            *l = format!("({l}+{r})")
        });
        assert_eq!(out.unwrap(), "((0+1)+(2+3))");
    }

    #[test]
    fn sums() {
        assert_eq!(sum(&[]), 0.0);
        assert_eq!(sum(&[1.5]), 1.5);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(sum(&v), 5050.0);
    }
}
