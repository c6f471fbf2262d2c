use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Column;
use crate::error::{Error, Result};

/// Stand-in value for a column with no non-null cells.
pub const EMPTY_SENTINEL: &str = "[EMPTY]";

/// Uniformly samples up to `m` non-null cells without replacement, keeping
/// row order. Columns with fewer than `m` non-null cells are returned whole.
pub fn sample_column_values(column: &Column, m: usize, seed: u64) -> Result<Vec<String>> {
    if m == 0 {
        return Err(Error::invalid("sample size m must be at least 1"));
    }
    let values: Vec<&str> = column.non_null().collect();
    if values.is_empty() {
        return Ok(vec![EMPTY_SENTINEL.to_string()]);
    }
    if values.len() <= m {
        return Ok(values.into_iter().map(String::from).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, values.len(), m).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| values[i].to_string()).collect())
}
