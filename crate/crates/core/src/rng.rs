use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseBlock;

/// Seeded generator on an independent stream; streams let every rank
/// regenerate exactly the same global random block.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `rows × cols` block of uniform(−1, 1) entries, filled column by column.
pub fn uniform_matrix(rows: usize, cols: usize, seed: u64, stream: u64) -> DenseBlock {
    random_block_rows(rows, 0..rows, cols, seed, stream)
}

/// The rows `range` of the global `global_rows × cols` matrix that
/// [`uniform_matrix`] would produce for the same seed and stream.
pub fn random_block_rows(
    global_rows: usize,
    range: Range<usize>,
    cols: usize,
    seed: u64,
    stream: u64,
) -> DenseBlock {
    assert!(range.end <= global_rows);
    let mut rng = stream_rng(seed, stream);
    let mut out = DenseBlock::zeros(range.len(), cols);
    for j in 0..cols {
        for i in 0..global_rows {
            let x = 2.0 * rng.random::<f64>() - 1.0;
            if range.contains(&i) {
                out.set(i - range.start, j, x);
            }
        }
    }
    out
}
