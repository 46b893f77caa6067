//! Dense 3-D tensors and the exact reshape operations the transform is built
//! from.
//!
//! A [`Cuboid`] has two spatial axes (`i` rows, `j` columns) and one spectral
//! axis (`k`). All reshapes here are pure index permutations: partitioning
//! into non-overlapping blocks, flattening a block to a vector, and stacking
//! coefficient vectors along the spectral axis. Each operation has an exact
//! inverse and performs no arithmetic, so roundtrips are bit-identical.
//!
//! Linearization order is row-major `i -> j -> k` everywhere; forward and
//! inverse agree on it by construction.

use thiserror::Error;

/// Errors from cuboid reshape operations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CuboidError {
    /// Requested block side does not divide the cuboid side.
    #[error("block side {block} does not divide cuboid side {side} on axis {axis}")]
    NonDivisibleSideLength {
        axis: char,
        side: usize,
        block: usize,
    },
    /// Blocks of a grid disagree in dimensions.
    #[error("block at ({row}, {col}) has dims {found:?}, expected {expected:?}")]
    InconsistentBlockDims {
        row: usize,
        col: usize,
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    /// Vector length does not match the requested dimensions.
    #[error("vector of length {len} cannot fill dims {dims:?}")]
    LengthMismatch { len: usize, dims: (usize, usize, usize) },
    /// Grid of coefficient vectors is not rectangular with equal lengths.
    #[error("coefficient grid is ragged at ({row}, {col}): length {found}, expected {expected}")]
    RaggedGrid {
        row: usize,
        col: usize,
        expected: usize,
        found: usize,
    },
    /// Dimensions must be strictly positive and consistent with data length.
    #[error("invalid dims {dims:?} for data of length {len}")]
    InvalidDims { dims: (usize, usize, usize), len: usize },
}

/// Dense 3-D tensor: `i_len x j_len` spatial positions, `k_len` spectral
/// entries per position, stored row-major in `i -> j -> k` order.
///
/// Values are 64-bit reals. Pixel inputs live in `[0, 255]`; transform
/// coefficients are unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct Cuboid {
    i_len: usize,
    j_len: usize,
    k_len: usize,
    data: Vec<f64>,
}

impl Cuboid {
    /// Creates a cuboid from row-major data.
    pub fn new(i_len: usize, j_len: usize, k_len: usize, data: Vec<f64>) -> Result<Self, CuboidError> {
        if i_len == 0 || j_len == 0 || k_len == 0 || data.len() != i_len * j_len * k_len {
            return Err(CuboidError::InvalidDims {
                dims: (i_len, j_len, k_len),
                len: data.len(),
            });
        }
        Ok(Self { i_len, j_len, k_len, data })
    }

    /// Creates a zero-filled cuboid.
    pub fn zeros(i_len: usize, j_len: usize, k_len: usize) -> Self {
        assert!(i_len > 0 && j_len > 0 && k_len > 0, "dims must be positive");
        Self {
            i_len,
            j_len,
            k_len,
            data: vec![0.0; i_len * j_len * k_len],
        }
    }

    /// Dimensions as `(i_len, j_len, k_len)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.i_len, self.j_len, self.k_len)
    }

    /// Number of stored values.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false; dims are strictly positive by construction.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value at `(i, j, k)`.
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        debug_assert!(i < self.i_len && j < self.j_len && k < self.k_len);
        self.data[(i * self.j_len + j) * self.k_len + k]
    }

    /// Mutable value at `(i, j, k)`.
    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize, k: usize) -> &mut f64 {
        debug_assert!(i < self.i_len && j < self.j_len && k < self.k_len);
        &mut self.data[(i * self.j_len + j) * self.k_len + k]
    }

    /// Row-major backing data.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable row-major backing data.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Consumes the cuboid, returning its backing data.
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Rectangular grid of equally sized cuboids, the result of [`partition`].
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    rows: usize,
    cols: usize,
    block_dims: (usize, usize, usize),
    blocks: Vec<Cuboid>,
}

impl BlockGrid {
    /// Builds a grid from row-major blocks, validating that every block has
    /// identical dimensions.
    pub fn new(rows: usize, cols: usize, blocks: Vec<Cuboid>) -> Result<Self, CuboidError> {
        assert!(rows > 0 && cols > 0, "grid dims must be positive");
        assert_eq!(blocks.len(), rows * cols, "block count must match grid dims");
        let block_dims = blocks[0].dims();
        for (idx, b) in blocks.iter().enumerate() {
            if b.dims() != block_dims {
                return Err(CuboidError::InconsistentBlockDims {
                    row: idx / cols,
                    col: idx % cols,
                    expected: block_dims,
                    found: b.dims(),
                });
            }
        }
        Ok(Self { rows, cols, block_dims, blocks })
    }

    /// Grid dimensions as `(rows, cols)`.
    pub fn grid_dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Dimensions shared by every block.
    pub fn block_dims(&self) -> (usize, usize, usize) {
        self.block_dims
    }

    /// Block at grid position `(row, col)`.
    pub fn block(&self, row: usize, col: usize) -> &Cuboid {
        &self.blocks[row * self.cols + col]
    }

    /// Blocks in row-major order.
    pub fn blocks(&self) -> &[Cuboid] {
        &self.blocks
    }
}

/// Splits a cuboid into a grid of non-overlapping `l_i x l_j` blocks spanning
/// the full spectral depth.
///
/// Block `(a, b)` holds rows `[a*l_i, (a+1)*l_i)`, columns `[b*l_j,
/// (b+1)*l_j)`, and every `k`. Fails when `l_i` or `l_j` does not divide the
/// corresponding side.
pub fn partition(g: &Cuboid, l_i: usize, l_j: usize) -> Result<BlockGrid, CuboidError> {
    if l_i == 0 || !g.i_len.is_multiple_of(l_i) {
        return Err(CuboidError::NonDivisibleSideLength {
            axis: 'i',
            side: g.i_len,
            block: l_i,
        });
    }
    if l_j == 0 || !g.j_len.is_multiple_of(l_j) {
        return Err(CuboidError::NonDivisibleSideLength {
            axis: 'j',
            side: g.j_len,
            block: l_j,
        });
    }
    let rows = g.i_len / l_i;
    let cols = g.j_len / l_j;
    let l_k = g.k_len;
    let mut blocks = Vec::with_capacity(rows * cols);
    for a in 0..rows {
        for b in 0..cols {
            let mut data = Vec::with_capacity(l_i * l_j * l_k);
            for i in 0..l_i {
                let src_i = a * l_i + i;
                let row_base = (src_i * g.j_len + b * l_j) * g.k_len;
                data.extend_from_slice(&g.data[row_base..row_base + l_j * l_k]);
            }
            blocks.push(Cuboid {
                i_len: l_i,
                j_len: l_j,
                k_len: l_k,
                data,
            });
        }
    }
    Ok(BlockGrid {
        rows,
        cols,
        block_dims: (l_i, l_j, l_k),
        blocks,
    })
}

/// Reassembles a block grid into the cuboid it was partitioned from; exact
/// inverse of [`partition`].
pub fn assemble(grid: &BlockGrid) -> Cuboid {
    let (l_i, l_j, l_k) = grid.block_dims;
    let i_len = grid.rows * l_i;
    let j_len = grid.cols * l_j;
    let mut out = Cuboid::zeros(i_len, j_len, l_k);
    for a in 0..grid.rows {
        for b in 0..grid.cols {
            let block = grid.block(a, b);
            for i in 0..l_i {
                let dst_i = a * l_i + i;
                let dst_base = (dst_i * j_len + b * l_j) * l_k;
                let src_base = i * l_j * l_k;
                out.data[dst_base..dst_base + l_j * l_k]
                    .copy_from_slice(&block.data[src_base..src_base + l_j * l_k]);
            }
        }
    }
    out
}

/// Flattens a local cuboid into a vector of length `l_i * l_j * l_k` in the
/// fixed `i -> j -> k` order.
pub fn flatten(local: &Cuboid) -> Vec<f64> {
    local.data.clone()
}

/// Rebuilds a cuboid from a flattened vector; exact inverse of [`flatten`].
pub fn unflatten(v: Vec<f64>, dims: (usize, usize, usize)) -> Result<Cuboid, CuboidError> {
    let (l_i, l_j, l_k) = dims;
    if l_i == 0 || l_j == 0 || l_k == 0 || v.len() != l_i * l_j * l_k {
        return Err(CuboidError::LengthMismatch { len: v.len(), dims });
    }
    Ok(Cuboid {
        i_len: l_i,
        j_len: l_j,
        k_len: l_k,
        data: v,
    })
}

/// Stacks a rectangular grid of equal-length coefficient vectors along the
/// spectral axis.
///
/// Entry `(i, j, k)` of the result is the `k`-th coefficient of vector
/// `(i, j)`.
pub fn spectral_stack(coeffs: &[Vec<Vec<f64>>]) -> Result<Cuboid, CuboidError> {
    assert!(!coeffs.is_empty() && !coeffs[0].is_empty(), "grid must be non-empty");
    let rows = coeffs.len();
    let cols = coeffs[0].len();
    let k_len = coeffs[0][0].len();
    let mut data = Vec::with_capacity(rows * cols * k_len);
    for (i, row) in coeffs.iter().enumerate() {
        if row.len() != cols {
            return Err(CuboidError::RaggedGrid {
                row: i,
                col: 0,
                expected: cols,
                found: row.len(),
            });
        }
        for (j, v) in row.iter().enumerate() {
            if v.len() != k_len {
                return Err(CuboidError::RaggedGrid {
                    row: i,
                    col: j,
                    expected: k_len,
                    found: v.len(),
                });
            }
            data.extend_from_slice(v);
        }
    }
    if k_len == 0 {
        return Err(CuboidError::RaggedGrid {
            row: 0,
            col: 0,
            expected: 1,
            found: 0,
        });
    }
    Ok(Cuboid {
        i_len: rows,
        j_len: cols,
        k_len,
        data,
    })
}

/// Splits a cuboid back into its grid of spectral coefficient vectors; exact
/// inverse of [`spectral_stack`].
pub fn spectral_unstack(g: &Cuboid) -> Vec<Vec<Vec<f64>>> {
    let mut grid = Vec::with_capacity(g.i_len);
    for i in 0..g.i_len {
        let mut row = Vec::with_capacity(g.j_len);
        for j in 0..g.j_len {
            let base = (i * g.j_len + j) * g.k_len;
            row.push(g.data[base..base + g.k_len].to_vec());
        }
        grid.push(row);
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sequential(i: usize, j: usize, k: usize) -> Cuboid {
        let data = (1..=i * j * k).map(|x| x as f64).collect();
        Cuboid::new(i, j, k, data).unwrap()
    }

    fn random_cuboid(rng: &mut ChaCha8Rng, i: usize, j: usize, k: usize) -> Cuboid {
        let data = (0..i * j * k).map(|_| rng.random_range(-100.0..100.0)).collect();
        Cuboid::new(i, j, k, data).unwrap()
    }

    #[test]
    fn partition_4x4_values_1_to_16() {
        let g = sequential(4, 4, 1);
        let grid = partition(&g, 2, 2).unwrap();
        assert_eq!(grid.grid_dims(), (2, 2));
        assert_eq!(grid.block(0, 0).data(), &[1.0, 2.0, 5.0, 6.0]);
        assert_eq!(grid.block(0, 1).data(), &[3.0, 4.0, 7.0, 8.0]);
        assert_eq!(grid.block(1, 0).data(), &[9.0, 10.0, 13.0, 14.0]);
        assert_eq!(grid.block(1, 1).data(), &[11.0, 12.0, 15.0, 16.0]);
    }

    #[test]
    fn partition_64x64_into_8x8_grid() {
        let g = Cuboid::zeros(64, 64, 1);
        let grid = partition(&g, 8, 8).unwrap();
        assert_eq!(grid.grid_dims(), (8, 8));
        assert_eq!(grid.block_dims(), (8, 8, 1));
        assert_eq!(grid.blocks().len(), 64);
    }

    #[test]
    fn partition_rejects_non_divisible_sides() {
        let g = Cuboid::zeros(4, 4, 1);
        let err = partition(&g, 3, 2).unwrap_err();
        assert_eq!(
            err,
            CuboidError::NonDivisibleSideLength { axis: 'i', side: 4, block: 3 }
        );
        assert!(partition(&g, 2, 3).is_err());
        assert!(partition(&g, 0, 2).is_err());
    }

    #[test]
    fn partition_assemble_roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = random_cuboid(&mut rng, 16, 16, 4);
        let grid = partition(&g, 4, 4).unwrap();
        let back = assemble(&grid);
        assert_eq!(back, g);
    }

    #[test]
    fn assemble_single_block_is_identity() {
        let g = sequential(3, 2, 2);
        let grid = BlockGrid::new(1, 1, vec![g.clone()]).unwrap();
        assert_eq!(assemble(&grid), g);
    }

    #[test]
    fn assemble_2x2_grid_of_2x2_blocks() {
        let g = sequential(4, 4, 1);
        let grid = partition(&g, 2, 2).unwrap();
        let rebuilt = assemble(&grid);
        assert_eq!(rebuilt.dims(), (4, 4, 1));
        assert_eq!(rebuilt, g);
    }

    #[test]
    fn block_grid_rejects_inconsistent_dims() {
        let blocks = vec![Cuboid::zeros(2, 2, 1), Cuboid::zeros(2, 3, 1)];
        let err = BlockGrid::new(1, 2, blocks).unwrap_err();
        assert!(matches!(err, CuboidError::InconsistentBlockDims { .. }));
    }

    #[test]
    fn flatten_2x2_row_major() {
        let c = Cuboid::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(flatten(&c), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn flatten_spectral_column_is_identity() {
        let c = Cuboid::new(1, 1, 5, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(flatten(&c), c.data());
    }

    #[test]
    fn flatten_unflatten_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = random_cuboid(&mut rng, 4, 4, 4);
        let v = flatten(&c);
        assert_eq!(v.len(), 64);
        let back = unflatten(v, (4, 4, 4)).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unflatten_examples_and_errors() {
        let c = unflatten(vec![1.0, 2.0, 3.0, 4.0], (2, 2, 1)).unwrap();
        assert_eq!(c.get(0, 0, 0), 1.0);
        assert_eq!(c.get(0, 1, 0), 2.0);
        assert_eq!(c.get(1, 0, 0), 3.0);
        assert_eq!(c.get(1, 1, 0), 4.0);

        let scalar = unflatten(vec![7.0], (1, 1, 1)).unwrap();
        assert_eq!(scalar.data(), &[7.0]);

        let err = unflatten(vec![1.0, 2.0], (2, 2, 1)).unwrap_err();
        assert_eq!(err, CuboidError::LengthMismatch { len: 2, dims: (2, 2, 1) });
    }

    #[test]
    fn spectral_stack_single_vector() {
        let grid = vec![vec![(0..90).map(|x| x as f64).collect::<Vec<_>>()]];
        let c = spectral_stack(&grid).unwrap();
        assert_eq!(c.dims(), (1, 1, 90));
        assert_eq!(c.get(0, 0, 89), 89.0);
    }

    #[test]
    fn spectral_stack_scalar_vectors() {
        let grid = vec![
            vec![vec![1.0], vec![2.0]],
            vec![vec![3.0], vec![4.0]],
        ];
        let c = spectral_stack(&grid).unwrap();
        assert_eq!(c.dims(), (2, 2, 1));
        assert_eq!(c.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn spectral_stack_rejects_ragged_grid() {
        let grid = vec![vec![vec![1.0, 2.0], vec![3.0]]];
        assert!(matches!(
            spectral_stack(&grid).unwrap_err(),
            CuboidError::RaggedGrid { .. }
        ));
    }

    #[test]
    fn spectral_roundtrip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_cuboid(&mut rng, 3, 5, 7);
        let grid = spectral_unstack(&c);
        assert_eq!(grid.len(), 3);
        assert_eq!(grid[0].len(), 5);
        assert_eq!(grid[0][0].len(), 7);
        let back = spectral_stack(&grid).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn cuboid_new_validates_dims() {
        assert!(Cuboid::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Cuboid::new(0, 2, 1, vec![]).is_err());
    }
}
