//! Second-order finite-difference stencils on uniform 1-D axes.

use crate::real::Real;

/// First-derivative stencil on a uniform axis of `n` nodes.
///
/// Interior nodes use the central difference; on a non-periodic axis the two
/// end nodes use the one-sided second-order formula. Coefficients already
/// carry the `1/spacing` factor.
#[derive(Debug, Clone)]
pub struct DiffStencil<T> {
    n: usize,
    periodic: bool,
    rows: Vec<[(usize, T); 3]>,
    /// For every node `j`, the `(i, coef)` pairs of rows that read `j`.
    cols: Vec<Vec<(usize, T)>>,
}

impl<T: Real> DiffStencil<T> {
    /// Builds the stencil; requires `n >= 3`.
    pub fn new(n: usize, spacing: T, periodic: bool) -> Self {
        assert!(n >= 3, "stencil needs at least three nodes");
        let half = T::lit(0.5) / spacing;
        let rows: Vec<[(usize, T); 3]> = (0..n)
            .map(|i| {
                if periodic {
                    [((i + n - 1) % n, -half), ((i + 1) % n, half), (i, T::zero())]
                } else if i == 0 {
                    [(0, -T::lit(3.0) * half), (1, T::lit(4.0) * half), (2, -half)]
                } else if i == n - 1 {
                    [(n - 1, T::lit(3.0) * half), (n - 2, -T::lit(4.0) * half), (n - 3, half)]
                } else {
                    [(i - 1, -half), (i + 1, half), (i, T::zero())]
                }
            })
            .collect();
        let mut cols = vec![Vec::new(); n];
        for (i, row) in rows.iter().enumerate() {
            for &(j, c) in row {
                if c != T::zero() {
                    cols[j].push((i, c));
                }
            }
        }
        DiffStencil { n, periodic, rows, cols }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Nonzero `(j, coef)` pairs such that `(D f)_i = Σ coef · f_j`.
    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        self.rows[i].iter().copied().filter(|&(_, c)| c != T::zero())
    }

    /// Transposed access: `(Dᵀ g)_j = Σ coef · g_i` over the returned pairs.
    #[inline]
    pub fn column(&self, j: usize) -> &[(usize, T)] {
        &self.cols[j]
    }
}
