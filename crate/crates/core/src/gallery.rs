//! Synthetic SPD test matrices.
//!
//! The experiments are usually run on SuiteSparse matrices, which are not
//! shipped with this crate. The generators here give reproducible
//! substitutes of comparable size and conditioning:
//!
//! | name         | n   | kappa (approx.) | structure                                   |
//! |--------------|-----|-----------------|---------------------------------------------|
//! | `grid9-30`   | 900 | 1.9e2           | 9-point star on a 30x30 grid (gr_30_30)      |
//! | `graded-420` | 420 | 7.6e3           | tridiagonal, entry scale graded over 3.5 decades |
//! | `jump3d-9`   | 729 | 2.5e9           | 7-point diffusion, 9^3 cube, jump inclusion  |
//! | `grid9-12`   | 144 | 3.4e1           | small 9-point star                           |

use crate::sparse::SparseSpdMatrix;

/// Every named matrix, for CLI listings.
pub const NAMES: &[&str] = &["grid9-30", "graded-420", "jump3d-9", "grid9-12"];

pub fn by_name(name: &str) -> Option<SparseSpdMatrix> {
    match name {
        "grid9-30" => Some(grid9(30)),
        "grid9-12" => Some(grid9(12)),
        "graded-420" => Some(graded_tridiagonal(420, 3.54)),
        "jump3d-9" => Some(jump_diffusion_3d(9, 1.8e8)),
        _ => None,
    }
}

/// Nine-point star on an `nx` x `nx` grid: 8 on the diagonal and -1 for
/// each of the (up to) eight neighbours.
pub fn grid9(nx: usize) -> SparseSpdMatrix {
    let n = nx * nx;
    let mut t = Vec::with_capacity(9 * n);
    for i in 0..nx {
        for j in 0..nx {
            let row = i * nx + j;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if ii < 0 || jj < 0 || ii >= nx as i64 || jj >= nx as i64 {
                        continue;
                    }
                    let v = if di == 0 && dj == 0 { 8.0 } else { -1.0 };
                    t.push((row, ii as usize * nx + jj as usize, v));
                }
            }
        }
    }
    SparseSpdMatrix::from_triplets(n, &t).expect("stencil is symmetric")
}

/// Tridiagonal with `a_ii = 2 d_i` and `a_ij = -0.45 sqrt(d_i d_j)`, where
/// `d_i` grows geometrically across `decades` powers of ten. The scaled
/// matrix `D^-1/2 A D^-1/2` is diagonally dominant, so conditioning comes
/// from the grading; a 1D Laplacian of similar condition number would need
/// all `n` iterations, which mass-type matrices do not.
pub fn graded_tridiagonal(n: usize, decades: f64) -> SparseSpdMatrix {
    let d = |i: usize| 10f64.powf(decades * i as f64 / (n.max(2) - 1) as f64);
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        t.push((i, i, 2.0 * d(i)));
        if i + 1 < n {
            let off = -0.45 * (d(i) * d(i + 1)).sqrt();
            t.push((i, i + 1, off));
            t.push((i + 1, i, off));
        }
    }
    SparseSpdMatrix::from_triplets(n, &t).expect("tridiagonal is symmetric")
}

/// `tridiag(-1, 2 + shift, -1)`.
pub fn shifted_laplace_1d(n: usize, shift: f64) -> SparseSpdMatrix {
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        t.push((i, i, 2.0 + shift));
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
    }
    SparseSpdMatrix::from_triplets(n, &t).expect("tridiagonal is symmetric")
}

/// Cell-centred 7-point diffusion on an `nx`^3 cube with Dirichlet walls.
/// Diffusivity is 1 except on the bar `3 <= i, k <= 5` (all `j`), where it
/// is `contrast`. Face coefficients use the harmonic mean.
pub fn jump_diffusion_3d(nx: usize, contrast: f64) -> SparseSpdMatrix {
    let lo = nx / 3;
    let hi = nx - nx / 3 - 1;
    let kappa = |i: usize, _j: usize, k: usize| {
        if (lo..=hi).contains(&i) && (lo..=hi).contains(&k) {
            contrast
        } else {
            1.0
        }
    };
    let idx = |i: usize, j: usize, k: usize| (i * nx + j) * nx + k;
    let n = nx * nx * nx;
    let mut t = Vec::with_capacity(7 * n);
    let offsets: [(i64, i64, i64); 6] = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)];
    for i in 0..nx {
        for j in 0..nx {
            for k in 0..nx {
                let own = kappa(i, j, k);
                let mut diag = 0.0;
                for &(di, dj, dk) in &offsets {
                    let (ii, jj, kk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                    let inside = (0..nx as i64).contains(&ii) && (0..nx as i64).contains(&jj) && (0..nx as i64).contains(&kk);
                    if inside {
                        let other = kappa(ii as usize, jj as usize, kk as usize);
                        let c = 2.0 * own * other / (own + other);
                        t.push((idx(i, j, k), idx(ii as usize, jj as usize, kk as usize), -c));
                        diag += c;
                    } else {
                        diag += own;
                    }
                }
                t.push((idx(i, j, k), idx(i, j, k), diag));
            }
        }
    }
    SparseSpdMatrix::from_triplets(n, &t).expect("harmonic-mean stencil is symmetric")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_matrices_have_expected_shape() {
        let g = by_name("grid9-30").unwrap();
        assert_eq!((g.n(), g.max_row_nnz()), (900, 9));
        let l = by_name("graded-420").unwrap();
        assert_eq!((l.n(), l.max_row_nnz()), (420, 3));
        let j = by_name("jump3d-9").unwrap();
        assert_eq!((j.n(), j.max_row_nnz()), (729, 7));
        assert!(by_name("nope").is_none());
    }

    #[test]
    fn grid9_interior_rows_sum_to_zero() {
        let g = grid9(5);
        let y = g.matvec(&[1.0; 25]).unwrap();
        assert_eq!(y[12], 0.0);
        assert_eq!(y[0], 5.0);
    }

    #[test]
    fn laplace_norm_estimate_matches_analytic_top_eigenvalue() {
        // lambda_max = 2 + shift - 2 cos(n pi / (n + 1))
        let n = 50;
        let mut a = shifted_laplace_1d(n, 0.1);
        let exact = 2.1 - 2.0 * (n as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
        let est = a.estimate_norm2(1e-8, 5000).unwrap();
        assert!(est <= exact * (1.0 + 1e-12) && est > 0.99 * exact, "{est} vs {exact}");
    }
}
