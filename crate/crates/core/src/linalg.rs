//! Dense solver for the tiny symmetric systems produced by basis expansions
//! (dimension at most 1 + 4p).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves `A x = b` in place by Gaussian elimination with partial pivoting.
pub fn solve<F: Scalar>(a: &mut [Vec<F>], b: &mut [F]) -> Result<Vec<F>> {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|row| row.len() == n));

    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i][col]
                    .abs()
                    .partial_cmp(&a[j][col].abs())
                    .expect("finite pivot")
            })
            .expect("nonempty column");
        if a[pivot][col].abs() <= F::epsilon() * fl_n::<F>(n) {
            return Err(Error::InsufficientData(format!(
                "singular system of dimension {n} (rank-deficient design)"
            )));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);

        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == F::zero() {
                continue;
            }
            for k in col..n {
                let delta = factor * a[col][k];
                a[row][k] = a[row][k] - delta;
            }
            let delta = factor * b[col];
            b[row] = b[row] - delta;
        }
    }

    let mut x = vec![F::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc = acc - a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

fn fl_n<F: Scalar>(n: usize) -> F {
    F::from_usize(n).expect("small dimension")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let mut a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let mut b = vec![1.0, 2.0];
        let x = solve(&mut a, &mut b).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0f64).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1] - 2.0f64).abs() < 1e-12);
    }

    #[test]
    fn rejects_singular() {
        let mut a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        let mut b = vec![1.0, 2.0];
        assert!(solve(&mut a, &mut b).is_err());
    }
}
