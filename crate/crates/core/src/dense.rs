//! Small dense helpers for element-level linear algebra.

use crate::{DMat, DVec};

/// Relative pivot size below which a local matrix is treated as singular.
const PIVOT_TOL: f64 = 1e-14;

/// Solves `a x = b` with full pivoting; `None` if `a` is numerically singular.
pub fn solve(a: &DMat, b: &DMat) -> Option<DMat> {
    assert_eq!(a.nrows(), a.ncols());
    assert_eq!(a.nrows(), b.nrows());
    if a.nrows() == 0 {
        return Some(DMat::zeros(0, b.ncols()));
    }
    let lu = a.clone().full_piv_lu();
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
    if !(max > 0.0) || min <= PIVOT_TOL * max {
        return None;
    }
    lu.solve(b)
}

pub fn solve_vec(a: &DMat, b: &DVec) -> Option<DVec> {
    let bm = DMat::from_column_slice(b.len(), 1, b.as_slice());
    solve(a, &bm).map(|x| DVec::from_column_slice(x.as_slice()))
}

/// `max |a - a^T| / max |a|`.
#[cfg(test)]
pub fn asymmetry(a: &DMat) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).amax() / scale
}

/// Symmetric part, used to remove round-off asymmetry from products `P^T G P`.
pub fn symmetrize(a: &DMat) -> DMat {
    (a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = DMat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DVec::from_vec(vec![3.0, 4.0]);
        let x = solve_vec(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn detects_singular() {
        let a = DMat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(solve(&a, &DMat::identity(2, 2)).is_none());
    }

    #[test]
    fn asymmetry_of_symmetric_is_zero() {
        let a = DMat::from_row_slice(2, 2, &[1.0, 5.0, 5.0, 2.0]);
        assert_eq!(asymmetry(&a), 0.0);
        assert_eq!(symmetrize(&a), a);
    }
}
