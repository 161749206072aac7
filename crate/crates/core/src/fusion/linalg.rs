use nalgebra::DMatrix;

/// Relative singular-value cutoff for pseudo-inverses and rank decisions.
pub const PINV_RTOL: f64 = 1e-10;

/// Thin SVD with singular values sorted descending.
pub(crate) struct SortedSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

pub(crate) fn sorted_svd(a: &DMatrix<f64>) -> SortedSvd {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = DMatrix::from_columns(&order.iter().map(|&i| u.column(i)).collect::<Vec<_>>());
    let v_t = DMatrix::from_rows(&order.iter().map(|&i| v_t.row(i)).collect::<Vec<_>>());
    SortedSvd { u, s, v_t }
}

pub(crate) fn numerical_rank(s: &[f64], rtol: f64) -> usize {
    let max = s.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rtol * max).count()
}

/// Moore-Penrose pseudo-inverse; singular values at or below
/// `rtol * sigma_max` are treated as zero. Also returns the retained rank.
pub(crate) fn pinv(a: &DMatrix<f64>, rtol: f64) -> (DMatrix<f64>, usize) {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return (DMatrix::zeros(cols, rows), 0);
    }
    let svd = sorted_svd(a);
    let rank = numerical_rank(&svd.s, rtol);
    let mut out = DMatrix::zeros(cols, rows);
    for k in 0..rank {
        let vk = svd.v_t.row(k).transpose();
        let uk = svd.u.column(k);
        out += (vk * uk.transpose()) / svd.s[k];
    }
    (out, rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_invertible_is_inverse() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let (p, rank) = pinv(&a, PINV_RTOL);
        assert_eq!(rank, 3);
        assert!((&a * &p - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn pinv_penrose_conditions_rank_deficient() {
        let a = DMatrix::from_row_slice(3, 4, &[
            1.0, 2.0, 3.0, 4.0, //
            2.0, 4.0, 6.0, 8.0, //
            0.0, 1.0, 0.0, 1.0,
        ]);
        let (p, rank) = pinv(&a, PINV_RTOL);
        assert_eq!(rank, 2);
        assert!((&a * &p * &a - &a).norm() < 1e-10);
        assert!((&p * &a * &p - &p).norm() < 1e-10);
        let ap = &a * &p;
        assert!((&ap - ap.transpose()).norm() < 1e-10);
        let pa = &p * &a;
        assert!((&pa - pa.transpose()).norm() < 1e-10);
    }

    #[test]
    fn svd_sorted_descending() {
        let a = DMatrix::from_row_slice(2, 3, &[0.1, 0.0, 0.0, 0.0, 5.0, 0.0]);
        let s = sorted_svd(&a);
        assert!(s.s[0] >= s.s[1]);
        assert!((s.s[0] - 5.0).abs() < 1e-12);
    }
}
