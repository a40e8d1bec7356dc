//! Raw dense matrix kernels over row-major `&[f64]` slices.
//!
//! Loop order keeps the innermost traversal contiguous so LLVM can vectorize;
//! at the sizes this crate runs (d_model <= 64) that is all the tuning needed.

/// c[m×n] += a[m×k] · b[k×n]
pub fn mm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (c_ij, &b_pj) in c_row.iter_mut().zip(b_row) {
                *c_ij += a_ip * b_pj;
            }
        }
    }
}

/// a[m×k] · b[k×n]
pub fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    mm_acc(a, b, &mut c, m, k, n);
    c
}

/// c[m×n] += a[m×k] · b[n×k]ᵀ
///
/// Materializes bᵀ so the inner loop walks contiguous output rows; the
/// attention heads hit this with k as small as 8, where row-dot products
/// leave the vector units idle.
pub fn mm_nt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    let mut b_t = vec![0.0; k * n];
    for j in 0..n {
        for p in 0..k {
            b_t[p * n + j] = b[j * k + p];
        }
    }
    mm_acc(a, &b_t, c, m, k, n);
}

/// a[m×k] · b[n×k]ᵀ
pub fn mm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    mm_nt_acc(a, b, &mut c, m, k, n);
    c
}

/// c[m×n] += a[k×m]ᵀ · b[k×n]
pub fn mm_tn_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &a_pi) in a_row.iter().enumerate() {
            let c_row = &mut c[i * n..(i + 1) * n];
            for (c_ij, &b_pj) in c_row.iter_mut().zip(b_row) {
                *c_ij += a_pi * b_pj;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mm_matches_by_hand() {
        // [[1,2],[3,4]] · [[5,6],[7,8]] = [[19,22],[43,50]]
        let c = mm(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0, 7.0, 8.0], 2, 2, 2);
        assert_eq!(c, vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_variants_agree_with_mm() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2×3
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3×2
        let expect = mm(&a, &b, 2, 3, 2);

        // b as [2×3] rows, so a·bᵀ with b_t holding bᵀ row-major.
        let b_t = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0];
        let got_nt = mm_nt(&a, &b_t, 2, 3, 2);
        assert_eq!(got_nt, expect);

        // a as [3×2] column-major of original, so aᵀ·b.
        let a_t = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0]; // 3×2 holding aᵀ
        let mut got_tn = vec![0.0; 4];
        mm_tn_acc(&a_t, &b, &mut got_tn, 2, 3, 2);
        assert_eq!(got_tn, expect);
    }
}
