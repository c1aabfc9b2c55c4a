//! Dense row-major helpers for the small matrices in this crate.

pub fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

pub fn frobenius(m: &[f64]) -> f64 {
    norm(m)
}

pub fn identity_into(n: usize, out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..n {
        out[i * n + i] = 1.0;
    }
}

/// `out = a * b` for `n x n` matrices.
pub fn mat_mul(n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|k| a[i * n + k] * b[k * n + j]).sum();
        }
    }
}

/// `out = aᵀ * b` for `n x n` matrices.
pub fn mat_tmul(n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|k| a[k * n + i] * b[k * n + j]).sum();
        }
    }
}

/// Row vector times matrix: `out_j = Σ_k v_k m_kj`.
pub fn row_mul(n: usize, v: &[f64], m: &[f64], out: &mut [f64]) {
    for j in 0..n {
        out[j] = (0..n).map(|k| v[k] * m[k * n + j]).sum();
    }
}

/// Row vector times transposed matrix: `out_j = Σ_k v_k m_jk`.
pub fn row_mul_transpose(n: usize, v: &[f64], m: &[f64], out: &mut [f64]) {
    for j in 0..n {
        out[j] = (0..n).map(|k| v[k] * m[j * n + k]).sum();
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [0.0, 1.0, 1.0, 0.0];
        let mut out = [0.0; 4];
        mat_mul(2, &a, &b, &mut out);
        assert_eq!(out, [2.0, 1.0, 4.0, 3.0]);
        mat_tmul(2, &a, &b, &mut out);
        assert_eq!(out, [3.0, 1.0, 4.0, 2.0]);
        let mut r = [0.0; 2];
        row_mul(2, &[1.0, 1.0], &a, &mut r);
        assert_eq!(r, [4.0, 6.0]);
        row_mul_transpose(2, &[1.0, 1.0], &a, &mut r);
        assert_eq!(r, [3.0, 7.0]);
        assert_eq!(norm(&[3.0, 4.0]), 5.0);
    }
}
