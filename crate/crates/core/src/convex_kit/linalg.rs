/// Solves `A x = b` for a symmetric positive (semi)definite row-major `A` by
/// Cholesky factorization. When the factorization breaks down, a growing
/// multiple of the identity is added to the diagonal. Returns `None` only if
/// no shift up to `1e6 * max|a_ii|` makes `A` factorable.
pub fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let scale = (0..n)
        .map(|i| a[i * n + i].abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut shift = 0.0;
    let mut l = vec![0.0; n * n];
    for _attempt in 0..40 {
        if factor(a, n, shift, &mut l) {
            return Some(substitute(&l, b, n));
        }
        shift = if shift == 0.0 {
            scale * 1e-14
        } else {
            shift * 10.0
        };
        if shift > scale * 1e6 {
            break;
        }
    }
    None
}

fn factor(a: &[f64], n: usize, shift: f64, l: &mut [f64]) -> bool {
    l.iter_mut().for_each(|x| *x = 0.0);
    for j in 0..n {
        let mut d = a[j * n + j] + shift;
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    true
}

fn substitute(l: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    y
}
