//! Small dense symmetric matrix helpers (6×6 is the native size here).

pub type Mat6 = [[f64; 6]; 6];

pub fn mat6_zeros() -> Mat6 {
    [[0.0; 6]; 6]
}

pub fn mat6_identity() -> Mat6 {
    let mut m = mat6_zeros();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// Largest absolute asymmetry |a_ij - a_ji|.
pub fn max_asymmetry(a: &Mat6) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..6 {
        for j in (i + 1)..6 {
            worst = worst.max((a[i][j] - a[j][i]).abs());
        }
    }
    worst
}

pub fn mat6_mul(a: &Mat6, b: &Mat6) -> Mat6 {
    let mut c = mat6_zeros();
    for i in 0..6 {
        for k in 0..6 {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..6 {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// a · aᵀ for a lower-triangular (or any) factor.
pub fn mat6_mul_transpose(a: &Mat6) -> Mat6 {
    let mut c = mat6_zeros();
    for i in 0..6 {
        for j in 0..6 {
            let mut s = 0.0;
            for (k, col) in a[j].iter().enumerate() {
                s += a[i][k] * col;
            }
            c[i][j] = s;
        }
    }
    c
}

pub fn frobenius_norm(a: &Mat6) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn mat6_sub(a: &Mat6, b: &Mat6) -> Mat6 {
    let mut c = mat6_zeros();
    for i in 0..6 {
        for j in 0..6 {
            c[i][j] = a[i][j] - b[i][j];
        }
    }
    c
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
/// Returns (eigenvalues, matrix whose columns are eigenvectors).
pub fn jacobi_eigen(a: &Mat6) -> ([f64; 6], Mat6) {
    let mut m = *a;
    let mut v = mat6_identity();
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for i in 0..6 {
            for j in (i + 1)..6 {
                off += m[i][j] * m[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..6 {
            for q in (p + 1)..6 {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..6 {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..6 {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..6 {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut vals = [0.0f64; 6];
    for (i, val) in vals.iter_mut().enumerate() {
        *val = m[i][i];
    }
    (vals, v)
}

/// Project a symmetric matrix onto the PSD cone by clipping negative
/// eigenvalues at zero. Returns the repaired matrix and the clipped mass
/// (sum of |negative eigenvalues|).
pub fn psd_clip(a: &Mat6) -> (Mat6, f64) {
    let (vals, vecs) = jacobi_eigen(a);
    let clipped: f64 = vals.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
    if clipped == 0.0 {
        return (*a, 0.0);
    }
    let mut out = mat6_zeros();
    for (k, &lam) in vals.iter().enumerate() {
        let l = lam.max(0.0);
        if l == 0.0 {
            continue;
        }
        for i in 0..6 {
            for j in 0..6 {
                out[i][j] += l * vecs[i][k] * vecs[j][k];
            }
        }
    }
    // restore exact symmetry lost to rounding
    for i in 0..6 {
        for j in (i + 1)..6 {
            let s = 0.5 * (out[i][j] + out[j][i]);
            out[i][j] = s;
            out[j][i] = s;
        }
    }
    (out, clipped)
}

/// Cholesky factor L (lower triangular, L·Lᵀ = a) tolerant of semidefinite
/// input: a pivot within `tol` of zero zeroes out its column.
pub fn cholesky_semidef(a: &Mat6, tol: f64) -> Mat6 {
    let mut l = mat6_zeros();
    for i in 0..6 {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                l[i][j] = if s > tol { s.sqrt() } else { 0.0 };
            } else if l[j][j] > 0.0 {
                l[i][j] = s / l[j][j];
            } else {
                l[i][j] = 0.0;
            }
        }
    }
    l
}
