//! Small dense least-squares helpers: polynomial fits via normal equations
//! and a Jacobi eigensolver for symmetric 3x3 matrices.

/// Solve the linear system `m x = b` by Gaussian elimination with partial
/// pivoting. Returns None for (numerically) singular systems.
pub fn solve_dense(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let (pivot, pmax) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if pmax == 0.0 || !pmax.is_finite() {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= m[row][c] * x[c];
        }
        x[row] = acc / m[row][row];
        if !x[row].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Least squares `A x ~= y` through the normal equations. `rows[i]` is the
/// i-th row of A.
pub fn lsq_fit(rows: &[Vec<f64>], ys: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(rows.len(), ys.len());
    let k = rows[0].len();
    let mut ata = vec![vec![0.0; k]; k];
    let mut aty = vec![0.0; k];
    for (row, &y) in rows.iter().zip(ys) {
        for a in 0..k {
            aty[a] += row[a] * y;
            for b in a..k {
                ata[a][b] += row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            ata[a][b] = ata[b][a];
        }
    }
    solve_dense(ata, aty)
}

/// Least-squares polynomial fit with an explicit set of powers, e.g.
/// `[0, 2, 3, 4, 5, 6]` for a sextic without the linear term. Coordinates are
/// rescaled internally for conditioning; returned coefficients are in the
/// original units, ordered like `powers`.
pub fn polyfit_powers(xs: &[f64], ys: &[f64], powers: &[usize]) -> Option<Vec<f64>> {
    let scale = xs.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    let rows: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| {
            let u = x / scale;
            powers.iter().map(|&p| u.powi(p as i32)).collect()
        })
        .collect();
    let coeffs = lsq_fit(&rows, ys)?;
    Some(
        coeffs
            .iter()
            .zip(powers)
            .map(|(&c, &p)| c / scale.powi(p as i32))
            .collect(),
    )
}

/// Evaluate a polynomial given as (power, coefficient) pairs.
pub fn poly_eval(powers: &[usize], coeffs: &[f64], x: f64) -> f64 {
    powers
        .iter()
        .zip(coeffs)
        .map(|(&p, &c)| c * x.powi(p as i32))
        .sum()
}

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors as columns).
pub fn sym3_eigen(mut a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[0.0; 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..64 {
        // Largest off-diagonal element.
        let mut p = 0;
        let mut q = 1;
        let mut off: f64 = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                if a[i][j].abs() > off {
                    off = a[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        let scale = (0..3).map(|i| a[i][i].abs()).fold(0.0f64, f64::max);
        if off <= 1e-15 * scale.max(1e-300) {
            break;
        }
        let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
        let c = 1.0 / (t * t + 1.0).sqrt();
        let s = t * c;
        let mut an = a;
        for i in 0..3 {
            an[i][p] = c * a[i][p] - s * a[i][q];
            an[i][q] = s * a[i][p] + c * a[i][q];
        }
        a = an;
        let mut am = a;
        for j in 0..3 {
            am[p][j] = c * a[p][j] - s * a[q][j];
            am[q][j] = s * a[p][j] + c * a[q][j];
        }
        a = am;
        let mut vn = v;
        for i in 0..3 {
            vn[i][p] = c * v[i][p] - s * v[i][q];
            vn[i][q] = s * v[i][p] + c * v[i][q];
        }
        v = vn;
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_exact_polynomials() {
        let xs: Vec<f64> = (-10..=10).map(|i| i as f64 * 1e-5).collect();
        let powers = [0usize, 2, 3, 4, 5, 6];
        let truth = [1.0, 3.0e9, 0.0, 5.0e17, 0.0, 0.0];
        let ys: Vec<f64> = xs.iter().map(|&x| poly_eval(&powers, &truth, x)).collect();
        let fit = polyfit_powers(&xs, &ys, &powers).unwrap();
        let xmax: f64 = 1e-4;
        // Zero coefficients recover as zero at the contribution level: the
        // raw coefficient error scales like eps / xmax^n.
        let value_scale = truth
            .iter()
            .zip(&powers)
            .map(|(&t, &p)| t.abs() * xmax.powi(p as i32))
            .fold(0.0f64, f64::max);
        for ((f, t), &p) in fit.iter().zip(&truth).zip(&powers) {
            let err_contribution = (f - t).abs() * xmax.powi(p as i32);
            assert!(
                err_contribution <= 1e-9 * value_scale,
                "power {p}: fit {f} vs truth {t}"
            );
        }
    }

    #[test]
    fn eigen_of_diagonal_matrix() {
        let (vals, vecs) = sym3_eigen([[2.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 5.0]]);
        let mut got: Vec<f64> = vals.to_vec();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((got[0] + 1.0).abs() < 1e-12);
        assert!((got[2] - 5.0).abs() < 1e-12);
        // Columns are orthonormal.
        for c in 0..3 {
            let n: f64 = (0..3).map(|r| vecs[r][c] * vecs[r][c]).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_of_rotated_matrix() {
        // H = R diag(1, 4, 9) R^T for a rotation about z by 30 degrees.
        let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        let d = [1.0, 4.0, 9.0];
        let r = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let mut h = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    h[i][j] += r[i][k] * d[k] * r[j][k];
                }
            }
        }
        let (vals, _) = sym3_eigen(h);
        let mut got: Vec<f64> = vals.to_vec();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, e) in got.iter().zip(&d) {
            assert!((g - e).abs() < 1e-10);
        }
    }
}
