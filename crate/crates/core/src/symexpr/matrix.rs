//! Small dense matrices of expressions.

use super::Expr;
use crate::linalg::QMat;

pub type ExprMat = Vec<Vec<Expr>>;

pub fn constant(m: &QMat) -> ExprMat {
    m.to_rows().into_iter().map(|r| r.into_iter().map(Expr::c).collect()).collect()
}

pub fn zeros(r: usize, c: usize) -> ExprMat {
    vec![vec![Expr::zero(); c]; r]
}

pub fn identity(n: usize) -> ExprMat {
    (0..n).map(|i| (0..n).map(|j| if i == j { Expr::one() } else { Expr::zero() }).collect()).collect()
}

pub fn diag(d: &[Expr]) -> ExprMat {
    let n = d.len();
    (0..n).map(|i| (0..n).map(|j| if i == j { d[i].clone() } else { Expr::zero() }).collect()).collect()
}

pub fn transpose(a: &ExprMat) -> ExprMat {
    let c = a.first().map_or(0, Vec::len);
    (0..c).map(|j| a.iter().map(|r| r[j].clone()).collect()).collect()
}

pub fn mul(a: &ExprMat, b: &ExprMat) -> ExprMat {
    let n = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().zip(b).fold(Expr::zero(), |acc, (x, r)| acc + x.clone() * r[j].clone()))
                .collect()
        })
        .collect()
}

pub fn mul_vec(a: &ExprMat, v: &[Expr]) -> Vec<Expr> {
    a.iter().map(|row| row.iter().zip(v).fold(Expr::zero(), |acc, (x, y)| acc + x.clone() * y.clone())).collect()
}

pub fn add(a: &ExprMat, b: &ExprMat) -> ExprMat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x.clone() + y.clone()).collect()).collect()
}

pub fn scale(a: &ExprMat, s: &Expr) -> ExprMat {
    a.iter().map(|r| r.iter().map(|x| x.clone() * s.clone()).collect()).collect()
}

pub fn block_diag(a: &ExprMat, b: &ExprMat) -> ExprMat {
    let (n, m) = (a.len(), b.len());
    let mut out = zeros(n + m, n + m);
    for i in 0..n {
        for j in 0..n {
            out[i][j] = a[i][j].clone();
        }
    }
    for i in 0..m {
        for j in 0..m {
            out[n + i][n + j] = b[i][j].clone();
        }
    }
    out
}

pub fn kron(a: &ExprMat, b: &ExprMat) -> ExprMat {
    let (ar, ac) = (a.len(), a.first().map_or(0, Vec::len));
    let (br, bc) = (b.len(), b.first().map_or(0, Vec::len));
    let mut out = zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            for k in 0..br {
                for l in 0..bc {
                    out[i * br + k][j * bc + l] = a[i][j].clone() * b[k][l].clone();
                }
            }
        }
    }
    out
}

pub fn differentiate(a: &ExprMat) -> ExprMat {
    a.iter().map(|r| r.iter().map(Expr::differentiate).collect()).collect()
}

pub fn minor(a: &ExprMat, skip_row: usize, skip_col: usize) -> ExprMat {
    a.iter()
        .enumerate()
        .filter(|(i, _)| *i != skip_row)
        .map(|(_, r)| r.iter().enumerate().filter(|(j, _)| *j != skip_col).map(|(_, x)| x.clone()).collect())
        .collect()
}

/// Cofactor expansion along the first row; fibres are small.
pub fn det(a: &ExprMat) -> Expr {
    match a.len() {
        0 => Expr::one(),
        1 => a[0][0].clone(),
        n => (0..n).fold(Expr::zero(), |acc, j| {
            let term = a[0][j].clone() * det(&minor(a, 0, j));
            if j % 2 == 0 { acc + term } else { acc - term }
        }),
    }
}

/// Adjugate over determinant.
pub fn inverse(a: &ExprMat) -> ExprMat {
    let n = a.len();
    if n == 1 {
        return vec![vec![Expr::one() / a[0][0].clone()]];
    }
    let d = det(a);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let c = det(&minor(a, j, i));
                    let c = if (i + j) % 2 == 0 { c } else { -c };
                    c / d.clone()
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::parse_expr;

    fn m(rows: &[&[&str]]) -> ExprMat {
        rows.iter().map(|r| r.iter().map(|s| parse_expr(s).unwrap()).collect()).collect()
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = m(&[&["exp(x)", "x"], &["x", "x^2+2"]]);
        let p = mul(&a, &inverse(&a));
        for x in [-1.3, 0.0, 0.7, 2.0] {
            for i in 0..2 {
                for j in 0..2 {
                    let v = p[i][j].evaluate(x).unwrap();
                    assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn kron_and_det() {
        let a = m(&[&["2", "0"], &["0", "3"]]);
        let b = m(&[&["x"]]);
        let k = kron(&a, &b);
        assert_eq!(det(&k).evaluate(2.0), Ok(24.0));
        assert_eq!(det(&block_diag(&a, &b)).evaluate(2.0), Ok(12.0));
    }
}
