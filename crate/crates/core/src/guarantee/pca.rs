use crate::bytes::{Reader, Writer};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric row-major `n x n` matrix by cyclic
/// Jacobi rotations. Returns eigenvalues and the column-major eigenvector
/// matrix (`vecs[k * n..(k + 1) * n]` is the k-th eigenvector), unsorted.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if matrix.len() != n * n {
        return Err(Error::Shape(format!("{} entries for a {n}x{n} matrix", matrix.len())));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix for eigen-decomposition".into()));
    }
    let mut a = matrix.to_vec();
    // Row-major V; column k is eigenvector k.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    let mut cols = vec![0.0; n * n];
    for k in 0..n {
        for i in 0..n {
            cols[k * n + i] = v[i * n + k];
        }
    }
    Ok((values, cols))
}

/// Mean residual and orthonormal principal directions of a residual set.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBasis {
    n: usize,
    mean: Vec<f64>,
    /// Column-major `n x n`.
    columns: Vec<f64>,
    /// Descending; empty for a basis read back from bytes.
    eigenvalues: Vec<f64>,
}

impl ResidualBasis {
    pub fn new(mean: Vec<f64>, columns: Vec<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || columns.len() != n * n {
            return Err(Error::Shape(format!("basis with {} means and {} column entries", n, columns.len())));
        }
        if mean.iter().chain(&columns).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("basis entries".into()));
        }
        Ok(Self { n, mean, columns, eigenvalues: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k * self.n..(k + 1) * self.n]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `n`, then `mean`, then the columns, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.n as u32);
        for &v in self.mean.iter().chain(&self.columns) {
            w.f64(v);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "residual basis");
        let n = r.u32()? as usize;
        if n == 0 || n > 1 << 12 {
            return Err(Error::Format(format!("basis dimension {n}")));
        }
        let mean = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let columns = (0..n * n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Self::new(mean, columns)
    }
}

/// PCA of a residual set. Columns are sorted by descending eigenvalue of the
/// sample covariance; each column's largest-magnitude entry (first on ties)
/// is positive. Directions with negligible variance are replaced by a
/// Gram-Schmidt completion over the canonical axes.
pub fn fit_basis_from_residuals(residuals: &[Vec<f64>]) -> Result<ResidualBasis> {
    if residuals.len() < 2 {
        return Err(Error::Shape(format!("basis fit needs at least 2 residual blocks, got {}", residuals.len())));
    }
    let n = residuals[0].len();
    if n == 0 || residuals.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("residual blocks differ in length".into()));
    }
    let count = residuals.len() as f64;
    let mut mean = vec![0.0; n];
    for r in residuals {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut cov = vec![0.0; n * n];
    let mut centered = vec![0.0; n];
    for r in residuals {
        for i in 0..n {
            centered[i] = r[i] - mean[i];
        }
        for i in 0..n {
            let ci = centered[i];
            for j in i..n {
                cov[i * n + j] += ci * centered[j];
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            cov[i * n + j] /= count - 1.0;
            cov[j * n + i] = cov[i * n + j];
        }
    }
    let (values, vecs) = symmetric_eigen(&cov, n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let top = values[order[0]].max(0.0);
    let floor = top * 1e-12 * n as f64;
    let mut columns = Vec::with_capacity(n * n);
    let mut eigenvalues = Vec::with_capacity(n);
    for &k in &order {
        if top == 0.0 || values[k] <= floor {
            break;
        }
        columns.extend_from_slice(&vecs[k * n..(k + 1) * n]);
        eigenvalues.push(values[k]);
    }
    complete_basis(&mut columns, n);
    eigenvalues.resize(n, 0.0);
    for k in 0..n {
        orient(&mut columns[k * n..(k + 1) * n]);
    }
    let mut basis = ResidualBasis::new(mean, columns)?;
    basis.eigenvalues = eigenvalues;
    Ok(basis)
}

/// Appends canonical axes, orthogonalized against the columns so far, until
/// there are `n` columns.
fn complete_basis(columns: &mut Vec<f64>, n: usize) {
    for axis in 0..n {
        if columns.len() == n * n {
            break;
        }
        let mut e = vec![0.0; n];
        e[axis] = 1.0;
        // Two passes of classical Gram-Schmidt.
        for _ in 0..2 {
            for k in 0..columns.len() / n {
                let col = &columns[k * n..(k + 1) * n];
                let dot: f64 = col.iter().zip(&e).map(|(a, b)| a * b).sum();
                for (ei, ci) in e.iter_mut().zip(col) {
                    *ei -= dot * ci;
                }
            }
        }
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-6 {
            columns.extend(e.iter().map(|v| v / norm));
        }
    }
}

fn orient(col: &mut [f64]) {
    let mut best = 0;
    for i in 1..col.len() {
        if col[i].abs() > col[best].abs() {
            best = i;
        }
    }
    if col[best] < 0.0 {
        col.iter_mut().for_each(|v| *v = -*v);
    }
}

/// `U^T (r - mean)`.
pub fn project(residual: &[f64], basis: &ResidualBasis) -> Result<Vec<f64>> {
    let n = basis.len();
    if residual.len() != n {
        return Err(Error::Shape(format!("residual of {} samples for a basis of {n}", residual.len())));
    }
    let centered: Vec<f64> = residual.iter().zip(basis.mean()).map(|(r, m)| r - m).collect();
    Ok((0..n).map(|k| basis.column(k).iter().zip(&centered).map(|(u, c)| u * c).sum()).collect())
}
