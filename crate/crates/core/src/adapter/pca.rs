use nalgebra::{DMatrix, SymmetricEigen};

use super::AdapterError;

const MAGIC: [u8; 4] = *b"VQPC";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 19;
const FLAG_RANK_DEFICIENT: u8 = 1;
/// Rows accumulated per covariance block.
const BLOCK_ROWS: usize = 1024;

/// A fitted linear compressor. `components` is `d_out x d_in`, rows are
/// orthonormal principal directions in order of non-increasing variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub d_in: usize,
    pub d_out: usize,
    pub mean: Vec<f64>,
    pub components: Vec<f64>,
    pub explained_variance: Vec<f64>,
    /// Number of directions with non-negligible variance.
    pub rank: usize,
    /// Set when `rank < d_out` and the tail rows are an orthonormal completion.
    pub rank_deficient: bool,
}

/// Fits PCA on `n x d` row-major samples and keeps `d_out` directions.
pub fn fit_pca(samples: &[f32], n: usize, d: usize, d_out: usize) -> Result<PcaModel, AdapterError> {
    assert_eq!(samples.len(), n * d, "sample matrix is not {n}x{d}");
    if d_out == 0 || d_out > d || n <= d_out {
        return Err(AdapterError::PcaShape { n, d, d_out });
    }
    if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
        return Err(AdapterError::NonFinite {
            row: pos / d,
            col: pos % d,
        });
    }

    let mut mean = vec![0f64; d];
    for row in samples.chunks_exact(d) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let (values, vectors) = if n <= d {
        gram_eigen(samples, &mean, n, d)
    } else {
        covariance_eigen(samples, &mean, n, d)
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let top = values[order[0]].max(0.0);
    let tol = top * d as f64 * 1e-12;

    let mut components: Vec<f64> = Vec::with_capacity(d_out * d);
    let mut explained_variance = Vec::with_capacity(d_out);
    for &k in order.iter().take(d_out) {
        if top == 0.0 || values[k] <= tol {
            break;
        }
        components.extend_from_slice(&vectors[k * d..(k + 1) * d]);
        explained_variance.push(values[k]);
    }
    let rank = explained_variance.len();
    let mut axis = 0;
    while explained_variance.len() < d_out {
        let row = complete_basis(&components, d, &mut axis);
        components.extend(row);
        explained_variance.push(0.0);
    }
    for row in components.chunks_exact_mut(d) {
        apply_sign_convention(row);
    }
    Ok(PcaModel {
        d_in: d,
        d_out,
        mean,
        components,
        explained_variance,
        rank,
        rank_deficient: rank < d_out,
    })
}

/// Eigenpairs of the `d x d` sample covariance; vectors returned as rows.
fn covariance_eigen(samples: &[f32], mean: &[f64], n: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut cov = vec![0f64; d * d];
    let mut block = vec![0f64; BLOCK_ROWS * d];
    for chunk in samples.chunks(BLOCK_ROWS * d) {
        let rows = chunk.len() / d;
        for (dst, (src, m)) in block.iter_mut().zip(chunk.iter().zip(mean.iter().cycle())) {
            *dst = *src as f64 - m;
        }
        // cov += blockᵀ · block
        unsafe {
            matrixmultiply::dgemm(
                d,
                rows,
                d,
                1.0,
                block.as_ptr(),
                1,
                d as isize,
                block.as_ptr(),
                d as isize,
                1,
                1.0,
                cov.as_mut_ptr(),
                d as isize,
                1,
            );
        }
    }
    let scale = 1.0 / (n as f64 - 1.0);
    for i in 0..d {
        for j in 0..i {
            let s = 0.5 * (cov[i * d + j] + cov[j * d + i]) * scale;
            cov[i * d + j] = s;
            cov[j * d + i] = s;
        }
        cov[i * d + i] *= scale;
    }

    let eigen = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &cov));
    let vectors = (0..d)
        .flat_map(|k| eigen.eigenvectors.column(k).iter().copied().collect::<Vec<_>>())
        .collect();
    (eigen.eigenvalues.iter().copied().collect(), vectors)
}

/// Same eigenpairs through the `n x n` Gram matrix, for `n <= d`. Directions
/// are recovered as `Xᵀu / |Xᵀu|`.
fn gram_eigen(samples: &[f32], mean: &[f64], n: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let centered: Vec<f64> = samples
        .chunks_exact(d)
        .flat_map(|row| row.iter().zip(mean).map(|(v, m)| *v as f64 - m))
        .collect();
    let mut gram = vec![0f64; n * n];
    // gram = X · Xᵀ
    unsafe {
        matrixmultiply::dgemm(
            n,
            d,
            n,
            1.0,
            centered.as_ptr(),
            d as isize,
            1,
            centered.as_ptr(),
            1,
            d as isize,
            0.0,
            gram.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    let scale = 1.0 / (n as f64 - 1.0);
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (gram[i * n + j] + gram[j * n + i]) * scale;
            gram[i * n + j] = s;
            gram[j * n + i] = s;
        }
        gram[i * n + i] *= scale;
    }
    let eigen = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &gram));
    let mut vectors = vec![0f64; n * d];
    for k in 0..n {
        let u = eigen.eigenvectors.column(k);
        let v = &mut vectors[k * d..(k + 1) * d];
        for (r, &ur) in u.iter().enumerate() {
            for (vi, x) in v.iter_mut().zip(&centered[r * d..(r + 1) * d]) {
                *vi += ur * x;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
    }
    (eigen.eigenvalues.iter().copied().collect(), vectors)
}

/// Next standard-basis vector, starting at `*axis`, that survives Gram-Schmidt
/// against `basis`, normalized.
fn complete_basis(basis: &[f64], d: usize, axis: &mut usize) -> Vec<f64> {
    while *axis < d {
        let mut v = vec![0f64; d];
        v[*axis] = 1.0;
        *axis += 1;
        for _ in 0..2 {
            for b in basis.chunks_exact(d) {
                let dot: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
    unreachable!("standard basis spans the space")
}

/// Flips `row` so its largest-magnitude entry (first on ties) is positive.
fn apply_sign_convention(row: &mut [f64]) {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if v.abs() > row[best].abs() {
            best = i;
        }
    }
    if row[best] < 0.0 {
        row.iter_mut().for_each(|v| *v = -*v);
    }
}

impl PcaModel {
    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k * self.d_in..(k + 1) * self.d_in]
    }

    /// Centers `x` and projects it onto the components.
    pub fn transform_into(&self, x: &[f32], out: &mut [f32]) {
        assert_eq!(x.len(), self.d_in);
        assert_eq!(out.len(), self.d_out);
        for (k, o) in out.iter_mut().enumerate() {
            let c = self.component(k);
            let mut s = 0f64;
            for i in 0..self.d_in {
                s += (x[i] as f64 - self.mean[i]) * c[i];
            }
            *o = s as f32;
        }
    }

    pub fn transform(&self, x: &[f32]) -> Vec<f32> {
        let mut out = vec![0f32; self.d_out];
        self.transform_into(x, &mut out);
        out
    }

    pub fn inverse_transform(&self, z: &[f32]) -> Vec<f64> {
        assert_eq!(z.len(), self.d_out);
        let mut x = self.mean.clone();
        for (k, &zk) in z.iter().enumerate() {
            for (xi, c) in x.iter_mut().zip(self.component(k)) {
                *xi += zk as f64 * c;
            }
        }
        x
    }

    /// Sum over rows of the squared reconstruction error, projecting in f64.
    pub fn reconstruction_error(&self, samples: &[f32]) -> f64 {
        let d = self.d_in;
        let mut total = 0f64;
        let mut z = vec![0f64; self.d_out];
        let mut centered = vec![0f64; d];
        for row in samples.chunks_exact(d) {
            for i in 0..d {
                centered[i] = row[i] as f64 - self.mean[i];
            }
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = self.component(k).iter().zip(&centered).map(|(c, x)| c * x).sum();
            }
            for i in 0..d {
                let recon: f64 = (0..self.d_out).map(|k| z[k] * self.components[k * d + i]).sum();
                let e = centered[i] - recon;
                total += e * e;
            }
        }
        total
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * (self.d_in * (self.d_out + 1) + self.d_out));
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(if self.rank_deficient { FLAG_RANK_DEFICIENT } else { 0 });
        out.extend_from_slice(&(self.d_in as u32).to_le_bytes());
        out.extend_from_slice(&(self.d_out as u32).to_le_bytes());
        out.extend_from_slice(&(self.rank as u32).to_le_bytes());
        for v in self.mean.iter().chain(&self.components).chain(&self.explained_variance) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AdapterError> {
        let bad = |why: &str| AdapterError::BadModelFile(why.to_string());
        if bytes.len() < HEADER_LEN {
            return Err(bad("truncated header"));
        }
        if bytes[0..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let flags = bytes[6];
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (d_in, d_out, rank) = (u32_at(7), u32_at(11), u32_at(15));
        let floats = d_in + d_in * d_out + d_out;
        if bytes.len() != HEADER_LEN + 8 * floats {
            return Err(bad(&format!(
                "expected {} bytes, found {}",
                HEADER_LEN + 8 * floats,
                bytes.len()
            )));
        }
        let mut values = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mean: Vec<f64> = values.by_ref().take(d_in).collect();
        let components: Vec<f64> = values.by_ref().take(d_in * d_out).collect();
        let explained_variance: Vec<f64> = values.collect();
        Ok(Self {
            d_in,
            d_out,
            mean,
            components,
            explained_variance,
            rank,
            rank_deficient: flags & FLAG_RANK_DEFICIENT != 0,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), AdapterError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, AdapterError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
