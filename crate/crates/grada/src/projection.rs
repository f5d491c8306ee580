//! 2-D projection of the latent space for cluster inspection.
//!
//! Latent vectors are centered and projected onto the top two principal
//! directions, found by power iteration with deflation (tolerance 1e-10).
//! Deterministic: fixed start vector, and each direction's first nonzero
//! loading is made positive.

use std::path::Path;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{forward, ModelConfig, ModelParams};
use crate::tensor::Tensor;

/// One projected sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
    pub class_label: usize,
    pub domain_label: usize,
}

/// Projection output; `degenerate` flags rank-deficient trivial data
/// (all coordinates zero).
#[derive(Debug, Clone)]
pub struct LatentProjection {
    pub points: Vec<ProjectedPoint>,
    pub degenerate: bool,
}

const TOL: f64 = 1e-10;
const MAX_ITERS: usize = 100_000;

/// Runs the samples through the extractor and projects the latents to 2-D.
pub fn project_latent(
    model_config: &ModelConfig,
    params: &ModelParams,
    samples: &[Sample],
) -> Result<LatentProjection> {
    if samples.len() < 3 {
        return Err(Error::Data(format!(
            "projection needs ≥ 3 samples, got {}",
            samples.len()
        )));
    }
    let mut latents = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let shape = chunk[0].image.shape();
        let image_len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(chunk.len() * image_len);
        for s in chunk {
            data.extend_from_slice(s.image.data());
        }
        let mut full = vec![chunk.len()];
        full.extend_from_slice(shape);
        let batch = Tensor::new(full, data)?;
        let pass = forward(model_config, params, &batch, false)?;
        let latent = pass.tape.value(pass.latent);
        let width = latent.shape()[1];
        for r in 0..chunk.len() {
            latents.push(latent.data()[r * width..(r + 1) * width].to_vec());
        }
    }
    let coords = project_rows(&latents)?;
    let points = coords
        .iter()
        .zip(samples)
        .map(|(&(x, y), s)| ProjectedPoint {
            x,
            y,
            class_label: s.class_label,
            domain_label: s.domain_label,
        })
        .collect();
    Ok(LatentProjection { points, degenerate: coords.iter().all(|&(x, y)| x == 0.0 && y == 0.0) })
}

/// Centers the rows and projects them onto their top two principal
/// directions.
pub fn project_rows(rows: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::Data(format!("projection needs ≥ 3 rows, got {n}")));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::dim("project_rows", "ragged rows".to_string()));
    }

    let mut mean = vec![0.0; dim];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    // Covariance (dim×dim), upper form filled symmetrically.
    let mut cov = vec![0.0; dim * dim];
    for row in &centered {
        for i in 0..dim {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for j in i..dim {
                cov[i * dim + j] += ri * row[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            let v = cov[i * dim + j] / denom;
            cov[i * dim + j] = v;
            cov[j * dim + i] = v;
        }
    }

    let total_scale: f64 = (0..dim).map(|i| cov[i * dim + i]).sum();
    if total_scale <= f64::MIN_POSITIVE {
        // Rank-zero data: every centered row is the origin.
        return Ok(vec![(0.0, 0.0); n]);
    }
    let eps = total_scale * 1e-14;

    let (v1, l1) = dominant_eigenvector(&cov, dim);
    if l1 <= eps {
        return Ok(vec![(0.0, 0.0); n]);
    }
    // Deflate and repeat for the second direction.
    let mut deflated = cov.clone();
    for i in 0..dim {
        for j in 0..dim {
            deflated[i * dim + j] -= l1 * v1[i] * v1[j];
        }
    }
    let (v2, l2) = dominant_eigenvector(&deflated, dim);
    let v2 = if l2 <= eps { None } else { Some(v2) };

    Ok(centered
        .iter()
        .map(|row| {
            let x = dot(row, &v1);
            let y = v2.as_ref().map_or(0.0, |v| dot(row, v));
            (x, y)
        })
        .collect())
}

/// Power iteration with a deterministic start; the returned vector has its
/// first nonzero loading positive.
fn dominant_eigenvector(matrix: &[f64], dim: usize) -> (Vec<f64>, f64) {
    // Slightly graded start so no single symmetry traps the iteration.
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + (i as f64) * 1e-3).collect();
    normalize(&mut v);
    let mut eigenvalue = 0.0;
    for _ in 0..MAX_ITERS {
        let mut next = vec![0.0; dim];
        for i in 0..dim {
            let row = &matrix[i * dim..(i + 1) * dim];
            next[i] = dot(row, &v);
        }
        eigenvalue = dot(&next, &v);
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= f64::MIN_POSITIVE {
            // Start vector lies in the null space.
            return (v, 0.0);
        }
        for x in &mut next {
            *x /= norm;
        }
        // Eigenvalues of a covariance matrix are ≥ 0, so convergence can
        // be measured without sign alignment.
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        v = next;
        if delta < TOL {
            break;
        }
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
    }
    (v, eigenvalue)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Projection CSV: `x,y,class,domain`, one data row per sample.
pub fn write_projection_csv(path: &Path, projection: &LatentProjection) -> Result<()> {
    let mut text = String::from("x,y,class,domain\n");
    for p in &projection.points {
        text.push_str(&format!("{},{},{},{}\n", p.x, p.y, p.class_label, p.domain_label));
    }
    std::fs::write(path, text)?;
    Ok(())
}
