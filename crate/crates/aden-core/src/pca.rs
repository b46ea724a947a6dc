//! Two-dimensional principal-component projection for latent exports.
//!
//! Power iteration with deflation on the centered data; deterministic
//! (fixed initialization and iteration count), which is what the export
//! tests rely on.

use crate::error::{Error, Result};

const ITERATIONS: usize = 300;

/// Project row vectors onto their top-2 principal directions. Requires
/// at least 3 rows; all rows must share one dimension.
pub fn project_top2(rows: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    if rows.len() < 3 {
        return Err(Error::Data(format!(
            "principal-component projection needs >= 3 vectors, got {}",
            rows.len()
        )));
    }
    let dim = rows[0].len();
    if dim == 0 || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Data("latent vectors must share one nonzero dimension".into()));
    }

    let n = rows.len();
    let mut mean = vec![0.0; dim];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    let pc1 = dominant_direction(&centered, None);
    let pc2 = dominant_direction(&centered, Some(&pc1));

    Ok(centered
        .iter()
        .map(|row| (dot(row, &pc1), dot(row, &pc2)))
        .collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Power iteration for the covariance operator `X^T X`, deflated against
/// `exclude` when present. Collapses to the zero vector when the data
/// has no variance in the remaining subspace.
fn dominant_direction(centered: &[Vec<f64>], exclude: Option<&[f64]>) -> Vec<f64> {
    let dim = centered[0].len();
    // Deterministic, dimension-spanning start vector.
    let mut v: Vec<f64> = (0..dim)
        .map(|i| ((i as f64 * 0.7391) + 0.5).sin() + 0.01)
        .collect();
    normalize(&mut v);

    for _ in 0..ITERATIONS {
        if let Some(e) = exclude {
            deflate(&mut v, e);
        }
        // w = X^T (X v)
        let mut w = vec![0.0; dim];
        for row in centered {
            let proj = dot(row, &v);
            for (acc, x) in w.iter_mut().zip(row) {
                *acc += proj * x;
            }
        }
        if let Some(e) = exclude {
            deflate(&mut w, e);
        }
        if !normalize(&mut w) {
            return vec![0.0; dim];
        }
        v = w;
    }
    v
}

fn deflate(v: &mut [f64], against: &[f64]) {
    let p = dot(v, against);
    for (x, a) in v.iter_mut().zip(against) {
        *x -= p * a;
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = dot(v, v).sqrt();
    if norm < 1e-300 {
        return false;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn needs_three_vectors() {
        assert!(project_top2(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn axis_aligned_2d_data_is_recovered() {
        // Variance 25 along x, 1 along y: pc1 = +-x, pc2 = +-y.
        let rows = vec![
            vec![5.0, 1.0],
            vec![-5.0, -1.0],
            vec![5.0, -1.0],
            vec![-5.0, 1.0],
        ];
        let proj = project_top2(&rows).unwrap();
        for (row, (p1, p2)) in rows.iter().zip(&proj) {
            assert!((p1.abs() - row[0].abs()).abs() < 1e-9, "pc1 {p1} vs {}", row[0]);
            assert!((p2.abs() - row[1].abs()).abs() < 1e-9, "pc2 {p2} vs {}", row[1]);
        }
    }

    #[test]
    fn first_component_has_larger_variance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let proj = project_top2(&rows).unwrap();
        let var = |pick: fn(&(f64, f64)) -> f64| {
            let m = proj.iter().map(pick).sum::<f64>() / proj.len() as f64;
            proj.iter().map(|p| (pick(p) - m).powi(2)).sum::<f64>() / proj.len() as f64
        };
        assert!(var(|p| p.0) >= var(|p| p.1));
    }

    #[test]
    fn identical_sets_project_identically() {
        let base = vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 2.0], vec![0.0, -2.0, 1.0]];
        let mut doubled = base.clone();
        doubled.extend(base.clone());
        let proj = project_top2(&doubled).unwrap();
        for i in 0..base.len() {
            assert_eq!(proj[i], proj[i + base.len()]);
        }
    }
}
