//! Two-component PCA used to plot group-mean embeddings.

/// Projects `rows` onto their first two principal components.
///
/// Components are found by power iteration on the centred data with a fixed
/// start vector; each component's sign is chosen so its largest-magnitude
/// entry is positive. Returns one `[pc1, pc2]` per row.
pub fn pca_2d(rows: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let n = rows.len();
    if n == 0 {
        return Vec::new();
    }
    let dim = rows[0].len();
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let centred: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    let first = principal_axis(&centred, &[]);
    let second = principal_axis(&centred, std::slice::from_ref(&first));
    centred.iter().map(|r| [dot(r, &first), dot(r, &second)]).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalise(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn orthogonalise(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let d = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
    }
}

fn principal_axis(x: &[Vec<f64>], basis: &[Vec<f64>]) -> Vec<f64> {
    let dim = x[0].len();
    let mut v: Vec<f64> = (0..dim).map(|j| 1.0 / (j as f64 + 1.0)).collect();
    orthogonalise(&mut v, basis);
    if normalise(&mut v) == 0.0 {
        return vec![0.0; dim];
    }
    for _ in 0..1000 {
        // v <- X^T X v
        let xv: Vec<f64> = x.iter().map(|r| dot(r, &v)).collect();
        let mut next = vec![0.0; dim];
        for (r, s) in x.iter().zip(&xv) {
            next.iter_mut().zip(r).for_each(|(a, b)| *a += s * b);
        }
        orthogonalise(&mut next, basis);
        if normalise(&mut next) == 0.0 {
            return vec![0.0; dim];
        }
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        if delta < 1e-12 {
            break;
        }
    }
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}
