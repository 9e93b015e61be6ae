//! Exact Euclidean distance transform.

/// Stand-in for "no seed pixel"; large enough to lose every comparison.
const FAR: f64 = 1e20;

/// 1-D squared Euclidean distance transform of a sampled function
/// (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        loop {
            let p = v[k];
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere.
                v[0] = q;
                z[1] = f64::INFINITY;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
            }
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = (d * d + f[v[k]]).min(FAR);
    }
}

/// Squared distance from every pixel to the nearest pixel where `seed` holds.
pub(crate) fn squared_distance(
    width: usize,
    height: usize,
    seed: impl Fn(usize) -> bool,
) -> Vec<f64> {
    let mut d: Vec<f64> = (0..width * height)
        .map(|i| if seed(i) { 0.0 } else { FAR })
        .collect();
    let n = width.max(height);
    let (mut f, mut out) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n + 1], vec![0.0; n + 2]);
    for x in 0..width {
        for y in 0..height {
            f[y] = d[y * width + x];
        }
        edt_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for y in 0..height {
            d[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        let row = &mut d[y * width..(y + 1) * width];
        f[..width].copy_from_slice(row);
        edt_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        row.copy_from_slice(&out[..width]);
    }
    d
}
