//! Exact squared Euclidean distance transform on a regular grid
//! (lower envelope of parabolas, one pass per axis).

use alloc::vec;
use alloc::vec::Vec;

const FAR: f64 = 1e300;

/// 1-D lower envelope: `out[q] = min_p (q - p)^2 + f[p]`.
fn envelope_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    // Skip leading infinities: sites must be finite to anchor parabolas.
    let mut k: usize = 0;
    let mut first = None;
    for (q, &fq) in f.iter().enumerate() {
        if fq < FAR {
            first = Some(q);
            break;
        }
    }
    let Some(first) = first else {
        out.iter_mut().for_each(|o| *o = FAR);
        return;
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in (first + 1)..n {
        if f[q] >= FAR {
            continue;
        }
        loop {
            let p = v[k];
            let s =
                ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    // cannot happen for finite sites since z[0] = -inf
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *o = dq * dq + f[p];
    }
}

/// Squared distance (in cell units) from every cell to the nearest site.
/// `extent` lists cells per axis with axis 0 fastest in the linear index.
pub(crate) fn squared_edt(sites: &[bool], extent: &[usize]) -> Vec<f64> {
    let total: usize = extent.iter().product();
    debug_assert_eq!(sites.len(), total);
    let mut g: Vec<f64> = sites.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let max_len = extent.iter().copied().max().unwrap_or(0);
    let mut line = vec![0.0; max_len];
    let mut out = vec![0.0; max_len];
    let mut v = vec![0usize; max_len];
    let mut z = vec![0.0; max_len + 1];
    let mut stride = 1usize;
    for &len in extent {
        let outer = total / (len * stride);
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * len * stride + inner;
                for i in 0..len {
                    line[i] = g[base + i * stride];
                }
                envelope_1d(&line[..len], &mut out[..len], &mut v, &mut z);
                for i in 0..len {
                    g[base + i * stride] = out[i].min(FAR);
                }
            }
        }
        stride *= len;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(sites: &[bool], extent: &[usize]) -> Vec<f64> {
        let nx = extent[0];
        let ny = extent[1];
        let mut out = vec![FAR; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                for sj in 0..ny {
                    for si in 0..nx {
                        if sites[si + nx * sj] {
                            let dx = i as f64 - si as f64;
                            let dy = j as f64 - sj as f64;
                            let d = dx * dx + dy * dy;
                            if d < out[i + nx * j] {
                                out[i + nx * j] = d;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_brute_force_on_scattered_sites() {
        let extent = [13, 9];
        let mut sites = vec![false; 13 * 9];
        for &(i, j) in &[(0usize, 0usize), (12, 3), (5, 5), (7, 8), (2, 6)] {
            sites[i + 13 * j] = true;
        }
        let a = squared_edt(&sites, &extent);
        let b = brute(&sites, &extent);
        assert_eq!(a, b);
    }

    #[test]
    fn no_sites_is_far() {
        let a = squared_edt(&[false; 6], &[3, 2]);
        assert!(a.iter().all(|&x| x >= FAR));
    }

    #[test]
    fn three_dimensional_single_site() {
        let extent = [4, 5, 6];
        let mut sites = vec![false; 120];
        sites[1 + 4 * (2 + 5 * 3)] = true;
        let a = squared_edt(&sites, &extent);
        for k in 0..6 {
            for j in 0..5 {
                for i in 0..4 {
                    let e = (i as f64 - 1.0).powi(2)
                        + (j as f64 - 2.0).powi(2)
                        + (k as f64 - 3.0).powi(2);
                    assert_eq!(a[i + 4 * (j + 5 * k)], e);
                }
            }
        }
    }
}
