//! Reference implementations used to check the library. Nothing here calls
//! into the code under test: the DFT is a direct double sum, eigenvalues come
//! from a Hessenberg reduction plus Francis double-shift QR, and logistic
//! fits use plain batch gradient descent.

#![allow(dead_code)]

use std::f64::consts::TAU;

/// Direct `O(L^2)` DFT, forward unnormalized.
pub fn dft(x: &[f64]) -> Vec<(f64, f64)> {
    let l = x.len();
    (0..l)
        .map(|f| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, &v) in x.iter().enumerate() {
                let ang = TAU * ((f * t) % l) as f64 / l as f64;
                re += v * ang.cos();
                im -= v * ang.sin();
            }
            (re, im)
        })
        .collect()
}

/// Direct inverse DFT with the `1/L` factor.
pub fn idft(z: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let l = z.len();
    (0..l)
        .map(|t| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (f, &(a, b)) in z.iter().enumerate() {
                let ang = TAU * ((f * t) % l) as f64 / l as f64;
                let (c, s) = (ang.cos(), ang.sin());
                re += a * c - b * s;
                im += a * s + b * c;
            }
            (re / l as f64, im / l as f64)
        })
        .collect()
}

/// Centered moving average over an explicitly edge-padded copy.
fn smooth(xs: &[f64], q: usize) -> Vec<f64> {
    let n = xs.len();
    let q = q.clamp(1, n);
    let left = (q - 1) / 2;
    let right = q - 1 - left;
    let mut padded = vec![xs[0]; left];
    padded.extend_from_slice(xs);
    padded.extend(std::iter::repeat_n(xs[n - 1], right));
    (0..n).map(|i| padded[i..i + q].iter().sum::<f64>() / q as f64).collect()
}

/// Spectral-residual saliency of one window by direct DFT.
pub fn sr_window(x: &[f64], q: usize, floor: f64) -> Vec<f64> {
    let spec = dft(x);
    let log_amp: Vec<f64> = spec.iter().map(|&(a, b)| a.hypot(b).max(floor).ln()).collect();
    let avg = smooth(&log_amp, q);
    let z: Vec<(f64, f64)> = spec
        .iter()
        .zip(log_amp.iter().zip(&avg))
        .map(|(&(a, b), (&la, &m))| {
            let p = b.atan2(a);
            let mag = (la - m).exp();
            (mag * p.cos(), mag * p.sin())
        })
        .collect();
    idft(&z).into_iter().map(|(a, b)| a.hypot(b)).collect()
}

/// Window starts and lengths by brute force over the definition.
pub fn windows(len: usize, tau: usize, step: usize) -> Vec<(usize, usize)> {
    if len <= tau {
        return vec![(0, len)];
    }
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        out.push((start, tau.min(len - start)));
        if start + tau >= len {
            break;
        }
        start += step;
    }
    out
}

/// Saliency map by averaging direct-DFT window saliency over coverage sets.
pub fn saliency_map(x: &[f64], tau: usize, step: usize, q: usize, floor: f64) -> Vec<f64> {
    let ws = windows(x.len(), tau, step);
    let per: Vec<Vec<f64>> = ws.iter().map(|&(s, l)| sr_window(&x[s..s + l], q, floor)).collect();
    (0..x.len())
        .map(|j| {
            let cover: Vec<f64> = ws
                .iter()
                .zip(&per)
                .filter(|((s, l), _)| (*s..s + l).contains(&j))
                .map(|((s, _), v)| v[j - s])
                .collect();
            cover.iter().sum::<f64>() / cover.len() as f64
        })
        .collect()
}

/// Eigenvalues of a row-major `n x n` matrix.
pub fn eigenvalues(n: usize, data: &[f64]) -> Vec<(f64, f64)> {
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| data[i * n..(i + 1) * n].to_vec()).collect();
    hessenberg(&mut a);
    hqr(&mut a)
}

pub fn spectral_radius(n: usize, data: &[f64]) -> f64 {
    eigenvalues(n, data)
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max)
}

/// Reduction to upper Hessenberg form by Gaussian elimination with pivoting.
fn hessenberg(a: &mut [Vec<f64>]) {
    let n = a.len();
    for m in 1..n.saturating_sub(1) {
        let mut x: f64 = 0.0;
        let mut piv = m;
        for j in m..n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                piv = j;
            }
        }
        if piv != m {
            a.swap(piv, m);
            for row in a.iter_mut() {
                row.swap(piv, m);
            }
        }
        if x != 0.0 {
            for i in m + 1..n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..n {
                        a[i][j] -= y * a[m][j];
                    }
                    for j in 0..n {
                        a[j][m] += y * a[j][i];
                    }
                }
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        for v in row.iter_mut().take(i.saturating_sub(1)) {
            *v = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix.
fn hqr(a: &mut [Vec<f64>]) -> Vec<(f64, f64)> {
    let n = a.len() as isize;
    let eps = f64::EPSILON;
    let mut wr = vec![(0.0, 0.0); n as usize];
    let mut anorm = 0.0;
    for i in 0..n as usize {
        for j in i.saturating_sub(1)..n as usize {
            anorm += a[i][j].abs();
        }
    }
    let at = |a: &[Vec<f64>], i: isize, j: isize| a[i as usize][j as usize];
    let mut nn = n - 1;
    let mut t = 0.0;
    let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
    let (mut x, mut y, mut z, mut w);
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l > 0 {
                let mut s = at(a, l - 1, l - 1).abs() + at(a, l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if at(a, l, l - 1).abs() <= eps * s {
                    a[l as usize][l as usize - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = at(a, nn, nn);
            if l == nn {
                wr[nn as usize] = (x + t, 0.0);
                nn -= 1;
            } else {
                y = at(a, nn - 1, nn - 1);
                w = at(a, nn, nn - 1) * at(a, nn - 1, nn);
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[nn as usize - 1] = (x + z, 0.0);
                        wr[nn as usize] = (x + z, 0.0);
                        if z != 0.0 {
                            wr[nn as usize] = (x - w / z, 0.0);
                        }
                    } else {
                        wr[nn as usize - 1] = (x + p, z);
                        wr[nn as usize] = (x + p, -z);
                    }
                    nn -= 2;
                } else {
                    assert!(its < 60, "QR iteration did not converge");
                    if its == 10 || its == 20 {
                        t += x;
                        for i in 0..=nn {
                            a[i as usize][i as usize] -= x;
                        }
                        let s = at(a, nn, nn - 1).abs() + at(a, nn - 1, nn - 2).abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    while m >= l {
                        z = at(a, m, m);
                        r = x - z;
                        let s0 = y - z;
                        p = (r * s0 - w) / at(a, m + 1, m) + at(a, m, m + 1);
                        q = at(a, m + 1, m + 1) - z - r - s0;
                        r = at(a, m + 2, m + 1);
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = at(a, m, m - 1).abs() * (q.abs() + r.abs());
                        let v = p.abs() * (at(a, m - 1, m - 1).abs() + z.abs() + at(a, m + 1, m + 1).abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m + 2..=nn {
                        a[i as usize][i as usize - 2] = 0.0;
                        if i != m + 2 {
                            a[i as usize][i as usize - 3] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k <= nn - 1 {
                        if k != m {
                            p = at(a, k, k - 1);
                            q = at(a, k + 1, k - 1);
                            r = 0.0;
                            if k + 1 != nn {
                                r = at(a, k + 2, k - 1);
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[k as usize][k as usize - 1] = -at(a, k, k - 1);
                                }
                            } else {
                                a[k as usize][k as usize - 1] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                let (ku, ju) = (k as usize, j as usize);
                                p = a[ku][ju] + q * a[ku + 1][ju];
                                if k + 1 != nn {
                                    p += r * a[ku + 2][ju];
                                    a[ku + 2][ju] -= p * z;
                                }
                                a[ku + 1][ju] -= p * y;
                                a[ku][ju] -= p * x;
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                let (iu, ku) = (i as usize, k as usize);
                                p = x * a[iu][ku] + y * a[iu][ku + 1];
                                if k + 1 != nn {
                                    p += z * a[iu][ku + 2];
                                    a[iu][ku + 2] -= p * r;
                                }
                                a[iu][ku + 1] -= p * q;
                                a[iu][ku] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    wr
}

/// A small logistic problem stored row-major without the bias column.
pub struct Problem {
    pub rows: usize,
    pub dim: usize,
    pub x: Vec<f64>,
    pub d: Vec<bool>,
    pub w1: f64,
    pub w0: f64,
    pub ridge: f64,
}

impl Problem {
    fn prob(&self, params: &[f64], i: usize) -> f64 {
        let row = &self.x[i * self.dim..(i + 1) * self.dim];
        let z: f64 = row.iter().zip(params).map(|(a, b)| a * b).sum::<f64>() + params[self.dim];
        1.0 / (1.0 + (-z).exp())
    }

    /// Weighted cross entropy written directly in terms of probabilities.
    pub fn loss(&self, params: &[f64]) -> f64 {
        let mut j = 0.0;
        for i in 0..self.rows {
            let y = self.prob(params, i);
            j -= if self.d[i] { self.w1 * y.ln() } else { self.w0 * (1.0 - y).ln() };
        }
        j + self.ridge * params[..self.dim].iter().map(|v| v * v).sum::<f64>()
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim + 1];
        for i in 0..self.rows {
            let y = self.prob(params, i);
            let (w, d) = if self.d[i] { (self.w1, 1.0) } else { (self.w0, 0.0) };
            let e = w * (y - d);
            for k in 0..self.dim {
                g[k] += e * self.x[i * self.dim + k];
            }
            g[self.dim] += e;
        }
        for k in 0..self.dim {
            g[k] += 2.0 * self.ridge * params[k];
        }
        g
    }

    /// Batch gradient descent with a fixed step below the inverse Lipschitz bound.
    pub fn fit_gd(&self, tol: f64, max_iter: usize) -> Vec<f64> {
        let wmax = self.w1.max(self.w0);
        let lip: f64 = (0..self.rows)
            .map(|i| 0.25 * wmax * (1.0 + self.x[i * self.dim..(i + 1) * self.dim].iter().map(|v| v * v).sum::<f64>()))
            .sum::<f64>()
            + 2.0 * self.ridge;
        let step = 1.0 / lip;
        let mut p = vec![0.0; self.dim + 1];
        for _ in 0..max_iter {
            let g = self.gradient(&p);
            if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < tol {
                break;
            }
            for (pi, gi) in p.iter_mut().zip(&g) {
                *pi -= step * gi;
            }
        }
        p
    }
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Relative difference with unit scale floor.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
