//! Reference computations used as test oracles: a double-precision model
//! pipeline written independently of the library, and exact rational
//! solves.

#![allow(dead_code)]

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

/// Unit-peak Gaussian on a `w x h` grid with pixel `(i % w, i / w)`.
pub fn profile64(p: [f64; 3], w: usize, h: usize) -> Vec<f64> {
    (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let r2 = (x - p[0]).powi(2) + (y - p[1]).powi(2);
            (-r2 / (2.0 * p[2] * p[2])).exp()
        })
        .collect()
}

/// Least-squares `(alpha, beta)` for `g ~ alpha f + beta`, from the 2x2
/// normal equations solved by Cramer's rule.
pub fn amplitudes64(f: &[f64], g: &[f64]) -> (f64, f64) {
    let n = f.len() as f64;
    let sf: f64 = f.iter().sum();
    let sg: f64 = g.iter().sum();
    let sff: f64 = f.iter().map(|v| v * v).sum();
    let sfg: f64 = f.iter().zip(g).map(|(a, b)| a * b).sum();
    let det = sff * n - sf * sf;
    ((sfg * n - sf * sg) / det, (sff * sg - sf * sfg) / det)
}

/// Squared error after the best affine fit of the profile at `p`.
pub fn chi2_64(p: [f64; 3], w: usize, h: usize, g: &[f64]) -> f64 {
    let f = profile64(p, w, h);
    let (a, b) = amplitudes64(&f, g);
    f.iter().zip(g).map(|(fi, gi)| (gi - a * fi - b).powi(2)).sum()
}

/// Central differences of `chi2_64`.
pub fn chi2_gradient_fd(p: [f64; 3], w: usize, h: usize, g: &[f64], step: f64) -> [f64; 3] {
    std::array::from_fn(|j| {
        let (mut lo, mut hi) = (p, p);
        lo[j] -= step;
        hi[j] += step;
        (chi2_64(hi, w, h, g) - chi2_64(lo, w, h, g)) / (2.0 * step)
    })
}

/// Central differences of the optimal `(alpha, beta)` over the shape parameters.
pub fn amplitude_gradients_fd(
    p: [f64; 3],
    w: usize,
    h: usize,
    g: &[f64],
    step: f64,
) -> ([f64; 3], [f64; 3]) {
    let mut da = [0.0; 3];
    let mut db = [0.0; 3];
    for j in 0..3 {
        let (mut lo, mut hi) = (p, p);
        lo[j] -= step;
        hi[j] += step;
        let (a1, b1) = amplitudes64(&profile64(hi, w, h), g);
        let (a0, b0) = amplitudes64(&profile64(lo, w, h), g);
        da[j] = (a1 - a0) / (2.0 * step);
        db[j] = (b1 - b0) / (2.0 * step);
    }
    (da, db)
}

/// Central differences of each pixel's profile value.
pub fn profile_gradient_fd(p: [f64; 3], w: usize, h: usize, step: f64) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; w * h];
    for j in 0..3 {
        let (mut lo, mut hi) = (p, p);
        lo[j] -= step;
        hi[j] += step;
        let (f0, f1) = (profile64(lo, w, h), profile64(hi, w, h));
        for i in 0..w * h {
            out[i][j] = (f1[i] - f0[i]) / (2.0 * step);
        }
    }
    out
}

pub fn rat(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite value")
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("representable value")
}

/// Exact `(alpha, beta)` for 32-bit inputs, or `None` for a constant profile.
pub fn exact_alpha_beta(f: &[f32], g: &[f32]) -> Option<(BigRational, BigRational)> {
    let n = BigRational::from_integer(BigInt::from(f.len()));
    let (mut sf, mut sg, mut sff, mut sfg) = (
        BigRational::zero(),
        BigRational::zero(),
        BigRational::zero(),
        BigRational::zero(),
    );
    for (&fi, &gi) in f.iter().zip(g) {
        let (fr, gr) = (rat(fi as f64), rat(gi as f64));
        sff += &fr * &fr;
        sfg += &fr * &gr;
        sf += fr;
        sg += gr;
    }
    let det = &sff * &n - &sf * &sf;
    if det.is_zero() {
        return None;
    }
    let alpha = (&sfg * &n - &sf * &sg) / &det;
    let beta = (&sff * &sg - &sf * &sfg) / &det;
    Some((alpha, beta))
}

/// `sum (g - alpha f - beta)^2` with every operation exact.
pub fn exact_chi2(f: &[f32], g: &[f32], alpha: f32, beta: f32) -> BigRational {
    let (a, b) = (rat(alpha as f64), rat(beta as f64));
    f.iter()
        .zip(g)
        .map(|(&fi, &gi)| {
            let r = rat(gi as f64) - &a * rat(fi as f64) - &b;
            &r * &r
        })
        .fold(BigRational::zero(), |acc, v| acc + v)
}

/// Exact solution of `(A + lambda diag(A)) x = b` by Gauss-Jordan elimination
/// over the rationals.
pub fn exact_damped_solve<const D: usize>(
    a: &[[f64; D]; D],
    b: &[f64; D],
    lambda: f64,
) -> Option<[BigRational; D]> {
    let one_plus = BigRational::one() + rat(lambda);
    let mut m: Vec<Vec<BigRational>> = (0..D)
        .map(|i| {
            let mut row: Vec<BigRational> = (0..D)
                .map(|k| {
                    let v = rat(a[i][k]);
                    if i == k {
                        v * &one_plus
                    } else {
                        v
                    }
                })
                .collect();
            row.push(rat(b[i]));
            row
        })
        .collect();
    for col in 0..D {
        let pivot = (col..D).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        let p = m[col][col].clone();
        for k in col..=D {
            m[col][k] = &m[col][k] / &p;
        }
        for r in 0..D {
            if r != col && !m[r][col].is_zero() {
                let factor = m[r][col].clone();
                for k in col..=D {
                    let delta = &factor * &m[col][k];
                    m[r][k] -= delta;
                }
            }
        }
    }
    Some(std::array::from_fn(|i| m[i][D].clone()))
}

/// `|a - b| <= tol * |b|` in exact arithmetic.
pub fn rel_close(a: f64, exact: &BigRational, tol: f64) -> bool {
    let diff = (rat(a) - exact).abs();
    diff <= rat(tol) * exact.abs()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|a - b| / |b|` with vector norms.
pub fn norm_rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b)
}
