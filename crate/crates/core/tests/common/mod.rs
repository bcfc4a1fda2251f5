#![allow(dead_code)]

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite Gauss–Legendre rule with `panels` equal panels.
pub fn composite(
    rule: &[(f64, f64)],
    a: f64,
    b: f64,
    panels: usize,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for &(x, w) in rule {
            s += w * f(mid + 0.5 * h * x);
        }
    }
    0.5 * h * s
}

/// Plain cosine series of the reflected heat kernel on [-l, l] with a
/// fixed, generous number of terms.
pub fn profile_by_series(r: f64, y: f64, l: f64, terms: usize) -> f64 {
    let mut s = 1.0 / (2.0 * l);
    for n in 1..=terms {
        let k = n as f64 * PI / l;
        s += (-(k * k) * r).exp() * (k * y).cos() / l;
    }
    s
}

/// Free-space heat kernel folded by reflections at ±l.
pub fn profile_by_images(r: f64, y: f64, l: f64, images: i64) -> f64 {
    (-images..=images)
        .map(|k| {
            let d = y - 2.0 * k as f64 * l;
            (-d * d / (4.0 * r)).exp()
        })
        .sum::<f64>()
        / (4.0 * PI * r).sqrt()
}
