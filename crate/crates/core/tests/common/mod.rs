//! Reference implementations used as test oracles. Written from the
//! textbook definitions and deliberately naive: no sweeps, no shifting.
#![allow(dead_code)]

/// The documented midpoint convention, strictly below `hi`.
pub fn mid(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

pub fn stump_predict(feature: usize, threshold: f64, polarity: i8, x: &[f64]) -> i8 {
    if x[feature] > threshold {
        polarity
    } else {
        -polarity
    }
}

pub fn stump_error(xs: &[Vec<f64>], ys: &[i8], d: &[f64], f: usize, t: f64, p: i8) -> f64 {
    let mut e = 0.0;
    for i in 0..xs.len() {
        if stump_predict(f, t, p, &xs[i]) != ys[i] {
            e += d[i];
        }
    }
    e
}

/// Exhaustive search: every feature, every candidate threshold in
/// ascending order, polarity +1 before -1; first strict minimum wins.
pub fn brute_force_stump(xs: &[Vec<f64>], ys: &[i8], d: &[f64]) -> (usize, f64, i8, f64) {
    let dim = xs[0].len();
    let mut best: Option<(usize, f64, i8, f64)> = None;
    for f in 0..dim {
        let mut vals: Vec<f64> = xs.iter().map(|x| x[f]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        let mut thresholds = vec![f64::NEG_INFINITY];
        for w in vals.windows(2) {
            thresholds.push(mid(w[0], w[1]));
        }
        thresholds.push(f64::INFINITY);
        for &t in &thresholds {
            for p in [1i8, -1] {
                let e = stump_error(xs, ys, d, f, t, p);
                if best.is_none_or(|b| e < b.3) {
                    best = Some((f, t, p, e));
                }
            }
        }
    }
    best.unwrap()
}

pub struct ClassicalRound {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
    pub epsilon: f64,
    pub alpha: f64,
    /// Distribution the round's stump was trained on.
    pub dist: Vec<f64>,
}

/// Textbook discrete AdaBoost with the learner weight's error clamped to
/// `[floor, 1 - floor]`.
pub fn classical_adaboost(
    xs: &[Vec<f64>],
    ys: &[i8],
    rounds: usize,
    floor: f64,
) -> Vec<ClassicalRound> {
    let n = xs.len();
    let mut d = vec![1.0 / n as f64; n];
    let mut out = Vec::new();
    for _ in 0..rounds {
        let (f, t, p, eps) = brute_force_stump(xs, ys, &d);
        let e = eps.max(floor).min(1.0 - floor);
        let alpha = 0.5 * ((1.0 - e) / e).ln();
        out.push(ClassicalRound {
            feature: f,
            threshold: t,
            polarity: p,
            epsilon: eps,
            alpha,
            dist: d.clone(),
        });
        let mut next: Vec<f64> = (0..n)
            .map(|i| {
                let h = stump_predict(f, t, p, &xs[i]) as f64;
                d[i] * (-alpha * ys[i] as f64 * h).exp()
            })
            .collect();
        let z: f64 = next.iter().sum();
        for w in &mut next {
            *w /= z;
        }
        d = next;
    }
    out
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}
