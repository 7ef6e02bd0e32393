//! Portable pseudo-random streams.
//!
//! Every random draw in the crate comes from a [`Stream`]: a SplitMix64
//! generator whose initial state is `seed XOR fnv1a64(name)`, where `name`
//! identifies the purpose of the stream (`"data"`, `"split"`, `"partition"`,
//! `"latency"`, `"dropout/<client>"`). The algorithms below are fully
//! specified so that other implementations can reproduce every dataset,
//! partition and simulation bit for bit:
//!
//! * `next_u64`: `state += 0x9E3779B97F4A7C15; z = state;`
//!   `z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;`
//!   `z = (z ^ (z >> 27)) * 0x94D049BB133111EB; return z ^ (z >> 31)`
//!   (wrapping arithmetic).
//! * `uniform`: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`.
//! * `normal`: Box–Muller, one output per pair of uniforms:
//!   `u1 = 1 - uniform(); u2 = uniform(); sqrt(-2 ln u1) * cos(2 pi u2)`.
//! * `gamma(shape)`: Marsaglia–Tsang; for `shape < 1`,
//!   `gamma(shape + 1) * uniform()^(1 / shape)`.
//! * `shuffle`: Fisher–Yates from the last index down, `j = below(i + 1)`,
//!   where `below(n) = floor(uniform() * n)`.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Clone, Debug)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(seed: u64, name: &str) -> Self {
        Stream {
            state: seed ^ fnv1a64(name.as_bytes()),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let j = (self.uniform() * n as f64) as usize;
        j.min(n - 1)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn gamma(&mut self, shape: f64) -> f64 {
        debug_assert!(shape > 0.0);
        if shape < 1.0 {
            let boost = self.uniform().powf(1.0 / shape);
            return self.gamma(shape + 1.0) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform();
            if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
                return d * v;
            }
        }
    }

    /// Symmetric Dirichlet draw with `k` components. Falls back to the
    /// uniform vector when every gamma variate underflows to zero.
    pub fn dirichlet(&mut self, concentration: f64, k: usize) -> Vec<f64> {
        let draws: Vec<f64> = (0..k).map(|_| self.gamma(concentration)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            draws.into_iter().map(|g| g / total).collect()
        } else {
            vec![1.0 / k as f64; k]
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
