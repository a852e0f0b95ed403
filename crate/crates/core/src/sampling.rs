//! Deterministic low-discrepancy sampling.
//!
//! An additive-recurrence (Kronecker) sequence built on the generalized
//! golden ratio, with a seed-derived Cramer shift per dimension. Same seed,
//! same points, on every platform and at every worker count.

/// SplitMix64: cheap, well-mixed 64-bit stream for deriving shifts.
#[derive(Debug, Clone)]
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Kronecker sequence: point i, dimension j is frac(shift_j + (i+1) alpha_j)
/// with alpha_j = phi_d^-(j+1), phi_d the root > 1 of x^(d+1) = x + 1.
#[derive(Debug, Clone)]
pub struct LowDiscrepancy {
    alphas: Vec<f64>,
    shifts: Vec<f64>,
}

impl LowDiscrepancy {
    pub fn new(dim: usize, seed: u64) -> Self {
        // Solve x^(d+1) = x + 1 by Newton from 2.0.
        let d = dim as f64;
        let mut phi = 2.0f64;
        for _ in 0..64 {
            let f = phi.powf(d + 1.0) - phi - 1.0;
            let df = (d + 1.0) * phi.powf(d) - 1.0;
            phi -= f / df;
        }
        let alphas = (1..=dim).map(|j| (1.0 / phi).powi(j as i32)).collect();
        let mut rng = SplitMix64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1));
        let shifts = (0..dim).map(|_| rng.next_f64()).collect();
        LowDiscrepancy { alphas, shifts }
    }

    pub fn dim(&self) -> usize {
        self.alphas.len()
    }

    /// The i-th point of the sequence, components in [0, 1).
    pub fn point(&self, i: usize) -> Vec<f64> {
        let n = (i + 1) as f64;
        self.alphas
            .iter()
            .zip(&self.shifts)
            .map(|(a, s)| {
                let v = (s + n * a).fract();
                // fract of a sum can touch 1.0 from below after rounding.
                if v >= 1.0 {
                    0.0
                } else {
                    v
                }
            })
            .collect()
    }
}

/// Inverse of the standard normal CDF (Acklam's rational approximation,
/// relative error below 1.2e-9 — ample for sampling).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    // Clamp away from 0 and 1; the sequence never produces exact endpoints.
    let p = p.clamp(1e-300, 1.0 - 1e-16);

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_is_deterministic() {
        let a = LowDiscrepancy::new(7, 42);
        let b = LowDiscrepancy::new(7, 42);
        for i in [0usize, 1, 999] {
            assert_eq!(a.point(i), b.point(i));
        }
        let c = LowDiscrepancy::new(7, 43);
        assert_ne!(a.point(0), c.point(0));
    }

    #[test]
    fn sequence_is_equidistributed() {
        let seq = LowDiscrepancy::new(3, 7);
        let n = 20000;
        let mut means = [0.0f64; 3];
        for i in 0..n {
            let p = seq.point(i);
            for d in 0..3 {
                assert!((0.0..1.0).contains(&p[d]));
                means[d] += p[d] / n as f64;
            }
        }
        for m in means {
            assert!((m - 0.5).abs() < 2e-3, "mean {m}");
        }
    }

    #[test]
    fn inverse_normal_cdf_reference_values() {
        // Phi^-1(0.5) = 0, Phi^-1(0.975) ~ 1.959964.
        assert!(inverse_normal_cdf(0.5).abs() < 1e-9);
        assert!((inverse_normal_cdf(0.975) - 1.959963984540054).abs() < 1e-7);
        assert!((inverse_normal_cdf(0.025) + 1.959963984540054).abs() < 1e-7);
        // Monotone on a coarse sweep.
        let mut prev = f64::NEG_INFINITY;
        for k in 1..100 {
            let v = inverse_normal_cdf(k as f64 / 100.0);
            assert!(v > prev);
            prev = v;
        }
    }
}
