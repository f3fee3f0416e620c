//! Smooth cutoff and bump primitives shared by the builtin Hamiltonians,
//! reparameterization profiles and loop variations.
//!
//! Everything here is C-infinity and hand-differentiated; the evaluators
//! return exact derivatives so downstream vector fields avoid finite
//! differences on the built-in families.

/// exp(-1/u) extended by zero for u <= 0; the basic C-infinity germ.
#[inline]
pub fn germ(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

#[inline]
fn germ_d(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        let e = (-1.0 / u).exp();
        e / (u * u)
    }
}

/// C-infinity step: 0 for u <= 0, 1 for u >= 1, strictly increasing between.
#[inline]
pub fn step(u: f64) -> f64 {
    let a = germ(u);
    let b = germ(1.0 - u);
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        1.0
    } else {
        a / (a + b)
    }
}

/// Derivative of [`step`].
#[inline]
pub fn step_d(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        return 0.0;
    }
    let a = germ(u);
    let b = germ(1.0 - u);
    let s = a + b;
    (germ_d(u) * b + a * germ_d(1.0 - u)) / (s * s)
}

/// Maximum of `step_d` over [0,1]; by symmetry it sits at u = 1/2.
pub fn step_d_max() -> f64 {
    // step is symmetric about 1/2, so the derivative peaks there.
    step_d(0.5)
}

/// Smooth plateau profile: 1 on [-plateau, plateau], 0 outside
/// (-support, support), monotone on each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau {
    pub plateau: f64,
    pub support: f64,
}

impl Plateau {
    pub fn new(plateau: f64, support: f64) -> Self {
        assert!(
            0.0 < plateau && plateau < support,
            "plateau profile needs 0 < plateau < support"
        );
        Plateau { plateau, support }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let u = (self.support - x.abs()) / (self.support - self.plateau);
        step(u)
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        let w = self.support - self.plateau;
        let u = (self.support - x.abs()) / w;
        -x.signum() * step_d(u) / w
    }

    /// Sup of |derivative| over the line.
    pub fn deriv_max(&self) -> f64 {
        step_d_max() / (self.support - self.plateau)
    }
}

/// Compactly supported radial bump on [0, radius]: value 1 at 0, 0 at radius.
/// Smooth as a function of the ambient point because it is composed with r^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialBump {
    pub radius: f64,
}

impl RadialBump {
    pub fn new(radius: f64) -> Self {
        assert!(radius > 0.0);
        RadialBump { radius }
    }

    /// Value as a function of r^2 (so callers never take square roots at 0).
    #[inline]
    pub fn value_r2(&self, r2: f64) -> f64 {
        let u = 1.0 - r2 / (self.radius * self.radius);
        step(u / 0.5) // full height for r^2 <= radius^2/2
    }

    /// d/d(r^2) of [`value_r2`].
    #[inline]
    pub fn deriv_r2(&self, r2: f64) -> f64 {
        let rr = self.radius * self.radius;
        step_d((1.0 - r2 / rr) / 0.5) * (-1.0 / (0.5 * rr))
    }
}

/// SplitMix64: tiny deterministic generator for seeded point clouds.
/// Bit-stable across platforms, which the reproducibility contract needs.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_is_a_smooth_step() {
        assert_eq!(step(-0.2), 0.0);
        assert_eq!(step(1.3), 1.0);
        assert!(step(0.5) > 0.49 && step(0.5) < 0.51);
        let mut prev = 0.0;
        for i in 0..=100 {
            let v = step(i as f64 / 100.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn step_derivative_matches_finite_difference() {
        let h = 1e-6;
        for &u in &[0.1, 0.3, 0.5, 0.77, 0.95] {
            let fd = (step(u + h) - step(u - h)) / (2.0 * h);
            assert!((fd - step_d(u)).abs() < 1e-6, "u={u}: fd={fd} vs {}", step_d(u));
        }
    }

    #[test]
    fn plateau_shape() {
        let p = Plateau::new(1.0, 2.0);
        assert_eq!(p.value(0.0), 1.0);
        assert_eq!(p.value(0.9), 1.0);
        assert_eq!(p.value(2.5), 0.0);
        assert!(p.value(1.5) > 0.0 && p.value(1.5) < 1.0);
        let h = 1e-6;
        let fd = (p.value(1.5 + h) - p.value(1.5 - h)) / (2.0 * h);
        assert!((fd - p.deriv(1.5)).abs() < 1e-5);
    }

    #[test]
    fn splitmix_is_deterministic() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        for _ in 0..32 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let v = SplitMix64::new(7).next_f64();
        assert!((0.0..1.0).contains(&v));
    }
}
