//! SVM kernels: polynomial `K_p`, its normalized form `K_p'`, the even
//! (sign-invariant) kernel `K_e`, and the composite subband kernel
//! `K_Omega = K_e(x^s, y^s) K_p(Omega_x^s, Omega_y^s)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Poly,
    PolyNorm,
    Even,
    Omega,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelParams {
    pub kind: KernelKind,
    /// Polynomial degree.
    pub theta: u32,
}

impl KernelParams {
    pub fn new(kind: KernelKind, theta: u32) -> Result<Self> {
        if theta == 0 {
            return Err(Error::invalid("polynomial degree must be at least 1"));
        }
        Ok(KernelParams { kind, theta })
    }

    pub fn linear() -> Self {
        KernelParams {
            kind: KernelKind::Linear,
            theta: 1,
        }
    }
}

/// A kernel over samples of type `T`.
pub trait Kernel<T: ?Sized>: Sync {
    fn eval(&self, a: &T, b: &T) -> Result<f64>;
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(())
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Cosine of the angle between `x` and `y`, clamped to [-1, 1]. Exactly 1
/// for `x == y` since `sqrt(fl(a * a)) == a`.
fn cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    let (xx, yy) = (dot(x, x), dot(y, y));
    if xx == 0.0 || yy == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(x, y) / (xx * yy).sqrt()).clamp(-1.0, 1.0))
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("kernel value".into()))
    }
}

/// `(1 + <x, y>)^theta`.
pub fn kp(x: &[f64], y: &[f64], theta: u32) -> Result<f64> {
    check_dims(x, y)?;
    finite((1.0 + dot(x, y)).powi(theta as i32))
}

/// `K_p` on `x / |x|` and `y / |y|`.
pub fn kp_norm(x: &[f64], y: &[f64], theta: u32) -> Result<f64> {
    check_dims(x, y)?;
    Ok((1.0 + cosine(x, y)?).powi(theta as i32))
}

/// Even kernel value from the cosine of two unit vectors.
pub fn ke_from_cosine(c: f64, theta: u32) -> f64 {
    (1.0 + c).powi(theta as i32) + (1.0 - c).powi(theta as i32)
}

/// `K_p'(x, y) + K_p'(x, -y)`.
pub fn ke(x: &[f64], y: &[f64], theta: u32) -> Result<f64> {
    check_dims(x, y)?;
    Ok(ke_from_cosine(cosine(x, y)?, theta))
}

/// `K_e(x^s, y^s) K_p(Omega_x, Omega_y)`.
pub fn komega(xs: &[f64], ys: &[f64], omega_x: &[f64], omega_y: &[f64], theta: u32) -> Result<f64> {
    let even = ke(xs, ys, theta)?;
    let dynamics = kp(omega_x, omega_y, theta)?;
    finite(even * dynamics)
}

/// One subband of one instance, ready for `K_Omega`: the waveform component
/// scaled to unit norm (empty for digital silence) and the dynamic feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandFeature {
    pub unit_wave: Vec<f64>,
    pub omega: Vec<f64>,
}

impl SubbandFeature {
    pub fn new(wave: &[f64], omega: Vec<f64>) -> Self {
        let norm = dot(wave, wave).sqrt();
        let unit_wave = if norm > 0.0 {
            wave.iter().map(|v| v / norm).collect()
        } else {
            Vec::new()
        };
        SubbandFeature { unit_wave, omega }
    }

    pub fn is_silent(&self) -> bool {
        self.unit_wave.is_empty()
    }
}

/// `K_Omega` on prepared features; a silent subband contributes `K_e = 0`.
pub fn komega_feature(a: &SubbandFeature, b: &SubbandFeature, theta: u32) -> Result<f64> {
    if a.is_silent() || b.is_silent() {
        check_dims(&a.omega, &b.omega)?;
        return Ok(0.0);
    }
    check_dims(&a.unit_wave, &b.unit_wave)?;
    let c = dot(&a.unit_wave, &b.unit_wave).clamp(-1.0, 1.0);
    let dynamics = kp(&a.omega, &b.omega, theta)?;
    finite(ke_from_cosine(c, theta) * dynamics)
}

impl Kernel<[f64]> for KernelParams {
    fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self.kind {
            KernelKind::Linear => {
                check_dims(a, b)?;
                finite(dot(a, b))
            }
            KernelKind::Poly => kp(a, b, self.theta),
            KernelKind::PolyNorm => kp_norm(a, b, self.theta),
            KernelKind::Even => ke(a, b, self.theta),
            KernelKind::Omega => Err(Error::invalid("the Omega kernel needs subband features")),
        }
    }
}

impl<T: ?Sized + Sync> Kernel<&T> for KernelParams
where
    KernelParams: Kernel<T>,
{
    fn eval(&self, a: &&T, b: &&T) -> Result<f64> {
        Kernel::<T>::eval(self, *a, *b)
    }
}

impl Kernel<Vec<f64>> for KernelParams {
    fn eval(&self, a: &Vec<f64>, b: &Vec<f64>) -> Result<f64> {
        Kernel::<[f64]>::eval(self, a.as_slice(), b.as_slice())
    }
}

impl Kernel<SubbandFeature> for KernelParams {
    fn eval(&self, a: &SubbandFeature, b: &SubbandFeature) -> Result<f64> {
        match self.kind {
            KernelKind::Omega => komega_feature(a, b, self.theta),
            _ => Kernel::<[f64]>::eval(self, &a.unit_wave, &b.unit_wave),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn polynomial_basics() {
        assert_eq!(kp(&[1.0, 0.0], &[0.0, 3.0], 6).unwrap(), 1.0);
        assert_eq!(kp(&[0.6, 0.8], &[0.6, 0.8], 6).unwrap(), 64.0);
        assert!(kp(&[1.0], &[1.0, 2.0], 2).is_err());
    }

    /// (hi, lo) pair with roughly 106 bits of significand.
    type Dd = (f64, f64);

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn dd_add(a: Dd, b: Dd) -> Dd {
        let (s, e) = two_sum(a.0, b.0);
        let (hi, lo) = two_sum(s, e + a.1 + b.1);
        (hi, lo)
    }

    fn dd_mul(a: Dd, b: Dd) -> Dd {
        let p = a.0 * b.0;
        let e = a.0.mul_add(b.0, -p);
        two_sum(p, e + a.0 * b.1 + a.1 * b.0)
    }

    fn dd_kp(x: &[f64], y: &[f64], theta: u32) -> f64 {
        let mut s: Dd = (1.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            s = dd_add(s, dd_mul((*a, 0.0), (*b, 0.0)));
        }
        let mut p: Dd = (1.0, 0.0);
        for _ in 0..theta {
            p = dd_mul(p, s);
        }
        p.0 + p.1
    }

    #[test]
    fn polynomial_matches_extended_precision() {
        // integer-valued inputs make (1 + <x,y>)^6 exactly representable in
        // i128, an independent exact evaluation
        let x = [3.0, -2.0, 5.0];
        let y = [1.0, 4.0, -1.0];
        let ip: i128 = 3 - 8 - 5;
        let exact = (1 + ip).pow(6) as f64;
        assert_eq!(kp(&x, &y, 6).unwrap(), exact);
        // a non-integer case against a double-double evaluation
        let x = [0.1234567, -0.7654321, 0.333];
        let y = [0.987, 0.0101, -0.5];
        let want = dd_kp(&x, &y, 6);
        let got = kp(&x, &y, 6).unwrap();
        assert!(((got - want) / want).abs() < 1e-12);
    }

    #[test]
    fn normalized_kernels_self_similarity() {
        let x = [0.3, -1.7, 2.2, 0.01];
        assert_eq!(kp_norm(&x, &x, 6).unwrap(), 64.0);
        assert_eq!(ke(&x, &x, 6).unwrap(), 64.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(kp_norm(&x, &neg, 6).unwrap(), 0.0);
        assert!(matches!(kp_norm(&[0.0, 0.0], &[1.0, 0.0], 6), Err(Error::ZeroNorm)));
    }

    #[test]
    fn omega_closed_forms() {
        let x = [1.0, 2.0, -0.5];
        let om = [0.5, 0.25];
        let want = 64.0 * (1.0f64 + 0.3125).powi(6);
        assert!((komega(&x, &x, &om, &om, 6).unwrap() - want).abs() < 1e-12 * want);
        let y = [0.2, 0.1, 0.9];
        let orth = komega(&x, &y, &[1.0, 0.0], &[0.0, 1.0], 6).unwrap();
        assert_eq!(orth, ke(&x, &y, 6).unwrap());
    }

    #[test]
    fn silent_subband_contributes_zero() {
        let a = SubbandFeature::new(&[0.0, 0.0], vec![1.0, 2.0]);
        let b = SubbandFeature::new(&[1.0, 0.0], vec![1.0, 2.0]);
        assert!(a.is_silent());
        assert_eq!(komega_feature(&a, &b, 6).unwrap(), 0.0);
    }

    #[test]
    fn feature_path_matches_slice_path() {
        let x = [0.3, -0.2, 0.9];
        let y = [-0.5, 0.1, 0.4];
        let (ox, oy) = (vec![0.1, 0.2], vec![-0.3, 0.05]);
        let a = SubbandFeature::new(&x, ox.clone());
        let b = SubbandFeature::new(&y, oy.clone());
        let direct = komega(&x, &y, &ox, &oy, 6).unwrap();
        assert!((komega_feature(&a, &b, 6).unwrap() - direct).abs() < 1e-12 * direct);
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0f64..3.0, 5).prop_filter("nonzero", |v| dot(v, v) > 1e-6)
    }

    proptest! {
        #[test]
        fn symmetric_and_even(x in vec3(), y in vec3(), theta in 1u32..8) {
            prop_assert_eq!(kp(&x, &y, theta).unwrap(), kp(&y, &x, theta).unwrap());
            prop_assert_eq!(kp_norm(&x, &y, theta).unwrap(), kp_norm(&y, &x, theta).unwrap());
            prop_assert_eq!(ke(&x, &y, theta).unwrap(), ke(&y, &x, theta).unwrap());
            let ny: Vec<f64> = y.iter().map(|v| -v).collect();
            let nx: Vec<f64> = x.iter().map(|v| -v).collect();
            prop_assert_eq!(ke(&x, &ny, theta).unwrap(), ke(&x, &y, theta).unwrap());
            prop_assert_eq!(ke(&nx, &y, theta).unwrap(), ke(&x, &y, theta).unwrap());
        }

        #[test]
        fn normalized_scale_invariant(x in vec3(), y in vec3(), a in 0.01f64..100.0) {
            let ax: Vec<f64> = x.iter().map(|v| a * v).collect();
            let k1 = kp_norm(&ax, &y, 6).unwrap();
            let k2 = kp_norm(&x, &y, 6).unwrap();
            prop_assert!((k1 - k2).abs() <= 1e-12 * k2.max(1.0));
        }
    }
}
