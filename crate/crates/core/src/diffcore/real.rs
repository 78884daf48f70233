//! Scalar types usable by the batched engine, with their matrix products
//! and a branch-free hyperbolic tangent.

use std::fmt::{self, Debug};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::error::{Error, Result};

/// Arithmetic used for the hidden layers of batched trunk passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f64" => Ok(Precision::F64),
            "f32" => Ok(Precision::F32),
            other => Err(Error::Config(format!("unknown precision `{other}` (expected f64 or f32)"))),
        }
    }
}

pub trait Real:
    Copy
    + Default
    + PartialEq
    + PartialOrd
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    const ZERO: Self;
    const NAME: &'static str;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `c = a * b + beta c` for strided row/column layouts.
    ///
    /// # Safety
    /// The strides must describe views that lie inside the given slices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// `[sigma, sigma', sigma'', sigma''']` over a slice.
    fn activate(act: &dyn Activation, z: &[Self], out: [&mut [Self]; 4]);
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const NAME: &'static str = "f64";

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        gemm_into(m, k, n, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn activate(act: &dyn Activation, z: &[Self], out: [&mut [Self]; 4]) {
        act.derivs_slice(z, out)
    }
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    const NAME: &'static str = "f32";

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        gemm_into(m, k, n, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn activate(act: &dyn Activation, z: &[Self], out: [&mut [Self]; 4]) {
        act.derivs_slice_f32(z, out)
    }
}

#[allow(clippy::too_many_arguments)]
unsafe fn gemm_into<T: 'static + Copy + PartialEq + Default>(
    m: usize,
    k: usize,
    n: usize,
    a: *const T,
    rsa: isize,
    csa: isize,
    b: *const T,
    rsb: isize,
    csb: isize,
    beta: T,
    c: *mut T,
    rsc: isize,
    csc: isize,
) where
    T: From<u8>,
{
    let read_dst = beta != T::default();
    unsafe {
        gemm::gemm(
            m,
            n,
            k,
            c,
            csc,
            rsc,
            read_dst,
            a,
            csa,
            rsa,
            b,
            csb,
            rsb,
            beta,
            T::from(1u8),
            false,
            false,
            false,
            gemm::Parallelism::None,
        )
    }
}

/// `exp(x)` for `x <= 0`, accurate to a few ulp, without branches so that
/// loops over it vectorize.
#[inline(always)]
fn exp_nonpos_f64(x: f64) -> f64 {
    const MAGIC: f64 = 6755399441055744.0; // 1.5 * 2^52
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let x = if x < -700.0 { -700.0 } else { x };
    let k = x * std::f64::consts::LOG2_E + MAGIC;
    let n = k - MAGIC;
    let r = (x - n * LN2_HI) - n * LN2_LO;
    let mut p = 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    let ni = k.to_bits().wrapping_sub(MAGIC.to_bits()) as i64;
    p * f64::from_bits(((ni + 1023) as u64) << 52)
}

#[inline(always)]
fn exp_nonpos_f32(x: f32) -> f32 {
    const MAGIC: f32 = 12582912.0; // 1.5 * 2^23
    const LN2_HI: f32 = 0.693_145_75;
    const LN2_LO: f32 = 1.428_606_8e-6;
    let x = if x < -87.0 { -87.0 } else { x };
    let k = x * std::f32::consts::LOG2_E + MAGIC;
    let n = k - MAGIC;
    let r = (x - n * LN2_HI) - n * LN2_LO;
    let mut p = 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    let ni = k.to_bits().wrapping_sub(MAGIC.to_bits()) as i32;
    p * f32::from_bits(((ni + 127) as u32) << 23)
}

/// `tanh` and its first three derivatives over a slice.
pub fn tanh_derivs_f64(z: &[f64], out: [&mut [f64]; 4]) {
    let [s0, s1, s2, s3] = out;
    let n = z.len();
    let (s0, s1, s2, s3) = (&mut s0[..n], &mut s1[..n], &mut s2[..n], &mut s3[..n]);
    for i in 0..n {
        let a = z[i].abs();
        let e = exp_nonpos_f64(-2.0 * a);
        let t = ((1.0 - e) / (1.0 + e)).copysign(z[i]);
        let d1 = 1.0 - t * t;
        s0[i] = t;
        s1[i] = d1;
        s2[i] = -2.0 * t * d1;
        s3[i] = d1 * (4.0 * t * t - 2.0 * d1);
    }
}

pub fn tanh_derivs_f32(z: &[f32], out: [&mut [f32]; 4]) {
    let [s0, s1, s2, s3] = out;
    let n = z.len();
    let (s0, s1, s2, s3) = (&mut s0[..n], &mut s1[..n], &mut s2[..n], &mut s3[..n]);
    for i in 0..n {
        let a = z[i].abs();
        let e = exp_nonpos_f32(-2.0 * a);
        let t = ((1.0 - e) / (1.0 + e)).copysign(z[i]);
        let d1 = 1.0 - t * t;
        s0[i] = t;
        s1[i] = d1;
        s2[i] = -2.0 * t * d1;
        s3[i] = d1 * (4.0 * t * t - 2.0 * d1);
    }
}
