//! Truncated bivariate Taylor polynomials of total degree three.
//!
//! Coefficients are stored as `c[a][b]` for the monomial `dx^a dy^b`,
//! `a + b <= 3`. The partial derivative `d^(a+b) f / dx^a dy^b` equals
//! `a! b! c[a][b]`.

use num_complex::Complex64;

pub const DEGREE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taylor2 {
    c: [[f64; DEGREE + 1]; DEGREE + 1],
}

const FACT: [f64; 4] = [1.0, 1.0, 2.0, 6.0];

impl Taylor2 {
    pub fn zero() -> Self {
        Self {
            c: [[0.0; DEGREE + 1]; DEGREE + 1],
        }
    }

    pub fn constant(v: f64) -> Self {
        let mut t = Self::zero();
        t.c[0][0] = v;
        t
    }

    /// `x0 + dx`, the seed for the first coordinate.
    pub fn var_x(x0: f64) -> Self {
        let mut t = Self::constant(x0);
        t.c[1][0] = 1.0;
        t
    }

    /// `y0 + dy`, the seed for the second coordinate.
    pub fn var_y(y0: f64) -> Self {
        let mut t = Self::constant(y0);
        t.c[0][1] = 1.0;
        t
    }

    /// Builds a polynomial from its partial derivatives `d(a, b)`.
    pub fn from_partials(d: impl Fn(usize, usize) -> f64) -> Self {
        let mut t = Self::zero();
        for a in 0..=DEGREE {
            for b in 0..=(DEGREE - a) {
                t.c[a][b] = d(a, b) / (FACT[a] * FACT[b]);
            }
        }
        t
    }

    pub fn value(&self) -> f64 {
        self.c[0][0]
    }

    /// Partial derivative `d^(a+b) / dx^a dy^b` at the expansion point.
    pub fn partial(&self, a: usize, b: usize) -> f64 {
        debug_assert!(a + b <= DEGREE);
        self.c[a][b] * FACT[a] * FACT[b]
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut t = *self;
        for a in 0..=DEGREE {
            for b in 0..=(DEGREE - a) {
                t.c[a][b] += o.c[a][b];
            }
        }
        t
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut t = *self;
        for a in 0..=DEGREE {
            for b in 0..=(DEGREE - a) {
                t.c[a][b] -= o.c[a][b];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut t = *self;
        for a in 0..=DEGREE {
            for b in 0..=(DEGREE - a) {
                t.c[a][b] *= s;
            }
        }
        t
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut t = Self::zero();
        for a1 in 0..=DEGREE {
            for b1 in 0..=(DEGREE - a1) {
                let x = self.c[a1][b1];
                if x == 0.0 {
                    continue;
                }
                for a2 in 0..=(DEGREE - a1 - b1) {
                    for b2 in 0..=(DEGREE - a1 - b1 - a2) {
                        t.c[a1 + a2][b1 + b2] += x * o.c[a2][b2];
                    }
                }
            }
        }
        t
    }

    /// Composes a univariate function with this polynomial, given the
    /// function's value and first three derivatives at `self.value()`.
    pub fn compose(&self, f: [f64; 4]) -> Self {
        let mut h = *self;
        h.c[0][0] = 0.0;
        let h2 = h.mul(&h);
        let h3 = h2.mul(&h);
        Self::constant(f[0])
            .add(&h.scale(f[1]))
            .add(&h2.scale(f[2] / 2.0))
            .add(&h3.scale(f[3] / 6.0))
    }

    pub fn sqrt(&self) -> Self {
        let v = self.value();
        let s = v.sqrt();
        self.compose([s, 0.5 / s, -0.25 / (s * v), 0.375 / (s * v * v)])
    }

    /// Polar angle `atan2(v, u)` of the offset `(u, v)` from the expansion
    /// point, whose derivatives are read off the complex logarithm:
    /// `d^(a+b) theta / dx^a dy^b = Im(i^b log^(n)(z))`, `z = u + i v`.
    pub fn polar_angle(u: f64, v: f64) -> Self {
        let z = Complex64::new(u, v);
        let theta = v.atan2(u);
        Self::from_partials(|a, b| {
            let n = a + b;
            if n == 0 {
                return theta;
            }
            // log^(n)(z) = (-1)^(n-1) (n-1)! / z^n
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            let lg = sign * FACT[n - 1] / z.powu(n as u32);
            let ib = Complex64::i().powu(b as u32);
            (ib * lg).im
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_of_linears() {
        // (x0 + dx)(y0 + dy) = x0 y0 + y0 dx + x0 dy + dx dy
        let p = Taylor2::var_x(2.0).mul(&Taylor2::var_y(3.0));
        assert_eq!(p.value(), 6.0);
        assert_eq!(p.partial(1, 0), 3.0);
        assert_eq!(p.partial(0, 1), 2.0);
        assert_eq!(p.partial(1, 1), 1.0);
        assert_eq!(p.partial(2, 0), 0.0);
    }

    #[test]
    fn sqrt_of_square_radius_matches_closed_form() {
        let (x, y) = (0.3, -0.4);
        let r2 = Taylor2::var_x(x)
            .mul(&Taylor2::var_x(x))
            .add(&Taylor2::var_y(y).mul(&Taylor2::var_y(y)));
        let r = r2.sqrt();
        let rr = 0.5;
        assert!((r.value() - rr).abs() < 1e-15);
        assert!((r.partial(1, 0) - x / rr).abs() < 1e-15);
        assert!((r.partial(0, 2) - x * x / (rr * rr * rr)).abs() < 1e-13);
        assert!((r.partial(1, 1) + x * y / (rr * rr * rr)).abs() < 1e-13);
    }

    #[test]
    fn polar_angle_first_and_second_partials() {
        let (u, v) = (0.6, 0.8);
        let t = Taylor2::polar_angle(u, v);
        let r2: f64 = u * u + v * v;
        assert!((t.partial(1, 0) + v / r2).abs() < 1e-14);
        assert!((t.partial(0, 1) - u / r2).abs() < 1e-14);
        assert!((t.partial(2, 0) - 2.0 * u * v / (r2 * r2)).abs() < 1e-13);
        assert!((t.partial(1, 1) - (v * v - u * u) / (r2 * r2)).abs() < 1e-13);
        assert!((t.partial(0, 2) + 2.0 * u * v / (r2 * r2)).abs() < 1e-13);
    }
}
