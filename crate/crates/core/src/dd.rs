//! Double-double helpers for the criterion, whose squared value is a small
//! difference of two quantities of order one.

use num_complex::Complex;
use twofloat::TwoFloat;

use crate::korobov::{self, Alpha, KernelTable, MAX_EXACT_ALPHA};

pub(crate) type Dd = TwoFloat;
pub(crate) type CDd = Complex<Dd>;

pub(crate) const ZERO: Dd = TwoFloat::from_f64(0.0);
pub(crate) const ONE: Dd = TwoFloat::from_f64(1.0);

pub(crate) fn dd(x: f64) -> Dd {
    Dd::from(x)
}

pub(crate) fn sum(values: impl IntoIterator<Item = Dd>) -> Dd {
    values.into_iter().fold(ZERO, |a, b| a + b)
}

fn ratio(p: i64, q: i64) -> Dd {
    dd(p as f64) / q as f64
}

/// Reciprocal by Newton refinement of the double estimate; `TwoFloat`'s own
/// division by a double-double is only accurate to about double precision.
fn recip(x: Dd) -> Dd {
    let mut r = dd(1.0 / x.hi());
    for _ in 0..2 {
        r = r + r * (ONE - x * r);
    }
    r
}

/// `φ_α(m/N)` for `m = 0, …, N-1`; Bernoulli form in double-double for
/// integer `α ≤ 3`, otherwise the double-precision table.
pub(crate) fn kernel_values(alpha: Alpha, n: u64, table: &KernelTable) -> Vec<Dd> {
    let Some(a) = alpha.integer().filter(|&a| a <= MAX_EXACT_ALPHA) else {
        return table.values.iter().map(|&v| dd(v)).collect();
    };
    // (-1)^{α+1} (2π)^{2α} / (2α)!
    let two_pi = twofloat::consts::PI * 2.0;
    let mut scale = ONE;
    for k in 1..=2 * a {
        scale = scale * two_pi / k as f64;
    }
    if a % 2 == 0 {
        scale = -scale;
    }
    (0..n)
        .map(|m| {
            let x = dd(m as f64) / n as f64;
            let x2 = x * x;
            let b = match a {
                1 => x2 - x + ratio(1, 6),
                2 => x2 * x2 - x2 * x * 2.0 + x2 - ratio(1, 30),
                _ => {
                    let x4 = x2 * x2;
                    x4 * x2 - x4 * x * 3.0 + x4 * 2.5 - x2 * 0.5 + ratio(1, 42)
                }
            };
            scale * b
        })
        .collect()
}

/// `ζ(4α)`, with the closed forms `ζ(4) = π⁴/90`, `ζ(8) = π⁸/9450` and
/// `ζ(12) = 691 π¹² / 638512875` in double-double.
pub(crate) fn zeta_four_alpha(alpha: Alpha) -> Dd {
    let pi4 = {
        let p2 = twofloat::consts::PI * twofloat::consts::PI;
        p2 * p2
    };
    match alpha.integer() {
        Some(1) => pi4 / 90.0,
        Some(2) => pi4 * pi4 / 9450.0,
        Some(3) => pi4 * pi4 * pi4 * 691.0 / 638_512_875.0,
        _ => dd(korobov::zeta(4.0 * alpha.value()).expect("4α > 1")),
    }
}

/// `∏_{j<d} (1 + 2ζ(4α)γ_j⁴)`.
pub(crate) fn zero_dual_term(alpha: Alpha, gamma: &[f64]) -> Dd {
    let z = zeta_four_alpha(alpha) * 2.0;
    gamma.iter().fold(ONE, |acc, &g| {
        let g2 = dd(g) * dd(g);
        acc * (ONE + z * g2 * g2)
    })
}

/// Radix-2 FFT in double-double with `e^{∓2πik/P}` twiddles.
#[derive(Debug, Clone)]
pub(crate) struct DdFft {
    len: usize,
    /// `e^{-2πik/P}` for `k < P/2`.
    twiddles: Vec<CDd>,
}

impl DdFft {
    pub(crate) fn new(len: usize) -> Self {
        assert!(len.is_power_of_two() && len >= 2);
        let bits = len.trailing_zeros() as usize;
        // roots[b] = e^{-2πi/2^b}, by half angles from e^{-iπ/2} = -i.
        let mut roots = vec![CDd::new(ONE, ZERO); bits + 1];
        roots[1] = CDd::new(-ONE, ZERO);
        if bits >= 2 {
            roots[2] = CDd::new(ZERO, -ONE);
        }
        for b in 3..=bits {
            let prev = roots[b - 1];
            let c = ((ONE + prev.re) / 2.0).sqrt();
            let s = prev.im * recip(c * 2.0);
            roots[b] = CDd::new(c, s);
        }
        let twiddles = (0..len / 2)
            .map(|k| {
                // e^{-2πik/P} = ∏ over set bits t of k of e^{-2πi/2^{bits-t}}.
                let mut w = CDd::new(ONE, ZERO);
                for t in 0..bits {
                    if k >> t & 1 == 1 {
                        w *= roots[bits - t];
                    }
                }
                w
            })
            .collect();
        Self { len, twiddles }
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    /// Unnormalised transform; `inverse` flips the twiddle sign.
    pub(crate) fn process(&self, a: &mut [CDd], inverse: bool) {
        let n = self.len;
        assert_eq!(a.len(), n);
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if i < j {
                a.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let w = if inverse { w.conj() } else { w };
                    let u = a[start + k];
                    let v = a[start + k + half] * w;
                    a[start + k] = u + v;
                    a[start + k + half] = u - v;
                }
            }
            size *= 2;
        }
    }
}

/// Cyclic cross-correlation `c[j] = Σ_i x[i] y[(i + j) mod L]` of real
/// sequences, through a zero-padded power-of-two FFT.
#[derive(Debug, Clone)]
pub(crate) struct Correlator {
    period: usize,
    fft: DdFft,
}

impl Correlator {
    pub(crate) fn new(period: usize) -> Self {
        Self {
            period,
            fft: DdFft::new((3 * period).next_power_of_two().max(2)),
        }
    }

    /// Transform of `y` repeated twice, the fixed operand.
    pub(crate) fn prepare(&self, y: &[Dd]) -> Vec<CDd> {
        assert_eq!(y.len(), self.period);
        let mut buf = vec![CDd::new(ZERO, ZERO); self.fft.len()];
        for (i, slot) in buf.iter_mut().take(2 * self.period).enumerate() {
            slot.re = y[i % self.period];
        }
        self.fft.process(&mut buf, false);
        buf
    }

    /// Transform of `x`, the varying operand.
    pub(crate) fn transform(&self, x: &[Dd]) -> Vec<CDd> {
        assert_eq!(x.len(), self.period);
        let mut buf = vec![CDd::new(ZERO, ZERO); self.fft.len()];
        for (slot, &v) in buf.iter_mut().zip(x) {
            slot.re = v;
        }
        self.fft.process(&mut buf, false);
        buf
    }

    pub(crate) fn correlate(&self, x_hat: &[CDd], y_hat: &[CDd]) -> Vec<Dd> {
        let mut prod: Vec<CDd> = x_hat.iter().zip(y_hat).map(|(a, b)| a.conj() * b).collect();
        self.fft.process(&mut prod, true);
        let scale = self.fft.len() as f64;
        prod[..self.period].iter().map(|c| c.re / scale).collect()
    }
}
