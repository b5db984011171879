// SPDX-License-Identifier: Apache-2.0

//! Radix-2 complex FFT and the real cosine/sine transforms built on it.
//!
//! For a length-N line, with `t(n, k) = π·k·(2n+1)/(2N)`:
//! - `dct2`:    X[k] = Σ_n x[n]·cos t(n,k)
//! - `cos_sum`: y[n] = Σ_k X[k]·cos t(n,k)
//! - `sin_sum`: y[n] = Σ_k X[k]·sin t(n,k)
//!
//! The even/odd reordering trick maps each onto a single N-point FFT.

use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Cplx {
    re: f64,
    im: f64,
}

impl Cplx {
    #[inline]
    fn mul(self, o: Cplx) -> Cplx {
        Cplx { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }

    #[inline]
    fn conj(self) -> Cplx {
        Cplx { re: self.re, im: -self.im }
    }

    fn cis(theta: f64) -> Cplx {
        Cplx { re: theta.cos(), im: theta.sin() }
    }
}

/// In-place iterative radix-2 FFT for a fixed power-of-two length.
#[derive(Clone, Debug)]
struct Fft {
    n: usize,
    twiddle: Vec<Cplx>,
    rev: Vec<usize>,
}

impl Fft {
    fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT length {n} is not a power of two");
        let bits = n.trailing_zeros();
        let rev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        let twiddle = (0..n / 2).map(|j| Cplx::cis(-2.0 * PI * j as f64 / n as f64)).collect();
        Self { n, twiddle, rev }
    }

    /// Forward transform (`inverse = false`, kernel e^{-2πi nk/N}) or the
    /// unnormalized inverse.
    fn run(&self, buf: &mut [Cplx], inverse: bool) {
        let n = self.n;
        for i in 0..n {
            let j = self.rev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                for j in 0..half {
                    let mut w = self.twiddle[j * step];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + j];
                    let b = buf[start + j + half].mul(w);
                    buf[start + j] = Cplx { re: a.re + b.re, im: a.im + b.im };
                    buf[start + j + half] = Cplx { re: a.re - b.re, im: a.im - b.im };
                }
            }
            len <<= 1;
        }
    }
}

/// Cosine/sine transforms of one line length.
#[derive(Clone, Debug)]
pub struct LinePlan {
    n: usize,
    fft: Fft,
    /// e^{-iπk/(2N)}
    shift: Vec<Cplx>,
    buf: Vec<Cplx>,
    tmp: Vec<f64>,
}

impl LinePlan {
    pub fn new(n: usize) -> Self {
        let shift = (0..n).map(|k| Cplx::cis(-PI * k as f64 / (2.0 * n as f64))).collect();
        Self { n, fft: Fft::new(n), shift, buf: vec![Cplx::default(); n], tmp: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dct2(&mut self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        if n == 1 {
            out[0] = x[0];
            return;
        }
        for i in 0..n / 2 {
            self.buf[i] = Cplx { re: x[2 * i], im: 0.0 };
            self.buf[n - 1 - i] = Cplx { re: x[2 * i + 1], im: 0.0 };
        }
        self.fft.run(&mut self.buf, false);
        for k in 0..n {
            out[k] = self.shift[k].mul(self.buf[k]).re;
        }
    }

    pub fn cos_sum(&mut self, coef: &[f64], out: &mut [f64]) {
        let n = self.n;
        if n == 1 {
            out[0] = coef[0];
            return;
        }
        self.buf[0] = Cplx { re: 2.0 * coef[0], im: 0.0 };
        for k in 1..n {
            let v = Cplx { re: coef[k], im: -coef[n - k] };
            self.buf[k] = self.shift[k].conj().mul(v);
        }
        self.fft.run(&mut self.buf, true);
        for i in 0..n / 2 {
            out[2 * i] = 0.5 * self.buf[i].re;
            out[2 * i + 1] = 0.5 * self.buf[n - 1 - i].re;
        }
    }

    pub fn sin_sum(&mut self, coef: &[f64], out: &mut [f64]) {
        let n = self.n;
        if n == 1 {
            out[0] = 0.0;
            return;
        }
        // sin t(n,k) = (-1)^n cos t(n, N-k)
        let mut rev = std::mem::take(&mut self.tmp);
        rev[0] = 0.0;
        for k in 1..n {
            rev[k] = coef[n - k];
        }
        self.cos_sum(&rev, out);
        for v in out.iter_mut().skip(1).step_by(2) {
            *v = -*v;
        }
        self.tmp = rev;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineOp {
    Dct2,
    CosSum,
    SinSum,
}

/// Applies line transforms along the axes of a row-major `nx×ny×nz` array
/// (z fastest).
#[derive(Clone, Debug)]
pub struct Transform3 {
    pub dims: [usize; 3],
    plans: [LinePlan; 3],
    src: Vec<f64>,
    dst: Vec<f64>,
}

impl Transform3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let m = *dims.iter().max().unwrap();
        Self {
            dims,
            plans: [LinePlan::new(dims[0]), LinePlan::new(dims[1]), LinePlan::new(dims[2])],
            src: vec![0.0; m],
            dst: vec![0.0; m],
        }
    }

    pub fn apply(&mut self, data: &mut [f64], axis: usize, op: LineOp) {
        let [nx, ny, nz] = self.dims;
        debug_assert_eq!(data.len(), nx * ny * nz);
        let (len, stride) = match axis {
            0 => (nx, ny * nz),
            1 => (ny, nz),
            _ => (nz, 1),
        };
        let starts: Box<dyn Iterator<Item = usize>> = match axis {
            0 => Box::new(0..ny * nz),
            1 => Box::new((0..nx).flat_map(move |ix| (0..nz).map(move |iz| ix * ny * nz + iz))),
            _ => Box::new((0..nx * ny).map(move |r| r * nz)),
        };
        let plan = &mut self.plans[axis];
        let (src, dst) = (&mut self.src[..len], &mut self.dst[..len]);
        for s in starts {
            for (i, v) in src.iter_mut().enumerate() {
                *v = data[s + i * stride];
            }
            match op {
                LineOp::Dct2 => plan.dct2(src, dst),
                LineOp::CosSum => plan.cos_sum(src, dst),
                LineOp::SinSum => plan.sin_sum(src, dst),
            }
            for (i, v) in dst.iter().enumerate() {
                data[s + i * stride] = *v;
            }
        }
    }

    pub fn apply_all(&mut self, data: &mut [f64], ops: [LineOp; 3]) {
        for (axis, op) in ops.into_iter().enumerate() {
            self.apply(data, axis, op);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(n: usize, k: usize, len: usize) -> f64 {
        PI * k as f64 * (2 * n + 1) as f64 / (2 * len) as f64
    }

    fn naive(op: LineOp, x: &[f64]) -> Vec<f64> {
        let len = x.len();
        (0..len)
            .map(|a| {
                (0..len)
                    .map(|b| match op {
                        LineOp::Dct2 => x[b] * t(b, a, len).cos(),
                        LineOp::CosSum => x[b] * t(a, b, len).cos(),
                        LineOp::SinSum => x[b] * t(a, b, len).sin(),
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn line_transforms_match_direct_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for len in [1, 2, 4, 8, 32, 64] {
            let mut plan = LinePlan::new(len);
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            for op in [LineOp::Dct2, LineOp::CosSum, LineOp::SinSum] {
                let mut out = vec![0.0; len];
                match op {
                    LineOp::Dct2 => plan.dct2(&x, &mut out),
                    LineOp::CosSum => plan.cos_sum(&x, &mut out),
                    LineOp::SinSum => plan.sin_sum(&x, &mut out),
                }
                let want = naive(op, &x);
                for (a, b) in out.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-11 * len as f64, "{op:?} len {len}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn cos_sum_inverts_weighted_dct2() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let len = 16;
        let mut plan = LinePlan::new(len);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut c = vec![0.0; len];
        plan.dct2(&x, &mut c);
        for (k, v) in c.iter_mut().enumerate() {
            *v *= if k == 0 { 1.0 } else { 2.0 } / len as f64;
        }
        let mut back = vec![0.0; len];
        plan.cos_sum(&c, &mut back);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn axis_transform_matches_per_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = [4, 8, 2];
        let data: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut tr = Transform3::new(dims);
        let mut d = data.clone();
        tr.apply(&mut d, 1, LineOp::SinSum);
        for ix in 0..4 {
            for iz in 0..2 {
                let line: Vec<f64> = (0..8).map(|iy| data[(ix * 8 + iy) * 2 + iz]).collect();
                let want = naive(LineOp::SinSum, &line);
                for iy in 0..8 {
                    assert!((d[(ix * 8 + iy) * 2 + iz] - want[iy]).abs() < 1e-12);
                }
            }
        }
    }
}
