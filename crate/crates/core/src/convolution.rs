//! Discrete convolution of a value sequence with an arc-cost pmf.
//!
//! With `u` sampled on grid indices and a pmf putting mass `w[l]` on cost
//! `(offset + l) * delta_t`, the Bellman update needs
//! `y[k] = sum_l w[l] * u[k - offset - l]`. Three engines compute it:
//! direct sums, FFT over blocks, and a streaming zero-delay convolver that
//! emits `y[k]` as soon as `u[k - offset]` has been fed.

use std::collections::VecDeque;
use std::sync::Arc as Shared;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::model::GridDistribution;

/// Absolute agreement expected between engines.
pub const ENGINE_TOLERANCE: f64 = 1e-9;

/// Supports with at least this many cells use the streaming engine under
/// `ConvolutionEngine::Auto`.
pub const STREAMING_MIN_SUPPORT: usize = 32;

/// Leading weights that the streaming engine handles with direct sums.
const DIRECT_PREFIX: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvolutionEngine {
    #[default]
    Auto,
    Pointwise,
    FftBlock,
    Streaming,
}

impl ConvolutionEngine {
    /// Resolves `Auto` for a pmf with `support` cells.
    pub fn resolve(self, support: usize) -> Self {
        match self {
            ConvolutionEngine::Auto if support < STREAMING_MIN_SUPPORT => ConvolutionEngine::Pointwise,
            ConvolutionEngine::Auto => ConvolutionEngine::Streaming,
            other => other,
        }
    }
}

/// `sum_l w[l] * u[k - offset - l]` where `u[0]` sits at grid index
/// `u_start`.
pub fn convolve_pointwise(u: &[f64], u_start: i64, pmf: &GridDistribution, k: i64) -> Result<f64> {
    let first = k - pmf.last_k();
    let last = k - pmf.offset_k();
    let end = u_start + u.len() as i64 - 1;
    if first < u_start || last > end {
        return Err(Error::index("convolution window", first.min(last), u_start, end));
    }
    let base = (last - u_start) as usize;
    Ok(pmf.weights().iter().enumerate().map(|(l, w)| w * u[base - l]).sum())
}

/// Full linear convolution of two real sequences through a power-of-two FFT.
pub fn fft_linear_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let size = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut fa = padded(a, size);
    let mut fb = padded(b, size);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..out_len].iter().map(|c| c.re * scale).collect()
}

fn padded(x: &[f64], size: usize) -> Vec<Complex<f64>> {
    let mut v = vec![Complex::new(0.0, 0.0); size];
    for (slot, &value) in v.iter_mut().zip(x) {
        slot.re = value;
    }
    v
}

/// Every output whose window lies inside `u`, computed with one FFT.
/// Returns the grid index of the first output and the outputs.
pub fn convolve_fft_block(u: &[f64], u_start: i64, pmf: &GridDistribution) -> (i64, Vec<f64>) {
    let len = pmf.weights().len();
    let first_k = u_start + pmf.last_k();
    if u.len() < len {
        return (first_k, Vec::new());
    }
    let full = fft_linear_convolution(u, pmf.weights());
    (first_k, full[len - 1..u.len()].to_vec())
}

/// One FFT-convolved segment `w[start .. start + len)` of the weights,
/// applied to input blocks of `len` samples.
struct Segment {
    start: usize,
    len: usize,
    spectrum: Vec<Complex<f64>>,
    fwd: Shared<dyn Fft<f64>>,
    inv: Shared<dyn Fft<f64>>,
    scratch: Vec<Complex<f64>>,
}

/// Streaming zero-delay convolver.
///
/// The first weights are applied directly; the rest is cut into segments
/// `[S, 2S)` of doubling length `S`. A segment waits for a full block of
/// `S` inputs and then convolves it by FFT; since the segment starts `S`
/// cells in, its contributions all land on outputs that are not due yet.
/// Amortised work per sample is `O(log^2 n)` for `n` weights.
pub struct StreamConvolver {
    weights: Vec<f64>,
    offset: i64,
    direct: usize,
    segments: Vec<Segment>,
    history: VecDeque<f64>,
    history_cap: usize,
    /// `pending[0]` accumulates the FFT contributions for the next output.
    pending: VecDeque<f64>,
    fed: u64,
    next_index: i64,
}

impl StreamConvolver {
    /// Convolver whose first input has grid index `start`. Inputs before
    /// `start` are taken as zero.
    pub fn new(pmf: &GridDistribution, start: i64) -> Self {
        let weights = pmf.weights().to_vec();
        let n = weights.len();
        let direct = n.min(DIRECT_PREFIX);
        let mut planner = FftPlanner::new();
        let mut segments = Vec::new();
        let mut s = direct;
        while s < n {
            let len = s;
            let size = 2 * len;
            let fwd = planner.plan_fft_forward(size);
            let inv = planner.plan_fft_inverse(size);
            let end = (s + len).min(n);
            let mut spectrum = padded(&weights[s..end], size);
            fwd.process(&mut spectrum);
            segments.push(Segment {
                start: s,
                len,
                spectrum,
                fwd,
                inv,
                scratch: vec![Complex::new(0.0, 0.0); size],
            });
            s += len;
        }
        let history_cap = segments.iter().map(|g| g.len).max().unwrap_or(0).max(direct);
        Self {
            weights,
            offset: pmf.offset_k(),
            direct,
            segments,
            history: VecDeque::with_capacity(history_cap + 1),
            history_cap,
            pending: VecDeque::new(),
            fed: 0,
            next_index: start,
        }
    }

    /// Grid index the next `feed` must carry.
    pub fn next_index(&self) -> i64 {
        self.next_index
    }

    /// Feeds `u[k]` and returns `(k + offset, y[k + offset])`.
    pub fn feed(&mut self, k: i64, value: f64) -> Result<(i64, f64)> {
        if k != self.next_index {
            return Err(Error::state(format!(
                "stream convolver expected index {}, got {k}",
                self.next_index
            )));
        }
        self.next_index += 1;
        self.history.push_front(value);
        if self.history.len() > self.history_cap {
            self.history.pop_back();
        }
        self.fed += 1;

        let mut y: f64 = self
            .history
            .iter()
            .zip(&self.weights[..self.direct])
            .map(|(x, w)| x * w)
            .sum();
        y += self.pending.pop_front().unwrap_or(0.0);

        for seg in &mut self.segments {
            if self.fed % seg.len as u64 != 0 {
                continue;
            }
            // Block of the last `len` inputs, oldest first.
            for (i, slot) in seg.scratch.iter_mut().enumerate() {
                *slot = if i < seg.len {
                    Complex::new(self.history[seg.len - 1 - i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            seg.fwd.process(&mut seg.scratch);
            for (x, h) in seg.scratch.iter_mut().zip(&seg.spectrum) {
                *x *= *h;
            }
            seg.inv.process(&mut seg.scratch);
            let scale = 1.0 / seg.scratch.len() as f64;
            // Block output t targets z[block_start + start + t]; the
            // current output is z[block_start + len - 1], already popped.
            let shift = seg.start - seg.len;
            let needed = shift + seg.scratch.len() - 1;
            if self.pending.len() < needed {
                self.pending.resize(needed, 0.0);
            }
            for t in 0..seg.scratch.len() - 1 {
                self.pending[shift + t] += seg.scratch[t].re * scale;
            }
        }
        Ok((k + self.offset, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(u: &[f64], u_start: i64, pmf: &GridDistribution, k: i64) -> f64 {
        let mut acc = 0.0;
        for (c, w) in pmf.iter() {
            let idx = k - c - u_start;
            acc += w * u[idx as usize];
        }
        acc
    }

    fn random_pmf(rng: &mut ChaCha8Rng, len: usize) -> GridDistribution {
        let raw: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        GridDistribution::from_counts(1.0, rng.random_range(1..5), &raw).unwrap()
    }

    #[test]
    fn shift_and_normalisation() {
        let u: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let shift = GridDistribution::point_mass(1.0, 1);
        assert_eq!(convolve_pointwise(&u, 0, &shift, 5).unwrap(), 4.0);
        let half = GridDistribution::new(1.0, 1, vec![0.5, 0.5]).unwrap();
        assert_eq!(convolve_pointwise(&[1.0; 10], 0, &half, 5).unwrap(), 1.0);
        assert!(matches!(convolve_pointwise(&u, 0, &half, 1), Err(Error::Index { .. })));
    }

    #[test]
    fn pointwise_vs_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let len = rng.random_range(1..20);
            let pmf = random_pmf(&mut rng, len);
            let u: Vec<f64> = (0..60).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            for k in (pmf.last_k() + 3)..(pmf.offset_k() + 60 - 3) {
                let got = convolve_pointwise(&u, -3, &pmf, k).unwrap();
                assert!((got - naive(&u, -3, &pmf, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fft_block_matches_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let len = rng.random_range(1..40);
            let pmf = random_pmf(&mut rng, len);
            let u: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
            let (first, out) = convolve_fft_block(&u, 7, &pmf);
            for (i, y) in out.iter().enumerate() {
                let k = first + i as i64;
                assert!((y - convolve_pointwise(&u, 7, &pmf, k).unwrap()).abs() < ENGINE_TOLERANCE);
            }
            assert_eq!(out.len(), 100 - pmf.weights().len() + 1);
        }
    }

    #[test]
    fn stream_shift_and_constant() {
        let shift = GridDistribution::point_mass(1.0, 3);
        let mut s = StreamConvolver::new(&shift, 0);
        for k in 0..20 {
            let (idx, y) = s.feed(k, k as f64).unwrap();
            assert_eq!(idx, k + 3);
            assert_eq!(y, k as f64);
        }
        let pmf = GridDistribution::from_counts(1.0, 1, &vec![1.0; 100]).unwrap();
        let mut s = StreamConvolver::new(&pmf, 0);
        for k in 0..300 {
            let (_, y) = s.feed(k, 1.0).unwrap();
            if k >= 99 {
                assert!((y - 1.0).abs() < ENGINE_TOLERANCE);
            }
        }
    }

    #[test]
    fn stream_rejects_out_of_order() {
        let mut s = StreamConvolver::new(&GridDistribution::point_mass(1.0, 1), 5);
        assert!(matches!(s.feed(6, 1.0), Err(Error::State(_))));
        s.feed(5, 1.0).unwrap();
        assert!(s.feed(5, 1.0).is_err());
    }

    #[test]
    fn stream_random_vs_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for len in [1usize, 15, 16, 17, 33, 100, 257] {
            let pmf = random_pmf(&mut rng, len);
            let u: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let mut s = StreamConvolver::new(&pmf, -4);
            let mut padded_u = vec![0.0; len + 8];
            padded_u.extend_from_slice(&u);
            let pad_start = -4 - (len as i64 + 8);
            for (i, &x) in u.iter().enumerate() {
                let k = -4 + i as i64;
                let (out_k, y) = s.feed(k, x).unwrap();
                let expect = naive(&padded_u, pad_start, &pmf, out_k);
                assert!((y - expect).abs() < ENGINE_TOLERANCE, "len {len} k {k}: {y} vs {expect}");
            }
        }
    }
}
