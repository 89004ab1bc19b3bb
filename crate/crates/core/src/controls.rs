// Copyright 2026 The qoc Authors
// SPDX-License-Identifier: Apache-2.0

//! Quadratic B-spline envelopes modulating fixed carrier waves.
//!
//! Subsystem `k` is driven by `d_k(t) = Σ_n (p_{k,n}(t) + i q_{k,n}(t)) e^{i Ω_{k,n} t}`
//! where `p` and `q` are combinations of `N_b` cardinal quadratic B-splines
//! on a uniform grid with spacing `Δτ = T / (N_b − 2)`. Spline `b`
//! (zero-based) is centered at `Δτ (b − 1/2)`, so the first and last centers
//! sit half a spacing outside `[0, T]`.
//!
//! Parameter layout, outermost first: subsystem, carrier, then `N_b` real
//! coefficients followed by `N_b` imaginary coefficients.

use crate::error::{Error, Result};

/// Cardinal quadratic B-spline with unit spacing, peak 3/4 at the origin.
#[inline]
pub fn cardinal_quadratic(s: f64) -> f64 {
    let a = s.abs();
    if a <= 0.5 {
        0.75 - s * s
    } else if a <= 1.5 {
        let r = 1.5 - a;
        0.5 * r * r
    } else {
        0.0
    }
}

/// The at most three splines that are nonzero at some time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveSplines {
    pub first: usize,
    pub count: usize,
    pub values: [f64; 3],
}

impl ActiveSplines {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.count).map(move |i| (self.first + i, self.values[i]))
    }
}

/// Knot grid, carrier frequencies and pinned coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlParameterization {
    horizon: f64,
    splines: usize,
    carriers: Vec<Vec<f64>>,
    knot_spacing: f64,
    pinned: Vec<bool>,
}

impl ControlParameterization {
    /// `carriers[k]` lists the carrier frequencies of subsystem `k` (rad/ns);
    /// every subsystem must have the same number of carriers.
    pub fn new(horizon: f64, splines: usize, carriers: Vec<Vec<f64>>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameters(format!("horizon must be positive, got {horizon}")));
        }
        if splines < 3 {
            return Err(Error::InvalidParameters(format!("need at least 3 splines per carrier, got {splines}")));
        }
        let nf = carriers.first().map_or(0, Vec::len);
        if carriers.is_empty() || nf == 0 || carriers.iter().any(|c| c.len() != nf) {
            return Err(Error::InvalidParameters(
                "every subsystem needs the same nonzero number of carriers".into(),
            ));
        }
        if carriers.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("carrier frequency".into()));
        }
        let dim = 2 * carriers.len() * nf * splines;
        Ok(Self {
            horizon,
            splines,
            knot_spacing: horizon / (splines - 2) as f64,
            carriers,
            pinned: vec![false; dim],
        })
    }

    /// Pin the first and last `count` coefficients of every real and
    /// imaginary block. Pinning two at each end makes `d(0) = d(T) = 0`.
    pub fn with_pinned_boundary(mut self, count: usize) -> Result<Self> {
        if 2 * count >= self.splines {
            return Err(Error::InvalidParameters(format!(
                "cannot pin {count} splines at each end of a {}-spline block",
                self.splines
            )));
        }
        for block in self.pinned.chunks_mut(self.splines) {
            block[..count].iter_mut().for_each(|p| *p = true);
            block[self.splines - count..].iter_mut().for_each(|p| *p = true);
        }
        Ok(self)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn splines_per_carrier(&self) -> usize {
        self.splines
    }

    pub fn num_subsystems(&self) -> usize {
        self.carriers.len()
    }

    pub fn num_carriers(&self) -> usize {
        self.carriers[0].len()
    }

    pub fn carriers(&self, k: usize) -> &[f64] {
        &self.carriers[k]
    }

    pub fn knot_spacing(&self) -> f64 {
        self.knot_spacing
    }

    /// Total number of real parameters `2 Q N_b N_f`.
    pub fn num_params(&self) -> usize {
        self.pinned.len()
    }

    /// Per-parameter pin flags.
    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    /// Center of spline `b` (zero-based).
    pub fn center(&self, b: usize) -> f64 {
        self.knot_spacing * (b as f64 - 0.5)
    }

    /// Index of coefficient `b` of carrier `n` on subsystem `k`.
    #[inline]
    pub fn index(&self, k: usize, n: usize, b: usize, imaginary: bool) -> usize {
        ((k * self.num_carriers() + n) * 2 + imaginary as usize) * self.splines + b
    }

    /// Value of spline `b` (zero-based) at time `t`.
    pub fn bspline_eval(&self, b: usize, t: f64) -> f64 {
        cardinal_quadratic((t - self.center(b)) / self.knot_spacing)
    }

    /// Nonzero splines at `t`; `t` is clamped into `[0, T]`.
    #[inline]
    pub fn active_splines(&self, t: f64) -> ActiveSplines {
        let t = t.clamp(0.0, self.horizon);
        let x = t / self.knot_spacing;
        let first = (x.floor() as usize).min(self.splines - 2);
        let mut values = [0.0; 3];
        let mut count = 0;
        for (i, v) in values.iter_mut().enumerate() {
            let b = first + i;
            if b >= self.splines {
                break;
            }
            *v = cardinal_quadratic(x - b as f64 + 0.5);
            if *v == 0.0 {
                break;
            }
            count += 1;
        }
        ActiveSplines { first, count, values }
    }

    fn check_len(&self, alpha: &[f64]) {
        assert_eq!(alpha.len(), self.num_params(), "parameter vector length");
    }

    /// Envelope real and imaginary parts per subsystem, written into `re` and `im`.
    #[inline]
    pub fn envelope_into(&self, alpha: &[f64], t: f64, re: &mut [f64], im: &mut [f64]) {
        self.check_len(alpha);
        let act = self.active_splines(t);
        for (k, carriers) in self.carriers.iter().enumerate() {
            let (mut sr, mut si) = (0.0, 0.0);
            for (n, &omega) in carriers.iter().enumerate() {
                let base_r = self.index(k, n, 0, false);
                let base_i = base_r + self.splines;
                let (p, q) = act.iter().fold((0.0, 0.0), |(p, q), (b, s)| {
                    (p + s * alpha[base_r + b], q + s * alpha[base_i + b])
                });
                let (sn, cs) = (omega * t).sin_cos();
                sr += p * cs - q * sn;
                si += p * sn + q * cs;
            }
            re[k] = sr;
            im[k] = si;
        }
    }

    /// Full envelope sample at `t`, including the per-carrier `p`, `q`.
    pub fn sample_envelopes(&self, alpha: &[f64], t: f64) -> EnvelopeSample {
        self.check_len(alpha);
        let act = self.active_splines(t);
        let nq = self.num_subsystems();
        let mut sample = EnvelopeSample {
            re: vec![0.0; nq],
            im: vec![0.0; nq],
            p: vec![Vec::with_capacity(self.num_carriers()); nq],
            q: vec![Vec::with_capacity(self.num_carriers()); nq],
            active: act,
        };
        for (k, carriers) in self.carriers.iter().enumerate() {
            for (n, &omega) in carriers.iter().enumerate() {
                let base_r = self.index(k, n, 0, false);
                let base_i = base_r + self.splines;
                let p: f64 = act.iter().map(|(b, s)| s * alpha[base_r + b]).sum();
                let q: f64 = act.iter().map(|(b, s)| s * alpha[base_i + b]).sum();
                let (sn, cs) = (omega * t).sin_cos();
                sample.re[k] += p * cs - q * sn;
                sample.im[k] += p * sn + q * cs;
                sample.p[k].push(p);
                sample.q[k].push(q);
            }
        }
        sample
    }

    /// Nonzero partial derivatives of `(Re d_k, Im d_k)` at `t`, per subsystem.
    pub fn envelope_param_derivatives(&self, t: f64) -> Vec<Vec<EnvelopeDerivative>> {
        let act = self.active_splines(t);
        self.carriers
            .iter()
            .enumerate()
            .map(|(k, carriers)| {
                let mut out = Vec::with_capacity(2 * carriers.len() * act.count);
                for (n, &omega) in carriers.iter().enumerate() {
                    let (sn, cs) = (omega * t).sin_cos();
                    for (b, s) in act.iter() {
                        out.push(EnvelopeDerivative { index: self.index(k, n, b, false), d_re: s * cs, d_im: s * sn });
                        out.push(EnvelopeDerivative { index: self.index(k, n, b, true), d_re: -s * sn, d_im: s * cs });
                    }
                }
                out
            })
            .collect()
    }

    /// `grad += Σ_k (w_re[k] ∂Re d_k/∂α + w_im[k] ∂Im d_k/∂α)` at `t`.
    #[inline]
    pub fn accumulate_gradient(&self, t: f64, w_re: &[f64], w_im: &[f64], grad: &mut [f64]) {
        let act = self.active_splines(t);
        for (k, carriers) in self.carriers.iter().enumerate() {
            let (gr, gi) = (w_re[k], w_im[k]);
            for (n, &omega) in carriers.iter().enumerate() {
                let (sn, cs) = (omega * t).sin_cos();
                let cr = gr * cs + gi * sn;
                let ci = gi * cs - gr * sn;
                let base_r = self.index(k, n, 0, false);
                let base_i = base_r + self.splines;
                for (b, s) in act.iter() {
                    grad[base_r + b] += s * cr;
                    grad[base_i + b] += s * ci;
                }
            }
        }
    }

    /// Laboratory-frame control `2 Re(d_k e^{i ω_r t})` of subsystem `k`.
    pub fn lab_frame_control(&self, alpha: &[f64], k: usize, t: f64, rot_freq: f64) -> f64 {
        let mut re = vec![0.0; self.num_subsystems()];
        let mut im = vec![0.0; self.num_subsystems()];
        self.envelope_into(alpha, t, &mut re, &mut im);
        let (sn, cs) = (rot_freq * t).sin_cos();
        2.0 * (re[k] * cs - im[k] * sn)
    }

    /// Bound on `|d_k(t)|` when every coefficient satisfies `|α| ≤ alpha_max`.
    pub fn max_envelope_bound(&self, alpha_max: f64) -> Vec<f64> {
        vec![std::f64::consts::SQRT_2 * self.num_carriers() as f64 * alpha_max.abs(); self.num_subsystems()]
    }
}

/// Envelope values at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSample {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// `p[k][n]`: in-phase spline sum of carrier `n` on subsystem `k`.
    pub p: Vec<Vec<f64>>,
    /// `q[k][n]`: quadrature spline sum.
    pub q: Vec<Vec<f64>>,
    pub active: ActiveSplines,
}

/// One nonzero entry of the envelope Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeDerivative {
    pub index: usize,
    pub d_re: f64,
    pub d_im: f64,
}

/// Parameter vector in the canonical layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn zeros(param: &ControlParameterization) -> Self {
        Self(vec![0.0; param.num_params()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Check the length against a parameterization.
    pub fn validate(&self, param: &ControlParameterization) -> Result<()> {
        if self.0.len() != param.num_params() {
            return Err(Error::InvalidParameters(format!(
                "parameter vector has {} entries, expected {}",
                self.0.len(),
                param.num_params()
            )));
        }
        if self.0.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(())
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}
