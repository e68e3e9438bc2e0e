//! Synthetic data for the two studies: a noisy line that can switch to a
//! two-line mixture, and a damped two-mass oscillator whose total mechanical
//! energy is the response.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DriftError, Result};
use crate::rng::{substream, Domain};

// ---------------------------------------------------------------------------
// Linear mixture

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearMode {
    /// Every row from `y = 16x + 5 + ε`.
    Single,
    /// Each row from `y = 16x + 5 + ε` or `y = 12x + 3 + ε` with probability ½.
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSpec {
    pub noise_var: f64,
}

impl Default for LinearSpec {
    fn default() -> Self {
        Self { noise_var: 16.0 }
    }
}

const X_HALF_WIDTH: f64 = 1.732_050_807_568_877_2; // √3

/// `n` rows in `mode`.
pub fn gen_linear(n: usize, mode: LinearMode, seed: u64) -> Dataset {
    gen_linear_with(n, seed, LinearSpec::default(), |_| mode)
}

/// `n` rows where rows `0..shift_at` are single-line and the rest mixture.
pub fn gen_linear_shifted(n: usize, shift_at: usize, seed: u64) -> Dataset {
    gen_linear_with(n, seed, LinearSpec::default(), |i| if i < shift_at { LinearMode::Single } else { LinearMode::Mixture })
}

/// General form. Predictors, noise and component choices use separate
/// substreams, so the x-draws never depend on the mode.
pub fn gen_linear_with(n: usize, seed: u64, spec: LinearSpec, mode_at: impl Fn(usize) -> LinearMode) -> Dataset {
    let mut x_rng = substream(seed, Domain::Data, 0, 0);
    let mut noise_rng = substream(seed, Domain::Noise, 0, 0);
    let mut pick_rng = substream(seed, Domain::Noise, 1, 0);
    let noise = Normal::new(0.0, spec.noise_var.sqrt()).expect("noise variance must be finite and >= 0");
    let mut d = Dataset::empty(1);
    for i in 0..n {
        let x = x_rng.random_range(-X_HALF_WIDTH..=X_HALF_WIDTH);
        let eps = noise.sample(&mut noise_rng);
        let second = pick_rng.random_bool(0.5);
        let y = match mode_at(i) {
            LinearMode::Mixture if second => 12.0 * x + 3.0 + eps,
            _ => 16.0 * x + 5.0 + eps,
        };
        d.push(&[x], y);
    }
    d
}

// ---------------------------------------------------------------------------
// Oscillator

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscParams {
    pub m1: f64,
    pub m2: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for OscParams {
    fn default() -> Self {
        Self { m1: 1.0, m2: 2.0, k1: 1.0, k2: 2.0, k3: 1.5, c1: 0.1, c2: 0.2 }
    }
}

impl OscParams {
    /// Drifted regime: heavier masses and a stiffer first spring.
    pub fn shifted(&self) -> Self {
        Self { m1: 1.1 * self.m1, m2: 1.2 * self.m2, k1: 1.3 * self.k1, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [self.m1, self.m2, self.k1, self.k2, self.k3];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(DriftError::Input(format!("invalid oscillator parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscState {
    pub p1: f64,
    pub v1: f64,
    pub p2: f64,
    pub v2: f64,
    pub t: f64,
}

impl Default for OscState {
    fn default() -> Self {
        Self { p1: 1.0, v1: 0.0, p2: 0.0, v2: 0.0, t: 0.0 }
    }
}

impl OscState {
    pub fn zero() -> Self {
        Self { p1: 0.0, v1: 0.0, p2: 0.0, v2: 0.0, t: 0.0 }
    }

    pub fn features(&self) -> [f64; 4] {
        [self.p1, self.v1, self.p2, self.v2]
    }

    fn is_finite(&self) -> bool {
        self.features().iter().all(|v| v.is_finite())
    }

    fn offset(&self, k: &[f64; 4], h: f64) -> Self {
        Self { p1: self.p1 + h * k[0], v1: self.v1 + h * k[1], p2: self.p2 + h * k[2], v2: self.v2 + h * k[3], t: self.t + h }
    }
}

/// Finite-extensibility coupling force, bounded in (−1, 1).
pub fn phi(a: f64, b: f64) -> f64 {
    let d = a - b;
    d / (1.0 + d.abs())
}

/// `(ṗ1, v̇1, ṗ2, v̇2)`.
pub fn osc_derivative(params: &OscParams, s: &OscState) -> [f64; 4] {
    let f = params.k3 * phi(s.p1, s.p2);
    [
        s.v1,
        (-params.k1 * s.p1 - params.c1 * s.v1 + f) / params.m1,
        s.v2,
        (-params.k2 * s.p2 - params.c2 * s.v2 - f) / params.m2,
    ]
}

/// Kinetic plus potential energy, including the coupling term `k3 φ`.
pub fn energy(params: &OscParams, s: &OscState) -> f64 {
    0.5 * (params.m1 * s.v1 * s.v1 + params.m2 * s.v2 * s.v2)
        + 0.5 * (params.k1 * s.p1 * s.p1 + params.k2 * s.p2 * s.p2)
        + params.k3 * phi(s.p1, s.p2)
}

/// Conserved mechanical energy of the equations of motion: the coupling
/// force `k3 φ(d)` derives from the potential `−k3 (|d| − ln(1 + |d|))`.
///
/// This differs from [`energy`], whose coupling term is `+k3 φ`; only this
/// quantity is constant along undamped trajectories.
pub fn hamiltonian(params: &OscParams, s: &OscState) -> f64 {
    let d = (s.p1 - s.p2).abs();
    0.5 * (params.m1 * s.v1 * s.v1 + params.m2 * s.v2 * s.v2)
        + 0.5 * (params.k1 * s.p1 * s.p1 + params.k2 * s.p2 * s.p2)
        - params.k3 * (d - d.ln_1p())
}

fn rk4_step(params: &OscParams, s: &OscState, h: f64) -> OscState {
    let k1 = osc_derivative(params, s);
    let k2 = osc_derivative(params, &s.offset(&k1, h / 2.0));
    let k3 = osc_derivative(params, &s.offset(&k2, h / 2.0));
    let k4 = osc_derivative(params, &s.offset(&k3, h));
    let mut inc = [0.0; 4];
    for j in 0..4 {
        inc[j] = (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0;
    }
    s.offset(&inc, h)
}

/// Largest internal RK4 step.
pub const MAX_STEP: f64 = 1e-3;

/// Advance `s` by one sample interval `dt` with internal substeps no larger
/// than `max_step`.
pub fn advance(params: &OscParams, s: &OscState, dt: f64, max_step: f64) -> OscState {
    let substeps = (dt / max_step).ceil().max(1.0) as usize;
    let h = dt / substeps as f64;
    let t_end = s.t + dt;
    let mut cur = *s;
    for _ in 0..substeps {
        cur = rk4_step(params, &cur, h);
    }
    cur.t = t_end;
    cur
}

/// `steps + 1` states sampled every `dt`, starting with `state0`.
pub fn integrate(params: &OscParams, state0: OscState, dt: f64, steps: usize) -> Result<Vec<OscState>> {
    integrate_with_step(params, state0, dt, steps, MAX_STEP)
}

pub fn integrate_with_step(
    params: &OscParams,
    state0: OscState,
    dt: f64,
    steps: usize,
    max_step: f64,
) -> Result<Vec<OscState>> {
    if !(dt > 0.0 && dt.is_finite()) || !(max_step > 0.0) {
        return Err(DriftError::Input(format!("dt and max_step must be positive, got {dt}, {max_step}")));
    }
    let mut out = Vec::with_capacity(steps + 1);
    out.push(state0);
    let mut cur = state0;
    for step in 1..=steps {
        cur = advance(params, &cur, dt, max_step);
        if !cur.is_finite() {
            return Err(DriftError::Divergence { step });
        }
        out.push(cur);
    }
    Ok(out)
}

/// Observation window of the oscillator studies, in seconds.
pub const OSC_HORIZON: f64 = 30.0;

/// `n` noisy energy observations sampled uniformly on `[0, 30]`.
pub fn gen_oscillator(params: &OscParams, n: usize, sigma: f64, state0: OscState, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(DriftError::Input(format!("oscillator dataset needs n >= 2, got {n}")));
    }
    params.validate()?;
    let dt = OSC_HORIZON / (n - 1) as f64;
    let states = integrate(params, state0, dt, n - 1)?;
    Ok(observe(states.iter().map(|s| (s, params)), sigma, seed))
}

/// Monitoring stream of `n` observations spaced `dt`, starting at `state0`.
/// Observations `shift_at..` (0-based) evolve under `shifted` from wherever
/// the baseline trajectory left off.
pub fn gen_oscillator_stream(
    base: &OscParams,
    shifted: &OscParams,
    n: usize,
    shift_at: usize,
    dt: f64,
    sigma: f64,
    state0: OscState,
    seed: u64,
) -> Result<Dataset> {
    base.validate()?;
    shifted.validate()?;
    if !(dt > 0.0) {
        return Err(DriftError::Input(format!("dt must be positive, got {dt}")));
    }
    let mut states = Vec::with_capacity(n);
    let mut cur = state0;
    for i in 0..n {
        let regime = if i < shift_at { base } else { shifted };
        if i > 0 {
            cur = advance(regime, &cur, dt, MAX_STEP);
            if !cur.is_finite() {
                return Err(DriftError::Divergence { step: i });
            }
        }
        states.push((cur, regime));
    }
    Ok(observe(states.iter().map(|(s, p)| (s, *p)), sigma, seed))
}

/// How monitoring observations are placed in time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OscSampling {
    /// Each observation at an independent uniform time on `[0, 30]` of the
    /// trajectory from `state0`; post-shift observations use the trajectory
    /// under the shifted parameters.
    #[default]
    RandomTimes,
    /// One continuous trajectory from `state0`, switching parameters at the
    /// shift index.
    Sequential,
}

/// Monitoring stream of `n` observations at independent uniform times on
/// `[0, 30]`. Observations `shift_at..` (0-based) come from the trajectory
/// under `shifted`.
pub fn gen_oscillator_random_times(
    base: &OscParams,
    shifted: &OscParams,
    n: usize,
    shift_at: usize,
    sigma: f64,
    state0: OscState,
    seed: u64,
) -> Result<Dataset> {
    base.validate()?;
    shifted.validate()?;
    let mut rng = substream(seed, Domain::Stream, 0, 0);
    let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=OSC_HORIZON)).collect();
    let mut states = vec![(state0, base); n];
    for (regime, range) in [(base, 0..shift_at.min(n)), (shifted, shift_at.min(n)..n)] {
        let mut order: Vec<usize> = range.collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let mut cur = OscState { t: 0.0, ..state0 };
        for i in order {
            let dt = times[i] - cur.t;
            if dt > 0.0 {
                cur = advance(regime, &cur, dt, MAX_STEP);
                if !cur.is_finite() {
                    return Err(DriftError::Divergence { step: i });
                }
            }
            states[i] = (cur, regime);
        }
    }
    Ok(observe(states.iter().map(|(s, p)| (s, *p)), sigma, seed))
}

fn observe<'a>(states: impl Iterator<Item = (&'a OscState, &'a OscParams)>, sigma: f64, seed: u64) -> Dataset {
    let noise = Normal::new(0.0, sigma).expect("sigma must be finite and >= 0");
    let mut rng = substream(seed, Domain::Noise, 0, 0);
    let mut d = Dataset::empty(4);
    for (s, p) in states {
        d.push(&s.features(), energy(p, s) + noise.sample(&mut rng));
    }
    d
}
