//! Per-timestep state transitions of the neuron models.
//!
//! Every function here is a pure map `(state, drive, params) -> state`. The
//! layer kernels in [`crate::network`] call the `*_update` forms with decay
//! coefficients precomputed once per sequence; the `*_step` forms are the
//! scalar reference entry points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default threshold-adaptation strength of ALIF neurons.
pub const DEFAULT_BETA: f64 = 1.8;

/// Single-step decay `exp(-dt / tau)`.
pub fn decay_coefficient(tau: f64, dt: f64) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("time constant must be positive, got {tau}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("timestep must be positive, got {dt}")));
    }
    Ok((-dt / tau).exp())
}

/// How a LIF neuron resets after a spike.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifReset {
    /// Replace the potential by `u_r` before the leak is applied.
    #[default]
    ToPotential,
    /// Subtract the threshold after the leak, as the adaptive model does.
    Subtract,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    pub tau_m: f64,
    pub r_m: f64,
    pub u_r: f64,
    pub theta: f64,
    pub dt: f64,
    #[serde(default)]
    pub reset: LifReset,
}

impl Default for LifParams {
    fn default() -> Self {
        LifParams {
            tau_m: 20.0,
            r_m: 1.0,
            u_r: 0.0,
            theta: 1.0,
            dt: 1.0,
            reset: LifReset::ToPotential,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.tau_m >= self.dt) {
            return Err(Error::Config(format!(
                "LIF requires tau_m >= dt > 0 (tau_m={}, dt={})",
                self.tau_m, self.dt
            )));
        }
        if !(self.theta > self.u_r) {
            return Err(Error::Config(format!(
                "LIF threshold {} must exceed reset potential {}",
                self.theta, self.u_r
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlifParams {
    pub tau_m: f64,
    pub tau_adp: f64,
    pub b0: f64,
    pub beta: f64,
    pub r_m: f64,
    pub dt: f64,
}

impl Default for AlifParams {
    fn default() -> Self {
        AlifParams {
            tau_m: 20.0,
            tau_adp: 150.0,
            b0: 1.0,
            beta: DEFAULT_BETA,
            r_m: 1.0,
            dt: 1.0,
        }
    }
}

impl AlifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.tau_m >= self.dt) || !(self.tau_adp >= self.dt) {
            return Err(Error::Config(format!(
                "ALIF requires tau_m, tau_adp >= dt > 0 (tau_m={}, tau_adp={}, dt={})",
                self.tau_m, self.tau_adp, self.dt
            )));
        }
        if !(self.beta >= 0.0) || !(self.b0 > 0.0) {
            return Err(Error::Config(format!(
                "ALIF requires b0 > 0 and beta >= 0 (b0={}, beta={})",
                self.b0, self.beta
            )));
        }
        Ok(())
    }

    pub fn coefficients(&self) -> Result<AlifCoeffs> {
        Ok(AlifCoeffs {
            alpha: decay_coefficient(self.tau_m, self.dt)?,
            rho: decay_coefficient(self.tau_adp, self.dt)?,
            b0: self.b0,
            beta: self.beta,
            r_m: self.r_m,
        })
    }
}

/// Parameters of the leaky integrators without a spike mechanism
/// (ReLU units and readout units).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakyParams {
    pub tau_m: f64,
    pub r_m: f64,
    pub dt: f64,
}

impl Default for LeakyParams {
    fn default() -> Self {
        LeakyParams {
            tau_m: 20.0,
            r_m: 1.0,
            dt: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LifState {
    pub u: f64,
    pub s_prev: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlifState {
    pub u: f64,
    pub eta: f64,
    pub s_prev: bool,
}

impl AlifState {
    /// Threshold in force during the step that produced this state.
    pub fn threshold(&self, p: &AlifParams) -> f64 {
        p.b0 + p.beta * self.eta
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LeakyState {
    pub u: f64,
}

/// Precomputed per-neuron ALIF constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlifCoeffs {
    pub alpha: f64,
    pub rho: f64,
    pub b0: f64,
    pub beta: f64,
    pub r_m: f64,
}

/// Precomputed per-neuron LIF/readout constants: `u' = keep * u + gain * drive`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeakCoeffs {
    pub keep: f64,
    pub gain: f64,
}

impl LeakCoeffs {
    pub fn euler(tau_m: f64, r_m: f64, dt: f64) -> Self {
        LeakCoeffs {
            keep: 1.0 - dt / tau_m,
            gain: r_m * dt / tau_m,
        }
    }
}

#[inline]
pub fn spike(u: f64, threshold: f64) -> bool {
    u >= threshold
}

/// LIF transition on raw scalars. Returns the new potential and spike.
#[inline]
pub fn lif_update(
    u: f64,
    s_prev: bool,
    drive: f64,
    c: LeakCoeffs,
    theta: f64,
    u_r: f64,
    reset: LifReset,
) -> (f64, bool) {
    let u = match reset {
        LifReset::ToPotential => {
            let u = if s_prev { u_r } else { u };
            u * c.keep + c.gain * drive
        }
        LifReset::Subtract => {
            let reset = if s_prev { theta } else { 0.0 };
            u * c.keep + c.gain * drive - reset
        }
    };
    (u, spike(u, theta))
}

pub fn lif_step(state: LifState, drive: f64, p: &LifParams) -> (LifState, bool) {
    let c = LeakCoeffs::euler(p.tau_m, p.r_m, p.dt);
    let (u, s) = lif_update(state.u, state.s_prev, drive, c, p.theta, p.u_r, p.reset);
    (LifState { u, s_prev: s }, s)
}

/// Result of one ALIF transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlifUpdate {
    pub u: f64,
    pub eta: f64,
    pub theta: f64,
    pub spike: bool,
}

/// ALIF transition on raw scalars. `eta` is the adaptation value of the
/// previous step, which also fixes the threshold subtracted on reset.
#[inline]
pub fn alif_update(u: f64, eta: f64, s_prev: bool, drive: f64, c: &AlifCoeffs) -> AlifUpdate {
    let s = if s_prev { 1.0 } else { 0.0 };
    let theta_prev = c.b0 + c.beta * eta;
    let u = c.alpha * u + (1.0 - c.alpha) * c.r_m * drive - theta_prev * s;
    let eta = c.rho * eta + (1.0 - c.rho) * s;
    let theta = c.b0 + c.beta * eta;
    AlifUpdate {
        u,
        eta,
        theta,
        spike: spike(u, theta),
    }
}

pub fn alif_step(state: AlifState, drive: f64, p: &AlifParams) -> Result<(AlifState, bool)> {
    let c = p.coefficients()?;
    let r = alif_update(state.u, state.eta, state.s_prev, drive, &c);
    Ok((
        AlifState {
            u: r.u,
            eta: r.eta,
            s_prev: r.spike,
        },
        r.spike,
    ))
}

/// Membrane of a non-spiking ReLU unit: exponential leak, no reset.
#[inline]
pub fn relu_update(u: f64, drive: f64, alpha: f64, r_m: f64) -> (f64, f64) {
    let u = alpha * u + (1.0 - alpha) * r_m * drive;
    (u, u.max(0.0))
}

/// ReLU counterpart of an ALIF unit: no spikes and no reset, but the
/// adaptation variable integrates the previous activation and raises the
/// rectification point by `beta * eta`. Returns `(u, eta, activation)`.
pub fn adaptive_relu_update(u: f64, eta: f64, a_prev: f64, drive: f64, c: &AlifCoeffs) -> (f64, f64, f64) {
    let u = c.alpha * u + (1.0 - c.alpha) * c.r_m * drive;
    let eta = c.rho * eta + (1.0 - c.rho) * a_prev;
    (u, eta, (u - c.beta * eta).max(0.0))
}

pub fn relu_step(state: LeakyState, drive: f64, p: &LeakyParams) -> Result<(LeakyState, f64)> {
    let alpha = decay_coefficient(p.tau_m, p.dt)?;
    let (u, out) = relu_update(state.u, drive, alpha, p.r_m);
    Ok((LeakyState { u }, out))
}

#[inline]
pub fn readout_update(u: f64, drive: f64, c: LeakCoeffs) -> f64 {
    u * c.keep + c.gain * drive
}

/// Leaky integration of the readout units; never spikes or resets.
pub fn readout_step(state: LeakyState, drive: f64, p: &LeakyParams) -> LeakyState {
    let c = LeakCoeffs::euler(p.tau_m, p.r_m, p.dt);
    LeakyState {
        u: readout_update(state.u, drive, c),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn adaptive_relu_without_adaptation_is_relu() {
        let c = AlifCoeffs {
            alpha: (-1.0f64 / 20.0).exp(),
            rho: (-1.0f64 / 150.0).exp(),
            b0: 1.0,
            beta: 1.8,
            r_m: 1.0,
        };
        let (u, eta, a) = adaptive_relu_update(0.0, 0.0, 0.0, 1.0, &c);
        assert_eq!((u, a), relu_update(0.0, 1.0, c.alpha, 1.0));
        assert_eq!(eta, 0.0);
        // A past activation raises the rectification point.
        let (u, eta, a) = adaptive_relu_update(0.5, 0.0, 1.0, 0.0, &c);
        assert!((eta - (1.0 - c.rho)).abs() < 1e-15);
        assert!((a - (u - 1.8 * eta)).abs() < 1e-15);
    }

    #[test]
    fn decay_values() {
        assert!(close(decay_coefficient(20.0, 1.0).unwrap(), 0.951229, 1e-6));
        assert!(close(decay_coefficient(150.0, 1.0).unwrap(), 0.993356, 1e-6));
        assert!(close(decay_coefficient(1e12, 1.0).unwrap(), 1.0, 1e-9));
        assert!(decay_coefficient(0.0, 1.0).is_err());
        assert!(decay_coefficient(10.0, -1.0).is_err());
        assert!(decay_coefficient(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn lif_examples() {
        let p = LifParams::default();
        let (s, spk) = lif_step(LifState { u: 0.5, s_prev: false }, 1.0, &p);
        assert!(close(s.u, 0.525, 1e-12) && !spk);

        let (s, spk) = lif_step(LifState { u: 5.0, s_prev: true }, 0.0, &p);
        assert_eq!(s.u, 0.0);
        assert!(!spk);

        let (s, spk) = lif_step(LifState { u: 0.99, s_prev: false }, 20.0, &p);
        assert!(close(s.u, 1.9405, 1e-12) && spk);
    }

    #[test]
    fn lif_fires_at_exact_threshold() {
        let p = LifParams {
            tau_m: 1.0,
            ..LifParams::default()
        };
        let (s, spk) = lif_step(LifState::default(), 1.0, &p);
        assert_eq!(s.u, 1.0);
        assert!(spk);
    }

    #[test]
    fn alif_examples() {
        let p = AlifParams::default();
        let (s, spk) = alif_step(AlifState::default(), 1.0, &p).unwrap();
        assert!(close(s.u, 0.048771, 1e-6) && !spk);

        let (s, _) = alif_step(
            AlifState {
                u: 0.0,
                eta: 0.0,
                s_prev: true,
            },
            0.0,
            &p,
        )
        .unwrap();
        assert!(close(s.eta, 0.006644, 1e-6));
        assert!(close(s.threshold(&p), 1.011960, 1e-6));

        let (s, spk) = alif_step(AlifState::default(), 0.0, &p).unwrap();
        assert_eq!(s, AlifState::default());
        assert!(!spk);
    }

    #[test]
    fn alif_reset_uses_previous_threshold() {
        let p = AlifParams::default();
        let c = p.coefficients().unwrap();
        let r = alif_update(2.0, 0.5, true, 0.0, &c);
        let theta_prev = 1.0 + 1.8 * 0.5;
        assert!(close(r.u, c.alpha * 2.0 - theta_prev, 1e-15));
    }

    #[test]
    fn relu_examples() {
        let p = LeakyParams::default();
        let (s, out) = relu_step(LeakyState { u: 0.0 }, 1.0, &p).unwrap();
        assert!(close(s.u, 0.048771, 1e-6) && close(out, 0.048771, 1e-6));
        let (_, out) = relu_step(LeakyState { u: -0.3 }, 0.0, &p).unwrap();
        assert_eq!(out, 0.0);
        let (s, out) = relu_step(LeakyState { u: 0.5 }, 0.0, &p).unwrap();
        assert!(close(s.u, 0.475615, 1e-6) && close(out, 0.475615, 1e-6));
    }

    #[test]
    fn readout_examples() {
        let p = LeakyParams::default();
        assert!(close(readout_step(LeakyState { u: 0.0 }, 1.0, &p).u, 0.05, 1e-12));
        assert!(close(readout_step(LeakyState { u: 1.0 }, 0.0, &p).u, 0.95, 1e-12));
        let full = LeakyParams {
            tau_m: 1.0,
            ..p
        };
        assert_eq!(readout_step(LeakyState { u: 3.0 }, 0.7, &full).u, 0.7);
    }

    #[test]
    fn geometric_decay_without_input() {
        let lif = LifParams::default();
        let alif = AlifParams::default();
        let mut a = LifState { u: 0.8, s_prev: false };
        let mut b = AlifState {
            u: 0.8,
            ..AlifState::default()
        };
        for t in 1..=100 {
            a = lif_step(a, 0.0, &lif).0;
            b = alif_step(b, 0.0, &alif).unwrap().0;
            let expect_lif = 0.8 * (1.0 - 1.0 / 20.0f64).powi(t);
            let expect_alif = 0.8 * (-1.0 / 20.0f64).exp().powi(t);
            assert!(close(a.u, expect_lif, 1e-12));
            assert!(close(b.u, expect_alif, 1e-12));
        }
    }

    #[test]
    fn threshold_approaches_saturation_under_constant_firing() {
        let p = AlifParams {
            tau_adp: 100.0,
            ..AlifParams::default()
        };
        let mut s = AlifState {
            u: 0.0,
            eta: 0.0,
            s_prev: true,
        };
        let mut last = p.b0;
        for _ in 0..1000 {
            // Keep the neuron firing regardless of threshold.
            s = alif_step(s, 1e6, &p).unwrap().0;
            let theta = s.threshold(&p);
            assert!(theta >= p.b0);
            assert!(theta >= last);
            last = theta;
        }
        assert!((p.b0 + p.beta) - last < 1e-3);
    }

    #[test]
    fn alif_without_adaptation_matches_subtractive_lif() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let alif = AlifParams {
            beta: 0.0,
            ..AlifParams::default()
        };
        let alpha = decay_coefficient(alif.tau_m, alif.dt).unwrap();
        let lif = LifParams {
            tau_m: 1.0 / (1.0 - alpha),
            theta: alif.b0,
            reset: LifReset::Subtract,
            ..LifParams::default()
        };
        let mut a = AlifState::default();
        let mut l = LifState::default();
        for _ in 0..1000 {
            let drive: f64 = rng.random_range(-2.0..6.0);
            let (na, sa) = alif_step(a, drive, &alif).unwrap();
            let (nl, sl) = lif_step(l, drive, &lif);
            assert_eq!(sa, sl);
            assert!(close(na.u, nl.u, 1e-9));
            a = na;
            l = nl;
        }
    }

    #[test]
    fn params_validation() {
        assert!(LifParams::default().validate().is_ok());
        let bad = LifParams {
            tau_m: 0.5,
            ..LifParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = LifParams {
            theta: -1.0,
            ..LifParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = AlifParams {
            beta: -0.1,
            ..AlifParams::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn eta_stays_in_unit_interval(
            eta0 in 0.0f64..=1.0,
            tau_adp in 1.0f64..500.0,
            spikes in proptest::collection::vec(any::<bool>(), 1..200),
        ) {
            let p = AlifParams { tau_adp, ..AlifParams::default() };
            let c = p.coefficients().unwrap();
            let mut eta = eta0;
            for s in spikes {
                eta = alif_update(0.0, eta, s, 0.0, &c).eta;
                prop_assert!((0.0..=1.0).contains(&eta));
            }
        }

        #[test]
        fn spikes_are_binary_and_consistent(u in -10.0f64..10.0, drive in -50.0f64..50.0, s_prev: bool) {
            let (st, spk) = lif_step(LifState { u, s_prev }, drive, &LifParams::default());
            prop_assert_eq!(spk, st.u >= 1.0);
            let p = AlifParams::default();
            let (st, spk) = alif_step(AlifState { u, eta: 0.2, s_prev }, drive, &p).unwrap();
            prop_assert_eq!(spk, st.u >= st.threshold(&p));
        }
    }
}
