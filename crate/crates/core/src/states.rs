//! Named states and seeded random states.

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::tensor::{PureState, SiteLayout, ONE, ZERO};
use crate::{invalid, Result};

pub fn bell_phi_plus() -> PureState {
    bell_state(0).expect("valid label")
}

/// Bell state with two-bit label `a`: 0 = phi+, 1 = phi-, 2 = psi+, 3 = psi-.
pub fn bell_state(a: usize) -> Result<PureState> {
    let h = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    let amps = match a {
        0 => vec![h, ZERO, ZERO, h],
        1 => vec![h, ZERO, ZERO, -h],
        2 => vec![ZERO, h, h, ZERO],
        3 => vec![ZERO, h, -h, ZERO],
        _ => return invalid(format!("Bell label {a} out of range")),
    };
    PureState::new(SiteLayout::qubits(2), amps)
}

pub fn ghz(n: usize) -> Result<PureState> {
    if n == 0 {
        return invalid("GHZ needs at least one qubit");
    }
    let mut amps = vec![ZERO; 1 << n];
    amps[0] = ONE;
    amps[(1 << n) - 1] = ONE;
    PureState::normalize(SiteLayout::qubits(n), amps)
}

pub fn w_state(n: usize) -> Result<PureState> {
    if n == 0 {
        return invalid("W needs at least one qubit");
    }
    let mut amps = vec![ZERO; 1 << n];
    for k in 0..n {
        amps[1 << k] = ONE;
    }
    PureState::normalize(SiteLayout::qubits(n), amps)
}

/// `(|00> + i|11>)/sqrt 2`, a two-qubit state that differs from its conjugate.
pub fn phase_bell() -> PureState {
    let amps = vec![ONE, ZERO, ZERO, C64::new(0.0, 1.0)];
    PureState::normalize(SiteLayout::qubits(2), amps).expect("nonzero")
}

/// Haar-distributed pure state.
pub fn random_state<R: Rng + ?Sized>(layout: SiteLayout, rng: &mut R) -> PureState {
    let amps: Vec<C64> =
        (0..layout.total_dim()).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    PureState::normalize(layout, amps).expect("gaussian vector is nonzero")
}
