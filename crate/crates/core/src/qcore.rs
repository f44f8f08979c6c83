//! Exact two-qubit statevector simulation of the entanglement switch circuit.
//!
//! Basis ordering: `amps[2 * top + bottom]`, so index 0 is |00⟩, 1 is |01⟩,
//! 2 is |10⟩ and 3 is |11⟩. Wire 0 is the top wire and the CNOT control.
//!
//! The switch circuit is `H` on wire 0, `Rx(π·s)` on wire 1, then CNOT(0→1).
//! Its output is `cos(πs/2)|Φ⁺⟩ − i·sin(πs/2)|Ψ⁺⟩`, so `s = 0` gives perfectly
//! correlated bits and `s = 1` perfectly anti-correlated bits.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A complex amplitude.
pub type Amplitude = Complex64;

/// Tolerance used for unitarity and normalization checks.
pub const TOLERANCE: f64 = 1e-9;

const ZERO: Amplitude = Complex64::new(0.0, 0.0);
const ONE: Amplitude = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QcoreError {
    #[error("invalid wire index {0}, expected 0 or 1")]
    InvalidWire(usize),
    #[error("switch parameter {0} outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("rotation angle must be finite, got {0}")]
    NonFiniteAngle(f64),
    #[error("state is not normalized: total probability {0}")]
    Unnormalized(f64),
    #[error("state contains a non-finite amplitude")]
    NonFinite,
    #[error("shot count must be at least 1")]
    NoShots,
}

/// A 2×2 single-qubit gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate1Q {
    pub m: [[Amplitude; 2]; 2],
}

/// A 4×4 two-qubit gate in the same basis ordering as [`StateVector2Q`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate2Q {
    pub m: [[Amplitude; 4]; 4],
}

impl Gate1Q {
    pub fn identity() -> Self {
        Gate1Q {
            m: [[ONE, ZERO], [ZERO, ONE]],
        }
    }

    pub fn dagger(&self) -> Self {
        let mut m = [[ZERO; 2]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.m[c][r].conj();
            }
        }
        Gate1Q { m }
    }

    pub fn matmul(&self, other: &Gate1Q) -> Self {
        let mut m = [[ZERO; 2]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (0..2).map(|k| self.m[r][k] * other.m[k][c]).sum();
            }
        }
        Gate1Q { m }
    }

    /// Largest entrywise deviation of `G·G†` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.matmul(&self.dagger());
        max_deviation_from_identity(p.m.iter().map(|r| &r[..]))
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_error() < TOLERANCE
    }

    /// Applies the gate to a single-qubit state `[a, b]` (a|0⟩ + b|1⟩).
    pub fn apply_single(&self, v: [Amplitude; 2]) -> [Amplitude; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }
}

impl Gate2Q {
    pub fn identity() -> Self {
        let mut m = [[ZERO; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = ONE;
        }
        Gate2Q { m }
    }

    pub fn dagger(&self) -> Self {
        let mut m = [[ZERO; 4]; 4];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.m[c][r].conj();
            }
        }
        Gate2Q { m }
    }

    pub fn matmul(&self, other: &Gate2Q) -> Self {
        let mut m = [[ZERO; 4]; 4];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (0..4).map(|k| self.m[r][k] * other.m[k][c]).sum();
            }
        }
        Gate2Q { m }
    }

    pub fn unitarity_error(&self) -> f64 {
        let p = self.matmul(&self.dagger());
        max_deviation_from_identity(p.m.iter().map(|r| &r[..]))
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_error() < TOLERANCE
    }
}

fn max_deviation_from_identity<'a>(rows: impl Iterator<Item = &'a [Amplitude]>) -> f64 {
    rows.enumerate()
        .flat_map(|(r, row)| {
            row.iter().enumerate().map(move |(c, v)| {
                let target = if r == c { ONE } else { ZERO };
                (v - target).norm()
            })
        })
        .fold(0.0, f64::max)
}

/// Pauli X (NOT).
pub fn gate_x() -> Gate1Q {
    Gate1Q {
        m: [[ZERO, ONE], [ONE, ZERO]],
    }
}

/// Hadamard.
pub fn gate_h() -> Gate1Q {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    Gate1Q {
        m: [[h, h], [h, -h]],
    }
}

/// Rotation about the X axis by `theta` radians.
pub fn gate_rx(theta: f64) -> Result<Gate1Q, QcoreError> {
    if !theta.is_finite() {
        return Err(QcoreError::NonFiniteAngle(theta));
    }
    let c = Complex64::new((theta / 2.0).cos(), 0.0);
    let s = Complex64::new(0.0, -(theta / 2.0).sin());
    Ok(Gate1Q { m: [[c, s], [s, c]] })
}

/// Controlled NOT with the top wire as control: swaps |10⟩ and |11⟩.
pub fn gate_cnot() -> Gate2Q {
    let mut g = Gate2Q::identity();
    g.m[2][2] = ZERO;
    g.m[3][3] = ZERO;
    g.m[2][3] = ONE;
    g.m[3][2] = ONE;
    g
}

/// Normalized state of the two-qubit register.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector2Q {
    amps: [Amplitude; 4],
}

impl StateVector2Q {
    /// Computational basis state; `index` follows the `2·top + bottom` rule.
    ///
    /// # Panics
    ///
    /// If `index > 3`.
    pub fn basis(index: usize) -> Self {
        assert!(index < 4, "basis index {index} out of range");
        let mut amps = [ZERO; 4];
        amps[index] = ONE;
        StateVector2Q { amps }
    }

    /// |00⟩, the register's initial state.
    pub fn zero() -> Self {
        Self::basis(0)
    }

    /// Builds a state from raw amplitudes, checking finiteness and norm.
    pub fn from_amps(amps: [Amplitude; 4]) -> Result<Self, QcoreError> {
        let state = StateVector2Q { amps };
        state.check()?;
        Ok(state)
    }

    pub fn amps(&self) -> &[Amplitude; 4] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check(&self) -> Result<(), QcoreError> {
        if self.amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(QcoreError::NonFinite);
        }
        let n = self.norm_sqr();
        if (n - 1.0).abs() > TOLERANCE {
            return Err(QcoreError::Unnormalized(n));
        }
        Ok(())
    }
}

/// A measured pair of bits: `b0` from the top wire, `b1` from the bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[u8; 2]", try_from = "[u8; 2]")]
pub struct BitPair {
    pub b0: u8,
    pub b1: u8,
}

impl BitPair {
    pub fn from_index(index: usize) -> Self {
        debug_assert!(index < 4);
        BitPair {
            b0: (index >> 1) as u8 & 1,
            b1: index as u8 & 1,
        }
    }

    pub fn index(self) -> usize {
        2 * self.b0 as usize + self.b1 as usize
    }

    pub fn agree(self) -> bool {
        self.b0 == self.b1
    }
}

impl From<BitPair> for [u8; 2] {
    fn from(p: BitPair) -> Self {
        [p.b0, p.b1]
    }
}

impl TryFrom<[u8; 2]> for BitPair {
    type Error = String;

    fn try_from([b0, b1]: [u8; 2]) -> Result<Self, Self::Error> {
        if b0 > 1 || b1 > 1 {
            return Err(format!("bit pair [{b0}, {b1}] holds a non-bit"));
        }
        Ok(BitPair { b0, b1 })
    }
}

impl fmt::Display for BitPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.b0, self.b1)
    }
}

/// SplitMix64 generator. Sequences are bit-identical to the reference
/// algorithm so replays match across implementations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prng {
    state: u64,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)` from the top 53 bits of the next output.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Applies `g` to one wire: `g ⊗ I` for wire 0, `I ⊗ g` for wire 1.
pub fn apply_1q(
    state: &StateVector2Q,
    g: &Gate1Q,
    wire: usize,
) -> Result<StateVector2Q, QcoreError> {
    // Index pairs that differ only in the target wire's bit.
    let pairs: [(usize, usize); 2] = match wire {
        0 => [(0, 2), (1, 3)],
        1 => [(0, 1), (2, 3)],
        w => return Err(QcoreError::InvalidWire(w)),
    };
    let mut amps = state.amps;
    for (lo, hi) in pairs {
        let [a, b] = g.apply_single([state.amps[lo], state.amps[hi]]);
        amps[lo] = a;
        amps[hi] = b;
    }
    Ok(StateVector2Q { amps })
}

pub fn apply_2q(state: &StateVector2Q, g: &Gate2Q) -> StateVector2Q {
    let mut amps = [ZERO; 4];
    for (r, out) in amps.iter_mut().enumerate() {
        *out = (0..4).map(|c| g.m[r][c] * state.amps[c]).sum();
    }
    StateVector2Q { amps }
}

/// Pre-measurement output of the switch circuit for `0 ≤ s ≤ 1`.
pub fn entanglement_switch_state(s: f64) -> Result<StateVector2Q, QcoreError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(QcoreError::ParameterOutOfRange(s));
    }
    let state = StateVector2Q::zero();
    let state = apply_1q(&state, &gate_h(), 0)?;
    let state = apply_1q(&state, &gate_rx(PI * s)?, 1)?;
    Ok(apply_2q(&state, &gate_cnot()))
}

/// Weights of |Φ⁺⟩ and |Ψ⁺⟩ in the switch output: `(cos²(πs/2), sin²(πs/2))`.
pub fn bell_weights(s: f64) -> Result<(f64, f64), QcoreError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(QcoreError::ParameterOutOfRange(s));
    }
    let half = PI * s / 2.0;
    Ok((half.cos().powi(2), half.sin().powi(2)))
}

/// Born-rule probabilities for |00⟩, |01⟩, |10⟩, |11⟩.
pub fn measure_probs(state: &StateVector2Q) -> Result<[f64; 4], QcoreError> {
    state.check()?;
    Ok(state.amps.map(|a| a.norm_sqr()))
}

/// Picks the first outcome whose cumulative probability exceeds `u`.
pub fn pick_outcome(probs: &[f64; 4], u: f64) -> BitPair {
    let mut cumulative = 0.0;
    for (k, p) in probs.iter().enumerate() {
        cumulative += p;
        if cumulative > u {
            return BitPair::from_index(k);
        }
    }
    // Rounding left the total just under u; fall back to the last possible outcome.
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(3);
    BitPair::from_index(last)
}

pub fn sample_shot(state: &StateVector2Q, rng: &mut Prng) -> Result<BitPair, QcoreError> {
    let probs = measure_probs(state)?;
    Ok(pick_outcome(&probs, rng.next_unit()))
}

/// Prepares and measures the switch circuit `n` times, advancing `rng` once per shot.
pub fn run_shots(s: f64, n: usize, rng: &mut Prng) -> Result<Vec<BitPair>, QcoreError> {
    if n == 0 {
        return Err(QcoreError::NoShots);
    }
    let probs = measure_probs(&entanglement_switch_state(s)?)?;
    Ok((0..n)
        .map(|_| pick_outcome(&probs, rng.next_unit()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Amplitude {
        Complex64::new(re, im)
    }

    fn close(a: &[Amplitude], b: &[Amplitude]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).norm() < TOLERANCE)
    }

    #[test]
    fn x_flips_basis_states() {
        let x = gate_x();
        assert_eq!(x.apply_single([ONE, ZERO]), [ZERO, ONE]);
        assert_eq!(x.apply_single([ZERO, ONE]), [ONE, ZERO]);
        assert!(x.matmul(&x).unitarity_error() < TOLERANCE);
        assert_eq!(x.matmul(&x), Gate1Q::identity());
    }

    #[test]
    fn hadamard_makes_even_superposition() {
        let h = gate_h();
        let out = h.apply_single([ONE, ZERO]);
        assert!(close(&out, &[c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]));
        let probs: Vec<f64> = out.iter().map(|a| a.norm_sqr()).collect();
        assert!((probs[0] - 0.5).abs() < TOLERANCE && (probs[1] - 0.5).abs() < TOLERANCE);
        let hh = h.matmul(&h);
        assert!(close(&hh.m.concat(), &Gate1Q::identity().m.concat()));
    }

    #[test]
    fn rx_special_angles() {
        let id = gate_rx(0.0).unwrap();
        assert!(close(&id.m.concat(), &Gate1Q::identity().m.concat()));

        // Rx(π)|0⟩ = [cos(π/2), -i sin(π/2)] = -i|1⟩
        let out = gate_rx(PI).unwrap().apply_single([ONE, ZERO]);
        assert!(close(&out, &[ZERO, c(0.0, -1.0)]));
        assert!((out[1].norm_sqr() - 1.0).abs() < TOLERANCE);

        let out = gate_rx(PI / 2.0).unwrap().apply_single([ONE, ZERO]);
        assert!((out[0].norm_sqr() - 0.5).abs() < TOLERANCE);
        assert!((out[1].norm_sqr() - 0.5).abs() < TOLERANCE);

        assert!(gate_rx(f64::NAN).is_err());
        assert!(gate_rx(f64::INFINITY).is_err());
    }

    #[test]
    fn cnot_truth_table_follows_matrix() {
        let g = gate_cnot();
        let map = |k: usize| {
            let out = apply_2q(&StateVector2Q::basis(k), &g);
            out.amps().iter().position(|a| (a - ONE).norm() < TOLERANCE).unwrap()
        };
        assert_eq!(map(0), 0);
        assert_eq!(map(1), 1);
        assert_eq!(map(2), 3);
        assert_eq!(map(3), 2);
        assert_eq!(g.matmul(&g), Gate2Q::identity());
    }

    #[test]
    fn gates_are_unitary() {
        assert!(gate_x().is_unitary());
        assert!(gate_h().is_unitary());
        assert!(gate_cnot().is_unitary());
        for k in 0..=24 {
            assert!(gate_rx(k as f64 * PI / 6.0).unwrap().is_unitary());
        }
    }

    #[test]
    fn apply_1q_wires() {
        let h0 = apply_1q(&StateVector2Q::zero(), &gate_h(), 0).unwrap();
        let r = FRAC_1_SQRT_2;
        assert!(close(h0.amps(), &[c(r, 0.0), ZERO, c(r, 0.0), ZERO]));

        let id = apply_1q(&StateVector2Q::zero(), &Gate1Q::identity(), 0).unwrap();
        assert_eq!(id, StateVector2Q::zero());

        let x1 = apply_1q(&StateVector2Q::zero(), &gate_x(), 1).unwrap();
        assert_eq!(x1, StateVector2Q::basis(1));

        assert_eq!(
            apply_1q(&StateVector2Q::zero(), &gate_x(), 2),
            Err(QcoreError::InvalidWire(2))
        );
    }

    #[test]
    fn cnot_builds_bell_states() {
        let r = FRAC_1_SQRT_2;
        let plus = apply_1q(&StateVector2Q::zero(), &gate_h(), 0).unwrap();
        let phi = apply_2q(&plus, &gate_cnot());
        assert!(close(phi.amps(), &[c(r, 0.0), ZERO, ZERO, c(r, 0.0)]));

        // H|0⟩ ⊗ |1⟩ = (|01⟩ + |11⟩)/√2 in this ordering, CNOT gives Ψ⁺.
        let flipped = apply_1q(&plus, &gate_x(), 1).unwrap();
        let psi = apply_2q(&flipped, &gate_cnot());
        assert!(close(psi.amps(), &[ZERO, c(r, 0.0), c(r, 0.0), ZERO]));

        assert_eq!(apply_2q(&psi, &Gate2Q::identity()), psi);
    }

    #[test]
    fn switch_state_endpoints_and_midpoint() {
        let p = measure_probs(&entanglement_switch_state(0.0).unwrap()).unwrap();
        assert!(close_probs(&p, &[0.5, 0.0, 0.0, 0.5]));
        let p = measure_probs(&entanglement_switch_state(1.0).unwrap()).unwrap();
        assert!(close_probs(&p, &[0.0, 0.5, 0.5, 0.0]));
        let p = measure_probs(&entanglement_switch_state(0.5).unwrap()).unwrap();
        assert!(close_probs(&p, &[0.25; 4]));
        let p = measure_probs(&entanglement_switch_state(1.0 / 3.0).unwrap()).unwrap();
        assert!(close_probs(&p, &[0.375, 0.125, 0.125, 0.375]));

        assert!(entanglement_switch_state(-0.01).is_err());
        assert!(entanglement_switch_state(1.01).is_err());
        assert!(entanglement_switch_state(f64::NAN).is_err());
    }

    #[test]
    fn switch_state_matches_bell_decomposition() {
        // cos(πs/2)|Φ⁺⟩ − i·sin(πs/2)|Ψ⁺⟩
        for k in 0..=12 {
            let s = k as f64 / 12.0;
            let (cs, sn) = ((PI * s / 2.0).cos(), (PI * s / 2.0).sin());
            let r = FRAC_1_SQRT_2;
            let expected = [c(cs * r, 0.0), c(0.0, -sn * r), c(0.0, -sn * r), c(cs * r, 0.0)];
            assert!(close(entanglement_switch_state(s).unwrap().amps(), &expected));
            let (wphi, wpsi) = bell_weights(s).unwrap();
            assert!((wphi - cs * cs).abs() < TOLERANCE && (wpsi - sn * sn).abs() < TOLERANCE);
        }
    }

    fn close_probs(a: &[f64; 4], b: &[f64; 4]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < TOLERANCE)
    }

    #[test]
    fn measure_probs_basics() {
        assert_eq!(measure_probs(&StateVector2Q::zero()).unwrap(), [1.0, 0.0, 0.0, 0.0]);
        let phase = Complex64::from_polar(1.0, 0.73);
        let v = entanglement_switch_state(0.3).unwrap();
        let rotated = StateVector2Q::from_amps(v.amps().map(|a| a * phase)).unwrap();
        assert!(close_probs(
            &measure_probs(&v).unwrap(),
            &measure_probs(&rotated).unwrap()
        ));
    }

    #[test]
    fn unnormalized_and_non_finite_states_are_rejected() {
        assert!(matches!(
            StateVector2Q::from_amps([ONE, ONE, ZERO, ZERO]),
            Err(QcoreError::Unnormalized(_))
        ));
        assert_eq!(
            StateVector2Q::from_amps([c(f64::NAN, 0.0), ZERO, ZERO, ZERO]),
            Err(QcoreError::NonFinite)
        );
    }

    #[test]
    fn splitmix_reference_values() {
        // Reference outputs of SplitMix64 seeded with 0 and 1234567.
        let mut rng = Prng::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
        let mut rng = Prng::new(1234567);
        assert_eq!(rng.next_u64(), 6457827717110365317);
        assert_eq!(rng.next_u64(), 3203168211198807973);
        assert_eq!(rng.next_u64(), 9817491932198370423);
    }

    #[test]
    fn unit_draws_stay_below_one() {
        let mut rng = Prng::new(7);
        for _ in 0..10_000 {
            let u = rng.next_unit();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn sampling_walks_cumulative_probabilities() {
        let bell = measure_probs(&entanglement_switch_state(0.0).unwrap()).unwrap();
        assert_eq!(pick_outcome(&bell, 0.3), BitPair { b0: 0, b1: 0 });
        assert_eq!(pick_outcome(&bell, 0.7), BitPair { b0: 1, b1: 1 });

        let eleven = StateVector2Q::basis(3);
        let mut rng = Prng::new(99);
        for _ in 0..100 {
            assert_eq!(sample_shot(&eleven, &mut rng).unwrap(), BitPair { b0: 1, b1: 1 });
        }
        // u at the very top of the range never runs off the end
        assert_eq!(pick_outcome(&[0.5, 0.0, 0.0, 0.4999999999], 0.99999999999), BitPair { b0: 1, b1: 1 });
    }

    #[test]
    fn run_shots_endpoints_and_determinism() {
        let mut rng = Prng::new(1);
        assert!(run_shots(0.0, 7, &mut rng).unwrap().iter().all(|p| p.b0 == p.b1));
        assert!(run_shots(1.0, 7, &mut rng).unwrap().iter().all(|p| p.b0 == 1 - p.b1));

        let a = run_shots(0.5, 10, &mut Prng::new(42)).unwrap();
        let b = run_shots(0.5, 10, &mut Prng::new(42)).unwrap();
        assert_eq!(a, b);

        let mut rng = Prng::new(5);
        let mut manual = rng;
        run_shots(0.25, 4, &mut rng).unwrap();
        for _ in 0..4 {
            manual.next_u64();
        }
        assert_eq!(rng, manual);

        assert_eq!(run_shots(0.5, 0, &mut rng), Err(QcoreError::NoShots));
    }

    #[test]
    fn bit_pair_index_roundtrip() {
        for k in 0..4 {
            assert_eq!(BitPair::from_index(k).index(), k);
        }
        assert_eq!(BitPair::from_index(2).to_string(), "10");
    }
}
