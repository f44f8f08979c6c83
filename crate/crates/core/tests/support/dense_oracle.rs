//! Dense 4×4 matrix-chain evaluation of the switch circuit, written from the
//! textbook gate definitions without touching the simulator under test.

#![allow(dead_code)]

use num_complex::Complex64 as C;

pub type Mat4 = [[C; 4]; 4];
type Mat2 = [[C; 2]; 2];

fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut out = [[C::new(0.0, 0.0); 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[C::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn eye2() -> Mat2 {
    [[C::new(1.0, 0.0), C::new(0.0, 0.0)], [C::new(0.0, 0.0), C::new(1.0, 0.0)]]
}

fn hadamard() -> Mat2 {
    let h = C::new(1.0 / 2f64.sqrt(), 0.0);
    [[h, h], [h, -h]]
}

fn rx(theta: f64) -> Mat2 {
    let c = C::new((theta / 2.0).cos(), 0.0);
    let s = C::new(0.0, -(theta / 2.0).sin());
    [[c, s], [s, c]]
}

fn cnot_top_control() -> Mat4 {
    let o = C::new(1.0, 0.0);
    let z = C::new(0.0, 0.0);
    [[o, z, z, z], [z, o, z, z], [z, z, z, o], [z, z, o, z]]
}

/// Circuit unitary `CNOT · (I ⊗ Rx(πs)) · (H ⊗ I)`.
pub fn switch_unitary(s: f64) -> Mat4 {
    let h_top = kron(&hadamard(), &eye2());
    let rx_bottom = kron(&eye2(), &rx(std::f64::consts::PI * s));
    mul(&cnot_top_control(), &mul(&rx_bottom, &h_top))
}

/// Outcome probabilities for |00⟩, |01⟩, |10⟩, |11⟩ starting from |00⟩.
pub fn switch_probs(s: f64) -> [f64; 4] {
    let u = switch_unitary(s);
    // first column is U|00⟩
    [0, 1, 2, 3].map(|k| u[k][0].norm_sqr())
}
