//! Dense-matrix reference for the statevector simulator.

use hqcm::qsim::{final_state, grad_circuit, parameter_shift_grad, run_circuit, CircuitParams, Statevector};
use num_complex::Complex64;
use rand::Rng;

use super::rng;

pub type Matrix = Vec<Vec<Complex64>>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect())
        .collect()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|t| a[i][t] * b[t][j]).sum()).collect())
        .collect()
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0, 0.0); n * m]; n * m];
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                for l in 0..m {
                    out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn rz(theta: f64) -> Matrix {
    vec![
        vec![Complex64::from_polar(1.0, -theta / 2.0), c(0.0, 0.0)],
        vec![c(0.0, 0.0), Complex64::from_polar(1.0, theta / 2.0)],
    ]
}

pub fn ry(theta: f64) -> Matrix {
    let (s, co) = (theta / 2.0).sin_cos();
    vec![vec![c(co, 0.0), c(-s, 0.0)], vec![c(s, 0.0), c(co, 0.0)]]
}

pub fn pauli_y() -> Matrix {
    vec![vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]]
}

/// `op` on `qubit` of a `qubits`-wide register, qubit 0 leftmost in the Kronecker product.
pub fn on_qubit(op: &Matrix, qubit: usize, qubits: usize) -> Matrix {
    let id = identity(2);
    let mut out = vec![vec![c(1.0, 0.0)]];
    for q in 0..qubits {
        out = kron(&out, if q == qubit { op } else { &id });
    }
    out
}

/// Permutation matrix of CNOT(control → target), built from basis-state bit flips.
pub fn cnot(control: usize, target: usize, qubits: usize) -> Matrix {
    let n = 1 << qubits;
    let bit = |q: usize| 1usize << (qubits - 1 - q);
    let mut out = vec![vec![c(0.0, 0.0); n]; n];
    for k in 0..n {
        let dst = if k & bit(control) != 0 { k ^ bit(target) } else { k };
        out[dst][k] = c(1.0, 0.0);
    }
    out
}

/// Full circuit unitary.
pub fn circuit_unitary(params: &CircuitParams) -> Matrix {
    let q = params.qubits();
    let a = params.angles();
    let mut u = identity(1 << q);
    for layer in 0..params.depth() {
        for qubit in 0..q {
            let base = (layer * q + qubit) * 3;
            let rot = matmul(&matmul(&rz(a[base]), &ry(a[base + 1])), &rz(a[base + 2]));
            u = matmul(&on_qubit(&rot, qubit, q), &u);
        }
        for &(ctl, tgt) in &params.entanglers()[layer] {
            u = matmul(&cnot(ctl, tgt, q), &u);
        }
    }
    u
}

pub fn apply(m: &Matrix, v: &[Complex64]) -> Vec<Complex64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn expectation(m: &Matrix, v: &[Complex64]) -> Complex64 {
    v.iter().zip(apply(m, v)).map(|(a, b)| a.conj() * b).sum()
}

/// `⟨Y_j⟩` for every qubit by dense linear algebra.
pub fn dense_run(input: &[f64], params: &CircuitParams) -> Vec<f64> {
    let q = params.qubits();
    let norm = input.iter().map(|x| x * x).sum::<f64>().sqrt();
    let psi0: Vec<Complex64> = input.iter().map(|&x| c(x / norm, 0.0)).collect();
    let psi = apply(&circuit_unitary(params), &psi0);
    (0..q).map(|j| expectation(&on_qubit(&pauli_y(), j, q), &psi).re).collect()
}

pub fn random_input(len: usize, r: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
}

#[derive(Debug, Default, Clone, Copy)]
pub struct OracleErrors {
    pub shift_vs_adjoint: f64,
    pub fd_vs_adjoint: f64,
    pub dense_vs_sim: f64,
    pub norm_drift: f64,
    pub real_y: f64,
}

fn objective(input: &[f64], params: &CircuitParams, upstream: &[f64]) -> f64 {
    run_circuit(input, params)
        .unwrap()
        .iter()
        .zip(upstream)
        .map(|(y, u)| y * u)
        .sum()
}

/// Random circuits with `1 ≤ q ≤ 4` and `1 ≤ d ≤ 3`.
pub fn random_circuit_suite(count: usize, seed: u64) -> OracleErrors {
    let mut r = rng(seed);
    let mut e = OracleErrors::default();
    let h = 1e-5;
    for _ in 0..count {
        let q = r.random_range(1..=4usize);
        let d = r.random_range(1..=3usize);
        let params = CircuitParams::random(q, d, &mut r).unwrap();
        let input = random_input(1 << q, &mut r);
        let upstream = random_input(q, &mut r);

        let adj = grad_circuit(&input, &params, &upstream).unwrap();
        let shift = parameter_shift_grad(&input, &params, &upstream).unwrap();
        for (a, s) in adj.params.iter().zip(&shift) {
            e.shift_vs_adjoint = e.shift_vs_adjoint.max((a - s).abs());
        }
        for i in 0..params.angles().len() {
            let mut plus = params.angles().to_vec();
            let mut minus = plus.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (objective(&input, &params.with_angles(plus).unwrap(), &upstream)
                - objective(&input, &params.with_angles(minus).unwrap(), &upstream))
                / (2.0 * h);
            e.fd_vs_adjoint = e.fd_vs_adjoint.max((fd - adj.params[i]).abs());
        }
        for i in 0..input.len() {
            let mut plus = input.clone();
            let mut minus = input.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (objective(&plus, &params, &upstream) - objective(&minus, &params, &upstream)) / (2.0 * h);
            e.fd_vs_adjoint = e.fd_vs_adjoint.max((fd - adj.input[i]).abs());
        }

        let sim = run_circuit(&input, &params).unwrap();
        for (a, b) in sim.iter().zip(dense_run(&input, &params)) {
            e.dense_vs_sim = e.dense_vs_sim.max((a - b).abs());
        }
        let state = final_state(&input, &params).unwrap();
        e.norm_drift = e.norm_drift.max((state.norm() - 1.0).abs());

        // Ry and CNOT only keep every amplitude real.
        let real_angles: Vec<f64> = params
            .angles()
            .chunks(3)
            .flat_map(|a| [0.0, a[1], 0.0])
            .collect();
        for y in run_circuit(&input, &params.with_angles(real_angles).unwrap()).unwrap() {
            e.real_y = e.real_y.max(y.abs());
        }
    }
    e.norm_drift = e.norm_drift.max(long_sequence_drift(seed ^ 0x55, 1000));
    e
}

/// Norm drift after `gates` random gates on a random 4-qubit state.
pub fn long_sequence_drift(seed: u64, gates: usize) -> f64 {
    let mut r = rng(seed);
    let q = 4;
    let v = random_input(1 << q, &mut r);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut s = Statevector::from_amplitudes(v.iter().map(|&x| c(x / norm, 0.0)).collect()).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..gates {
        let a = r.random_range(0..q);
        match r.random_range(0..3) {
            0 => s.apply_rz(a, r.random_range(-7.0..7.0)).unwrap(),
            1 => s.apply_ry(a, r.random_range(-7.0..7.0)).unwrap(),
            _ => {
                let b = (a + r.random_range(1..q)) % q;
                s.apply_cnot(a, b).unwrap()
            }
        }
        worst = worst.max((s.norm() - 1.0).abs());
    }
    worst
}

/// Worst deviation of a one-qubit `(θ₁, θ₂, 0)` circuit from `sin θ₁ sin θ₂` on an `n × n` grid.
pub fn closed_form_grid(n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let t1 = -std::f64::consts::PI + std::f64::consts::TAU * i as f64 / (n - 1) as f64;
            let t2 = -std::f64::consts::PI + std::f64::consts::TAU * j as f64 / (n - 1) as f64;
            let p = CircuitParams::new(1, 1, vec![t1, t2, 0.0]).unwrap();
            let y = run_circuit(&[1.0, 0.0], &p).unwrap()[0];
            worst = worst.max((y - t1.sin() * t2.sin()).abs());
        }
    }
    worst
}
