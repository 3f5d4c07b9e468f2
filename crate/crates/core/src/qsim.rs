//! Exact statevector simulation of the quantum processing layer.
//!
//! A circuit amplitude-embeds a real vector of length `2^q`, applies `d`
//! layers of `Rot = Rz(θ₁)·Ry(θ₂)·Rz(θ₃)` on every qubit followed by that
//! layer's CNOT pattern, and reads out `⟨Y_j⟩` on every qubit.
//!
//! Qubit 0 is the most significant bit of the basis index, so `|10⟩` has
//! qubit 0 set. All arithmetic is `f64` complex.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Inputs with an L2 norm at or below this are replaced by `|0…0⟩`.
pub const NORM_FLOOR: f64 = 1e-12;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Clone, Debug, PartialEq)]
pub struct Statevector {
    qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// `|0…0⟩` on `qubits` qubits.
    pub fn zero_state(qubits: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Statevector { qubits, amps }
    }

    /// Wraps raw amplitudes; the length must be a power of two. No normalisation.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let n = amps.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "statevector length {n} is not a power of two"
            )));
        }
        Ok(Statevector {
            qubits: n.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.qubits - 1 - qubit)
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.qubits {
            return Err(Error::InvalidArgument(format!(
                "qubit {qubit} out of range for a {}-qubit state",
                self.qubits
            )));
        }
        Ok(())
    }

    /// Applies the 2×2 matrix `[[m00, m01], [m10, m11]]` to `qubit`.
    fn apply_single(&mut self, qubit: usize, m: [Complex64; 4]) {
        let mask = self.mask(qubit);
        for k in 0..self.amps.len() {
            if k & mask == 0 {
                let (a, b) = (self.amps[k], self.amps[k | mask]);
                self.amps[k] = m[0] * a + m[1] * b;
                self.amps[k | mask] = m[2] * a + m[3] * b;
            }
        }
    }

    fn rz_unchecked(&mut self, qubit: usize, theta: f64) {
        let phase = Complex64::from_polar(1.0, -theta / 2.0);
        let mask = self.mask(qubit);
        for (k, a) in self.amps.iter_mut().enumerate() {
            *a *= if k & mask == 0 { phase } else { phase.conj() };
        }
    }

    fn ry_unchecked(&mut self, qubit: usize, theta: f64) {
        let (s, c) = (theta / 2.0).sin_cos();
        let (c, s) = (Complex64::new(c, 0.0), Complex64::new(s, 0.0));
        self.apply_single(qubit, [c, -s, s, c]);
    }

    pub fn apply_rz(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        self.rz_unchecked(qubit, theta);
        Ok(())
    }

    pub fn apply_ry(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        self.ry_unchecked(qubit, theta);
        Ok(())
    }

    /// `Rz(θ₁)·Ry(θ₂)·Rz(θ₃)`: `Rz(θ₃)` acts first.
    pub fn apply_rot(&mut self, qubit: usize, theta1: f64, theta2: f64, theta3: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        self.rz_unchecked(qubit, theta3);
        self.ry_unchecked(qubit, theta2);
        self.rz_unchecked(qubit, theta1);
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::InvalidArgument(format!(
                "CNOT control and target are both qubit {control}"
            )));
        }
        self.cnot_unchecked(control, target);
        Ok(())
    }

    fn cnot_unchecked(&mut self, control: usize, target: usize) {
        let (cm, tm) = (self.mask(control), self.mask(target));
        for k in 0..self.amps.len() {
            if k & cm != 0 && k & tm == 0 {
                self.amps.swap(k, k | tm);
            }
        }
    }

    /// `⟨ψ|Y_qubit|ψ⟩`.
    pub fn expectation_y(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = self.mask(qubit);
        let mut acc = 0.0;
        for k in 0..self.amps.len() {
            if k & mask == 0 {
                acc += 2.0 * (self.amps[k].conj() * self.amps[k | mask]).im;
            }
        }
        Ok(acc.clamp(-1.0, 1.0))
    }

    /// `Σ_j weights_j · Y_j |ψ⟩` (not normalised).
    fn weighted_y(&self, weights: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (j, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let mask = self.mask(j);
            for k in 0..self.amps.len() {
                if k & mask == 0 {
                    let (a, b) = (self.amps[k], self.amps[k | mask]);
                    out[k] += -I * b * w;
                    out[k | mask] += I * a * w;
                }
            }
        }
        out
    }
}

/// Result of amplitude embedding.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub state: Statevector,
    /// Input norm before normalisation.
    pub norm: f64,
    /// Set when the input norm fell below [`NORM_FLOOR`] and `|0…0⟩` was used.
    pub degenerate: bool,
}

/// Embeds `v / ‖v‖` as real amplitudes. The length must be a power of two.
pub fn amplitude_embed(v: &[f64]) -> Result<Embedding> {
    let n = v.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "amplitude embedding needs a power-of-two length, got {n}"
        )));
    }
    let qubits = n.trailing_zeros() as usize;
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::InvalidArgument("non-finite amplitude embedding input".into()));
    }
    if norm <= NORM_FLOOR {
        return Ok(Embedding {
            state: Statevector::zero_state(qubits),
            norm,
            degenerate: true,
        });
    }
    let amps = v.iter().map(|&x| Complex64::new(x / norm, 0.0)).collect();
    Ok(Embedding {
        state: Statevector { qubits, amps },
        norm,
        degenerate: false,
    })
}

/// Shape of the parallel-circuit layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantumLayerConfig {
    pub qubits: usize,
    pub depth: usize,
    pub circuits: usize,
}

impl Default for QuantumLayerConfig {
    fn default() -> Self {
        QuantumLayerConfig {
            qubits: 5,
            depth: 2,
            circuits: 5,
        }
    }
}

impl QuantumLayerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.qubits == 0 || self.depth == 0 || self.circuits == 0 {
            return Err(Error::Config(
                "qubits, depth and circuits must all be at least 1".into(),
            ));
        }
        if self.qubits > 16 {
            return Err(Error::Config(format!(
                "{} qubits per circuit is beyond what this simulator supports",
                self.qubits
            )));
        }
        Ok(())
    }

    /// `c · 2^q`
    pub fn input_width(&self) -> usize {
        self.circuits << self.qubits
    }

    /// `c · q`
    pub fn output_width(&self) -> usize {
        self.circuits * self.qubits
    }
}

/// Ring entangler: `j → (j+1) mod q`. Empty for a single qubit.
pub fn ring_entanglers(qubits: usize) -> Vec<(usize, usize)> {
    if qubits < 2 {
        return Vec::new();
    }
    (0..qubits).map(|j| (j, (j + 1) % qubits)).collect()
}

/// Rotation angles `[depth, qubits, 3]` plus the CNOT pattern of each layer.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitParams {
    qubits: usize,
    depth: usize,
    angles: Vec<f64>,
    entanglers: Vec<Vec<(usize, usize)>>,
}

impl CircuitParams {
    /// Ring-entangled circuit with the given angles, laid out `[layer][qubit][θ₁,θ₂,θ₃]`.
    pub fn new(qubits: usize, depth: usize, angles: Vec<f64>) -> Result<Self> {
        let ring = ring_entanglers(qubits);
        Self::with_entanglers(qubits, depth, angles, vec![ring; depth])
    }

    pub fn with_entanglers(
        qubits: usize,
        depth: usize,
        angles: Vec<f64>,
        entanglers: Vec<Vec<(usize, usize)>>,
    ) -> Result<Self> {
        if qubits == 0 || depth == 0 {
            return Err(Error::Config("circuit needs at least one qubit and one layer".into()));
        }
        if angles.len() != depth * qubits * 3 {
            return Err(Error::shape(
                "circuit params",
                format!(
                    "expected {depth}x{qubits}x3 = {} angles, got {}",
                    depth * qubits * 3,
                    angles.len()
                ),
            ));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("circuit angles must be finite".into()));
        }
        if entanglers.len() != depth {
            return Err(Error::Config(format!(
                "entangler pattern has {} layers, circuit has {depth}",
                entanglers.len()
            )));
        }
        for &(c, t) in entanglers.iter().flatten() {
            if c == t || c >= qubits || t >= qubits {
                return Err(Error::Config(format!(
                    "invalid CNOT ({c}, {t}) for {qubits} qubits"
                )));
            }
        }
        Ok(CircuitParams {
            qubits,
            depth,
            angles,
            entanglers,
        })
    }

    /// Angles drawn uniformly from `[0, 2π)`.
    pub fn random<R: Rng + ?Sized>(qubits: usize, depth: usize, rng: &mut R) -> Result<Self> {
        let angles = (0..depth * qubits * 3)
            .map(|_| rng.random_range(0.0..TAU))
            .collect();
        Self::new(qubits, depth, angles)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn entanglers(&self) -> &[Vec<(usize, usize)>] {
        &self.entanglers
    }

    /// Copy with replaced angles (same shape and pattern).
    pub fn with_angles(&self, angles: Vec<f64>) -> Result<Self> {
        Self::with_entanglers(self.qubits, self.depth, angles, self.entanglers.clone())
    }

    fn angle_index(&self, layer: usize, qubit: usize, which: usize) -> usize {
        (layer * self.qubits + qubit) * 3 + which
    }

    fn gates(&self) -> Vec<Gate> {
        let mut gates = Vec::with_capacity(self.depth * (self.qubits * 3 + self.qubits));
        for layer in 0..self.depth {
            for q in 0..self.qubits {
                gates.push(Gate::Rz(q, self.angle_index(layer, q, 2)));
                gates.push(Gate::Ry(q, self.angle_index(layer, q, 1)));
                gates.push(Gate::Rz(q, self.angle_index(layer, q, 0)));
            }
            for &(c, t) in &self.entanglers[layer] {
                gates.push(Gate::Cnot(c, t));
            }
        }
        gates
    }
}

/// Gate with the index of its angle in [`CircuitParams::angles`].
#[derive(Clone, Copy, Debug)]
enum Gate {
    Rz(usize, usize),
    Ry(usize, usize),
    Cnot(usize, usize),
}

fn check_input(input: &[f64], params: &CircuitParams) -> Result<()> {
    if input.len() != 1 << params.qubits {
        return Err(Error::shape(
            "run_circuit",
            format!(
                "input length {} does not match 2^{} amplitudes",
                input.len(),
                params.qubits
            ),
        ));
    }
    Ok(())
}

fn evolve(state: &mut Statevector, gates: &[Gate], angles: &[f64]) {
    for gate in gates {
        match *gate {
            Gate::Rz(q, a) => state.rz_unchecked(q, angles[a]),
            Gate::Ry(q, a) => state.ry_unchecked(q, angles[a]),
            Gate::Cnot(c, t) => state.cnot_unchecked(c, t),
        }
    }
}

/// Final state `U(θ)|embed(input)⟩`.
pub fn final_state(input: &[f64], params: &CircuitParams) -> Result<Statevector> {
    check_input(input, params)?;
    let mut state = amplitude_embed(input)?.state;
    evolve(&mut state, &params.gates(), &params.angles);
    Ok(state)
}

/// `[⟨Y₀⟩, …, ⟨Y_{q−1}⟩]` after embedding `input` and applying the circuit.
pub fn run_circuit(input: &[f64], params: &CircuitParams) -> Result<Vec<f64>> {
    let state = final_state(input, params)?;
    (0..params.qubits).map(|j| state.expectation_y(j)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircuitGradient {
    /// Same layout as [`CircuitParams::angles`].
    pub params: Vec<f64>,
    /// Gradient w.r.t. the un-normalised input vector.
    pub input: Vec<f64>,
}

/// Exact gradient of `Σ_j upstream_j ⟨Y_j⟩` by reverse-mode (adjoint) sweep.
pub fn grad_circuit(input: &[f64], params: &CircuitParams, upstream: &[f64]) -> Result<CircuitGradient> {
    check_input(input, params)?;
    if upstream.len() != params.qubits {
        return Err(Error::shape(
            "grad_circuit",
            format!("upstream length {} != {} qubits", upstream.len(), params.qubits),
        ));
    }
    let embedding = amplitude_embed(input)?;
    let gates = params.gates();
    let angles = &params.angles;
    let mut psi = embedding.state;
    evolve(&mut psi, &gates, angles);

    let mut lambda = Statevector {
        qubits: psi.qubits,
        amps: psi.weighted_y(upstream),
    };
    let mut grad_params = vec![0.0; angles.len()];
    for gate in gates.iter().rev() {
        match *gate {
            Gate::Rz(q, a) => {
                // 2·Re⟨λ|(−i Z/2)|ψ⟩ = Im Σ conj(λ_k) z_k ψ_k
                let mask = psi.mask(q);
                let mut acc = 0.0;
                for (k, (l, p)) in lambda.amps.iter().zip(&psi.amps).enumerate() {
                    let term = (l.conj() * p).im;
                    acc += if k & mask == 0 { term } else { -term };
                }
                grad_params[a] += acc;
                psi.rz_unchecked(q, -angles[a]);
                lambda.rz_unchecked(q, -angles[a]);
            }
            Gate::Ry(q, a) => {
                // 2·Re⟨λ|(−i Y/2)|ψ⟩ with −iY = [[0, −1], [1, 0]]
                let mask = psi.mask(q);
                let mut acc = 0.0;
                for k in 0..psi.amps.len() {
                    if k & mask == 0 {
                        let (p0, p1) = (psi.amps[k], psi.amps[k | mask]);
                        let (l0, l1) = (lambda.amps[k], lambda.amps[k | mask]);
                        acc += (l1.conj() * p0 - l0.conj() * p1).re;
                    }
                }
                grad_params[a] += acc;
                psi.ry_unchecked(q, -angles[a]);
                lambda.ry_unchecked(q, -angles[a]);
            }
            Gate::Cnot(c, t) => {
                psi.cnot_unchecked(c, t);
                lambda.cnot_unchecked(c, t);
            }
        }
    }

    let grad_input = if embedding.degenerate {
        vec![0.0; input.len()]
    } else {
        // ∂L/∂ψ₀ = 2·Re(λ₀) for real ψ₀, then (I − v̂v̂ᵀ)/‖v‖.
        let norm = embedding.norm;
        let g: Vec<f64> = lambda.amps.iter().map(|l| 2.0 * l.re).collect();
        let proj: f64 = g.iter().zip(input).map(|(gi, vi)| gi * vi / norm).sum();
        g.iter()
            .zip(input)
            .map(|(gi, vi)| (gi - proj * vi / norm) / norm)
            .collect()
    };
    Ok(CircuitGradient {
        params: grad_params,
        input: grad_input,
    })
}

/// Parameter gradient by the two-term shift rule `(f(θ+π/2) − f(θ−π/2)) / 2`.
pub fn parameter_shift_grad(input: &[f64], params: &CircuitParams, upstream: &[f64]) -> Result<Vec<f64>> {
    check_input(input, params)?;
    if upstream.len() != params.qubits {
        return Err(Error::shape(
            "parameter_shift_grad",
            format!("upstream length {} != {} qubits", upstream.len(), params.qubits),
        ));
    }
    let objective = |angles: &[f64]| -> Result<f64> {
        let mut state = amplitude_embed(input)?.state;
        evolve(&mut state, &params.gates(), angles);
        let mut acc = 0.0;
        for (j, &u) in upstream.iter().enumerate() {
            acc += u * state.expectation_y(j)?;
        }
        Ok(acc)
    };
    let mut shifted = params.angles.clone();
    let mut grad = Vec::with_capacity(shifted.len());
    for k in 0..shifted.len() {
        let theta = shifted[k];
        shifted[k] = theta + FRAC_PI_2;
        let plus = objective(&shifted)?;
        shifted[k] = theta - FRAC_PI_2;
        let minus = objective(&shifted)?;
        shifted[k] = theta;
        grad.push((plus - minus) / 2.0);
    }
    Ok(grad)
}
