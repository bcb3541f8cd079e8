"""Statevector simulation of the image-generator circuit, with exact gradients.

The register holds D data qubits plus one ancilla. Conventions, fixed here and
relied on everywhere else:

* Little-endian basis indexing: data qubit k is bit k of a basis-state index.
* The ancilla is the highest-order bit (qubit D). Basis states with ancilla 0
  therefore occupy the first half of the amplitude vector, and the surviving
  index after post-selection IS the pixel index.

The forward pass is input R_y rotations (one per data qubit, angle z_k),
then ``layers`` repetitions of single-qubit rotations on every qubit followed
by a CNOT entangler, then projective post-selection of ancilla = 0. The
conditional probabilities over the 2^D data outcomes form one whole image per
shot batch; no patching or multi-circuit stitching is involved.

Gradients come from an adjoint-style reverse pass: walk the gate list
backwards, un-applying each unitary, and accumulate 2*Re<bra|dU|ket> per
parameterized gate. Cost is O(#gates) state applications and it is exact to
machine precision, unlike parameter-shift sampling.

All simulator state is complex128; batches are vectorized over axis 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Tensor, custom_op

__all__ = [
    "ACCEPTANCE_FLOOR",
    "CircuitParams",
    "ComplexState",
    "ConditionalDistribution",
    "CircuitTape",
    "QuantumConfigError",
    "DegeneratePostSelectionError",
    "linear_entangler_map",
    "prepare_state",
    "apply_circuit",
    "conditional_probs",
    "evaluate_circuit",
    "circuit_backward",
    "circuit_probs",
]

# Post-selection mass below this is treated as degenerate rather than divided by.
ACCEPTANCE_FLOOR = 1e-6


class QuantumConfigError(ValueError):
    """Inconsistent circuit structure, shapes, or non-finite angles."""


class DegeneratePostSelectionError(RuntimeError):
    """Ancilla-0 mass fell below the acceptance floor; renormalizing would explode."""

    def __init__(self, acceptance: np.ndarray, floor: float, indices: np.ndarray):
        self.acceptance = np.atleast_1d(acceptance)
        self.floor = floor
        self.indices = np.atleast_1d(indices)
        shown = ", ".join(
            f"[{i}]={self.acceptance[i]:.3e}" for i in self.indices[:8]
        )
        super().__init__(
            f"post-selection acceptance below floor {floor:g} for "
            f"{self.indices.size} sample(s): {shown}"
        )


def linear_entangler_map(num_data_qubits: int) -> tuple[tuple[int, int], ...]:
    """Chain of CNOTs (q -> q+1); the last data qubit targets the ancilla."""
    return tuple((q, q + 1) for q in range(num_data_qubits))


@dataclass
class CircuitParams:
    """Structure and trainable angles of the layered entangling circuit.

    ``angles`` has shape (layers, num_data_qubits + 1, rotations_per_qubit);
    rotation r=0 is R_y, r=1 (when present) is R_z. Every qubit, ancilla
    included, is rotated in every layer. Angles are unconstrained reals.
    """

    num_data_qubits: int
    layers: int
    angles: np.ndarray
    rotations_per_qubit: int = 2
    entangler_map: tuple[tuple[int, int], ...] = field(default=None)

    def __post_init__(self):
        if self.num_data_qubits < 1:
            raise QuantumConfigError("need at least one data qubit")
        if self.layers < 0:
            raise QuantumConfigError("layers must be >= 0")
        if self.rotations_per_qubit not in (1, 2):
            raise QuantumConfigError("rotations_per_qubit must be 1 (R_y) or 2 (R_y, R_z)")
        if self.entangler_map is None:
            self.entangler_map = linear_entangler_map(self.num_data_qubits)
        self.entangler_map = tuple((int(c), int(t)) for c, t in self.entangler_map)
        n = self.num_qubits
        for c, t in self.entangler_map:
            if not (0 <= c < n and 0 <= t < n) or c == t:
                raise QuantumConfigError(f"bad entangler pair ({c}, {t}) for {n} qubits")
        self.angles = np.asarray(self.angles, dtype=np.float64)
        want = (self.layers, n, self.rotations_per_qubit)
        if self.angles.shape != want:
            raise QuantumConfigError(f"angles shape {self.angles.shape} != {want}")
        if not np.all(np.isfinite(self.angles)):
            raise QuantumConfigError("circuit angles must be finite")

    @property
    def num_qubits(self) -> int:
        return self.num_data_qubits + 1

    @property
    def num_parameters(self) -> int:
        return self.angles.size

    @classmethod
    def random(cls, num_data_qubits: int, layers: int, rng: np.random.Generator,
               rotations_per_qubit: int = 2,
               entangler_map=None) -> "CircuitParams":
        n = num_data_qubits + 1
        angles = rng.uniform(-np.pi, np.pi, size=(layers, n, rotations_per_qubit))
        return cls(num_data_qubits, layers, angles, rotations_per_qubit, entangler_map)


@dataclass
class ComplexState:
    """Statevector over D data qubits + 1 ancilla; optionally batched on axis 0."""

    amplitudes: np.ndarray
    num_data_qubits: int

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        dim = 2 ** self.num_qubits
        if self.amplitudes.shape[-1] != dim or self.amplitudes.ndim not in (1, 2):
            raise QuantumConfigError(
                f"amplitudes shape {self.amplitudes.shape} does not match "
                f"{self.num_qubits} qubits (dim {dim})"
            )

    @property
    def num_qubits(self) -> int:
        return self.num_data_qubits + 1

    @property
    def ancilla(self) -> int:
        return self.num_data_qubits

    @property
    def batched(self) -> bool:
        return self.amplitudes.ndim == 2


@dataclass
class ConditionalDistribution:
    """Post-selected probabilities over the 2^D data outcomes.

    ``probs`` sums to 1 along its last axis; ``acceptance`` is the ancilla-0
    probability mass before renormalization (the post-selection yield).
    """

    probs: np.ndarray
    acceptance: np.ndarray | float


@dataclass
class CircuitTape:
    """Everything the reverse pass needs: inputs plus the forward's endpoints."""

    z: np.ndarray                  # (B, D)
    params: CircuitParams
    state: ComplexState            # final state, batched
    dist: ConditionalDistribution  # batched
    batched_input: bool


# ----------------------------------------------------------------------
# gate kernels (batched over axis 0)


# Amplitudes are little-endian: basis index i has qubit k's value at bit k.
# A (B, 2^n) batch therefore views as (B, hi, 2, lo) around qubit q with
# lo = 2^q trailing states and hi = 2^(n-1-q) leading ones; gates act on the
# middle axis through views, which beats general matmul at these sizes.


def _apply_shared(amps: np.ndarray, mat: np.ndarray, qubit: int, n: int) -> np.ndarray:
    b = amps.shape[0]
    hi, lo = 1 << (n - 1 - qubit), 1 << qubit
    t = amps.reshape(b, hi, 2, lo)
    a0, a1 = t[:, :, 0, :], t[:, :, 1, :]
    out = np.empty_like(t)
    if mat[0, 1] == 0.0 and mat[1, 0] == 0.0:  # diagonal (phase) gates
        out[:, :, 0, :] = mat[0, 0] * a0
        out[:, :, 1, :] = mat[1, 1] * a1
    else:
        out[:, :, 0, :] = mat[0, 0] * a0 + mat[0, 1] * a1
        out[:, :, 1, :] = mat[1, 0] * a0 + mat[1, 1] * a1
    return out.reshape(b, -1)


def _apply_per_sample(amps: np.ndarray, mats: np.ndarray, qubit: int, n: int) -> np.ndarray:
    b = amps.shape[0]
    hi, lo = 1 << (n - 1 - qubit), 1 << qubit
    t = amps.reshape(b, hi, 2, lo)
    a0, a1 = t[:, :, 0, :], t[:, :, 1, :]
    m = mats.reshape(b, 2, 2, 1, 1)  # one 2x2 per sample, broadcast over hi/lo
    out = np.empty_like(t)
    out[:, :, 0, :] = m[:, 0, 0] * a0 + m[:, 0, 1] * a1
    out[:, :, 1, :] = m[:, 1, 0] * a0 + m[:, 1, 1] * a1
    return out.reshape(b, -1)


def _apply_cnot(amps: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    b = amps.shape[0]
    p, q = (control, target) if control > target else (target, control)
    hi, mid, lo = 1 << (n - 1 - p), 1 << (p - 1 - q), 1 << q
    t = amps.reshape(b, hi, 2, mid, 2, lo)
    out = t.copy()
    if control > target:  # control on the higher bit: swap target within c=1
        out[:, :, 1, :, 0, :] = t[:, :, 1, :, 1, :]
        out[:, :, 1, :, 1, :] = t[:, :, 1, :, 0, :]
    else:
        out[:, :, 0, :, 1, :] = t[:, :, 1, :, 1, :]
        out[:, :, 1, :, 1, :] = t[:, :, 0, :, 1, :]
    return out.reshape(b, -1)


def _ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def _ry_deriv(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return 0.5 * np.array([[-s, -c], [c, -s]], dtype=np.complex128)


def _rz(theta: float) -> np.ndarray:
    e = np.exp(-0.5j * theta)
    return np.array([[e, 0.0], [0.0, np.conj(e)]], dtype=np.complex128)


def _rz_deriv(theta: float) -> np.ndarray:
    e = np.exp(-0.5j * theta)
    return np.array([[-0.5j * e, 0.0], [0.0, 0.5j * np.conj(e)]], dtype=np.complex128)


def _ry_batch(thetas: np.ndarray, deriv: bool = False) -> np.ndarray:
    c, s = np.cos(thetas / 2.0), np.sin(thetas / 2.0)
    m = np.empty((thetas.shape[0], 2, 2), dtype=np.complex128)
    if deriv:
        m[:, 0, 0], m[:, 0, 1] = -0.5 * s, -0.5 * c
        m[:, 1, 0], m[:, 1, 1] = 0.5 * c, -0.5 * s
    else:
        m[:, 0, 0], m[:, 0, 1] = c, -s
        m[:, 1, 0], m[:, 1, 1] = s, c
    return m


_ROT = {"ry": (_ry, _ry_deriv), "rz": (_rz, _rz_deriv)}


def _circuit_gates(params: CircuitParams) -> list[tuple]:
    """Flat gate list for the trainable block: ('ry'|'rz', qubit, angle_index)
    and ('cnot', (control, target), None)."""
    gates = []
    kinds = ("ry", "rz")[: params.rotations_per_qubit]
    for layer in range(params.layers):
        for q in range(params.num_qubits):
            for r, kind in enumerate(kinds):
                gates.append((kind, q, (layer, q, r)))
        for pair in params.entangler_map:
            gates.append(("cnot", pair, None))
    return gates


# ----------------------------------------------------------------------
# forward


def prepare_state(z, num_data_qubits: int | None = None) -> ComplexState:
    """|0...0> with one R_y(z_k) on each data qubit; ancilla left at |0>.

    ``z`` is (D,) or (B, D). The output keeps the input's batchedness.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim not in (1, 2):
        raise QuantumConfigError(f"z must be (D,) or (B, D), got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise QuantumConfigError("input angles must be finite")
    batched = z.ndim == 2
    zb = np.atleast_2d(z)
    d = zb.shape[1]
    if num_data_qubits is not None and num_data_qubits != d:
        raise QuantumConfigError(
            f"z has {d} angles but the register has {num_data_qubits} data qubits"
        )
    n = d + 1
    amps = np.zeros((zb.shape[0], 2 ** n), dtype=np.complex128)
    amps[:, 0] = 1.0
    for k in range(d):
        amps = _apply_per_sample(amps, _ry_batch(zb[:, k]), k, n)
    return ComplexState(amps if batched else amps[0], d)


def apply_circuit(state: ComplexState, params: CircuitParams) -> ComplexState:
    """Run the layered rotation + entangler block."""
    if state.num_data_qubits != params.num_data_qubits:
        raise QuantumConfigError(
            f"state has {state.num_data_qubits} data qubits, "
            f"circuit expects {params.num_data_qubits}"
        )
    n = params.num_qubits
    amps = np.atleast_2d(state.amplitudes)
    for kind, where, idx in _circuit_gates(params):
        if kind == "cnot":
            amps = _apply_cnot(amps, where[0], where[1], n)
        else:
            amps = _apply_shared(amps, _ROT[kind][0](params.angles[idx]), where, n)
    return ComplexState(amps if state.batched else amps[0], state.num_data_qubits)


def conditional_probs(state: ComplexState,
                      acceptance_floor: float = ACCEPTANCE_FLOOR) -> ConditionalDistribution:
    """Post-select ancilla = 0 and renormalize over the 2^D data outcomes."""
    amps = np.atleast_2d(state.amplitudes)
    half = 2 ** state.num_data_qubits
    joint = np.abs(amps[:, :half]) ** 2
    acceptance = joint.sum(axis=1)
    low = np.nonzero(acceptance < acceptance_floor)[0]
    if low.size:
        raise DegeneratePostSelectionError(acceptance, acceptance_floor, low)
    probs = joint / acceptance[:, None]
    if not state.batched:
        return ConditionalDistribution(probs[0], float(acceptance[0]))
    return ConditionalDistribution(probs, acceptance)


def evaluate_circuit(z, params: CircuitParams,
                     acceptance_floor: float = ACCEPTANCE_FLOOR,
                     ) -> tuple[ConditionalDistribution, CircuitTape]:
    """Full forward pass; the tape feeds ``circuit_backward``."""
    z = np.asarray(z, dtype=np.float64)
    batched = z.ndim == 2
    state = prepare_state(np.atleast_2d(z), params.num_data_qubits)
    state = apply_circuit(state, params)
    dist = conditional_probs(state, acceptance_floor)
    tape = CircuitTape(np.atleast_2d(z), params, state, dist, batched)
    if not batched:
        dist = ConditionalDistribution(dist.probs[0], float(dist.acceptance[0]))
    return dist, tape


# ----------------------------------------------------------------------
# reverse pass


def circuit_backward(tape: CircuitTape, dprobs) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of sum(dprobs * probs) w.r.t. z and the circuit angles.

    ``dprobs`` is the upstream gradient with the same shape as the forward's
    probs. Returns (dz, dangles): dz matches the z that was passed in,
    dangles matches params.angles (summed over the batch).
    """
    params = tape.params
    n = params.num_qubits
    half = 2 ** params.num_data_qubits

    probs = np.atleast_2d(tape.dist.probs)
    acceptance = np.atleast_1d(tape.dist.acceptance)
    g = np.atleast_2d(np.asarray(dprobs, dtype=np.float64))
    if g.shape != probs.shape:
        raise QuantumConfigError(f"dprobs shape {g.shape} != probs shape {probs.shape}")

    psi = np.atleast_2d(tape.state.amplitudes)
    # dL/d(conj(psi_n)) for the post-selected, renormalized probabilities:
    # psi_n * (g_n - sum_i g_i p_i) / acceptance on the ancilla-0 half, else 0.
    s = np.sum(g * probs, axis=1)
    bra = np.zeros_like(psi)
    bra[:, :half] = psi[:, :half] * (g - s[:, None]) / acceptance[:, None]

    ket = psi.copy()
    dangles = np.zeros_like(params.angles)
    for kind, where, idx in reversed(_circuit_gates(params)):
        if kind == "cnot":
            ket = _apply_cnot(ket, where[0], where[1], n)
            bra = _apply_cnot(bra, where[0], where[1], n)
            continue
        mat, dmat = _ROT[kind]
        theta = params.angles[idx]
        adjoint = mat(-theta)
        ket = _apply_shared(ket, adjoint, where, n)
        dpsi = _apply_shared(ket, dmat(theta), where, n)
        dangles[idx] = 2.0 * np.sum(np.conj(bra) * dpsi).real
        bra = _apply_shared(bra, adjoint, where, n)

    dz = np.zeros_like(tape.z)
    for k in reversed(range(params.num_data_qubits)):
        thetas = tape.z[:, k]
        ket = _apply_per_sample(ket, _ry_batch(-thetas), k, n)
        dpsi = _apply_per_sample(ket, _ry_batch(thetas, deriv=True), k, n)
        dz[:, k] = 2.0 * np.sum(np.conj(bra) * dpsi, axis=1).real
        bra = _apply_per_sample(bra, _ry_batch(-thetas), k, n)

    return (dz if tape.batched_input else dz[0]), dangles


# ----------------------------------------------------------------------
# autodiff bridge


def circuit_probs(z, angles: Tensor, circuit: CircuitParams,
                  acceptance_floor: float = ACCEPTANCE_FLOOR,
                  ) -> tuple[Tensor, np.ndarray]:
    """Differentiable conditional distribution as an engine tensor.

    ``z`` is a Tensor or array (B, D); ``angles`` is the trainable tensor with
    ``circuit.angles``'s shape (the values in ``circuit`` itself are ignored).
    Returns (probs (B, 2^D), acceptance (B,)). First-order only: the node's
    backward emits constants, so nothing may differentiate through it twice
    (the critic's gradient penalty never reaches the generator graph).
    """
    z_t = z if isinstance(z, Tensor) else Tensor(z)
    if angles.shape != circuit.angles.shape:
        raise QuantumConfigError(
            f"angles tensor shape {angles.shape} != circuit shape {circuit.angles.shape}"
        )
    params = replace(circuit, angles=angles.data)
    dist, tape = evaluate_circuit(z_t.data, params, acceptance_floor)

    def backward(upstream):
        dz, dangles = circuit_backward(tape, upstream.data)
        return [(z_t, Tensor(dz)), (angles, Tensor(dangles))]

    probs = custom_op(dist.probs, (z_t, angles), backward)
    return probs, np.atleast_1d(dist.acceptance)
