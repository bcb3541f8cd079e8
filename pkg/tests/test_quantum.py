"""Simulator checks against an independent dense matrix-chain oracle."""

import numpy as np
import numpy.testing as npt
import pytest

from quigan.autodiff import Tensor
from quigan.quantum import (
    CircuitParams,
    ComplexState,
    DegeneratePostSelectionError,
    QuantumConfigError,
    apply_circuit,
    circuit_backward,
    circuit_probs,
    conditional_probs,
    evaluate_circuit,
    linear_entangler_map,
    prepare_state,
)

# ----------------------------------------------------------------------
# oracle: build every gate as a dense 2^n x 2^n matrix and multiply through


def kron_at(n, qubit, mat):
    # little-endian: qubit k is bit k, kron puts its first factor on high bits
    return np.kron(np.eye(2 ** (n - 1 - qubit)), np.kron(mat, np.eye(2 ** qubit)))


def cnot_full(n, control, target):
    p0 = np.diag([1.0, 0.0])
    p1 = np.diag([0.0, 1.0])
    x = np.array([[0.0, 1.0], [1.0, 0.0]])
    return kron_at(n, control, p0) + kron_at(n, control, p1) @ kron_at(n, target, x)


def ry_mat(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_mat(t):
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def oracle_state(z, params):
    n = len(z) + 1
    psi = np.zeros(2 ** n, dtype=complex)
    psi[0] = 1.0
    for k, a in enumerate(z):
        psi = kron_at(n, k, ry_mat(a)) @ psi
    kinds = ("ry", "rz")[: params.rotations_per_qubit]
    for layer in range(params.layers):
        for q in range(n):
            for r, kind in enumerate(kinds):
                mat = ry_mat if kind == "ry" else rz_mat
                psi = kron_at(n, q, mat(params.angles[layer, q, r])) @ psi
        for c, t in params.entangler_map:
            psi = cnot_full(n, c, t) @ psi
    return psi


def oracle_probs(z, params):
    psi = oracle_state(z, params)
    joint = np.abs(psi[: 2 ** len(z)]) ** 2
    acceptance = joint.sum()
    return joint / acceptance, acceptance


def run_probs(z, params):
    dist, _ = evaluate_circuit(z, params)
    return dist.probs, dist.acceptance


# ----------------------------------------------------------------------
# forward


def test_single_qubit_toy_example():
    # One data qubit, no trainable layers: R_y(pi/2) splits mass evenly.
    params = CircuitParams(1, 0, np.zeros((0, 2, 2)))
    dist, _ = evaluate_circuit(np.array([np.pi / 2]), params)
    npt.assert_allclose(dist.probs, [0.5, 0.5], atol=1e-15)
    npt.assert_allclose(dist.acceptance, 1.0, atol=1e-15)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("rot", [1, 2])
def test_matches_dense_oracle(d, rot):
    rng = np.random.default_rng(100 * d + rot)
    for _ in range(10):
        params = CircuitParams.random(d, layers=3, rng=rng, rotations_per_qubit=rot)
        z = rng.uniform(-np.pi, np.pi, size=d)
        probs, acc = run_probs(z, params)
        want_p, want_a = oracle_probs(z, params)
        npt.assert_allclose(probs, want_p, atol=1e-12)
        npt.assert_allclose(acc, want_a, atol=1e-12)


def test_custom_entangler_map_matches_oracle():
    rng = np.random.default_rng(7)
    ent = ((2, 0), (0, 3), (1, 2))
    params = CircuitParams.random(3, layers=2, rng=rng, entangler_map=ent)
    z = rng.uniform(-np.pi, np.pi, size=3)
    probs, acc = run_probs(z, params)
    want_p, want_a = oracle_probs(z, params)
    npt.assert_allclose(probs, want_p, atol=1e-12)
    npt.assert_allclose(acc, want_a, atol=1e-12)


def test_distribution_invariants_and_unitarity():
    rng = np.random.default_rng(11)
    params = CircuitParams.random(4, layers=5, rng=rng)
    z = rng.uniform(-np.pi, np.pi, size=(6, 4))
    state = apply_circuit(prepare_state(z), params)
    npt.assert_allclose(np.sum(np.abs(state.amplitudes) ** 2, axis=1), 1.0, atol=1e-12)
    dist = conditional_probs(state)
    assert np.all(dist.probs >= 0.0)
    npt.assert_allclose(dist.probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(dist.acceptance > 0.0) and np.all(dist.acceptance <= 1.0 + 1e-12)


def test_batched_matches_per_sample_rows_exactly():
    rng = np.random.default_rng(23)
    params = CircuitParams.random(3, layers=4, rng=rng)
    z = rng.uniform(-np.pi, np.pi, size=(5, 3))
    batch, _ = evaluate_circuit(z, params)
    for i in range(5):
        single, _ = evaluate_circuit(z[i], params)
        assert np.array_equal(batch.probs[i], single.probs)
        assert batch.acceptance[i] == single.acceptance


def test_angle_periodicity():
    rng = np.random.default_rng(5)
    params = CircuitParams.random(2, layers=3, rng=rng)
    z = rng.uniform(-np.pi, np.pi, size=2)
    p0, a0 = run_probs(z, params)
    shifted = CircuitParams(2, 3, params.angles + 4 * np.pi,
                            entangler_map=params.entangler_map)
    p1, a1 = run_probs(z + 4 * np.pi, shifted)
    npt.assert_allclose(p1, p0, atol=1e-12)
    npt.assert_allclose(a1, a0, atol=1e-12)


def test_forward_is_deterministic():
    rng = np.random.default_rng(9)
    params = CircuitParams.random(3, layers=3, rng=rng)
    z = rng.uniform(-np.pi, np.pi, size=(4, 3))
    p1, a1 = run_probs(z, params)
    p2, a2 = run_probs(z, params)
    assert np.array_equal(p1, p2) and np.array_equal(a1, a2)


# ----------------------------------------------------------------------
# gradients


def fd_grad(f, x, eps=1e-6):
    x = x.astype(np.float64).copy()
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return g


def test_adjoint_gradients_match_finite_differences():
    rng = np.random.default_rng(31)
    d, layers = 2, 2
    params = CircuitParams.random(d, layers, rng=rng)
    z = rng.uniform(-np.pi, np.pi, size=(3, d))
    w = rng.normal(size=(3, 2 ** d))  # arbitrary linear loss over probs

    def loss_for(zv, av):
        p = CircuitParams(d, layers, av, entangler_map=params.entangler_map)
        dist, _ = evaluate_circuit(zv, p)
        return float(np.sum(w * dist.probs))

    dist, tape = evaluate_circuit(z, params)
    dz, dangles = circuit_backward(tape, w)

    fd_z = fd_grad(lambda v: loss_for(v, params.angles), z)
    fd_a = fd_grad(lambda v: loss_for(z, v), params.angles)
    npt.assert_allclose(dz, fd_z, atol=1e-9, rtol=1e-6)
    npt.assert_allclose(dangles, fd_a, atol=1e-9, rtol=1e-6)


def test_uniform_upstream_gradient_is_exactly_zero():
    # probs sum to 1 identically, so a constant upstream must vanish.
    rng = np.random.default_rng(41)
    params = CircuitParams.random(3, layers=3, rng=rng)
    z = rng.uniform(-np.pi, np.pi, size=(2, 3))
    _, tape = evaluate_circuit(z, params)
    dz, dangles = circuit_backward(tape, np.full((2, 8), 0.37))
    assert np.all(dz == 0.0)
    assert np.all(dangles == 0.0)


def test_autodiff_bridge_gradients():
    rng = np.random.default_rng(53)
    d, layers = 2, 2
    circuit = CircuitParams.random(d, layers, rng=rng)
    z = rng.uniform(-np.pi, np.pi, size=(2, d))
    w = rng.normal(size=(2, 2 ** d))

    def scalar(zv, av):
        zt = Tensor(zv, requires_grad=True)
        at = Tensor(av, requires_grad=True)
        probs, _ = circuit_probs(zt, at, circuit)
        # run through a nonlinearity so the chain rule is actually exercised
        loss = ((probs * Tensor(w)).sum(axis=1) ** 2).sum()
        return loss, zt, at

    loss, zt, at = scalar(z, circuit.angles)
    loss.backward()
    fd_z = fd_grad(lambda v: scalar(v, circuit.angles)[0].item(), z)
    fd_a = fd_grad(lambda v: scalar(z, v)[0].item(), circuit.angles)
    npt.assert_allclose(zt.grad.data, fd_z, atol=1e-8, rtol=1e-5)
    npt.assert_allclose(at.grad.data, fd_a, atol=1e-8, rtol=1e-5)


# ----------------------------------------------------------------------
# errors and validation


def test_degenerate_post_selection_raises():
    # all mass on ancilla = 1 (highest bit): acceptance is zero
    amps = np.zeros((2, 8), dtype=complex)
    amps[:, 4] = 1.0
    state = ComplexState(amps, num_data_qubits=2)
    with pytest.raises(DegeneratePostSelectionError) as err:
        conditional_probs(state)
    assert err.value.indices.tolist() == [0, 1]
    assert "acceptance" in str(err.value)


def test_configuration_errors():
    with pytest.raises(QuantumConfigError):
        CircuitParams(2, 1, np.zeros((1, 3, 3)), rotations_per_qubit=3)
    with pytest.raises(QuantumConfigError):
        CircuitParams(2, 1, np.zeros((2, 3, 2)))  # wrong layer count
    with pytest.raises(QuantumConfigError):
        CircuitParams(2, 1, np.full((1, 3, 2), np.nan))
    with pytest.raises(QuantumConfigError):
        CircuitParams(2, 1, np.zeros((1, 3, 2)), entangler_map=((0, 0),))
    with pytest.raises(QuantumConfigError):
        CircuitParams(2, 1, np.zeros((1, 3, 2)), entangler_map=((0, 5),))
    with pytest.raises(QuantumConfigError):
        prepare_state(np.array([0.1, 0.2]), num_data_qubits=3)
    with pytest.raises(QuantumConfigError):
        prepare_state(np.array([np.inf, 0.0]))
    params = CircuitParams(2, 1, np.zeros((1, 3, 2)))
    with pytest.raises(QuantumConfigError):
        apply_circuit(prepare_state(np.zeros(4)), params)


def test_linear_entangler_targets_ancilla_last():
    assert linear_entangler_map(3) == ((0, 1), (1, 2), (2, 3))
