"""End-to-end acceptance checklist.

Each test covers one release criterion and prints a single [PASS]/[FAIL]
line outside pytest's capture, so a full run reads as a checklist even when
everything is green. The desk-scale training runs (criteria 5 and 6) share
one session fixture; everything else is fast.
"""

import time
from dataclasses import dataclass

import numpy as np
import pytest

from quigan.autodiff import Tensor, grad
from quigan.calibration import (
    CalibrationConfig,
    calibrate,
    contrast_normalize,
    deviation_map,
)
from quigan.critic import Critic, gradient_penalty
from quigan.data import (
    DatasetSpec,
    IdxFormatError,
    load_idx_images,
    load_idx_labels,
    prepare,
    write_idx_images,
    write_idx_labels,
)
from quigan.metrics import frechet_from_moments, mmd_poly, pixel_mmd
from quigan.quantum import CircuitParams, circuit_backward, evaluate_circuit
from quigan.training import TrainConfig, Trainer


def report(capsys, name: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ----------------------------------------------------------------------
# criterion 1: circuit gradients match finite differences


def test_c1_circuit_gradient_fidelity(capsys):
    # loss = first conditional pixel probability; exact reverse-pass gradients
    # against central differences with step 1e-5 at 20 random parameter points
    rng = np.random.default_rng(11)
    start = time.perf_counter()
    worst = 0.0
    h = 1e-5
    for _ in range(20):
        params = CircuitParams.random(2, 2, rng)
        z = rng.uniform(-np.pi, np.pi, 2)

        def value(zv, av):
            p = CircuitParams(2, 2, av, params.rotations_per_qubit,
                              params.entangler_map)
            dist, _ = evaluate_circuit(zv, p)
            return float(dist.probs[0])

        dist, tape = evaluate_circuit(z, params)
        upstream = np.array([1.0, 0.0, 0.0, 0.0])
        dz, dangles = circuit_backward(tape, upstream)

        fd_z = np.zeros_like(z)
        for i in range(z.size):
            zp, zm = z.copy(), z.copy()
            zp[i] += h
            zm[i] -= h
            fd_z[i] = (value(zp, params.angles) - value(zm, params.angles)) / (2 * h)
        fd_a = np.zeros_like(params.angles)
        it = np.nditer(params.angles, flags=["multi_index"])
        for _v in it:
            ap, am = params.angles.copy(), params.angles.copy()
            ap[it.multi_index] += h
            am[it.multi_index] -= h
            fd_a[it.multi_index] = (value(z, ap) - value(z, am)) / (2 * h)

        exact = np.concatenate([dz.ravel(), dangles.ravel()])
        fd = np.concatenate([fd_z.ravel(), fd_a.ravel()])
        rel = float(np.linalg.norm(exact - fd) / np.linalg.norm(fd))
        worst = max(worst, rel)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 5.0
    report(capsys, "criterion 1 (gradient fidelity)", ok,
           f"20 random circuits, max rel err {worst:.2e} (< 1e-4), {elapsed:.1f}s (< 5s)")


# ----------------------------------------------------------------------
# criterion 2: simulator agrees with a dense-matrix oracle


def _kron_at(mat: np.ndarray, qubit: int, n: int) -> np.ndarray:
    return np.kron(np.eye(2 ** (n - 1 - qubit)), np.kron(mat, np.eye(2 ** qubit)))


def _oracle_probs(z: np.ndarray, params: CircuitParams) -> tuple[np.ndarray, float]:
    d = z.size
    n = d + 1
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)

    def ry(t):
        c, s = np.cos(t / 2), np.sin(t / 2)
        return np.array([[c, -s], [s, c]], dtype=complex)

    def rz(t):
        return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])

    psi = np.zeros(2 ** n, dtype=complex)
    psi[0] = 1.0
    for k in range(d):
        psi = _kron_at(ry(z[k]), k, n) @ psi
    kinds = (ry, rz)[: params.rotations_per_qubit]
    for layer in range(params.layers):
        for q in range(n):
            for r, kind in enumerate(kinds):
                psi = _kron_at(kind(params.angles[layer, q, r]), q, n) @ psi
        for c, t in params.entangler_map:
            cnot = _kron_at(p0, c, n) + _kron_at(p1, c, n) @ _kron_at(x, t, n)
            psi = cnot @ psi
    joint = np.abs(psi[: 2 ** d]) ** 2  # ancilla (MSB) = 0 is the first half
    acceptance = joint.sum()
    return joint / acceptance, float(acceptance)


def test_c2_statevector_oracle_equivalence(capsys):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst = 0.0
    for trial in range(100):
        d = (1, 2, 3)[trial % 3]
        rot = 1 + trial % 2
        params = CircuitParams.random(d, 1 + trial % 3, rng, rotations_per_qubit=rot)
        z = rng.uniform(-np.pi, np.pi, d)
        dist, _ = evaluate_circuit(z, params)
        probs, acc = _oracle_probs(z, params)
        worst = max(worst,
                    float(np.max(np.abs(dist.probs - probs))),
                    abs(dist.acceptance - acc))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and elapsed < 10.0
    report(capsys, "criterion 2 (oracle equivalence)", ok,
           f"100 trials over 1-3 data qubits, max abs dev {worst:.2e} (< 1e-10), "
           f"{elapsed:.1f}s (< 10s)")


# ----------------------------------------------------------------------
# criterion 3: calibration analytic properties


def test_c3_calibration_analytics(capsys):
    checks = []

    uniform = np.full(16, 1.0 / 16.0)
    out = calibrate(uniform)
    checks.append(("uniform -> exactly 0.5", bool(np.all(out == 0.5))))
    checks.append(("deviation(uniform) == 0",
                   bool(np.all(deviation_map(uniform) == 0.0))))

    rng = np.random.default_rng(3)
    x = rng.normal(size=(8, 16))
    centered = contrast_normalize(x)
    checks.append(("normalization centering <= 1e-10",
                   float(np.max(np.abs(centered.mean(axis=-1)))) <= 1e-10))

    worst = 0.0
    for n in (4, 16):
        p = rng.dirichlet(np.ones(n))
        pt = Tensor(p, requires_grad=True)
        y = calibrate(pt)
        jac = np.zeros((n, n))
        for j in range(n):
            (row,) = grad(y[j], [pt])
            jac[j] = row.data
        h = 1e-7
        fd = np.zeros((n, n))
        for i in range(n):
            pp, pm = p.copy(), p.copy()
            pp[i] += h
            pm[i] -= h
            fd[:, i] = (calibrate(pp) - calibrate(pm)) / (2 * h)
        scale = np.maximum(np.abs(fd), 1.0)
        worst = max(worst, float(np.max(np.abs(jac - fd) / scale)))
    checks.append((f"jacobian vs fd (N=4,16) rel {worst:.2e} <= 1e-4", worst <= 1e-4))

    ok = all(c[1] for c in checks)
    report(capsys, "criterion 3 (calibration analytics)", ok,
           "; ".join(name for name, _ in checks) if ok else
           "; ".join(f"{name}={'ok' if good else 'FAILED'}" for name, good in checks))


# ----------------------------------------------------------------------
# criterion 4: gradient penalty analytic anchors


def test_c4_gradient_penalty_anchors(capsys):
    rng = np.random.default_rng(5)
    real = rng.uniform(0.5, 1.0, (6, 8))
    fake = rng.uniform(0.0, 0.5, (6, 8))
    eps = rng.uniform(0, 1, 6)

    critic = Critic(8, hidden=(), rng=rng)
    w = rng.normal(size=(8, 1))
    critic.weights[0].data[:] = w / np.linalg.norm(w)  # unit-norm linear critic
    zero = gradient_penalty(critic, real, fake, eps, lam=10.0).item()

    critic.weights[0].data[:] *= 3.0  # gradient norm 3 -> 10 * (3-1)^2 = 40
    forty = gradient_penalty(critic, real, fake, eps, lam=10.0).item()

    ok = abs(zero) <= 1e-10 and abs(forty - 40.0) <= 1e-10
    report(capsys, "criterion 4 (penalty anchors)", ok,
           f"unit-norm critic -> {zero:.1e} (== 0), norm-3 critic -> {forty} (== 40)")


# ----------------------------------------------------------------------
# criteria 5 and 6: desk-scale runs on the ring-digit corpus


@dataclass
class SmokeRun:
    mmd_start: float
    mmd_end: float
    brightness: float
    contrast: float
    seconds: float
    finite: bool


@pytest.fixture(scope="session")
def smoke_runs(digit_corpus):
    spec = DatasetSpec(digit_corpus.images, digit_corpus.labels, class_label=0,
                       train_count=1000, test_count=250, num_data_qubits=8)
    data = prepare(spec)
    real = data.eval_view(data.test)

    runs: dict[tuple[str, int], SmokeRun] = {}
    for mode in ("none", "noise_uniform01"):
        for seed in (0, 1, 2):
            cfg = TrainConfig(num_data_qubits=8, layers=6, epochs=10,
                              batch_size=5, n_critic=5, seed=seed, ablation=mode)
            trainer = Trainer(cfg, data)
            mmd_start = pixel_mmd(real, data.eval_view(trainer.generate(250, seed=100 + seed)))
            t0 = time.perf_counter()
            history = trainer.train()
            seconds = time.perf_counter() - t0
            mmd_end = pixel_mmd(real, data.eval_view(trainer.generate(250, seed=100 + seed)))
            finite = all(
                np.isfinite([r.critic_loss, r.generator_loss, r.wasserstein,
                             r.penalty, r.brightness, r.contrast]).all()
                for r in history
            )
            runs[(mode, seed)] = SmokeRun(
                mmd_start=mmd_start, mmd_end=mmd_end,
                brightness=history[-1].brightness, contrast=history[-1].contrast,
                seconds=seconds, finite=finite,
            )
    return runs


def test_c5_desk_scale_smoke_run(capsys, smoke_runs):
    run = smoke_runs[("none", 0)]
    total = sum(r.seconds for r in smoke_runs.values())
    ok = (run.finite and run.mmd_end < run.mmd_start
          and run.brightness > 5.0 and run.contrast > 5.0
          and total < 1800.0)
    report(capsys, "criterion 5 (desk-scale smoke run)", ok,
           f"finite={run.finite}, mmd {run.mmd_start:.5f} -> {run.mmd_end:.5f} "
           f"(must drop), brightness {run.brightness:.1f} > 5, "
           f"contrast {run.contrast:.1f} > 5, all runs {total:.0f}s < 1800s")


def test_c6_learned_noise_beats_uniform(capsys, smoke_runs):
    wins = []
    for seed in (0, 1, 2):
        learned = smoke_runs[("none", seed)].mmd_end
        uniform = smoke_runs[("noise_uniform01", seed)].mmd_end
        wins.append(learned <= uniform)
    detail = ", ".join(
        f"seed {s}: learned {smoke_runs[('none', s)].mmd_end:.5f} vs "
        f"uniform {smoke_runs[('noise_uniform01', s)].mmd_end:.5f}"
        for s in (0, 1, 2))
    ok = sum(wins) >= 2
    report(capsys, "criterion 6 (learned noise helps)", ok,
           f"{sum(wins)}/3 seeds favor learned noise (need >= 2); {detail}")


# ----------------------------------------------------------------------
# criterion 7: determinism and checkpoint equivalence


def test_c7_determinism_and_resume(capsys, tiny_corpus, tmp_path):
    spec = DatasetSpec(tiny_corpus.images, tiny_corpus.labels, class_label=0,
                       train_count=16, test_count=8, num_data_qubits=4)
    data = prepare(spec)
    cfg = TrainConfig(num_data_qubits=4, layers=2, epochs=2, batch_size=4,
                      n_critic=2, seed=9, encoder_hidden=(8,), critic_hidden=(16,))

    a, b = Trainer(cfg, data), Trainer(cfg, data)
    a.train()
    b.train()
    twins_equal = np.array_equal(a.generate(8, seed=1), b.generate(8, seed=1))

    c = Trainer(cfg, data)
    c.train(1)
    ckpt = tmp_path / "resume.qck"
    c.save(ckpt)
    d = Trainer.from_checkpoint(ckpt, data)
    d.train(1)
    resumed_equal = np.array_equal(a.generate(8, seed=2), d.generate(8, seed=2))
    weights_equal = all(
        np.array_equal(a.state_tensors()[k], d.state_tensors()[k])
        for k in a.state_tensors()
    )

    ok = twins_equal and resumed_equal and weights_equal
    report(capsys, "criterion 7 (determinism + resume)", ok,
           f"same-seed twins identical={twins_equal}, "
           f"save/resume == uninterrupted: samples={resumed_equal}, "
           f"all state tensors={weights_equal}")


# ----------------------------------------------------------------------
# criterion 8: metric implementations against independent formulas


def _mmd_bruteforce(xf: np.ndarray, yf: np.ndarray) -> float:
    scale = 1.0 / xf.shape[1]

    def k(a, b):
        return (scale * float(a @ b) + 1.0) ** 3

    m, n = len(xf), len(yf)
    xx = sum(k(xf[i], xf[j]) for i in range(m) for j in range(m) if i != j)
    yy = sum(k(yf[i], yf[j]) for i in range(n) for j in range(n) if i != j)
    xy = sum(k(xf[i], yf[j]) for i in range(m) for j in range(n))
    return xx / (m * (m - 1)) + yy / (n * (n - 1)) - 2 * xy / (m * n)


def test_c8_metric_cross_checks(capsys):
    rng = np.random.default_rng(21)
    checks = []

    x = rng.normal(size=(14, 6))
    y = rng.normal(loc=0.3, size=(11, 6))
    dev = abs(mmd_poly(x, y) - _mmd_bruteforce(x, y))
    checks.append((f"mmd vs brute force {dev:.1e} <= 1e-12", dev <= 1e-12))

    mu1, var1 = np.array([0.0, 1.0, -1.0]), np.array([1.0, 2.0, 0.5])
    mu2, var2 = np.array([0.5, 1.0, 0.0]), np.array([2.0, 1.0, 1.0])
    closed = float(np.sum((mu1 - mu2) ** 2)
                   + np.sum(var1 + var2 - 2 * np.sqrt(var1 * var2)))
    got = frechet_from_moments(mu1, np.diag(var1), mu2, np.diag(var2))
    dev = abs(got - closed)
    checks.append((f"diagonal frechet {dev:.1e} <= 1e-8", dev <= 1e-8))

    # split-half: same-distribution MMD must sit inside the permutation null
    pool = rng.normal(size=(400, 6))
    observed = mmd_poly(pool[:200], pool[200:])
    null = []
    for _ in range(200):
        perm = rng.permutation(400)
        null.append(mmd_poly(pool[perm[:200]], pool[perm[200:]]))
    floor = float(np.quantile(null, 0.99))
    checks.append((f"split-half mmd {observed:.2e} < perm q99 {floor:.2e}",
                   observed < floor))

    ok = all(c[1] for c in checks)
    report(capsys, "criterion 8 (metric cross-checks)", ok, "; ".join(c[0] for c in checks))


# ----------------------------------------------------------------------
# criterion 9: dataset container round trip and malformed rejection


def test_c9_idx_round_trip_and_errors(capsys, tmp_path):
    rng = np.random.default_rng(2)
    images = rng.integers(0, 256, size=(12, 9, 9), dtype=np.uint8)
    labels = rng.integers(0, 10, size=12, dtype=np.uint8)
    ip, lp = tmp_path / "im.idx3", tmp_path / "lb.idx1"
    write_idx_images(ip, images)
    write_idx_labels(lp, labels)
    back_images = np.round(load_idx_images(ip) * 255.0).astype(np.uint8)
    back_labels = load_idx_labels(lp)
    round_trip = (np.array_equal(back_images, images)
                  and np.array_equal(back_labels, labels))

    rejected = []
    bad_magic = tmp_path / "bad_magic.idx3"
    bad_magic.write_bytes(b"\x00\x00\x09\x03" + b"\x00" * 12)
    with pytest.raises(IdxFormatError) as err:
        load_idx_images(bad_magic)
    rejected.append("byte 0" in str(err.value))

    truncated = tmp_path / "short.idx3"
    truncated.write_bytes(ip.read_bytes()[:40])
    with pytest.raises(IdxFormatError) as err:
        load_idx_images(truncated)
    rejected.append("byte" in str(err.value))

    empty = tmp_path / "empty.idx1"
    empty.write_bytes(b"")
    with pytest.raises(IdxFormatError):
        load_idx_labels(empty)
    rejected.append(True)

    ok = round_trip and all(rejected)
    report(capsys, "criterion 9 (dataset container)", ok,
           f"uint8 round trip exact={round_trip}, malformed files rejected "
           f"with byte offsets={all(rejected)}")
