import math

import numpy as np
import pytest
from scipy.stats import ortho_group

import twobose.bogoliubov as bog
from twobose.bogoliubov import (
    BogoliubovError,
    BogoliubovModel,
    InteractionTensor,
    QuadraticBlocks,
    assemble_bogoliubov,
    assemble_hessian,
    blocks_from_tensors,
    build_mode_basis,
    diagonalize_quadratic,
    find_sandwich_constant,
    hessian_bottom,
    hessian_interaction_block,
    interaction_tensor,
    load_tensor,
    sandwich_bounds_check,
    save_tensor,
)
from twobose.fock.quadratic import truncated_spectrum
from twobose.grid import Grid, SpectralField
from twobose.meanfield import ModelSpec, OrbitalPair, minimize
from twobose.meanfield.functional import _Engine

G = Grid(1, 128, 20.0)


def harmonic(grid):
    return SpectralField(grid, sum(c * c for c in grid.coordinates))


def kernel(grid, g, w=0.5):
    return SpectralField(grid, g * np.exp(-grid.radius**2 / (2 * w * w)))


def model(g=(5.0, 4.0, 2.0), ratios=(0.4, 0.6), grid=G):
    return ModelSpec(grid, traps=(harmonic(grid), harmonic(grid)),
                     interactions=tuple(kernel(grid, x) for x in g), ratios=ratios)


@pytest.fixture(scope="module")
def solved():
    spec = model()
    rep = minimize(spec, seed=1, tol=1e-11)
    basis = build_mode_basis(rep.orbitals, spec, 3, 3)
    tensor = interaction_tensor(basis, spec)
    blocks = assemble_bogoliubov(rep.orbitals, spec, basis, tensor)
    return spec, rep, basis, tensor, blocks


@pytest.fixture(scope="module")
def free():
    spec = model(g=(0.0, 0.0, 0.0))
    rep = minimize(spec, tol=1e-11)
    basis = build_mode_basis(rep.orbitals, spec, 3, 2)
    return spec, rep, basis


# --- mode basis ----------------------------------------------------------------------


def test_free_modes_are_hermite(free):
    spec, rep, basis = free
    # spectrum of -d²/dx² + x² is 2n + 1, shifted by μ = 1
    assert np.allclose(basis.energies1, [2, 4, 6], atol=1e-8)
    assert np.allclose(basis.energies2, [2, 4], atol=1e-8)
    x = G.axis
    h1 = x * np.exp(-x * x / 2)
    h1 /= math.sqrt(np.sum(h1 * h1) * G.spacing)
    assert np.max(np.abs(np.abs(basis.modes1[1]) - np.abs(h1))) < 1e-8


def test_modes_orthonormal(solved):
    _, _, basis, _, _ = solved
    for s in (1, 2):
        gram = basis.gram(s)
        assert np.max(np.abs(gram - np.eye(gram.shape[0]))) < 1e-10


def test_iterative_modes_match_dense(monkeypatch):
    grid = Grid(1, 64, 16.0)
    spec = model(grid=grid)
    rep = minimize(spec, seed=2, tol=1e-11)
    dense = build_mode_basis(rep.orbitals, spec, 3, 3)
    monkeypatch.setattr(bog, "DENSE_LIMIT", 0)
    iterative = build_mode_basis(rep.orbitals, spec, 3, 3)
    assert np.allclose(dense.energies1, iterative.energies1, atol=1e-8)
    assert np.allclose(dense.energies2, iterative.energies2, atol=1e-8)


def test_basis_needs_minimizer():
    spec = model()
    rng = np.random.default_rng(0)
    f = rng.standard_normal(G.shape)
    f = SpectralField(G, f / math.sqrt(np.sum(f * f) * G.spacing))
    with pytest.raises(BogoliubovError, match="residual"):
        build_mode_basis(OrbitalPair(f, f), spec, 2, 2)


# --- interaction tensor -------------------------------------------------------------------


def test_tensor_zero_potential(free):
    spec, rep, basis = free
    t = interaction_tensor(basis, spec)
    assert np.all(t.V1 == 0) and np.all(t.V2 == 0) and np.all(t.V12 == 0)


def test_tensor_symmetries(solved):
    _, _, _, t, _ = solved
    assert t.hermiticity_error() < 1e-12
    assert t.exchange_error() < 1e-12


def test_tensor_contact_limit(free):
    spec, rep, basis = free
    a = (0.1, 0.2, 0.05)
    gp = ModelSpec(G, traps=spec.traps, regime="GP", scattering_lengths=a, ratios=spec.ratios)
    t = interaction_tensor(basis, gp)
    u, v = basis.modes1, basis.modes2
    dx = G.spacing
    for (m, n, p, q) in [(0, 0, 0, 0), (1, 1, 0, 0), (1, 2, 3, 0), (2, 2, 2, 2)]:
        expected = 8 * math.pi * a[0] * np.sum(u[m] * u[n] * u[p] * u[q]) * dx
        assert abs(t.V1[m, n, p, q] - expected) < 1e-12
    expected = 8 * math.pi * a[2] * np.sum(u[1] * v[2] * u[0] * v[1]) * dx
    assert abs(t.V12[1, 2, 0, 1] - expected) < 1e-12


def test_tensor_double_sum_oracle():
    grid = Grid(1, 16, 4.0)
    n = 16
    rng = np.random.default_rng(9)
    kernels = [rng.uniform(0.5, 2) * np.exp(-grid.axis**2 / rng.uniform(0.2, 1)) for _ in range(3)]
    spec = ModelSpec(grid, interactions=tuple(SpectralField(grid, k) for k in kernels), ratios=(0.5, 0.5))
    m1 = rng.standard_normal((3, n))
    m2 = rng.standard_normal((2, n))
    basis = bog.ModeBasis(grid, m1, m2, np.zeros(2), np.zeros(1))
    t = interaction_tensor(basis, spec)
    dx = grid.spacing

    def brute(k, L, R, m, nn, p, q):
        tot = 0.0
        for i in range(n):
            for j in range(n):
                tot += L[m][i] * R[nn][j] * kernels[k][(i - j + n // 2) % n] * L[p][i] * R[q][j]
        return tot * dx * dx

    for idx in [(0, 1, 2, 0), (2, 2, 1, 0), (1, 0, 1, 2)]:
        assert abs(t.V1[idx] - brute(0, m1, m1, *idx)) < 1e-10
    for idx in [(0, 1, 2, 0), (2, 1, 1, 0), (1, 0, 0, 1)]:
        assert abs(t.V12[idx] - brute(2, m1, m2, *idx)) < 1e-10


def test_tensor_binary_roundtrip(tmp_path, solved):
    _, _, _, t, _ = solved
    path = tmp_path / "t.bin"
    save_tensor(t, path, meta={"config_hash": "abc"})
    loaded, header = load_tensor(path)
    assert header["meta"]["config_hash"] == "abc"
    for a, b in ((t.V1, loaded.V1), (t.V2, loaded.V2), (t.V12, loaded.V12)):
        assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        (tmp_path / "junk").write_bytes(b"nope" * 8)
        load_tensor(tmp_path / "junk")


# --- Hessian ---------------------------------------------------------------------------------


def test_free_hessian_block_diagonal(free):
    spec, rep, basis = free
    blocks = assemble_bogoliubov(rep.orbitals, spec, basis)
    H = blocks.hessian()
    h = np.diag(np.concatenate([basis.energies1, basis.energies2]))
    assert np.allclose(H, np.block([[h, 0 * h], [0 * h, h]]), atol=1e-9)
    assert np.all(blocks.B2 == 0) and blocks.constant == 0
    assert hessian_bottom(H) == pytest.approx(2.0, abs=1e-8)


def test_hessian_hermitian_and_reassembles(solved):
    spec, rep, basis, t, blocks = solved
    H = assemble_hessian(rep.orbitals, spec, basis, t)
    assert np.max(np.abs(H - H.conj().T)) < 1e-12
    # the blocks written out from their definitions, entry by entry
    c1, c2 = spec.ratios
    M1, M2 = basis.M1, basis.M2
    n = M1 + M2
    eng = _Engine(spec)
    pots = eng.potentials(basis.modes1[0].astype(complex), basis.modes2[0].astype(complex))
    mu1, mu2 = basis.multipliers

    def h_entry(s, m, k):
        modes = basis.modes1 if s == 1 else basis.modes2
        pot = c1 * pots[0] + c2 * pots[2] if s == 1 else c2 * pots[1] + c1 * pots[3]
        applied = eng.one_body(modes[k].astype(complex), s - 1) + pot * modes[k]
        return np.sum(modes[m] * applied.real) * G.spacing - (mu1 if s == 1 else mu2) * (m == k)

    B1 = np.zeros((n, n))
    B2 = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            si, mi = (1, i + 1) if i < M1 else (2, i - M1 + 1)
            sj, mj = (1, j + 1) if j < M1 else (2, j - M1 + 1)
            if si == sj == 1:
                B1[i, j] = h_entry(1, mi, mj) + c1 * t.V1[mi, 0, 0, mj].real
                B2[i, j] = c1 * t.V1[mi, mj, 0, 0].real
            elif si == sj == 2:
                B1[i, j] = h_entry(2, mi, mj) + c2 * t.V2[mi, 0, 0, mj].real
                B2[i, j] = c2 * t.V2[mi, mj, 0, 0].real
            elif si == 1:
                B1[i, j] = math.sqrt(c1 * c2) * t.V12[mi, 0, 0, mj].real
                B2[i, j] = math.sqrt(c1 * c2) * t.V12[mi, mj, 0, 0].real
            else:
                B1[i, j] = math.sqrt(c1 * c2) * t.V12[0, mi, mj, 0].real
                B2[i, j] = math.sqrt(c1 * c2) * t.V12[mj, mi, 0, 0].real
    expected = np.block([[B1, B2], [B2, B1]])
    assert np.max(np.abs(H - expected)) < 1e-10


def test_hessian_finite_differences(solved):
    spec, rep, basis, t, blocks = solved
    H = blocks.hessian()
    eng = _Engine(spec)
    u0, v0 = basis.modes1[0].astype(complex), basis.modes2[0].astype(complex)
    E0 = eng.energy(u0, v0)
    norm = lambda f: f / math.sqrt(eng.rip(f, f))  # noqa: E731
    c1, c2 = spec.ratios
    rng = np.random.default_rng(4)
    for _ in range(10):
        y = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        z = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        du = np.tensordot(y, basis.modes1[1:], 1)
        dv = np.tensordot(z, basis.modes2[1:], 1)
        eps = 1e-4
        E = lambda e: eng.energy(norm(u0 + e * du), norm(v0 + e * dv))  # noqa: E731
        fd = (E(eps) + E(-eps) - 2 * E0) / eps**2
        X = np.concatenate([math.sqrt(c1) * y, math.sqrt(c2) * z])
        W = np.concatenate([X, X.conj()])
        assert abs(fd - (W.conj() @ H @ W).real) <= 1e-4 * abs(fd)


def test_hessian_positive_random_miscible():
    rng = np.random.default_rng(21)
    for _ in range(5):
        g1, g2 = rng.uniform(1, 8, 2)
        g12 = rng.uniform(-0.9, 0.9) * math.sqrt(g1 * g2)
        c1 = rng.uniform(0.2, 0.8)
        spec = model(g=(g1, g2, g12), ratios=(c1, 1 - c1))
        rep = minimize(spec, seed=int(rng.integers(1000)), tol=1e-10)
        basis = build_mode_basis(rep.orbitals, spec, 3, 3)
        blocks = assemble_bogoliubov(rep.orbitals, spec, basis)
        assert hessian_bottom(blocks) > 0
        assert np.linalg.eigvalsh(hessian_interaction_block(blocks))[0] >= -1e-10
        assert diagonalize_quadratic(blocks).xi.min() >= 0


def test_single_mode_blocks_hand_quadrature():
    """d = 2 per species, so each block is one number per species."""
    rng = np.random.default_rng(2)
    T1 = np.array([[0.5, 0.0], [0.0, 2.0]])
    T2 = np.array([[0.7, 0.0], [0.0, 1.5]])
    V1 = rng.uniform(0.1, 0.3, (2, 2, 2, 2))
    V2 = rng.uniform(0.1, 0.3, (2, 2, 2, 2))
    V12 = rng.uniform(0.1, 0.3, (2, 2, 2, 2))
    c1, c2 = 0.3, 0.7
    b = blocks_from_tensors(T1, T2, InteractionTensor(V1, V2, V12), c1, c2)
    mu1 = T1[0, 0] + c1 * V1[0, 0, 0, 0] + c2 * V12[0, 0, 0, 0]
    h1 = T1[1, 1] + c1 * V1[1, 0, 1, 0] + c2 * V12[1, 0, 1, 0] - mu1
    assert b.B1[0, 0] == pytest.approx(h1 + c1 * V1[1, 0, 0, 1])
    assert b.B2[0, 0] == pytest.approx(c1 * V1[1, 1, 0, 0])
    assert b.B1[0, 1] == pytest.approx(math.sqrt(c1 * c2) * V12[1, 0, 0, 1])
    assert b.B2[0, 1] == pytest.approx(math.sqrt(c1 * c2) * V12[1, 1, 0, 0])
    assert b.constant == pytest.approx(-0.5 * c1 * V1[0, 0, 0, 0] - 0.5 * c2 * V2[0, 0, 0, 0])


# --- diagonalization ---------------------------------------------------------------------------


def test_no_pairing_gives_b1_spectrum():
    B1 = np.array([[2.0, 0.3], [0.3, 1.0]])
    s = diagonalize_quadratic(QuadraticBlocks(B1, np.zeros((2, 2)), -0.4, 2, 0))
    assert np.allclose(s.xi, np.linalg.eigvalsh(B1))
    assert s.ground_energy == pytest.approx(-0.4, abs=1e-14)


def test_single_mode_closed_form():
    A, B, c = 2.0, 0.8, 0.1
    s = diagonalize_quadratic(QuadraticBlocks(np.array([[A]]), np.array([[B]]), c, 1, 0))
    xi = math.sqrt(A * A - B * B)
    assert s.xi[0] == pytest.approx(xi, abs=1e-14)
    assert s.ground_energy == pytest.approx(0.5 * (xi - A) + c, abs=1e-14)


def test_hypothesis_errors():
    with pytest.raises(BogoliubovError, match="B1 > 0"):
        diagonalize_quadratic(QuadraticBlocks(np.array([[-1.0]]), np.array([[0.0]]), 0, 1, 0))
    with pytest.raises(BogoliubovError, match="< 1"):
        diagonalize_quadratic(QuadraticBlocks(np.array([[1.0]]), np.array([[1.5]]), 0, 1, 0))


def random_blocks(rng, modes=4, strength=0.6):
    U = ortho_group.rvs(modes, random_state=rng)
    B1 = U @ np.diag(rng.uniform(1, 3, modes)) @ U.T
    S = rng.standard_normal((modes, modes))
    S = S + S.T
    raw = QuadraticBlocks(B1, S, 0.0, modes, 0)
    return QuadraticBlocks(B1, S * strength / raw.pairing_strength(), rng.uniform(-1, 1), modes, 0)


def test_random_blocks_vs_fock_oracle():
    rng = np.random.default_rng(13)
    for _ in range(3):
        b = random_blocks(rng)
        s = diagonalize_quadratic(b)
        errs = []
        for Q in (10, 12, 14):
            levels = truncated_spectrum(b.B1, b.B2, b.constant, Q, 4)
            errs.append(abs(levels[0] - s.ground_energy))
        assert errs[-1] < 1e-4
        assert errs[0] > errs[1] > errs[2]
        gaps = levels[1:] - levels[0]
        assert np.all(np.abs(gaps - s.excitation_levels(4)[1:]) < 1e-3)


def test_xi_invariant_under_mode_mixing(solved):
    spec, rep, basis, _, blocks = solved
    rng = np.random.default_rng(5)
    W1 = ortho_group.rvs(3, random_state=rng)
    W2 = ortho_group.rvs(3, random_state=rng)
    mixed = basis.mixed(W1, W2)
    s0 = diagonalize_quadratic(blocks)
    s1 = diagonalize_quadratic(assemble_bogoliubov(rep.orbitals, spec, mixed))
    assert np.max(np.abs(s0.xi - s1.xi)) < 1e-10
    assert s0.ground_energy == pytest.approx(s1.ground_energy, abs=1e-10)


def test_ground_energy_decreases_with_modes(solved):
    spec, rep, _, _, _ = solved
    basis = build_mode_basis(rep.orbitals, spec, 6, 6)
    energies = [diagonalize_quadratic(assemble_bogoliubov(rep.orbitals, spec, basis.truncated(m, m))).ground_energy
                for m in (1, 2, 4, 6)]
    assert np.all(np.diff(energies) <= 1e-12)


def test_unique_gapped_fock_ground(solved):
    *_, blocks = solved
    s = diagonalize_quadratic(blocks)
    levels = truncated_spectrum(blocks.B1, blocks.B2, blocks.constant, 6, 3)
    assert levels[1] - levels[0] >= s.xi.min() - 1e-3


# --- sandwich bounds --------------------------------------------------------------------------


def test_sandwich_free(free):
    spec, rep, basis = free
    blocks = assemble_bogoliubov(rep.orbitals, spec, basis)
    C = 1 + max(basis.energies1.max(), basis.energies2.max())
    assert sandwich_bounds_check(blocks, None, C, max_quanta=6)


def test_sandwich_doubling_and_zero(solved):
    *_, blocks = solved
    small = QuadraticBlocks(blocks.B1[:2, :2], blocks.B2[:2, :2], blocks.constant, 2, 0, blocks.h[:2, :2])
    C = find_sandwich_constant(small, max_quanta=10)
    assert math.isfinite(C)
    assert sandwich_bounds_check(small, diagonalize_quadratic(small), C, max_quanta=10)
    assert not sandwich_bounds_check(small, None, 0.0)


# --- estimator ------------------------------------------------------------------------------------


def test_estimator(solved):
    spec, rep, *_ = solved
    est = BogoliubovModel(M1=4, M2=4).fit(spec, rep.orbitals)
    summary = est.summary()
    assert summary["mode_converged"] in (True, False)
    assert summary["ground_energy"] <= summary["ground_energy_half"] + 1e-12
    assert summary["hessian_bottom"] > 0
    assert est.get_params() == {"M1": 4, "M2": 4, "convergence_tol": 1e-3}
