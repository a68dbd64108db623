import itertools
import math

import numpy as np
import pytest

from twobose.definetti import (
    HusimiSampler,
    coherent_amplitudes,
    definetti_error,
    definetti_scaling,
    haar_vectors,
    husimi_sample,
    load_ensemble,
    save_ensemble,
    schur_check,
)
from twobose.fock import FockBasis, ManyBodyVector, ToyModel, build_hamiltonian, ground_state, hartree_frame
from twobose.fock import reduced_density
from twobose.fock.basis import species_sector


def sphere_moment(d, a):
    """E |u_1|^{2a_1} ... |u_d|^{2a_d} for Haar u on the unit sphere of C^d."""
    return math.factorial(d - 1) * math.prod(math.factorial(x) for x in a) / math.factorial(d - 1 + sum(a))


@pytest.mark.parametrize("d,a", [(2, (1, 0)), (2, (2, 1)), (3, (1, 1, 0)), (3, (2, 0, 1)), (4, (3, 0, 0, 0))])
def test_haar_moments_against_closed_form(d, a):
    u = haar_vectors(np.random.default_rng(0), 200_000, d)
    vals = np.prod(np.abs(u) ** (2 * np.array(a)), axis=1)
    se = vals.std() / np.sqrt(vals.size)
    assert abs(vals.mean() - sphere_moment(d, a)) < 4 * se
    assert np.allclose(np.linalg.norm(u, axis=1), 1.0)


def test_coherent_amplitudes_against_tensor_power():
    rng = np.random.default_rng(2)
    d, N = 3, 3
    u = haar_vectors(rng, 1, d)[0]
    full = u
    for _ in range(N - 1):
        full = np.multiply.outer(full, u)
    for i, occ in enumerate(species_sector(d, N).states):
        modes = [k for k in range(d) for _ in range(occ[k])]
        perms = set(itertools.permutations(modes))
        basis_vec = np.zeros((d,) * N)
        for p in perms:
            basis_vec[p] = 1 / math.sqrt(len(perms))
        assert coherent_amplitudes(u, N)[0, i] == pytest.approx(np.vdot(basis_vec, full))
    assert np.linalg.norm(coherent_amplitudes(u, N)) == pytest.approx(1.0)


def test_schur_trivial_dimension():
    assert schur_check(1, 5, 1000, seed=0) < 1e-14


def test_schur_d2_n2_million():
    dev, est = schur_check(2, 2, 10**6, seed=0, return_estimate=True)
    assert dev < 5e-3
    assert np.trace(est).real == pytest.approx(3.0, abs=1e-9)  # integrand has trace 1 per sample


def test_schur_deviation_shrinks():
    small = np.mean([schur_check(2, 3, 10**3, seed=s) for s in range(5)])
    large = np.mean([schur_check(2, 3, 10**5, seed=s) for s in range(5)])
    assert large < small / 4


def test_schur_entries_match_sphere_moments():
    # dim * E c_n conj(c_n) = dim * multinomial * E prod |u|^{2n} = 1 exactly
    d, N = 3, 2
    dim = species_sector(d, N).dim
    for occ in species_sector(d, N).states:
        mult = math.factorial(N) / math.prod(math.factorial(x) for x in occ)
        assert dim * mult * sphere_moment(d, tuple(occ)) == pytest.approx(1.0)


def test_condensate_weights_and_mass():
    N1, N2 = 3, 2
    psi = ManyBodyVector.condensate(FockBasis(2, 3, N1, N2))
    ens = husimi_sample(psi, 2, 3, N1, N2, 50_000, seed=4)
    dims = 4 * 6
    expected = dims * np.abs(ens.u[:, 0]) ** (2 * N1) * np.abs(ens.v[:, 0]) ** (2 * N2)
    assert np.allclose(ens.weights, expected)
    assert np.all(ens.weights >= 0)
    # closed form: dims * E|u0|^{2N1} * E|v0|^{2N2} = 1
    assert dims * sphere_moment(2, (N1, 0)) * sphere_moment(3, (N2, 0, 0)) == pytest.approx(1.0)
    assert abs(ens.mass - 1) < 3 * ens.standard_error


def test_one_mode_weights_are_one():
    psi = ManyBodyVector.condensate(FockBasis(1, 1, 4, 3))
    ens = husimi_sample(psi, 1, 1, 4, 3, 200, seed=0)
    assert np.allclose(ens.weights, 1.0)


def test_mass_independent_of_seed():
    psi = ManyBodyVector.random(FockBasis(2, 2, 3, 3), seed=1)
    a = husimi_sample(psi, 2, 2, 3, 3, 40_000, seed=1)
    b = husimi_sample(psi, 2, 2, 3, 3, 40_000, seed=2)
    assert abs(a.mass - b.mass) < 3 * math.hypot(a.standard_error, b.standard_error)


def test_sampling_errors():
    psi = ManyBodyVector.condensate(FockBasis(2, 2, 2, 2))
    with pytest.raises(ValueError, match="at least 100"):
        husimi_sample(psi, 2, 2, 2, 2, 99, seed=0)
    with pytest.raises(ValueError, match="seed"):
        husimi_sample(psi, 2, 2, 2, 2, 1000, seed=None)
    with pytest.raises(ValueError, match="lives on"):
        husimi_sample(psi, 2, 2, 3, 2, 1000, seed=0)


def test_deterministic_and_thread_independent():
    psi = ManyBodyVector.random(FockBasis(2, 2, 3, 2), seed=3)
    a = husimi_sample(psi, 2, 2, 3, 2, 5000, seed=9, chunk=1000)
    b = husimi_sample(psi, 2, 2, 3, 2, 5000, seed=9, chunk=1000, threads=3)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.u, b.u)
    assert schur_check(2, 3, 3000, seed=1) == schur_check(2, 3, 3000, seed=1, threads=2)


def test_first_moment_lower_symbol_identity():
    # the Husimi first moment equals (N γ + 1) / (N + d) for any ψ
    N1, N2 = 5, 3
    psi = ManyBodyVector.random(FockBasis(2, 3, N1, N2), seed=4)
    ens = husimi_sample(psi, 2, 3, N1, N2, 200_000, seed=1)
    g1, g2 = reduced_density(psi, 1, 0), reduced_density(psi, 0, 1)
    assert np.abs(ens.moment(1, 0) - (N1 * g1 + np.eye(2)) / (N1 + 2)).max() < 3e-3
    assert np.abs(ens.moment(0, 1) - (N2 * g2 + np.eye(3)) / (N2 + 3)).max() < 3e-3


@pytest.mark.parametrize("kl", [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2)])
def test_moment_is_density_matrix(kl):
    psi = ManyBodyVector.random(FockBasis(2, 2, 3, 3), seed=0)
    m = husimi_sample(psi, 2, 2, 3, 3, 2000, seed=0).moment(*kl)
    assert np.trace(m).real == pytest.approx(1.0)
    assert np.abs(m - m.conj().T).max() < 1e-12
    assert np.linalg.eigvalsh(m).min() > -1e-12


def test_definetti_error_scalar_and_condensate():
    N = 6
    psi = ManyBodyVector.condensate(FockBasis(2, 2, N, N))
    ens = husimi_sample(psi, 2, 2, N, N, 100_000, seed=0)
    assert definetti_error(psi, 0, 0, ens) == pytest.approx(0.0, abs=1e-14)
    # closed form: 2 (d - 1) / (N + d)
    assert definetti_error(psi, 1, 0, ens) == pytest.approx(2 / (N + 2), abs=0.01)


def test_condensate_error_decreases_and_scales():
    res = definetti_scaling([4, 8, 16], d=2, count=100_000, seed=0)
    errs = [r["error"] for r in res.rows]
    assert errs[0] > errs[1] > errs[2]
    assert 0.5 <= res.slope <= 2.0
    for r in res.rows:
        assert r["error"] == pytest.approx(2 / (r["N"] + 2), abs=5 * r["standard_error"] + 0.01)


def test_ground_state_family_slope():
    errs = []
    for N in (4, 8, 16):
        _, framed = hartree_frame(ToyModel.random_miscible(2, 2, N, N, coupling=1.0, seed=3))
        _, psi = ground_state(build_hamiltonian(framed))
        errs.append(definetti_error(psi, 1, 0, husimi_sample(psi, 2, 2, N, N, 100_000, seed=N)))
    slope = np.polyfit(np.log(1 / np.array([4, 8, 16])), np.log(errs), 1)[0]
    assert 0.5 <= slope <= 2.0


def test_ensemble_roundtrip(tmp_path):
    psi = ManyBodyVector.random(FockBasis(2, 3, 2, 2), seed=0)
    ens = husimi_sample(psi, 2, 3, 2, 2, 500, seed=12)
    save_ensemble(ens, tmp_path / "e.bin", meta={"config_hash": "abc"})
    again, header = load_ensemble(tmp_path / "e.bin")
    assert header["seed"] == 12 and header["meta"]["config_hash"] == "abc"
    assert np.array_equal(again.weights, ens.weights) and np.array_equal(again.v, ens.v)
    with pytest.raises(ValueError, match="wrong file type"):
        (tmp_path / "x.bin").write_bytes(b"nothing here")
        load_ensemble(tmp_path / "x.bin")


def test_sampler_estimator():
    psi = ManyBodyVector.condensate(FockBasis(2, 2, 4, 4))
    est = HusimiSampler(n_samples=20_000, seed=1).fit(psi)
    assert est.error(1, 0) == pytest.approx(1 / 3, abs=0.02)
    assert est.get_params()["seed"] == 1
