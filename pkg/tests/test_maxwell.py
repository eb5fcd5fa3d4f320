import numpy as np
import pytest

from decem.forms import DecOperators, reduce_relative
from decem.geometries import box_complex
from decem.maxwell import (
    CurrentSource,
    MaxwellState,
    classical_energy,
    constraint_residuals,
    evolve,
    leapfrog_oracle,
    potential_evolve,
)
from decem.mesh import carve_obstacle
from decem.spectral import assemble_laplacian, eig
from decem.timeprofiles import TimeProfile


def _random_constrained(b, seed=0):
    rng = np.random.default_rng(seed)
    E0 = b.ops.apply_codifferential(2, rng.standard_normal(b.ops.n(2)))
    B0 = b.ops.d(1) @ rng.standard_normal(b.ops.n(1))
    return MaxwellState(0.0, E0, B0)


def test_zero_data_zero_solution(qft_bundle):
    b = qft_bundle
    s0 = MaxwellState(0.0, np.zeros(b.ops.n(1)), np.zeros(b.ops.n(2)))
    states = evolve(b.dec1, b.dec2, b.ops, s0, None, [0.5, 2.0])
    for s in states:
        assert np.abs(s.E).max() == 0 and np.abs(s.B).max() == 0


def test_harmonic_data_static(qft_bundle):
    b = qft_bundle
    psi = b.dec1.kernel_basis()[:, 0]
    states = evolve(
        b.dec1, b.dec2, b.ops, MaxwellState(0.0, psi, np.zeros(b.ops.n(2))), None,
        [0.0, 1.3, 4.0],
    )
    for s in states:
        assert b.ops.norm(1, s.E - psi) <= 1e-10
        assert b.ops.norm(2, s.B) <= 1e-10


def test_energy_conservation_and_residuals(qft_bundle):
    b = qft_bundle
    s0 = _random_constrained(b)
    lam_min = float(np.sqrt(b.dec1.evals[b.dec1.kernel_dim]))
    times = np.linspace(0.0, 10.0 / lam_min, 6)
    states = evolve(b.dec1, b.dec2, b.ops, s0, None, times)
    e0 = classical_energy(b.ops, s0)
    for s in states:
        assert abs(classical_energy(b.ops, s) - e0) / e0 <= 1e-8
        res = constraint_residuals(b.ops, s)
        assert max(res.values()) <= 1e-8


def test_leapfrog_oracle_agreement(qft_bundle):
    b = qft_bundle
    s0 = _random_constrained(b, seed=5)
    t1 = 0.8
    s_spec = evolve(b.dec1, b.dec2, b.ops, s0, None, [t1])[0]
    s_leap = leapfrog_oracle(b.ops, s0, t1, 40000)
    assert b.ops.norm(1, s_spec.E - s_leap.E) <= 1e-7 * b.ops.norm(1, s_spec.E)
    assert b.ops.norm(2, s_spec.B - s_leap.B) <= 1e-7 * b.ops.norm(2, s_spec.B)


def test_time_reversal(qft_bundle):
    b = qft_bundle
    s0 = _random_constrained(b, seed=6)
    fwd = evolve(b.dec1, b.dec2, b.ops, s0, None, [2.3])[0]
    back = evolve(b.dec1, b.dec2, b.ops, MaxwellState(0.0, fwd.E, fwd.B), None, [-2.3])[0]
    assert b.ops.norm(1, back.E - s0.E) <= 1e-9 * max(b.ops.norm(1, s0.E), 1.0)
    assert b.ops.norm(2, back.B - s0.B) <= 1e-9 * max(b.ops.norm(2, s0.B), 1.0)


def test_superposition(qft_bundle):
    b = qft_bundle
    s1 = _random_constrained(b, seed=7)
    s2 = _random_constrained(b, seed=8)
    both = MaxwellState(0.0, s1.E + 2 * s2.E, s1.B + 2 * s2.B)
    t = 1.44
    a = evolve(b.dec1, b.dec2, b.ops, s1, None, [t])[0]
    c = evolve(b.dec1, b.dec2, b.ops, s2, None, [t])[0]
    d = evolve(b.dec1, b.dec2, b.ops, both, None, [t])[0]
    assert b.ops.norm(1, d.E - (a.E + 2 * c.E)) <= 1e-12 * max(b.ops.norm(1, d.E), 1.0)
    assert b.ops.norm(2, d.B - (a.B + 2 * c.B)) <= 1e-12 * max(b.ops.norm(2, d.B), 1.0)


def test_initial_constraint_violation_rejected(qft_bundle):
    b = qft_bundle
    rng = np.random.default_rng(9)
    bad_B = rng.standard_normal(b.ops.n(2))  # not closed
    with pytest.raises(ValueError, match="magnetic"):
        evolve(b.dec1, b.dec2, b.ops, MaxwellState(0.0, np.zeros(b.ops.n(1)), bad_B), None, [1.0])
    bad_E = rng.standard_normal(b.ops.n(1))
    with pytest.raises(ValueError, match="Gauss"):
        evolve(
            b.dec1, b.dec2, b.ops,
            MaxwellState(0.0, bad_E, b.ops.d(1) @ rng.standard_normal(b.ops.n(1))),
            None, [1.0],
        )


def test_corrupted_state_residual_equals_noise(qft_bundle):
    b = qft_bundle
    s0 = _random_constrained(b, seed=10)
    s = evolve(b.dec1, b.dec2, b.ops, s0, None, [0.9])[0]
    rng = np.random.default_rng(11)
    noise = rng.standard_normal(b.ops.n(2))
    corrupted = MaxwellState(s.t, s.E, s.B + noise)
    res = constraint_residuals(b.ops, corrupted)
    expect = b.ops.norm(3, b.ops.d(2) @ noise)
    assert abs(res["dB"] - expect) <= 1e-9 * expect


def _source_edge_cochain(b, seed=12):
    rng = np.random.default_rng(seed)
    cplx = b.scenario.carved
    edges = cplx.simplices[1][b.ops.kept[1]]
    mid = 0.5 * (cplx.vertices[edges[:, 0]] + cplx.vertices[edges[:, 1]])
    mask = np.linalg.norm(mid - np.array([1.2, 1.2, 1.2]), axis=1) < 1.0
    return rng.standard_normal(b.ops.n(1)) * mask


def test_consistent_source_continuity(qft_bundle):
    b = qft_bundle
    src = CurrentSource.consistent(b.ops, TimeProfile.bump(0.1, 0.9), _source_edge_cochain(b))
    assert src.continuity_residual(b.ops, np.linspace(0, 1.5, 7)) <= 1e-10


def test_sourced_evolution_keeps_constraints(qft_bundle):
    b = qft_bundle
    src = CurrentSource.consistent(b.ops, TimeProfile.bump(0.1, 0.9), _source_edge_cochain(b))
    s0 = MaxwellState(0.0, np.zeros(b.ops.n(1)), np.zeros(b.ops.n(2)))
    for s in evolve(b.dec1, b.dec2, b.ops, s0, src, [0.5, 1.2, 2.0]):
        res = constraint_residuals(b.ops, s, src)
        assert max(res.values()) <= 1e-8


def test_potential_two_path_and_gauge(qft_bundle):
    b = qft_bundle
    rng = np.random.default_rng(13)
    A0 = b.ops.apply_codifferential(2, rng.standard_normal(b.ops.n(2)))
    E0 = 0.5 * b.ops.apply_codifferential(2, rng.standard_normal(b.ops.n(2)))
    B0 = b.ops.d(1) @ A0
    src = CurrentSource.consistent(b.ops, TimeProfile.bump(0.2, 1.2), _source_edge_cochain(b))
    trajs = potential_evolve(b.dec0, b.dec1, b.ops, A0, -E0, src, [0.0, 0.9, 1.9])
    for tr in trajs:
        assert tr.gauge_residual(b.ops) <= 1e-8
    s_direct = evolve(b.dec1, b.dec2, b.ops, MaxwellState(0.0, E0, B0), src, [1.9])[0]
    s_pot = trajs[-1].field_state(b.ops)
    assert b.ops.norm(1, s_pot.E - s_direct.E) <= 1e-8 * max(b.ops.norm(1, s_direct.E), 1.0)
    assert b.ops.norm(2, s_pot.B - s_direct.B) <= 1e-8 * max(b.ops.norm(2, s_direct.B), 1.0)


def test_zero_potential_for_zero_data(qft_bundle):
    b = qft_bundle
    trajs = potential_evolve(
        b.dec0, b.dec1, b.ops, np.zeros(b.ops.n(1)), np.zeros(b.ops.n(1)), None, [0.7]
    )
    assert np.abs(trajs[0].A).max() == 0 and np.abs(trajs[0].phi).max() == 0


def test_non_coclosed_potential_rejected(qft_bundle):
    b = qft_bundle
    rng = np.random.default_rng(14)
    A0 = b.ops.d(0) @ rng.standard_normal(b.ops.n(0))  # exact, not co-closed
    with pytest.raises(ValueError, match="co-closed"):
        potential_evolve(b.dec0, b.dec1, b.ops, A0, np.zeros(b.ops.n(1)), None, [1.0])


def test_inconsistent_source_gauge_residual_grows(qft_bundle):
    """Negative control: a current with no matching charge breaks Lorenz gauge."""
    b = qft_bundle
    a = _source_edge_cochain(b, seed=15)
    bad = CurrentSource(rho_terms=[], j_terms=[(TimeProfile.bump(0.1, 0.9), a)])
    assert bad.continuity_residual(b.ops, np.linspace(0, 1.5, 7)) > 1.0
    trajs = potential_evolve(
        b.dec0, b.dec1, b.ops, np.zeros(b.ops.n(1)), np.zeros(b.ops.n(1)), bad, [1.5]
    )
    assert trajs[0].gauge_residual(b.ops) > 1e-4


def test_energy_of_unit_harmonic_mode(qft_bundle):
    b = qft_bundle
    psi = b.dec1.kernel_basis()[:, 0]
    s = MaxwellState(0.0, psi, np.zeros(b.ops.n(2)))
    assert abs(classical_energy(b.ops, s) - 0.5) <= 1e-12


def test_zero_mode_moves_linearly(qft_bundle):
    """Kernel Cauchy data evolves like a free particle: A(t) = A0 + t Adot0."""
    b = qft_bundle
    psi = b.dec1.kernel_basis()[:, 0]
    trajs = potential_evolve(b.dec0, b.dec1, b.ops, psi, psi, None, [0.0, 1.0, 2.5])
    for tr in trajs:
        assert b.ops.norm(1, tr.A - (1.0 + tr.t) * psi) <= 1e-9


@pytest.mark.slow
def test_finite_propagation_surrogate():
    """Smooth localized B-data stays below 1e-6 outside the light cone.

    With E0 = 0 and no source the engine's magnetic field is exactly
    cos(t sqrt(Delta_2)) B0, which is what is evaluated here on a mesh fine
    enough to resolve the datum.
    """
    box = box_complex((4, 4, 4), res=2)
    sc = carve_obstacle(box, set())
    ops = reduce_relative(DecOperators(sc.carved))
    dec2 = eig(assemble_laplacian(ops, 2))
    cplx = sc.carved
    edges = cplx.simplices[1][ops.kept[1]]
    p0, p1 = cplx.vertices[edges[:, 0]], cplx.vertices[edges[:, 1]]
    c0 = np.array([0.8, 0.8, 0.8])

    def bumpf(x, width=0.75):
        r2 = np.sum((x - c0) ** 2, axis=-1) / width**2
        return np.where(r2 < 1, np.exp(1 - 1 / (1 - np.minimum(r2, 0.999999))), 0.0)

    A0 = 0.5 * (bumpf(p0) + bumpf(p1)) * ((p1 - p0) @ np.array([0.3, -0.2, 0.9]))
    B0 = ops.d(1) @ A0
    fmid = cplx.vertices[cplx.simplices[2][ops.kept[2]]].mean(axis=1)
    t = 0.35
    Bt = dec2.apply_function(lambda m: np.cos(t * np.sqrt(m)), B0, "include")
    dist = np.linalg.norm(fmid - c0, axis=1)
    leaks = []
    for probe in (3.8, 4.3, 4.8):
        sel = dist > probe
        leaks.append(np.abs(Bt[sel]).max() / np.abs(B0).max())
    assert leaks[0] > leaks[1] > leaks[2]
    assert leaks[2] <= 1e-6
