"""Shared fixtures: the expensive spectral bundles are built once per session."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from decem.forms import DecOperators, reduce_relative
from decem.geometries import ball_shell_complex, canned_scenario, qft_box_scenario
from decem.hodge import capacity_and_psiL
from decem.mesh import carve_obstacle
from decem.qft import FieldCalculus
from decem.spectral import assemble_laplacian, build_Q_eps, eig


@dataclass
class QftBundle:
    scenario: object
    ops: object
    L0: object
    L1: object
    L2: object
    dec0: object
    dec1: object
    dec2: object
    Q: object
    fc: FieldCalculus
    capacity: float
    u: np.ndarray


@pytest.fixture(scope="session")
def qft_bundle() -> QftBundle:
    sc = qft_box_scenario()
    ops = reduce_relative(DecOperators(sc.carved))
    L0 = assemble_laplacian(ops, 0)
    L1 = assemble_laplacian(ops, 1)
    L2 = assemble_laplacian(ops, 2)
    dec0, dec1, dec2 = eig(L0), eig(L1), eig(L2)
    cap, u, _psi = capacity_and_psiL(ops)
    Q = build_Q_eps(
        dec1, ops, u, eps=1.0, center=np.array([3.0, 3.0, 3.0]),
        r_plateau=2.0, r_zero=2.8,
    )
    fc = FieldCalculus(ops, dec0, dec1, dec2, Q=Q)
    return QftBundle(sc, ops, L0, L1, L2, dec0, dec1, dec2, Q, fc, cap, u)


@pytest.fixture(scope="session")
def stress_bundle():
    from decem.geometries import stress_box_scenario
    from decem.stress import ScenarioStress, local_energy_density, operator_difference

    st = ScenarioStress.build(stress_box_scenario())
    D1 = operator_difference(st, "D1")
    D2 = operator_difference(st, "D2")
    rep = local_energy_density(st, D1, D2)
    return st, D1, D2, rep


@dataclass
class ShellBundle:
    scenario: object
    ops: object
    dec: object  # partial, lumped-down (kernel exact)
    capacity: float
    u: np.ndarray


@pytest.fixture(scope="session")
def shell_bundle() -> ShellBundle:
    shell = ball_shell_complex(0.5, 4.0, n_core=4, n_layers=10)
    sc = carve_obstacle(shell, {"core"})
    ops = reduce_relative(DecOperators(sc.carved))
    dec = eig(assemble_laplacian(ops, 1, lumped_down=True), count=6)
    cap, u, _psi = capacity_and_psiL(ops)
    return ShellBundle(sc, ops, dec, cap, u)


@dataclass
class WormholeBundle:
    scenario: object
    ops: object
    dec1: object
    Q: object
    fc: FieldCalculus
    q_basis: np.ndarray
    top_basis: np.ndarray


@pytest.fixture(scope="session")
def wormhole_bundle() -> WormholeBundle:
    from decem.hodge import sector_split

    sc = canned_scenario("wormhole_obstacle")
    ops = reduce_relative(DecOperators(sc.carved))
    dec1 = eig(assemble_laplacian(ops, 1))
    _cap, u, _psi = capacity_and_psiL(ops)
    Q = build_Q_eps(
        dec1, ops, u, eps=1.0, center=np.array([6.0, 3.0, 3.0]),
        r_plateau=2.0, r_zero=2.6,
    )
    fc = FieldCalculus(ops, None, dec1, None, Q=Q)
    qb, tb = sector_split(dec1, ops)
    return WormholeBundle(sc, ops, dec1, Q, fc, qb, tb)
