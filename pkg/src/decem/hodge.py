"""Harmonic bases, the capacity-normalised mode, and the Helmholtz split.

The capacity potential solves the discrete Dirichlet problem u = 1 on the
obstacle boundary, u = 0 on the outer (truncation) boundary.  Its gradient,
restricted to interior edges, is exactly closed and co-closed in the reduced
complex, so du/sqrt(<du,du>) is the distinguished harmonic one-form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import DecOperators
from .mesh import OBSTACLE, OUTER, boundary_components
from .spectral import LaplaceOperator, SpectralDecomposition, assemble_laplacian


@dataclass
class HarmonicBasis:
    """M-orthonormal basis of ker Delta_p; for p=1 with obstacle the last
    vector is the capacity-normalised du."""

    p: int
    vectors: np.ndarray
    capacity: float | None = None
    u_full: np.ndarray | None = None
    distinguished: bool = False

    @property
    def L(self) -> int:
        return self.vectors.shape[1]


@dataclass
class HelmholtzSplit:
    phi: np.ndarray
    harmonic: np.ndarray
    exact: np.ndarray
    coexact: np.ndarray
    potential: np.ndarray

    def recomposition_error(self, ops: DecOperators, p: int) -> float:
        r = self.phi - (self.harmonic + self.exact + self.coexact)
        return ops.norm(p, r) / max(ops.norm(p, self.phi), 1e-300)


def _boundary_node_positions(ops: DecOperators, markers) -> np.ndarray:
    """Positions (0-simplex indices) of nodes lying on the given markers."""
    cplx = ops.complex
    d = cplx.dim
    facets = cplx.simplices[d - 1]
    idx0 = cplx.index(0)
    nodes = set()
    for marker in markers:
        for i in cplx.boundary_markers.get(marker, ()):
            for v in facets[i]:
                nodes.add(idx0[(int(v),)])
    return np.array(sorted(nodes), dtype=np.int64)


def dirichlet_potential(
    ops: DecOperators, boundary_values: list[tuple[np.ndarray, float]]
) -> np.ndarray:
    """Harmonic 0-cochain with prescribed values on boundary node groups.

    ``boundary_values`` is a list of (node-position array, value) pairs.
    Returns the full 0-cochain (indexed like the complex's 0-simplices).
    """
    cplx = ops.complex
    d0 = ops._d_full[0]
    m1 = ops._mass_full[1]
    S = (d0.T @ m1 @ d0).tocsr()
    n0 = cplx.n(0)
    u = np.zeros(n0)
    fixed = np.zeros(n0, dtype=bool)
    for nodes, val in boundary_values:
        u[np.asarray(nodes, dtype=np.int64)] = val
        fixed[np.asarray(nodes, dtype=np.int64)] = True
    free = np.nonzero(~fixed)[0]
    if len(free):
        Sff = S[free][:, free].tocsc()
        rhs = -(S[free] @ u)
        u[free] = spla.spsolve(Sff, rhs)
    return u


def capacity_and_psiL(
    ops: DecOperators, charge_component: int | None = None
) -> tuple[float, np.ndarray, np.ndarray]:
    """Capacity potential, its Dirichlet energy, and the normalised gradient.

    With ``charge_component`` None all obstacle components are held at 1; an
    integer charges only that obstacle component.  Returns (capacity, u on all
    nodes, psi_L on kept edges).
    """
    cplx = ops.complex
    if cplx.dim != 3:
        raise ValueError("capacity mode is specific to three dimensions")
    comps = [c for m, c in boundary_components(cplx) if m == OBSTACLE]
    if not comps:
        raise ValueError("no obstacle boundary present")
    outer_nodes = _boundary_node_positions(ops, [m for m in cplx.boundary_markers if m != OBSTACLE])
    bvals: list[tuple[np.ndarray, float]] = [(outer_nodes, 0.0)]
    d = cplx.dim
    facets = cplx.simplices[d - 1]
    idx0 = cplx.index(0)
    for ci, comp in enumerate(comps):
        nodes = np.array(
            sorted({idx0[(int(v),)] for i in comp for v in facets[i]}), dtype=np.int64
        )
        on = charge_component is None or charge_component == ci
        bvals.append((nodes, 1.0 if on else 0.0))
    u = dirichlet_potential(ops, bvals)
    du_full = ops._d_full[0] @ u
    m1 = ops._mass_full[1]
    cap = float(du_full @ (m1 @ du_full))
    psi = du_full[ops.kept[1]]
    nrm = np.sqrt(psi @ (ops.mass(1) @ psi))
    if nrm == 0:
        raise ValueError("capacity potential has vanishing gradient; mesh disconnected?")
    return cap, u, psi / nrm


def harmonic_basis(
    dec: SpectralDecomposition,
    ops: DecOperators,
    gap_floor: float = 1e3,
) -> HarmonicBasis:
    """Extract ker Delta_p with the distinguished last vector when applicable."""
    if dec.gap_ratio < gap_floor:
        raise ValueError(
            f"ambiguous kernel: spectral gap ratio {dec.gap_ratio:.2e} below {gap_floor:.0e}"
        )
    p = dec.p
    cplx = ops.complex
    has_obstacle = OBSTACLE in cplx.boundary_markers
    if p == 1 and cplx.dim == 3 and has_obstacle and dec.kernel_dim > 0:
        from .spectral import harmonic_basis_with_distinguished

        cap, u, _psi = capacity_and_psiL(ops)
        basis = harmonic_basis_with_distinguished(dec, ops, u)
        hb = HarmonicBasis(p, basis, capacity=cap, u_full=u, distinguished=True)
    else:
        hb = HarmonicBasis(p, dec.kernel_basis().copy())
    _check_harmonic(ops, hb)
    return hb


def _check_harmonic(ops: DecOperators, hb: HarmonicBasis) -> None:
    p = hb.p
    d = ops.complex.dim
    scale = 1.0
    for k in range(hb.L):
        v = hb.vectors[:, k]
        errs = []
        if p < d:
            errs.append(ops.norm(p + 1, ops.d(p) @ v))
        if p > 0:
            errs.append(ops.norm(p - 1, ops.apply_codifferential(p, v)))
        if errs and max(errs) > 1e-8 * scale:
            raise AssertionError(f"kernel vector {k} is not harmonic: residual {max(errs):.2e}")


def sector_split(
    dec: SpectralDecomposition, ops: DecOperators
) -> tuple[np.ndarray, np.ndarray]:
    """Split ker Delta_1 into charge modes (per-component capacity gradients)
    and the topological complement.  Returns (q_basis, top_basis)."""
    comps = [c for m, c in boundary_components(ops.complex) if m == OBSTACLE]
    K = dec.kernel_basis()
    M = dec.M
    if not comps or K.shape[1] == 0:
        return np.zeros((K.shape[0], 0)), K.copy()
    qs = []
    for ci in range(len(comps)):
        _cap, _u, psi = capacity_and_psiL(ops, charge_component=ci)
        qs.append(psi)
    Q = np.column_stack(qs)
    # orthonormalise inside the kernel
    coef = K.T @ (M @ Q)
    Qk = K @ coef
    g = Qk.T @ (M @ Qk)
    w, U = np.linalg.eigh(g)
    keep = w > 1e-10 * w.max()
    q_basis = Qk @ (U[:, keep] / np.sqrt(w[keep])[None, :])
    # complement within the kernel
    resid = K - q_basis @ (q_basis.T @ (M @ K))
    g2 = resid.T @ (M @ resid)
    w2, U2 = np.linalg.eigh(g2)
    keep2 = w2 > 1e-8
    top_basis = resid @ (U2[:, keep2] / np.sqrt(w2[keep2])[None, :])
    return q_basis, top_basis


def threshold_integral(dec: SpectralDecomposition, phi: np.ndarray, delta: float) -> float:
    """int_0^delta <(Delta + l^2)^-1 phi, phi> dl for kernel-free phi.

    The quantity that distinguishes charged from neutral smearing as the
    truncation radius grows: it stays bounded iff phi is in the domain of the
    quarter-power in the continuum limit.
    """
    c = dec.coefficients(phi)
    kd = dec.kernel_dim
    lam = np.sqrt(dec.evals[kd:])
    return float(np.sum(c[kd:] ** 2 * np.arctan(delta / lam) / lam))


class HelmholtzSolver:
    """Kernel-constrained solver for the three-way split, factorized once."""

    def __init__(self, dec: SpectralDecomposition, op: LaplaceOperator):
        import scipy.linalg as sla

        self.dec = dec
        self.op = op
        K = dec.kernel_basis()
        M = op.M
        n = op.n
        L = K.shape[1]
        kkt = np.zeros((n + L, n + L))
        kkt[:n, :n] = op.S_dense()
        if L:
            MK = np.asarray(M @ K)
            kkt[:n, n:] = MK
            kkt[n:, :n] = MK.T
        self._lu = sla.lu_factor(kkt)
        self._K = K
        self._n, self._L = n, L

    def split(self, phi: np.ndarray) -> HelmholtzSplit:
        import scipy.linalg as sla

        op, dec = self.op, self.dec
        ops, p = op.ops, op.p
        M = op.M
        K = self._K
        harmonic = K @ (K.T @ (M @ phi)) if self._L else np.zeros_like(phi)
        rhs = np.concatenate([M @ (phi - harmonic), np.zeros(self._L)])
        phi1 = sla.lu_solve(self._lu, rhs)[: self._n]
        d = ops.complex.dim
        exact = (
            ops.d(p - 1) @ ops.apply_codifferential(p, phi1) if p > 0 else np.zeros_like(phi)
        )
        coexact = (
            ops.apply_codifferential(p + 1, ops.d(p) @ phi1) if p < d else np.zeros_like(phi)
        )
        return HelmholtzSplit(
            phi=np.array(phi, copy=True),
            harmonic=harmonic,
            exact=exact,
            coexact=coexact,
            potential=phi1,
        )


def helmholtz(
    phi: np.ndarray,
    dec: SpectralDecomposition,
    op: LaplaceOperator,
) -> HelmholtzSplit:
    """Three-way Hodge-Kodaira split via a kernel-constrained linear solve."""
    return HelmholtzSolver(dec, op).split(phi)
