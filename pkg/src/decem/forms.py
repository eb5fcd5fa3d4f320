"""Cochain spaces and the twisted exterior calculus on a simplicial complex.

Discretization is by lowest-order Whitney forms.  The material enters through
the degree-dependent weight eps^2*mu/(eps*mu)^p multiplying the L2 pairing of
p-forms, which makes the codifferential the adjoint of d in the weighted
inner product with no extra terms.  Relative boundary conditions are imposed
by removing every degree of freedom sitting inside a marked boundary facet.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import factorial

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import SimplicialComplex


@dataclass
class Cochain:
    """Coefficient vector over the (kept) p-simplices of a complex."""

    degree: int
    values: np.ndarray
    complex: SimplicialComplex
    basis: str = "whitney"

    def copy(self) -> "Cochain":
        return Cochain(self.degree, self.values.copy(), self.complex, self.basis)


@dataclass
class MaterialField:
    """Piecewise-constant permittivity and permeability, one value per region tag."""

    eps: dict = field(default_factory=dict)
    mu: dict = field(default_factory=dict)

    def __post_init__(self):
        for d in (self.eps, self.mu):
            for tag, val in d.items():
                if val <= 0:
                    raise ValueError(f"material value for region {tag!r} must be positive")

    @classmethod
    def vacuum(cls) -> "MaterialField":
        return cls()

    def eps_of(self, tag: str) -> float:
        return float(self.eps.get(tag, 1.0))

    def mu_of(self, tag: str) -> float:
        return float(self.mu.get(tag, 1.0))

    def weight(self, tag: str, p: int) -> float:
        """tau on p-forms: eps^2 mu (eps mu)^(-p)."""
        e, m = self.eps_of(tag), self.mu_of(tag)
        return e * e * m / (e * m) ** p

    def bounds(self, tags) -> tuple[float, float]:
        vals = [self.eps_of(t) * self.mu_of(t) for t in set(tags)]
        return (min(vals), max(vals))

    def is_vacuum(self) -> bool:
        return all(v == 1.0 for v in self.eps.values()) and all(
            v == 1.0 for v in self.mu.values()
        )


# -- local geometry ---------------------------------------------------------------


def _cell_geometry(cplx: SimplicialComplex):
    """Volumes, barycentric gradients and Gram matrices for every top cell."""
    coords = cplx.cell_vertex_coords()
    d = cplx.dim
    e = np.transpose(coords[:, 1:, :] - coords[:, :1, :], (0, 2, 1))  # (nc, d, d) columns
    vols = np.abs(np.linalg.det(e)) / factorial(d)
    if np.any(vols <= 0):
        raise ValueError("degenerate cell in complex")
    einv = np.linalg.inv(e)  # rows j of einv = gradient of lambda_{j+1}
    grads = np.empty((len(coords), d + 1, d))
    grads[:, 1:, :] = einv
    grads[:, 0, :] = -einv.sum(axis=1)
    gram = np.einsum("cad,cbd->cab", grads, grads)
    return vols, grads, gram


def _lambda_integrals(d: int) -> np.ndarray:
    """(d+1)x(d+1) matrix of integrals of lambda_a lambda_b over the unit-volume cell."""
    return (np.ones((d + 1, d + 1)) + np.eye(d + 1)) / ((d + 1) * (d + 2))


def build_d(cplx: SimplicialComplex, p: int) -> sp.csr_matrix:
    """Signed incidence matrix mapping p-cochains to (p+1)-cochains."""
    if not (0 <= p < cplx.dim):
        raise ValueError(f"degree {p} out of range for dim {cplx.dim}")
    idx = cplx.index(p)
    rows, cols, vals = [], [], []
    for i, s in enumerate(cplx.simplices[p + 1]):
        for k in range(p + 2):
            rows.append(i)
            cols.append(idx[tuple(np.delete(s, k))])
            vals.append((-1) ** k)
    return sp.csr_matrix(
        (vals, (rows, cols)), shape=(cplx.n(p + 1), cplx.n(p)), dtype=np.int64
    )


def local_mass_blocks(
    cplx: SimplicialComplex, material: MaterialField, p: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell Whitney mass contributions.

    Returns (face_ids, blocks): face_ids[c, i] is the global p-simplex index of
    local face i in cell c, blocks[c] the local (weighted) mass matrix.
    """
    d = cplx.dim
    if not (0 <= p <= d):
        raise ValueError(f"degree {p} out of range")
    vols, grads, gram = _cell_geometry(cplx)
    nc = len(vols)
    lam = _lambda_integrals(d)
    weights = np.array([material.weight(tag, p) for tag in cplx.regions]) * vols

    faces = list(combinations(range(d + 1), p + 1))
    nloc = len(faces)
    idx = cplx.index(p)
    cells = cplx.simplices[d]
    face_ids = np.empty((nc, nloc), dtype=np.int64)
    for li, comb in enumerate(faces):
        sub = cells[:, comb]
        face_ids[:, li] = [idx[tuple(row)] for row in sub]

    pf = factorial(p) ** 2
    blocks = np.zeros((nc, nloc, nloc))
    for a, fa in enumerate(faces):
        for b, fb in enumerate(faces):
            if b < a:
                continue
            acc = np.zeros(nc)
            for k in range(p + 1):
                ra = [v for v in fa if v != fa[k]]
                for l in range(p + 1):
                    rb = [v for v in fb if v != fb[l]]
                    if p == 0:
                        minor = np.ones(nc)
                    elif p == 1:
                        minor = gram[:, ra[0], rb[0]]
                    else:
                        minor = np.linalg.det(gram[:, ra][:, :, rb])
                    acc += ((-1) ** (k + l)) * lam[fa[k], fb[l]] * minor
            blocks[:, a, b] = pf * acc
            blocks[:, b, a] = blocks[:, a, b]
    blocks *= weights[:, None, None]
    return face_ids, blocks


def build_mass(
    cplx: SimplicialComplex, material: MaterialField, p: int
) -> sp.csr_matrix:
    """Assembled tau-weighted Whitney mass matrix on all p-simplices."""
    face_ids, blocks = local_mass_blocks(cplx, material, p)
    nloc = face_ids.shape[1]
    rows = np.repeat(face_ids, nloc, axis=1).ravel()
    cols = np.tile(face_ids, (1, nloc)).ravel()
    mat = sp.csr_matrix(
        (blocks.ravel(), (rows, cols)), shape=(cplx.n(p), cplx.n(p))
    )
    mat.sum_duplicates()
    sym_err = abs(mat - mat.T).max() if mat.nnz else 0.0
    if sym_err > 1e-12 * (abs(mat).max() or 1.0):
        raise AssertionError("mass matrix assembly lost symmetry")
    return mat


# -- operator bundle ---------------------------------------------------------------


class DecOperators:
    """Incidence, weighted mass matrices and masks for one complex.

    ``reduced`` selects whether the matrices exposed by :meth:`d` and
    :meth:`mass` are restricted to kept (interior) degrees of freedom.
    """

    def __init__(
        self,
        cplx: SimplicialComplex,
        material: MaterialField | None = None,
        reduced: bool = False,
    ):
        self.complex = cplx
        self.material = material if material is not None else MaterialField.vacuum()
        self.reduced = reduced
        d = cplx.dim
        self._d_full = {p: build_d(cplx, p) for p in range(d)}
        self._mass_full = {p: build_mass(cplx, self.material, p) for p in range(d + 1)}
        self.kept = {}
        for p in range(d + 1):
            masked = cplx.boundary_subsimplices(p)
            keep = np.ones(cplx.n(p), dtype=bool)
            keep[masked] = False
            self.kept[p] = np.nonzero(keep)[0]
        self._mass_factor: dict[int, object] = {}
        self._codiff: dict[int, np.ndarray] = {}

    # matrix access -----------------------------------------------------------

    def n(self, p: int) -> int:
        return len(self.kept[p]) if self.reduced else self.complex.n(p)

    def d(self, p: int) -> sp.csr_matrix:
        mat = self._d_full[p]
        if not self.reduced:
            return mat
        return mat[self.kept[p + 1]][:, self.kept[p]].tocsr()

    def mass(self, p: int) -> sp.csr_matrix:
        mat = self._mass_full[p]
        if not self.reduced:
            return mat
        return mat[self.kept[p]][:, self.kept[p]].tocsr()

    def mass_factor(self, p: int):
        if p not in self._mass_factor:
            self._mass_factor[p] = spla.splu(self.mass(p).tocsc())
        return self._mass_factor[p]

    def mass_solve(self, p: int, rhs: np.ndarray) -> np.ndarray:
        out = self.mass_factor(p).solve(np.asarray(rhs, dtype=float))
        return out

    # calculus ------------------------------------------------------------------

    def apply_d(self, p: int, x: np.ndarray) -> np.ndarray:
        return self.d(p) @ x

    def apply_codifferential(self, p: int, x: np.ndarray) -> np.ndarray:
        """delta-twiddle on p-cochains: M_{p-1}^{-1} d_{p-1}^T M_p x."""
        if p <= 0:
            raise ValueError("codifferential needs degree >= 1")
        rhs = self.d(p - 1).T @ (self.mass(p) @ x)
        if np.iscomplexobj(x):
            return self.mass_solve(p - 1, rhs.real) + 1j * self.mass_solve(p - 1, rhs.imag)
        return self.mass_solve(p - 1, rhs)

    def codifferential(self, p: int) -> np.ndarray:
        """Dense codifferential matrix (cached)."""
        if p not in self._codiff:
            rhs = (self.d(p - 1).T @ self.mass(p)).toarray()
            self._codiff[p] = self.mass_factor(p - 1).solve(rhs)
        return self._codiff[p]

    def inner(self, p: int, x: np.ndarray, y: np.ndarray) -> float | complex:
        return np.vdot(y, self.mass(p) @ x) if np.iscomplexobj(x) or np.iscomplexobj(y) else float(
            y @ (self.mass(p) @ x)
        )

    def norm(self, p: int, x: np.ndarray) -> float:
        xr = np.asarray(x)
        v = np.vdot(xr, self.mass(p) @ xr)
        return float(np.sqrt(abs(v)))

    # restriction helpers ---------------------------------------------------------

    def restrict(self, p: int, full_values: np.ndarray) -> np.ndarray:
        return np.asarray(full_values)[self.kept[p]]

    def extend(self, p: int, kept_values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.complex.n(p), dtype=np.asarray(kept_values).dtype)
        out[self.kept[p]] = kept_values
        return out

    def kept_pos(self, p: int) -> dict[int, int]:
        return {int(g): i for i, g in enumerate(self.kept[p])}

    # per-cell data for local traces ----------------------------------------------

    def local_mass(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        return local_mass_blocks(self.complex, self.material, p)

    def component_blocks(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell component-resolved Whitney pairings (3D only).

        Returns (face_ids, blocks) with blocks[c, i, l, j, k] the integral over
        cell c of (w_i)_j (tau w_l)_k, where 2-forms enter through their Hodge
        vector proxies.
        """
        cplx = self.complex
        if cplx.dim != 3 or p not in (1, 2):
            raise ValueError("component blocks only for 1- and 2-forms in 3D")
        vols, grads, gram = _cell_geometry(cplx)
        nc = len(vols)
        lam = _lambda_integrals(3)
        weights = np.array(
            [self.material.weight(tag, p) for tag in cplx.regions]
        ) * vols

        faces = list(combinations(range(4), p + 1))
        idx = cplx.index(p)
        cells = cplx.simplices[3]
        face_ids = np.empty((nc, len(faces)), dtype=np.int64)
        for li, comb in enumerate(faces):
            face_ids[:, li] = [idx[tuple(row)] for row in cells[:, comb]]

        # terms of each Whitney basis function: list of (lambda index, vector (nc,3))
        def terms(comb):
            if p == 1:
                a, b = comb
                return [(a, grads[:, b, :]), (b, -grads[:, a, :])]
            a, b, c = comb
            return [
                (a, 2 * np.cross(grads[:, b, :], grads[:, c, :])),
                (b, -2 * np.cross(grads[:, a, :], grads[:, c, :])),
                (c, 2 * np.cross(grads[:, a, :], grads[:, b, :])),
            ]

        tlist = [terms(comb) for comb in faces]
        nloc = len(faces)
        blocks = np.zeros((nc, nloc, nloc, 3, 3))
        for i in range(nloc):
            for l in range(nloc):
                acc = np.zeros((nc, 3, 3))
                for la, va in tlist[i]:
                    for lb, vb in tlist[l]:
                        acc += lam[la, lb] * np.einsum("cj,ck->cjk", va, vb)
                blocks[:, i, l] = acc
        blocks *= weights[:, None, None, None, None]
        return face_ids, blocks


def reduce_relative(ops: DecOperators) -> DecOperators:
    """Return the operator bundle restricted to kept (relative) DOFs."""
    if ops.reduced:
        return ops
    out = DecOperators.__new__(DecOperators)
    out.complex = ops.complex
    out.material = ops.material
    out.reduced = True
    out._d_full = ops._d_full
    out._mass_full = ops._mass_full
    out.kept = ops.kept
    out._mass_factor = {}
    out._codiff = {}
    return out
