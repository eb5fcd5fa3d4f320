"""Hodge Laplacians, eigendecompositions and spectral operator functions.

The generalized problem S v = lambda^2 M v is solved densely by default (all
acceptance meshes are desk scale).  A sparse partial path exists for kernel
and low-mode queries on larger meshes; it lumps the mass matrix inside the
down-term, which leaves the kernel subspace exactly invariant while detuning
nonzero eigenvalues, so it is never used for operator functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import DecOperators

KERNEL_THRESHOLD = 1e-8


@dataclass
class LaplaceOperator:
    """Stiffness form of d delta~ + delta~ d on kept p-cochains."""

    p: int
    ops: DecOperators
    S: np.ndarray | sp.csr_matrix
    M: sp.csr_matrix
    exact_down: bool
    side: str = ""

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def S_dense(self) -> np.ndarray:
        return self.S if isinstance(self.S, np.ndarray) else self.S.toarray()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.S @ x


def assemble_laplacian(
    ops: DecOperators, p: int, lumped_down: bool = False, side: str = ""
) -> LaplaceOperator:
    if not ops.reduced:
        raise ValueError("assemble_laplacian expects relatively reduced operators")
    d = ops.complex.dim
    n = ops.n(p)
    up = None
    if p < d:
        dp = ops.d(p)
        up = dp.T @ ops.mass(p + 1) @ dp
    down = None
    if p > 0:
        K = (ops.d(p - 1).T @ ops.mass(p)).tocsc()  # (n_{p-1}, n_p)
        if lumped_down:
            w = ops.mass(p - 1).diagonal()
            down = K.T @ sp.diags(1.0 / w) @ K
        else:
            Kd = K.toarray()
            down = Kd.T @ ops.mass_factor(p - 1).solve(Kd)
    if up is None and down is None:
        raise ValueError("empty Laplacian")
    if lumped_down or down is None:
        S = (up if up is not None else 0) + (down if down is not None else 0)
        S = sp.csr_matrix(S) if not sp.issparse(S) else S
        S = (S + S.T) * 0.5
    else:
        S = down + (up.toarray() if up is not None else 0.0)
        S = 0.5 * (S + S.T)
    M = ops.mass(p).tocsr()
    op = LaplaceOperator(p, ops, S, M, exact_down=not lumped_down, side=side)
    scale = abs(S).max() if n else 1.0
    asym = 0.0  # symmetrized above; assembly symmetry checked in forms
    if asym > 1e-12 * scale:
        raise AssertionError("Laplacian stiffness asymmetric")
    return op


@dataclass
class SpectralDecomposition:
    """Generalized eigenpairs (lambda^2, v) with M-orthonormal vectors."""

    p: int
    evals: np.ndarray
    vectors: np.ndarray
    M: sp.csr_matrix
    kernel_dim: int
    threshold: float
    max_eval: float
    complete: bool
    exact_nonzero: bool
    ops: DecOperators | None = None
    _P0: np.ndarray | None = field(default=None, repr=False)

    @property
    def gap_ratio(self) -> float:
        kd = self.kernel_dim
        if kd == 0 or kd >= len(self.evals):
            return np.inf
        top_kernel = max(abs(self.evals[kd - 1]), 1e-300)
        return float(self.evals[kd] / top_kernel)

    def kernel_basis(self) -> np.ndarray:
        return self.vectors[:, : self.kernel_dim]

    def coefficients(self, x: np.ndarray) -> np.ndarray:
        return self.vectors.T @ (self.M @ x)

    def apply_function(self, f, x: np.ndarray, kernel_policy="include") -> np.ndarray:
        """Evaluate f(Delta) x by spectral synthesis.

        kernel_policy: 'include' evaluates f at exactly 0 on the kernel,
        'exclude' drops the kernel, ('replace', v) multiplies kernel
        coefficients by v.
        """
        if not self.complete or not self.exact_nonzero:
            raise ValueError("operator functions need a complete exact decomposition")
        coef = self.coefficients(x)
        vals = self._function_values(f, kernel_policy)
        return self.vectors @ (vals * coef)

    def funcmat(self, f, kernel_policy="include") -> np.ndarray:
        if not self.complete or not self.exact_nonzero:
            raise ValueError("operator functions need a complete exact decomposition")
        vals = self._function_values(f, kernel_policy)
        return (self.vectors * vals[None, :]) @ (self.vectors.T @ self.M.toarray())

    def _function_values(self, f, kernel_policy) -> np.ndarray:
        lam2 = self.evals.copy()
        kd = self.kernel_dim
        lam2[:kd] = 0.0
        if kernel_policy == "include":
            vals = np.array([f(v) for v in lam2], dtype=float)
            if kd and not np.all(np.isfinite(vals[:kd])):
                raise ValueError("function singular at zero with kernel_policy='include'")
        elif kernel_policy == "exclude":
            vals = np.zeros_like(lam2)
            vals[kd:] = np.array([f(v) for v in lam2[kd:]], dtype=float)
        elif isinstance(kernel_policy, tuple) and kernel_policy[0] == "replace":
            vals = np.zeros_like(lam2)
            vals[kd:] = np.array([f(v) for v in lam2[kd:]], dtype=float)
            vals[:kd] = kernel_policy[1]
        else:
            raise ValueError(f"unknown kernel policy {kernel_policy!r}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("operator function produced non-finite values")
        return vals

    def kernel_projector(self) -> np.ndarray:
        """Dense M-orthogonal projector onto the kernel."""
        if self._P0 is None:
            K = self.kernel_basis()
            self._P0 = K @ (K.T @ self.M.toarray())
        return self._P0

    def project_out_kernel(self, x: np.ndarray) -> np.ndarray:
        K = self.kernel_basis()
        if K.shape[1] == 0:
            return np.array(x, copy=True)
        return x - K @ (K.T @ (self.M @ x))

    def rotate_kernel_basis(self, new_basis: np.ndarray) -> None:
        """Replace the kernel block by an equivalent M-orthonormal basis."""
        kd = self.kernel_dim
        if new_basis.shape[1] != kd:
            raise ValueError("kernel basis dimension mismatch")
        G = new_basis.T @ (self.M @ new_basis)
        if np.linalg.norm(G - np.eye(kd)) > 1e-8:
            raise ValueError("replacement kernel basis is not M-orthonormal")
        self.vectors = self.vectors.copy()
        self.vectors[:, :kd] = new_basis
        self._P0 = None

    def to_csv(self) -> str:
        lines = ["index,lambda2,residual"]
        for i, lam2 in enumerate(self.evals):
            lines.append(f"{i},{lam2!r},nan")
        return "\n".join(lines) + "\n"


def eig(op: LaplaceOperator, count="all", threshold: float = KERNEL_THRESHOLD) -> SpectralDecomposition:
    """Eigendecomposition of the generalized problem; ``count`` is 'all' or k lowest."""
    n = op.n
    if count == "all":
        S = op.S_dense()
        M = op.M.toarray()
        evals, vecs = sla.eigh(S, M)
        evals = np.asarray(evals)
        max_eval = float(evals[-1]) if n else 0.0
        complete = True
    else:
        k = int(count)
        if k >= n - 1:
            return eig(op, "all", threshold)
        sigma = -1e-6 * _norm_estimate(op)
        evals, vecs = spla.eigsh(op.S, k=k, M=op.M, sigma=sigma, which="LM")
        order = np.argsort(evals)
        evals, vecs = evals[order], vecs[:, order]
        max_eval = _norm_estimate(op)
        complete = False
    if len(evals) and evals.min() < -1e-10 * max(max_eval, 1.0):
        raise AssertionError("Laplacian has significantly negative eigenvalues")
    evals = np.abs(evals)
    kernel_dim = int(np.sum(evals < threshold * max(max_eval, 1e-300)))
    dec = SpectralDecomposition(
        p=op.p,
        evals=evals,
        vectors=vecs,
        M=op.M,
        kernel_dim=kernel_dim,
        threshold=threshold,
        max_eval=max_eval,
        complete=complete,
        exact_nonzero=op.exact_down,
        ops=op.ops,
    )
    _check_residuals(op, dec)
    return dec


def _norm_estimate(op: LaplaceOperator) -> float:
    """Upper bound on the largest generalized eigenvalue (a few Lanczos steps)."""
    try:
        val = spla.eigsh(
            op.S, k=1, M=op.M, which="LM", return_eigenvectors=False, maxiter=200, tol=1e-2
        )
        return float(abs(val[0])) * 1.2
    except Exception:
        rng = np.random.default_rng(0)
        x = rng.standard_normal(op.n)
        for _ in range(30):
            y = op.S @ x
            z = spla.spsolve(op.M.tocsc(), y) if sp.issparse(op.M) else np.linalg.solve(op.M, y)
            nz = np.linalg.norm(z)
            x = z / nz
        return nz * 1.5


def _check_residuals(op: LaplaceOperator, dec: SpectralDecomposition) -> None:
    if dec.vectors.shape[1] == 0:
        return
    m = min(dec.vectors.shape[1], 12)
    idx = np.unique(np.linspace(0, dec.vectors.shape[1] - 1, m).astype(int))
    V = dec.vectors[:, idx]
    G = V.T @ (op.M @ V)
    if np.linalg.norm(G - np.eye(len(idx))) > 1e-10 * max(1.0, len(idx)):
        raise AssertionError("eigenvectors not M-orthonormal")
    R = op.S @ V - (op.M @ V) * dec.evals[idx][None, :]
    scale = max(dec.max_eval, 1e-300)
    if np.linalg.norm(R, axis=0).max() > 1e-8 * scale:
        raise AssertionError("eigenpair residual too large")


def kernel_projector(dec: SpectralDecomposition) -> tuple[np.ndarray, np.ndarray]:
    """(P0, P) as dense matrices."""
    P0 = dec.kernel_projector()
    return P0, np.eye(P0.shape[0]) - P0


# -- resolvent quadrature for the inverse square root ------------------------------


def quadrature_rule(panels_per_side: int = 4, nodes: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Graded composite Gauss-Legendre nodes on theta in (0, pi/2)."""
    half = np.pi / 2
    brks = {0.0, half}
    for j in range(1, panels_per_side + 1):
        brks.add(half * 2.0 ** -j)
        brks.add(half * (1 - 2.0 ** -j))
    brks = np.array(sorted(brks))
    xs, ws = np.polynomial.legendre.leggauss(nodes)
    th, w = [], []
    for a, b in zip(brks[:-1], brks[1:]):
        th.append(0.5 * (a + b) + 0.5 * (b - a) * xs)
        w.append(0.5 * (b - a) * ws)
    return np.concatenate(th), np.concatenate(w)


def _spectrum_bounds(op: LaplaceOperator, kernel_basis: np.ndarray) -> tuple[float, float]:
    hi = _norm_estimate(op)
    k = kernel_basis.shape[1]
    try:
        lo_vals = spla.eigsh(
            op.S, k=k + 1, M=op.M, sigma=-1e-6 * hi, which="LM", return_eigenvectors=False
        )
        lo = float(np.sort(np.abs(lo_vals))[-1])
    except Exception:
        lo = hi * 1e-6
    return max(lo, hi * 1e-14), hi


def inverse_sqrt_quadrature(
    op: LaplaceOperator,
    x: np.ndarray,
    panels: tuple[int, int] | None = None,
    kernel_basis: np.ndarray | None = None,
    spectrum_bounds: tuple[float, float] | None = None,
    kernel_tol: float = 1e-8,
) -> np.ndarray:
    """Delta^(-1/2) x through the resolvent integral (2/pi) int (Delta+l^2)^-1 dl.

    Requires x orthogonal to the kernel; the integrand is evaluated with
    sparse factorizations, independent of any eigendecomposition.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float).T).T
    if kernel_basis is None:
        kernel_basis = np.zeros((op.n, 0))
    if kernel_basis.shape[1]:
        comp = kernel_basis.T @ (op.M @ X)
        norms = np.sqrt(np.sum((op.M @ X) * X, axis=0))
        if np.any(np.linalg.norm(comp, axis=0) > kernel_tol * np.maximum(norms, 1e-300)):
            raise ValueError("input has a kernel component; project it out first")
    if spectrum_bounds is None:
        spectrum_bounds = _spectrum_bounds(op, kernel_basis)
    lo, hi = spectrum_bounds
    kappa = hi / lo
    if panels is None:
        panels = (4, 8) if kappa < 3e4 else (5, 12)
    th, w = quadrature_rule(*panels)
    c = np.sqrt(np.sqrt(lo * hi))  # scale on lambda: lambda = c tan(theta)
    lam = c * np.tan(th)
    dl = c / np.cos(th) ** 2
    MX = np.asarray(op.M @ X)
    out = np.zeros_like(X)
    if isinstance(op.S, np.ndarray):
        M = op.M.toarray()
        for wi, li, dli in zip(w, lam, dl):
            sol = sla.solve(op.S + (li * li) * M, MX, assume_a="pos")
            out += (2.0 / np.pi) * wi * dli * sol
    else:
        S = sp.csc_matrix(op.S)
        M = op.M.tocsc()
        for wi, li, dli in zip(w, lam, dl):
            fac = spla.splu(S + (li * li) * M)
            out += (2.0 / np.pi) * wi * dli * fac.solve(MX)
    return out[:, 0] if np.asarray(x).ndim == 1 else out


# -- the finite-rank modification of the kernel projector ---------------------------


@dataclass
class ProjectorQ:
    """Q_eps = 1 - Q_{0,eps}: the cutoff-modified projector on 1-forms."""

    eps: float
    psi_basis: np.ndarray  # (n, L) M-orthonormal harmonic basis, last column distinguished
    psi_eps: np.ndarray
    u: np.ndarray
    u_eps: np.ndarray
    M: sp.csr_matrix
    cutoff_meta: dict

    @property
    def L(self) -> int:
        return self.psi_basis.shape[1]

    def q0_factors(self) -> tuple[np.ndarray, np.ndarray]:
        """Q0 = left @ right with left (n, L), right (L, n)."""
        left = np.column_stack([self.psi_basis[:, :-1], self.psi_eps])
        right = (self.M @ self.psi_basis).T
        return left, np.asarray(right)

    def apply_q0(self, x: np.ndarray) -> np.ndarray:
        left, right = self.q0_factors()
        return left @ (right @ x)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x - self.apply_q0(x)

    def q0_matrix(self) -> np.ndarray:
        left, right = self.q0_factors()
        return left @ right

    def matrix(self) -> np.ndarray:
        return np.eye(self.M.shape[0]) - self.q0_matrix()

    def pairings(self) -> np.ndarray:
        """<psi_eps, psi_k>; equals the k=L unit vector up to solver precision."""
        return (self.M @ self.psi_basis).T @ self.psi_eps


def smooth_step(s: np.ndarray) -> np.ndarray:
    """C^2 polynomial step: 0 for s<=0, 1 for s>=1."""
    t = np.clip(s, 0.0, 1.0)
    return t * t * t * (10 + t * (-15 + 6 * t))


def radial_cutoff(r: np.ndarray, eps: float, r_plateau: float, r_zero: float) -> np.ndarray:
    """chi_eps(r) = chi(eps r) with chi = 1 on [0, r_plateau], 0 beyond r_zero."""
    s = eps * np.asarray(r)
    return 1.0 - smooth_step((s - r_plateau) / (r_zero - r_plateau))


def build_Q_eps(
    dec: SpectralDecomposition,
    ops: DecOperators,
    u_full: np.ndarray,
    eps: float,
    center: np.ndarray,
    r_plateau: float,
    r_zero: float,
    psi_basis: np.ndarray | None = None,
    pairing_tol: float = 0.2,
) -> ProjectorQ:
    """Assemble Q_eps from the capacity potential u (full vertex cochain).

    The distinguished harmonic direction is du itself; the basis is rotated so
    its last element is du/|du| before the rank-one replacement by d(chi u).
    """
    cplx = ops.complex
    if cplx.dim != 3 or dec.p != 1:
        raise ValueError("Q_eps lives on 1-forms of a 3-complex")
    if psi_basis is None:
        psi_basis = harmonic_basis_with_distinguished(dec, ops, u_full)
    L = psi_basis.shape[1]
    if L == 0:
        raise ValueError("no zero modes: use the plain kernel projector")
    d0_full = ops._d_full[0]
    du = (d0_full @ u_full)[ops.kept[1]]
    u_scale = np.sqrt(du @ (ops.mass(1) @ du))  # normalise so d u is the unit mode
    nodes = cplx.simplices[0][:, 0]
    r = np.linalg.norm(cplx.vertices[nodes] - center[None, :], axis=1)
    chi = radial_cutoff(r, eps, r_plateau, r_zero)
    u_eps = chi * u_full / u_scale
    psi_eps = (d0_full @ u_eps)[ops.kept[1]]
    q = ProjectorQ(
        eps=eps,
        psi_basis=psi_basis,
        psi_eps=psi_eps,
        u=u_full,
        u_eps=u_eps,
        M=ops.mass(1),
        cutoff_meta={"center": center, "r_plateau": r_plateau, "r_zero": r_zero},
    )
    pair = q.pairings()
    target = np.zeros(L)
    target[-1] = 1.0
    if np.linalg.norm(pair - target) > pairing_tol:
        raise ValueError(
            "psi_eps pairing degenerate; enlarge the domain or shrink the cutoff"
        )
    return q


def harmonic_basis_with_distinguished(
    dec: SpectralDecomposition, ops: DecOperators, u_full: np.ndarray
) -> np.ndarray:
    """M-orthonormal kernel basis whose last vector is du/sqrt(capacity)."""
    K = dec.kernel_basis()
    L = K.shape[1]
    d0_full = ops._d_full[0]
    du = (d0_full @ u_full)[ops.kept[1]]
    M = ops.mass(1)
    nrm = np.sqrt(du @ (M @ du))
    psiL = du / nrm
    coef = K.T @ (M @ psiL)
    resid = psiL - K @ coef
    if np.sqrt(abs(resid @ (M @ resid))) > 1e-6:
        raise ValueError("capacity gradient is not in the numerical kernel")
    # complete psiL to an M-orthonormal basis of the kernel, psiL last
    Q = np.eye(L) - np.outer(coef, coef)
    rest = K @ Q
    gram = rest.T @ (M @ rest)
    w, U = np.linalg.eigh(gram)
    keep = w > 1e-10
    cols = rest @ (U[:, keep] / np.sqrt(w[keep])[None, :])
    basis = np.column_stack([cols[:, : L - 1], psiL])
    G = basis.T @ (M @ basis)
    if np.linalg.norm(G - np.eye(L)) > 1e-8:
        raise AssertionError("distinguished kernel basis lost orthonormality")
    return basis
