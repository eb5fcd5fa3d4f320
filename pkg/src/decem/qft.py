"""One-particle structure, propagator pairings and quasifree n-point values.

Spacetime test forms are finite sums of (time profile x spatial cochain).
Degree-1 forms split into a dt-part (0-cochain) and a spatial part
(1-cochain); degree-2 forms into an electric part (1-cochain wedged with dt)
and a magnetic part (2-cochain).  The commutator propagator maps a test form
to Cauchy data at t = 0, and everything downstream (the Krein map, the
pairings, the two-point function) is built from those data with the spectral
quarter powers of the Hodge Laplacians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forms import DecOperators
from .spectral import ProjectorQ, SpectralDecomposition
from .timeprofiles import Impulse, TimeProfile


@dataclass(frozen=True)
class FormTerm:
    profile: TimeProfile | Impulse
    part: str  # degree 1: 'dt' | 'spatial'; degree 2: 'e' | 'b'
    cochain: np.ndarray


@dataclass
class TestForm:
    degree: int
    terms: list[FormTerm]

    def shifted(self, dt: float) -> "TestForm":
        return TestForm(
            self.degree,
            [FormTerm(t.profile.shift(dt), t.part, t.cochain) for t in self.terms],
        )

    @classmethod
    def impulse2(cls, e_part: np.ndarray, b_part: np.ndarray, t0: float = 0.0) -> "TestForm":
        """(E ^ dt + B) x delta(t - t0): Cauchy-data semantics."""
        return cls(
            2,
            [
                FormTerm(Impulse(t0, 0), "e", e_part),
                FormTerm(Impulse(t0, 0), "b", b_part),
            ],
        )


@dataclass
class CauchyData:
    phi: np.ndarray
    A: np.ndarray
    phidot: np.ndarray
    Adot: np.ndarray


@dataclass
class KreinVector:
    scalar: np.ndarray
    vector: np.ndarray


@dataclass
class ZeroModeExpectation:
    mean: float
    variance: float
    support_flag: bool
    psi_eps_deviation: float

    def __iter__(self):
        return iter((self.mean, self.variance, self.support_flag))


class FieldCalculus:
    """Bundles the decompositions and projector policy of one geometry side."""

    def __init__(
        self,
        ops: DecOperators,
        dec0: SpectralDecomposition,
        dec1: SpectralDecomposition,
        dec2: SpectralDecomposition | None = None,
        Q: ProjectorQ | None = None,
    ):
        self.ops = ops
        self.dec = {0: dec0, 1: dec1, 2: dec2}
        self.Q = Q
        lam = {}
        for p, dec in self.dec.items():
            if dec is None:
                continue
            lam2 = dec.evals.copy()
            lam2[: dec.kernel_dim] = 0.0
            lam[p] = np.sqrt(lam2)
        self.lam = lam

    # -- spacetime calculus on test forms -----------------------------------------

    def codifferential_form(self, f: TestForm) -> TestForm:
        """delta~ (alpha ^ dt + beta) = (delta~ alpha) dt - alpha' + delta~ beta."""
        if f.degree != 2:
            raise ValueError("codifferential_form expects a degree-2 form")
        ops = self.ops
        terms: list[FormTerm] = []
        for t in f.terms:
            if t.part == "e":
                terms.append(
                    FormTerm(t.profile, "dt", ops.apply_codifferential(1, t.cochain))
                )
                dprof = (
                    t.profile.derivative()
                    if isinstance(t.profile, TimeProfile)
                    else t.profile.derivative()
                )
                terms.append(FormTerm(dprof, "spatial", -t.cochain))
            elif t.part == "b":
                terms.append(
                    FormTerm(t.profile, "spatial", ops.apply_codifferential(2, t.cochain))
                )
            else:
                raise ValueError(f"bad degree-2 part {t.part!r}")
        return TestForm(1, terms)

    def d_form(self, h: TestForm) -> TestForm:
        """d (u dt + a) = (d u - a') ^ dt + d a."""
        if h.degree != 1:
            raise ValueError("d_form expects a degree-1 form")
        ops = self.ops
        terms: list[FormTerm] = []
        for t in h.terms:
            if t.part == "dt":
                terms.append(FormTerm(t.profile, "e", ops.d(0) @ t.cochain))
            elif t.part == "spatial":
                terms.append(FormTerm(t.profile.derivative(), "e", -t.cochain))
                terms.append(FormTerm(t.profile, "b", ops.d(1) @ t.cochain))
            else:
                raise ValueError(f"bad degree-1 part {t.part!r}")
        return TestForm(2, terms)

    def box_form(self, f: TestForm) -> TestForm:
        """(d delta~ + delta~ d) on a degree-1 test form, acting as g'' c + g (Delta c)."""
        if f.degree != 1:
            raise ValueError("box_form expects a degree-1 form")
        ops = self.ops
        terms: list[FormTerm] = []
        for t in f.terms:
            p = 0 if t.part == "dt" else 1
            lap = self._laplace_cochain(p, t.cochain)
            terms.append(FormTerm(t.profile.derivative().derivative(), t.part, t.cochain))
            terms.append(FormTerm(t.profile, t.part, lap))
        return TestForm(1, terms)

    def _laplace_cochain(self, p: int, c: np.ndarray) -> np.ndarray:
        ops = self.ops
        out = np.zeros_like(c)
        if p < ops.complex.dim:
            out += ops.apply_codifferential(p + 1, ops.d(p) @ c)
        if p > 0:
            out += ops.d(p - 1) @ ops.apply_codifferential(p, c)
        return out

    # -- the commutator propagator --------------------------------------------------

    def _term_moments(self, term: FormTerm, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(sinc-side, cos-side) scalar factors of the t=0 Cauchy data."""
        g = term.profile
        if isinstance(g, TimeProfile):
            return g.sinc_moment(lam, 0.0), g.cos_moment(lam, 0.0)
        t0, k = g.t0, g.order
        lt = lam * t0
        if k == 0:
            sv = -t0 * np.sinc(lt / np.pi)
            cv = np.cos(lt)
        elif k == 1:
            sv = np.cos(lt)
            cv = lam * np.sin(lt)
        else:
            raise ValueError("impulse order beyond 1 not supported")
        return sv, cv

    def propagate_G(self, f: TestForm) -> CauchyData:
        """Cauchy data at t = 0 of the retarded-minus-advanced solution Gf."""
        if f.degree != 1:
            raise ValueError("propagate_G expects a degree-1 form")
        n0, n1 = self.ops.n(0), self.ops.n(1)
        phi = np.zeros(n0)
        phidot = np.zeros(n0)
        A = np.zeros(n1)
        Adot = np.zeros(n1)
        for t in f.terms:
            p = 0 if t.part == "dt" else 1
            dec = self.dec[p]
            coef = dec.coefficients(t.cochain)
            sv, cv = self._term_moments(t, self.lam[p])
            if t.part == "dt":
                phi += dec.vectors @ (sv * coef)
                phidot += dec.vectors @ (cv * coef)
            else:
                A += dec.vectors @ (sv * coef)
                Adot += dec.vectors @ (cv * coef)
        return CauchyData(phi, A, phidot, Adot)

    # -- pairings ---------------------------------------------------------------------

    def pairing_G(self, f1: TestForm, f2: TestForm) -> float:
        d1, d2 = self.propagate_G(f1), self.propagate_G(f2)
        return self.pairing_G_data(d1, d2)

    def pairing_G_data(self, d1: CauchyData, d2: CauchyData) -> float:
        """Lorentzian-signed symplectic pairing of the Cauchy data of Gf1, Gf2."""
        ops = self.ops
        term1 = -ops.inner(0, d2.phi, d1.phidot) + ops.inner(1, d2.A, d1.Adot)
        term2 = -ops.inner(0, d2.phidot, d1.phi) + ops.inner(1, d2.Adot, d1.A)
        return float(term1 - term2)

    def GZ(self, f1: TestForm, f2: TestForm) -> float:
        d1, d2 = self.propagate_G(f1), self.propagate_G(f2)
        return self.GZ_data(d1, d2)

    def GZ_data(self, d1: CauchyData, d2: CauchyData) -> float:
        ops = self.ops
        q0 = self._q0_apply
        return float(
            -ops.inner(1, q0(d2.Adot), d1.A) + ops.inner(1, q0(d1.Adot), d2.A)
        )

    def _q0_apply(self, x: np.ndarray) -> np.ndarray:
        if self.Q is not None:
            return self.Q.apply_q0(x)
        dec = self.dec[1]
        K = dec.kernel_basis()
        if K.shape[1] == 0:
            return np.zeros_like(x)
        return K @ (K.T @ (dec.M @ x))

    def _q_apply(self, x: np.ndarray) -> np.ndarray:
        return x - self._q0_apply(x)

    # -- the Krein map ------------------------------------------------------------------

    def kappa(self, f: TestForm, kernel_tol: float = 1e-8) -> KreinVector:
        data = self.propagate_G(f)
        return self.kappa_data(data, kernel_tol)

    def kappa_data(self, data: CauchyData, kernel_tol: float = 1e-8) -> KreinVector:
        dec0, dec1 = self.dec[0], self.dec[1]
        quarter = lambda m: m ** 0.25
        mquarter = lambda m: m ** -0.25
        s = dec0.apply_function(quarter, data.phi, "include") + 1j * dec0.apply_function(
            mquarter, data.phidot, "exclude"
        )
        if dec0.kernel_dim:
            raise AssertionError("scalar Laplacian unexpectedly has zero modes")
        qa = self._q_apply(data.Adot)
        K = dec1.kernel_basis()
        if K.shape[1]:
            comp = np.linalg.norm(K.T @ (dec1.M @ qa))
            if comp > kernel_tol * max(np.linalg.norm(qa), 1e-300):
                raise ValueError(
                    "Q-projected velocity keeps a kernel component; wrong projector policy"
                )
        v = dec1.apply_function(quarter, data.A, "include") + 1j * dec1.apply_function(
            mquarter, qa, "exclude"
        )
        return KreinVector(scalar=s, vector=v)

    def krein_product(self, k1: KreinVector, k2: KreinVector) -> complex:
        """Indefinite product, linear in the first argument: -<s1,s2> + <v1,v2>."""
        ops = self.ops
        m0, m1 = ops.mass(0), ops.mass(1)
        s = np.conj(k2.scalar) @ (m0 @ k1.scalar)
        v = np.conj(k2.vector) @ (m1 @ k1.vector)
        return complex(-s + v)

    # -- two-point and n-point functions ---------------------------------------------

    def omega2_F(self, f1: TestForm, f2: TestForm) -> complex:
        """Reduced field-strength two-point value 0.5 <kappa(delta~ f2), kappa(delta~ f1)>."""
        if f1.degree != 2 or f2.degree != 2:
            raise ValueError("omega2_F expects degree-2 forms")
        g1, g2 = self.codifferential_form(f1), self.codifferential_form(f2)
        return 0.5 * self.krein_product(self.kappa(g2), self.kappa(g1))

    def wick_npoint(self, forms: list[TestForm]) -> complex:
        """Quasifree n-point value: sum over ordered pairings of omega2_F."""
        n = len(forms)
        if n % 2 == 1:
            return 0.0 + 0.0j
        kappas = [self.kappa(self.codifferential_form(f)) for f in forms]

        def pair_value(i, j):
            return 0.5 * self.krein_product(kappas[j], kappas[i])

        def rec(indices):
            if not indices:
                return 1.0 + 0.0j
            first, rest = indices[0], indices[1:]
            total = 0.0 + 0.0j
            for k, j in enumerate(rest):
                total += pair_value(first, j) * rec(rest[:k] + rest[k + 1 :])
            return total

        return rec(tuple(range(n)))

    # -- zero-mode (Schroedinger sector) expectations -----------------------------------

    def zero_mode_expectation(
        self,
        e_top: np.ndarray,
        e_q: np.ndarray,
        sigma_top: float,
        sigma_q: float,
        f: TestForm,
        q_basis: np.ndarray,
        top_basis: np.ndarray,
    ) -> "ZeroModeExpectation":
        """Gaussian mean and variance of the smeared field in the zero-mode sector.

        The readout coordinates pair the time-integrated electric smearing
        against the harmonic basis; these pairings are exact identities of the
        propagator, so mean = <E_top + E_q, alpha-bar> holds for every form.
        The distinguished coordinate can also be read through the cutoff mode
        psi_eps; its deviation from the exact value is reported, and the
        support flag marks smearings that overlap the cutoff transition shell
        (where that deviation is expected to be material).
        """
        if f.degree != 2:
            raise ValueError("zero-mode expectation expects a degree-2 form")
        if self.Q is None:
            raise ValueError("zero-mode expectation needs the Q_eps projector")
        ops = self.ops
        dec1 = self.dec[1]
        psi = self.Q.psi_basis
        L = psi.shape[1]
        M = ops.mass(1)

        # time-integrated electric smearing and the cos-propagated profile
        alpha_bar = np.zeros(ops.n(1))
        X = np.zeros(ops.n(1))
        for t in f.terms:
            if t.part != "e":
                continue
            if isinstance(t.profile, Impulse):
                raise ValueError("zero-mode expectation needs smooth profiles")
            alpha_bar += t.profile.integral() * t.cochain
            coef = dec1.coefficients(t.cochain)
            cv = t.profile.cos_moment(self.lam[1], 0.0)
            X += dec1.vectors @ (cv * coef)

        w = (M @ psi).T @ alpha_bar
        psi_eps_readout = float(X @ (M @ self.Q.psi_eps))
        deviation = abs(psi_eps_readout - w[L - 1])

        e_tot = e_top + e_q
        coords_e = psi.T @ (M @ e_tot)
        mean = float(w @ coords_e)

        wvec = psi @ w
        wq = q_basis.T @ (M @ wvec) if q_basis.shape[1] else np.zeros(0)
        wt = top_basis.T @ (M @ wvec) if top_basis.shape[1] else np.zeros(0)
        variance = float(sigma_top**2 * (wt @ wt) + sigma_q**2 * (wq @ wq))

        flag = self._support_overlap(f)
        return ZeroModeExpectation(mean, variance, flag, deviation)

    def _support_overlap(self, f: TestForm) -> bool:
        meta = self.Q.cutoff_meta
        lo = meta["r_plateau"] / self.Q.eps
        hi = meta["r_zero"] / self.Q.eps
        cplx = self.ops.complex
        edges = cplx.simplices[1][self.ops.kept[1]]
        mid = 0.5 * (cplx.vertices[edges[:, 0]] + cplx.vertices[edges[:, 1]])
        r = np.linalg.norm(mid - meta["center"][None, :], axis=1)
        shell = (r > lo) & (r < hi)
        for t in f.terms:
            if t.part == "e" and np.any(np.abs(t.cochain[shell]) > 1e-12 * max(np.abs(t.cochain).max(), 1e-300)):
                return True
        return False


def time_shifted(f: TestForm, dt: float) -> TestForm:
    return f.shifted(dt)
