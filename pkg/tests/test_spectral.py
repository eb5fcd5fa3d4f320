import numpy as np
import pytest

from decem.forms import DecOperators, MaterialField, reduce_relative
from decem.geometries import box_complex, chain_complex
from decem.spectral import (
    assemble_laplacian,
    eig,
    inverse_sqrt_quadrature,
    kernel_projector,
)


@pytest.fixture(scope="module")
def box_ops():
    return reduce_relative(DecOperators(box_complex((3, 3, 3))))


def test_dirichlet_laplacian_matches_direct_p1_assembly(box_ops):
    """Independent oracle: assemble the P1 Dirichlet stiffness from gradients."""
    ops = box_ops
    cplx = ops.complex
    from decem.forms import _cell_geometry

    vols, grads, _gram = _cell_geometry(cplx)
    cells = cplx.simplices[3]
    idx0 = cplx.index(0)
    n0 = cplx.n(0)
    S = np.zeros((n0, n0))
    for c in range(len(cells)):
        rows = [idx0[(int(v),)] for v in cells[c]]
        local = vols[c] * (grads[c] @ grads[c].T)
        for a, ra in enumerate(rows):
            for b, rb in enumerate(rows):
                S[ra, rb] += local[a, b]
    keep = ops.kept[0]
    S = S[np.ix_(keep, keep)]
    L0 = assemble_laplacian(ops, 0)
    assert np.abs(L0.S_dense() - S).max() <= 1e-12 * np.abs(S).max()


def test_chain_dirichlet_eigenvalues_analytic():
    n = 8
    ops = reduce_relative(DecOperators(chain_complex(n)))
    dec = eig(assemble_laplacian(ops, 0))
    h = 1.0 / n
    k = np.arange(1, n)
    analytic = (6 / h**2) * (1 - np.cos(k * np.pi * h)) / (2 + np.cos(k * np.pi * h))
    assert np.allclose(np.sort(dec.evals), np.sort(analytic), rtol=1e-12)


def test_hodge_commutation(box_ops):
    ops = box_ops
    L1 = assemble_laplacian(ops, 1)
    L2 = assemble_laplacian(ops, 2)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(ops.n(1))
    lap1 = ops.mass_factor(1).solve(np.asarray(L1.S @ x))
    lap2_of_dx = ops.mass_factor(2).solve(np.asarray(L2.S @ (ops.d(1) @ x)))
    lhs = ops.d(1) @ lap1
    scale = ops.norm(2, lhs)
    assert ops.norm(2, lhs - lap2_of_dx) <= 1e-10 * scale
    # delta~ Delta = Delta delta~
    y = rng.standard_normal(ops.n(2))
    lap2 = ops.mass_factor(2).solve(np.asarray(L2.S @ y))
    lhs2 = ops.apply_codifferential(2, lap2)
    rhs2 = ops.mass_factor(1).solve(np.asarray(L1.S @ ops.apply_codifferential(2, y)))
    assert ops.norm(1, lhs2 - rhs2) <= 1e-10 * max(ops.norm(1, lhs2), 1.0)


def test_kernel_of_delta0_on_carved_is_trivial():
    from decem.geometries import canned_scenario

    sc = canned_scenario("balls:1")
    ops = reduce_relative(DecOperators(sc.carved))
    dec = eig(assemble_laplacian(ops, 0, lumped_down=True), count=4)
    assert dec.kernel_dim == 0


def test_apply_function_policies(qft_bundle):
    b = qft_bundle
    dec = b.dec1
    rng = np.random.default_rng(1)
    x = rng.standard_normal(b.ops.n(1))
    # f == 1 with exclude: x - P0 x
    y = dec.apply_function(lambda m: 1.0, x, "exclude")
    P0 = dec.kernel_projector()
    assert np.linalg.norm(y - (x - P0 @ x)) <= 1e-10 * np.linalg.norm(x)
    # cos(0 sqrt(Delta)) x = x
    z = dec.apply_function(lambda m: np.cos(0.0 * np.sqrt(m)), x, "include")
    assert np.linalg.norm(z - x) <= 1e-12 * np.linalg.norm(x)
    # singular function with include on nontrivial kernel -> error
    with pytest.raises(ValueError):
        dec.apply_function(lambda m: m**-0.5, x, "include")
    # replace policy
    w = dec.apply_function(lambda m: 0.0, x, ("replace", 2.0))
    assert np.linalg.norm(w - 2.0 * (P0 @ x)) <= 1e-10 * np.linalg.norm(x)


def test_sinc_on_eigenvector(qft_bundle):
    dec = qft_bundle.dec1
    i = dec.kernel_dim + 3
    v = dec.vectors[:, i]
    lam = np.sqrt(dec.evals[i])
    t = 0.7
    y = dec.apply_function(lambda m: t * np.sinc(t * np.sqrt(m) / np.pi), v, "include")
    assert np.linalg.norm(y - np.sin(t * lam) / lam * v) <= 1e-10


def test_spectral_mapping_composition(qft_bundle):
    """Applying f then g equals applying the pointwise product (f.g)(Delta)."""
    dec = qft_bundle.dec0
    rng = np.random.default_rng(2)
    x = rng.standard_normal(qft_bundle.ops.n(0))
    f = lambda m: 1.0 / (1.0 + m)
    g = lambda m: np.sqrt(m)
    composed = dec.apply_function(f, dec.apply_function(g, x, "include"), "include")
    product = dec.apply_function(lambda m: f(m) * g(m), x, "include")
    assert np.linalg.norm(composed - product) <= 1e-10 * np.linalg.norm(x)


def test_kernel_projector_properties(qft_bundle):
    dec = qft_bundle.dec1
    P0, P = kernel_projector(dec)
    M = qft_bundle.ops.mass(1).toarray()
    assert np.linalg.norm(P0 @ P0 - P0) <= 1e-10
    assert np.linalg.norm(M @ P0 - (M @ P0).T) <= 1e-10 * np.abs(M @ P0).max()
    k = dec.kernel_basis()[:, 0]
    assert np.linalg.norm(P0 @ k - k) <= 1e-12
    # trivial kernel case
    dec0 = qft_bundle.dec0
    P00, _ = kernel_projector(dec0)
    assert np.abs(P00).max() == 0


def test_inverse_sqrt_quadrature_eigenvector(qft_bundle):
    b = qft_bundle
    dec = b.dec1
    i = dec.kernel_dim + 5
    v = dec.vectors[:, i]
    lam2 = dec.evals[i]
    y = inverse_sqrt_quadrature(
        b.L1, v, kernel_basis=dec.kernel_basis(),
        spectrum_bounds=(dec.evals[dec.kernel_dim], dec.evals[-1]),
    )
    assert np.linalg.norm(y - v / np.sqrt(lam2)) <= 1e-8 / np.sqrt(lam2)


def test_inverse_sqrt_quadrature_random_agreement(qft_bundle):
    b = qft_bundle
    dec = b.dec1
    rng = np.random.default_rng(3)
    bounds = (dec.evals[dec.kernel_dim], dec.evals[-1])
    worst = 0.0
    for _ in range(10):
        x = dec.project_out_kernel(rng.standard_normal(b.ops.n(1)))
        y_quad = inverse_sqrt_quadrature(
            b.L1, x, kernel_basis=dec.kernel_basis(), spectrum_bounds=bounds
        )
        y_eig = dec.apply_function(lambda m: m**-0.5, x, "exclude")
        worst = max(worst, np.linalg.norm(y_quad - y_eig) / np.linalg.norm(y_eig))
    assert worst <= 1e-8


def test_inverse_sqrt_quadrature_panel_refinement(qft_bundle):
    b = qft_bundle
    dec = b.dec1
    rng = np.random.default_rng(4)
    x = dec.project_out_kernel(rng.standard_normal(b.ops.n(1)))
    y_eig = dec.apply_function(lambda m: m**-0.5, x, "exclude")
    bounds = (dec.evals[dec.kernel_dim], dec.evals[-1])
    errs = []
    for panels in ((1, 4), (2, 6), (4, 8)):
        y = inverse_sqrt_quadrature(
            b.L1, x, panels=panels, kernel_basis=dec.kernel_basis(), spectrum_bounds=bounds
        )
        errs.append(np.linalg.norm(y - y_eig) / np.linalg.norm(y_eig))
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] <= 1e-8


def test_inverse_sqrt_quadrature_rejects_kernel_component(qft_bundle):
    b = qft_bundle
    dec = b.dec1
    x = dec.kernel_basis()[:, 0] + 0.0
    with pytest.raises(ValueError, match="kernel"):
        inverse_sqrt_quadrature(b.L1, x, kernel_basis=dec.kernel_basis())


def test_eig_orthonormality_and_residual(qft_bundle):
    dec = qft_bundle.dec1
    M = qft_bundle.ops.mass(1).toarray()
    G = dec.vectors.T @ M @ dec.vectors
    assert np.linalg.norm(G - np.eye(G.shape[0])) <= 1e-10 * G.shape[0]


def test_spectral_csv(qft_bundle):
    csv = qft_bundle.dec0.to_csv()
    assert csv.startswith("index,lambda2,residual")
    assert len(csv.strip().splitlines()) == len(qft_bundle.dec0.evals) + 1
