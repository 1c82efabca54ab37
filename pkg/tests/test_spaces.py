import numpy as np
import pytest
import scipy.linalg

from chbs.spaces import (DualPair, FieldPair, apply_F, as_functional, form_a,
                         inner_H, inner_V, mean, norm_V0, norm_V0_star,
                         norm_V_star, pairing, poincare_constant,
                         project_zero_mean, solve_F_inverse, subgrad_phi)

# frozen from the dense QZ oracle below (relative difference 1.6e-3)
CP_N8 = 0.7816819922756
CP_N16 = 0.7829519410650


def random_zero_mean(dom, rng):
    return project_zero_mean(FieldPair.from_bulk(dom, rng.standard_normal(dom.n_bulk)))


def dense_operators(dom):
    """Dense coupled stiffness, combined lumped mass, and V-norm matrix."""
    nb, ng = dom.n_bulk, dom.n_boundary
    S = np.zeros((ng, nb))
    S[np.arange(ng), dom.boundary_chain] = 1.0
    A = dom.K_bulk.toarray() + S.T @ dom.K_surf.toarray() @ S
    gc = dom.M_bulk + S.T @ dom.M_surf
    return A, gc


# --- inner products ---------------------------------------------------------

def test_inner_H_of_ones_is_total_measure(domain_cache):
    dom = domain_cache(4)
    one = FieldPair.constant(dom, 1.0)
    assert inner_H(one, one) == pytest.approx(5.0, abs=1e-12)


def test_form_a_kills_constants(domain_cache, rng):
    dom = domain_cache(5)
    const = FieldPair.constant(dom, 2.5)
    z = FieldPair.from_bulk(dom, rng.standard_normal(dom.n_bulk))
    assert form_a(const, z) == pytest.approx(0.0, abs=1e-12)


def test_inner_V_dominates_inner_H(domain_cache, rng):
    dom = domain_cache(5)
    for _ in range(10):
        z = FieldPair.from_bulk(dom, rng.standard_normal(dom.n_bulk))
        assert inner_V(z, z) >= inner_H(z, z)
        assert form_a(z, z) <= inner_V(z, z)


# --- mean and projection ------------------------------------------------------

def test_mean_of_constant(domain_cache):
    dom = domain_cache(4)
    assert mean(FieldPair.constant(dom, -1.3)) == pytest.approx(-1.3, abs=1e-13)


def test_mean_weights_bulk_and_boundary(domain_cache):
    # bulk 1, boundary 0: (|bulk| * 1 + |bnd| * 0) / 5
    dom = domain_cache(4)
    z = FieldPair(np.ones(dom.n_bulk), np.zeros(dom.n_boundary), dom)
    assert mean(z) == pytest.approx(0.2, abs=1e-13)


def test_projection_properties(domain_cache, rng):
    dom = domain_cache(5)
    assert np.abs(project_zero_mean(FieldPair.constant(dom, 4.0)).bulk).max() < 1e-14
    z = FieldPair(rng.standard_normal(dom.n_bulk),
                  rng.standard_normal(dom.n_boundary), dom)
    pz = project_zero_mean(z)
    assert abs(mean(pz)) < 1e-12
    ppz = project_zero_mean(pz)
    np.testing.assert_allclose(ppz.bulk, pz.bulk, rtol=0, atol=1e-14)
    zm = random_zero_mean(dom, rng)
    np.testing.assert_allclose(project_zero_mean(zm).bulk, zm.bulk, rtol=0, atol=1e-13)


def test_projection_identity_for_zero_mean_functionals(domain_cache, rng):
    # (z*, P zt)_H = (z*, zt)_H whenever z* has zero combined mean
    dom = domain_cache(5)
    for _ in range(20):
        zstar = project_zero_mean(FieldPair(rng.standard_normal(dom.n_bulk),
                                            rng.standard_normal(dom.n_boundary), dom))
        zt = FieldPair(rng.standard_normal(dom.n_bulk),
                       rng.standard_normal(dom.n_boundary), dom)
        lhs = inner_H(zstar, project_zero_mean(zt))
        assert lhs == pytest.approx(inner_H(zstar, zt), abs=1e-11)


# --- duality operator ----------------------------------------------------------

def test_apply_F_zero(domain_cache):
    dom = domain_cache(3)
    ell = apply_F(FieldPair.zeros(dom))
    assert np.abs(ell.bulk).max() == 0.0 and np.abs(ell.boundary).max() == 0.0


def test_apply_F_symmetric(domain_cache, rng):
    dom = domain_cache(5)
    for _ in range(10):
        z, w = random_zero_mean(dom, rng), random_zero_mean(dom, rng)
        assert pairing(apply_F(z), w) == pytest.approx(pairing(apply_F(w), z), abs=1e-10)
        assert pairing(apply_F(z), z) == pytest.approx(form_a(z, z), abs=1e-10)


def test_apply_F_requires_zero_mean(domain_cache):
    dom = domain_cache(3)
    with pytest.raises(ValueError):
        apply_F(FieldPair.constant(dom, 1.0))


def test_apply_F_concrete_n3_dense_oracle(domain_cache, rng):
    dom = domain_cache(3)
    z = random_zero_mean(dom, rng)
    ell = apply_F(z)
    np.testing.assert_allclose(ell.bulk, dom.K_bulk.toarray() @ z.bulk,
                               rtol=0, atol=1e-13)
    np.testing.assert_allclose(ell.boundary, dom.K_surf.toarray() @ z.boundary,
                               rtol=0, atol=1e-13)


def test_solve_F_inverse_zero(domain_cache):
    dom = domain_cache(3)
    w = solve_F_inverse(DualPair(np.zeros(dom.n_bulk), np.zeros(dom.n_boundary), dom))
    assert np.abs(w.bulk).max() == 0.0


def test_solve_F_inverse_roundtrip(domain_cache, rng):
    dom = domain_cache(6)
    for _ in range(25):
        z = random_zero_mean(dom, rng)
        back = solve_F_inverse(apply_F(z))
        assert np.abs(back.bulk - z.bulk).max() <= 1e-8


def test_solve_F_inverse_rejects_nonzero_mean(domain_cache):
    dom = domain_cache(3)
    ell = as_functional(FieldPair.constant(dom, 1.0))
    with pytest.raises(ValueError):
        solve_F_inverse(ell)


def test_solve_F_inverse_n3_dense_augmented_oracle(domain_cache, rng):
    dom = domain_cache(3)
    A, gc = dense_operators(dom)
    z = random_zero_mean(dom, rng)
    ell = as_functional(z)
    got = solve_F_inverse(ell)

    # oracle: dense augmented saddle solve in bulk coordinates
    rhs_c = ell.bulk.copy()
    rhs_c[dom.boundary_chain] += ell.boundary
    nb = dom.n_bulk
    aug = np.zeros((nb + 1, nb + 1))
    aug[:nb, :nb] = A
    aug[:nb, nb] = gc
    aug[nb, :nb] = gc
    sol = np.linalg.solve(aug, np.concatenate([rhs_c, [0.0]]))
    np.testing.assert_allclose(got.bulk, sol[:nb], rtol=0, atol=1e-10)


# --- norms -----------------------------------------------------------------------

def test_norms_vanish_on_zero(domain_cache):
    dom = domain_cache(3)
    assert norm_V0(FieldPair.zeros(dom)) == 0.0
    assert norm_V0_star(DualPair(np.zeros(dom.n_bulk), np.zeros(dom.n_boundary), dom)) == 0.0


def test_dual_norm_matches_primal_through_F(domain_cache, rng):
    dom = domain_cache(5)
    for _ in range(10):
        z = random_zero_mean(dom, rng)
        assert norm_V0_star(apply_F(z)) == pytest.approx(norm_V0(z), rel=1e-10)


def test_dual_norm_positive_on_n3(domain_cache, rng):
    dom = domain_cache(3)
    ell = as_functional(random_zero_mean(dom, rng))
    val = norm_V0_star(ell)
    assert val > 0.0
    # dense oracle for the same quantity
    A, gc = dense_operators(dom)
    rhs_c = ell.bulk.copy()
    rhs_c[dom.boundary_chain] += ell.boundary
    nb = dom.n_bulk
    aug = np.zeros((nb + 1, nb + 1))
    aug[:nb, :nb] = A
    aug[:nb, nb] = gc
    aug[nb, :nb] = gc
    sol = np.linalg.solve(aug, np.concatenate([rhs_c, [0.0]]))
    assert val == pytest.approx(np.sqrt(rhs_c @ sol[:nb]), rel=1e-10)


def test_cauchy_schwarz_in_duality(domain_cache, rng):
    dom = domain_cache(5)
    for _ in range(20):
        z, w = random_zero_mean(dom, rng), random_zero_mean(dom, rng)
        assert abs(pairing(apply_F(z), w)) <= norm_V0(z) * norm_V0(w) * (1 + 1e-12)


def test_v_star_norm_dense_oracle(domain_cache, rng):
    dom = domain_cache(4)
    A, gc = dense_operators(dom)
    f = FieldPair(rng.standard_normal(dom.n_bulk),
                  rng.standard_normal(dom.n_boundary), dom)
    ell = as_functional(f)
    rhs_c = ell.bulk.copy()
    rhs_c[dom.boundary_chain] += ell.boundary
    oracle = np.sqrt(rhs_c @ np.linalg.solve(np.diag(gc) + A, rhs_c))
    assert norm_V_star(ell) == pytest.approx(oracle, rel=1e-10)


# --- coercivity constant ------------------------------------------------------------

def qz_poincare_oracle(dom):
    """Independent route: SVD null-space basis + QZ on the reduced pencil."""
    A, gc = dense_operators(dom)
    B = np.diag(gc) + A
    _, _, vt = np.linalg.svd(gc[None, :])
    Z = vt[1:].T
    vals = scipy.linalg.eig(Z.T @ A @ Z, Z.T @ B @ Z, right=False)
    vals = np.real(vals[np.abs(np.imag(vals)) < 1e-10])
    return float(vals.min())


@pytest.mark.parametrize("n", [5, 8])
def test_poincare_constant_positive_below_one(domain_cache, n):
    cp = poincare_constant(domain_cache(n))
    assert 0.0 < cp <= 1.0


def test_poincare_matches_qz_oracle(domain_cache):
    dom = domain_cache(8)
    assert poincare_constant(dom) == pytest.approx(qz_poincare_oracle(dom), rel=1e-9)


def test_poincare_frozen_values_and_stability(domain_cache):
    cp8 = poincare_constant(domain_cache(8))
    cp16 = poincare_constant(domain_cache(16))
    assert cp8 == pytest.approx(CP_N8, rel=1e-10)
    assert cp16 == pytest.approx(CP_N16, rel=1e-10)
    assert abs(cp8 - cp16) / cp8 <= 5e-3


def test_poincare_sampled_inequality(domain_cache, rng):
    dom = domain_cache(8)
    cp = poincare_constant(dom)
    worst = np.inf
    for _ in range(1000):
        z = random_zero_mean(dom, rng)
        nrm = np.sqrt(inner_V(z, z))
        z = z * (1.0 / nrm)
        worst = min(worst, form_a(z, z) - cp * inner_V(z, z))
    assert worst >= -1e-9


# --- weak Laplacian pair --------------------------------------------------------------

def test_subgrad_phi_zero(domain_cache):
    dom = domain_cache(3)
    out = subgrad_phi(FieldPair.zeros(dom))
    assert np.abs(out.bulk).max() == 0.0


def test_subgrad_phi_adjointness(domain_cache, rng):
    dom = domain_cache(6)
    for _ in range(30):
        z = random_zero_mean(dom, rng)
        w = random_zero_mean(dom, rng)
        assert inner_H(subgrad_phi(z), w) == pytest.approx(form_a(z, w), abs=1e-10)


def test_subgrad_phi_requires_zero_mean(domain_cache):
    dom = domain_cache(3)
    with pytest.raises(ValueError):
        subgrad_phi(FieldPair.constant(dom, 1.0))


def test_subgrad_phi_kills_constants(domain_cache):
    # constants are the zero element of the quotient space: projecting a
    # constant pair and applying the weak Laplacian pair gives zero
    dom = domain_cache(4)
    out = subgrad_phi(project_zero_mean(FieldPair.constant(dom, 2.0)))
    assert np.abs(out.bulk).max() < 1e-13
    assert np.abs(out.boundary).max() < 1e-13


def test_subgrad_phi_approximates_laplacian(domain_cache):
    # z = cos(pi x) cos(pi y) has zero normal derivative on the square and
    # -Laplace z = 2 pi^2 z; interior error of the weak realization is O(h^2)
    errs, hs = [], []
    for n in (9, 17, 33):
        dom = domain_cache(n)
        x, y = dom.coords[:, 0], dom.coords[:, 1]
        field = np.cos(np.pi * x) * np.cos(np.pi * y)
        z = project_zero_mean(FieldPair.from_bulk(dom, field))
        out = subgrad_phi(z)
        target = 2.0 * np.pi ** 2 * (z.bulk)
        interior = (x > 0.01) & (x < 0.99) & (y > 0.01) & (y < 0.99)
        errs.append(np.abs(out.bulk - target)[interior].max())
        hs.append(1.0 / (n - 1))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.3)
