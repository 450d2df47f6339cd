import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nulltrack.errors import ValidationError
from nulltrack.linalg import (
    EigenBasis,
    Projector,
    SymmetricMatrix,
    ThresholdPolicy,
    default_ridge,
    nullspace_projector,
    project,
    regularized_correlation,
    sym_eig,
    whiten,
    whiten_matrix,
)
from nulltrack.tensorio import FeatureMap


# --- independent eigenvalue oracles (closed-form characteristic polynomials) ---

def eig2_oracle(m):
    a, b, c = m[0, 0], m[0, 1], m[1, 1]
    tr = a + c
    disc = math.sqrt(max((a - c) ** 2 + 4 * b * b, 0.0))
    return sorted([(tr + disc) / 2, (tr - disc) / 2], reverse=True)


def eig3_oracle(m):
    """Trigonometric closed form for symmetric 3x3 eigenvalues."""
    p1 = m[0, 1] ** 2 + m[0, 2] ** 2 + m[1, 2] ** 2
    q = np.trace(m) / 3.0
    if p1 == 0:
        return sorted([m[0, 0], m[1, 1], m[2, 2]], reverse=True)
    p2 = (m[0, 0] - q) ** 2 + (m[1, 1] - q) ** 2 + (m[2, 2] - q) ** 2 + 2 * p1
    p = math.sqrt(p2 / 6.0)
    b_mat = (m - q * np.eye(3)) / p
    r = np.linalg.det(b_mat) / 2.0
    r = min(max(r, -1.0), 1.0)
    phi = math.acos(r) / 3.0
    lam1 = q + 2 * p * math.cos(phi)
    lam3 = q + 2 * p * math.cos(phi + 2 * math.pi / 3.0)
    lam2 = 3 * q - lam1 - lam3
    return sorted([lam1, lam2, lam3], reverse=True)


def whiten_oracle(raw):
    """Row-wise standardization recomputed independently."""
    out = np.empty_like(raw, dtype=float)
    for i, row in enumerate(raw):
        mu = sum(row) / len(row)
        var = sum((x - mu) ** 2 for x in row) / len(row)
        out[i] = 0.0 if var == 0 else (row - mu) / math.sqrt(var)
    return out


# --- whiten ---

def test_whiten_constant_channel_degenerate():
    zm = whiten_matrix(np.array([[5.0, 5.0, 5.0, 5.0], [0.0, 2.0, 0.0, 2.0]]))
    assert np.array_equal(zm.z[0], np.zeros(4))
    assert zm.degenerate[0] and not zm.degenerate[1]


def test_whiten_two_point_channel():
    zm = whiten_matrix(np.array([[0.0, 2.0]]))
    assert np.allclose(zm.z[0], [-1.0, 1.0])


def test_whiten_seeded_map_statistics():
    rng = np.random.default_rng(3)
    fm = FeatureMap.from_array(rng.normal(size=(8, 4, 4)).astype(np.float32), "semantic")
    zm = whiten(fm)
    assert zm.z.shape == (8, 16)
    assert np.all(np.abs(zm.z.mean(axis=1)) <= 1e-9)
    assert np.all(np.abs(np.mean(zm.z**2, axis=1) - 1.0) <= 1e-6)
    oracle = whiten_oracle(fm.columns().astype(float))
    assert np.allclose(zm.z, oracle, atol=1e-9)


def test_whiten_rejects_single_sample():
    with pytest.raises(ValidationError):
        whiten_matrix(np.ones((3, 1)))


# --- regularized correlation ---

def test_correlation_degenerate_rows_identity_scaling():
    zm = whiten_matrix(np.ones((3, 5)))
    m = regularized_correlation(zm, 0.5)
    assert np.allclose(m.m, 0.5 * np.eye(3))


def test_correlation_hand_matrix():
    zm = whiten_matrix(np.array([[1.0, -1.0], [1.0, -1.0]]))
    m = regularized_correlation(zm, 0.0)
    assert np.allclose(m.m, [[2.0, 2.0], [2.0, 2.0]])


def test_correlation_ridge_floors_eigenvalues():
    rng = np.random.default_rng(5)
    zm = whiten_matrix(rng.normal(size=(4, 10)))
    m = regularized_correlation(zm, 1e-3)
    lams = sym_eig(m).eigenvalues
    assert np.all(lams >= 1e-3 - 1e-9)


def test_correlation_rejects_negative_ridge():
    zm = whiten_matrix(np.random.default_rng(0).normal(size=(2, 6)))
    with pytest.raises(ValidationError):
        regularized_correlation(zm, -1e-9)


def test_correlation_exactly_symmetric():
    rng = np.random.default_rng(7)
    zm = whiten_matrix(rng.normal(size=(6, 40)))
    m = regularized_correlation(zm, 1e-4)
    assert np.array_equal(m.m, m.m.T)
    assert np.all(np.diag(m.m) >= m.ridge)


# --- sym_eig ---

def test_eig_diagonal():
    basis = sym_eig(np.diag([3.0, 1.0]))
    assert np.allclose(basis.eigenvalues, [3.0, 1.0])
    assert np.allclose(np.abs(basis.eigenvectors), np.eye(2), atol=1e-12)


def test_eig_2x2_hand_case():
    basis = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(basis.eigenvalues, [3.0, 1.0], atol=1e-12)
    v0 = basis.eigenvectors[:, 0]
    v1 = basis.eigenvectors[:, 1]
    assert abs(abs(v0 @ [1, 1] / math.sqrt(2)) - 1) <= 1e-12
    assert abs(abs(v1 @ [1, -1] / math.sqrt(2)) - 1) <= 1e-12


@pytest.mark.parametrize("method", ["jacobi", "lapack"])
def test_eig_oracle_3x3(method):
    rng = np.random.default_rng(11)
    for _ in range(50):
        a = rng.normal(size=(3, 3))
        m = (a + a.T) / 2
        basis = sym_eig(m, method=method)
        assert np.allclose(basis.eigenvalues, eig3_oracle(m), atol=1e-9)


def test_eig_invariants_random():
    rng = np.random.default_rng(13)
    for c in (2, 5, 16, 32):
        a = rng.normal(size=(c, c))
        m = (a + a.T) / 2
        basis = sym_eig(m)
        v = basis.eigenvectors
        assert np.linalg.norm(v.T @ v - np.eye(c)) <= 1e-8
        recon = v @ np.diag(basis.eigenvalues) @ v.T
        norm_m = np.linalg.norm(m)
        assert np.linalg.norm(recon - m) <= 1e-7 * norm_m
        assert np.linalg.norm(m @ v - v @ np.diag(basis.eigenvalues)) <= 1e-7 * norm_m
        assert np.all(np.diff(basis.eigenvalues) <= 1e-12)


def test_jacobi_matches_lapack():
    rng = np.random.default_rng(17)
    a = rng.normal(size=(20, 20))
    m = (a + a.T) / 2
    lam_j = sym_eig(m, method="jacobi").eigenvalues
    lam_l = sym_eig(m, method="lapack").eigenvalues
    assert np.allclose(lam_j, lam_l, atol=1e-9)


def test_eig_rejects_nonsymmetric():
    with pytest.raises(ValidationError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


# --- nullspace projector ---

def test_projector_all_low_energy_identity():
    proj = nullspace_projector(SymmetricMatrix(1e-12 * np.eye(4), ridge=0.0))
    assert proj.retained_rank == 4
    assert np.allclose(proj.p, np.eye(4), atol=1e-12)


def test_projector_rank1_hand_null_space():
    z = np.array([[1.0], [1.0]]) @ np.array([[1.0, 1.0]])
    m = SymmetricMatrix(z @ z.T, ridge=0.0)
    proj = nullspace_projector(m, ThresholdPolicy(eps_rel=1e-2))
    expected = 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert proj.retained_rank == 1
    assert np.allclose(proj.p, expected, atol=1e-12)
    assert abs(np.trace(proj.p) - 1.0) <= 1e-6


def test_projector_random_rank_r_annihilates():
    rng = np.random.default_rng(19)
    c, r, n = 8, 3, 40
    z = rng.normal(size=(c, r)) @ rng.normal(size=(r, n))
    gram = z @ z.T
    m = SymmetricMatrix(0.5 * (gram + gram.T), ridge=0.0)
    proj = nullspace_projector(m, ThresholdPolicy(eps_rel=1e-6))
    assert proj.retained_rank == c - r
    assert np.linalg.norm(proj.p @ z) <= 1e-8 * np.linalg.norm(z)
    assert abs(np.trace(proj.p) - (c - r)) <= 1e-6


def test_projector_none_selected_zero_matrix():
    rng = np.random.default_rng(23)
    zm = whiten_matrix(rng.normal(size=(4, 64)))
    m = regularized_correlation(zm, 1e-3)
    proj = nullspace_projector(m, ThresholdPolicy(eps_rel=0.0, eps_abs=0.0))
    assert proj.retained_rank == 0
    assert np.array_equal(proj.p, np.zeros((4, 4)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 10))
def test_projector_invariants_property(seed, c):
    rng = np.random.default_rng(seed)
    zm = whiten_matrix(rng.normal(size=(c, 3 * c)))
    proj = nullspace_projector(regularized_correlation(zm, 1e-4))
    p = proj.p
    assert np.array_equal(p, p.T)
    assert np.linalg.norm(p @ p - p) <= 1e-6
    assert abs(np.trace(p) - proj.retained_rank) <= 1e-6
    eye = np.eye(c)
    assert np.linalg.norm(p @ (eye - p)) <= 1e-6


# --- project ---

def test_project_zero_and_identity():
    delta = np.array([1.0, -2.0, 3.0])
    zero = Projector(np.zeros((3, 3)), retained_rank=0)
    assert np.array_equal(project(zero, delta), np.zeros(3))
    ident = Projector(np.eye(3), retained_rank=3)
    assert np.array_equal(project(ident, delta), delta)


def test_project_retained_subspace_fixed_point():
    rng = np.random.default_rng(29)
    c, r = 8, 3
    z = rng.normal(size=(c, r)) @ rng.normal(size=(r, 30))
    gram = z @ z.T
    m = SymmetricMatrix(0.5 * (gram + gram.T), ridge=0.0)
    basis = sym_eig(m)
    proj = nullspace_projector(m, ThresholdPolicy(eps_rel=1e-6))
    u_null = basis.eigenvectors[:, c - proj.retained_rank :]
    delta = u_null @ rng.normal(size=proj.retained_rank)
    once = project(proj, delta)
    assert np.linalg.norm(once - delta) <= 1e-8
    assert np.linalg.norm(project(proj, once) - once) <= 1e-6


def test_project_dimension_mismatch():
    with pytest.raises(ValidationError):
        project(Projector(np.eye(3), 3), np.zeros(4))


def test_default_ridge_scales_with_energy():
    zm = whiten_matrix(np.random.default_rng(1).normal(size=(4, 100)))
    ridge = default_ridge(zm)
    # whitened rows have unit variance, so the Gram trace is C * N
    assert ridge == pytest.approx(1e-4 * 4 * 100 / 4, rel=1e-6)
