import numpy as np
import pytest
from hypothesis import given, strategies as st

from qhinf import qmodel
from qhinf.qmodel import (
    J2,
    JumpPlant,
    PhysicalParams,
    TransitionRateMatrix,
    assemble_closed_loop,
    block_j,
    canonical_ito,
    ito_decompose,
    make_commutation_matrix,
    physical_to_statespace,
    validate_generator,
)
from qhinf.realizability import cr_residual, output_condition_residual


def test_canonical_commutation_matrix():
    th = make_commutation_matrix(2)
    assert np.array_equal(th.theta, J2)
    th4 = make_commutation_matrix(4)
    assert np.array_equal(th4.theta, np.kron(np.eye(2), J2))


def test_degenerate_commutation_matrix():
    th = make_commutation_matrix(4, "degenerate", null_dim=2)
    expected = np.zeros((4, 4))
    expected[2:, 2:] = J2
    assert np.array_equal(th.theta, expected)
    # all-zero variant is allowed
    th0 = make_commutation_matrix(4, "degenerate", null_dim=4)
    assert np.max(np.abs(th0.theta)) == 0.0


@pytest.mark.parametrize(
    "n,kind,null_dim",
    [(3, "canonical", None), (0, "canonical", None), (4, "degenerate", 1),
     (4, "degenerate", 0), (4, "degenerate", 5), (2, "weird", None)],
)
def test_commutation_matrix_rejects(n, kind, null_dim):
    with pytest.raises(ValueError):
        make_commutation_matrix(n, kind, null_dim)


@pytest.mark.parametrize("n", [2, 4, 6])
def test_theta_structure_identities(n):
    th = make_commutation_matrix(n)
    assert np.array_equal(th.theta, -th.theta.T)
    assert np.array_equal(th.theta @ th.theta, -np.eye(n))
    deg = make_commutation_matrix(n + 2, "degenerate", null_dim=2)
    blk = deg.theta[2:, 2:]
    assert np.array_equal(blk @ blk, -np.eye(n))


def test_ito_decompose_canonical():
    triple = ito_decompose(np.eye(2) + 1j * J2)
    assert np.array_equal(triple.s, np.eye(2))
    assert np.array_equal(triple.t_im, J2)


def test_ito_decompose_real_symmetric():
    triple = ito_decompose(np.eye(2))
    assert np.array_equal(triple.s, np.eye(2))
    assert np.max(np.abs(triple.t_im)) == 0.0


def test_ito_decompose_rejects_indefinite():
    # eigenvalues are -1 and 3
    with pytest.raises(ValueError, match="nonnegative"):
        ito_decompose(np.array([[1.0, 2.0j], [-2.0j, 1.0]]))


def test_ito_decompose_rejects_non_hermitian():
    with pytest.raises(ValueError, match="Hermitian"):
        ito_decompose(np.array([[1.0, 1.0], [0.0, 1.0]]))


@given(st.integers(0, 10**6), st.integers(1, 4))
def test_ito_decompose_roundtrip(seed, m):
    rng = np.random.default_rng(seed)
    r = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    f = r.conj().T @ r  # Hermitian PSD
    triple = ito_decompose(f)
    assert np.max(np.abs(triple.s - triple.s.T)) <= 1e-12
    assert np.max(np.abs(triple.t_im + triple.t_im.T)) <= 1e-12
    assert np.max(np.abs(triple.f - f)) <= 1e-12


def test_canonical_ito():
    triple = canonical_ito(4)
    assert np.array_equal(triple.s, np.eye(4))
    assert np.array_equal(triple.t_im, block_j(4))


def test_generator_validation():
    ok = validate_generator(np.array([[-0.02, 0.01, 0.01], [0.01, -0.01, 0.0], [0.01, 0.0, -0.01]]))
    assert ok.ok
    assert validate_generator(np.zeros((3, 3))).ok
    bad = validate_generator(np.array([[-1.0, 2.0], [-0.5, 0.5]]))
    assert not bad.ok
    kinds = {(v[0], v[1], v[2]) for v in bad.violations}
    assert ("negative_offdiag", 1, 0) in kinds
    # the first row sums to 1, also flagged
    assert any(v[0] == "row_sum" and v[1] == 0 for v in bad.violations)


def test_rate_matrix_constructor_rejects():
    with pytest.raises(ValueError):
        TransitionRateMatrix(np.array([[-1.0, 2.0], [-0.5, 0.5]]))


def _cavity_params(kappa=1.0):
    lam = (np.sqrt(kappa) / 2.0) * np.array([[1.0, 1.0j]])
    return PhysicalParams.from_complex(np.zeros((2, 2)), lam)


def test_statespace_map_trivial():
    params = PhysicalParams.from_complex(np.zeros((2, 2)), np.zeros((1, 2), dtype=complex))
    a, b, c = physical_to_statespace(params, make_commutation_matrix(2))
    assert np.max(np.abs(a)) == 0.0
    assert np.max(np.abs(b)) == 0.0
    assert np.max(np.abs(c)) == 0.0


def test_statespace_map_cavity():
    # single lossy cavity; this pins the sign convention produced by the map:
    # the input matrix carries the minus sign, the output the plus sign
    a, b, c = physical_to_statespace(_cavity_params(), make_commutation_matrix(2))
    assert np.allclose(a, -0.5 * np.eye(2), atol=1e-12)
    assert np.allclose(b, -np.eye(2), atol=1e-10)
    assert np.allclose(c, np.eye(2), atol=1e-12)


def test_statespace_map_two_field_squeezer_mode():
    kappa1, kappa2, chi = 0.8264, 0.0011, 0.0827
    r = np.array([[0.0, -chi / 2.0], [-chi / 2.0, 0.0]])
    lam = np.vstack([
        (np.sqrt(kappa1) / 2.0) * np.array([1.0, 1.0j]),
        (np.sqrt(kappa2) / 2.0) * np.array([1.0, 1.0j]),
    ])
    a, _, _ = physical_to_statespace(
        PhysicalParams.from_complex(r, lam), make_commutation_matrix(2)
    )
    assert np.max(np.abs(a - np.diag([-0.4965, -0.3310]))) <= qmodel.REFERENCE_TOL


def test_statespace_map_rejects_degenerate_theta():
    with pytest.raises(ValueError, match="canonical"):
        physical_to_statespace(
            _cavity_params(), make_commutation_matrix(2, "degenerate", null_dim=2)
        )


@given(st.integers(0, 10**6))
def test_statespace_map_output_is_realizable(seed):
    # systems produced by the oscillator map preserve commutation relations
    # and satisfy the output-channel identity by construction
    rng = np.random.default_rng(seed)
    n = 2 * rng.integers(1, 3)
    n_fields = int(rng.integers(max(1, n // 2 - 1), n))
    r = rng.normal(size=(n, n))
    r = 0.5 * (r + r.T)
    lam = rng.normal(size=(n_fields, n)) + 1j * rng.normal(size=(n_fields, n))
    theta = make_commutation_matrix(int(n))
    a, b, c = physical_to_statespace(PhysicalParams.from_complex(r, lam), theta)
    assert np.max(np.abs(cr_residual(a, b, theta, block_j(2 * n_fields)))) <= 1e-9
    assert np.max(np.abs(output_condition_residual(b, c, theta))) <= 1e-9


def _toy_plant(n_modes=2):
    rng = np.random.default_rng(5)
    a_modes = tuple(rng.normal(size=(2, 2)) - 2 * np.eye(2) for _ in range(n_modes))
    pi = np.full((n_modes, n_modes), 0.1)
    np.fill_diagonal(pi, -0.1 * (n_modes - 1))
    return JumpPlant(
        a_modes=a_modes,
        b1=rng.normal(size=(2, 2)),
        b2=rng.normal(size=(2, 2)),
        c1=rng.normal(size=(2, 2)),
        d1=rng.normal(size=(2, 2)),
        c2=rng.normal(size=(2, 2)),
        d2=rng.normal(size=(2, 2)),
        theta=make_commutation_matrix(2),
        rates=TransitionRateMatrix(pi),
    )


def _toy_controller(n_modes=2, n_nu=2):
    from qhinf.qmodel import Controller, ControllerMode

    rng = np.random.default_rng(17)
    modes = tuple(
        ControllerMode(
            rng.normal(size=(2, 2)) - 2 * np.eye(2),
            rng.normal(size=(2, 2)),
            rng.normal(size=(2, 2)),
            rng.normal(size=(2, n_nu)),
            rng.normal(size=(2, n_nu)),
        )
        for _ in range(n_modes)
    )
    return Controller(modes, make_commutation_matrix(2))


def test_closed_loop_block_placement_exact():
    plant = _toy_plant()
    ctrl = _toy_controller()
    loop = assemble_closed_loop(plant, ctrl)
    for pm, km, lm in zip(plant.a_modes, ctrl.modes, loop.modes):
        assert np.array_equal(lm.a[:2, :2], pm)
        assert np.array_equal(lm.a[:2, 2:], plant.b2 @ km.c)
        assert np.array_equal(lm.a[2:, :2], km.b @ plant.c2)
        assert np.array_equal(lm.a[2:, 2:], km.a)
        assert np.array_equal(lm.b1[:2], plant.b1)
        assert np.array_equal(lm.b1[2:], km.b @ plant.d2)
        assert np.array_equal(lm.b2[:2], plant.b2 @ km.d)
        assert np.array_equal(lm.b2[2:], km.e)
        assert np.array_equal(lm.c[:, :2], plant.c1)
        assert np.array_equal(lm.c[:, 2:], plant.d1 @ km.c)
        assert np.array_equal(lm.d, plant.d1 @ km.d)


def test_closed_loop_mode_count_mismatch():
    with pytest.raises(ValueError, match="modes"):
        assemble_closed_loop(_toy_plant(3), _toy_controller(2))


def test_closed_loop_reference_design_stable():
    from qhinf import demo

    loop = assemble_closed_loop(demo.reference_plant(), demo.reference_controller())
    for m in loop.modes:
        assert np.max(np.linalg.eigvals(m.a).real) < 0.0


def test_plant_immutable():
    plant = _toy_plant()
    with pytest.raises(ValueError):
        plant.b1[0, 0] = 3.0
