import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ncpick.correspondence import DualPoint, _powers, free_context
from ncpick.errors import InfeasibleError, ResidualError, ShapeError
from ncpick.linalg import op_norm, psd_sqrt_factor
from ncpick.ncfunc import TruncatedSchurOperator, coefficients_from_colligation
from ncpick.pick import make_problem, pick_matrix
from ncpick.realization import (
    Colligation,
    HatPair,
    assemble_hats,
    douglas_factor,
    random_colligation,
    simulate_system,
    split_and_verify,
    synthesize,
    transfer_eval,
)

from instances import crandn, feasible_problem, random_point, two_vertex_context


def _hats(A_hat, B_hat):
    ctx = free_context(1, 1)
    z = np.zeros((1, 1))
    return HatPair(ctx, 1, np.asarray(A_hat, complex), np.asarray(B_hat, complex), z, z, z,
                   DualPoint.zero(ctx), 0.0)


def test_douglas_trivial_shapes():
    omega, _ = douglas_factor(_hats([[1.0], [0.0]], [[0.0], [1.0]]))
    assert np.allclose(omega, [[0, 1], [0, 0]])
    omega, _ = douglas_factor(_hats(np.eye(2), np.eye(2)))
    assert np.allclose(omega, np.eye(2))


def test_zero_point_scalar_synthesis():
    ctx = free_context(1, 1)
    p = make_problem(ctx, [[[[0.0]]]], [[[[0.5]]]])
    L = psd_sqrt_factor(pick_matrix(p).matrix)
    hats = assemble_hats(L, p)
    r = np.sqrt(0.75)
    assert np.allclose(hats.A_hat, [[r], [0.5]])
    assert np.allclose(hats.B_hat, [[0.0], [1.0]])
    coll = synthesize(p)
    assert np.allclose(coll.omega, [[0, r], [0, 0.5]])
    assert np.allclose(coll.X, 0) and np.allclose(coll.Y, 0)
    assert coll.Z[0, 0] == pytest.approx(r) and coll.W[0, 0] == pytest.approx(0.5)


def test_zero_data_hats():
    ctx = free_context(2, 2)
    p = make_problem(ctx, [DualPoint.zero(ctx)], [[np.zeros((2, 2))]])
    hats = assemble_hats(psd_sqrt_factor(pick_matrix(p).matrix), p)
    assert np.allclose(hats.A_hat, np.vstack([np.eye(2), np.zeros((2, 2))]))
    assert np.allclose(hats.B_hat, np.vstack([np.zeros((4, 2)), np.eye(2)]))


def test_bad_factor_is_diagnosed(rng):
    ctx = free_context(1, 2)
    p = feasible_problem(ctx, 1, rng)
    with pytest.raises(ResidualError) as info:
        assemble_hats(2 * np.eye(2), p)
    assert info.value.residuals["hat"] > 1


def test_nilpotent_example_synthesis():
    ctx = free_context(1, 2)
    Z = np.array([[0, 0.5], [0, 0]])
    p = make_problem(ctx, [[Z]], [[np.diag([0.5, 0.0])]])
    coll = synthesize(p)
    assert op_norm(coll.W) <= 1 + 1e-12
    assert op_norm(transfer_eval(coll, p.points[0]) - np.diag([0.5, 0])) <= 1e-8


def test_infeasible_raises_with_witness():
    ctx = free_context(1, 1)
    p = make_problem(ctx, [[[[0.0]]]], [[[[2.0]]]])
    with pytest.raises(InfeasibleError) as info:
        synthesize(p)
    assert info.value.verdict.min_eigenvalue == pytest.approx(-3.0, abs=1e-12)
    assert info.value.verdict.witness is not None


def test_pipeline_contracts_on_random_instances(rng):
    for _ in range(5):
        ctx = free_context(int(rng.integers(1, 4)), int(rng.integers(1, 3)))
        p = feasible_problem(ctx, int(rng.integers(1, 4)), rng)
        coll = synthesize(p)
        r = coll.residuals
        for key in ("partial_isometry", "douglas", "range", "state_equation", "output_equation"):
            assert r[key] <= 1e-8, key
        assert r["norm"] <= 1 + 1e-8
        for z, lam in zip(p.points, p.targets):
            assert op_norm(transfer_eval(coll, z) - lam.matrix) <= 1e-8


def test_quiver_intertwining_sparsity(rng):
    ctx = two_vertex_context()
    p = feasible_problem(ctx, 2, rng, max_norm=0.6)
    coll = synthesize(p)
    for key, val in coll.intertwining_defects().items():
        assert val <= 1e-10, key


def test_split_detects_broken_structure(rng):
    ctx = two_vertex_context()
    coll = random_colligation(ctx, 1, rng)
    omega = coll.omega.copy()
    omega[ctx.m_tot + 0, ctx.amplified(1).dim_EH + 1] = 0.5  # W leaks between vertices
    with pytest.raises(ResidualError):
        split_and_verify(omega, ctx, 1)


def test_colligation_shape_check():
    ctx = free_context(1, 1)
    with pytest.raises(ShapeError):
        Colligation(ctx, 1, np.zeros((2, 3)))


def test_zero_input_zero_output(rng):
    ctx = free_context(2, 1)
    coll = random_colligation(ctx, 2, rng)
    res = simulate_system(coll, [np.zeros(ctx.level_dim(t)) for t in range(4)])
    assert all(np.allclose(y, 0) for y in res.outputs)


def test_impulse_response_is_W(rng):
    ctx = two_vertex_context()
    coll = random_colligation(ctx, 2, rng)
    h = crandn(rng, 3)
    res = simulate_system(coll, [h])
    assert np.allclose(res.outputs[0], coll.W @ h)


def test_input_level_mismatch(rng):
    ctx = free_context(2, 1)
    coll = random_colligation(ctx, 1, rng)
    with pytest.raises(ShapeError):
        simulate_system(coll, [np.zeros(1), np.zeros(3)])


def test_energy_check_raises_for_expansive_system(rng):
    ctx = free_context(1, 1)
    coll = random_colligation(ctx, 1, rng, norm=3.0)
    with pytest.raises(ResidualError):
        simulate_system(coll, [np.ones(1)] * 5)


def test_transfer_eval_matches_series(rng):
    ctx = two_vertex_context()
    coll = random_colligation(ctx, 2, rng)
    z = random_point(ctx, rng, 0.3)
    co = coefficients_from_colligation(coll, 14)
    series = sum(C @ P for C, P in zip(co.coeffs, _powers(z, 14)))
    assert op_norm(series - transfer_eval(coll, z)) <= co.tail_bound(z.norm) + 1e-12


def test_transfer_eval_needs_unit_ball(rng):
    ctx = free_context(1, 1)
    with pytest.raises(ValueError):
        transfer_eval(random_colligation(ctx, 1, rng), DualPoint.from_blocks(ctx, [[[1.0]]]))


@settings(max_examples=25, deadline=None)
@given(d=st.integers(1, 3), m=st.integers(1, 2), N=st.integers(1, 2), seed=st.integers(0, 2**31))
def test_energy_and_transfer_equality(d, m, N, seed):
    g = np.random.default_rng(seed)
    ctx = free_context(d, m)
    coll = random_colligation(ctx, N, g, norm=g.uniform(0.2, 1.0))
    T = 4
    inputs = [crandn(g, ctx.level_dim(t)) for t in range(T + 1)]
    res = simulate_system(coll, inputs)
    assert res.slack >= -1e-10
    op = TruncatedSchurOperator(coefficients_from_colligation(coll, T), T)
    for y, ty in zip(res.outputs, op.apply(inputs)):
        assert np.allclose(y, ty, atol=1e-10)


def test_random_colligation_norm_and_structure(rng):
    ctx = two_vertex_context()
    coll = random_colligation(ctx, 2, rng, norm=0.9)
    assert op_norm(coll.omega) == pytest.approx(0.9)
    assert max(coll.intertwining_defects().values()) == 0
