import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import denoise_spec, flow_spec, inpaint_spec, local_oracle, wavelet_spec
from tvdd.decomp import (
    DDConfig,
    DecompLayout,
    OverlapTooLarge,
    SigmaOutOfRange,
    color_subdomains,
    layout_1d,
    local_subproblem,
    max_violation,
    outer_iterate,
    partition_weights,
    run,
    weights_1d,
    window_divergence,
)
from tvdd.diffops import divergence
from tvdd.dualsolve import SolveControl, run_kernel, default_tau, solve
from tvdd.grid import frobenius_pointwise
from tvdd.model import (
    ForwardOperator,
    ProblemSpec,
    coercivity_constant,
    dual_energy,
    primal_recover,
    project_K,
)


def check_tiling(s, M, r, layout):
    b = [bi for bi, _ in layout]
    a = [ai for _, ai in layout]
    assert b[0] == 0 and b[-1] + a[-1] == s
    for i in range(M - 1):
        # consecutive intervals share exactly r units
        assert b[i] + a[i] - b[i + 1] == r
    covered = set()
    for bi, ai in layout:
        covered |= set(range(bi, bi + ai + 1))
    assert covered == set(range(s + 1))
    assert all(ai >= 2 * r for ai in a)


def test_layout_examples():
    assert layout_1d(9, 1, 3) == [(0, 9)]
    assert layout_1d(9, 2, 2) == [(0, 5), (3, 6)]
    lay = layout_1d(20, 3, 2)
    assert sum(a for _, a in lay) == 24
    assert lay[-1][0] + lay[-1][1] == 20
    check_tiling(20, 3, 2, lay)


def test_layout_rejects_large_overlap():
    with pytest.raises(OverlapTooLarge):
        layout_1d(9, 3, 3)


@settings(max_examples=200, deadline=None)
@given(s=st.integers(2, 80), M=st.integers(2, 6), r=st.integers(1, 8))
def test_layout_tiling_property(s, M, r):
    try:
        lay = layout_1d(s, M, r)
    except OverlapTooLarge:
        # must be genuinely infeasible: equal split would be shorter than 2r
        assert (s + (M - 1) * r) // M < 2 * r
        return
    check_tiling(s, M, r, lay)


def test_weights_single_domain():
    lay = DecompLayout.build((5, 4), 1, 2)
    np.testing.assert_array_equal(lay.theta(0), np.ones((5, 4)))


def test_weights_overlap_values():
    # intervals [0, 5] and [3, 9] with r = 2
    w = weights_1d(9, layout_1d(9, 2, 2), 2)
    np.testing.assert_array_equal(w[:, 3], [1.0, 0.0])
    np.testing.assert_array_equal(w[:, 4], [0.5, 0.5])
    np.testing.assert_array_equal(w[:, 5], [0.0, 1.0])
    np.testing.assert_array_equal(w.sum(axis=0), np.ones(10))


@settings(max_examples=60, deadline=None)
@given(n1=st.integers(6, 40), n2=st.integers(6, 40), m1=st.integers(1, 4), m2=st.integers(1, 4),
       r=st.integers(1, 4))
def test_partition_of_unity_property(n1, n2, m1, m2, r):
    try:
        lay = DecompLayout.build((n1, n2), (m1, m2), r)
    except OverlapTooLarge:
        return
    th = np.array(partition_weights(lay))
    assert np.all(th.sum(axis=0) == 1.0)
    assert np.all((th >= 0) & (th <= 1))
    for i in range(lay.n_sub):
        outside = np.ones((n1, n2), bool)
        outside[lay.box(i)] = False
        assert np.all(th[i][outside] == 0)


def test_colors():
    assert color_subdomains(DecompLayout.build((30,), 3, 2)) == [1, 2, 1]
    assert sorted(color_subdomains(DecompLayout.build((12, 12), 2, 2))) == [1, 2, 3, 4]


@pytest.mark.parametrize("counts,r", [((3, 3), 2), ((4, 2), 3), ((3, 4), 1), ((2, 2), 5)])
def test_same_color_supports_disjoint(counts, r):
    lay = DecompLayout.build((24, 26), counts, r)
    for cls_ in lay.color_classes():
        for i, j in itertools.combinations(cls_, 2):
            assert not np.any((lay.theta(i) > 0) & (lay.theta(j) > 0))


def test_window_divergence_matches_global(rng):
    q = rng.standard_normal((12, 10, 2, 2))
    full = divergence(q)
    lay = DecompLayout.build((12, 10), 2, 2)
    for i in range(lay.n_sub):
        box = lay.box(i)
        np.testing.assert_allclose(window_divergence(q, box, lay.upper_is_boundary(i)), full[box], atol=1e-15)


def test_sigma_bounds():
    with pytest.raises(SigmaOutOfRange):
        DDConfig(mode="par", sigma=0.5).resolved_sigma(4)
    with pytest.raises(SigmaOutOfRange):
        DDConfig(mode="seq", sigma=1.5).resolved_sigma(4)
    assert DDConfig(mode="par").resolved_sigma(4) == 0.25
    assert DDConfig(mode="seq").resolved_sigma(4) == 1.0


@pytest.mark.parametrize("factory", [denoise_spec, inpaint_spec])
def test_local_solve_is_near_optimal(factory):
    spec = factory((4, 4))
    lay = DecompLayout.build((4, 4), (2, 1), 1)
    r = np.random.default_rng(0)
    p_anchor = project_K(r.standard_normal(spec.dual_shape), spec.lam)
    p_prev = p_anchor.copy()
    for i in range(lay.n_sub):
        th = lay.theta(i)
        base = p_prev - th[..., None, None] * p_anchor
        v0 = th[..., None, None] * p_prev
        _, e_best = local_oracle(spec, th, p_prev, p_anchor)
        v = local_subproblem(spec, lay, i, p_prev, p_anchor, DDConfig(inner_iters=200000))
        e0 = dual_energy(spec, base + v0)
        ev = dual_energy(spec, base + v)
        assert e0 - ev >= 0.999 * (e0 - e_best)
        assert np.all(frobenius_pointwise(v) <= th * spec.lam + 1e-12)


def test_local_solve_at_optimum_is_stationary():
    spec = denoise_spec((8, 8))
    p_opt, _ = solve(spec, control=SolveControl(max_iters=50000, log_energy=False))
    lay = DecompLayout.build((8, 8), 2, 2)
    for i in range(lay.n_sub):
        th = lay.theta(i)[..., None, None]
        v = local_subproblem(spec, lay, i, p_opt, p_opt, DDConfig(inner_iters=50))
        e_before = dual_energy(spec, p_opt)
        assert dual_energy(spec, p_opt + v - th * p_opt) == pytest.approx(e_before, abs=1e-9)
        np.testing.assert_allclose(v, th * p_opt, atol=1e-5)


def test_single_domain_equals_global_steps():
    spec = inpaint_spec((9, 7))
    lay = DecompLayout.build(spec.shape, 1, 1)
    p = run_kernel(spec, spec.zero_dual(), default_tau(spec), 3)
    cfg = DDConfig(mode="seq", sigma=1.0, inner_iters=40)
    # p + (v - p) instead of v: equal up to one rounding
    np.testing.assert_allclose(outer_iterate(spec, lay, cfg, p),
                               run_kernel(spec, p, default_tau(spec), 40), rtol=0, atol=1e-15)


def test_tiny_sigma_keeps_iterate():
    spec = denoise_spec((10, 10))
    lay = DecompLayout.build(spec.shape, 2, 2)
    p = run_kernel(spec, spec.zero_dual(), default_tau(spec), 10)
    q = outer_iterate(spec, lay, DDConfig(mode="seq", sigma=1e-12, inner_iters=20), p)
    np.testing.assert_allclose(q, p, atol=1e-11)


@pytest.mark.parametrize("mode", ["seq", "par"])
@pytest.mark.parametrize("factory", [denoise_spec, inpaint_spec, flow_spec])
def test_monotone_and_feasible(mode, factory):
    spec = factory((16, 16))
    lay = DecompLayout.build(spec.shape, 2, 5)
    viol = []
    _, _, trace = run(spec, lay, DDConfig(mode=mode, outer_iters=15, inner_iters=30),
                      callback=lambda n, p: viol.append(max_violation(spec, p)))
    assert trace.is_monotone(1e-12)
    assert max(viol) <= 1e-12


def test_zero_data_stays_zero():
    spec = ProblemSpec(ForwardOperator.identity((8, 8)), np.zeros((8, 8)), 0.1)
    p, u, trace = run(spec, DecompLayout.build((8, 8), 2, 2), DDConfig(outer_iters=3))
    assert np.all(p == 0) and np.all(u == 0)
    assert max(trace.energy) == 0


@pytest.mark.parametrize("mode", ["seq", "par"])
def test_converges_to_global_solution(mode):
    spec = denoise_spec((8, 8))
    _, ref = solve(spec, control=SolveControl(max_iters=60000, log_every=60000))
    lay = DecompLayout.build(spec.shape, 2, 2)
    p, u, trace = run(spec, lay, DDConfig(mode=mode, outer_iters=200, inner_iters=50))
    assert trace.energy[-1] == pytest.approx(ref.energy[-1], abs=1e-6)


def test_primal_error_bound_after_decomposition():
    spec = inpaint_spec((12, 12))
    p_ref, _ = solve(spec, control=SolveControl(max_iters=200000, log_energy=False))
    u_ref = primal_recover(spec, p_ref)
    e_ref = dual_energy(spec, p_ref)
    p, u, trace = run(spec, DecompLayout.build(spec.shape, 2, 3), DDConfig(outer_iters=10, inner_iters=20))
    cb = coercivity_constant(spec)
    assert 0.5 * cb * np.sum((u - u_ref) ** 2) <= trace.energy[-1] - e_ref + 1e-9


@pytest.mark.parametrize("mode", ["seq", "par"])
def test_workers_do_not_change_result(mode):
    spec = flow_spec((20, 20))
    lay = DecompLayout.build(spec.shape, 3, 2)
    out = [run(spec, lay, DDConfig(mode=mode, outer_iters=3, inner_iters=10, workers=w))[0] for w in (1, 2, 4)]
    for q in out[1:]:
        np.testing.assert_array_equal(q, out[0])


def test_backends_agree():
    spec = inpaint_spec((14, 12))
    lay = DecompLayout.build(spec.shape, 2, 3)
    a = run(spec, lay, DDConfig(outer_iters=3, inner_iters=15, backend="numpy"))[0]
    b = run(spec, lay, DDConfig(outer_iters=3, inner_iters=15))[0]
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_global_operator_goes_through_surrogate():
    spec = wavelet_spec((8, 8))
    lay = DecompLayout.build(spec.shape, 2, 2)
    _, _, trace = run(spec, lay, DDConfig(outer_iters=5, inner_iters=30, nsur=0))
    assert trace.is_monotone(1e-12)
    assert trace.energy[-1] < trace.energy[0]


def test_layout_3d():
    lay = DecompLayout.build((8, 7, 9), (2, 1, 2), 2)
    th = np.array(partition_weights(lay))
    assert np.all(th.sum(axis=0) == 1.0)
    assert len(set(lay.colors())) == 4
    spec = ProblemSpec(ForwardOperator.identity((8, 7, 9)), np.random.default_rng(1).random((8, 7, 9)), 0.1)
    _, _, trace = run(spec, lay, DDConfig(outer_iters=3, inner_iters=10))
    assert trace.is_monotone(1e-12)
