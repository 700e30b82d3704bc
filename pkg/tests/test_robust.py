import numpy as np
import pytest

from mdsaf.robust import (ThresholdState, c_factor, huber_cost, init_threshold,
                          phi_score, update_threshold)


def test_huber_branch_table():
    assert huber_cost(0.5, 1.0) == pytest.approx(0.125)
    assert huber_cost(3.0, 1.0) == pytest.approx(0.5)   # clipped branch: xi^2/2
    assert huber_cost(0.0, 1.0) == 0.0
    assert huber_cost(1.0, 1.0) == pytest.approx(0.5)   # tie goes to the clipped branch


def test_phi_branch_table():
    assert phi_score(0.5, 1.0) == 0.5
    assert phi_score(2.0, 1.0) == 0.0
    assert phi_score(-0.3, 0.5) == -0.3
    assert phi_score(1.0, 1.0) == 0.0  # tie rejected


def test_phi_odd_symmetry():
    rng = np.random.default_rng(0)
    for _ in range(200):
        e = rng.normal(scale=3.0)
        xi = abs(rng.normal(scale=2.0)) + 1e-6
        assert phi_score(-e, xi) == -phi_score(e, xi)


def test_phi_is_huber_derivative():
    # finite differences away from the corner |e| = xi
    rng = np.random.default_rng(1)
    h = 1e-6
    checked = 0
    while checked < 100:
        e = rng.normal(scale=2.0)
        xi = abs(rng.normal(scale=1.5)) + 0.1
        if abs(abs(e) - xi) < 10 * h:
            continue
        fd = (huber_cost(e + h, xi) - huber_cost(e - h, xi)) / (2 * h)
        assert fd == pytest.approx(phi_score(e, xi), abs=1e-4)
        checked += 1


def test_c_factor_value():
    assert c_factor(5) == pytest.approx(1.483 * (1 + 5 / 4))
    assert c_factor(5) == pytest.approx(3.33675)


def test_window_median_example():
    # squared-error window (1, 4, 9, 16, 25) -> median term 9
    st = init_threshold(gamma=0.5, k_xi=1.0, n_w=5, sigma0_sq=1.0)
    for e in (1.0, 2.0, 3.0, 4.0):
        update_threshold(st, e)
    sig_before = st.sigma_sq
    update_threshold(st, 5.0)
    assert st.sigma_sq == pytest.approx(0.5 * sig_before + st.c * 0.5 * 9.0)


def test_fixed_point_constant_stream():
    # sigma^2 -> C * c^2 under a constant error stream
    st = init_threshold(gamma=0.99, k_xi=2.576, n_w=5, sigma0_sq=1.0)
    c = 0.7
    for _ in range(3000):
        update_threshold(st, c)
    assert st.sigma_sq == pytest.approx(st.c * c * c, rel=0.01)


def test_init_validation():
    st = init_threshold()
    assert st.gamma == 0.99 and st.k_xi == 2.576 and st.n_w == 5
    with pytest.raises(ValueError):
        init_threshold(gamma=1.0)
    with pytest.raises(ValueError):
        init_threshold(gamma=0.0)
    with pytest.raises(ValueError):
        init_threshold(n_w=4)
    with pytest.raises(ValueError):
        init_threshold(sigma0_sq=0.0)


def test_first_update_with_zero_error():
    st = init_threshold(gamma=0.99, sigma0_sq=1.0)
    _, xi = update_threshold(st, 0.0)
    assert st.sigma_sq == pytest.approx(0.99)
    assert xi == pytest.approx(2.576 * np.sqrt(0.99))


def test_update_order_pinned():
    # the returned xi reflects the *new* error already pushed into the window
    st = init_threshold(gamma=0.5, k_xi=1.0, n_w=5, sigma0_sq=1.0)
    _, xi = update_threshold(st, 4.0)
    # window holds only 16.0 -> median 16 -> sigma^2 = 0.5 + C*0.5*16
    assert xi == pytest.approx(np.sqrt(0.5 + st.c * 0.5 * 16.0))


def test_scale_equivariance():
    rng = np.random.default_rng(2)
    errors = rng.standard_normal(4000)
    s = 3.7
    a = init_threshold()
    b = init_threshold(sigma0_sq=s * s)  # scale the initial state consistently
    for e in errors:
        update_threshold(a, e)
        update_threshold(b, s * e)
    assert b.sigma_sq / a.sigma_sq == pytest.approx(s * s, rel=0.01)


def test_rejected_sample_contributes_zero():
    st = init_threshold()
    _, xi = update_threshold(st, 1e6)
    assert phi_score(1e6, xi) == 0.0
