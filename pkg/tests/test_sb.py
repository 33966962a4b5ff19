import numpy as np
import pytest

from sbmimo.channel import ComplexDims, realize_channel, sample_qpsk, transmit
from sbmimo.qubo import QuboInstance, all_spins, build_ml, energy, is_local_min
from sbmimo.sb import SbConfig, SbState, hard_sign, init_state, sb_evolve, sb_run, sb_step, schedule

EXPLICIT = dict(semi_implicit=False, h_weight=1.0)


def pair(J12=-1.0, h=(0.0, 0.0)):
    return QuboInstance(np.array([[0.0, J12], [J12, 0.0]]), np.array(h))


def test_config_validation():
    for bad in (dict(T=0), dict(delta=0.0), dict(c0=-1.0)):
        with pytest.raises(ValueError):
            SbConfig(**bad)


def test_init_state(rng):
    s = init_state(64, rng)
    assert np.array_equal(s.x, np.zeros(64))
    assert np.all(np.abs(s.y) <= 0.1) and s.k == 0
    a = init_state(5, np.random.default_rng(1))
    b = init_state(5, np.random.default_rng(1))
    assert np.array_equal(a.y, b.y)
    with pytest.raises(ValueError):
        init_state(0, rng)


@pytest.mark.parametrize("mode", [EXPLICIT, {}])
def test_first_position_update(mode):
    y0 = np.array([0.05, -0.07])
    s = sb_step(pair(), SbState(np.zeros(2), y0), SbConfig(T=10, delta=0.5, **mode))
    assert np.array_equal(s.x, 0.5 * y0)
    assert s.k == 1


def test_free_step_keeps_momentum():
    # J = 0, h = 0, k = 0, T = 1: y(1) = y(0) - x(0)
    q = QuboInstance(np.zeros((2, 2)), np.zeros(2))
    y0 = np.array([0.03, -0.02])
    s = sb_step(q, SbState(np.zeros(2), y0), SbConfig(T=1, c0=1.0, **EXPLICIT))
    assert np.array_equal(s.y, y0)


def test_wall_clip_and_reset():
    q = QuboInstance(np.zeros((2, 2)), np.zeros(2))
    s = sb_step(q, SbState(np.array([1.0, 0.1]), np.array([0.5, 0.2])), SbConfig(T=5, c0=1.0))
    assert s.x[0] == 1.0 and s.y[0] == 0.0
    assert s.x[1] == pytest.approx(0.3) and s.y[1] == pytest.approx(-0.1)


def test_step_past_horizon_rejected():
    with pytest.raises(ValueError):
        sb_step(pair(), SbState(np.zeros(2), np.zeros(2), k=3), SbConfig(T=3))


def test_schedule():
    a = [schedule(k, 7) for k in range(7)]
    assert a[0] == 0.0 and a[-1] == 6 / 7 < 1.0
    assert all(u < v for u, v in zip(a, a[1:]))


def test_hard_sign():
    assert np.array_equal(hard_sign([0.3, -0.2, 0.0]), [1.0, -1.0, 1.0])


@pytest.mark.parametrize("mode", [EXPLICIT, {}])
def test_boundedness_and_reset(mode):
    r = np.random.default_rng(11)
    ch = realize_channel(ComplexDims(4, 4), r)
    q = build_ml(ch.H, transmit(ch, sample_qpsk(8, r), 0.5, r).y)
    cfg = SbConfig(T=40, **mode)
    s = init_state(8, r)
    for _ in range(40):
        prev = s
        s = sb_step(q, s, cfg)
        assert np.all(np.abs(s.x) <= 1.0)
        hit = np.abs(prev.x + prev.y) > 1.0
        assert np.all(s.y[hit] == 0.0)


def test_two_spin_ground_states(rng):
    for seed in range(20):
        out = sb_run(pair(), SbConfig(T=50), np.random.default_rng(seed))
        assert tuple(out) in {(1.0, 1.0), (-1.0, -1.0)}
        assert energy(pair(), out) == -2.0


def test_strong_field_wins():
    q = pair(J12=1e-3, h=(-10.0, -10.0))
    for seed in range(10):
        assert np.array_equal(sb_run(q, SbConfig(T=50), np.random.default_rng(seed)), [1.0, 1.0])


def test_toy_outputs_are_local_minima(toy):
    H, y = toy
    q = build_ml(H, y)
    seen = {tuple(sb_run(q, SbConfig(T=50), np.random.default_rng(s))) for s in range(200)}
    assert seen <= {(1.0, 1.0, 1.0), (-1.0, -1.0, -1.0)}


def test_batched_run_matches_single():
    r = np.random.default_rng(4)
    Js, hs = [], []
    for _ in range(3):
        ch = realize_channel(ComplexDims(2, 2), r)
        q = build_ml(ch.H, r.standard_normal(4))
        Js.append(q.J)
        hs.append(q.h)
    batched = QuboInstance(np.stack(Js), np.stack(hs))
    y0 = init_state(4, np.random.default_rng(9), size=(3,))
    out = sb_evolve(batched, SbConfig(T=30), y0).x
    for i in range(3):
        single = sb_evolve(QuboInstance(Js[i], hs[i]), SbConfig(T=30), SbState(y0.x[i], y0.y[i])).x
        assert np.allclose(out[i], single, atol=1e-13)


def test_fixed_point_quality_small():
    r = np.random.default_rng(0)
    hits = 0
    for _ in range(200):
        ch = realize_channel(ComplexDims(4, 4), r)
        q = build_ml(ch.H, transmit(ch, sample_qpsk(8, r), 1.0, r).y)
        hits += bool(is_local_min(q, sb_run(q, SbConfig(T=200), r)))
    assert hits >= 0.97 * 200


def test_variable_step_override():
    q = pair(h=(0.1, -0.2))
    cfg = SbConfig(T=2, c0=1.0)
    s = SbState(np.zeros(2), np.array([0.05, 0.05]))
    a = sb_step(q, s, cfg, delta=0.3, a=0.25)
    b = sb_step(q, s, SbConfig(T=4, delta=0.3, c0=1.0))
    # k/T = 0 in b, so only the position update agrees
    assert np.array_equal(a.x, b.x)
    s3 = SbState(np.zeros(2), np.array([0.05, 0.05]), k=5)
    assert sb_step(q, s3, cfg, delta=0.3, a=0.25).k == 6


def test_brute_force_small_problems_are_solved():
    r = np.random.default_rng(8)
    solved = 0
    for _ in range(50):
        J = r.standard_normal((6, 6))
        J = np.triu(J, 1) + np.triu(J, 1).T
        q = QuboInstance(J, r.standard_normal(6))
        X = all_spins(6)
        best = energy(q, X).min()
        solved += energy(q, sb_run(q, SbConfig(T=100), r)) <= best + 1e-12
    assert solved >= 30
