import numpy as np
import pytest

from safe_explore.agents import mlp
from safe_explore.agents.dqn import (
    BufferTooSmall,
    DQNLearner,
    MLPParams,
    decode_cells,
    dqn_train_step,
    featurize,
    load_params,
    save_params,
    target_sync,
    td_loss_and_grads,
    td_targets,
)
from safe_explore.agents.replay import ReplayBuffer
from safe_explore.envs import crossroad

from conftest import make_obs


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    params = MLPParams.create((6, 16, 3), rng)
    for p in params.online[1::2]:
        p[...] = rng.normal(0, 0.1, size=p.shape)
    states = rng.normal(size=(12, 6))
    actions = rng.integers(0, 3, size=12)
    targets = rng.normal(size=12)
    _, grads = td_loss_and_grads(params, states, actions, targets)
    h = 1e-6
    for _ in range(10):
        k = int(rng.integers(len(params.online)))
        idx = tuple(int(rng.integers(n)) for n in params.online[k].shape)
        p = params.online[k]
        old = p[idx]
        p[idx] = old + h
        up, _ = td_loss_and_grads(params, states, actions, targets)
        p[idx] = old - h
        down, _ = td_loss_and_grads(params, states, actions, targets)
        p[idx] = old
        assert rel_err(grads[k][idx], (up - down) / (2 * h)) <= 1e-4


def test_zero_loss_on_identical_transitions():
    rng = np.random.default_rng(1)
    params = MLPParams.create((4, 8, 2), rng, gamma=0.0, batch_size=8, zero_last=True)
    buf = ReplayBuffer(16, 4)
    s = rng.normal(size=4)
    for _ in range(16):
        buf.add(s, 1, 0.0, s, False)
    assert dqn_train_step(params, buf, rng) == 0.0


def test_terminal_target_is_reward():
    rng = np.random.default_rng(2)
    params = MLPParams.create((4, 8, 2), rng, gamma=0.99)
    s2 = rng.normal(size=(3, 4))
    r = np.array([0.3, -1.0, 1.0])
    assert np.array_equal(td_targets(params, r, s2, np.ones(3)), r)
    boot = td_targets(params, r, s2, np.zeros(3))
    expected = r + 0.99 * mlp.predict(params.target, s2).max(axis=1)
    assert np.allclose(boot, expected)


def test_value_bound_clips_bootstrap():
    rng = np.random.default_rng(3)
    params = MLPParams.create((2, 4, 2), rng, gamma=0.5, value_bound=1.0)
    params.target[-1][...] = 10.0
    t = td_targets(params, np.zeros(2), np.zeros((2, 2)), np.zeros(2))
    assert np.allclose(t, 0.5)


def test_buffer_too_small():
    params = MLPParams.create((3, 4, 2), np.random.default_rng(0), batch_size=8)
    buf = ReplayBuffer(10, 3)
    buf.add(np.zeros(3), 0, 0.0, np.zeros(3), True)
    with pytest.raises(BufferTooSmall):
        dqn_train_step(params, buf, np.random.default_rng(0))


def test_sync_is_bit_identical_copy():
    rng = np.random.default_rng(4)
    params = MLPParams.create((4, 8, 2), rng)
    for p in params.online:
        p += rng.normal(size=p.shape)
    target_sync(params)
    assert all(np.array_equal(t, o) for t, o in zip(params.target, params.online))
    params.online[0][0, 0] += 1.0
    assert params.target[0][0, 0] != params.online[0][0, 0]


def test_target_fixed_between_syncs():
    rng = np.random.default_rng(5)
    learner = DQNLearner(4, 2, rng, hidden=(8,), batch_size=4, learn_start=4, sync_every=10, train_every=1)
    snapshot = [p.copy() for p in learner.params.target]
    for _ in range(13):
        s = rng.normal(size=4)
        learner.observe(s, int(rng.integers(2)), float(rng.normal()), rng.normal(size=4), False)
        if learner.params.updates < 10:
            assert all(np.array_equal(a, b) for a, b in zip(snapshot, learner.params.target))
    assert learner.params.updates == 10
    assert learner.params.syncs == 1
    # the tenth update was the last step, so the fresh copy still equals the online net
    assert all(np.array_equal(a, b) for a, b in zip(learner.params.online, learner.params.target))
    assert not all(np.array_equal(a, b) for a, b in zip(snapshot, learner.params.target))


def test_train_every_controls_update_count():
    rng = np.random.default_rng(6)
    learner = DQNLearner(3, 2, rng, hidden=(4,), batch_size=2, learn_start=10, train_every=4)
    for _ in range(30):
        learner.observe(np.zeros(3), 0, 0.0, np.zeros(3), True)
    # steps 12, 16, 20, 24, 28 are past learn_start and divisible by 4
    assert learner.params.updates == 5


def test_flat_adam_matches_per_tensor_adam():
    rng = np.random.default_rng(7)
    flat = mlp.init_params((5, 7, 3), rng)
    separate = [p.copy() for p in flat]
    assert mlp.flat_view(flat) is not None and mlp.flat_view(separate) is None
    opt_a, opt_b = mlp.Adam(flat, lr=0.01), mlp.Adam(separate, lr=0.01)
    for _ in range(20):
        grads = [rng.normal(size=p.shape) for p in flat]
        opt_a.step(flat, grads)
        opt_b.step(separate, grads)
    for a, b in zip(flat, separate):
        assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_adam_first_step_moves_by_lr():
    p = [np.array([1.0, -2.0])]
    opt = mlp.Adam(p, lr=0.1)
    opt.step(p, [np.array([3.0, -0.5])])
    assert np.allclose(p[0], [0.9, -1.9], atol=1e-6)


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    params = MLPParams.create((4, 6, 2), rng, gamma=0.9, batch_size=16, sync_every=7, value_bound=1.0)
    for p in params.online:
        p += rng.normal(size=p.shape)
    params.updates = 42
    path = tmp_path / "net.json"
    save_params(params, path)
    back = load_params(path)
    assert back.sizes == params.sizes and back.updates == 42 and back.value_bound == 1.0
    assert (back.gamma, back.batch_size, back.sync_every) == (0.9, 16, 7)
    for a, b in zip(back.online, params.online):
        assert np.array_equal(a, b)
    for a, b in zip(back.target, params.target):
        assert np.array_equal(a, b)
    x = rng.normal(size=4)
    assert np.array_equal(back.q_values(x), params.q_values(x))
    (tmp_path / "bad").write_text("nope\n{}\n")
    with pytest.raises(ValueError):
        load_params(tmp_path / "bad")


def test_featurize_roundtrip():
    obs = make_obs((3, 6), [(0, 1, 1), (8, 2, -1), (5, 3, 1)])
    vec = featurize(obs)
    assert vec.shape == (9 + 9 + 3 * 9,)
    assert decode_cells(vec, 9, 9) == ((3, 6), [0, 8, 5])
    assert vec[18 + 9 + 8] == -1.0
    env = crossroad()
    assert featurize(env.reset(seed=0)).shape == (18 + 7 * 9,)


def test_learner_fits_a_one_step_task():
    rng = np.random.default_rng(9)
    learner = DQNLearner(2, 2, rng, hidden=(16,), lr=1e-2, batch_size=16, learn_start=16, sync_every=50)
    states = np.eye(2)
    for _ in range(1500):
        i = int(rng.integers(2))
        a = int(rng.integers(2))
        learner.observe(states[i], a, float(a == i), states[i], True)
    for i in range(2):
        q = learner.q_values(states[i])
        assert int(np.argmax(q)) == i
        assert q[i] == pytest.approx(1.0, abs=0.05) and q[1 - i] == pytest.approx(0.0, abs=0.05)
