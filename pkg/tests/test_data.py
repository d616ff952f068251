import numpy as np
import pytest

from ugcem import data, envs

# brute-force counts over the seed-0 cartpole/pendulum datasets, pinned as
# regression values (direct predicate count, independent of filter_region)
CARTPOLE_SEED0_REMOVED = 1444
PENDULUM_SEED0_REMOVED = 2470


@pytest.fixture(scope="module")
def cartpole_10k():
    return data.collect_random("cartpole", 10000, 0)


def test_collect_length(cartpole_10k):
    assert len(cartpole_10k) == 10000


def test_collect_single_step():
    assert len(data.collect_random("cartpole", 1, 5)) == 1


def test_collect_rejects_nonpositive():
    with pytest.raises(ValueError):
        data.collect_random("cartpole", 0, 0)


def test_collect_deterministic():
    a = data.collect_random("pendulum", 200, 42)
    b = data.collect_random("pendulum", 200, 42)
    for ta, tb in zip(a.transitions, b.transitions):
        assert np.array_equal(ta.obs, tb.obs)
        assert np.array_equal(ta.action, tb.action)
        assert np.array_equal(ta.next_obs, tb.next_obs)


def test_buffer_fifo_eviction():
    buf = data.TransitionBuffer(env_id="cartpole", obs_dim=4, act_dim=1, capacity=3)
    for i in range(5):
        buf.add(np.full(4, float(i)), np.zeros(1), np.zeros(4))
    assert len(buf) == 3
    assert buf.transitions[0].obs[0] == 2.0


def test_buffer_rejects_bad_transitions():
    buf = data.TransitionBuffer(env_id="cartpole", obs_dim=4, act_dim=1)
    with pytest.raises(ValueError):
        buf.add(np.zeros(3), np.zeros(1), np.zeros(4))
    with pytest.raises(ValueError):
        buf.add(np.zeros(4), np.zeros(2), np.zeros(4))
    with pytest.raises(ValueError):
        buf.add(np.full(4, np.nan), np.zeros(1), np.zeros(4))


def _tiny_buffer(thetas):
    buf = data.TransitionBuffer(env_id="cartpole", obs_dim=4, act_dim=1)
    for th in thetas:
        obs = np.array([0.0, 0.0, th, 0.0])
        buf.add(obs, np.zeros(1), obs)
    return buf


def test_filter_removes_matching_transitions():
    buf = _tiny_buffer([0.0, -0.2, 0.1])
    out = data.filter_region(buf, envs.default_region("cartpole"))
    assert len(out) == 2
    assert [t.obs[2] for t in out.transitions] == [0.0, 0.1]


def test_filter_identity_when_nothing_matches():
    buf = _tiny_buffer([0.0, 0.05, 0.1])
    out = data.filter_region(buf, envs.default_region("cartpole"))
    assert len(out) == len(buf)


def test_filter_excludes_either_endpoint():
    buf = data.TransitionBuffer(env_id="cartpole", obs_dim=4, act_dim=1)
    inside = np.array([0.0, 0.0, -0.2, 0.0])
    outside = np.zeros(4)
    buf.add(outside, np.zeros(1), inside)
    buf.add(inside, np.zeros(1), outside)
    buf.add(outside, np.zeros(1), outside)
    out = data.filter_region(buf, envs.default_region("cartpole"))
    assert len(out) == 1


def test_filter_idempotent(cartpole_10k):
    region = envs.default_region("cartpole")
    once = data.filter_region(cartpole_10k, region)
    twice = data.filter_region(once, region)
    assert len(once) == len(twice)


def test_filter_universal_exclusion(cartpole_10k):
    region = envs.default_region("cartpole")
    out = data.filter_region(cartpole_10k, region)
    for t in out.transitions:
        assert not envs.in_forbidden_region(t.obs, region)
        assert not envs.in_forbidden_region(t.next_obs, region)


def test_filter_fraction_regression(cartpole_10k):
    out = data.filter_region(cartpole_10k, envs.default_region("cartpole"))
    assert len(cartpole_10k) - len(out) == CARTPOLE_SEED0_REMOVED


def test_filter_fraction_regression_pendulum():
    buf = data.collect_random("pendulum", 10000, 0)
    out = data.filter_region(buf, envs.default_region("pendulum"))
    assert len(buf) - len(out) == PENDULUM_SEED0_REMOVED


def test_filter_empty_result_warns():
    buf = _tiny_buffer([-0.2, -0.3])
    with pytest.warns(UserWarning):
        out = data.filter_region(buf, envs.default_region("cartpole"))
    assert len(out) == 0


def test_norm_stats_two_points():
    buf = data.TransitionBuffer(env_id="cartpole", obs_dim=4, act_dim=1)
    buf.add(np.zeros(4), np.zeros(1), np.zeros(4))
    buf.add(np.full(4, 2.0), np.full(1, 2.0), np.zeros(4))
    stats = data.fit_norm_stats(buf)
    assert np.allclose(stats.mean, 1.0)
    assert np.allclose(stats.std, 1.0)


def test_norm_stats_constant_column_floor():
    buf = _tiny_buffer([0.1, 0.1, 0.1])
    stats = data.fit_norm_stats(buf)
    assert np.all(stats.std == data.STD_FLOOR)


def test_norm_stats_requires_two_samples():
    buf = _tiny_buffer([0.1])
    with pytest.raises(ValueError):
        data.fit_norm_stats(buf)


def test_norm_stats_self_normalization(cartpole_10k):
    stats = data.fit_norm_stats(cartpole_10k)
    obs, act, _ = cartpole_10k.arrays()
    normed = stats.apply(np.concatenate([obs, act], axis=1))
    assert np.all(np.abs(normed.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(normed.std(axis=0) - 1.0) < 1e-6)


def test_save_load_round_trip(tmp_path):
    buf = data.collect_random("cartpole", 100, 3)
    path = tmp_path / "cartpole.dataset"
    data.save(buf, path)
    loaded = data.load(path)
    assert loaded.env_id == buf.env_id
    assert len(loaded) == len(buf)
    for ta, tb in zip(buf.transitions, loaded.transitions):
        assert np.array_equal(ta.obs, tb.obs)
        assert np.array_equal(ta.action, tb.action)
        assert np.array_equal(ta.next_obs, tb.next_obs)


def test_load_rejects_truncated_line(tmp_path):
    buf = data.collect_random("cartpole", 5, 0)
    path = tmp_path / "trunc.dataset"
    data.save(buf, path)
    text = path.read_text().splitlines()
    text[-1] = ",".join(text[-1].split(",")[:-2])
    path.write_text("\n".join(text) + "\n")
    with pytest.raises(ValueError):
        data.load(path)


def test_load_rejects_header_dim_mismatch(tmp_path):
    buf = data.collect_random("cartpole", 5, 0)
    path = tmp_path / "badheader.dataset"
    data.save(buf, path)
    text = path.read_text().replace("obs_dim=4", "obs_dim=5")
    path.write_text(text)
    with pytest.raises(ValueError):
        data.load(path)


def test_load_rejects_malformed_header(tmp_path):
    path = tmp_path / "nomagic.dataset"
    path.write_text("not a dataset\n1,2,3\n")
    with pytest.raises(ValueError):
        data.load(path)
