"""Representation training loop: determinism, progress, failure handling."""

import numpy as np
import pytest

from xirl import training
from xirl.autodiff import Var
from xirl.demos import DemoVideo, generate_demos, load_demo
from xirl.embedding import forward_np, make_model, save_model
from xirl.losses import tcc_loss
from xirl.training import ReprTrainConfig, train


@pytest.fixture(scope="module")
def longstick_videos(tmp_path_factory):
    root = tmp_path_factory.mktemp("demos")
    generate_demos(root, "longstick", 20, seed=7, grid=16)
    return [
        load_demo(root / "longstick" / f"{i:05d}.xmdm").video() for i in range(20)
    ]


def _mixed_pool(videos):
    # relabel half the pool so lifs sees two embodiments
    out = []
    for i, v in enumerate(videos):
        emb = "mediumstick" if i % 2 else v.embodiment
        out.append(DemoVideo(emb, v.grids, v.rewards))
    return out


def test_config_validation():
    with pytest.raises(ValueError):
        ReprTrainConfig("simclr", 10)
    with pytest.raises(ValueError):
        ReprTrainConfig("tcc", -1)
    with pytest.raises(ValueError):
        ReprTrainConfig("tcc", 10, frames_per_video=1)
    with pytest.raises(ValueError):
        ReprTrainConfig("tcc", 10, batch_videos=1)
    with pytest.raises(ValueError):
        ReprTrainConfig("lifs", 10, batch_videos=1)
    ReprTrainConfig("tcn", 10, batch_videos=1)  # single-video contrastive is fine


def test_zero_iterations_returns_init(longstick_videos):
    cfg = ReprTrainConfig("tcc", 0, embedding_dim=8, seed=3)
    model, rows, meta = train(longstick_videos, cfg)
    ref = make_model("tcc", 16, 8, seed=3)
    x = longstick_videos[0].frames_f64()
    assert np.array_equal(forward_np(model, x), forward_np(ref, x))
    assert rows == []
    assert meta["embodiments"] == ["longstick"]
    assert meta["num_videos"] == 20


def test_tcc_loss_decreases(longstick_videos):
    cfg = ReprTrainConfig(
        "tcc", 200, embedding_dim=8, frames_per_video=12, eval_period=100, seed=0
    )
    model, rows, _ = train(longstick_videos, cfg)
    init = make_model("tcc", 16, 8, seed=0)
    # compare both models on one fixed probe batch
    probe = [v.frames_f64() for v in longstick_videos[:4]]
    before = float(tcc_loss([Var(forward_np(init, x)) for x in probe]).data)
    after = float(tcc_loss([Var(forward_np(model, x)) for x in probe]).data)
    assert after < before
    assert len(rows) == 2
    assert rows[-1][0] == 200


@pytest.mark.parametrize("algo", ["tcn", "lifs", "goal_classifier"])
def test_baselines_run_and_improve(algo, longstick_videos):
    pool = _mixed_pool(longstick_videos)
    cfg = ReprTrainConfig(
        algo, 30, embedding_dim=8, frames_per_video=10, eval_period=15, seed=1
    )
    model, rows, meta = train(pool, cfg, heldout=pool[:4])
    assert len(rows) == 2
    assert all(np.isfinite(r[1]) for r in rows)
    assert meta["algorithm"] == algo
    assert sorted(meta["embodiments"]) == ["longstick", "mediumstick"]
    z = forward_np(model, pool[0].frames_f64())
    assert np.isfinite(z).all()


def test_training_is_deterministic(longstick_videos, tmp_path):
    paths = []
    for k in range(2):
        cfg = ReprTrainConfig(
            "tcc", 40, embedding_dim=8, frames_per_video=10, eval_period=20, seed=9
        )
        model, rows, meta = train(longstick_videos, cfg)
        p = tmp_path / f"run{k}.xckp"
        save_model(model, meta, p)
        paths.append((p, rows))
    assert paths[0][0].read_bytes() == paths[1][0].read_bytes()
    assert np.array_equal(
        np.array(paths[0][1]), np.array(paths[1][1]), equal_nan=True
    )


def test_seed_changes_weights(longstick_videos):
    cfgs = [
        ReprTrainConfig("tcc", 5, embedding_dim=8, frames_per_video=10, seed=s)
        for s in (0, 1)
    ]
    models = [train(longstick_videos, c)[0] for c in cfgs]
    x = longstick_videos[0].frames_f64()
    assert not np.array_equal(forward_np(models[0], x), forward_np(models[1], x))


def test_nan_loss_aborts(longstick_videos, monkeypatch):
    def bad_batch(model, videos, cfg, rng):
        return Var(np.array(np.nan))

    monkeypatch.setitem(training._BATCH_BUILDERS, "tcc", bad_batch)
    cfg = ReprTrainConfig("tcc", 10, embedding_dim=8)
    with pytest.raises(RuntimeError, match="non-finite at iteration 1"):
        train(longstick_videos, cfg)


def test_gc_short_video_warns():
    rng = np.random.default_rng(2)
    make = lambda L: DemoVideo(
        "longstick",
        (rng.random((L, 16, 16, 3)) < 0.2).astype(np.uint8),
        np.zeros(L, dtype=np.float32),
    )
    cfg = ReprTrainConfig(
        "goal_classifier", 1, batch_videos=2, embedding_dim=4, frames_per_video=4
    )
    # the 4-frame video warns; the 12-frame one still supplies negatives
    with pytest.warns(UserWarning, match="too short"):
        train([make(4), make(12)], cfg)


def test_on_eval_callback_sees_every_row(longstick_videos):
    seen = []
    cfg = ReprTrainConfig(
        "tcc", 20, embedding_dim=8, frames_per_video=10, eval_period=10, seed=4
    )
    _, rows, _ = train(
        longstick_videos, cfg, on_eval=lambda model, row: seen.append(row)
    )
    assert seen == rows


def test_empty_pool_rejected():
    with pytest.raises(ValueError):
        train([], ReprTrainConfig("tcc", 1))


def test_heldout_tau_column(longstick_videos):
    cfg = ReprTrainConfig(
        "tcc", 10, embedding_dim=8, frames_per_video=10, eval_period=10, seed=5
    )
    _, rows_without, _ = train(longstick_videos, cfg)
    _, rows_with, _ = train(
        longstick_videos, cfg, heldout=longstick_videos[-4:]
    )
    assert np.isnan(rows_without[-1][3])
    assert np.isfinite(rows_with[-1][3])
