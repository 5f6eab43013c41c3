"""Full-scale acceptance checks for the complete pipeline.

Every test prints exactly one `criterion N ...: PASS/FAIL` line with its
measured numbers (visible with `pytest -s`, and on any failure). Demo
pools, encoders, and reward models are shared through module fixtures;
the reinforcement learning criteria dominate the total runtime, which is
on the order of an hour on one CPU core.
"""

import json
import time

import numpy as np
import pytest
from scipy import stats

import xirl.autodiff as ad
from xirl import cli
from xirl.alignment import alignment_report
from xirl.autodiff import Var, grad_check
from xirl.config import tree_hash
from xirl.demos import generate_demo_set, load_video_dir
from xirl.embedding import embed_sequence, forward_np, make_model
from xirl.losses import (
    cycle_back,
    goal_classifier_loss,
    lifs_loss,
    soft_nn,
    tcc_loss,
    tcn_loss,
)
from xirl.nn import Linear, Mlp
from xirl.reward import fit_reward_model, reward, reward_trace
from xirl.sac import SacConfig, actor_loss, critic_loss, train_policy
from xirl.training import ReprTrainConfig, train

GRID = 64
EMB_DIM = 32
TRAIN_COUNT = 200
TCC_ITERS = 2000
RL_STEPS = 75_000
EMBODIMENTS = ("longstick", "mediumstick", "shortstick", "gripper")


def _verdict(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"\ncriterion {num} ({name}): {'PASS' if ok else 'FAIL'} [{detail}]")
    assert ok, f"criterion {num} ({name}): {detail}"


# --------------------------------------------------------------- shared data


@pytest.fixture(scope="module")
def pools(tmp_path_factory):
    """Demo pools at full grid resolution: 200 per embodiment for training,
    plus disjoint held-out rollouts for alignment and reward evaluation."""
    root = tmp_path_factory.mktemp("accept")
    t0 = time.perf_counter()
    generate_demo_set(root / "train", TRAIN_COUNT, 0, GRID, embodiments=EMBODIMENTS)
    generate_demo_set(root / "held", 8, 50_000, GRID, embodiments=EMBODIMENTS)
    generate_demo_set(
        root / "held_short", 50, 60_000, GRID, embodiments=("shortstick",)
    )
    gen_seconds = time.perf_counter() - t0
    train_videos = {
        name: load_video_dir(root / "train" / name) for name in EMBODIMENTS
    }
    held_videos = [
        v for name in EMBODIMENTS for v in load_video_dir(root / "held" / name)
    ]
    short50 = load_video_dir(root / "held_short" / "shortstick")
    print(f"\n[pools] generated in {gen_seconds:.0f}s")
    return {
        "root": root,
        "train": train_videos,
        "held": held_videos,
        "short50": short50,
        "gen_seconds": gen_seconds,
    }


def _train_tcc(videos: list) -> tuple:
    cfg = ReprTrainConfig("tcc", TCC_ITERS, embedding_dim=EMB_DIM, seed=0)
    t0 = time.perf_counter()
    model, rows, _ = train(videos, cfg)
    return model, rows, time.perf_counter() - t0


@pytest.fixture(scope="module")
def encoder_no_shortstick(pools):
    """TCC encoder trained on everything except shortstick demos."""
    videos = [
        v
        for name in ("longstick", "mediumstick", "gripper")
        for v in pools["train"][name]
    ]
    model, rows, seconds = _train_tcc(videos)
    print(f"[encoder_no_shortstick] {TCC_ITERS} iterations in {seconds:.0f}s")
    return {"model": model, "rows": rows, "seconds": seconds}


@pytest.fixture(scope="module")
def transfer_setup(pools):
    """Encoders trained with longstick excluded, for the transfer test."""
    videos = [
        v
        for name in ("mediumstick", "shortstick", "gripper")
        for v in pools["train"][name]
    ]
    tcc_model, _, tcc_seconds = _train_tcc(videos)
    gc_cfg = ReprTrainConfig(
        "goal_classifier", TCC_ITERS, embedding_dim=EMB_DIM, seed=0
    )
    t0 = time.perf_counter()
    gc_model, _, _ = train(videos, gc_cfg)
    gc_seconds = time.perf_counter() - t0
    print(
        f"[transfer_setup] tcc {tcc_seconds:.0f}s, goal classifier {gc_seconds:.0f}s"
    )
    return {
        "xirl": fit_reward_model(tcc_model, videos),
        "gc": fit_reward_model(gc_model, videos),
        "seconds": tcc_seconds + gc_seconds,
    }


# ----------------------------------------------------------------- criteria


def test_01_gradient_fidelity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(100)
    errs = {}

    a = rng.standard_normal((8, 4))
    b = rng.standard_normal((8, 4))
    errs["tcc"] = grad_check(
        lambda vs: tcc_loss(vs), [a, b], rng=np.random.default_rng(1)
    )

    c = rng.standard_normal((8, 4))
    d = rng.standard_normal((8, 4))
    log_temp = np.array(0.3)
    errs["tcn"] = grad_check(
        lambda vs: tcn_loss([vs[0], vs[1]], ad.exp(vs[2])),
        [c, d, log_temp],
        rng=np.random.default_rng(2),
    )

    za, zb = rng.standard_normal((8, 4)), rng.standard_normal((8, 4))
    xa, xb = rng.standard_normal((8, 12)), rng.standard_normal((8, 12))
    ra, rb = rng.standard_normal((8, 12)), rng.standard_normal((8, 12))
    errs["lifs"] = grad_check(
        lambda vs: lifs_loss(vs[0], vs[1], vs[2], vs[3], xa, xb, lam=0.7),
        [za, zb, ra, rb],
        rng=np.random.default_rng(3),
    )

    logits = rng.standard_normal(8)
    labels = np.array([0, 1, 0, 1, 0, 1, 0, 1], dtype=np.float64)
    errs["goal_classifier"] = grad_check(
        lambda vs: goal_classifier_loss(vs[0], labels),
        [logits],
        rng=np.random.default_rng(4),
    )

    # twin-critic and actor losses on a 4-transition batch
    obs_dim, act_dim, hid = 6, 2, 8

    def net_arrays(sizes):
        out = []
        for m, n in zip(sizes, sizes[1:]):
            out.append(rng.standard_normal((m, n)) * 0.3)
            out.append(rng.standard_normal(n) * 0.1)
        return out

    def mlp_of(leaves, activations):
        layers = [
            Linear(weight=leaves[i], bias=leaves[i + 1])
            for i in range(0, len(leaves), 2)
        ]
        return Mlp(layers=layers, activations=list(activations))

    sizes = [obs_dim + act_dim, hid, hid, 1]
    critic_arrays = net_arrays(sizes) + net_arrays(sizes)
    obs = rng.standard_normal((4, obs_dim))
    act = rng.uniform(-1, 1, (4, act_dim))
    target = rng.standard_normal(4)
    acts3 = ["relu", "relu", "identity"]

    def f_critic(vs):
        half = len(vs) // 2
        return critic_loss(
            mlp_of(vs[:half], acts3), mlp_of(vs[half:], acts3), obs, act, target
        )

    errs["sac_critic"] = grad_check(
        f_critic, critic_arrays, rng=np.random.default_rng(5)
    )

    trunk_arrays = net_arrays([obs_dim, hid, hid])
    head_arrays = net_arrays([hid, act_dim]) + net_arrays([hid, act_dim])
    q_arrays = net_arrays([obs_dim + act_dim, hid, 1]) + net_arrays(
        [obs_dim + act_dim, hid, 1]
    )
    eps = rng.standard_normal((4, act_dim))

    def f_actor(vs):
        trunk = mlp_of(vs[:4], ["relu", "relu"])
        mean_head = Linear(weight=vs[4], bias=vs[5])
        std_head = Linear(weight=vs[6], bias=vs[7])
        c1 = mlp_of(vs[8:12], ["relu", "identity"])
        c2 = mlp_of(vs[12:16], ["relu", "identity"])
        loss, _ = actor_loss(
            trunk, mean_head, std_head, c1, c2, 0.1, obs, eps, -5.0, 2.0
        )
        return loss

    errs["sac_actor"] = grad_check(
        f_actor, trunk_arrays + head_arrays + q_arrays, rng=np.random.default_rng(6)
    )

    seconds = time.perf_counter() - t0
    worst = max(errs, key=errs.get)
    ok = all(e < 1e-4 for e in errs.values()) and seconds < 120
    _verdict(
        1,
        "gradient fidelity",
        ok,
        f"max rel err {errs[worst]:.2e} ({worst}), {seconds:.1f}s",
    )


def test_02_tcc_analytic_sanity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(200)
    checks = {}

    # two length-1 sequences: the only frame must cycle back exactly
    single = tcc_loss([rng.standard_normal((1, 4)), rng.standard_normal((1, 4))])
    checks["length-1 pairs"] = float(single.data) == 0.0

    # duplicated, well-separated sequence: cycling is near-deterministic
    base = rng.standard_normal((8, 4)) * (8.0 / np.sqrt(4))
    dup = tcc_loss([base, base.copy()])
    checks["duplicated sequences"] = float(dup.data) < 1e-6

    # alpha and beta weights live on the simplex
    alpha, v_tilde = soft_nn(rng.standard_normal(4), rng.standard_normal((7, 4)))
    beta, _, _ = cycle_back(v_tilde, Var(rng.standard_normal((5, 4))), 2)
    for name, w in (("alpha", alpha), ("beta", beta)):
        checks[f"{name} simplex"] = bool(
            abs(float(np.sum(w.data)) - 1.0) < 1e-9 and np.all(w.data >= 0)
        )

    # adding one constant vector to every frame leaves the loss unchanged
    seq_a = rng.standard_normal((6, 4))
    seq_b = rng.standard_normal((9, 4))
    shift = rng.standard_normal(4) * 10.0
    before = float(tcc_loss([seq_a, seq_b]).data)
    after = float(tcc_loss([seq_a + shift, seq_b + shift]).data)
    checks["translation invariance"] = abs(before - after) < 1e-9

    seconds = time.perf_counter() - t0
    ok = all(checks.values()) and seconds < 60
    bad = [k for k, v in checks.items() if not v]
    _verdict(
        2,
        "tcc analytic sanity",
        ok,
        f"{len(checks)} checks, failed: {bad or 'none'}, {seconds:.1f}s",
    )


def _report_of(model, videos):
    seqs = [embed_sequence(model, v.frames_f64(), v.embodiment) for v in videos]
    return alignment_report(seqs)


def test_03_alignment_quality(pools, encoder_no_shortstick):
    t0 = time.perf_counter()
    trained = _report_of(encoder_no_shortstick["model"], pools["held"])
    untrained = _report_of(make_model("tcc", GRID, EMB_DIM, seed=0), pools["held"])
    eval_seconds = time.perf_counter() - t0
    seconds = pools["gen_seconds"] + encoder_no_shortstick["seconds"] + eval_seconds
    margin = trained.mean_tau - untrained.mean_tau
    ok = (
        trained.mean_same_embodiment >= 0.7
        and trained.mean_cross_embodiment >= 0.5
        and margin >= 0.3
        and seconds < 1200
    )
    _verdict(
        3,
        "alignment quality",
        ok,
        f"held-out tau same {trained.mean_same_embodiment:.3f} "
        f"cross {trained.mean_cross_embodiment:.3f}, untrained "
        f"{untrained.mean_tau:.3f} (margin {margin:.3f}), {seconds:.0f}s",
    )


def test_04_reward_progress_correlation(pools, encoder_no_shortstick):
    t0 = time.perf_counter()
    model = fit_reward_model(encoder_no_shortstick["model"], pools["short50"])

    rhos, first = [], []
    for v in pools["short50"]:
        learned, _ = reward_trace(model, v)
        rhos.append(stats.spearmanr(np.arange(len(v)), learned).statistic)
        first.append(learned[0])
    mean_rho = float(np.mean(rhos))
    mean_first = float(np.mean(first))

    # the reward is the kappa-scaled squared distance to the goal and
    # nothing else: it must agree with the formula exactly and vanish at g
    frame = pools["short50"][0].frames_f64([0])
    z = forward_np(model.encoder, frame)[0]
    formula = -float(np.sum((z - model.goal) ** 2)) / model.kappa
    exact = abs(reward(model, frame) - formula) < 1e-12
    at_goal = -float(np.sum((model.goal - model.goal) ** 2)) / model.kappa

    seconds = time.perf_counter() - t0
    ok = (
        mean_rho >= 0.8
        and abs(mean_first - (-1.0)) <= 1e-9
        and exact
        and at_goal == 0.0
        and seconds < 300
    )
    _verdict(
        4,
        "reward-progress correlation",
        ok,
        f"mean spearman {mean_rho:.3f}, mean first-frame reward "
        f"{mean_first:.12f}, reward at goal {at_goal}, {seconds:.0f}s",
    )


def test_05_rl_env_reward():
    bests, steps, times = [], [], []
    for seed in (0, 1, 2):
        cfg = SacConfig(total_steps=RL_STEPS, seed=seed)
        t0 = time.perf_counter()
        _, rows = train_policy("longstick", "env", cfg, stop_success=0.8)
        times.append(time.perf_counter() - t0)
        bests.append(max(r[1] for r in rows))
        steps.append(rows[-1][0])
    mean_best = float(np.mean(bests))
    ok = mean_best >= 0.8 and max(times) < 7200
    _verdict(
        5,
        "rl with environment reward",
        ok,
        f"best success per seed {bests} at steps {steps}, mean "
        f"{mean_best:.3f}, {max(times) / 60:.1f} min worst seed",
    )


def test_06_cross_embodiment_transfer(transfer_setup):
    t0 = time.perf_counter()
    cfg = SacConfig(total_steps=RL_STEPS, seed=0)
    _, rows_x = train_policy(
        "longstick", "learned", cfg, reward_model=transfer_setup["xirl"],
        stop_success=0.5,
    )
    best_x = max(r[1] for r in rows_x)
    budget = int(rows_x[-1][0])

    # identical step budget and seed for the baseline reward
    cfg_gc = SacConfig(total_steps=budget, seed=0)
    _, rows_g = train_policy(
        "longstick", "learned", cfg_gc, reward_model=transfer_setup["gc"]
    )
    best_g = max(r[1] for r in rows_g)

    seconds = transfer_setup["seconds"] + (time.perf_counter() - t0)
    ok = best_x >= 0.5 and best_x > best_g and seconds < 10800
    _verdict(
        6,
        "cross-embodiment transfer",
        ok,
        f"xirl-reward best {best_x:.3f} vs goal-classifier {best_g:.3f} "
        f"at {budget} steps, {seconds / 60:.1f} min",
    )


def test_07_demo_length_ordering(pools):
    t0 = time.perf_counter()
    means = {
        name: float(np.mean([len(v) for v in pools["train"][name]]))
        for name in EMBODIMENTS
    }
    ordered = (
        means["longstick"]
        < means["mediumstick"]
        < means["shortstick"]
        < means["gripper"]
    )
    seconds = pools["gen_seconds"] + (time.perf_counter() - t0)
    ok = ordered and all(
        len(pools["train"][n]) >= 100 for n in EMBODIMENTS
    ) and seconds < 300
    detail = ", ".join(f"{n} {means[n]:.1f}" for n in EMBODIMENTS)
    _verdict(7, "demo length ordering", ok, f"mean lengths {detail}, {seconds:.0f}s")


def test_08_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = {
        "grid": GRID,
        "demos": {"count": 20, "seed": 3, "embodiments": ["longstick"]},
        "repr": {"iterations": 100, "eval_period": 50, "embedding_dim": 16},
        "sac": {
            "total_steps": 2000,
            "seed_steps": 200,
            "eval_period": 1000,
            "eval_episodes": 5,
        },
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))

    results = {}
    for tag in ("a", "b"):
        demos = tmp_path / tag / "demos"
        enc = tmp_path / tag / "enc"
        pol = tmp_path / tag / "pol"
        base = ["--config", str(cfg_path)]
        assert cli.main(["gen-demos", *base, "--out", str(demos)]) == 0
        assert (
            cli.main(
                ["train-repr", *base, "--demos", str(demos / "longstick"),
                 "--out", str(enc)]
            )
            == 0
        )
        assert (
            cli.main(
                ["train-policy", *base, "--embodiment", "longstick",
                 "--out", str(pol)]
            )
            == 0
        )
        results[tag] = {
            "dataset": tree_hash(demos, "**/*.xmdm")
            + (demos / "manifest.json").read_text(),
            "encoder": (enc / "encoder.xckp").read_bytes(),
            "train_log": (enc / "train_log.csv").read_bytes(),
            "policy": (pol / "policy.xckp").read_bytes(),
            "curve": (pol / "curve.csv").read_bytes(),
        }
    mismatched = [
        k for k in results["a"] if results["a"][k] != results["b"][k]
    ]
    seconds = time.perf_counter() - t0
    ok = not mismatched
    _verdict(
        8,
        "determinism",
        ok,
        f"byte-identical reruns, mismatches: {mismatched or 'none'}, "
        f"{seconds:.0f}s",
    )
