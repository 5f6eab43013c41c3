"""Demonstration dataset: generation, binary serialization, frame sampling.

One demo file holds one successful episode. Layout (little-endian):

    magic "XMDM" | version u16
    embodiment u8 | frame_count L u32 | grid G u16 | channels u8
    per frame:  grid bytes u8 * (G*G*channels) | state f32 * 16
                | action f32 * 3 (zero-padded) | reward f32
    crc32 u32  (over every preceding byte)

A dataset directory is `<root>/<embodiment>/<index>.xmdm` plus one
`<root>/manifest.json` whose recorded seeds make regeneration
byte-identical.

Actions are stored for completeness but representation learning must not
see them: its input type (`DemoVideo`) simply has no action field.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import FormatError, _Reader
from .env import EMBODIMENTS, in_zone_fraction, render, reset, state_vector, step
from .oracle import oracle_policy

MAGIC = b"XMDM"
VERSION = 1
_INDEX_BY_ID = {spec.index: name for name, spec in EMBODIMENTS.items()}


@dataclass(frozen=True)
class Demonstration:
    """One successful episode. Arrays use the on-disk precision so a
    loaded demo is indistinguishable from a freshly generated one."""

    embodiment: str
    grids: np.ndarray  # (L, G, G, C) uint8 in {0, 1}
    states: np.ndarray  # (L, 16) float32
    actions: np.ndarray  # (L, 3) float32, zero-padded, last row zero
    rewards: np.ndarray  # (L,) float32, in-zone fraction per frame

    def __len__(self) -> int:
        return self.grids.shape[0]

    @property
    def success(self) -> bool:
        return bool(self.rewards[-1] == 1.0)

    def video(self) -> "DemoVideo":
        return DemoVideo(self.embodiment, self.grids, self.rewards)


@dataclass(frozen=True)
class DemoVideo:
    """What representation learning is allowed to read: frames and env
    rewards, never actions."""

    embodiment: str
    grids: np.ndarray  # (L, G, G, C) uint8
    rewards: np.ndarray  # (L,) float32

    def __len__(self) -> int:
        return self.grids.shape[0]

    def frames_f64(self, indices=None) -> np.ndarray:
        """Selected frames flattened to (n, G*G*C) float64 model inputs."""
        g = self.grids if indices is None else self.grids[np.asarray(indices)]
        return g.reshape(g.shape[0], -1).astype(np.float64)


@dataclass(frozen=True)
class DemoSet:
    root: Path
    task: str
    grid: int
    version: int
    counts: dict[str, int]
    seeds: dict[str, list[int]]

    def paths(self, embodiment: str) -> list[Path]:
        n = self.counts[embodiment]
        return [self.root / embodiment / f"{i:05d}.xmdm" for i in range(n)]

    def load_videos(self, embodiment: str) -> list[DemoVideo]:
        return [load_demo(p).video() for p in self.paths(embodiment)]


def load_video_dir(path: str | Path) -> list[DemoVideo]:
    """Every .xmdm file under one directory, sorted by name."""
    path = Path(path)
    files = sorted(path.glob("*.xmdm"))
    if not files:
        raise FormatError(f"{path}: no .xmdm demos found")
    return [load_demo(p).video() for p in files]


def save_demo(demo: Demonstration, path: str | Path) -> None:
    path = Path(path)
    spec = EMBODIMENTS[demo.embodiment]
    L, G, _, C = demo.grids.shape
    parts = [MAGIC, struct.pack("<HBIHB", VERSION, spec.index, L, G, C)]
    grids = np.ascontiguousarray(demo.grids, dtype=np.uint8)
    states = np.ascontiguousarray(demo.states, dtype=np.float32)
    actions = np.ascontiguousarray(demo.actions, dtype=np.float32)
    rewards = np.ascontiguousarray(demo.rewards, dtype=np.float32)
    for k in range(L):
        parts.append(grids[k].tobytes())
        parts.append(states[k].tobytes())
        parts.append(actions[k].tobytes())
        parts.append(rewards[k : k + 1].tobytes())
    body = b"".join(parts)
    body += struct.pack("<I", zlib.crc32(body))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(body)


def load_demo(path: str | Path) -> Demonstration:
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < 4:
        raise FormatError(f"{path}: truncated (no room for checksum)")
    (stored_crc,) = struct.unpack("<I", buf[-4:])
    if zlib.crc32(buf[:-4]) != stored_crc:
        raise FormatError(f"{path}: checksum mismatch")

    r = _Reader(buf[:-4], path)
    if r.take(4) != MAGIC:
        raise FormatError(f"{path}: bad magic")
    version, emb_id, L, G, C = r.unpack("<HBIHB")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if emb_id not in _INDEX_BY_ID:
        raise FormatError(f"{path}: unknown embodiment id {emb_id}")
    if L < 2 or G < 16 or C != 3:
        raise FormatError(f"{path}: implausible header (L={L}, G={G}, C={C})")

    cells = G * G * C
    grids = np.empty((L, G, G, C), dtype=np.uint8)
    states = np.empty((L, 16), dtype=np.float32)
    actions = np.empty((L, 3), dtype=np.float32)
    rewards = np.empty(L, dtype=np.float32)
    for k in range(L):
        grids[k] = np.frombuffer(r.take(cells), dtype=np.uint8).reshape(G, G, C)
        states[k] = np.frombuffer(r.take(64), dtype="<f4")
        actions[k] = np.frombuffer(r.take(12), dtype="<f4")
        rewards[k] = struct.unpack("<f", r.take(4))[0]
    if r.off != len(r.buf):
        raise FormatError(f"{path}: {len(r.buf) - r.off} trailing bytes")
    return Demonstration(_INDEX_BY_ID[emb_id], grids, states, actions, rewards)


def _run_episode(embodiment: str, seed: int, grid: int) -> Demonstration | None:
    """Roll the scripted policy; None unless it finishes the task. The demo
    is truncated at the first full-reward frame."""
    s = reset(embodiment, seed)
    grids = [np.asarray(render(s, grid), dtype=np.uint8)]
    states = [state_vector(s)]
    actions = []
    rewards = [in_zone_fraction(s)]
    for _ in range(s.spec.horizon):
        a = oracle_policy(s)
        actions.append(np.pad(a, (0, 3 - a.shape[0])))
        s, r, done = step(s, a)
        grids.append(np.asarray(render(s, grid), dtype=np.uint8))
        states.append(state_vector(s))
        rewards.append(r)
        if r == 1.0:
            break
        if done:
            return None
    if rewards[-1] != 1.0:
        return None
    actions.append(np.zeros(3))
    return Demonstration(
        embodiment,
        np.stack(grids),
        np.asarray(states, dtype=np.float32),
        np.asarray(actions, dtype=np.float32),
        np.asarray(rewards, dtype=np.float32),
    )


def generate_demos(
    root: str | Path,
    embodiment: str,
    count: int,
    seed: int,
    grid: int = 64,
) -> list[int]:
    """Write `count` successful demos under `<root>/<embodiment>/`; returns
    the environment seeds that produced them.

    Failures are discarded and the seed stream simply advances, so the
    output is a pure function of (embodiment, count, seed, grid). If more
    than half of a 50-episode window fails, the policy is considered
    broken and generation aborts."""
    if count < 1:
        raise ValueError("count must be >= 1")
    spec = EMBODIMENTS[embodiment]
    out_dir = Path(root) / embodiment
    kept: list[int] = []
    window: list[bool] = []
    attempt = 0
    while len(kept) < count:
        env_seed = seed + spec.index * 100_003 + attempt
        attempt += 1
        demo = _run_episode(embodiment, env_seed, grid)
        window = (window + [demo is not None])[-50:]
        if len(window) == 50 and sum(window) < 25:
            raise RuntimeError(
                f"{embodiment}: oracle failed {50 - sum(window)}/50 recent "
                f"episodes; refusing to generate a dataset from it"
            )
        if demo is None:
            continue
        save_demo(demo, out_dir / f"{len(kept):05d}.xmdm")
        kept.append(env_seed)
    return kept


def generate_demo_set(
    root: str | Path,
    count: int,
    seed: int,
    grid: int = 64,
    embodiments: tuple[str, ...] = tuple(EMBODIMENTS),
) -> DemoSet:
    """Generate every embodiment's demos plus the manifest."""
    root = Path(root)
    counts: dict[str, int] = {}
    seeds: dict[str, list[int]] = {}
    for name in embodiments:
        seeds[name] = generate_demos(root, name, count, seed, grid)
        counts[name] = count
    manifest = {
        "format_version": VERSION,
        "task": "sweep",
        "grid": grid,
        "counts": counts,
        "seeds": seeds,
    }
    root.mkdir(parents=True, exist_ok=True)
    (root / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    return DemoSet(root, "sweep", grid, VERSION, counts, seeds)


def load_demo_set(root: str | Path) -> DemoSet:
    """Read a manifest and verify the directory matches it."""
    root = Path(root)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise FormatError(f"{mpath}: missing manifest")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{mpath}: bad JSON ({e})") from None
    for key in ("format_version", "task", "grid", "counts", "seeds"):
        if key not in manifest:
            raise FormatError(f"{mpath}: missing key {key!r}")
    if manifest["format_version"] != VERSION:
        raise FormatError(f"{mpath}: unsupported version {manifest['format_version']}")
    counts = {str(k): int(v) for k, v in manifest["counts"].items()}
    for name, n in counts.items():
        if name not in EMBODIMENTS:
            raise FormatError(f"{mpath}: unknown embodiment {name!r}")
        have = len(list((root / name).glob("*.xmdm")))
        if have != n:
            raise FormatError(
                f"{root / name}: manifest promises {n} demos, found {have}"
            )
        if len(manifest["seeds"].get(name, [])) != n:
            raise FormatError(f"{mpath}: seed list for {name!r} does not match count")
    return DemoSet(
        root,
        str(manifest["task"]),
        int(manifest["grid"]),
        int(manifest["format_version"]),
        counts,
        {k: [int(s) for s in v] for k, v in manifest["seeds"].items()},
    )


@dataclass(frozen=True)
class FrameSamplerConfig:
    mode: str  # "uniform" | "contiguous"
    frames_per_video: int

    def __post_init__(self):
        if self.mode not in ("uniform", "contiguous"):
            raise ValueError(f"unknown sampler mode {self.mode!r}")
        if self.frames_per_video < 2:
            raise ValueError("frames_per_video must be >= 2")


def sample_frames(length: int, config: FrameSamplerConfig, rng: np.random.Generator):
    """Frame indices for one video: sorted, strictly increasing, in range.

    Uniform mode draws without replacement (the whole video when it is
    shorter than the request); contiguous mode picks a random window and
    demands the video be long enough."""
    n = config.frames_per_video
    if config.mode == "uniform":
        n = min(n, length)
        return np.sort(rng.choice(length, size=n, replace=False))
    if n > length:
        raise ValueError(f"contiguous window of {n} exceeds video length {length}")
    start = int(rng.integers(0, length - n + 1))
    return np.arange(start, start + n)
