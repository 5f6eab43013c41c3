"""Experiment configuration and run manifests.

One strict JSON document covers every module's knobs. Unknown keys are
rejected so typos fail loudly instead of silently running defaults, and
the fully-resolved config is written next to each run's outputs together
with a manifest of input/output hashes.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path


class ConfigError(ValueError):
    """Bad configuration or usage; maps to exit code 2 at the CLI."""


DEFAULTS: dict = {
    "out_root": "runs",
    "grid": 64,
    "demos": {
        "count": 200,
        "seed": 0,
        "embodiments": ["longstick", "mediumstick", "shortstick", "gripper"],
    },
    "repr": {
        "algorithm": "tcc",
        "iterations": 2000,
        "batch_videos": 4,
        "frames_per_video": 40,
        "embedding_dim": 32,
        "normalize": None,
        "learning_rate": 1e-4,
        "beta1": 0.99,
        "beta2": 0.999,
        "weight_decay": 1e-5,
        "lifs_lambda": 1.0,
        "eval_period": 250,
        "seed": 0,
    },
    "reward": {
        "distance": "squared",
        "augment_sparse": False,
    },
    "sac": {
        "total_steps": 75_000,
        "discount": 0.99,
        "replay_capacity": 1_000_000,
        "batch_size": 256,
        "seed_steps": 1_000,
        "target_ema": 0.005,
        "update_period": 2,
        "init_temperature": 0.1,
        "log_std_min": -5.0,
        "log_std_max": 2.0,
        "hidden": 256,
        "learning_rate": 1e-4,
        "beta1": 0.9,
        "beta2": 0.999,
        "eval_period": 5_000,
        "eval_episodes": 50,
        "seed": 0,
    },
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def _merge(base: dict, override: dict, crumb: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{crumb}.{key}" if crumb else key
        if key not in base:
            raise ConfigError(f"unknown config key {here!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {here!r} must be an object")
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = value
    return out


def merge_config(overrides: dict) -> dict:
    """Defaults overlaid with `overrides`; unknown keys are rejected."""
    return _merge(DEFAULTS, overrides, "")


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return default_config()
    raw = Path(path).read_text(encoding="utf-8")
    try:
        overrides = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(overrides, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return merge_config(overrides)


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()


def write_config(cfg: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(cfg, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )


def file_hash(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_hash(root: str | Path, pattern: str = "**/*") -> str:
    """Aggregate hash over a directory: sorted (relative name, file hash)."""
    root = Path(root)
    h = hashlib.sha256()
    for p in sorted(root.glob(pattern)):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode("utf-8"))
            h.update(bytes.fromhex(file_hash(p)))
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    inputs: dict[str, str] = field(default_factory=dict)  # path -> hash
    outputs: list[str] = field(default_factory=list)
    created: str = ""

    def write(self, path: str | Path) -> None:
        doc = asdict(self)
        if not doc["created"]:
            doc["created"] = datetime.now(timezone.utc).isoformat()
        Path(path).write_text(
            json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8"
        )


def write_manifest(
    run_dir: str | Path,
    command: str,
    cfg: dict,
    inputs: dict[str, str],
    outputs: list[str],
) -> None:
    # run_manifest.json, not manifest.json: demo sets keep their own
    # dataset manifest at the directory root
    RunManifest(
        command=command,
        config_hash=config_hash(cfg),
        inputs=dict(sorted(inputs.items())),
        outputs=sorted(outputs),
    ).write(Path(run_dir) / "run_manifest.json")
