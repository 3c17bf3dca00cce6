"""Run configuration: strict JSON schema, environment overrides, manifests.

Unknown keys anywhere in the file are rejected by name.  Two environment
variables override the file: NAHT_SEED (replaces the seed list) and NAHT_OUT
(replaces the output directory); nothing else is overridable from the
environment.  The resolved configuration is echoed verbatim into the run
directory so a run can be reproduced from its own artifacts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .poam.trainer import PpoHyper, TrainVariant

_ENV_PARAM_KEYS = {
    "bitgame": {"num_agents", "horizon", "reward_scale"},
    "pursuit": {"collision_radius", "predator_max_speed", "prey_max_speed", "accel",
                "damping", "shaping_coef", "horizon", "prey_spawn_half_width"},
}
_HYPER_KEYS = {f.name for f in dataclasses.fields(PpoHyper)}
_TOP_KEYS = {"env", "variant", "hyper", "embedding_dim", "width", "total_env_steps",
             "eval_episodes", "seeds", "registry", "out_dir", "checkpoint_every",
             "float_width", "encoder_rl_grads", "greedy_eval"}


def _check_keys(mapping: dict, allowed: set, context: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in {context}")


@dataclass
class RunConfig:
    env_name: str
    env_params: dict = field(default_factory=dict)
    variant: str = "poam"
    hyper: PpoHyper = field(default_factory=PpoHyper)
    embedding_dim: int = 64
    width: int = 64
    total_env_steps: int = 100_000
    eval_episodes: int = 128
    seeds: tuple = (0,)
    registry: str | None = None
    out_dir: str = "runs/out"
    checkpoint_every: int = 0
    float_width: int = 32
    encoder_rl_grads: bool = False
    greedy_eval: bool = False

    def __post_init__(self):
        TrainVariant.named(self.variant)  # validates the name
        if self.env_name not in _ENV_PARAM_KEYS:
            raise ConfigError(f"unknown environment {self.env_name!r}")
        _check_keys(self.env_params, _ENV_PARAM_KEYS[self.env_name],
                    f"env.params for {self.env_name}")
        if self.float_width not in (32, 64):
            raise ConfigError("float_width must be 32 or 64")
        if self.total_env_steps < 1 or self.eval_episodes < 1:
            raise ConfigError("step and episode budgets must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        _check_keys(raw, _TOP_KEYS, "run config")
        env = raw.get("env")
        if not isinstance(env, dict) or "name" not in env:
            raise ConfigError("config needs an env object with a name")
        _check_keys(env, {"name", "params"}, "env")
        hyper_raw = raw.get("hyper", {})
        _check_keys(hyper_raw, _HYPER_KEYS, "hyper")
        kwargs = {k: raw[k] for k in raw if k not in ("env", "hyper")}
        if "seeds" in kwargs:
            kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
        return cls(env_name=env["name"], env_params=dict(env.get("params", {})),
                   hyper=PpoHyper(**hyper_raw), **kwargs)

    @classmethod
    def from_file(cls, path, seed_override=None, out_override=None) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
        cfg = cls.from_dict(raw)
        seed_env = os.environ.get("NAHT_SEED")
        out_env = os.environ.get("NAHT_OUT")
        if seed_override is not None:
            cfg.seeds = (int(seed_override),)
        elif seed_env is not None:
            cfg.seeds = (int(seed_env),)
        if out_override is not None:
            cfg.out_dir = str(out_override)
        elif out_env is not None:
            cfg.out_dir = out_env
        return cfg

    def resolved(self) -> dict:
        return {
            "env": {"name": self.env_name, "params": dict(self.env_params)},
            "variant": self.variant,
            "hyper": dataclasses.asdict(self.hyper),
            "embedding_dim": self.embedding_dim,
            "width": self.width,
            "total_env_steps": self.total_env_steps,
            "eval_episodes": self.eval_episodes,
            "seeds": list(self.seeds),
            "registry": self.registry,
            "out_dir": self.out_dir,
            "checkpoint_every": self.checkpoint_every,
            "float_width": self.float_width,
            "encoder_rl_grads": self.encoder_rl_grads,
            "greedy_eval": self.greedy_eval,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def echo_to(self, out_dir) -> None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        text = json.dumps(self.resolved(), indent=2, sort_keys=True) + "\n"
        (Path(out_dir) / "config.json").write_text(text)


def write_manifest(out_dir, config: RunConfig, started_at: float, per_seed: dict,
                   code_version: str) -> None:
    """Atomic (write-then-rename) run manifest."""
    manifest = {
        "config_hash": config.config_hash(),
        "started_at": started_at,
        "finished_at": time.time(),
        "code_version": code_version,
        "per_seed": per_seed,
    }
    out_dir = Path(out_dir)
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".manifest-")
    with os.fdopen(fd, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, out_dir / "manifest.json")
