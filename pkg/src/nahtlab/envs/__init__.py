"""Environments: the bit matrix game and predator-prey pursuit."""

from .base import EnvSpec, Transition, VecEnv
from .bitgame import BitGame, BitGameVec, bitgame_spec
from .pursuit import PursuitConfig, PursuitVec, pursuit_spec

__all__ = [
    "EnvSpec",
    "Transition",
    "VecEnv",
    "BitGame",
    "BitGameVec",
    "bitgame_spec",
    "PursuitConfig",
    "PursuitVec",
    "pursuit_spec",
]


def make_vec_env(name: str, count: int, seed: int, params: dict | None = None) -> VecEnv:
    """Factory used by the trainer, evaluation harness, and CLI."""
    from ..errors import ConfigError

    params = dict(params or {})
    if name == "bitgame":
        return BitGameVec(count=count, seed=seed, **params)
    if name == "pursuit":
        cfg = PursuitConfig(**params) if params else None
        return PursuitVec(count=count, seed=seed, config=cfg)
    raise ConfigError(f"unknown environment {name!r}")


def env_spec(name: str, params: dict | None = None) -> EnvSpec:
    from ..errors import ConfigError

    params = dict(params or {})
    if name == "bitgame":
        return bitgame_spec(
            num_agents=params.get("num_agents", 3),
            horizon=params.get("horizon", 25),
        )
    if name == "pursuit":
        return pursuit_spec(PursuitConfig(**params) if params else None)
    raise ConfigError(f"unknown environment {name!r}")
