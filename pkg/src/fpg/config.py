"""JSON run configuration.

Schema (``?`` marks optional keys, defaults in brackets)::

    {
      "env":     {"episode_length": int, "seed"?: int [0]},
      "trainer": {"method": str, "steps": int, "gamma": float,
                  "actor_lr": float, "critic_lr": float, "seed": int,
                  "optimizer": "sgd" | "sgd-momentum",
                  "momentum"?: float, "sigma"?: float, "critic_init"?: str,
                  "actor_uses_abs_term"?: bool, "learn_scale"?: bool,
                  "learn_critic"?: bool},
      "policy"?:   POLICY,
      "critic"?:   {"atoms": [ATOM, ...], "coeffs": [float, ...]},
      "variance"?: {"orders"?: [int, ...] [[0, 1, 2]], "samples"?: int [100000]}
    }

    POLICY = {"type": "gaussian", "mean": [...], "scale": [[...]]}   # Sigma = scale^T scale
           | {"type": "gaussian", "mean": [...], "cov": [[...]]}
           | {"type": "dirac", "location": [...]}
           | {"type": "mixture", "components": [{"weight": w, "policy": POLICY}, ...]}
    ATOM   = {"type": "trig", "freq": [...], "phase"?: float}
           | {"type": "rbf", "loc": [...], "shape": [[...]]}             # S = shape^T shape
           | {"type": "quadric", "h": [[...]], "center": [...], "offset"?: float, "linear"?: [...]}
           | {"type": "abs"}

Problems raise :class:`ConfigError` carrying the dotted key path.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .core_math import SpdFactor
from .critic import AbsAtom, HybridCritic, QuadricAtom, RbfAtom, TrigAtom
from .estimators import ORDERS
from .policy import DiracPolicy, GaussianPolicy, MixturePolicy
from .trainer import TrainConfig
from .turntable import EnvConfig

TRAINER_REQUIRED = ("method", "steps", "gamma", "actor_lr", "critic_lr", "seed", "optimizer")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class VarianceConfig:
    orders: tuple = ORDERS
    samples: int = 100_000


@dataclass(frozen=True, eq=False)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    trainer: TrainConfig = field(default_factory=TrainConfig)
    policy: object = None
    critic: HybridCritic | None = None
    variance: VarianceConfig = field(default_factory=VarianceConfig)


# ---------------------------------------------------------------------------
# primitive readers


def _section(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected an object")
    return obj


def _get(obj: dict, key: str, path: str, required: bool = True, default=None):
    if key not in obj:
        if required:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required key")
        return default
    return obj[key]


def _no_extra(obj: dict, allowed, path: str):
    for k in obj:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown key")


def _number(v, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    return float(v)


def _integer(v, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    return v


def _boolean(v, path: str) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(path, f"expected true or false, got {v!r}")
    return v


def _string(v, path: str) -> str:
    if not isinstance(v, str):
        raise ConfigError(path, f"expected a string, got {v!r}")
    return v


def _vector(v, path: str) -> np.ndarray:
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a non-empty list of numbers")
    return np.array([_number(x, f"{path}[{i}]") for i, x in enumerate(v)])


def _matrix(v, path: str) -> np.ndarray:
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a non-empty list of rows")
    rows = [_vector(r, f"{path}[{i}]") for i, r in enumerate(v)]
    if any(r.size != len(rows) for r in rows):
        raise ConfigError(path, "expected a square matrix")
    return np.array(rows)


def _build(path: str, ctor, *args, **kwargs):
    try:
        return ctor(*args, **kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


# ---------------------------------------------------------------------------
# sections


_TYPES = {int: _integer, float: _number, bool: _boolean, str: _string}


def _dataclass_section(cls, obj, path: str, required):
    obj = _section(obj, path)
    names = {f.name: f for f in fields(cls)}
    _no_extra(obj, names, path)
    kwargs = {}
    for name, f in names.items():
        v = _get(obj, name, path, required=name in required)
        if v is None and name not in obj:
            continue
        reader = _TYPES[type(f.default)]
        kwargs[name] = reader(v, f"{path}.{name}")
    return _build(path, cls, **kwargs)


def parse_env(obj, path: str = "env") -> EnvConfig:
    return _dataclass_section(EnvConfig, obj, path, ("episode_length",))


def parse_trainer(obj, path: str = "trainer") -> TrainConfig:
    return _dataclass_section(TrainConfig, obj, path, TRAINER_REQUIRED)


def parse_policy(obj, path: str = "policy"):
    obj = _section(obj, path)
    kind = _string(_get(obj, "type", path), f"{path}.type")
    if kind == "gaussian":
        _no_extra(obj, ("type", "mean", "scale", "cov"), path)
        mean = _vector(_get(obj, "mean", path), f"{path}.mean")
        if ("scale" in obj) == ("cov" in obj):
            raise ConfigError(f"{path}.scale", "give exactly one of 'scale' and 'cov'")
        if "scale" in obj:
            lower = _matrix(obj["scale"], f"{path}.scale")
            scale = _build(f"{path}.scale", SpdFactor, lower)
        else:
            scale = _build(f"{path}.cov", SpdFactor.from_matrix, _matrix(obj["cov"], f"{path}.cov"))
        return _build(path, GaussianPolicy, mean, scale)
    if kind == "dirac":
        _no_extra(obj, ("type", "location"), path)
        return _build(path, DiracPolicy, _vector(_get(obj, "location", path), f"{path}.location"))
    if kind == "mixture":
        _no_extra(obj, ("type", "components"), path)
        raw = _get(obj, "components", path)
        if not isinstance(raw, list) or not raw:
            raise ConfigError(f"{path}.components", "expected a non-empty list")
        comps = []
        for i, c in enumerate(raw):
            p = f"{path}.components[{i}]"
            c = _section(c, p)
            _no_extra(c, ("weight", "policy"), p)
            w = _number(_get(c, "weight", p), f"{p}.weight")
            comps.append((w, parse_policy(_get(c, "policy", p), f"{p}.policy")))
        return _build(path, MixturePolicy, tuple(comps))
    raise ConfigError(f"{path}.type", f"unknown policy type {kind!r}")


def parse_atom(obj, path: str):
    obj = _section(obj, path)
    kind = _string(_get(obj, "type", path), f"{path}.type")
    if kind == "trig":
        _no_extra(obj, ("type", "freq", "phase"), path)
        phase = _number(_get(obj, "phase", path, False, 0.0), f"{path}.phase")
        return _build(path, TrigAtom, _vector(_get(obj, "freq", path), f"{path}.freq"), phase)
    if kind == "rbf":
        _no_extra(obj, ("type", "loc", "shape"), path)
        loc = _vector(_get(obj, "loc", path), f"{path}.loc")
        shape = _build(f"{path}.shape", SpdFactor, _matrix(_get(obj, "shape", path), f"{path}.shape"))
        return _build(path, RbfAtom, loc, shape)
    if kind == "quadric":
        _no_extra(obj, ("type", "h", "center", "offset", "linear"), path)
        h = _matrix(_get(obj, "h", path), f"{path}.h")
        center = _vector(_get(obj, "center", path), f"{path}.center")
        offset = _number(_get(obj, "offset", path, False, 0.0), f"{path}.offset")
        lin = _get(obj, "linear", path, False)
        lin = None if lin is None else _vector(lin, f"{path}.linear")
        return _build(path, QuadricAtom, h, center, offset, lin)
    if kind == "abs":
        _no_extra(obj, ("type",), path)
        return AbsAtom()
    raise ConfigError(f"{path}.type", f"unknown atom type {kind!r}")


def parse_critic(obj, path: str = "critic") -> HybridCritic:
    obj = _section(obj, path)
    _no_extra(obj, ("atoms", "coeffs"), path)
    raw = _get(obj, "atoms", path)
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"{path}.atoms", "expected a non-empty list")
    atoms = tuple(parse_atom(a, f"{path}.atoms[{i}]") for i, a in enumerate(raw))
    coeffs = _vector(_get(obj, "coeffs", path), f"{path}.coeffs")
    return _build(path, HybridCritic, atoms, coeffs)


def parse_variance(obj, path: str = "variance") -> VarianceConfig:
    obj = _section(obj, path)
    _no_extra(obj, ("orders", "samples"), path)
    orders = _get(obj, "orders", path, False, list(ORDERS))
    if not isinstance(orders, list) or not orders:
        raise ConfigError(f"{path}.orders", "expected a non-empty list")
    orders = tuple(_integer(o, f"{path}.orders[{i}]") for i, o in enumerate(orders))
    for i, o in enumerate(orders):
        if o not in ORDERS:
            raise ConfigError(f"{path}.orders[{i}]", f"order must be one of {ORDERS}")
    samples = _integer(_get(obj, "samples", path, False, 100_000), f"{path}.samples")
    if samples < 2:
        raise ConfigError(f"{path}.samples", "need at least two samples")
    return VarianceConfig(orders, samples)


def parse_config(obj) -> RunConfig:
    obj = _section(obj, "<root>")
    _no_extra(obj, ("env", "trainer", "policy", "critic", "variance"), "")
    env = parse_env(_get(obj, "env", ""))
    trainer = parse_trainer(_get(obj, "trainer", ""))
    policy = parse_policy(obj["policy"]) if "policy" in obj else None
    critic = parse_critic(obj["critic"]) if "critic" in obj else None
    variance = parse_variance(obj["variance"]) if "variance" in obj else VarianceConfig()
    return RunConfig(env, trainer, policy, critic, variance)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return parse_config(obj)


# ---------------------------------------------------------------------------
# serialisation


def _list(x) -> list:
    return np.asarray(x, float).tolist()


def policy_to_dict(policy) -> dict:
    if isinstance(policy, GaussianPolicy):
        return {"type": "gaussian", "mean": _list(policy.mean), "scale": _list(policy.scale.lower)}
    if isinstance(policy, DiracPolicy):
        return {"type": "dirac", "location": _list(policy.location)}
    if isinstance(policy, MixturePolicy):
        return {
            "type": "mixture",
            "components": [{"weight": float(w), "policy": policy_to_dict(p)} for w, p in policy.components],
        }
    raise TypeError(f"cannot serialise {type(policy).__name__}")


def atom_to_dict(atom) -> dict:
    if isinstance(atom, TrigAtom):
        return {"type": "trig", "freq": _list(atom.freq), "phase": float(atom.phase)}
    if isinstance(atom, RbfAtom):
        return {"type": "rbf", "loc": _list(atom.loc), "shape": _list(atom.shape.lower)}
    if isinstance(atom, QuadricAtom):
        return {
            "type": "quadric",
            "h": _list(atom.h_matrix),
            "center": _list(atom.center),
            "offset": float(atom.offset),
            "linear": _list(atom.linear),
        }
    if isinstance(atom, AbsAtom):
        return {"type": "abs"}
    raise TypeError(f"cannot serialise {type(atom).__name__}")


def critic_to_dict(critic: HybridCritic) -> dict:
    return {"atoms": [atom_to_dict(a) for a in critic.atoms], "coeffs": _list(critic.coeffs)}


def config_to_dict(cfg: RunConfig) -> dict:
    out = {"env": asdict(cfg.env), "trainer": asdict(cfg.trainer)}
    if cfg.policy is not None:
        out["policy"] = policy_to_dict(cfg.policy)
    if cfg.critic is not None:
        out["critic"] = critic_to_dict(cfg.critic)
    out["variance"] = {"orders": list(cfg.variance.orders), "samples": cfg.variance.samples}
    return out


def dumps(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)
