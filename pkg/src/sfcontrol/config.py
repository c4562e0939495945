"""Flat key = value experiment configuration with dotted sections.

Grammar (documented in the README): one ``key = value`` pair per line, ``#``
starts a comment, keys use dots for sections (``system.A11``), values are JSON
literals (numbers, booleans, strings, nested arrays); unquoted single words
are read as strings.  Matrices are nested arrays in row-major order; a scalar
is accepted wherever a 1 x 1 matrix is expected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .model import Ball, Box, QuadraticCost, SlowFastSystem


def parse_config_text(text):
    """Parse the flat grammar into a {dotted_key: value} dict."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = json.loads(value)
        except json.JSONDecodeError:
            values[key] = value  # bare word -> string
    return values


def format_value(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, np.ndarray):
        return json.dumps(value.tolist())
    if isinstance(value, (list, tuple)):
        return json.dumps(list(value))
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a CLI command needs: system, cost, numerics, seeds, output."""

    system: SlowFastSystem
    cost: QuadraticCost
    x0: np.ndarray
    dt: float = 1e-4
    n_paths: int = 400
    basis_reduced: int = 9
    basis_full: int = 40
    width: float = 0.1
    ridge: float = 0.0
    eps_grid: tuple = (0.5, 0.25, 0.125, 0.0625, 0.03125)
    repetitions: int = 5
    seed: int = 0
    output_dir: str = "out"
    dt_ode: float = 1e-4
    fk_paths: int = 100_000

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.shape[0] != self.system.n:
            raise ConfigError(
                f"x0 has dimension {x0.shape[0]}, system expects {self.system.n}"
            )
        object.__setattr__(self, "x0", x0)
        for name in ("dt", "width", "dt_ode"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("n_paths", "basis_reduced", "basis_full", "repetitions", "fk_paths"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.ridge < 0:
            raise ConfigError("ridge must be nonnegative")
        grid = tuple(float(e) for e in self.eps_grid)
        if any(e <= 0 for e in grid):
            raise ConfigError("eps_grid entries must be strictly positive")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("eps_grid must be strictly decreasing")
        object.__setattr__(self, "eps_grid", grid)

    def with_overrides(self, seed=None, output_dir=None, eps_grid=None):
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        if eps_grid is not None:
            cfg = replace(cfg, eps_grid=tuple(eps_grid))
        return cfg


def _matrix(values, key, rows, cols, required=False):
    if key not in values:
        if required:
            raise ConfigError(f"missing required key {key}")
        return None
    v = values.pop(key)
    if isinstance(v, (int, float)):
        v = [[float(v)]]
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if rows == 1 else arr.reshape(-1, 1)
    if rows == 0 or cols == 0:
        return np.zeros((rows, cols))
    if arr.shape != (rows, cols):
        raise ConfigError(f"{key} must be a {rows}x{cols} matrix, got {arr.shape}")
    return arr


def _vector(values, key, required=False, default=None):
    if key not in values:
        if required:
            raise ConfigError(f"missing required key {key}")
        return default
    v = values.pop(key)
    if isinstance(v, (int, float)):
        v = [float(v)]
    return np.asarray(v, dtype=float).reshape(-1)


def _scalar(values, key, kind, default=None, required=False):
    if key not in values:
        if required:
            raise ConfigError(f"missing required key {key}")
        return default
    v = values.pop(key)
    try:
        return kind(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot interpret {v!r} as {kind.__name__}") from exc


def _domain(values, n_s):
    kind = _scalar(values, "cost.domain.type", str, default="box")
    if kind == "box":
        half = _scalar(values, "cost.domain.halfwidth", float, default=None)
        center = _vector(values, "cost.domain.center", default=None)
        lower = _vector(values, "cost.domain.lower", default=None)
        upper = _vector(values, "cost.domain.upper", default=None)
        if lower is not None and upper is not None:
            return Box(lower, upper)
        if half is None:
            raise ConfigError("box domain needs halfwidth or lower/upper")
        return Box.centered(n_s, half, center)
    if kind == "ball":
        center = _vector(values, "cost.domain.center", default=np.zeros(n_s))
        radius = _scalar(values, "cost.domain.radius", float, required=True)
        return Ball(center, radius)
    raise ConfigError(f"unknown domain type {kind!r}")


def config_from_values(values):
    """Build an ExperimentConfig from a parsed {key: value} dict."""
    values = dict(values)
    n_s = _scalar(values, "system.n_s", int, required=True)
    n_f = _scalar(values, "system.n_f", int, required=True)
    m = _scalar(values, "system.m", int, required=True)
    k = _scalar(values, "system.k", int, default=1)
    try:
        system = SlowFastSystem(
            n_s=n_s,
            n_f=n_f,
            m=m,
            k=k,
            A11=_matrix(values, "system.A11", n_s, n_s),
            A12=_matrix(values, "system.A12", n_s, n_f),
            A21=_matrix(values, "system.A21", n_f, n_s),
            A22=_matrix(values, "system.A22", n_f, n_f),
            N11=_matrix(values, "system.N11", n_s, n_s),
            N12=_matrix(values, "system.N12", n_s, n_f),
            N21=_matrix(values, "system.N21", n_f, n_s),
            N22=_matrix(values, "system.N22", n_f, n_f),
            B1=_matrix(values, "system.B1", n_s, k),
            B2=_matrix(values, "system.B2", n_f, k),
            C1=_matrix(values, "system.C1", n_s, m),
            C2=_matrix(values, "system.C2", n_f, m),
        )
        domain = _domain(values, n_s)
        cost = QuadraticCost(
            Q0=_matrix(values, "cost.Q0", n_s, n_s, required=True),
            Q1=_matrix(values, "cost.Q1", n_s, n_s, required=True),
            horizon=_scalar(values, "cost.T", float, required=True),
            domain=domain,
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(str(exc)) from exc

    cfg = ExperimentConfig(
        system=system,
        cost=cost,
        x0=_vector(values, "x0", required=True),
        dt=_scalar(values, "numerics.dt", float, default=1e-4),
        n_paths=_scalar(values, "numerics.paths", int, default=400),
        basis_reduced=_scalar(values, "numerics.basis_reduced", int, default=9),
        basis_full=_scalar(values, "numerics.basis_full", int, default=40),
        width=_scalar(values, "numerics.width", float, default=0.1),
        ridge=_scalar(values, "numerics.ridge", float, default=0.0),
        eps_grid=tuple(values.pop("eps_grid", (0.5, 0.25, 0.125, 0.0625, 0.03125))),
        repetitions=_scalar(values, "repetitions", int, default=5),
        seed=_scalar(values, "seed", int, default=0),
        output_dir=_scalar(values, "output_dir", str, default="out"),
        dt_ode=_scalar(values, "numerics.dt_ode", float, default=1e-4),
        fk_paths=_scalar(values, "numerics.fk_paths", int, default=100_000),
    )
    if values:
        raise ConfigError(f"unknown config keys: {sorted(values)}")
    return cfg


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_values(parse_config_text(fh.read()))


def system_to_lines(system):
    """Serialize a SlowFastSystem back to config lines (round-trippable)."""
    lines = [
        f"system.n_s = {system.n_s}",
        f"system.n_f = {system.n_f}",
        f"system.m = {system.m}",
        f"system.k = {system.k}",
    ]
    blocks = [
        ("A11", system.A11), ("A12", system.A12), ("A21", system.A21),
        ("A22", system.A22), ("N11", system.N11), ("N12", system.N12),
        ("N21", system.N21), ("N22", system.N22), ("B1", system.B1),
        ("B2", system.B2), ("C1", system.C1), ("C2", system.C2),
    ]
    for name, block in blocks:
        if block.size and np.any(block):
            lines.append(f"system.{name} = {format_value(block)}")
    return lines


def cost_to_lines(cost):
    lines = [
        f"cost.Q0 = {format_value(cost.Q0)}",
        f"cost.Q1 = {format_value(cost.Q1)}",
        f"cost.T = {format_value(float(cost.horizon))}",
    ]
    dom = cost.domain
    if isinstance(dom, Box):
        lines.append("cost.domain.type = box")
        lines.append(f"cost.domain.lower = {format_value(dom.lower)}")
        lines.append(f"cost.domain.upper = {format_value(dom.upper)}")
    elif isinstance(dom, Ball):
        lines.append("cost.domain.type = ball")
        lines.append(f"cost.domain.center = {format_value(dom.center)}")
        lines.append(f"cost.domain.radius = {format_value(float(dom.radius))}")
    return lines


def config_to_text(cfg):
    """Serialize a full configuration; load_config inverts this exactly."""
    lines = system_to_lines(cfg.system)
    lines += cost_to_lines(cfg.cost)
    lines += [
        f"x0 = {format_value(cfg.x0)}",
        f"numerics.dt = {format_value(cfg.dt)}",
        f"numerics.paths = {cfg.n_paths}",
        f"numerics.basis_reduced = {cfg.basis_reduced}",
        f"numerics.basis_full = {cfg.basis_full}",
        f"numerics.width = {format_value(cfg.width)}",
        f"numerics.ridge = {format_value(cfg.ridge)}",
        f"numerics.dt_ode = {format_value(cfg.dt_ode)}",
        f"numerics.fk_paths = {cfg.fk_paths}",
        f"eps_grid = {format_value(list(cfg.eps_grid))}",
        f"repetitions = {cfg.repetitions}",
        f"seed = {cfg.seed}",
        f"output_dir = {cfg.output_dir}",
    ]
    return "\n".join(lines) + "\n"
