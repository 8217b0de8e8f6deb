"""TOML configuration files for structures, coefficients and experiments.

A configuration names a structure either by ``preset = "sg"`` or by the keys
``alphabet_size``, ``boundary_size``, ``gluing``, ``r`` and ``c0``::

    preset = "sg"

    [measure]
    weights = [0.3333333333333333, 0.3333333333333333, 0.3333333333333334]

    [coefficients]
    a = {values = [1.0, 1.5, 1.2], level = 0}
    c = -5.0
    b = [{g = 0.1, f = "indicator:1"}]

    [data]
    f = ["coordinate", "indicator:0"]

    [experiment]
    levels = [2, 6]
    reference_level = 8

Function specs
--------------
number
    Constant function.
``{values = [...], level = n}`` or the string ``"v0,v1,...@n"``
    The n-harmonic function with the given values on ``V_n``.
``"coordinate"``
    The 0-harmonic function with boundary values evenly spaced in ``[0, 1]``
    (the identity on the unit interval).
``"indicator:p"``, ``"indicator:p@m"``
    The harmonic spline of vertex ``p`` at level 0 (default) or ``m``.
list of specs
    Pointwise product, evaluated on the level where it is used.  Products are
    not piecewise harmonic, so they are accepted only for data (``f``,
    ``u0``) and for the target coefficient of diagonal experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
import sys

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cells import SelfSimilarStructure
from .fields import LevelFunction, SymbolicField
from .forms import FormCoefficients
from .harmonic import HarmonicStructure, preset_harmonic_structure
from .measures import SelfSimilarMeasure

__all__ = [
    "Config",
    "load_config",
    "parse_config",
    "function_spec",
    "evaluate_spec",
    "ConfigError",
]


class ConfigError(ValueError):
    """Malformed configuration."""


@dataclass(frozen=True, eq=False)
class Config:
    """Parsed configuration.

    Attributes
    ----------
    hs : HarmonicStructure
    measure : SelfSimilarMeasure
    coefficients : FormCoefficients
    data : dict
        Raw function specs of the ``[data]`` table.
    experiment : dict
        Raw ``[experiment]`` table.
    raw : dict
        The whole parsed document, echoed into output headers.
    """

    hs: HarmonicStructure
    measure: SelfSimilarMeasure
    coefficients: FormCoefficients
    data: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def data_values(self, key, m, default=1.0):
        """Values on ``V_m`` of the data function ``key``."""
        return evaluate_spec(self.data.get(key, default), self.hs, m)


def load_config(path):
    """Read and parse a TOML configuration file."""
    with Path(path).open("rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return parse_config(doc)


def parse_config(doc):
    """Build a :class:`Config` from an already parsed mapping."""
    hs = _structure(doc)
    weights = doc.get("measure", {}).get("weights")
    measure = (SelfSimilarMeasure.uniform(hs.n_maps) if weights is None
               else SelfSimilarMeasure(np.asarray(weights, dtype=float)))
    if measure.weights.size != hs.n_maps:
        raise ConfigError(f"measure.weights needs {hs.n_maps} entries")
    coefficients = _coefficients(doc.get("coefficients", {}), hs)
    return Config(hs, measure, coefficients, dict(doc.get("data", {})),
                  dict(doc.get("experiment", {})), doc)


def _structure(doc):
    if "preset" in doc:
        return preset_harmonic_structure(doc["preset"])
    try:
        n, nb = int(doc["alphabet_size"]), int(doc["boundary_size"])
        gluing = [tuple(int(x) for x in rule) for rule in doc["gluing"]]
        r = doc["r"]
        entries = doc["c0"]
    except KeyError as exc:
        raise ConfigError(f"missing structure key {exc.args[0]!r} (or give a preset)") from None
    structure = SelfSimilarStructure(n, nb, tuple(gluing), name=doc.get("name", "custom"))
    c0 = np.zeros((nb, nb))
    for p, q, value in entries:
        c0[int(p), int(q)] = c0[int(q), int(p)] = float(value)
    return HarmonicStructure(structure, c0, r)


def _coefficients(table, hs):
    def scalar(key, default):
        spec = table.get(key, default)
        if isinstance(spec, list):
            raise ConfigError(f"coefficient {key!r} must be piecewise harmonic, not a product")
        return function_spec(spec, hs) if not isinstance(spec, (int, float)) else float(spec)

    def drift(key):
        terms = table.get(key)
        if terms is None:
            return None
        if isinstance(terms, dict):
            terms = [terms]
        pairs = []
        for term in terms:
            try:
                g, f = term["g"], term["f"]
            except (KeyError, TypeError):
                raise ConfigError(f"{key} terms need keys 'g' and 'f'") from None
            pairs.append((function_spec(g, hs), function_spec(f, hs)))
        return SymbolicField(tuple(pairs))

    def optional(key):
        return None if table.get(key) is None else float(table[key])

    return FormCoefficients(a=scalar("a", 1.0), b=drift("b"), b_hat=drift("b_hat"),
                            c=scalar("c", 0.0), lam=optional("lam"), Lam=optional("Lam"),
                            M=optional("M"))


def function_spec(spec, hs):
    """Turn a single (non-product) spec into a :class:`LevelFunction`."""
    nb = hs.n_boundary
    if isinstance(spec, (int, float)):
        return LevelFunction(np.full(nb, float(spec)), 0)
    if isinstance(spec, dict):
        try:
            return _checked(hs, spec["values"], spec.get("level", 0))
        except KeyError:
            raise ConfigError("table function specs need a 'values' key") from None
    if isinstance(spec, str):
        text = spec.strip()
        if text == "coordinate":
            return LevelFunction(np.linspace(0.0, 1.0, nb), 0)
        if text.startswith("indicator:"):
            body = text[len("indicator:"):]
            vertex, _, level = body.partition("@")
            level = int(level) if level else 0
            values = np.zeros(hs.level(level).n_vertices)
            try:
                values[int(vertex)] = 1.0
            except (ValueError, IndexError):
                raise ConfigError(f"bad indicator vertex in {spec!r}") from None
            return LevelFunction(values, level)
        if "@" in text:
            values, _, level = text.rpartition("@")
            try:
                return _checked(hs, [float(v) for v in values.split(",")], int(level))
            except ValueError:
                raise ConfigError(f"cannot parse function spec {spec!r}") from None
    raise ConfigError(f"unsupported function spec {spec!r}")


def _checked(hs, values, level):
    values = np.asarray(values, dtype=float)
    size = hs.level(int(level)).n_vertices
    if values.shape != (size,):
        raise ConfigError(f"values@{level} needs {size} entries, got {values.size}")
    return LevelFunction(values, int(level))


def evaluate_spec(spec, hs, m):
    """Values on ``V_m`` of a spec; lists are multiplied pointwise."""
    if isinstance(spec, list):
        out = np.ones(hs.level(m).n_vertices)
        for part in spec:
            out = out * evaluate_spec(part, hs, m)
        return out
    return function_spec(spec, hs).at_level(hs, m)
