"""TOML run configuration: schema, validation, round trip and hashing.

Schema version 1::

    schema_version = 1
    eps = 0.001                        # optional, default 0

    [penduli]
    signs = [1]
    branches = [1]                     # optional
    [[penduli.potential]]
    cosine_amplitude = 0.02533         # V = A (cos 2 pi q - 1)
    # or: terms = [{coef = ..., factors = [{var = "q", fn = "cos", a = 1, b = 0}]}]

    [rotator]
    h0 = [{coef = 0.5, factors = [{var = "I1", fn = "pow", a = 2}]}]

    [clock]
    kind = "affine-time"               # periodic | quasiperiodic
    frequencies = [1.0]
    eta0 = [0.0]

    [perturbation]
    type = "hamiltonian"               # or "general"
    h = [...]                          # terms over p1.., q1.., I1.., phi1.., t | eta1..
    # general: components = {p1 = [...], I1 = [...]} (missing components are 0)

    [domain]
    tube = 0.04
    action_center = [0.0]
    action_radius = inf

    [run]                              # command defaults, all optional
    tol = 1e-12
    grid = 8
    eps_list = [0.01, 0.005]
    seed = 0
    format = "json"

Unknown keys anywhere are errors.
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on the interpreter
    import tomli as tomllib
import tomli_w

from .expr import KIND_CODES, Expr, Factor, Term, cosine_potential
from .model import (
    ClockDriver,
    Domain,
    GeneralField,
    HamiltonianField,
    Layout,
    PenduliSpec,
    RotatorSpec,
    SystemConfig,
)

__all__ = ["SCHEMA_VERSION", "ConfigError", "RunConfig", "loads", "load", "dumps", "config_hash"]

SCHEMA_VERSION = 1

_TOP = {"schema_version", "eps", "penduli", "rotator", "clock", "perturbation", "domain", "run"}
_RUN_KEYS = {
    "tol": float,
    "grid": int,
    "eps_list": list,
    "seed": int,
    "format": str,
    "output": str,
    "horizon_c": float,
}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration: the normalized document plus the built system."""

    document: dict
    system: SystemConfig
    run: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        return config_hash(self.document)

    def to_toml(self) -> str:
        return dumps(self.document)


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------
def _table(obj, path, allowed, required=()):
    if not isinstance(obj, dict):
        raise ConfigError("expected a table", path)
    extra = set(obj) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) {sorted(extra)}; allowed {sorted(allowed)}", path)
    for k in required:
        if k not in obj:
            raise ConfigError(f"missing required key {k!r}", path)
    return obj


def _num(x, path):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"expected a number, got {x!r}", path)
    return float(x)


def _int(x, path):
    if isinstance(x, bool) or not isinstance(x, int):
        raise ConfigError(f"expected an integer, got {x!r}", path)
    return int(x)


def _list(x, path, conv=_num):
    if not isinstance(x, list):
        raise ConfigError(f"expected an array, got {x!r}", path)
    return [conv(v, f"{path}[{k}]") for k, v in enumerate(x)]


def _terms(raw, names, path) -> tuple[dict, Expr]:
    """Normalize an array of term tables and build the expression."""
    if not isinstance(raw, list):
        raise ConfigError("expected an array of term tables", path)
    norm, terms = [], []
    for k, t in enumerate(raw):
        tp = f"{path}[{k}]"
        _table(t, tp, {"coef", "factors"}, ("coef",))
        coef = _num(t["coef"], f"{tp}.coef")
        facs_raw = t.get("factors", [])
        if not isinstance(facs_raw, list):
            raise ConfigError("expected an array of factor tables", f"{tp}.factors")
        fn, facs = [], []
        for j, f in enumerate(facs_raw):
            fp = f"{tp}.factors[{j}]"
            _table(f, fp, {"var", "fn", "a", "b"}, ("var", "fn"))
            var = f["var"]
            if var not in names:
                raise ConfigError(f"unknown variable {var!r}; expected one of {list(names)}", f"{fp}.var")
            kind = f["fn"]
            if kind not in KIND_CODES:
                raise ConfigError(f"unknown function {kind!r}; expected one of {list(KIND_CODES)}", f"{fp}.fn")
            a = _num(f.get("a", 1.0), f"{fp}.a")
            b = _num(f.get("b", 0.0), f"{fp}.b")
            try:
                facs.append(Factor(names.index(var), kind, a, b))
            except ValueError as err:
                raise ConfigError(str(err), fp) from None
            fn.append({"var": var, "fn": kind, "a": a, "b": b})
        terms.append(Term(coef, tuple(facs)))
        norm.append({"coef": coef, "factors": fn})
    return norm, Expr(len(names), tuple(terms))


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------
def _parse(doc: dict) -> RunConfig:
    ver = doc.get("schema_version", SCHEMA_VERSION)
    if ver != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {ver!r} (expected {SCHEMA_VERSION})", "schema_version")
    _table(doc, "", _TOP, ("schema_version", "penduli", "rotator", "perturbation"))
    out: dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    eps = _num(doc.get("eps", 0.0), "eps")
    out["eps"] = eps

    # penduli
    pd = _table(doc["penduli"], "penduli", {"signs", "branches", "potential"}, ("potential",))
    pots_raw = pd["potential"]
    if not isinstance(pots_raw, list) or not pots_raw:
        raise ConfigError("expected a non-empty array of tables", "penduli.potential")
    n = len(pots_raw)
    signs = _list(pd.get("signs", [1] * n), "penduli.signs", _int)
    branches = _list(pd.get("branches", [1] * n), "penduli.branches", _int)
    pots, pots_norm = [], []
    for i, pr in enumerate(pots_raw):
        pp = f"penduli.potential[{i}]"
        _table(pr, pp, {"cosine_amplitude", "terms"})
        if ("cosine_amplitude" in pr) == ("terms" in pr):
            raise ConfigError("give exactly one of 'cosine_amplitude' or 'terms'", pp)
        if "cosine_amplitude" in pr:
            A = _num(pr["cosine_amplitude"], f"{pp}.cosine_amplitude")
            if A <= 0:
                raise ConfigError("amplitude must be positive", f"{pp}.cosine_amplitude")
            pots.append(cosine_potential(A))
            pots_norm.append({"cosine_amplitude": A})
        else:
            norm, e = _terms(pr["terms"], ("q",), f"{pp}.terms")
            pots.append(e)
            pots_norm.append({"terms": norm})
    try:
        penduli = PenduliSpec(tuple(pots), tuple(signs), tuple(branches))
    except ValueError as err:
        raise ConfigError(str(err), "penduli") from None
    out["penduli"] = {"signs": signs, "branches": branches, "potential": pots_norm}

    # rotator
    rt = _table(doc["rotator"], "rotator", {"d", "h0"}, ("h0",))
    h0_raw = rt["h0"]
    d = _int(rt.get("d", _infer_d(h0_raw)), "rotator.d")
    if d < 1:
        raise ConfigError("need at least one rotator", "rotator.d")
    inames = tuple(f"I{j + 1}" for j in range(d))
    h0_norm, h0 = _terms(h0_raw, inames, "rotator.h0")
    out["rotator"] = {"d": d, "h0": h0_norm}

    # clock
    ck = _table(doc.get("clock", {}), "clock", {"kind", "frequencies", "eta0"})
    kind = ck.get("kind", "affine-time")
    if kind == "custom":
        raise ConfigError("custom clocks are only available from Python", "clock.kind")
    freqs = _list(ck.get("frequencies", [1.0]), "clock.frequencies")
    eta0 = _list(ck.get("eta0", [0.0] * len(freqs)), "clock.eta0")
    try:
        clock = ClockDriver(kind, tuple(freqs), tuple(eta0))
    except ValueError as err:
        raise ConfigError(str(err), "clock") from None
    out["clock"] = {"kind": kind, "frequencies": freqs, "eta0": eta0}

    lay = Layout(n, d, clock.m, clock.names())
    names = lay.names

    # perturbation
    pt = _table(doc["perturbation"], "perturbation",
                {"type", "h", "components", "bound", "lipschitz"}, ("type",))
    extras = {}
    for key in ("bound", "lipschitz"):
        if key in pt:
            extras[key] = _num(pt[key], f"perturbation.{key}")
    if pt["type"] == "hamiltonian":
        if "components" in pt:
            raise ConfigError("'components' is only valid for type = 'general'", "perturbation")
        h_norm, h = _terms(pt.get("h", []), names, "perturbation.h")
        pert = HamiltonianField(h, **extras)
        out["perturbation"] = {"type": "hamiltonian", "h": h_norm, **extras}
    elif pt["type"] == "general":
        if "h" in pt:
            raise ConfigError("'h' is only valid for type = 'hamiltonian'", "perturbation")
        comp_names = names[: lay.ny]
        comps_raw = _table(pt.get("components", {}), "perturbation.components", comp_names)
        comps, comps_norm = [], {}
        for cname in comp_names:
            norm, e = _terms(comps_raw.get(cname, []), names, f"perturbation.components.{cname}")
            comps.append(e)
            if norm:
                comps_norm[cname] = norm
        pert = GeneralField(tuple(comps), **extras)
        out["perturbation"] = {"type": "general", "components": comps_norm, **extras}
    else:
        raise ConfigError(f"unknown type {pt['type']!r}; expected 'hamiltonian' or 'general'",
                          "perturbation.type")

    # domain
    dm = _table(doc.get("domain", {}), "domain", {"tube", "action_center", "action_radius"})
    dom_norm = {}
    tube = None
    if "tube" in dm:
        tube = _num(dm["tube"], "domain.tube")
        if tube <= 0:
            raise ConfigError("tube must be positive", "domain.tube")
        dom_norm["tube"] = tube
    center = None
    if "action_center" in dm:
        center = tuple(_list(dm["action_center"], "domain.action_center"))
        dom_norm["action_center"] = list(center)
    radius = _num(dm.get("action_radius", math.inf), "domain.action_radius")
    dom_norm["action_radius"] = radius
    out["domain"] = dom_norm

    try:
        system = SystemConfig(penduli, RotatorSpec(h0), pert, clock, Domain(tube, center, radius), eps)
    except ValueError as err:
        raise ConfigError(str(err), "perturbation") from None

    # run defaults
    rn = _table(doc.get("run", {}), "run", set(_RUN_KEYS))
    run = {}
    for key, typ in _RUN_KEYS.items():
        if key not in rn:
            continue
        v = rn[key]
        p = f"run.{key}"
        if typ is float:
            run[key] = _num(v, p)
        elif typ is int:
            run[key] = _int(v, p)
        elif typ is list:
            run[key] = _list(v, p)
        else:
            if not isinstance(v, str):
                raise ConfigError(f"expected a string, got {v!r}", p)
            run[key] = v
    if run.get("format", "json") not in ("json", "csv"):
        raise ConfigError("format must be 'json' or 'csv'", "run.format")
    if run:
        out["run"] = run
    return RunConfig(out, system, run)


def _infer_d(h0_raw) -> int:
    d = 1
    if isinstance(h0_raw, list):
        for t in h0_raw:
            for f in (t.get("factors", []) if isinstance(t, dict) else []):
                v = f.get("var", "") if isinstance(f, dict) else ""
                if isinstance(v, str) and v.startswith("I") and v[1:].isdigit():
                    d = max(d, int(v[1:]))
    return d


def loads(text: str) -> RunConfig:
    """Parse TOML text; syntax errors carry line and column."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"TOML syntax error: {err}") from None
    return _parse(doc)


def load(path) -> RunConfig:
    return loads(Path(path).read_text())


def dumps(document: dict) -> str:
    """Serialize a normalized document (output of :func:`loads`) to TOML."""
    return tomli_w.dumps(document)


def config_hash(document: dict) -> str:
    """SHA-256 of the canonical JSON form of the normalized document."""
    text = json.dumps(document, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(text.encode()).hexdigest()
