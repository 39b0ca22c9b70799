"""Model specification files (YAML, ``schema: steadydiff-model/1``).

Two forms are accepted.  A zoo entry::

    schema: steadydiff-model/1
    zoo: erlang_a            # erlang_a | mm_inf | mphn
    params: {mu: 1.0, theta: 0.5, staffing: "n"}

or an explicit chain::

    schema: steadydiff-model/1
    name: mm1_like
    dimension: 1
    constants: {mu: 1.0}
    jumps:
      arrival:   {vector: [1],  rate: "n"}
      departure: {vector: [-1], rate: "mu * x1"}
    domain: {lower: [0], upper: [inf]}     # entries: numbers, inf, or expressions in n
    center: ["n / mu"]                      # optional; else the fluid stationary point

Rate expressions use the arithmetic language of :mod:`steadydiff.expr`.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import yaml

from . import zoo
from .chain import ChainFamily, scale_chain
from .errors import ModelSpecError, NotDriftZeroError
from .expr import Expression
from .fluid import FluidModel, stationary_point

MODEL_SCHEMA = "steadydiff-model/1"


@dataclass(frozen=True, eq=False)
class ModelSpec:
    chain: ChainFamily
    center: Optional[Callable] = None  # n -> lattice centre (closed form), or None
    source: dict = None
    drift_closed_form: Optional[Callable] = None  # (n, x) -> F_hat, when the zoo provides one

    @property
    def dim(self):
        return self.chain.dim

    def center_at(self, n):
        if self.center is not None:
            c = np.atleast_1d(np.asarray(self.center(n), dtype=float))
            try:
                scale_chain(self.chain, n, c)
                return c
            except NotDriftZeroError:
                pass  # e.g. rounded staffing below the offered load: fall back to the fluid solve
            guess = c
        else:
            guess = np.full(self.dim, float(n))
        return stationary_point(FluidModel.from_chain(self.chain, n), guess).point

    def scaled(self, n):
        return scale_chain(self.chain, n, self.center_at(n))


def _bound(v, n, default):
    if v is None:
        return default
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "+inf", "infinity"):
            return np.inf
        if v.strip().lower() in ("-inf", "-infinity"):
            return -np.inf
        return float(Expression(v, 0)(n))
    return float(v)


def _explicit_chain(doc):
    try:
        d = int(doc["dimension"])
        jumps_doc = doc["jumps"]
    except KeyError as exc:
        raise ModelSpecError(f"model file lacks required key {exc.args[0]!r}") from None
    consts = {k: float(v) for k, v in (doc.get("constants") or {}).items()}
    names, vecs, exprs = [], [], []
    for name, item in jumps_doc.items():
        vec = np.asarray(item["vector"])
        if vec.shape != (d,):
            raise ModelSpecError(f"jump {name!r} has shape {vec.shape}, expected ({d},)")
        names.append(str(name))
        vecs.append(vec)
        exprs.append(Expression(str(item["rate"]), d, consts))
    dom = doc.get("domain") or {}
    lower_doc = dom.get("lower")
    upper_doc = dom.get("upper")

    def lower(n):
        if lower_doc is None:
            return np.full(d, -np.inf)
        return np.array([_bound(v, n, -np.inf) for v in lower_doc])

    def upper(n):
        if upper_doc is None:
            return np.full(d, np.inf)
        return np.array([_bound(v, n, np.inf) for v in upper_doc])

    def in_domain(n, X):
        X = np.asarray(X, dtype=float)
        return np.all((X >= lower(n)) & (X <= upper(n)), axis=-1)

    def rates(n, X):
        X = np.asarray(X, dtype=float)
        cols = [np.broadcast_to(np.asarray(e(n, X), dtype=float), X.shape[:-1]) for e in exprs]
        return np.stack(cols, axis=-1)

    chain = ChainFamily(dim=d, jumps=np.array(vecs), rates=rates, in_domain=in_domain, lower=lower, upper=upper,
                        jump_names=tuple(names), name=str(doc.get("name", "model")), meta={"constants": consts})
    center = None
    if doc.get("center") is not None:
        cexpr = doc["center"] if isinstance(doc["center"], list) else [doc["center"]]
        ce = [Expression(str(c), d, consts) for c in cexpr]
        center = lambda n: np.array([float(e(n)) for e in ce])
    return ModelSpec(chain, center, doc)


def _staffing(spec):
    if spec is None:
        return None
    if isinstance(spec, (int, float)):
        return float(spec)
    e = Expression(str(spec), 0)
    return lambda n: float(e(n))


def _zoo_model(doc):
    name = doc["zoo"]
    params = dict(doc.get("params") or {})
    if name == "erlang_a":
        p = zoo.ErlangAParams(mu=float(params.get("mu", 1.0)), theta=float(params["theta"]),
                              staffing=_staffing(params.get("staffing")))
        return ModelSpec(zoo.build_erlang_a(p), lambda n: [zoo.erlang_a_center(p, n)], doc,
                         lambda n, x: zoo.erlang_a_drift_hat(p, n, x))
    if name == "mm_inf":
        mu = float(params.get("mu", 1.0))
        return ModelSpec(zoo.build_mm_inf(mu), lambda n: [n / mu], doc, lambda n, x: -mu * np.asarray(x))
    if name == "mphn":
        p = zoo.PhaseTypeParams(nu=tuple(params["nu"]), routing=tuple(map(tuple, params["routing"])),
                                theta=float(params["theta"]), beta=float(params.get("beta", 0.0)))
        return ModelSpec(zoo.build_mphn(p), lambda n: zoo.mphn_center(p, n), doc,
                         lambda n, x: zoo.mphn_drift_hat(p, n, x))
    raise ModelSpecError(f"unknown zoo model {name!r} (known: erlang_a, mm_inf, mphn)")


def parse_model(doc):
    """Build a :class:`ModelSpec` from an already-loaded mapping."""
    if not isinstance(doc, dict):
        raise ModelSpecError("model specification must be a mapping")
    schema = doc.get("schema", MODEL_SCHEMA)
    if schema != MODEL_SCHEMA:
        raise ModelSpecError(f"unsupported model schema {schema!r}; expected {MODEL_SCHEMA!r}")
    try:
        if "zoo" in doc:
            return _zoo_model(doc)
        return _explicit_chain(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelSpecError(f"invalid model specification: {exc}") from None


def load_model(source):
    """Load a model from a YAML path, a YAML string or a mapping."""
    if isinstance(source, dict):
        return parse_model(source)
    p = Path(str(source))
    text = p.read_text() if p.exists() else str(source)
    return parse_model(yaml.safe_load(text))
