"""YAML problem description.

Schema (all matrices are row-major nested lists; scalars are accepted for 1x1)::

    system:
      A: [[1.0, 1.0], [0.0, 1.0]]
      Q: [[1.0, 0.0], [0.0, 1.0]]
    sensor_kinds:            # named observation models
      pos:  {C: [[1.0, 0.0]], R: [[1.0]]}
      none: {C: []}          # silent node
    sensors:                 # node list in index order, kinds with counts
      - {kind: pos, count: 3}
      - {kind: none, count: 2}
    topology:                # exactly one of the two forms
      geometric: {N: 5, width: 500, radius: 110, seed: 7}
      # adjacency: [[1, 1, 0], [1, 1, 1], [0, 1, 1]]
    weights:
      variant: cidf          # cidf | icf | cmci | custom
      depth: 1               # optional; defaults to 3 for icf, else 1
      epsilon: 0.2           # icf only (optional)
      omega: [1, 2, 3]       # cmci only
      metropolis: false      # cidf: doubly stochastic weights instead of degree weights
      L: [[...]]             # custom only
      nu: [[...]]            # custom only

Sensors may also be listed explicitly as ``{C: ..., R: ...}`` entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import PreconditionError
from .model import (
    FusionWeights,
    SystemModel,
    Topology,
    custom_weights,
    random_geometric_topology,
    system_model,
    topology_from_adjacency,
    variant_weights,
)


@dataclass
class Problem:
    model: SystemModel
    weights: FusionWeights
    topology: Optional[Topology]


def _matrix(value, name: str) -> np.ndarray:
    try:
        return np.atleast_2d(np.asarray(value, dtype=float))
    except (TypeError, ValueError) as exc:
        raise PreconditionError(f"{name} is not a numeric matrix") from exc


def parse_problem(doc: dict, overrides: Optional[dict] = None) -> Problem:
    """Build model, topology and weights from a parsed configuration mapping.

    ``overrides`` may replace ``variant``, ``depth``, ``epsilon`` or ``seed``
    (the topology seed), mirroring CLI flags.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    try:
        sysdoc = doc["system"]
        A = _matrix(sysdoc["A"], "A")
        Q = _matrix(sysdoc["Q"], "Q")
    except (KeyError, TypeError) as exc:
        raise PreconditionError(f"config is missing system.A / system.Q ({exc})") from exc
    n = A.shape[0]
    kinds = doc.get("sensor_kinds", {}) or {}
    sensors = []
    for entry in doc.get("sensors", []) or []:
        if "kind" in entry:
            if entry["kind"] not in kinds:
                raise PreconditionError(f"unknown sensor kind {entry['kind']!r}")
            kind_doc = kinds[entry["kind"]] or {}
        else:
            kind_doc = entry
        C = kind_doc.get("C")
        C = None if C is None or np.size(C) == 0 else _matrix(C, "C")
        R = None if C is None else _matrix(kind_doc.get("R", np.eye(C.shape[0])), "R")
        sensors += [(C, R)] * int(entry.get("count", 1))
    if not sensors:
        raise PreconditionError("config lists no sensors")
    model = system_model(A, Q, sensors)
    if model.n != n:
        raise PreconditionError("inconsistent state dimension")

    topo = None
    tdoc = doc.get("topology") or {}
    if "geometric" in tdoc:
        g = tdoc["geometric"]
        topo = random_geometric_topology(
            int(g.get("N", model.N)), float(g["width"]), float(g["radius"]),
            int(overrides.get("seed", g.get("seed", 0))),
        )
    elif "adjacency" in tdoc:
        topo = topology_from_adjacency(np.asarray(tdoc["adjacency"]))
    if topo is not None and topo.N != model.N:
        raise PreconditionError(f"topology has {topo.N} nodes but {model.N} sensors are listed")

    wdoc = dict(doc.get("weights") or {})
    variant = str(overrides.get("variant", wdoc.get("variant", "cidf"))).upper()
    depth = overrides.get("depth", wdoc.get("depth"))
    depth = None if depth is None else int(depth)
    if variant == "CUSTOM":
        weights = custom_weights(_matrix(wdoc["L"], "L"), _matrix(wdoc.get("nu", wdoc["L"]), "nu"))
    else:
        if topo is None:
            raise PreconditionError(f"variant {variant} needs a topology section")
        weights = variant_weights(
            topo, variant, depth,
            epsilon=overrides.get("epsilon", wdoc.get("epsilon")),
            omega=wdoc.get("omega"),
            metropolis=bool(wdoc.get("metropolis", False)),
        )
    return Problem(model, weights, topo)


def load_problem(path, overrides: Optional[dict] = None) -> Problem:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise PreconditionError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise PreconditionError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise PreconditionError(f"config {path} must be a mapping")
    return parse_problem(doc, overrides)
