"""JSON graph / bundle / edge-length files."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .bundle import BundleConnection, EndomorphismField, UnitarityError
from .graph import WeightedGraph
from .metrics import EdgeLengths


class InputError(ValueError):
    """Unreadable or malformed input file."""


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: expected a JSON object")
    return data


def graph_from_dict(data: dict) -> WeightedGraph:
    """``{"n", "m", "c", "edges": [[x, y, b], ...]}``; optional ``"labels"`` lets
    edges name vertices by string."""
    try:
        n = int(data["n"])
        labels = data.get("labels")
        lookup = {str(name): i for i, name in enumerate(labels)} if labels else {}

        def vertex(v):
            if isinstance(v, str):
                if v not in lookup:
                    raise InputError(f"unknown vertex label {v!r}")
                return lookup[v]
            return int(v)

        triples = [(vertex(x), vertex(y), float(b)) for x, y, b in data.get("edges", [])]
        seen = set()
        for x, y, _ in triples:
            key = (min(x, y), max(x, y))
            if key in seen:
                raise InputError(f"duplicate edge {key}")
            seen.add(key)
        m = np.asarray(data.get("m", [1.0] * n), dtype=float)
        c = np.asarray(data.get("c", [0.0] * n), dtype=float)
        return WeightedGraph.from_edges(n, triples, c=c, m=m)
    except InputError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed graph description: {exc}") from exc


def graph_to_dict(g: WeightedGraph) -> dict:
    return {
        "n": g.n,
        "m": g.m.tolist(),
        "c": g.c.tolist(),
        "edges": [[int(x), int(y), float(b)] for (x, y), b in zip(g.edges, g.weights)],
    }


def load_graph(path) -> WeightedGraph:
    return graph_from_dict(_read_json(path))


def _matrix(entries, d: int) -> np.ndarray:
    arr = np.asarray(entries, dtype=float)
    if arr.shape[-1] != 2:
        raise InputError("matrix entries must be [re, im] pairs")
    z = arr[..., 0] + 1j * arr[..., 1]
    if z.size != d * d:
        raise InputError(f"matrix has {z.size} entries, expected {d * d}")
    return z.reshape(d, d)


def bundle_from_dict(data: dict, g: WeightedGraph) -> tuple[BundleConnection, EndomorphismField]:
    """``{"dim", "phi": [[x, y, M]], "w": [[x, M]]}`` with M a row-major list of
    [re, im] pairs (flat or nested by rows). Missing phi entries are the
    identity, missing w entries the zero matrix."""
    try:
        d = int(data["dim"])
        maps = {}
        for x, y, entries in data.get("phi", []):
            x, y = int(x), int(y)
            if (x, y) in maps:
                raise InputError(f"duplicate transport for edge ({x}, {y})")
            maps[(x, y)] = _matrix(entries, d)
        conn = BundleConnection.from_mapping(g, d, maps)
        w = np.zeros((g.n, d, d), dtype=complex)
        for x, entries in data.get("w", []):
            w[int(x)] = _matrix(entries, d)
        return conn, EndomorphismField(w)
    except (InputError, UnitarityError):
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InputError(f"malformed bundle description: {exc}") from exc


def _pairs(M: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(M).reshape(-1)]


def bundle_to_dict(conn: BundleConnection, w: EndomorphismField | None = None) -> dict:
    out = {
        "dim": conn.dim,
        "phi": [[int(x), int(y), _pairs(U)] for (x, y), U in zip(conn.base.edges, conn.phi)],
    }
    if w is not None:
        out["w"] = [[x, _pairs(w.w[x])] for x in range(w.n) if np.any(w.w[x])]
    return out


def load_bundle(path, g: WeightedGraph):
    return bundle_from_dict(_read_json(path), g)


def load_lengths(path, g: WeightedGraph) -> EdgeLengths:
    """``{"sigma": [[x, y, s], ...], "default": s?}``."""
    data = _read_json(path)
    try:
        mapping = {(int(x), int(y)): float(s) for x, y, s in data["sigma"]}
        return EdgeLengths.from_mapping(g, mapping, data.get("default"))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed sigma description: {exc}") from exc
