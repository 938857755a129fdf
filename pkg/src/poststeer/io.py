"""JSON encoding for matrices, assemblages, functionals and behaviours.

Complex numbers are ``[re, im]`` pairs and matrices are row-major nested lists.
Floats are written with Python's shortest round-trip repr, so a dump/load cycle is exact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .assemblage import (Assemblage, BipartiteAssemblage, MinimalFunctional, Scenario,
                         SteeringFunctional, reconstruct_from_minimal)
from .behaviour import Behaviour


def encode_matrix(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def decode_matrix(data) -> np.ndarray:
    """Accept ``[re, im]`` entries or plain real numbers."""
    rows = []
    for row in data:
        rows.append([complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v) for v in row])
    return np.array(rows, dtype=complex)


def encode_vector(v) -> list:
    return [[float(x.real), float(x.imag)] for x in np.asarray(v, dtype=complex)]


def decode_vector(data) -> np.ndarray:
    return np.array([complex(x[0], x[1]) if isinstance(x, (list, tuple)) else complex(x) for x in data])


def encode_scenario(sc: Scenario) -> dict:
    return {"dimA": sc.dimA, "outB": sc.outB, "outC": sc.outC, "setB": sc.setB, "setC": sc.setC}


def decode_scenario(d: dict) -> Scenario:
    return Scenario(int(d["dimA"]), int(d["outB"]), int(d["outC"]), int(d["setB"]), int(d["setC"]))


def _key(*idx) -> str:
    return ",".join(str(i) for i in idx)


def _parse_key(k: str) -> tuple[int, ...]:
    return tuple(int(p) for p in k.split(","))


def encode_assemblage(asm: Assemblage) -> dict:
    return {
        "type": "assemblage",
        "scenario": encode_scenario(asm.scenario),
        "blocks": {_key(*k): encode_matrix(asm[k]) for k in asm.scenario.keys()},
    }


def decode_assemblage(d: dict) -> Assemblage:
    if "minimal" in d:
        m = d["minimal"]
        sc = decode_scenario(d["scenario"]) if "scenario" in d else None
        return reconstruct_from_minimal(
            decode_matrix(m["rho_A"]),
            [decode_matrix(x) for x in m["sigma_B_0"]],
            _decode_grid(m["sigma_00"]),
            sc,
            sigma_C0=[decode_matrix(x) for x in m["sigma_C_0"]] if "sigma_C_0" in m else None,
        )
    sc = decode_scenario(d["scenario"])
    blocks = np.zeros(sc.block_shape, dtype=complex)
    seen = set()
    for k, m in d["blocks"].items():
        idx = _parse_key(k)
        if len(idx) != 4:
            raise ValueError(f"block key {k!r} must be 'b,c,y,z'")
        blocks[idx] = decode_matrix(m)
        seen.add(idx)
    missing = set(sc.keys()) - seen
    if missing:
        raise ValueError(f"assemblage JSON is missing blocks {sorted(missing)[:4]}...")
    return Assemblage(sc, blocks)


def _decode_grid(grid) -> np.ndarray:
    return np.array([[decode_matrix(m) for m in row] for row in grid])


def encode_bipartite(asm: BipartiteAssemblage) -> dict:
    return {
        "type": "bipartite_assemblage",
        "dimA": asm.dimA,
        "outB": asm.outB,
        "setB": asm.setB,
        "blocks": {_key(b, y): encode_matrix(asm.blocks[b, y])
                   for b in range(asm.outB) for y in range(asm.setB)},
    }


def decode_bipartite(d: dict) -> BipartiteAssemblage:
    dim, outB, setB = int(d["dimA"]), int(d["outB"]), int(d["setB"])
    blocks = np.zeros((outB, setB, dim, dim), dtype=complex)
    for k, m in d["blocks"].items():
        blocks[_parse_key(k)] = decode_matrix(m)
    return BipartiteAssemblage(dim, blocks)


def encode_functional(F: SteeringFunctional) -> dict:
    return {
        "type": "functional",
        "scenario": encode_scenario(F.scenario),
        "operators": {_key(*k): encode_matrix(F.operators[k]) for k in F.scenario.keys()},
    }


def encode_minimal(Fm: MinimalFunctional) -> dict:
    return {
        "type": "minimal_functional",
        "F_A": encode_matrix(Fm.F_A),
        "F_B": [encode_matrix(m) for m in Fm.F_B],
        "F_C": [encode_matrix(m) for m in Fm.F_C],
        "F_YZ": [[encode_matrix(m) for m in row] for row in Fm.F_YZ],
    }


def decode_minimal(d: dict) -> MinimalFunctional:
    F_B = [decode_matrix(m) for m in d["F_B"]]
    F_C = [decode_matrix(m) for m in d["F_C"]] if "F_C" in d else F_B
    return MinimalFunctional(decode_matrix(d["F_A"]), F_B, F_C, _decode_grid(d["F_YZ"]))


def decode_functional(d: dict) -> SteeringFunctional:
    """Read either a full functional or a minimal one (expanded)."""
    from .assemblage import expand_minimal

    if "F_A" in d:
        return expand_minimal(decode_minimal(d))
    sc = decode_scenario(d["scenario"])
    ops = np.zeros(sc.block_shape, dtype=complex)
    for k, m in d["operators"].items():
        ops[_parse_key(k)] = decode_matrix(m)
    return SteeringFunctional(sc, ops)


def encode_behaviour(p: Behaviour) -> dict:
    return {"type": "behaviour", "dims": p.dims, "index_order": "x,y,z,a,b,c",
            "p": [float(v) for v in p.flat()]}


def decode_behaviour(d: dict) -> Behaviour:
    dims = d["dims"]
    shape = tuple(int(dims[k]) for k in ("nX", "nY", "nZ", "nA", "nB", "nC"))
    return Behaviour(np.asarray(d["p"], dtype=float).reshape(shape))


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=1, sort_keys=False)


def write_json(obj: Any, path: str | Path) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())
