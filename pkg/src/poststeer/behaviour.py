"""Probability tables p(abc|xyz) and the measurement sets Alice uses to produce them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import hermiticity_error, min_eigenvalue

PROB_TOL = 1e-10


@dataclass(frozen=True)
class Behaviour:
    """Conditional distribution stored as ``table[x, y, z, a, b, c]``.

    The same axis order is used for the flattened ``p`` array in JSON.
    """

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 6:
            raise ValueError(f"behaviour table must have 6 axes (x,y,z,a,b,c), got {t.ndim}")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def dims(self) -> dict[str, int]:
        nX, nY, nZ, nA, nB, nC = self.table.shape
        return {"nX": nX, "nY": nY, "nZ": nZ, "nA": nA, "nB": nB, "nC": nC}

    def check(self, tol: float = PROB_TOL, ns_tol: float = 1e-9) -> list[str]:
        """Return a list of violated invariants (empty when the table is a valid NS behaviour)."""
        problems = []
        t = self.table
        if t.min() < -tol:
            problems.append(f"negative probability {t.min():.3g}")
        norm = t.sum(axis=(3, 4, 5))
        if np.max(np.abs(norm - 1)) > tol:
            problems.append(f"normalisation off by {np.max(np.abs(norm - 1)):.3g}")
        # marginal of each party must not depend on the other parties' settings
        for setting_axis, party in enumerate("ABC"):
            marg = t.sum(axis=setting_axis + 3)
            dev = np.max(np.abs(marg - marg.take([0], axis=setting_axis)))
            if dev > ns_tol:
                problems.append(f"party {party} signals through its setting: {dev:.3g}")
        return problems

    def flat(self) -> np.ndarray:
        return self.table.ravel()


@dataclass(frozen=True)
class MeasurementSet:
    """A list of POVMs on Alice's system; ``povms[x][a]`` is the effect for outcome a of setting x."""

    povms: tuple
    labels: tuple = field(default=())

    def __post_init__(self):
        effects = np.array([[np.asarray(e, dtype=complex) for e in povm] for povm in self.povms])
        if effects.ndim != 4:
            raise ValueError("all POVMs must have the same number of outcomes and dimension")
        effects.setflags(write=False)
        object.__setattr__(self, "povms", effects)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(len(effects))))

    @property
    def effects(self) -> np.ndarray:
        """Array ``E[x, a]`` of shape (nX, nA, d, d)."""
        return self.povms

    def check(self, tol: float = 1e-10) -> None:
        validate_povms(self.povms, tol)


def validate_povms(effects: np.ndarray | Sequence, tol: float = 1e-10) -> np.ndarray:
    """Raise ``ValueError`` unless every POVM is Hermitian, PSD and sums to the identity."""
    e = np.asarray(effects, dtype=complex)
    if e.ndim != 4:
        raise ValueError("expected effects indexed as [x][a] -> matrix")
    d = e.shape[-1]
    if hermiticity_error(e) > tol:
        raise ValueError("POVM element is not Hermitian")
    if min_eigenvalue(e.reshape(-1, d, d)) < -tol:
        raise ValueError("POVM element is not positive semidefinite")
    completeness = np.max(np.abs(e.sum(axis=1) - np.eye(d)))
    if completeness > tol:
        raise ValueError(f"incomplete POVM: sum of effects deviates from identity by {completeness:.3g}")
    return e
