"""Bell-locality certification by linear programming over deterministic strategies,
plus the octagon measurement set and its covering of noisy x-z plane measurements."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .assemblage import Assemblage, behaviour
from .behaviour import Behaviour, MeasurementSet
from .linalg import PAULI_X, PAULI_Z

MU_OCTAGON = math.cos(math.pi / 8)
DEFAULT_EPS = 1e-7
STRATEGY_CAP = 10**6
# tight feasibility so returned weights meet |Dq - p| <= eps without extra solver slack
HIGHS_OPTS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


class LPSolverError(RuntimeError):
    pass


def projector(theta: float, a: int) -> np.ndarray:
    """Pi_{a|theta} = (I + (-1)^a (cos(theta) X + sin(theta) Z)) / 2."""
    n = math.cos(theta) * PAULI_X + math.sin(theta) * PAULI_Z
    return (np.eye(2) + (-1) ** a * n) / 2


def octagon_set() -> MeasurementSet:
    thetas = [x * math.pi / 4 for x in range(4)]
    return MeasurementSet(tuple((projector(t, 0), projector(t, 1)) for t in thetas), tuple(thetas))


@dataclass(frozen=True)
class DeterministicStrategy:
    a: tuple
    b: tuple
    c: tuple


def _responses(n_settings: int, n_outcomes: int) -> np.ndarray:
    """All response functions in lexicographic order, shape (n_outcomes**n_settings, n_settings)."""
    if n_settings == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(product(range(n_outcomes), repeat=n_settings)), dtype=np.int64)


def strategy_count(dims: dict) -> int:
    return dims["nA"] ** dims["nX"] * dims["nB"] ** dims["nY"] * dims["nC"] ** dims["nZ"]


def enumerate_strategies(dims: dict, cap: int = STRATEGY_CAP) -> list[DeterministicStrategy]:
    n = strategy_count(dims)
    if n > cap:
        raise ValueError(f"{n} deterministic strategies exceed the cap of {cap}")
    ra = _responses(dims["nX"], dims["nA"])
    rb = _responses(dims["nY"], dims["nB"])
    rc = _responses(dims["nZ"], dims["nC"])
    return [DeterministicStrategy(tuple(a), tuple(b), tuple(c)) for a in ra for b in rb for c in rc]


def strategy_matrix(dims: dict, cap: int = STRATEGY_CAP) -> sparse.csc_matrix:
    """Sparse incidence D[cell, lambda] = 1 iff strategy lambda outputs cell's (a, b, c).

    Cells are flattened in (x, y, z, a, b, c) order; strategies follow
    :func:`enumerate_strategies`.
    """
    n = strategy_count(dims)
    if n > cap:
        raise ValueError(f"{n} deterministic strategies exceed the cap of {cap}")
    nX, nY, nZ, nA, nB, nC = (dims[k] for k in ("nX", "nY", "nZ", "nA", "nB", "nC"))
    ra, rb, rc = _responses(nX, nA), _responses(nY, nB), _responses(nZ, nC)
    ia, ib, ic = np.meshgrid(np.arange(len(ra)), np.arange(len(rb)), np.arange(len(rc)), indexing="ij")
    lam = ia.ravel() * (len(rb) * len(rc)) + ib.ravel() * len(rc) + ic.ravel()
    x, y, z = np.meshgrid(np.arange(nX), np.arange(nY), np.arange(nZ), indexing="ij")
    x, y, z = x.ravel(), y.ravel(), z.ravel()
    a = ra[ia.ravel()][:, x]
    b = rb[ib.ravel()][:, y]
    c = rc[ic.ravel()][:, z]
    cell = ((((x * nY + y) * nZ + z) * nA + a) * nB + b) * nC + c
    rows = cell.ravel()
    cols = np.repeat(lam, len(x))
    ncells = nX * nY * nZ * nA * nB * nC
    return sparse.csc_matrix((np.ones(len(rows)), (rows, cols)), shape=(ncells, n))


def local_bound(bell: np.ndarray) -> float:
    """min over deterministic strategies of sum_cells B * D_lambda, by exhaustive search.

    Charlie's response decouples setting by setting once Alice's and Bob's responses are
    fixed, so only Alice x Bob strategies are enumerated explicitly.
    """
    B = np.asarray(bell, dtype=float)
    nX, nY, nZ, nA, nB, nC = B.shape
    ra, rb = _responses(nX, nA), _responses(nY, nB)
    xi = np.arange(nX)
    yi = np.arange(nY)
    # G[ia, y, z, b, c] = sum_x B[x, y, z, a(x), b, c]
    G = B.transpose(0, 3, 1, 2, 4, 5)[xi, ra].sum(axis=1)
    # H[ib, ia, z, c] = sum_y G[ia, y, z, b(y), c]  (advanced indices move to the front)
    H = G[:, yi, :, rb, :].sum(axis=1)
    vals = H.min(axis=-1).sum(axis=-1)
    return float(vals.min())


@dataclass
class LocalityCertificate:
    local: bool
    eps: float
    weights: np.ndarray | None = None          # q_lambda over enumerate_strategies order
    residual: float | None = None              # max |sum q D - p|
    bell_functional: np.ndarray | None = None  # shaped like the behaviour table
    violation: float | None = None             # <B, p>, negative when nonlocal
    dims: dict = field(default_factory=dict)

    def support(self, threshold: float = 1e-9) -> list[tuple[int, float]]:
        if self.weights is None:
            return []
        idx = np.flatnonzero(self.weights > threshold)
        return [(int(i), float(self.weights[i])) for i in idx]

    def as_dict(self) -> dict:
        out = {"local": self.local, "eps": self.eps, "dims": self.dims}
        if self.weights is not None:
            out["weights"] = [float(w) for w in self.weights]
            out["support"] = [i for i, _ in self.support()]
            out["residual"] = self.residual
        if self.bell_functional is not None:
            out["bell_functional"] = [float(v) for v in self.bell_functional.ravel()]
            out["violation"] = self.violation
        return out


def is_local(p: Behaviour, eps: float = DEFAULT_EPS, cap: int = STRATEGY_CAP,
             check_tol: float = 1e-10) -> LocalityCertificate:
    """Decide whether ``p`` is a convex mixture of deterministic strategies within ``eps``.

    On infeasibility, a Bell functional B with local bound 0 (min over strategies of
    <B, D> = 0, entries in [-1, 1]) and <B, p> < 0 is returned.
    """
    problems = p.check(check_tol, max(check_tol, 1e-9))
    if problems:
        raise ValueError(f"invalid behaviour: {'; '.join(problems)}")
    dims = p.dims
    D = strategy_matrix(dims, cap)
    ncells, n = D.shape
    target = p.flat()
    A_ub = sparse.vstack([D, -D]).tocsc()
    b_ub = np.concatenate([target + eps, eps - target])
    res = linprog(np.zeros(n), A_ub=A_ub, b_ub=b_ub, A_eq=np.ones((1, n)), b_eq=[1.0],
                  bounds=(0, None), method="highs", options=HIGHS_OPTS)
    if res.status == 0:
        q = np.clip(res.x, 0, None)
        q /= q.sum()
        resid = float(np.max(np.abs(D @ q - target)))
        return LocalityCertificate(True, eps, weights=q, residual=resid, dims=dims)
    if res.status != 2:
        raise LPSolverError(f"locality LP failed: {res.message}")
    B = _bell_certificate(D, target).reshape(p.table.shape)
    # every strategy puts total weight 1 on each setting triple, so a uniform shift moves
    # the local bound to exactly 0
    n_settings = dims["nX"] * dims["nY"] * dims["nZ"]
    B = B - local_bound(B) / n_settings
    return LocalityCertificate(False, eps, bell_functional=B,
                               violation=float(B.ravel() @ target), dims=dims)


def _bell_certificate(D: sparse.csc_matrix, target: np.ndarray) -> np.ndarray:
    n = D.shape[1]
    res = linprog(target, A_ub=-D.T, b_ub=np.zeros(n), bounds=(-1, 1), method="highs",
                  options=HIGHS_OPTS)
    if res.status != 0:
        raise LPSolverError(f"Bell-functional LP failed: {res.message}")
    return res.x


@dataclass
class Covering:
    feasible: bool
    coefficients: np.ndarray | None  # c[a', x]
    residual: float | None


def cover_noisy_measurement(theta: float, mu: float, a: int = 0) -> Covering:
    """Write Pi_{a|theta}(mu) as a convex combination of the octagon projectors.

    Only Bloch vectors matter: a mixture of (I + v.sigma)/2 terms is (I + (sum c v).sigma)/2.
    """
    thetas = np.arange(4) * math.pi / 4
    verts = np.array([[(-1) ** ap * math.cos(t), (-1) ** ap * math.sin(t)]
                      for ap in range(2) for t in thetas])  # row index = a' * 4 + x
    r = (-1) ** a * mu * np.array([math.cos(theta), math.sin(theta)])
    A_eq = np.vstack([verts.T, np.ones(8)])
    b_eq = np.concatenate([r, [1.0]])
    res = linprog(np.zeros(8), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status == 2:
        return Covering(False, None, None)
    if res.status != 0:
        raise LPSolverError(f"covering LP failed: {res.message}")
    c = _polish(np.clip(res.x, 0, None), A_eq, b_eq)
    target = mu * projector(theta, a) + (1 - mu) * np.eye(2) / 2
    effects = np.array([projector(t, ap) for ap in range(2) for t in thetas])
    recon = np.einsum("k,kij->ij", c, effects)
    return Covering(True, c.reshape(2, 4), float(np.max(np.abs(recon - target))))


def _polish(c: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Re-solve the equalities exactly on the LP's support (basic solutions are unique there)."""
    supp = np.flatnonzero(c > 1e-12)
    sol, *_ = np.linalg.lstsq(A[:, supp], b, rcond=None)
    if np.all(sol >= 0):
        c = np.zeros_like(c)
        c[supp] = sol
    return c


@dataclass
class ProjectiveVerdict:
    passed: bool
    reason: str
    mu: float
    certificate: LocalityCertificate | None = None

    def as_dict(self) -> dict:
        out = {"passed": self.passed, "reason": self.reason, "mu": self.mu}
        if self.certificate is not None:
            out["certificate"] = self.certificate.as_dict()
        return out


def locality_for_all_projective(asm: Assemblage, mu: float = MU_OCTAGON,
                                eps: float = DEFAULT_EPS, check_tol: float = 1e-3) -> ProjectiveVerdict:
    """PASS certifies that add_noise(asm, mu) gives local behaviours for every projective
    measurement, by checking locality of ``asm`` on the octagon set.

    ``check_tol`` bounds how far the octagon behaviour may stray from a valid distribution
    (rounded input data) before it is rejected as malformed rather than judged by the LP.
    """
    if asm.scenario.dimA != 2:
        raise ValueError("the octagon covering argument is for qubit assemblages")
    if not asm.is_real():
        raise ValueError("blocks must be real (x-z plane) for the octagon reduction")
    if mu > MU_OCTAGON:
        return ProjectiveVerdict(False, "covering bound exceeded: mu > cos(pi/8)", mu)
    cert = is_local(behaviour(asm, octagon_set()), eps, check_tol=check_tol)
    if cert.local:
        return ProjectiveVerdict(True, "octagon behaviour is local", mu, cert)
    return ProjectiveVerdict(False, f"octagon behaviour is nonlocal (violation {cert.violation:.3g})",
                             mu, cert)
