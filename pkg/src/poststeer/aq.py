"""Almost-quantum relaxation of tripartite steering: membership and lower bounds on
steering Tsirelson bounds, both as semidefinite programs over the moment matrix."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import cvxpy as cp
import numpy as np

from .assemblage import Assemblage, Scenario, SteeringFunctional, evaluate_functional, validate_tripartite_ns
from .moments import EMPTY, MomentStructure, Word, moment_structure, word_set

SOLVER = "CLARABEL"
SOLVER_OPTS = {"tol_feas": 1e-8, "tol_gap_abs": 1e-8, "tol_gap_rel": 1e-8}
_settings = {"solver": SOLVER, "options": dict(SOLVER_OPTS)}
log = logging.getLogger(__name__)
PSD_TOL = 1e-8
MEMBERSHIP_TOL = 1e-7


class SolverError(RuntimeError):
    """The conic solver failed; distinct from a certified infeasibility."""


def configure_solver(name: str = SOLVER, **options) -> None:
    """Select the cvxpy conic solver and its options for every program in the package."""
    _settings["solver"] = name
    _settings["options"] = options if options or name != SOLVER else dict(SOLVER_OPTS)


def _solve(problem: cp.Problem, dump_path=None) -> None:
    """Solve, accepting near-optimal termination (residuals stalled just above tolerance).

    Such results are logged, and callers carry ``problem.status`` along; every
    certificate the package emits is re-checked independently of the solver status.
    """
    if dump_path is not None:
        Path(dump_path).write_text(json.dumps(conic_dump(problem)))
    try:
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", message="Solution may be inaccurate")
            problem.solve(solver=_settings["solver"], **_settings["options"])
    except cp.SolverError as exc:
        raise SolverError(str(exc)) from exc
    if problem.status == cp.OPTIMAL_INACCURATE:
        log.info("conic solver stopped near the requested tolerance")
    elif problem.status != cp.OPTIMAL:
        raise SolverError(f"conic solver status: {problem.status}")


def conic_dump(problem: cp.Problem) -> dict:
    """Standard-form data (min c'x s.t. b - Ax in K) with A in sparse triplet form."""
    data, _, _ = problem.get_problem_data(_settings["solver"])
    A = data["A"].tocoo()
    dims = data["dims"]
    return {
        "form": "minimize c'x subject to b - A x in K",
        "c": [float(v) for v in data["c"]],
        "b": [float(v) for v in data["b"]],
        "A": {"shape": list(A.shape), "rows": A.row.tolist(), "cols": A.col.tolist(),
              "vals": A.data.tolist()},
        "cones": {"zero": int(dims.zero), "nonneg": int(dims.nonneg),
                  "soc": [int(k) for k in dims.soc], "psd": [int(k) for k in dims.psd]},
    }


def first_row_functional(F: SteeringFunctional) -> list[np.ndarray]:
    """Operators G_w with sum_w tr(G_w Gamma(empty, w)) = sum tr(F sigma) on NS assemblages.

    The last outcome of every setting is eliminated through the marginals, so G is
    indexed by the word set.
    """
    sc = F.scenario
    f = F.operators
    L, M = sc.outB - 1, sc.outC - 1
    out = [f[L, M].sum(axis=(0, 1))]
    for y in range(sc.setB):
        for b in range(L):
            out.append((f[b, M, y] - f[L, M, y]).sum(axis=0))
    for z in range(sc.setC):
        for c in range(M):
            out.append((f[L, c, :, z] - f[L, M, :, z]).sum(axis=0))
    for y in range(sc.setB):
        for b in range(L):
            for z in range(sc.setC):
                for c in range(M):
                    out.append(f[b, c, y, z] - f[b, M, y, z] - f[L, c, y, z] + f[L, M, y, z])
    return out


def functional_from_first_row(sc: Scenario, G: list[np.ndarray]) -> SteeringFunctional:
    """Inverse of :func:`first_row_functional` up to terms that vanish on NS assemblages.

    Each first-row element is a sum of blocks at fixed settings: rho = sum_bc sigma_{bc|00},
    sigma^B_{b|y} = sum_c sigma_{bc|y0} and sigma^C_{c|z} = sum_b sigma_{bc|0z}.
    """
    ops = np.zeros(sc.block_shape, dtype=complex)
    words = word_set(sc)
    for g, w in zip(G, words):
        if w == EMPTY:
            ops[:, :, 0, 0] += g
        elif w.kind == "B":
            (b, y), = w.bob
            ops[b, :, y, 0] += g
        elif w.kind == "C":
            (c, z), = w.charlie
            ops[:, c, 0, z] += g
        else:
            (b, y), = w.bob
            (c, z), = w.charlie
            ops[b, c, y, z] += g
    return SteeringFunctional(sc, ops)


def first_row_of(asm: Assemblage) -> list[np.ndarray]:
    """Gamma(empty, w) for every word, read off a (near) no-signalling assemblage."""
    sc = asm.scenario
    rows = []
    sb, sc_marg = asm.bob_marginals(), asm.charlie_marginals()
    for w in word_set(sc):
        if w == EMPTY:
            rows.append(asm.reduced_state())
        elif w.kind == "B":
            (b, y), = w.bob
            rows.append(sb[b, y])
        elif w.kind == "C":
            (c, z), = w.charlie
            rows.append(sc_marg[c, z])
        else:
            (b, y), = w.bob
            (c, z), = w.charlie
            rows.append(asm.blocks[b, c, y, z])
    return rows


def assemblage_from_first_row(sc: Scenario, rows: list[np.ndarray]) -> Assemblage:
    """Complete the first row of Gamma to a full assemblage using the marginal sums."""
    d = sc.dimA
    L, M = sc.outB - 1, sc.outC - 1
    words = word_set(sc)
    row = dict(zip(words, rows))
    rho = row[EMPTY]
    sB = np.zeros((sc.outB, sc.setB, d, d), dtype=complex)
    sC = np.zeros((sc.outC, sc.setC, d, d), dtype=complex)
    for y in range(sc.setB):
        for b in range(L):
            sB[b, y] = row[Word(((b, y),), ())]
        sB[L, y] = rho - sB[:L, y].sum(axis=0)
    for z in range(sc.setC):
        for c in range(M):
            sC[c, z] = row[Word((), ((c, z),))]
        sC[M, z] = rho - sC[:M, z].sum(axis=0)
    blocks = np.zeros(sc.block_shape, dtype=complex)
    for y in range(sc.setB):
        for z in range(sc.setC):
            for b in range(L):
                for c in range(M):
                    blocks[b, c, y, z] = row[Word(((b, y),), ((c, z),))]
                blocks[b, M, y, z] = sB[b, y] - blocks[b, :M, y, z].sum(axis=0)
            for c in range(sc.outC):
                blocks[L, c, y, z] = sC[c, z] - blocks[:L, c, y, z].sum(axis=0)
    return Assemblage(sc, (blocks + np.conj(np.swapaxes(blocks, -1, -2))) / 2)


class MomentSDP:
    """cvxpy model of a moment matrix with all structural equalities imposed.

    ``shift`` adds a scalar t with Gamma - t I >= 0 in place of Gamma >= 0, used to
    measure how deep inside the PSD cone a pinned moment matrix can be pushed.
    """

    def __init__(self, scenario: Scenario, real: bool = True, shift: bool = False):
        self.scenario = scenario
        self.real = real
        self.structure: MomentStructure = moment_structure(scenario)
        d = scenario.dimA
        n = self.structure.size * d
        self.gamma = cp.Variable((n, n), symmetric=True) if real else cp.Variable((n, n), hermitian=True)
        self.t = cp.Variable() if shift else None
        if shift:
            self.constraints = [self.gamma - self.t * np.eye(n) >> 0, self.t <= 1]
        else:
            self.constraints = [self.gamma >> 0]
        st = self.structure
        for i, j in st.zeros:
            if i <= j:
                self.constraints.append(self.block(i, j) == 0)
        for (i, j), (i0, j0, adj) in st.links.items():
            if i <= j:
                rep = self.block(i0, j0)
                self.constraints.append(self.block(i, j) == (rep.H if adj else rep))
        for i, j in st.hermitian:
            blk = self.block(i, j)
            self.constraints.append(blk == blk.H)

    def block(self, i: int, j: int):
        d = self.scenario.dimA
        return self.gamma[i * d:(i + 1) * d, j * d:(j + 1) * d]

    def first_row(self) -> list:
        return [self.block(0, j) for j in range(self.structure.size)]

    def normalisation(self) -> list:
        tr = cp.trace(self.block(0, 0))
        return [(tr if self.real else cp.real(tr)) == 1]

    def first_row_value(self) -> list[np.ndarray]:
        g = self.gamma.value
        d = self.scenario.dimA
        return [np.asarray(g[:d, j * d:(j + 1) * d], dtype=complex) for j in range(self.structure.size)]


def _pairing(G, X, real: bool):
    expr = cp.trace(G @ X)
    return expr if real else cp.real(expr)


def _is_real(*arrays) -> bool:
    return all(np.max(np.abs(np.imag(a)), initial=0.0) <= 1e-12 for a in arrays)


@dataclass
class BoundResult:
    value: float
    assemblage: Assemblage
    gamma: np.ndarray
    status: str

    def as_dict(self) -> dict:
        from .io import encode_assemblage

        return {"beta_aq": self.value, "status": self.status,
                "assemblage": encode_assemblage(self.assemblage)}


class AlmostQuantumBound:
    """Reusable minimiser of a steering functional over the almost-quantum set.

    The functional enters as a cvxpy parameter, so repeated calls skip recompilation.
    """

    def __init__(self, scenario: Scenario, real: bool = True):
        self.scenario = scenario
        self.real = real
        self.sdp = MomentSDP(scenario, real)
        d = scenario.dimA
        kw = {"symmetric": True} if real else {"hermitian": True}
        self.params = [cp.Parameter((d, d), **kw) for _ in range(self.sdp.structure.size)]
        objective = sum(_pairing(P, X, real) for P, X in zip(self.params, self.sdp.first_row()))
        self.problem = cp.Problem(cp.Minimize(objective), self.sdp.constraints + self.sdp.normalisation())

    def __call__(self, F: SteeringFunctional, dump_path=None) -> BoundResult:
        if F.scenario != self.scenario:
            raise ValueError("functional scenario does not match this bound")
        G = first_row_functional(F)
        if self.real and not _is_real(*G):
            raise ValueError("complex functional passed to a real-symmetric formulation")
        # solve with unit-sized data and scale the optimum back
        scale = max(float(np.max(np.abs(g))) for g in G) or 1.0
        for P, g in zip(self.params, G):
            g = (g + g.conj().T) / (2 * scale)
            P.value = g.real if self.real else g
        _solve(self.problem, dump_path)
        asm = assemblage_from_first_row(self.scenario, self.sdp.first_row_value())
        return BoundResult(scale * float(self.problem.value), asm, np.asarray(self.sdp.gamma.value),
                           self.problem.status)


def aq_bound(F: SteeringFunctional, real: bool | None = None, dump_path=None) -> BoundResult:
    """min sum tr(F sigma) over almost-quantum assemblages; a lower bound on the quantum minimum."""
    if real is None:
        real = _is_real(F.operators)
    return AlmostQuantumBound(F.scenario, real)(F, dump_path)


@dataclass
class MembershipResult:
    member: bool
    min_eig_slack: float
    gamma: np.ndarray | None = None
    certificate: SteeringFunctional | None = None
    separation: float | None = None
    certificate_bound: float | None = None
    certificate_value: float | None = None
    distance: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "IN_AQ" if self.member else "NOT_IN_AQ"

    def as_dict(self) -> dict:
        from .io import encode_functional

        out = {"status": self.status, "min_eig_slack": self.min_eig_slack}
        if self.gamma is not None:
            out["gamma_min_eigenvalue"] = float(np.linalg.eigvalsh(self.gamma).min())
        if self.certificate is not None:
            out.update(separation=self.separation, certificate_bound=self.certificate_bound,
                       certificate_value=self.certificate_value, distance=self.distance,
                       certificate=encode_functional(self.certificate))
        return out


def membership_sdp(asm: Assemblage, tol: float = MEMBERSHIP_TOL, ns_tol: float = 1e-6,
                   real: bool | None = None, dump_path=None) -> MembershipResult:
    """Decide whether ``asm`` lies in the almost-quantum set.

    First maximise t with Gamma - t I >= 0 and the first row pinned to ``asm``; the
    assemblage is a member iff t >= -tol. Otherwise find the nearest member in the
    summed nuclear norm of first-row entries. The dual of that problem is a steering
    functional whose first-row operators have spectral norm <= 1; its separation is
    re-measured with :func:`aq_bound`.
    """
    report = validate_tripartite_ns(asm, ns_tol)
    if not report.passed:
        raise ValueError(f"assemblage fails no-signalling checks: {report.failed()}")
    sc = asm.scenario
    if real is None:
        real = asm.is_real()
    target = first_row_of(asm)
    if real:
        target = [t.real for t in target]

    pinned = MomentSDP(sc, real, shift=True)
    cons = pinned.constraints + [X == T for X, T in zip(pinned.first_row(), target)]
    prob = cp.Problem(cp.Maximize(pinned.t), cons)
    _solve(prob, dump_path)
    slack = float(pinned.t.value)
    if slack >= -tol:
        return MembershipResult(True, slack, gamma=np.asarray(pinned.gamma.value))

    free = MomentSDP(sc, real)
    d = sc.dimA
    kw = {"symmetric": True} if real else {"hermitian": True}
    deltas = [cp.Variable((d, d), **kw) for _ in target]
    links = [D == X - T for D, X, T in zip(deltas, free.first_row(), target)]
    dist = cp.Problem(cp.Minimize(sum(cp.normNuc(D) for D in deltas)),
                      free.constraints + free.normalisation() + links)
    _solve(dist)
    G = [-np.asarray(c.dual_value, dtype=complex) for c in links]
    G = [(g + g.conj().T) / 2 for g in G]
    cert = functional_from_first_row(sc, G)
    bound = aq_bound(cert, real=real).value
    value = evaluate_functional(cert, asm)
    return MembershipResult(False, slack, certificate=cert, separation=bound - value,
                            certificate_bound=bound, certificate_value=value,
                            distance=float(dist.value))
