"""Randomised search for post-quantum assemblages whose projective behaviours are all local.

Each candidate functional F is scored by the critical visibility mu at which its best
octagon-local assemblage, after depolarisation, stops beating the almost-quantum bound.
A candidate with mu <= cos(pi/8) is a hit: the noisy assemblage is post-quantum, yet every
projective measurement on it gives a local behaviour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .aq import AlmostQuantumBound, BoundResult, SolverError, _solve, membership_sdp
from .assemblage import (Assemblage, MinimalFunctional, Scenario, SteeringFunctional,
                         add_noise, evaluate_functional, expand_minimal, minimal_form,
                         validate_tripartite_ns)
from .locality import (MU_OCTAGON, locality_for_all_projective,
                       octagon_set, strategy_matrix)
from .assemblage import behaviour

SUCCESS = "SUCCESS"
DIAGNOSTIC = "DIAGNOSTIC"
DEFAULT_SCENARIO = Scenario(2)
BEAT_MARGIN = 1e-6  # relative gap below beta_aq that counts as beating it (solver noise headroom)


@dataclass(frozen=True)
class SearchConfig:
    rng_seed: int = 0
    max_restarts: int = 500
    max_descent_steps: int = 200
    step_size: float = 0.05
    shrink: float = 0.5
    min_step: float = 1e-6
    fd_step: float = 1e-3
    mu_target: float = MU_OCTAGON
    symmetrize: bool = True
    objective: str = "gap"         # "gap": value at mu_target minus beta_aq; "mu": critical mu
    gradient: str = "envelope"     # "envelope": exact subgradient; "fd": forward differences
    gap_margin: float = 1e-4       # required gap below beta_aq per unit sum ||F_bcyz||_F
    initial: MinimalFunctional | None = None
    ns_tol: float = 1e-7
    lp_eps: float = 1e-7

    def __post_init__(self):
        if not 0 < self.mu_target <= 1:
            raise ValueError("mu_target must lie in (0, 1]")
        if min(self.step_size, self.min_step, self.fd_step) <= 0 or not 0 < self.shrink < 1:
            raise ValueError("step sizes must be positive and the shrink factor in (0, 1)")
        if self.max_restarts < 0 or self.max_descent_steps < 0:
            raise ValueError("budgets must be non-negative")
        if self.objective not in ("mu", "gap"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.gradient not in ("envelope", "fd"):
            raise ValueError(f"unknown gradient {self.gradient!r}")
        if self.gap_margin < 0:
            raise ValueError("gap_margin must be non-negative")


# ---------------------------------------------------------------- constrained program

@dataclass
class ConstrainedOptimum:
    beta: float
    assemblage: Assemblage
    weights: np.ndarray | None   # local weights over strategy_matrix columns
    status: str


class ConstrainedMinimum:
    """min sum tr(F sigma) over real NS assemblages, optionally with octagon-local behaviour.

    The functional is a cvxpy parameter so one compiled problem serves a whole search.
    """

    def __init__(self, scenario: Scenario = DEFAULT_SCENARIO, local: bool = True):
        if scenario.dimA != 2:
            raise ValueError("the locality constraint uses qubit octagon measurements")
        self.scenario = scenario
        self.local = local
        keys = list(scenario.keys())
        self.keys = keys
        self.S = {k: cp.Variable((2, 2), symmetric=True) for k in keys}
        self.P = {k: cp.Parameter((2, 2), symmetric=True) for k in keys}
        sc = scenario
        cons = [self.S[k] >> 0 for k in keys]
        for y in range(sc.setB):
            for z in range(sc.setC):
                blocks = [self.S[b, c, y, z] for b in range(sc.outB) for c in range(sc.outC)]
                cons.append(cp.trace(sum(blocks)) == 1)
                for c in range(sc.outC):
                    cons.append(sum(self.S[b, c, y, z] for b in range(sc.outB))
                                == sum(self.S[b, c, 0, z] for b in range(sc.outB)))
                for b in range(sc.outB):
                    cons.append(sum(self.S[b, c, y, z] for c in range(sc.outC))
                                == sum(self.S[b, c, y, 0] for c in range(sc.outC)))
        self.q = None
        if local:
            effects = octagon_set().effects
            dims = {"nX": effects.shape[0], "nA": effects.shape[1], "nY": sc.setB,
                    "nZ": sc.setC, "nB": sc.outB, "nC": sc.outC}
            D = strategy_matrix(dims)
            # p[x,y,z,a,b,c] = tr(E_{a|x} S_{bcyz}) = sum_ij E[j,i] S[i,j]
            index = {k: n for n, k in enumerate(keys)}
            M = np.zeros((D.shape[0], 4 * len(keys)))
            row = 0
            for x in range(dims["nX"]):
                for y in range(sc.setB):
                    for z in range(sc.setC):
                        for a in range(dims["nA"]):
                            for b in range(sc.outB):
                                for c in range(sc.outC):
                                    col = 4 * index[b, c, y, z]
                                    M[row, col:col + 4] = effects[x, a].real.T.ravel()
                                    row += 1
            s = cp.hstack([cp.reshape(self.S[k], (4,), order="C") for k in keys])
            self.q = cp.Variable(D.shape[1], nonneg=True)
            cons += [cp.sum(self.q) == 1, D @ self.q == M @ s]
        objective = sum(cp.trace(self.P[k] @ self.S[k]) for k in keys)
        self.problem = cp.Problem(cp.Minimize(objective), cons)

    def __call__(self, F: SteeringFunctional, dump_path=None) -> ConstrainedOptimum:
        if F.scenario != self.scenario:
            raise ValueError("functional scenario does not match this program")
        ops = np.asarray(F.operators)
        if np.max(np.abs(ops.imag), initial=0.0) > 1e-12:
            raise ValueError("the constrained program takes real functionals")
        # solve with unit-sized data; the optimiser is scale invariant
        scale = float(np.max(np.abs(ops))) or 1.0
        for k in self.keys:
            m = ops[k].real / scale
            self.P[k].value = (m + m.T) / 2
        try:
            _solve(self.problem, dump_path)
        except SolverError as exc:
            if self.problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
                # the maximally mixed, uniformly random assemblage is always feasible
                raise AssertionError("constrained program reported infeasible") from exc
            raise
        blocks = np.zeros(self.scenario.block_shape)
        for k in self.keys:
            v = self.S[k].value
            blocks[k] = (v + v.T) / 2
        q = None if self.q is None else np.clip(self.q.value, 0, None)
        asm = Assemblage(self.scenario, blocks)
        return ConstrainedOptimum(evaluate_functional(F, asm), asm, q, self.problem.status)


def constrained_min_sdp(F: SteeringFunctional, dump_path=None) -> ConstrainedOptimum:
    return ConstrainedMinimum(F.scenario, local=True)(F, dump_path)


def noisy_functional(F: SteeringFunctional, mu: float) -> SteeringFunctional:
    """F' with sum tr(F' sigma) = sum tr(F sigma(mu)) for every qubit assemblage."""
    ops = np.asarray(F.operators)
    tr = np.trace(ops, axis1=-2, axis2=-1)
    return SteeringFunctional(F.scenario, mu * ops + (1 - mu) * tr[..., None, None] * np.eye(2) / 2)


# ---------------------------------------------------------------- critical visibility

@dataclass(frozen=True)
class CriticalMu:
    mu: float
    v1: float
    v0: float
    in_range: bool

    def value_at(self, mu: float) -> float:
        return mu * self.v1 + (1 - mu) * self.v0


def critical_mu(F: SteeringFunctional, asm: Assemblage, beta_aq: float) -> CriticalMu:
    """Visibility mu with evaluate(F, add_noise(asm, mu)) = beta_aq.

    The value is affine in mu, from v0 (fully depolarised) at mu = 0 to v1 at mu = 1.
    ``in_range`` reports whether mu lies in (0, 1]; the raw ratio is always returned.
    """
    v1 = evaluate_functional(F, asm)
    v0 = evaluate_functional(F, add_noise(asm, 0.0))
    if abs(v1 - v0) <= 1e-14 * max(1.0, abs(v0)):
        raise ValueError("functional takes the same value on the assemblage and its depolarisation")
    mu = (beta_aq - v0) / (v1 - v0)
    return CriticalMu(float(mu), v1, v0, bool(0 < mu <= 1))


# ---------------------------------------------------------------- functional parametrisation

class _Coordinates:
    """Real coordinates of real-symmetric minimal-form functionals.

    With ``symmetric`` the Charlie operators copy Bob's and F_YZ is symmetric in (y, z).
    """

    def __init__(self, sc: Scenario, symmetric: bool):
        if symmetric and (sc.setB != sc.setC or sc.outB != sc.outC):
            raise ValueError("Bob-Charlie symmetrisation needs matching parties")
        self.sc, self.symmetric = sc, symmetric
        self.yz = [(y, z) for y in range(sc.setB) for z in range(sc.setC) if not symmetric or y <= z]
        self.n_ops = 1 + sc.setB + (0 if symmetric else sc.setC) + len(self.yz)

    @property
    def size(self) -> int:
        return 3 * self.n_ops

    @staticmethod
    def _op(v) -> np.ndarray:
        return np.array([[v[0], v[1]], [v[1], v[2]]])

    def decode(self, theta: np.ndarray) -> MinimalFunctional:
        ops = [self._op(theta[3 * i:3 * i + 3]) for i in range(self.n_ops)]
        sc = self.sc
        F_A = ops[0]
        F_B = np.array(ops[1:1 + sc.setB])
        rest = ops[1 + sc.setB:]
        if self.symmetric:
            F_C = F_B.copy()
        else:
            F_C, rest = np.array(rest[:sc.setC]), rest[sc.setC:]
        F_YZ = np.zeros((sc.setB, sc.setC, 2, 2))
        for (y, z), op in zip(self.yz, rest):
            F_YZ[y, z] = op
            if self.symmetric:
                F_YZ[z, y] = op
        return MinimalFunctional(F_A, F_B, F_C, F_YZ)

    def encode(self, Fm: MinimalFunctional) -> np.ndarray:
        def vec(m):
            m = np.asarray(m).real
            return [m[0, 0], (m[0, 1] + m[1, 0]) / 2, m[1, 1]]

        ops = [Fm.F_A, *Fm.F_B]
        if not self.symmetric:
            ops += list(Fm.F_C)
        ops += [Fm.F_YZ[y][z] for y, z in self.yz]
        return np.array([c for op in ops for c in vec(op)])


def functional_norm(F: SteeringFunctional) -> float:
    """sum_bcyz ||F_bcyz||_F, the scale fixed to 1 for sampled functionals."""
    return float(np.sum(np.linalg.norm(np.asarray(F.operators), axis=(-2, -1))))


def _normalised(F: SteeringFunctional) -> SteeringFunctional:
    total = functional_norm(F)
    if total == 0:
        raise ValueError("zero functional")
    return F * (1 / total)


def random_functional(rng: np.random.Generator, sc: Scenario = DEFAULT_SCENARIO,
                      symmetrize: bool = True) -> SteeringFunctional:
    """Standard-normal real-symmetric operators per cell, scaled to sum ||F_bcyz||_F = 1."""
    g = rng.standard_normal(sc.block_shape)
    ops = (g + np.swapaxes(g, -1, -2)) / 2
    F = SteeringFunctional(sc, ops)
    if symmetrize:
        F = F.symmetrized()
    return _normalised(F)


# ---------------------------------------------------------------- search driver

@dataclass
class Evaluation:
    """A candidate functional with its bound and its best octagon-local assemblage.

    ``optimum`` minimises the functional on sigma(mu_eval); the critical visibility and
    the gap are both measured on that assemblage.
    """

    functional: SteeringFunctional
    bound: BoundResult
    optimum: ConstrainedOptimum
    mu_eval: float
    crit: CriticalMu | None
    gap: float        # (evaluate(F, sigma(mu_target)) - beta_aq) / ||F||

    @property
    def beta_aq(self) -> float:
        return self.bound.value

    @property
    def beta(self) -> float:
        """Value on the noiseless optimiser sigma."""
        return evaluate_functional(self.functional, self.optimum.assemblage)

    @property
    def beats_aq(self) -> bool:
        return self.crit is not None

    def score(self, objective: str) -> float:
        if objective == "gap":
            return self.gap
        return self.crit.mu if self.crit is not None else math.inf

    def hit(self, cfg: SearchConfig) -> bool:
        return self.crit is not None and self.crit.mu <= cfg.mu_target and self.gap <= -cfg.gap_margin

    def record(self, step: int) -> dict:
        return {"step": step, "mu": None if self.crit is None else self.crit.mu,
                "gap": self.gap, "beta_aq": self.beta_aq}


@dataclass
class SearchResult:
    status: str
    functional: SteeringFunctional
    assemblage: Assemblage | None          # de-noised optimiser sigma
    noisy_assemblage: Assemblage | None    # sigma* = sigma(mu_target), or sigma(mu_critical)
    beta: float | None                     # evaluate(F, sigma*)
    beta_aq: float | None
    mu_critical: float | None
    mu_target: float
    restart: int
    descent_steps: int
    certificates: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        from .io import encode_assemblage, encode_functional, encode_minimal

        out = {"status": self.status, "restart": self.restart, "descent_steps": self.descent_steps,
               "mu_target": self.mu_target, "mu_critical": self.mu_critical,
               "beta": self.beta, "beta_aq": self.beta_aq,
               "functional": encode_functional(self.functional),
               "functional_minimal": encode_minimal(minimal_form(self.functional)),
               "history": self.history, "certificates": self.certificates}
        if self.assemblage is not None:
            out["assemblage"] = encode_assemblage(self.assemblage)
            out["noisy_assemblage"] = encode_assemblage(self.noisy_assemblage)
        return out

    def to_json(self) -> str:
        from .io import dumps

        return dumps(self.to_dict())


class _Engine:
    """Compiled programs shared by every candidate of one search."""

    def __init__(self, cfg: SearchConfig, sc: Scenario):
        self.cfg = cfg
        self.aq = AlmostQuantumBound(sc, real=True)
        self.local = ConstrainedMinimum(sc, local=True)
        self.free = ConstrainedMinimum(sc, local=False)

    def evaluate(self, F: SteeringFunctional, mu_eval: float = 1.0) -> Evaluation:
        bound = self.aq(F)
        opt = self.local(F if mu_eval == 1.0 else noisy_functional(F, mu_eval))
        sigma = opt.assemblage
        bq = bound.value
        crit = None
        if evaluate_functional(F, sigma) < bq - BEAT_MARGIN * max(1.0, abs(bq)):
            try:
                crit = critical_mu(F, sigma, bq)
            except ValueError:
                crit = None
        value_t = evaluate_functional(F, add_noise(sigma, self.cfg.mu_target))
        return Evaluation(F, bound, opt, mu_eval, crit, (value_t - bq) / functional_norm(F))

    def ns_minimum(self, F: SteeringFunctional) -> float:
        return self.free(F).beta


def _descend(engine: _Engine, coords: _Coordinates, ev: Evaluation, cfg: SearchConfig,
             history: list) -> tuple[Evaluation, int]:
    if cfg.gradient == "fd":
        return _descend_fd(engine, coords, ev, cfg, history)
    return _descend_envelope(engine, coords, ev, cfg, history)


def _mu_eval(cfg: SearchConfig) -> float:
    return cfg.mu_target if cfg.objective == "gap" else 1.0


def _canonical(F: SteeringFunctional, coords: _Coordinates) -> SteeringFunctional:
    """Symmetrise if required, fix the gauge through the minimal form and the scale."""
    return _normalised(expand_minimal(coords.decode(coords.encode(minimal_form(F)))))


def _descend_fd(engine, coords, ev, cfg, history):
    """Backtracking descent along forward-difference gradients in minimal-form coordinates."""
    theta = coords.encode(minimal_form(ev.functional))
    step = cfg.step_size
    steps = 0
    mu_eval = _mu_eval(cfg)

    def candidate(t):
        return _normalised(expand_minimal(coords.decode(t)))

    while steps < cfg.max_descent_steps and not ev.hit(cfg):
        f0 = ev.score(cfg.objective)
        grad = np.zeros_like(theta)
        for i in range(theta.size):
            t = theta.copy()
            t[i] += cfg.fd_step
            fi = engine.evaluate(candidate(t), mu_eval).score(cfg.objective)
            grad[i] = (fi - f0) / cfg.fd_step if math.isfinite(fi) else 0.0
        norm = np.linalg.norm(grad)
        if norm == 0:
            break
        steps += 1
        while step >= cfg.min_step:
            t = theta - step * np.linalg.norm(theta) * grad / norm
            trial = engine.evaluate(candidate(t), mu_eval)
            if trial.score(cfg.objective) < f0:
                theta, ev = coords.encode(minimal_form(trial.functional)), trial
                history.append(ev.record(steps))
                step = min(step / cfg.shrink, cfg.step_size)
                break
            step *= cfg.shrink
        else:
            break
    return ev, steps


def _descend_envelope(engine, coords, ev, cfg, history):
    """Subgradient descent with steps step_size / sqrt(k); the best iterate is kept.

    beta_aq(F) and the locally constrained minimum are minima of functionals linear in F,
    so their gradients are the optimisers themselves. Both objectives then descend along
    sigma_aq - sigma(mu), with mu the critical or the target visibility. The iteration is
    not monotone, since the objectives have kinks where the optimisers jump.
    """
    mu_eval = _mu_eval(cfg)
    best, cur = ev, ev
    steps = 0
    for k in range(cfg.max_descent_steps):
        if best.hit(cfg):
            break
        if cfg.objective == "mu":
            if cur.crit is None:
                cur = best
            mu = min(1.0, max(cur.crit.mu, 0.0))
        else:
            mu = cfg.mu_target
        d = cur.bound.assemblage.blocks.real - add_noise(cur.optimum.assemblage, mu).blocks.real
        d = (d + np.swapaxes(d, -1, -2)) / 2
        dnorm = float(np.sum(np.linalg.norm(d, axis=(-2, -1))))
        eta = cfg.step_size / math.sqrt(k + 1)
        if dnorm == 0 or eta < cfg.min_step:
            break
        ops = np.asarray(cur.functional.operators).real + eta * d / dnorm
        cur = engine.evaluate(_canonical(SteeringFunctional(cur.functional.scenario, ops), coords),
                              mu_eval)
        steps = k + 1
        history.append(cur.record(steps))
        if cur.score(cfg.objective) < best.score(cfg.objective):
            best = cur
    return best, steps


def _finish(engine: _Engine, ev: Evaluation, cfg: SearchConfig, restart: int, steps: int,
            history: list) -> SearchResult:
    """Re-optimise for the target visibility and re-verify all three certificates."""
    F = ev.functional
    polished = engine.local(noisy_functional(F, cfg.mu_target))
    sigma = polished.assemblage
    crit = critical_mu(F, sigma, ev.beta_aq)
    star = add_noise(sigma, cfg.mu_target)
    ns = validate_tripartite_ns(star, cfg.ns_tol)
    member = membership_sdp(star, ns_tol=cfg.ns_tol)
    verdict = locality_for_all_projective(sigma, cfg.mu_target, eps=cfg.lp_eps)
    free = engine.ns_minimum(F)
    beta = evaluate_functional(F, star)
    ok = (ns.passed and not member.member and verdict.passed and crit.mu <= cfg.mu_target
          and beta < ev.beta_aq and free <= beta + 1e-6)
    certs = {"no_signalling": ns.as_dict(), "almost_quantum": member.as_dict(),
             "locality": verdict.as_dict(),
             "affine": {"v1": crit.v1, "v0": crit.v0,
                        "value_at_mu_critical": evaluate_functional(F, add_noise(sigma, crit.mu))},
             "ns_minimum": free}
    return SearchResult(SUCCESS if ok else DIAGNOSTIC, F, sigma, star, beta, ev.beta_aq,
                        crit.mu, cfg.mu_target, restart, steps, certs, history)


def _diagnostic(ev: Evaluation, cfg: SearchConfig, restart: int, steps: int,
                history: list) -> SearchResult:
    F = ev.functional
    sigma = ev.optimum.assemblage
    if ev.crit is None:
        return SearchResult(DIAGNOSTIC, F, sigma, sigma, evaluate_functional(F, sigma),
                            ev.beta_aq, None, cfg.mu_target, restart, steps,
                            {}, history)
    mu = min(1.0, max(ev.crit.mu, 0.0))
    star = add_noise(sigma, mu)
    certs = {"affine": {"v1": ev.crit.v1, "v0": ev.crit.v0,
                        "value_at_mu_critical": evaluate_functional(F, star)}}
    return SearchResult(DIAGNOSTIC, F, sigma, star, evaluate_functional(F, star), ev.beta_aq,
                        ev.crit.mu, cfg.mu_target, restart, steps, certs, history)


def run_search(cfg: SearchConfig, sc: Scenario = DEFAULT_SCENARIO, progress=None) -> SearchResult:
    """Restart loop: sample, score, descend; return the first verified hit.

    A sampled functional is kept only if its octagon-local optimum beats beta_aq outright;
    otherwise the search restarts. Restart ``k`` draws from ``default_rng([seed, k])``, so
    each restart is reproducible on its own. Without a verified hit, the candidate with
    the lowest critical visibility is returned as DIAGNOSTIC (earliest restart on ties).
    """
    engine = _Engine(cfg, sc)
    coords = _Coordinates(sc, cfg.symmetrize)
    best: SearchResult | None = None
    best_key = math.inf
    for restart in range(cfg.max_restarts + 1):
        if restart == 0 and cfg.initial is not None:
            F = expand_minimal(cfg.initial)  # kept at its own scale; mu is scale invariant
        else:
            F = random_functional(np.random.default_rng([cfg.rng_seed, restart]), sc, cfg.symmetrize)
        ev = engine.evaluate(F)
        history: list = []
        steps = 0
        if ev.beats_aq:
            history.append(ev.record(0))
            if _mu_eval(cfg) != 1.0:
                ev = engine.evaluate(F, _mu_eval(cfg))
            if not ev.hit(cfg):
                ev, steps = _descend(engine, coords, ev, cfg, history)
        if progress is not None:
            progress(restart, ev)
        if ev.hit(cfg):
            result = _finish(engine, ev, cfg, restart, steps, history)
            if result.status == SUCCESS:
                return result
        else:
            result = _diagnostic(ev, cfg, restart, steps, history)
        key = result.mu_critical if result.mu_critical is not None else math.inf
        if best is None or key < best_key:
            best, best_key = result, key
    return best


def verify_result(data: dict, ns_tol: float = 1e-7, slack: float = 1e-9) -> dict[str, bool]:
    """Re-check a serialised SUCCESS result using only its JSON content.

    no_signalling: sigma* passes the NS checks. almost_quantum: the stored certificate
    functional has an almost-quantum bound above its value on sigma*. locality: the
    stored weights reproduce the octagon behaviour of sigma within eps, and the target
    visibility is within the covering bound. affine: sigma* is sigma(mu_target) and the
    functional meets beta_aq at mu_critical.
    """
    from .aq import aq_bound
    from .io import decode_assemblage, decode_functional

    F = decode_functional(data["functional"])
    sigma = decode_assemblage(data["assemblage"])
    star = decode_assemblage(data["noisy_assemblage"])
    certs = data["certificates"]
    mu_t, mu_c = data["mu_target"], data["mu_critical"]
    out = {"no_signalling": validate_tripartite_ns(star, ns_tol).passed}

    cert = decode_functional(certs["almost_quantum"]["certificate"])
    out["almost_quantum"] = aq_bound(cert).value - evaluate_functional(cert, star) > slack

    loc = certs["locality"]["certificate"]
    p = behaviour(sigma, octagon_set(), tol=1e-9)
    D = strategy_matrix(p.dims)
    q = np.asarray(loc["weights"])
    resid = float(np.max(np.abs(D @ q - p.flat())))
    out["locality"] = bool(mu_t <= MU_OCTAGON and np.all(q >= 0) and abs(q.sum() - 1) <= slack
                           and resid <= loc["eps"] + slack)

    same = np.max(np.abs(add_noise(sigma, mu_t).blocks - star.blocks)) <= 1e-12
    meets = abs(evaluate_functional(F, add_noise(sigma, mu_c)) - data["beta_aq"]) <= 1e-8 * max(
        1.0, abs(data["beta_aq"]))
    out["affine"] = bool(same and meets and mu_c <= mu_t)
    return out
