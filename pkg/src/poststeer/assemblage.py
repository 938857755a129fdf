"""Assemblages, steering functionals and the analytic constructions acting on them.

Blocks are stored in one complex array indexed ``[b, c, y, z, i, j]`` (tripartite) or
``[b, y, i, j]`` (bipartite). All indices are zero-based.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .behaviour import Behaviour, MeasurementSet, validate_povms
from .linalg import HERM_TOL, hermiticity_error, is_density_matrix, min_eigenvalue

IMAG_TOL = 1e-10
DENOISE_WARN_TOL = 1e-3


class ScenarioMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    dimA: int
    outB: int = 2
    outC: int = 2
    setB: int = 2
    setC: int = 2

    def __post_init__(self):
        for name in ("dimA", "outB", "outC", "setB", "setC"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")

    @property
    def block_shape(self) -> tuple[int, ...]:
        return (self.outB, self.outC, self.setB, self.setC, self.dimA, self.dimA)

    def keys(self):
        """All (b, c, y, z) in row-major order."""
        return product(range(self.outB), range(self.outC), range(self.setB), range(self.setC))

    def swapped(self) -> "Scenario":
        return Scenario(self.dimA, self.outC, self.outB, self.setC, self.setB)


def _frozen(arr, shape, what: str) -> np.ndarray:
    a = np.array(arr, dtype=complex)
    if a.shape != tuple(shape):
        raise ScenarioMismatch(f"{what} has shape {a.shape}, expected {tuple(shape)}")
    err = hermiticity_error(a)
    if err > HERM_TOL:
        raise ValueError(f"{what} is not Hermitian (max deviation {err:.3g})")
    a = (a + np.conj(np.swapaxes(a, -1, -2))) / 2
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Assemblage:
    """Tripartite assemblage sigma_{bc|yz} on Alice's trusted system.

    Blocks need not be positive or no-signalling; see :func:`validate_tripartite_ns`.
    """

    scenario: Scenario
    blocks: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "blocks", _frozen(self.blocks, self.scenario.block_shape, "assemblage"))

    @classmethod
    def from_dict(cls, scenario: Scenario, blocks: dict) -> "Assemblage":
        arr = np.zeros(scenario.block_shape, dtype=complex)
        for key, m in blocks.items():
            arr[tuple(key)] = m
        return cls(scenario, arr)

    def __getitem__(self, key) -> np.ndarray:
        return self.blocks[tuple(key)]

    @property
    def traces(self) -> np.ndarray:
        """p(bc|yz) = tr sigma_{bc|yz}, shape (outB, outC, setB, setC)."""
        return np.trace(self.blocks, axis1=-2, axis2=-1).real

    def bob_marginals(self) -> np.ndarray:
        """sigma^B_{b|y}, averaged over z (exact when the assemblage is no-signalling)."""
        return self.blocks.sum(axis=1).mean(axis=2)

    def charlie_marginals(self) -> np.ndarray:
        """sigma^C_{c|z}, averaged over y."""
        return self.blocks.sum(axis=0).mean(axis=1)

    def reduced_state(self) -> np.ndarray:
        return self.blocks.sum(axis=(0, 1)).mean(axis=(0, 1))

    def is_real(self, tol: float = IMAG_TOL) -> bool:
        return bool(np.max(np.abs(self.blocks.imag), initial=0.0) <= tol)

    def swap_parties(self) -> "Assemblage":
        """Exchange the roles of Bob and Charlie: sigma'_{cb|zy} = sigma_{bc|yz}."""
        return Assemblage(self.scenario.swapped(), self.blocks.transpose(1, 0, 3, 2, 4, 5))


@dataclass(frozen=True)
class BipartiteAssemblage:
    dimA: int
    blocks: np.ndarray  # [b, y, i, j]

    def __post_init__(self):
        a = np.asarray(self.blocks)
        if a.ndim != 4:
            raise ScenarioMismatch("bipartite blocks must be indexed [b, y, i, j]")
        object.__setattr__(self, "blocks", _frozen(a, a.shape[:2] + (self.dimA, self.dimA), "assemblage"))

    @property
    def outB(self) -> int:
        return self.blocks.shape[0]

    @property
    def setB(self) -> int:
        return self.blocks.shape[1]

    def reduced_state(self) -> np.ndarray:
        return self.blocks.sum(axis=0).mean(axis=0)


@dataclass(frozen=True)
class SteeringFunctional:
    scenario: Scenario
    operators: np.ndarray  # [b, c, y, z, i, j]

    def __post_init__(self):
        object.__setattr__(self, "operators",
                           _frozen(self.operators, self.scenario.block_shape, "functional"))

    def __mul__(self, k: float) -> "SteeringFunctional":
        return SteeringFunctional(self.scenario, self.operators * k)

    __rmul__ = __mul__

    def symmetrized(self) -> "SteeringFunctional":
        """Bob-Charlie symmetrisation F_{bcyz} <- (F_{bcyz} + F_{cbzy}) / 2."""
        if self.scenario.swapped() != self.scenario:
            raise ScenarioMismatch("symmetrisation needs identical Bob and Charlie scenarios")
        ops = (self.operators + self.operators.transpose(1, 0, 3, 2, 4, 5)) / 2
        return SteeringFunctional(self.scenario, ops)


@dataclass(frozen=True)
class MinimalFunctional:
    """Functional in the outcome-0 parametrisation of a two-outcome scenario.

    ``F_B[y]``, ``F_C[z]`` and ``F_YZ[y][z]`` pair with sigma^B_{0|y}, sigma^C_{0|z} and
    sigma_{00|yz}; ``F_A`` pairs with rho_A.
    """

    F_A: np.ndarray
    F_B: np.ndarray
    F_C: np.ndarray
    F_YZ: np.ndarray

    def __post_init__(self):
        fa = np.asarray(self.F_A)
        d = fa.shape[-1]
        fb, fc, fyz = np.asarray(self.F_B), np.asarray(self.F_C), np.asarray(self.F_YZ)
        object.__setattr__(self, "F_A", _frozen(fa, (d, d), "F_A"))
        object.__setattr__(self, "F_B", _frozen(fb, (fb.shape[0], d, d), "F_B"))
        object.__setattr__(self, "F_C", _frozen(fc, (fc.shape[0], d, d), "F_C"))
        object.__setattr__(self, "F_YZ", _frozen(fyz, (len(fb), len(fc), d, d), "F_YZ"))

    @property
    def scenario(self) -> Scenario:
        return Scenario(self.F_A.shape[0], 2, 2, len(self.F_B), len(self.F_C))

    @classmethod
    def symmetric(cls, F_A, F_B, F_YZ) -> "MinimalFunctional":
        """Bob-Charlie symmetric functional: F_C = F_B and F_YZ[z][y] = F_YZ[y][z]."""
        return cls(F_A, F_B, F_B, F_YZ)


@dataclass
class ValidationReport:
    tol: float
    violations: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.violations.values())

    def failed(self) -> list[str]:
        return [k for k, v in self.violations.items() if v > self.tol]

    def as_dict(self) -> dict:
        return {"passed": self.passed, "tol": self.tol, "violations": dict(self.violations)}


def _max_abs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def validate_tripartite_ns(asm: Assemblage, tol: float = 1e-10) -> ValidationReport:
    """Check positivity, both no-signalling families and normalisation.

    Each entry of ``violations`` is the worst violation of one family; the report
    passes iff all are within ``tol``.
    """
    s = asm.blocks
    d = asm.scenario.dimA
    report = ValidationReport(tol)
    report.violations["positivity"] = max(0.0, -min_eigenvalue(s.reshape(-1, d, d)))
    sigma_c = s.sum(axis=0)  # [c, y, z]
    report.violations["no_signalling_bob"] = _max_abs(sigma_c - sigma_c[:, :1])
    sigma_b = s.sum(axis=1)  # [b, y, z]
    report.violations["no_signalling_charlie"] = _max_abs(sigma_b - sigma_b[:, :, :1])
    norms = np.trace(s.sum(axis=(0, 1)), axis1=-2, axis2=-1)
    report.violations["normalisation"] = _max_abs(norms - 1)
    return report


def validate_bipartite_ns(asm: BipartiteAssemblage, tol: float = 1e-10) -> ValidationReport:
    s = asm.blocks
    d = asm.dimA
    report = ValidationReport(tol)
    report.violations["positivity"] = max(0.0, -min_eigenvalue(s.reshape(-1, d, d)))
    rho_y = s.sum(axis=0)
    report.violations["no_signalling_bob"] = _max_abs(rho_y - rho_y[:1])
    report.violations["normalisation"] = _max_abs(np.trace(rho_y, axis1=-2, axis2=-1) - 1)
    return report


def _real_trace(total: complex, what: str) -> float:
    if abs(total.imag) > IMAG_TOL:
        raise ValueError(f"{what} has imaginary part {total.imag:.3g}; inputs are not Hermitian")
    return float(total.real)


def evaluate_functional(F: SteeringFunctional, asm: Assemblage) -> float:
    """beta = sum_{bcyz} tr(F_{bcyz} sigma_{bc|yz})."""
    if F.scenario != asm.scenario:
        raise ScenarioMismatch(f"functional scenario {F.scenario} != assemblage scenario {asm.scenario}")
    total = complex(np.einsum("bcyzij,bcyzji->", F.operators, asm.blocks))
    return _real_trace(total, "functional value")


def minimal_representation(asm: Assemblage):
    """(rho_A, sigma^B_{0|y}, sigma^C_{0|z}, sigma_{00|yz}) of a two-outcome assemblage."""
    _require_two_outcomes(asm.scenario)
    return (asm.reduced_state(), asm.bob_marginals()[0], asm.charlie_marginals()[0],
            asm.blocks[0, 0])


def evaluate_minimal(Fmin: MinimalFunctional, asm: Assemblage) -> float:
    _require_two_outcomes(asm.scenario)
    if Fmin.scenario != asm.scenario:
        raise ScenarioMismatch(f"functional scenario {Fmin.scenario} != assemblage scenario {asm.scenario}")
    rho, sb, sc, s00 = minimal_representation(asm)
    total = (np.einsum("ij,ji->", Fmin.F_A, rho)
             + np.einsum("yij,yji->", Fmin.F_B, sb)
             + np.einsum("zij,zji->", Fmin.F_C, sc)
             + np.einsum("yzij,yzji->", Fmin.F_YZ, s00))
    return _real_trace(complex(total), "functional value")


def _require_two_outcomes(sc: Scenario) -> None:
    if sc.outB != 2 or sc.outC != 2:
        raise ScenarioMismatch("the minimal representation needs two outcomes per untrusted setting")


def minimal_form(F: SteeringFunctional) -> MinimalFunctional:
    """Collapse F onto the outcome-0 parametrisation (valid on no-signalling assemblages)."""
    _require_two_outcomes(F.scenario)
    f = F.operators
    sign = np.array([1, -1])
    F_A = f[1, 1].sum(axis=(0, 1))
    F_B = np.einsum("b,byzij->yij", sign, f[:, 1])
    F_C = np.einsum("c,cyzij->zij", sign, f[1, :])
    F_YZ = np.einsum("b,c,bcyzij->yzij", sign, sign, f)
    return MinimalFunctional(F_A, F_B, F_C, F_YZ)


def expand_minimal(Fmin: MinimalFunctional) -> SteeringFunctional:
    """Spread a minimal functional uniformly over all (b, c, y, z) cells.

    Writes F_{bc|yz} = A + (-1)^b U + (-1)^c V + (-1)^{b+c} W per setting pair, with the
    y- and z-dependent parts shared evenly so that :func:`minimal_form` inverts it exactly.
    """
    sc = Fmin.scenario
    mb, mc = sc.setB, sc.setC
    W = Fmin.F_YZ / 4
    U = Fmin.F_B[:, None] / (2 * mc) + W
    V = Fmin.F_C[None, :] / (2 * mb) + W
    A = Fmin.F_A / (mb * mc) + U + V - W
    ops = np.empty(sc.block_shape, dtype=complex)
    for b, c in product(range(2), repeat=2):
        ops[b, c] = A + (-1) ** b * U + (-1) ** c * V + (-1) ** (b + c) * W
    return SteeringFunctional(sc, ops)


def reconstruct_from_minimal(rho_A, sigma_B0, sigma_00, scenario: Scenario | None = None,
                             sigma_C0=None, tol: float = 1e-10) -> Assemblage:
    """Rebuild all blocks of a two-outcome assemblage from its outcome-0 data.

    When ``sigma_C0`` is omitted the data is taken to be Bob-Charlie symmetric, so
    sigma^C_{0|z} = sigma^B_{0|z} and sigma_{00|yz} must equal sigma_{00|zy}.
    """
    rho = np.asarray(rho_A, dtype=complex)
    sb = np.asarray(sigma_B0, dtype=complex)
    s00 = np.asarray(sigma_00, dtype=complex)
    if sigma_C0 is None:
        if s00.shape[0] != s00.shape[1]:
            raise ValueError("symmetric reconstruction needs as many settings for Bob as for Charlie")
        asym = _max_abs(s00 - s00.transpose(1, 0, 2, 3))
        if asym > tol:
            raise ValueError(f"sigma_00|yz is not symmetric under y<->z (deviation {asym:.3g})")
        sc0 = sb
    else:
        sc0 = np.asarray(sigma_C0, dtype=complex)
    d = rho.shape[0]
    if scenario is None:
        scenario = Scenario(d, 2, 2, len(sb), len(sc0))
    _require_two_outcomes(scenario)
    blocks = np.empty(scenario.block_shape, dtype=complex)
    blocks[0, 0] = s00
    blocks[0, 1] = sb[:, None] - s00
    blocks[1, 0] = sc0[None, :] - s00
    blocks[1, 1] = rho - sb[:, None] - sc0[None, :] + s00
    return Assemblage(scenario, blocks)


def prbox_distribution(y: int, z: int, b: int, c: int) -> float:
    return 0.5 if (b ^ c) == (y & z) else 0.0


def prbox_product(rho_A) -> Assemblage:
    """sigma_{bc|yz} = p_PR(bc|yz) rho_A."""
    rho = np.asarray(rho_A, dtype=complex)
    if not is_density_matrix(rho):
        raise ValueError("rho_A must be a density matrix (Hermitian, PSD, unit trace)")
    sc = Scenario(rho.shape[0], 2, 2, 2, 2)
    blocks = np.empty(sc.block_shape, dtype=complex)
    for b, c, y, z in sc.keys():
        blocks[b, c, y, z] = prbox_distribution(y, z, b, c) * rho
    return Assemblage(sc, blocks)


def product_assemblage(p: np.ndarray, rho_A) -> Assemblage:
    """sigma_{bc|yz} = p[b, c, y, z] rho_A for an arbitrary table p."""
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho_A, dtype=complex)
    sc = Scenario(rho.shape[0], *p.shape)
    return Assemblage(sc, p[..., None, None] * rho)


def _require_qubit(asm: Assemblage) -> None:
    if asm.scenario.dimA != 2:
        raise ScenarioMismatch("this construction is defined for a qubit trusted system")


def add_noise(asm: Assemblage, mu: float) -> Assemblage:
    """sigma(mu) = mu sigma + (1 - mu) tr(sigma) I/2, blockwise."""
    _require_qubit(asm)
    if not 0 <= mu <= 1:
        raise ValueError(f"mu must lie in [0, 1], got {mu}")
    tr = np.trace(asm.blocks, axis1=-2, axis2=-1)
    noisy = mu * asm.blocks + (1 - mu) * tr[..., None, None] * np.eye(2) / 2
    return Assemblage(asm.scenario, noisy)


def denoise(asm: Assemblage, mu: float, tol: float = DENOISE_WARN_TOL) -> Assemblage:
    """Invert :func:`add_noise`; warn when the result is not positive within ``tol``."""
    _require_qubit(asm)
    if mu <= 0:
        raise ValueError("mu must be positive to invert the depolarising map")
    tr = np.trace(asm.blocks, axis1=-2, axis2=-1)
    clean = (asm.blocks - (1 - mu) * tr[..., None, None] * np.eye(2) / 2) / mu
    out = Assemblage(asm.scenario, clean)
    worst = min_eigenvalue(out.blocks.reshape(-1, 2, 2))
    if worst < -tol:
        warnings.warn(f"de-noised assemblage has a block with eigenvalue {worst:.3g}", stacklevel=2)
    return out


def lift_qutrit(asm: Assemblage) -> Assemblage:
    """sigma'_{bc|yz} = sigma/3 + (2/3) tr(sigma) |2><2|."""
    _require_qubit(asm)
    tr = np.trace(asm.blocks, axis1=-2, axis2=-1)
    lifted = np.zeros(asm.blocks.shape[:4] + (3, 3), dtype=complex)
    lifted[..., :2, :2] = asm.blocks / 3
    lifted[..., 2, 2] = 2 * tr / 3
    sc = asm.scenario
    return Assemblage(Scenario(3, sc.outB, sc.outC, sc.setB, sc.setC), lifted)


def filter_back(asm3: Assemblage, tol: float = 1e-12) -> Assemblage:
    """Apply the filter |0><0| + |1><1| and renormalise by the weight left in that subspace."""
    if asm3.scenario.dimA != 3:
        raise ScenarioMismatch("filter_back expects a qutrit assemblage")
    kept = asm3.blocks[..., :2, :2]
    weight = np.trace(asm3.reduced_state()[:2, :2]).real
    if weight <= tol:
        raise ValueError("assemblage has no weight on the qubit subspace")
    sc = asm3.scenario
    return Assemblage(Scenario(2, sc.outB, sc.outC, sc.setB, sc.setC), kept / weight)


def behaviour(asm: Assemblage, measurements: MeasurementSet | np.ndarray, tol: float = 1e-10) -> Behaviour:
    """p(abc|xyz) = tr(E_{a|x} sigma_{bc|yz})."""
    effects = measurements.effects if isinstance(measurements, MeasurementSet) else measurements
    effects = validate_povms(effects, tol)
    if effects.shape[-1] != asm.scenario.dimA:
        raise ScenarioMismatch("measurement dimension does not match the trusted system")
    p = np.einsum("xaij,bcyzji->xyzabc", effects, asm.blocks)
    if np.max(np.abs(p.imag), initial=0.0) > IMAG_TOL:
        raise ValueError("complex probabilities: non-Hermitian effects or blocks")
    return Behaviour(p.real)
