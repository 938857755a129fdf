"""Explicit quantum realisation of bipartite no-signalling assemblages.

Given sigma_{b|y} with reduced state rho_A = sum_k mu_k |k><k|, the purification
|Psi> = sum_k sqrt(mu_k) |k>|k> together with Bob's effects
E_{b|y} = rho^{-1/2} sigma_{b|y}^T rho^{-1/2} (transpose in the eigenbasis of rho_A)
reproduces every block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assemblage import BipartiteAssemblage, validate_bipartite_ns

RANK_TOL = 1e-10


class RealizationError(ValueError):
    pass


@dataclass(frozen=True)
class QuantumRealization:
    state: np.ndarray   # vector on A (x) B, A index major
    povms: np.ndarray   # [b, y, i, j] effects on B
    support_dim: int

    @property
    def dimA(self) -> int:
        return self.povms.shape[-1]

    def reconstruct(self) -> np.ndarray:
        """tr_B[|Psi><Psi| (I (x) E_{b|y})] for every (b, y)."""
        d = self.dimA
        psi = self.state.reshape(d, d)  # psi[i, k] = <i|_A <k|_B |Psi>
        # (I (x) E) |Psi> has components psi @ E^T; partial trace over B
        return np.einsum("ik,byjk,lj->byil", psi, self.povms, psi.conj())

    def bob_probabilities(self) -> np.ndarray:
        return np.einsum("byii->by", self.reconstruct()).real


def ghjw_realize(asm: BipartiteAssemblage, tol: float = 1e-10,
                 rank_tol: float = RANK_TOL) -> QuantumRealization:
    report = validate_bipartite_ns(asm, tol)
    if not report.passed:
        raise RealizationError(f"assemblage is not no-signalling: {report.failed()}")
    d = asm.dimA
    rho = asm.reduced_state()
    mu, vecs = np.linalg.eigh((rho + rho.conj().T) / 2)
    support = mu > rank_tol
    r = int(support.sum())

    # blocks in the eigenbasis of rho_A
    sig = np.einsum("ki,byij,jl->bykl", vecs.conj().T, asm.blocks, vecs)
    off = ~support
    if r < d:
        leak = np.max(np.abs(sig[:, :, off, :]), initial=0.0)
        if leak > tol:
            raise RealizationError(
                f"a block has weight {leak:.3g} outside the support of rho_A")

    inv_sqrt = np.where(support, 1 / np.sqrt(np.where(support, mu, 1)), 0.0)
    effects = inv_sqrt[:, None] * np.swapaxes(sig, -1, -2) * inv_sqrt[None, :]
    effects = (effects + np.conj(np.swapaxes(effects, -1, -2))) / 2
    # off-support completion: assign I - P_supp to outcome 0 of every setting
    effects[0, :, off, off] += 1.0

    state = np.zeros((d, d), dtype=complex)
    for k in np.flatnonzero(support):
        state[:, k] = np.sqrt(mu[k]) * vecs[:, k]
    return QuantumRealization(state.reshape(-1), effects, r)


def support_projector(real: QuantumRealization, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Projector on Bob's space spanned by the Schmidt vectors of the state."""
    psi = real.state.reshape(real.dimA, real.dimA)
    weights = np.sum(np.abs(psi) ** 2, axis=0)
    return np.diag((weights > rank_tol).astype(float))
