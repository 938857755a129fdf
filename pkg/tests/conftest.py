import numpy as np
import pytest
from scipy.stats import ortho_group, unitary_group

from poststeer.assemblage import Assemblage, BipartiteAssemblage, Scenario


def random_projective(rng, dim, n_out, real=False):
    """Rank-balanced projective measurement from the columns of a random (orthogonal) unitary."""
    seed = int(rng.integers(2**31))
    U = ortho_group.rvs(dim, random_state=seed) if real else unitary_group.rvs(dim, random_state=seed)
    groups = np.array_split(np.arange(dim), n_out)
    return np.array([U[:, g] @ U[:, g].conj().T for g in groups])


def random_povm(rng, dim, n_out):
    G = rng.standard_normal((n_out, dim, dim)) + 1j * rng.standard_normal((n_out, dim, dim))
    M = np.einsum("aji,ajk->aik", G.conj(), G)
    w, v = np.linalg.eigh(M.sum(axis=0))
    inv = v @ np.diag(w**-0.5) @ v.conj().T
    return np.einsum("ij,ajk,kl->ail", inv, M, inv)


def random_state(rng, dim, real=False):
    psi = rng.standard_normal(dim) + (0 if real else 1j * rng.standard_normal(dim))
    return psi / np.linalg.norm(psi)


def quantum_tripartite(psi, EB, EC, dims):
    """sigma_{bc|yz} = tr_BC[(I x E_{b|y} x E_{c|z}) |psi><psi|] for a pure state on A x B x C."""
    dA, dB, dC = dims
    p = psi.reshape(dA, dB, dC)
    phi = np.einsum("ybkK,zclL,iKL->bcyzikl", EB, EC, p)
    return np.einsum("bcyzikl,jkl->bcyzij", phi, p.conj())


def random_quantum_assemblage(rng, sc=Scenario(2), real=False, dB=2, dC=2):
    dims = (sc.dimA, dB, dC)
    psi = random_state(rng, int(np.prod(dims)), real)
    EB = np.array([random_projective(rng, dB, sc.outB, real) for _ in range(sc.setB)])
    EC = np.array([random_projective(rng, dC, sc.outC, real) for _ in range(sc.setC)])
    return Assemblage(sc, quantum_tripartite(psi, EB, EC, dims))


def ghz_assemblage():
    """GHZ state with X/Z measurements for Bob and Charlie."""
    psi = np.zeros(8)
    psi[0] = psi[7] = 1 / np.sqrt(2)
    Z = [np.diag([1.0, 0]), np.diag([0, 1.0])]
    X = [np.full((2, 2), 0.5), np.array([[0.5, -0.5], [-0.5, 0.5]])]
    E = np.array([Z, X])
    return Assemblage(Scenario(2), quantum_tripartite(psi, E, E, (2, 2, 2)))


def random_bipartite(rng, dimA, n_set, n_out=2, dB=None, rank=None):
    """Quantum (hence NS-valid) bipartite assemblage from a random pure state and POVMs."""
    dB = dB or dimA + 1
    psi = random_state(rng, dimA * dB).reshape(dimA, dB)
    if rank is not None:
        u, s, vh = np.linalg.svd(psi)
        s[rank:] = 0
        psi = (u[:, :len(s)] * s) @ vh[:len(s)]
        psi /= np.linalg.norm(psi)
    E = np.array([random_povm(rng, dB, n_out) for _ in range(n_set)])  # [y, b]
    blocks = np.einsum("ik,ybKk,jK->byij", psi, E, psi.conj())
    return BipartiteAssemblage(dimA, blocks)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def acceptance():
    def record(name: str, passed: bool, detail: str):
        _ACCEPTANCE.append((name, bool(passed), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
