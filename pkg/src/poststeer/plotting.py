"""Equatorial Bloch-disk picture of a real qubit assemblage (static SVG)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .assemblage import Assemblage  # noqa: E402
from .linalg import PAULI_X, PAULI_Z  # noqa: E402

_COLOURS = ["tab:blue", "tab:orange", "tab:green", "tab:red"]


def bloch_xz(op: np.ndarray) -> tuple[np.ndarray, float]:
    """(x, z) Bloch components of op / tr(op), and tr(op)."""
    p = float(np.trace(op).real)
    if p <= 0:
        return np.zeros(2), max(p, 0.0)
    return np.array([np.trace(PAULI_X @ op).real, np.trace(PAULI_Z @ op).real]) / p, p


def _disk(ax, title: str):
    t = np.linspace(0, 2 * np.pi, 200)
    ax.plot(np.cos(t), np.sin(t), color="0.6", lw=0.8)
    ax.axhline(0, color="0.85", lw=0.5)
    ax.axvline(0, color="0.85", lw=0.5)
    ax.set_xlim(-1.1, 1.1)
    ax.set_ylim(-1.1, 1.1)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
    ax.set_title(title, fontsize=9)


def _state(ax, op: np.ndarray, colour: str, label: str):
    """Arrow to the normalised Bloch vector; a circle at distance tr(op) along it."""
    r, p = bloch_xz(op)
    ax.annotate("", xy=r, xytext=(0, 0), arrowprops={"arrowstyle": "->", "color": colour, "lw": 1.2})
    n = np.linalg.norm(r)
    u = r / n if n > 1e-12 else np.zeros(2)
    ax.plot(*(p * u), "o", mfc="none", mec=colour, ms=7, label=f"{label}  p={p:.3f}")


def bloch_figure(asm: Assemblage):
    if asm.scenario.dimA != 2 or not asm.is_real():
        raise ValueError("the Bloch-disk picture needs a real qubit assemblage")
    sc = asm.scenario
    fig = plt.figure(figsize=(2.6 * sc.setC, 2.6 * (sc.setB + 1)))
    grid = fig.add_gridspec(sc.setB + 1, sc.setC)
    top = fig.add_subplot(grid[0, :])
    _disk(top, "Bob marginals and reduced state")
    for y in range(sc.setB):
        for b in range(sc.outB):
            _state(top, asm.bob_marginals()[b, y], _COLOURS[(y * sc.outB + b) % 4], f"B {b}|{y}")
    _state(top, asm.reduced_state(), "k", "rho_A")
    top.legend(fontsize=6, loc="center left", bbox_to_anchor=(1.0, 0.5), frameon=False)
    for y in range(sc.setB):
        for z in range(sc.setC):
            ax = fig.add_subplot(grid[y + 1, z])
            _disk(ax, f"y={y}, z={z}")
            for b in range(sc.outB):
                for c in range(sc.outC):
                    _state(ax, asm.blocks[b, c, y, z], _COLOURS[(b * sc.outC + c) % 4], f"{b}{c}")
            ax.legend(fontsize=5, loc="lower left", frameon=False)
    fig.tight_layout()
    return fig


def write_bloch_svg(asm: Assemblage, path) -> None:
    fig = bloch_figure(asm)
    # fixed metadata and id salt keep the SVG byte-identical across runs
    with matplotlib.rc_context({"svg.hashsalt": "poststeer"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
