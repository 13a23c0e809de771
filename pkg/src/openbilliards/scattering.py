"""S-matrices from the reaction matrix, conductance, and energy sweeps.

With K = diag(k_n) over both leads and Rt = K^(1/2) R K^(1/2), the scattering
matrix referenced at the interfaces is the Cayley image

    S = (i*Rt - I) (i*Rt + I)^(-1),

which is exactly unitary and symmetric for real symmetric R. The sign is
fixed by the hard-wall limit: R -> 0 must give r = -1 (Dirichlet phase), and
a clean guide then transmits with t = exp(i*k_n*L). Outgoing amplitudes are
measured at each lead's own interface (x=0 left, x=L right); the "global"
phase reference multiplies by diag(I, exp(-i*k_n*L)) on both sides, moving
the right-lead reference plane to x=0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .cavity import CavitySolution
from .leads import (
    IllConditionedEnergy,
    LeadSpace,
    OverlapTable,
    channel_space,
    overlaps,
    r_matrix,
)

Array = NDArray[np.float64]
CArray = NDArray[np.complex128]

_COND_LIMIT = 1e12


def cayley_smatrix(rmat: Array, wavevectors: Array) -> CArray:
    """Unitary symmetric S from a real symmetric reaction matrix.

    `wavevectors` lists the channel k's in the same order as the rows of
    `rmat` (both leads concatenated). Shared by the 2D pipeline and the 1D
    validation module.
    """
    rmat = np.asarray(rmat, dtype=float)
    k = np.asarray(wavevectors, dtype=float)
    if rmat.shape != (k.size, k.size):
        raise ValueError(f"R shape {rmat.shape} does not match {k.size} channels")
    if np.any(k <= 0.0):
        raise ValueError("all channel wave vectors must be positive")
    sk = np.sqrt(k)
    tilde = sk[:, None] * rmat * sk[None, :]
    plus = 1j * tilde + np.eye(k.size)
    minus = 1j * tilde - np.eye(k.size)
    if np.linalg.cond(plus) > _COND_LIMIT:
        raise IllConditionedEnergy(
            "scattering solve ill-conditioned (near-resonance)", reason="pole"
        )
    smat = np.linalg.solve(plus, minus)
    # time-reversal symmetry is exact; project out solver round-off
    return 0.5 * (smat + smat.T)


@dataclass(frozen=True)
class ScatteringMatrix:
    """Unitary channel map at one energy, interfaces at x=0 and x=L."""

    energy: float
    lead_width: float
    cavity_length: float
    phase_reference: str  # "interface" or "global"
    wavevectors: Array  # open-channel k_n, one lead
    matrix: CArray  # 2N x 2N, blocks [[r, t'], [t, r']]

    @property
    def n_open(self) -> int:
        return self.wavevectors.size

    @property
    def r(self) -> CArray:
        return self.matrix[: self.n_open, : self.n_open]

    @property
    def t(self) -> CArray:
        return self.matrix[self.n_open :, : self.n_open]

    @property
    def t_prime(self) -> CArray:
        return self.matrix[: self.n_open, self.n_open :]

    @property
    def r_prime(self) -> CArray:
        return self.matrix[self.n_open :, self.n_open :]

    @property
    def unitarity_defect(self) -> float:
        gram = self.matrix @ self.matrix.conj().T
        return float(np.max(np.abs(gram - np.eye(2 * self.n_open))))


def s_from_r(
    rmat: Array,
    space: LeadSpace,
    cavity_length: float,
    phase_reference: str = "interface",
) -> ScatteringMatrix:
    """Flux-normalized S-matrix from the reaction matrix at `space.energy`."""
    if space.n_open < 1:
        raise ValueError("S-matrix needs at least one open channel")
    if phase_reference not in ("interface", "global"):
        raise ValueError(f"unknown phase reference {phase_reference!r}")
    both = np.concatenate([space.wavevectors, space.wavevectors])
    smat = cayley_smatrix(rmat, both)
    if phase_reference == "global":
        phases = np.concatenate(
            [
                np.ones(space.n_open, dtype=complex),
                np.exp(-1j * space.wavevectors * cavity_length),
            ]
        )
        smat = phases[:, None] * smat * phases[None, :]
    return ScatteringMatrix(
        energy=space.energy,
        lead_width=space.lead_width,
        cavity_length=cavity_length,
        phase_reference=phase_reference,
        wavevectors=space.wavevectors.copy(),
        matrix=smat,
    )


def conductance(smatrix: ScatteringMatrix) -> float:
    """Dimensionless Landauer sum T = trace(t t^dagger)."""
    return float(np.sum(np.abs(smatrix.t) ** 2))


@dataclass(frozen=True)
class SweepResult:
    """Conductance sweep over a k-grid in units of pi/w.

    Arrays cover the computed points only; `skipped` lists dropped grid
    values with reasons. Output writers re-insert skipped points by linear
    interpolation.
    """

    lead_width: float
    cavity_length: float
    phase_reference: str
    k_requested: Array  # full grid, units pi/w
    k: Array  # computed points
    transmission: Array
    n_open: NDArray[np.int64]
    unitarity_defect: Array
    t_blocks: tuple[CArray, ...]  # per computed point, n_open x n_open
    skipped: tuple[tuple[float, str], ...]


def sweep_conductance(
    solution: CavitySolution,
    k_grid: Array,
    n_lead: int | None = None,
    phase_reference: str = "interface",
    skip_rtol: float = 1e-6,
    pole_tol: float | None = None,
) -> SweepResult:
    """Sweep S-matrices over `k_grid` (units pi/w), reusing one solution.

    Points within `skip_rtol` (relative in E) of a channel threshold or a
    retained cavity level are dropped with a reason; remaining failures of
    the per-point solve are likewise recorded, never raised.
    """
    profile = solution.profile
    w = profile.lead_width
    k_grid = np.asarray(k_grid, dtype=float)
    if k_grid.ndim != 1 or k_grid.size == 0:
        raise ValueError("k_grid must be a non-empty 1D array")
    if np.any(k_grid <= 0.0):
        raise ValueError("k_grid values must be positive (units pi/w)")
    needed = max(1, int(math.floor(np.max(k_grid))))
    if n_lead is None:
        n_lead = needed
    if n_lead < needed:
        raise ValueError(f"sweep reaches {needed} channels, n_lead={n_lead}")
    if n_lead > solution.basis.n_max:
        raise ValueError(
            f"sweep needs {n_lead} lead channels but the basis holds "
            f"n_max={solution.basis.n_max} transverse modes"
        )
    table = overlaps(solution, n_lead)
    thresholds = (np.arange(1, n_lead + 2) * math.pi / w) ** 2

    kept_k, kept_t, kept_n, kept_defect = [], [], [], []
    blocks: list[CArray] = []
    skipped: list[tuple[float, str]] = []
    for k_val in k_grid:
        energy = (k_val * math.pi / w) ** 2
        if np.min(np.abs(energy - thresholds)) < skip_rtol * energy:
            skipped.append((float(k_val), "threshold"))
            continue
        if np.min(np.abs(energy - table.energies)) < skip_rtol * energy:
            skipped.append((float(k_val), "pole"))
            continue
        try:
            space = channel_space(energy, w)
            if space.n_open == 0:
                kept_k.append(float(k_val))
                kept_t.append(0.0)
                kept_n.append(0)
                kept_defect.append(0.0)
                blocks.append(np.zeros((0, 0), dtype=complex))
                continue
            rmat = r_matrix(table, space, pole_tol=pole_tol)
            smat = s_from_r(rmat, space, profile.length, phase_reference)
        except IllConditionedEnergy as exc:
            skipped.append((float(k_val), exc.reason))
            continue
        kept_k.append(float(k_val))
        kept_t.append(conductance(smat))
        kept_n.append(space.n_open)
        kept_defect.append(smat.unitarity_defect)
        blocks.append(smat.t.copy())
    return SweepResult(
        lead_width=w,
        cavity_length=profile.length,
        phase_reference=phase_reference,
        k_requested=k_grid.copy(),
        k=np.asarray(kept_k),
        transmission=np.asarray(kept_t),
        n_open=np.asarray(kept_n, dtype=np.int64),
        unitarity_defect=np.asarray(kept_defect),
        t_blocks=tuple(blocks),
        skipped=tuple(skipped),
    )


def write_sweep_csv(result: SweepResult, path, header_lines=()) -> None:
    """Write the full requested grid; skipped points get interpolated T.

    Interpolated rows carry NaN in the defect column and are listed with
    their skip reason in the header comments.
    """
    if result.k.size == 0:
        raise ValueError("sweep produced no computed points")
    kept_index = {float(k_val): i for i, k_val in enumerate(result.k)}
    order = np.argsort(result.k)
    k_sorted = result.k[order]
    t_sorted = result.transmission[order]
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for k_val, reason in result.skipped:
            fh.write(f"# skipped k={k_val:.12g} reason={reason}\n")
        fh.write("k_over_piw,T,N_open,unitarity_defect\n")
        for k_val in result.k_requested:
            idx = kept_index.get(float(k_val))
            if idx is not None:
                fh.write(
                    f"{k_val:.12g},{result.transmission[idx]:.12g},"
                    f"{result.n_open[idx]:d},{result.unitarity_defect[idx]:.6g}\n"
                )
            else:
                t_interp = float(np.interp(k_val, k_sorted, t_sorted))
                n_open = int(math.floor(k_val + 1e-12))
                fh.write(f"{k_val:.12g},{t_interp:.12g},{n_open:d},nan\n")


def write_t_store(result: SweepResult, path) -> None:
    """Binary record stream: per point float64 k, int64 N, then N*N complex."""
    with open(path, "wb") as fh:
        np.asarray([result.k.size], dtype=np.int64).tofile(fh)
        for k_val, block in zip(result.k, result.t_blocks):
            np.asarray([k_val], dtype=np.float64).tofile(fh)
            np.asarray([block.shape[0]], dtype=np.int64).tofile(fh)
            np.ascontiguousarray(block, dtype=np.complex128).tofile(fh)


def read_t_store(path) -> tuple[Array, list[CArray]]:
    """Inverse of write_t_store."""
    path = Path(path)
    with open(path, "rb") as fh:
        count = int(np.fromfile(fh, dtype=np.int64, count=1)[0])
        ks, blocks = [], []
        for _ in range(count):
            ks.append(float(np.fromfile(fh, dtype=np.float64, count=1)[0]))
            n = int(np.fromfile(fh, dtype=np.int64, count=1)[0])
            block = np.fromfile(fh, dtype=np.complex128, count=n * n)
            blocks.append(block.reshape(n, n))
    return np.asarray(ks), blocks
