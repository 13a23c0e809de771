"""Lead channel spaces, cavity-lead overlaps, and the reaction matrix.

A lead of width w supports transverse modes sqrt(2/w)*sin(n*pi*y/w) with
longitudinal wave vectors k_n = sqrt(E - (n*pi/w)^2); a mode is open when
k_n is real. The reaction matrix relates the wave function's values at the
two interfaces to its inward normal derivatives there,

    R_ab(n, n') = sum_j phi_jn(a) phi_jn'(b) / (E - E_j),

summed over the retained cavity eigenpairs. Evanescent (closed) channels
are excluded throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .cavity import CavitySolution, axial_norms

Array = NDArray[np.float64]

THRESHOLD_TOL = 1e-12
INTERFACE_TOL = 1e-9


class IllConditionedEnergy(ArithmeticError):
    """Energy too close to a channel threshold or a reaction-matrix pole.

    Sweeps catch this and skip the point; `reason` is "threshold" or "pole".
    """

    def __init__(self, message: str, reason: str):
        super().__init__(message)
        self.reason = reason


@dataclass(frozen=True)
class LeadSpace:
    """Open-channel set of the two identical leads at one energy."""

    energy: float
    lead_width: float
    wavevectors: Array  # k_n for n = 1..n_open, strictly decreasing

    @property
    def n_open(self) -> int:
        return self.wavevectors.size


def channel_space(energy: float, lead_width: float) -> LeadSpace:
    """Enumerate open channels at `energy` for leads of width `lead_width`."""
    if energy <= 0.0:
        raise ValueError(f"energy must be positive, got {energy}")
    if lead_width <= 0.0:
        raise ValueError(f"lead width must be positive, got {lead_width}")
    n_open = int(math.floor(lead_width * math.sqrt(energy) / math.pi))
    thresholds = (np.arange(1, n_open + 2) * math.pi / lead_width) ** 2
    if np.min(np.abs(energy - thresholds)) < THRESHOLD_TOL:
        raise IllConditionedEnergy(
            f"E={energy!r} sits on a channel threshold", reason="threshold"
        )
    wavevectors = np.sqrt(energy - thresholds[:n_open])
    return LeadSpace(energy=energy, lead_width=lead_width, wavevectors=wavevectors)


@dataclass(frozen=True)
class OverlapTable:
    """Interface overlaps phi_jn between cavity states and lead modes.

    Rows are retained cavity states j, columns lead channels n = 1..n_lead.
    Energy-independent: built once per solution and reused across a sweep.
    """

    lead_width: float
    cavity_length: float
    energies: Array  # cavity eigenvalues E_j, shape (k_keep,)
    left: Array  # (k_keep, n_lead), interface x = 0
    right: Array  # (k_keep, n_lead), interface x = L

    @property
    def n_lead(self) -> int:
        return self.left.shape[1]


def overlaps(solution: CavitySolution, n_lead: int) -> OverlapTable:
    """Closed-form overlaps of the retained eigenstates with lead modes.

    At the interfaces v = (y - Q)/w, so the y-integral against the lead
    mode collapses by sine orthogonality: phi_jn(left) = sum_m B_jnm c_m(0)
    and the right interface picks up (-1)^m per axial mode. No quadrature.
    """
    basis = solution.basis
    if not 1 <= n_lead <= basis.n_max:
        raise ValueError(f"n_lead must be in 1..{basis.n_max}, got {n_lead}")
    profile = solution.profile
    w = profile.lead_width
    for x in (0.0, profile.length):
        if abs(float(profile.width_at(x)) - w) > INTERFACE_TOL:
            raise ValueError(f"interface width at x={x} deviates from lead width")
    coeffs = solution.coeffs.reshape(solution.k_keep, basis.n_max, basis.m_max)
    norms = axial_norms(basis.m_max, profile.length)
    signs = np.where(np.arange(basis.m_max) % 2 == 0, 1.0, -1.0)
    left = coeffs[:, :n_lead, :] @ norms
    right = coeffs[:, :n_lead, :] @ (norms * signs)
    return OverlapTable(
        lead_width=w,
        cavity_length=profile.length,
        energies=solution.energies.copy(),
        left=left,
        right=right,
    )


def sum_rule(table: OverlapTable) -> Array:
    """Coupling-strength sums sum_j phi_jn^2 per (side, channel).

    Grows without bound as more states are retained (the boundary closure
    diverges), so this is a truncation diagnostic, not a convergent limit.
    """
    return np.stack(
        [np.sum(table.left**2, axis=0), np.sum(table.right**2, axis=0)]
    )


def r_matrix(
    table: OverlapTable, space: LeadSpace, pole_tol: float | None = None
) -> Array:
    """Reaction matrix over open channels, blocks ordered (left, right).

    Exactly symmetric; poles at the retained cavity energies are guarded
    by `pole_tol` (default 1e-9 * max(|E|, 1)).
    """
    n = space.n_open
    if n < 1:
        raise ValueError("reaction matrix needs at least one open channel")
    if n > table.n_lead:
        raise ValueError(f"table holds {table.n_lead} channels, need {n}")
    if abs(space.lead_width - table.lead_width) > INTERFACE_TOL:
        raise ValueError("lead width mismatch between table and channel space")
    energy = space.energy
    if pole_tol is None:
        pole_tol = 1e-9 * max(abs(energy), 1.0)
    gaps = energy - table.energies
    nearest = int(np.argmin(np.abs(gaps)))
    if abs(gaps[nearest]) < pole_tol:
        raise IllConditionedEnergy(
            f"E={energy!r} within {pole_tol:g} of cavity level {nearest}",
            reason="pole",
        )
    phi = np.hstack([table.left[:, :n], table.right[:, :n]])
    rmat = phi.T @ (phi / gaps[:, None])
    return 0.5 * (rmat + rmat.T)
