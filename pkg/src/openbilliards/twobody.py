"""Two-particle interaction matrix elements over cavity eigenfunctions.

H_ijkl couples products of single-particle states through a potential that
depends on the particles' physical positions. The integral is done in the
transformed (u, v) coordinates where each state is a plain harmonic
expansion with no 1/sqrt(J) factor: the two Jacobians from the measure
cancel exactly against the paired 1/sqrt(J) normalizations. The module also
carries the original-coordinate form of the same integral (`h_ijkl_direct`)
so the cancellation can be checked numerically rather than trusted.

Particles are distinguishable; (anti)symmetrization is left to callers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .cavity import CavitySolution, axial_norms, eval_wavefunction

Array = NDArray[np.float64]

_MODES = ("euclidean", "components")


@dataclass(frozen=True)
class InteractionSpec:
    """Potential plus quadrature policy for pair matrix elements.

    In "euclidean" mode the potential is called with the interparticle
    distance; in "components" mode with (|dx|, |dy|) separately. Values
    computed at quad_order and at twice that must agree within check_tol
    (relative, floored at 1).
    """

    potential: Callable[..., Array]
    quad_order: int = 16
    mode: str = "euclidean"
    check_tol: float = 1e-6

    def __post_init__(self):
        if self.quad_order < 8:
            raise ValueError(f"quad_order must be >= 8, got {self.quad_order}")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.check_tol <= 0.0:
            raise ValueError("check_tol must be positive")


def gaussian(strength: float, width: float) -> Callable[[Array], Array]:
    """V(d) = strength * exp(-(d/width)^2)."""
    if width <= 0.0:
        raise ValueError("width must be positive")

    def potential(dist):
        return strength * np.exp(-((dist / width) ** 2))

    return potential


def contact_regularized(strength: float, width: float) -> Callable[[Array], Array]:
    """Normalized Gaussian spike: area `strength`, scale `width`."""
    if width <= 0.0:
        raise ValueError("width must be positive")
    peak = strength / (2.0 * math.pi * width**2)

    def potential(dist):
        return peak * np.exp(-(dist**2) / (2.0 * width**2))

    return potential


def _gauss_grid(profile, q):
    """Tensor Gauss nodes on [0, L] x [0, 1] with physical positions.

    Returns flat arrays (a-major): x, y, du dv weights, plus the 1D node
    sets needed for the harmonic evaluation.
    """
    nodes, weights = np.polynomial.legendre.leggauss(q)
    u = 0.5 * profile.length * (nodes + 1.0)
    uw = 0.5 * profile.length * weights
    v = 0.5 * (nodes + 1.0)
    vw = 0.5 * weights
    lower = np.asarray(profile.lower_fn(u), dtype=float)
    width = np.asarray(profile.width_at(u), dtype=float)
    x = np.repeat(u, q)
    y = (lower[:, None] + width[:, None] * v[None, :]).ravel()
    w2 = (uw[:, None] * vw[None, :]).ravel()
    return x, y, w2, u, v, width


def _state_values(solution, states, u, v):
    """Harmonic expansions (no 1/sqrt(J)) on the tensor grid, flattened."""
    basis = solution.basis
    length = solution.profile.length
    norms = axial_norms(basis.m_max, length)
    kappa = np.arange(basis.m_max) * math.pi / length
    cos_part = norms[:, None] * np.cos(kappa[:, None] * u[None, :])
    n_modes = np.arange(1, basis.n_max + 1)
    sin_part = math.sqrt(2.0) * np.sin(math.pi * n_modes[:, None] * v[None, :])
    coeffs = solution.coeffs[list(states)].reshape(
        len(states), basis.n_max, basis.m_max
    )
    vals = np.einsum("snm,ma,nb->sab", coeffs, cos_part, sin_part)
    return vals.reshape(len(states), u.size * v.size)


def _potential_matrix(spec, x, y):
    dx = x[:, None] - x[None, :]
    dy = y[:, None] - y[None, :]
    if spec.mode == "euclidean":
        vm = spec.potential(np.hypot(dx, dy))
    else:
        vm = spec.potential(np.abs(dx), np.abs(dy))
    vm = np.asarray(vm, dtype=float)
    if vm.shape != (x.size, x.size):
        raise ValueError("potential must evaluate elementwise on arrays")
    return vm


def _pair_block(solution, states, spec, q):
    """G[(i,k),(j,l)] = sum over both grids of phi_i phi_k V phi_j phi_l."""
    x, y, w2, u, v, _ = _gauss_grid(solution.profile, q)
    phi = _state_values(solution, states, u, v)
    vm = _potential_matrix(spec, x, y)
    ns = len(states)
    f = (phi[:, None, :] * phi[None, :, :]).reshape(ns * ns, x.size) * w2
    g = f @ vm @ f.T
    return 0.5 * (g + g.T)


def _check_indices(solution, indices):
    for idx in indices:
        if not 0 <= idx < solution.k_keep:
            raise IndexError(
                f"state {idx} outside retained range 0..{solution.k_keep - 1}"
            )


def h_ijkl(
    solution: CavitySolution, i: int, j: int, k: int, l: int, spec: InteractionSpec
) -> float:
    """One matrix element <ij|V|kl>; (i,k) pair particle 1, (j,l) particle 2.

    Evaluated at spec.quad_order and verified against twice that order;
    disagreement beyond check_tol signals an under-resolved potential.
    """
    _check_indices(solution, (i, j, k, l))
    states = sorted(set((i, j, k, l)))
    pos = {s: a for a, s in enumerate(states)}
    ns = len(states)

    def value(q):
        g = _pair_block(solution, states, spec, q)
        return g[pos[i] * ns + pos[k], pos[j] * ns + pos[l]]

    coarse = value(spec.quad_order)
    fine = value(2 * spec.quad_order)
    scale = max(1.0, abs(coarse), abs(fine))
    if abs(coarse - fine) > spec.check_tol * scale:
        raise ArithmeticError(
            f"quadrature not converged at q={spec.quad_order}: "
            f"{coarse:.9g} vs {fine:.9g} at 2q"
        )
    return float(coarse)


def pair_hamiltonian(
    solution: CavitySolution, index_set: Sequence[int], spec: InteractionSpec
) -> Array:
    """Pair-basis matrix M[(ij),(kl)] = H_ijkl + (E_i + E_j) delta.

    Pair states run over ordered products of `index_set` (distinguishable
    particles), row-major in (i, j). The interaction part is checked once
    blockwise at doubled quadrature order.
    """
    states = list(index_set)
    if not states:
        raise ValueError("index_set must not be empty")
    if len(set(states)) != len(states):
        raise ValueError("index_set must not repeat states")
    _check_indices(solution, states)
    ns = len(states)

    def block(q):
        g = _pair_block(solution, states, spec, q)
        g4 = g.reshape(ns, ns, ns, ns)  # [i, k, j, l]
        return g4.transpose(0, 2, 1, 3).reshape(ns * ns, ns * ns)

    coarse = block(spec.quad_order)
    fine = block(2 * spec.quad_order)
    scale = max(1.0, float(np.max(np.abs(coarse))), float(np.max(np.abs(fine))))
    worst = float(np.max(np.abs(coarse - fine)))
    if worst > spec.check_tol * scale:
        raise ArithmeticError(
            f"quadrature not converged at q={spec.quad_order}: "
            f"max block drift {worst:.3e}"
        )
    energies = solution.energies[states]
    mat = coarse.copy()
    mat[np.diag_indices_from(mat)] += np.add.outer(energies, energies).ravel()
    return mat


def interaction_block(
    solution: CavitySolution, index_set: Sequence[int], spec: InteractionSpec
) -> Array:
    """Pair energies, ascending, of the interacting two-particle block."""
    mat = pair_hamiltonian(solution, index_set, spec)
    return np.linalg.eigvalsh(mat)


def h_ijkl_direct(
    solution: CavitySolution,
    i: int,
    j: int,
    k: int,
    l: int,
    spec: InteractionSpec,
    quad_order: int | None = None,
) -> float:
    """Same element in original coordinates: physical wavefunctions and
    the J du dv measure. Cross-check for the transformed-coordinate form."""
    _check_indices(solution, (i, j, k, l))
    q = spec.quad_order if quad_order is None else quad_order
    x, y, w2, _, _, width = _gauss_grid(solution.profile, q)
    jac = np.repeat(width, q)
    psi = {
        s: eval_wavefunction(solution, s, x, y) for s in set((i, j, k, l))
    }
    vm = _potential_matrix(spec, x, y)
    f_ik = psi[i] * psi[k] * w2 * jac
    f_jl = psi[j] * psi[l] * w2 * jac
    return float(f_ik @ vm @ f_jl)


def write_pair_energies_csv(path, energies, header_lines=()):
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("index,E_pair\n")
        for idx, e_val in enumerate(np.asarray(energies, dtype=float)):
            fh.write(f"{idx},{e_val:.12g}\n")
