"""Step-barrier module against an independent wave-matching oracle."""

import math
import time

import numpy as np
import pytest

from openbilliards.leads import IllConditionedEnergy
from openbilliards.oned import (
    BarrierProblem,
    barrier_smatrix,
    exact_transmission,
    reaction_matrix,
    rmatrix_transmission,
    write_comparison_csv,
)


def transmission_by_matching(energy, height):
    """Plane-wave matching across [0, 1] solved as a 4x4 linear system.

    Unknowns r, a, b, t for psi = e^{ikx} + r e^{-ikx} outside left,
    a e^{iqx} + b e^{-iqx} inside, t e^{ik(x-1)} outside right. Evanescent
    interior handled by the complex square root.
    """
    k = np.lib.scimath.sqrt(complex(energy))
    q = np.lib.scimath.sqrt(complex(energy - height))
    eq = np.exp(1j * q)
    mat = np.array(
        [
            [-1.0, 1.0, 1.0, 0.0],
            [1j * k, 1j * q, -1j * q, 0.0],
            [0.0, eq, 1.0 / eq, -1.0],
            [0.0, 1j * q * eq, -1j * q / eq, -1j * k],
        ]
    )
    rhs = np.array([1.0, 1j * k, 0.0, 0.0])
    r, a, b, t = np.linalg.solve(mat, rhs)
    return float(abs(t) ** 2)


def test_zero_height_transmits_fully():
    for e_val in (0.3, 1.0, 7.5, 19.0):
        assert exact_transmission(e_val, 0.0) == 1.0


def test_resonance_at_interior_momentum_pi():
    v0 = 1.0
    assert exact_transmission(v0 + math.pi**2, v0) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("energy", [2.0, 0.5, 5.7, 13.4])
def test_exact_formula_matches_wave_matching(energy):
    v0 = 1.0
    assert exact_transmission(energy, v0) == pytest.approx(
        transmission_by_matching(energy, v0), abs=1e-10
    )


def test_exact_formula_continuous_at_step_top():
    v0 = 1.3
    below = exact_transmission(v0 - 1e-9, v0)
    at = exact_transmission(v0, v0)
    above = exact_transmission(v0 + 1e-9, v0)
    assert at == pytest.approx(1.0 / (1.0 + v0 / 4.0), rel=1e-12)
    assert below == pytest.approx(at, rel=1e-8)
    assert above == pytest.approx(at, rel=1e-8)


def test_reaction_matrix_transmission_near_exact():
    prob = BarrierProblem(height=1.0)
    err = abs(rmatrix_transmission(2.0, prob) - exact_transmission(2.0, 1.0))
    assert err < 1e-3


def test_truncation_error_decreases_monotonically():
    exact = exact_transmission(2.0, 1.0)
    errors = [
        abs(rmatrix_transmission(2.0, BarrierProblem(1.0, m_trunc=m)) - exact)
        for m in (50, 200, 1000)
    ]
    assert errors[0] > errors[1] > errors[2]


def test_zero_height_rmatrix_grid():
    prob = BarrierProblem(height=0.0)
    for e_val in np.linspace(0.5, 20.0, 40):
        if np.min(np.abs(e_val - prob.levels())) < 1e-3:
            continue
        assert rmatrix_transmission(e_val, prob) == pytest.approx(1.0, abs=1e-3)


def test_smatrix_unitary_and_symmetric():
    prob = BarrierProblem(height=1.0)
    for e_val in (0.4, 2.0, 8.3, 17.0):
        smat = barrier_smatrix(e_val, prob)
        defect = np.max(np.abs(smat @ smat.conj().T - np.eye(2)))
        assert defect < 1e-6
        assert abs(smat[0, 1] - smat[1, 0]) < 1e-12


def test_diagonal_decreases_between_poles():
    # Every series term 1/(E - E_m) falls with E, so R_rr is strictly
    # decreasing on any interval between consecutive poles.
    prob = BarrierProblem(height=1.0, m_trunc=400)
    lo = 1.0 + math.pi**2
    hi = 1.0 + 4.0 * math.pi**2
    grid = np.linspace(lo + 0.5, hi - 0.5, 25)
    values = [reaction_matrix(e_val, prob)[1, 1] for e_val in grid]
    assert np.all(np.diff(values) < 0.0)


def test_pole_guard_raises():
    prob = BarrierProblem(height=1.0)
    with pytest.raises(IllConditionedEnergy) as info:
        reaction_matrix(1.0 + math.pi**2, prob)
    assert info.value.reason == "pole"
    with pytest.raises(IllConditionedEnergy):
        rmatrix_transmission(1.0, prob)  # m = 0 level sits at E = V0


def test_input_validation():
    with pytest.raises(ValueError):
        BarrierProblem(height=-1.0)
    with pytest.raises(ValueError):
        BarrierProblem(height=1.0, m_trunc=0)
    with pytest.raises(ValueError):
        exact_transmission(-2.0, 1.0)
    with pytest.raises(ValueError):
        reaction_matrix(0.0, BarrierProblem(height=1.0))


def test_full_energy_scan_accuracy_and_speed():
    prob = BarrierProblem(height=1.0)
    energies = np.linspace(0.1, 20.0, 200)
    start = time.perf_counter()
    worst = 0.0
    kept = 0
    for e_val in energies:
        try:
            t_rm = rmatrix_transmission(e_val, prob)
        except IllConditionedEnergy:
            continue
        kept += 1
        worst = max(worst, abs(t_rm - exact_transmission(e_val, prob.height)))
    elapsed = time.perf_counter() - start
    assert kept >= 195
    assert worst <= 1e-3
    assert elapsed < 1.0


def test_comparison_csv(tmp_path):
    prob = BarrierProblem(height=1.0, m_trunc=200)
    path = tmp_path / "barrier.csv"
    energies = [0.5, 1.0, 2.0, 4.0]  # E = 1.0 is the m = 0 pole
    rows = write_comparison_csv(path, prob, energies, ("units: E absolute",))
    assert rows == 3
    lines = path.read_text().splitlines()
    assert lines[0] == "# units: E absolute"
    assert lines[1] == "E,T_exact,T_rmatrix"
    assert any(l.startswith("# skipped E=1 ") for l in lines)
    data = np.genfromtxt(
        [l for l in lines if not l.startswith("#")], delimiter=",", names=True
    )
    assert data["E"].tolist() == [0.5, 2.0, 4.0]
    np.testing.assert_allclose(data["T_exact"], data["T_rmatrix"], atol=5e-3)
