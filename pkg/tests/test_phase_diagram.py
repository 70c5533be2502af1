import math

import numpy as np
import pytest

from qpd.basis import ParityKey, SectorKey, all_parity_keys, gtcm_candidate_sectors
from qpd.model import CouplingPoint, preset, symmetry_generators
from qpd.phase_diagram import (
    DISCONTINUOUS,
    STABLE_CONTINUOUS,
    UNSTABLE_CONTINUOUS,
    DegenerateGroundError,
    GridSpec,
    ScanResult,
    Thresholds,
    TransitionClass,
    bures_distance,
    detect_separatrix,
    energy_derivative,
    fidelity_line,
    scan_ground,
)
from qpd.solver import converge_cutoff, ground_over_blocks


def setup(config, Na):
    spec = preset(config, Na)
    gens = symmetry_generators(spec.topology, spec.n, spec.ell)
    return spec, gens


def pt(spec, x1, x2):
    return CouplingPoint.from_values(spec, (x1, x2))


class TestGridSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            GridSpec((0, 5), (0, 5), 1, 3)
        with pytest.raises(ValueError):
            GridSpec((0, 5), (5, 5), 3, 3)
        with pytest.raises(ValueError):
            GridSpec((-1, 5), (0, 5), 3, 3)
        with pytest.raises(ValueError):
            GridSpec((0, 5), (0, 5), 3, 3, model="mean-field")

    def test_axes(self):
        grid = GridSpec((0, 1), (0, 2), 3, 5, model="rwa")
        assert np.allclose(grid.x1_values(), [0, 0.5, 1])
        assert len(grid.x2_values()) == 5


class TestTransitionClass:
    def test_parity_change_forces_discontinuous(self):
        with pytest.raises(ValueError):
            TransitionClass(STABLE_CONTINUOUS, parity_change=True)
        TransitionClass(DISCONTINUOUS, parity_change=True)


class TestBures:
    def test_identical_states(self):
        spec, gens = setup("lambda", 1)
        sol = converge_cutoff(spec, gens, pt(spec, 1.0, 1.0), ParityKey((0, 1)))
        m = bures_distance(sol, sol)
        # the square root amplifies the last-ulp rounding of the overlap
        assert m.bures == pytest.approx(0.0, abs=1e-7)
        assert m.tr_product == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_states(self):
        spec, gens = setup("lambda", 1)
        p = pt(spec, 2.0, 2.0)
        a = converge_cutoff(spec, gens, p, ParityKey((0, 0)))
        b = converge_cutoff(spec, gens, p, ParityKey((1, 1)))
        m = bures_distance(a, b)
        assert m.tr_product == 0.0
        assert m.bures == pytest.approx(math.sqrt(2.0), abs=1e-14)

    def test_identity_with_trace_product(self):
        spec, gens = setup("lambda", 1)
        a = converge_cutoff(spec, gens, pt(spec, 2.12, 0.5), ParityKey((0, 1)))
        b = converge_cutoff(spec, gens, pt(spec, 2.40, 0.5), ParityKey((0, 1)))
        m = bures_distance(a, b)
        assert m.bures**2 == pytest.approx(
            2.0 * (1.0 - math.sqrt(m.tr_product)), abs=1e-12
        )
        assert 0.0 < m.tr_product < 1.0

    def test_symmetry(self):
        spec, gens = setup("v", 1)
        a = converge_cutoff(spec, gens, pt(spec, 1.0, 0.5), ParityKey((0, 0)))
        b = converge_cutoff(spec, gens, pt(spec, 1.2, 0.5), ParityKey((0, 0)))
        assert bures_distance(a, b).tr_product == pytest.approx(
            bures_distance(b, a).tr_product, abs=1e-15
        )

    def test_rejects_unnormalized(self):
        spec, gens = setup("v", 1)
        sol = converge_cutoff(spec, gens, pt(spec, 1.0, 0.5), ParityKey((0, 0)))
        import dataclasses

        bad = dataclasses.replace(sol, vector=sol.vector * 2.0)
        with pytest.raises(ValueError):
            bures_distance(bad, sol)


def synthetic_scan(labels, f1, parities=None):
    """Single active column along the first axis, padded to a valid grid."""
    n1 = len(labels)
    nan = float("nan")
    if parities is None:
        parities = [ParityKey((0, 0))] * n1
    grid = GridSpec((0, n1 - 1.0), (0, 1.0), n1, 2)
    return ScanResult(
        grid=grid,
        x1=np.arange(n1, dtype=float),
        x2=np.array([0.0, 1.0]),
        energy=np.zeros((n1, 2)),
        labels=[[lab, None] for lab in labels],
        parities=[[par, None] for par in parities],
        probs=np.zeros((n1, 2, 3)),
        entropy=np.zeros((n1, 2)),
        cutoffs=[[(4, 4), None] for _ in range(n1)],
        fidelity_x1=np.column_stack([np.asarray(f1, dtype=float), [nan] * n1]),
        fidelity_x2=np.full((n1, 2), nan),
        status=[["ok", "ok"] for _ in range(n1)],
    )


class TestDetectSeparatrix:
    def test_label_change_is_discontinuous(self):
        a, b = SectorKey((0, 0)), SectorKey((1, 0))
        pe, po = ParityKey((0, 0)), ParityKey((1, 0))
        scan = synthetic_scan(
            labels=[a, a, b, b],
            f1=[1.0, 0.0, 1.0, float("nan")],
            parities=[pe, pe, po, po],
        )
        points = detect_separatrix(scan)
        assert len(points) == 1
        p = points[0]
        assert p.kind == DISCONTINUOUS and p.parity_change
        assert p.x1 == pytest.approx(1.5)

    def test_minimum_classification(self):
        a = ParityKey((0, 0))
        for fmin, kind in [
            (0.97, STABLE_CONTINUOUS),
            (0.3, UNSTABLE_CONTINUOUS),
            (1e-9, DISCONTINUOUS),
        ]:
            scan = synthetic_scan(
                labels=[a] * 5,
                f1=[1.0, fmin, 0.999999999, 1.0, float("nan")],
                parities=[a] * 5,
            )
            points = detect_separatrix(scan)
            assert [q.kind for q in points] == [kind], fmin

    def test_shallow_dips_ignored(self):
        a = ParityKey((0, 0))
        scan = synthetic_scan(
            labels=[a] * 5,
            f1=[1.0, 1.0 - 1e-5, 1.0, 1.0, float("nan")],
            parities=[a] * 5,
        )
        assert detect_separatrix(scan) == []

    def test_plateau_leftmost(self):
        a = ParityKey((0, 0))
        scan = synthetic_scan(
            labels=[a] * 6,
            f1=[1.0, 0.9, 0.9, 1.0, 1.0, float("nan")],
            parities=[a] * 6,
        )
        points = detect_separatrix(scan)
        assert len(points) == 1
        assert points[0].x1 == pytest.approx(1.5)


class TestEnergyDerivative:
    def test_zero_at_origin(self):
        spec, gens = setup("lambda", 1)
        for edge in spec.topology.edges:
            d = energy_derivative(spec, gens, pt(spec, 0.0, 0.0), edge)
            assert d == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("x,model", [((1.7, 0.9), "dicke"), ((2.6, 3.1), "dicke")])
    def test_matches_finite_difference(self, x, model):
        spec, gens = setup("lambda", 1)
        labels = all_parity_keys(2)
        h = 1e-4
        for axis, edge in enumerate(spec.topology.edges):
            exact = energy_derivative(
                spec, gens, pt(spec, *x), edge, model=model, labels=labels
            )
            xp, xm = list(x), list(x)
            xp[axis] += h
            xm[axis] -= h
            ep = ground_over_blocks(spec, gens, pt(spec, *xp), labels).solution.energy
            em = ground_over_blocks(spec, gens, pt(spec, *xm), labels).solution.energy
            fd = (ep - em) / (2 * h)
            assert exact == pytest.approx(fd, rel=1e-4, abs=1e-7)

    def test_rwa_uses_conserving_part(self):
        spec, gens = setup("xi", 1)
        labels = gtcm_candidate_sectors("xi", 6, 6, 1)
        h = 1e-4
        x = (1.4, 0.8)
        edge = spec.topology.edges[0]
        exact = energy_derivative(
            spec, gens, pt(spec, *x), edge, model="rwa", labels=labels
        )
        ep = ground_over_blocks(spec, gens, pt(spec, x[0] + h, x[1]), labels).solution.energy
        em = ground_over_blocks(spec, gens, pt(spec, x[0] - h, x[1]), labels).solution.energy
        assert exact == pytest.approx((ep - em) / (2 * h), rel=1e-4)


class TestFidelityLine:
    def test_label_change_gives_zero(self):
        spec, gens = setup("xi", 1)
        labels = gtcm_candidate_sectors("xi", 8, 8, 1)
        values = fidelity_line(
            spec, gens, "rwa", fixed_axis=2, fixed_value=0.0,
            varying=np.linspace(0.0, 3.0, 7), labels=labels,
        )
        assert values.min() == 0.0  # crossing out of the normal region
        assert values.max() == pytest.approx(1.0, abs=1e-9)

    def test_validates_input(self):
        spec, gens = setup("xi", 1)
        with pytest.raises(ValueError):
            fidelity_line(spec, gens, "rwa", 3, 0.0, [0.0, 1.0])
        with pytest.raises(ValueError):
            fidelity_line(spec, gens, "rwa", 1, 0.0, [0.0])
        with pytest.raises(ValueError):
            fidelity_line(spec, gens, "rwa", 1, 0.0, [1.0, 1.0])


class TestScanGround:
    def test_gtcm_xi_small_grid(self):
        spec, gens = setup("xi", 1)
        grid = GridSpec((0, 3), (0, 3), 5, 5, model="rwa")
        scan = scan_ground(spec, gens, grid, kmax=(8, 8))
        assert scan.labels[0][0] == SectorKey((0, 0))
        assert scan.energy[0, 0] == pytest.approx(0.0, abs=1e-12)
        assert scan.failures == []
        # fidelity fields live in [0, 1] where defined
        for f in (scan.fidelity_x1, scan.fidelity_x2):
            vals = f[~np.isnan(f)]
            assert np.all((vals >= 0) & (vals <= 1))
        # all atoms in the lowest level at the origin
        assert scan.probs[0, 0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_scan_matches_pointwise_solve(self):
        spec, gens = setup("xi", 1)
        grid = GridSpec((0, 3), (0, 3), 4, 4, model="rwa")
        labels = gtcm_candidate_sectors("xi", 8, 8, 1)
        scan = scan_ground(spec, gens, grid, labels=labels)
        # column-major recomputation agrees: scan order cannot matter
        for i in [0, 3]:
            for j in [1, 2]:
                res = ground_over_blocks(
                    spec, gens, pt(spec, scan.x1[i], scan.x2[j]), labels
                )
                assert res.solution.label == scan.labels[i][j]
                assert res.solution.energy == pytest.approx(
                    scan.energy[i, j], abs=1e-10
                )

    def test_dicke_lambda_parity_change_segment(self):
        spec, gens = setup("lambda", 1)
        grid = GridSpec((0, 4), (0, 4), 6, 6)
        scan = scan_ground(spec, gens, grid)
        assert scan.failures == []
        found_zero = False
        for i in range(5):
            for j in range(6):
                la, lb = scan.labels[i][j], scan.labels[i + 1][j]
                if la is not None and lb is not None and la != lb:
                    assert scan.fidelity_x1[i, j] <= 1e-10
                    found_zero = True
        assert found_zero
        points = detect_separatrix(scan)
        kinds = {p.kind for p in points}
        assert DISCONTINUOUS in kinds
