import io
import math

import numpy as np
import pytest

from qpd.basis import (
    ParityKey,
    SectorBasis,
    SectorKey,
    enumerate_parity_basis,
    enumerate_rwa_sector,
)
from qpd.hamiltonian import (
    SparseOperator,
    build_H_diag,
    build_H_full,
    build_H_rwa,
    build_K,
    interaction_operator,
)
from qpd.model import CouplingPoint, preset, symmetry_generators


def setup(config, Na):
    spec = preset(config, Na)
    gens = symmetry_generators(spec.topology, spec.n, spec.ell)
    return spec, gens


def point(spec, x1, x2):
    return CouplingPoint.from_values(spec, (x1, x2))


class TestSparseOperator:
    def test_folds_and_dedupes(self):
        op = SparseOperator.from_triplets(
            3, [(1, 0, 2.0), (0, 1, 1.0), (2, 2, 5.0), (0, 0, 0.0)]
        )
        assert op.nnz == 2
        dense = op.to_dense()
        assert dense[0, 1] == dense[1, 0] == 3.0
        assert dense[2, 2] == 5.0

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            SparseOperator.from_triplets(2, [(0, 2, 1.0)])

    def test_dump_format(self):
        op = SparseOperator.from_triplets(2, [(0, 1, -0.5)])
        buf = io.StringIO()
        op.dump(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "2 1"
        row, col, val = lines[1].split()
        assert (int(row), int(col), float(val)) == (0, 1, -0.5)


class TestDiagonal:
    def test_vacuum_energy_zero(self):
        spec, gens = setup("xi", 1)
        bas = enumerate_rwa_sector(spec, gens, SectorKey((0, 0)), (2, 2))
        assert build_H_diag(bas, spec).to_dense()[0, 0] == 0.0

    def test_xi_single_photon(self):
        spec, gens = setup("xi", 1)
        bas = enumerate_rwa_sector(spec, gens, SectorKey((1, 0)), (2, 2))
        labels = [s.key() for s in bas.states]
        h = build_H_diag(bas, spec).to_dense()
        i = labels.index(((1, 0), (1, 0, 0)))
        assert h[i, i] == pytest.approx(0.25)

    def test_lambda_photon_plus_level(self):
        spec, gens = setup("lambda", 1)
        bas = enumerate_rwa_sector(spec, gens, SectorKey((1, 1)), (2, 2))
        labels = [s.key() for s in bas.states]
        h = build_H_diag(bas, spec).to_dense()
        i = labels.index(((0, 1), (0, 1, 0)))
        assert h[i, i] == pytest.approx(0.9 + 0.1)


class TestSymmetryOperators:
    def test_k_values(self):
        spec, gens = setup("xi", 1)
        bas = enumerate_parity_basis(spec, gens, ParityKey((0, 1)), None, (2, 2))
        k1 = build_K(bas, gens[0]).to_dense()
        k2 = build_K(bas, gens[1]).to_dense()
        labels = [s.key() for s in bas.states]
        i = labels.index(((1, 1), (1, 0, 0)))
        assert k1[i, i] == 2.0
        j = labels.index(((0, 0), (0, 0, 1)))
        assert k2[j, j] == 1.0
        assert np.allclose(k1, np.diag(np.diag(k1)))

    def test_rwa_commutes_with_k(self):
        spec, gens = setup("lambda", 2)
        bas = enumerate_parity_basis(spec, gens, ParityKey((0, 1)), None, (4, 4))
        hd = build_H_diag(bas, spec).to_dense()
        rot = sum(
            -1.3 * spec.mubar(e) * interaction_operator(bas, spec, e, "rotating").to_dense()
            for e in spec.topology.edges
        )
        h = hd + rot
        for gen in gens:
            k = build_K(bas, gen).to_dense()
            assert np.max(np.abs(h @ k - k @ h)) == 0.0


class TestRotatingBlocks:
    def test_two_level_block_analytic(self):
        spec, gens = setup("xi", 1)
        bas = enumerate_rwa_sector(spec, gens, SectorKey((1, 0)), (2, 2))
        x = 1.7
        h = build_H_rwa(bas, spec, point(spec, x, 0.3)).to_dense()
        mu = x * spec.mubar((1, 2, 1))
        Omega1, omega2 = 0.25, 0.25
        expected = np.array([[omega2, -mu], [-mu, Omega1]])
        # order: states sorted by (kappa, nu, b): |0,0;0,1,0> then |1,0;1,0,0>
        assert np.allclose(h, expected)
        ground = np.linalg.eigvalsh(h)[0]
        analytic = (Omega1 + omega2) / 2 - math.sqrt(
            (Omega1 - omega2) ** 2 / 4 + mu**2
        )
        assert ground == pytest.approx(analytic, abs=1e-14)

    def test_zero_coupling_reduces_to_diagonal(self):
        spec, gens = setup("v", 2)
        bas = enumerate_rwa_sector(spec, gens, SectorKey((2, 1)), (4, 4))
        h = build_H_rwa(bas, spec, point(spec, 0.0, 0.0)).to_dense()
        assert np.allclose(h, build_H_diag(bas, spec).to_dense())

    def test_lambda_three_level_block(self):
        spec, gens = setup("lambda", 1)
        bas = enumerate_rwa_sector(spec, gens, SectorKey((1, 1)), (2, 2))
        x13, x23 = 2.0, 1.5
        h = build_H_rwa(bas, spec, point(spec, x13, x23)).to_dense()
        labels = [s.key() for s in bas.states]
        a = labels.index(((0, 0), (0, 0, 1)))  # |0,0;0,0,1>
        b = labels.index(((0, 1), (0, 1, 0)))  # |0,1;0,1,0>
        c = labels.index(((1, 0), (1, 0, 0)))  # |1,0;1,0,0>
        expected = np.zeros((3, 3))
        expected[a, a] = 1.0
        expected[b, b] = 1.0
        expected[c, c] = 1.0
        expected[a, c] = expected[c, a] = -x13 * 0.5
        expected[a, b] = expected[b, a] = -x23 * 0.45
        assert np.allclose(h, expected)

    def test_counter_part_vanishes_in_sector(self):
        spec, gens = setup("xi", 1)
        bas = enumerate_rwa_sector(spec, gens, SectorKey((2, 1)), (3, 3))
        counter = interaction_operator(bas, spec, (1, 2, 1), "counter")
        assert counter.nnz == 0

    def test_requires_sector_basis(self):
        spec, gens = setup("xi", 1)
        par = enumerate_parity_basis(spec, gens, ParityKey((0, 0)), None, (2, 2))
        with pytest.raises(ValueError):
            build_H_rwa(par, spec, point(spec, 1.0, 1.0))


class TestFullHamiltonian:
    def test_zero_coupling_block_diagonal(self):
        spec, gens = setup("lambda", 1)
        bas = enumerate_parity_basis(spec, gens, ParityKey((1, 1)), None, (3, 3))
        h = build_H_full(bas, spec, point(spec, 0.0, 0.0)).to_dense()
        assert np.allclose(h, build_H_diag(bas, spec).to_dense())

    def test_counter_rotating_element(self):
        spec, gens = setup("xi", 1)
        bas = enumerate_parity_basis(spec, gens, ParityKey((0, 0)), None, (3, 3))
        x12 = 0.8
        h = build_H_full(bas, spec, point(spec, x12, 0.0)).to_dense()
        labels = [s.key() for s in bas.states]
        a = labels.index(((0, 0), (1, 0, 0)))  # kappa (0,0)
        b = labels.index(((1, 0), (0, 1, 0)))  # kappa (2,0)
        assert h[a, b] == pytest.approx(-x12 * spec.mubar((1, 2, 1)))

    def test_entries_stay_within_sector_for_rotating_part(self):
        spec, gens = setup("v", 1)
        bas = enumerate_parity_basis(spec, gens, ParityKey((0, 1)), None, (4, 4))
        for edge in spec.topology.edges:
            rot = interaction_operator(bas, spec, edge, "rotating")
            for r, c in zip(rot.rows, rot.cols):
                sr, sc = bas.states[r], bas.states[c]
                kr = tuple(g.eigenvalue(sr.nu, sr.b) for g in gens)
                kc = tuple(g.eigenvalue(sc.nu, sc.b) for g in gens)
                assert kr == kc

    def test_full_entries_shift_sectors_evenly(self):
        spec, gens = setup("xi", 1)
        bas = enumerate_parity_basis(spec, gens, ParityKey((0, 0)), None, (4, 4))
        h = build_H_full(bas, spec, point(spec, 1.0, 1.0))
        for r, c in zip(h.rows, h.cols):
            sr, sc = bas.states[r], bas.states[c]
            kr = tuple(g.eigenvalue(sr.nu, sr.b) for g in gens)
            kc = tuple(g.eigenvalue(sc.nu, sc.b) for g in gens)
            assert all((a - b) % 2 == 0 for a, b in zip(kr, kc))

    def test_requires_parity_basis(self):
        spec, gens = setup("xi", 1)
        sec = enumerate_rwa_sector(spec, gens, SectorKey((1, 0)), (2, 2))
        with pytest.raises(ValueError):
            build_H_full(sec, spec, point(spec, 1.0, 1.0))

    def test_rabi_subsystem_reduction(self):
        # With the second coupling off, the states with no mode-2 photons and
        # an empty third level evolve as a bare two-level (Rabi) system.
        spec, gens = setup("xi", 1)
        cut = 6
        bas = enumerate_parity_basis(spec, gens, ParityKey((0, 0)), None, (cut, cut))
        x12 = 1.3
        h = build_H_full(bas, spec, point(spec, x12, 0.0)).to_dense()

        sub = [i for i, s in enumerate(bas.states) if s.nu[1] == 0 and s.b[2] == 0]
        hsub = h[np.ix_(sub, sub)]

        # two-level model built from scratch: states (nu1, m), m = 0 lower
        Omega1, omega2 = 0.25, 0.25
        mu = x12 * 0.5 * math.sqrt(Omega1 * omega2)
        rabi_states = []
        for i in sub:
            s = bas.states[i]
            rabi_states.append((s.nu[0], 0 if s.b[0] == 1 else 1))
        dim = len(rabi_states)
        rabi = np.zeros((dim, dim))
        idx = {st: i for i, st in enumerate(rabi_states)}
        for st, i in idx.items():
            nu1, m = st
            rabi[i, i] = Omega1 * nu1 + omega2 * m
            for nu2, m2 in [(nu1 + 1, 1 - m), (nu1 - 1, 1 - m)]:
                j = idx.get((nu2, m2))
                if j is not None:
                    rabi[i, j] = -mu * math.sqrt(max(nu1, nu2))
        assert np.allclose(hsub, rabi)


class TestOrderingInvariance:
    def test_matrix_elements_independent_of_state_order(self):
        spec, gens = setup("lambda", 2)
        bas = enumerate_parity_basis(spec, gens, ParityKey((0, 0)), None, (3, 3))
        rng = np.random.default_rng(7)
        perm = rng.permutation(bas.dim)
        shuffled = SectorBasis(
            key=bas.key,
            states=tuple(bas.states[p] for p in perm),
            cutoff=bas.cutoff,
            generators=bas.generators,
        )
        pt = point(spec, 0.9, 1.8)
        h = build_H_full(bas, spec, pt).to_dense()
        hs = build_H_full(shuffled, spec, pt).to_dense()
        assert np.allclose(hs, h[np.ix_(perm, perm)])
