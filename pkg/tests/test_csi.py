import itertools
import math

import numpy as np
import pytest

from ddpp import csi, dpp, linalg
from ddpp.errors import InvalidInputError


def random_projector(rng, m, held_rows):
    Z_Y = rng.normal(size=(held_rows, m))
    return csi.compute_projector(Z_Y, m), Z_Y


class TestComputeProjector:
    def test_empty_input_gives_identity(self):
        H = csi.compute_projector(np.zeros((0, 4)), 4)
        assert np.array_equal(H.matrix, np.eye(4))
        assert H.rank == 4

    def test_axis_aligned_row(self):
        H = csi.compute_projector(np.array([[1.0, 0.0, 0.0]]), 3)
        assert H.matrix == pytest.approx(np.diag([0.0, 1.0, 1.0]), abs=1e-12)
        assert H.rank == 2

    def test_annihilates_held_rows_and_fixes_complement(self):
        rng = np.random.default_rng(200)
        H, Z_Y = random_projector(rng, 6, 3)
        assert np.max(np.abs(H.matrix @ Z_Y.T)) <= 1e-9
        v = rng.normal(size=6)
        v -= Z_Y.T @ np.linalg.solve(Z_Y @ Z_Y.T, Z_Y @ v)  # orthogonal part
        assert H.matrix @ v == pytest.approx(v, abs=1e-9)

    def test_projector_invariants(self):
        rng = np.random.default_rng(201)
        for rows in (1, 3, 5):
            H, Z_Y = random_projector(rng, 8, rows)
            M = H.matrix
            assert np.max(np.abs(M - M.T)) <= 1e-9
            assert np.max(np.abs(M @ M - M)) <= 1e-7
            w = np.linalg.eigvalsh(M)
            assert np.all((np.abs(w) <= 1e-7) | (np.abs(w - 1) <= 1e-7))
            assert H.rank == 8 - rows

    def test_rank_deficient_held_rows(self):
        rng = np.random.default_rng(202)
        base = rng.normal(size=(2, 7))
        Z_Y = np.vstack([base, base[0] + base[1]])  # rank 2, 3 rows
        H = csi.compute_projector(Z_Y, 7)
        assert H.rank == 5

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            csi.compute_projector(np.ones((2, 3)), 4)


class TestSplitBudget:
    def test_reference_configuration(self):
        assert csi.split_budget(45, 512, 0.5) == (151, 22)

    def test_minimal_budget(self):
        assert csi.split_budget(1 / 8, 8, 0.5) == (1, 0)

    def test_zero_block_fraction_spends_all_on_spectral_terms(self):
        assert csi.split_budget(3.0, 16, 0.0) == (0, 3)

    def test_budget_never_exceeded_on_grid(self):
        for R in (0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0):
            for m in (8, 16, 32, 64):
                if R * m < 1:
                    continue
                for bf in (0.0, 0.25, 0.5, 0.75, 1.0):
                    r0, r1 = csi.split_budget(R, m, bf)
                    assert (r0 * r0 + r0) / 2 + r1 * m <= R * m
                    assert 0 <= r0 <= m and 0 <= r1 <= m


class TestSelectDims:
    def test_identity_ties_break_low(self):
        H = csi.Projector(matrix=np.eye(5), rank=5)
        assert csi.select_dims(H, 3) == [0, 1, 2]

    def test_zeroed_dimension_skipped(self):
        H = csi.Projector(matrix=np.diag([0.0, 1.0, 1.0]), rank=2)
        assert csi.select_dims(H, 1) == [1]

    def test_rank_exhaustion_returns_fewer(self):
        rng = np.random.default_rng(210)
        H, _ = random_projector(rng, 6, 4)  # rank 2
        assert len(csi.select_dims(H, 5)) == 2

    def test_greedy_close_to_exhaustive_in_log_domain(self):
        rng = np.random.default_rng(211)
        H, _ = random_projector(rng, 9, 2)
        picked = csi.select_dims(H, 4)
        greedy_det = np.linalg.det(H.matrix[np.ix_(picked, picked)])
        best = max(np.linalg.det(H.matrix[np.ix_(J, J)])
                   for J in itertools.combinations(range(9), 4))
        assert math.log(greedy_det) >= math.log(best) - math.log(1 / (1 - 1 / math.e)) - 1e-9


class TestCompressReconstruct:
    def test_identity_full_budget_roundtrips_exactly(self):
        m = 6
        H = csi.Projector(matrix=np.eye(m), rank=m)
        packet = csi.compress(H, R=(m + 1) / 2, block_fraction=1.0)
        assert packet.block_size == m
        assert np.array_equal(csi.reconstruct(packet), np.eye(m))

    def test_block_only_path_matches_embedding(self):
        rng = np.random.default_rng(220)
        H, _ = random_projector(rng, 8, 3)
        packet = csi.compress(H, R=1.0, block_fraction=1.0)  # r1 = 0
        assert packet.residual_rank == 0
        selected = list(packet.selected_dims)
        block = H.matrix[np.ix_(selected, selected)]
        expected = csi.embed_block(block, selected, 8)
        assert csi.reconstruct(packet) == pytest.approx(expected, abs=1e-12)

    def test_spectral_terms_never_increase_residual_error(self):
        rng = np.random.default_rng(221)
        H, _ = random_projector(rng, 16, 4)
        packet = csi.compress(H, R=3.5, block_fraction=0.4)  # r0=6, r1=2
        assert (packet.block_size, packet.residual_rank) <= (6, 2)
        selected = list(packet.selected_dims)
        block = H.matrix[np.ix_(selected, selected)]
        base_err = np.linalg.norm(H.matrix - csi.embed_block(block, selected, 16))
        err = np.linalg.norm(csi.reconstruct(packet) - H.matrix)
        assert err <= base_err + 1e-12

    def test_budget_respected_across_grid(self):
        rng = np.random.default_rng(222)
        for m in (8, 16, 32):
            H, _ = random_projector(rng, m, 3)
            for R in (0.5, 1.0, 2.0):
                if R * m < 1:
                    continue
                for bf in (0.0, 0.5, 1.0):
                    packet = csi.compress(H, R=R, block_fraction=bf)
                    assert packet.element_count <= R * m

    def test_reconstruction_is_psd(self):
        # embedded principal block of a projector plus positive eigen-terms
        rng = np.random.default_rng(223)
        H, _ = random_projector(rng, 12, 4)
        packet = csi.compress(H, R=2.0, block_fraction=0.5)
        w = np.linalg.eigvalsh(csi.reconstruct(packet))
        assert w.min() >= -1e-9

    def test_roundtrip_symmetry(self):
        rng = np.random.default_rng(224)
        H, _ = random_projector(rng, 10, 3)
        out = csi.reconstruct(csi.compress(H, R=2.5, block_fraction=0.5))
        assert np.max(np.abs(out - out.T)) <= 1e-12

    def test_svd_variant_exact_at_full_rank_budget(self):
        rng = np.random.default_rng(225)
        H, _ = random_projector(rng, 10, 3)  # rank 7
        packet = csi.compress_svd(H, R=8)
        assert np.max(np.abs(csi.reconstruct(packet) - H.matrix)) <= 1e-9

    def test_random_sketch_block_dims_within_budget(self):
        rng = np.random.default_rng(226)
        H, _ = random_projector(rng, 12, 2)
        packet = csi.compress_random_sketch(H, R=2.0, rng=np.random.default_rng(0))
        assert packet.residual_rank == 0
        assert packet.element_count <= 2.0 * 12

    def test_exact_packet_roundtrip(self):
        rng = np.random.default_rng(227)
        H, _ = random_projector(rng, 7, 2)
        packet = csi.exact_packet(H)
        assert np.max(np.abs(csi.reconstruct(packet) - H.matrix)) <= 1e-15

    def test_reconstruct_rejects_malformed(self):
        packet = csi.CsiPacket(dims=4, selected_dims=(0, 1),
                               principal_block=np.zeros(2),  # needs 3
                               residual_values=np.zeros(0),
                               residual_vectors=np.zeros((0, 4)))
        with pytest.raises(InvalidInputError):
            csi.reconstruct(packet)


class TestPrecode:
    def test_identity_feedback_doubles_with_momentum(self):
        rng = np.random.default_rng(230)
        Z = rng.normal(size=(4, 5))
        assert csi.precode(Z, np.eye(5), momentum=True) == pytest.approx(2 * Z)

    def test_zero_feedback_is_identity_with_momentum(self):
        rng = np.random.default_rng(231)
        Z = rng.normal(size=(4, 5))
        assert csi.precode(Z, np.zeros((5, 5)), momentum=True) == pytest.approx(Z)

    def test_exact_projector_recovers_conditional_determinant(self):
        rng = np.random.default_rng(232)
        for _ in range(5):
            Z = rng.normal(size=(10, 8))
            A, Y = [0, 1, 2], [6, 8, 9]
            H = csi.compute_projector(Z[Y], 8)
            Zt = csi.precode(Z, H.matrix, momentum=False)
            lhs = np.linalg.det(Zt[A] @ Zt[A].T)
            rhs = np.linalg.det(Z[A] @ H.matrix @ Z[A].T)
            assert lhs == pytest.approx(rhs, rel=1e-6)

    def test_exact_feedback_selection_matches_conditional_greedy(self):
        # source-side greedy on pre-coded rows == centralized greedy seeded
        # with the held items, restricted to the source's rows
        rng = np.random.default_rng(233)
        for _ in range(5):
            Z_S = rng.normal(size=(12, 9))
            Z_Y = rng.normal(size=(4, 9))
            H = csi.compute_projector(Z_Y, 9)
            local = dpp.greedy_map(linalg.gram(csi.precode(Z_S, H.matrix, momentum=False)), 4)
            stacked = np.vstack([Z_S, Z_Y])
            central = dpp.greedy_map(linalg.gram(stacked), 4,
                                     preselected=range(12, 16))
            assert local.indices == central.indices
            assert local.stepwise_logdets == pytest.approx(
                central.stepwise_logdets, abs=1e-8)


class TestBoundChain:
    def test_single_source_lower_bound(self):
        # joint feature-space volume dominates the averaged per-source volumes
        rng = np.random.default_rng(240)
        eps = 1e-6
        for _ in range(10):
            m, N = 6, 3
            parts = [rng.normal(size=(4, m)) for _ in range(N)]
            inner = sum(Z.T @ Z for Z in parts) / N
            joint = np.linalg.slogdet(inner / eps + np.eye(m))[1]
            lower = np.mean([np.linalg.slogdet(Z @ Z.T / eps + np.eye(4))[1]
                             for Z in parts])
            assert joint - lower >= -1e-8

    def test_conditional_bound_chain(self):
        rng = np.random.default_rng(241)
        eps = 1e-6
        for _ in range(10):
            m, N = 7, 3
            Z = rng.normal(size=(18, m))
            sources = [list(range(6 * i, 6 * i + 6)) for i in range(N)]
            final = [s[:4] for s in sources]          # full selections A_i
            sent = [s[:2] for s in sources]           # prefixes already uplinked
            held = set().union(*sent)
            real = np.linalg.slogdet(
                sum(Z[a].T @ Z[a] for a in final) / eps + np.eye(m))[1]
            cond, lower = [], []
            for i in range(N):
                Y = sorted(held - set(sent[i]))
                a = final[i]
                cond.append(np.linalg.slogdet(
                    (Z[a].T @ Z[a] + Z[Y].T @ Z[Y]) / eps + np.eye(m))[1])
                lower.append(np.linalg.slogdet(Z[a].T @ Z[a] / eps + np.eye(m))[1])
            assert real - np.mean(cond) >= -1e-8
            assert np.mean(cond) - np.mean(lower) >= -1e-8

    def test_minor_product_upper_bound(self):
        # squared minors of the pre-coded rows never exceed the raw volume
        # times the corresponding projector minor
        rng = np.random.default_rng(242)
        for m in (5, 6, 7):
            Z_A = rng.normal(size=(3, m))
            H, _ = random_projector(rng, m, 2)
            root = linalg.psd_sqrt(H.matrix)
            raw = np.linalg.det(Z_A @ Z_A.T)
            ZH = Z_A @ root
            for J in itertools.combinations(range(m), 3):
                lhs = np.linalg.det(ZH[:, list(J)]) ** 2
                rhs = raw * np.linalg.det(H.matrix[np.ix_(J, J)])
                assert lhs <= rhs + 1e-9
