"""Objective terms: closed-form cases, brute-force oracles, gradients."""

import numpy as np
import pytest

from gradcheck import assert_gradients_match
from unsupix import objective as obj
from unsupix.segmenter import RunConfig
from unsupix.tensor import Tensor


def random_assignment(h, w, n, seed=0):
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((h, w, n)) * 2
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# -- independent scalar oracles (plain loops, no shared code with the package)


def oracle_clustering(p, lam):
    h, w, n = p.shape
    pixel = 0.0
    for y in range(h):
        for x in range(w):
            for c in range(n):
                v = max(p[y, x, c], 1e-12)
                pixel -= p[y, x, c] * np.log(v)
    phat = p.mean(axis=(0, 1))
    size = sum(phat[c] * np.log(max(phat[c], 1e-12)) for c in range(n))
    return pixel / (h * w) + lam * size


def oracle_smoothness(p, wx, wy):
    h, w, n = p.shape
    total = 0.0
    for y in range(h):
        for x in range(w):
            if x + 1 < w:
                total += sum(abs(p[y, x + 1, c] - p[y, x, c]) for c in range(n)) * wx[y, x]
            if y + 1 < h:
                total += sum(abs(p[y + 1, x, c] - p[y, x, c]) for c in range(n)) * wy[y, x]
    return total / (h * w)


class TestClusteringLoss:
    def test_one_hot_single_pixel_is_zero(self):
        p = np.zeros((1, 1, 4))
        p[0, 0, 2] = 1.0
        for lam in (0.0, 1.0, 2.0):
            assert obj.clustering_loss(Tensor(p), lam).item() == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize("n,lam", [(4, 0.0), (8, 1.0), (16, 2.0)])
    def test_uniform_assignment_closed_form(self, n, lam):
        p = np.full((5, 3, n), 1.0 / n)
        value = obj.clustering_loss(Tensor(p), lam).item()
        assert value == pytest.approx((1 - lam) * np.log(n), rel=1e-6)

    def test_two_pixel_anticorrelated(self):
        p = np.array([[[1.0, 0.0], [0.0, 1.0]]])  # (1, 2, 2)
        value = obj.clustering_loss(Tensor(p), 2.0).item()
        assert value == pytest.approx(-2 * np.log(2), rel=1e-6)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError, match="lambda"):
            obj.clustering_loss(Tensor(np.full((2, 2, 2), 0.5)), -0.1)

    def test_matches_scalar_oracle(self):
        p = random_assignment(5, 4, 6, seed=1)
        value = obj.clustering_loss(Tensor(p), 1.7).item()
        assert value == pytest.approx(oracle_clustering(p, 1.7), rel=1e-6)

    def test_bounds(self):
        for seed in range(5):
            p = random_assignment(6, 6, 5, seed=seed)
            n = 5
            pixel_term = obj.clustering_loss(Tensor(p), 0.0).item()
            assert 0 <= pixel_term <= np.log(n) + 1e-9
            full = obj.clustering_loss(Tensor(p), 2.0).item()
            assert -2 * np.log(n) - 1e-9 <= full <= np.log(n) + 1e-9

    def test_label_permutation_invariance(self):
        p = random_assignment(4, 4, 6, seed=2)
        perm = np.random.default_rng(3).permutation(6)
        a = obj.clustering_loss(Tensor(p), 1.3).item()
        b = obj.clustering_loss(Tensor(p[:, :, perm]), 1.3).item()
        assert a == pytest.approx(b, rel=1e-9)

    def test_lambda_zero_is_pure_pixel_entropy(self):
        p = random_assignment(5, 5, 4, seed=30)
        value = obj.clustering_loss(Tensor(p), 0.0).item()
        pixel_entropy = float(-(p * np.log(p)).sum() / (5 * 5))
        assert value == pytest.approx(pixel_entropy, rel=1e-6)

    def test_gradient(self):
        p = random_assignment(3, 3, 4, seed=4)

        def build(pt):
            return obj.clustering_loss(pt, 1.5)

        assert_gradients_match(build, [p], rtol=1e-4)


class TestEdgeWeights:
    def test_constant_image_all_ones(self):
        w = obj.compute_edge_weights(np.full((4, 5, 3), 0.3), sigma=8.0)
        np.testing.assert_array_equal(w.wx, np.ones((4, 5)))
        np.testing.assert_array_equal(w.wy, np.ones((4, 5)))

    def test_single_step_value(self):
        img = np.zeros((1, 2, 1))
        img[0, 1, 0] = 4.0
        w = obj.compute_edge_weights(img, sigma=8.0)
        assert w.wx[0, 0] == pytest.approx(np.exp(-2.0), rel=1e-6)
        assert w.wx[0, 1] == 1.0  # trailing column sees a zero difference

    def test_range_and_monotonicity(self):
        rng = np.random.default_rng(5)
        img = rng.random((8, 8, 3))
        w = obj.compute_edge_weights(img, sigma=8.0)
        for arr in (w.wx, w.wy):
            assert (arr > 0).all() and (arr <= 1).all()
        # weights shrink monotonically with the squared gradient norm
        d2 = ((img[:, 1:] - img[:, :-1]) ** 2).sum(-1).ravel()
        wx = w.wx[:, :-1].ravel()
        order = np.argsort(d2)
        assert (np.diff(wx[order]) <= 1e-12).all()

    def test_bad_sigma_rejected(self):
        with pytest.raises(ValueError, match="sigma"):
            obj.compute_edge_weights(np.zeros((2, 2, 3)), sigma=0.0)


class TestSmoothnessLoss:
    def test_constant_assignment_is_zero(self):
        p = np.full((4, 4, 3), 1.0 / 3)
        w = obj.compute_edge_weights(np.zeros((4, 4, 3)), 8.0)
        assert obj.smoothness_loss(Tensor(p), w).item() == 0.0

    def test_two_pixel_example(self):
        # 1x2 image, N=2: |0.4| + |-0.4| weighted 1, averaged over 2 pixels
        p = np.array([[[0.3, 0.7], [0.7, 0.3]]])
        w = obj.compute_edge_weights(np.zeros((1, 2, 3)), 8.0)
        assert obj.smoothness_loss(Tensor(p), w).item() == pytest.approx(0.4, rel=1e-6)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(6)
        p = random_assignment(5, 6, 4, seed=7)
        img = rng.random((5, 6, 3))
        w = obj.compute_edge_weights(img, 8.0)
        value = obj.smoothness_loss(Tensor(p), w).item()
        assert value == pytest.approx(oracle_smoothness(p, w.wx, w.wy), rel=1e-6)

    def test_nonnegative_and_zero_iff_constant(self):
        p = random_assignment(5, 5, 3, seed=8)
        w = obj.compute_edge_weights(np.random.default_rng(9).random((5, 5, 3)), 8.0)
        assert obj.smoothness_loss(Tensor(p), w).item() > 0

    def test_label_permutation_invariance(self):
        p = random_assignment(4, 5, 5, seed=10)
        w = obj.compute_edge_weights(np.random.default_rng(11).random((4, 5, 3)), 8.0)
        perm = np.random.default_rng(12).permutation(5)
        a = obj.smoothness_loss(Tensor(p), w).item()
        b = obj.smoothness_loss(Tensor(p[:, :, perm]), w).item()
        assert a == pytest.approx(b, rel=1e-9)

    def test_shape_mismatch_rejected(self):
        w = obj.compute_edge_weights(np.zeros((3, 3, 3)), 8.0)
        with pytest.raises(ValueError, match="match"):
            obj.smoothness_loss(Tensor(np.zeros((4, 4, 2))), w)

    def test_gradient(self):
        # keep probabilities away from equal pairs so |.| stays smooth
        p = random_assignment(3, 4, 3, seed=13)
        w = obj.compute_edge_weights(np.random.default_rng(14).random((3, 4, 3)), 8.0)

        def build(pt):
            return obj.smoothness_loss(pt, w)

        assert_gradients_match(build, [p], rtol=1e-4)


class TestReconsLoss:
    def test_identical_is_zero(self):
        img = np.random.default_rng(15).random((4, 4, 3))
        assert obj.recons_loss(Tensor(img), Tensor(img)).item() == 0.0

    def test_constant_offset(self):
        img = np.random.default_rng(16).random((4, 4, 3))
        off = obj.recons_loss(Tensor(img), Tensor(img + 0.25)).item()
        assert off == pytest.approx(0.25**2, rel=1e-6)

    def test_matches_mse(self):
        rng = np.random.default_rng(17)
        a, b = rng.random((5, 6, 3)), rng.random((5, 6, 3))
        assert obj.recons_loss(Tensor(a), Tensor(b)).item() == pytest.approx(
            np.mean((a - b) ** 2), rel=1e-6
        )

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            obj.recons_loss(Tensor(np.zeros((4, 4, 3))), Tensor(np.zeros((4, 5, 3))))

    def test_gradient(self):
        rng = np.random.default_rng(18)
        a, b = rng.random((3, 3, 3)), rng.random((3, 3, 3))

        def build(at, bt):
            return obj.recons_loss(at, bt)

        assert_gradients_match(build, [a, b], rtol=1e-4)


class TestTotalLoss:
    def _parts(self, seed=20, h=4, w=5, n=4):
        rng = np.random.default_rng(seed)
        p = random_assignment(h, w, n, seed=seed)
        img = rng.random((h, w, 3))
        recon = rng.random((h, w, 3))
        weights = obj.compute_edge_weights(img, 8.0)
        return Tensor(p), Tensor(recon), Tensor(img), weights

    def test_alpha_beta_zero_reduces_to_clustering(self):
        p, recon, img, w = self._parts()
        cfg = RunConfig(lambda_=1.0, alpha=0.0, beta=0.0)
        bd = obj.total_loss(p, recon, img, w, cfg)
        assert bd.total == pytest.approx(bd.clustering, rel=1e-7)

    def test_paper_coefficients_combination(self):
        p, recon, img, w = self._parts()
        cfg = RunConfig(lambda_=2.0, alpha=2.0, beta=10.0)
        bd = obj.total_loss(p, recon, img, w, cfg)
        assert bd.total == pytest.approx(
            bd.clustering + 2.0 * bd.smoothness + 10.0 * bd.recons, rel=1e-6
        )

    def test_component_arithmetic(self):
        # (c, s, r) = (1.0, 0.5, 0.2) with alpha=2, beta=10 -> 4.0
        assert 1.0 + 2 * 0.5 + 10 * 0.2 == pytest.approx(4.0)
        p, recon, img, w = self._parts(seed=21)
        cfg = RunConfig(lambda_=0.5, alpha=2.0, beta=10.0)
        bd = obj.total_loss(p, recon, img, w, cfg)
        reference = bd.clustering + cfg.alpha * bd.smoothness + cfg.beta * bd.recons
        assert bd.total == pytest.approx(reference, rel=1e-6)

    def test_beta_zero_excludes_recons_but_reports_it(self):
        p, recon, img, w = self._parts(seed=22)
        cfg = RunConfig(lambda_=1.0, alpha=2.0, beta=0.0)
        bd = obj.total_loss(p, recon, img, w, cfg)
        assert bd.recons > 0
        assert bd.total == pytest.approx(bd.clustering + 2.0 * bd.smoothness, rel=1e-6)

    def test_all_components_finite(self):
        p, recon, img, w = self._parts(seed=23)
        bd = obj.total_loss(p, recon, img, w, RunConfig())
        for v in (bd.clustering, bd.smoothness, bd.recons, bd.total):
            assert np.isfinite(v)

    def test_gradient_of_total(self):
        h, w_, n = 3, 4, 3
        rng = np.random.default_rng(24)
        p = random_assignment(h, w_, n, seed=24)
        img = rng.random((h, w_, 3))
        recon = rng.random((h, w_, 3))
        weights = obj.compute_edge_weights(img, 8.0)
        cfg = RunConfig(lambda_=2.0, alpha=2.0, beta=10.0)

        def build(pt, rt):
            return obj.total_loss(pt, rt, Tensor(img), weights, cfg).tensor

        assert_gradients_match(build, [p, recon], rtol=1e-4)
