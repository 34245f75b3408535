"""Synthetic scenarios, the post stream, and accept-reject sampling."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from decoygame.checks import gof_chi2
from decoygame.datagen import (
    EnvelopeError,
    StreamPlan,
    build_stream,
    density_ratio,
    dump_stream,
    envelope_constant,
    format_post,
    gen_gaussians,
    gen_two_moons,
    load_stream,
    parse_post,
    rejection_sample,
    sample_class,
)
from decoygame.domain import ConfigError, Origin, Post, Scenario, ScenarioSpec

FULL = ScenarioSpec(scenario=Scenario.FULLY_OVERLAPPING)


def normal_pdf(x, mean, sd):
    return np.exp(-0.5 * ((x - mean) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))


class TestTwoMoons:
    def test_noise_free_upper_arc(self):
        X, y = gen_two_moons(200, 0.0, seed=1)
        upper = X[y == 0]
        np.testing.assert_allclose(np.hypot(upper[:, 0], upper[:, 1]), 1.0, atol=1e-9)
        assert np.all(upper[:, 1] >= -1e-12)

    def test_balance(self):
        _, y = gen_two_moons(4, 0.0, seed=3)
        assert np.bincount(y).tolist() == [2, 2]

    def test_classes_strictly_separated(self):
        X, y = gen_two_moons(400, 0.0, seed=2)
        a, b = X[y == 0], X[y == 1]
        gaps = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
        assert gaps.min() > 0

    def test_nearest_neighbour_is_perfect(self):
        X, y = gen_two_moons(300, 0.0, seed=4)
        Xq, yq = gen_two_moons(300, 0.0, seed=5)
        dist = np.linalg.norm(Xq[:, None, :] - X[None, :, :], axis=2)
        assert np.array_equal(y[dist.argmin(axis=1)], yq)


class TestGaussians:
    def test_tiny_sigma_collapses_to_mean(self):
        X, y = gen_gaussians(100, (1.0, -2.0), (3.0, 3.0), 1e-6, seed=0)
        np.testing.assert_allclose(X[y == 0].mean(axis=0), (1.0, -2.0), atol=1e-3)

    def test_large_sample_mean(self):
        X, y = gen_gaussians(10_000, (0.0, 0.0), (1.0, 1.0), 1.0, seed=0)
        assert np.all(np.abs(X[y == 0].mean(axis=0)) < 0.05)

    def test_deterministic(self):
        a = gen_gaussians(50, (0, 0), (1, 1), 1.0, seed=9)
        b = gen_gaussians(50, (0, 0), (1, 1), 1.0, seed=9)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_rejects_bad_sigma(self):
        with pytest.raises(ConfigError):
            gen_gaussians(10, (0,), (1,), 0.0, seed=0)


class TestStream:
    def test_counts(self):
        ledgers = build_stream(ScenarioSpec(), StreamPlan(5, 7, 20, 3, seed=0))
        assert len(ledgers) == 3
        for led in ledgers:
            assert len(led.deleted) == 12
            assert len(led.damaging) == 5
            assert len(led.volunteered_new) == 20

    def test_labels_and_unique_ids(self):
        ledgers = build_stream(ScenarioSpec(), StreamPlan(5, 7, 20, 3, seed=0))
        posts = [p for led in ledgers for p in led.deleted + led.volunteered_new]
        assert len({p.id for p in posts}) == len(posts)
        assert all(p.true_label == 0 for led in ledgers for p in led.volunteered_new)
        assert all(p.true_label == 1 for led in ledgers for p in led.damaging)

    @pytest.mark.parametrize("scenario", list(Scenario))
    def test_deterministic(self, scenario):
        spec = ScenarioSpec(scenario=scenario)
        a = build_stream(spec, StreamPlan(3, 4, 5, 2, seed=11))
        b = build_stream(spec, StreamPlan(3, 4, 5, 2, seed=11))
        for la, lb in zip(a, b):
            for pa, pb in zip(la.deleted + la.volunteered_new, lb.deleted + lb.volunteered_new):
                assert pa.id == pb.id and np.array_equal(pa.features, pb.features)

    def test_interval_independent_of_horizon(self):
        short = build_stream(ScenarioSpec(), StreamPlan(3, 4, 5, 2, seed=1))
        long = build_stream(ScenarioSpec(), StreamPlan(3, 4, 5, 4, seed=1))
        assert np.array_equal(short[1].deleted[0].features, long[1].deleted[0].features)

    def test_tsv_round_trip(self, tmp_path):
        ledgers = build_stream(ScenarioSpec(), StreamPlan(2, 2, 3, 2, seed=0))
        path = tmp_path / "stream.tsv"
        dump_stream(ledgers, path)
        loaded = load_stream(path)
        originals = sorted((p for led in ledgers for p in led.deleted + led.volunteered_new), key=lambda p: p.id)
        assert [p.id for p in loaded] == [p.id for p in originals]
        for a, b in zip(loaded, originals):
            assert np.array_equal(a.features, b.features)
            assert (a.origin, a.true_label, a.interval_created, a.interval_deleted) == (
                b.origin, b.true_label, b.interval_created, b.interval_deleted)

    @given(
        st.integers(0, 10**6),
        st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=4),
        st.integers(1, 50),
    )
    def test_post_line_round_trip(self, pid, feats, created):
        p = Post(pid, np.array(feats), 0, Origin.VOLUNTEERED, created)
        q = parse_post(format_post(p))
        assert q.id == pid and np.array_equal(q.features, p.features) and q.interval_deleted is None


class TestEnvelope:
    def test_closed_form_matches_grid_search(self):
        spec = FULL
        g = np.linspace(-6, 6, 1201)
        gx, gy = np.meshgrid(g, g)
        grid = np.column_stack([gx.ravel(), gy.ravel()])
        assert envelope_constant(spec) == pytest.approx(density_ratio(spec)(grid).max(), rel=1e-5)

    def test_frozen_default_value(self):
        # sup of N((.5,.5), I) / N(0, 1.25^2 I), located at x* = (25/18)(.5,.5)
        assert envelope_constant(FULL) == pytest.approx(2.436911715010595, rel=1e-12)

    @pytest.mark.parametrize(
        "spec",
        [
            ScenarioSpec(scenario=Scenario.FULLY_OVERLAPPING, sigma0=1.0, sigma1=1.0),
            ScenarioSpec(scenario=Scenario.FULLY_OVERLAPPING, sigma0=0.8, sigma1=1.0),
            ScenarioSpec(scenario=Scenario.PARTIAL_OVERLAP),
            ScenarioSpec(scenario=Scenario.NON_OVERLAPPING),
        ],
    )
    def test_unbounded_ratio(self, spec):
        with pytest.raises(EnvelopeError):
            envelope_constant(spec)

    def test_identical_distributions(self):
        spec = ScenarioSpec(scenario=Scenario.FULLY_OVERLAPPING, mean1=(0.0, 0.0), sigma0=1.0, sigma1=1.0)
        assert envelope_constant(spec) == 1.0


class TestRejectionSample:
    def test_identical_densities_accept_everything(self):
        res = rejection_sample(lambda rng, n: rng.normal(size=n), lambda x: np.ones(len(x)), 1.0, 5000, seed=0)
        assert res.accepted == 5000
        assert res.acceptance_rate == 1.0

    def test_equal_width_shift_has_no_envelope(self):
        # N(0,1) -> N(0.5,1): the ratio exp(0.5x - 0.125) exceeds any constant in the tail
        ratio = lambda x: normal_pdf(x, 0.5, 1.0) / normal_pdf(x, 0.0, 1.0)
        with pytest.raises(EnvelopeError):
            rejection_sample(lambda rng, n: rng.normal(size=n), ratio, math.exp(0.25 + 1e-3), 10**5, seed=0)

    def test_shifted_target_mean_with_wider_proposal(self):
        sd0 = 1.5
        ratio = lambda x: normal_pdf(x, 0.5, 1.0) / normal_pdf(x, 0.0, sd0)
        grid = np.linspace(-10, 10, 200_001)
        M = ratio(grid).max()
        res = rejection_sample(lambda rng, n: sd0 * rng.normal(size=n), ratio, M, 10**5, seed=3)
        assert res.accepted == 10**5
        assert abs(res.samples.mean() - 0.5) < 0.02
        assert abs(res.acceptance_rate - 1 / M) < 0.01

    def test_acceptance_rate_near_inverse_envelope(self):
        M = envelope_constant(FULL)
        res = rejection_sample(lambda rng, n: sample_class(FULL, 0, n, rng), density_ratio(FULL), M, 20_000, seed=1)
        assert abs(res.acceptance_rate * M - 1) < 0.03

    def test_accepted_fit_target_histogram(self):
        M = envelope_constant(FULL)
        res = rejection_sample(lambda rng, n: sample_class(FULL, 0, n, rng), density_ratio(FULL), M, 10**5, seed=5)
        _, _, p = gof_chi2(res.samples, FULL.mean1, FULL.sigma1)
        assert p > 0.01

    def test_exhausted_proposal_stops(self):
        data = np.arange(10.0)
        cursor = [0]

        def draw(_rng, n):
            lo = cursor[0]
            cursor[0] = min(10, lo + n)
            return data[lo : cursor[0]]

        res = rejection_sample(draw, lambda x: np.ones(len(x)), 1.0, 50, seed=0, batch=4)
        assert res.accepted == 10
        assert res.draws == 10

    def test_deterministic(self):
        run = lambda: rejection_sample(
            lambda rng, n: sample_class(FULL, 0, n, rng), density_ratio(FULL), 2.5, 100, seed=42
        ).samples
        assert np.array_equal(run(), run())

    def test_rejects_nonpositive_envelope(self):
        with pytest.raises(EnvelopeError):
            rejection_sample(lambda rng, n: rng.normal(size=n), lambda x: np.ones(len(x)), 0.0, 1, seed=0)
