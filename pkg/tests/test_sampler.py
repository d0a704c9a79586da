"""Annealing schedule, single-draw distributions, and exact-enumeration checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lccn_lab.errors import ParameterError, TrainingError
from lccn_lab.noise_model import ConfusionCounts, DirichletPrior, TransitionMatrix
from lccn_lab.sampler import (
    AnnealSchedule,
    LatentAssignment,
    anneal_coefficient,
    exact_posterior_bruteforce,
    gibbs_sample_batch,
    mixing_diagnostic,
    sampling_distribution,
    total_variation_rows,
)


def counts_of(matrix):
    matrix = np.asarray(matrix, dtype=np.float64)
    return ConfusionCounts(matrix.copy(), matrix.sum(axis=1))


# ------------------------------------------------------------- annealing


def test_anneal_disabled_is_identity():
    assert anneal_coefficient(0, AnnealSchedule()) == 1.0
    assert anneal_coefficient(10_000, AnnealSchedule()) == 1.0


def test_anneal_frozen_values():
    sched = AnnealSchedule(enabled=True, max_step=200, floor=0.5, decay=0.8)
    assert anneal_coefficient(0, sched) == pytest.approx(1.0)
    assert anneal_coefficient(100, sched) == pytest.approx(math.exp(-0.4), abs=1e-15)
    # exp(-0.8) = 0.449... falls below the floor
    assert anneal_coefficient(200, sched) == 0.5


def test_anneal_monotone_until_floor():
    sched = AnnealSchedule(enabled=True, max_step=1000, floor=0.5, decay=0.8)
    values = [anneal_coefficient(s, sched) for s in range(0, 1001, 50)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert min(values) >= 0.5


# ------------------------------------------------- sampling distribution


def test_sampling_distribution_frozen_example():
    # flat channel: counts are uniform, so the draw follows the classifier
    counts = counts_of([[5.0, 5.0], [5.0, 5.0]])
    prior = DirichletPrior.uniform(2, 1.0)
    dist = sampling_distribution(np.array([0.8, 0.2]), 0, counts, prior)
    np.testing.assert_allclose(dist, [0.8, 0.2], atol=1e-15)


def test_sampling_distribution_scale_invariant():
    counts = counts_of([[3.0, 1.0], [0.0, 4.0]])
    prior = DirichletPrior.uniform(2, 1.0)
    a = sampling_distribution(np.array([0.8, 0.2]), 0, counts, prior)
    b = sampling_distribution(np.array([8.0, 2.0]), 0, counts, prior)
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_sampling_distribution_anneal_zero_follows_classifier():
    counts = counts_of([[30.0, 1.0], [1.0, 30.0]])
    prior = DirichletPrior.uniform(2, 1.0)
    probs = np.array([0.7, 0.3])
    dist = sampling_distribution(probs, 1, counts, prior, anneal=0.0)
    np.testing.assert_allclose(dist, probs, atol=1e-15)


def test_sampling_distribution_product_target():
    counts = counts_of([[3.0, 1.0], [0.0, 4.0]])
    prior = DirichletPrior.uniform(2, 1.0)
    probs = np.array([0.8, 0.2])
    channel = np.array([(1 + 3) / (2 + 4), (1 + 0) / (2 + 4)])
    expected = (probs * channel) ** 0.5
    expected /= expected.sum()
    dist = sampling_distribution(probs, 0, counts, prior, anneal=0.5, anneal_target="product")
    np.testing.assert_allclose(dist, expected, atol=1e-15)


def test_sampling_distribution_warmup_column_overrides_counts():
    counts = counts_of([[100.0, 0.0], [0.0, 100.0]])
    prior = DirichletPrior.uniform(2, 1.0)
    warm = TransitionMatrix(np.array([[0.5, 0.5], [0.5, 0.5]]))
    dist = sampling_distribution(np.array([0.6, 0.4]), 0, counts, prior, warmup_phi=warm)
    np.testing.assert_allclose(dist, [0.6, 0.4], atol=1e-15)


def test_sampling_distribution_zero_scores_raise():
    counts = counts_of([[1.0, 1.0], [1.0, 1.0]])
    prior = DirichletPrior.uniform(2, 1.0)
    with pytest.raises(TrainingError):
        sampling_distribution(np.array([0.0, 0.0]), 0, counts, prior)


# ------------------------------------------------------------ batch draws


def test_gibbs_batch_updates_counts_incrementally(rng):
    # Two copies of the same sample: after the first draw moves, the second
    # draw must see the updated counts. Replaying the generator verifies the
    # exact sequential arithmetic.
    probs = np.array([[0.5, 0.5], [0.5, 0.5]])
    observed = np.array([0, 0])
    assignment = LatentAssignment.from_labels(np.array([0, 0]))
    counts = ConfusionCounts.from_assignment(assignment.labels, observed, 2, 2)
    prior = DirichletPrior.uniform(2, 1.0)
    replay = np.random.default_rng(42)
    sampled = gibbs_sample_batch(
        probs, observed, counts, prior, assignment, np.array([0, 1]), np.random.default_rng(42)
    )
    # manual replay of the two sequential draws
    work = ConfusionCounts.from_assignment(np.array([0, 0]), observed, 2, 2)
    labels = [0, 0]
    for i in range(2):
        work.decrement(labels[i], 0)
        dist = sampling_distribution(probs[i], 0, work, prior)
        draw = int(np.searchsorted(np.cumsum(dist), replay.random(), side="right"))
        draw = min(draw, 1)
        work.increment(draw, 0)
        labels[i] = draw
    assert sampled.tolist() == labels
    np.testing.assert_array_equal(counts.counts, work.counts)
    assert assignment.labels.tolist() == labels


@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_gibbs_batch_labels_in_range(seed):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(3), size=5)
    observed = rng.integers(0, 3, size=5)
    assignment = LatentAssignment.from_labels(observed.copy())
    counts = ConfusionCounts.from_assignment(assignment.labels, observed, 3, 3)
    prior = DirichletPrior.uniform(3, 0.5)
    sampled = gibbs_sample_batch(
        probs, observed, counts, prior, assignment, np.arange(5), rng
    )
    assert sampled.min() >= 0 and sampled.max() < 3
    counts.check_consistent()
    rebuilt = ConfusionCounts.from_assignment(assignment.labels, observed, 3, 3)
    np.testing.assert_array_equal(counts.counts, rebuilt.counts)


def test_gibbs_batch_shape_validation():
    prior = DirichletPrior.uniform(2, 1.0)
    counts = counts_of([[1.0, 0.0], [0.0, 1.0]])
    assignment = LatentAssignment.from_labels(np.array([0, 1]))
    with pytest.raises(ParameterError):
        gibbs_sample_batch(
            np.array([0.5, 0.5]), np.array([0]), counts, prior, assignment,
            np.array([0]), np.random.default_rng(0),
        )


# --------------------------------------------------------- exact posterior


def test_bruteforce_single_sample_uniform_prior_follows_classifier():
    # With one sample and a symmetric prior the count factor is identical for
    # every latent class, so the posterior is exactly the classifier row.
    probs = np.array([[0.3, 0.7]])
    observed = np.array([1])
    prior = DirichletPrior.uniform(2, 1.0)
    marginals = exact_posterior_bruteforce(probs, observed, prior)
    np.testing.assert_allclose(marginals, probs, atol=1e-12)


def test_bruteforce_two_samples_matches_direct_enumeration():
    probs = np.array([[0.6, 0.4], [0.2, 0.8]])
    observed = np.array([0, 1])
    alpha = np.array([1.0, 2.0])
    prior = DirichletPrior(alpha)

    def beta_fn(vec):
        return math.prod(math.gamma(v) for v in vec) / math.gamma(sum(vec))

    weights = {}
    for y1 in range(2):
        for y2 in range(2):
            counts = np.zeros((2, 2))
            counts[y1, observed[0]] += 1
            counts[y2, observed[1]] += 1
            w = probs[0, y1] * probs[1, y2]
            for row in range(2):
                w *= beta_fn(alpha + counts[row]) / beta_fn(alpha)
            weights[(y1, y2)] = w
    z = sum(weights.values())
    expected = np.zeros((2, 2))
    for (y1, y2), w in weights.items():
        expected[0, y1] += w / z
        expected[1, y2] += w / z

    marginals = exact_posterior_bruteforce(probs, observed, prior)
    np.testing.assert_allclose(marginals, expected, atol=1e-12)


def test_bruteforce_rejects_oversized_state_space():
    probs = np.full((30, 4), 0.25)
    observed = np.zeros(30, dtype=np.int64)
    prior = DirichletPrior.uniform(4, 1.0)
    with pytest.raises(ParameterError):
        exact_posterior_bruteforce(probs, observed, prior)


def test_total_variation_rows_hand_example():
    a = np.array([[0.5, 0.5], [1.0, 0.0]])
    b = np.array([[0.25, 0.75], [1.0, 0.0]])
    np.testing.assert_allclose(total_variation_rows(a, b), [0.25, 0.0], atol=1e-15)


# ------------------------------------------------------ mixing diagnostics


def test_mixing_zero_sweeps_is_point_mass():
    rng = np.random.default_rng(5)
    probs = rng.dirichlet(np.ones(2), size=4)
    observed = rng.integers(0, 2, size=4)
    prior = DirichletPrior.uniform(2, 1.0)
    diag = mixing_diagnostic(probs, observed, prior, sweeps=0, burn_in=0, seed=1)
    expected = np.zeros((4, 2))
    expected[np.arange(4), observed] = 1.0
    np.testing.assert_array_equal(diag.empirical, expected)
    assert len(diag.trace) == 1


def test_mixing_converges_on_small_instance():
    rng = np.random.default_rng(123)
    probs = rng.dirichlet(np.ones(2), size=5)
    observed = rng.integers(0, 2, size=5)
    prior = DirichletPrior.uniform(2, 1.0)
    diag = mixing_diagnostic(probs, observed, prior, sweeps=4000, burn_in=500, seed=11)
    assert diag.max_tv <= 0.05
    assert diag.mean_tv <= diag.max_tv
    sweeps_logged = [t[0] for t in diag.trace]
    assert sweeps_logged == sorted(sweeps_logged)
