"""Collapsed Gibbs sampling of latent true labels, plus exact references.

Each sample's latent label is resampled from the product of two factors: the
classifier's probability for that class, and the leave-one-out predictive
probability of the observed label given the class (from the Dirichlet-
multinomial channel). Enumerating all joint assignments gives an exact
posterior for small instances, used to validate the chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import ParameterError, TrainingError
from .noise_model import (
    ConfusionCounts,
    DirichletPrior,
    TransitionMatrix,
    conditional_transition_column,
)

UNASSIGNED = -1


@dataclass
class LatentAssignment:
    """Current latent label of every sample; UNASSIGNED before the first draw."""

    labels: np.ndarray

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)

    @classmethod
    def unassigned(cls, n: int) -> "LatentAssignment":
        return cls(np.full(n, UNASSIGNED, dtype=np.int64))

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> "LatentAssignment":
        return cls(np.array(labels, dtype=np.int64))

    @property
    def assigned(self) -> np.ndarray:
        return self.labels >= 0

    def copy(self) -> "LatentAssignment":
        return LatentAssignment(self.labels.copy())


@dataclass
class AnnealSchedule:
    """Decaying exponent applied to the channel factor of the sampling scores.

    coefficient(step) = max(exp(-step / max_step * decay), floor); a disabled
    schedule always returns 1. `target` picks what the exponent is applied to:
    "transition" tempers only the channel factor, "product" tempers the whole
    unnormalized score.
    """

    enabled: bool = False
    max_step: int = 1
    floor: float = 0.5
    decay: float = 0.8
    target: str = "transition"

    def __post_init__(self) -> None:
        if self.max_step < 1:
            raise ParameterError("max_step must be >= 1")
        if not 0.0 < self.floor <= 1.0:
            raise ParameterError("floor must lie in (0, 1]")
        if self.decay <= 0.0:
            raise ParameterError("decay must be positive")
        if self.target not in ("transition", "product"):
            raise ParameterError(f"unknown anneal target {self.target!r}")

    def coefficient(self, step: int) -> float:
        return anneal_coefficient(step, self)


def anneal_coefficient(step: int, schedule: AnnealSchedule) -> float:
    """Annealing exponent at a given step; 1.0 when the schedule is disabled."""
    if step < 0:
        raise ParameterError("step must be nonnegative")
    if not schedule.enabled:
        return 1.0
    return max(math.exp(-step / schedule.max_step * schedule.decay), schedule.floor)


def sampling_distribution(
    probs_row: np.ndarray,
    observed_label: int,
    counts: ConfusionCounts,
    prior: DirichletPrior,
    warmup_phi: TransitionMatrix | None = None,
    anneal: float = 1.0,
    anneal_target: str = "transition",
) -> np.ndarray:
    """Normalized distribution the Gibbs chain draws one latent label from.

    `counts` must already exclude the sample being resampled. When warmup_phi
    is given, its column replaces the count-based channel factor while the
    classifier factor still applies. Scores are invariant to positive scaling
    of probs_row.
    """
    if warmup_phi is not None:
        channel = warmup_phi.matrix[:, observed_label]
    else:
        channel = conditional_transition_column(counts, prior, observed_label)
    if anneal_target == "transition":
        scores = probs_row * channel**anneal if anneal != 1.0 else probs_row * channel
    elif anneal_target == "product":
        base = probs_row * channel
        scores = base**anneal if anneal != 1.0 else base
    else:
        raise ParameterError(f"unknown anneal target {anneal_target!r}")
    norm = scores.sum()
    if not np.isfinite(norm) or norm <= 0.0:
        raise TrainingError("sampling scores are non-finite or all zero")
    return scores / norm


def gibbs_sample_batch(
    probs: np.ndarray,
    observed_labels: np.ndarray,
    counts: ConfusionCounts,
    prior: DirichletPrior,
    assignment: LatentAssignment,
    batch_indices: np.ndarray,
    rng: np.random.Generator,
    warmup_phi: TransitionMatrix | None = None,
    anneal: float = 1.0,
    anneal_target: str = "transition",
) -> np.ndarray:
    """Resample the latent labels of one batch, updating counts and assignment in place.

    Samples are processed sequentially: each draw removes the sample's old
    count (if assigned), scores every latent class against counts already
    updated by earlier draws in the batch, draws a new class, and books it.

    Args:
        probs: (M, R) classifier probabilities for the batch samples.
        observed_labels: (M,) observed labels of the batch samples.
        batch_indices: (M,) positions of the batch samples in `assignment`.

    Returns:
        (M,) newly sampled latent labels, in batch order.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != counts.n_latent:
        raise ParameterError("probs must be (batch, n_latent)")
    if len(observed_labels) != probs.shape[0] or len(batch_indices) != probs.shape[0]:
        raise ParameterError("batch arrays must have matching lengths")
    n_latent = counts.n_latent
    sampled = np.empty(probs.shape[0], dtype=np.int64)
    for i in range(probs.shape[0]):
        position = int(batch_indices[i])
        observed = int(observed_labels[i])
        old = int(assignment.labels[position])
        if old != UNASSIGNED:
            counts.decrement(old, observed)
        dist = sampling_distribution(
            probs[i], observed, counts, prior, warmup_phi, anneal, anneal_target
        )
        new = int(np.searchsorted(np.cumsum(dist), rng.random(), side="right"))
        if new >= n_latent:
            new = n_latent - 1
        counts.increment(new, observed)
        assignment.labels[position] = new
        sampled[i] = new
    return sampled


def _log_dirichlet_norm(alpha: np.ndarray) -> float:
    return float(gammaln(alpha).sum() - gammaln(alpha.sum()))


def exact_posterior_bruteforce(
    probs: np.ndarray,
    observed_labels: np.ndarray,
    prior: DirichletPrior,
    max_states: int = 2**22,
) -> np.ndarray:
    """Exact per-sample posterior marginals by enumerating every joint assignment.

    The joint weight of an assignment is the product of the classifier
    probabilities and, per latent class, the ratio of Dirichlet normalizers
    with and without that class's observed-label counts. All arithmetic is in
    log space. Only instances with n_latent ** n <= max_states are accepted.
    """
    probs = np.asarray(probs, dtype=np.float64)
    observed_labels = np.asarray(observed_labels, dtype=np.int64)
    n, n_latent = probs.shape
    n_observed = prior.n_observed
    n_states = n_latent**n
    if n_states > max_states:
        raise ParameterError(f"state space {n_states} exceeds the limit {max_states}")
    with np.errstate(divide="ignore"):
        log_probs = np.log(probs)
    alpha = prior.concentration
    log_norm_empty = _log_dirichlet_norm(alpha)
    obs_onehot = np.zeros((n, n_observed), dtype=np.float64)
    obs_onehot[np.arange(n), observed_labels] = 1.0

    block = 1 << 14
    radix = n_latent ** np.arange(n, dtype=np.int64)
    log_weights = np.empty(n_states)

    def decode(states: np.ndarray) -> np.ndarray:
        return (states[:, None] // radix[None, :]) % n_latent

    for start in range(0, n_states, block):
        states = np.arange(start, min(start + block, n_states), dtype=np.int64)
        assign = decode(states)
        lw = log_probs[np.arange(n)[None, :], assign].sum(axis=1)
        cell_counts = np.zeros((states.size, n_latent, n_observed))
        for r in range(n_latent):
            cell_counts[:, r, :] = (assign == r).astype(np.float64) @ obs_onehot
        row_alpha = cell_counts + alpha[None, None, :]
        log_norm = gammaln(row_alpha).sum(axis=2) - gammaln(row_alpha.sum(axis=2))
        lw += (log_norm - log_norm_empty).sum(axis=1)
        log_weights[start : start + states.size] = lw

    log_z = logsumexp(log_weights)
    marginals = np.zeros((n, n_latent))
    for start in range(0, n_states, block):
        states = np.arange(start, min(start + block, n_states), dtype=np.int64)
        assign = decode(states)
        weights = np.exp(log_weights[start : start + states.size] - log_z)
        for r in range(n_latent):
            marginals[:, r] += (assign == r).T @ weights
    row_sums = marginals.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-8):
        raise TrainingError("brute-force marginals failed the normalization check")
    return marginals / row_sums[:, None]


def total_variation_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Total variation distance between matching rows of two distribution matrices."""
    return 0.5 * np.abs(np.asarray(a) - np.asarray(b)).sum(axis=1)


@dataclass
class GibbsDiagnostics:
    """Mixing summary of one chain against the exact reference posterior."""

    sweeps: int
    burn_in: int
    empirical: np.ndarray
    reference: np.ndarray
    trace: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def per_sample_tv(self) -> np.ndarray:
        return total_variation_rows(self.empirical, self.reference)

    @property
    def max_tv(self) -> float:
        return float(self.per_sample_tv.max())

    @property
    def mean_tv(self) -> float:
        return float(self.per_sample_tv.mean())


def _default_checkpoints(burn_in: int, sweeps: int, n_points: int = 8) -> list[int]:
    grid = np.unique(
        np.geomspace(burn_in + 1, sweeps, num=n_points).round().astype(int)
    )
    return [int(s) for s in grid]


def mixing_diagnostic(
    probs: np.ndarray,
    observed_labels: np.ndarray,
    prior: DirichletPrior,
    sweeps: int,
    burn_in: int,
    seed: int = 0,
    checkpoints: list[int] | None = None,
    initial: np.ndarray | None = None,
) -> GibbsDiagnostics:
    """Run a frozen-classifier chain and compare empirical marginals to the exact ones.

    Post-burn-in states are tallied into per-sample empirical marginals; the
    trace records (sweep, max_tv, mean_tv) at each checkpoint. With sweeps=0
    the "empirical marginal" is the point mass of the initial state.
    """
    probs = np.asarray(probs, dtype=np.float64)
    observed_labels = np.asarray(observed_labels, dtype=np.int64)
    n, n_latent = probs.shape
    if sweeps < 0 or burn_in < 0:
        raise ParameterError("sweeps and burn_in must be nonnegative")
    if sweeps > 0 and burn_in >= sweeps:
        raise ParameterError("burn_in must be smaller than sweeps")
    reference = exact_posterior_bruteforce(probs, observed_labels, prior)
    start = observed_labels if initial is None else np.asarray(initial, dtype=np.int64)
    assignment = LatentAssignment.from_labels(start)
    counts = ConfusionCounts.from_assignment(
        assignment.labels, observed_labels, n_latent, prior.n_observed
    )
    if sweeps == 0:
        empirical = np.zeros((n, n_latent))
        empirical[np.arange(n), assignment.labels] = 1.0
        tv = total_variation_rows(empirical, reference)
        return GibbsDiagnostics(
            sweeps=0,
            burn_in=burn_in,
            empirical=empirical,
            reference=reference,
            trace=[(0, float(tv.max()), float(tv.mean()))],
        )
    if checkpoints is None:
        checkpoints = _default_checkpoints(burn_in, sweeps)
    checkpoint_set = {int(c) for c in checkpoints}
    rng = np.random.default_rng(seed)
    tally = np.zeros((n, n_latent))
    trace: list[tuple[int, float, float]] = []
    all_indices = np.arange(n)
    sample_rows = np.arange(n)
    for sweep in range(1, sweeps + 1):
        gibbs_sample_batch(
            probs, observed_labels, counts, prior, assignment, all_indices, rng
        )
        if sweep > burn_in:
            tally[sample_rows, assignment.labels] += 1.0
            if sweep in checkpoint_set:
                empirical = tally / (sweep - burn_in)
                tv = total_variation_rows(empirical, reference)
                trace.append((sweep, float(tv.max()), float(tv.mean())))
    empirical = tally / (sweeps - burn_in)
    return GibbsDiagnostics(
        sweeps=sweeps,
        burn_in=burn_in,
        empirical=empirical,
        reference=reference,
        trace=trace,
    )
