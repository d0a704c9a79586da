"""Training procedures: plain and noise-robust baselines, and latent-label regression.

All trainers share one contract: (train dataset, config, optional test
dataset) -> RunResult with per-checkpoint metric records, the final model,
and, where the method maintains one, the final estimate of the label
transition channel. Runs are bit-reproducible for a fixed config.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .classifier import (
    Architecture,
    ClassifierParams,
    LossConfig,
    OptimizerState,
    _forward,
    apply_gradients,
    backprop_logits,
    dlogits_from_dprobs,
    forward_proba,
    init_optimizer,
    init_params,
    minibatch_indices,
    one_hot,
    pretrain_ce,
    sgd_step,
    sgd_step_soft,
    soft_target_cross_entropy,
)
from .datagen import LabeledDataset
from .errors import InvariantError, ParameterError, TrainingError
from .metrics import (
    MetricsRecord,
    correction_ratio,
    test_accuracy,
    transition_l1_error,
)
from .noise_model import (
    ConfusionCounts,
    DirichletPrior,
    TransitionMatrix,
    transition_from_counts,
    update_bound,
    warmup_transition,
)
from .sampler import AnnealSchedule, LatentAssignment, gibbs_sample_batch

BOUND_SLACK = 1e-12

TRAINER_KINDS = (
    "ce",
    "bootstrap_hard",
    "forward_fixed",
    "s_adaptation",
    "em_reference",
    "lccn",
    "lccn_star",
    "lccn_plus",
)


@dataclass
class TrainConfig:
    """Shared configuration for every trainer; unused fields are ignored.

    lr_milestones lists (epoch, learning_rate) overrides that take effect
    from the given epoch on. warmup_steps counts sampling iterations that use
    the prediction-derived transition instead of the evolving counts (None
    means one epoch of steps); total_iterations caps the sampling phase (None
    means epochs * batches-per-epoch).
    """

    kind: str = "ce"
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 0.1
    lr_milestones: tuple[tuple[int, float], ...] = ()
    momentum: float = 0.9
    weight_decay: float = 0.0
    hidden_width: int = 0
    activation: str = "relu"
    clip: float = 1e-20
    pretrain_epochs: int = 30
    warmup_steps: int | None = None
    total_iterations: int | None = None
    alpha: float | tuple[float, ...] = 1.0
    smoothed: bool = True
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    warmup_kind: str = "predictions"
    oracle_phi: np.ndarray | None = None
    reference_phi: np.ndarray | None = None
    bootstrap_beta: float = 0.8
    transition_lr: float | None = None
    grad_clip: float | None = None
    em_m_epochs: int = 1
    eval_every: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in TRAINER_KINDS:
            raise ParameterError(f"unknown trainer kind {self.kind!r}")
        if self.epochs < 0 or self.pretrain_epochs < 0:
            raise ParameterError("epoch counts must be nonnegative")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if not 0.0 <= self.bootstrap_beta <= 1.0:
            raise ParameterError("bootstrap_beta must lie in [0, 1]")
        if self.warmup_steps is not None and self.warmup_steps < 0:
            raise ParameterError("warmup_steps must be nonnegative")
        if self.total_iterations is not None and self.total_iterations < 0:
            raise ParameterError("total_iterations must be nonnegative")
        if self.warmup_kind not in ("predictions", "identity"):
            raise ParameterError(f"unknown warmup kind {self.warmup_kind!r}")
        if self.eval_every < 1:
            raise ParameterError("eval_every must be >= 1")
        if self.em_m_epochs < 1:
            raise ParameterError("em_m_epochs must be >= 1")
        LossConfig(self.clip)  # range check


@dataclass
class BatchVariation:
    """Per-batch max-row L1 change of the transition estimate, with its bound.

    For count-based trainers the bound is the Dirichlet-multinomial update
    bound of the row that moved the most; gradient-based transition layers
    carry NaN there (no such certificate exists for them).
    """

    step: int
    measured: float
    bound: float


@dataclass
class RunResult:
    records: list[MetricsRecord]
    final_params: ClassifierParams
    final_phi: TransitionMatrix | None
    batch_variations: list[BatchVariation] = field(default_factory=list)
    outlier_recall: float | None = None

    def records_for(self, split: str) -> list[MetricsRecord]:
        return [r for r in self.records if r.split == split]

    def final_test_accuracy(self) -> float:
        rows = self.records_for("test")
        if not rows:
            raise ParameterError("run has no test records")
        return rows[-1].accuracy

    def validate_record_order(self) -> None:
        for split in ("train", "test"):
            steps = [r.step for r in self.records_for(split)]
            if any(b <= a for a, b in zip(steps, steps[1:])):
                raise InvariantError(f"{split} record steps are not strictly increasing")


def _lr_at(cfg: TrainConfig, epoch: int) -> float:
    rate = cfg.learning_rate
    for milestone, value in sorted(cfg.lr_milestones):
        if epoch >= milestone:
            rate = value
    return rate


def _arch_for(ds: LabeledDataset, cfg: TrainConfig, extra_class: bool = False) -> Architecture:
    n_out = ds.n_classes + 1 if extra_class else ds.n_classes
    if cfg.hidden_width > 0:
        return Architecture("mlp", ds.dim, n_out, cfg.hidden_width, cfg.activation)
    return Architecture("linear", ds.dim, n_out, activation=cfg.activation)


def _spawn_rngs(seed: int) -> tuple[int, np.random.Generator, np.random.Generator]:
    ss_init, ss_data, ss_gibbs = np.random.SeedSequence(seed).spawn(3)
    return (
        int(ss_init.generate_state(1)[0]),
        np.random.default_rng(ss_data),
        np.random.default_rng(ss_gibbs),
    )


def _prior_for(cfg: TrainConfig, n_observed: int) -> DirichletPrior:
    if np.isscalar(cfg.alpha):
        return DirichletPrior.uniform(n_observed, float(cfg.alpha))
    concentration = np.asarray(cfg.alpha, dtype=np.float64)
    if concentration.shape != (n_observed,):
        raise ParameterError(f"alpha vector must have length {n_observed}")
    return DirichletPrior(concentration)


class _Evaluator:
    """Appends paired train/test metric records at strictly increasing steps."""

    def __init__(
        self,
        ds: LabeledDataset,
        test_ds: LabeledDataset | None,
        loss_cfg: LossConfig,
        n_eval_classes: int | None = None,
    ):
        self.ds = ds
        self.test_ds = test_ds
        self.loss_cfg = loss_cfg
        self.n_eval_classes = n_eval_classes
        self.records: list[MetricsRecord] = []
        self._last_step = -1

    def evaluate(
        self,
        step: int,
        params: ClassifierParams,
        correction: float | None = None,
        phi_l1_error: float | None = None,
        variation: float | None = None,
        bound: float | None = None,
    ) -> None:
        if step <= self._last_step:
            return
        self._last_step = step
        probs = forward_proba(params, self.ds.features)
        scored = probs if self.n_eval_classes is None else probs[:, : self.n_eval_classes]
        train_acc = float(np.mean(scored.argmax(axis=1) == self.ds.noisy_labels))
        train_loss, _ = soft_target_cross_entropy(
            probs, one_hot(self.ds.noisy_labels, probs.shape[1]), self.loss_cfg
        )
        self.records.append(
            MetricsRecord(
                step=step,
                split="train",
                accuracy=train_acc,
                loss=train_loss,
                correction_ratio=correction,
                phi_l1_error=phi_l1_error,
                max_phi_row_variation=variation,
                bound_value=bound,
            )
        )
        if self.test_ds is not None:
            keep = ~self.test_ds.ood_mask
            test_probs = forward_proba(params, self.test_ds.features[keep])
            test_loss, _ = soft_target_cross_entropy(
                test_probs,
                one_hot(self.test_ds.true_labels[keep], test_probs.shape[1]),
                self.loss_cfg,
            )
            self.records.append(
                MetricsRecord(
                    step=step,
                    split="test",
                    accuracy=test_accuracy(params, self.test_ds, self.n_eval_classes),
                    loss=test_loss,
                )
            )


class _VariationWindow:
    """Keeps the largest measured variation (and its bound) since the last eval."""

    def __init__(self) -> None:
        self.measured: float | None = None
        self.bound: float | None = None

    def push(self, measured: float, bound: float) -> None:
        if self.measured is None or measured > self.measured:
            self.measured = measured
            self.bound = bound

    def pop(self) -> tuple[float | None, float | None]:
        out = (self.measured, self.bound)
        self.measured = None
        self.bound = None
        return out


def train_ce(
    ds: LabeledDataset, cfg: TrainConfig, test_ds: LabeledDataset | None = None
) -> RunResult:
    """Plain clipped cross-entropy on the observed labels."""
    init_seed, data_rng, _ = _spawn_rngs(cfg.seed)
    params = init_params(_arch_for(ds, cfg), init_seed)
    opt = init_optimizer(params, cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    loss_cfg = LossConfig(cfg.clip)
    ev = _Evaluator(ds, test_ds, loss_cfg)
    ev.evaluate(0, params)
    step = 0
    for epoch in range(cfg.epochs):
        opt.learning_rate = _lr_at(cfg, epoch)
        for idx in minibatch_indices(data_rng, ds.n, cfg.batch_size):
            sgd_step(params, opt, ds.features[idx], ds.noisy_labels[idx], loss_cfg)
            step += 1
        if (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            ev.evaluate(step, params)
    return RunResult(ev.records, params, None)


def train_bootstrap_hard(
    ds: LabeledDataset, cfg: TrainConfig, test_ds: LabeledDataset | None = None
) -> RunResult:
    """Cross-entropy against a convex blend of the observed label and the model's own argmax.

    Target weights are beta on the observed label and (1 - beta) on the
    current prediction's argmax, recomputed every step.
    """
    init_seed, data_rng, _ = _spawn_rngs(cfg.seed)
    params = init_params(_arch_for(ds, cfg), init_seed)
    opt = init_optimizer(params, cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    loss_cfg = LossConfig(cfg.clip)
    beta = cfg.bootstrap_beta
    ev = _Evaluator(ds, test_ds, loss_cfg)
    ev.evaluate(0, params)
    step = 0
    for epoch in range(cfg.epochs):
        opt.learning_rate = _lr_at(cfg, epoch)
        for idx in minibatch_indices(data_rng, ds.n, cfg.batch_size):
            features = ds.features[idx]
            probs = forward_proba(params, features)
            pseudo = probs.argmax(axis=1)
            weights = beta * one_hot(ds.noisy_labels[idx], ds.n_classes)
            weights += (1.0 - beta) * one_hot(pseudo, ds.n_classes)
            sgd_step_soft(params, opt, features, weights, loss_cfg)
            step += 1
        if (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            ev.evaluate(step, params)
    return RunResult(ev.records, params, None)


def _row_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    return expz / expz.sum(axis=1, keepdims=True)


def _composed_loss_grads(
    params: ClassifierParams,
    features: np.ndarray,
    observed: np.ndarray,
    phi: np.ndarray,
    loss_cfg: LossConfig,
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """Clipped log-loss of the channel-mixed prediction q = probs @ phi.

    Returns (loss, classifier gradients, gradient with respect to phi).
    """
    probs, cache = _forward(params, features)
    mixture = probs @ phi
    loss, dmix = soft_target_cross_entropy(
        mixture, one_hot(observed, phi.shape[1]), loss_cfg
    )
    dprobs = dmix @ phi.T
    dlogits = dlogits_from_dprobs(probs, dprobs)
    grads = backprop_logits(params, features, cache, dlogits)
    dphi = probs.T @ dmix
    return loss, grads, dphi


def _initial_channel(
    ds: LabeledDataset,
    cfg: TrainConfig,
    params: ClassifierParams,
    n_latent: int,
) -> TransitionMatrix:
    """Transition estimate available before counts exist: oracle, identity, or predictions."""
    k = ds.n_classes
    if cfg.oracle_phi is not None:
        oracle = np.asarray(cfg.oracle_phi, dtype=np.float64)
        if oracle.shape != (k, k):
            raise ParameterError(f"oracle_phi must be ({k}, {k})")
        matrix = oracle
    elif cfg.warmup_kind == "identity":
        matrix = np.eye(k)
    else:
        predictions = forward_proba(params, ds.features)
        return warmup_transition(predictions, ds.noisy_labels, k)
    if n_latent > k:
        matrix = np.vstack([matrix, np.full((n_latent - k, k), 1.0 / k)])
    return TransitionMatrix(matrix)


def train_forward_fixed(
    ds: LabeledDataset, cfg: TrainConfig, test_ds: LabeledDataset | None = None
) -> RunResult:
    """Train through a frozen transition: fit q = probs @ phi to the observed labels."""
    init_seed, data_rng, _ = _spawn_rngs(cfg.seed)
    params = init_params(_arch_for(ds, cfg), init_seed)
    opt = init_optimizer(params, cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    loss_cfg = LossConfig(cfg.clip)
    opt.learning_rate = _lr_at(cfg, 0)
    pretrain_ce(
        params, opt, ds.features, ds.noisy_labels,
        cfg.pretrain_epochs, cfg.batch_size, loss_cfg, data_rng,
    )
    step = cfg.pretrain_epochs * math.ceil(ds.n / cfg.batch_size)
    channel = _initial_channel(ds, cfg, params, ds.n_classes)
    phi = channel.matrix
    phi_err = (
        transition_l1_error(phi, cfg.reference_phi)
        if cfg.reference_phi is not None
        else None
    )
    ev = _Evaluator(ds, test_ds, loss_cfg)
    ev.evaluate(step, params, phi_l1_error=phi_err)
    for epoch in range(cfg.epochs):
        opt.learning_rate = _lr_at(cfg, epoch)
        for idx in minibatch_indices(data_rng, ds.n, cfg.batch_size):
            loss, grads, _ = _composed_loss_grads(
                params, ds.features[idx], ds.noisy_labels[idx], phi, loss_cfg
            )
            if not np.isfinite(loss):
                raise TrainingError("non-finite training loss")
            apply_gradients(params, opt, grads)
            step += 1
        if (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            ev.evaluate(step, params, phi_l1_error=phi_err)
    return RunResult(ev.records, params, channel)


def train_s_adaptation(
    ds: LabeledDataset, cfg: TrainConfig, test_ds: LabeledDataset | None = None
) -> RunResult:
    """Train through a learnable row-softmax transition layer, jointly with the classifier.

    The layer starts at the prediction-derived transition and is frozen for
    the first warmup_steps composed steps; afterwards both the classifier and
    the layer follow the gradient. Optional grad_clip bounds each entry of
    the layer's gradient.
    """
    init_seed, data_rng, _ = _spawn_rngs(cfg.seed)
    params = init_params(_arch_for(ds, cfg), init_seed)
    opt = init_optimizer(params, cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    loss_cfg = LossConfig(cfg.clip)
    opt.learning_rate = _lr_at(cfg, 0)
    pretrain_ce(
        params, opt, ds.features, ds.noisy_labels,
        cfg.pretrain_epochs, cfg.batch_size, loss_cfg, data_rng,
    )
    n_batches = math.ceil(ds.n / cfg.batch_size)
    step = cfg.pretrain_epochs * n_batches
    warmup_steps = cfg.warmup_steps if cfg.warmup_steps is not None else n_batches
    channel_init = _initial_channel(ds, cfg, params, ds.n_classes)
    layer_logits = np.log(np.maximum(channel_init.matrix, 1e-8))
    layer_velocity = np.zeros_like(layer_logits)
    variations: list[BatchVariation] = []
    window = _VariationWindow()

    def current_phi(iteration: int) -> np.ndarray:
        if iteration <= warmup_steps:
            return channel_init.matrix
        return _row_softmax(layer_logits)

    def phi_error(phi: np.ndarray) -> float | None:
        if cfg.reference_phi is None:
            return None
        return transition_l1_error(phi, cfg.reference_phi)

    ev = _Evaluator(ds, test_ds, loss_cfg)
    ev.evaluate(step, params, phi_l1_error=phi_error(current_phi(0)))
    iteration = 0
    for epoch in range(cfg.epochs):
        opt.learning_rate = _lr_at(cfg, epoch)
        layer_rate = cfg.transition_lr if cfg.transition_lr is not None else opt.learning_rate
        for idx in minibatch_indices(data_rng, ds.n, cfg.batch_size):
            iteration += 1
            phi = current_phi(iteration)
            loss, grads, dphi = _composed_loss_grads(
                params, ds.features[idx], ds.noisy_labels[idx], phi, loss_cfg
            )
            if not np.isfinite(loss):
                raise TrainingError("non-finite training loss")
            apply_gradients(params, opt, grads)
            step += 1
            if iteration > warmup_steps:
                inner = (phi * dphi).sum(axis=1, keepdims=True)
                dlayer = phi * (dphi - inner)
                if cfg.grad_clip is not None:
                    dlayer = np.clip(dlayer, -cfg.grad_clip, cfg.grad_clip)
                if not np.all(np.isfinite(dlayer)):
                    raise TrainingError("non-finite transition-layer gradient")
                layer_velocity *= cfg.momentum
                layer_velocity += dlayer
                layer_logits -= layer_rate * layer_velocity
                new_phi = _row_softmax(layer_logits)
                measured = float(np.abs(new_phi - phi).sum(axis=1).max())
                variations.append(BatchVariation(step, measured, float("nan")))
                window.push(measured, float("nan"))
        if (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            var, bound = window.pop()
            ev.evaluate(
                step,
                params,
                phi_l1_error=phi_error(current_phi(iteration)),
                variation=var,
                bound=bound,
            )
    final_phi = TransitionMatrix(current_phi(iteration))
    return RunResult(ev.records, params, final_phi, variations)


def train_em_reference(
    ds: LabeledDataset, cfg: TrainConfig, test_ds: LabeledDataset | None = None
) -> RunResult:
    """Alternate closed-form transition re-estimates with soft-target classifier epochs.

    Each outer iteration forms per-sample responsibilities over the latent
    classes (prediction times the transition column of the observed label,
    normalized), re-estimates the transition from them with the shared
    weighted-confusion estimator, then runs em_m_epochs of SGD toward the
    responsibilities.
    """
    init_seed, data_rng, _ = _spawn_rngs(cfg.seed)
    params = init_params(_arch_for(ds, cfg), init_seed)
    opt = init_optimizer(params, cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    loss_cfg = LossConfig(cfg.clip)
    opt.learning_rate = _lr_at(cfg, 0)
    pretrain_ce(
        params, opt, ds.features, ds.noisy_labels,
        cfg.pretrain_epochs, cfg.batch_size, loss_cfg, data_rng,
    )
    step = cfg.pretrain_epochs * math.ceil(ds.n / cfg.batch_size)
    ev = _Evaluator(ds, test_ds, loss_cfg)
    ev.evaluate(step, params)
    phi_bar: TransitionMatrix | None = None
    for outer in range(cfg.epochs):
        opt.learning_rate = _lr_at(cfg, outer)
        predictions = forward_proba(params, ds.features)
        if phi_bar is None:
            responsibilities = predictions
        else:
            raw = predictions * phi_bar.matrix[:, ds.noisy_labels].T
            denom = raw.sum(axis=1, keepdims=True)
            # Rows where prediction mass and transition column cancel exactly
            # carry no signal; fall back to the bare prediction there.
            responsibilities = np.where(denom > 0.0, raw / np.maximum(denom, 1e-300), predictions)
        phi_bar = em_e_step(responsibilities, ds.noisy_labels, ds.n_classes)
        for _ in range(cfg.em_m_epochs):
            for idx in minibatch_indices(data_rng, ds.n, cfg.batch_size):
                sgd_step_soft(params, opt, ds.features[idx], responsibilities[idx], loss_cfg)
                step += 1
        if (outer + 1) % cfg.eval_every == 0 or outer == cfg.epochs - 1:
            phi_err = (
                transition_l1_error(phi_bar, cfg.reference_phi)
                if cfg.reference_phi is not None
                else None
            )
            ev.evaluate(step, params, phi_l1_error=phi_err)
    return RunResult(ev.records, params, phi_bar)


def em_e_step(
    predictions: np.ndarray, observed_labels: np.ndarray, n_observed: int
) -> TransitionMatrix:
    """Expected transition given fixed predictions; same estimator as warmup_transition."""
    return warmup_transition(predictions, observed_labels, n_observed)


def _train_latent(
    ds: LabeledDataset,
    cfg: TrainConfig,
    test_ds: LabeledDataset | None,
    extra_class: bool,
    use_clean: bool,
) -> RunResult:
    """Shared loop: collapsed-Gibbs resampling of latent labels + SGD on the samples."""
    k = ds.n_classes
    n_latent = k + 1 if extra_class else k
    if use_clean and not ds.clean_mask.any():
        warnings.warn(
            "clean subset is empty; falling back to plain latent-label training",
            UserWarning,
        )
        use_clean = False
    init_seed, data_rng, gibbs_rng = _spawn_rngs(cfg.seed)
    params = init_params(_arch_for(ds, cfg, extra_class), init_seed)
    opt = init_optimizer(params, cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    loss_cfg = LossConfig(cfg.clip)
    prior = _prior_for(cfg, k)

    opt.learning_rate = _lr_at(cfg, 0)
    pretrain_ce(
        params, opt, ds.features, ds.noisy_labels,
        cfg.pretrain_epochs, cfg.batch_size, loss_cfg, data_rng,
    )
    n_batches = math.ceil(ds.n / cfg.batch_size)
    step = cfg.pretrain_epochs * n_batches

    channel_init = _initial_channel(ds, cfg, params, n_latent)
    assignment = LatentAssignment.from_labels(ds.noisy_labels)
    exclude = ds.clean_mask if use_clean else None
    counts = ConfusionCounts.from_assignment(
        assignment.labels, ds.noisy_labels, n_latent, k, exclude=exclude
    )

    total = (
        cfg.total_iterations
        if cfg.total_iterations is not None
        else cfg.epochs * n_batches
    )
    warmup_steps = cfg.warmup_steps if cfg.warmup_steps is not None else n_batches
    schedule = cfg.anneal
    if schedule.enabled and schedule.max_step <= 1 and total > 1:
        schedule = replace(schedule, max_step=total)

    def current_phi() -> TransitionMatrix:
        return transition_from_counts(counts, prior, smoothed=cfg.smoothed)

    def phi_error() -> float | None:
        if cfg.reference_phi is None:
            return None
        return transition_l1_error(current_phi().matrix[:k], cfg.reference_phi)

    def check_books() -> None:
        counts.check_consistent()
        expected = ConfusionCounts.from_assignment(
            assignment.labels, ds.noisy_labels, n_latent, k, exclude=exclude
        )
        if np.any(expected.counts != counts.counts):
            raise InvariantError("confusion counts drifted from the assignment")

    ev = _Evaluator(ds, test_ds, loss_cfg, n_eval_classes=k if extra_class else None)
    ev.evaluate(
        step,
        params,
        correction=correction_ratio(assignment.labels, ds.true_labels),
        phi_l1_error=phi_error(),
    )
    variations: list[BatchVariation] = []
    window = _VariationWindow()
    iteration = 0
    while iteration < total:
        epoch = iteration // n_batches
        opt.learning_rate = _lr_at(cfg, epoch)
        for idx in minibatch_indices(data_rng, ds.n, cfg.batch_size):
            if iteration >= total:
                break
            iteration += 1
            features = ds.features[idx]
            probs = forward_proba(params, features)
            resample = (
                np.flatnonzero(~ds.clean_mask[idx]) if use_clean else np.arange(len(idx))
            )
            if resample.size:
                before = counts.copy()
                warm = channel_init if iteration <= warmup_steps else None
                anneal = schedule.coefficient(iteration)
                gibbs_sample_batch(
                    probs[resample],
                    ds.noisy_labels[idx][resample],
                    counts,
                    prior,
                    assignment,
                    idx[resample],
                    gibbs_rng,
                    warmup_phi=warm,
                    anneal=anneal,
                    anneal_target=schedule.target,
                )
                cert = update_bound(before, counts, prior, smoothed=cfg.smoothed)
                if np.any(cert.measured > cert.bound + BOUND_SLACK):
                    raise InvariantError(
                        "transition row moved beyond the per-batch update bound"
                    )
                worst = int(np.argmax(cert.measured))
                variations.append(
                    BatchVariation(
                        step + 1,
                        float(cert.measured[worst]),
                        float(cert.bound[worst]),
                    )
                )
                window.push(float(cert.measured[worst]), float(cert.bound[worst]))
            targets = assignment.labels[idx]
            sgd_step(params, opt, features, targets, loss_cfg)
            step += 1
        epochs_done = iteration // n_batches
        if iteration >= total or epochs_done % cfg.eval_every == 0:
            check_books()
            var, bound = window.pop()
            ev.evaluate(
                step,
                params,
                correction=correction_ratio(assignment.labels, ds.true_labels),
                phi_l1_error=phi_error(),
                variation=var,
                bound=bound,
            )
    check_books()
    outlier_recall = None
    if extra_class and ds.ood_mask.any():
        outlier_recall = float(np.mean(assignment.labels[ds.ood_mask] == k))
    return RunResult(ev.records, params, current_phi(), variations, outlier_recall)


def train_lccn(
    ds: LabeledDataset, cfg: TrainConfig, test_ds: LabeledDataset | None = None
) -> RunResult:
    """Latent-label regression: Gibbs-resample true labels, fit the classifier to them."""
    return _train_latent(ds, cfg, test_ds, extra_class=False, use_clean=False)


def train_lccn_star(
    ds: LabeledDataset, cfg: TrainConfig, test_ds: LabeledDataset | None = None
) -> RunResult:
    """Latent-label regression with one extra latent class acting as an outlier bucket."""
    return _train_latent(ds, cfg, test_ds, extra_class=True, use_clean=False)


def train_lccn_plus(
    ds: LabeledDataset, cfg: TrainConfig, test_ds: LabeledDataset | None = None
) -> RunResult:
    """Latent-label regression that pins trusted samples to their labels.

    Clean-masked samples are never resampled and stay out of the confusion
    counts; they still contribute supervised gradient steps.
    """
    return _train_latent(ds, cfg, test_ds, extra_class=False, use_clean=True)


TRAINERS = {
    "ce": train_ce,
    "bootstrap_hard": train_bootstrap_hard,
    "forward_fixed": train_forward_fixed,
    "s_adaptation": train_s_adaptation,
    "em_reference": train_em_reference,
    "lccn": train_lccn,
    "lccn_star": train_lccn_star,
    "lccn_plus": train_lccn_plus,
}


def run_trainer(
    ds: LabeledDataset, cfg: TrainConfig, test_ds: LabeledDataset | None = None
) -> RunResult:
    """Dispatch on cfg.kind; validates the result's record ordering."""
    result = TRAINERS[cfg.kind](ds, cfg, test_ds)
    result.validate_record_order()
    return result
