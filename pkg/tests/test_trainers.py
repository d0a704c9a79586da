"""End-to-end trainer behaviour: equivalences, determinism, and config guards."""

import dataclasses

import numpy as np
import pytest

from lccn_lab.datagen import NoiseSpec, apply_noise, make_gaussian_mixture
from lccn_lab.errors import InvariantError, ParameterError
from lccn_lab.metrics import MetricsRecord
from lccn_lab.trainers import (
    RunResult,
    TrainConfig,
    em_e_step,
    run_trainer,
    train_bootstrap_hard,
    train_ce,
    train_forward_fixed,
    train_lccn,
    train_lccn_plus,
    train_lccn_star,
    train_s_adaptation,
)
from lccn_lab.noise_model import warmup_transition


def records_equal(a, b):
    if len(a) != len(b):
        return False
    return all(ra == rb for ra, rb in zip(a, b))


def params_equal(pa, pb):
    return all(np.array_equal(pa.tensors[k], pb.tensors[k]) for k in pa.tensors)


# --- exact equivalences between trainers ------------------------------------


def test_identity_channel_reduces_to_plain_ce(blobs2_tiny):
    ds, test = blobs2_tiny["noisy"], blobs2_tiny["test"]
    common = dict(epochs=3, batch_size=16, learning_rate=0.05, seed=5, eval_every=1)
    ce = train_ce(ds, TrainConfig(kind="ce", **common), test)
    ff = train_forward_fixed(
        ds,
        TrainConfig(kind="forward_fixed", pretrain_epochs=0, oracle_phi=np.eye(2), **common),
        test,
    )
    assert records_equal(ce.records, ff.records)
    assert params_equal(ce.final_params, ff.final_params)
    assert np.array_equal(ff.final_phi.matrix, np.eye(2))


def test_full_weight_bootstrap_reduces_to_plain_ce(blobs2_tiny):
    ds, test = blobs2_tiny["noisy"], blobs2_tiny["test"]
    common = dict(epochs=3, batch_size=16, learning_rate=0.05, seed=5, eval_every=1)
    ce = train_ce(ds, TrainConfig(kind="ce", **common), test)
    boot = train_bootstrap_hard(
        ds, TrainConfig(kind="bootstrap_hard", bootstrap_beta=1.0, **common), test
    )
    assert records_equal(ce.records, boot.records)
    assert params_equal(ce.final_params, boot.final_params)


def test_all_pinned_latent_run_reduces_to_plain_ce(blobs2_tiny):
    # every sample trusted: nothing is ever resampled, so the run is CE with
    # the epoch budget split between the two phases
    ds = dataclasses.replace(
        blobs2_tiny["noisy"], clean_mask=np.ones(blobs2_tiny["noisy"].n, dtype=bool)
    )
    plus = train_lccn_plus(
        ds, TrainConfig(kind="lccn_plus", epochs=2, pretrain_epochs=2, batch_size=16,
                        learning_rate=0.05, seed=9)
    )
    ce = train_ce(
        ds, TrainConfig(kind="ce", epochs=4, batch_size=16, learning_rate=0.05, seed=9)
    )
    assert params_equal(ce.final_params, plus.final_params)
    assert plus.batch_variations == []


def test_em_expectation_matches_warmup_estimator(rng):
    logits = rng.normal(size=(40, 3))
    predictions = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    observed = rng.integers(0, 3, size=40)
    assert np.array_equal(
        em_e_step(predictions, observed, 3).matrix,
        warmup_transition(predictions, observed, 3).matrix,
    )


def test_frozen_adaptation_layer_keeps_initial_channel(blobs2_tiny):
    ds = blobs2_tiny["noisy"]
    start = np.array([[0.7, 0.3], [0.4, 0.6]])
    result = train_s_adaptation(
        ds,
        TrainConfig(
            kind="s_adaptation", epochs=2, pretrain_epochs=1, batch_size=16,
            learning_rate=0.05, seed=3, oracle_phi=start, warmup_steps=10**6,
        ),
    )
    assert np.array_equal(result.final_phi.matrix, start)
    assert result.batch_variations == []


# --- determinism and bookkeeping ---------------------------------------------


def test_same_seed_reproduces_run_bitwise(blobs2_tiny):
    ds, test = blobs2_tiny["noisy"], blobs2_tiny["test"]
    cfg = TrainConfig(kind="lccn", epochs=2, pretrain_epochs=1, batch_size=16,
                      learning_rate=0.02, seed=0, eval_every=1)
    first = train_lccn(ds, cfg, test)
    second = train_lccn(ds, cfg, test)
    assert records_equal(first.records, second.records)
    assert params_equal(first.final_params, second.final_params)
    assert first.batch_variations == second.batch_variations

    other = train_lccn(ds, dataclasses.replace(cfg, seed=1), test)
    assert not params_equal(first.final_params, other.final_params)


def test_latent_run_emits_stochastic_transition(blobs2_tiny):
    ds = blobs2_tiny["noisy"]
    result = train_lccn(
        ds, TrainConfig(kind="lccn", epochs=2, pretrain_epochs=1, batch_size=16,
                        learning_rate=0.02, seed=4)
    )
    phi = result.final_phi.matrix
    assert phi.shape == (2, 2)
    assert np.allclose(phi.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(phi >= 0)


def test_iteration_cap_limits_sampling_phase(blobs2_tiny):
    ds = blobs2_tiny["noisy"]
    result = train_lccn(
        ds, TrainConfig(kind="lccn", epochs=10, pretrain_epochs=0, batch_size=16,
                        learning_rate=0.02, seed=4, total_iterations=3)
    )
    assert len(result.batch_variations) == 3


def test_outlier_bucket_has_extra_row(blobs2_tiny):
    spec = NoiseSpec(kind="openset", ratio=0.3, ood_fraction=0.25, seed=5)
    ds, _ = apply_noise(blobs2_tiny["clean"], spec)
    result = train_lccn_star(
        ds, TrainConfig(kind="lccn_star", epochs=2, pretrain_epochs=1, batch_size=16,
                        learning_rate=0.02, seed=4)
    )
    assert result.final_phi.matrix.shape == (3, 2)
    assert result.outlier_recall is not None
    assert 0.0 <= result.outlier_recall <= 1.0


def test_pinned_trainer_warns_without_trusted_samples(blobs2_tiny):
    ds = blobs2_tiny["noisy"]
    assert not ds.clean_mask.any()
    with pytest.warns(UserWarning, match="clean subset"):
        train_lccn_plus(
            ds, TrainConfig(kind="lccn_plus", epochs=1, pretrain_epochs=0, batch_size=16,
                            learning_rate=0.02, seed=4)
        )


def test_dispatch_runs_requested_trainer(blobs2_tiny):
    ds, test = blobs2_tiny["noisy"], blobs2_tiny["test"]
    result = run_trainer(ds, TrainConfig(kind="ce", epochs=1, batch_size=16, seed=0), test)
    assert result.records
    assert 0.0 <= result.final_test_accuracy() <= 1.0

    no_test = run_trainer(ds, TrainConfig(kind="ce", epochs=1, batch_size=16, seed=0))
    with pytest.raises(ParameterError):
        no_test.final_test_accuracy()


def test_record_order_validation_catches_regressions():
    rows = [
        MetricsRecord(step=5, split="train", accuracy=0.5, loss=1.0),
        MetricsRecord(step=5, split="train", accuracy=0.5, loss=1.0),
    ]
    result = RunResult(records=rows, final_params=None, final_phi=None)
    with pytest.raises(InvariantError):
        result.validate_record_order()


def test_milestones_change_learning_rate(blobs2_tiny):
    # a drastic late-epoch rate blows past the plain run's parameters
    ds = blobs2_tiny["noisy"]
    base = TrainConfig(kind="ce", epochs=4, batch_size=16, learning_rate=0.01, seed=2)
    plain = train_ce(ds, base)
    stepped = train_ce(ds, dataclasses.replace(base, lr_milestones=((2, 0.2),)))
    assert not params_equal(plain.final_params, stepped.final_params)


@pytest.mark.parametrize(
    "bad",
    [
        dict(kind="mystery"),
        dict(epochs=-1),
        dict(pretrain_epochs=-1),
        dict(batch_size=0),
        dict(bootstrap_beta=1.5),
        dict(warmup_steps=-1),
        dict(total_iterations=-1),
        dict(warmup_kind="bogus"),
        dict(eval_every=0),
        dict(em_m_epochs=0),
        dict(clip=0.0),
    ],
)
def test_config_rejects_bad_values(bad):
    with pytest.raises(ParameterError):
        TrainConfig(**bad)


def test_alpha_vector_must_match_class_count(blobs2_tiny):
    ds = blobs2_tiny["noisy"]
    cfg = TrainConfig(kind="lccn", epochs=1, pretrain_epochs=0, batch_size=16,
                      alpha=(1.0, 1.0, 1.0), seed=0)
    with pytest.raises(ParameterError, match="alpha"):
        train_lccn(ds, cfg)


def test_oracle_channel_shape_checked(blobs2_tiny):
    ds = blobs2_tiny["noisy"]
    cfg = TrainConfig(kind="forward_fixed", epochs=1, pretrain_epochs=0,
                      batch_size=16, oracle_phi=np.eye(3), seed=0)
    with pytest.raises(ParameterError, match="oracle_phi"):
        train_forward_fixed(ds, cfg)
