from collections.abc import Iterator
from pathlib import Path

import numpy as np
import pytest

from ci_coder import training
from ci_coder.Electrodogram import Electrodogram
from ci_coder.exceptions import EmptyDatasetError, TrainingDivergedError
from ci_coder.models import AttentionSpec, ModelConfig, TcnLayerSpec, TrainingConfig
from ci_coder.neural_coder import NeuralCoder
from ci_coder.training import (
    HISTORY_COLUMNS,
    Adam,
    EarlyStopping,
    PlateauLearningRate,
    TrainingExample,
    evaluate_loss,
    train,
)
from ci_coder.Tensor import Tensor, tensor_sum

CHANNELS = 4
MODEL = ModelConfig(
    num_channels=CHANNELS,
    tcn_layers=(TcnLayerSpec(out_channels=5, kernel_size=2, dilation=1),),
    attention=AttentionSpec(d_k=3, d_v=5, context=4),
)


def make_examples(count: int, seed: int, frames: int = 10) -> list[TrainingExample]:
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(count):
        features = rng.uniform(0, 2, (CHANNELS, frames))
        # the target is a simple function of the features so the loss can fall
        magnitudes = np.where(features > 1.2, features / 2, 0.0)
        examples.append(TrainingExample(features, Electrodogram(magnitudes, 1000.0), f"ex{i}"))
    return examples


def scripted_losses(values: list[float]) -> Iterator[float]:
    yield from values
    while True:
        yield values[-1]


def test_constant_validation_loss_schedule(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr(training, "evaluate_loss", lambda *_: 1.0)
    config = TrainingConfig(max_epochs=50)
    result = train(make_examples(2, 0), make_examples(1, 1), config, MODEL)

    history = result.history
    assert history.learning_rates == pytest.approx([1e-3] * 4 + [8e-4] * 2)
    assert len(history.records) == 6
    assert history.stopped_early
    assert history.best_epoch == 1


def test_improvement_resets_patience(monkeypatch: pytest.MonkeyPatch) -> None:
    losses = scripted_losses([1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5])
    monkeypatch.setattr(training, "evaluate_loss", lambda *_: next(losses))
    result = train(make_examples(2, 0), make_examples(1, 1), TrainingConfig(max_epochs=50), MODEL)

    history = result.history
    assert history.best_epoch == 4
    assert history.best_val_loss == 0.5
    assert len(history.records) == 9
    assert history.learning_rates == pytest.approx([1e-3] * 7 + [8e-4] * 2)


def test_best_snapshot_is_restored(monkeypatch: pytest.MonkeyPatch) -> None:
    snapshots: list[dict[str, np.ndarray]] = []

    def loss_of_epoch(coder: NeuralCoder, *_: object) -> float:
        snapshots.append(coder.state_dict())
        return [3.0, 1.0, 2.0, 2.0][min(len(snapshots) - 1, 3)]

    monkeypatch.setattr(training, "evaluate_loss", loss_of_epoch)
    config = TrainingConfig(max_epochs=4, early_stop_patience=10)
    result = train(make_examples(2, 0), make_examples(1, 1), config, MODEL)

    assert result.history.best_epoch == 2
    assert not result.history.stopped_early
    final = result.coder.state_dict()
    assert all(np.array_equal(final[name], snapshots[1][name]) for name in final)


def test_training_reduces_the_loss() -> None:
    train_set, val_set = make_examples(4, 0), make_examples(2, 1)
    initial = evaluate_loss(NeuralCoder(MODEL, seed=0), val_set, 1.0, selected_only=True)
    result = train(train_set, val_set, TrainingConfig(max_epochs=15, initial_lr=1e-2), MODEL)
    assert result.history.best_val_loss is not None
    assert result.history.best_val_loss < initial


def test_training_is_deterministic() -> None:
    config = TrainingConfig(max_epochs=3, batch_size=2)
    first = train(make_examples(3, 0), make_examples(1, 1), config, MODEL)
    second = train(make_examples(3, 0), make_examples(1, 1), config, MODEL)
    assert first.coder.to_bytes() == second.coder.to_bytes()
    assert first.history.to_csv() == second.history.to_csv()


def test_empty_splits_are_rejected() -> None:
    with pytest.raises(EmptyDatasetError):
        train([], make_examples(1, 1), TrainingConfig(), MODEL)
    with pytest.raises(EmptyDatasetError):
        train(make_examples(1, 0), [], TrainingConfig(), MODEL)


def test_non_finite_validation_loss_aborts(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr(training, "evaluate_loss", lambda *_: float("nan"))
    with pytest.raises(TrainingDivergedError) as info:
        train(make_examples(1, 0), make_examples(1, 1), TrainingConfig(), MODEL)
    assert info.value.epoch == 1


def test_history_csv(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr(training, "evaluate_loss", lambda *_: 0.25)
    result = train(make_examples(1, 0), make_examples(1, 1), TrainingConfig(max_epochs=2), MODEL)
    lines = result.history.save(tmp_path / "history.csv").read_text().splitlines()
    assert lines[0] == ",".join(HISTORY_COLUMNS)
    assert len(lines) == 3
    assert lines[1].startswith("1,")
    assert lines[1].endswith(",0.25,0.001")


def test_plateau_schedule_counts_from_the_last_reduction() -> None:
    schedule = PlateauLearningRate(1.0, patience=2, factor=0.5, min_delta=0.0)
    rates = [schedule.step(loss) for loss in [1.0, 1.0, 1.0, 1.0, 1.0, 0.1]]
    assert rates == [1.0, 1.0, 0.5, 0.5, 0.25, 0.25]


def test_early_stopping_respects_min_delta() -> None:
    stopper = EarlyStopping(patience=2, min_delta=0.1)
    assert stopper.step(1.0)
    assert not stopper.step(0.95)
    assert not stopper.should_stop
    assert not stopper.step(0.95)
    assert stopper.should_stop


def test_adam_first_step_moves_by_the_learning_rate() -> None:
    x = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    tensor_sum(x * np.array([3.0, -0.5])).backward()
    Adam({"x": x}, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-12).step()
    assert x.data.tolist() == pytest.approx([0.9, -1.9])
