"""Training and evaluation loops.

Training minimizes the summed binary cross-entropy between the decoded
per-input probabilities and one known satisfying assignment, one circuit
per optimizer step. Evaluation thresholds the decoded probabilities once
and scores by exact circuit simulation (solution rate), bucketed by input
count.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Tape, adam_step, save_checkpoint
from .circuit import evaluate
from .datagen import LabeledInstance, derived_rng
from .model import ModelConfig, ModelParams, forward_probs, init_params, predict_assignment


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 100
    seed: int = 0
    early_stop_loss: float = 1e-3
    log_every: int = 0  # epochs between stderr progress lines; 0 = silent

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainResult:
    params: ModelParams
    best_values: dict[str, np.ndarray]
    best_loss: float
    epoch_losses: list[float]
    epochs_run: int
    runtime_seconds: float


def targets_for(instance: LabeledInstance) -> np.ndarray:
    return np.array(
        [[float(instance.label[v]) for v in instance.circuit.inputs]]
    )


def instance_loss(
    instance: LabeledInstance,
    params: ModelParams,
    config: ModelConfig,
    tape: Tape,
):
    probs = forward_probs(instance.circuit, params, config, tape)
    return tape.bce_sum(probs, targets_for(instance))


def config_fingerprint(model_config: ModelConfig, train_config: TrainConfig) -> str:
    payload = json.dumps(
        {"model": model_config.to_dict(), "train": train_config.to_dict()},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def train(
    instances: list[LabeledInstance],
    model_config: ModelConfig,
    train_config: TrainConfig,
    log=None,
) -> TrainResult:
    """Adam over single-instance steps with a seeded per-epoch shuffle.
    Stops early once the mean epoch loss falls below early_stop_loss;
    the returned best_values snapshot is the parameter set with the lowest
    mean epoch loss seen. A non-finite loss aborts with the instance index."""
    if not instances:
        raise TrainingError("no training instances")
    params = init_params(model_config, train_config.seed)
    rng = derived_rng(train_config.seed, 0xE0)
    best_loss = np.inf
    best_values = params.store.copy_values()
    epoch_losses: list[float] = []
    started = time.perf_counter()
    epochs_run = 0
    for epoch in range(train_config.epochs):
        order = rng.permutation(len(instances))
        total = 0.0
        for idx in order:
            instance = instances[idx]
            tape = Tape()
            loss = instance_loss(instance, params, model_config, tape)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value} on instance {idx} "
                    f"(origin={instance.origin}, params={instance.params}) "
                    f"in epoch {epoch}"
                )
            tape.backward(loss)
            adam_step(params.store, lr=train_config.lr, allow_unused=True)
            total += value
        mean_loss = total / len(instances)
        epoch_losses.append(mean_loss)
        epochs_run = epoch + 1
        if mean_loss < best_loss:
            best_loss = mean_loss
            best_values = params.store.copy_values()
        if log is not None and train_config.log_every and (
            epoch % train_config.log_every == 0
        ):
            log(f"epoch {epoch}: mean loss {mean_loss:.6f}")
        if mean_loss < train_config.early_stop_loss:
            break
    return TrainResult(
        params=params,
        best_values=best_values,
        best_loss=best_loss,
        epoch_losses=epoch_losses,
        epochs_run=epochs_run,
        runtime_seconds=time.perf_counter() - started,
    )


@dataclass
class EvalReport:
    solved: int
    total: int
    per_inputs: dict[int, tuple[int, int]]  # n_inputs -> (solved, total)
    runtime_seconds: float
    fingerprint: str

    @property
    def solution_rate(self) -> float:
        return self.solved / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            "solved": self.solved,
            "total": self.total,
            "solution_rate": self.solution_rate,
            "per_inputs": {
                str(n): {"solved": s, "total": t}
                for n, (s, t) in sorted(self.per_inputs.items())
            },
            "runtime_seconds": self.runtime_seconds,
            "fingerprint": self.fingerprint,
        }


def evaluate_solution_rate(
    instances: list[LabeledInstance],
    params: ModelParams,
    config: ModelConfig,
    fingerprint: str = "",
) -> EvalReport:
    """Fraction of instances whose single thresholded prediction satisfies
    the circuit, verified by exact simulation."""
    started = time.perf_counter()
    solved = 0
    per_inputs: dict[int, list[int]] = {}
    for instance in instances:
        assignment, _ = predict_assignment(instance.circuit, params, config)
        ok = evaluate(instance.circuit, assignment) == 1
        solved += ok
        n = len(instance.circuit.inputs)
        bucket = per_inputs.setdefault(n, [0, 0])
        bucket[0] += ok
        bucket[1] += 1
    return EvalReport(
        solved=solved,
        total=len(instances),
        per_inputs={n: (s, t) for n, (s, t) in per_inputs.items()},
        runtime_seconds=time.perf_counter() - started,
        fingerprint=fingerprint,
    )


def train_and_checkpoint(
    instances: list[LabeledInstance],
    model_config: ModelConfig,
    train_config: TrainConfig,
    checkpoint_path: str,
    log=None,
) -> TrainResult:
    result = train(instances, model_config, train_config, log=log)
    save_checkpoint(result.best_values, checkpoint_path)
    return result


def iteration_sweep(
    train_instances: list[LabeledInstance],
    eval_instances: list[LabeledInstance],
    iteration_counts: list[int],
    base_model_config: ModelConfig,
    train_config: TrainConfig,
    log=None,
) -> dict[int, EvalReport]:
    """Retrain from the same seed for each message-passing iteration count
    and evaluate on the same held-out set."""
    reports: dict[int, EvalReport] = {}
    for t in iteration_counts:
        config = ModelConfig(**{**base_model_config.to_dict(), "iterations": t})
        result = train(train_instances, config, train_config, log=log)
        result.params.store.load_values(result.best_values)
        reports[t] = evaluate_solution_rate(
            eval_instances,
            result.params,
            config,
            fingerprint=config_fingerprint(config, train_config),
        )
    return reports
