"""Scikit-learn style estimator wrapper around the trainer.

`CircuitSatPredictor.fit` takes labeled circuits, `predict` returns one
assignment per circuit, and `score` is the solution rate under exact
simulation. `get_params`/`set_params` follow the sklearn contract so the
class composes with sklearn model-selection utilities when sklearn is
installed, without requiring it."""

from __future__ import annotations

import numpy as np

from .circuit import Circuit, evaluate
from .datagen import LabeledInstance
from .model import ModelConfig, forward_probs, init_params, predict_assignment
from .autodiff import Tape
from .training import TrainConfig, TrainResult, train


class NotFittedError(RuntimeError):
    pass


class CircuitSatPredictor:
    _PARAM_NAMES = (
        "hidden_dim",
        "iterations",
        "decoder_kind",
        "decoder_dim",
        "aggregator",
        "threshold",
        "ablation_concurrent",
        "lr",
        "epochs",
        "seed",
        "early_stop_loss",
    )

    def __init__(
        self,
        hidden_dim: int = 64,
        iterations: int = 10,
        decoder_kind: str = "lstm",
        decoder_dim: int = 10,
        aggregator: str = "sum",
        threshold: float = 0.5,
        ablation_concurrent: bool = False,
        lr: float = 1e-3,
        epochs: int = 100,
        seed: int = 0,
        early_stop_loss: float = 1e-3,
    ):
        self.hidden_dim = hidden_dim
        self.iterations = iterations
        self.decoder_kind = decoder_kind
        self.decoder_dim = decoder_dim
        self.aggregator = aggregator
        self.threshold = threshold
        self.ablation_concurrent = ablation_concurrent
        self.lr = lr
        self.epochs = epochs
        self.seed = seed
        self.early_stop_loss = early_stop_loss

    # -- sklearn parameter protocol ----------------------------------------

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._PARAM_NAMES}

    def set_params(self, **params) -> "CircuitSatPredictor":
        for name, value in params.items():
            if name not in self._PARAM_NAMES:
                raise ValueError(f"invalid parameter {name!r}")
            setattr(self, name, value)
        return self

    # -- fitting and prediction ---------------------------------------------

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            hidden_dim=self.hidden_dim,
            iterations=self.iterations,
            decoder_kind=self.decoder_kind,
            decoder_dim=self.decoder_dim,
            aggregator=self.aggregator,
            threshold=self.threshold,
            ablation_concurrent=self.ablation_concurrent,
        )

    def fit(self, circuits: list[Circuit], labels: list[dict]) -> "CircuitSatPredictor":
        """Train on circuits with known satisfying assignments (dicts
        mapping input node id -> bit)."""
        if len(circuits) != len(labels):
            raise ValueError(
                f"{len(circuits)} circuits but {len(labels)} labels"
            )
        instances = [
            LabeledInstance(circuit=c, label=dict(y), origin="user", params={})
            for c, y in zip(circuits, labels)
        ]
        for instance in instances:
            instance.verify()
        config = self._model_config()
        result: TrainResult = train(
            instances,
            config,
            TrainConfig(
                lr=self.lr,
                epochs=self.epochs,
                seed=self.seed,
                early_stop_loss=self.early_stop_loss,
            ),
        )
        result.params.store.load_values(result.best_values)
        self.params_ = result.params
        self.config_ = config
        self.train_result_ = result
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit() before predicting")

    def predict(self, circuits: list[Circuit]) -> list[dict]:
        self._check_fitted()
        return [
            predict_assignment(c, self.params_, self.config_)[0] for c in circuits
        ]

    def predict_proba(self, circuits: list[Circuit]) -> list[np.ndarray]:
        self._check_fitted()
        out = []
        for c in circuits:
            probs = forward_probs(c, self.params_, self.config_, Tape())
            out.append(probs.data.reshape(-1).copy())
        return out

    def score(self, circuits: list[Circuit], labels=None) -> float:
        """Solution rate: fraction of circuits whose predicted assignment
        drives the output to 1 (labels are ignored; correctness is checked
        by simulation, not by matching a particular satisfying assignment)."""
        self._check_fitted()
        if not circuits:
            return 0.0
        solved = sum(
            evaluate(c, a) == 1 for c, a in zip(circuits, self.predict(circuits))
        )
        return solved / len(circuits)
