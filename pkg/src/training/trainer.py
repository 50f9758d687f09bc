"""
Joint Two-Domain Trainer
Minimizes loss_t + gamma * loss_s with Adagrad. Every step draws one target
batch and one source batch, records both losses on a single tape and
applies one update over all touched parameters.

An epoch is one pass over the shuffled target instances. The source stream
is consumed in step with it and cycles (reshuffling on every wrap) when it
runs out, continuing across epochs.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from autograd.ops import add, binary_cross_entropy, scale
from autograd.optim import DEFAULT_EPSILON, DEFAULT_LEARNING_RATE, Adagrad
from autograd.tensor import Tape, Tensor, backward
from errors import ArgumentError, ConfigurationError
from features.dataset import Dataset, Instance
from features.schema import Domain
from minet.embedding import ReprSpec
from minet.model import (
    MiNetConfig,
    MiNetParams,
    ModelKind,
    ModelParams,
    build_model,
    parameter_count,
    predict,
    source_probabilities,
    target_probabilities,
)
from training.metrics import EvalReport, evaluate_scores, logloss
from training.records import EpochRecord, RecordLogger

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    """Optimization settings for one training run"""
    batch_source: int = Field(default=64, gt=0)
    batch_target: int = Field(default=32, gt=0)
    epochs: int = Field(default=20, gt=0)
    learning_rate: float = Field(default=DEFAULT_LEARNING_RATE, gt=0)
    epsilon: float = Field(default=DEFAULT_EPSILON, gt=0)
    gamma: float = Field(default=0.5, ge=0)
    seed: int = 0
    early_stop_patience: int = Field(default=0, ge=0)
    refit_on_validation: bool = False
    # with gamma = 0, report the (unoptimized) source loss instead of leaving it empty
    evaluate_unweighted_source: bool = True
    workers: int = Field(default=1, gt=0)


class TrainReport(BaseModel):
    records: List[EpochRecord] = Field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    refit_epochs: Optional[int] = None
    parameter_count: int = 0

    @property
    def best(self) -> EpochRecord:
        return next(r for r in self.records if r.epoch == self.best_epoch)

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]


def batch_loss(batch: Sequence[Instance], params: ModelParams, config: MiNetConfig, domain: Domain) -> Tensor:
    """
    Mean clamped cross-entropy of one single-domain batch.

    Raises:
        ArgumentError: empty batch
        DomainError: an instance from the other domain
    """
    if not batch:
        raise ArgumentError("batch_loss needs a non-empty batch")
    if domain == Domain.SOURCE:
        probs = source_probabilities(params, batch)
    else:
        probs = target_probabilities(params, batch, config)
    return binary_cross_entropy(probs, [i.label for i in batch])


def combined_loss(
    target_batch: Sequence[Instance],
    source_batch: Sequence[Instance],
    params: ModelParams,
    config: MiNetConfig,
    gamma: float,
) -> Tuple[Tensor, Tensor, Optional[Tensor]]:
    """(loss_t + gamma * loss_s, loss_t, loss_s); loss_s is None without a source batch"""
    loss_t = batch_loss(target_batch, params, config, Domain.TARGET)
    if not source_batch:
        return loss_t, loss_t, None
    loss_s = batch_loss(source_batch, params, config, Domain.SOURCE)
    return add(loss_t, scale(loss_s, gamma)), loss_t, loss_s


class CyclingStream:
    """Endless shuffled batches over a fixed instance list"""

    def __init__(self, instances: Sequence[Instance], batch_size: int, rng: np.random.Generator):
        self.instances = list(instances)
        self.batch_size = min(batch_size, len(self.instances))
        self.rng = rng
        self.order = np.zeros(0, dtype=np.int64)
        self.position = 0
        self.passes = 0

    def next_batch(self) -> List[Instance]:
        batch = []
        while len(batch) < self.batch_size:
            if self.position >= self.order.size:
                self.order = self.rng.permutation(len(self.instances))
                self.position = 0
                self.passes += 1
            take = self.order[self.position:self.position + self.batch_size - len(batch)]
            batch.extend(self.instances[i] for i in take)
            self.position += take.size
        return batch


def _labels(instances: Sequence[Instance]) -> np.ndarray:
    return np.array([i.label for i in instances])


def _snapshot(params: ModelParams) -> Dict[str, np.ndarray]:
    return {name: t.data.copy() for name, t in params.parameters().items()}


def _restore(params: ModelParams, snapshot: Dict[str, np.ndarray]):
    for name, tensor in params.parameters().items():
        tensor.data[...] = snapshot[name]


class Trainer:
    """
    Runs the epoch loop for one model.

    Holds the parameters, the optimizer state and both random streams, so a
    fixed seed reproduces the same report.
    """

    def __init__(
        self,
        train_set: Dataset,
        model_config: MiNetConfig,
        train_config: TrainConfig,
        records: Optional[RecordLogger] = None,
    ):
        self.train_set = train_set
        self.model_config = model_config
        self.config = train_config
        self.records = records
        self.target = list(train_set.target_instances)
        self.source = list(train_set.source_instances)
        if not self.target:
            raise ConfigurationError("training data has no target-domain instances")

        self.is_minet = model_config.model_kind == ModelKind.MINET
        self.optimize_source = self.is_minet and train_config.gamma > 0
        if self.optimize_source and not self.source:
            raise ConfigurationError(f"gamma={train_config.gamma} needs source-domain instances")

        spec = ReprSpec.from_schema(train_set.schema, model_config.embedding_dim)
        self.params = build_model(model_config, spec, train_set.vocabulary.size, train_config.seed)
        self.optimizer = Adagrad(self.params.parameters(), train_config.learning_rate, train_config.epsilon)
        # shuffles use a stream separate from initialization
        self.rng = np.random.default_rng([train_config.seed, 1])
        self.source_stream = CyclingStream(self.source, train_config.batch_source, self.rng) if self.optimize_source else None

    def _evaluated_source_loss(self, force: bool = False) -> Optional[float]:
        if not (self.is_minet and self.source and (force or self.config.evaluate_unweighted_source)):
            return None
        probs = predict(self.params, self.source, self.model_config, workers=self.config.workers, domain=Domain.SOURCE)
        return logloss(probs, _labels(self.source))

    def evaluate_split(self, instances: Sequence[Instance]) -> EvalReport:
        probs = predict(self.params, instances, self.model_config, workers=self.config.workers)
        return evaluate_scores(probs, _labels(instances), require_auc=False)

    def initial_losses(self) -> Tuple[float, Optional[float]]:
        """Epoch-0 losses: the initial parameters evaluated on the training sets"""
        probs = predict(self.params, self.target, self.model_config, workers=self.config.workers)
        return logloss(probs, _labels(self.target)), self._evaluated_source_loss(force=self.optimize_source)

    def run_epoch(self) -> Tuple[float, Optional[float]]:
        """One pass over the target instances; returns mean (loss_t, loss_s) over steps"""
        order = self.rng.permutation(len(self.target))
        size = self.config.batch_target
        losses_t: List[float] = []
        losses_s: List[float] = []
        for start in range(0, order.size, size):
            target_batch = [self.target[i] for i in order[start:start + size]]
            source_batch = self.source_stream.next_batch() if self.source_stream else []
            with Tape() as tape:
                loss, loss_t, loss_s = combined_loss(
                    target_batch, source_batch, self.params, self.model_config, self.config.gamma
                )
            backward(loss, tape)
            self.optimizer.step()
            losses_t.append(loss_t.item())
            if loss_s is not None:
                losses_s.append(loss_s.item())

        mean_t = float(np.mean(losses_t))
        if losses_s:
            return mean_t, float(np.mean(losses_s))
        return mean_t, self._evaluated_source_loss()

    def make_record(
        self, epoch: int, loss_t: float, loss_s: Optional[float], validation: Optional[EvalReport]
    ) -> EpochRecord:
        combined = loss_t + self.config.gamma * loss_s if loss_s is not None else loss_t
        record = EpochRecord(
            epoch=epoch,
            loss_t=loss_t,
            loss_s=loss_s,
            combined=combined,
            val_auc=validation.auc if validation else None,
            val_logloss=validation.logloss if validation else None,
        )
        if self.records:
            self.records.log_epoch(record)
        return record


def _better(candidate: EpochRecord, best: Optional[EpochRecord]) -> bool:
    """Higher validation AUC wins; without any AUC, lower validation logloss; ties keep the earlier epoch"""
    if best is None:
        return True
    if candidate.val_auc is not None or best.val_auc is not None:
        if candidate.val_auc is None:
            return False
        if best.val_auc is None:
            return True
        return candidate.val_auc > best.val_auc
    if candidate.val_logloss is not None and best.val_logloss is not None:
        return candidate.val_logloss < best.val_logloss
    return False


def train(
    dataset: Dataset,
    model_config: MiNetConfig,
    train_config: TrainConfig,
    validation: Optional[Sequence[Instance]] = None,
    records: Optional[RecordLogger] = None,
) -> Tuple[ModelParams, TrainReport]:
    """
    Train on a dataset and return the parameters of the best validation epoch.

    Args:
        dataset: Training split; target-only is allowed when gamma is 0 or the model is a baseline
        model_config: Architecture
        train_config: Optimization settings
        validation: Target instances used for model selection; the training
            target instances are used when omitted
        records: Optional per-epoch record stream

    Returns:
        (best parameters, TrainReport). With refit_on_validation the
        parameters come from a fresh run on train + validation for the
        selected number of epochs.

    Raises:
        ConfigurationError: no target data, or gamma > 0 without source data
    """
    trainer = Trainer(dataset, model_config, train_config, records)
    has_validation = validation is not None
    if not has_validation:
        logger.warning("No validation split given; selecting the epoch on training data")
    validation = list(validation) if has_validation else trainer.target

    report = TrainReport(parameter_count=parameter_count(trainer.params))
    logger.info(
        f"Training {model_config.model_kind.value}/{model_config.ablation.value}: "
        f"{len(trainer.target)} target, {len(trainer.source)} source instances, "
        f"{report.parameter_count} parameters, {train_config.epochs} epochs"
    )
    if records:
        records.log_header()

    loss_t, loss_s = trainer.initial_losses()
    best = trainer.make_record(0, loss_t, loss_s, trainer.evaluate_split(validation))
    report.records.append(best)
    best_params = _snapshot(trainer.params)
    since_best = 0

    for epoch in range(1, train_config.epochs + 1):
        loss_t, loss_s = trainer.run_epoch()
        record = trainer.make_record(epoch, loss_t, loss_s, trainer.evaluate_split(validation))
        report.records.append(record)
        val_auc = record.val_auc if record.val_auc is not None else float("nan")
        logger.info(f"epoch {epoch}: loss_t={loss_t:.4f} combined={record.combined:.4f} val_auc={val_auc:.4f}")
        if _better(record, best):
            best = record
            best_params = _snapshot(trainer.params)
            since_best = 0
        else:
            since_best += 1
        if train_config.early_stop_patience and since_best >= train_config.early_stop_patience:
            logger.info(f"Stopping early after epoch {epoch}: no improvement for {since_best} epochs")
            report.stopped_early = True
            break

    report.best_epoch = best.epoch
    _restore(trainer.params, best_params)
    logger.info(f"Selected epoch {best.epoch} (val_auc={best.val_auc})")

    if train_config.refit_on_validation and has_validation:
        params = refit(dataset, validation, model_config, train_config, best.epoch)
        report.refit_epochs = best.epoch
        return params, report
    return trainer.params, report


def refit(
    dataset: Dataset,
    validation: Sequence[Instance],
    model_config: MiNetConfig,
    train_config: TrainConfig,
    epochs: int,
) -> ModelParams:
    """Retrain from fresh initialization on train + validation for a fixed number of epochs"""
    merged = Dataset(
        schema=dataset.schema,
        vocabulary=dataset.vocabulary,
        source_instances=dataset.source_instances,
        target_instances=list(dataset.target_instances) + list(validation),
    )
    trainer = Trainer(merged, model_config, train_config)
    logger.info(f"Refitting on {len(trainer.target)} target instances for {epochs} epochs")
    for _ in range(epochs):
        trainer.run_epoch()
    return trainer.params


def evaluate(params: ModelParams, instances: Sequence[Instance], model_config: MiNetConfig, workers: int = 1) -> EvalReport:
    """
    AUC and Logloss on labeled target instances.

    Raises:
        UndefinedMetricError: all labels identical
    """
    if not instances:
        raise ArgumentError("evaluate needs at least one instance")
    probs = predict(params, instances, model_config, workers=workers)
    return evaluate_scores(probs, _labels(instances))


def domain_gradient_split(
    params: MiNetParams,
    target_batch: Sequence[Instance],
    source_batch: Sequence[Instance],
    config: MiNetConfig,
) -> Dict[str, Dict[str, np.ndarray]]:
    """
    Gradients of loss_t and loss_s computed on separate tapes.

    Returns:
        {'target': {name: grad}, 'source': {name: grad}}; parameters the
        loss does not reach are absent. Gradients are cleared afterwards.
    """
    named = params.parameters()
    split: Dict[str, Dict[str, np.ndarray]] = {}
    for domain, batch in ((Domain.TARGET, target_batch), (Domain.SOURCE, source_batch)):
        for tensor in named.values():
            tensor.grad = None
        with Tape() as tape:
            loss = batch_loss(batch, params, config, domain)
        backward(loss, tape)
        split[domain.value] = {name: t.grad.copy() for name, t in named.items() if t.grad is not None}
    for tensor in named.values():
        tensor.grad = None
    return split
