"""
Repeated Runs and Ablation Sweeps
Every method is trained with several seeds and reported as mean and
standard deviation of test AUC. Variants are compared with `full` by a
paired t-test over the per-seed AUCs.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.stats import ttest_rel

from features.dataset import Dataset, Instance
from minet.model import MiNetConfig
from training.trainer import TrainConfig, evaluate, train

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = 5
FULL_VARIANT = "full"


class Variant(BaseModel):
    """A named set of MiNetConfig overrides"""
    name: str
    overrides: Dict[str, Any] = Field(default_factory=dict)

    def apply(self, config: MiNetConfig) -> MiNetConfig:
        return config.model_validate({**config.model_dump(), **self.overrides})


ABLATION_VARIANTS = [
    Variant(name=FULL_VARIANT, overrides={"model_kind": "minet", "ablation": "full"}),
    Variant(name="no_attention", overrides={"model_kind": "minet", "ablation": "no_attention"}),
    Variant(name="item_only", overrides={"model_kind": "minet", "ablation": "item_only"}),
    Variant(
        name="interest_only(exp)",
        overrides={"model_kind": "minet", "ablation": "interest_only", "interest_activation": "exp"},
    ),
    Variant(
        name="interest_only(sigmoid)",
        overrides={"model_kind": "minet", "ablation": "interest_only", "interest_activation": "sigmoid"},
    ),
    Variant(name="long_term_only", overrides={"model_kind": "minet", "ablation": "long_term_only"}),
    Variant(name="short_src_only", overrides={"model_kind": "minet", "ablation": "short_src_only"}),
    Variant(name="short_tgt_only", overrides={"model_kind": "minet", "ablation": "short_tgt_only"}),
    Variant(name="lr", overrides={"model_kind": "lr"}),
    Variant(name="dnn", overrides={"model_kind": "dnn"}),
]


class SeedResult(BaseModel):
    seed: int
    test_auc: float
    test_logloss: float
    best_epoch: int


class VariantResult(BaseModel):
    name: str
    runs: List[SeedResult]
    p_vs_full: Optional[float] = None

    @property
    def aucs(self) -> np.ndarray:
        return np.array([r.test_auc for r in self.runs])

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.aucs))

    @property
    def std_auc(self) -> float:
        return float(np.std(self.aucs, ddof=1)) if len(self.runs) > 1 else 0.0

    @property
    def mean_logloss(self) -> float:
        return float(np.mean([r.test_logloss for r in self.runs]))


class AblationTable(BaseModel):
    results: List[VariantResult]

    def get(self, name: str) -> VariantResult:
        for result in self.results:
            if result.name == name:
                return result
        raise KeyError(name)

    def pooled_std(self, names: Optional[Sequence[str]] = None) -> float:
        """Square root of the mean per-variant AUC variance"""
        chosen = [self.get(n) for n in names] if names else self.results
        return float(np.sqrt(np.mean([r.std_auc ** 2 for r in chosen])))

    def format(self) -> str:
        lines = [f"{'variant':<24}{'mean_auc':>10}{'std':>10}{'logloss':>10}{'p_vs_full':>12}"]
        for r in self.results:
            p = "nan" if r.p_vs_full is None else f"{r.p_vs_full:.4g}"
            lines.append(f"{r.name:<24}{r.mean_auc:>10.4f}{r.std_auc:>10.4f}{r.mean_logloss:>10.4f}{p:>12}")
        return "\n".join(lines)


def _run_one(
    train_set: Dataset,
    validation: Sequence[Instance],
    test: Sequence[Instance],
    model_config: MiNetConfig,
    train_config: TrainConfig,
    seed: int,
) -> SeedResult:
    config = train_config.model_copy(update={"seed": seed})
    params, report = train(train_set, model_config, config, validation=validation)
    result = evaluate(params, test, model_config)
    return SeedResult(seed=seed, test_auc=result.auc, test_logloss=result.logloss, best_epoch=report.best_epoch)


def run_seeds(
    train_set: Dataset,
    validation: Sequence[Instance],
    test: Sequence[Instance],
    model_config: MiNetConfig,
    train_config: TrainConfig,
    n_seeds: int = DEFAULT_SEEDS,
    workers: int = 1,
) -> List[SeedResult]:
    """Train and test once per seed (train_config.seed, +1, ...)"""
    seeds = [train_config.seed + i for i in range(n_seeds)]
    jobs = [(model_config, seed) for seed in seeds]
    return _run_jobs(train_set, validation, test, train_config, jobs, workers)


def _run_jobs(
    train_set: Dataset,
    validation: Sequence[Instance],
    test: Sequence[Instance],
    train_config: TrainConfig,
    jobs: List[Tuple[MiNetConfig, int]],
    workers: int,
) -> List[SeedResult]:
    def run(job: Tuple[MiNetConfig, int]) -> SeedResult:
        config, seed = job
        return _run_one(train_set, validation, test, config, train_config, seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, jobs))
    return [run(job) for job in jobs]


def paired_p_value(aucs: np.ndarray, reference: np.ndarray) -> Optional[float]:
    """Paired t-test p-value, None when the differences have no variance"""
    diff = aucs - reference
    if diff.size < 2 or np.allclose(diff, diff[0], rtol=0.0, atol=0.0):
        return None
    p = float(ttest_rel(aucs, reference).pvalue)
    return None if math.isnan(p) else p


def ablation_sweep(
    train_set: Dataset,
    validation: Sequence[Instance],
    test: Sequence[Instance],
    model_config: MiNetConfig,
    train_config: TrainConfig,
    variants: Sequence[Variant] = tuple(ABLATION_VARIANTS),
    n_seeds: int = DEFAULT_SEEDS,
    workers: int = 1,
) -> AblationTable:
    """
    Run every variant with n_seeds seeds.

    All (variant, seed) runs are independent and own their parameters, so
    they are spread over `workers` threads.
    """
    seeds = [train_config.seed + i for i in range(n_seeds)]
    jobs = [(variant.apply(model_config), seed) for variant in variants for seed in seeds]
    logger.info(f"Ablation sweep: {len(variants)} variants x {n_seeds} seeds on {workers} worker(s)")
    runs = _run_jobs(train_set, validation, test, train_config, jobs, workers)

    results = []
    for i, variant in enumerate(variants):
        results.append(VariantResult(name=variant.name, runs=runs[i * n_seeds:(i + 1) * n_seeds]))
        logger.info(f"{variant.name}: mean test AUC {results[-1].mean_auc:.4f}")

    full = next((r for r in results if r.name == FULL_VARIANT), None)
    if full is not None:
        for result in results:
            if result is not full:
                result.p_vs_full = paired_p_value(result.aucs, full.aucs)
    return AblationTable(results=results)
