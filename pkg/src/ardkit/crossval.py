"""Entry-wise F-fold cross-validation and ELPD comparison."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .dataio import ArdDataset, DataValidationError
from .diagnostics import RHAT_LOOSE, split_rhat
from .models.base import ArdModel, RescaleSpec
from .sampler import SamplerConfig, run_chains


class UnsupportedModelError(DataValidationError):
    pass


@dataclass
class FoldPlan:
    """Fold label (0..F-1) for every entry of the ``n x K`` grid."""

    folds: int
    assignment: np.ndarray
    seed: int = 0

    @property
    def shape(self):
        return self.assignment.shape

    def mask(self, f: int) -> np.ndarray:
        """True for entries held out in fold ``f``."""
        return self.assignment == f

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment.ravel(), minlength=self.folds)


def _row_ok(assign, F):
    """Rows whose entries do not all fall in a single fold (so every fold leaves one unmasked)."""
    return np.array([len(np.unique(r)) > 1 for r in assign]) if F > 1 else np.ones(len(assign), bool)


def make_folds(n: int, K: int, F: int, seed: int = 0) -> FoldPlan:
    """Random balanced partition of the entry grid.

    Fold sizes differ by at most one and no respondent has every entry in the
    same fold, so each training set keeps at least one entry per respondent.
    """
    if F < 2:
        raise ValueError("need at least 2 folds")
    if n * K < F:
        raise ValueError(f"cannot split {n * K} entries into {F} folds")
    if K < 2:
        raise ValueError("every respondent needs entries in two folds, which requires K >= 2")
    rng = np.random.default_rng([seed, 7])
    labels = np.arange(n * K) % F
    assign = rng.permutation(labels).reshape(n, K)
    # repair rows that landed entirely in one fold by swapping with another row
    for _ in range(10 * n):
        bad = np.flatnonzero(~_row_ok(assign, F))
        if bad.size == 0:
            break
        i = bad[0]
        k = rng.integers(K)
        j, l = rng.integers(n), rng.integers(K)
        if assign[j, l] == assign[i, k] or j == i:
            continue
        trial = assign.copy()
        trial[i, k], trial[j, l] = trial[j, l], trial[i, k]
        if _row_ok(trial[[j]], F)[0]:
            assign = trial
    else:
        raise ValueError("could not satisfy the per-respondent fold constraint")
    return FoldPlan(folds=F, assignment=assign, seed=seed)


def pointwise_lpd(model: ArdModel, draws, data: ArdDataset) -> np.ndarray:
    """``log mean_s p(y_ik | theta_s)`` for every entry, computed with log-sum-exp."""
    pw = np.stack([model.pointwise_log_likelihood(theta, data) for theta in draws])
    return logsumexp(pw, axis=0) - np.log(len(draws))


@dataclass
class CvResult:
    pointwise: np.ndarray
    fold_warnings: dict = field(default_factory=dict)
    fold_totals: np.ndarray | None = None

    @property
    def elpd(self) -> float:
        return float(self.pointwise.sum())


def _default_fitter(model, data, spec, config, mask):
    post = run_chains(model, data, spec, config, mask=mask)
    return post.pooled(), post


def cv_elpd(
    model: ArdModel,
    data: ArdDataset,
    plan: FoldPlan,
    rescale_spec: RescaleSpec | None,
    sampler_config: SamplerConfig,
    fitter=None,
    check_param: str | None = None,
) -> CvResult:
    """Fit once per fold with that fold's entries masked and score the held-out entries.

    ``fitter(model, data, spec, config, mask)`` may replace the sampler; it
    must return ``(draws, posterior_or_None)``. Folds whose ``check_param``
    (default: the model's degree parameter, first slot) has split R-hat above
    1.1 get a warning attached rather than failing the run.
    """
    if model.kind == "barrier":
        raise UnsupportedModelError(
            "cross-validation is not available for the barrier model: its per-entry "
            "latent tie probabilities make held-out entries unidentified"
        )
    if plan.shape != data.y.shape:
        raise DataValidationError("fold plan does not match the data shape")
    fitter = fitter or _default_fitter
    out = np.full(data.y.shape, np.nan)
    totals = np.zeros(plan.folds)
    notes = {}
    for f in range(plan.folds):
        held = plan.mask(f)
        cfg = replace(sampler_config, seed=int(np.random.SeedSequence([sampler_config.seed, f]).generate_state(1)[0]))
        draws, post = fitter(model, data, rescale_spec, cfg, held)
        lpd = pointwise_lpd(model, draws, data)
        out[held] = lpd[held]
        totals[f] = lpd[held].sum()
        if post is not None:
            label = check_param or _first_degree_label(model)
            if label is not None:
                r = split_rhat(post.column(label))
                if not r < RHAT_LOOSE:
                    msg = f"fold {f}: R-hat({label}) = {r:.3f} exceeds {RHAT_LOOSE}"
                    warnings.warn(msg, RuntimeWarning, stacklevel=2)
                    notes[f] = msg
    return CvResult(pointwise=out, fold_warnings=notes, fold_totals=totals)


def _first_degree_label(model):
    if model.degree_name is None:
        return None
    shape = model.layout.shapes[model.degree_name]
    return model.degree_name if not shape else f"{model.degree_name}[0]"


@dataclass
class ElpdReport:
    models: list
    elpd: dict
    diff: dict
    se: dict

    @property
    def best(self):
        return max(self.models, key=lambda m: self.elpd[m])

    def ranking(self) -> list:
        return sorted(self.models, key=lambda m: -self.elpd[m])

    def to_dict(self) -> dict:
        return {
            "best": self.best,
            "rows": [
                {"model": m, "elpd": self.elpd[m], "diff": self.diff[m], "se": self.se[m]}
                for m in self.ranking()
            ],
        }


def compare_elpd(pointwise: dict) -> ElpdReport:
    """Total ELPD per model and differences from the best with ``sqrt(M var(diff))`` SEs."""
    if not pointwise:
        raise ValueError("nothing to compare")
    mats = {k: np.asarray(v, dtype=float) for k, v in pointwise.items()}
    shapes = {v.shape for v in mats.values()}
    if len(shapes) != 1:
        raise DataValidationError(f"pointwise matrices differ in shape: {sorted(shapes)}")
    elpd = {k: float(v.sum()) for k, v in mats.items()}
    best = max(elpd, key=elpd.get)
    diff, se = {}, {}
    for k, v in mats.items():
        d = (v - mats[best]).ravel()
        diff[k] = float(d.sum())
        se[k] = float(np.sqrt(d.size * d.var(ddof=1))) if d.size > 1 else 0.0
    return ElpdReport(models=list(mats), elpd=elpd, diff=diff, se=se)
