"""The five fittable ARD models and a factory that builds one for a dataset."""

from __future__ import annotations

import numpy as np

from ..dataio import ArdDataset, validate_fit_inputs
from .barrier import BarrierEffects
from .base import ArdModel, Block, Layout, RescaleSpec, rescale_constant
from .latent import (
    LatentSpace,
    default_anchor_directions,
    kappa_factor,
    largest_known,
    log_kappa_factor,
)
from .overdispersed import Overdispersed
from .poisson import ErdosRenyi, VaryingDegree
from .start import scale_up_degree

MODELS = {
    "er": ErdosRenyi,
    "vd": VaryingDegree,
    "od": Overdispersed,
    "latent": LatentSpace,
    "barrier": BarrierEffects,
}

MODEL_LABELS = {
    "er": "Erdos-Renyi",
    "vd": "Varying Degree",
    "od": "Overdispersed",
    "latent": "Latent Space",
    "barrier": "Barrier Effects",
}


def make_model(
    kind: str,
    data: ArdDataset,
    *,
    n_fixed: int = 4,
    anchor_dirs=None,
    max_degree: int | None = None,
    init_jitter: float = 1.0,
    **options,
) -> ArdModel:
    """Validate ``data`` for ``kind`` and build the model instance.

    ``n_fixed``/``anchor_dirs`` only apply to the latent-space model and
    ``max_degree`` only to the barrier model; other keyword options are passed
    to the model constructor.
    """
    validate_fit_inputs(data, kind, n_fixed=n_fixed, max_degree=max_degree)
    if kind == "latent":
        anchors = largest_known(data, n_fixed)
        if anchor_dirs is not None:
            anchor_dirs = np.asarray(anchor_dirs, dtype=float).reshape(n_fixed, 3)
        return LatentSpace(
            data.n, data.K, anchor_idx=tuple(anchors), anchor_dirs=anchor_dirs, init_jitter=init_jitter, **options
        )
    if kind == "barrier":
        if max_degree is not None:
            options["max_degree"] = max_degree
        return BarrierEffects.for_data(data, init_jitter=init_jitter, **options)
    return MODELS[kind](data.n, data.K, init_jitter=init_jitter, **options)


__all__ = [
    "ArdModel",
    "BarrierEffects",
    "Block",
    "ErdosRenyi",
    "LatentSpace",
    "Layout",
    "MODELS",
    "MODEL_LABELS",
    "Overdispersed",
    "RescaleSpec",
    "VaryingDegree",
    "default_anchor_directions",
    "kappa_factor",
    "log_kappa_factor",
    "make_model",
    "rescale_constant",
    "scale_up_degree",
]
