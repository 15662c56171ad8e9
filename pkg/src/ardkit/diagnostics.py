"""Split R-hat, effective sample size, and trace export."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RHAT_STRICT = 1.05
RHAT_LOOSE = 1.1
ESS_CAP = 1.5


def _as_chains(draws) -> np.ndarray:
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("draws must be (chains, iterations)")
    return x


def split_rhat(draws) -> float:
    """Split-chain potential scale reduction for one parameter.

    ``draws`` is ``(chains, iterations)``. Each chain is cut in half and the
    halves are treated as separate chains. Returns NaN when every half is
    constant (W = 0), which usually signals a stuck block.
    """
    x = _as_chains(draws)
    m, n = x.shape
    if m < 2 or n < 4:
        raise ValueError("split R-hat needs >= 2 chains of >= 4 draws")
    half = n // 2
    parts = np.concatenate([x[:, :half], x[:, n - half :]], axis=0)
    L = parts.shape[1]
    means = parts.mean(axis=1)
    W = parts.var(axis=1, ddof=1).mean()
    B = L * means.var(ddof=1)
    if not W > 0:
        return float("nan")
    return float(np.sqrt(((L - 1) / L * W + B / L) / W))


def _autocov(x):
    """Autocovariance of each row via FFT (biased, divides by n)."""
    n = x.shape[-1]
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, size, axis=-1)
    ac = np.fft.irfft(f * np.conj(f), size, axis=-1)[..., :n]
    return ac / n


def ess(draws) -> float:
    """Effective sample size with Geyer's initial positive sequence.

    Multi-chain autocorrelations combine within-chain autocovariances with the
    between-chain variance. The result is capped at 1.5 times the number of
    draws; constant input returns NaN.
    """
    x = _as_chains(draws)
    m, n = x.shape
    total = m * n
    if n < 4:
        raise ValueError("ESS needs >= 4 draws per chain")
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1.0)
    W = chain_var.mean()
    var_plus = W * (n - 1.0) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        return float("nan")
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer: sum adjacent pairs while positive, enforce monotone decrease
    pair_sums = []
    t = 0
    while t + 1 < n:
        p = rho[t] + rho[t + 1]
        if p < 0:
            break
        if pair_sums and p > pair_sums[-1]:
            p = pair_sums[-1]
        pair_sums.append(p)
        t += 2
    tau = -1.0 + 2.0 * float(np.sum(pair_sums))
    tau = max(tau, 1.0 / np.log10(total) if total > 10 else 1e-3)
    return float(min(total / tau, ESS_CAP * total))


@dataclass
class DiagnosticsReport:
    rhat: dict
    ess: dict
    worst: list = field(default_factory=list)
    flagged_105: list = field(default_factory=list)
    flagged_11: list = field(default_factory=list)
    constant: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rhat": {k: (None if np.isnan(v) else v) for k, v in self.rhat.items()},
            "ess": {k: (None if np.isnan(v) else v) for k, v in self.ess.items()},
            "worst": self.worst,
            "flagged_rhat_1.05": self.flagged_105,
            "flagged_rhat_1.1": self.flagged_11,
            "constant": self.constant,
        }


def diagnose(posterior, labels=None, n_worst: int = 10) -> DiagnosticsReport:
    """R-hat and ESS for every (or the named) scalar parameter of a posterior."""
    labels = list(posterior.names) if labels is None else list(labels)
    rhat, eff, constant = {}, {}, []
    for label in labels:
        x = posterior.column(label)
        r = split_rhat(x)
        rhat[label] = r
        eff[label] = ess(x)
        if np.isnan(r):
            constant.append(label)
    finite = [(v, k) for k, v in rhat.items() if not np.isnan(v)]
    worst = [k for _, k in sorted(finite, reverse=True)[:n_worst]]
    # constant chains count as failures at both thresholds
    flag105 = [k for k, v in rhat.items() if np.isnan(v) or v >= RHAT_STRICT]
    flag11 = [k for k, v in rhat.items() if np.isnan(v) or v >= RHAT_LOOSE]
    return DiagnosticsReport(rhat, eff, worst, flag105, flag11, constant)


def trace_export(posterior, labels, path) -> Path:
    """Write ``chain,iteration,parameter,value`` rows for the named parameters."""
    cols = [posterior.column(label) for label in labels]  # KeyError on unknown names
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain", "iteration", "parameter", "value"])
        for label, x in zip(labels, cols):
            for c in range(x.shape[0]):
                for it in range(x.shape[1]):
                    w.writerow([c, it, label, format(float(x[c, it]), ".17g")])
    return path
