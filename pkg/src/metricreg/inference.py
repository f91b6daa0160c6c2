"""Fit assessment on the response scale and permutation tests."""

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_same_length
from .exceptions import ExcludedReplicateWarning, MetricRegError, ValidationError, ZeroDenominator, ZeroTSS

logger = logging.getLogger(__name__)

__all__ = [
    "residual_distances",
    "rss",
    "f_statistic",
    "FitAssessment",
    "assess_fit",
    "r_squared",
    "PermutationResult",
    "replicate_rng",
    "permutation_test",
]


def residual_distances(predicted, observed, space):
    check_same_length(predicted, observed, "predicted and observed")
    return np.array([space.distance(a, b) for a, b in zip(predicted, observed)], dtype=float)


def rss(predicted, observed, space, squared=True):
    """Sum of (squared, by default) residual distances."""
    r = residual_distances(predicted, observed, space)
    return float((r**2).sum() if squared else r.sum())


def f_statistic(rss_small, rss_large):
    """``(rss_small - rss_large) / rss_large``."""
    if rss_large <= 0:
        raise ZeroDenominator("larger model has zero residual sum of squares")
    return (rss_small - rss_large) / rss_large


@dataclass(frozen=True)
class FitAssessment:
    residuals: np.ndarray
    rss: float
    tss: float

    @property
    def r2(self):
        return r_squared(self)

    def to_dict(self):
        return {"residuals": self.residuals.tolist(), "rss": self.rss, "tss": self.tss}


def assess_fit(predicted, observed, null_prediction, space, squared=True):
    """Residuals and sums of squares; TSS uses ``null_prediction`` for every case."""
    res = residual_distances(predicted, observed, space)
    null = space.distances_to(observed, null_prediction)
    p = 2 if squared else 1
    return FitAssessment(residuals=res, rss=float((res**p).sum()), tss=float((null**p).sum()))


def r_squared(fit):
    if fit.tss <= 0:
        raise ZeroTSS("response is constant; R^2 undefined")
    return 1.0 - fit.rss / fit.tss


@dataclass(frozen=True)
class PermutationResult:
    observed: float
    R: int
    p: float
    p_conservative: float
    seed: int
    excluded_replicates: int = 0
    replicates: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def to_dict(self):
        return {
            "observed": self.observed,
            "R": self.R,
            "p": self.p,
            "p_conservative": self.p_conservative,
            "seed": self.seed,
            "excluded_replicates": self.excluded_replicates,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("observed", "R", "p", "p_conservative", "seed", "excluded_replicates")})


def replicate_rng(seed, r):
    """Generator for replicate ``r``, derived from ``seed`` by counter."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(r)]))


def permutation_test(statistic, n, R=1000, seed=0, observed=None):
    """Permutation p-value for ``statistic(order)``.

    ``statistic`` receives an index permutation of ``range(n)`` and
    returns the test statistic after applying it to whatever is being
    tested (response scores or one predictor block). The identity order
    gives the observed value.

    Replicates that raise a library error are dropped with a warning;
    ``p`` is then the fraction of the remaining replicates at or above
    the observed value.
    """
    R = int(R)
    if R < 1:
        raise ValidationError("R must be at least 1")
    if observed is None:
        observed = float(statistic(np.arange(n)))
    values = []
    excluded = 0
    for r in range(R):
        order = replicate_rng(seed, r).permutation(n)
        try:
            values.append(float(statistic(order)))
        except (MetricRegError, np.linalg.LinAlgError) as err:
            excluded += 1
            logger.debug("replicate %d failed: %s", r, err)
    if excluded:
        warnings.warn(f"{excluded} of {R} replicates failed and were excluded", ExcludedReplicateWarning, stacklevel=2)
    values = np.array(values)
    used = len(values)
    b = int((values >= observed).sum())
    p = b / used if used else float("nan")
    return PermutationResult(
        observed=float(observed),
        R=R,
        p=p,
        p_conservative=(b + 1) / (used + 1),
        seed=int(seed),
        excluded_replicates=excluded,
        replicates=values,
    )
