"""Distance-based regression between metric spaces.

Predictors and responses are each reduced to a distance matrix and
embedded by classical MDS. A SIMPLS model links predictor scores (plus
optional covariate blocks) to response scores, and predictions are
mapped back to response objects by the response space's backscorer.
"""

import logging
import pickle
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import inference
from .corrmat import CorrelationSpace
from .curves import CurveSpace, SampledCurve, normalize_curves, resample
from .exceptions import DimensionMismatch, MetricRegError, NoFeasibleSolution, ValidationError
from .mds import EuclideanSpace, MetricSpace, backscore, cmds, gower_score, select_dimension
from .pls import DesignBlock, assemble_design, loo_select, predict, simpls_fit
from .shapes import ShapeSpace

logger = logging.getLogger(__name__)

__all__ = ["SPACES", "make_space", "DistanceRegression", "Explanation", "load_model"]

SPACES = {
    "shape": ShapeSpace,
    "curve": CurveSpace,
    "corr": CorrelationSpace,
    "euclidean": EuclideanSpace,
}


def make_space(space, **options):
    if isinstance(space, MetricSpace):
        return space
    try:
        return SPACES[space](**options)
    except KeyError:
        raise ValidationError(f"unknown space {space!r}; choose from {sorted(SPACES)}") from None


@contextmanager
def _stage(name):
    try:
        yield
    except MetricRegError as err:
        if err.stage is None:
            err.stage = name
        raise


def _embed(D, dims, variance, k_max):
    cap = k_max if dims is None else max(k_max, int(dims))
    full = cmds(D, k_max=cap)
    k = select_dimension(full, variance, k_max) if dims is None else min(int(dims), full.k)
    return full.truncate(k)


@dataclass
class Explanation:
    """Perturbations of ``±c`` standard deviations along one predictor component.

    Sequences are ordered ``(plus, minus)``. A side whose backscore failed
    holds ``None`` and its message in ``errors``.
    """

    component: int
    c: float
    amplification: float
    predictor_targets: tuple
    response_targets: tuple
    predictors: tuple
    responses: tuple
    errors: dict = field(default_factory=dict)


class DistanceRegression(BaseEstimator):
    """Regression of metric-space responses on metric-space predictors.

    Parameters
    ----------
    predictor_space, response_space : str or MetricSpace
        ``"shape"``, ``"curve"``, ``"corr"``, ``"euclidean"`` or an instance.
    predictor_dims, response_dims : int or None
        Retained MDS dimensions; ``None`` uses the space default, then the
        variance rule.
    variance, k_max : float, int
        Variance fraction and dimension cap of the default rule.
    a_max : int
        Largest PLS component count tried by leave-one-out selection.
    n_components : int or None
        Fix the PLS component count instead of selecting it.
    response_focus : int or None
        Model only the leading response components.
    tol_score : float or None
        Score tolerance for backscoring (default ``0.05 * sqrt(lambda_1)``).
    residuals : {"auto", "space", "scores"}
        Where fit residuals are measured. ``"space"`` backscores every
        fitted value and uses the response metric; ``"scores"`` uses
        Euclidean distance in the response embedding. ``"auto"`` picks
        ``"space"`` for spaces with a closed-form backscore.
    squared : bool
        Sum squared residual distances (default) or plain distances.
    seed : int
        Master seed for permutation tests.
    space_options : dict or None
        ``{"predictor": {...}, "response": {...}}`` keyword arguments for
        spaces given by name.
    """

    def __init__(
        self,
        predictor_space="shape",
        response_space="shape",
        predictor_dims=None,
        response_dims=None,
        variance=0.9,
        k_max=10,
        a_max=10,
        n_components=None,
        response_focus=None,
        tol_score=None,
        residuals="auto",
        squared=True,
        seed=0,
        space_options=None,
    ):
        self.predictor_space = predictor_space
        self.response_space = response_space
        self.predictor_dims = predictor_dims
        self.response_dims = response_dims
        self.variance = variance
        self.k_max = k_max
        self.a_max = a_max
        self.n_components = n_components
        self.response_focus = response_focus
        self.tol_score = tol_score
        self.residuals = residuals
        self.squared = squared
        self.seed = seed
        self.space_options = space_options

    # ---- object intake -------------------------------------------------

    def _ingest(self, space, objects, role, fit):
        objects = list(objects)
        if space.name != "curve":
            return objects
        if fit:
            curves, scale = normalize_curves(objects)
            grid = curves[0].t
            setattr(self, f"{role}_scale_", scale)
            setattr(self, f"{role}_grid_", grid)
        else:
            curves, _ = normalize_curves(objects, scale=getattr(self, f"{role}_scale_"))
            grid = getattr(self, f"{role}_grid_")
        return [resample(c, grid) if not np.array_equal(c.t, grid) else c for c in curves]

    def _covariate_blocks(self, covariates):
        if covariates is None:
            return []
        if isinstance(covariates, dict):
            return [v if isinstance(v, DesignBlock) else DesignBlock(k, "covariate", v) for k, v in covariates.items()]
        return list(covariates)

    # ---- fitting ---------------------------------------------------------

    def fit(self, X, Y, covariates=None):
        """Fit on paired predictor objects ``X`` and response objects ``Y``.

        ``covariates`` is a list of :class:`DesignBlock` or a mapping of
        name to quantitative values, adjoined to the predictor scores.
        """
        opts = self.space_options or {}
        if self.residuals not in ("auto", "space", "scores"):
            raise ValidationError(f"residuals must be auto, space or scores, got {self.residuals!r}")
        with _stage("input"):
            self.x_space_ = make_space(self.predictor_space, **opts.get("predictor", {}))
            self.y_space_ = make_space(self.response_space, **opts.get("response", {}))
            X = self._ingest(self.x_space_, X, "x", fit=True)
            Y = self._ingest(self.y_space_, Y, "y", fit=True)
            if len(X) != len(Y):
                raise DimensionMismatch(f"{len(X)} predictors but {len(Y)} responses")
            if len(X) < 3:
                raise ValidationError("need at least three observations")
            self.X_, self.Y_ = X, Y
            self.n_ = len(X)
        with _stage("distances"):
            self.Dx_ = self.x_space_.distance_matrix(X)
            self.Dy_ = self.y_space_.distance_matrix(Y)
        with _stage("embedding"):
            kx = self.predictor_dims if self.predictor_dims is not None else self.x_space_.default_dims
            ky = self.response_dims if self.response_dims is not None else self.y_space_.default_dims
            self.x_embedding_ = _embed(self.Dx_, kx, self.variance, self.k_max)
            ey = _embed(self.Dy_, ky, self.variance, self.k_max)
            if self.response_focus is not None:
                ey = ey.truncate(min(int(self.response_focus), ey.k))
            self.y_embedding_ = ey
        with _stage("design"):
            self.blocks_ = [DesignBlock("predictor", "scores", self.x_embedding_.scores)]
            self.blocks_ += self._covariate_blocks(covariates)
            names = [b.name for b in self.blocks_]
            if len(set(names)) != len(names):
                raise ValidationError(f"design block names must be unique, got {names}")
            self.design_ = assemble_design(self.blocks_)
        with _stage("centroid"):
            self.y_context_ = self.y_space_.prepare(Y, ey, self.tol_score)
            self.y_centroid_score_ = self.y_space_.score(self.y_context_.centroid, self.y_context_)
            self._x_context = None
        self.residual_mode_ = self.residuals
        if self.residual_mode_ == "auto":
            self.residual_mode_ = "space" if self.y_space_.linear_backscore else "scores"
        with _stage("model"):
            self.model_ = self._fit_model(self.design_, ey.scores)
            self.n_components_ = self.model_.a
        with _stage("assessment"):
            self.tss_ = self._tss(np.arange(self.n_))
            self.fitted_scores_ = predict(self.model_, self.design_)
            self.assessment_ = self._assess(self.fitted_scores_, np.arange(self.n_))
            self.r2_ = inference.r_squared(self.assessment_)
        return self

    def _fit_model(self, design, Sy):
        n, p = design.shape
        if self.n_components is not None:
            a = int(self.n_components)
        else:
            a = loo_select(design, Sy, max(1, min(int(self.a_max), n - 2, p)))
        return simpls_fit(design, Sy, a)

    def _observed(self, order):
        return [self.Y_[i] for i in order]

    def _tss(self, order):
        if self.residual_mode_ == "space":
            d = self.y_space_.distances_to(self._observed(order), self.y_context_.centroid)
        else:
            d = np.linalg.norm(self.y_embedding_.scores[order] - self.y_centroid_score_, axis=1)
        return float((d**2).sum() if self.squared else d.sum())

    def _assess(self, fitted_scores, order):
        if self.residual_mode_ == "space":
            fitted = self.y_space_.backscore_many(fitted_scores, self.y_context_)
            res = self.y_space_.paired_distances(fitted, self._observed(order))
        else:
            res = np.linalg.norm(fitted_scores - self.y_embedding_.scores[order], axis=1)
        p = 2 if self.squared else 1
        return inference.FitAssessment(residuals=res, rss=float((res**p).sum()), tss=self._tss(order))

    def _rss(self, design, order):
        model = self._fit_model(design, self.y_embedding_.scores[order])
        return self._assess(predict(model, design), order).rss

    # ---- inference -------------------------------------------------------

    def permutation_test(self, target="response", R=1000, seed=None):
        """Permutation F-test for the whole model or one design block.

        ``target="response"`` permutes the response rows and compares the
        model to the centroid null; a block name permutes only that
        block's rows and compares the full design to the design without it.
        """
        check_is_fitted(self, "model_")
        seed = self.seed if seed is None else seed
        n = self.n_
        ident = np.arange(n)
        if target == "response":
            tss = self.tss_

            def stat(order):
                return inference.f_statistic(tss, self._rss(self.design_, order))

        else:
            names = [b.name for b in self.blocks_]
            if target not in names:
                raise ValidationError(f"unknown block {target!r}; blocks are {names}")
            others = [b for b in self.blocks_ if b.name != target]
            rss_small = self._rss(assemble_design(others), ident) if others else self.tss_

            def stat(order):
                blocks = [b.permuted(order) if b.name == target else b for b in self.blocks_]
                return inference.f_statistic(rss_small, self._rss(assemble_design(blocks), ident))

        with _stage("permutation"):
            return inference.permutation_test(stat, n, R=R, seed=seed)

    # ---- prediction ------------------------------------------------------

    def _design_rows(self, scores, covariates):
        cov = self._covariate_blocks(covariates)
        cols = [scores]
        by_name = {b.name: b for b in cov}
        for b in self.blocks_[1:]:
            if b.name not in by_name:
                raise ValidationError(f"missing covariate block {b.name!r} for prediction")
            cols.append(b.encode(by_name[b.name].raw if isinstance(by_name[b.name], DesignBlock) else by_name[b.name]))
        return np.hstack(cols)

    def predict_scores(self, X_new, covariates=None):
        """Response scores predicted for new predictor objects."""
        check_is_fitted(self, "model_")
        with _stage("scoring"):
            X_new = self._ingest(self.x_space_, X_new, "x", fit=False)
            S = np.array([gower_score(self.x_embedding_, self.x_space_.distances_to(self.X_, x)) for x in X_new])
            S = S.reshape(len(X_new), self.x_embedding_.k)
            return predict(self.model_, self._design_rows(S, covariates))

    def predict(self, X_new, covariates=None):
        """Backscored response objects for new predictor objects.

        Raises
        ------
        NoFeasibleSolution
            With ``err.target`` set, when a predicted score cannot be
            backscored.
        """
        targets = self.predict_scores(X_new, covariates)
        with _stage("backscore"):
            return [backscore(self.y_space_, t, self.y_context_) for t in targets]

    def predict_new(self, x_new, covariates=None):
        cov = None if covariates is None else {k: np.atleast_1d(v)[None] for k, v in covariates.items()}
        return self.predict([x_new], cov)[0]

    @property
    def x_context_(self):
        if self._x_context is None:
            self._x_context = self.x_space_.prepare(self.X_, self.x_embedding_, self.tol_score)
        return self._x_context

    def explain_component(self, j, c=2.0, amplification=1.0):
        """Perturb predictor component ``j`` (1-based) by ``±c`` SDs.

        Each side is backscored to a predictor object, pushed through the
        internal model with covariates held at their means, and the
        response perturbation (scaled by ``amplification`` about the
        unperturbed prediction) is backscored to a response object.
        """
        check_is_fitted(self, "model_")
        ex = self.x_embedding_
        if not 1 <= int(j) <= ex.k:
            raise ValidationError(f"component must be in 1..{ex.k}, got {j}")
        j = int(j) - 1
        sd = float(ex.sd[j])
        rest = self.design_[:, ex.k :].mean(axis=0)
        centre = predict(self.model_, np.concatenate([np.zeros(ex.k), rest]))
        xt, yt, xs, ys, errors = [], [], [], [], {}
        for label, sign in (("plus", 1.0), ("minus", -1.0)):
            target = np.zeros(ex.k)
            target[j] = sign * c * sd + 0.0
            resp = predict(self.model_, np.concatenate([target, rest]))
            resp = centre + amplification * (resp - centre)
            xt.append(target)
            yt.append(resp)
            with _stage("explain"):
                try:
                    xs.append(backscore(self.x_space_, target, self.x_context_))
                except NoFeasibleSolution as err:
                    xs.append(None)
                    errors[f"predictor_{label}"] = str(err)
                try:
                    ys.append(backscore(self.y_space_, resp, self.y_context_))
                except NoFeasibleSolution as err:
                    ys.append(None)
                    errors[f"response_{label}"] = str(err)
        return Explanation(
            component=j + 1,
            c=float(c),
            amplification=float(amplification),
            predictor_targets=tuple(xt),
            response_targets=tuple(yt),
            predictors=tuple(xs),
            responses=tuple(ys),
            errors=errors,
        )

    # ---- summaries and persistence ---------------------------------------

    def summary(self):
        """Plain-data description of the fit (deterministic)."""
        check_is_fitted(self, "model_")
        return {
            "n": self.n_,
            "predictor_space": self.x_space_.name,
            "response_space": self.y_space_.name,
            "predictor_dims": self.x_embedding_.k,
            "response_dims": self.y_embedding_.k,
            "predictor_explained": self.x_embedding_.explained.tolist(),
            "response_explained": self.y_embedding_.explained.tolist(),
            "blocks": [{"name": b.name, "kind": b.kind, "width": b.width} for b in self.blocks_],
            "n_components": self.n_components_,
            "residual_mode": self.residual_mode_,
            "rss": self.assessment_.rss,
            "tss": self.assessment_.tss,
            "r2": self.r2_,
            "tol_score": self.y_context_.tol_score,
        }

    def save(self, path):
        with open(path, "wb") as fh:
            pickle.dump(self, fh, protocol=pickle.HIGHEST_PROTOCOL)


def load_model(path):
    with open(path, "rb") as fh:
        model = pickle.load(fh)
    if not isinstance(model, DistanceRegression):
        raise ValidationError(f"{path} does not hold a fitted DistanceRegression")
    return model
