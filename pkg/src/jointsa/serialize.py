"""Model files: fitted joint models as versioned structured text.

Layout: a version header line ("jointsa-model v1") followed by a JSON
document holding every quantity needed to rebuild the two predictors
(terms, coefficients, knots, constraint transforms, smoothing
parameters, GP hyperparameters and learning sample).  Writing is
deterministic: refitting with the same seed and configuration produces
a byte-identical file.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .design import Dataset, Design
from .errors import DataParseError
from .gam import GamFit, GamSpec, SmoothTerm
from .glm import Family, GlmFit, TermSpec
from .gp import GpModel, build_gp
from .joint import JointModel, JointSpec
from .smooth import SplineBasis

__all__ = ["save_model", "load_model", "FORMAT_HEADER"]

FORMAT_HEADER = "jointsa-model v1"


def _arr(a) -> list:
    return np.asarray(a).tolist()


def _terms_to_dict(terms: list[TermSpec]) -> list[dict]:
    return [{"kind": t.kind, "column": t.column, "exponent": t.exponent} for t in terms]


def _terms_from_dict(items) -> list[TermSpec]:
    return [TermSpec(d["kind"], d["column"], d["exponent"]) for d in items]


def _family_to_dict(f: Family) -> dict:
    return {"link": f.link, "variance": f.variance}


def _glm_to_dict(fit: GlmFit) -> dict:
    return {
        "type": "glm",
        "family": _family_to_dict(fit.family),
        "terms": _terms_to_dict(fit.terms),
        "column_names": fit.column_names,
        "beta": _arr(fit.beta),
        "fitted_mu": _arr(fit.fitted_mu),
        "deviance": fit.deviance,
        "null_deviance": fit.null_deviance,
        "dof_residual": fit.dof_residual,
        "cov_beta": _arr(fit.cov_beta),
        "dispersion": fit.dispersion,
        "converged": fit.converged,
        "iterations": fit.iterations,
    }


def _glm_from_dict(d: dict) -> GlmFit:
    return GlmFit(
        family=Family(**d["family"]),
        terms=_terms_from_dict(d["terms"]),
        column_names=list(d["column_names"]),
        beta=np.asarray(d["beta"]),
        fitted_mu=np.asarray(d["fitted_mu"]),
        deviance=d["deviance"],
        null_deviance=d["null_deviance"],
        dof_residual=d["dof_residual"],
        cov_beta=np.asarray(d["cov_beta"]),
        dispersion=d["dispersion"],
        converged=d["converged"],
        iterations=d["iterations"],
    )


def _basis_to_dict(b: SplineBasis) -> dict:
    return {
        "kind": b.kind,
        "columns": list(b.columns),
        "k": b.k,
        "knots": _arr(b.knots),
        "penalty": _arr(b.penalty),
        "centering": _arr(b.centering),
        "transform": _arr(b.transform),
        "radial_map": _arr(b.radial_map),
        "standardize_lo": _arr(b.standardize_lo),
        "standardize_range": _arr(b.standardize_range),
    }


def _basis_from_dict(d: dict) -> SplineBasis:
    return SplineBasis(
        kind=d["kind"],
        columns=tuple(d["columns"]),
        k=d["k"],
        knots=np.asarray(d["knots"]),
        penalty=np.asarray(d["penalty"]),
        centering=np.asarray(d["centering"]),
        transform=np.asarray(d["transform"]),
        radial_map=np.asarray(d["radial_map"]) if len(d["radial_map"]) else np.empty((0, 0)),
        standardize_lo=np.asarray(d["standardize_lo"]),
        standardize_range=np.asarray(d["standardize_range"]),
    )


def _gam_to_dict(fit: GamFit) -> dict:
    return {
        "type": "gam",
        "family": _family_to_dict(fit.spec.family),
        "parametric": _terms_to_dict(fit.spec.parametric),
        "smooths": [{"columns": list(s.columns), "k": s.k} for s in fit.spec.smooths],
        "column_names": fit.column_names,
        "bases": [_basis_to_dict(b) for b in fit.bases],
        "transforms": [_arr(Z) for Z in fit.transforms],
        "coefficients": _arr(fit.coefficients),
        "lambdas": _arr(fit.lambdas),
        "fitted_mu": _arr(fit.fitted_mu),
        "edf": fit.edf,
        "deviance": fit.deviance,
        "null_deviance": fit.null_deviance,
        "gcv": fit.gcv,
        "dispersion": fit.dispersion,
        "converged": fit.converged,
    }


def _gam_from_dict(d: dict) -> GamFit:
    spec = GamSpec(
        _terms_from_dict(d["parametric"]),
        [SmoothTerm(tuple(s["columns"]), s["k"]) for s in d["smooths"]],
        Family(**d["family"]),
    )
    return GamFit(
        spec=spec,
        column_names=list(d["column_names"]),
        bases=[_basis_from_dict(b) for b in d["bases"]],
        transforms=[np.asarray(Z) for Z in d["transforms"]],
        coefficients=np.asarray(d["coefficients"]),
        lambdas=np.asarray(d["lambdas"]),
        fitted_mu=np.asarray(d["fitted_mu"]),
        edf=d["edf"],
        deviance=d["deviance"],
        null_deviance=d["null_deviance"],
        gcv=d["gcv"],
        dispersion=d["dispersion"],
        cov_unscaled=np.empty((0, 0)),
        converged=d["converged"],
    )


def _gp_to_dict(m: GpModel) -> dict:
    raw_x = m.x_train * m.x_range + m.x_lo
    return {
        "type": "gp",
        "trend_terms": _terms_to_dict(m.trend_terms),
        "column_names": m.column_names,
        "theta": _arr(m.theta),
        "power": _arr(m.power),
        "sigma2": m.sigma2,
        "nugget2": m.nugget2,
        "x_train": _arr(raw_x),
        "y_train": _arr(m.y_train),
        "noise_rel": _arr(m.noise_rel),
        "log_likelihood": m.log_likelihood,
        "converged": m.converged,
    }


def _gp_from_dict(d: dict) -> GpModel:
    X = np.asarray(d["x_train"])
    noise_rel = np.asarray(d["noise_rel"])
    data = Dataset(
        Design(X, list(d["column_names"])),
        np.asarray(d["y_train"]),
        prior_weights=1.0 / noise_rel,
    )
    return build_gp(
        data,
        trend=_terms_from_dict(d["trend_terms"]),
        theta=np.asarray(d["theta"]),
        power=np.asarray(d["power"]),
        sigma2=d["sigma2"],
        nugget2=d["nugget2"],
    )


_FROM = {"glm": _glm_from_dict, "gam": _gam_from_dict, "gp": _gp_from_dict}


def _submodel_to_dict(model) -> dict:
    if isinstance(model, GlmFit):
        return _glm_to_dict(model)
    if isinstance(model, GamFit):
        return _gam_to_dict(model)
    if isinstance(model, GpModel):
        return _gp_to_dict(model)
    raise TypeError(f"cannot serialize {type(model).__name__}")


def _spec_to_dict(spec: JointSpec) -> dict:
    return {
        "engine": spec.engine,
        "mean_terms": _terms_to_dict(spec.mean_terms),
        "mean_smooths": [{"columns": list(s.columns), "k": s.k} for s in spec.mean_smooths],
        "disp_terms": _terms_to_dict(spec.disp_terms),
        "disp_smooths": [{"columns": list(s.columns), "k": s.k} for s in spec.disp_smooths],
        "family": _family_to_dict(spec.family),
        "gp_estimate_power": spec.gp_estimate_power,
        "gp_n_starts": spec.gp_n_starts,
        "max_outer_iter": spec.max_outer_iter,
        "outer_tol": spec.outer_tol,
    }


def _spec_from_dict(d: dict) -> JointSpec:
    return JointSpec(
        engine=d["engine"],
        mean_terms=_terms_from_dict(d["mean_terms"]),
        mean_smooths=[SmoothTerm(tuple(s["columns"]), s["k"]) for s in d["mean_smooths"]],
        disp_terms=_terms_from_dict(d["disp_terms"]),
        disp_smooths=[SmoothTerm(tuple(s["columns"]), s["k"]) for s in d["disp_smooths"]],
        family=Family(**d["family"]),
        gp_estimate_power=d["gp_estimate_power"],
        gp_n_starts=d["gp_n_starts"],
        max_outer_iter=d["max_outer_iter"],
        outer_tol=d["outer_tol"],
    )


def save_model(jm: JointModel, path: str | os.PathLike) -> None:
    doc = {
        "spec": _spec_to_dict(jm.spec),
        "column_names": jm.column_names,
        "mean_model": _submodel_to_dict(jm.mean_model),
        "disp_model": _submodel_to_dict(jm.disp_model),
        "outer_iterations": jm.outer_iterations,
        "converged": jm.converged,
        "trace": _arr(jm.trace),
    }
    body = json.dumps(doc, sort_keys=True, indent=1)
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".model.tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(FORMAT_HEADER + "\n")
            fh.write(body)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path: str | os.PathLike) -> JointModel:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != FORMAT_HEADER:
            raise DataParseError(
                f"{path}: unsupported model file (header {header!r}, expected {FORMAT_HEADER!r})"
            )
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataParseError(f"{path}: malformed model body: {exc}") from exc
    mean = _FROM[doc["mean_model"]["type"]](doc["mean_model"])
    disp = _FROM[doc["disp_model"]["type"]](doc["disp_model"])
    return JointModel(
        spec=_spec_from_dict(doc["spec"]),
        mean_model=mean,
        disp_model=disp,
        column_names=list(doc["column_names"]),
        outer_iterations=doc["outer_iterations"],
        converged=doc["converged"],
        trace=np.asarray(doc["trace"]),
    )
