"""Command-line experiment runner.

Three subcommands:

  fit     fit a joint model on a CSV file, write the model file and a
          fit summary
  sobol   compute sensitivity indices from a saved model file
  bench   run a built-in benchmark recipe and write its report

Settings may come from an INI config file (one section per subcommand);
command-line flags win over config values.  Exit codes: 0 success,
1 numerical failure, 2 configuration or parse failure.
"""

from __future__ import annotations

import argparse
import configparser
import os
import re
import sys

import numpy as np

from . import ishigami
from .design import Uniform, load_csv
from .errors import ConfigurationError, FitError, JointsaError
from .gam import SmoothTerm
from .glm import Family, TermSpec
from .joint import JointSpec, fit_joint, q2
from .report import ReportRow, write_report_csv, write_report_text
from .serialize import load_model, save_model
from .sobol import (
    SaProblem,
    dispersion_sensitivity,
    first_order_index,
    replicate_indices,
    total_index_uncontrollable,
)

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")


def split_top_level(text: str, seps: str = ",;+") -> list[str]:
    """Split on separators not nested inside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(depth - 1, 0)
        if ch in seps and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def parse_terms(text: str | None) -> tuple[list[TermSpec], list[SmoothTerm]]:
    """Term mini-language: "1", "x1", "x1^3", "s(x1)", "s(x1,k=12)",
    "s(x1,x2)"; terms separated by "+" or commas, whitespace ignored."""
    if not text or not text.strip():
        return [], []
    parametric: list[TermSpec] = []
    smooths: list[SmoothTerm] = []
    for pos, raw in enumerate(split_top_level(text), start=1):
        token = raw.replace(" ", "")
        if not token:
            continue
        if token == "1":
            parametric.append(TermSpec("intercept"))
            continue
        if token.startswith("s(") or token.startswith("s ("):
            if not token.endswith(")") or token.count("(") != token.count(")"):
                raise ConfigurationError(f"term {pos} ({raw!r}): unbalanced smooth syntax")
            inner = token[2:-1]
            args = [a for a in inner.split(",") if a]
            k = None
            cols = []
            for a in args:
                if a.startswith("k="):
                    try:
                        k = int(a[2:])
                    except ValueError:
                        raise ConfigurationError(f"term {pos} ({raw!r}): bad basis dimension {a!r}") from None
                elif _NAME.match(a):
                    cols.append(a)
                else:
                    raise ConfigurationError(f"term {pos} ({raw!r}): bad smooth argument {a!r}")
            if not 1 <= len(cols) <= 2:
                raise ConfigurationError(f"term {pos} ({raw!r}): smooths take 1 or 2 columns")
            smooths.append(SmoothTerm(tuple(cols), k))
            continue
        if "^" in token:
            name, _, expo = token.partition("^")
            if not _NAME.match(name):
                raise ConfigurationError(f"term {pos} ({raw!r}): bad column name {name!r}")
            try:
                e = int(expo)
            except ValueError:
                raise ConfigurationError(f"term {pos} ({raw!r}): bad exponent {expo!r}") from None
            parametric.append(TermSpec("power", name, e))
            continue
        if _NAME.match(token):
            parametric.append(TermSpec("linear", token))
            continue
        raise ConfigurationError(f"term {pos} ({raw!r}): cannot parse")
    return parametric, smooths


_DIST = re.compile(r"^(?:(?P<name>[A-Za-z_][A-Za-z0-9_.\-]*)=)?[Uu](?:niform)?\((?P<lo>[^,]+),(?P<hi>[^)]+)\)$")


def parse_dists(text: str, column_names: list[str]) -> list[Uniform]:
    """Distribution list "x1=U(-3.14,3.14), x2=U(0,1)"; unnamed entries
    apply in column order."""
    entries = split_top_level(text, seps=",;")
    named: dict[str, Uniform] = {}
    positional: list[Uniform] = []
    for raw in entries:
        m = _DIST.match(raw.replace(" ", ""))
        if not m:
            raise ConfigurationError(f"cannot parse distribution {raw!r} (expected name=U(lo,hi))")
        try:
            dist = Uniform(float(m.group("lo")), float(m.group("hi")))
        except ValueError:
            raise ConfigurationError(f"non-numeric bounds in {raw!r}") from None
        if m.group("name"):
            named[m.group("name")] = dist
        else:
            positional.append(dist)
    if named and positional:
        raise ConfigurationError("mix of named and positional distributions")
    if named:
        missing = [c for c in column_names if c not in named]
        if missing:
            raise ConfigurationError(f"no distribution given for columns {missing}")
        extra = [n for n in named if n not in column_names]
        if extra:
            raise ConfigurationError(f"distributions for unknown columns {extra}")
        return [named[c] for c in column_names]
    if len(positional) == 1 and len(column_names) > 1:
        positional = positional * len(column_names)
    if len(positional) != len(column_names):
        raise ConfigurationError(
            f"{len(positional)} distributions for {len(column_names)} inputs"
        )
    return positional


def _parse_family(text: str | None) -> Family:
    if not text or text.strip() in ("gaussian", "normal"):
        return Family("identity", "constant")
    parts = text.replace(" ", "").split(",")
    if len(parts) == 2:
        return Family(parts[0], parts[1])
    aliases = {
        "quasipoisson": ("log", "identity"),
        "gamma": ("log", "mu_squared"),
        "binomial": ("logit", "binomial"),
    }
    if text.strip() in aliases:
        return Family(*aliases[text.strip()])
    raise ConfigurationError(f"cannot parse family {text!r} (use 'link,variance' or an alias)")


def _load_config(path: str | None, section: str) -> dict:
    if not path:
        return {}
    if not os.path.exists(path):
        raise ConfigurationError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    cp.read(path)
    if section not in cp:
        return {}
    return dict(cp[section])


def _setting(args, config: dict, key: str, default=None):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def cmd_fit(args) -> int:
    config = _load_config(args.config, "fit")
    input_path = _setting(args, config, "input")
    if not input_path:
        raise ConfigurationError("fit needs --input CSV")
    response = _setting(args, config, "response", "y")
    engine = _setting(args, config, "engine", "gam")
    out_dir = _setting(args, config, "out", ".")
    seed = int(_setting(args, config, "seed", 0))

    data = load_csv(input_path, response=response)
    mean_par, mean_sm = parse_terms(_setting(args, config, "mean_terms"))
    disp_par, disp_sm = parse_terms(_setting(args, config, "disp_terms"))
    family = _parse_family(_setting(args, config, "family"))
    if engine in ("glm", "gam") and not (mean_par or mean_sm):
        raise ConfigurationError("glm/gam engines need --mean-terms")
    spec = JointSpec(
        engine=engine,
        mean_terms=mean_par,
        mean_smooths=mean_sm,
        disp_terms=disp_par,
        disp_smooths=disp_sm,
        family=family,
        gp_n_starts=int(_setting(args, config, "gp_starts", 10)),
    )
    jm = fit_joint(data, spec)

    os.makedirs(out_dir, exist_ok=True)
    model_path = os.path.join(out_dir, "model.json")
    save_model(jm, model_path)
    rows = _fit_report_rows(jm, data, seed)
    write_report_csv(rows, os.path.join(out_dir, "fit_report.csv"))
    write_report_text(rows, os.path.join(out_dir, "fit_summary.txt"))
    print(f"model written to {model_path}")
    for r in rows[:12]:
        print(f"  {r.key} = {r.value}")
    return 0


def _fit_report_rows(jm, data, seed) -> list[ReportRow]:
    rows = [
        ReportRow("fit/engine", jm.spec.engine, seed=seed),
        ReportRow("fit/n", data.n, seed=seed),
        ReportRow("fit/outer_iterations", jm.outer_iterations, seed=seed),
        ReportRow("fit/converged", str(jm.converged), seed=seed),
        ReportRow("fit/q2_learning", q2(jm, data), seed=seed),
    ]
    for comp, model in (("mean", jm.mean_model), ("dispersion", jm.disp_model)):
        prefix = f"fit/{comp}"
        if hasattr(model, "explained_deviance"):
            rows.append(ReportRow(f"{prefix}/explained_deviance", model.explained_deviance))
        if hasattr(model, "beta"):  # glm
            for t, b, tv in zip(model.terms, model.beta, model.t_values):
                rows.append(ReportRow(f"{prefix}/coef/{t.label}", float(b), method=f"t={tv:.2f}"))
        elif hasattr(model, "lambdas") and hasattr(model, "spec"):  # gam
            rows.append(ReportRow(f"{prefix}/edf", model.edf))
            for sm, lam in zip(model.spec.smooths, np.atleast_1d(model.lambdas)):
                rows.append(ReportRow(f"{prefix}/lambda/{sm.label}", float(lam)))
            for t, b in zip(model.spec.parametric, model.coefficients):
                rows.append(ReportRow(f"{prefix}/coef/{t.label}", float(b)))
        else:  # gp
            for j, name in enumerate(model.column_names):
                rows.append(ReportRow(f"{prefix}/theta/{name}", float(model.theta[j])))
                rows.append(ReportRow(f"{prefix}/power/{name}", float(model.power[j])))
            rows.append(ReportRow(f"{prefix}/sigma2", model.sigma2))
            rows.append(ReportRow(f"{prefix}/nugget2", model.nugget2))
    return rows


def cmd_sobol(args) -> int:
    config = _load_config(args.config, "sobol")
    model_path = _setting(args, config, "model")
    if not model_path:
        raise ConfigurationError("sobol needs --model FILE")
    dists_text = _setting(args, config, "dists")
    if not dists_text:
        raise ConfigurationError("sobol needs --dists")
    n = int(_setting(args, config, "n", 10_000))
    reps = int(_setting(args, config, "reps", 100))
    seed = int(_setting(args, config, "seed", 0))
    out_dir = _setting(args, config, "out", ".")
    var_mode = _setting(args, config, "var_mode", "reconstructed")
    data_variance = _setting(args, config, "data_variance")

    jm = load_model(model_path)
    names = jm.column_names
    dists = parse_dists(dists_text, names)
    problem = SaProblem(
        mean_fn=lambda X: jm.predict_mean(X, names),
        disp_fn=lambda X: jm.predict_dispersion(X, names),
        dists=dists,
        total_variance_mode=var_mode,
        data_variance=float(data_variance) if data_variance is not None else None,
    )

    labels = [f"S{i + 1}" for i in range(len(names))] + ["ST_eps"]
    requested = _setting(args, config, "indices")
    if requested:
        labels = split_top_level(requested, seps=";")
    estimates = replicate_indices(problem, labels, n=n, reps=reps, seed=seed)
    rows = [ReportRow("sobol/model", os.path.basename(os.fspath(model_path)), seed=seed)]
    for e, label in zip(estimates, labels):
        pretty = label
        if label.startswith("S") and label[1:].isdigit() and int(label[1:]) <= len(names):
            pretty = f"S({names[int(label[1:]) - 1]})"
        rows.append(ReportRow(f"sobol/{pretty}", e.value, sd=e.sd, method=e.method, seed=seed))

    disp_cols = _dispersion_columns(jm, problem, n, seed)
    st_eps = next((e.value for e, l in zip(estimates, labels) if l == "ST_eps"), None)
    for j, name in enumerate(names):
        if st_eps is None:
            break
        if name in disp_cols:
            rows.append(
                ReportRow(
                    f"sobol/S({name},eps)",
                    f"]0,{st_eps:.3f}]",
                    method="Eq",
                    seed=seed,
                )
            )
        else:
            rows.append(ReportRow(f"sobol/S({name},eps)", 0.0, method="Eq", seed=seed))

    os.makedirs(out_dir, exist_ok=True)
    write_report_csv(rows, os.path.join(out_dir, "sobol_report.csv"))
    write_report_text(rows, os.path.join(out_dir, "sobol_report.txt"))
    for r in rows:
        sd = f" sd={r.sd:.2g}" if r.sd else ""
        print(f"  {r.key} = {r.value}{sd}")
    return 0


def _dispersion_columns(jm, problem, n, seed) -> set[str]:
    """Inputs that act in the dispersion component: read off the term
    structure for glm/gam, measured by sensitivity of Y_d for gp."""
    spec = jm.spec
    if spec.engine in ("glm", "gam"):
        cols = {t.column for t in spec.disp_terms if t.kind != "intercept"}
        for sm in spec.disp_smooths:
            cols.update(sm.columns)
        return cols
    cols = set()
    for j, name in enumerate(jm.column_names):
        try:
            est = dispersion_sensitivity(problem, j, n=min(n, 5000), seed=seed + j)
        except JointsaError:
            continue
        if est.value > 0.05:
            cols.add(name)
    return cols


_BENCHES = ("table1", "table2", "table3", "convergence", "diagnostics")


def cmd_bench(args) -> int:
    config = _load_config(args.config, "bench")
    seed = int(_setting(args, config, "seed", 0))
    out_dir = _setting(args, config, "out", ".")
    reps = _setting(args, config, "reps")
    n = _setting(args, config, "n")
    jobs = int(_setting(args, config, "jobs", 1))
    gp_starts = int(_setting(args, config, "gp_starts", 10))

    which = args.which
    if which == "table1":
        rows, _ = ishigami.run_table1(seed=seed, gp_starts=gp_starts)
    elif which == "table2":
        rows, _ = ishigami.run_table2(
            seed=seed,
            reps=int(reps) if reps else 100,
            n_mc=int(n) if n else 10_000,
            gp_starts=gp_starts,
        )
    elif which == "table3":
        rows, _ = ishigami.run_table3(
            seed=seed,
            reps=int(reps) if reps else 100,
            n_mc=int(n) if n else 10_000,
            gp_starts=gp_starts,
        )
    elif which == "convergence":
        rows = ishigami.convergence_study(
            replicates=int(reps) if reps else 100, seed=seed, n_jobs=jobs
        )
    else:
        rows = ishigami.run_diagnostics(seed=seed, gp_starts=gp_starts)

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{which}_report.csv")
    write_report_csv(rows, csv_path)
    write_report_text(rows, os.path.join(out_dir, f"{which}_report.txt"))
    print(f"report written to {csv_path} ({len(rows)} rows)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jointsa",
        description="Joint mean/dispersion metamodels and Sobol sensitivity indices",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a joint model on a CSV dataset")
    p_fit.add_argument("--input", help="input CSV path")
    p_fit.add_argument("--response", help="response column name (default y)")
    p_fit.add_argument("--engine", choices=("glm", "gam", "gp"))
    p_fit.add_argument("--mean-terms", dest="mean_terms", help='e.g. "1+x1+s(x1)+s(x2)"')
    p_fit.add_argument("--disp-terms", dest="disp_terms", help='e.g. "1+s(x1)"')
    p_fit.add_argument("--family", help='"link,variance" or alias (gaussian, gamma, ...)')
    p_fit.add_argument("--gp-starts", dest="gp_starts", type=int)
    p_fit.add_argument("--seed", type=int)
    p_fit.add_argument("--out", help="output directory")
    p_fit.add_argument("--config", help="INI config file")
    p_fit.set_defaults(func=cmd_fit)

    p_sob = sub.add_parser("sobol", help="sensitivity indices from a model file")
    p_sob.add_argument("--model", help="model file from `fit`")
    p_sob.add_argument("--dists", help='input laws, e.g. "x1=U(-3.14,3.14),x2=U(0,1)"')
    p_sob.add_argument("--indices", help='explicit labels, e.g. "S1;S12;ST_eps"')
    p_sob.add_argument("--n", type=int, help="points per index estimate")
    p_sob.add_argument("--reps", type=int, help="Monte Carlo repetitions")
    p_sob.add_argument("--var-mode", dest="var_mode", choices=("reconstructed", "data"))
    p_sob.add_argument("--data-variance", dest="data_variance", type=float)
    p_sob.add_argument("--seed", type=int)
    p_sob.add_argument("--out")
    p_sob.add_argument("--config")
    p_sob.set_defaults(func=cmd_sobol)

    p_bench = sub.add_parser("bench", help="run a built-in benchmark")
    p_bench.add_argument("which", choices=_BENCHES)
    p_bench.add_argument("--seed", type=int)
    p_bench.add_argument("--reps", type=int)
    p_bench.add_argument("--n", type=int)
    p_bench.add_argument("--jobs", type=int, help="parallel workers for convergence")
    p_bench.add_argument("--gp-starts", dest="gp_starts", type=int)
    p_bench.add_argument("--out")
    p_bench.add_argument("--config")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FitError, JointsaError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
