"""Command-line experiment runner.

    python3 -m mildspde <subcommand> --config run.ini [--seed S] [--realizations R] [--out DIR]

Subcommands: simulate, verify-estimates, regularity, dependence, gronwall.
Every run writes manifest.json (config hash, seed, library versions) next to
its CSVs, and every CSV row carries the manifest hash. Exit codes: 0 success,
2 invalid input, 3 convergence failure, 4 estimate violation; failures also
write error.json.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import platform
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__, kernels
from .analysis import (EXPONENT_COLUMNS, REPORT_COLUMNS, DependenceConfig, GronwallParams,
                       dependence_experiment, estimate_holder_exponent, gronwall_bound,
                       gronwall_fixed_point, gronwall_numeric_verify, maximal_regularity_check,
                       mean_equation_residual, report_row, write_rows_csv)
from .convolution import (WeightedForcing, convolution_bound_check, ito_isometry_check,
                          stochastic_convolution_sample)
from .errors import ConvergenceError, EstimateViolation, InputError
from .holder import ExponentSet, graded_grid
from .noise import NoiseModel
from .problems import Example1Params, build_example1, build_linear_instance
from .solver import (InitialCondition, SolverConfig, choose_T_loc, moment_profiles,
                     solve_mild, solver_grid, write_solution_csv)
from .spectral import SpectralOperator, check_semigroup_bounds

EXIT_CODES = {InputError: 2, ConvergenceError: 3, EstimateViolation: 4}

# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_FLOAT, _INT, _STR, _FLOATS, _INTS, _STRS = "float", "int", "str", "floats", "ints", "strs"

# section -> key -> (type, default); a default of None means "required" for seed,
# "unset" elsewhere
SCHEMA = {
    "problem": {
        "kind": (_STR, "example1"),
        "N": (_INT, 8),
        "P": (_INT, 32),
        "a0": (_FLOAT, 1.0),
        "horizon": (_FLOAT, 1.0),
        "f": (_STR, "power"),
        "f_scale": (_FLOAT, 1.0),
        "g_scale": (_FLOAT, 1.0),
        "phi1": (_FLOATS, None),
        "phi2": (_FLOATS, None),
        "xi_mean": (_FLOATS, None),
        "xi_std": (_FLOATS, None),
        "eigenvalues": (_FLOATS, None),
        "c": (_FLOAT, 0.0),
    },
    "exponents": {
        "eta": (_FLOAT, 0.25),
        "beta": (_FLOAT, 0.2),
        "sigma": (_FLOAT, 0.1),
    },
    "solver": {
        "n_steps": (_INT, 256),
        "realizations": (_INT, 1000),
        "seed": (_INT, None),
        "picard_tol": (_FLOAT, 1e-6),
        "picard_max_iters": (_INT, 50),
        "grid": (_STR, "uniform"),
        "horizon": (_FLOAT, None),
        "start": (_STR, "semigroup"),
    },
    "experiment": {
        "semigroup_thetas": (_FLOATS, [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]),
        "semigroup_points": (_INT, 200),
        "ito_realizations": (_INT, 10000),
        "ito_steps": (_INT, 200),
        "regularity_steps": (_INT, 1000),
        "regularity_realizations": (_INT, 10000),
        "lags": (_INTS, [1, 2, 4, 8, 16, 32, 64]),
        "p_values": (_FLOATS, [2.0, 4.0]),
        "n_boot": (_INT, 200),
        "maxreg_points": (_INT, 512),
        "radii": (_FLOATS, [3.0, 3.0, 3.0]),
        "magnitudes": (_FLOATS, [0.5, 0.05, 0.005]),
        "dependence_realizations": (_INT, 500),
        "dependence_steps": (_INT, 64),
        "perturb": (_STRS, ["xi", "F2", "G"]),
        "gronwall_a": (_FLOAT, 1.0),
        "gronwall_b": (_FLOAT, 3.0),
        "gronwall_mu": (_FLOAT, 1.0),
        "gronwall_nu": (_FLOAT, 0.5),
        "gronwall_cutoff": (_INT, 60),
        "gronwall_samples": (_INT, 201),
        "gronwall_f": (_FLOAT, 1.0),
    },
    "output": {
        "dir": (_STR, "out"),
    },
}
REQUIRED_SECTIONS = ("problem", "exponents", "solver")


def _convert(kind, text: str):
    text = text.strip()
    if kind == _FLOAT:
        return float(text)
    if kind == _INT:
        return int(text)
    if kind == _STR:
        return text
    items = [s.strip() for s in text.split(",") if s.strip()]
    if kind == _FLOATS:
        return [float(s) for s in items]
    if kind == _INTS:
        return [int(s) for s in items]
    return items


def _render(kind, value) -> str:
    if kind == _FLOAT:
        return repr(float(value))
    if kind in (_INT, _STR):
        return str(value)
    if kind == _FLOATS:
        return ", ".join(repr(float(v)) for v in value)
    return ", ".join(str(v) for v in value)


@dataclass
class RunConfig:
    sections: dict

    def __getitem__(self, section):
        return self.sections[section]

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise InputError(f"config does not parse: {exc}") from exc
        missing = [s for s in REQUIRED_SECTIONS if not cp.has_section(s)]
        if missing:
            raise InputError(f"config is missing sections: {', '.join(missing)}")
        unknown = [s for s in cp.sections() if s not in SCHEMA]
        if unknown:
            raise InputError(f"unknown config sections: {', '.join(unknown)}")
        out = {}
        for name, keys in SCHEMA.items():
            given = dict(cp[name]) if cp.has_section(name) else {}
            extra = sorted(set(given) - set(keys))
            if extra:
                raise InputError(f"unknown keys in [{name}]: {', '.join(extra)}")
            sec = {}
            for key, (kind, default) in keys.items():
                if key in given and given[key].strip() != "":
                    try:
                        sec[key] = _convert(kind, given[key])
                    except ValueError as exc:
                        raise InputError(f"[{name}] {key}: {exc}") from exc
                else:
                    sec[key] = default
            out[name] = sec
        return cls(out)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                return cls.parse(fh.read())
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}") from exc

    def to_ini(self, include_output: bool = True) -> str:
        lines = []
        for name, keys in SCHEMA.items():
            if name == "output" and not include_output:
                continue
            lines.append(f"[{name}]")
            for key, (kind, _) in keys.items():
                value = self.sections[name][key]
                lines.append(f"{key} = " + ("" if value is None else _render(kind, value)))
            lines.append("")
        return "\n".join(lines)

    def override(self, seed=None, realizations=None, out=None) -> "RunConfig":
        sec = {k: dict(v) for k, v in self.sections.items()}
        if seed is not None:
            sec["solver"]["seed"] = int(seed)
        if realizations is not None:
            sec["solver"]["realizations"] = int(realizations)
        if out is not None:
            sec["output"]["dir"] = str(out)
        return RunConfig(sec)

    def validate(self):
        seed = self["solver"]["seed"]
        if seed is None:
            raise InputError("a seed is required ([solver] seed or --seed)")
        if not 0 <= seed < 2 ** 64:
            raise InputError("seed must be an unsigned 64-bit integer")
        if self["solver"]["picard_tol"] <= 0 or self["solver"]["picard_max_iters"] < 1:
            raise InputError("picard_tol must be positive and picard_max_iters at least 1")
        if self["problem"]["kind"] not in ("example1", "linear"):
            raise InputError(f"unknown problem kind {self['problem']['kind']!r}")


# ---------------------------------------------------------------------------
# problem construction
# ---------------------------------------------------------------------------

def _padded(values, N, default):
    if values is None:
        return default
    v = np.zeros(N)
    v[:min(N, len(values))] = values[:N]
    return v


def build_instance(cfg: RunConfig):
    p, e = cfg["problem"], cfg["exponents"]
    N = p["N"]
    if p["kind"] == "example1":
        sigma, fs, gs = e["sigma"], p["f_scale"], p["g_scale"]
        if p["f"] == "power":
            f = lambda t: fs * np.asarray(t, dtype=float) ** sigma
        elif p["f"] == "zero":
            f = lambda t: np.zeros_like(np.asarray(t, dtype=float))
        else:
            raise InputError(f"unknown forcing profile {p['f']!r}")
        params = Example1Params(
            a0=p["a0"], N=N, P=p["P"], beta=e["beta"], sigma=sigma, eta=e["eta"],
            horizon=p["horizon"], f=f, g=lambda t: gs * np.ones_like(np.asarray(t, dtype=float)),
            phi1=_padded(p["phi1"], N, None), phi2=_padded(p["phi2"], N, None),
            xi_mean=_padded(p["xi_mean"], N, None), xi_std=_padded(p["xi_std"], N, None))
        inst = build_example1(params)
        v = np.asarray(params.resolved().phi1, dtype=float)
        return inst, v
    lam = p["eigenvalues"] or [1.0]
    op = SpectralOperator(np.asarray(lam, dtype=float), tuple(f"mode_{k}" for k in range(len(lam))))
    n = op.dim
    exps = ExponentSet(e["eta"], e["beta"], e["sigma"])
    noise = NoiseModel.constant(p["g_scale"] * np.eye(n)) if p["g_scale"] else NoiseModel.zero(n)
    xi = InitialCondition.gaussian(_padded(p["xi_mean"], n, np.zeros(n)),
                                   _padded(p["xi_std"], n, np.zeros(n)))
    v = np.zeros(n)
    v[0] = 1.0
    if p["f"] == "power":
        fs, sigma = p["f_scale"], e["sigma"]
        F2 = WeightedForcing(exps.beta, lambda t: fs * (np.asarray(t, dtype=float) ** sigma)[:, None] * v, n)
    elif p["f"] == "zero":
        F2 = WeightedForcing.zero(n)
    else:
        raise InputError(f"unknown forcing profile {p['f']!r}")
    return build_linear_instance(op, p["c"], F2, noise, xi, exps, p["horizon"]), v


def _solver_config(cfg: RunConfig, horizon=None) -> SolverConfig:
    s = cfg["solver"]
    return SolverConfig(n_steps=s["n_steps"], n_realizations=s["realizations"], seed=s["seed"],
                        picard_tol=s["picard_tol"], picard_max_iters=s["picard_max_iters"],
                        grid=s["grid"], horizon=horizon if horizon is not None else s["horizon"],
                        start=s["start"], check_ball=False)


# ---------------------------------------------------------------------------
# manifest and output
# ---------------------------------------------------------------------------

def _versions() -> dict:
    import scipy
    out = {"python": platform.python_version(), "numpy": np.__version__,
           "scipy": scipy.__version__, "mildspde": __version__}
    try:
        import numba
        out["numba"] = numba.__version__
    except ImportError:
        out["numba"] = None
    return out


class Run:
    """Owns one output directory: the manifest and every CSV written there."""

    def __init__(self, subcommand: str, cfg: RunConfig):
        self.cfg = cfg
        self.out = cfg["output"]["dir"]
        os.makedirs(self.out, exist_ok=True)
        # the output directory is excluded so reruns elsewhere hash identically
        text = cfg.to_ini(include_output=False)
        self.manifest = {
            "subcommand": subcommand,
            "config_sha256": hashlib.sha256(text.encode()).hexdigest(),
            "seed": cfg["solver"]["seed"],
            "backend": kernels.BACKEND,
            "versions": _versions(),
        }
        blob = json.dumps(self.manifest, sort_keys=True).encode()
        self.hash = hashlib.sha256(blob).hexdigest()
        self.outputs = []
        self.failures = []
        self._write_json("manifest.json", dict(self.manifest, manifest_sha256=self.hash,
                                               config=text, outputs=[]))

    @property
    def tag(self) -> dict:
        return {"manifest_sha256": self.hash}

    def path(self, name):
        self.outputs.append(name)
        return os.path.join(self.out, name)

    def rows(self, name, columns, rows):
        write_rows_csv(self.path(name), columns, rows, self.tag)

    def _write_json(self, name, obj):
        with open(os.path.join(self.out, name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")

    def finish(self):
        self._write_json("manifest.json", dict(self.manifest, manifest_sha256=self.hash,
                                               config=self.cfg.to_ini(),
                                               outputs=sorted(set(self.outputs)),
                                               failures=self.failures))
        if self.failures:
            raise EstimateViolation("; ".join(self.failures), details={"failures": self.failures})


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(run: Run):
    cfg = run.cfg
    inst, _ = build_instance(cfg)
    tl = choose_T_loc(inst, seed=cfg["solver"]["seed"])
    sol = solve_mild(inst, _solver_config(cfg), tloc=tl)
    write_solution_csv(run.path("solution.csv"), sol, inst, run.tag)
    rows = [{"quantity": k, "value": v} for k, v in
            (("kappa_sq", tl.kappa_sq), ("C1", tl.C1), ("C2", tl.C2), ("T_loc", tl.T_loc),
             ("contraction_factor", tl.contraction_factor), ("observed_ratio", sol.observed_ratio),
             ("iterations", sol.iterations))]
    rows += [{"quantity": f"candidate_{k}", "value": v} for k, v in sorted(tl.candidates.items())]
    rows.append({"quantity": "binding", "value": tl.binding})
    run.rows("tloc.csv", ["quantity", "value"], rows)
    it_rows = [{"iteration": r["iteration"], "xi_distance": r["xi_distance"],
                "relative": r["relative"],
                "ratio": float("nan") if r["ratio"] is None else r["ratio"]} for r in sol.log]
    run.rows("picard.csv", ["iteration", "xi_distance", "relative", "ratio"], it_rows)


def cmd_verify_estimates(run: Run):
    cfg = run.cfg
    ex = cfg["experiment"]
    inst, v = build_instance(cfg)
    op, e = inst.operator, inst.exponents
    seed = cfg["solver"]["seed"]
    rows = []

    t = np.geomspace(1e-4, 10.0, ex["semigroup_points"]) / op.lambda_min
    for theta in ex["semigroup_thetas"]:
        r = check_semigroup_bounds(op, theta, t)
        for j, tj in enumerate(t):
            rows.append(report_row(tj, f"smoothing[theta={theta!r}]", r.smoothing_norm[j], 0.0,
                                   r.smoothing_bound[j]))
            rows.append(report_row(tj, f"decay[theta={theta!r}]", r.decay_norm[j], 0.0,
                                   r.decay_bound[j]))
            rows.append(report_row(tj, f"increment[theta={theta!r}]", r.increment_norm[j], 0.0,
                                   r.increment_bound[j]))

    times = graded_grid(inst.horizon, 256)
    for theta in (0.0, e.beta, e.eta):
        r = convolution_bound_check(op, v, e.beta, e.sigma, theta, times)
        for j, tj in enumerate(r.times):
            rows.append(report_row(tj, f"forcing_convolution[theta={theta!r}]", r.value[j], 0.0,
                                   r.bound[j]))

    grid = np.linspace(0.0, inst.horizon, ex["ito_steps"] + 1)
    sample = stochastic_convolution_sample(op, inst.noise, grid, ex["ito_realizations"], seed)
    for theta in (0.0, e.beta, e.eta):
        r = ito_isometry_check(op, inst.noise, theta, grid, ex["ito_realizations"], seed, sample)
        z = r.z_scores
        for j, tj in enumerate(grid):
            rows.append(report_row(tj, f"stochastic_convolution[theta={theta!r}]",
                                   r.analytic_second_moment[j], 0.0, r.bound[j]))
            rows.append(report_row(tj, f"isometry_abs_zscore[theta={theta!r}]", abs(z[j]), 0.0, 4.0))

    tl = choose_T_loc(inst, seed=seed)
    sol = solve_mild(inst, _solver_config(cfg, horizon=tl.T_loc), tloc=tl)
    me, se_e, mb, se_b = moment_profiles(sol.paths, op, e.eta, e.beta, sol.times)
    for j, tj in enumerate(sol.times):
        # Monte Carlo rows: the slack includes the four-standard-error allowance
        for name, m, s in (("weighted_eta_moment", me[j], se_e[j]), ("beta_moment", mb[j], se_b[j])):
            row = report_row(tj, name, m, s, tl.kappa_sq)
            row["slack"] = tl.kappa_sq + 4.0 * s - m
            rows.append(row)
    run.rows("estimates.csv", REPORT_COLUMNS, rows)
    neg = [r["quantity"] for r in rows if r["slack"] < 0]
    if neg:
        run.failures.append(f"{len(neg)} rows with negative slack, first: {neg[0]}")


def cmd_regularity(run: Run):
    cfg = run.cfg
    ex = cfg["experiment"]
    inst, _ = build_instance(cfg)
    op, e = inst.operator, inst.exponents
    seed = cfg["solver"]["seed"]
    tl = choose_T_loc(inst, seed=seed)
    T = tl.T_loc
    gamma_max = (1.0 + 2.0 * e.beta) / 4.0 - e.eta
    lags = ex["lags"]

    grid = solver_grid(T, ex["regularity_steps"], "uniform")
    wg = stochastic_convolution_sample(op, inst.noise, grid, ex["regularity_realizations"], seed)
    exp_rows = []
    for p in ex["p_values"]:
        est = estimate_holder_exponent(wg.paths, grid, e.eta, p, (T / 10.0, T), lags, op,
                                       ex["n_boot"], seed)
        row = est.row(gamma_max)
        row["theta"] = e.eta
        exp_rows.append(row)
        if p == 2.0 and est.estimate < gamma_max - 0.05:
            run.failures.append(f"stochastic convolution exponent {est.estimate:.4f} below "
                                f"{gamma_max - 0.05:.4f}")

    sol = solve_mild(inst, _solver_config(cfg, horizon=T), tloc=tl)
    est = estimate_holder_exponent(sol.paths, sol.times, e.eta, 2.0, (T / 10.0, T), lags, op,
                                   ex["n_boot"], seed)
    exp_rows.append(est.row(gamma_max))
    run.rows("exponents.csv", EXPONENT_COLUMNS, exp_rows)

    mr = mean_equation_residual(sol, inst)
    rows = [report_row(t, "mean_equation_residual", mr.residual[j], mr.standard_error[j],
                       mr.budget[j]) for j, t in enumerate(mr.times)]
    if not mr.within_budget:
        run.failures.append("mean-equation residual exceeds its budget")

    x = inst.xi.mean
    mg = maximal_regularity_check(x, inst.F2, op, graded_grid(inst.horizon, ex["maxreg_points"]),
                                  e.beta, e.sigma)
    tol = 1e-2
    T0 = 0.0
    rows += [
        # continuity holds if the gap starts below tol or decays like a positive power
        report_row(T0, "beta_power_continuity_gap", mg.beta_continuity_gap, 0.0, float("inf")),
        report_row(T0, "beta_power_continuity_decay", -mg.beta_continuity_decay, 0.0,
                   float("inf") if mg.beta_continuity_gap <= tol else -0.02),
        report_row(T0, "AI_limit_misfit", mg.AI_membership.limit_fit_residual, 0.0, tol),
        report_row(T0, "dI_limit_misfit", mg.dI_membership.limit_fit_residual, 0.0, tol),
        report_row(T0, "AI_weight_decay", -mg.AI_membership.w_decay_exponent, 0.0, -0.02),
        report_row(T0, "dI_weight_decay", -mg.dI_membership.w_decay_exponent, 0.0, -0.02),
        report_row(T0, "empirical_regularity_constant", mg.empirical_constant, 0.0, float("inf")),
    ]
    if not mg.ok:
        run.failures.append("maximal regularity check failed: "
                            f"{mg.AI_membership.diagnosis}; {mg.dI_membership.diagnosis}")
    run.rows("regularity.csv", REPORT_COLUMNS, rows)


def _dependence_directions(inst, which):
    N = inst.operator.dim
    e = inst.exponents
    out = {}
    if "xi" in which:
        d = np.zeros(N)
        d[0] = 1.0
        if N > 1:
            d[1] = 0.5
        out["xi_direction"] = d
    if "F2" in which:
        k = min(2, N - 1)
        sigma = e.sigma
        out["F2_direction"] = WeightedForcing(
            e.beta, lambda t: (np.asarray(t, dtype=float) ** sigma)[:, None] * np.eye(N)[k][None], N)
    if "G" in which:
        k = min(1, N - 1)
        M = inst.noise.mode_count
        mat = np.zeros((N, M))
        mat[k, 0] = 1.0
        out["G_direction"] = NoiseModel(
            M, N, lambda t: np.broadcast_to(mat, (t.size, N, M)).copy(), tail_variance=0.0)
    bad = set(which) - {"xi", "F2", "G"}
    if bad:
        raise InputError(f"unknown perturbation targets: {', '.join(sorted(bad))}")
    return out


def cmd_dependence(run: Run):
    cfg = run.cfg
    ex = cfg["experiment"]
    inst, _ = build_instance(cfg)
    dc = DependenceConfig(radii=tuple(ex["radii"]), magnitudes=tuple(ex["magnitudes"]),
                          n_realizations=ex["dependence_realizations"],
                          n_steps=ex["dependence_steps"], seed=cfg["solver"]["seed"],
                          **_dependence_directions(inst, ex["perturb"]))
    rep = dependence_experiment(inst, dc)
    C37, C38 = float(np.max(rep.constants_37)), float(np.max(rep.constants_38))
    rows = []
    for i, m in enumerate(rep.magnitudes.tolist()):
        for j, t in enumerate(rep.times):
            rows.append(report_row(t, f"weighted_difference[magnitude={m!r}]", rep.left_37[i, j],
                                   0.0, C37 * rep.right_37[i, j]))
            rows.append(report_row(t, f"rescaled_difference[magnitude={m!r}]", rep.left_38[i, j],
                                   0.0, C38 * rep.right_38[i, j]))
    for i, m in enumerate(rep.magnitudes.tolist()):
        rows.append(report_row(rep.horizon, f"fitted_constant_weighted[magnitude={m!r}]",
                               rep.constants_37[i], 0.0, 2.0 * float(np.min(rep.constants_37))))
        rows.append(report_row(rep.horizon, f"fitted_constant_rescaled[magnitude={m!r}]",
                               rep.constants_38[i], 0.0, 2.0 * float(np.min(rep.constants_38))))
    rows.append(report_row(rep.horizon, "epsilon", rep.epsilon, 0.0, float("inf")))
    run.rows("dependence.csv", REPORT_COLUMNS, rows)
    if not rep.stable:
        run.failures.append("fitted dependence constants vary by more than a factor 2")


def cmd_gronwall(run: Run):
    ex = run.cfg["experiment"]
    params = GronwallParams(ex["gronwall_a"], ex["gronwall_b"], ex["gronwall_mu"],
                            ex["gronwall_nu"], ex["gronwall_cutoff"])
    t = np.linspace(params.a, params.b, ex["gronwall_samples"])
    f = np.full(t.shape, ex["gronwall_f"])
    phi = gronwall_fixed_point(params, t, f)
    rep = gronwall_numeric_verify(t, phi, params, f)
    rows = []
    for j, tj in enumerate(t):
        b = gronwall_bound(params, f, tj, t)
        rows.append(report_row(tj, "integral_equation_solution", phi[j], 0.0, b.value))
        rows.append(report_row(tj, "series_bound", b.value, b.remainder, b.majorant))
        rows.append(report_row(tj, "hypothesis_right_side", phi[j], 0.0, rep.hypothesis_rhs[j]))
    run.rows("gronwall.csv", REPORT_COLUMNS, rows)
    if not rep.conclusion_ok:
        run.failures.append(f"bound fails at t = {rep.conclusion_failures.tolist()}")


COMMANDS = {
    "simulate": cmd_simulate,
    "verify-estimates": cmd_verify_estimates,
    "regularity": cmd_regularity,
    "dependence": cmd_dependence,
    "gronwall": cmd_gronwall,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mildspde", description=__doc__.split("\n")[0])
    ap.add_argument("subcommand", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="INI file with [problem], [exponents], [solver]")
    ap.add_argument("--seed", type=int, help="overrides [solver] seed")
    ap.add_argument("--realizations", type=int, help="overrides [solver] realizations")
    ap.add_argument("--out", help="output directory; overrides [output] dir")
    return ap


def _exit_code(exc) -> int:
    for cls, code in EXIT_CODES.items():
        if isinstance(exc, cls):
            return code
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = args.out
    try:
        cfg = RunConfig.load(args.config).override(args.seed, args.realizations, args.out)
        out_dir = cfg["output"]["dir"]
        cfg.validate()
        run = Run(args.subcommand, cfg)
        COMMANDS[args.subcommand](run)
        run.finish()
    except (InputError, ConvergenceError, EstimateViolation) as exc:
        code = _exit_code(exc)
        record = {"exit_code": code, "error_type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConvergenceError):
            record["log"] = exc.log
        if isinstance(exc, EstimateViolation):
            record["details"] = exc.details
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "error.json"), "w") as fh:
                json.dump(record, fh, indent=2, sort_keys=True, default=_json_default)
                fh.write("\n")
        print(f"{record['error_type']}: {record['message']}", file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
