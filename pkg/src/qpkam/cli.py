"""Command line front end: config parsing, experiment dispatch, output.

Runs are configured by a single JSON document and write their artifacts
atomically into an output directory.  All science lives in the CSV/JSON
outputs; plots are optional and decorative.  Exit codes: 0 success, 1 usage
or configuration error, 2 scientific failure (divergence, resonance, ...).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .engine import YPoly, run, schedule
from .errors import ConfigError, InsufficientData, QpkamError
from .frequencies import FrequencyData, certify, divisor_sum, divisor_sum_bound
from .homological import PerturbationPair
from .maps import ReversibleMapSpec, iterate_map, rotation_number
from .oscillator import (Forcing, OscillatorSpec, action_angle_chain,
                         oscillator_poincare, scalar_fn, twist_coefficient)
from .series import EVEN, ODD, QPSeries
from .smoothing import error_decay_probe

MODES = ("dioph", "smooth-demo", "kam-run", "twist-sim", "appl-run")

CSV_COLUMNS = {
    "dioph": ["radius", "worst_divisor", "running_c0"],
    "smooth-demo": ["p_test", "delta", "sup_error"],
    "kam-run": ["n", "f_hat", "g_hat", "u", "v",
                "f_next_sup", "g_next_sup"],
    "twist-sim": ["orbit_id", "y0", "rotation", "err",
                  "y_min", "y_max", "escaped"],
    "appl-run": ["orbit_id", "y0", "rotation", "err",
                 "y_min", "y_max", "escaped"],
}


# -- config schema -----------------------------------------------------------


def _check_keys(doc, allowed, where, problems):
    for key in doc:
        if key not in allowed:
            problems.append(f"unknown-key: {where}.{key}")


def _need(doc, key, where, problems, default=None):
    if key in doc:
        return doc[key]
    if default is not None:
        return default
    problems.append(f"missing-field: {where}.{key}")
    return None


def _resolve_frequency(doc, mode, problems):
    out = {}
    if mode == "appl-run":
        _check_keys(doc, {"mu", "omega0"}, "frequency", problems)
        mu = _need(doc, "mu", "frequency", problems)
        omega0 = _need(doc, "omega0", "frequency", problems)
        if mu is not None:
            out["mu"] = [float(v) for v in mu]
        if omega0 is not None:
            if float(omega0) <= 0:
                problems.append("range-violation: frequency.omega0 must be > 0")
            out["omega0"] = float(omega0)
        return out
    _check_keys(doc, {"omega", "gamma"}, "frequency", problems)
    omega = _need(doc, "omega", "frequency", problems)
    gamma = _need(doc, "gamma", "frequency", problems)
    if omega is not None:
        out["omega"] = [float(v) for v in omega]
    if gamma is not None:
        out["gamma"] = float(gamma)
    return out


def _resolve_truncation(doc, problems):
    _check_keys(doc, {"K_max", "L_max", "D_y", "r"}, "truncation", problems)
    out = {
        "K_max": int(doc.get("K_max", 16)),
        "L_max": int(doc.get("L_max", 16)),
        "D_y": int(doc.get("D_y", 8)),
        "r": float(doc.get("r", 1.0)),
    }
    if out["K_max"] < 1:
        problems.append("range-violation: truncation.K_max must be >= 1")
    if out["r"] <= 0:
        problems.append("range-violation: truncation.r must be > 0")
    return out


def _resolve_schedule(doc, m, problems):
    _check_keys(doc, {"epsilon", "mu", "n_max"}, "schedule", problems)
    out = {
        "epsilon": float(_need(doc, "epsilon", "schedule", problems) or 0.5),
        "mu": float(doc.get("mu", 0.01)),
        "n_max": int(doc.get("n_max", 4)),
    }
    if not 0 < out["epsilon"] < 1:
        problems.append("range-violation: schedule.epsilon must lie in (0, 1)")
    if not 0 < out["mu"] < 1:
        problems.append("range-violation: schedule.mu must lie in (0, 1)")
    if out["n_max"] < 1:
        problems.append("range-violation: schedule.n_max must be >= 1")
    return out


def _resolve_problem(doc, mode, m, problems):
    out = dict(doc)
    if mode == "dioph":
        _check_keys(doc, {"sigma", "K_max", "nu_values"}, "problem", problems)
        sigma = _need(doc, "sigma", "problem", problems)
        if sigma is not None and m is not None and float(sigma) <= m:
            problems.append(
                f"range-violation: problem.sigma = {sigma} must exceed m = {m}"
            )
        out.setdefault("K_max", 40)
        out.setdefault("nu_values", [])
    elif mode == "smooth-demo":
        _check_keys(doc, {"p_test", "deltas"}, "problem", problems)
        p_test = _need(doc, "p_test", "problem", problems)
        deltas = _need(doc, "deltas", "problem", problems)
        if deltas is not None and len(deltas) < 4:
            problems.append("range-violation: problem.deltas needs >= 4 values")
        if p_test is not None and any(p <= 0 for p in p_test):
            problems.append("range-violation: problem.p_test must be positive")
    elif mode == "kam-run":
        _check_keys(doc, {"modes", "target", "dyadic", "cert_K"},
                    "problem", problems)
        modes = _need(doc, "modes", "problem", problems)
        if modes is not None:
            for i, entry in enumerate(modes):
                _check_keys(entry, {"target", "k", "l", "amplitude"},
                            f"problem.modes[{i}]", problems)
                if entry.get("target") not in ("f", "g"):
                    problems.append(
                        f"range-violation: problem.modes[{i}].target "
                        "must be 'f' or 'g'"
                    )
        out.setdefault("target", 1e-12)
        out.setdefault("dyadic", True)
        out.setdefault("cert_K", 16)
    elif mode == "twist-sim":
        _check_keys(doc, {"delta", "twist_coeffs", "r", "a_modes", "b_modes",
                          "amplitude", "y0_values", "n_iter", "x0"},
                    "problem", problems)
        out.setdefault("delta", 1.0)
        out.setdefault("twist_coeffs", [0.0, 1.0])
        out.setdefault("r", 1.0)
        out.setdefault("a_modes", [])
        out.setdefault("b_modes", [])
        out.setdefault("amplitude", 0.0)
        out.setdefault("x0", 0.0)
        y0 = _need(doc, "y0_values", "problem", problems)
        n_iter = _need(doc, "n_iter", "problem", problems)
        if n_iter is not None and int(n_iter) < 1:
            problems.append("range-violation: problem.n_iter must be >= 1")
        if not 0 < float(out["delta"]) <= 1:
            problems.append("range-violation: problem.delta must lie in (0, 1]")
        del y0
    elif mode == "appl-run":
        _check_keys(doc, {"phi", "f_damp", "g_nl", "forcing", "amplitude",
                          "n_periods", "rtol", "r_ceiling", "sigma", "cert_K",
                          "chain_lambdas", "method", "n_sub"},
                    "problem", problems)
        for key in ("phi", "f_damp", "g_nl"):
            fn = _need(doc, key, "problem", problems)
            if fn is not None:
                _check_keys(fn, {"name", "scale"}, f"problem.{key}", problems)
        forcing = _need(doc, "forcing", "problem", problems)
        if forcing is not None:
            _check_keys(forcing, {"modes"}, "problem.forcing", problems)
        out.setdefault("amplitude", 50.0)
        out.setdefault("n_periods", 1000)
        out.setdefault("rtol", 1e-10)
        out.setdefault("r_ceiling", 1e6)
        out.setdefault("cert_K", 20)
        out.setdefault("method", "DOP853")
        out.setdefault("n_sub", 256)
        if out["method"] not in ("DOP853", "RK45", "rk4"):
            problems.append(
                f"range-violation: problem.method {out['method']!r}")
        if "sigma" in doc and m is not None and float(doc["sigma"]) <= m:
            problems.append(
                f"range-violation: problem.sigma = {doc['sigma']} "
                f"must exceed m = {m}"
            )
    return out


def resolve_config(doc, mode=None):
    """Validate a raw config document; returns the resolved config.

    Raises ConfigError carrying the full list of validation problems.
    """
    problems = []
    if not isinstance(doc, dict):
        raise ConfigError(["config document must be a JSON object"])
    _check_keys(doc, {"mode", "frequency", "truncation", "schedule",
                      "problem", "output", "seed"}, "config", problems)
    doc_mode = doc.get("mode", mode)
    if doc_mode is None:
        problems.append("missing-field: config.mode")
    elif doc_mode not in MODES:
        problems.append(f"range-violation: config.mode {doc_mode!r}")
    elif mode is not None and doc_mode != mode:
        problems.append(
            f"range-violation: config.mode {doc_mode!r} does not match "
            f"the {mode!r} subcommand"
        )
    resolved = {"mode": doc_mode}

    freq = doc.get("frequency")
    if doc_mode in ("dioph", "kam-run", "twist-sim", "appl-run"):
        if freq is None:
            problems.append("missing-field: config.frequency")
        else:
            resolved["frequency"] = _resolve_frequency(freq, doc_mode, problems)
    elif freq is not None:
        problems.append("unknown-key: config.frequency (not used by this mode)")

    m = None
    if "frequency" in resolved:
        vec = resolved["frequency"].get("omega",
                                        resolved["frequency"].get("mu"))
        m = len(vec) if vec else None

    if doc_mode == "kam-run":
        resolved["truncation"] = _resolve_truncation(
            doc.get("truncation", {}), problems)
        if "schedule" not in doc:
            problems.append("missing-field: config.schedule")
        else:
            resolved["schedule"] = _resolve_schedule(doc["schedule"], m,
                                                     problems)
    else:
        for block in ("truncation", "schedule"):
            if block in doc:
                problems.append(
                    f"unknown-key: config.{block} (not used by this mode)")

    if "problem" not in doc:
        problems.append("missing-field: config.problem")
    else:
        resolved["problem"] = _resolve_problem(doc["problem"], doc_mode, m,
                                               problems)

    output = dict(doc.get("output", {}))
    _check_keys(output, {"directory", "formats"}, "output", problems)
    output.setdefault("directory", "out")
    output.setdefault("formats", ["csv", "json"])
    for fmt in output["formats"]:
        if fmt not in ("csv", "json", "plot"):
            problems.append(f"range-violation: output.formats entry {fmt!r}")
    resolved["output"] = output
    resolved["seed"] = int(doc.get("seed", 0))

    if problems:
        raise ConfigError(problems)
    return resolved


def parse_config(path, mode=None):
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"missing-field: config file {path} does not exist"])
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config file is not valid JSON: {exc}"]) from exc
    return resolve_config(doc, mode=mode)


# -- output helpers ----------------------------------------------------------


def _atomic_write(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_text(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def _fmt(value):
    """repr of the plain float value, stable across numpy scalar types."""
    return repr(float(value))


# -- mode runners ------------------------------------------------------------


def _run_dioph(cfg):
    fr = cfg["frequency"]
    freq = FrequencyData(tuple(fr["omega"]), fr["gamma"])
    prob = cfg["problem"]
    rows = []
    cert = certify(freq, prob["sigma"], prob["K_max"],
                   scan_csv=lambda r, w, c: rows.append((r, _fmt(w), _fmt(c))))
    summary = {"certificate": cert.to_dict()}
    if prob["nu_values"]:
        summary["divisor_sums"] = [
            {"nu": int(nu),
             "sum": divisor_sum(freq, int(nu)),
             "bound": divisor_sum_bound(cert, freq.m, int(nu))}
            for nu in prob["nu_values"]
        ]
    return rows, summary, None


def _run_smooth_demo(cfg):
    prob = cfg["problem"]
    rows, slopes = [], {}
    for p in prob["p_test"]:
        slope, table = error_decay_probe(p, prob["deltas"])
        slopes[repr(float(p))] = slope
        rows.extend((_fmt(p), _fmt(d), _fmt(e)) for d, e in table)
    return rows, {"slopes": slopes}, None


def _build_kam_inputs(cfg):
    fr = cfg["frequency"]
    freq = FrequencyData(tuple(fr["omega"]), fr["gamma"])
    tr = cfg["truncation"]
    kw = dict(K_max=tr["K_max"], L_max=tr["L_max"], D_y=tr["D_y"], r=tr["r"])
    f = QPSeries.zero(freq, parity=EVEN, **kw)
    g = QPSeries.zero(freq, parity=ODD, **kw)
    for entry in cfg["problem"]["modes"]:
        k, l, amp = tuple(entry["k"]), int(entry["l"]), float(entry["amplitude"])
        if entry["target"] == "f":
            f = f + QPSeries.cosine(freq, k, l, amp, **kw)
        else:
            g = g + QPSeries.sine(freq, k, l, amp, **kw)
    return freq, PerturbationPair(f, g)


def _run_kam(cfg):
    freq, pert = _build_kam_inputs(cfg)
    sc = cfg["schedule"]
    sched = schedule(sc["epsilon"], sc["mu"], freq.m, sc["n_max"])
    cert = certify(freq, sched.sigma, cfg["problem"]["cert_K"])
    curve, diag = run(pert, freq, cert, sched,
                      target=cfg["problem"]["target"],
                      dyadic=cfg["problem"]["dyadic"])
    rows = [
        (rec["n"], _fmt(rec["f_hat"]), _fmt(rec["g_hat"]),
         _fmt(rec["u"]), _fmt(rec["v"]),
         _fmt(rec["f_bar_next_sup"]), _fmt(rec["g_bar_next_sup"]))
        for rec in diag["norm_history"]
    ]
    summary = {
        "steps": diag["steps"],
        "deviation": diag["deviation"],
        "schedule": diag["schedule"],
        "certificate": cert.to_dict(),
        "final_norms": {
            "f": diag["norm_history"][-1]["f_bar_next_sup"],
            "g": diag["norm_history"][-1]["g_bar_next_sup"],
        },
        "curve": {"dev_x": curve.dev_x.to_json_dict(),
                  "dev_y": curve.dev_y.to_json_dict()},
    }
    return rows, summary, None


def _build_map(cfg):
    fr = cfg["frequency"]
    freq = FrequencyData(tuple(fr["omega"]), fr["gamma"])
    prob = cfg["problem"]
    r = float(prob["r"])
    h = YPoly(np.asarray(prob["twist_coeffs"], dtype=float), r)
    amp = float(prob["amplitude"])
    kw = dict(K_max=16, L_max=0, D_y=2, r=r)
    a = QPSeries.zero(freq, parity=ODD, **kw)
    b = QPSeries.zero(freq, parity=EVEN, **kw)
    for entry in prob["a_modes"]:
        a = a + QPSeries.sine(freq, tuple(entry["k"]), 0,
                              amp * float(entry.get("weight", 1.0)), **kw)
    for entry in prob["b_modes"]:
        b = b + QPSeries.cosine(freq, tuple(entry["k"]), 0,
                                amp * float(entry.get("weight", 1.0)), **kw)
    conj_a = a if a.terms else None
    conj_b = b if b.terms else None
    return freq, ReversibleMapSpec(
        freq=freq, twist=h, delta=float(prob["delta"]),
        conj_a=conj_a, conj_b=conj_b, y_ceiling=2.0 * r,
    )


def _run_twist_sim(cfg, threads=1):
    _, spec = _build_map(cfg)
    prob = cfg["problem"]
    n_iter = int(prob["n_iter"])
    x0 = float(prob["x0"])

    def one(item):
        idx, y0 = item
        z0 = spec._conj(x0, float(y0))
        rec = iterate_map(spec, (float(z0[0]), float(z0[1])), n_iter)
        try:
            rot, err = rotation_number(rec)
        except InsufficientData:
            rot, err = float("nan"), float("nan")
        lo, hi = rec.bounds
        return (idx, _fmt(y0), _fmt(rot), _fmt(err),
                _fmt(lo), _fmt(hi), int(rec.escaped))

    items = list(enumerate(prob["y0_values"]))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, items))
    else:
        rows = [one(it) for it in items]
    summary = {
        "n_orbits": len(rows),
        "reversibility_residual": spec.reversibility_residual(),
    }
    return rows, summary, ("rotation_scan", rows)


def _build_oscillator(cfg):
    fr = cfg["frequency"]
    prob = cfg["problem"]
    forcing = Forcing.cosines(
        tuple(fr["mu"]),
        {tuple(entry["k"]): float(entry["amp"])
         for entry in prob["forcing"]["modes"]},
    )
    return OscillatorSpec(
        omega0=fr["omega0"],
        phi=scalar_fn(prob["phi"]["name"], prob["phi"].get("scale", 1.0)),
        f_damp=scalar_fn(prob["f_damp"]["name"],
                         prob["f_damp"].get("scale", 1.0)),
        g_nl=scalar_fn(prob["g_nl"]["name"], prob["g_nl"].get("scale", 1.0)),
        p_force=forcing,
        r_ceiling=float(prob["r_ceiling"]),
    )


def _run_appl(cfg):
    spec = _build_oscillator(cfg)
    prob = cfg["problem"]
    amp = float(prob["amplitude"])
    rec = oscillator_poincare(spec, (amp, 0.0), int(prob["n_periods"]),
                              rtol=float(prob["rtol"]),
                              atol=float(prob["rtol"]),
                              method=prob["method"], n_sub=int(prob["n_sub"]))
    lo, hi = rec.bounds
    rows = [(0, _fmt(amp), "nan", "nan", _fmt(lo), _fmt(hi),
             int(rec.escaped))]
    summary = {
        "twist_coefficient": twist_coefficient(spec),
        "sections": rec.iterations,
        "action_bounds": [lo, hi],
        "bounds_ratio": hi / lo if lo > 0 else float("inf"),
        "escaped": rec.escaped,
    }
    if prob.get("chain_lambdas"):
        mu_freq = FrequencyData(spec.p_force.mu, 1.0 / spec.omega0)
        sigma = float(prob.get("sigma", len(spec.p_force.mu) + 0.01))
        cert = certify(mu_freq, sigma, int(prob["cert_K"]))
        _, chain = action_angle_chain(
            spec, lambdas=prob["chain_lambdas"], cert=cert)
        summary["chain"] = chain
    return rows, summary, None


# -- orchestration -----------------------------------------------------------


def run_experiment(cfg, out_dir, emit_csv=True, emit_json=True,
                   emit_plot=False, threads=1):
    mode = cfg["mode"]
    t0 = time.perf_counter()
    if mode == "dioph":
        rows, summary, plot_data = _run_dioph(cfg)
    elif mode == "smooth-demo":
        rows, summary, plot_data = _run_smooth_demo(cfg)
    elif mode == "kam-run":
        rows, summary, plot_data = _run_kam(cfg)
    elif mode == "twist-sim":
        rows, summary, plot_data = _run_twist_sim(cfg, threads=threads)
    elif mode == "appl-run":
        rows, summary, plot_data = _run_appl(cfg)
    else:
        raise ConfigError([f"range-violation: config.mode {mode!r}"])
    wall = time.perf_counter() - t0

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "config": cfg,
        "mode": mode,
        "summary": summary,
        "n_records": len(rows),
        "version": __version__,
    }
    _atomic_write(out_dir / "resolved_config.json", _json_text(cfg))
    if emit_json:
        _atomic_write(out_dir / "report.json", _json_text(report))
    if emit_csv:
        _atomic_write(out_dir / "results.csv",
                      _csv_text(CSV_COLUMNS[mode], rows))
    if emit_plot:
        _emit_plot(out_dir, mode, rows, plot_data)
    # wall clock goes to the log only: output files stay run-independent
    report["wall_clock"] = wall
    return report


def _emit_plot(out_dir, mode, rows, plot_data):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    if mode == "twist-sim" and plot_data is not None:
        _, data = plot_data
        y0 = [float(r[1]) for r in data]
        rot = [float(r[2]) for r in data]
        ax.plot(y0, rot, "o-", ms=3)
        ax.set_xlabel("y0")
        ax.set_ylabel("rotation number")
    elif rows:
        xs = [float(r[0]) for r in rows]
        ys = [float(r[-2]) for r in rows]
        ax.plot(xs, ys, ".-")
        ax.set_xlabel(CSV_COLUMNS[mode][0])
        ax.set_ylabel(CSV_COLUMNS[mode][-2])
    ax.set_title(mode)
    fig.tight_layout()
    fig.savefig(out_dir / "plot.svg", format="svg")
    plt.close(fig)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qpkam",
        description="numerical laboratory for reversible quasi-periodic "
                    "invariant curves",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="mode")
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--csv", action="store_true")
        p.add_argument("--json", action="store_true")
        p.add_argument("--plot", action="store_true")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.mode is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        cfg = parse_config(args.config, mode=args.mode)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 1
    out_dir = args.out or cfg["output"]["directory"]
    formats = cfg["output"]["formats"]
    explicit = args.csv or args.json or args.plot
    emit_csv = args.csv if explicit else "csv" in formats
    emit_json = args.json if explicit else "json" in formats
    emit_plot = args.plot if explicit else "plot" in formats
    try:
        report = run_experiment(cfg, out_dir, emit_csv=emit_csv,
                                emit_json=emit_json, emit_plot=emit_plot,
                                threads=args.threads)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 1
    except QpkamError as exc:
        print(f"scientific failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 2
    print(f"{args.mode}: {report['n_records']} records -> {out_dir} "
          f"({report['wall_clock']:.2f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
