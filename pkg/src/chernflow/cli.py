"""Command-line interface: ``chernflow {homogeneous,torus,check,examples}``."""

from __future__ import annotations

import argparse
import io
import logging
import math
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__, checks, homogeneous as hom, torus
from .fiber import LieAlgebraModel, ModelValidationError
from .registry import (
    EXAMPLES,
    REGISTRY,
    ModelFileError,
    TorusModel,
    dump_examples,
    load_model,
    model_from_dict,
    model_hash,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_HORIZON = 4

log = logging.getLogger("chernflow")


def fmt(x) -> str:
    """Shortest round-trip representation."""
    x = float(x) + 0.0  # no negative zeros in output
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _resolve_model(spec: str, allow_non_lie: bool):
    """A path to a model file, or the name of a registry example."""
    path = Path(spec)
    if not path.exists() and spec in REGISTRY:
        ex = REGISTRY[spec]
        doc = dict(ex.doc, name=spec)
        return model_from_dict(doc, allow_non_lie=allow_non_lie), doc
    return load_model(path, allow_non_lie=allow_non_lie)


def _header(doc) -> list[str]:
    return [f"#version {__version__}", f"#model-hash {model_hash(doc)}"]


def _open_out(path):
    if path is None or path == "-":
        return nullcontext(sys.stdout)
    return open(path, "w", newline="")


# -- homogeneous ---------------------------------------------------------------------


def homogeneous_csv(model: LieAlgebraModel, doc, t_end=None, samples=101, normalized=False, crosscheck=False, tol=1e-10):
    """CSV text for a sampled flow curve; raises HorizonError / ArithmeticError."""
    icr = hom.invariant_chern_ricci(model)
    T = hom.maximal_time(icr)
    if t_end is None:
        t_end = T - hom.horizon_guard(T) if math.isfinite(T) and not normalized else 10.0
    if t_end < 0:
        raise ValueError("--t-end must be nonnegative")
    if not normalized and math.isfinite(T) and t_end > T - hom.horizon_guard(T):
        raise hom.HorizonError(f"--t-end {t_end!r} is past the guarded horizon of T = {T!r}")
    ts = np.linspace(0.0, t_end, samples)
    curve = hom.sample_flow(icr, ts, normalized=normalized)
    d = model.dim
    iu = [(a, b) for a in range(d) for b in range(a + 1, d)]
    buf = io.StringIO()
    lines = _header(doc)
    lines.append(f"#flow {'normalized' if normalized else 'unnormalized'}")
    lines.append(f"#T {fmt(T)}")
    if crosscheck:
        dev = hom.ode_crosscheck(icr, t_end, min(1e-2, t_end / 10 if t_end > 0 else 1e-2), normalized=normalized)
        lines.append(f"#crosscheck-max-deviation {fmt(dev)}")
        if not dev <= tol:
            raise ArithmeticError(f"RK4 cross-check deviation {dev:.3g} exceeds {tol:.3g}")
    cols = ["t"] + [f"omega_{a + 1}_{b + 1}" for a, b in iu] + [f"eig_{k + 1}" for k in range(d)] + ["R"]
    lines.append(",".join(cols))
    for s in curve.samples:
        row = [s.t] + [s.omega[a, b] for a, b in iu] + list(s.eigenvalues) + [s.R]
        lines.append(",".join(fmt(v) for v in row))
    if math.isfinite(T):
        lines += ["", ""]
        lines.append("eps,t,integral_closed_form,integral_quadrature,R_times_eps")
        for r in hom.blowup_diagnostics(icr, [10.0 ** (-k) for k in range(1, 7) if 10.0 ** (-k) < T]):
            lines.append(",".join(fmt(v) for v in (r.eps, T - r.eps, r.integral, r.integral_quad, r.r_times_eps)))
    buf.write("\n".join(lines) + "\n")
    return buf.getvalue()


def cmd_homogeneous(args) -> int:
    model, doc = _resolve_model(args.model, args.allow_non_lie)
    if not isinstance(model, LieAlgebraModel):
        raise ModelFileError("homogeneous needs a lie_algebra model")
    text = homogeneous_csv(
        model,
        doc,
        t_end=args.t_end,
        samples=args.samples,
        normalized=args.normalized,
        crosscheck=args.crosscheck,
        tol=args.tol if args.tol is not None else 1e-10,
    )
    with _open_out(args.out) as fh:
        fh.write(text)
    return EXIT_OK


# -- torus -----------------------------------------------------------------------------


def _trace_lines(trace: torus.TorusFlowTrace):
    fields = torus.MonitorRecord.FIELDS
    lines = [",".join(fields)]
    for r in trace.records:
        lines.append(",".join(fmt(v) for v in r.row()))
    return lines


def cmd_torus(args) -> int:
    model, doc = _resolve_model(args.model, False)
    if not isinstance(model, TorusModel):
        raise ModelFileError("torus needs a torus model")
    if args.n_grid is not None:
        model = model.with_resolution(args.n_grid)
        doc = dict(doc, N=args.n_grid)
    grid = model.grid
    g0 = model.initial_metric()
    cfg = torus.FlowConfig(
        t_end=math.inf if args.t_end is None else args.t_end,
        sigma=args.dt_sigma,
        tol_converge=args.tol if args.tol is not None else torus.TOL_CONVERGE,
        sample_every=args.sample_every,
    )
    if cfg.sigma <= 0 or cfg.tol_converge <= 0 or cfg.t_end <= 0:
        raise ValueError("--dt-sigma, --tol and --t-end must be positive")
    flow = torus.TorusFlow(grid, g0, cfg)
    lines = _header(doc) + [f"#grid n={grid.n} N={grid.N} sigma={fmt(cfg.sigma)}"]
    try:
        trace = flow.run()
    except torus.FlowAbort as err:
        lines += _trace_lines(err.trace)
        lines.append(f"#abort {err}")
        for t, dt, idx, lam in err.trace.rejection_log:
            lines.append(f"#rejected t={fmt(t)} dt={fmt(dt)} index={list(idx)} min_eig={fmt(lam)}")
        with _open_out(args.out) as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    b = trace.b_measured
    res = torus.stationary_residual(flow.ref, trace.phi, b)
    bounds = torus.monitor_bounds(trace)
    lines += _trace_lines(trace)
    summary = [
        f"#converged {trace.converged}",
        f"#t {fmt(trace.t)}",
        f"#steps {trace.steps}",
        f"#rejections {trace.rejections}",
        f"#b-measured {fmt(b)}",
    ]
    if grid.n == 1:
        summary.append(f"#b-volume {fmt(torus.volume_constant(flow.ref))}")
    summary += [
        f"#stationary-residual {fmt(res.monge_ampere)}",
        f"#cric-residual {fmt(res.chern_ricci)}",
        f"#sup-phi {fmt(bounds.sup_phi)}",
        f"#sup-phidot {fmt(bounds.sup_phidot)}",
        f"#volume-pinching {fmt(bounds.pinching)}",
    ]
    lines += summary
    with _open_out(args.out) as fh:
        fh.write("\n".join(lines) + "\n")
    ckpt = args.checkpoint
    if ckpt is None and args.out not in (None, "-"):
        ckpt = str(Path(args.out).with_suffix(".npz"))
    if ckpt is not None:
        torus.save_checkpoint(ckpt, trace.phi, grid, trace.t)
    if args.out not in (None, "-"):
        print(" ".join(s.lstrip("#") for s in summary))
    return EXIT_OK


# -- check / examples ----------------------------------------------------------------------


def cmd_check(args) -> int:
    if args.model is None:
        rows = checks.run_registry()
    else:
        path = Path(args.model)
        if not path.exists() and args.model in REGISTRY:
            ex = REGISTRY[args.model]
            model = model_from_dict(dict(ex.doc, name=args.model), allow_non_lie=True)
            rows = checks.check_model(model, expect_invalid=not ex.valid)
        else:
            model, _ = load_model(path, allow_non_lie=True)
            rows = checks.check_model(model)
    text = checks.format_rows(rows)
    failed = sum(not r.passed for r in rows)
    text += f"\n{len(rows) - failed}/{len(rows)} identities passed\n"
    with _open_out(args.out) as fh:
        fh.write(text)
    return EXIT_OK if failed == 0 else EXIT_FAILED


def cmd_examples(args) -> int:
    width = max(len(ex.name) for ex in EXAMPLES)
    for ex in EXAMPLES:
        flag = "" if ex.valid else " [invalid]"
        print(f"{ex.name:<{width}}  {ex.description}{flag}")
    if args.dump:
        for p in dump_examples(args.dump):
            log.info("wrote %s", p)
    return EXIT_OK


# -- entry point -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chernflow", description="Chern-Ricci flow experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("homogeneous", help="closed-form flow of a left-invariant model")
    p.add_argument("--model", required=True, help="model JSON file or registry name")
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--samples", type=int, default=101)
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--crosscheck", action="store_true", help="compare against an RK4 integration")
    p.add_argument("--allow-non-lie", action="store_true")
    p.add_argument("--tol", type=float, default=None, help="cross-check tolerance (default 1e-10)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_homogeneous)

    p = sub.add_parser("torus", help="parabolic Monge-Ampere flow on a flat torus")
    p.add_argument("--model", required=True, help="model JSON file or registry name")
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--dt-sigma", type=float, default=0.5)
    p.add_argument("--n-grid", type=int, default=None)
    p.add_argument("--tol", type=float, default=None, help="convergence tolerance on osc(phidot) (default 1e-6)")
    p.add_argument("--sample-every", type=int, default=torus.SAMPLE_EVERY)
    p.add_argument("--checkpoint", default=None, help="final-state .npz (default: next to --out)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_torus)

    p = sub.add_parser("check", help="run the identity suite")
    p.add_argument("--model", default=None, help="model JSON file or registry name (default: whole registry)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("examples", help="list the example registry")
    p.add_argument("--dump", default=None, metavar="DIR", help="write every example as a model file")
    p.set_defaults(func=cmd_examples)
    return parser


def _thread_limit():
    value = os.environ.get("CHERNFLOW_THREADS")
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(value)))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except (ModelValidationError, ModelFileError, ValueError) as err:
        if isinstance(err, hom.HorizonError):
            print(f"error: {err}", file=sys.stderr)
            return EXIT_HORIZON
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ArithmeticError, torus.FlowAbort) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
