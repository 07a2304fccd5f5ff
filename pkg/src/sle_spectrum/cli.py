"""Command-line front end.

Exit codes:
    0  success
    1  a statistical validation ran and failed
    2  invalid input or unsupported point for the command
    3  sub-solution construction failed
    4  I/O error (the offending path is reported)

Settings are resolved in this order, later wins: built-in defaults, the
key=value file given with --config, the SLE_SPECTRUM_SEED environment
variable (seed only), command-line flags.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from . import montecarlo as mc
from .operator import (
    ConstructionFailed, InadmissibleProfile, exponent_of, supersolution_feasibility,
    choose_subsolution,
)
from .phase import (
    MFoldTransform, Phase, Unclassifiable, Validity, Zone, blue_quartic_point,
    classify_conjecture, classify_validity, conjectured_beta, green_point, m_fold_beta,
    partition_EIE, proof_zone, red_green_intersections, red_point, transition_lines,
)
from .special import (
    AmbiguousCase, HypergeometricError, NotRepresentable, boundary_residual,
    build_test_profile, eval_g0,
)
from .spectrum import InvalidKappa, MomentPoint, check_kappa, gamma_roots, landmarks, spectrum_functions

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_CONSTRUCTION, EXIT_IO = 0, 1, 2, 3, 4
SEED_ENV = "SLE_SPECTRUM_SEED"
MAX_GRID = 4096


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = ""
    kappa: float = 2.0
    p: Optional[float] = None
    q: Optional[float] = None
    m: Optional[int] = None
    gamma: Optional[str] = None        # one value, or a comma list for validate-red
    z: Optional[str] = None            # comma list of complex numbers
    seed: int = 0
    dt: float = 1e-3
    horizon: float = 30.0
    tol: float = 1e-6
    workers: int = 1
    samples: Optional[int] = None
    grid: Optional[int] = None
    radii: Optional[str] = None
    angles: int = 64
    p_min: float = -4.0
    p_max: float = 3.0
    q_min: float = -10.0
    q_max: float = 4.0
    color_by: str = "phase"            # phase | validity
    r0: float = 0.9
    eta_min: float = 1e-5
    n_r: int = 512
    n_theta: int = 512
    delta: float = 1.0
    supersolution: bool = False
    out: Optional[str] = None

    def header(self) -> str:
        return "".join(f"# {f.name}={getattr(self, f.name)}\n" for f in fields(self))

    def point(self) -> MomentPoint:
        if self.p is None or self.q is None:
            raise UsageError(f"command {self.command!r} needs both --p and --q")
        return MomentPoint(self.p, self.q)

    def sim(self) -> mc.SimConfig:
        try:
            return mc.SimConfig(dt=self.dt, t_cap=self.horizon, tol=self.tol, workers=self.workers)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc


_CASTS = {"kappa": float, "p": float, "q": float, "m": int, "seed": int, "dt": float,
          "horizon": float, "tol": float, "workers": int, "samples": int, "grid": int,
          "angles": int, "p_min": float, "p_max": float, "q_min": float, "q_max": float,
          "r0": float, "eta_min": float, "n_r": int, "n_theta": int, "delta": float,
          "supersolution": lambda s: s.strip().lower() in ("1", "true", "yes")}


def _cast(key, value):
    try:
        return _CASTS.get(key, str)(value)
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {value!r}") from exc


def read_config(path) -> dict:
    """Flat key=value file; '#' starts a comment."""
    known = {f.name for f in fields(RunConfig)}
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in known or key == "command":
                raise UsageError(f"{path}:{n}: unknown key {key!r}")
            out[key] = _cast(key, value)
    return out


def resolve_config(args: argparse.Namespace, env=None) -> RunConfig:
    env = os.environ if env is None else env
    cfg = RunConfig(command=args.command)
    if args.config:
        try:
            cfg = replace(cfg, **read_config(args.config))
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc.strerror}") from exc
    if env.get(SEED_ENV):
        cfg.seed = _cast("seed", env[SEED_ENV])
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if f.name != "command" and v is not None:
            setattr(cfg, f.name, v)
    try:
        check_kappa(cfg.kappa)
    except InvalidKappa as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def parse_complex_list(text: str) -> list:
    try:
        return [complex(s.strip().replace(" ", "")) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse complex list {text!r}") from exc


def parse_float_list(text: str) -> list:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse number list {text!r}") from exc


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return f"{float(v):.17g}"
    try:
        return f"{float(v):.17g}"
    except (TypeError, ValueError):
        return str(v)


def read_csv(text: str) -> list:
    """Rows of a CLI CSV as lists of strings; '#' lines are skipped."""
    rows = [ln.split(",") for ln in text.splitlines() if ln and not ln.startswith("#")]
    return rows


def emit(cfg: RunConfig, text: str, default_name: Optional[str] = None):
    path = cfg.out or default_name
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    print(f"wrote {path}")


# -- commands -------------------------------------------------------------------------

def cmd_spectrum(cfg: RunConfig) -> int:
    pt = cfg.point()
    k = cfg.kappa
    r = gamma_roots(k, pt)
    sb = spectrum_functions(k, pt)
    rows = [("gamma_0", r.gamma_0), ("gamma_0_plus", r.gamma_0_plus), ("gamma_1_minus", r.gamma_1_minus),
            ("gamma_1", r.gamma_1), ("gamma_lin", r.gamma_lin),
            ("beta_tip", sb.beta_tip), ("beta_0", sb.beta_0), ("beta_1", sb.beta_1), ("beta_lin", sb.beta_lin)]
    try:
        rows.append(("phase", classify_conjecture(k, pt).value))
        rows.append(("beta", conjectured_beta(k, pt)))
    except Unclassifiable as exc:
        rows.append(("phase", f"Unclassifiable: {exc}"))
    rows.append(("validity", classify_validity(k, pt).value))
    if cfg.m is not None:
        try:
            rows.append(("m", cfg.m))
            rows.append(("beta_1_mfold", m_fold_beta(k, cfg.m, pt)))
        except ValueError as exc:
            raise UsageError(f"m-fold spectrum: {exc}") from exc
    text = "quantity,value\n" + "".join(f"{a},{fmt(b)}\n" for a, b in rows)
    emit(cfg, text)
    return EXIT_OK


def cmd_phase(cfg: RunConfig) -> int:
    pt = cfg.point()
    k = cfg.kappa
    try:
        phase = classify_conjecture(k, pt).value
    except Unclassifiable as exc:
        raise UsageError(str(exc)) from exc
    rows = [("phase", phase), ("validity", classify_validity(k, pt).value),
            ("partition", partition_EIE(k, pt)), ("zone", proof_zone(k, pt).value)]
    if cfg.m is not None:
        img = MFoldTransform(cfg.m).forward(pt)
        rows.append(("mfold_q", img.q))
        rows.append(("mfold_phase", classify_conjecture(k, img).value))
    emit(cfg, "quantity,value\n" + "".join(f"{a},{fmt(b)}\n" for a, b in rows))
    return EXIT_OK


PHASE_COLORS = {"Tip": "#f2d7ee", "Bulk": "#d6eaf8", "Linear": "#fdebd0", "One": "#d5f5e3"}
VALIDITY_COLORS = {
    "ProvedDHLZ_I": "#aed6f1", "ProvedDHLZ_II": "#f9e79f", "ProvedDHLZ_III": "#a9dfbf",
    "ProvedDHLZ_IV": "#76d7c4", "ProvedNew": "#f1948a", "UpperBoundOnly": "#d7bde2",
    "LowerBoundOnly": "#fad7a0", "Unknown": "#e5e7e9",
}
CURVE_COLORS = {"Red": "#c0392b", "Green": "#1e8449", "BlueQuartic": "#2e4fd1"}


def diagram_data(cfg: RunConfig) -> dict:
    """Raster labels, curve samples and landmarks for the phase or validity map."""
    k = float(cfg.kappa)
    n = cfg.grid or 120
    if not (2 <= n <= MAX_GRID):
        raise UsageError(f"grid must lie in [2, {MAX_GRID}], got {n}")
    if not (cfg.p_max > cfg.p_min and cfg.q_max > cfg.q_min):
        raise UsageError("empty window: need p_min < p_max and q_min < q_max")
    if cfg.color_by not in ("phase", "validity"):
        raise UsageError("color_by must be 'phase' or 'validity'")
    tm = MFoldTransform(cfg.m) if cfg.m is not None else None
    dp = (cfg.p_max - cfg.p_min) / n
    dq = (cfg.q_max - cfg.q_min) / n
    cells = []
    for i in range(n):
        q = cfg.q_min + (i + 0.5) * dq
        for j in range(n):
            p = cfg.p_min + (j + 0.5) * dp
            pt = MomentPoint(p, q)
            if tm is not None:
                pt = tm.forward(pt)
            try:
                lab = (classify_conjecture(k, pt).value if cfg.color_by == "phase"
                       else classify_validity(k, pt).value)
            except Unclassifiable:
                lab = "Unclassifiable"
            cells.append((p, q, lab))
    curves = {"Red": [], "Green": [], "BlueQuartic": []}
    lo, hi, ns = 1 / k - 6.0, 2 / k + 6.5, 400
    for s in range(ns):
        g = lo + (hi - lo) * s / (ns - 1)
        curves["Red"].append((g, red_point(k, g)))
        curves["Green"].append((g - 0.5, green_point(k, g - 0.5)))
        curves["BlueQuartic"].append((g, blue_quartic_point(k, g, check=False)))
    if tm is not None:
        curves = {name: [(g, _inv(tm, c)) for g, c in pts] for name, pts in curves.items()}
    lm = landmarks(k)
    p0, p1 = red_green_intersections(k)
    marks = {"P0": (p0.p, p0.q), "P1": (p1.p, p1.q), "Q0": lm.q_prime_0_point, "Q0'": lm.q0_prime_point}
    if tm is not None:
        marks = {name: _inv_xy(tm, xy) for name, xy in marks.items()}
    lines = {name: ln for name, ln in transition_lines(k).items() if name in ("D'_0", "D_0", "D_1")}
    return {"cells": cells, "curves": curves, "marks": marks, "lines": lines, "n": n, "tm": tm}


def _inv(tm, c):
    return type(c)(c.gamma, c.p, (1 - tm.m) * c.p + tm.m * c.q, c.curve)


def _inv_xy(tm, xy):
    p, q = float(xy[0]), float(xy[1])
    return (p, (1 - tm.m) * p + tm.m * q)


def diagram_csv(data) -> str:
    out = ["kind,name,p,q,value"]
    for p, q, lab in data["cells"]:
        out.append(f"cell,,{p:.17g},{q:.17g},{lab}")
    for name, pts in data["curves"].items():
        for g, c in pts:
            out.append(f"curve,{name},{float(c.p):.17g},{float(c.q):.17g},{float(g):.17g}")
    for name, (p, q) in data["marks"].items():
        out.append(f"landmark,{name},{float(p):.17g},{float(q):.17g},")
    return "\n".join(out) + "\n"


def diagram_svg(cfg: RunConfig, data) -> str:
    W = H = 640
    pad = 40

    def X(p):
        return pad + (p - cfg.p_min) / (cfg.p_max - cfg.p_min) * (W - 2 * pad)

    def Y(q):
        return H - pad - (q - cfg.q_min) / (cfg.q_max - cfg.q_min) * (H - 2 * pad)

    colors = PHASE_COLORS if cfg.color_by == "phase" else VALIDITY_COLORS
    n = data["n"]
    cw = (W - 2 * pad) / n
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>']
    for p, q, lab in data["cells"]:
        out.append(f'<rect x="{X(p) - cw / 2:.2f}" y="{Y(q) - cw / 2:.2f}" width="{cw:.2f}" '
                   f'height="{cw:.2f}" fill="{colors.get(lab, "#ffffff")}" stroke="none"/>')
    out.append(f'<clipPath id="win"><rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}"/></clipPath>')
    out.append('<g clip-path="url(#win)" fill="none" stroke-width="1.6">')
    for name, pts in data["curves"].items():
        d = " ".join(("M" if i == 0 else "L") + f"{X(float(c.p)):.2f},{Y(float(c.q)):.2f}"
                     for i, (_, c) in enumerate(pts))
        out.append(f'<path d="{d}" stroke="{CURVE_COLORS[name]}"/>')
    tm = data["tm"]
    for name, ln in data["lines"].items():
        if ln.kind == "vertical":
            a, b = (float(ln.value), cfg.q_min), (float(ln.value), cfg.q_max)
        else:
            a = (cfg.p_min, cfg.p_min + float(ln.value))
            b = (cfg.p_max, cfg.p_max + float(ln.value))
        if tm is not None:
            a, b = _inv_xy(tm, a), _inv_xy(tm, b)
        out.append(f'<path d="M{X(a[0]):.2f},{Y(a[1]):.2f} L{X(b[0]):.2f},{Y(b[1]):.2f}" '
                   f'stroke="#555555" stroke-dasharray="5,4"/>')
    out.append("</g>")
    for name, (p, q) in data["marks"].items():
        x, y = X(float(p)), Y(float(q))
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3.5" fill="black"/>')
        out.append(f'<text x="{x + 5:.2f}" y="{y - 5:.2f}" font-family="sans-serif" font-size="12">{name}</text>')
    out.append(f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}" fill="none" stroke="black"/>')
    out.append(f'<text x="{W / 2:.0f}" y="{H - 10}" font-family="sans-serif" font-size="13" text-anchor="middle">p</text>')
    out.append(f'<text x="12" y="{H / 2:.0f}" font-family="sans-serif" font-size="13">q</text>')
    title = f"kappa={cfg.kappa:g}" + (f", m={cfg.m}" if cfg.m is not None else "") + f", colored by {cfg.color_by}"
    out.append(f'<text x="{pad}" y="24" font-family="sans-serif" font-size="13">{title}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_diagram(cfg: RunConfig) -> int:
    data = diagram_data(cfg)
    svg_path = cfg.out or "diagram.svg"
    stem = svg_path[:-4] if svg_path.endswith(".svg") else svg_path
    for path, text in ((svg_path, diagram_svg(cfg, data)), (stem + ".csv", diagram_csv(data))):
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from exc
        print(f"wrote {path}")
    return EXIT_OK


def cmd_testfn(cfg: RunConfig) -> int:
    pt = cfg.point()
    if cfg.gamma is None:
        g = gamma_roots(cfg.kappa, pt).gamma_1
        if g is None:
            raise UsageError("no gamma given and gamma_1 does not exist at this point")
    else:
        g = _cast("p", cfg.gamma)
    try:
        prof = build_test_profile(cfg.kappa, pt, g)
    except (NotRepresentable, AmbiguousCase, HypergeometricError) as exc:
        raise UsageError(f"no standard test function at gamma={g}: {exc}") from exc
    n = cfg.grid or 16
    lines = [prof.to_text().rstrip("\n"),
             f"boundary_residual_max,{fmt(max(abs(boundary_residual(prof, 4.0 * (i + 1) / (n + 1))) for i in range(n)))}",
             "u,g0"]
    for i in range(n + 1):
        u = 4.0 * (i + 1) / (n + 1) if i < n else 4.0
        lines.append(f"{u:.17g},{eval_g0(prof, u)[0]:.17g}")
    emit(cfg, cfg.header() + "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    pt = cfg.point()
    k = cfg.kappa
    if cfg.supersolution:
        feas = supersolution_feasibility(k, pt)
        text = "quantity,value\n" + f"supersolution,{'Feasible' if feas.feasible else 'Infeasible'}\n"
        if feas.feasible:
            text += f"gamma_low,{fmt(feas.interval[0])}\ngamma_high,{fmt(feas.interval[1])}\n"
        emit(cfg, text)
        return EXIT_OK
    zone = proof_zone(k, pt)
    if zone is Zone.Outside:
        raise UsageError(f"point ({cfg.p}, {cfg.q}) lies outside the four proof zones")
    scan = dict(r0=cfg.r0, eta_min=cfg.eta_min, n_r=cfg.n_r, n_theta=cfg.n_theta, workers=cfg.workers)
    try:
        fn, rep = choose_subsolution(k, pt, delta=cfg.delta, scan=scan)
    except (ConstructionFailed, InadmissibleProfile, NotRepresentable, AmbiguousCase) as exc:
        print(f"construction failed: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    from .operator import verify_sign
    full = verify_sign(fn, keep_values=cfg.out is not None, **scan)
    head = (cfg.header() + f"# zone={zone.value}\n# gamma={fn.base.psi0.gamma:.17g}\n"
            f"# delta={fn.delta:.17g}\n# exponent={exponent_of(fn):.17g}\n")
    if cfg.out is not None:
        emit(cfg, head + full.to_csv())
    else:
        sys.stdout.write(head + f"# verdict={full.verdict} min={full.vmin:.17g} max={full.vmax:.17g}\n")
    return EXIT_OK if full.verdict == "StrictlyNegative" else EXIT_CONSTRUCTION


def cmd_simulate(cfg: RunConfig) -> int:
    pt = cfg.point()
    sim = cfg.sim()
    zs = parse_complex_list(cfg.z or "0.5")
    n = cfg.samples or 2000
    try:
        est = mc.estimate_moments(cfg.kappa, [pt], zs, n, cfg.seed, sim)[0]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    except mc.FailureBudgetExceeded as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    emit(cfg, cfg.header() + mc.MOMENT_HEADER + "\n" + "".join(e.to_row() + "\n" for e in est))
    return EXIT_OK


def default_radii():
    return [1 - 2.0 ** -k for k in range(2, 8)]


def cmd_fit(cfg: RunConfig) -> int:
    pt = cfg.point()
    sim = cfg.sim()
    radii = parse_float_list(cfg.radii) if cfg.radii else default_radii()
    try:
        fit = mc.fit_beta(cfg.kappa, pt, radii, cfg.samples or 500, cfg.grid or cfg.angles,
                          cfg.seed, sim)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    except (mc.InsufficientSignal, mc.FailureBudgetExceeded) as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    emit(cfg, cfg.header() + fit.to_csv())
    return EXIT_OK


def cmd_validate_red(cfg: RunConfig) -> int:
    sim = cfg.sim()
    gammas = parse_float_list(cfg.gamma) if cfg.gamma else [0.25, 0.5]
    zs = parse_complex_list(cfg.z) if cfg.z else list(mc.DEFAULT_RED_Z)
    try:
        rep = mc.validate_red_parabola(cfg.kappa, gammas, zs, cfg.samples or 20000, cfg.seed, sim)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    except mc.FailureBudgetExceeded as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    emit(cfg, cfg.header() + f"# pass_fraction={rep.pass_fraction:.17g}\n" + rep.to_csv())
    return EXIT_OK if rep.passed else EXIT_FAILED


COMMANDS = {
    "spectrum": cmd_spectrum, "phase": cmd_phase, "diagram": cmd_diagram, "testfn": cmd_testfn,
    "verify": cmd_verify, "simulate": cmd_simulate, "fit-beta": cmd_fit, "validate-red": cmd_validate_red,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sle-spectrum", description=__doc__.splitlines()[0],
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--kappa", type=float)
    ap.add_argument("--p", type=float)
    ap.add_argument("--q", type=float)
    ap.add_argument("--m", type=int)
    ap.add_argument("--gamma", help="exponent (testfn) or comma list (validate-red)")
    ap.add_argument("--z", help="comma list of disk points, e.g. 0.5,0.1+0.2j")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--dt", type=float)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--config", help="key=value settings file")
    ap.add_argument("--out", help="output path (stdout when omitted)")
    ap.add_argument("--grid", type=int, help="raster size / angle count / table size")
    ap.add_argument("--radii", help="comma list of radii for fit-beta")
    ap.add_argument("--samples", type=int)
    ap.add_argument("--supersolution", action="store_true", default=None,
                    help="verify: report supersolution feasibility instead")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidKappa, Unclassifiable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
