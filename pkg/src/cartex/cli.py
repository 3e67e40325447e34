"""Command-line interface: ``cartex <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .coherence import (build_gabor_cluster, cluster_coherence, curvelet_cluster_for_band,
                        curvelet_gabor_coherence, m_set)
from .fieldio import FieldFormatError, write_field, write_png
from .filters import FilterBank
from .frames import CurveletFrame, GaborFrame, measure_frame_bounds
from .grid import GridSpec, to_spectrum
from .harness import (ConfigError, SweepConfig, band_problem, matched_size, run_scale_sweep,
                      write_report)
from .models import TextureSpec, build_cartoon, build_texture, fourier_decay_exponent
from .separation import NonConvergenceError
from .windows import angular_window, bump, radial_window

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_IO = 0, 2, 3, 4


def parse_scales(text: str) -> tuple:
    """``"4-7"`` or ``"4,5,7"`` -> tuple of ints."""
    try:
        if "-" in text:
            lo, hi = (int(v) for v in text.split("-", 1))
            return tuple(range(lo, hi + 1))
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid scale list {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration document (CLI flags override its keys)")
    p.add_argument("--seed", type=int, help="texture phase seed (default 0)")
    p.add_argument("--out-dir", help="output directory (default sweep_out)")
    p.add_argument("--scales", type=parse_scales, help="scales j, e.g. 4-7 or 4,6 (default 4-7)")
    p.add_argument("--delta", type=float, help="texture decay exponent delta (default 2)")
    p.add_argument("--grid", type=int, help="grid size N, a power of two (default 512)")
    p.add_argument("--max-iter", type=int, help="solver iteration cap (default 300)")
    p.add_argument("--texture-amplitude", help="number or 'auto' (default auto)")
    p.add_argument("--workers", type=int, help="parallel per-scale workers (default 1)")
    p.add_argument("--no-images", action="store_true", help="skip PNG renderings")
    p.add_argument("--record-timing", action="store_true", help="store wall times in the reports")
    p.add_argument("--require-convergence", action="store_true",
                   help="exit with code 3 when a scale hits the iteration cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cartex", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("frames-check", help="window partitions, frame bounds, round trips")
    _common(p)
    p.add_argument("--gabor-size", type=int, default=8, help="Gabor size s (default 8)")
    p.add_argument("--trials", type=int, default=4, help="random fields per check (default 4)")
    p = sub.add_parser("model", help="emit cartoon and texture fields (MSF1 + PNG)")
    _common(p)
    p.add_argument("--size", type=int, help="texture size s (default: matched to the first scale)")
    p = sub.add_parser("separate", help="single-scale separation")
    _common(p)
    p = sub.add_parser("sweep", help="full scale sweep")
    _common(p)
    p = sub.add_parser("coherence", help="coherence, cluster and m-set tables")
    _common(p)
    return parser


def config_from_args(args, strict: bool = True) -> SweepConfig:
    """Configuration file (or defaults) overridden by CLI flags.

    ``strict=False`` only checks the grid size (for commands that ignore
    the scale range).
    """
    cfg = SweepConfig.load(args.config) if args.config else SweepConfig()
    updates = {}
    for flag, key in (("seed", "seed"), ("out_dir", "out_dir"), ("scales", "scales"),
                      ("delta", "delta"), ("grid", "N"), ("workers", "workers")):
        v = getattr(args, flag)
        if v is not None:
            updates[key] = v
    if args.texture_amplitude is not None:
        a = args.texture_amplitude
        try:
            updates["texture_amplitude"] = a if a == "auto" else float(a)
        except ValueError:
            raise ConfigError(f"invalid texture amplitude {a!r}") from None
    if args.no_images:
        updates["write_images"] = False
    if args.record_timing:
        updates["record_timing"] = True
    if args.require_convergence:
        updates["require_convergence"] = True
    if args.max_iter is not None:
        updates["solver"] = dataclasses.replace(cfg.solver, max_iter=args.max_iter)
    cfg = dataclasses.replace(cfg, **updates)
    if strict:
        return cfg.validate()
    if cfg.N < 16 or cfg.N & (cfg.N - 1):
        raise ConfigError(f"grid size must be a power of two >= 16, got {cfg.N}")
    return cfg


def _emit(doc: dict, out_dir: Optional[str], name: str) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if out_dir:
        path = Path(out_dir)
        try:
            path.mkdir(parents=True, exist_ok=True)
            (path / name).write_text(text + "\n")
        except OSError as exc:
            raise OSError(f"cannot write {path / name}: {exc}") from exc


def cmd_frames_check(args, cfg: SweepConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    t = rng.uniform(0.0, 1.0, 10_000)
    radial = abs(radial_window(2.0 ** t) ** 2 + radial_window(2.0 ** (t - 1)) ** 2 - 1).max()
    u = rng.uniform(0.0, 1.0, 10_000)
    angular = abs(angular_window(u) ** 2 + angular_window(u - 1) ** 2 - 1).max()
    gabor_win = abs(bump(u) ** 2 + bump(u - 1) ** 2 - 1).max()
    grid = GridSpec(cfg.N)
    curv = CurveletFrame(grid)
    gabor = GaborFrame(grid, args.gabor_size)
    fb = FilterBank(grid)

    def round_trip(frame):
        worst = 0.0
        for _ in range(args.trials):
            f = rng.standard_normal(grid.shape)
            f_hat = to_spectrum(f)
            back = frame.synthesis_spectrum(frame.analysis_spectrum(f_hat))
            worst = max(worst, float(np.linalg.norm(back - f_hat) / np.linalg.norm(f_hat)))
        return worst

    fb_err = 0.0
    for _ in range(args.trials):
        f = rng.standard_normal(grid.shape)
        fb_err = max(fb_err, float(np.linalg.norm(fb.reconstruct(fb.decompose(f)) - f) / np.linalg.norm(f)))
    cA, cB = measure_frame_bounds(curv, trials=args.trials, seed=cfg.seed)
    gA, gB = measure_frame_bounds(gabor, trials=args.trials, seed=cfg.seed)
    doc = {
        "N": cfg.N,
        "partition_error": {"radial": float(radial), "angular": float(angular), "gabor_window": float(gabor_win),
                            "filter_bank": float(abs(fb.partition() - 1).max())},
        "curvelet": {"bounds": [cA, cB], "round_trip": round_trip(curv), "redundancy": curv.redundancy},
        "gabor": {"s": gabor.s, "bounds": [gA, gB], "round_trip": round_trip(gabor), "redundancy": gabor.redundancy},
        "filter_bank_round_trip": fb_err,
    }
    _emit(doc, args.out_dir, "frames_check.json")
    return EXIT_OK


def cmd_model(args, cfg: SweepConfig) -> int:
    grid = GridSpec(cfg.N)
    cartoon = build_cartoon(cfg.cartoon.spec(), grid)
    s = args.size if args.size is not None else matched_size(cfg, cfg.scales[0])
    amp = 1.0 if cfg.texture_amplitude == "auto" else float(cfg.texture_amplitude)
    spec = TextureSpec(cfg.delta, s, amp, cfg.texture_phases, cfg.seed, cfg.texture_spatial_factor)
    try:
        texture = build_texture(spec, grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc}") from exc
    write_field(out / "cartoon.msf", cartoon.field)
    write_field(out / "texture.msf", texture)
    images = {}
    if cfg.write_images:
        images["cartoon.png"] = write_png(out / "cartoon.png", cartoon.field)
        images["texture.png"] = write_png(out / "texture.png", texture)
    doc = {"N": cfg.N, "s": int(s), "texture_amplitude": amp,
           "cartoon_decay_exponent": fourier_decay_exponent(cartoon.field),
           "cartoon_norm2": float(np.mean(cartoon.field**2)),
           "texture_norm2": float(np.mean(np.abs(texture) ** 2)), "images": images}
    _emit(doc, cfg.out_dir, "model.json")
    return EXIT_OK


def _run_sweep(cfg: SweepConfig) -> int:
    done = []

    def flush(res):
        done.append(res)
        write_report(done, cfg.out_dir, cfg)
        r = res.record
        print(f"j={r.j} s_j={r.s_j} rel_error={r.rel_error:.4g} muc=({r.muc1:.3g}, {r.muc2:.3g}) "
              f"iters={r.iters} converged={r.converged}", flush=True)

    run_scale_sweep(cfg, on_result=flush)
    if not done:
        write_report([], cfg.out_dir, cfg)
    return EXIT_OK


def cmd_separate(args, cfg: SweepConfig) -> int:
    if len(cfg.scales) != 1:
        raise ConfigError("separate solves one scale: pass --scales J")
    return _run_sweep(cfg)


def cmd_sweep(args, cfg: SweepConfig) -> int:
    return _run_sweep(cfg)


def cmd_coherence(args, cfg: SweepConfig) -> int:
    grid = GridSpec(cfg.N)
    cartoon = build_cartoon(cfg.cartoon.spec(), grid)
    rows = []
    for j in cfg.scales:
        s = matched_size(cfg, j)
        F, band, support, curv, gabor = band_problem(grid, j, s)
        cl1 = curvelet_cluster_for_band(j, cfg.eps, cartoon.boundary, cartoon.tangents, curv, cfg.angle_tol)
        cl2 = build_gabor_cluster(j, cfg.schedule(), gabor)
        rows.append({
            "j": j, "s_j": int(s),
            "mutual_coherence": curvelet_gabor_coherence(curv, gabor, band=band, scales=[j]),
            "muc1": cluster_coherence(cl1, curv, gabor, band=band),
            "muc2": cluster_coherence(cl2, curv, gabor, band=band),
            "cluster1_size": len(cl1), "cluster2_size": len(cl2), "cluster2_clipped": cl2.clipped,
            "r1": cfg.schedule().r1(j), "r2": cfg.schedule().r2(j),
            "m_set_size": len(m_set(j, 0.0, s)),
        })
    _emit({"N": cfg.N, "delta": cfg.delta, "rows": rows}, cfg.out_dir, "coherence.json")
    return EXIT_OK


COMMANDS = {"frames-check": cmd_frames_check, "model": cmd_model, "separate": cmd_separate,
            "sweep": cmd_sweep, "coherence": cmd_coherence}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args, strict=args.command != "frames-check")
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (OSError, FieldFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
