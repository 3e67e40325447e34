"""Scale sweeps of the cartoon/texture separation experiment and their reports.

For every scale ``j`` the cartoon ``C`` and an energy-matched texture
``T_{s_j}`` are band-pass filtered to ``C_j``, ``T_j``; the sum is split by
the l1 separation solver into a curvelet part (declared cartoon) and a
Gabor part (declared texture). Each scale is an independent problem posed
on the frequencies the filter ``F_j`` touches, with the curvelet scales
``j-1 .. j+1`` and the Gabor modulations that reach the band.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .coherence import (RadiiSchedule, build_gabor_cluster, cluster_coherence,
                        curvelet_cluster_for_band, error_bound, pair_inner, relative_sparsity)
from .fieldio import write_png
from .filters import FilterBank
from .frames import BandFrame, CurveletFrame, CurveletIndex, GaborFrame, GaborIndex
from .grid import GridSpec, to_field, to_spectrum
from .models import (BumpProfile, CartoonSpec, TextureSpec, build_cartoon, build_texture,
                     energy_match_closed_form, energy_match_numeric)
from .separation import NonConvergenceError, SepProblem, SolverConfig, solve_sep


class ConfigError(ValueError):
    """Invalid sweep configuration."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class CartoonConfig:
    center: tuple = (0.5, 0.5)
    semi_axes: tuple = (0.3, 0.2)
    rotation: float = 0.3
    harmonics: tuple = ()
    f0_amplitude: float = 0.0
    f0_radius: Optional[float] = None
    f1_amplitude: float = 1.0
    f1_radius: Optional[float] = None
    boundary_samples: int = 4096

    def __post_init__(self):
        # JSON arrays arrive as lists; keep the tuple form so configs compare equal
        self.center = tuple(self.center)
        self.semi_axes = tuple(self.semi_axes)
        self.harmonics = tuple(tuple(h) for h in self.harmonics)

    def spec(self) -> CartoonSpec:
        return CartoonSpec(center=tuple(self.center), semi_axes=tuple(self.semi_axes),
                           rotation=self.rotation,
                           harmonics=tuple(tuple(h) for h in self.harmonics),
                           f0=BumpProfile(self.f0_amplitude, self.f0_radius),
                           f1=BumpProfile(self.f1_amplitude, self.f1_radius),
                           boundary_samples=self.boundary_samples)


@dataclass
class SolverSettings:
    max_iter: int = 300
    tol: float = 1e-7
    window: int = 10
    dual_tol: float = 1e-5

    def solver(self) -> SolverConfig:
        return SolverConfig(max_iter=self.max_iter, tol=self.tol, window=self.window,
                            dual_tol=self.dual_tol)


@dataclass
class SweepConfig:
    """Every key of the JSON configuration document, with its default.

    ``N`` grid size; ``scales`` the scales ``j``; ``delta`` texture decay;
    ``seed`` texture phase seed; ``texture_amplitude`` a number or ``"auto"``
    (scale the texture so its filtered energy summed over the sweep equals
    the cartoon's); ``s_rule`` ``"closed_form"`` or ``"numeric"`` energy
    matching; ``eps``, ``margin``, ``c1``, ``c2``, ``angle_tol`` cluster
    geometry (``angle_tol`` null means ``sqrt(2**-j)``); ``out_dir`` output
    directory; ``write_images`` PNG renderings; ``record_timing`` put wall
    times in the CSV/JSON (otherwise they are 0 there and only written to
    ``timings.json``, keeping reports bit-reproducible);
    ``require_convergence`` fail when the solver hits its cap;
    ``compute_coherence`` evaluate cluster coherences; ``workers`` process
    count for the per-scale solves.
    """

    N: int = 512
    scales: tuple = (4, 5, 6, 7)
    delta: float = 2.0
    seed: int = 0
    texture_amplitude: Union[float, str] = "auto"
    texture_phases: str = "random"
    texture_spatial_factor: float = 4.0
    s_rule: str = "closed_form"
    cartoon: CartoonConfig = field(default_factory=CartoonConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    eps: float = 1.0 / 16.0
    margin: float = 0.05
    c1: float = 1.0
    c2: float = 1.0
    angle_tol: Optional[float] = None
    out_dir: str = "sweep_out"
    write_images: bool = True
    record_timing: bool = False
    require_convergence: bool = False
    compute_coherence: bool = True
    workers: int = 1

    def validate(self) -> "SweepConfig":
        N = self.N
        if N < 16 or N & (N - 1):
            raise ConfigError(f"grid size must be a power of two >= 16, got {N}")
        if not self.scales:
            raise ConfigError("at least one scale is required")
        if list(self.scales) != sorted(set(self.scales)):
            raise ConfigError("scales must be strictly increasing")
        if min(self.scales) < 3:
            raise ConfigError("scales must be >= 3 (the band uses curvelet scale j-1 >= 2)")
        if 2 ** (max(self.scales) + 1) > N // 2:
            raise ConfigError(f"scale {max(self.scales)} does not fit N={N}: need 2^(j+1) <= N/2")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        if self.s_rule not in ("closed_form", "numeric"):
            raise ConfigError(f"unknown s_rule {self.s_rule!r}")
        if isinstance(self.texture_amplitude, str):
            if self.texture_amplitude != "auto":
                raise ConfigError("texture_amplitude must be a number or 'auto'")
        elif not self.texture_amplitude >= 0:
            raise ConfigError("texture_amplitude must be non-negative")
        if self.texture_phases not in ("random", "positive"):
            raise ConfigError(f"unknown texture_phases {self.texture_phases!r}")
        if not 0 < self.eps < 0.125:
            raise ConfigError("eps must lie in (0, 1/8)")
        if not (self.margin > 0 and self.c1 > 0 and self.c2 > 0):
            raise ConfigError("margin, c1 and c2 must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.solver.max_iter < 1:
            raise ConfigError("solver.max_iter must be positive")
        return self

    def schedule(self) -> RadiiSchedule:
        return RadiiSchedule(self.delta, self.margin, self.c1, self.c2)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scales"] = list(self.scales)
        return _jsonable(d)

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        try:
            if "cartoon" in data:
                data["cartoon"] = _sub(CartoonConfig, data["cartoon"], "cartoon")
            if "solver" in data:
                data["solver"] = _sub(SolverSettings, data["solver"], "solver")
            if "scales" in data:
                data["scales"] = tuple(int(j) for j in data["scales"])
            return cls(**data).validate()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "SweepConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise OSError(f"cannot read configuration {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: configuration must be a JSON object")
        return cls.from_dict(data)


def _sub(kind, value, name):
    if isinstance(value, kind):
        return value
    if not isinstance(value, dict):
        raise ConfigError(f"'{name}' must be an object")
    known = {f.name for f in dataclasses.fields(kind)}
    unknown = set(value) - known
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    return kind(**value)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("j", "s_j", "norm_C2", "norm_T2", "delta1", "delta2", "muc1", "muc2",
               "rel_error", "prop_bound", "iters", "wall_ms")


@dataclass
class SweepRecord:
    """Per-scale outcome.

    ``rel_error`` is ``(|C_j - C_j*| + |T_j - T_j*|) / (|C_j| + |T_j|)``;
    ``component_error`` its numerator; ``prop_bound`` the error bound
    ``2 (delta1 + delta2) / (1 - 2 max(muc1, muc2))`` (``inf`` when the
    coherence reaches 1/2). Coherence fields are ``nan`` when not computed.
    """

    j: int
    s_j: int
    norm_C2: float
    norm_T2: float
    delta1: float
    delta2: float
    muc1: float
    muc2: float
    rel_error: float
    prop_bound: float
    iters: int
    wall_ms: float
    component_error: float = 0.0
    converged: bool = True
    objective: float = 0.0
    cluster1_size: int = 0
    cluster2_size: int = 0

    @property
    def muc(self) -> float:
        return max(self.muc1, self.muc2)

    def bound_holds(self, slack: float = 1.05) -> Optional[bool]:
        """``None`` when the bound is vacuous (coherence >= 1/2 or not computed)."""
        if not self.muc < 0.5:
            return None
        return self.component_error <= self.prop_bound * slack

    def to_json(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                v = None if math.isinf(v) else "nan"
            out[f.name] = v
        return out

    @classmethod
    def from_json(cls, data: dict) -> "SweepRecord":
        kw = {}
        for f in dataclasses.fields(cls):
            v = data[f.name]
            if f.name == "prop_bound" and v is None:
                v = math.inf
            elif v == "nan":
                v = math.nan
            kw[f.name] = v
        return cls(**kw)


# ---------------------------------------------------------------------------
# The sweep
# ---------------------------------------------------------------------------

@dataclass
class ScaleResult:
    record: SweepRecord
    wall_ms: float
    fields: dict  # name -> real field (C_j, T_j, C_j*, T_j*, residuals)


def band_problem(grid: GridSpec, j: int, s: int):
    fb = FilterBank(grid)
    F = fb.bandpass_spectrum(j)
    band = F > 0
    support = np.flatnonzero(band.ravel())
    curv = CurveletFrame(grid, 2, scales=[j - 1, j, j + 1])
    gabor = GaborFrame(grid, s, n_max=int(math.ceil(2.0 ** (j + 1) / s)) + 1)
    return F, band, support, curv, gabor


def matched_size(config: SweepConfig, j: int) -> int:
    if config.s_rule == "closed_form":
        return energy_match_closed_form(j, config.delta)
    spec = TextureSpec(config.delta, 1, 1.0, "positive", config.seed, config.texture_spatial_factor)
    return energy_match_numeric(j, spec)


def _texture_spec(config: SweepConfig, s: int, amplitude: float) -> TextureSpec:
    return TextureSpec(config.delta, s, amplitude, config.texture_phases, config.seed,
                       config.texture_spatial_factor)


def solve_scale(config: SweepConfig, j: int, s: int, C_hat: np.ndarray, T_hat: np.ndarray,
                boundary: np.ndarray, tangents: np.ndarray) -> ScaleResult:
    """Separate ``C_j + T_j`` at one scale and evaluate every record field."""
    t0 = time.perf_counter()
    grid = GridSpec(config.N)
    F, band, support, curv, gabor = band_problem(grid, j, s)
    B1, B2 = BandFrame(curv, support), BandFrame(gabor, support)
    c = (F * C_hat).ravel()[support]
    t = (F * T_hat).ravel()[support]
    S = c + t
    problem = SepProblem(S, (B1, B2), config.solver.solver(), project=B1.real_projection)
    sol = solve_sep(problem)
    if config.require_convergence and not sol.converged:
        raise NonConvergenceError(f"solver did not converge at scale {j} within "
                                  f"{config.solver.max_iter} iterations")
    err_c = float(np.linalg.norm(c - sol.S1))
    err_t = float(np.linalg.norm(t - sol.S2))
    nc, nt = float(np.linalg.norm(c)), float(np.linalg.norm(t))
    rel = (err_c + err_t) / (nc + nt) if nc + nt > 0 else 0.0

    delta1 = delta2 = muc1 = muc2 = math.nan
    size1 = size2 = 0
    bound = math.nan
    if config.compute_coherence:
        cl1 = curvelet_cluster_for_band(j, config.eps, boundary, tangents, curv, config.angle_tol)
        cl2 = build_gabor_cluster(j, config.schedule(), gabor)
        size1, size2 = len(cl1), len(cl2)
        delta1 = relative_sparsity(B1.analysis(c), cl1)
        delta2 = relative_sparsity(B2.analysis(t), cl2)
        muc1 = cluster_coherence(cl1, curv, gabor, band=band)
        muc2 = cluster_coherence(cl2, curv, gabor, band=band)
        bound = error_bound(delta1, delta2, max(muc1, muc2)).value
    wall = (time.perf_counter() - t0) * 1e3
    record = SweepRecord(
        j=j, s_j=int(s), norm_C2=nc**2, norm_T2=nt**2, delta1=delta1, delta2=delta2,
        muc1=muc1, muc2=muc2, rel_error=rel, prop_bound=bound, iters=sol.iterations,
        wall_ms=wall if config.record_timing else 0.0, component_error=err_c + err_t,
        converged=sol.converged, objective=float(sol.objective),
        cluster1_size=size1, cluster2_size=size2)

    def field_of(v):
        return to_field(B1.embed(v)).real

    fields = {}
    if config.write_images:
        fields = {"C": field_of(c), "T": field_of(t), "C_star": field_of(sol.S1),
                  "T_star": field_of(sol.S2), "C_residual": field_of(c - sol.S1),
                  "T_residual": field_of(t - sol.S2)}
    return ScaleResult(record, wall, fields)


@dataclass
class SweepInputs:
    C_hat: np.ndarray
    T_hats: dict
    sizes: dict
    amplitude: float
    boundary: np.ndarray
    tangents: np.ndarray


def prepare_inputs(config: SweepConfig) -> SweepInputs:
    """Cartoon spectrum, matched sizes and texture spectra for every scale."""
    config.validate()
    grid = GridSpec(config.N)
    cartoon = build_cartoon(config.cartoon.spec(), grid)
    C_hat = to_spectrum(cartoon.field)
    fb = FilterBank(grid)
    sizes = {j: matched_size(config, j) for j in config.scales}
    for j, s in sizes.items():
        if 2 * s > config.N // 2:
            raise ConfigError(f"matched size s={s} at scale {j} is too large for N={config.N}")
    T_unit = {j: to_spectrum(build_texture(_texture_spec(config, s, 1.0), grid))
              for j, s in sizes.items()}
    if config.texture_amplitude == "auto":
        ec = sum(float(np.sum(np.abs(fb.bandpass_spectrum(j) * C_hat) ** 2)) for j in config.scales)
        et = sum(float(np.sum(np.abs(fb.bandpass_spectrum(j) * T_unit[j]) ** 2)) for j in config.scales)
        amplitude = math.sqrt(ec / et) if et > 0 else 0.0
    else:
        amplitude = float(config.texture_amplitude)
    T_hats = {j: amplitude * T for j, T in T_unit.items()}
    return SweepInputs(C_hat, T_hats, sizes, amplitude, cartoon.boundary, cartoon.tangents)


def _solve_task(args):
    config, j, s, C_hat, T_hat, boundary, tangents = args
    return solve_scale(config, j, s, C_hat, T_hat, boundary, tangents)


def run_scale_sweep(config: SweepConfig,
                    on_result: Optional[Callable[[ScaleResult], None]] = None) -> list[ScaleResult]:
    """Solve every configured scale; ``on_result`` sees each result as it completes (in scale order)."""
    inputs = prepare_inputs(config)
    tasks = [(config, j, inputs.sizes[j], inputs.C_hat, inputs.T_hats[j],
              inputs.boundary, inputs.tangents) for j in config.scales]
    results = []
    if config.workers == 1:
        for task in tasks:
            res = _solve_task(task)
            results.append(res)
            if on_result:
                on_result(res)
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for res in pool.map(_solve_task, tasks):
                results.append(res)
                if on_result:
                    on_result(res)
    return results


# ---------------------------------------------------------------------------
# Trend checks
# ---------------------------------------------------------------------------

def slope_check(records: Sequence[SweepRecord], selector) -> float:
    """Least-squares slope of ``log2(selector(record))`` against ``j``.

    ``selector`` is a record field name or a callable.
    """
    if len(records) < 3:
        raise ValueError("a slope needs at least three records")
    get = (lambda r: getattr(r, selector)) if isinstance(selector, str) else selector
    j = np.array([r.j for r in records], dtype=float)
    v = np.array([get(r) for r in records], dtype=float)
    if np.any(~(v > 0)):
        raise ValueError("selected quantity must be positive to take logarithms")
    slope, _ = np.polyfit(j, np.log2(v), 1)
    return float(slope)


def non_increasing(values: Sequence[float], slack: float) -> bool:
    """Every step may grow by at most the relative ``slack``."""
    return all(b <= a * (1.0 + slack) for a, b in zip(values, values[1:]))


@dataclass
class EnvelopeReport:
    scales: list
    samples: int
    maxima: list
    normalized: list  # maxima * 2**(j/4)
    band_ratio: float  # max/min of ``normalized``

    @property
    def within_band(self) -> bool:
        return self.band_ratio <= 4.0


def decay_envelope_check(scales: Sequence[int], samples: int = 200, seed: int = 0,
                         N: int = 512, delta: float = 2.0) -> EnvelopeReport:
    """Sample ``|<gamma, g>|`` between scale-``j`` curvelets and ``s_j``-Gabor atoms.

    Each sample draws a random orientation and translation of the curvelet,
    a random Gabor modulation among those whose box meets the curvelet's
    subband, and a Gabor translation within one lattice step of the
    curvelet's position. The per-scale maxima, divided
    by ``2**(-j/4)``, should lie within a factor-4 band. Samples at a scale
    are a deterministic prefix-stable sequence, so more samples never lower
    a maximum.
    """
    grid = GridSpec(N)
    maxima, normed = [], []
    for j in scales:
        s = energy_match_closed_form(j, delta)
        curv = CurveletFrame(grid, 2, scales=[j])
        gabor = GaborFrame(grid, s)
        rng = np.random.default_rng([seed, j])
        wedges = curv.scale_wedges(j)
        reach = {}
        best = 0.0
        for _ in range(samples):
            w = wedges[int(rng.integers(len(wedges)))]
            if w.ell not in reach:
                reach[w.ell] = _reachable_modulations(grid, w, gabor)
            mods = reach[w.ell]
            k = (int(rng.integers(w.P[0])), int(rng.integers(w.P[1])))
            n = mods[int(rng.integers(len(mods)))]
            # a Gabor translation at the curvelet's position (+-1 lattice step):
            # far-apart pairs have negligible inner products and say nothing
            jitter = rng.integers(-1, 2, size=2)
            m = tuple(int(v) for v in np.mod(np.round(2 * s * np.array(k) / np.array(w.P)) + jitter, 2 * s))
            val = abs(pair_inner(curv, CurveletIndex(j, w.ell, k), gabor, GaborIndex(m, n)))
            best = max(best, val)
        maxima.append(best)
        normed.append(best * 2.0 ** (j / 4.0))
    ratio = max(normed) / min(normed) if min(normed) > 0 else math.inf
    return EnvelopeReport(list(scales), samples, maxima, normed, ratio)


def _reachable_modulations(grid: GridSpec, w, gabor: GaborFrame) -> list:
    k1 = grid.kappa[0].ravel()[w.support]
    k2 = grid.kappa[1].ravel()[w.support]
    s = gabor.s
    # a box s*n + (-s, s)^2 meets the support iff the nearest lattice centres do
    pairs = set()
    for r1 in (np.floor(k1 / s), np.ceil(k1 / s)):
        for r2 in (np.floor(k2 / s), np.ceil(k2 / s)):
            for a, b in zip(r1.astype(int), r2.astype(int)):
                pairs.add((int(a), int(b)))
    valid = set(int(v) for v in gabor.modulations)
    out = []
    for n1, n2 in sorted(pairs):
        if n1 not in valid or n2 not in valid:
            continue
        if np.any((np.abs(k1 - s * n1) < s) & (np.abs(k2 - s * n2) < s)):
            out.append((n1, n2))
    return out


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def records_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_report(results: Sequence, out_dir, config: Optional[SweepConfig] = None,
                 extra: Optional[dict] = None) -> dict:
    """Write ``records.csv``, ``report.json``, ``timings.json`` and PNGs into ``out_dir``.

    ``results`` may hold :class:`ScaleResult` or bare :class:`SweepRecord`
    objects. Returns the paths written.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    records = [r.record if isinstance(r, ScaleResult) else r for r in results]
    images = {}
    timings = {}
    for r in results:
        if not isinstance(r, ScaleResult):
            continue
        timings[str(r.record.j)] = r.wall_ms
        for name, f in r.fields.items():
            path = out / f"j{r.record.j}_{name}.png"
            images[path.name] = write_png(path, f)
    doc = {"records": [r.to_json() for r in records], "images": images}
    if config is not None:
        doc["config"] = config.to_dict()
    if extra:
        doc.update(_jsonable(extra))
    paths = {"csv": out / "records.csv", "json": out / "report.json", "timings": out / "timings.json"}
    try:
        paths["csv"].write_text(records_csv(records))
        paths["json"].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        paths["timings"].write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write report in {out}: {exc}") from exc
    return paths


def read_records(path) -> list[SweepRecord]:
    """Records from a ``report.json`` written by :func:`write_report`."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise OSError(f"cannot read report {path}: {exc}") from exc
    return [SweepRecord.from_json(d) for d in doc["records"]]
