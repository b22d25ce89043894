"""Power and robustness studies over a scenario's parameter grid, with CSV/SVG/JSON reports."""

from __future__ import annotations

import csv
import json
import math
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
import scipy

from . import __version__
from .errors import ConfigurationError, UsageError
from .kernel_space import read_csv_dataset
from .null_models import FAMILIES, ScenarioSpec, ad_statistic, ks_statistic, sample, stream
from .smooth_test import CalibratedSST, SstConfig

POWER_STREAM = 3
METHODS = ("sst", "single", "ks", "ad")


@dataclass
class StudyConfig:
    scenario: str
    thetas: list[float] | None = None
    dim: int | None = None
    n: int = 50
    m: int = 2000
    b1: int = 2000
    b2: int = 1000
    reps: int = 500
    alpha: float = 0.05
    methods: list[str] = field(default_factory=lambda: ["sst", "ks", "ad"])
    seed: int = 0
    workers: int = 1
    bandwidths: list[float] | None = None
    cutoffs: list[int] = field(default_factory=lambda: list(range(1, 11)))
    quantile_reading: str = "five_sixths"
    reference_csv: str | None = None
    overlay_csv: str | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.scenario not in FAMILIES:
            raise ConfigurationError(
                f"unknown scenario {self.scenario!r}; valid tags: {', '.join(sorted(FAMILIES))}"
            )
        if self.thetas is None:
            lo, hi = FAMILIES[self.scenario].theta_range
            self.thetas = [float(v) for v in np.linspace(lo, hi, 8)]
        self.thetas = [float(t) for t in self.thetas]
        if not self.thetas:
            raise ConfigurationError("theta grid is empty")
        if self.reps < 1:
            raise ConfigurationError("reps must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must be in (0, 1), got {self.alpha}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigurationError(f"unknown methods {bad}; valid: {list(METHODS)}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "StudyConfig":
        path = Path(path)
        if not path.exists():
            raise UsageError(f"no such config file: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from exc
        try:
            return cls.from_dict(raw)
        except TypeError as exc:
            raise UsageError(f"{path}: {exc}") from exc

    def null_spec(self) -> ScenarioSpec:
        reference = read_csv_dataset(self.reference_csv) if self.reference_csv else None
        return ScenarioSpec(self.scenario, None, self.dim, reference).null

    def sst_config(self) -> SstConfig:
        return SstConfig(
            bandwidths=self.bandwidths,
            cutoffs=list(self.cutoffs),
            m=self.m,
            b1=self.b1,
            b2=self.b2,
            seed=self.seed,
            quantile_reading=self.quantile_reading,
            workers=self.workers,
        )


class PowerRow(NamedTuple):
    method: str
    theta: float
    rate: float
    se: float
    reps: int


class PowerTable:
    """Rejection rates per (method, theta); ``se = sqrt(rate (1 - rate) / reps)``.

    Rows from an external overlay carry ``reps = 0`` and ``se = nan``.
    """

    def __init__(self, rows: Iterable[PowerRow] = ()):
        self.rows: list[PowerRow] = list(rows)

    @staticmethod
    def row(method: str, theta: float, rejections: int, reps: int) -> PowerRow:
        rate = rejections / reps
        return PowerRow(method, float(theta), rate, math.sqrt(rate * (1 - rate) / reps), reps)

    def methods(self) -> list[str]:
        return list(dict.fromkeys(r.method for r in self.rows))

    def curve(self, method: str) -> list[PowerRow]:
        return sorted((r for r in self.rows if r.method == method), key=lambda r: r.theta)

    def lookup(self, method: str, theta: float) -> PowerRow:
        for r in self.rows:
            if r.method == method and r.theta == theta:
                return r
        raise KeyError((method, theta))

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "theta", "rate", "se", "reps"])
            for r in self.rows:
                w.writerow([r.method, repr(r.theta), repr(r.rate), repr(r.se), r.reps])
        return path

    @classmethod
    def from_csv(cls, path) -> "PowerTable":
        with Path(path).open(newline="") as fh:
            rows = [
                PowerRow(d["method"], float(d["theta"]), float(d["rate"]), float(d["se"]), int(d["reps"]))
                for d in csv.DictReader(fh)
            ]
        return cls(rows)


def read_overlay(path) -> list[PowerRow]:
    """External baseline curves: CSV with columns method, theta, rate."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"no such overlay file: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"method", "theta", "rate"} - set(reader.fieldnames or ())
        if missing:
            raise UsageError(f"{path}: overlay CSV lacks columns {sorted(missing)}")
        return [PowerRow(d["method"], float(d["theta"]), float(d["rate"]), math.nan, 0) for d in reader]


def run_power_study(cfg: StudyConfig, progress=None) -> PowerTable:
    """Rejection rates of every configured method at every theta.

    Calibration happens once at the scenario null. Replicate ``r`` at grid
    point ``t`` is drawn from ``stream(seed, POWER_STREAM, t, r)`` and shared
    by all methods.
    """
    null = cfg.null_spec()
    univariate = null.dim == 1 and null.family != "bootstrap"
    if not univariate and ({"ks", "ad"} & set(cfg.methods)):
        raise ConfigurationError("KS and AD baselines need a univariate scenario")
    model = None
    if {"sst", "single"} & set(cfg.methods):
        model = CalibratedSST.prepare(null, cfg.n, cfg.sst_config())
    table = PowerTable()
    R = cfg.reps
    for ti, theta in enumerate(cfg.thetas):
        spec = null.at(theta) if null.family != "bootstrap" else null

        def draw(r, spec=spec, ti=ti):
            return sample(spec, cfg.n, stream(cfg.seed, POWER_STREAM, ti, r))

        if model is not None:
            _, T = model.statistics(draw, R)
            p_sst, p_single = model.p_values(T)
            if "sst" in cfg.methods:
                table.rows.append(PowerTable.row("SST", theta, int(np.sum(p_sst <= cfg.alpha)), R))
            if "single" in cfg.methods:
                hits = np.sum(p_single <= cfg.alpha, axis=0)
                for s, k in zip(model.calibration.settings, hits):
                    table.rows.append(PowerTable.row(s.label, theta, int(k), R))
        if univariate and ({"ks", "ad"} & set(cfg.methods)):
            cdf = null.null_cdf()
            ks_hits = ad_hits = 0
            for r in range(R):
                x = draw(r)[:, 0]
                if "ks" in cfg.methods:
                    ks_hits += ks_statistic(x, cdf, rng=stream(cfg.seed, POWER_STREAM + 1, ti, r)).p_value <= cfg.alpha
                if "ad" in cfg.methods:
                    ad_hits += ad_statistic(x, cdf, rng=stream(cfg.seed, POWER_STREAM + 2, ti, r)).p_value <= cfg.alpha
            if "ks" in cfg.methods:
                table.rows.append(PowerTable.row("KS", theta, int(ks_hits), R))
            if "ad" in cfg.methods:
                table.rows.append(PowerTable.row("AD", theta, int(ad_hits), R))
        if progress is not None:
            progress(ti, theta)
    if cfg.overlay_csv:
        table.rows.extend(read_overlay(cfg.overlay_csv))
    return table


def run_robustness_study(cfg: StudyConfig, progress=None) -> PowerTable:
    """Power study with the SST curve and one curve per single setting."""
    methods = list(dict.fromkeys(["sst", "single"] + list(cfg.methods)))
    return run_power_study(StudyConfig.from_dict({**cfg.to_dict(), "methods": methods}), progress)


_PALETTE = {"SST": "#1f4e9c", "KS": "#d9731a", "AD": "#2e8b3e"}
_EXTRA_COLOURS = ["#8e44ad", "#c0392b", "#16a085", "#7f8c8d"]


def render_svg(table: PowerTable, title: str = "") -> str:
    """Deterministic line chart, one series per method; built from the table rows only."""
    W, H = 640, 420
    left, right, top, bottom = 60, 170, 40, 50
    pw, ph = W - left - right, H - top - bottom
    thetas = sorted({r.theta for r in table.rows})
    lo, hi = (thetas[0], thetas[-1]) if thetas else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0

    def X(t):
        return left + (t - lo) / span * pw if hi > lo else left + pw / 2

    def Y(v):
        return top + (1.0 - v) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{left}" y="24" font-family="sans-serif" font-size="14">{_escape(title)}</text>',
    ]
    for k in range(6):
        v = k / 5
        out.append(f'<line x1="{left}" y1="{Y(v):.2f}" x2="{left + pw}" y2="{Y(v):.2f}" stroke="#dddddd"/>')
        out.append(
            f'<text x="{left - 8}" y="{Y(v) + 4:.2f}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.1f}</text>'
        )
    for t in thetas:
        out.append(
            f'<text x="{X(t):.2f}" y="{top + ph + 18}" font-family="sans-serif" font-size="11" text-anchor="middle">{t:.4g}</text>'
        )
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(
        f'<text x="{left + pw / 2:.2f}" y="{H - 10}" font-family="sans-serif" font-size="12" text-anchor="middle">theta</text>'
    )
    out.append(
        f'<text x="16" y="{top + ph / 2:.2f}" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {top + ph / 2:.2f})" text-anchor="middle">rejection rate</text>'
    )

    legend = []
    extra = iter(_EXTRA_COLOURS * 100)
    for method in table.methods():
        rows = table.curve(method)
        pts = " ".join(f"{X(r.theta):.2f},{Y(r.rate):.2f}" for r in rows)
        single = method.startswith("T[")
        external = all(r.reps == 0 for r in rows)
        colour = "#bbbbbb" if single else _PALETTE.get(method) or next(extra)
        width = 1 if single else 2.5
        dash = ' stroke-dasharray="6,4"' if external else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="{width}"{dash}/>')
        if not single:
            legend.append((method, colour, dash))
    if any(m.startswith("T[") for m in table.methods()):
        legend.append(("single settings", "#bbbbbb", ""))
    for k, (name, colour, dash) in enumerate(legend):
        y = top + 10 + 18 * k
        out.append(
            f'<line x1="{left + pw + 12}" y1="{y}" x2="{left + pw + 36}" y2="{y}" stroke="{colour}" stroke-width="2.5"{dash}/>'
        )
        out.append(f'<text x="{left + pw + 42}" y="{y + 4}" font-family="sans-serif" font-size="11">{_escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def emit_reports(table: PowerTable, out_dir, cfg: StudyConfig | None = None, stem: str = "power") -> dict[str, Path]:
    """Write ``<stem>.csv``, ``<stem>.svg`` and ``<stem>_manifest.json`` into ``out_dir``."""
    if not len(table):
        raise UsageError("refusing to emit reports for an empty table")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": table.to_csv(out / f"{stem}.csv")}
    title = f"{cfg.scenario} (n={cfg.n}, R={cfg.reps})" if cfg else stem
    svg = out / f"{stem}.svg"
    svg.write_text(render_svg(table, title))
    paths["svg"] = svg
    manifest = {
        "config": cfg.to_dict() if cfg else None,
        "seed": cfg.seed if cfg else None,
        "versions": {
            "spectral_smooth": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "outputs": {k: p.name for k, p in paths.items()},
    }
    man = out / f"{stem}_manifest.json"
    man.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    paths["manifest"] = man
    return paths
