"""Method comparison, data-fraction sweeps and reporting."""

from __future__ import annotations

import csv
import logging
import math
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from edtl.config import ExperimentConfig
from edtl.dataset import (Dataset, fit_scaler, inject_anomalies, load_csv, select_features,
                          split, subsample_fraction)
from edtl.ensemble import train_edtl
from edtl.models import fit_direct, fit_transfer
from edtl.nn import TrainConfig
from edtl.simulator import make_domain_pair
from edtl.svr import SVRHyperParams
from edtl.transfer import DEFAULT_HIDDEN, PretrainedModel, pretrain

log = logging.getLogger(__name__)

MAPE_FLOOR = 1e-8
REPORT_COLUMNS = ("method", "target", "fraction", "condition", "seed", "mape_percent", "wall_ms")


class HarnessError(ValueError):
    pass


# -- metrics -------------------------------------------------------------------

def mape_detail(y, yhat, floor: float = MAPE_FLOOR) -> tuple[float, int]:
    """MAPE in percent plus the number of rows skipped for |y| < floor."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise HarnessError("length mismatch")
    keep = np.abs(y) >= floor
    if not keep.any():
        raise HarnessError("every row excluded by the zero-denominator guard")
    return float(np.mean(np.abs((y[keep] - yhat[keep]) / y[keep])) * 100.0), int((~keep).sum())


def mape(y, yhat) -> float:
    return mape_detail(y, yhat)[0]


# -- k nearest neighbours ----------------------------------------------------------

def knn_predict_batch(train_ds: Dataset, X, k: int) -> np.ndarray:
    if len(train_ds) == 0:
        raise HarnessError("empty training set")
    if not 1 <= k <= len(train_ds):
        raise HarnessError(f"k={k} outside 1..{len(train_ds)}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    R = train_ds.rows
    d2 = ((X[:, None, :] - R[None, :, :]) ** 2).sum(-1)
    # stable sort: equal distances keep row order
    nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return train_ds.targets[nn].mean(axis=1)


def knn_predict(train_ds: Dataset, x, k: int) -> float:
    """Mean target of the ``k`` rows closest to ``x`` (Euclidean, ties by row order)."""
    return float(knn_predict_batch(train_ds, np.asarray(x, dtype=float)[None, :], k)[0])


# -- single legs ----------------------------------------------------------------

@dataclass(frozen=True)
class MethodResult:
    method: str
    mape_percent: float
    n_excluded: int
    wall_ms: int
    predictions: np.ndarray = field(repr=False, compare=False, default=None)


def _result(method, y, yhat, t0) -> MethodResult:
    m, excl = mape_detail(y, yhat)
    return MethodResult(method, m, excl, int(round((time.perf_counter() - t0) * 1000)), yhat)


def run_direct(target_train: Dataset, target_test: Dataset, cfg: TrainConfig,
               hidden: tuple[int, ...] = DEFAULT_HIDDEN) -> MethodResult:
    t0 = time.perf_counter()
    model = fit_direct(target_train, cfg, hidden)
    return _result("direct", target_test.targets, model.predict(target_test.rows), t0)


def run_transfer(pre: PretrainedModel, target_train: Dataset, target_test: Dataset,
                 cfg: TrainConfig, train_output: bool = True) -> MethodResult:
    t0 = time.perf_counter()
    model = fit_transfer(pre, target_train, cfg, train_output)
    return _result("transfer", target_test.targets, model.predict(target_test.rows), t0)


def run_edtl(pre: PretrainedModel, target_train: Dataset, target_test: Dataset,
             cfg: TrainConfig, hp: SVRHyperParams | None = None, mode: str = "in_sample",
             folds: int = 5, train_output: bool = True,
             target_scaler: str = "fresh") -> MethodResult:
    t0 = time.perf_counter()
    model = train_edtl(pre, target_train, cfg, hp, mode, folds, train_output, target_scaler)
    if not model.meta.converged:
        log.warning("SVR meta-regressor hit its iteration cap")
    return _result("edtl", target_test.targets, model.predict(target_test.rows), t0)


def run_knn(target_train: Dataset, target_test: Dataset, k: int = 5) -> MethodResult:
    t0 = time.perf_counter()
    scaler = fit_scaler(target_train)
    k = min(k, len(target_train))
    yhat = knn_predict_batch(scaler.transform(target_train),
                             scaler.transform_rows(target_test.rows), k)
    return _result("knn", target_test.targets, yhat, t0)


# -- reports --------------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    method: str
    target: str
    fraction: float
    condition: str
    seed: int
    mape_percent: float
    wall_ms: int

    @property
    def key(self):
        return (self.method, self.target, self.fraction, self.condition, self.seed)


@dataclass(frozen=True)
class Failure:
    method: str
    target: str
    fraction: float
    condition: str
    seed: int
    error: str


@dataclass
class ExperimentReport:
    records: list[Record]
    failures: list[Failure] = field(default_factory=list)

    def sorted(self) -> ExperimentReport:
        return ExperimentReport(sorted(self.records, key=lambda r: r.key),
                                sorted(self.failures, key=lambda f: (f.method, f.target,
                                                                     f.fraction, f.condition,
                                                                     f.seed)))

    def aggregates(self) -> dict:
        """(method, target, fraction, condition) -> (mean, sample stdev, n)."""
        cells = defaultdict(list)
        for r in self.records:
            cells[(r.method, r.target, r.fraction, r.condition)].append(r.mape_percent)
        out = {}
        for key, vals in sorted(cells.items()):
            v = np.array(vals)
            out[key] = (float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0, len(v))
        return out

    def degradation(self) -> dict:
        """(method, target, fraction) -> mean anomalous MAPE - mean clean MAPE,
        only for cells run under both conditions."""
        agg = self.aggregates()
        out = {}
        for (m, t, f, c), (mean, _, _) in agg.items():
            if c == "clean" and (m, t, f, "anomalous") in agg:
                out[(m, t, f)] = agg[(m, t, f, "anomalous")][0] - mean
        return out

    def mean(self, method, target, fraction, condition="clean") -> float:
        return self.aggregates()[(method, target, fraction, condition)][0]


def write_report_csv(report: ExperimentReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in report.sorted().records:
            w.writerow([r.method, r.target, repr(float(r.fraction)), r.condition, r.seed,
                        repr(float(r.mape_percent)), r.wall_ms])
    return path


def read_report_csv(path) -> ExperimentReport:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise HarnessError(f"{path}: unexpected columns {reader.fieldnames}")
        records = [Record(row["method"], row["target"], float(row["fraction"]),
                          row["condition"], int(row["seed"]), float(row["mape_percent"]),
                          int(row["wall_ms"])) for row in reader]
    return ExperimentReport(records)


def write_failures(report: ExperimentReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "target", "fraction", "condition", "seed", "error"])
        for f in report.sorted().failures:
            w.writerow([f.method, f.target, repr(float(f.fraction)), f.condition, f.seed, f.error])
    return path


def write_summary_csv(report: ExperimentReport, path) -> Path:
    deg = report.degradation()
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "target", "fraction", "condition", "mean_mape", "stdev_mape",
                    "n", "degradation_scale"])
        for (m, t, f, c), (mean, sd, n) in report.aggregates().items():
            d = deg.get((m, t, f)) if c == "anomalous" else None
            w.writerow([m, t, repr(f), c, f"{mean:.6f}", f"{sd:.6f}", n,
                        "" if d is None else f"{d:.6f}"])
    return path


# -- SVG charts -------------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_line_chart(series: dict[str, list[tuple[float, float]]], title: str,
                   xlabel: str = "fraction of target training data",
                   ylabel: str = "MAPE (%)", width: int = 560, height: int = 380) -> str:
    """Minimal SVG line chart: one polyline per series, axes with ticks, legend."""
    left, right, top, bottom = 64, 130, 36, 52
    pw, ph = width - left - right, height - top - bottom
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    if not xs:
        raise HarnessError("nothing to plot")
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    y0, y1 = 0.0, max(ys) * 1.1 or 1.0

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{left + pw / 2:.1f}" y="20" text-anchor="middle" font-size="14">'
           f'{_esc(title)}</text>',
           f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for x in sorted(set(xs)):
        out.append(f'<line x1="{px(x):.1f}" y1="{top + ph}" x2="{px(x):.1f}" '
                   f'y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(x):.1f}" y="{top + ph + 18}" text-anchor="middle">'
                   f'{x:g}</text>')
    for k in range(6):
        y = y0 + (y1 - y0) * k / 5
        out.append(f'<line x1="{left - 5}" y1="{py(y):.1f}" x2="{left}" y2="{py(y):.1f}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{py(y) + 4:.1f}" text-anchor="end">{y:.2f}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">'
               f'{_esc(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for i, (name, pts) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = sorted(pts)
        path = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{path}"/>')
        for x, y in pts:
            out.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" fill="{color}"/>')
        ly = top + 14 + 18 * i
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 38}" y="{ly + 4}">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_charts(report: ExperimentReport, out_dir) -> list[Path]:
    """One chart per (target, condition): mean MAPE against data fraction."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_panel = defaultdict(lambda: defaultdict(list))
    for (m, t, f, c), (mean, _, _) in report.aggregates().items():
        by_panel[(t, c)][m].append((f, mean))
    paths = []
    for (t, c), series in sorted(by_panel.items()):
        p = out_dir / f"mape_{t}_{c}.svg"
        p.write_text(svg_line_chart(dict(sorted(series.items())), f"{t} ({c} training data)"))
        paths.append(p)
    return paths


# -- sweeps ---------------------------------------------------------------------

def load_domain_pair(cfg: ExperimentConfig, target: str, seed: int) -> tuple[Dataset, Dataset]:
    d = cfg.data
    if d.kind == "simulated":
        return make_domain_pair(d.profile(d.source_profile), d.profile(d.target_profile),
                                d.n_source, d.n_target, seed, target, d.dt)
    if not (d.source_csv and d.target_csv):
        raise HarnessError("csv data needs source_csv and target_csv")
    return (load_csv(d.source_csv.format(target=target), target),
            load_csv(d.target_csv.format(target=target), target))


def _cell_job(args) -> tuple[list[Record], list[Failure]]:
    cfg, target, seed = args
    records, failures = [], []
    legs = [(m, f, c) for f in cfg.fractions for c in cfg.conditions for m in cfg.methods]

    def fail_all(exc, which=legs):
        for m, f, c in which:
            failures.append(Failure(m, target, f, c, seed, f"{type(exc).__name__}: {exc}"))

    try:
        source, tgt = load_domain_pair(cfg, target, seed)
        pool, test = split(tgt, 1.0 - cfg.test_fraction, seed)
    except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
        fail_all(exc)
        return records, failures
    tcfg = cfg.train.with_seed(seed)
    pre = None
    if {"transfer", "edtl"} & set(cfg.methods):
        try:
            pre = pretrain(source, tcfg, cfg.hidden)
        except Exception as exc:  # noqa: BLE001
            fail_all(exc, [leg for leg in legs if leg[0] in ("transfer", "edtl")])
            legs = [leg for leg in legs if leg[0] not in ("transfer", "edtl")]
    for frac in cfg.fractions:
        base = subsample_fraction(pool, frac, seed)
        for cond in cfg.conditions:
            tr, te = base, test
            if cond == "anomalous":
                spec = replace(cfg.anomaly, seed=cfg.anomaly.seed + seed)
                tr = inject_anomalies(tr, spec)
            if cfg.select_k is not None:
                schema = select_features(tr, cfg.select_k)
                tr, te = tr.project(schema), te.project(schema)
            for method in cfg.methods:
                if (method, frac, cond) not in legs:
                    continue
                try:
                    res = _run_method(method, cfg, pre, tr, te, tcfg)
                except Exception as exc:  # noqa: BLE001
                    failures.append(Failure(method, target, frac, cond, seed,
                                            f"{type(exc).__name__}: {exc}"))
                    continue
                wall = res.wall_ms if cfg.record_wall_time else 0
                records.append(Record(method, target, frac, cond, seed, res.mape_percent, wall))
    return records, failures


def _run_method(method, cfg: ExperimentConfig, pre, tr, te, tcfg) -> MethodResult:
    if method == "direct":
        return run_direct(tr, te, tcfg, cfg.hidden)
    if method == "transfer":
        return run_transfer(pre, tr, te, tcfg, cfg.train_output)
    if method == "edtl":
        return run_edtl(pre, tr, te, tcfg, cfg.svr, cfg.stacking_mode, cfg.folds,
                        cfg.train_output, cfg.target_scaler)
    if method == "knn":
        return run_knn(tr, te, cfg.knn_k)
    raise HarnessError(f"unknown method {method!r}")


def run_sweep(cfg: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Run method x target x fraction x condition x seed.

    Work is split into one job per (target, seed), which shares the data
    pair, the test split and the pretrained source model across its legs.
    With ``out_dir`` the report CSV, a summary, failures and SVG charts are
    written there.
    """
    jobs = [(cfg, t, s) for t in cfg.targets for s in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_cell_job, jobs))
    else:
        results = [_cell_job(j) for j in jobs]
    report = ExperimentReport([r for rs, _ in results for r in rs],
                              [f for _, fs in results for f in fs]).sorted()
    if out_dir is not None:
        out = Path(out_dir)
        write_report_csv(report, out / "report.csv")
        write_summary_csv(report, out / "summary.csv")
        if report.failures:
            write_failures(report, out / "failures.csv")
        if report.records:
            write_charts(report, out / "charts")
    return report


# -- source quality -------------------------------------------------------------

@dataclass(frozen=True)
class SourceComparison:
    fraction: float
    transfer_good: float
    transfer_bad: float
    edtl_good: float
    edtl_bad: float

    @property
    def transfer_gap(self) -> float:
        return self.transfer_bad - self.transfer_good

    @property
    def edtl_gap(self) -> float:
        return self.edtl_bad - self.edtl_good


def compare_sources(cfg: ExperimentConfig, bad_profile: str, target: str = "E",
                    fraction: float = 0.2) -> SourceComparison:
    """Transfer and EDTL from the configured source and from ``bad_profile``,
    averaged over ``cfg.seeds``; both use identical target data per seed."""
    rows = []
    d = cfg.data
    bad_cfg = replace(cfg, data=replace(d, source_profile=bad_profile))
    for seed in cfg.seeds:
        good_src, tgt = load_domain_pair(cfg, target, seed)
        bad_src, tgt_b = load_domain_pair(bad_cfg, target, seed)
        if not tgt.equals(tgt_b):
            raise HarnessError("target data differs between source variants")
        pool, test = split(tgt, 1.0 - cfg.test_fraction, seed)
        tr = subsample_fraction(pool, fraction, seed)
        tcfg = cfg.train.with_seed(seed)
        row = []
        for src in (good_src, bad_src):
            pre = pretrain(src, tcfg, cfg.hidden)
            row.append(run_transfer(pre, tr, test, tcfg, cfg.train_output).mape_percent)
            row.append(run_edtl(pre, tr, test, tcfg, cfg.svr, cfg.stacking_mode, cfg.folds,
                                cfg.train_output, cfg.target_scaler).mape_percent)
        rows.append(row)
    tg, eg, tb, eb = np.mean(rows, axis=0)
    return SourceComparison(fraction, float(tg), float(tb), float(eg), float(eb))


def isclose_records(a: ExperimentReport, b: ExperimentReport) -> bool:
    ra, rb = a.sorted().records, b.sorted().records
    return len(ra) == len(rb) and all(
        x.key == y.key and math.isclose(x.mape_percent, y.mape_percent) for x, y in zip(ra, rb))
