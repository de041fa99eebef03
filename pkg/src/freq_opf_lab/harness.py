"""Study orchestration: dataset generation, training, the 24-hour benchmark, reports.

Every command is a plain function of a :class:`StudyConfig` and an output
directory, so the CLI is a thin wrapper and tests can call them directly.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import plots
from .grid import CaseError, PowerCase, load_case, scale_loads
from .lpsolve import MilpConfig
from .neural import (MlpSpec, ScenarioDataset, TrainConfig, TrainedModel, r2_score, train)
from .opf import (DNN_FCOPF, L_FCOPF, SOLUTION_HEADER, T_OPF, VARIANTS, OpfError, build_dnnfcopf,
                  build_lfcopf, build_topf, check_dispatch, feature_names, features, solve_variant,
                  verify_dispatch)
from .sfr_sim import UnsettledWarning, build_full_order, compute_metrics, simulate

log = logging.getLogger(__name__)

# hour 1 is the valley, hour 8 the peak
DEFAULT_PROFILE = (1.00, 1.02, 1.05, 1.09, 1.13, 1.16, 1.19, 1.20,
                   1.19, 1.18, 1.17, 1.16, 1.15, 1.15, 1.16, 1.17,
                   1.18, 1.17, 1.15, 1.12, 1.09, 1.06, 1.03, 1.01)

DATASET_FILE = "dataset.csv"
MODEL_FILE = "model.json"
RESULTS_FILE = "day_results.csv"


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    case: str = "ieee9"
    load_scale: tuple[float, float] = (0.8, 1.2)
    samples: int = 2000
    contingencies: Optional[list[str]] = None  # None: the case's contingency unit
    seed: int = 0
    perturb: float = 0.3  # half-width of dispatch perturbations, fraction of range
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    hidden: tuple[int, ...] = (16, 16)
    lr: float = 1e-3
    lr_decay: float = 0.998
    batch_size: int = 64
    max_epochs: int = 2000
    patience: int = 100
    r_lmt: float = -0.5
    f_lmt: float = 59.5
    profile: tuple[float, ...] = DEFAULT_PROFILE
    detail_hours: tuple[int, ...] = (1, 8)
    segments: int = 8
    sim_duration: float = 30.0
    sim_dt: float = 1e-3
    node_limit: int = 20_000
    timing: bool = False  # write wall-clock solve_ms (breaks byte-determinism)

    def __post_init__(self):
        self.load_scale = tuple(float(v) for v in self.load_scale)
        self.split = tuple(float(v) for v in self.split)
        self.hidden = tuple(int(v) for v in self.hidden)
        self.profile = tuple(float(v) for v in self.profile)
        self.detail_hours = tuple(int(v) for v in self.detail_hours)
        lo, hi = self.load_scale
        if not (0 < lo <= hi <= 2):
            raise ConfigError("load_scale must satisfy 0 < lo <= hi <= 2")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if len(self.profile) != 24 or any(not (v > 0) for v in self.profile):
            raise ConfigError("profile must hold 24 positive scale factors")
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ConfigError("split must be three non-negative fractions summing to 1")
        if not 0 <= self.perturb <= 1:
            raise ConfigError("perturb must lie in [0, 1]")
        if any(not 1 <= h <= 24 for h in self.detail_hours):
            raise ConfigError("detail_hours must be in 1..24")

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "StudyConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    def contingency_set(self, case: PowerCase) -> list[str]:
        cts = list(self.contingencies) if self.contingencies else [case.contingency_unit]
        for c in cts:
            if c not in case.gen_ids:
                raise ConfigError(f"contingency {c!r} is not a generator of the case")
        return cts


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    """Ordered map, optionally over worker processes."""
    if jobs <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _fmt(v: Optional[float]) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.10g}"


# -- dataset generation ------------------------------------------------------------------

def rebalance(p: np.ndarray, lo: np.ndarray, hi: np.ndarray, total: float,
              max_rounds: int = 50) -> Optional[np.ndarray]:
    """Scale ``p`` proportionally until it sums to ``total`` while staying in ``[lo, hi]``."""
    if total < lo.sum() - 1e-9 or total > hi.sum() + 1e-9:
        return None
    p = np.clip(p, lo, hi)
    for _ in range(max_rounds):
        gap = total - p.sum()
        if abs(gap) < 1e-9:
            return p
        free = (p < hi - 1e-12) if gap > 0 else (p > lo + 1e-12)
        room = p[free] - lo[free] if gap < 0 else p[free]
        if not free.any():
            return None
        if room.sum() <= 1e-12:
            p[free] += gap / free.sum()
        else:
            p[free] += gap * room / room.sum()
        p = np.clip(p, lo, hi)
    return p if abs(total - p.sum()) < 1e-6 else None


@dataclass(frozen=True)
class _SampleTask:
    index: int
    case_json: str
    scale: float
    tripped: str
    noise: tuple[float, ...]
    perturb: float
    segments: int
    duration: float
    dt: float


def _run_sample(task: _SampleTask):
    from .grid import parse_case  # keep worker start-up light

    case = scale_loads(parse_case(task.case_json), task.scale)
    # the load may be served only if the tripped unit runs; the precheck is per contingency
    try:
        sol = solve_variant(build_topf(case, task.segments))
    except CaseError as exc:
        return task.index, None, f"case error: {exc}"
    if not sol.ok:
        return task.index, None, f"T-OPF {sol.status} at load scale {task.scale:.4f}"
    gens = case.generators
    lo = np.array([g.p_min for g in gens])
    hi = np.array([g.p_max for g in gens])
    base = np.array([sol.dispatch[g.id] for g in gens])
    p = base + task.perturb * (hi - lo) * np.asarray(task.noise)
    p = rebalance(p, lo, hi, case.total_load)
    if p is None:
        return task.index, None, "perturbed dispatch could not be rebalanced"
    dispatch = dict(zip(case.gen_ids, p.tolist()))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnsettledWarning)
        trace = simulate(build_full_order(case, dispatch, task.tripped), task.duration, task.dt)
    m = compute_metrics(trace, case.f0)
    return task.index, (features(case, dispatch, task.tripped), (m.rocof_worst, m.fn)), None


def _split_tags(n: int, split: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    n_train = int(round(split[0] * n))
    n_val = int(round(split[1] * n))
    tags = np.array(["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val),
                    dtype=object)
    return tags[rng.permutation(n)]


def cmd_gen_dataset(config: StudyConfig, out_dir: str | Path, jobs: int = 1,
                    case: PowerCase | None = None) -> Path:
    """Monte Carlo scenarios labelled by the full-order simulator; writes ``dataset.csv``."""
    from .grid import serialize_case

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    case = case or load_case(config.case)
    cts = config.contingency_set(case)
    rng = np.random.default_rng(config.seed)
    tasks = []
    text = serialize_case(case)
    lo, hi = config.load_scale
    for i in range(config.samples):
        scale = float(rng.uniform(lo, hi))
        tripped = str(cts[int(rng.integers(len(cts)))])
        noise = tuple(rng.uniform(-1.0, 1.0, len(case.generators)).tolist())
        tasks.append(_SampleTask(i, text, scale, tripped, noise, config.perturb, config.segments,
                                 config.sim_duration, config.sim_dt))
    results = _map(_run_sample, tasks, jobs)
    X, Y = [], []
    skipped = 0
    for idx, row, why in results:
        if row is None:
            skipped += 1
            log.warning("sample %d skipped: %s", idx, why)
            continue
        X.append(row[0])
        Y.append(row[1])
    if not X:
        raise ConfigError("every sample was infeasible; nothing to write")
    log.info("dataset: %d rows, %d skipped", len(X), skipped)
    tags = _split_tags(len(X), config.split, rng)
    ds = ScenarioDataset(feature_names(case), np.array(X), np.array(Y), tags)
    ds.validate_labels(case.f0)
    path = out / DATASET_FILE
    ds.write_csv(path)
    return path


# -- training ----------------------------------------------------------------------------

@dataclass
class TrainReport:
    model_path: Path
    test_mae: tuple[float, float]
    test_r2: tuple[float, float]
    epochs: int


def cmd_train(config: StudyConfig, out_dir: str | Path, dataset: str | Path | None = None) -> TrainReport:
    out = Path(out_dir)
    ds_path = Path(dataset) if dataset else out / DATASET_FILE
    if not ds_path.exists():
        raise FileNotFoundError(f"dataset file not found: {ds_path}")
    ds = ScenarioDataset.read_csv(ds_path)
    Xtr, Ytr = ds.part("train")
    Xva, Yva = ds.part("val")
    Xte, Yte = ds.part("test")
    if len(Xva) == 0:
        raise ConfigError("dataset has no validation rows")
    spec = MlpSpec(len(ds.feature_names), config.hidden)
    tc = TrainConfig(hidden=config.hidden, lr=config.lr, batch_size=config.batch_size,
                     max_epochs=config.max_epochs, patience=config.patience, seed=config.seed,
                     lr_decay=config.lr_decay)
    params, norm, hist = train(spec, Xtr, Ytr, Xva, Yva, tc)
    model = TrainedModel(params, norm, ds.feature_names)
    if len(Xte) == 0:
        Xte, Yte = Xva, Yva
    pred = model.predict(Xte)
    mae = tuple(float(v) for v in np.mean(np.abs(pred - Yte), axis=0))
    r2 = (r2_score(Yte[:, 0], pred[:, 0]), r2_score(Yte[:, 1], pred[:, 1]))
    model.metadata = {"seed": config.seed, "epochs": len(hist.train_loss),
                      "best_epoch": hist.best_epoch,
                      "train_loss": hist.train_loss[hist.best_epoch],
                      "val_loss": hist.best_val,
                      "test_mae": list(mae), "test_r2": list(r2)}
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / MODEL_FILE)
    with open(out / "loss_history.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for k, (a, b) in enumerate(zip(hist.train_loss, hist.val_loss)):
            w.writerow([k, f"{a:.10g}", f"{b:.10g}"])
    epochs = range(len(hist.train_loss))
    plots.save(plots.Chart("Training and validation loss", "epoch", "MSE (normalised)")
               .add("train", epochs, np.log10(hist.train_loss))
               .add("validation", epochs, np.log10(hist.val_loss)), out / "fig_loss.svg")
    for k, (name, unit) in enumerate((("RoCoF", "Hz/s"), ("FN", "Hz"))):
        plots.save(plots.Chart(f"{name}: predicted vs simulated (test)", f"simulated {unit}",
                               f"predicted {unit}", diagonal=True)
                   .add(f"R2 = {r2[k]:.4f}", Yte[:, k], pred[:, k], kind="points"),
                   out / f"fig_scatter_{name.lower()}.svg")
    log.info("trained: test MAE rocof %.4g Hz/s, fn %.4g Hz; R2 %.4f / %.4f",
             mae[0], mae[1], r2[0], r2[1])
    return TrainReport(out / MODEL_FILE, mae, r2, len(hist.train_loss))


# -- 24-hour benchmark ---------------------------------------------------------------------

@dataclass(frozen=True)
class _HourTask:
    hour: int
    case_json: str
    model_json: str
    config_json: str


@dataclass
class HourResult:
    hour: int
    rows: list[dict] = field(default_factory=list)
    dispatch: dict[str, dict[str, float]] = field(default_factory=dict)
    traces: dict[str, tuple[list[float], list[float]]] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)


def _windowed_rocof(t: np.ndarray, df: np.ndarray, window: float) -> tuple[np.ndarray, np.ndarray]:
    w = max(1, int(round(window / (t[1] - t[0]))))
    return t[w:], (df[w:] - df[:-w]) / (t[w] - t[0])


def _run_hour(task: _HourTask) -> HourResult:
    from .grid import parse_case

    cfg = StudyConfig.from_dict(json.loads(task.config_json))
    base = parse_case(task.case_json)
    scale = cfg.profile[task.hour - 1]
    res = HourResult(task.hour)
    try:
        case = scale_loads(base, scale)
    except CaseError as exc:
        res.errors.append(str(exc))
        return res
    model = TrainedModel.from_dict(json.loads(task.model_json))
    cts = cfg.contingency_set(case)
    builders = {
        T_OPF: lambda: build_topf(case, cfg.segments),
        L_FCOPF: lambda: build_lfcopf(case, cfg.r_lmt, cfg.f_lmt, cts[:1], cfg.segments),
        DNN_FCOPF: lambda: build_dnnfcopf(case, model, cfg.r_lmt, cfg.f_lmt, cts[:1], cfg.segments),
    }
    for variant in VARIANTS:
        row = {"hour": task.hour, "variant": variant}
        try:
            sol = solve_variant(builders[variant](), config=MilpConfig(node_limit=cfg.node_limit))
            if sol.dispatch:
                bad = check_dispatch(case, sol)
                if bad:
                    raise OpfError("; ".join(bad))
            if not sol.ok:
                raise OpfError(f"solver status {sol.status}")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UnsettledWarning)
                ver = verify_dispatch(case, sol, cts[0], cfg.sim_duration, cfg.sim_dt)
        except Exception as exc:  # per-hour failures are recorded, the day continues
            log.error("hour %d %s failed: %s", task.hour, variant, exc)
            res.errors.append(f"{variant}: {exc}")
            res.rows.append(row)
            continue
        row.update(cost=sol.cost, solve_ms=sol.solve_ms if cfg.timing else None,
                   pred_rocof=sol.pred_rocof, pred_fn=sol.pred_fn,
                   sim_rocof=ver.metrics.rocof_worst, sim_fn=ver.metrics.fn,
                   err_rocof_pct=ver.err_rocof_pct, err_fn_pct=ver.err_fn_pct,
                   nodes=sol.nodes)
        res.rows.append(row)
        res.dispatch[variant] = sol.dispatch
        if task.hour in cfg.detail_hours:
            step = max(1, int(round(0.01 / cfg.sim_dt)))
            res.traces[variant] = (ver.trace.t[::step].tolist(), ver.trace.delta_f[::step].tolist())
    return res


def write_results_csv(rows: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SOLUTION_HEADER)
        for r in rows:
            w.writerow([r["hour"], r["variant"]] + [_fmt(r.get(k)) for k in SOLUTION_HEADER[2:]])


def read_results_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SOLUTION_HEADER:
            raise ConfigError(f"{path}: unexpected header {reader.fieldnames}")
        rows = []
        for k, r in enumerate(reader, start=2):
            try:
                row = {"hour": int(r["hour"]), "variant": r["variant"]}
                for key in SOLUTION_HEADER[2:]:
                    row[key] = float(r[key]) if r[key] != "" else None
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{path}:{k}: malformed row ({exc})") from exc
            rows.append(row)
    return rows


def cmd_run_day(config: StudyConfig, out_dir: str | Path, model_path: str | Path | None = None,
                jobs: int = 1, case: PowerCase | None = None) -> list[HourResult]:
    from .grid import serialize_case

    out = Path(out_dir)
    mpath = Path(model_path) if model_path else out / MODEL_FILE
    if not mpath.exists():
        raise FileNotFoundError(f"model file not found: {mpath}")
    case = case or load_case(config.case)
    model = TrainedModel.load(mpath)
    if model.feature_names != feature_names(case):
        raise OpfError("model features do not match the case")
    tasks = [_HourTask(h, serialize_case(case), json.dumps(model.to_dict()),
                       json.dumps(asdict(config))) for h in range(1, 25)]
    results = _map(_run_hour, tasks, jobs)
    out.mkdir(parents=True, exist_ok=True)
    rows = [r for res in results for r in res.rows]
    write_results_csv(rows, out / RESULTS_FILE)
    with open(out / "day_dispatch.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hour", "variant", *case.gen_ids])
        for res in results:
            for v in VARIANTS:
                if v in res.dispatch:
                    w.writerow([res.hour, v, *(_fmt(res.dispatch[v][g]) for g in case.gen_ids)])
    _day_figures(rows, results, config, case, out)
    return results


def _by_variant(rows: list[dict], key: str) -> dict[str, tuple[list[int], list[float]]]:
    out = {}
    for v in VARIANTS:
        pts = [(r["hour"], r[key]) for r in rows if r["variant"] == v and r.get(key) is not None]
        out[v] = ([p[0] for p in pts], [p[1] for p in pts])
    return out


def _day_figures(rows, results, cfg: StudyConfig, case: PowerCase, out: Path) -> None:
    fn = plots.Chart("Simulated frequency nadir by hour", "hour", "FN (Hz)",
                     hlines=[(cfg.f_lmt, f"limit {cfg.f_lmt:g} Hz")])
    rc = plots.Chart("Simulated RoCoF by hour", "hour", "RoCoF (Hz/s)",
                     hlines=[(cfg.r_lmt, f"limit {cfg.r_lmt:g} Hz/s")])
    for v, (h, y) in _by_variant(rows, "sim_fn").items():
        fn.add(v, h, y, "line+points")
    for v, (h, y) in _by_variant(rows, "sim_rocof").items():
        rc.add(v, h, y, "line+points")
    plots.save(fn, out / "fig_fn_by_hour.svg")
    plots.save(rc, out / "fig_rocof_by_hour.svg")
    for key, name in (("err_fn_pct", "fn"), ("err_rocof_pct", "rocof")):
        ch = plots.Chart(f"Relative prediction error ({name.upper()}) by hour", "hour", "error (%)")
        for v, (h, y) in _by_variant(rows, key).items():
            if v != T_OPF:
                ch.add(v, h, y, "line+points")
        plots.save(ch, out / f"fig_error_{name}_by_hour.svg")
    for res in results:
        if not res.traces:
            continue
        df = plots.Chart(f"Frequency deviation, hour {res.hour}", "time (s)", "delta f (Hz)")
        rr = plots.Chart(f"Windowed RoCoF, hour {res.hour}", "time (s)", "RoCoF (Hz/s)",
                         hlines=[(cfg.r_lmt, "limit")])
        for v, (t, d) in res.traces.items():
            t, d = np.array(t), np.array(d)
            df.add(v, t, d)
            tw, s = _windowed_rocof(t, d, 10.0 / case.f0)
            rr.add(v, tw, s)
        plots.save(df, out / f"fig_df_hour{res.hour}.svg")
        plots.save(rr, out / f"fig_rocof_hour{res.hour}.svg")


# -- report ---------------------------------------------------------------------------------

def cmd_report(paths: Sequence[str | Path], hours: Sequence[int] = (1, 8),
               out_dir: str | Path | None = None) -> str:
    rows = []
    for p in paths:
        if not Path(p).exists():
            raise FileNotFoundError(f"results file not found: {p}")
        rows += read_results_csv(p)
    if not rows:
        raise ConfigError("no result rows to report (empty CSV)")
    lines = ["Per-variant summary over all hours", ""]
    lines.append(f"{'variant':<10} {'hours':>5} {'mean cost':>12} {'min sim FN':>11} "
                 f"{'min sim RoCoF':>14} {'max err RoCoF %':>16} {'max err FN %':>13}")
    for v in sorted({r["variant"] for r in rows}, key=lambda s: (VARIANTS + (s,)).index(s)):
        sel = [r for r in rows if r["variant"] == v and r["cost"] is not None]
        if not sel:
            lines.append(f"{v:<10} {0:>5} (no solved hours)")
            continue

        def agg(key, fn):
            vals = [r[key] for r in sel if r[key] is not None]
            return fn(vals) if vals else None

        def show(x, fmt):
            return format(x, fmt) if x is not None else "n/a"

        lines.append(f"{v:<10} {len(sel):>5} {show(agg('cost', np.mean), '12.2f')} "
                     f"{show(agg('sim_fn', min), '11.4f')} {show(agg('sim_rocof', min), '14.4f')} "
                     f"{show(agg('err_rocof_pct', max), '16.3f')} {show(agg('err_fn_pct', max), '13.3f')}")
    for h in hours:
        sel = {r["variant"]: r for r in rows if r["hour"] == h}
        if not sel:
            continue
        lines += ["", f"Hour {h}", f"{'':<22}" + "".join(f"{v:>14}" for v in sel)]

        def cell(r, key, fmt):
            return f"{r[key]:{fmt}}" if r.get(key) is not None else "N/A"

        for label, key, fmt in (("Total cost ($/h)", "cost", ".2f"), ("Solve time (ms)", "solve_ms", ".1f"),
                                ("RoCoF sim (Hz/s)", "sim_rocof", ".4f"), ("RoCoF error (%)", "err_rocof_pct", ".3f"),
                                ("FN sim (Hz)", "sim_fn", ".4f"), ("FN error (%)", "err_fn_pct", ".3f")):
            lines.append(f"{label:<22}" + "".join(f"{cell(r, key, fmt):>14}" for r in sel.values()))
        costs = {v: r["cost"] for v, r in sel.items() if r["cost"] is not None}
        if T_OPF in costs:
            ok = all(costs[T_OPF] <= c + 1e-6 for c in costs.values())
            lines.append(f"cost ordering (T-OPF lowest): {'holds' if ok else 'VIOLATED'}")
    text = "\n".join(lines) + "\n"
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "report.txt").write_text(text)
    return text
