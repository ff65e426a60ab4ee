"""Seeded Monte Carlo experiments over trials x SNR x detectors.

A scenario is a TOML file (see ``presets/``).  Each trial owns the RNG stream
``default_rng([seed, trial])`` and draws one user drop, one channel, one
symbol block and one unit-variance noise block; every SNR point and every
detector of that trial reuses them, so detector comparisons are paired.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import channel as chan
from . import detectors as det
from .errors import (DimensionError, EnumerationLimitError, NonIdentifiableError, ScenarioError,
                     SingularCorrelationError)
from .signal import calibrate_noise, complex_noise, complex_to_real_stack, generate_symbols
from .sync import align_and_extract, cca_sync

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "CSV_HEADER",
    "SyncConfig",
    "Scenario",
    "Realization",
    "ResultRow",
    "TrialOutcome",
    "load_scenario",
    "parse_scenario",
    "preset_names",
    "preset_path",
    "realize",
    "run_trial",
    "run_experiment",
    "expand_sweep",
    "sync_trace_for",
    "emit_csv",
    "read_csv",
    "emit_plotdata",
]

CSV_HEADER = ("scenario_id", "snr_db", "detector", "trials", "bit_errors", "bits_total", "ber",
              "mean_rho1", "wall_time_s")

# Failures that mark a single detector run as failed instead of aborting the experiment.
RECOVERABLE = (NonIdentifiableError, SingularCorrelationError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class SyncConfig:
    """Asynchronous reception: each BS records `t_tilde` columns, BS 0 starts
    at column 0 and BS 1 at a delay drawn uniformly from the window (or the
    fixed `delay`)."""

    t_tilde: int
    window: tuple[int, int] | None = None
    delay: int | None = None

    def resolved_window(self, t_block: int) -> tuple[int, int]:
        return tuple(self.window) if self.window is not None else (0, self.t_tilde - t_block)


@dataclass(frozen=True)
class Scenario:
    """Experiment definition; field names are the TOML keys."""

    scenario_id: str = "custom"
    cell_radius_m: float = 500.0
    m_antennas: tuple[int, int] = (10, 10)
    k_users: tuple[int, int] = (8, 8)
    k_edge: tuple[int, int] = (1, 1)
    center_spread_z: float = 0.3
    edge_band: tuple[float, float] = (0.95, 1.05)
    edge_sector_deg: float = 90.0
    tx_power_dbm: float = 25.0
    t_symbols: int = 800
    snr_grid_db: tuple[float, ...] = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    snr_reference: str = "total"
    trials: int = 1000
    carrier_ghz: float = 2.0
    l_paths: int = 8
    seed: int = 0
    detectors: tuple[str, ...] = ("cca_racma", "zf_sic")
    ml_max_users: int = 4
    sync: SyncConfig | None = None
    sweep: tuple[str, tuple] | None = None

    def __post_init__(self):
        _validate(self)

    @property
    def n_edge(self) -> int:
        return self.k_edge[0] + self.k_edge[1]

    @property
    def geometry(self) -> chan.Geometry:
        return chan.Geometry(cell_radius_m=self.cell_radius_m, edge_band=tuple(self.edge_band),
                             center_spread_z=self.center_spread_z,
                             edge_sector_deg=self.edge_sector_deg)


def _pair(name, value, kind):
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ScenarioError(f"{name}: expected 2 values, got {len(value)}")
        return tuple(kind(v) for v in value)
    return (kind(value), kind(value))


def _validate(sc: Scenario):
    def need(cond, msg):
        if not cond:
            raise ScenarioError(msg)

    for name in ("m_antennas", "k_users", "k_edge"):
        val = getattr(sc, name)
        need(len(val) == 2 and all(isinstance(v, (int, np.integer)) for v in val),
             f"{name}: expected two integers, got {val!r}")
        need(min(val) >= 0, f"{name}: counts must be >= 0, got {val}")
    for cell in (0, 1):
        need(sc.k_edge[cell] < sc.k_users[cell] or sc.k_users[cell] == sc.k_edge[cell] == 0,
             f"k_edge[{cell}]={sc.k_edge[cell]} must be < k_users[{cell}]={sc.k_users[cell]}")
    need(sc.n_edge >= 1, "k_edge: at least one edge user is required")
    need(sc.cell_radius_m > 0, f"cell_radius_m must be > 0, got {sc.cell_radius_m}")
    need(0 < sc.center_spread_z < 1, f"center_spread_z must lie in (0, 1), got {sc.center_spread_z}")
    need(len(sc.edge_band) == 2 and 0 < sc.edge_band[0] < sc.edge_band[1],
         f"edge_band must be [lower, upper] with 0 < lower < upper, got {sc.edge_band}")
    need(0 < sc.edge_sector_deg <= 180, f"edge_sector_deg must lie in (0, 180], got {sc.edge_sector_deg}")
    need(sc.t_symbols >= 1, f"t_symbols must be >= 1, got {sc.t_symbols}")
    need(len(sc.snr_grid_db) > 0, "snr_grid_db must be non-empty")
    need(all(math.isfinite(s) for s in sc.snr_grid_db), "snr_grid_db entries must be finite")
    need(sc.snr_reference in ("total", "per_antenna"),
         f"snr_reference must be 'total' or 'per_antenna', got {sc.snr_reference!r}")
    need(sc.trials >= 1, f"trials must be >= 1, got {sc.trials}")
    need(sc.carrier_ghz > 0, f"carrier_ghz must be > 0, got {sc.carrier_ghz}")
    need(sc.l_paths >= 1, f"l_paths must be >= 1, got {sc.l_paths}")
    need(sc.seed >= 0, f"seed must be >= 0, got {sc.seed}")
    need(sc.ml_max_users >= 0, f"ml_max_users must be >= 0, got {sc.ml_max_users}")
    need(len(sc.detectors) > 0, "detectors must be non-empty")
    unknown = [d for d in sc.detectors if d not in det.DETECTORS]
    need(not unknown, f"unknown detectors {unknown}; choose from {list(det.DETECTORS)}")
    need(len(set(sc.detectors)) == len(sc.detectors), f"duplicate detectors in {list(sc.detectors)}")
    if sc.sweep is not None:
        name, values = sc.sweep
        need(name in SWEEPABLE, f"sweep: {name!r} cannot be swept")
        need(len(values) > 0, "sweep: values must be non-empty")
        for v in values:
            _validate(replace(sc, sweep=None, **{name: v}))
    if sc.sync is not None:
        s = sc.sync
        need(s.t_tilde >= sc.t_symbols, f"sync.t_tilde={s.t_tilde} must be >= t_symbols={sc.t_symbols}")
        w_l, w_r = s.resolved_window(sc.t_symbols)
        need(0 <= w_l <= w_r <= s.t_tilde - sc.t_symbols,
             f"sync.window [{w_l}, {w_r}] must satisfy 0 <= w_L <= w_R <= t_tilde - t_symbols")
        if s.delay is not None:
            need(0 <= s.delay <= s.t_tilde - sc.t_symbols,
                 f"sync.delay={s.delay} must lie in [0, t_tilde - t_symbols]")


_SCALARS = {
    "scenario_id": str, "cell_radius_m": float, "center_spread_z": float, "edge_sector_deg": float,
    "tx_power_dbm": float, "t_symbols": int, "snr_reference": str, "trials": int,
    "carrier_ghz": float, "l_paths": int, "seed": int, "ml_max_users": int,
}
_PAIRS = {"m_antennas": int, "k_users": int, "k_edge": int, "edge_band": float}
_LISTS = {"snr_grid_db": float, "detectors": str}
_SYNC_KEYS = {"t_tilde", "window", "delay"}
SWEEPABLE = {**{k: v for k, v in _SCALARS.items() if k not in ("scenario_id", "seed", "trials")},
             **_PAIRS}


def _typed(name, value, kind):
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind is str and isinstance(value, str):
        return value
    raise ScenarioError(f"{name}: expected {kind.__name__}, got {value!r}")


def parse_scenario(data: dict, *, source: str = "<dict>") -> Scenario:
    """Scenario from an already-parsed TOML table.  Unknown keys are errors."""
    kwargs = {}
    for key, value in data.items():
        try:
            if key in _SCALARS:
                kwargs[key] = _typed(key, value, _SCALARS[key])
            elif key in _PAIRS:
                raw = value if isinstance(value, list) else [value, value]
                kwargs[key] = _pair(key, [_typed(key, v, _PAIRS[key]) for v in raw], _PAIRS[key])
            elif key in _LISTS:
                if not isinstance(value, list):
                    raise ScenarioError(f"{key}: expected a list, got {value!r}")
                kwargs[key] = tuple(_typed(key, v, _LISTS[key]) for v in value)
            elif key == "sync":
                if not isinstance(value, dict):
                    raise ScenarioError(f"sync: expected a table, got {value!r}")
                extra = set(value) - _SYNC_KEYS
                if extra:
                    raise ScenarioError(f"sync: unknown keys {sorted(extra)}")
                if "t_tilde" not in value:
                    raise ScenarioError("sync: t_tilde is required")
                window = value.get("window")
                if window is not None:
                    window = _pair("sync.window", [_typed("sync.window", v, int) for v in window], int)
                delay = value.get("delay")
                kwargs[key] = SyncConfig(t_tilde=_typed("sync.t_tilde", value["t_tilde"], int),
                                         window=window,
                                         delay=None if delay is None else _typed("sync.delay", delay, int))
            elif key == "sweep":
                if not isinstance(value, dict) or len(value) != 1:
                    raise ScenarioError("sweep: expected a table with exactly one key")
                (name, values), = value.items()
                if name not in SWEEPABLE:
                    raise ScenarioError(f"sweep: {name!r} cannot be swept; choose from {sorted(SWEEPABLE)}")
                if not isinstance(values, list) or not values:
                    raise ScenarioError(f"sweep.{name}: expected a non-empty list")
                if name in _PAIRS:
                    vals = tuple(_pair(f"sweep.{name}", [_typed(f"sweep.{name}", x, _PAIRS[name])
                                                         for x in (v if isinstance(v, list) else [v, v])],
                                       _PAIRS[name]) for v in values)
                else:
                    vals = tuple(_typed(f"sweep.{name}", v, _SCALARS[name]) for v in values)
                kwargs[key] = (name, vals)
            else:
                raise ScenarioError(f"unknown key {key!r}")
        except ScenarioError as exc:
            raise ScenarioError(f"{source}: {exc}") from None
    try:
        return Scenario(**kwargs)
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from None


def preset_names() -> list[str]:
    root = resources.files("ccaedge.presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def preset_path(name: str):
    path = resources.files("ccaedge.presets").joinpath(f"{name}.toml")
    if not path.is_file():
        raise ScenarioError(f"no preset named {name!r}; available: {preset_names()}")
    return path


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file; a bare preset name is also accepted."""
    p = Path(path)
    if not p.exists() and not str(path).endswith(".toml") and "/" not in str(path):
        src = preset_path(str(path))
        text, source = src.read_text(), f"preset {path}"
    else:
        try:
            text = p.read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario {p}: {exc}") from None
        source = str(p)
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    return parse_scenario(data, source=source)


@dataclass(frozen=True)
class Realization:
    """Everything random in one trial, independent of the SNR."""

    drop: chan.UserDrop
    channels: chan.ChannelRealization
    symbols: np.ndarray  # (T, K)
    unit_noise: tuple[np.ndarray, np.ndarray]
    delay: int = 0
    pad_symbols: tuple[np.ndarray, np.ndarray] | None = None
    pad_noise: tuple[np.ndarray, np.ndarray] | None = None

    def digest(self) -> str:
        """Hash of the realization, for checking that detectors saw the same data."""
        h = hashlib.sha256()
        for arr in (self.channels.h[0], self.channels.h[1], self.symbols, *self.unit_noise):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(str(self.delay).encode())
        return h.hexdigest()[:16]


def realize(sc: Scenario, trial_index: int) -> Realization:
    rng = np.random.default_rng([sc.seed, trial_index])
    counts = (*sc.k_users, *sc.k_edge)
    drop = chan.drop_users(sc.geometry, counts, rng)
    channels = chan.draw_channel(drop, sc.geometry, sc.m_antennas, sc.l_paths, sc.carrier_ghz, rng,
                                 tx_power_dbm=sc.tx_power_dbm)
    k = drop.n_users
    t = sc.t_symbols
    symbols = generate_symbols(t, k, rng)
    noise = tuple(complex_noise((m, t), rng) for m in sc.m_antennas)
    if sc.sync is None:
        return Realization(drop, channels, symbols, noise)
    n_pad = sc.sync.t_tilde - t
    w_l, w_r = sc.sync.resolved_window(t)
    delay = sc.sync.delay if sc.sync.delay is not None else int(rng.integers(w_l, w_r + 1))
    pad_s = tuple(generate_symbols(n_pad, k, rng) if n_pad else np.zeros((0, k)) for _ in range(2))
    pad_w = tuple(complex_noise((m, n_pad), rng) for m in sc.m_antennas)
    return Realization(drop, channels, symbols, noise, delay, pad_s, pad_w)


def _received(sc: Scenario, rz: Realization, sigma: float):
    """Per-BS received blocks (aligned, or long blocks when sync is on)."""
    ys = [rz.channels.h[b] @ rz.symbols.T + sigma * rz.unit_noise[b] for b in (0, 1)]
    if sc.sync is None:
        return ys
    longs = []
    for b, offset in ((0, 0), (1, rz.delay)):
        pad = rz.channels.h[b] @ rz.pad_symbols[b].T + sigma * rz.pad_noise[b]
        longs.append(np.concatenate([pad[:, :offset], ys[b], pad[:, offset:]], axis=1))
    return longs


def _sigma2(sc: Scenario, rz: Realization, snr_db: float) -> float:
    return calibrate_noise(snr_db, rz.channels, rz.drop.edge_ids,
                           per_antenna=sc.snr_reference == "per_antenna")


def sync_trace_for(sc: Scenario, rz: Realization, snr_db: float):
    if sc.sync is None:
        raise ScenarioError("scenario has no [sync] table")
    y1, y2 = _received(sc, rz, math.sqrt(_sigma2(sc, rz, snr_db)))
    gamma = 10.0 ** (snr_db / 10.0)
    return cca_sync(complex_to_real_stack(y1), complex_to_real_stack(y2), sc.t_symbols,
                    sc.sync.resolved_window(sc.t_symbols), 0, gamma_e=gamma)


def _records_for(sc: Scenario, rz: Realization, snr_db: float) -> list[det.DetectionRecord]:
    sigma = math.sqrt(_sigma2(sc, rz, snr_db))
    ys = _received(sc, rz, sigma)
    t = sc.t_symbols
    edge = rz.drop.edge_ids
    truth = rz.symbols[:, edge]
    aux_sync = {}
    if sc.sync is not None:
        r1, r2 = complex_to_real_stack(ys[0]), complex_to_real_stack(ys[1])
        trace = cca_sync(r1, r2, t, sc.sync.resolved_window(t), 0,
                         gamma_e=10.0 ** (snr_db / 10.0))
        a1, a2 = align_and_extract(ys[0], ys[1], trace, t)
        ys = [a1, a2]
        aux_sync = {"tau_star": trace.tau_star, "tau_true": rz.delay}
    h_c = [rz.channels.h[b][:, rz.drop.center_ids(b)] for b in (0, 1)]

    records = []
    sic_cache = {}

    def sic(kind):
        if kind not in sic_cache:
            if kind == "zf":
                sic_cache[kind] = det.zf_sic_edge_detect(ys[0], ys[1], h_c[0], h_c[1], len(edge))
            else:
                sic_cache[kind] = det.ml_sic_edge_detect(ys[0], ys[1], h_c[0], h_c[1], len(edge),
                                                         sc.ml_max_users)
        return sic_cache[kind]

    for name in sc.detectors:
        try:
            if name == "cca_racma":
                out = det.detect_cca_racma(complex_to_real_stack(ys[0]), complex_to_real_stack(ys[1]),
                                           len(edge))
                aux = {"rho": out.canonical.rho, "residual": out.unmix.residual, **aux_sync}
                records.append(det.bit_error_rate(out.s_hat, truth, name, aux))
            elif name in ("zf_sic", "ml_sic"):
                records.append(det.bit_error_rate(sic(name[:2]).joint, truth, name))
            else:  # best-of-two single-BS variants, selected with the ground truth
                per = [det.bit_error_rate(s, truth, name, {"oracle_selected": True})
                       for s in sic(name[:2]).per_bs]
                records.append(min(per, key=lambda r: r.bit_errors))
        except RECOVERABLE as exc:
            records.append(det.DetectionRecord(name, 0, 0, np.zeros(len(edge), int),
                                               {"failed": f"{type(exc).__name__}: {exc}"}))
    return records


def run_trial(sc: Scenario, snr_db: float, trial_index: int) -> list[det.DetectionRecord]:
    """Run every enabled detector on one trial's realization at one SNR.

    Records of failed detector runs have ``bits_total == 0`` and the reason
    in ``aux["failed"]``.
    """
    try:
        return _records_for(sc, realize(sc, trial_index), snr_db)
    except (EnumerationLimitError, DimensionError, ScenarioError) as exc:
        raise type(exc)(f"trial {trial_index}, snr {snr_db} dB: {exc}") from exc


@dataclass(frozen=True)
class TrialOutcome:
    """Per-(snr, detector) counts of one trial: (bit_errors, bits_total, rho1 or None, ok)."""

    trial_index: int
    cells: dict


def _run_trial_all(args) -> TrialOutcome:
    sc, trial_index = args
    try:
        rz = realize(sc, trial_index)
        cells = {}
        for snr in sc.snr_grid_db:
            for rec in _records_for(sc, rz, snr):
                rho = rec.aux.get("rho")
                cells[(snr, rec.detector_id)] = (
                    rec.bit_errors, rec.bits_total,
                    float(rho[0]) if rho is not None and len(rho) else None,
                    "failed" not in rec.aux,
                )
        return TrialOutcome(trial_index, cells)
    except (EnumerationLimitError, DimensionError, ScenarioError) as exc:
        raise type(exc)(f"trial {trial_index}: {exc}") from exc


@dataclass(frozen=True)
class ResultRow:
    scenario_id: str
    snr_db: float
    detector: str
    trials: int
    bit_errors: int
    bits_total: int
    ber: float
    mean_rho1: float
    wall_time_s: float = 0.0
    failures: int = field(default=0, compare=False)

    def csv_fields(self) -> list[str]:
        return [self.scenario_id, repr(float(self.snr_db)), self.detector, str(self.trials),
                str(self.bit_errors), str(self.bits_total), repr(float(self.ber)),
                repr(float(self.mean_rho1)), repr(float(self.wall_time_s))]


def _label(value) -> str:
    if isinstance(value, tuple):
        return "/".join(_label(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def expand_sweep(sc: Scenario) -> list[Scenario]:
    """One scenario per sweep value, with ``[name=value]`` appended to the id."""
    if sc.sweep is None:
        return [sc]
    name, values = sc.sweep
    return [replace(sc, sweep=None, scenario_id=f"{sc.scenario_id}[{name}={_label(v)}]", **{name: v})
            for v in values]


def run_experiment(sc: Scenario, *, workers: int = 1, timing: bool = False,
                   progress=None) -> list[ResultRow]:
    """Aggregate all trials into one row per (sweep point, snr, detector).

    The result depends only on the scenario: trials are reduced in index
    order with integer sums and exactly rounded float sums, whatever
    `workers` is.  `wall_time_s` is 0.0 unless `timing` is set (timing makes
    the CSV non-reproducible).
    """
    if sc.sweep is not None:
        return [row for point in expand_sweep(sc)
                for row in run_experiment(point, workers=workers, timing=timing, progress=progress)]
    start = time.perf_counter()
    jobs = [(sc, i) for i in range(sc.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_trial_all, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        outcomes = []
        for job in jobs:
            outcomes.append(_run_trial_all(job))
            if progress is not None:
                progress(len(outcomes), len(jobs))
    outcomes.sort(key=lambda o: o.trial_index)
    elapsed = time.perf_counter() - start if timing else 0.0

    rows = []
    for snr in sorted(sc.snr_grid_db):
        for name in sorted(sc.detectors):
            errs = bits = ok = 0
            rhos = []
            for o in outcomes:
                e, b, rho, good = o.cells[(snr, name)]
                if good:
                    errs += e
                    bits += b
                    ok += 1
                    if rho is not None:
                        rhos.append(rho)
            mean_rho = math.fsum(sorted(rhos)) / len(rhos) if rhos else float("nan")
            rows.append(ResultRow(sc.scenario_id, float(snr), name, ok, errs, bits,
                                  errs / bits if bits else 0.0, mean_rho, elapsed,
                                  failures=sc.trials - ok))
    return rows


def _csv_text(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


def emit_csv(rows, path) -> None:
    """Write the result rows; LF line endings and ``repr`` floats."""
    if not rows:
        raise ValueError("no rows to write")
    p = Path(path)
    try:
        with open(p, "w", newline="", encoding="utf-8") as fh:
            fh.write(_csv_text(rows))
    except OSError as exc:
        raise OSError(f"cannot write {p}: {exc}") from exc


def read_csv(path) -> list[ResultRow]:
    p = Path(path)
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"{p}: unexpected header {header}")
        return [ResultRow(r[0], float(r[1]), r[2], int(r[3]), int(r[4]), int(r[5]), float(r[6]),
                          float(r[7]), float(r[8])) for r in reader]


def emit_plotdata(rows, path) -> None:
    """Per-detector ``snr ber`` series separated by blank lines (gnuplot index
    blocks).  Zero-error points carry the counted bits as the floor."""
    if not rows:
        raise ValueError("no rows to write")
    lines = []
    for name in sorted({r.detector for r in rows}):
        lines.append(f"# detector {name}")
        lines.append("# snr_db ber bit_errors bits_total")
        for r in sorted((r for r in rows if r.detector == name), key=lambda r: r.snr_db):
            lines.append(f"{r.snr_db!r} {r.ber!r} {r.bit_errors} {r.bits_total}")
        lines.append("")
        lines.append("")
    p = Path(path)
    try:
        p.write_text("\n".join(lines), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {p}: {exc}") from exc


def scenario_to_dict(sc: Scenario) -> dict:
    out = {f.name: getattr(sc, f.name) for f in fields(sc)}
    if sc.sync is not None:
        out["sync"] = {k: v for k, v in asdict(sc.sync).items() if v is not None}
    else:
        del out["sync"]
    if sc.sweep is not None:
        out["sweep"] = {sc.sweep[0]: list(sc.sweep[1])}
    else:
        del out["sweep"]
    return out


def with_overrides(sc: Scenario, **changes) -> Scenario:
    return replace(sc, **{k: v for k, v in changes.items() if v is not None})
