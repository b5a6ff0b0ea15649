"""End-to-end reduced-order-model workflow with on-disk artifacts.

Stages, each reading only what earlier stages persisted under ``out``::

    gen        samples.csv, signals/*.csv, signals/manifest.json, config.json
    identify   kernels/point_###.json
    train      models/{gpr,fcnn}_{linear,nonlinear}.json, models/steady_gpr.json
    predict    predicted/{interp}/point_###.json
    report     report/validation.csv, report/summary.json, report/hysteresis/*.csv

``run_algorithm1`` chains them. Per-point work may run on a thread pool;
results are always gathered in point order and per-point seeds derive from
the master seed, so artifacts are byte-identical for identical configs.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fcnn, gpr
from .identification import (KernelSet, ResponsePair, identify_linear, identify_second_and_third,
                             identify_second_order, reconstruct, remove_steady_offset)
from .laguerre import build_basis
from .sampling import ParameterBox, SamplePlan, lhs, split
from .signals import (TimeGrid, TimeSignal, make_sinusoid, make_step, read_signal_csv,
                      write_signal_csv)
from .synthaero import (ParameterPoint, PlantConfig, exact_response_oracle, simulate,
                        steady_lift)

log = logging.getLogger(__name__)

ROLE_NAMES = ("small", "large", "extra")
INTERPOLATORS = ("gpr", "fcnn")


class StageError(RuntimeError):
    """Failure inside a pipeline stage, tagged with the stage and point."""

    def __init__(self, stage: str, message: str, point=None):
        self.stage = stage
        self.point = point
        where = f" at point {point}" if point is not None else ""
        super().__init__(f"[{stage}]{where}: {message}")


class ManifestError(ValueError):
    pass


# -- configuration -------------------------------------------------------------

@dataclass
class RunConfig:
    """Every knob of a run. Serialized as ``config.json`` in the output directory."""

    mach_range: tuple = (0.40, 0.85)
    alpha0_range: tuple = (-2.0, 8.0)
    n_samples: int = 70
    split_fractions: tuple = (45 / 70, 15 / 70, 10 / 70)
    dt: float = 0.5
    n_steps: int = 240
    memory_depth: int | None = None
    laguerre: bool = True
    laguerre_order: int = 15
    laguerre_scale: float | None = None
    step_amplitudes: tuple = (1.0, 2.0)
    reduced_frequency: float = 0.3
    sinusoid_amplitudes: tuple = (1.0, 2.0)
    plant: dict = field(default_factory=dict)
    interpolator: str = "both"
    search_trials: int = 10
    max_epochs: int = 5000
    patience: int = 200
    gpr_shared: bool = True
    gpr_restarts: int = 5
    steady_features: bool = True
    seed: int = 0
    n_jobs: int = 1
    out: str = "out"

    def __post_init__(self):
        for name in ("mach_range", "alpha0_range", "split_fractions", "step_amplitudes",
                     "sinusoid_amplitudes"):
            setattr(self, name, tuple(getattr(self, name)))
        self.validate()

    @property
    def depth(self) -> int:
        return self.n_steps if self.memory_depth is None else int(self.memory_depth)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.dt, self.n_steps)

    @property
    def box(self) -> ParameterBox:
        return ParameterBox(self.mach_range, self.alpha0_range)

    def plant_config(self) -> PlantConfig:
        d = dict(self.plant)
        d.setdefault("mach_range", self.mach_range)
        d.setdefault("alpha0_range", self.alpha0_range)
        d.setdefault("seed", self.seed)
        return PlantConfig.from_dict(d)

    def validate(self):
        if not 1 <= self.depth <= self.n_steps:
            raise ValueError(f"memory depth {self.depth} must lie in [1, n_steps={self.n_steps}]")
        if self.interpolator not in ("gpr", "fcnn", "both", "none"):
            raise ValueError(f"unknown interpolator {self.interpolator!r}")
        if self.n_samples < 2:
            raise ValueError("need at least two samples")
        amps = self.step_amplitudes
        if not 2 <= len(amps) <= 3 or any(b <= a for a, b in zip(amps, amps[1:])) or amps[0] <= 0:
            raise ValueError(f"step amplitudes must be 2 or 3 increasing positive values: {amps}")
        if self.laguerre and not 1 <= self.laguerre_order <= self.depth:
            raise ValueError("Laguerre order must lie in [1, memory depth]")
        if self.search_trials < 1:
            raise ValueError("search_trials must be at least 1")
        self.plant_config()
        self.box

    def interpolators(self) -> tuple:
        return {"both": INTERPOLATORS, "none": ("none",)}.get(self.interpolator, (self.interpolator,))

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dumps(self) -> str:
        return _dumps(self.to_dict())


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, newline="\n")


def derived_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def _map(fn, items, n_jobs):
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# -- sampling and data generation ---------------------------------------------

def sample_points(config: RunConfig) -> SamplePlan:
    pts = lhs(config.box, config.n_samples, config.seed)
    return split(pts, config.split_fractions, config.seed)


def generate(config: RunConfig) -> SamplePlan:
    """Sample the box, simulate step responses and write signals plus manifest."""
    out = Path(config.out)
    plant = config.plant_config()
    plan = sample_points(config)
    _write(out / "config.json", config.dumps())
    _write(out / "samples.csv", plan.to_csv())
    grid = config.grid
    sig_dir = out / "signals"
    sig_dir.mkdir(parents=True, exist_ok=True)

    def one(i):
        point = plan.points[i]
        cl0 = steady_lift(plant, point)
        responses = []
        for j, amp in enumerate(config.step_amplitudes):
            u = make_step(grid, amp)
            try:
                # the small step probes the linear plant, larger ones the nonlinear one
                y = simulate(plant, point, u, nonlinear=j > 0, seed=derived_seed(config.seed, i, j))
            except Exception as exc:
                raise StageError("gen", str(exc), i) from exc
            stem = f"point_{i:03d}_r{j}"
            write_signal_csv(u, sig_dir / f"{stem}_input.csv")
            write_signal_csv(y + cl0, sig_dir / f"{stem}_output.csv")
            responses.append({"amplitude_deg": amp, "input_csv": f"{stem}_input.csv",
                              "output_csv": f"{stem}_output.csv"})
        return {"index": i, "mach": point.mach, "alpha0": point.alpha0, "steady_cl": cl0,
                "responses": responses}

    entries = _map(one, range(len(plan.points)), config.n_jobs)
    _write(sig_dir / "manifest.json", _dumps({"points": entries}))
    return plan


# -- ingestion -------------------------------------------------------------------

@dataclass(eq=False)
class DatasetRecord:
    """One measured step response of one parameter point."""

    point_index: int
    point: ParameterPoint
    input: TimeSignal
    output: TimeSignal
    amplitude: float
    role: str
    steady_offset: float
    provenance: str = "external"
    input_path: str = ""
    output_path: str = ""

    def pair(self) -> ResponsePair:
        return ResponsePair(self.input, remove_steady_offset(self.output, self.steady_offset),
                            self.point)


@dataclass
class IngestResult:
    records: list
    errors: list

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def by_point(self) -> dict:
        groups: dict = {}
        for r in self.records:
            groups.setdefault(r.point_index, []).append(r)
        return groups


def _number(entry, key, where, optional=False):
    v = entry.get(key)
    if v is None and optional:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ManifestError(f"{where}: field {key!r} must be a finite number, got {v!r}")
    return float(v)


def ingest_external(directory, provenance: str = "external") -> IngestResult:
    """Load and validate a dataset described by ``manifest.json``.

    Structural manifest errors raise :class:`ManifestError`. Problems confined
    to a point or record (missing or malformed files, grid mismatch,
    non-increasing amplitudes) reject that record or point and are collected
    in ``errors`` while the rest is ingested.
    """
    directory = Path(directory)
    path = directory / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError:
        raise ManifestError(f"no manifest.json in {directory}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(manifest, dict) or not isinstance(manifest.get("points"), list):
        raise ManifestError(f"{path}: expected an object with a 'points' list")

    records, errors = [], []
    grid = None
    for k, entry in enumerate(manifest["points"]):
        where = f"points[{k}]"
        try:
            if not isinstance(entry, dict):
                raise ManifestError(f"{where}: expected an object")
            index = int(entry.get("index", k))
            point = ParameterPoint(_number(entry, "mach", where), _number(entry, "alpha0", where),
                                   _number(entry, "steady_cl", where),
                                   _number(entry, "steady_cm", where, optional=True))
            responses = entry.get("responses")
            if not isinstance(responses, list) or not responses:
                raise ManifestError(f"{where}: 'responses' must be a non-empty list")
            if len(responses) > len(ROLE_NAMES):
                raise ManifestError(f"{where}: at most {len(ROLE_NAMES)} responses per point")
            amps = []
            for r in responses:
                if not isinstance(r, dict):
                    raise ManifestError(f"{where}: response entries must be objects")
                amps.append(_number(r, "amplitude_deg", where))
                for key in ("input_csv", "output_csv"):
                    if not isinstance(r.get(key), str):
                        raise ManifestError(f"{where}: response field {key!r} must be a path")
            mags = [abs(a) for a in amps]
            if any(b <= a for a, b in zip(mags, mags[1:])) or mags[0] == 0:
                raise ManifestError(f"{where}: amplitudes must strictly increase in magnitude, got {amps}")
        except (ManifestError, ValueError, TypeError) as exc:
            errors.append(str(exc))
            continue
        for j, (r, amp) in enumerate(zip(responses, amps)):
            rw = f"{where}.responses[{j}]"
            try:
                u = read_signal_csv(directory / r["input_csv"])
                y = read_signal_csv(directory / r["output_csv"])
                if u.grid != y.grid:
                    raise ValueError("input and output grids differ")
                if grid is None:
                    grid = u.grid
                elif u.grid != grid:
                    raise ValueError(f"grid (dt={u.grid.dt}, n={u.grid.n}) does not match "
                                     f"dataset grid (dt={grid.dt}, n={grid.n})")
            except (OSError, ValueError) as exc:
                errors.append(f"{rw}: {exc}")
                continue
            records.append(DatasetRecord(index, point, u, y, amp, ROLE_NAMES[j],
                                         point.steady_cl, provenance,
                                         str(directory / r["input_csv"]),
                                         str(directory / r["output_csv"])))
    return IngestResult(records, errors)


# -- identification --------------------------------------------------------------

def make_basis(config: RunConfig):
    if not config.laguerre:
        return None
    return build_basis(config.grid, config.depth, config.laguerre_order, config.laguerre_scale)


def identify_point(records, config: RunConfig, basis=None) -> KernelSet:
    """Kernels of one point from its small (and larger) step responses."""
    roles = {r.role: r for r in records}
    if "small" not in roles:
        raise ValueError("no small-amplitude response")
    m = config.depth
    small = roles["small"]
    h1 = identify_linear(small.pair(), m, basis)
    h2 = h3 = None
    if "large" in roles and "extra" in roles:
        h2, h3 = identify_second_and_third(h1, roles["large"].pair(), roles["extra"].pair(), m, basis)
    elif "large" in roles:
        h2 = identify_second_order(h1, roles["large"].pair(), m, basis)
    amps = [abs(r.amplitude) for r in sorted(records, key=lambda r: ROLE_NAMES.index(r.role))]
    return KernelSet(h1, h2, h3, small.input.grid.dt, amps, small.steady_offset)


def identify_dataset(dataset: IngestResult, config: RunConfig, out=None) -> dict:
    """Identify every point of ``dataset``; writes ``kernels/`` when ``out`` is given."""
    basis = make_basis(config)
    groups = dataset.by_point()
    order = sorted(groups)

    def one(i):
        try:
            return identify_point(groups[i], config, basis)
        except Exception as exc:
            raise StageError("identify", str(exc), i) from exc

    kernels = dict(zip(order, _map(one, order, config.n_jobs)))
    if out is not None:
        kdir = Path(out) / "kernels"
        for i, ks in kernels.items():
            p = groups[i][0].point
            d = ks.to_dict()
            d["point"] = {"index": i, "mach": p.mach, "alpha0": p.alpha0,
                          "steady_cl": p.steady_cl, "steady_cm": p.steady_cm}
            _write(kdir / f"point_{i:03d}.json", _dumps(d))
    return kernels


def load_kernels(out) -> dict:
    """Kernels and their parameter points from ``out/kernels``."""
    kernels, points = {}, {}
    for path in sorted((Path(out) / "kernels").glob("point_*.json")):
        d = json.loads(path.read_text())
        p = d.pop("point")
        kernels[p["index"]] = KernelSet.from_dict(d)
        points[p["index"]] = ParameterPoint(p["mach"], p["alpha0"], p["steady_cl"], p["steady_cm"])
    if not kernels:
        raise StageError("identify", f"no kernels found in {Path(out) / 'kernels'}")
    return kernels, points


def identify(config: RunConfig) -> dict:
    dataset = ingest_external(Path(config.out) / "signals", provenance="synthetic")
    if dataset.errors:
        raise StageError("ingest", "; ".join(dataset.errors))
    return identify_dataset(dataset, config, config.out)


# -- interpolation -------------------------------------------------------------------

def features(point: ParameterPoint, config: RunConfig) -> np.ndarray:
    if config.steady_features:
        return point.features()
    return np.array([point.mach, point.alpha0])


class KernelPredictor:
    """Maps a parameter point to (h1, h2) with separate linear and nonlinear models."""

    def __init__(self, kind: str, linear, nonlinear, dt: float, amplitudes):
        self.kind = kind
        self.linear = linear
        self.nonlinear = nonlinear
        self.dt = dt
        self.amplitudes = list(amplitudes)

    def _eval(self, model, x):
        if self.kind == "gpr":
            return gpr.predict(model, x)[0]
        return fcnn.predict(model, x)

    def predict(self, x) -> KernelSet:
        h1 = self._eval(self.linear, x)
        h2 = None if self.nonlinear is None else self._eval(self.nonlinear, x)
        return KernelSet(h1, h2, None, self.dt, self.amplitudes[:1 + (h2 is not None)])

    def to_dict(self, part: str) -> dict:
        model = self.linear if part == "linear" else self.nonlinear
        d = model.to_dict()
        d["dt"] = self.dt
        d["amplitudes"] = self.amplitudes
        return d

    @classmethod
    def load(cls, kind: str, models_dir) -> "KernelPredictor":
        models_dir = Path(models_dir)
        loader = gpr.GprModel.from_dict if kind == "gpr" else fcnn.FcnnModel.from_dict
        parts = {}
        meta = None
        for part in ("linear", "nonlinear"):
            path = models_dir / f"{kind}_{part}.json"
            if path.exists():
                d = json.loads(path.read_text())
                meta = d
                parts[part] = loader(d)
        if "linear" not in parts:
            raise StageError("predict", f"no {kind} model in {models_dir}")
        return cls(kind, parts["linear"], parts.get("nonlinear"), meta["dt"], meta["amplitudes"])


def _training_arrays(kernels, points, indices, config):
    x = np.array([features(points[i], config) for i in indices])
    h1 = np.array([kernels[i].h1 for i in indices])
    has_h2 = all(kernels[i].h2 is not None for i in indices)
    h2 = np.array([kernels[i].h2 for i in indices]) if has_h2 else None
    return x, h1, h2


def train_gpr(kernels, points, plan: SamplePlan, config: RunConfig) -> KernelPredictor:
    """GP models fitted on the union of the training and test subsets."""
    idx = sorted(plan.indices("train") + plan.indices("test"))
    x, h1, h2 = _training_arrays(kernels, points, idx, config)
    fit = lambda y, s: gpr.fit(x, y, shared=config.gpr_shared, n_restarts=config.gpr_restarts,
                               seed=derived_seed(config.seed, 100, s))
    lin = fit(h1, 0)
    nl = fit(h2, 1) if h2 is not None else None
    k0 = kernels[idx[0]]
    return KernelPredictor("gpr", lin, nl, k0.dt, k0.amplitudes)


def train_fcnn(kernels, points, plan: SamplePlan, config: RunConfig):
    """Networks from a Bayesian hyperparameter search, early-stopped on the test subset."""
    tr, te = plan.indices("train"), plan.indices("test")
    xtr, h1tr, h2tr = _training_arrays(kernels, points, tr, config)
    xte, h1te, h2te = _training_arrays(kernels, points, te, config)
    space = fcnn.HyperparameterSpace()
    histories = {}

    def search(ytr, yte, s):
        def objective(hp, seed):
            model = fcnn.train(xtr, ytr, xte, yte, hp, seed, config.max_epochs, config.patience)
            return model.test_mse, model
        res = fcnn.bayesian_search(space, objective, config.search_trials,
                                   derived_seed(config.seed, 200, s), n_jobs=config.n_jobs)
        if res.artifact is None:
            raise StageError("train", "every FCNN trial failed")
        return res

    lin = search(h1tr, h1te, 0)
    histories["linear"] = lin.history()
    nl = None
    if h2tr is not None:
        nl = search(h2tr, h2te, 1)
        histories["nonlinear"] = nl.history()
    k0 = kernels[tr[0]]
    pred = KernelPredictor("fcnn", lin.artifact, nl.artifact if nl else None, k0.dt, k0.amplitudes)
    return pred, histories


def train_steady_model(points, plan: SamplePlan, config: RunConfig):
    """GP for steady lift as a function of (Mach, incidence), for unseen query points."""
    idx = sorted(plan.indices("train") + plan.indices("test"))
    x = np.array([[points[i].mach, points[i].alpha0] for i in idx])
    y = np.array([points[i].steady_cl for i in idx])
    return gpr.fit(x, y, n_restarts=config.gpr_restarts, seed=derived_seed(config.seed, 300))


def train(config: RunConfig) -> dict:
    out = Path(config.out)
    plan = SamplePlan.read_csv(out / "samples.csv", config.seed)
    kernels, points = load_kernels(out)
    mdir = out / "models"
    predictors = {}
    try:
        steady = train_steady_model(points, plan, config)
        _write(mdir / "steady_gpr.json", _dumps(steady.to_dict()))
        for kind in config.interpolators():
            if kind == "gpr":
                pred = train_gpr(kernels, points, plan, config)
            elif kind == "fcnn":
                pred, hist = train_fcnn(kernels, points, plan, config)
                _write(mdir / "fcnn_search.json", _dumps(hist))
            else:
                continue
            for part in ("linear", "nonlinear"):
                if part == "linear" or pred.nonlinear is not None:
                    _write(mdir / f"{kind}_{part}.json", _dumps(pred.to_dict(part)))
            predictors[kind] = pred
    except StageError:
        raise
    except Exception as exc:
        raise StageError("train", str(exc)) from exc
    return predictors


def predict_validation(config: RunConfig) -> dict:
    """Predicted kernels for the validation subset, per interpolator."""
    out = Path(config.out)
    plan = SamplePlan.read_csv(out / "samples.csv", config.seed)
    kernels, points = load_kernels(out)
    result = {}
    for kind in config.interpolators():
        preds = {}
        for i in plan.indices("validation"):
            if kind == "none":
                preds[i] = kernels[i]
            else:
                try:
                    preds[i] = KernelPredictor.load(kind, out / "models").predict(
                        features(points[i], config))
                except StageError:
                    raise
                except Exception as exc:
                    raise StageError("predict", str(exc), i) from exc
            _write(out / "predicted" / kind / f"point_{i:03d}.json", _dumps(preds[i].to_dict()))
        result[kind] = preds
    return result


# -- validation report ----------------------------------------------------------------

def settled_window(grid: TimeGrid, reduced_frequency: float, periods: int = 2) -> np.ndarray:
    """Boolean mask of the last ``periods`` periods of a sinusoid on ``grid``."""
    period = 2.0 * math.pi / reduced_frequency
    tau = grid.tau
    mask = tau >= tau[-1] - periods * period
    if mask.sum() < 2:
        raise ValueError("signal shorter than the settling window")
    return mask


def rms(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean(v * v)))


def relative_rms(pred, ref, mask=None) -> float:
    p = np.asarray(pred, float)
    r = np.asarray(ref, float)
    if mask is not None:
        p, r = p[mask], r[mask]
    denom = rms(r)
    return rms(p - r) / denom if denom > 0 else rms(p - r)


def kernel_error(pred, ref) -> float:
    ref = np.asarray(ref, float)
    n = np.linalg.norm(ref)
    d = np.linalg.norm(np.asarray(pred, float) - ref)
    return float(d / n) if n > 0 else float(d)


REPORT_COLUMNS = (
    "index", "mach", "alpha0", "interpolator",
    "kernel_err_h1", "kernel_err_h2",
    "step_small_rms", "step_large_rms",
    "sin_small_rms", "sin_small_rel",
    "sin_large_rms", "sin_large_rel",
    "sin_large_ref_rms", "sin_large_ref_rel",
)


@dataclass
class ValidationReport:
    """Per validation point errors.

    ``sin_small_*`` compares the linear-kernel response to the small sinusoid
    against the exact linear plant. ``sin_large_*`` compares the full series
    response to the large sinusoid against the exact nonlinear plant and
    ``sin_large_ref_*`` against the same series built from the directly
    identified kernels. ``*_rel`` is relative RMS over the settled window.
    """

    rows: list
    hysteresis: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = [",".join(REPORT_COLUMNS)]
        for r in self.rows:
            lines.append(",".join(_fmt(r[c]) for c in REPORT_COLUMNS))
        return "\n".join(lines) + "\n"

    def column(self, name, interpolator=None):
        return [r[name] for r in self.rows
                if interpolator is None or r["interpolator"] == interpolator]

    def summary(self) -> dict:
        out = {}
        for kind in sorted({r["interpolator"] for r in self.rows}):
            s = {"n_points": len(self.column("index", kind))}
            for c in REPORT_COLUMNS[4:]:
                vals = [v for v in self.column(c, kind) if v is not None]
                if vals:
                    s[f"median_{c}"] = float(np.median(vals))
                    s[f"max_{c}"] = float(np.max(vals))
            out[kind] = s
        return out

    def write(self, directory):
        d = Path(directory)
        _write(d / "validation.csv", self.to_csv())
        _write(d / "summary.json", _dumps(self.summary()))
        for name, table in self.hysteresis.items():
            cols = list(table)
            body = [",".join(cols)]
            for row in zip(*(table[c] for c in cols)):
                body.append(",".join(_fmt(v) for v in row))
            _write(d / "hysteresis" / f"{name}.csv", "\n".join(body) + "\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def validate_point(index, point, predicted: KernelSet, reference: KernelSet,
                   config: RunConfig, plant: PlantConfig, kind: str):
    grid = config.grid
    k = config.reduced_frequency
    a_small, a_large = config.sinusoid_amplitudes[:2]
    mask = settled_window(grid, k)
    s_small = make_sinusoid(grid, 0.0, a_small, k)
    s_large = make_sinusoid(grid, 0.0, a_large, k)
    lin_only = replace(predicted, h2=None, h3=None, amplitudes=predicted.amplitudes[:1])

    y_small = reconstruct(lin_only, s_small).values
    ex_small = exact_response_oracle(plant, point, s_small, nonlinear=False).values
    row = {"index": index, "mach": point.mach, "alpha0": point.alpha0, "interpolator": kind,
           "kernel_err_h1": kernel_error(predicted.h1, reference.h1),
           "kernel_err_h2": (kernel_error(predicted.h2, reference.h2)
                             if predicted.h2 is not None and reference.h2 is not None else None)}

    st_small = make_step(grid, config.step_amplitudes[0])
    st_large = make_step(grid, config.step_amplitudes[1])
    row["step_small_rms"] = rms(reconstruct(lin_only, st_small).values
                                - exact_response_oracle(plant, point, st_small).values)
    row["step_large_rms"] = rms(reconstruct(predicted, st_large).values
                                - exact_response_oracle(plant, point, st_large, True).values)
    row["sin_small_rms"] = rms((y_small - ex_small)[mask])
    row["sin_small_rel"] = relative_rms(y_small, ex_small, mask)

    y_large = reconstruct(predicted, s_large).values
    ex_large = exact_response_oracle(plant, point, s_large, nonlinear=True).values
    ref_large = reconstruct(reference, s_large).values
    row["sin_large_rms"] = rms((y_large - ex_large)[mask])
    row["sin_large_rel"] = relative_rms(y_large, ex_large, mask)
    row["sin_large_ref_rms"] = rms((y_large - ref_large)[mask])
    row["sin_large_ref_rel"] = relative_rms(y_large, ref_large, mask)

    cl0 = point.steady_cl or 0.0
    hyst = {
        "alpha": (point.alpha0 + s_large.values[mask]).tolist(),
        "predicted": (cl0 + y_large[mask]).tolist(),
        "reference": (cl0 + ref_large[mask]).tolist(),
        "exact": (cl0 + ex_large[mask]).tolist(),
    }
    return row, hyst


def report(config: RunConfig) -> ValidationReport:
    """Reporting stage: errors of the persisted predictions for every validation point."""
    out = Path(config.out)
    plan = SamplePlan.read_csv(out / "samples.csv", config.seed)
    kernels, points = load_kernels(out)
    plant = config.plant_config()
    rows, hyst = [], {}
    for kind in config.interpolators():
        for i in plan.indices("validation"):
            path = out / "predicted" / kind / f"point_{i:03d}.json"
            try:
                pred = KernelSet.from_json(path.read_text())
                row, h = validate_point(i, points[i], pred, kernels[i], config, plant, kind)
            except Exception as exc:
                raise StageError("report", str(exc), i) from exc
            rows.append(row)
            hyst[f"{kind}_point_{i:03d}"] = h
    rep = ValidationReport(rows, hyst)
    rep.write(out / "report")
    return rep


def run_algorithm1(config: RunConfig) -> ValidationReport:
    """Sample, simulate, identify, train, predict and validate."""
    generate(config)
    identify(config)
    train(config)
    predict_validation(config)
    return report(config)


# -- sweeps -----------------------------------------------------------------------------

@dataclass(frozen=True)
class InputSpec:
    """Perturbation input of a sweep: ``step`` or ``harmonic`` (about zero)."""

    kind: str = "step"
    amplitude: float = 1.0
    reduced_frequency: float = 0.3

    def signal(self, grid: TimeGrid) -> TimeSignal:
        if self.kind == "step":
            return make_step(grid, self.amplitude)
        if self.kind == "harmonic":
            return make_sinusoid(grid, 0.0, self.amplitude, self.reduced_frequency)
        raise ValueError(f"unknown input kind {self.kind!r}")


def sweep_reconstruct(predictor: KernelPredictor, machs, alpha0s, input_spec: InputSpec,
                      config: RunConfig, steady_model=None, training_points=(),
                      out_dir=None) -> list:
    """Reconstruct responses over a Mach x incidence grid.

    Steady lift at each query point comes from ``steady_model`` (a GP over
    Mach and incidence). Queries outside the bounding box of
    ``training_points`` are flagged as extrapolation and a warning is issued.
    Output signals are total lift: steady value plus the series response.
    Returns one metadata dict per case; CSVs go to ``out_dir`` when given.
    """
    grid = config.grid
    u = input_spec.signal(grid)
    if training_points:
        ms = [p.mach for p in training_points]
        als = [p.alpha0 for p in training_points]
        box = (min(ms), max(ms), min(als), max(als))
    else:
        box = None
    cases = []
    for mach in machs:
        for a0 in alpha0s:
            point = ParameterPoint(float(mach), float(a0))
            extrap = box is not None and not (box[0] <= mach <= box[1] and box[2] <= a0 <= box[3])
            if extrap:
                warnings.warn(f"sweep point M={mach}, alpha0={a0} lies outside the training box "
                              "(extrapolation)", stacklevel=2)
            cl0 = float(gpr.predict(steady_model, [mach, a0])[0][0]) if steady_model else 0.0
            point = replace(point, steady_cl=cl0)
            kernels = predictor.predict(features(point, config))
            y = reconstruct(kernels, u).values + cl0
            name = f"M{mach:.4f}_a{a0:+.4f}"
            case = {"name": name, "mach": float(mach), "alpha0": float(a0), "steady_cl": cl0,
                    "extrapolation": bool(extrap), "input": asdict(input_spec),
                    "tau": grid.tau, "input_deg": u.values, "output": y}
            if out_dir is not None:
                d = Path(out_dir)
                lines = ["tau,input,output"] + [f"{t!r},{a!r},{v!r}" for t, a, v in
                                                 zip(grid.tau.tolist(), u.values.tolist(), y.tolist())]
                _write(d / f"{name}.csv", "\n".join(lines) + "\n")
                lines = ["alpha,output"] + [f"{a0 + a!r},{v!r}" for a, v in
                                            zip(u.values.tolist(), y.tolist())]
                _write(d / f"{name}_hysteresis.csv", "\n".join(lines) + "\n")
            cases.append(case)
    if out_dir is not None:
        meta = [{k: v for k, v in c.items() if k not in ("tau", "input_deg", "output")}
                for c in cases]
        _write(Path(out_dir) / "metadata.json", _dumps({"cases": meta}))
    return cases


def sweep(config: RunConfig, machs, alpha0s, input_spec: InputSpec, kind: str = "gpr",
          out_dir=None) -> list:
    out = Path(config.out)
    plan = SamplePlan.read_csv(out / "samples.csv", config.seed)
    _, points = load_kernels(out)
    predictor = KernelPredictor.load(kind, out / "models")
    steady = gpr.GprModel.from_dict(json.loads((out / "models" / "steady_gpr.json").read_text()))
    fitted = [points[i] for i in sorted(plan.indices("train") + plan.indices("test"))]
    return sweep_reconstruct(predictor, machs, alpha0s, input_spec, config, steady, fitted,
                             out_dir if out_dir is not None else out / "sweep")
