"""Scenario loading, deterministic experiment runs and result emission."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .comm import ber, decode_private, decode_ssr, gen_channel, transmit
from .config import ConfigError, SystemConfig, TargetSpec, desk_config, table1_config, validate_config, validate_target
from .estimator import PipelineOptions, local_maxima_1d, run_pipeline
from .frame import bit_rate, random_frame
from .radar_sim import add_noise, simulate_rx

SCENARIO_DIR = Path(__file__).with_name("scenarios")
DECODERS = {"ssr": decode_ssr, "private": decode_private}


class StageError(RuntimeError):
    """Failure inside one stage of a run; ``str()`` carries the stage tag."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class CommSettings:
    N_x_list: list = field(default_factory=lambda: [2, 5, 7])
    snr_list: list = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])
    trials: int = 200
    taps: int = 8
    decoders: list = field(default_factory=lambda: ["ssr", "private"])
    N_s: Optional[int] = 64
    N_c: Optional[int] = 16
    N_t: Optional[int] = 32
    M: Optional[int] = 1
    fixed_endpoints: bool = False


@dataclass
class Scenario:
    name: str
    system: SystemConfig
    targets: list = field(default_factory=list)
    radar_snr_db: Optional[float] = None
    comm: Optional[CommSettings] = None
    solver: str = "omp"
    grid: int = 181
    seed: int = 0
    M: Optional[int] = 1
    fixed_endpoints: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["targets"] = [asdict(t) for t in self.targets]
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RunReport:
    scenario: str
    coarse_estimates: list = field(default_factory=list)
    refined_estimates: list = field(default_factory=list)
    ber_rows: list = field(default_factory=list)  # (method, N_x, snr_db, payload_ber, index_ber, trials)
    rates: list = field(default_factory=list)  # (mode, bit_rate_bps)
    spectra: dict = field(default_factory=dict)  # name -> [(bin, theta_deg, magnitude)]
    provenance: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

def _check_scenario(sc: Scenario) -> Scenario:
    validate_config(sc.system)
    for t in sc.targets:
        validate_target(t, sc.system)
    if sc.solver not in ("omp", "fista"):
        raise ConfigError(f"unknown solver {sc.solver!r}")
    if sc.comm is not None:
        if sc.comm.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not sc.comm.snr_list:
            raise ConfigError("snr_list must not be empty")
        unknown = set(sc.comm.decoders) - set(DECODERS)
        if unknown:
            raise ConfigError(f"unknown decoders {sorted(unknown)}")
    return sc


def scenario_from_dict(data: dict, full_scale: bool = False) -> Scenario:
    """Build a scenario from its plain key/value description.

    ``profile`` selects the base system (``table1`` or ``desk``) and
    ``system`` overrides single fields.  `full_scale` forces the full-scale
    parameter set and ignores the overrides.
    """
    data = dict(data)
    profile = "table1" if full_scale else data.get("profile", "desk")
    if profile not in ("table1", "desk"):
        raise ConfigError(f"unknown profile {profile!r}")
    system = table1_config() if profile == "table1" else desk_config()
    if not full_scale and data.get("system"):
        try:
            system = system.replace(**data["system"])
        except TypeError as exc:
            raise ConfigError(f"bad system override: {exc}") from None
    radar = dict(data.get("radar") or {})
    targets = [TargetSpec(float(t["theta"]), float(t["R"]), float(t["v"]))
               for t in radar.get("targets", [])]
    comm = None
    if data.get("comm") is not None:
        raw = dict(data["comm"])
        raw["snr_list"] = [float(s) for s in raw.get("snr_list", CommSettings().snr_list)]
        try:
            comm = CommSettings(**raw)
        except TypeError as exc:
            raise ConfigError(f"bad comm block: {exc}") from None
    sc = Scenario(
        name=str(data.get("name", "scenario")),
        system=system,
        targets=targets,
        radar_snr_db=radar.get("snr_db"),
        comm=comm,
        solver=str(radar.get("solver", "omp")),
        grid=int(radar.get("grid", 181)),
        seed=int(data.get("seed", 0)),
        M=radar.get("M", 1),
        fixed_endpoints=bool(radar.get("fixed_endpoints", True)),
    )
    return _check_scenario(sc)


def scenario_path(name_or_path) -> Path:
    """Resolve a bundled scenario name (``table1_table2``) or a file path."""
    p = Path(name_or_path)
    if p.suffix in (".yaml", ".yml") or p.exists():
        return p
    return SCENARIO_DIR / f"{name_or_path}.yaml"


def load_scenario(name_or_path, full_scale: bool = False, seed: Optional[int] = None,
                  solver: Optional[str] = None) -> Scenario:
    path = scenario_path(name_or_path)
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise StageError("config", f"cannot read scenario {path}: {exc.strerror}") from None
    try:
        sc = scenario_from_dict(data, full_scale)
        if seed is not None:
            sc.seed = int(seed)
        if solver is not None:
            sc.solver = solver
        return _check_scenario(sc)
    except ConfigError as exc:
        raise StageError("config", f"{path}: {exc}") from None


def _provenance(sc: Scenario) -> dict:
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    return {"scenario": sc.name, "config_hash": sc.config_hash(), "seed": sc.seed,
            "version": version, "config": sc.to_dict()}


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def run_radar(sc: Scenario) -> RunReport:
    """Seeded frame -> simulated cube -> estimation pipeline."""
    cfg = sc.system
    try:
        frame = random_frame(cfg, np.random.default_rng(sc.seed), sc.M, sc.fixed_endpoints)
    except Exception as exc:
        raise StageError("frame", str(exc)) from exc
    try:
        cube = simulate_rx(frame, sc.targets, cfg)
        if sc.radar_snr_db is not None:
            cube = add_noise(cube, float(sc.radar_snr_db), np.random.SeedSequence([sc.seed, 1]))
    except Exception as exc:
        raise StageError("simulate", str(exc)) from exc
    try:
        res = run_pipeline(cube, frame, cfg, PipelineOptions(solver=sc.solver, grid_size=sc.grid))
    except Exception as exc:
        raise StageError("estimate", str(exc)) from exc

    report = RunReport(sc.name, res.coarse, res.refined, provenance=_provenance(sc))
    sp = res.spectrum
    thetas = np.where(sp.valid, np.degrees(np.arcsin(np.clip(sp.sines, -1.0, 1.0))), np.nan)
    report.spectra["coarse"] = [(k, float(thetas[k]), float(sp.magnitudes[k]))
                                for k in range(sp.magnitudes.size)]
    if res.refinement is not None:
        ref = res.refinement
        report.spectra["refined"] = [(k, float(ref.grid[k]), float(ref.beta_grid[k]))
                                     for k in range(ref.grid.size)]
    return report


def trial_seeds(master: int, N_x: int, trial: int):
    """(frame, channel, noise) seeds of one trial; independent of every other
    trial and shared by all decoders and SNR values."""
    return np.random.SeedSequence(master, spawn_key=(N_x, trial)).spawn(3)


def comm_config(sc: Scenario, N_x: int) -> SystemConfig:
    c = sc.comm
    changes = {"N_x": N_x, "N_p": 1}
    for name in ("N_s", "N_c", "N_t"):
        if getattr(c, name) is not None:
            changes[name] = getattr(c, name)
    return validate_config(sc.system.replace(**changes))


def _ber_block(args):
    """Error counts for trials ``[start, stop)`` of one N_x.

    Returns ``{(method, snr): [payload errors, payload bits, index errors, index bits]}``;
    integer counts keep the aggregate independent of execution order.
    """
    cfg, comm, N_x, start, stop, master = args
    counts = {}
    for trial in range(start, stop):
        s_frame, s_chan, s_noise = trial_seeds(master, N_x, trial)
        frame = random_frame(cfg, np.random.default_rng(s_frame), comm.M, comm.fixed_endpoints)
        chan = gen_channel(cfg, comm.taps, s_chan)
        truth = (frame.payload_bits, frame.index_bits)
        for snr in comm.snr_list:
            obs = transmit(frame, chan, 0, snr, s_noise)
            for method in comm.decoders:
                if method == "ssr":
                    dec = decode_ssr(obs, chan, cfg, frame.private_map[0] is not None, comm.fixed_endpoints)
                else:
                    dec = decode_private(obs, chan, cfg, fixed_endpoints=comm.fixed_endpoints)
                pb, ib = ber(truth, (dec.payload_bits_hat, dec.index_bits_hat))
                n_p, n_i = truth[0].size, truth[1].size
                acc = counts.setdefault((method, snr), [0, 0, 0, 0])
                acc[0] += round(pb * n_p)
                acc[1] += n_p
                acc[2] += round(ib * n_i)
                acc[3] += n_i
    return N_x, counts


def run_ber_sweep(sc: Scenario, threads: int = 1, block: int = 50) -> RunReport:
    """Monte Carlo BER for every (decoder, N_x, SNR) cell of the comm block."""
    if sc.comm is None:
        raise StageError("config", f"scenario {sc.name} has no comm block")
    comm = sc.comm
    if "private" in comm.decoders and comm.M is None:
        raise StageError("config", "the private decoder needs private subcarriers (M)")
    try:
        jobs = []
        for N_x in comm.N_x_list:
            cfg = comm_config(sc, N_x)
            for start in range(0, comm.trials, block):
                jobs.append((cfg, comm, N_x, start, min(start + block, comm.trials), sc.seed))
    except ConfigError as exc:
        raise StageError("config", str(exc)) from None
    try:
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(_ber_block, jobs))
        else:
            results = [_ber_block(job) for job in jobs]
    except Exception as exc:
        raise StageError("comm", str(exc)) from exc

    totals = {}
    for N_x, counts in results:
        for (method, snr), c in counts.items():
            acc = totals.setdefault((method, N_x, snr), [0, 0, 0, 0])
            for k in range(4):
                acc[k] += c[k]
    rows = []
    for method in comm.decoders:
        for N_x in comm.N_x_list:
            for snr in comm.snr_list:
                pe, pn, ie, in_ = totals[(method, N_x, snr)]
                rows.append((method, N_x, snr, pe / pn if pn else 0.0, ie / in_ if in_ else 0.0,
                             comm.trials))
    return RunReport(sc.name, ber_rows=rows, provenance=_provenance(sc))


def run_rates(sc: Scenario) -> RunReport:
    cfg = sc.system
    rates = [("without_private", bit_rate(cfg, False)), ("with_private", bit_rate(cfg, True))]
    return RunReport(sc.name, rates=rates, provenance=_provenance(sc))


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def emit(report: RunReport, out_dir) -> list[Path]:
    """Write every table of `report` (headers only when empty) plus ``run.json``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        est_rows = [(e.theta_hat, e.R_hat, e.v_hat, e.angle_bin, e.l_q, e.p_q, e.refined)
                    for e in list(report.coarse_estimates) + list(report.refined_estimates)]
        files = {
            "estimates.csv": (("theta_deg", "R_m", "v_mps", "angle_bin", "l_q", "p_q", "refined"), est_rows),
            "ber.csv": (("method", "N_x", "snr_db", "payload_ber", "index_ber", "trials"), report.ber_rows),
            "spectrum_coarse.csv": (("bin", "theta_deg", "magnitude"), report.spectra.get("coarse", [])),
            "spectrum_refined.csv": (("bin", "theta_deg", "magnitude"), report.spectra.get("refined", [])),
            "rates.csv": (("mode", "bit_rate_bps"), report.rates),
        }
        written = []
        for name, (header, rows) in files.items():
            _write_csv(out / name, header, rows)
            written.append(out / name)
        with open(out / "run.json", "w") as fh:
            json.dump(report.provenance, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        written.append(out / "run.json")
    except OSError as exc:
        raise StageError("emit", f"{exc.filename or out}: {exc.strerror}") from None
    return written


def spectrum_peaks(report: RunReport, rel: float = 0.5) -> dict:
    """Local maxima at or above ``rel * max`` of each emitted spectrum, as angles."""
    out = {}
    for name, rows in report.spectra.items():
        if not rows:
            continue
        mag = np.array([r[2] for r in rows])
        theta = np.array([r[1] for r in rows])
        peaks = local_maxima_1d(mag, circular=(name == "coarse"))
        out[name] = [float(theta[k]) for k in peaks if mag[k] >= rel * mag.max()]
    return out


