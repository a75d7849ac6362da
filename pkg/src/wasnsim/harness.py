"""Simulation runner and command-line interface.

A run spec is a JSON document (``schema_version`` 1)::

    {
      "schema_version": 1,
      "scene": {... SceneConfig fields ...},
      "algorithms": ["idanse", "centralized", "danse", "danse_global", "local"],
      "scm_mode": "true" | "online",
      "domain": "time" | "wola",
      "forgetting": 0.995,
      "output": "report.csv",
      "wola": {"frame_length": 1024, "overlap": 0.5, "sample_rate": 16000},
      "duration_s": 10.0,
      "room_size": [5.0, 5.0, 3.0],
      "min_frames": null,
      "eval_skip": 0.5
    }

Algorithm entries are ids or ``{"id": ..., "J": ...}`` objects. Default J:
``danse`` uses the span condition ``S_glob + max_k S_loc_k``, ``danse_global``
uses ``S_glob``, everything else the scene's ``n_channels``.

``min_frames`` is the number of frames each online SCM segment must see
before filters are computed from it. The default is the network sensor
count, for every SCM, so all algorithms leave their warm-up together.
``eval_skip`` is the leading fraction of a WOLA run left out of the
summary SNR, so the summary reflects converged filters.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .danse import DanseEstimator, check_span_condition
from .filters import (CentralizedEstimator, LocalEstimator, centralized_filters,
                      unprocessed_filters)
from .idanse import IdanseEstimator, relative_gap
from .metrics import RunReport, Trace, expected_mse, mse_d, snr_first_channel
from .scene import (Components, ConfigurationError, SceneConfig, generate_scene,
                    load_config_file, network_selection, true_scms)
from .scm import ScmSet, SegmentedScm, batch_scm, node_slices
from .wola import WolaConfig, anechoic_scene, synthesize, write_wav

SCHEMA_VERSION = 1
ALGORITHMS = ("idanse", "centralized", "danse", "danse_global", "local", "unprocessed")


@dataclass(frozen=True)
class AlgorithmSpec:
    id: str
    J: int


@dataclass(frozen=True)
class RunSpec:
    scene: SceneConfig
    algorithms: tuple[AlgorithmSpec, ...]
    scm_mode: str = "true"
    domain: str = "time"
    forgetting: float = 0.995
    output: str = "report.csv"
    wola: WolaConfig = field(default_factory=WolaConfig)
    duration_s: float = 10.0
    room_size: tuple[float, ...] = (5.0, 5.0, 3.0)
    min_frames: int | None = None
    eval_skip: float = 0.5

    @property
    def seed(self) -> int:
        return self.scene.seed

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scene": self.scene.to_dict(),
            "algorithms": [{"id": a.id, "J": a.J} for a in self.algorithms],
            "scm_mode": self.scm_mode, "domain": self.domain,
            "forgetting": self.forgetting, "output": self.output,
            "wola": {"frame_length": self.wola.frame_length, "overlap": self.wola.overlap,
                     "window": self.wola.window, "sample_rate": self.wola.sample_rate},
            "duration_s": self.duration_s, "room_size": list(self.room_size),
            "min_frames": self.min_frames, "eval_skip": self.eval_skip,
        }


def default_channels(alg: str, scene: SceneConfig) -> int:
    if alg == "danse":
        return scene.n_global_desired + max(scene.n_local_desired)
    if alg == "danse_global":
        return scene.n_global_desired
    return scene.n_channels


def parse_spec(doc: dict, seed: int | None = None, n_frames: int | None = None) -> RunSpec:
    doc = dict(doc)
    version = doc.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported schema_version {version!r}")
    scene_doc = dict(doc.pop("scene", {}))
    if seed is not None:
        scene_doc["seed"] = seed
    if n_frames is not None:
        scene_doc["n_frames"] = n_frames
    scene = SceneConfig.from_dict(scene_doc)

    algs = []
    for entry in doc.pop("algorithms", list(ALGORITHMS[:5])):
        if isinstance(entry, str):
            entry = {"id": entry}
        aid = entry.get("id")
        if aid not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm id {aid!r}; expected one of {ALGORITHMS}")
        J = entry.get("J")
        J = default_channels(aid, scene) if J is None else int(J)
        if not 1 <= J <= min(scene.n_sensors):
            raise ConfigurationError(f"{aid}: J={J} must lie in [1, {min(scene.n_sensors)}]")
        algs.append(AlgorithmSpec(aid, J))

    wola = WolaConfig(**doc.pop("wola", {}))
    spec = RunSpec(scene=scene, algorithms=tuple(algs), wola=wola,
                   room_size=tuple(doc.pop("room_size", (5.0, 5.0, 3.0))),
                   **{k: doc.pop(k) for k in list(doc)
                      if k in ("scm_mode", "domain", "forgetting", "output", "duration_s",
                               "min_frames", "eval_skip")})
    if doc:
        raise ConfigurationError(f"unknown spec keys: {sorted(doc)}")
    if spec.scm_mode not in ("true", "online"):
        raise ConfigurationError(f"scm_mode must be 'true' or 'online', got {spec.scm_mode!r}")
    if spec.domain not in ("time", "wola"):
        raise ConfigurationError(f"domain must be 'time' or 'wola', got {spec.domain!r}")
    if spec.domain == "wola" and spec.scm_mode == "true":
        raise ConfigurationError("WOLA runs estimate SCMs online; use scm_mode 'online'")
    if not 0.0 <= spec.eval_skip < 1.0:
        raise ConfigurationError("eval_skip must lie in [0, 1)")
    return spec


def load_spec(path: str | Path, **overrides) -> RunSpec:
    return parse_spec(load_config_file(path), **overrides)


class UnprocessedEstimator(CentralizedEstimator):
    """Target channels of the raw sensor signals."""

    kind = "unprocessed"

    def __init__(self, sizes, n_channels, batch_shape=()):
        super().__init__(sizes, n_channels, None, batch_shape)

    @property
    def label(self) -> str:
        return "unprocessed"

    def step(self, net, observed, label) -> None:
        pass


def warmup_frames(spec: RunSpec) -> int:
    return spec.scene.n_total_sensors if spec.min_frames is None else spec.min_frames


def build_estimators(spec: RunSpec, true: ScmSet | None, batch_shape=(), frame_size=None):
    sizes = spec.scene.n_sensors
    B = spec.scene.frame_size if frame_size is None else frame_size
    kw = dict(forgetting=spec.forgetting, frame_size=B, batch_shape=batch_shape,
              min_frames=warmup_frames(spec))
    out = []
    for a in spec.algorithms:
        if a.id == "idanse":
            e = IdanseEstimator(sizes, a.J, true, **kw)
        elif a.id in ("danse", "danse_global"):
            e = DanseEstimator(sizes, a.J, true, **kw)
        elif a.id == "centralized":
            e = CentralizedEstimator(sizes, a.J, true, batch_shape)
        elif a.id == "local":
            e = LocalEstimator(sizes, a.J, true, batch_shape)
        else:
            e = UnprocessedEstimator(sizes, a.J, batch_shape)
        out.append(e)
    labels = [e.label for e in out]
    dupes = {l for l in labels if labels.count(l) > 1}
    if dupes:
        raise ConfigurationError(f"algorithms produce duplicate labels: {sorted(dupes)}")
    return out


def _targets(desired: np.ndarray, sizes, J: int) -> list[np.ndarray]:
    return [desired[..., s, :][..., :J, :] for s in node_slices(sizes)]


def _filter_gap(est, refs: dict[int, list[np.ndarray]]) -> float:
    ref = refs[est.J]
    return max(relative_gap(W, R) for W, R in zip(est.network_wide(), ref))


def run(spec: RunSpec) -> RunReport:
    """Simulate every requested algorithm on one shared scene realization."""
    if spec.domain == "wola":
        return _run_wola(spec)
    return _run_time(spec)


def _run_time(spec: RunSpec) -> RunReport:
    cfg = spec.scene
    scene = generate_scene(cfg)
    true = true_scms(scene)
    online = spec.scm_mode == "online"
    ests = build_estimators(spec, None if online else true)
    net = SegmentedScm(cfg.n_total_sensors, cfg.n_sensors, spec.forgetting, cfg.frame_size,
                       min_frames=warmup_frames(spec)) if online else None
    refs = {e.J: centralized_filters(true, e.J) for e in ests}
    sizes = cfg.n_sensors
    K = len(sizes)
    selections = {e.J: [network_selection(sizes, k, e.J) for k in range(K)] for e in ests}
    traces = {e.label: Trace() for e in ests}

    for l in range(cfg.n_frames):
        comps = scene.components(l)
        label = scene.label(l)
        observed = comps.observed(label) if online else comps.total
        if online:
            net.update(observed, label)
        for e in ests:
            e.step(net, observed, label)
            _record(traces[e.label], e, comps, sizes, refs)
            W = e.network_wide()
            traces[e.label].expected_mse_d.append(np.mean([
                expected_mse(W[k], true.R_yy, true.R_ss, selections[e.J][k]) for k in range(K)
            ]) / e.J)

    summary = {e.label: {
        "J": e.J,
        "final_mse_d": traces[e.label].mse_d[-1],
        "final_expected_mse_d": traces[e.label].expected_mse_d[-1],
        "centralized_expected_mse_d": centralized_expected_mse(true, e.J),
        "span_condition": check_span_condition(cfg, e.J),
        "theorem1_regime": e.J >= cfg.n_global_desired + cfg.n_global_noise,
    } for e in ests}
    return RunReport([e.label for e in ests], cfg.n_frames, traces, spec.to_dict(),
                     cfg.seed, summary)


def _record(trace: Trace, est, comps: Components, sizes, refs) -> None:
    d = _targets(comps.desired, sizes, est.J)
    d_hat = est.estimate(comps.total)
    ds = est.estimate(comps.desired)
    dn = est.estimate(comps.noise)
    trace.mse_d.append(mse_d(np.stack(d_hat), np.stack(d)))
    trace.snr_db.append(snr_first_channel(ds, dn))
    trace.filter_gap.append(_filter_gap(est, refs))
    return ds, dn


def centralized_expected_mse(scms: ScmSet, J: int) -> float:
    K = len(scms.sizes)
    W = centralized_filters(scms, J)
    return float(np.mean([expected_mse(W[k], scms.R_yy, scms.R_ss,
                                       network_selection(scms.sizes, k, J))
                          for k in range(K)]) / J)


def _run_wola(spec: RunSpec) -> RunReport:
    cfg = spec.scene
    wcfg = spec.wola
    asc = anechoic_scene(cfg, wcfg, spec.duration_s, spec.room_size)
    X = asc.stft_components()
    n_frames = min(X.s_glob.shape[1], cfg.n_frames)
    F = wcfg.n_bins
    sizes = cfg.n_sensors
    K = len(sizes)

    # long-term batch SCMs of the whole realization serve as the gap reference
    to_frames = lambda a: np.swapaxes(a, 1, 2)  # (F, M, n_frames)
    R_yy = batch_scm(to_frames(X.total))
    R_ss = batch_scm(to_frames(X.desired))
    oracle = ScmSet(R_yy, R_yy - R_ss, R_ss, sizes, provenance="batch")

    ests = build_estimators(spec, None, (F,), frame_size=1)
    refs = {e.J: centralized_filters(oracle, e.J) for e in ests}
    net = SegmentedScm(cfg.n_total_sensors, sizes, spec.forgetting, 1, (F,),
                       min_frames=warmup_frames(spec))
    traces = {e.label: Trace() for e in ests}
    outs = {e.label: ([np.zeros((F, n_frames, e.J), complex) for _ in range(K)],
                      [np.zeros((F, n_frames, e.J), complex) for _ in range(K)]) for e in ests}

    for l in range(n_frames):
        comps = Components(*(getattr(X, n)[:, l, :, None]
                             for n in ("s_glob", "s_loc", "n_glob", "n_loc")))
        label = asc.label(l)
        observed = comps.observed(label)
        net.update(observed, label)
        for e in ests:
            e.step(net, observed, label)
            ds, dn = _record(traces[e.label], e, comps, sizes, refs)
            for k in range(K):
                outs[e.label][0][k][:, l, :] = ds[k][..., 0]
                outs[e.label][1][k][:, l, :] = dn[k][..., 0]

    L = wcfg.frame_length
    n_out = (n_frames - 1) * wcfg.hop + L
    lo = max(L, int(spec.eval_skip * n_out))
    summary = {}
    for e in ests:
        ds_t = [synthesize(a, wcfg)[:, lo:-L] for a in outs[e.label][0]]
        dn_t = [synthesize(a, wcfg)[:, lo:-L] for a in outs[e.label][1]]
        summary[e.label] = {"J": e.J, "snr_db": snr_first_channel(ds_t, dn_t),
                            "final_filter_gap": traces[e.label].filter_gap[-1]}
    return RunReport([e.label for e in ests], n_frames, traces, spec.to_dict(), cfg.seed, summary)


def compare_bandwidth(spec: RunSpec, report: RunReport | None = None,
                      delta_db: float = 0.5) -> list[dict]:
    """Broadcast cost of each algorithm to come within ``delta_db`` of centralized.

    Uses the expected (true-SCM) MSE traces of a time-domain run. One DANSE
    cycle is K sequential updates; one iDANSE cycle is one frame. The
    centralized row counts 0 cycles and its per-node raw channel count as
    the total.
    """
    if spec.domain != "time":
        raise ConfigurationError("bandwidth comparison needs a time-domain run")
    if report is None:
        report = run(spec)
    cfg = spec.scene
    K = cfg.n_nodes
    true = true_scms(generate_scene(cfg))
    rows = []
    for a, label in zip(spec.algorithms, report.algorithms):
        trace = np.asarray(report.traces[label].expected_mse_d)
        ref = centralized_expected_mse(true, a.J)
        within = 10 * np.log10(np.maximum(trace, 1e-300) / ref) <= delta_db
        first = int(np.argmax(within)) if within.any() else None
        if a.id == "centralized":
            sizes = set(cfg.n_sensors)
            channels = sizes.pop() if len(sizes) == 1 else float(np.mean(cfg.n_sensors))
            cycles = 0
        elif a.id in ("local", "unprocessed"):
            channels, cycles = 0, (0 if first == 0 else None)
        elif a.id == "idanse":
            channels, cycles = a.J, (None if first is None else first + 1)
        else:
            channels, cycles = a.J, (None if first is None else math.ceil((first + 1) / K))
        total = None if cycles is None else channels * cycles
        if a.id == "centralized":
            total = channels          # raw streaming, nothing to iterate
        rows.append({"algorithm": label, "J": a.J, "channels_per_cycle": channels,
                     "cycles": cycles, "total_channels": total})
    return rows


def export_wav(spec: RunSpec, path: str | Path) -> Path:
    if spec.domain != "wola":
        raise ConfigurationError(
            "time-domain scenes are complex-valued; WAV export needs domain 'wola'")
    asc = anechoic_scene(spec.scene, spec.wola, spec.duration_s, spec.room_size)
    write_wav(path, asc.components.total, spec.wola.sample_rate)
    return Path(path)


def _fmt(v) -> str:
    return "inf" if v is None else str(v)


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="wasnsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "compare-bandwidth", "export-wav"):
        p = sub.add_parser(name)
        p.add_argument("spec", type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", type=Path, default=Path("."))
        p.add_argument("--frames", type=int)
        if name == "compare-bandwidth":
            p.add_argument("--delta-db", type=float, default=0.5)
    args = parser.parse_args(argv)

    try:
        spec = load_spec(args.spec, seed=args.seed, n_frames=args.frames)
        args.out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "run":
            report = run(spec)
            csv_path = args.out_dir / spec.output
            report.to_csv(csv_path)
            report.to_json(csv_path.with_suffix(".json"))
            print(f"wrote {csv_path}")
        elif args.command == "compare-bandwidth":
            rows = compare_bandwidth(spec, delta_db=args.delta_db)
            out = args.out_dir / "bandwidth.csv"
            cols = ("algorithm", "J", "channels_per_cycle", "cycles", "total_channels")
            lines = [",".join(cols)] + [",".join(_fmt(r[c]) for c in cols) for r in rows]
            out.write_text("\n".join(lines) + "\n")
            print("\n".join(lines))
        else:
            out = export_wav(spec, args.out_dir / (Path(spec.output).stem + ".wav"))
            print(f"wrote {out}")
    except (ConfigurationError, OSError, json.JSONDecodeError) as exc:
        print(f"wasnsim: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
