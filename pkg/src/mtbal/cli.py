"""Command-line entry point for dataset generation, training, bound-driven
alpha selection, evaluation, and benchmark runs.

Config values come from three layers, later winning: built-in defaults, a
flat key=value config file (dotted sections, e.g. ``train.epochs=400``), and
command-line flags. Every run writes a JSON manifest capturing the effective
config, emitted files, and headline metrics; replaying a manifest reproduces
the metrics bit-for-bit.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import os
import struct
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, boab as boab_mod, datagen, evaluation
from .balancing import DegenerateBatchError, GeodesicGraph, StrategySpec
from .datagen import OverlapError
from .kernels import InsufficientDataError
from .model import ModelParams, TrainConfig, train
from .nn import Mlp, NumericError, ShapeError, rng_stream


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config schema: key -> (type, default, help). A default of None means the
# key is required for the commands that list it.

_COMMON = {
    "seed": (int, 0, "global RNG seed"),
    "out": (str, ".", "output directory"),
    "workers": (int, 1, "worker cap, recorded in the manifest"),
}

_TRAIN_KEYS = {
    "data.path": (str, None, "dataset CSV produced by `gen`"),
    "alpha": (float, 1.0, "balance penalty weight"),
    "strategy.kind": (str, "pair", "balancing strategy: pair | ova | agg"),
    "strategy.embedding_dim": (int, 8, "treatment embedding width"),
    "strategy.geodesic_weight": (float, 0.0, "weight of the geodesic penalty"),
    "train.epochs": (int, 150, "training epochs"),
    "train.batch_size": (int, 128, "minibatch size (stratified)"),
    "train.lr": (float, 1e-2, "SGD step size"),
    "train.d_z": (int, 16, "representation width"),
    "train.head_mode": (str, "auto", "auto | multi_head | embed_conditioned"),
    "train.balance_subsample": (int, 256, "rows per balance-penalty evaluation"),
    "train.penalty_warmup": (float, 0.5, "fraction of steps to ramp the penalty in"),
    "train.grad_clip": (float, 50.0, "global gradient-norm clip (0 disables)"),
}

SCHEMAS: dict[str, dict] = {
    "gen": {
        **_COMMON,
        "gen.kind": (str, "hard", "hard | dose | tree | cycle"),
        "gen.n": (int, 0, "sample count (0 = generator default)"),
        "gen.d": (int, 20, "covariate dimension (hard only)"),
        "gen.n_treatments": (int, 4, "number of treatments (hard only)"),
        "gen.kappa": (float, 5.0, "confounding strength (hard only)"),
        "gen.noise_var": (float, 0.1, "outcome noise variance"),
    },
    "train": {**_COMMON, **_TRAIN_KEYS},
    "boab": {
        **_COMMON,
        **_TRAIN_KEYS,
        "boab.grid": (str, "0,0.1,0.5,1,5", "comma-separated alpha grid"),
        "boab.bootstrap": (int, 0, "bootstrap replicates for alpha (0 = off)"),
        "comp.method": (str, "lipschitz", "lipschitz | rademacher_mc | constant"),
        "comp.scale": (float, 1.0, "complexity-term scale C"),
        "comp.delta": (float, 0.05, "confidence level delta"),
        "comp.mc_draws": (int, 64, "sign draws for rademacher_mc"),
    },
    "eval": {
        **_COMMON,
        "data.path": (str, None, "dataset CSV with ground truth"),
        "model.path": (str, None, "model file written by train/boab"),
        "eval.interp_from": (int, -1, "interpolation source treatment (-1 = off)"),
        "eval.interp_to": (int, -1, "interpolation target treatment"),
        "eval.interp_steps": (int, 21, "points on the interpolation grid"),
    },
    "bench": {
        **_COMMON,
        "bench.k_list": (str, "4,20", "treatment counts for timing"),
        "bench.strategies": (str, "pair,ova,agg", "strategies to benchmark"),
        "bench.n": (int, 1500, "rows for timing"),
        "bench.epochs": (int, 5, "epochs per timing run"),
        "conc.k_list": (str, "4,16", "treatment counts for concentration"),
        "conc.n": (int, 500, "rows per concentration replicate"),
        "conc.reps": (int, 50, "concentration replicates (0 = skip)"),
    },
    "geodesic": {
        **_COMMON,
        **{k: v for k, v in _TRAIN_KEYS.items() if k != "data.path"},
        "geo.kind": (str, "tree", "tree | cycle"),
        "geo.n": (int, 1400, "sample count"),
        "geo.weight": (float, 5.0, "geodesic penalty weight"),
        "eval.interp_from": (int, 3, "interpolation source treatment"),
        "eval.interp_to": (int, 6, "interpolation target treatment"),
        "eval.interp_steps": (int, 21, "points on the interpolation grid"),
    },
}


def _coerce(key: str, raw: str, typ: type):
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for key {key!r}: {raw!r}") from None


def parse_config(
    command: str, path: str | None, overrides: list[str]
) -> dict:
    """Defaults, then file values, then key=value overrides; unknown keys fail."""
    schema = SCHEMAS[command]
    cfg = {k: d for k, (_, d, _) in schema.items()}
    layers: list[tuple[str, str]] = []
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        for lineno, line in enumerate(p.read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            k, v = line.split("=", 1)
            layers.append((k.strip(), v.strip()))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        layers.append((k.strip(), v.strip()))
    for k, v in layers:
        if k not in schema:
            raise ConfigError(f"unknown config key {k!r}")
        cfg[k] = _coerce(k, v, schema[k][0])
    missing = [k for k, v in cfg.items() if v is None]
    if missing:
        raise ConfigError(f"missing required key {missing[0]!r}")
    return cfg


def help_config(command: str) -> str:
    lines = [f"config keys for `{command}`:"]
    for k, (typ, default, doc) in sorted(SCHEMAS[command].items()):
        d = "required" if default is None else f"default {default}"
        lines.append(f"  {k:28s} {typ.__name__:5s} {d} — {doc}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Model files. Byte map (all integers little-endian):
#   magic "MTBM" (4 bytes) | u32 layout version (=1)
#   u8 head_mode (0 multi_head, 1 embed_conditioned) | u32 n_treatments
#   u8 has_table | if set: u32 rows, u32 cols
#   u32 n_nets (phi first, then heads)
#   per net: u32 n_layers; per layer: u32 fan_in, u32 fan_out, u8 activation
#            (0 relu, 1 tanh, 2 identity)
#   payload: table row-major, then per net per layer W row-major then b,
#            all float64 little-endian.

_MAGIC = b"MTBM"
_ACT_CODE = {"relu": 0, "tanh": 1, "identity": 2}
_ACT_NAME = {v: k for k, v in _ACT_CODE.items()}
_MODE_CODE = {"multi_head": 0, "embed_conditioned": 1}
_MODE_NAME = {v: k for k, v in _MODE_CODE.items()}


def save_model(model: ModelParams, path: str | Path) -> Path:
    path = Path(path)
    buf = bytearray()
    buf += _MAGIC + struct.pack("<I", 1)
    buf += struct.pack("<BI", _MODE_CODE[model.head_mode], model.n_treatments)
    if model.table is not None:
        buf += struct.pack("<BII", 1, *model.table.shape)
    else:
        buf += struct.pack("<B", 0)
    nets = [model.phi, *model.heads]
    buf += struct.pack("<I", len(nets))
    payload = [] if model.table is None else [model.table]
    for net in nets:
        buf += struct.pack("<I", len(net.weights))
        for w, act in zip(net.weights, net.activations):
            buf += struct.pack("<IIB", w.shape[0], w.shape[1], _ACT_CODE[act])
        payload.extend(net.arrays())
    for arr in payload:
        buf += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    path.write_bytes(bytes(buf))
    return path


def load_model(path: str | Path) -> ModelParams:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"not a model file: {path}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != 1:
        raise ValueError(f"unsupported model layout version {version}")
    off = 8
    mode_code, n_treatments = struct.unpack_from("<BI", raw, off)
    off += 5
    (has_table,) = struct.unpack_from("<B", raw, off)
    off += 1
    table_shape = None
    if has_table:
        table_shape = struct.unpack_from("<II", raw, off)
        off += 8
    (n_nets,) = struct.unpack_from("<I", raw, off)
    off += 4
    shapes: list[list[tuple[int, int, str]]] = []
    for _ in range(n_nets):
        (n_layers,) = struct.unpack_from("<I", raw, off)
        off += 4
        layers = []
        for _ in range(n_layers):
            fi, fo, act = struct.unpack_from("<IIB", raw, off)
            off += 9
            layers.append((fi, fo, _ACT_NAME[act]))
        shapes.append(layers)

    def take(shape: tuple[int, ...]) -> np.ndarray:
        nonlocal off
        size = int(np.prod(shape)) * 8
        arr = np.frombuffer(raw, dtype="<f8", count=int(np.prod(shape)), offset=off)
        off += size
        return arr.reshape(shape).copy()

    table = take(table_shape) if table_shape else None
    nets = []
    for layers in shapes:
        ws, bs = [], []
        for fi, fo, _ in layers:
            ws.append(take((fi, fo)))
            bs.append(take((fo,)))
        nets.append(Mlp(ws, bs, [act for _, _, act in layers]))
    return ModelParams(
        nets[0], nets[1:], table, _MODE_NAME[mode_code], n_treatments
    )


# ---------------------------------------------------------------------------
# Manifests and plot data.


def write_manifest(
    out: Path,
    command: str,
    cfg: dict,
    started: float,
    files: list[str],
    metrics: dict,
) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.get("seed", 0),
        "workers": cfg.get("workers", 1),
        "config": cfg,
        "started": started,
        "finished": time.time(),
        "files": sorted(files),
        "metrics": metrics,
    }
    path = out / "manifest.json"
    tmp = out / "manifest.json.tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def replay_manifest(manifest_path: str | Path, out_dir: str | Path) -> dict:
    """Re-run a manifest's command into a fresh directory; return its metrics."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    cfg = dict(manifest["config"])
    cfg["out"] = str(out_dir)
    argv = [manifest["command"]]
    for k, v in cfg.items():
        argv += ["--set", f"{k}={v}"]
    code = main(argv)
    if code != 0:
        raise RuntimeError(f"replay exited with code {code}")
    with open(Path(out_dir) / "manifest.json") as fh:
        return json.load(fh)["metrics"]


def emit_plotdata(path: str | Path, columns: list[str], rows: list[tuple]) -> Path:
    """Gnuplot-friendly whitespace-delimited table with a commented header."""
    if not rows:
        raise ValueError("empty report")
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("# " + " ".join(columns) + "\n")
        for row in rows:
            fh.write(
                " ".join(
                    f"{v:.17g}" if isinstance(v, float) else str(v) for v in row
                )
                + "\n"
            )
    return path


# ---------------------------------------------------------------------------
# Command implementations. Each returns (files, metrics).


def _strategy_from_cfg(cfg: dict) -> StrategySpec:
    kind = cfg["strategy.kind"]
    if kind not in ("pair", "ova", "agg"):
        raise ConfigError(f"unknown strategy.kind {kind!r}")
    return StrategySpec(
        kind,
        embedding_dim=cfg["strategy.embedding_dim"],
        geodesic_weight=cfg["strategy.geodesic_weight"],
    )


def _train_cfg(cfg: dict) -> TrainConfig:
    return TrainConfig(
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"],
        lr=cfg["train.lr"],
        d_z=cfg["train.d_z"],
        head_mode=cfg["train.head_mode"],
        balance_subsample=cfg["train.balance_subsample"],
        penalty_warmup=cfg["train.penalty_warmup"],
        grad_clip=cfg["train.grad_clip"],
        seed=cfg["seed"],
    )


def _graph_for(ds: datagen.Dataset) -> GeodesicGraph | None:
    kind = ds.provenance.get("generator")
    if kind == "tree":
        return GeodesicGraph.from_edges(7, datagen.TREE_EDGES)
    if kind == "cycle":
        return GeodesicGraph.from_edges(8, [(i, (i + 1) % 8) for i in range(8)])
    return None


def cmd_gen(cfg: dict, out: Path) -> tuple[list[str], dict]:
    kind = cfg["gen.kind"]
    n = cfg["gen.n"]
    seed = cfg["seed"]
    if kind == "hard":
        params = datagen.GenHardParams(
            n=n or 1500,
            d=cfg["gen.d"],
            n_treatments=cfg["gen.n_treatments"],
            kappa=cfg["gen.kappa"],
            noise_var=cfg["gen.noise_var"],
            seed=seed,
        )
        ds = datagen.gen_hard(params)
    elif kind == "dose":
        ds = datagen.gen_dose(n=n or 1797, noise_var=cfg["gen.noise_var"], seed=seed)
    elif kind in ("tree", "cycle"):
        ds, _ = datagen.gen_topology(kind, n=n or 1400, noise_var=cfg["gen.noise_var"], seed=seed)
    else:
        raise ConfigError(f"unknown gen.kind {kind!r}")
    files = datagen.save_dataset(ds, out / "dataset.csv")
    report = datagen.validate_dataset(ds)
    metrics = {
        "n": ds.n,
        "n_treatments": ds.n_treatments,
        "arm_counts": report["arm_counts"],
    }
    return [f.name for f in files], metrics


def _write_trace(trace, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("# epoch,factual,imbalance,objective,seconds\n")
        for i in range(len(trace)):
            fh.write(
                f"{i},{trace.factual[i]:.17g},{trace.imbalance[i]:.17g},"
                f"{trace.objective[i]:.17g},{trace.seconds[i]:.6g}\n"
            )


def cmd_train(cfg: dict, out: Path) -> tuple[list[str], dict]:
    ds = datagen.load_dataset(cfg["data.path"])
    strategy = _strategy_from_cfg(cfg)
    model, trace = train(
        ds, cfg["alpha"], strategy, _train_cfg(cfg), graph=_graph_for(ds)
    )
    save_model(model, out / "model.bin")
    _write_trace(trace, out / "trace.csv")
    metrics = {
        "final_factual": trace.factual[-1],
        "final_imbalance": trace.imbalance[-1],
        "final_objective": trace.objective[-1],
    }
    if ds.truth is not None:
        rep = evaluation.pehe(model, ds)
        metrics["pehe"] = rep.pehe
        metrics["sqrt_pehe"] = rep.sqrt_pehe
    return ["model.bin", "trace.csv"], metrics


def cmd_boab(cfg: dict, out: Path) -> tuple[list[str], dict]:
    ds = datagen.load_dataset(cfg["data.path"])
    strategy = _strategy_from_cfg(cfg)
    try:
        grid = [float(v) for v in cfg["boab.grid"].split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad boab.grid {cfg['boab.grid']!r}") from None
    comp = boab_mod.ComplexitySpec(
        method=cfg["comp.method"],
        scale=cfg["comp.scale"],
        delta=cfg["comp.delta"],
        mc_draws=cfg["comp.mc_draws"],
    )
    res = boab_mod.boab_search(
        ds, grid, strategy, _train_cfg(cfg), comp, graph=_graph_for(ds)
    )
    boab_mod.write_profile_csv(out / "profile.csv", res.points)
    save_model(res.model, out / "model.bin")
    files = ["profile.csv", "model.bin"]
    metrics: dict = {"alpha_hat": res.alpha_hat}
    if ds.truth is not None:
        rep = evaluation.pehe(res.model, ds)
        metrics["pehe"] = rep.pehe
        metrics["sqrt_pehe"] = rep.sqrt_pehe
    if cfg["boab.bootstrap"] > 0:
        est = boab_mod.bootstrap_alpha(
            ds,
            grid,
            strategy,
            _train_cfg(cfg),
            comp,
            n_replicates=cfg["boab.bootstrap"],
            seed=cfg["seed"],
            graph=_graph_for(ds),
        )
        metrics["alpha_se"] = est.se
        metrics["alpha_ci"] = [est.lo, est.hi]
    return files, metrics


def cmd_eval(cfg: dict, out: Path) -> tuple[list[str], dict]:
    ds = datagen.load_dataset(cfg["data.path"])
    model = load_model(cfg["model.path"])
    if ds.truth is None:
        raise OverlapError("eval needs a dataset with ground-truth means")
    rep = evaluation.pehe(model, ds)
    curve = evaluation.adrf(model, ds)
    files = []
    emit_plotdata(
        out / "adrf.dat",
        ["treatment", "mean_outcome"],
        [(t, float(v)) for t, v in enumerate(curve)],
    )
    files.append("adrf.dat")
    metrics = {
        "pehe": rep.pehe,
        "sqrt_pehe": rep.sqrt_pehe,
        "adrf_argmin": int(np.argmin(curve)),
    }
    if cfg["eval.interp_from"] >= 0:
        pts = evaluation.interpolate_effect(
            model,
            cfg["eval.interp_from"],
            cfg["eval.interp_to"],
            cfg["eval.interp_steps"],
            ds,
        )
        emit_plotdata(out / "interpolation.dat", ["lambda", "mean_outcome"], pts)
        files.append("interpolation.dat")
        metrics["interp_endpoints"] = [pts[0][1], pts[-1][1]]
        metrics["interp_mid"] = pts[len(pts) // 2][1]
    with open(out / "pehe.json", "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files.append("pehe.json")
    return files, metrics


def cmd_bench(cfg: dict, out: Path) -> tuple[list[str], dict]:
    k_list = [int(v) for v in cfg["bench.k_list"].split(",")]
    strategies = [s.strip() for s in cfg["bench.strategies"].split(",")]
    timing = evaluation.timing_benchmark(
        k_list, strategies, n=cfg["bench.n"], epochs=cfg["bench.epochs"], seed=cfg["seed"]
    )
    evaluation.write_table_csv(out / "timing.csv", timing)
    files = ["timing.csv"]
    by = {(r["strategy"], r["n_treatments"]): r["penalty_seconds"] for r in timing}
    metrics: dict = {}
    if "pair" in strategies and len(k_list) >= 2:
        metrics["pair_time_ratio"] = by[("pair", max(k_list))] / by[("pair", min(k_list))]
    if "agg" in strategies and len(k_list) >= 2:
        metrics["agg_time_ratio"] = by[("agg", max(k_list))] / by[("agg", min(k_list))]
    if cfg["conc.reps"] > 0:
        conc = evaluation.concentration_experiment(
            [int(v) for v in cfg["conc.k_list"].split(",")],
            cfg["conc.n"],
            cfg["conc.reps"],
            strategies,
            seed=cfg["seed"],
        )
        evaluation.write_table_csv(out / "concentration.csv", conc)
        files.append("concentration.csv")
    with open(out / "bench.json", "w") as fh:
        json.dump({"timing": timing}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files.append("bench.json")
    return files, metrics


def cmd_geodesic(cfg: dict, out: Path) -> tuple[list[str], dict]:
    kind = cfg["geo.kind"]
    if kind not in ("tree", "cycle"):
        raise ConfigError(f"unknown geo.kind {kind!r}")
    ds, graph = datagen.gen_topology(kind, n=cfg["geo.n"], seed=cfg["seed"])
    strategy = StrategySpec(
        cfg["strategy.kind"],
        embedding_dim=cfg["strategy.embedding_dim"],
        geodesic_weight=cfg["geo.weight"],
    )
    tc = _train_cfg(cfg)
    if tc.head_mode == "auto":
        # Interpolation needs the shared embedding-conditioned head.
        tc = TrainConfig(
            epochs=tc.epochs,
            batch_size=tc.batch_size,
            lr=tc.lr,
            d_z=tc.d_z,
            head_mode="embed_conditioned",
            balance_subsample=tc.balance_subsample,
            penalty_warmup=tc.penalty_warmup,
            grad_clip=tc.grad_clip,
            seed=tc.seed,
        )
    model, trace = train(ds, cfg["alpha"], strategy, tc, graph=graph)
    save_model(model, out / "model.bin")
    _write_trace(trace, out / "trace.csv")
    pts = evaluation.interpolate_effect(
        model, cfg["eval.interp_from"], cfg["eval.interp_to"], cfg["eval.interp_steps"], ds
    )
    emit_plotdata(out / "interpolation.dat", ["lambda", "mean_outcome"], pts)
    emit_plotdata(
        out / "embeddings.dat",
        ["treatment"] + [f"e{i}" for i in range(model.table.shape[1])],
        [(t, *map(float, row)) for t, row in enumerate(model.table)],
    )
    rep = evaluation.pehe(model, ds)
    metrics = {
        "sqrt_pehe": rep.sqrt_pehe,
        "interp_endpoints": [pts[0][1], pts[-1][1]],
        "interp_mid": pts[len(pts) // 2][1],
    }
    return ["model.bin", "trace.csv", "interpolation.dat", "embeddings.dat"], metrics


_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "boab": cmd_boab,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "geodesic": cmd_geodesic,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtbal",
        description="Balanced multi-treatment effect estimation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override any config key",
        )
        p.add_argument(
            "--help-config", action="store_true", help="list config keys and exit"
        )
        if name == "gen":
            p.add_argument("kind", nargs="?", default=None,
                           choices=["hard", "dose", "tree", "cycle"])
        if name in ("train", "boab", "eval"):
            p.add_argument("--data", default=None, help="dataset CSV path")
        if name in ("train", "boab"):
            p.add_argument("--strategy", default=None, choices=["pair", "ova", "agg"])
            p.add_argument("--alpha", type=float, default=None)
        if name == "boab":
            p.add_argument("--grid", default=None, help="comma-separated alphas")
        if name == "eval":
            p.add_argument("--model", default=None, help="model file path")
        if name == "bench":
            p.add_argument("--K", default=None, help="comma-separated K values")
            p.add_argument("--strategies", default=None)
    return parser


def _flag_overrides(args: argparse.Namespace) -> list[str]:
    pairs = {
        "seed": "seed",
        "out": "out",
        "workers": "workers",
        "kind": "gen.kind",
        "data": "data.path",
        "strategy": "strategy.kind",
        "alpha": "alpha",
        "grid": "boab.grid",
        "model": "model.path",
        "K": "bench.k_list",
        "strategies": "bench.strategies",
    }
    out = []
    for attr, key in pairs.items():
        val = getattr(args, attr, None)
        if val is not None:
            out.append(f"{key}={val}")
    return out + list(args.set)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    command = args.command
    try:
        if args.help_config:
            print(help_config(command))
            return 0
        cfg = parse_config(command, args.config, _flag_overrides(args))
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        started = time.time()
        files, metrics = _COMMANDS[command](cfg, out)
        write_manifest(out, command, cfg, started, files + ["manifest.json"], metrics)
        for k, v in metrics.items():
            print(f"{k}={v}")
        return 0
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ShapeError, FloatingPointError) as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return 4
    except (OverlapError, DegenerateBatchError, InsufficientDataError,
            FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
