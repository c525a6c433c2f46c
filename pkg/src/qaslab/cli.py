"""Command-line front end.

Exit codes: 0 success, 2 bad configuration or input, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import os
from pathlib import Path
import sys

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("qaslab")

TASK_DEFAULTS = {
    "classify": {"optimizer": "adam", "lr": 0.05, "retrain_epochs": 15},
    "vqe": {"optimizer": "diag-natural-gd", "lr": 0.2, "retrain_epochs": 100},
}


class ConfigError(Exception):
    pass


def _version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0.0.0"


def load_schema(name: str) -> dict:
    from importlib.resources import files

    return json.loads(files("qaslab").joinpath("schemas", name).read_text())


def validate(instance: dict, schema_name: str) -> None:
    import jsonschema

    try:
        jsonschema.validate(instance, load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{schema_name}: {where}: {exc.message}") from None


def load_config(path) -> dict:
    try:
        with open(path) as f:
            cfg = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    validate(cfg, "experiment.schema.json")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def apply_overrides(cfg: dict, args) -> dict:
    cfg = copy.deepcopy(cfg)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "noise", None) is not None:
        cfg.setdefault("noise", {})["enabled"] = args.noise == "on"
    if getattr(args, "out", None) is not None:
        cfg["output_dir"] = str(args.out)
    return cfg


# ---------------------------------------------------------------------------
# building objects from a config


def build_space(cfg: dict):
    from .circuit import SearchSpace, classification_space, qas_rc_space, vqe_space

    s = cfg.get("space", {})
    kind = s.get("kind", "classification" if cfg["task"] == "classify" else "vqe")
    L = s.get("n_layers", 3)
    if kind == "custom":
        try:
            space = SearchSpace(s["n_qubits"], L, tuple(s["pool"]), tuple(map(tuple, s.get("pairs", []))))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"invalid custom space: {exc}") from None
    else:
        space = {"classification": classification_space, "vqe": vqe_space, "qas_rc": qas_rc_space}[kind](L)
    expected = 3 if cfg["task"] == "classify" else 4
    if space.n_qubits != expected:
        raise ConfigError(f"{cfg['task']} needs {expected} qubits, space has {space.n_qubits}")
    return space


def build_noise(cfg: dict):
    from .sim import NoiseModel

    n = cfg.get("noise", {})
    if not n.get("enabled", False):
        return NoiseModel.off()
    return NoiseModel.depolarizing(n.get("p1", 0.05), n.get("p2", 0.2))


def build_task(cfg: dict):
    from .tasks import ClassificationTask, Dataset, VqeTask, generate_dataset

    if cfg["task"] == "vqe":
        return VqeTask()
    d = cfg.get("dataset", {})
    if "path" in d:
        try:
            data = Dataset.from_csv(d["path"])
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot load dataset {d['path']}: {exc}") from None
    else:
        data = generate_dataset(d.get("seed", 0), d.get("n", 300))
    return ClassificationTask(data, encoding_noise=cfg.get("noise", {}).get("encoding", True))


def build_qas_config(cfg: dict):
    from .search import QasConfig

    params = dict(TASK_DEFAULTS[cfg["task"]])
    params.update(cfg.get("search", {}))
    params["noise"] = build_noise(cfg)
    params["seed"] = cfg.get("seed", 0)
    try:
        return QasConfig(**params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# outputs


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False))
    return path


def write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    return path


def write_manifest(out: Path, command: str, cfg: dict, artifacts, threads=None) -> Path:
    manifest = {
        "command": command,
        "config_hash": config_hash(cfg),
        "seed": int(cfg.get("seed", 0)),
        "artifacts": [{"path": p.name, "sha256": _sha256(p)} for p in artifacts],
        "version": _version(),
        "threads": threads,
    }
    validate(manifest, "manifest.schema.json")
    return write_json(out / "manifest.json", manifest)


def _out_dir(cfg: dict, default: str) -> Path:
    out = Path(cfg.get("output_dir", default))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def _write_ranking(out: Path, ranking, task) -> list[Path]:
    from .search import ranking_histogram

    table = write_json(out / "ranking.json", [e.to_dict() for e in ranking])
    hist = write_csv(out / "ranking_histogram.csv", ["bin_low", "bin_high", "count"], ranking_histogram(ranking, task))
    return [table, hist]


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    from .tasks import generate_dataset

    if args.n < 1:
        raise ConfigError("--n must be at least 1")
    data = generate_dataset(args.seed if args.seed is not None else 0, args.n)
    out = Path(args.out or "dataset.csv")
    try:
        data.to_csv(out)
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc}") from None
    print(f"wrote {len(data)} rows to {out}; rejection rate {data.rejection_rate:.3f} over {data.draws} draws")
    return EXIT_OK


def cmd_search(args) -> int:
    from .errors import NumericalError
    from .search import run_search
    from .search.pipeline import TrainingAborted

    cfg = apply_overrides(load_config(args.config), args)
    space, task, qas = build_space(cfg), build_task(cfg), build_qas_config(cfg)
    out = _out_dir(cfg, "runs/search")
    try:
        record, ensemble, ranking = run_search(qas, space, task)
    except NumericalError as exc:
        partial = {"config": qas.to_dict(), "aborted": str(exc)}
        if isinstance(exc, TrainingAborted):
            partial["history"] = [r.to_dict(space) for r in exc.history]
        write_json(out / "run_record.partial.json", partial)
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    record_dict = record.to_dict()
    validate(record_dict, "run_record.schema.json")
    artifacts = [write_json(out / "run_record.json", record_dict)]
    ensemble.save(out / "ensemble.json")
    artifacts.append(out / "ensemble.json")
    artifacts += _write_ranking(out, ranking, task)
    artifacts.append(
        write_csv(out / "loss_trajectory.csv", ["t", "loss"], enumerate(record.loss_trajectory))
    )
    (out / "best_arch.txt").write_text(record.best_arch + "\n")
    artifacts.append(out / "best_arch.txt")
    write_manifest(out, "search", cfg, artifacts, args.threads)
    print(f"best {record.best_arch}: {json.dumps(record.final_metrics, sort_keys=True)}")
    return EXIT_OK


def _load_ensemble(path, space):
    from .supernet import SupernetEnsemble

    try:
        ens = SupernetEnsemble.load(path)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load ensemble {path}: {exc}") from None
    if ens.space != space:
        raise ConfigError("ensemble was trained on a different search space")
    return ens


def cmd_rank(args) -> int:
    import numpy as np

    from .search import rank_evolutionary, rank_uniform

    cfg = apply_overrides(load_config(args.config), args)
    space, task, qas = build_space(cfg), build_task(cfg), build_qas_config(cfg)
    ens = _load_ensemble(args.ensemble, space)
    rng = np.random.default_rng(qas.seeds()["rank"])
    if qas.ranking == "uniform":
        ranking = rank_uniform(ens, space, task, qas.K, qas.noise, rng)
    else:
        ranking = rank_evolutionary(
            ens, space, task, qas.pop_size, qas.generations, qas.noise, rng, qas.nsga_objectives
        )
    out = _out_dir(cfg, "runs/rank")
    artifacts = _write_ranking(out, ranking, task)
    write_manifest(out, "rank", cfg, artifacts, args.threads)
    print(f"best {ranking[0].text}: objective {ranking[0].objective:.6f}, loss {ranking[0].loss:.6f}")
    return EXIT_OK


def cmd_retrain(args) -> int:
    from .circuit import Architecture
    from .search import retrain, split_metrics
    from .supernet import eval_best

    cfg = apply_overrides(load_config(args.config), args)
    space, task, qas = build_space(cfg), build_task(cfg), build_qas_config(cfg)
    ens = _load_ensemble(args.ensemble, space)
    try:
        arch = Architecture.from_text(space, args.arch)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"bad architecture {args.arch!r}: {exc}") from None
    _, store = eval_best(ens, arch, task, qas.noise)
    params, trajectory = retrain(
        space, arch, ens.stores[store].get_params(arch), task, qas.retrain_epochs,
        qas.retrain_optimizer or qas.optimizer, qas.retrain_lr or qas.lr, qas.noise,
    )
    out = _out_dir(cfg, "runs/retrain")
    result = {
        "arch": args.arch,
        "store": store,
        "trajectory": trajectory,
        "final_params": [[float(a) for a in row] for row in params.layers],
        "final_metrics": split_metrics(space, arch, params, task, qas.noise),
    }
    artifacts = [write_json(out / "retrain.json", result)]
    write_manifest(out, "retrain", cfg, artifacts, args.threads)
    print(json.dumps(result["final_metrics"], sort_keys=True))
    return EXIT_OK


def cmd_vqe_exact(args) -> int:
    from .sim import exact_ground_energy
    from .tasks import h2_hamiltonian

    h = h2_hamiltonian()
    energy = exact_ground_energy(h)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "h2.txt").write_text(h.to_text())
        write_json(out / "exact.json", {"exact_ground_energy": energy})
    print(f"{energy:.6f}")
    return EXIT_OK


def _barren(cfg: dict, out: Path, seed: int) -> Path:
    from .diag import barren_sweep

    b = cfg.get("diagnostics", {}).get("barren", {})
    sweep = barren_sweep(b.get("depths", list(range(2, 8))), b.get("samples", 2000), seed=seed)
    path = out / "barren.csv"
    sweep.to_csv(path)
    for L, v, s in sweep.rows():
        print(f"L={L} variance={v:.4e} stderr={s:.1e}")
    return path


def _correlate(cfg: dict, out: Path, seed: int, ensemble_path=None) -> list[Path]:
    from .diag import correlation_study

    c = cfg.get("diagnostics", {}).get("correlation", {})
    ensemble_path = ensemble_path or c.get("ensemble")
    if not ensemble_path:
        raise ConfigError("correlation study needs a trained ensemble (diagnostics.correlation.ensemble)")
    space, task, noise = build_space(cfg), build_task(cfg), build_noise(cfg)
    ens = _load_ensemble(ensemble_path, space)
    report = correlation_study(
        space, task, ens, c.get("n_subnets", 100), c.get("epochs", 100), seed, noise
    )
    csv_path = out / "correlation.csv"
    report.to_csv(csv_path)
    summary = write_json(out / "correlation_summary.json", report.summary())
    print(f"spearman {report.rho_s:.4f} kendall {report.rho_k:.4f} over {report.n} subnets")
    return [csv_path, summary]


def cmd_barren(args) -> int:
    cfg = apply_overrides(load_config(args.config) if args.config else {"task": "vqe"}, args)
    if args.depths:
        cfg.setdefault("diagnostics", {}).setdefault("barren", {})["depths"] = args.depths
    if args.samples:
        cfg.setdefault("diagnostics", {}).setdefault("barren", {})["samples"] = args.samples
    validate(cfg, "experiment.schema.json")
    out = _out_dir(cfg, "runs/barren")
    path = _barren(cfg, out, cfg.get("seed", 0))
    write_manifest(out, "barren", cfg, [path], args.threads)
    return EXIT_OK


def cmd_correlate(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    out = _out_dir(cfg, "runs/correlate")
    paths = _correlate(cfg, out, cfg.get("seed", 0), args.ensemble)
    write_manifest(out, "correlate", cfg, paths, args.threads)
    return EXIT_OK


def cmd_diag(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    diag = cfg.get("diagnostics", {})
    out = _out_dir(cfg, "runs/diag")
    seed = cfg.get("seed", 0)
    artifacts = []
    if diag.get("barren", {}).get("enabled", "barren" in diag):
        artifacts.append(_barren(cfg, out, seed))
    if diag.get("correlation", {}).get("enabled", "correlation" in diag):
        artifacts += _correlate(cfg, out, seed)
    if not artifacts:
        raise ConfigError("no diagnostics enabled in config")
    write_manifest(out, "diag", cfg, artifacts, args.threads)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="output directory (CSV path for gen-data, default dataset.csv)")
    common.add_argument("--threads", type=int, default=None, help="cap on BLAS worker threads")
    common.add_argument("--noise", choices=("on", "off"), default=None, help="override noise.enabled")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="qaslab", description="Quantum architecture search laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate the synthetic classification dataset")
    p.add_argument("--n", type=int, default=300)
    p.set_defaults(func=cmd_gen_data)

    for name, func, helptext in (
        ("search", cmd_search, "train supernets, rank subnets and retrain the best"),
        ("rank", cmd_rank, "rank subnets with a saved ensemble"),
        ("retrain", cmd_retrain, "retrain one architecture from a saved ensemble"),
        ("correlate", cmd_correlate, "supernet vs independent-training rank correlation"),
        ("diag", cmd_diag, "run the diagnostics enabled in the config"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--config", required=True)
        if name in ("rank", "retrain", "correlate"):
            p.add_argument("--ensemble", required=name != "correlate", default=None)
        if name == "retrain":
            p.add_argument("--arch", required=True, help='text form, e.g. "YZYY:101|ZZYZ:000|YYYY:011"')
        p.set_defaults(func=func)

    p = sub.add_parser("vqe-exact", parents=[common], help="exact H2 ground energy")
    p.set_defaults(func=cmd_vqe_exact)

    p = sub.add_parser("barren", parents=[common], help="gradient-variance sweep over depth")
    p.add_argument("--config", default=None)
    p.add_argument("--depths", type=int, nargs="+", default=None)
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(func=cmd_barren)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be at least 1", file=sys.stderr)
            return EXIT_CONFIG
        os.environ["OMP_NUM_THREADS"] = str(args.threads)
    try:
        if args.threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
