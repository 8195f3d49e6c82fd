"""``evbattery`` command line: generate, detect, capacity, report.

Every command writes ``config.json`` (the fully resolved settings) beside its
outputs, so a run can be repeated from that file alone.  Exit codes: 0 on
success, 1 for usage errors, 2 for protocol or data errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .capacity import REGRESSORS, RegressorConfig, evaluate_capacity
from .core import AVG_VOLT, ProtocolError, RecordError, dataset_stats
from .detectors import DETECTORS, AEConfig, DyadConfig
from .evalkit import DEFAULT_H_GRID, run_detection
from .io import read_dataset, write_dataset
from .synthgen import GenConfig, anonymize, generate_fleet

log = logging.getLogger("evbattery")

CONFIG_FILE = "config.json"
SECTIONS = ("generate", "detect", "dyad", "ae", "capacity", "regressor")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def load_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    try:
        if path.suffix == ".toml":
            import tomli
            data = tomli.loads(text)
        else:
            data = json.loads(text)
    except ValueError as e:
        raise UsageError(f"malformed config {path}: {e}") from e
    if not isinstance(data, dict):
        raise UsageError("config must be a table/object")
    unknown = set(data) - set(SECTIONS) - {"seed", "data", "folds"}
    if unknown:
        raise UsageError(f"unknown config sections: {sorted(unknown)}")
    return data


def _build(cls, section: dict, name: str):
    try:
        return cls(**section)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad [{name}] settings: {e}") from e


def _seed(args, cfg) -> int:
    return int(args.seed if args.seed is not None else cfg.get("seed", 0))


def _gen_config(args, cfg) -> GenConfig:
    section = dict(cfg.get("generate", {}))
    section["seed"] = _seed(args, cfg)
    if args.anonymize is not None:
        section["anonymize"] = args.anonymize
    try:
        return GenConfig.from_dict(section)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad [generate] settings: {e}") from e


def _load_vehicles(args, cfg, resolved: dict):
    """Dataset from ``--data`` (or config ``data``); otherwise generate in memory."""
    data = args.data or cfg.get("data")
    if data:
        vehicles = read_dataset(data)
        resolved["data"] = str(Path(data).resolve())
        if args.anonymize:
            vehicles = anonymize(vehicles, rng=_seed(args, cfg))
            resolved["anonymize"] = True
        return vehicles
    gen = _gen_config(args, cfg)
    resolved["generate"] = gen.to_dict()
    return generate_fleet(gen)


def _write_config(out: Path, resolved: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_FILE).write_text(json.dumps(resolved, indent=1, sort_keys=True) + "\n")


def cmd_generate(args, cfg) -> int:
    gen = _gen_config(args, cfg)
    out = Path(args.out)
    vehicles = generate_fleet(gen)
    write_dataset(vehicles, out)
    _write_config(out, {"command": "generate", "seed": gen.seed, "generate": gen.to_dict()})
    print(json.dumps(dataset_stats(vehicles).as_dict(), indent=1))
    return 0


def cmd_detect(args, cfg) -> int:
    seed = _seed(args, cfg)
    section = dict(cfg.get("detect", {}))
    detector = args.detector or section.pop("detector", "dyad")
    section.pop("detector", None)
    if detector not in DETECTORS:
        raise UsageError(f"unknown detector {detector!r}")
    k = args.folds or cfg.get("folds", 5)
    h_grid = tuple(section.pop("h_grid", DEFAULT_H_GRID))
    variance_channel = int(section.pop("variance_channel", AVG_VOLT))
    if section:
        raise UsageError(f"unknown [detect] settings: {sorted(section)}")
    dyad_cfg = _build(DyadConfig, cfg.get("dyad", {}), "dyad")
    ae_cfg = _build(AEConfig, cfg.get("ae", {}), "ae")
    resolved = {"command": "detect", "seed": seed}
    vehicles = _load_vehicles(args, cfg, resolved)
    report = run_detection(vehicles, detector, k, seed, dyad_cfg, ae_cfg, h_grid,
                           variance_channel)
    resolved.update(report.config)
    out = Path(args.out)
    _write_config(out, resolved)
    report.write(out)
    print(f"{detector}: AUROC {format_pm(report.auroc_mean * 100, report.auroc_std * 100, 1)} "
          f"over {k} rounds")
    return 0


def cmd_capacity(args, cfg) -> int:
    seed = _seed(args, cfg)
    section = dict(cfg.get("regressor", cfg.get("capacity", {})))
    if args.regressor:
        section["kind"] = args.regressor
    config = _build(RegressorConfig, section, "regressor")
    k = args.folds or cfg.get("folds", 5)
    resolved = {"command": "capacity", "seed": seed, "k": k, "regressor": config.to_dict()}
    vehicles = _load_vehicles(args, cfg, resolved)
    if not any(s.capacity_label is not None for v in vehicles for s in v.snippets):
        raise ProtocolError("dataset has no capacity-labeled snippets")
    report = evaluate_capacity(vehicles, config, k, seed)
    out = Path(args.out)
    _write_config(out, resolved)
    report.write(out)
    print(f"{config.kind}: RMSE {format_pm(report.rmse_mean, report.rmse_std, 2)} "
          f"(mean predictor {report.baseline_mean:.2f})")
    return 0


def format_pm(mean: float, std: float, digits: int) -> str:
    return f"{mean:.{digits}f}±{std:.{digits}f}"


def summarize_run(run_dir) -> dict:
    path = Path(run_dir) / "report.json"
    try:
        rep = json.loads(path.read_text())
        kind = rep["kind"]
        if kind == "detection":
            vals = [r["auroc"] for r in rep["rounds"]]
            s = rep["summary"]
            return {"algorithm": rep["detector"], "task": "detection", "metric": "AUROC",
                    "value": format_pm(100 * s["auroc_mean"], 100 * s["auroc_std"], 1),
                    "rounds": vals, "run": str(run_dir)}
        if kind == "capacity":
            vals = [r["rmse"] for r in rep["rounds"]]
            s = rep["summary"]
            return {"algorithm": rep["regressor"], "task": "capacity", "metric": "RMSE",
                    "value": format_pm(s["rmse_mean"], s["rmse_std"], 2),
                    "rounds": vals, "run": str(run_dir)}
        raise ValueError(f"unknown report kind {kind!r}")
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise RecordError(f"unusable run artifacts in {run_dir}: {e}") from e


def render_table(rows) -> str:
    header = ("algorithm", "task", "metric", "mean±std")
    body = [(r["algorithm"], r["task"], r["metric"], r["value"]) for r in rows]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(str(x).ljust(w) for x, w in zip(line, widths)).rstrip()
             for line in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def cmd_report(args, cfg) -> int:
    rows = sorted((summarize_run(d) for d in args.runs),
                  key=lambda r: (r["algorithm"], r["task"], r["run"]))
    text = render_table(rows)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.txt").write_text(text)
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["algorithm", "task", "metric", "mean_std", "rounds", "run"])
            for r in rows:
                w.writerow([r["algorithm"], r["task"], r["metric"], r["value"],
                            " ".join(repr(float(v)) for v in r["rounds"]), r["run"]])
        _write_config(out, {"command": "report", "runs": [str(d) for d in args.runs]})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evbattery", description="Synthetic EV charging data, detection and "
                                              "capacity estimation experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True):
        sp.add_argument("--config", help="JSON or TOML file with per-command sections")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--anonymize", type=parse_bool, metavar="BOOL")
        if data:
            sp.add_argument("--data", help="dataset directory (generated in memory if omitted)")
            sp.add_argument("--folds", type=int, metavar="INT")

    g = sub.add_parser("generate", help="simulate a fleet and write the dataset")
    common(g, data=False)
    d = sub.add_parser("detect", help="k-fold vehicle-level anomaly detection")
    common(d)
    d.add_argument("--detector", choices=DETECTORS)
    c = sub.add_parser("capacity", help="k-fold capacity regression")
    common(c)
    c.add_argument("--regressor", choices=REGRESSORS)
    r = sub.add_parser("report", help="merge run reports into one table")
    r.add_argument("runs", nargs="+", help="run directories holding report.json")
    r.add_argument("--out", help="directory for summary.csv / summary.txt")
    r.add_argument("--config", help=argparse.SUPPRESS)
    return p


COMMANDS = {"generate": cmd_generate, "detect": cmd_detect, "capacity": cmd_capacity,
            "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        if getattr(args, "folds", None) is not None and args.folds < 2:
            raise UsageError("--folds must be at least 2")
        cfg = load_config(args.config) if args.command != "report" else {}
        return COMMANDS[args.command](args, cfg)
    except UsageError as e:
        print(f"evbattery: error: {e}", file=sys.stderr)
        return 1
    except (ProtocolError, RecordError, ValueError, OSError, FloatingPointError) as e:
        print(f"evbattery: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
