"""Command-line pipeline runner.

Subcommands cover the pipeline stages: ``generate`` a synthetic deployment,
``ingest`` raw CSVs onto the canonical 1 Hz grid, export ``features``,
``train`` a model, ``evaluate`` on the held-out half, compute ``importance``,
and build the cross-deployment ``report``.  Every output embeds the resolved
config hash, the seed, and a schema version; reruns with the same config and
seed are byte-identical.

Config file (JSON):

    {
      "seed": 42,
      "out_dir": "runs/demo",
      "deployments": {"d1": "data/d1/manifest.json"},
      "protocol": {
        "negative_ratio": 3, "split_fraction": 0.5, "folds": 5,
        "filter_window": 10, "permutation_repeats": 10,
        "importance_per_feature": true,
        "train_only_stats": false, "permute_labels": false,
        "gbt": {"n_trees": 200, "max_depth": 3, "learning_rate": 0.1},
        "lstm": {"hidden_size": 256, "batch_size": 16, "max_epochs": 200},
        "geometry": {"gap_min": 12, "window_min": 6, "n_windows": 9}
      },
      "generator": {
        "id": "synth1", "duration_days": 14, "n_nodes": 2, "tz_offset_min": 0,
        "profile": {"bursts_per_hour": 6.0},
        "rules": [{"kind": "noise_spike", "rate_per_week": 5.0}]
      }
    }

``--seed`` overrides the config seed; ``--out`` the output directory;
``--deployment`` selects entries of ``deployments`` (default: all);
``--combined`` pools the selected deployments into one dataset.
Exit codes: 0 success, 1 pipeline error, 2 config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .data_model import CHANNEL_ORDER, Deployment, load_deployment, write_deployment
from .evaluation import (
    ProtocolConfig,
    build_observation_set,
    comparison_markdown,
    run_matrix,
    run_protocol,
)
from .features import WindowGeometry, write_features_csv
from .gbt import GbtHyperparams, save_gbt
from .lstm import LstmHyperparams, save_lstm
from .signal_processing import preprocess_deployment
from .synth import DiurnalProfile, TriggerRule, generate_deployment

SCHEMA_VERSION = "agisense/1"


class ConfigError(Exception):
    """Bad or missing configuration; maps to exit code 2."""


class PipelineError(Exception):
    """A stage failed while running; maps to exit code 1."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage


# ---------------------------------------------------------------------------
# Config loading

def _build_dataclass(cls, values: dict, path: str):
    """Instantiate a (frozen) config dataclass from a JSON object.

    Unknown keys are config errors named in full; JSON lists become tuples
    where the target field holds one.
    """
    if not isinstance(values, dict):
        raise ConfigError(f"config key {path!r} must be an object")
    field_names = {f.name for f in dataclasses.fields(cls)}
    for key in values:
        if key not in field_names:
            raise ConfigError(f"unknown config key {path}.{key}")
    kwargs = {
        k: tuple(v) if isinstance(v, list) else v for k, v in values.items()
    }
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config under {path!r}: {exc}") from exc


def _protocol_config(raw: dict, seed: int) -> ProtocolConfig:
    raw = dict(raw)
    nested = {}
    for key, cls in (("gbt", GbtHyperparams), ("lstm", LstmHyperparams),
                     ("geometry", WindowGeometry)):
        if key in raw:
            nested[key] = _build_dataclass(cls, raw.pop(key), f"protocol.{key}")
    cfg = _build_dataclass(ProtocolConfig, raw, "protocol")
    return dataclasses.replace(cfg, seed=seed, **nested)


class RunConfig:
    """Resolved invocation: config file contents plus flag overrides."""

    def __init__(self, args):
        if args.config is None:
            raise ConfigError("missing required flag --config")
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")

        self.raw = raw
        self.seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
        out = args.out or raw.get("out_dir")
        if out is None:
            raise ConfigError("missing config key 'out_dir' (or flag --out)")
        self.out_dir = Path(out)
        self.protocol = _protocol_config(raw.get("protocol", {}), self.seed)
        self.config_dir = path.parent

        deployments = raw.get("deployments", {})
        if not isinstance(deployments, dict):
            raise ConfigError("config key 'deployments' must map ids to manifest paths")
        self.deployment_paths = {
            dep_id: (self.config_dir / p if not Path(p).is_absolute() else Path(p))
            for dep_id, p in deployments.items()
        }

    def hash(self) -> str:
        """Hash of everything that determines outputs (output dir excluded)."""
        resolved = {
            "seed": self.seed,
            "deployments": {k: str(v) for k, v in sorted(self.deployment_paths.items())},
            "protocol": self.raw.get("protocol", {}),
            "generator": self.raw.get("generator", {}),
        }
        blob = json.dumps(resolved, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def select_deployments(self, ids: list[str] | None) -> dict[str, Path]:
        if not self.deployment_paths:
            raise ConfigError("missing config key 'deployments'")
        if not ids:
            return dict(self.deployment_paths)
        selected = {}
        for dep_id in ids:
            if dep_id not in self.deployment_paths:
                raise ConfigError(f"unknown deployment id {dep_id!r} under 'deployments'")
            selected[dep_id] = self.deployment_paths[dep_id]
        return selected

    def generator(self) -> dict:
        gen = self.raw.get("generator")
        if gen is None:
            raise ConfigError("missing config key 'generator'")
        if not isinstance(gen, dict):
            raise ConfigError("config key 'generator' must be an object")
        for key in ("duration_days", "rules"):
            if key not in gen:
                raise ConfigError(f"missing config key generator.{key}")
        return gen

    def stamp(self) -> dict:
        return {"schema": SCHEMA_VERSION, "config_hash": self.hash(), "seed": self.seed}


def _write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_selected(cfg: RunConfig, ids: list[str] | None) -> dict[str, Deployment]:
    return {
        dep_id: load_deployment(path)
        for dep_id, path in cfg.select_deployments(ids).items()
    }


# ---------------------------------------------------------------------------
# Stages

def _cmd_generate(cfg: RunConfig, args) -> None:
    gen = cfg.generator()
    profile = _build_dataclass(DiurnalProfile, gen.get("profile", {}), "generator.profile")
    rules = []
    for i, rule_raw in enumerate(gen["rules"]):
        if not isinstance(rule_raw, dict) or "kind" not in rule_raw:
            raise ConfigError(f"missing config key generator.rules[{i}].kind")
        rules.append(_build_dataclass(TriggerRule, rule_raw, f"generator.rules[{i}]"))
    dep_id = str(gen.get("id", "synth"))
    out = cfg.out_dir / dep_id
    paths = generate_deployment(
        profile,
        rules,
        duration_days=float(gen["duration_days"]),
        n_nodes=int(gen.get("n_nodes", 1)),
        seed=cfg.seed,
        out_dir=out,
        dep_id=dep_id,
        tz_offset_min=int(gen.get("tz_offset_min", 0)),
    )
    _write_json(out / "generate_meta.json", {**cfg.stamp(), "deployment_id": dep_id})
    print(f"generated deployment {dep_id!r}: {paths['manifest']}")


def _quality_summary(dep: Deployment) -> dict:
    channels = {}
    for node_id in dep.node_ids:
        for channel in CHANNEL_ORDER:
            cs = dep.nodes[node_id][channel]
            present = ~cs.missing
            values = cs.values[present]
            channels[f"{node_id}/{channel.key}"] = {
                "present": int(present.sum()),
                "missing": int(cs.missing.sum()),
                "missing_fraction": float(cs.missing.mean()),
                "min": float(values.min()) if values.size else None,
                "max": float(values.max()) if values.size else None,
            }
    return {
        "deployment_id": dep.id,
        "span": list(dep.span),
        "n_labels": len(dep.labels),
        "nodes": dep.node_ids,
        "channels": channels,
    }


def _cmd_ingest(cfg: RunConfig, args) -> None:
    for dep_id, dep in _load_selected(cfg, args.deployment).items():
        out = cfg.out_dir / dep_id
        manifest = write_deployment(dep, out / "canonical")
        _write_json(out / "quality.json", {**cfg.stamp(), **_quality_summary(dep)})
        print(f"ingested {dep_id!r}: {manifest}")


def _cmd_features(cfg: RunConfig, args) -> None:
    for dep_id, dep in _load_selected(cfg, args.deployment).items():
        prepared, _ = preprocess_deployment(dep, cfg.protocol.filter_window)
        obs_set = build_observation_set(prepared, cfg.protocol)
        out = cfg.out_dir / dep_id
        out.mkdir(parents=True, exist_ok=True)
        write_features_csv(out / "features.csv", obs_set.observations)
        _write_json(out / "features_meta.json", {
            **cfg.stamp(),
            "deployment_id": dep_id,
            "n_observations": len(obs_set.observations),
            "n_positive": obs_set.n_positive,
            "dropped": obs_set.dropped,
        })
        print(f"features for {dep_id!r}: {out / 'features.csv'}")


def _dataset_arg(cfg: RunConfig, args) -> tuple[str, Deployment | list[Deployment]]:
    deps = _load_selected(cfg, args.deployment)
    if args.combined:
        dep_list = list(deps.values())
        return "+".join(deps), dep_list if len(dep_list) > 1 else dep_list[0]
    if len(deps) != 1:
        raise ConfigError(
            "select exactly one deployment with --deployment, or pass --combined"
        )
    ((dep_id, dep),) = deps.items()
    return dep_id, dep


def _cmd_train(cfg: RunConfig, args) -> None:
    dataset_id, deps = _dataset_arg(cfg, args)
    result = run_protocol(deps, args.model, cfg.protocol, with_importance=False)
    out = cfg.out_dir / dataset_id
    out.mkdir(parents=True, exist_ok=True)
    bundle = out / f"model_{args.model}.json"
    if args.model == "gbt":
        save_gbt(result.model, bundle)
    else:
        save_lstm(result.model, bundle, hp=cfg.protocol.lstm, seed=cfg.seed)
    _write_json(out / f"train_log_{args.model}.json", {
        **cfg.stamp(),
        "dataset_id": dataset_id,
        "model_kind": args.model,
        "stopping_point": result.stopping_point,
        "fold_stops": result.fold_stops,
        "train_log": result.train_log.to_dict(),
        "dropped": result.dropped,
    })
    print(f"trained {args.model} on {dataset_id!r}: {bundle}")


def _metrics_markdown(result, stamp: dict) -> str:
    m = result.metrics
    lines = [
        f"# Evaluation: {result.model_kind} on {result.dataset_id}",
        "",
        f"Seed {stamp['seed']}, config {stamp['config_hash']}, schema {stamp['schema']}.",
        "",
        "| metric | value |",
        "|---|---|",
        f"| accuracy | {m.accuracy:.3f} |",
        f"| precision | {m.precision:.3f}{' (no predicted positives)' if m.precision_zero_denominator else ''} |",
        f"| recall | {m.recall:.3f} |",
        f"| weighted F1 | {m.weighted_f1:.3f} |",
        f"| majority baseline accuracy | {m.majority_baseline_accuracy:.3f} |",
        f"| majority baseline weighted F1 | {m.majority_baseline_weighted_f1:.3f} |",
        "",
        f"Confusion counts: tp={m.confusion.tp}, fp={m.confusion.fp}, "
        f"tn={m.confusion.tn}, fn={m.confusion.fn}; "
        f"train/test sizes {result.n_train}/{result.n_test}; "
        f"stopping point {result.stopping_point}.",
        "",
    ]
    return "\n".join(lines)


def _cmd_evaluate(cfg: RunConfig, args) -> None:
    dataset_id, deps = _dataset_arg(cfg, args)
    result = run_protocol(deps, args.model, cfg.protocol, with_importance=False)
    out = cfg.out_dir / dataset_id
    _write_json(out / f"metrics_{args.model}.json", {**cfg.stamp(), **result.to_dict()})
    md = out / f"metrics_{args.model}.md"
    md.write_text(_metrics_markdown(result, cfg.stamp()))
    print(f"evaluated {args.model} on {dataset_id!r}: F_w={result.metrics.weighted_f1:.3f}")


def _cmd_importance(cfg: RunConfig, args) -> None:
    dataset_id, deps = _dataset_arg(cfg, args)
    result = run_protocol(deps, args.model, cfg.protocol, with_importance=True)
    out = cfg.out_dir / dataset_id
    _write_json(out / f"importance_{args.model}.json", {
        **cfg.stamp(),
        "dataset_id": dataset_id,
        "model_kind": args.model,
        "importance": result.importance.to_dict(),
    })
    print(f"importance for {args.model} on {dataset_id!r} written")


def _cmd_report(cfg: RunConfig, args) -> None:
    deps = _load_selected(cfg, args.deployment)
    dep_list = list(deps.values())
    results = run_matrix(dep_list, cfg.protocol, with_importance=False)
    payload = {
        **cfg.stamp(),
        "results": {f"{kind}:{ds}": r.to_dict() for (kind, ds), r in results.items()},
    }
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out_dir / "report.json", payload)
    md = comparison_markdown(results, [d.id for d in dep_list])
    header = (
        f"Seed {cfg.seed}, config {cfg.hash()}, schema {SCHEMA_VERSION}.\n\n"
    )
    (cfg.out_dir / "report.md").write_text(md.replace("\n\n", "\n\n" + header, 1))
    print(f"report over {len(dep_list)} deployment(s): {cfg.out_dir / 'report.md'}")


COMMANDS = {
    "generate": _cmd_generate,
    "ingest": _cmd_ingest,
    "features": _cmd_features,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "importance": _cmd_importance,
    "report": _cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agisense",
        description="Ambient-sensing agitation prediction pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=False, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--model", choices=["gbt", "lstm"], default="gbt")
        p.add_argument("--deployment", action="append", default=None,
                       help="deployment id from the config (repeatable)")
        p.add_argument("--combined", action="store_true",
                       help="pool the selected deployments into one dataset")
        p.add_argument("--out", default=None, help="output directory override")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(args)
        try:
            COMMANDS[args.command](cfg, args)
        except (ConfigError, PipelineError):
            raise
        except Exception as exc:
            raise PipelineError(args.command, exc) from exc
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
