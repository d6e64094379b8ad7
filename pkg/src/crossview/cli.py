"""``crossview`` command line: simulate, parse, oracle, eval, bench, grid."""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .energy import EnergyWeights
from .evidence import DEFAULT_DET_THRESHOLD, load_evidence
from .graphs import hierarchy_records, read_records, write_records
from .inference import ParseConfig, joint_parse_full, project_missing
from .metrics import evaluate
from .ontology import default_ontology, load_ontology
from .prior import PriorModel
from .sampler import SamplerConfig

log = logging.getLogger("crossview")

# flag name -> built-in default; config files may set any of these keys
DEFAULTS = {
    "ontology": None, "proposals": None, "calib": None, "prior": None,
    "w1": 1.0, "w2": 1.0, "w3": 1.0, "w4": 1.0, "xi": 1.0, "eps_prob": 1e-6,
    "iters": 5000, "seed": 0, "chains": 1, "conv_window": 0, "rounds": 10, "conv_eps": 1e-6,
    "det_threshold": DEFAULT_DET_THRESHOLD, "out": None, "trace": None, "project": False,
    "limit": 8, "sim_config": None, "train": 5, "pred": None, "truth": None,
    "cameras": None, "frames": None, "entities": None, "clutter": None, "miss": None, "flip": None,
    "grid_w1": "1,5", "grid_w2": "0.3,1", "grid_w3": "1", "grid_w4": "1", "grid_seeds": 3,
}


class UsageError(ValueError):
    pass


def _add_common(p):
    p.add_argument("--config", help="JSON run config; keys are flag names with underscores")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_model(p):
    p.add_argument("--ontology", help="ontology JSON (default: built-in)")
    p.add_argument("--prior", help="prior JSON file or 'uniform' (default)")
    for w in ("w1", "w2", "w3", "w4", "xi"):
        p.add_argument(f"--{w}", type=float)
    p.add_argument("--eps-prob", type=float)
    p.add_argument("--det-threshold", type=float)


def _add_inputs(p):
    p.add_argument("--proposals")
    p.add_argument("--calib")


def _add_search(p):
    p.add_argument("--iters", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--conv-window", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--conv-eps", type=float)


def _add_scene(p):
    p.add_argument("--sim-config", help="JSON with 'scene' and 'noise' sections")
    p.add_argument("--cameras", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--entities", type=int)
    p.add_argument("--clutter", type=float)
    p.add_argument("--miss", type=float)
    p.add_argument("--flip", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crossview", description="Scene-centric joint parsing of cross-view videos.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write synthetic proposals, calibration, truth and a trained prior")
    _add_common(p); _add_scene(p)
    p.add_argument("--train", type=int, help="held-out scenes for the prior (0 skips prior.json)")

    p = sub.add_parser("parse", help="joint parse of a proposal file")
    _add_common(p); _add_model(p); _add_inputs(p); _add_search(p)
    p.add_argument("--trace", help="write the sampler trace (JSONL) here")
    p.add_argument("--project", action="store_true", help="add boxes for scene entities missed in a view")

    p = sub.add_parser("oracle", help="exact MAP by exhaustive enumeration (tiny inputs)")
    _add_common(p); _add_model(p); _add_inputs(p)
    p.add_argument("--limit", type=int)

    p = sub.add_parser("eval", help="score a result file against ground truth")
    _add_common(p)
    p.add_argument("--pred")
    p.add_argument("--truth")

    p = sub.add_parser("bench", help="frames/second on the 4-camera, 15-entity, 180-frame workload")
    _add_common(p); _add_search(p); _add_scene(p)

    p = sub.add_parser("grid", help="grid search of energy weights on simulated scenes")
    _add_common(p); _add_search(p); _add_scene(p)
    for w in ("w1", "w2", "w3", "w4"):
        p.add_argument(f"--grid-{w}", help="comma-separated values")
    p.add_argument("--grid-seeds", type=int)
    return ap


def resolve(args) -> dict:
    """Built-in defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"config {path}: unknown keys {sorted(unknown)}")
        cfg.update(doc)
    for k, v in vars(args).items():
        if v is not None and k in DEFAULTS and not (v is False and k == "project"):
            cfg[k] = v
    return cfg


def _need(cfg, *keys):
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _path(p, what):
    path = Path(p)
    if not path.exists():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return path


def _ontology(cfg):
    if cfg["ontology"]:
        return load_ontology(_path(cfg["ontology"], "ontology").read_text())
    return default_ontology()


def _prior(cfg, ont):
    if cfg["prior"] and cfg["prior"] != "uniform":
        return PriorModel.load(_path(cfg["prior"], "prior"))
    return PriorModel.uniform(ont)


def _weights(cfg):
    return EnergyWeights(cfg["w1"], cfg["w2"], cfg["w3"], cfg["w4"], cfg["xi"], cfg["eps_prob"])


def _evidence(cfg, ont):
    _need(cfg, "proposals", "calib")
    return load_evidence(_path(cfg["proposals"], "proposals"), _path(cfg["calib"], "calibration"), ontology=ont)


def _sim_configs(cfg):
    from .simulator import NoiseModel, SceneConfig, load_sim_config

    if cfg["sim_config"]:
        scene, noise = load_sim_config(_path(cfg["sim_config"], "simulation config"))
    else:
        scene, noise = SceneConfig(), NoiseModel()
    for flag, obj, field in (("cameras", "scene", "n_cameras"), ("frames", "scene", "n_frames"),
                             ("entities", "scene", "n_entities"), ("clutter", "noise", "clutter_rate"),
                             ("miss", "noise", "miss_prob"), ("flip", "noise", "action_flip")):
        if cfg[flag] is not None:
            if obj == "scene":
                scene = replace(scene, **{field: cfg[flag]})
            else:
                noise = replace(noise, **{field: cfg[flag]})
    return scene, noise


def _parse_config(cfg) -> ParseConfig:
    return ParseConfig(
        sampler=SamplerConfig(iterations=cfg["iters"], seed=cfg["seed"], conv_window=cfg["conv_window"],
                              record_trace=bool(cfg["trace"])),
        rounds=cfg["rounds"], conv_eps=cfg["conv_eps"], det_threshold=cfg["det_threshold"], chains=cfg["chains"])


def _write_jsonl(rows, path):
    Path(path).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


# -- subcommands -----------------------------------------------------------------

def cmd_simulate(cfg) -> int:
    from .experiments import SYNTH_PENALTIES, TRAIN_SEED_BASE
    from .prior import estimate_prior
    from .simulator import config_to_json, generate_scene, render_proposals, truth_hierarchy, write_scene_files

    _need(cfg, "out")
    scene, noise = _sim_configs(cfg)
    ont = default_ontology()
    script = generate_scene(scene, cfg["seed"], ont)
    rendering = render_proposals(script, noise, cfg["seed"], ont)
    paths = write_scene_files(rendering, cfg["out"])
    Path(cfg["out"], "sim_config.json").write_text(json.dumps(config_to_json(scene, noise), sort_keys=True, indent=2) + "\n")
    if cfg["train"] > 0:
        train = [truth_hierarchy(generate_scene(scene, TRAIN_SEED_BASE + cfg["seed"] + i, ont))
                 for i in range(cfg["train"])]
        estimate_prior(train, ontology=ont, **SYNTH_PENALTIES).save(Path(cfg["out"], "prior.json"))
    print(json.dumps({k: str(v) for k, v in paths.items()}, sort_keys=True))
    return 0


def cmd_parse(cfg) -> int:
    _need(cfg, "out")
    ont = _ontology(cfg)
    ev = _evidence(cfg, ont)
    res = joint_parse_full(ev, _weights(cfg), _prior(cfg, ont), _parse_config(cfg))
    extra = project_missing(res.hierarchy, ev)[0] if cfg["project"] else None
    write_records(hierarchy_records(res.hierarchy, res.values, extra), cfg["out"])
    if cfg["trace"]:
        _write_jsonl(res.trace, cfg["trace"])
    print(json.dumps({"logp": res.logp, "rounds": len(res.history),
                      "scene_entities": len(res.hierarchy.scene_entity_ids())}, sort_keys=True))
    return 0


def cmd_oracle(cfg) -> int:
    from .inference import infer_values
    from .simulator import brute_force_map

    _need(cfg, "out")
    ont = _ontology(cfg)
    ev = _evidence(cfg, ont)
    h, lp = brute_force_map(ev, _weights(cfg), _prior(cfg, ont), limit=cfg["limit"],
                            det_threshold=cfg["det_threshold"])
    write_records(hierarchy_records(h, infer_values(h, ev, _weights(cfg), _prior(cfg, ont))), cfg["out"])
    print(json.dumps({"logp": lp, "scene_entities": len(h.scene_entity_ids())}, sort_keys=True))
    return 0


def cmd_eval(cfg) -> int:
    _need(cfg, "pred", "truth")
    pred = read_records(_path(cfg["pred"], "prediction"))
    truth = read_records(_path(cfg["truth"], "ground-truth"))
    report = evaluate(pred, truth)
    if cfg["out"]:
        Path(cfg["out"]).write_text(report.dumps() + "\n")
    print(report.table())
    return 0


def cmd_bench(cfg) -> int:
    from .experiments import BENCH, bench

    wl = BENCH
    scene, noise = wl.scene, wl.noise
    for flag, field in (("cameras", "n_cameras"), ("frames", "n_frames"), ("entities", "n_entities")):
        if cfg[flag] is not None:
            scene = replace(scene, **{field: cfg[flag]})
    for flag, field in (("clutter", "clutter_rate"), ("miss", "miss_prob"), ("flip", "action_flip")):
        if cfg[flag] is not None:
            noise = replace(noise, **{field: cfg[flag]})
    # the workload keeps its own round budget unless one is given explicitly
    rounds = wl.parse.rounds if cfg["rounds"] == DEFAULTS["rounds"] else cfg["rounds"]
    parse = replace(wl.parse, sampler=replace(wl.parse.sampler, iterations=cfg["iters"]), rounds=rounds)
    report = bench(replace(wl, scene=scene, noise=noise, parse=parse), seed=cfg["seed"])
    text = json.dumps(report, sort_keys=True)
    if cfg["out"]:
        Path(cfg["out"]).write_text(text + "\n")
    print(text)
    return 0


def _floats(s) -> list[float]:
    try:
        return [float(x) for x in str(s).split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad grid value list {s!r}") from exc


def cmd_grid(cfg) -> int:
    from .experiments import IDENTITY, Workload, action_scores, identity_scores, parse_scene, train_prior

    scene, noise = _sim_configs(cfg) if (cfg["sim_config"] or any(
        cfg[k] is not None for k in ("cameras", "frames", "entities", "clutter", "miss", "flip"))) \
        else (IDENTITY.scene, IDENTITY.noise)
    parse = ParseConfig(sampler=SamplerConfig(iterations=cfg["iters"]), rounds=cfg["rounds"])
    base = Workload(scene, noise, parse=parse)
    prior = train_prior(base)
    rows = []
    for w1, w2, w3, w4 in itertools.product(*(_floats(cfg[f"grid_w{i}"]) for i in range(1, 5))):
        wl = replace(base, weights=EnergyWeights(w1, w2, w3, w4))
        f1s, accs = [], []
        for s in range(cfg["grid_seeds"]):
            run = parse_scene(wl, cfg["seed"] + s, prior)
            f1s.append(identity_scores(run)[2])
            accs.append(action_scores(run).accuracy("scene"))
        row = {"w1": w1, "w2": w2, "w3": w3, "w4": w4,
               "identity_f1": float(np.mean(f1s)), "action_acc": float(np.nanmean(accs))}
        rows.append(row)
        print(json.dumps(row, sort_keys=True), flush=True)
    if cfg["out"]:
        _write_jsonl(rows, cfg["out"])
    return 0


COMMANDS = {"simulate": cmd_simulate, "parse": cmd_parse, "oracle": cmd_oracle,
            "eval": cmd_eval, "bench": cmd_bench, "grid": cmd_grid}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
