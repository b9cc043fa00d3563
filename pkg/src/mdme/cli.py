"""Command-line front end: synth, augment, embed, train, eval, cluster.

Every subcommand writes a run manifest (resolved config, seed, input and
output paths, version, timestamp) next to its outputs; `train
--from-manifest` replays a recorded run and reproduces its curve CSV
byte-for-byte. Exit codes: 0 success, 2 usage/config error, 3
runtime/numeric error. Report paths also render matplotlib figures beside
the delimited outputs unless --no-figures is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as A
from . import motion as M
from . import network as N
from . import objectives as O
from . import training as TR
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, MdmeError, ParseError
from .rng import Rng


def _model_config(preset: dict, ablation: str = "full") -> N.MdmeConfig:
    m = preset["model"]
    return N.MdmeConfig(
        history=m["history"], goal_dim=m["goal_dim"], phase_channels=m["phase_channels"],
        levels=m["levels"], latent_dim=m["latent_dim"],
        enc_hidden=tuple(m["enc_hidden"]), dec_hidden=tuple(m["dec_hidden"]),
        action_dim=m["action_dim"], proprio_dim=m["proprio_dim"], ablation=ablation,
    )


def _noise_spec(preset: dict) -> M.NoiseSpec | None:
    ranges = preset.get("input_noise")
    if not ranges:
        return None
    return M.NoiseSpec(ranges={tag: tuple(band) for tag, band in ranges.items()})


def _warp_spec(preset: dict) -> M.WarpSpec:
    w = preset.get("warp")
    if not w:
        return M.default_warp()
    center = w.get("center")
    if center == "quadruped":
        center = M.quadruped_center()
    elif center is not None:
        center = tuple(center)
    return M.WarpSpec(seed=w.get("seed", 7), target_dim=w.get("target_dim", 12),
                      gain=w.get("gain", 6.0),
                      offset_range=tuple(w.get("offset_range", (0.5, 1.2))),
                      center=center, identity=w.get("identity", False))


def _load_dataset(data_dir: Path) -> list[M.MotionSequence]:
    if not data_dir.is_dir():
        raise ConfigError(f"data directory not found: {data_dir}")
    files = sorted(data_dir.glob("*.csv"))
    if not files:
        raise ConfigError(f"no motion files (*.csv) in {data_dir}")
    return [M.load_motion(p) for p in files]


def _write_manifest(path: Path, subcommand: str, config: dict, seed: int,
                    inputs: dict, outputs: dict) -> None:
    manifest = {
        "format": "mdme-manifest",
        "version": __version__,
        "subcommand": subcommand,
        "seed": seed,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    path.write_text(json.dumps(manifest, indent=2))


def _require_file(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _check_params_match(params: dict, model_cfg: N.MdmeConfig) -> None:
    expected = N.init_params(model_cfg, Rng(0))
    mismatched = sorted(
        k for k in expected
        if k not in params or params[k].shape != expected[k].shape
    )
    extra = sorted(set(params) - set(expected))
    if mismatched or extra:
        raise ConfigError(
            f"checkpoint does not match the model config; "
            f"missing/mis-shaped: {mismatched[:5]}, unexpected: {extra[:5]}"
        )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = Rng(args.seed)
    specs = M.corpus_specs()
    if args.count > len(specs):  # extend deterministically beyond the bundled ten
        specs += [M.SynthSpec(name=f"extra{i:02d}", sine_count=2, bump_count=i % 4,
                              noise=0.005) for i in range(args.count - len(specs))]
    specs = specs[: args.count]
    written = []
    for i, spec in enumerate(specs):
        seq = M.synth_motion(spec, rng.split(i))
        path = out / f"{spec.name}.csv"
        M.save_motion(seq, path)
        written.append(path.name)
    _write_manifest(out / "manifest.json", "synth",
                    {"count": len(specs), "corpus": "quadruped-synthetic"},
                    args.seed, {}, {"motions": written})
    print(f"wrote {len(written)} motions to {out}")
    return 0


def cmd_augment(args) -> int:
    data_dir = Path(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seqs = _load_dataset(data_dir)
    reflections = tuple("" if r in ("o", "none") else r for r in args.mirrors)
    augmented = M.augment_dataset(seqs, reflections=reflections, scales=tuple(args.scales))
    written = []
    for seq in augmented:
        path = out / f"{seq.name}.csv"
        M.save_motion(seq, path)
        written.append(path.name)
    _write_manifest(out / "manifest.json", "augment",
                    {"mirrors": list(args.mirrors), "scales": list(args.scales)},
                    0, {"data": str(data_dir), "motions": len(seqs)},
                    {"motions": written})
    print(f"{len(seqs)} motions -> {len(augmented)} augmented in {out}")
    return 0


def cmd_embed(args) -> int:
    motion_path = _require_file(Path(args.motion), "motion file")
    preset = O.load_preset(args.preset)
    cfg = _model_config(preset)
    seq = M.load_motion(motion_path)
    if seq.dim != cfg.goal_dim:
        raise ConfigError(f"motion has {seq.dim} channels, preset expects {cfg.goal_dim}")
    if args.checkpoint:
        params, _ = load_checkpoint(Path(args.checkpoint))
        _check_params_match(params, cfg)
        model = N.MdmeModel(cfg, params=params)
    else:
        model = N.MdmeModel(cfg, init_rng=Rng(A.FROZEN_FRONTEND_SEED))
    ts = np.arange(seq.frames)
    wins = M.gather_windows(seq, ts, cfg.history)
    ents = model.encode_structured(wins, train=False).data
    N.EntropyVector(values=ents, levels=cfg.levels)  # length/finite validation
    latents = None
    if args.checkpoint:
        latents = model.encode_unstructured(wins, mode="mean").mu.data
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    header = ["frame"] + [f"zw_{i:02d}[bit]" for i in range(ents.shape[1])]
    if latents is not None:
        header += [f"zv_{i:02d}[-]" for i in range(latents.shape[1])]
    with open(out, "w") as fh:
        fh.write(",".join(header) + "\n")
        for t in range(seq.frames):
            cells = [str(t)] + [repr(v) for v in ents[t]]
            if latents is not None:
                cells += [repr(v) for v in latents[t]]
            fh.write(",".join(cells) + "\n")
    _write_manifest(out.with_suffix(".manifest.json"), "embed",
                    {"preset": preset["name"], "checkpoint": args.checkpoint or None},
                    0, {"motion": str(motion_path)}, {"trace": str(out)})
    print(f"wrote {ents.shape[1]} entropy columns x {seq.frames} frames to {out}")
    return 0


def _resolved_train_config(args) -> dict:
    if args.from_manifest:
        manifest = json.loads(_require_file(Path(args.from_manifest), "manifest").read_text())
        if manifest.get("subcommand") != "train":
            raise ConfigError(f"{args.from_manifest} is not a train manifest")
        cfg = manifest["config"]
        cfg["data"] = manifest["inputs"]["data"]
        return cfg
    preset = O.load_preset(args.preset)
    train = dict(preset.get("train", {}))
    cfg = {
        "preset": preset,
        "seed": args.seed,
        "ablation": args.ablation,
        "iterations": args.iterations or train.get("iterations", 3000),
        "batch_size": train.get("batch_size", 32),
        "beta": train.get("beta", 1e-3),
        "val_every": train.get("val_every", 250),
        "val_count": train.get("val_count", 2),
        "learning_rate": preset.get("learning_rate", 1e-3),
        "data": args.data,
    }
    return cfg


def cmd_train(args) -> int:
    cfg = _resolved_train_config(args)
    preset = cfg["preset"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # validate before any work starts
    model_cfg = _model_config(preset, cfg["ablation"])
    train_cfg = TR.TrainConfig(
        seed=cfg["seed"], learning_rate=cfg["learning_rate"], batch_size=cfg["batch_size"],
        iterations=cfg["iterations"], beta=cfg["beta"], val_every=cfg["val_every"],
        val_count=cfg["val_count"], ablation=cfg["ablation"], noise=_noise_spec(preset),
    )
    seqs = _load_dataset(Path(cfg["data"]))
    warp = _warp_spec(preset)
    pairs = [M.synth_retarget(s, warp) for s in seqs]
    result = TR.train(pairs, model_cfg, train_cfg)

    curve_path = out / "curve.csv"
    curve_path.write_text(result.curve.to_csv())
    ckpt_dir = out / "checkpoint"
    save_checkpoint(ckpt_dir, result.params, meta={
        "config": {k: v for k, v in cfg.items() if k != "data"},
        "val_ids": result.val_ids,
        "train_ids": result.train_ids,
        "best_val": result.best_val,
    })
    _write_manifest(out / "manifest.json", "train",
                    {k: v for k, v in cfg.items() if k != "data"}, cfg["seed"],
                    {"data": cfg["data"], "motions": [p.name for p in pairs]},
                    {"curve": curve_path.name, "checkpoint": ckpt_dir.name})
    if not args.no_figures:
        from .report import render_learning_curve
        render_learning_curve(curve_path, out / "curve.png")
    print(f"trained {cfg['ablation']} for {cfg['iterations']} iterations; "
          f"best validation smape {result.best_val:.4f}; artifacts in {out}")
    return 0


def cmd_eval(args) -> int:
    params, meta = load_checkpoint(_require_file(Path(args.checkpoint), "checkpoint"))
    cfg = meta.get("config", {})
    preset = cfg.get("preset") or O.load_preset(args.preset or "synth-quadruped")
    model_cfg = N.build_ablation(cfg.get("ablation", "full"), _model_config(preset))
    _check_params_match(params, model_cfg)
    model = N.MdmeModel(model_cfg, params=params)
    seqs = _load_dataset(Path(args.data))
    warp = _warp_spec(preset)
    pairs = [M.synth_retarget(s, warp) for s in seqs]
    layout = O.metric_layout(preset)
    noise = None if args.no_noise else _noise_spec(preset)
    report = TR.evaluate(model, pairs, layout, noise=noise,
                         runs=args.runs, seeds=tuple(args.seeds))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    _write_manifest(out / "manifest.json", "eval",
                    {"runs": args.runs, "seeds": list(args.seeds),
                     "noise": not args.no_noise, "preset": preset["name"]},
                    0, {"data": args.data, "checkpoint": args.checkpoint},
                    {"report": "report.json"})
    if not args.no_figures:
        from .report import render_eval_report
        render_eval_report(report, out / "report.png")
    print(f"mean total error {report.mean_total:.6f} over {len(report.rows)} motions; "
          f"report in {out}")
    return 0


def cmd_cluster(args) -> int:
    preset = O.load_preset(args.preset)
    cfg = _model_config(preset)
    seqs = _load_dataset(Path(args.data))
    params = None
    if args.weights:
        params, _ = load_checkpoint(Path(args.weights))
    feats = A.extract_features(seqs, cfg, params=params)
    report = A.cluster_motions(feats, k=args.k, seed=args.seed)
    metrics = None
    if args.errors:
        metrics = O.MetricReport.from_json(_require_file(Path(args.errors), "error report").read_text())
    rows = A.error_overlay(report, metrics)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    overlay_path = out / "overlay.csv"
    overlay_path.write_text(A.overlay_csv(rows))
    _write_manifest(out / "manifest.json", "cluster",
                    {"preset": preset["name"], "k": args.k,
                     "weights": args.weights or None, "errors": args.errors or None,
                     "explained_variance": [float(v) for v in report.explained_variance],
                     "skipped": feats.skipped},
                    args.seed, {"data": args.data}, {"overlay": overlay_path.name})
    if not args.no_figures:
        from .report import render_cluster_scatter
        render_cluster_scatter(overlay_path, out / "overlay.png")
    print(f"clustered {len(report.ids)} motions into {args.k} groups "
          f"(explained variance {report.explained_variance.round(3).tolist()}); "
          f"overlay in {overlay_path}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdme",
                                description="Multi-domain motion embedding toolkit")
    p.add_argument("--version", action="version", version=f"mdme {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate the bundled synthetic motion corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--count", type=int, default=10)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("augment", help="materialize mirrored/scaled dataset variants")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mirrors", nargs="+", default=["o", "x", "y", "xy"],
                    help="reflection states; 'o' is the identity")
    sp.add_argument("--scales", nargs="+", type=float, default=[0.9, 1.0, 1.1])
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("embed", help="write per-frame embedding traces as CSV")
    sp.add_argument("--motion", required=True)
    sp.add_argument("--preset", default="quadruped")
    sp.add_argument("--out", required=True)
    sp.add_argument("--checkpoint", default=None,
                    help="trained checkpoint dir; adds mean-mode latent columns")
    sp.set_defaults(func=cmd_embed)

    sp = sub.add_parser("train", help="train the supervised imitation surrogate")
    sp.add_argument("--data", default=None)
    sp.add_argument("--preset", default="synth-quadruped")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--iterations", type=int, default=None)
    sp.add_argument("--ablation", default="full",
                    help=f"one of: {', '.join(N.ABLATION_KEYS)}")
    sp.add_argument("--from-manifest", default=None,
                    help="replay a recorded train run (byte-identical curve)")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a motion directory")
    sp.add_argument("--data", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--preset", default=None)
    sp.add_argument("--runs", type=int, default=5)
    sp.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    sp.add_argument("--no-noise", action="store_true")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("cluster", help="wavelet-entropy features -> PCA -> K-means")
    sp.add_argument("--data", required=True)
    sp.add_argument("--preset", default="synth-quadruped")
    sp.add_argument("--out", required=True)
    sp.add_argument("--k", type=int, default=4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--errors", default=None, help="eval report.json for the error overlay")
    sp.add_argument("--weights", default=None, help="trained checkpoint for the front end")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_cluster)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "train" and not args.from_manifest and not args.data:
        parser.error("train needs --data (or --from-manifest)")
    try:
        return args.func(args)
    except (ConfigError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except MdmeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
