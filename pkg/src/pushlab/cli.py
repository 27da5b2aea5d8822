"""``pushlab`` command-line interface.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .agent.train import TrainConfig, configure_threads, evaluate, load_agent, train
from .agent.variants import VARIANTS, get_variant
from .checkpoint import CheckpointError
from .env import EnvConfig, PushEnv
from .metrics import MANIFEST_COLUMNS, aggregate, write_trajectory
from .nets import NonFiniteError
from .physics2d import SimulationInstabilityError
from .sampling import SamplerMode, force_histogram, get_preset
from .vision import Camera, EncoderModel, random_masks, reconstruction_iou, train_autoencoder

log = logging.getLogger("pushlab")


class UsageError(Exception):
    pass


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _file_values(args) -> dict:
    return cfgmod.read_yaml(args.config) if args.config else {}


def _require_file(path, flag: str) -> None:
    if not path:
        raise UsageError(f"{flag} is required")
    if not Path(path).is_file():
        raise UsageError(f"{flag}: file not found: {path}")


def cmd_train_encoder(args) -> int:
    cfg = cfgmod.build(cfgmod.EncoderTrainConfig, _file_values(args), {"seed": args.seed, "epochs": args.epochs})
    out = _out_dir(args.out)
    cfgmod.write_resolved(cfg, out / "config.yaml", command="train-encoder")
    configure_threads()
    rng = np.random.default_rng(cfg.seed)
    camera = Camera.for_table(cfg.table_bounds)
    ranges = get_preset(cfg.preset)
    train_set = random_masks(cfg.n_masks, rng, camera, ranges, cfg.spawn_margin)
    holdout = random_masks(cfg.n_holdout, rng, camera, ranges, cfg.spawn_margin)

    with open(out / "loss.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss"])

        def on_epoch(epoch, loss):
            w.writerow([epoch + 1, f"{loss:.9g}"])
            f.flush()
            if (epoch + 1) % 50 == 0:
                log.info("epoch %d loss %.5f", epoch + 1, loss)

        model = train_autoencoder(
            train_set, cfg.epochs, seed=cfg.seed, batch_size=cfg.batch_size, lr=cfg.lr,
            final_lr_fraction=cfg.final_lr_fraction, augment=cfg.augment, on_epoch=on_epoch,
        )
    model.save(out / "encoder.bin")
    iou = float(reconstruction_iou(model, holdout).mean()) if holdout else float("nan")
    print(f"held-out IoU {iou:.4f} over {len(holdout)} masks; final loss {model.final_loss:.5f}")
    return 0


def cmd_train(args) -> int:
    overrides = {
        "seed": args.seed,
        "variant": args.variant,
        "observation": args.obs,
        "encoder_path": args.encoder,
        "total_steps": args.steps,
        "eval_episodes": args.episodes,
    }
    cfg = cfgmod.build(TrainConfig, _file_values(args), overrides)
    encoder = None
    if cfg.observation == "encoder":
        _require_file(cfg.encoder_path, "--encoder")
        encoder = EncoderModel.load(cfg.encoder_path)
    out = _out_dir(args.out)
    variant = get_variant(cfg.variant)
    cfgmod.write_resolved(
        cfg, out / "config.yaml", command="train", extractor=variant.extractor, sampler=variant.sampler.value
    )
    result = train(cfg, out, encoder=encoder)
    print(f"trained {result.steps} steps; best evaluation success {result.best_success:.2f}")
    return 0


def cmd_eval(args) -> int:
    overrides = {
        "checkpoint": args.checkpoint,
        "observation": args.obs,
        "encoder_path": args.encoder,
        "episodes": args.episodes,
        "seed": args.seed,
        "preset": args.preset,
    }
    cfg = cfgmod.build(cfgmod.EvalConfig, _file_values(args), overrides)
    _require_file(cfg.checkpoint, "--checkpoint")
    if cfg.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    agent, observation = load_agent(cfg.checkpoint)
    observation = cfg.observation or observation
    encoder = None
    if observation == "encoder":
        _require_file(cfg.encoder_path, "--encoder")
        encoder = EncoderModel.load(cfg.encoder_path)
    out = _out_dir(args.out)
    cfgmod.write_resolved(cfg, out / "config.yaml", command="eval", resolved_observation=observation)
    configure_threads()

    env = PushEnv(
        EnvConfig(table_bounds=cfg.table_bounds, sampler=cfg.sampler, preset=cfg.preset, observation=observation,
                  encoder_path=cfg.encoder_path),
        encoder=encoder,
    )
    rollouts = evaluate(agent, env, cfg.episodes, cfg.seed, keep_rows=cfg.export_trajectories)
    report = aggregate([r.record for r in rollouts])
    report.write_csv(out / "report.csv")
    text = report.to_text()
    (out / "report.txt").write_text(text + "\n")
    print(text)

    if cfg.export_trajectories:
        traj = _out_dir(out / "trajectories")
        with open(traj / "episodes.csv", "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=MANIFEST_COLUMNS)
            w.writeheader()
            for i, rollout in enumerate(rollouts):
                ep = rollout.setup
                name = f"episode_{i:04d}.csv"
                write_trajectory(traj / name, rollout.rows)
                w.writerow(dict(
                    episode=i, file=name, shape_class=ep.shape_class, mass=f"{ep.params.mass:.9g}",
                    mu_k=f"{ep.params.mu_k:.9g}", final_distance=f"{rollout.record.distances[-1]:.9g}",
                    success=int(rollout.record.success),
                ))
    return 0


def cmd_sample_friction(args) -> int:
    cfg = cfgmod.build(cfgmod.FrictionConfig, _file_values(args), {"seed": args.seed, "n": args.n, "bins": args.bins})
    if cfg.n < 0 or cfg.bins < 1:
        raise UsageError("--n must be >= 0 and --bins >= 1")
    out = _out_dir(args.out)
    cfgmod.write_resolved(cfg, out / "config.yaml", command="sample-friction")
    edges, density = force_histogram(cfg.n, cfg.bins, cfg.seed, get_preset(cfg.preset))
    modes = [m.value for m in SamplerMode]
    with open(out / "friction_hist.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin_lo", "bin_hi", *(f"density_{m}" for m in modes)])
        if cfg.n:
            for i in range(cfg.bins):
                w.writerow([f"{edges[i]:.9g}", f"{edges[i + 1]:.9g}", *(f"{density[m][i]:.9g}" for m in modes)])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pushlab", description="Planar pushing with history-aware RL agents.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", help="YAML file with settings (flags override it)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default=out_default, help="output directory")

    p = sub.add_parser("train-encoder", help="train the mask autoencoder")
    common(p, "runs/encoder")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train_encoder)

    p = sub.add_parser("train", help="train an agent variant")
    common(p, "runs/agent")
    p.add_argument("--variant", choices=sorted(VARIANTS))
    p.add_argument("--obs", choices=("encoder", "oracle"))
    p.add_argument("--encoder", help="encoder checkpoint (required with --obs encoder)")
    p.add_argument("--steps", type=int, help="environment step budget")
    p.add_argument("--episodes", type=int, help="episodes per periodic evaluation")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate an agent checkpoint")
    common(p, "runs/eval")
    p.add_argument("--checkpoint", help="agent checkpoint")
    p.add_argument("--obs", choices=("encoder", "oracle"))
    p.add_argument("--encoder", help="encoder checkpoint (required with --obs encoder)")
    p.add_argument("--episodes", type=int)
    p.add_argument("--preset", help="object parameter ranges (default small_friction)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample-friction", help="histogram sliding-friction forces under both samplers")
    common(p, "runs/friction")
    p.add_argument("--n", type=int, help="draws per sampler")
    p.add_argument("--bins", type=int)
    p.set_defaults(func=cmd_sample_friction)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, cfgmod.ConfigError) as exc:
        parser.error(str(exc))
    except (CheckpointError, NonFiniteError, SimulationInstabilityError, OSError, ValueError) as exc:
        print(f"pushlab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
