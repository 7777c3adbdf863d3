"""Command-line entry points: data generation, training, sampling, component
inspection, rollouts, evaluation and the editing server."""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np
import torch
from PIL import Image

from .checkpoint import ModelCheckpoint
from .config import PRESETS, TrainConfig
from .datasets import DatasetManifest, gen_balls_in_bowl, gen_stacks, gen_traffic_like
from .metrics import (EmbedderSpec, RandomConvEmbedder,
                      disentanglement_null_baseline, disentanglement_score,
                      fid_proxy, fvd_proxy)
from .studio import image_to_array, new_edit_state, render_components


def _save_image(img: torch.Tensor, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image_to_array(img)).save(path, format="PNG")


def _load_ckpt(path: str) -> ModelCheckpoint:
    return ModelCheckpoint.load(path)


@click.group()
def main() -> None:
    """Object-centric scene GAN toolkit."""


@main.command()
@click.option("--dataset", type=click.Choice(["balls", "stacks", "traffic"]), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--count", type=int, default=64, show_default=True,
              help="sequences (balls/traffic) or images (stacks)")
@click.option("--frames", type=int, default=16, show_default=True)
@click.option("--side", type=int, default=64, show_default=True)
@click.option("--split", type=str, default="train", show_default=True)
def datagen(dataset: str, out_dir: str, seed: int, count: int, frames: int,
            side: int, split: str) -> None:
    """Generate a procedural dataset and write its manifest."""
    if dataset == "balls":
        m = gen_balls_in_bowl(seed, count, frames, out_dir, side, split)
    elif dataset == "stacks":
        m = gen_stacks(seed, count, out_dir, side, split)
    else:
        m = gen_traffic_like(seed, count, frames, out_dir, side, split)
    click.echo(f"wrote {len(m.items)} items to {out_dir}/manifest_{split}.json")


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default="balls",
              show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--epochs", type=int, default=None, help="override preset epochs")
@click.option("--steps", "max_steps", type=int, default=None,
              help="stop after this many optimizer steps")
@click.option("--batch-size", type=int, default=None)
@click.option("--resume", "resume_from", type=click.Path(exists=True), default=None)
@click.option("--no-interaction", is_flag=True, help="identity pose correction")
@click.option("--no-residual", is_flag=True, help="corrections replace raw poses")
@click.option("--no-posreg", is_flag=True, help="disable the position loss")
def train(manifest_path: str, preset: str, out_dir: str, seed: int,
          epochs: int | None, max_steps: int | None, batch_size: int | None,
          resume_from: str | None, no_interaction: bool, no_residual: bool,
          no_posreg: bool) -> None:
    """Train a model on a dataset manifest."""
    from .training import train as run_train

    mcfg, tcfg = PRESETS[preset](image_side=64)
    manifest = DatasetManifest.load(manifest_path)
    mcfg = mcfg.replace(image_side=manifest.image_side)
    kw: dict = {"seed": seed}
    if epochs is not None:
        kw["epochs"] = epochs
    if batch_size is not None:
        kw["batch_size"] = batch_size
    if no_interaction:
        kw["use_interaction"] = False
        kw["use_position_reg"] = False
    if no_residual:
        kw["use_residual"] = False
    if no_posreg:
        kw["use_position_reg"] = False
    tcfg = tcfg.replace(**kw)
    final = run_train(manifest, mcfg, tcfg, out_dir,
                      resume_from=resume_from, max_steps=max_steps)
    click.echo(f"final checkpoint: {final}")


@main.command()
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--n", type=int, default=8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--k", "K", type=int, default=None, help="object count override")
def sample(checkpoint: str, out_dir: str, n: int, seed: int, K: int | None) -> None:
    """Render n sampled scenes to PNG files."""
    ckpt = _load_ckpt(checkpoint)
    model = ckpt.build_model()
    out = Path(out_dir)
    for i in range(n):
        with torch.no_grad():
            state = new_edit_state(model, seed + i, K)
            from .studio import render_edit_state
            img = render_edit_state(model, state)
        _save_image(img, out / f"sample_{i:03d}.png")
    click.echo(f"wrote {n} images to {out}")


@main.command()
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--k", "K", type=int, default=None)
def components(checkpoint: str, out_dir: str, seed: int, K: int | None) -> None:
    """Render one scene's background, per-object renders and composite."""
    ckpt = _load_ckpt(checkpoint)
    model = ckpt.build_model()
    out = Path(out_dir)
    with torch.no_grad():
        state = new_edit_state(model, seed, K)
        parts = render_components(model, state)
    _save_image(parts["background"], out / "background.png")
    _save_image(parts["composite"], out / "composite.png")
    for i, comp in enumerate(parts["components"]):
        _save_image(comp, out / f"object_{i:02d}.png")
    click.echo(f"wrote background, composite and {len(parts['components'])} "
               f"object renders to {out}")


@main.command()
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--frames", type=int, default=8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--k", "K", type=int, default=None)
def rollout(checkpoint: str, out_dir: str, frames: int, seed: int,
            K: int | None) -> None:
    """Roll a dynamic model forward and write the frames plus a pose track."""
    ckpt = _load_ckpt(checkpoint)
    model = ckpt.build_model()
    if model.dynamics is None:
        raise click.ClickException("checkpoint has no dynamics module")
    out = Path(out_dir)
    with torch.no_grad():
        state = new_edit_state(model, seed, K)
        imgs, poses = model.rollout_scene(state.scene, frames)
    for t in range(frames):
        _save_image(imgs[t], out / f"frame_{t:03d}.png")
    (out / "poses.json").write_text(json.dumps(poses.tolist(), indent=1))
    click.echo(f"wrote {frames} frames and poses.json to {out}")


@main.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True),
              required=False, default=None)
@click.option("--metric", type=click.Choice(["fid", "fvd", "disentangle"]),
              required=True)
@click.option("--n", type=int, default=256, show_default=True)
@click.option("--clip-len", type=int, default=8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def eval_cmd(checkpoint: str, manifest_path: str | None, metric: str, n: int,
             clip_len: int, seed: int) -> None:
    """Evaluate a checkpoint: distribution proxies or disentanglement."""
    ckpt = _load_ckpt(checkpoint)
    model = ckpt.build_model()
    if metric == "disentangle":
        K = model.cfg.K_max
        score = disentanglement_score(model, n, K, seed)
        null = disentanglement_null_baseline(n * K, model.cfg.image_side,
                                             model.cfg, seed)
        click.echo(json.dumps({"metric": metric, **score, "null": null}, indent=1))
        return
    if manifest_path is None:
        raise click.ClickException(f"--manifest is required for {metric}")
    manifest = DatasetManifest.load(manifest_path)
    embedder = RandomConvEmbedder(EmbedderSpec())
    if metric == "fid":
        out = fid_proxy(model, manifest, n, embedder, seed)
    else:
        out = fvd_proxy(model, manifest, n, clip_len, embedder, seed)
    out = {k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
           for k, v in out.items()}
    click.echo(json.dumps({"metric": metric, **out}, indent=1))


@main.command()
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(checkpoint: str, host: str, port: int) -> None:
    """Run the HTTP editing service for a checkpoint."""
    import uvicorn

    from .service import app_from_checkpoint

    uvicorn.run(app_from_checkpoint(checkpoint), host=host, port=port)


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default="balls",
              show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--mode", type=click.Choice(["no-gamma", "no-residual", "no-posreg"]),
              required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--steps", "max_steps", type=int, default=None)
def ablate(manifest_path: str, preset: str, out_dir: str, mode: str, seed: int,
           max_steps: int | None) -> None:
    """Train an ablated variant for comparison runs.

    no-gamma turns the pose correction into the identity and drops the
    position loss; no-residual makes corrections absolute; no-posreg keeps
    the correction but removes the position loss.
    """
    from .training import train as run_train

    mcfg, tcfg = PRESETS[preset](image_side=64)
    manifest = DatasetManifest.load(manifest_path)
    mcfg = mcfg.replace(image_side=manifest.image_side)
    kw: dict = {"seed": seed}
    if mode == "no-gamma":
        kw.update(use_interaction=False, use_position_reg=False)
    elif mode == "no-residual":
        kw.update(use_residual=False)
    else:
        kw.update(use_position_reg=False)
    tcfg = tcfg.replace(**kw)
    final = run_train(manifest, mcfg, tcfg, out_dir, max_steps=max_steps)
    click.echo(f"final checkpoint: {final}")


if __name__ == "__main__":
    main()
