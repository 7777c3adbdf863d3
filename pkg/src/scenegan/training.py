"""Adversarial training driver: one discriminator update followed by M
generator updates per step, Adam throughout, with deterministic seeded
sampling and exact save/resume."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import torch

from .adversary import Discriminator
from .config import ModelConfig, TrainConfig
from .datasets import BatchLoader, DatasetManifest
from .losses import loss_gan, loss_position, loss_style
from .model import SceneModel

METRIC_COLUMNS = ("step", "d_loss", "g_loss", "style_loss", "pos_loss", "wall_time")


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite; carries the offending metrics."""

    def __init__(self, metrics: dict):
        super().__init__(f"non-finite loss: {metrics}")
        self.metrics = metrics


@dataclass
class TrainState:
    model: SceneModel
    disc: Discriminator
    opt_g: torch.optim.Adam
    opt_d: torch.optim.Adam
    rng: torch.Generator
    step: int = 0
    epoch: int = 0
    batch_index: int = 0
    d_updates: int = 0
    g_updates: int = 0


def init_weights(module: torch.nn.Module, seed: int) -> None:
    """N(0, 0.02) for every weight (normalization affines included), zero for
    every bias. Deterministic given the seed and module layout."""
    g = torch.Generator()
    g.manual_seed(int(seed))
    for name, p in module.named_parameters():
        with torch.no_grad():
            if name.endswith("bias"):
                p.zero_()
            else:
                p.normal_(0.0, 0.02, generator=g)


def init_train_state(mcfg: ModelConfig, tcfg: TrainConfig) -> TrainState:
    # Module construction draws from the global RNG (spectral-norm power
    # iteration vectors in particular); fork and seed it so two states built
    # from the same config are bitwise identical.
    with torch.random.fork_rng():
        torch.manual_seed(tcfg.seed)
        model = SceneModel(mcfg)
        disc = Discriminator(mcfg)
    init_weights(model, tcfg.seed)
    init_weights(disc, tcfg.seed + 1)
    betas = (tcfg.adam_beta1, tcfg.adam_beta2)
    opt_g = torch.optim.Adam(model.parameters(), lr=tcfg.learning_rate, betas=betas)
    opt_d = torch.optim.Adam(disc.parameters(), lr=tcfg.learning_rate, betas=betas)
    rng = torch.Generator()
    rng.manual_seed(tcfg.seed + 2)
    return TrainState(model=model, disc=disc, opt_g=opt_g, opt_d=opt_d, rng=rng)


def _fake_batch(state: TrainState, mcfg: ModelConfig, tcfg: TrainConfig, B: int,
                T: int) -> tuple[torch.Tensor, dict]:
    """Generated images (B, 3*T, s, s) plus the latents used."""
    model = state.model
    z0, z, theta_hat = model.sample_latents(state.rng, B)
    theta = model.correct(theta_hat, z, z0, tcfg.use_interaction, tcfg.use_residual)
    if mcfg.variant == "dynamic":
        frames, _ = model.generate_clip(z0, z, theta, T)
        imgs = frames.flatten(1, 2)
    else:
        imgs = model.generate(z0, z, theta, model.object_scales(theta, z, z0))
    return imgs, {"z0": z0, "z": z, "theta": theta}


def _position_pair(state: TrainState, mcfg: ModelConfig, latents: dict, T: int
                   ) -> tuple[torch.Tensor, torch.Tensor]:
    """Solo-object render (stacked T times for dynamic models) and its pose
    target. The target is detached downstream; only the render carries grads."""
    model = state.model
    z0, z, theta = latents["z0"], latents["z"], latents["theta"]
    K = z.shape[1]
    k = int(torch.randint(0, K, (1,), generator=state.rng).item())
    zk, thk = z[:, k: k + 1], theta[:, k: k + 1]
    img = model.generate(z0, zk, thk, model.object_scales(thk, zk, z0))
    if mcfg.variant == "dynamic":
        img = img.repeat(1, T, 1, 1)  # zero velocity: the frame repeats
    return img, theta[:, k]


def train_step(state: TrainState, real: torch.Tensor, mcfg: ModelConfig,
               tcfg: TrainConfig) -> dict:
    """One discriminator update then M generator updates on a real batch.

    real: (B, T, 3, s, s); T must be 1 for static variants.
    """
    model, disc = state.model, state.disc
    B, T = real.shape[0], real.shape[1]
    if mcfg.variant != "dynamic" and T != 1:
        raise ValueError("static variants train on single frames")
    real_flat = real.flatten(1, 2)
    metrics = {"step": state.step}

    # Discriminator (and style heads, and the position head).
    with torch.no_grad():
        fake, latents = _fake_batch(state, mcfg, tcfg, B, T)
    d_real, phis_real = disc(real_flat)
    d_fake, phis_fake = disc(fake)
    gan_d, _ = loss_gan(d_real, d_fake, tcfg.saturating_g_loss)
    style_d, _ = loss_style(disc.style_probs(phis_real), disc.style_probs(phis_fake),
                            tcfg.saturating_g_loss)
    d_total = gan_d + style_d
    if tcfg.use_position_reg:
        with torch.no_grad():
            solo, target = _position_pair(state, mcfg, latents, T)
        d_total = d_total + loss_position(disc.regress_position(solo), target)
    state.opt_d.zero_grad(set_to_none=True)
    state.opt_g.zero_grad(set_to_none=True)
    d_total.backward()
    state.opt_d.step()
    state.d_updates += 1
    metrics["d_loss"] = float(d_total.detach())

    # M generator updates.
    g_vals, style_vals, pos_vals = [], [], []
    for _ in range(tcfg.M):
        fake, latents = _fake_batch(state, mcfg, tcfg, B, T)
        d_fake, phis_fake = disc(fake)
        _, gan_g = loss_gan(d_real.detach(), d_fake, tcfg.saturating_g_loss)
        _, style_g = loss_style([p.detach() for p in disc.style_probs(phis_real)],
                                disc.style_probs(phis_fake), tcfg.saturating_g_loss)
        g_total = gan_g + style_g
        pos_val = 0.0
        if tcfg.use_position_reg:
            solo, target = _position_pair(state, mcfg, latents, T)
            pos = loss_position(disc.regress_position(solo), target)
            g_total = g_total + pos
            pos_val = float(pos.detach())
        state.opt_d.zero_grad(set_to_none=True)
        state.opt_g.zero_grad(set_to_none=True)
        g_total.backward()
        state.opt_g.step()
        state.g_updates += 1
        g_vals.append(float(gan_g.detach()))
        style_vals.append(float(style_g.detach()))
        pos_vals.append(pos_val)
    state.opt_d.zero_grad(set_to_none=True)
    state.opt_g.zero_grad(set_to_none=True)

    metrics["g_loss"] = sum(g_vals) / len(g_vals)
    metrics["style_loss"] = sum(style_vals) / len(style_vals)
    metrics["pos_loss"] = sum(pos_vals) / len(pos_vals)
    state.step += 1
    if not all(map(_finite, (metrics["d_loss"], metrics["g_loss"],
                             metrics["style_loss"], metrics["pos_loss"]))):
        raise TrainingDiverged(metrics)
    return metrics


def _finite(x: float) -> bool:
    return x == x and abs(x) != float("inf")


def save_train_state(state: TrainState, path: str | Path) -> None:
    torch.save({
        "model": state.model.state_dict(),
        "disc": state.disc.state_dict(),
        "opt_g": state.opt_g.state_dict(),
        "opt_d": state.opt_d.state_dict(),
        "rng": state.rng.get_state(),
        "counters": (state.step, state.epoch, state.batch_index,
                     state.d_updates, state.g_updates),
    }, path)


def load_train_state(path: str | Path, mcfg: ModelConfig, tcfg: TrainConfig) -> TrainState:
    state = init_train_state(mcfg, tcfg)
    blob = torch.load(path, weights_only=False)
    state.model.load_state_dict(blob["model"])
    state.disc.load_state_dict(blob["disc"])
    state.opt_g.load_state_dict(blob["opt_g"])
    state.opt_d.load_state_dict(blob["opt_d"])
    state.rng.set_state(blob["rng"])
    (state.step, state.epoch, state.batch_index,
     state.d_updates, state.g_updates) = blob["counters"]
    return state


def train(manifest: DatasetManifest, mcfg: ModelConfig, tcfg: TrainConfig,
          out_dir: str | Path, resume_from: str | Path | None = None,
          max_steps: int | None = None) -> Path:
    """Run the configured number of epochs and write the final checkpoint.

    Emits metrics.csv (append-only), periodic snapshots when configured, a
    resume file, and checkpoint_final.ckpt. Returns the final checkpoint path.
    """
    from .checkpoint import save_checkpoint  # deferred: avoids an import cycle

    if manifest.image_side != mcfg.image_side:
        raise ValueError(
            f"dataset side {manifest.image_side} != model side {mcfg.image_side}")
    dynamic = mcfg.variant == "dynamic"
    if dynamic and mcfg.clip_len < 2:
        raise ValueError("dynamic training needs clip_len >= 2")
    if dynamic and all(len(it.frames) < mcfg.clip_len for it in manifest.items):
        raise ValueError("dataset clips shorter than configured clip_len")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    clip_len = mcfg.clip_len if dynamic else 1
    loader = BatchLoader(manifest, tcfg.batch_size, clip_len, tcfg.seed)
    if resume_from is not None:
        state = load_train_state(resume_from, mcfg, tcfg)
    else:
        state = init_train_state(mcfg, tcfg)

    metrics_path = out_dir / "metrics.csv"
    write_header = not metrics_path.exists()
    t0 = time.monotonic()
    steps_per_epoch = tcfg.iters_per_epoch or loader.n_batches
    with metrics_path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        if write_header:
            writer.writeheader()
        done = False
        while state.epoch < tcfg.epochs and not done:
            while state.batch_index < steps_per_epoch:
                batch = loader.load_batch(state.epoch, state.batch_index)
                try:
                    m = train_step(state, batch, mcfg, tcfg)
                except TrainingDiverged:
                    save_train_state(state, out_dir / "diverged_snapshot.pt")
                    raise
                state.batch_index += 1
                m["wall_time"] = round(time.monotonic() - t0, 3)
                writer.writerow(m)
                if tcfg.checkpoint_every and state.step % tcfg.checkpoint_every == 0:
                    save_checkpoint(state, mcfg, tcfg,
                                    out_dir / f"checkpoint_{state.step:07d}.ckpt")
                    save_train_state(state, out_dir / "resume.pt")
                if max_steps is not None and state.step >= max_steps:
                    done = True
                    break
            if not done:
                state.epoch += 1
                state.batch_index = 0

    final = out_dir / "checkpoint_final.ckpt"
    save_checkpoint(state, mcfg, tcfg, final)
    save_train_state(state, out_dir / "resume.pt")
    return final
