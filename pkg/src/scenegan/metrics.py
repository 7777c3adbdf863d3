"""Desk-scale fidelity and disentanglement measurement.

The Frechet image/video proxies use a fixed-seed random convolutional
embedder instead of pretrained classification networks, so absolute values
are NOT comparable to published Inception/I3D-based scores; only orderings
between models evaluated with the same embedder are meaningful.

Clip embeddings concatenate the temporal mean of per-frame features with the
mean absolute first difference between consecutive frame features; a purely
permutation-invariant pooling would be blind to shuffled time, so the
difference term carries the dynamics signal.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn

from .config import ModelConfig
from .datasets import DatasetManifest, load_frame
from .latents import sample_scene, seeded_rng
from .renderer import pose_to_pixel


@dataclass
class EmbedderSpec:
    kind: str = "fixed-random-conv"
    seed: int = 0
    dim: int = 256
    # Gain applied to |frame delta| images before embedding. Smooth motion
    # changes only a small fraction of pixels by a small amount, so raw
    # deltas sit far below the embedder's sensitive range and the clip
    # metric would be nearly blind to temporal structure.
    delta_gain: float = 8.0


class RandomConvEmbedder(nn.Module):
    """Four strided conv layers with frozen seeded random weights."""

    def __init__(self, spec: EmbedderSpec):
        super().__init__()
        if spec.kind != "fixed-random-conv":
            raise ValueError(f"unsupported embedder kind {spec.kind!r}")
        self.spec = spec
        widths = [3, 32, 64, 128, spec.dim]
        g = torch.Generator()
        g.manual_seed(spec.seed)
        layers = []
        for a, b in zip(widths[:-1], widths[1:]):
            conv = nn.Conv2d(a, b, 3, stride=2, padding=1)
            with torch.no_grad():
                fan_in = a * 9
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=g)
                                  * (2.0 / fan_in) ** 0.5)
                conv.bias.zero_()
            layers += [conv, nn.LeakyReLU(0.2)]
        self.net = nn.Sequential(*layers)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    @torch.no_grad()
    def embed_images(self, images: torch.Tensor, batch: int = 128) -> np.ndarray:
        """(N, 3, s, s) images in [-1, 1] -> (N, dim) features."""
        feats = []
        for i in range(0, images.shape[0], batch):
            x = self.net(images[i: i + batch])
            feats.append(x.mean(dim=(2, 3)).cpu().numpy())
        return np.concatenate(feats, axis=0)

    @torch.no_grad()
    def embed_clips(self, clips: torch.Tensor, batch: int = 16) -> np.ndarray:
        """(N, T, 3, s, s) clips -> (N, 2*dim) clip features.

        First half: temporal mean of per-frame features (appearance). Second
        half: mean feature of pixel-level |frame delta| images (motion
        energy). Differencing in pixel space matters: spatially pooled
        features are nearly invariant to object motion, so differencing them
        would leave the embedding blind to temporal order.
        """
        N, T = clips.shape[:2]
        per_frame = self.embed_images(clips.flatten(0, 1), batch=batch * T)
        per_frame = per_frame.reshape(N, T, -1)
        mean = per_frame.mean(axis=1)
        if T > 1:
            deltas = ((clips[:, 1:] - clips[:, :-1]).abs()
                      * self.spec.delta_gain).clamp(max=2.0)
            diff = self.embed_images(deltas.flatten(0, 1), batch=batch * T)
            diff = diff.reshape(N, T - 1, -1).mean(axis=1)
        else:
            diff = np.zeros_like(mean)
        return np.concatenate([mean, diff], axis=1)


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.T) / 2.0)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def frechet_distance_full(feats_a: np.ndarray, feats_b: np.ndarray,
                          eps: float = 1e-6) -> tuple[float, dict]:
    """Frechet distance between Gaussian fits, with metadata.

    ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^{1/2}), using a symmetric
    square root; negative eigenvalues from numerical jitter are clamped at
    zero. Singular covariances get eps*I regularization, flagged in the
    returned metadata.
    """
    feats_a, feats_b = np.asarray(feats_a, float), np.asarray(feats_b, float)
    if feats_a.ndim != 2 or feats_b.ndim != 2 or feats_a.shape[1] != feats_b.shape[1]:
        raise ValueError("need 2-D feature arrays with matching dimension")
    if feats_a.shape[0] < 2 or feats_b.shape[0] < 2:
        raise ValueError("need at least 2 feature vectors per side")
    mu_a, mu_b = feats_a.mean(0), feats_b.mean(0)
    cov_a = np.cov(feats_a, rowvar=False)
    cov_b = np.cov(feats_b, rowvar=False)
    cov_a, cov_b = np.atleast_2d(cov_a), np.atleast_2d(cov_b)
    regularized = False
    for cov in (cov_a, cov_b):
        if np.linalg.eigvalsh((cov + cov.T) / 2.0).min() < eps * 1e-3:
            regularized = True
    if regularized:
        eye = np.eye(cov_a.shape[0])
        cov_a = cov_a + eps * eye
        cov_b = cov_b + eps * eye
    s = _sqrtm_psd(cov_a)
    inner = s @ cov_b @ s
    w = np.clip(np.linalg.eigvalsh((inner + inner.T) / 2.0), 0.0, None)
    value = float(((mu_a - mu_b) ** 2).sum() + np.trace(cov_a) + np.trace(cov_b)
                  - 2.0 * np.sqrt(w).sum())
    return value, {"regularized": regularized}


def frechet_distance(feats_a: np.ndarray, feats_b: np.ndarray) -> float:
    return frechet_distance_full(feats_a, feats_b)[0]


@torch.no_grad()
def sample_model_images(model, n: int, seed: int, z0_half: float = 0.5,
                        batch: int = 64) -> torch.Tensor:
    """n generated images in [-1, 1]; z0 drawn from the narrowed eval range."""
    rng = seeded_rng(seed)
    cfg: ModelConfig = model.cfg
    out = []
    remaining = n
    while remaining > 0:
        b = min(batch, remaining)
        z0, z, theta_hat = model.sample_latents(rng, b)
        z0 = torch.rand(b, cfg.N_b, generator=rng) * 2 * z0_half - z0_half
        theta = model.correct(theta_hat, z, z0)
        out.append(model.generate(z0, z, theta, model.object_scales(theta, z, z0)))
        remaining -= b
    return torch.cat(out)[:n]


@torch.no_grad()
def sample_model_clips(model, n: int, clip_len: int, seed: int,
                       z0_half: float = 0.5, batch: int = 8) -> torch.Tensor:
    rng = seeded_rng(seed)
    cfg: ModelConfig = model.cfg
    out = []
    remaining = n
    while remaining > 0:
        b = min(batch, remaining)
        z0, z, theta_hat = model.sample_latents(rng, b)
        z0 = torch.rand(b, cfg.N_b, generator=rng) * 2 * z0_half - z0_half
        theta = model.correct(theta_hat, z, z0)
        frames, _ = model.generate_clip(z0, z, theta, clip_len)
        out.append(frames)
        remaining -= b
    return torch.cat(out)[:n]


def manifest_images(manifest: DatasetManifest, n: int, seed: int) -> torch.Tensor:
    rng = np.random.default_rng(seed)
    idxs = rng.integers(0, len(manifest.items), size=n)
    frames = []
    for i in idxs:
        item = manifest.items[int(i)]
        t = int(rng.integers(0, len(item.frames)))
        frames.append(load_frame(manifest, item, t))
    return torch.stack(frames)


def manifest_clips(manifest: DatasetManifest, n: int, clip_len: int,
                   seed: int) -> torch.Tensor:
    rng = np.random.default_rng(seed)
    usable = [it for it in manifest.items if len(it.frames) >= clip_len]
    if not usable:
        raise ValueError(f"no items with at least {clip_len} frames")
    clips = []
    for i in rng.integers(0, len(usable), size=n):
        item = usable[int(i)]
        start = int(rng.integers(0, len(item.frames) - clip_len + 1))
        clips.append(torch.stack([load_frame(manifest, item, start + t)
                                  for t in range(clip_len)]))
    return torch.stack(clips)


def time_shuffle_baseline(manifest: DatasetManifest, n_videos: int,
                          clip_len: int, seed: int) -> torch.Tensor:
    """Real clips with frames permuted in time: perfect appearance, broken
    dynamics. Each clip gets its own sub-seeded permutation."""
    clips = manifest_clips(manifest, n_videos, clip_len, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    shuffled = []
    for i in range(clips.shape[0]):
        perm = torch.from_numpy(rng.permutation(clip_len))
        shuffled.append(clips[i, perm])
    return torch.stack(shuffled)


def fid_proxy(model, test_manifest: DatasetManifest, n_samples: int,
              embedder: RandomConvEmbedder, seed: int = 0) -> dict:
    """Frechet distance between embedded model samples and test images."""
    if model.cfg.image_side != test_manifest.image_side:
        raise ValueError("image sides differ between model and dataset")
    fake = sample_model_images(model, n_samples, seed)
    real = manifest_images(test_manifest, n_samples, seed + 1)
    value, meta = frechet_distance_full(embedder.embed_images(fake),
                                        embedder.embed_images(real))
    return {"metric": "fid_proxy", "value": value, "n": n_samples, "seed": seed,
            "embedder": asdict(embedder.spec),
            "warning": "unstable covariance (n < 100)" if n_samples < 100 else None,
            **meta}


def fvd_proxy(model, test_manifest: DatasetManifest, n_videos: int,
              clip_len: int, embedder: RandomConvEmbedder, seed: int = 0) -> dict:
    if model.dynamics is None:
        raise ValueError("fvd_proxy needs a dynamic checkpoint")
    fake = sample_model_clips(model, n_videos, clip_len, seed)
    real = manifest_clips(test_manifest, n_videos, clip_len, seed + 1)
    value, meta = frechet_distance_full(embedder.embed_clips(fake),
                                        embedder.embed_clips(real))
    return {"metric": "fvd_proxy", "value": value, "n": n_videos,
            "clip_len": clip_len, "seed": seed, "embedder": asdict(embedder.spec),
            "warning": "unstable covariance (n < 100)" if n_videos < 100 else None,
            **meta}


def clipset_distance(clips: torch.Tensor, test_manifest: DatasetManifest,
                     embedder: RandomConvEmbedder, seed: int = 0) -> float:
    """Frechet distance of an arbitrary clip set against test clips."""
    real = manifest_clips(test_manifest, clips.shape[0], clips.shape[1], seed)
    return frechet_distance(embedder.embed_clips(clips), embedder.embed_clips(real))


@torch.no_grad()
def disentanglement_score(model, n_scenes: int, K: int, seed: int = 0) -> dict:
    """Median pixel distance between each object's pose location and the
    argmax of the image change when that object is toggled off.

    The base render composes all K objects with the background; the toggled
    render drops one object. Argmax ties break at the lowest row-major index.
    """
    cfg: ModelConfig = model.cfg
    side = cfg.image_side
    rng = seeded_rng(seed)
    distances = []
    for _ in range(n_scenes):
        scene = sample_scene(rng, cfg, K)
        model.prepare_scene(scene)
        base = model.render_scene(scene)[0]
        for i in range(scene.K):
            scene.objects[i].visible = False
            toggled = model.render_scene(scene)[0]
            scene.objects[i].visible = True
            change = (base - toggled).abs().sum(dim=0).cpu().numpy()
            flat = int(np.argmax(change))  # first max in row-major order
            py, px = divmod(flat, side)
            tx, ty = pose_to_pixel(scene.objects[i].theta.tolist(), side)
            distances.append(float(np.hypot(px - tx, py - ty)))
    return {"metric": "disentanglement_score", "median": float(np.median(distances)),
            "n_pairs": len(distances), "K": K, "seed": seed}


def disentanglement_null_baseline(n_pairs: int, image_side: int,
                                  cfg: ModelConfig, seed: int = 0,
                                  n_boot: int = 1000) -> dict:
    """Monte-Carlo distribution of the median score for a model that ignores
    poses entirely (argmax pixel uniform over the image)."""
    rng = np.random.default_rng(seed)
    (lx, hx), (ly, hy) = cfg.pose_range
    medians = np.empty(n_boot)
    for b in range(n_boot):
        theta = np.stack([rng.uniform(lx, hx, n_pairs), rng.uniform(ly, hy, n_pairs)],
                         axis=1)
        tpix = (image_side - 1) / 2.0 - theta * image_side / 2.0
        apix = rng.uniform(0, image_side - 1, size=(n_pairs, 2))
        medians[b] = np.median(np.hypot(*(tpix - apix).T))
    return {"metric": "disentanglement_null", "mean_median": float(medians.mean()),
            "p05": float(np.quantile(medians, 0.05)),
            "p95": float(np.quantile(medians, 0.95)),
            "n_pairs": n_pairs, "n_boot": n_boot, "seed": seed}
