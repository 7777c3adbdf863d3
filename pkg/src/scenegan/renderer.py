"""Latents to pixels: style-modulated background/foreground decoders, pose
placement by bilinear resampling, pooled scene composition, and the
upsampling generator.

Conventions (part of the checkpoint contract):
- Canvases are (B, C, H, H) tensors, channels first.
- Poses are normalized: +-1 corresponds to +-H/2 grid cells. Translation uses
  gather semantics -- the output at site u reads the input at u + theta -- with
  zero padding and bilinear interpolation; cell centers of the corner cells
  map to +-1 (align-corners).
- Rendered images are (B, 3, side, side) in [-1, 1].
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelConfig
from .latents import LatentScene

LEAKY_SLOPE = 0.2
ADAIN_EPS = 1e-5


def adain(x: torch.Tensor, scale: torch.Tensor, shift: torch.Tensor) -> torch.Tensor:
    """Per-channel spatial whitening followed by a style-driven affine map."""
    mu = x.mean(dim=(2, 3), keepdim=True)
    var = x.var(dim=(2, 3), unbiased=False, keepdim=True)
    xn = (x - mu) / torch.sqrt(var + ADAIN_EPS)
    return xn * scale.unsqueeze(-1).unsqueeze(-1) + shift.unsqueeze(-1).unsqueeze(-1)


class StyleMap(nn.Module):
    """Maps an appearance code to per-channel (scale, shift): relu(W z + b)."""

    def __init__(self, z_dim: int, channels: int):
        super().__init__()
        self.proj = nn.Linear(z_dim, 2 * channels)
        self.channels = channels

    def forward(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        zh = F.relu(self.proj(z))
        return zh[:, : self.channels], zh[:, self.channels:]


class CanvasDecoder(nn.Module):
    """Shared decoder body: a learned constant grid refined by two 3x3
    transposed convolutions, with style modulation after every stage."""

    def __init__(self, z_dim: int, side: int, out_channels: int, n_templates: int = 1):
        super().__init__()
        wide = 2 * out_channels
        self.templates = nn.Parameter(torch.randn(n_templates, wide, side, side) * 0.02)
        self.conv1 = nn.ConvTranspose2d(wide, wide, 3, stride=1, padding=1)
        self.conv2 = nn.ConvTranspose2d(wide, out_channels, 3, stride=1, padding=1)
        self.style0 = StyleMap(z_dim, wide)
        self.style1 = StyleMap(z_dim, wide)
        self.style2 = StyleMap(z_dim, out_channels)

    def forward(self, z: torch.Tensor, template_idx: int = 0) -> torch.Tensor:
        B = z.shape[0]
        x = self.templates[template_idx].unsqueeze(0).expand(B, -1, -1, -1)
        x = adain(x, *self.style0(z))
        x = adain(F.leaky_relu(self.conv1(x), LEAKY_SLOPE), *self.style1(z))
        x = adain(F.leaky_relu(self.conv2(x), LEAKY_SLOPE), *self.style2(z))
        return x


class Generator(nn.Module):
    """Transposed-convolution stack mapping the scene tensor to an image.

    The number of stride-2 stages follows from image_side / H; a single
    stride-1 refinement stage sits after the second upsampling (or after the
    last one when there are fewer than two), ending in a tanh RGB layer.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        n_up = (cfg.image_side // cfg.H).bit_length() - 1
        layers: list[nn.Module] = []
        ch = cfg.C
        for i in range(n_up):
            out = max(cfg.C // 2 if i == 0 else cfg.C // 4, 4)
            layers += [nn.ConvTranspose2d(ch, out, 4, stride=2, padding=1),
                       nn.LeakyReLU(LEAKY_SLOPE)]
            ch = out
            if i == min(1, n_up - 1):
                layers += [nn.ConvTranspose2d(ch, ch, 3, stride=1, padding=1),
                           nn.LeakyReLU(LEAKY_SLOPE)]
        layers += [nn.ConvTranspose2d(ch, 3, 3, stride=1, padding=1), nn.Tanh()]
        self.net = nn.Sequential(*layers)

    def forward(self, w: torch.Tensor) -> torch.Tensor:
        return self.net(w)


def _integer_shift(psi: torch.Tensor, nx: torch.Tensor, ny: torch.Tensor) -> torch.Tensor:
    """Gather-shift by per-batch integer cell offsets with zero padding:
    output[r, c] = input[r + ny, c + nx]."""
    B, C, H, W = psi.shape
    device = psi.device
    rows = torch.arange(H, device=device).unsqueeze(0) + ny.unsqueeze(1)  # (B, H)
    cols = torch.arange(W, device=device).unsqueeze(0) + nx.unsqueeze(1)  # (B, W)
    rmask = (rows >= 0) & (rows < H)
    cmask = (cols >= 0) & (cols < W)
    idx = rows.clamp(0, H - 1).unsqueeze(2) * W + cols.clamp(0, W - 1).unsqueeze(1)
    gathered = psi.reshape(B, C, H * W).gather(2, idx.reshape(B, 1, H * W).expand(B, C, H * W))
    mask = (rmask.unsqueeze(2) & cmask.unsqueeze(1)).to(psi.dtype)
    return gathered.reshape(B, C, H, W) * mask.unsqueeze(1)


def translate_canvas(psi: torch.Tensor, theta: torch.Tensor) -> torch.Tensor:
    """Shift a canvas by a normalized pose under gather semantics.

    psi: (B, C, H, H); theta: (B, 2) as (x, y). Output at u reads input at
    u + theta * H/2 cells; out-of-range reads are zero. Differentiable in
    theta. The shift decomposes into an integer part and a fractional part
    entering the four bilinear corner weights, so whole-cell shifts (and
    theta = 0 in particular) are bit-exact with no interpolation blur.
    """
    if not torch.isfinite(theta).all():
        raise ValueError("pose must be finite")
    B, _, H, W = psi.shape
    cells = theta * theta.new_tensor([W / 2.0, H / 2.0])
    nx, ny = cells[:, 0].floor(), cells[:, 1].floor()
    fx = (cells[:, 0] - nx).view(B, 1, 1, 1)
    fy = (cells[:, 1] - ny).view(B, 1, 1, 1)
    nxi, nyi = nx.long(), ny.long()
    one = torch.ones((), dtype=psi.dtype, device=psi.device)
    out = (one - fx) * (one - fy) * _integer_shift(psi, nxi, nyi)
    out = out + fx * (one - fy) * _integer_shift(psi, nxi + 1, nyi)
    out = out + (one - fx) * fy * _integer_shift(psi, nxi, nyi + 1)
    out = out + fx * fy * _integer_shift(psi, nxi + 1, nyi + 1)
    return out


def compose(canvases: list[torch.Tensor] | torch.Tensor, pooling: str) -> torch.Tensor:
    """Elementwise max- or sum-pool a set of canvases into the scene tensor.

    Accepts a list of (B, C, H, H) canvases or a stacked (B, N, C, H, H)
    tensor. Max pooling routes the gradient to the lowest index among
    maximizers, which keeps training deterministic.
    """
    if isinstance(canvases, (list, tuple)):
        if not canvases:
            raise ValueError("need at least one canvas")
        shapes = {tuple(c.shape) for c in canvases}
        if len(shapes) != 1:
            raise ValueError(f"mixed canvas shapes: {sorted(shapes)}")
        stacked = torch.stack(list(canvases), dim=1)
    else:
        stacked = canvases
    if pooling == "max":
        return stacked.max(dim=1).values
    if pooling == "sum":
        return stacked.sum(dim=1)
    raise ValueError(f"unknown pooling {pooling!r}")


def window_pad(patch: torch.Tensor, H: int) -> torch.Tensor:
    """Zero-pad an H'xH' patch into the centre of an HxH canvas."""
    hp = patch.shape[-1]
    if hp > H:
        raise ValueError("window larger than canvas")
    lo = (H - hp) // 2
    return F.pad(patch, (lo, H - hp - lo, lo, H - hp - lo))


def resize_into_canvas(patch: torch.Tensor, H: int, target_side: torch.Tensor) -> torch.Tensor:
    """Bilinearly rescale a centred patch to a (possibly fractional) window
    side and embed it in an HxH canvas; differentiable in target_side."""
    B, _, hp, _ = patch.shape
    dtype, device = patch.dtype, patch.device
    ys, xs = torch.meshgrid(
        torch.arange(H, dtype=dtype, device=device) - (H - 1) / 2.0,
        torch.arange(H, dtype=dtype, device=device) - (H - 1) / 2.0,
        indexing="ij",
    )
    # Cells at offset d from canvas centre sample the patch at d / scale,
    # expressed in the patch's align-corners units; |d| > side/2 reads zero.
    scale = (target_side.view(B, 1, 1) / hp).clamp(min=1e-6)
    sx = xs.unsqueeze(0) / scale * (2.0 / (hp - 1)) if hp > 1 else xs.unsqueeze(0) * 0
    sy = ys.unsqueeze(0) / scale * (2.0 / (hp - 1)) if hp > 1 else ys.unsqueeze(0) * 0
    grid = torch.stack([sx, sy], dim=-1)
    out = F.grid_sample(patch, grid, mode="bilinear", padding_mode="zeros",
                        align_corners=True)
    half = target_side.view(B, 1, 1) / 2.0
    mask = ((xs.unsqueeze(0).abs() <= half) & (ys.unsqueeze(0).abs() <= half)).to(dtype)
    return out * mask.unsqueeze(1)


class SceneRenderer(nn.Module):
    """Bundles the decoders and the generator into the full rendering path."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.psi_b = CanvasDecoder(cfg.N_b, cfg.H, cfg.C)
        n_templates = cfg.K_max if cfg.per_object_templates else 1
        self.psi_f = CanvasDecoder(cfg.N_f, cfg.H_prime, cfg.C, n_templates)
        self.G = Generator(cfg)

    def decode_background(self, z0: torch.Tensor) -> torch.Tensor:
        if z0.shape[-1] != self.cfg.N_b:
            raise ValueError(f"z0 must have length {self.cfg.N_b}")
        return self.psi_b(z0)

    def foreground_style(self, z: torch.Tensor) -> torch.Tensor:
        if self.cfg.per_object_templates:
            return torch.ones_like(z)
        return z

    def decode_foreground(self, z: torch.Tensor, H_prime_k: torch.Tensor | float | None = None,
                          object_index: int = 0) -> torch.Tensor:
        """Decode one foreground slot for a batch of codes into HxH canvases,
        zero outside the (per-object) centred window."""
        if z.shape[-1] != self.cfg.N_f:
            raise ValueError(f"z must have length {self.cfg.N_f}")
        cfg = self.cfg
        tidx = object_index % self.psi_f.templates.shape[0]
        patch = self.psi_f(self.foreground_style(z), tidx)
        if H_prime_k is None:
            return window_pad(patch, cfg.H)
        if not torch.is_tensor(H_prime_k):
            H_prime_k = patch.new_full((z.shape[0],), float(H_prime_k))
        if bool((H_prime_k > cfg.H).any()):
            raise ValueError("window larger than canvas")
        if bool((H_prime_k == cfg.H_prime).all()):
            return window_pad(patch, cfg.H)
        return resize_into_canvas(patch, cfg.H, H_prime_k)

    def render(self, w: torch.Tensor) -> torch.Tensor:
        return self.G(w)

    def render_scene(self, scene: LatentScene, only_object: int | None = None,
                     with_background: bool = True,
                     scales: torch.Tensor | None = None) -> torch.Tensor:
        """Full decode -> translate -> compose -> render for one scene.

        Poses must be corrected (scene.theta set). only_object restricts the
        composition to a single translated object canvas, optionally composed
        with the background. Returns a (1, 3, side, side) image.
        """
        cfg = self.cfg
        if only_object is not None and not (0 <= only_object < scene.K):
            raise ValueError(f"object index {only_object} out of range")
        canvases: list[torch.Tensor] = []
        if with_background:
            canvases.append(self.decode_background(scene.z0.unsqueeze(0)))
        indices = range(scene.K) if only_object is None else [only_object]
        for k in indices:
            obj = scene.objects[k]
            if only_object is None and not obj.visible:
                continue
            hk = None
            if obj.scale_override is not None:
                hk = float(obj.scale_override)
            elif scales is not None:
                hk = scales[k: k + 1]
            psi = self.decode_foreground(obj.z.unsqueeze(0), hk, object_index=k)
            canvases.append(translate_canvas(psi, obj.theta.unsqueeze(0)))
        if not canvases:
            raise ValueError("nothing to render: no background and no objects")
        return self.render(compose(canvases, cfg.pooling))


def pose_to_pixel(theta, side: int):
    """Image pixel (x, y) where a pose places an object's centre.

    Under gather semantics content moves by -theta, so the centre lands at
    (side-1)/2 - theta * side/2 per axis.
    """
    cx = (side - 1) / 2.0
    if torch.is_tensor(theta):
        return cx - theta * (side / 2.0)
    return (cx - theta[0] * side / 2.0, cx - theta[1] * side / 2.0)


def pixel_to_pose(px: float, py: float, side: int) -> tuple[float, float]:
    """Inverse of pose_to_pixel, used by editing front-ends."""
    cx = (side - 1) / 2.0
    return ((cx - px) / (side / 2.0), (cx - py) / (side / 2.0))
