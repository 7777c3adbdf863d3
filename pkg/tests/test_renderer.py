import numpy as np
import pytest
import torch

from scenegan.latents import sample_scene, seeded_rng
from scenegan.renderer import (adain, compose, pixel_to_pose, pose_to_pixel,
                               resize_into_canvas, translate_canvas, window_pad)

from conftest import make_model, small_config


def shift_oracle(psi: np.ndarray, nx: int, ny: int) -> np.ndarray:
    """Zero-padded gather shift, written as explicit loops."""
    C, H, W = psi.shape
    out = np.zeros_like(psi)
    for r in range(H):
        for c in range(W):
            rr, cc = r + ny, c + nx
            if 0 <= rr < H and 0 <= cc < W:
                out[:, r, c] = psi[:, rr, cc]
    return out


def test_integer_shift_is_exact():
    g = seeded_rng(0)
    psi = torch.rand(1, 3, 8, 8, generator=g)
    for nx, ny in [(0, 0), (1, 0), (0, -2), (3, 3), (-4, 2), (8, 0), (-9, -9)]:
        theta = torch.tensor([[nx / 4.0, ny / 4.0]])  # cells = theta * H/2
        out = translate_canvas(psi, theta)
        expected = torch.from_numpy(shift_oracle(psi[0].numpy(), nx, ny)).unsqueeze(0)
        assert torch.equal(out, expected), (nx, ny)


def test_zero_shift_is_identity_bitwise():
    psi = torch.rand(2, 4, 8, 8, generator=seeded_rng(1))
    assert torch.equal(translate_canvas(psi, torch.zeros(2, 2)), psi)


def test_fractional_shift_bilinear_oracle():
    g = seeded_rng(2)
    psi = torch.rand(1, 2, 8, 8, generator=g).double()
    theta = torch.tensor([[0.3, -0.45]]).double()
    cells = theta[0] * 4.0  # (x, y) in grid cells
    nx, ny = np.floor(cells.numpy())
    fx, fy = cells.numpy() - np.array([nx, ny])
    p = psi[0].numpy()
    expected = ((1 - fx) * (1 - fy) * shift_oracle(p, int(nx), int(ny))
                + fx * (1 - fy) * shift_oracle(p, int(nx) + 1, int(ny))
                + (1 - fx) * fy * shift_oracle(p, int(nx), int(ny) + 1)
                + fx * fy * shift_oracle(p, int(nx) + 1, int(ny) + 1))
    out = translate_canvas(psi, theta)[0].numpy()
    assert np.abs(out - expected).max() < 1e-6


def test_translate_rejects_non_finite():
    psi = torch.rand(1, 1, 8, 8)
    with pytest.raises(ValueError):
        translate_canvas(psi, torch.tensor([[float("nan"), 0.0]]))


def test_translate_mass_conserved_interior():
    """A fractional shift of an interior bump conserves total mass."""
    psi = torch.zeros(1, 1, 16, 16)
    psi[0, 0, 7, 7] = 1.0
    out = translate_canvas(psi, torch.tensor([[0.21, -0.17]]))
    assert abs(out.sum().item() - 1.0) < 1e-6


def test_translate_gradcheck_theta():
    psi = torch.rand(1, 2, 6, 6, generator=seeded_rng(3)).double()
    theta = torch.tensor([[0.23, -0.31]], dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda t: translate_canvas(psi, t), (theta,),
                                    eps=1e-6, atol=1e-5)


def test_compose_max_and_sum():
    g = seeded_rng(4)
    a, b, c = (torch.rand(2, 3, 4, 4, generator=g) for _ in range(3))
    m = compose([a, b, c], "max")
    assert torch.equal(m, torch.stack([a, b, c]).max(dim=0).values)
    s = compose([a, b, c], "sum")
    assert torch.allclose(s, a + b + c)


def test_compose_permutation_invariant():
    g = seeded_rng(5)
    canv = [torch.rand(1, 2, 4, 4, generator=g) for _ in range(4)]
    for pooling in ("max", "sum"):
        base = compose(canv, pooling)
        assert torch.equal(base, compose(canv[::-1], pooling)) or pooling == "sum"
        if pooling == "sum":
            assert torch.allclose(base, compose(canv[::-1], pooling), atol=1e-6)


def test_compose_validation():
    with pytest.raises(ValueError):
        compose([], "max")
    with pytest.raises(ValueError):
        compose([torch.zeros(1, 2, 4, 4), torch.zeros(1, 2, 5, 5)], "max")
    with pytest.raises(ValueError):
        compose([torch.zeros(1, 2, 4, 4)], "median")


def test_compose_max_gradient_to_first_maximizer():
    a = torch.full((1, 1, 2, 2), 0.5, requires_grad=True)
    b = torch.full((1, 1, 2, 2), 0.5, requires_grad=True)
    compose([a, b], "max").sum().backward()
    assert torch.equal(a.grad, torch.ones_like(a))
    assert torch.equal(b.grad, torch.zeros_like(b))


def test_window_pad_sparsity_exact():
    patch = torch.rand(1, 3, 4, 4, generator=seeded_rng(6)) + 1.0
    canvas = window_pad(patch, 8)
    assert canvas.shape[-2:] == (8, 8)
    assert torch.equal(canvas[:, :, 2:6, 2:6], patch)
    mask = torch.ones(8, 8, dtype=torch.bool)
    mask[2:6, 2:6] = False
    assert canvas[:, :, mask].abs().sum() == 0
    with pytest.raises(ValueError):
        window_pad(patch, 3)


def test_resize_identity_matches_pad():
    patch = torch.rand(2, 3, 4, 4, generator=seeded_rng(7))
    out = resize_into_canvas(patch, 8, torch.full((2,), 4.0))
    assert torch.allclose(out, window_pad(patch, 8), atol=1e-6)


def test_resize_grows_window():
    patch = torch.ones(1, 1, 4, 4)
    big = resize_into_canvas(patch, 8, torch.full((1,), 6.0))
    small = resize_into_canvas(patch, 8, torch.full((1,), 2.0))
    assert big.sum() > small.sum()
    assert (big > 0).float().sum() > (small > 0).float().sum()


def test_resize_differentiable_in_side():
    patch = torch.rand(1, 2, 4, 4, generator=seeded_rng(8)).double()
    side = torch.tensor([5.3], dtype=torch.float64, requires_grad=True)
    resize_into_canvas(patch, 8, side).sum().backward()
    assert side.grad is not None and torch.isfinite(side.grad).all()


def test_adain_statistics():
    x = torch.rand(2, 3, 8, 8, generator=seeded_rng(9)) * 4 - 1
    scale = torch.tensor([[1.0, 2.0, 0.5], [1.5, 1.0, 3.0]])
    shift = torch.tensor([[0.0, -1.0, 2.0], [1.0, 0.5, 0.0]])
    y = adain(x, scale, shift)
    mu = y.mean(dim=(2, 3))
    sd = y.std(dim=(2, 3), unbiased=False)
    assert torch.allclose(mu, shift, atol=1e-4)
    assert torch.allclose(sd, scale, atol=1e-3)


def test_scale_factor_one_bit_identical(cfg):
    """Predicted window side equal to H' must take the exact padding path."""
    model = make_model(small_config())
    z = torch.rand(3, model.cfg.N_f, generator=seeded_rng(10)) * 2 - 1
    plain = model.renderer.decode_foreground(z, None)
    scaled = model.renderer.decode_foreground(
        z, torch.full((3,), float(model.cfg.H_prime)))
    assert torch.equal(plain, scaled)


def test_decode_foreground_window_sparsity(cfg, model):
    z = torch.rand(2, cfg.N_f, generator=seeded_rng(11)) * 2 - 1
    psi = model.renderer.decode_foreground(z)
    lo = (cfg.H - cfg.H_prime) // 2
    mask = torch.ones(cfg.H, cfg.H, dtype=torch.bool)
    mask[lo: lo + cfg.H_prime, lo: lo + cfg.H_prime] = False
    assert psi[:, :, mask].abs().sum() == 0


def test_render_shapes_and_range(cfg, model):
    scene = sample_scene(seeded_rng(12), cfg, K=2)
    model.prepare_scene(scene)
    img = model.render_scene(scene)
    assert img.shape == (1, 3, cfg.image_side, cfg.image_side)
    assert img.min() >= -1.0 and img.max() <= 1.0


def test_per_object_templates_ignore_z():
    cfg = small_config(per_object_templates=True, N_f=1, K_max=2)
    model = make_model(cfg)
    za = torch.full((1, 1), 0.7)
    zb = torch.full((1, 1), -0.4)
    assert torch.equal(model.renderer.decode_foreground(za, object_index=0),
                       model.renderer.decode_foreground(zb, object_index=0))
    a0 = model.renderer.decode_foreground(za, object_index=0)
    a1 = model.renderer.decode_foreground(za, object_index=1)
    assert not torch.equal(a0, a1)


def test_pose_pixel_roundtrip():
    side = 64
    for theta in [(0.0, 0.0), (0.5, -0.25), (-0.8, 0.8)]:
        px, py = pose_to_pixel(theta, side)
        back = pixel_to_pose(px, py, side)
        assert abs(back[0] - theta[0]) < 1e-9 and abs(back[1] - theta[1]) < 1e-9
    assert pose_to_pixel((0.0, 0.0), side) == ((side - 1) / 2, (side - 1) / 2)


def test_pose_pixel_matches_rendered_shift():
    """A positive pose moves content toward lower pixel coordinates."""
    psi = torch.zeros(1, 1, 8, 8)
    psi[0, 0, 4, 4] = 1.0
    out = translate_canvas(psi, torch.tensor([[0.5, 0.0]]))  # 2 cells in x
    r, c = divmod(int(out.flatten().argmax()), 8)
    assert (r, c) == (4, 2)
