"""Top-down binary masks of the object and goal, and the 6-D codes built from them.

Two sources of codes exist: a small MLP autoencoder trained on rendered masks,
and ``oracle_descriptor``, a training-free analytic code with the same width.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch.nn import functional as F

from . import checkpoint
from .nets import Adam, Mlp, NonFiniteError, backward, binary_cross_entropy
from .physics2d import ShapeKind, ShapeSpec
from .sampling import PRESETS, ParamRanges, sample_shape

log = logging.getLogger(__name__)

LATENT_DIM = 6
MASK_SIZE = 64
POOLED_SIZE = 32


@dataclass(frozen=True)
class Camera:
    """Orthographic top-down view; pixel (row, col) covers y, x respectively."""

    origin: tuple[float, float]
    meters_per_pixel: float
    size: int = MASK_SIZE

    @classmethod
    def for_table(cls, bounds, size: int = MASK_SIZE) -> Camera:
        x0, y0, x1, y1 = bounds
        return cls(origin=(x0, y0), meters_per_pixel=max(x1 - x0, y1 - y0) / size, size=size)

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        c = (np.arange(self.size) + 0.5) * self.meters_per_pixel
        return self.origin[0] + c, self.origin[1] + c


@dataclass(frozen=True)
class Mask:
    grid: np.ndarray
    meters_per_pixel: float
    origin: tuple[float, float]


def render_mask(shape: ShapeSpec, pose, camera: Camera) -> Mask:
    """Binary footprint: a pixel is 1 iff its center lies inside the shape."""
    x, y, theta = (float(v) for v in pose)
    xs, ys = camera.pixel_centers()
    dx = xs[None, :] - x
    dy = ys[:, None] - y
    if shape.kind == ShapeKind.DISC:
        inside = dx * dx + dy * dy <= shape.radius**2
    else:
        c, s = math.cos(theta), math.sin(theta)
        u = c * dx + s * dy
        v = -s * dx + c * dy
        hx, hy = shape.half_extents
        inside = (np.abs(u) <= hx) & (np.abs(v) <= hy)
    if not inside.any():
        raise ValueError(f"shape at pose {tuple(pose)} lies entirely outside the camera view")
    return Mask(inside.astype(np.uint8), camera.meters_per_pixel, camera.origin)


# descriptor normalization: object sizes 0.05..0.11 m map to [-1, 1]
_SIZE_CENTER = 0.08
_SIZE_SCALE = 0.03


def oracle_descriptor(shape: ShapeSpec, pose, table_bounds) -> np.ndarray:
    """Analytic code ``(x_n, y_n, e*cos2a, e*sin2a, s1, s2)``.

    ``x_n, y_n`` are the centroid in table coordinates scaled to [-1, 1];
    ``a`` is the direction of the major axis, doubled so that a rectangle
    turned by pi maps to the same code; ``e = (s1 - s2) / (s1 + s2)`` is the
    eccentricity of the footprint (0 for discs and squares); ``s1 >= s2`` are
    the normalized footprint dimensions.
    """
    x, y, theta = (float(v) for v in pose)
    x0, y0, x1, y1 = table_bounds
    xn = (x - 0.5 * (x0 + x1)) / (0.5 * (x1 - x0))
    yn = (y - 0.5 * (y0 + y1)) / (0.5 * (y1 - y0))
    if shape.kind == ShapeKind.DISC:
        major = minor = 2 * shape.radius
        angle = 0.0
    else:
        hx, hy = shape.half_extents
        major, minor = 2 * max(hx, hy), 2 * min(hx, hy)
        angle = theta if hx >= hy else theta + 0.5 * math.pi
    e = (major - minor) / (major + minor)
    return np.array(
        [
            xn,
            yn,
            e * math.cos(2 * angle),
            e * math.sin(2 * angle),
            (major - _SIZE_CENTER) / _SIZE_SCALE,
            (minor - _SIZE_CENTER) / _SIZE_SCALE,
        ],
        dtype=np.float32,
    )


class Autoencoder(torch.nn.Module):
    """Pooled 32x32 mask -> 1024-256-64-6 code -> mirrored decoder (logits)."""

    def __init__(self, latent_dim: int = LATENT_DIM, hidden=(256, 64)):
        super().__init__()
        n_in = POOLED_SIZE * POOLED_SIZE
        self.encoder = Mlp([n_in, *hidden, latent_dim])
        self.decoder = Mlp([latent_dim, *reversed(hidden), n_in])

    @staticmethod
    def pool(masks: torch.Tensor) -> torch.Tensor:
        """(B, 64, 64) in {0,1} -> (B, 1024) average-pooled."""
        return F.avg_pool2d(masks[:, None], 2).flatten(1)

    def encode(self, masks: torch.Tensor) -> torch.Tensor:
        return self.encoder(self.pool(masks))

    def forward(self, masks: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Logits and the reconstruction target.

        The target is the pooled mask binarized at 0.5. Fitting the soft pooled
        values instead leaves half-covered edge pixels at exactly 0.5, which the
        thresholded reconstruction then gets right only by chance.
        """
        pooled = self.pool(masks)
        return self.decoder(self.encoder(pooled)), (pooled >= 0.5).to(pooled.dtype)


@dataclass
class EncoderModel:
    net: Autoencoder
    epochs: int = 0
    final_loss: float = float("nan")
    loss_history: list[float] = field(default_factory=list)

    def save(self, path) -> None:
        tensors = {f"net.{k}": v.numpy() for k, v in self.net.state_dict().items()}
        tensors["meta.epochs"] = np.array([self.epochs])
        tensors["meta.final_loss"] = np.array([self.final_loss])
        checkpoint.write_tensors(path, checkpoint.ENCODER_MAGIC, tensors)

    @classmethod
    def load(cls, path) -> EncoderModel:
        tensors = checkpoint.read_tensors(path, checkpoint.ENCODER_MAGIC)
        net = Autoencoder()
        state = {k[4:]: torch.from_numpy(v) for k, v in tensors.items() if k.startswith("net.")}
        try:
            net.load_state_dict(state)
        except RuntimeError as exc:
            raise checkpoint.CheckpointError(f"{path}: incompatible encoder tensors ({exc})") from exc
        net.eval()
        return cls(net, int(tensors["meta.epochs"][0]), float(tensors["meta.final_loss"][0]))


def _stack(masks) -> torch.Tensor:
    return torch.from_numpy(np.stack([m.grid if isinstance(m, Mask) else m for m in masks]).astype(np.float32))


def train_autoencoder(
    dataset,
    epochs: int,
    seed: int = 0,
    batch_size: int = 128,
    lr: float = 1e-3,
    final_lr_fraction: float = 0.05,
    augment: bool = True,
    on_epoch=None,
) -> EncoderModel:
    """Fit the autoencoder with Adam on mean binary cross-entropy.

    The learning rate follows a cosine decay down to ``final_lr_fraction * lr``.
    With ``augment`` each batch is passed through a random flip/quarter-turn
    of the pixel grid, which maps footprints to footprints exactly.
    ``on_epoch(epoch, loss)`` is called after every epoch. Raises
    NonFiniteError (with the epoch and batch) if the loss diverges.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    torch.manual_seed(seed)
    net = Autoencoder()
    data = _stack(dataset)
    model = EncoderModel(net)
    with torch.no_grad():
        logits, target = net(data[: min(len(data), 1024)])
        model.final_loss = binary_cross_entropy(logits, target).item()
    opt = Adam(net.parameters(), lr=lr)
    rng = np.random.default_rng(seed)
    for epoch in range(epochs):
        opt.lr = lr * (final_lr_fraction + (1 - final_lr_fraction) * 0.5 * (1 + math.cos(math.pi * epoch / epochs)))
        order = rng.permutation(len(data))
        total = 0.0
        for start in range(0, len(data), batch_size):
            idx = torch.from_numpy(order[start : start + batch_size])
            batch = data[idx]
            if augment:
                batch = _dihedral(batch, int(rng.integers(8)))
            logits, target = net(batch)
            loss = binary_cross_entropy(logits, target)
            opt.zero_grad()
            try:
                backward(loss, net.named_parameters())
            except NonFiniteError as exc:
                raise NonFiniteError(f"autoencoder diverged at epoch {epoch}, batch {start // batch_size}: {exc}") from exc
            opt.step()
            total += loss.item() * len(idx)
        model.final_loss = total / len(data)
        model.loss_history.append(model.final_loss)
        model.epochs = epoch + 1
        if on_epoch is not None:
            on_epoch(epoch, model.final_loss)
    net.eval()
    return model


def _dihedral(batch: torch.Tensor, k: int) -> torch.Tensor:
    if k >= 4:
        batch = batch.flip(-1)
    return torch.rot90(batch, k % 4, dims=(-2, -1))


def encode(model: EncoderModel, mask) -> np.ndarray:
    return encode_batch(model, [mask])[0]


def encode_batch(model: EncoderModel, masks) -> np.ndarray:
    with torch.no_grad():
        return model.net.encode(_stack(masks)).numpy()


def reconstruction_iou(model: EncoderModel, masks) -> np.ndarray:
    """Per-mask IoU between thresholded reconstruction and thresholded pooled input (32x32)."""
    with torch.no_grad():
        logits, target = model.net(_stack(masks))
    pred = logits > 0
    truth = target > 0
    inter = (pred & truth).sum(1).double()
    union = (pred | truth).sum(1).double()
    return torch.where(union > 0, inter / union.clamp(min=1), torch.ones_like(union)).numpy()


def random_masks(n: int, rng: np.random.Generator, camera: Camera, ranges: ParamRanges = PRESETS["table1"], margin=0.06):
    """Masks of random Table-range shapes at uniform positions and orientations."""
    x0, y0 = camera.origin
    span = camera.meters_per_pixel * camera.size
    out = []
    for _ in range(n):
        shape = sample_shape(rng, ranges)
        pose = (
            rng.uniform(x0 + margin, x0 + span - margin),
            rng.uniform(y0 + margin, y0 + span - margin),
            rng.uniform(-math.pi, math.pi),
        )
        out.append(render_mask(shape, pose, camera))
    return out
