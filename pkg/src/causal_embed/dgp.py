"""Image-treatment structural causal models with known ground truth.

The treatment is a ``D x D`` image of a single sprite whose position encodes
two hidden confounders. Instead of shipping the dSprites asset, the sprite is
drawn procedurally: a filled square (pixel values in {0, 1}) or a Gaussian
blob. The outcome depends on the image only through

    h(A) = sum_{i,j} (i / D) (j / D) A[i, j],   i, j = 0 .. D-1

Images are flattened row-major; rows follow ``posY`` and columns ``posX``.

Random draws happen in a fixed documented order per generator so that a seed
reproduces a dataset bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ColumnarDataset
from .errors import DimensionMismatch
from .rng import make_rng

SPRITE_KINDS = ("square", "gaussian-blob")


@dataclass(frozen=True)
class SpriteConfig:
    resolution: int = 16
    kind: str = "square"
    # None -> round(3 * resolution / 16)
    half_width: int | None = None
    noise_std: float = 0.1

    def __post_init__(self) -> None:
        if self.resolution < 4:
            raise ValueError(f"resolution must be >= 4, got {self.resolution}")
        if self.kind not in SPRITE_KINDS:
            raise ValueError(f"sprite kind must be one of {SPRITE_KINDS}")
        if self.half_width is None:
            object.__setattr__(self, "half_width", max(1, round(3 * self.resolution / 16)))
        if not 1 <= self.half_width < self.resolution / 2:
            raise ValueError(f"half_width must be in [1, resolution/2), got {self.half_width}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")

    @property
    def n_pixels(self) -> int:
        return self.resolution * self.resolution

    @property
    def travel(self) -> int:
        """Number of pixel offsets the square can take minus one."""
        return self.resolution - 2 * self.half_width


def _square_offset(cfg: SpriteConfig, pos: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(pos, 0.0, 1.0) * cfg.travel + 0.5).astype(int)


def _axis_profile(cfg: SpriteConfig, pos: np.ndarray) -> np.ndarray:
    """Per-axis sprite profile, shape ``(n, D)``; the image is an outer product."""
    idx = np.arange(cfg.resolution)
    if cfg.kind == "square":
        k = _square_offset(cfg, pos)[:, None]
        return ((idx >= k) & (idx < k + 2 * cfg.half_width)).astype(np.float64)
    centre = (cfg.half_width - 0.5) + np.clip(pos, 0.0, 1.0)[:, None] * cfg.travel
    sigma = cfg.half_width / 2.0
    return np.exp(-0.5 * ((idx - centre) / sigma) ** 2)


def render_sprites(cfg: SpriteConfig, posx, posy, rng: np.random.Generator | None = None) -> np.ndarray:
    """Render a batch of images ``(n, D*D)``; pixel noise only when ``rng`` is given."""
    posx = np.atleast_1d(np.asarray(posx, dtype=np.float64))
    posy = np.atleast_1d(np.asarray(posy, dtype=np.float64))
    cols = _axis_profile(cfg, posx)
    rows = _axis_profile(cfg, posy)
    img = (rows[:, :, None] * cols[:, None, :]).reshape(len(posx), -1)
    if rng is not None and cfg.noise_std > 0:
        img = img + rng.normal(0.0, cfg.noise_std, size=img.shape)
    return img


def render_sprite(cfg: SpriteConfig, posx: float, posy: float, rng: np.random.Generator | None = None) -> np.ndarray:
    return render_sprites(cfg, [posx], [posy], rng)[0]


def h_weights(resolution: int) -> np.ndarray:
    w = np.arange(resolution) / resolution
    return np.outer(w, w).reshape(-1)


def h_weight(image, resolution: int | None = None) -> np.ndarray | float:
    """``h`` for one flattened image or a batch ``(n, D*D)``."""
    img = np.asarray(image, dtype=np.float64)
    d2 = img.shape[-1]
    if resolution is None:
        resolution = int(round(np.sqrt(d2)))
    if d2 != resolution * resolution:
        raise DimensionMismatch(f"image has {d2} pixels, expected {resolution}^2")
    out = img @ h_weights(resolution)
    return float(out) if img.ndim == 1 else out


def latent_cell(cfg: SpriteConfig, pos: float) -> tuple[float, float]:
    """Interval of positions that render to the same noiseless sprite as ``pos``."""
    if cfg.kind != "square":
        return float(pos), float(pos)
    k = int(_square_offset(cfg, np.array([pos]))[0])
    lo = max(0.0, (k - 0.5) / cfg.travel)
    hi = min(1.0, (k + 0.5) / cfg.travel)
    return lo, hi


# --------------------------------------------------------------------------
# back-door


@dataclass(frozen=True)
class BackdoorDGP:
    """``U ~ Unif(-r, r)^2``, ``X = U + N(0, sx^2)``, ``pos = (X + 1.5)/3``,
    ``Y = h(A)^2/100 + c (U1 + U2) + N(0, sy^2)``."""

    u_half_range: float = 1.0
    x_noise_std: float = 0.3
    y_noise_std: float = 0.5
    confounder_weight: float = 1.0


@dataclass
class BackdoorTruth:
    cfg: SpriteConfig

    def ate(self, image) -> np.ndarray | float:
        return h_weight(image, self.cfg.resolution) ** 2 / 100.0


def gen_backdoor_dsprite(cfg: SpriteConfig, n: int, seed: int,
                         dgp: BackdoorDGP = BackdoorDGP()) -> tuple[ColumnarDataset, BackdoorTruth]:
    """Draw order: U (n, 2), X noise (n, 2), pixel noise (n, D*D), Y noise (n,).

    Positions outside [0, 1] are clipped when rendering.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed, "data")
    u = rng.uniform(-dgp.u_half_range, dgp.u_half_range, size=(n, 2))
    x = u + rng.normal(0.0, 1.0, size=(n, 2)) * dgp.x_noise_std
    pos = (x + 1.5) / 3.0
    images = render_sprites(cfg, pos[:, 0], pos[:, 1], rng)
    y = (h_weight(images, cfg.resolution) ** 2 / 100.0
         + dgp.confounder_weight * u.sum(axis=1)
         + rng.normal(0.0, 1.0, size=n) * dgp.y_noise_std)
    data = ColumnarDataset(
        {"treatment": images, "outcome": y, "backdoor": x},
        {"backdoor": ["x1", "x2"]},
        seed,
    )
    return data, BackdoorTruth(cfg)


# --------------------------------------------------------------------------
# front-door


@dataclass(frozen=True)
class FrontdoorDGP:
    """``U ~ Unif(-r, r)^2``, ``pos = (U + 1.5)/3``, ``M = h(A) + N(0, sm^2)``,
    ``Y = M^2/100 + c (U1 + U2) + N(0, sy^2)``."""

    u_half_range: float = 1.5
    m_noise_std: float = 0.2
    y_noise_std: float = 0.5
    confounder_weight: float = 5.0


@dataclass
class FrontdoorTruth:
    cfg: SpriteConfig
    dgp: FrontdoorDGP

    def att(self, image, a_prime_latents, mc_samples: int = 100_000, seed: int = 0) -> tuple[float, float]:
        return ground_truth_att_frontdoor_mc(image, a_prime_latents, self.cfg, mc_samples, seed, self.dgp)


def gen_frontdoor_dsprite(cfg: SpriteConfig, n: int, seed: int,
                          dgp: FrontdoorDGP = FrontdoorDGP()) -> tuple[ColumnarDataset, FrontdoorTruth]:
    """Draw order: U (n, 2), pixel noise (n, D*D), M noise (n,), Y noise (n,)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed, "data")
    u = rng.uniform(-dgp.u_half_range, dgp.u_half_range, size=(n, 2))
    pos = (u + 1.5) / 3.0
    images = render_sprites(cfg, pos[:, 0], pos[:, 1], rng)
    m = h_weight(images, cfg.resolution) + rng.normal(0.0, 1.0, size=n) * dgp.m_noise_std
    y = m**2 / 100.0 + dgp.confounder_weight * u.sum(axis=1) + rng.normal(0.0, 1.0, size=n) * dgp.y_noise_std
    data = ColumnarDataset({"treatment": images, "outcome": y, "frontdoor": m}, seed=seed)
    return data, FrontdoorTruth(cfg, dgp)


def _u_interval(cfg: SpriteConfig, dgp: FrontdoorDGP, pos: float) -> tuple[float, float]:
    lo, hi = latent_cell(cfg, pos)
    lo, hi = 3.0 * lo - 1.5, 3.0 * hi - 1.5
    return max(lo, -dgp.u_half_range), min(hi, dgp.u_half_range)


def ground_truth_att_frontdoor_mc(
    image,
    a_prime_latents,
    cfg: SpriteConfig,
    mc_samples: int = 100_000,
    seed: int = 0,
    dgp: FrontdoorDGP = FrontdoorDGP(),
) -> tuple[float, float]:
    """Monte-Carlo ``E[Y^(a) | A = a']`` for the front-door model.

    ``Y^(a) = (h(a) + eps_M)^2/100 + c (U1 + U2) + eps_Y`` with ``U`` drawn
    from its law given the sprite placement of ``a'``: uniform over the
    latent cell that renders to the same noiseless image (a point for the
    blob sprite). Returns ``(estimate, standard_error)``.
    """
    if mc_samples < 10_000:
        raise ValueError("mc_samples must be >= 1e4")
    px, py = (float(v) for v in a_prime_latents)
    h = h_weight(np.asarray(image, dtype=np.float64), cfg.resolution)
    rng = make_rng(seed, "oracle")
    lo1, hi1 = _u_interval(cfg, dgp, px)
    lo2, hi2 = _u_interval(cfg, dgp, py)
    u1 = lo1 + (hi1 - lo1) * rng.random(mc_samples)
    u2 = lo2 + (hi2 - lo2) * rng.random(mc_samples)
    eps_m = rng.normal(0.0, 1.0, size=mc_samples) * dgp.m_noise_std
    eps_y = rng.normal(0.0, 1.0, size=mc_samples) * dgp.y_noise_std
    y = (h + eps_m) ** 2 / 100.0 + dgp.confounder_weight * (u1 + u2) + eps_y
    return float(y.mean()), float(y.std(ddof=1) / np.sqrt(mc_samples))


def latent_grid(values_x, values_y) -> list[tuple[float, float]]:
    """Cartesian grid of (posX, posY) query latents, posY varying fastest."""
    return [(float(px), float(py)) for px in values_x for py in values_y]
