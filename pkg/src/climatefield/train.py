"""Field training: Adam-scaled gradient descent over the full loss stack,
plus the appearance-only fine-tuning stage."""

import time
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, TrainingDivergedError
from .field import FieldConfig, RadianceField
from .losses import LossWeights, RayBatch, compute_losses, loss_backward
from .rng import stratified_t


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch_rays: int = 1024
    samples_per_ray: int = 48
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-15
    seed: int = 0
    normal_weight_min: float = 1e-2
    holdout_every: int = 12
    log_every: int = 200
    t_near_floor: float = 1e-4


class Adam:
    """Gradient descent with per-parameter second-moment scaling."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.99, eps=1e-15):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros(v.shape, dtype=np.float64) for k, v in self.params.items()}
        self.v = {k: np.zeros(v.shape, dtype=np.float64) for k, v in self.params.items()}

    def step(self, grads):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name in self.params:
            g = grads.get(name)
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            p = self.params[name]
            p -= update.astype(p.dtype)


def _first_nonfinite(named_arrays):
    for name, arr in named_arrays:
        if not np.all(np.isfinite(arr)):
            return name
    return None


@dataclass
class TrainRays:
    """Flattened per-pixel supervision over the training views."""

    origins: np.ndarray
    dirs: np.ndarray
    t0: np.ndarray
    t1: np.ndarray
    colors: np.ndarray
    labels: np.ndarray
    sky_mask: np.ndarray
    depth: np.ndarray
    image_ids: np.ndarray
    uv01: np.ndarray

    @property
    def count(self):
        return self.origins.shape[0]


def collect_training_rays(dataset, view_indices, bounds, sky_class,
                          t_near_floor=1e-4):
    """Stack every pixel of the chosen views into flat ray arrays."""
    from .camera import generate_rays  # local import keeps module load light

    packs = []
    for local_id, vi in enumerate(view_indices):
        view = dataset.views[vi]
        cam = view.camera
        origins, dirs = generate_rays(cam)
        n_px = origins.shape[0]
        t0, t1 = bounds.ray_range(origins, dirs)
        t0 = np.maximum(t0, t_near_floor)
        t1 = np.maximum(t1, t0)
        colors = view.image.reshape(-1, 3).astype(np.float64)
        labels = (
            view.labels.reshape(-1).astype(np.int64)
            if view.labels is not None
            else np.full(n_px, -1, dtype=np.int64)
        )
        sky = labels == sky_class
        depth = (
            view.depth.reshape(-1).astype(np.float64)
            if view.depth is not None
            else np.full(n_px, np.nan)
        )
        px = np.arange(n_px) % cam.width
        py = np.arange(n_px) // cam.width
        uv01 = np.stack(
            [(px + 0.5) / cam.width, (py + 0.5) / cam.height], axis=1
        )
        packs.append(
            (origins, dirs, t0, t1, colors, labels, sky, depth,
             np.full(n_px, local_id, dtype=np.int64), uv01)
        )
    cols = [np.concatenate([p[i] for p in packs]) for i in range(10)]
    return TrainRays(*cols)


def make_batch(rays: TrainRays, idx, n_samples, rng, background,
               with_depth=False):
    """Stratified RayBatch for the chosen ray indices."""
    t0 = rays.t0[idx]
    t1 = rays.t1[idx]
    u = rng.random((idx.size, n_samples))
    span = (t1 - t0)[:, None]
    t = t0[:, None] + (np.arange(n_samples)[None, :] + u) * span / n_samples
    delta = np.empty_like(t)
    delta[:, :-1] = t[:, 1:] - t[:, :-1]
    delta[:, -1] = t1 - t[:, -1]
    labels = rays.labels[idx]
    depth = rays.depth[idx]
    has_depth = with_depth and np.all(np.isfinite(depth))
    return RayBatch(
        origins=rays.origins[idx],
        dirs=rays.dirs[idx],
        t=t,
        delta=delta,
        gt_color=rays.colors[idx],
        background=np.asarray(background, dtype=np.float64),
        image_ids=rays.image_ids[idx],
        gt_semantic=labels if np.all(labels >= 0) else None,
        sky_mask=rays.sky_mask[idx],
        gt_depth=depth if has_depth else None,
        uv01=rays.uv01[idx],
    )


def train(dataset, field_config: FieldConfig, train_config: TrainConfig,
          loss_weights: LossWeights = None, dtype=np.float32, callback=None):
    """Fit a RadianceField to a posed dataset.

    Deterministic for a fixed seed: one RNG drives init, ray choice, and
    quadrature jitter, and every reduction has a fixed order.
    """
    if len(dataset.views) < 2:
        raise InvalidInputError("train: need at least 2 posed views")
    lw = loss_weights or LossWeights()
    holdout = set(holdout_indices(len(dataset.views), train_config.holdout_every))
    train_views = [i for i in range(len(dataset.views)) if i not in holdout]

    field = RadianceField(
        field_config, dataset.bounds, n_images=len(train_views),
        seed=train_config.seed, dtype=dtype,
    )
    rays = collect_training_rays(
        dataset, train_views, dataset.bounds, sky_class=dataset.sky_class,
        t_near_floor=train_config.t_near_floor,
    )
    rng = np.random.default_rng(train_config.seed)
    opt = Adam(
        field.param_items(), lr=train_config.learning_rate,
        beta1=train_config.beta1, beta2=train_config.beta2,
        eps=train_config.adam_eps,
    )
    has_depth = bool(np.all(np.isfinite(rays.depth))) and lw.depth > 0

    t_start = time.perf_counter()
    for it in range(train_config.iterations):
        idx = rng.choice(rays.count, size=train_config.batch_rays, replace=False)
        batch = make_batch(
            rays, idx, train_config.samples_per_ray, rng,
            dataset.background, with_depth=has_depth,
        )
        bd, cache = compute_losses(
            field, batch, lw, need_cache=True,
            normal_weight_min=train_config.normal_weight_min,
        )
        if not np.isfinite(bd.total):
            bad = _first_nonfinite(
                [(k, np.asarray(v)) for k, v in bd.terms().items()]
                + [("rendered", cache["rendered"]),
                   ("sigma", cache["comp"]["sigma"])]
            )
            raise TrainingDivergedError(
                f"non-finite loss at iteration {it}: first bad tensor {bad!r}"
            )
        grads = loss_backward(field, cache)
        opt.step(grads)
        if callback is not None and (
            it % train_config.log_every == 0 or it == train_config.iterations - 1
        ):
            callback(it, bd, time.perf_counter() - t_start)
    return field, sorted(holdout)


def holdout_indices(n_views, every):
    if every <= 0:
        return []
    return [i for i in range(n_views) if (i + 1) % every == 0]


def render_view_simple(field, camera, t_floor=1e-4, n_samples=96, seed=1234,
                       background=(0, 0, 0), embedding=None):
    """Plain field render of one view (no effects); used for eval and tests."""
    from .camera import generate_rays

    origins, dirs = generate_rays(camera)
    t0, t1 = field.bounds.ray_range(origins, dirs)
    t0 = np.maximum(t0, t_floor)
    t1 = np.maximum(t1, t0)
    keys = np.arange(origins.shape[0], dtype=np.uint64)
    t, delta = stratified_t(seed, keys, t0, t1, n_samples)
    if embedding is None:
        embedding = field.mean_embedding()
    out = np.empty((origins.shape[0], 3))
    chunk = 16384
    from .volume import composite_forward

    for lo in range(0, origins.shape[0], chunk):
        hi = min(lo + chunk, origins.shape[0])
        n = hi - lo
        pts = (
            origins[lo:hi, None, :] + t[lo:hi, ..., None] * dirs[lo:hi, None, :]
        ).reshape(-1, 3)
        dflat = np.repeat(dirs[lo:hi], n_samples, axis=0)
        sample = field.query(pts, dflat, embedding=embedding)
        comp = composite_forward(
            sample.sigma.reshape(n, -1),
            sample.color.reshape(n, -1, 3),
            t[lo:hi], delta[lo:hi],
        )
        out[lo:hi] = comp["color"] + (1 - comp["opacity"][:, None]) * np.asarray(
            background, dtype=np.float64
        )
    return out.reshape(camera.height, camera.width, 3)


def psnr(rendered, reference):
    mse = float(np.mean((rendered - reference) ** 2))
    if mse == 0:
        return float("inf")
    return -10.0 * np.log10(mse)


def finetune_appearance(field: RadianceField, stylized, dataset, train_views,
                        iterations=300, batch_rays=1024, samples_per_ray=48,
                        learning_rate=5e-3, seed=0, callback=None):
    """Fit appearance parameters to stylized target views; geometry is frozen.

    stylized: list of (H, W, 3) float arrays aligned 1:1 with train_views
    (same cameras). Returns the per-iteration color losses.
    """
    if len(stylized) != len(train_views):
        raise InvalidInputError(
            "finetune_appearance: stylized view count must match training views"
        )
    for img, vi in zip(stylized, train_views):
        cam = dataset.views[vi].camera
        if img.shape != (cam.height, cam.width, 3):
            raise InvalidInputError(
                "finetune_appearance: stylized view resolution mismatch"
            )

    class _ViewProxy:
        def __init__(self, camera, image):
            self.camera = camera
            self.image = image
            self.labels = None
            self.depth = None

    class _DatasetProxy:
        def __init__(self):
            self.views = [
                _ViewProxy(dataset.views[vi].camera, img)
                for vi, img in zip(train_views, stylized)
            ]

    rays = collect_training_rays(
        _DatasetProxy(), list(range(len(stylized))), field.bounds,
        sky_class=dataset.sky_class,
    )
    allowed = field.appearance_param_names()
    params = {k: v for k, v in field.param_items() if k in allowed}
    opt = Adam(params, lr=learning_rate)
    rng = np.random.default_rng(seed)
    lw = LossWeights(
        color=1.0, semantic=0.0, normal=0.0, distortion=0.0, sky=0.0,
        opacity=0.0, depth=0.0, mask=0.0,
    )
    history = []
    for it in range(iterations):
        idx = rng.choice(rays.count, size=min(batch_rays, rays.count), replace=False)
        batch = make_batch(rays, idx, samples_per_ray, rng, dataset.background)
        bd, cache = compute_losses(field, batch, lw, need_cache=True)
        grads = loss_backward(field, cache)
        opt.step({k: v for k, v in grads.items() if k in allowed})
        history.append(bd.color)
        if callback is not None and it % 50 == 0:
            callback(it, bd)
    return history
