"""Training losses: photometric, semantic, normal, distortion, sky, opacity,
depth-alignment, and the transient-mask variant.

All terms are averaged over the rays of a batch (a pure learning-rate rescale
of the summed form). The breakdown keeps raw term values; weighting happens
once in `total`.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .field import RadianceField, density_gradient_normal
from .volume import composite_backward, composite_forward

_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Per-term weights. Defaults follow the shipped configuration; the
    upstream notation for several of these is ambiguous, so every weight is
    overridable from config."""

    color: float = 1.0
    semantic: float = 4e-2
    normal: float = 7e-4
    distortion: float = 3e-4
    sky: float = 1e-1
    opacity: float = 6.25e-2
    depth: float = 5e-2
    mask: float = 1e-2


@dataclass
class LossBreakdown:
    color: float = 0.0
    semantic: float = 0.0
    normal: float = 0.0
    distortion: float = 0.0
    sky: float = 0.0
    opacity: float = 0.0
    depth: float = 0.0
    mask_reg: float = 0.0
    total: float = 0.0

    def terms(self):
        return {
            "color": self.color,
            "semantic": self.semantic,
            "normal": self.normal,
            "distortion": self.distortion,
            "sky": self.sky,
            "opacity": self.opacity,
            "depth": self.depth,
            "mask_reg": self.mask_reg,
        }


# ------------------------------------------------------------- distortion

def distortion_terms(weights, lo, hi):
    """Per-ray distortion loss and its weight gradient, O(S) per ray.

    weights/lo/hi: (R, S). Returns (loss (R,), dloss_dw (R, S)).
    Cross term uses prefix sums; the self term is w^2 * interval / 3.
    """
    m = 0.5 * (lo + hi)
    dl = hi - lo
    wm = weights * m
    a_incl = np.cumsum(weights, axis=1)
    b_incl = np.cumsum(wm, axis=1)
    a_excl = a_incl - weights
    b_excl = b_incl - wm
    a_suf = a_incl[:, -1:] - a_incl
    b_suf = b_incl[:, -1:] - b_incl
    cross = weights * (m * a_excl - b_excl)
    loss = 2.0 * cross.sum(axis=1) + (weights**2 * dl).sum(axis=1) / 3.0
    grad = 2.0 * (m * a_excl - b_excl + b_suf - m * a_suf) + (2.0 / 3.0) * weights * dl
    return loss, grad


def distortion_loss(weights, intervals):
    """Spec-level single-ray distortion loss over sorted sample intervals."""
    w = np.asarray(weights, dtype=np.float64)
    iv = np.asarray(intervals, dtype=np.float64)
    if iv.ndim != 2 or iv.shape[1] != 2 or iv.shape[0] != w.shape[0]:
        raise InvalidInputError("distortion_loss: weights/intervals mismatch")
    if np.any(w < 0):
        raise InvalidInputError("distortion_loss: weights must be nonnegative")
    lo, hi = iv[:, 0], iv[:, 1]
    if np.any(hi <= lo) or np.any(lo[1:] < hi[:-1] - 1e-12):
        raise InvalidInputError(
            "distortion_loss: intervals must be sorted and non-overlapping"
        )
    loss, _ = distortion_terms(w[None], lo[None], hi[None])
    return float(loss[0])


# ---------------------------------------------------------- depth alignment

def depth_alignment(pred, mono):
    """Closed-form scale/shift aligning predicted depths to monocular cues.

    Minimizes sum((w*pred + d - mono)^2). Returns (w, d, loss, degenerate);
    constant predictions make the normal equations singular, in which case
    w=0, d=mean(mono) and degenerate=True.
    """
    pred = np.asarray(pred, dtype=np.float64)
    mono = np.asarray(mono, dtype=np.float64)
    if pred.shape != mono.shape or pred.ndim != 1 or pred.size < 2:
        raise InvalidInputError("depth_alignment: need >= 2 matched depths")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(mono))):
        raise InvalidInputError("depth_alignment: non-finite depths")
    n = pred.size
    sd = pred.sum()
    sdd = float(pred @ pred)
    sm = mono.sum()
    sdm = float(pred @ mono)
    det = n * sdd - sd * sd
    if det <= 1e-12 * max(1.0, n * sdd):
        d = sm / n
        loss = float(np.sum((d - mono) ** 2))
        return 0.0, float(d), loss, True
    w = (n * sdm - sd * sm) / det
    d = (sm * sdd - sd * sdm) / det
    loss = float(np.sum((w * pred + d - mono) ** 2))
    return float(w), float(d), loss, False


# ------------------------------------------------------------- batch losses

@dataclass
class RayBatch:
    """Sampled rays plus supervision targets.

    t/delta are the stratified sample positions and interval lengths, fixed
    before the loss is evaluated so finite-difference probes see the same
    quadrature.
    """

    origins: np.ndarray        # (R, 3)
    dirs: np.ndarray           # (R, 3) unit
    t: np.ndarray              # (R, S)
    delta: np.ndarray          # (R, S)
    gt_color: np.ndarray       # (R, 3)
    background: np.ndarray     # (3,)
    image_ids: np.ndarray = None   # (R,) int
    gt_semantic: np.ndarray = None  # (R,) labels or (R, K) posteriors
    sky_mask: np.ndarray = None     # (R,) bool
    gt_depth: np.ndarray = None     # (R,) monocular depth
    uv01: np.ndarray = None         # (R, 2) pixel coords in [0,1]^2

    @property
    def n_rays(self):
        return self.origins.shape[0]

    @property
    def n_samples(self):
        return self.t.shape[1]

    def points(self):
        return self.origins[:, None, :] + self.t[..., None] * self.dirs[:, None, :]


def _softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def freeze_targets(field, batch, normal_weight_min=1e-2):
    """Detached quantities (compositing weights, gradient normals) at the
    current parameters, for stop-gradient-consistent loss probes."""
    _, cache = compute_losses(
        field, batch, LossWeights(), need_cache=True,
        normal_weight_min=normal_weight_min,
    )
    return {
        "wbar": cache["comp"]["weights"].copy(),
        "nhat": cache.get("nhat"),
        "nhat_sel": cache.get("nhat_sel"),
    }


def compute_losses(field: RadianceField, batch: RayBatch,
                   weights: LossWeights, frozen=None, need_cache=False,
                   normal_weight_min=1e-2):
    """Evaluate every loss term on one ray batch.

    frozen optionally pins the detached quantities (compositing weights used
    by the semantic/normal terms and the gradient-normal targets) to values
    from an earlier call, which makes finite-difference probes consistent
    with the analytic gradients.
    """
    n_rays, n_samples = batch.t.shape
    pts = batch.points().reshape(-1, 3)
    dirs_flat = np.repeat(batch.dirs, n_samples, axis=0)
    ids_flat = (
        np.repeat(batch.image_ids, n_samples)
        if batch.image_ids is not None
        else None
    )
    if ids_flat is None:
        embed_rows = np.broadcast_to(
            field.mean_embedding().astype(field.dtype),
            (pts.shape[0], field.config.appearance_dim),
        )
        fout = field.forward_points(pts, dirs_flat, embed_rows=embed_rows,
                                    need_cache=need_cache)
    else:
        fout = field.forward_points(pts, dirs_flat, image_ids=ids_flat,
                                    need_cache=need_cache)

    sigma = fout["sigma"].reshape(n_rays, n_samples)
    color = fout["color"].reshape(n_rays, n_samples, 3)
    comp = composite_forward(sigma, color, batch.t, batch.delta)
    opacity = comp["opacity"]
    rendered = comp["color"] + (1.0 - opacity)[:, None] * batch.background

    bd = LossBreakdown()
    cache = {
        "comp": comp, "fout": fout, "rendered": rendered, "batch": batch,
        "weights": weights, "n_rays": n_rays, "n_samples": n_samples,
    }

    diff = rendered - batch.gt_color
    err = np.sum(diff * diff, axis=1)

    mask_vals = None
    if (
        field.mask_field is not None
        and batch.uv01 is not None
        and batch.image_ids is not None
    ):
        mask_vals, mcache = field.mask_field.forward(batch.uv01, batch.image_ids)
        cache["mask_cache"] = mcache
        bd.color = float(np.mean(mask_vals * err))
        bd.mask_reg = float(np.mean(1.0 - mask_vals))
    else:
        bd.color = float(np.mean(err))
    cache["mask_vals"] = mask_vals
    cache["color_diff"] = diff

    wbar = frozen["wbar"] if frozen is not None else comp["weights"].copy()
    cache["wbar"] = wbar

    if batch.gt_semantic is not None and weights.semantic > 0:
        sem = fout["semantics"].reshape(n_rays, n_samples, -1)
        logits = np.einsum("rs,rsk->rk", wbar, sem)
        probs = _softmax(logits)
        if batch.gt_semantic.ndim == 1:
            target = np.zeros_like(probs)
            target[np.arange(n_rays), batch.gt_semantic] = 1.0
        else:
            target = batch.gt_semantic
        bd.semantic = float(
            -np.mean(np.sum(target * np.log(np.maximum(probs, _LOG_FLOOR)), axis=1))
        )
        cache["sem_probs"] = probs
        cache["sem_target"] = target

    if weights.normal > 0:
        if frozen is not None and "nhat" in frozen:
            nhat = frozen["nhat"]
            sel = frozen["nhat_sel"]
        else:
            sel = (wbar >= normal_weight_min).reshape(-1)
            nhat = None
            if np.any(sel):
                nhat, valid = field.density_normal(pts[sel])
                keep = np.zeros(pts.shape[0], dtype=bool)
                keep[np.flatnonzero(sel)[valid]] = True
                sel = keep
                nhat = nhat[valid]
        cache["nhat"] = nhat
        cache["nhat_sel"] = sel
        if nhat is not None and sel is not None and np.any(sel):
            n_pred = fout["normal"][sel]
            resid = n_pred - nhat
            w_sel = wbar.reshape(-1)[sel]
            bd.normal = float(np.sum(w_sel * np.sum(resid * resid, axis=1)) / n_rays)
            cache["normal_resid"] = resid

    if weights.distortion > 0:
        dist, dist_grad = distortion_terms(
            comp["weights"], batch.t, batch.t + batch.delta
        )
        bd.distortion = float(np.mean(dist))
        cache["dist_grad"] = dist_grad

    if batch.sky_mask is not None and weights.sky > 0:
        sky = batch.sky_mask.astype(np.float64)
        bd.sky = float(np.mean(np.exp(-comp["depth"]) * sky))
        cache["sky"] = sky

    o_clamped = np.maximum(opacity, _LOG_FLOOR)
    bd.opacity = float(np.mean(-opacity * np.log(o_clamped)))

    if batch.gt_depth is not None and weights.depth > 0:
        w_fit, d_fit, resid_sum, degen = depth_alignment(
            comp["depth"], batch.gt_depth
        )
        bd.depth = resid_sum / n_rays
        cache["depth_fit"] = (w_fit, d_fit, degen)

    bd.total = float(
        weights.color * bd.color
        + weights.semantic * bd.semantic
        + weights.normal * bd.normal
        + weights.distortion * bd.distortion
        + weights.sky * bd.sky
        + weights.opacity * bd.opacity
        + weights.depth * bd.depth
        + weights.mask * bd.mask_reg
    )
    if need_cache:
        return bd, cache
    return bd


def loss_backward(field: RadianceField, cache):
    """Parameter gradients (float64, by name) of the weighted total loss."""
    lw = cache["weights"]
    batch = cache["batch"]
    comp = cache["comp"]
    n_rays = cache["n_rays"]
    n_samples = cache["n_samples"]
    opacity = comp["opacity"]

    diff = cache["color_diff"]
    mask_vals = cache["mask_vals"]
    if mask_vals is not None:
        d_rendered = (2.0 * lw.color / n_rays) * mask_vals[:, None] * diff
    else:
        d_rendered = (2.0 * lw.color / n_rays) * diff
    d_opacity = -(d_rendered @ batch.background)

    live = opacity > _LOG_FLOOR
    d_opacity = d_opacity + (lw.opacity / n_rays) * np.where(
        live, -(np.log(np.maximum(opacity, _LOG_FLOOR)) + 1.0),
        -np.log(_LOG_FLOOR),
    )

    d_depth = np.zeros(n_rays, dtype=np.float64)
    if "sky" in cache:
        d_depth -= (lw.sky / n_rays) * np.exp(-comp["depth"]) * cache["sky"]
    if "depth_fit" in cache:
        w_fit, d_fit, _ = cache["depth_fit"]
        resid = w_fit * comp["depth"] + d_fit - batch.gt_depth
        d_depth += (lw.depth / n_rays) * 2.0 * w_fit * resid

    d_weights = None
    if "dist_grad" in cache:
        d_weights = (lw.distortion / n_rays) * cache["dist_grad"]

    dsigma, dcolor_samples = composite_backward(
        comp, dcolor=d_rendered, dopacity=d_opacity, ddepth=d_depth,
        dweights=d_weights,
    )

    dsem = None
    if "sem_probs" in cache:
        dlogits = (lw.semantic / n_rays) * (cache["sem_probs"] - cache["sem_target"])
        dsem = (cache["wbar"][..., None] * dlogits[:, None, :]).reshape(
            n_rays * n_samples, -1
        )

    dnormal = None
    if "normal_resid" in cache:
        sel = cache["nhat_sel"]
        dnormal = np.zeros((n_rays * n_samples, 3), dtype=np.float64)
        w_sel = cache["wbar"].reshape(-1)[sel]
        dnormal[sel] = (
            (2.0 * lw.normal / n_rays) * w_sel[:, None] * cache["normal_resid"]
        )

    grads = field.backward_points(
        cache["fout"]["cache"],
        dsigma=dsigma.reshape(-1),
        dcolor=dcolor_samples.reshape(-1, 3),
        dsem=dsem,
        dnormal=dnormal,
    )

    if mask_vals is not None:
        err = np.sum(diff * diff, axis=1)
        dmask = (lw.color * err - lw.mask) / n_rays
        grads.update(field.mask_field.backward(cache["mask_cache"], dmask))
    return grads
