"""Volumetric quadrature: transmittance compositing and density/color fusion.

The backward pass folds every per-ray output (color, opacity, depth) plus any
direct per-sample weight adjoint into a single suffix-sum formula for
dL/dsigma, which keeps the training loop O(rays * samples).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

DEPTH_OPACITY_FLOOR = 1e-10


@dataclass
class FusedSample:
    """Combined scene+effect density and color at sample points."""

    sigma_final: np.ndarray
    color_final: np.ndarray


def fuse_point(sigma_base, color_base, sigma_fx, color_fx):
    """Density-weighted fusion of scene and effect samples.

    sigma_final = sigma_b + sigma_e, color_final is the density-weighted mean.
    Elements where one density is exactly zero pass the other side through
    bit-identically (and color defaults to the base color when both vanish).
    """
    sb = np.asarray(sigma_base, dtype=np.float64)
    scalar_in = sb.ndim == 0
    sb = np.atleast_1d(sb)
    se = np.broadcast_to(np.asarray(sigma_fx, dtype=np.float64), sb.shape)
    cb = np.broadcast_to(
        np.asarray(color_base, dtype=np.float64), sb.shape + (3,)
    ).copy()
    ce = np.broadcast_to(np.asarray(color_fx, dtype=np.float64), sb.shape + (3,))
    if np.any(sb < 0) or np.any(se < 0):
        raise InvalidInputError("fuse_point: densities must be nonnegative")
    sigma = sb + se
    color = cb  # base color passes through wherever sigma_fx == 0
    fx_only = (sb == 0) & (se > 0)
    mixed = (sb > 0) & (se > 0)
    color[fx_only] = ce[fx_only]
    if np.any(mixed):
        denom = sigma[mixed][..., None]
        color[mixed] = (
            sb[mixed][..., None] * cb[mixed] + se[mixed][..., None] * ce[mixed]
        ) / denom
    if scalar_in:
        return FusedSample(sigma_final=float(sigma[0]), color_final=color[0])
    return FusedSample(sigma_final=sigma, color_final=color)


def composite_forward(sigma, color, t, delta):
    """Quadrature over sample batches.

    sigma: (R, S), color: (R, S, 3), t: (R, S) sample positions,
    delta: (R, S) interval lengths. Returns a dict with per-ray color
    (premultiplied, no background), opacity, depth, and the per-sample
    weights/transmittance needed for backward.
    """
    tau = sigma * delta
    tau_before = np.cumsum(tau, axis=1) - tau
    trans = np.exp(-tau_before)
    alpha = 1.0 - np.exp(-tau)
    weights = trans * alpha
    color_out = np.einsum("rs,rsc->rc", weights, color)
    opacity = weights.sum(axis=1)
    depth_num = (weights * t).sum(axis=1)
    depth_den = np.maximum(opacity, DEPTH_OPACITY_FLOOR)
    depth = depth_num / depth_den
    return {
        "color": color_out,
        "opacity": opacity,
        "depth": depth,
        "weights": weights,
        "trans": trans,
        "tau": tau,
        "sigma": sigma,
        "color_samples": color,
        "t": t,
        "delta": delta,
        "depth_num": depth_num,
        "depth_den": depth_den,
    }


def composite_backward(cache, dcolor=None, dopacity=None, ddepth=None,
                       dweights=None):
    """Adjoints of composite_forward.

    Returns (dsigma (R,S), dcolor_samples (R,S,3)). All per-ray adjoints are
    optional; dweights is a direct per-sample weight adjoint (distortion loss).
    """
    weights = cache["weights"]
    n_rays, n_samples = weights.shape
    a = np.zeros((n_rays, n_samples), dtype=np.float64)
    dcs = np.zeros_like(cache["color_samples"], dtype=np.float64)

    dop_total = np.zeros(n_rays, dtype=np.float64)
    if dopacity is not None:
        dop_total += dopacity
    if ddepth is not None:
        den = cache["depth_den"]
        a += (ddepth / den)[:, None] * cache["t"]
        live = cache["opacity"] > DEPTH_OPACITY_FLOOR
        dop_total -= np.where(live, ddepth * cache["depth_num"] / den**2, 0.0)
    a += dop_total[:, None]
    if dcolor is not None:
        a += np.einsum("rc,rsc->rs", dcolor, cache["color_samples"])
        dcs += dcolor[:, None, :] * weights[..., None]
    if dweights is not None:
        a += dweights

    # dL/dsigma_j = delta_j * (T_j e^{-tau_j} a_j - sum_{i>j} a_i w_i)
    aw = a * weights
    suffix = np.cumsum(aw[:, ::-1], axis=1)[:, ::-1] - aw
    surv = cache["trans"] * np.exp(-cache["tau"])
    dsigma = cache["delta"] * (surv * a - suffix)
    return dsigma, dcs


def composite(samples, t=None):
    """One-ray convenience wrapper: list of (sigma, color, delta) triples.

    Returns (color, depth, opacity); color is premultiplied by opacity, so a
    background B shows through as color + (1 - opacity) * B. Sample positions
    default to the midpoints of the delta intervals stacked from zero.
    """
    if len(samples) == 0:
        return np.zeros(3), 0.0, 0.0
    sigma = np.array([s[0] for s in samples], dtype=np.float64)
    color = np.array([s[1] for s in samples], dtype=np.float64)
    delta = np.array([s[2] for s in samples], dtype=np.float64)
    if np.any(delta <= 0):
        raise InvalidInputError("composite: interval lengths must be positive")
    if t is None:
        t = np.cumsum(delta) - 0.5 * delta
    out = composite_forward(
        sigma[None], color[None], np.asarray(t, dtype=np.float64)[None],
        delta[None],
    )
    return out["color"][0], float(out["depth"][0]), float(out["opacity"][0])
