"""Trainable scene representation.

Two hash grids feed shallow MLP heads: the geometry grid alone produces
density, the appearance grid (plus view direction and a per-image appearance
embedding) produces color, semantic logits, and a predicted surface normal.
The split keeps density gradients independent of every appearance parameter,
which is what makes appearance-only fine-tuning safe.
"""

from dataclasses import dataclass, field as dc_field, asdict

import numpy as np

from .errors import InvalidInputError
from .geometry import Aabb
from .hashgrid import Hash2D, HashGrid, HashGridConfig
from .mlp import (
    Mlp,
    density_activation,
    density_activation_backward,
    normalize_rows,
    normalize_rows_backward,
    sigmoid,
    sigmoid_backward,
)

NO_NORMAL = np.array([np.nan, np.nan, np.nan])


@dataclass(frozen=True)
class FieldConfig:
    geo_grid: HashGridConfig = dc_field(default_factory=HashGridConfig)
    app_grid: HashGridConfig = dc_field(default_factory=HashGridConfig)
    density_hidden: int = 64
    color_hidden: int = 64
    semantic_hidden: int = 32
    normal_hidden: int = 32
    appearance_dim: int = 16
    n_classes: int = 5
    density_bias: float = -1.0
    # normal_step = normal_step_scale * finest geometry cell size
    normal_step_scale: float = 0.5
    grad_eps: float = 1e-8
    use_transient_mask: bool = False
    mask_embed_dim: int = 8

    def to_json(self):
        d = asdict(self)
        d["geo_grid"] = asdict(self.geo_grid)
        d["app_grid"] = asdict(self.app_grid)
        return d

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        obj["geo_grid"] = HashGridConfig(**obj["geo_grid"])
        obj["app_grid"] = HashGridConfig(**obj["app_grid"])
        return cls(**obj)


@dataclass
class FieldSample:
    """Per-point field outputs: density, color, semantic logits, unit normal."""

    sigma: np.ndarray
    color: np.ndarray
    semantics: np.ndarray
    normal: np.ndarray


class TransientMaskField:
    """Per-image learnable mask over the image plane, output in (0, 1)."""

    def __init__(self, n_images, config: FieldConfig, rng, dtype=np.float32):
        self.grid = Hash2D(rng=rng, dtype=dtype)
        self.embeddings = np.zeros((n_images, config.mask_embed_dim), dtype=dtype)
        self.head = Mlp(
            (self.grid.out_dim + config.mask_embed_dim, 32, 1),
            rng,
            dtype=dtype,
            out_bias=2.0,  # start close to m=1 so early training is unmasked
        )

    def forward(self, uv01, image_ids):
        feats = self.grid.encode(uv01)
        emb = self.embeddings[image_ids]
        h = np.concatenate([feats, emb], axis=1)
        raw, cache = self.head.forward(h)
        m = sigmoid(raw[:, 0])
        return m, (uv01, image_ids, cache, raw, m)

    def backward(self, cache, dm):
        uv01, image_ids, mlp_cache, raw, m = cache
        draw = sigmoid_backward(m, np.asarray(dm, dtype=np.float64))[:, None]
        dh, grads = self.head.backward(mlp_cache, draw)
        dfeats = dh[:, : self.grid.out_dim]
        demb_rows = dh[:, self.grid.out_dim:]
        demb = np.zeros(self.embeddings.shape, dtype=np.float64)
        np.add.at(demb, image_ids, demb_rows)
        dtables = self.grid.encode_backward(uv01, dfeats)
        out = {"mask_grid.tables": dtables, "mask_embeddings": demb}
        for i, (dw, db) in enumerate(grads):
            out[f"mask_head.w{i}"] = dw
            out[f"mask_head.b{i}"] = db
        return out

    def param_items(self):
        items = [("mask_grid.tables", self.grid.tables)]
        items += self.head.param_items("mask_head")
        items.append(("mask_embeddings", self.embeddings))
        return items


class RadianceField:
    def __init__(self, config: FieldConfig, bounds: Aabb, n_images, seed=0,
                 dtype=np.float32):
        self.config = config
        self.bounds = bounds
        self.n_images = int(n_images)
        self.dtype = np.dtype(dtype).type
        rng = np.random.default_rng(seed)
        self.geo_grid = HashGrid(config.geo_grid, bounds, rng=rng, dtype=self.dtype)
        self.app_grid = HashGrid(config.app_grid, bounds, rng=rng, dtype=self.dtype)
        geo_dim = self.geo_grid.out_dim
        app_dim = self.app_grid.out_dim
        self.density_head = Mlp(
            (geo_dim, config.density_hidden, 1), rng, dtype=self.dtype,
            out_bias=config.density_bias,
        )
        self.color_head = Mlp(
            (app_dim + 3 + config.appearance_dim, config.color_hidden, 3),
            rng, dtype=self.dtype,
        )
        self.semantic_head = Mlp(
            (app_dim, config.semantic_hidden, config.n_classes), rng, dtype=self.dtype,
        )
        self.normal_head = Mlp(
            (app_dim, config.normal_hidden, 3), rng, dtype=self.dtype,
        )
        self.appearance_embeddings = np.zeros(
            (self.n_images, config.appearance_dim), dtype=self.dtype
        )
        self.mask_field = (
            TransientMaskField(self.n_images, config, rng, dtype=self.dtype)
            if config.use_transient_mask
            else None
        )

    # ---------------------------------------------------------------- params

    def param_items(self):
        """(name, array) pairs in declaration order; checkpoint layout."""
        items = [
            ("geo_grid.tables", self.geo_grid.tables),
            ("app_grid.tables", self.app_grid.tables),
        ]
        items += self.density_head.param_items("density_head")
        items += self.color_head.param_items("color_head")
        items += self.semantic_head.param_items("semantic_head")
        items += self.normal_head.param_items("normal_head")
        items.append(("appearance_embeddings", self.appearance_embeddings))
        if self.mask_field is not None:
            items += self.mask_field.param_items()
        return items

    def get_param(self, name):
        return dict(self.param_items())[name]

    def set_param(self, name, value):
        if name == "geo_grid.tables":
            self.geo_grid.tables = value
        elif name == "app_grid.tables":
            self.app_grid.tables = value
        elif name == "appearance_embeddings":
            self.appearance_embeddings = value
        elif name == "mask_grid.tables":
            self.mask_field.grid.tables = value
        elif name == "mask_embeddings":
            self.mask_field.embeddings = value
        else:
            head_name, pname = name.split(".")
            head = {
                "density_head": self.density_head,
                "color_head": self.color_head,
                "semantic_head": self.semantic_head,
                "normal_head": self.normal_head,
                "mask_head": self.mask_field.head if self.mask_field else None,
            }[head_name]
            head.apply_param(pname, value)

    def appearance_param_names(self):
        """Parameters allowed to move during appearance-only fine-tuning."""
        names = {"app_grid.tables", "appearance_embeddings"}
        for head in ("color_head", "semantic_head", "normal_head"):
            for i in range(2):
                names.add(f"{head}.w{i}")
                names.add(f"{head}.b{i}")
        return names

    # --------------------------------------------------------------- queries

    def _unit(self, x):
        unit = self.bounds.normalize(x)
        return np.clip(unit, 0.0, 1.0)

    def density(self, x):
        """sigma at world points (forward only)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        feats = self.geo_grid.encode_unit(self._unit(x))
        raw = self.density_head(feats)
        return density_activation(raw[:, 0].astype(np.float64))

    def mean_embedding(self):
        return self.appearance_embeddings.mean(axis=0)

    def query(self, x, d, embedding=None):
        """FieldSample at world points along unit view directions.

        embedding: (E,) vector, (P, E) rows, or None for the mean embedding.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        d = np.atleast_2d(np.asarray(d, dtype=np.float64))
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(d)):
            raise InvalidInputError("query: non-finite inputs")
        norms = np.linalg.norm(d, axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise InvalidInputError("query: view directions must be unit length")
        if embedding is None:
            embedding = self.mean_embedding()
        emb = np.asarray(embedding, dtype=self.dtype)
        if emb.ndim == 1:
            emb = np.broadcast_to(emb, (x.shape[0], emb.shape[0]))
        out = self.forward_points(x, d, embed_rows=emb, need_cache=False)
        return FieldSample(
            sigma=out["sigma"], color=out["color"],
            semantics=out["semantics"], normal=out["normal"],
        )

    def forward_points(self, x, d, image_ids=None, embed_rows=None,
                       need_cache=True):
        """Raw forward pass used by both rendering and training."""
        unit = self._unit(x)
        geo_feats = self.geo_grid.encode_unit(unit)
        raw_sigma, cache_d = self.density_head.forward(geo_feats)
        raw_sigma64 = raw_sigma[:, 0].astype(np.float64)
        sigma = density_activation(raw_sigma64)

        app_feats = self.app_grid.encode_unit(unit)
        if embed_rows is None:
            embed_rows = self.appearance_embeddings[image_ids]
        color_in = np.concatenate(
            [app_feats, d.astype(self.dtype), embed_rows.astype(self.dtype)], axis=1
        )
        raw_color, cache_c = self.color_head.forward(color_in)
        color = sigmoid(raw_color.astype(np.float64))
        sem, cache_s = self.semantic_head.forward(app_feats)
        raw_n, cache_n = self.normal_head.forward(app_feats)
        normal, nrm = normalize_rows(raw_n.astype(np.float64))

        out = {
            "sigma": sigma,
            "color": color,
            "semantics": sem.astype(np.float64),
            "normal": normal,
        }
        if need_cache:
            out["cache"] = {
                "unit": unit,
                "image_ids": image_ids,
                "raw_sigma": raw_sigma64,
                "sigma": sigma,
                "cache_d": cache_d,
                "color": color,
                "cache_c": cache_c,
                "cache_s": cache_s,
                "raw_n": raw_n.astype(np.float64),
                "nrm": nrm,
                "cache_n": cache_n,
            }
        return out

    def backward_points(self, cache, dsigma=None, dcolor=None, dsem=None,
                        dnormal=None):
        """Parameter gradients (float64) for one forward_points pass."""
        grads = {}
        unit = cache["unit"]
        n_pts = unit.shape[0]

        if dsigma is not None:
            draw = density_activation_backward(
                cache["raw_sigma"], cache["sigma"], np.asarray(dsigma, np.float64)
            )[:, None]
            dgeo, g = self.density_head.backward(cache["cache_d"], draw)
            for i, (dw, db) in enumerate(g):
                grads[f"density_head.w{i}"] = dw
                grads[f"density_head.b{i}"] = db
            grads["geo_grid.tables"] = self.geo_grid.encode_unit_backward(unit, dgeo)

        app_dim = self.app_grid.out_dim
        dapp = np.zeros((n_pts, app_dim), dtype=np.float64)
        touched_app = False

        if dcolor is not None:
            draw_c = sigmoid_backward(cache["color"], np.asarray(dcolor, np.float64))
            dcin, g = self.color_head.backward(cache["cache_c"], draw_c)
            for i, (dw, db) in enumerate(g):
                grads[f"color_head.w{i}"] = dw
                grads[f"color_head.b{i}"] = db
            dapp += dcin[:, :app_dim]
            demb_rows = dcin[:, app_dim + 3:]
            demb = np.zeros(self.appearance_embeddings.shape, dtype=np.float64)
            ids = cache["image_ids"]
            if ids is None:
                demb += demb_rows.sum(axis=0) / self.n_images
            else:
                np.add.at(demb, ids, demb_rows)
            grads["appearance_embeddings"] = demb
            touched_app = True

        if dsem is not None:
            dsin, g = self.semantic_head.backward(
                cache["cache_s"], np.asarray(dsem, np.float64)
            )
            for i, (dw, db) in enumerate(g):
                grads[f"semantic_head.w{i}"] = dw
                grads[f"semantic_head.b{i}"] = db
            dapp += dsin
            touched_app = True

        if dnormal is not None:
            draw_n = normalize_rows_backward(
                cache["raw_n"], cache["nrm"], np.asarray(dnormal, np.float64)
            )
            dnin, g = self.normal_head.backward(cache["cache_n"], draw_n)
            for i, (dw, db) in enumerate(g):
                grads[f"normal_head.w{i}"] = dw
                grads[f"normal_head.b{i}"] = db
            dapp += dnin
            touched_app = True

        if touched_app:
            grads["app_grid.tables"] = self.app_grid.encode_unit_backward(unit, dapp)
        return grads

    # --------------------------------------------------------------- normals

    def normal_step(self):
        finest = float(self.geo_grid.resolutions[-1])
        cell = float(np.min(self.bounds.size)) / finest
        return self.config.normal_step_scale * cell

    def density_normal(self, x, step=None):
        """Unit normals -grad(sigma)/|grad(sigma)| via central differences.

        Returns (normals, valid); rows with |grad| <= grad_eps are the
        no-normal sentinel (NaNs) and valid=False there.
        """
        return density_gradient_normal(
            self.density, x, self.normal_step() if step is None else step,
            self.config.grad_eps,
        )


def density_gradient_normal(density_fn, x, step, grad_eps=1e-8):
    """Central-difference normals for any density field callable."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n_pts = x.shape[0]
    grad = np.empty((n_pts, 3), dtype=np.float64)
    for axis in range(3):
        offset = np.zeros(3)
        offset[axis] = step
        grad[:, axis] = (density_fn(x + offset) - density_fn(x - offset)) / (2 * step)
    norm = np.linalg.norm(grad, axis=1)
    valid = norm > grad_eps
    normals = np.full((n_pts, 3), np.nan)
    normals[valid] = -grad[valid] / norm[valid, None]
    return normals, valid


def query_field(field: RadianceField, x, d, app_embed=None):
    """Spec-level single-call query; see RadianceField.query."""
    return field.query(x, d, embedding=app_embed)
