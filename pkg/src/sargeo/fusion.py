"""Deterministic forward kernels for the five-stage multi-modal fusion cascade.

Stages: (1) per-modality linear projection + layer norm into a shared
width, (2) softmax-gated weighted sum, (3) feature-wise affine modulation
(scale bounded to [1 - lam, 1 + lam] by a tanh), (4) token-wise
multi-head self-attention refine block with residual + post layer norm,
(5) cosine-similarity guided interpolation toward the image feature with
amplitude restoration. `cfg_combine` is the guidance-scale combiner for
conditional/unconditional prediction pairs.

Everything is pure numpy float64 with no hidden state: outputs are fully
determined by (inputs, params). Feature vectors are plain arrays, shape
(dim,) or batched (batch, dim); batch rows never interact. Weights are
initialized from a seeded fan-in-scaled uniform scheme, or loaded from a
manifest + little-endian float32 blob container.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.special import erf

from .errors import ConfigError, MeshError

FloatArray = NDArray[np.float64]

_SQRT2 = float(np.sqrt(2.0))
WEIGHTS_FORMAT = "fusion-weights-v1"


@dataclass(frozen=True)
class FusionDims:
    d_model: int = 2048
    d_point: int = 64
    d_image: int = 16
    gate_hidden: int = 128
    film_hidden: int = 256
    tokens: int = 16
    heads: int = 4

    def __post_init__(self):
        if min(self.d_model, self.d_point, self.d_image, self.gate_hidden,
               self.film_hidden, self.tokens, self.heads) < 1:
            raise ConfigError("all fusion dimensions must be >= 1")
        if self.d_model % self.tokens != 0:
            raise ConfigError("d_model must be divisible by the token count")
        if (self.d_model // self.tokens) % self.heads != 0:
            raise ConfigError("token width must be divisible by the head count")

    @property
    def token_dim(self) -> int:
        return self.d_model // self.tokens


def _weight_layout(dims: FusionDims) -> list[tuple[str, tuple[int, ...], int | None]]:
    """Canonical (name, shape, fan_in) list; fan_in None means a constant init."""
    d, td = dims.d_model, dims.token_dim
    return [
        ("w_point", (d, dims.d_point), dims.d_point),
        ("b_point", (d,), None),
        ("w_image", (d, dims.d_image), dims.d_image),
        ("b_image", (d,), None),
        ("ln_text_scale", (d,), None),
        ("ln_text_shift", (d,), None),
        ("ln_point_scale", (d,), None),
        ("ln_point_shift", (d,), None),
        ("ln_image_scale", (d,), None),
        ("ln_image_shift", (d,), None),
        ("gate_w_in", (dims.gate_hidden, 3 * d), 3 * d),
        ("gate_w_out", (3, dims.gate_hidden), dims.gate_hidden),
        ("film_w1", (dims.film_hidden, 2 * d), 2 * d),
        ("film_b1", (dims.film_hidden,), None),
        ("film_w2", (2 * d, dims.film_hidden), dims.film_hidden),
        ("film_b2", (2 * d,), None),
        ("refine_wq", (td, td), td),
        ("refine_wk", (td, td), td),
        ("refine_wv", (td, td), td),
        ("refine_wo", (td, td), td),
        ("refine_ln_scale", (td,), None),
        ("refine_ln_shift", (td,), None),
    ]


@dataclass
class FusionParams:
    """Named weight arrays plus the scalar knobs of the cascade."""

    dims: FusionDims
    w_point: FloatArray = field(repr=False, default=None)
    b_point: FloatArray = field(repr=False, default=None)
    w_image: FloatArray = field(repr=False, default=None)
    b_image: FloatArray = field(repr=False, default=None)
    ln_text_scale: FloatArray = field(repr=False, default=None)
    ln_text_shift: FloatArray = field(repr=False, default=None)
    ln_point_scale: FloatArray = field(repr=False, default=None)
    ln_point_shift: FloatArray = field(repr=False, default=None)
    ln_image_scale: FloatArray = field(repr=False, default=None)
    ln_image_shift: FloatArray = field(repr=False, default=None)
    gate_w_in: FloatArray = field(repr=False, default=None)
    gate_w_out: FloatArray = field(repr=False, default=None)
    film_w1: FloatArray = field(repr=False, default=None)
    film_b1: FloatArray = field(repr=False, default=None)
    film_w2: FloatArray = field(repr=False, default=None)
    film_b2: FloatArray = field(repr=False, default=None)
    refine_wq: FloatArray = field(repr=False, default=None)
    refine_wk: FloatArray = field(repr=False, default=None)
    refine_wv: FloatArray = field(repr=False, default=None)
    refine_wo: FloatArray = field(repr=False, default=None)
    refine_ln_scale: FloatArray = field(repr=False, default=None)
    refine_ln_shift: FloatArray = field(repr=False, default=None)
    lam: float = 0.5
    tau_target: float = 0.5
    tau_max: float = 0.8
    eps: float = 1e-6
    dropout_rate: float = 0.0   # inference kernels treat dropout as identity

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ConfigError("lam must be in (0, 1]")
        if not 0.0 <= self.tau_max <= 1.0:
            raise ConfigError("tau_max must be in [0, 1]")
        if self.eps <= 0.0:
            raise ConfigError("eps must be > 0")
        for name, shape, _ in _weight_layout(self.dims):
            a = getattr(self, name)
            if a is None:
                raise ConfigError(f"missing weight array {name!r}")
            if tuple(a.shape) != shape:
                raise ConfigError(f"{name} has shape {tuple(a.shape)}, expected {shape}")

    def with_arrays(self, **arrays: FloatArray) -> "FusionParams":
        return replace(self, **arrays)


def init_fusion_params(dims: FusionDims | None = None, seed: int = 0,
                       **scalars) -> FusionParams:
    """Seeded initialization: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    biases/shifts zero, layer-norm scales one. Arrays are drawn in the
    canonical layout order, so a (dims, seed) pair fully determines the weights."""
    dims = dims or FusionDims()
    gen = np.random.Generator(np.random.Philox(key=seed))
    arrays = {}
    for name, shape, fan_in in _weight_layout(dims):
        if fan_in is None:
            value = np.ones(shape) if name.endswith("scale") else np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(fan_in)
            value = gen.uniform(-bound, bound, size=shape)
        arrays[name] = value
    return FusionParams(dims=dims, **arrays, **scalars)


def _check_dim(x: np.ndarray, dim: int, name: str) -> FloatArray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim not in (1, 2) or a.shape[-1] != dim:
        raise ValueError(f"{name} must have last dimension {dim}, got shape {a.shape}")
    return a


def gelu(x: FloatArray) -> FloatArray:
    """Exact (erf-based) GELU."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def softmax(x: FloatArray, axis: int = -1) -> FloatArray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(x, scale, shift, eps: float) -> FloatArray:
    """Normalize the last axis to zero mean / unit variance, then affine scale+shift."""
    if eps <= 0.0:
        raise ValueError("eps must be > 0")
    x = np.asarray(x, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    shift = np.asarray(shift, dtype=np.float64)
    if scale.shape != x.shape[-1:] or shift.shape != x.shape[-1:]:
        raise ValueError("scale/shift must match the feature dimension")
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * scale + shift


def modality_linear(f, which: str, params: FusionParams) -> FloatArray:
    """The pre-normalization linear map of `project_norm` (text has none)."""
    dims = params.dims
    if which == "p":
        f = _check_dim(f, dims.d_point, "point feature")
        return f @ params.w_point.T + params.b_point
    if which == "i":
        f = _check_dim(f, dims.d_image, "image feature")
        return f @ params.w_image.T + params.b_image
    if which == "t":
        return _check_dim(f, dims.d_model, "text feature")
    raise ValueError(f"modality must be 'p', 'i' or 't', got {which!r}")


def project_norm(f, which: str, params: FusionParams) -> FloatArray:
    """Project a modality into the shared width and layer-normalize it."""
    y = modality_linear(f, which, params)
    scale = getattr(params, f"ln_{'point' if which == 'p' else 'image' if which == 'i' else 'text'}_scale")
    shift = getattr(params, f"ln_{'point' if which == 'p' else 'image' if which == 'i' else 'text'}_shift")
    return layer_norm(y, scale, shift, params.eps)


def gate_fuse(ft, fp, fi, params: FusionParams) -> tuple[FloatArray, FloatArray]:
    """Adaptive gating: returns (alpha in modality order t, p, i; gated sum)."""
    d = params.dims.d_model
    ft = _check_dim(ft, d, "ft")
    fp = _check_dim(fp, d, "fp")
    fi = _check_dim(fi, d, "fi")
    cat = np.concatenate([ft, fp, fi], axis=-1)
    hidden = gelu(cat @ params.gate_w_in.T)   # dropout is identity in inference mode
    logits = hidden @ params.gate_w_out.T
    alpha = softmax(logits, axis=-1)
    at, ap, ai = (alpha[..., k:k + 1] for k in range(3))
    fused = at * ft + ap * fp + ai * fi
    return alpha, fused


def film_modulate(f_pre, fi, params: FusionParams) -> FloatArray:
    """Feature-wise affine modulation conditioned on [f_pre, fi]."""
    d = params.dims.d_model
    f_pre = _check_dim(f_pre, d, "f_pre")
    fi = _check_dim(fi, d, "fi")
    cat = np.concatenate([f_pre, fi], axis=-1)
    hidden = gelu(cat @ params.film_w1.T + params.film_b1)
    gamma_beta = hidden @ params.film_w2.T + params.film_b2
    gamma = gamma_beta[..., :d]
    beta = gamma_beta[..., d:]
    gamma_hat = 1.0 + params.lam * np.tanh(gamma)
    return gamma_hat * f_pre + beta


def refine(f_film, params: FusionParams) -> FloatArray:
    """Token-wise multi-head self-attention with residual and post layer norm.

    The vector is reshaped to (tokens, token_dim); all tokens share the
    projection weights and there is no positional term, so the block is
    permutation-equivariant over tokens.
    """
    dims = params.dims
    x = _check_dim(f_film, dims.d_model, "f_film")
    batched = x.ndim == 2
    if not batched:
        x = x[None, :]
    b = x.shape[0]
    t, td, h = dims.tokens, dims.token_dim, dims.heads
    dh = td // h

    tok = x.reshape(b, t, td)
    q = tok @ params.refine_wq.T
    k = tok @ params.refine_wk.T
    v = tok @ params.refine_wv.T
    # (b, heads, tokens, dh)
    q = q.reshape(b, t, h, dh).transpose(0, 2, 1, 3)
    k = k.reshape(b, t, h, dh).transpose(0, 2, 1, 3)
    v = v.reshape(b, t, h, dh).transpose(0, 2, 1, 3)
    scores = (q @ k.transpose(0, 1, 3, 2)) / np.sqrt(dh)
    attn = softmax(scores, axis=-1) @ v
    attn = attn.transpose(0, 2, 1, 3).reshape(b, t, td)
    out = attn @ params.refine_wo.T
    y = layer_norm(tok + out, params.refine_ln_scale, params.refine_ln_shift, params.eps)
    y = y.reshape(b, dims.d_model)
    return y if batched else y[0]


def guide_tau(s_cos, params: FusionParams) -> FloatArray:
    """Interpolation weight clamp(max(0, tau_target - s) / max(eps, 1 - s), 0, tau_max)."""
    s = np.asarray(s_cos, dtype=np.float64)
    return np.clip(np.maximum(0.0, params.tau_target - s)
                   / np.maximum(params.eps, 1.0 - s), 0.0, params.tau_max)


def cosine_guide(f_refined, fi, params: FusionParams) -> FloatArray:
    """Interpolate toward the image feature when alignment is low; restore amplitude.

    The mixing weight tau is `guide_tau` of the cosine similarity. Rows
    with tau = 0 are returned unchanged; otherwise the unit vectors are
    blended and the result rescaled to the refined feature's magnitude.
    """
    d = params.dims.d_model
    a = _check_dim(f_refined, d, "f_refined")
    v = _check_dim(fi, d, "fi")
    batched = a.ndim == 2
    if not batched:
        a = a[None, :]
        v = np.broadcast_to(v[None, :] if v.ndim == 1 else v, a.shape)
    elif v.ndim == 1:
        v = np.broadcast_to(v[None, :], a.shape)

    norm_a = np.linalg.norm(a, axis=-1, keepdims=True)
    norm_v = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm_a == 0.0) or np.any(norm_v == 0.0):
        raise ValueError("cosine_guide requires non-zero feature magnitudes")

    s = np.sum(a * v, axis=-1, keepdims=True) / (norm_a * norm_v)
    tau = guide_tau(s, params)
    mixed = (1.0 - tau) * (a / norm_a) + tau * (v / norm_v)
    norm_m = np.linalg.norm(mixed, axis=-1, keepdims=True)
    # Anti-parallel cancellation is measure-zero; yield to the image direction.
    degenerate = norm_m < 1e-15
    if np.any(degenerate):
        mixed = np.where(degenerate, v / norm_v, mixed)
        norm_m = np.where(degenerate, 1.0, norm_m)
    out = mixed / norm_m * norm_a
    out = np.where(tau == 0.0, a, out)   # exact passthrough for aligned rows
    return out if batched else out[0]


def fusion_forward(f_text, f_point, f_image, params: FusionParams,
                   zero_image: bool = False,
                   style_vector: FloatArray | None = None) -> FloatArray:
    """Full cascade. With zero_image the raw image feature is replaced by
    zeros (or the supplied substitute style vector) before projection."""
    if zero_image:
        sub = np.zeros(params.dims.d_image) if style_vector is None else \
            _check_dim(style_vector, params.dims.d_image, "style_vector")
        f_ref = np.asarray(f_text, dtype=np.float64)
        if f_ref.ndim == 2:
            f_image = np.broadcast_to(sub, (f_ref.shape[0], params.dims.d_image))
        else:
            f_image = sub
    ft = project_norm(f_text, "t", params)
    fp = project_norm(f_point, "p", params)
    fi = project_norm(f_image, "i", params)
    _, pre = gate_fuse(ft, fp, fi, params)
    film = film_modulate(pre, fi, params)
    refined = refine(film, params)
    return guided_or_passthrough(refined, fi, params)


def guided_or_passthrough(refined, fi, params: FusionParams) -> FloatArray:
    """cosine_guide, except rows whose projected image feature is the zero
    vector pass through unchanged (a constant raw image input layer-norms
    to zero, leaving nothing to guide toward — the zero-image inference
    convention lands here)."""
    fi = np.asarray(fi, dtype=np.float64)
    refined = np.asarray(refined, dtype=np.float64)
    zero_rows = np.linalg.norm(fi, axis=-1) == 0.0
    if not np.any(zero_rows):
        return cosine_guide(refined, fi, params)
    if np.all(zero_rows):
        return refined.copy()
    out = refined.copy()
    out[~zero_rows] = cosine_guide(refined[~zero_rows], fi[~zero_rows], params)
    return out


def cfg_combine(eps_uncond, eps_cond, w: float) -> FloatArray:
    """Guidance combiner: uncond + w * (cond - uncond); exact at w = 0 and w = 1."""
    a = np.asarray(eps_uncond, dtype=np.float64)
    b = np.asarray(eps_cond, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if w == 0.0:
        return a.copy()
    if w == 1.0:
        return b.copy()
    return a + w * (b - a)


# ---------------------------------------------------------------------------
# Weights container: JSON manifest + row-major little-endian float32 blob.

def save_weights(params: FusionParams, manifest_path) -> Path:
    """Write `<stem>.json` manifest and `<stem>.bin` blob; returns the manifest path."""
    manifest_path = Path(manifest_path)
    blob_path = manifest_path.with_suffix(".bin")
    entries = []
    chunks = []
    offset = 0
    for name, shape, _ in _weight_layout(params.dims):
        data = np.ascontiguousarray(getattr(params, name), dtype="<f4")
        entries.append({"name": name, "shape": list(shape), "offset": offset})
        chunks.append(data.tobytes())
        offset += data.nbytes
    manifest = {
        "format": WEIGHTS_FORMAT,
        "dtype": "float32",
        "byte_order": "little",
        "blob": blob_path.name,
        "total_bytes": offset,
        "dims": {f.name: getattr(params.dims, f.name) for f in fields(FusionDims)},
        "scalars": {
            "lam": params.lam, "tau_target": params.tau_target,
            "tau_max": params.tau_max, "eps": params.eps,
            "dropout_rate": params.dropout_rate,
        },
        "arrays": entries,
    }
    blob_path.write_bytes(b"".join(chunks))
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_weights(manifest_path) -> FusionParams:
    """Load and shape-validate a weights container."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise MeshError(f"weights manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MeshError(f"cannot parse weights manifest {manifest_path}: {exc}") from exc
    if manifest.get("format") != WEIGHTS_FORMAT:
        raise MeshError(f"unsupported weights format {manifest.get('format')!r}")
    if manifest.get("dtype") != "float32" or manifest.get("byte_order") != "little":
        raise MeshError("weights blob must be little-endian float32")
    try:
        dims = FusionDims(**manifest["dims"])
    except (KeyError, TypeError) as exc:
        raise MeshError(f"bad dims in manifest: {exc}") from exc
    blob_path = manifest_path.parent / manifest["blob"]
    if not blob_path.is_file():
        raise MeshError(f"weights blob not found: {blob_path}")
    blob = blob_path.read_bytes()

    declared = {e["name"]: e for e in manifest.get("arrays", [])}
    arrays = {}
    for name, shape, _ in _weight_layout(dims):
        entry = declared.get(name)
        if entry is None:
            raise MeshError(f"manifest is missing array {name!r}")
        if tuple(entry["shape"]) != shape:
            raise MeshError(
                f"array {name!r} has manifest shape {tuple(entry['shape'])}, expected {shape}")
        count = int(np.prod(shape))
        offset = int(entry["offset"])
        end = offset + 4 * count
        if offset < 0 or end > len(blob):
            raise MeshError(f"array {name!r} offsets [{offset}, {end}) exceed blob size {len(blob)}")
        arrays[name] = np.frombuffer(blob, dtype="<f4", count=count,
                                     offset=offset).astype(np.float64).reshape(shape)
    return FusionParams(dims=dims, **arrays, **manifest.get("scalars", {}))
