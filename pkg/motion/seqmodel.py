"""
Relative transformer over per-frame tokens.

Frame features are fused into tokens, passed through pre-norm encoder blocks
whose attention uses rotary positions and a band mask of width train_len, and
decoded by one MLP head per target. Losses and the full backward pass are
hand-derived so the model can be trained and gradient-checked on synthetic
data.
"""
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np
from scipy.special import expit

from .exceptions import (
    BadConfig,
    KeypointOutOfRange,
    NonPositiveScale,
    ProbabilityOutOfRange,
    ShapeMismatch,
)
from .kinematics import forward_kinematics_backward, forward_kinematics_batch, smpl24_skeleton
from .nn import (
    attention_backward,
    attention_forward,
    layer_norm_backward,
    layer_norm_forward,
    mlp_backward,
    mlp_forward,
    rope_apply,
    rope_frequencies,
    sinusoidal_encoding,
)
from .rotmath import axis_angles_to_matrices, matrix_to_6d
from .trajectory import recover_world_translations

logger = logging.getLogger(__name__)

KEYPOINT_LIMIT = 1.5
FEATURE_GROUPS = ('bbox', 'keypoints', 'image', 'cam_rot')
HEAD_NAMES = ('cw', 'gamma_c', 'theta', 'beta', 'stationary', 'gamma_gv', 'v_root')
LOSS_TERMS = ('v', 'gv', 'smpl', 'j3d', 'j2d', 'v3d', 'stationary', 'transl_c', 'transl_w')


@dataclass(frozen=True)
class ModelConfig:
    """
    Model sizes. The defaults are desk scale; full_scale() gives the full-size stack.

    position_encoding 'rope' rotates queries and keys inside attention;
    'absolute' adds a sinusoidal encoding to the tokens before the first layer
    and leaves attention unrotated.
    """

    layers: int = 2
    heads: int = 8
    model_dim: int = 64
    mlp_hidden: int = 128
    train_len: int = 16
    rope_base: float = 10000.0
    fusion_hidden: int = 64
    head_hidden: int = 64
    keypoint_count: int = 24
    image_dim: int = 32
    n_joints: int = 24
    betas: int = 10
    stationary_count: int = 6
    fusion_activation: str = 'gelu'
    position_encoding: str = 'rope'

    CHOICES = {
        'fusion_activation': ('gelu', 'identity'),
        'position_encoding': ('rope', 'absolute'),
    }

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in self.CHOICES:
                if value not in self.CHOICES[f.name]:
                    options = ' or '.join(repr(c) for c in self.CHOICES[f.name])
                    raise BadConfig(f"{f.name} must be {options}, got '{value}'")
            elif value <= 0:
                raise BadConfig(f"{f.name} must be positive, got {value}")
        if self.model_dim % self.heads:
            raise BadConfig(f"model_dim {self.model_dim} is not divisible by {self.heads} heads")
        if self.head_dim % 2:
            raise BadConfig(f"per-head dimension {self.head_dim} must be even for rotary pairs")

    @property
    def head_dim(self):
        return self.model_dim // self.heads

    @classmethod
    def full_scale(cls, **overrides):
        values = dict(layers=12, heads=8, model_dim=512, mlp_hidden=1024, train_len=120,
                      fusion_hidden=512, head_hidden=512)
        values.update(overrides)
        return cls(**values)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise BadConfig(f"unknown model config keys: {', '.join(sorted(unknown))}")
        return cls(**data)


def feature_dims(config):
    return {
        'bbox': 3,
        'keypoints': 3 * config.keypoint_count,
        'image': config.image_dim,
        'cam_rot': 6,
    }


def head_dims(config):
    return {
        'cw': 3,
        'gamma_c': 6,
        'theta': 6 * (config.n_joints - 1),
        'beta': config.betas,
        'stationary': config.stationary_count,
        'gamma_gv': 6,
        'v_root': 3,
    }


def _mlp_shapes(shapes, prefix, n_in, hidden, n_out):
    shapes[f'{prefix}.w1'] = (hidden, n_in)
    shapes[f'{prefix}.b1'] = (hidden,)
    shapes[f'{prefix}.w2'] = (n_out, hidden)
    shapes[f'{prefix}.b2'] = (n_out,)


def param_shapes(config):
    """Ordered map from parameter name to shape"""
    d = config.model_dim
    shapes = {}
    for group, n_in in feature_dims(config).items():
        _mlp_shapes(shapes, f'fuse.{group}', n_in, config.fusion_hidden, d)
    for i in range(config.layers):
        prefix = f'layers.{i}'
        shapes[f'{prefix}.ln1.gamma'] = (d,)
        shapes[f'{prefix}.ln1.beta'] = (d,)
        for w in ('wq', 'wk', 'wv', 'wo'):
            shapes[f'{prefix}.attn.{w}'] = (d, d)
        shapes[f'{prefix}.attn.bo'] = (d,)
        shapes[f'{prefix}.ln2.gamma'] = (d,)
        shapes[f'{prefix}.ln2.beta'] = (d,)
        _mlp_shapes(shapes, f'{prefix}.mlp', d, config.mlp_hidden, d)
    shapes['final_ln.gamma'] = (d,)
    shapes['final_ln.beta'] = (d,)
    for name, n_out in head_dims(config).items():
        _mlp_shapes(shapes, f'heads.{name}', d, config.head_hidden, n_out)
    return shapes


@dataclass
class ModelParams:
    """Flat, ordered tensor map plus the config it was built for"""

    config: ModelConfig
    tensors: dict

    def __post_init__(self):
        expected = param_shapes(self.config)
        missing = set(expected) - set(self.tensors)
        extra = set(self.tensors) - set(expected)
        if missing or extra:
            raise ShapeMismatch(
                f"parameter names disagree with config; missing {sorted(missing)[:3]}, extra {sorted(extra)[:3]}"
            )
        ordered = {}
        for name, shape in expected.items():
            value = np.asarray(self.tensors[name], dtype=float)
            if value.shape != shape:
                raise ShapeMismatch(f"parameter {name} has shape {value.shape}, expected {shape}")
            if not np.all(np.isfinite(value)):
                raise ShapeMismatch(f"parameter {name} has non-finite entries")
            ordered[name] = value
        self.tensors = ordered

    @classmethod
    def init(cls, config, seed=0):
        """Weights ~ N(0, 1/fan_in), biases zero, layer-norm gains one"""
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in param_shapes(config).items():
            if name.endswith('.gamma'):
                tensors[name] = np.ones(shape)
            elif len(shape) == 1:
                tensors[name] = np.zeros(shape)
            else:
                tensors[name] = rng.normal(0.0, 1.0 / math.sqrt(shape[1]), size=shape)
        return cls(config, tensors)

    @classmethod
    def zeros(cls, config):
        return cls(config, {name: np.zeros(shape) for name, shape in param_shapes(config).items()})

    def __getitem__(self, name):
        return self.tensors[name]

    def __setitem__(self, name, value):
        self.tensors[name] = value

    def __iter__(self):
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def copy(self):
        return ModelParams(self.config, {name: value.copy() for name, value in self.tensors.items()})

    @property
    def size(self):
        return sum(value.size for value in self.tensors.values())


@dataclass(frozen=True)
class FrameFeatures:
    """
    Per-frame network inputs.

    bbox is (T, 3) normalized center and size, keypoints (T, K, 3) with
    normalized x, y and a confidence, cam_rot (T, 6) the two-column encoding of
    the relative camera rotation. image_feature may be omitted, which feeds
    zeros.
    """

    bbox: np.ndarray
    keypoints: np.ndarray
    cam_rot: np.ndarray
    image_feature: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ('bbox', 'keypoints', 'cam_rot', 'image_feature'):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, np.asarray(value, dtype=float))
        t = self.bbox.shape[0]
        if self.bbox.shape != (t, 3) or self.cam_rot.shape != (t, 6):
            raise ShapeMismatch(f"bbox must be (T, 3) and cam_rot (T, 6); got {self.bbox.shape}, {self.cam_rot.shape}")
        if self.keypoints.ndim != 3 or self.keypoints.shape[0] != t or self.keypoints.shape[2] != 3:
            raise ShapeMismatch(f"keypoints must be (T, K, 3) with T={t}, got {self.keypoints.shape}")
        if self.image_feature is not None and (self.image_feature.ndim != 2 or self.image_feature.shape[0] != t):
            raise ShapeMismatch(f"image_feature must be (T, D) with T={t}, got {self.image_feature.shape}")
        coords = self.keypoints[..., :2]
        if np.any(np.abs(coords) > KEYPOINT_LIMIT):
            frame = int(np.flatnonzero(np.any(np.abs(coords) > KEYPOINT_LIMIT, axis=(1, 2)))[0])
            raise KeypointOutOfRange(f"keypoint coordinates outside [-{KEYPOINT_LIMIT}, {KEYPOINT_LIMIT}]", frame=frame)

    @property
    def n_frames(self):
        return self.bbox.shape[0]

    def group_inputs(self, config):
        t = self.n_frames
        image = self.image_feature if self.image_feature is not None else np.zeros((t, config.image_dim))
        inputs = {
            'bbox': self.bbox,
            'keypoints': self.keypoints.reshape(t, -1),
            'image': image,
            'cam_rot': self.cam_rot,
        }
        for group, n_in in feature_dims(config).items():
            if inputs[group].shape[1] != n_in:
                raise ShapeMismatch(f"feature group {group} has width {inputs[group].shape[1]}, model expects {n_in}")
        return inputs


def _early_fuse_forward(features, params):
    config = params.config
    inputs = features.group_inputs(config)
    tokens = np.zeros((features.n_frames, config.model_dim))
    caches = {}
    for group in FEATURE_GROUPS:
        p = f'fuse.{group}'
        out, caches[group] = mlp_forward(
            inputs[group], params[f'{p}.w1'], params[f'{p}.b1'], params[f'{p}.w2'], params[f'{p}.b2'],
            activation=config.fusion_activation,
        )
        tokens += out
    return tokens, caches


def _early_fuse_backward(grad_tokens, caches, grads):
    for group in FEATURE_GROUPS:
        g = mlp_backward(grad_tokens, caches[group])
        for key in ('w1', 'b1', 'w2', 'b2'):
            grads[f'fuse.{group}.{key}'] = g[key]


def early_fuse(features, params):
    """Each feature group through its own MLP to model_dim, then summed per frame"""
    tokens, _ = _early_fuse_forward(features, params)
    return tokens


def _positions(t, positions):
    if positions is None:
        return np.arange(t, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if positions.shape != (t,):
        raise ShapeMismatch(f"expected {t} temporal indices, got shape {positions.shape}")
    return positions


def _check_tokens(tokens, config):
    tokens = np.asarray(tokens, dtype=float)
    if tokens.ndim != 2 or tokens.shape[1] != config.model_dim:
        raise ShapeMismatch(f"tokens must be (T, {config.model_dim}), got {tokens.shape}")
    return tokens


def attention_logits(q_tokens, k_tokens, positions, params, head, layer=0, k_positions=None):
    """
    Scaled rotary logits of one head: (W_q f^t)^T R(p^s - p^t) (W_k f^s) / sqrt(d_head).

    No mask is applied. k_positions defaults to positions. With absolute
    position encoding the projections are used unrotated.
    """
    config = params.config
    q_tokens = _check_tokens(q_tokens, config)
    k_tokens = _check_tokens(k_tokens, config)
    if not 0 <= head < config.heads:
        raise ShapeMismatch(f"head {head} out of range for {config.heads} heads")
    q_pos = _positions(len(q_tokens), positions)
    k_pos = _positions(len(k_tokens), positions if k_positions is None else k_positions)

    dh = config.head_dim
    rows = slice(head * dh, (head + 1) * dh)
    freqs = rope_frequencies(dh, config.rope_base)
    q = q_tokens @ params[f'layers.{layer}.attn.wq'][rows].T
    k = k_tokens @ params[f'layers.{layer}.attn.wk'][rows].T
    if config.position_encoding == 'rope':
        q = rope_apply(q, q_pos, freqs)
        k = rope_apply(k, k_pos, freqs)
    return q @ k.T / math.sqrt(dh)


def _attention(tokens, positions, params, layer, window):
    config = params.config
    p = f'layers.{layer}.attn'
    return attention_forward(
        tokens, positions,
        params[f'{p}.wq'], params[f'{p}.wk'], params[f'{p}.wv'], params[f'{p}.wo'], params[f'{p}.bo'],
        heads=config.heads, window=window, rope_base=config.rope_base,
        rotary=config.position_encoding == 'rope',
    )


def masked_self_attention(tokens, positions, params, window=None, layer=0, return_weights=False):
    """
    One attention sublayer: token t sees token s only when |p^t - p^s| < window.

    window defaults to the config's train_len. With return_weights the
    (heads, T, T) attention matrix is returned alongside the output.
    """
    config = params.config
    tokens = _check_tokens(tokens, config)
    window = config.train_len if window is None else window
    if window < 1:
        raise ShapeMismatch(f"attention window must be at least 1, got {window}")
    out, cache = _attention(tokens, _positions(len(tokens), positions), params, layer, window)
    if return_weights:
        return out, cache['weights']
    return out


def _transformer_forward(params, tokens, positions=None):
    config = params.config
    x = _check_tokens(tokens, config)
    positions = _positions(len(x), positions)
    if config.position_encoding == 'absolute':
        x = x + sinusoidal_encoding(positions, config.model_dim, config.rope_base)
    caches = []
    for i in range(config.layers):
        p = f'layers.{i}'
        h, ln1 = layer_norm_forward(x, params[f'{p}.ln1.gamma'], params[f'{p}.ln1.beta'])
        a, attn = _attention(h, positions, params, i, config.train_len)
        x = x + a
        h, ln2 = layer_norm_forward(x, params[f'{p}.ln2.gamma'], params[f'{p}.ln2.beta'])
        m, mlp = mlp_forward(h, params[f'{p}.mlp.w1'], params[f'{p}.mlp.b1'],
                             params[f'{p}.mlp.w2'], params[f'{p}.mlp.b2'])
        x = x + m
        caches.append({'ln1': ln1, 'attn': attn, 'ln2': ln2, 'mlp': mlp})
    out, final = layer_norm_forward(x, params['final_ln.gamma'], params['final_ln.beta'])
    return out, {'layers': caches, 'final': final}


def _transformer_backward(grad_out, cache, params, grads):
    g = layer_norm_backward(grad_out, cache['final'])
    grads['final_ln.gamma'] = g['grad_gamma']
    grads['final_ln.beta'] = g['grad_beta']
    grad_x = g['grad_x']
    for i in reversed(range(len(cache['layers']))):
        p = f'layers.{i}'
        layer = cache['layers'][i]

        g_mlp = mlp_backward(grad_x, layer['mlp'])
        for key in ('w1', 'b1', 'w2', 'b2'):
            grads[f'{p}.mlp.{key}'] = g_mlp[key]
        g_ln2 = layer_norm_backward(g_mlp['grad_x'], layer['ln2'])
        grads[f'{p}.ln2.gamma'] = g_ln2['grad_gamma']
        grads[f'{p}.ln2.beta'] = g_ln2['grad_beta']
        grad_x = grad_x + g_ln2['grad_x']

        g_attn = attention_backward(grad_x, layer['attn'])
        for key in ('wq', 'wk', 'wv', 'wo', 'bo'):
            grads[f'{p}.attn.{key}'] = g_attn[key]
        g_ln1 = layer_norm_backward(g_attn['grad_x'], layer['ln1'])
        grads[f'{p}.ln1.gamma'] = g_ln1['grad_gamma']
        grads[f'{p}.ln1.beta'] = g_ln1['grad_beta']
        grad_x = grad_x + g_ln1['grad_x']
    return grad_x


def transformer_forward(params, tokens, positions=None):
    """Pre-norm encoder stack with a final layer norm; output has the input's length"""
    out, _ = _transformer_forward(params, tokens, positions)
    return out


def transformer_backward(params, tokens, grad_out, positions=None):
    """Gradients of sum(grad_out * transformer_forward(tokens)) w.r.t. tokens and stack parameters"""
    _, cache = _transformer_forward(params, tokens, positions)
    grads = {}
    grad_tokens = _transformer_backward(np.asarray(grad_out, dtype=float), cache, params, grads)
    return grad_tokens, grads


def decode_6d(x):
    """
    Gram-Schmidt decode of (..., 6) into rotation matrices (..., 3, 3).

    The first three entries give the first column, the last three are
    orthogonalized against it for the second, and the third is their cross
    product.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 6:
        raise ShapeMismatch(f"6D rotation encodings need a trailing axis of 6, got {x.shape}")
    a1, a2 = x[..., :3], x[..., 3:]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    b1 = a1 / n1
    dot = (b1 * a2).sum(axis=-1, keepdims=True)
    u2 = a2 - dot * b1
    n2 = np.linalg.norm(u2, axis=-1, keepdims=True)
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    rot = np.stack([b1, b2, b3], axis=-1)
    return rot, {'a2': a2, 'n1': n1, 'n2': n2, 'b1': b1, 'b2': b2, 'dot': dot}


def decode_6d_backward(grad_rot, cache):
    b1, b2, a2 = cache['b1'], cache['b2'], cache['a2']
    g_b1 = grad_rot[..., :, 0]
    g_b2 = grad_rot[..., :, 1]
    g_b3 = grad_rot[..., :, 2]
    g_b1 = g_b1 + np.cross(b2, g_b3)
    g_b2 = g_b2 + np.cross(g_b3, b1)

    g_u2 = (g_b2 - b2 * (b2 * g_b2).sum(axis=-1, keepdims=True)) / cache['n2']
    g_a2 = g_u2 - b1 * (b1 * g_u2).sum(axis=-1, keepdims=True)
    g_b1 = g_b1 - cache['dot'] * g_u2 - a2 * (b1 * g_u2).sum(axis=-1, keepdims=True)

    g_a1 = (g_b1 - b1 * (b1 * g_b1).sum(axis=-1, keepdims=True)) / cache['n1']
    return np.concatenate([g_a1, g_a2], axis=-1)


def rotation_from_6d(x):
    rot, _ = decode_6d(x)
    return rot


@dataclass(frozen=True)
class MultiTaskOutput:
    """
    Decoded per-frame predictions.

    cw holds (s, tx, ty) with s = exp of the raw head output, so s > 0.
    Rotations are (T, 3, 3) matrices; theta is (T, J-1, 3, 3).
    """

    cw: np.ndarray
    gamma_c: np.ndarray
    theta: np.ndarray
    beta: np.ndarray
    stationary_logits: np.ndarray
    gamma_gv: np.ndarray
    v_root: np.ndarray

    @property
    def n_frames(self):
        return self.cw.shape[0]

    def stationary_probs(self):
        return expit(self.stationary_logits)


def _heads_forward(tokens, params):
    config = params.config
    tokens = _check_tokens(tokens, config)
    t = len(tokens)
    raw, caches = {}, {}
    for name in HEAD_NAMES:
        p = f'heads.{name}'
        raw[name], caches[name] = mlp_forward(
            tokens, params[f'{p}.w1'], params[f'{p}.b1'], params[f'{p}.w2'], params[f'{p}.b2']
        )
    gamma_c, c_gamma_c = decode_6d(raw['gamma_c'])
    theta, c_theta = decode_6d(raw['theta'].reshape(t, config.n_joints - 1, 6))
    gamma_gv, c_gamma_gv = decode_6d(raw['gamma_gv'])
    cw = raw['cw'].copy()
    cw[:, 0] = np.exp(cw[:, 0])
    output = MultiTaskOutput(
        cw=cw,
        gamma_c=gamma_c,
        theta=theta,
        beta=raw['beta'],
        stationary_logits=raw['stationary'],
        gamma_gv=gamma_gv,
        v_root=raw['v_root'],
    )
    return output, {'mlp': caches, 'gamma_c': c_gamma_c, 'theta': c_theta, 'gamma_gv': c_gamma_gv}


def _heads_backward(out_grads, output, cache, params, grads):
    t = output.n_frames
    raw_grads = {
        'cw': out_grads['cw'].copy(),
        'gamma_c': decode_6d_backward(out_grads['gamma_c'], cache['gamma_c']),
        'theta': decode_6d_backward(out_grads['theta'], cache['theta']).reshape(t, -1),
        'beta': out_grads['beta'],
        'stationary': out_grads['stationary_logits'],
        'gamma_gv': decode_6d_backward(out_grads['gamma_gv'], cache['gamma_gv']),
        'v_root': out_grads['v_root'],
    }
    # d exp(r) / dr = exp(r) = s
    raw_grads['cw'][:, 0] *= output.cw[:, 0]

    grad_tokens = np.zeros((t, params.config.model_dim))
    for name in HEAD_NAMES:
        g = mlp_backward(raw_grads[name], cache['mlp'][name])
        for key in ('w1', 'b1', 'w2', 'b2'):
            grads[f'heads.{name}.{key}'] = g[key]
        grad_tokens += g['grad_x']
    return grad_tokens


def multitask_heads(tokens, params):
    output, _ = _heads_forward(tokens, params)
    return output


def restore_full_translation(cw, bbox, intrinsics):
    """
    Full-image camera translation from a crop's weak-perspective camera.

    cw is (..., 3) = (s, tx, ty) and bbox (..., 3) = (cx, cy, b) in pixels:
    t_z = 2 f / (s b), t_x = tx + 2 (cx - px) / (s b), t_y = ty + 2 (cy - py) / (s b).
    """
    cw = np.asarray(cw, dtype=float)
    bbox = np.asarray(bbox, dtype=float)
    if cw.shape[-1] != 3 or bbox.shape[-1] != 3:
        raise ShapeMismatch(f"cw and bbox need a trailing axis of 3; got {cw.shape} and {bbox.shape}")
    s, b = cw[..., 0], bbox[..., 2]
    if intrinsics.f <= 0:
        raise NonPositiveScale(f"focal length must be positive, got {intrinsics.f}")
    if np.any(s <= 0):
        raise NonPositiveScale(f"weak-camera scale must be positive, got {np.min(s)}")
    if np.any(b <= 0):
        raise NonPositiveScale(f"bbox size must be positive, got {np.min(b)}")
    k = 2.0 / (s * b)
    return np.stack([
        cw[..., 1] + k * (bbox[..., 0] - intrinsics.px),
        cw[..., 2] + k * (bbox[..., 1] - intrinsics.py),
        k * intrinsics.f,
    ], axis=-1)


def _restore_backward(grad_tau, cw, tau):
    s = cw[:, 0]
    g_s = -(grad_tau[:, 0] * (tau[:, 0] - cw[:, 1])
            + grad_tau[:, 1] * (tau[:, 1] - cw[:, 2])
            + grad_tau[:, 2] * tau[:, 2]) / s
    return np.stack([g_s, grad_tau[:, 0], grad_tau[:, 1]], axis=-1)


def project_points(points_c, intrinsics):
    """Pinhole projection of camera-frame points (..., 3) to pixels (..., 2)"""
    return intrinsics.project(points_c)


def _project_backward(grad_uv, points_c, intrinsics):
    x, y, z = points_c[..., 0], points_c[..., 1], points_c[..., 2]
    f = intrinsics.f
    gu, gv = grad_uv[..., 0], grad_uv[..., 1]
    return np.stack([gu * f / z, gv * f / z, -(gu * f * x + gv * f * y) / z ** 2], axis=-1)


@dataclass(frozen=True)
class TrainingTargets:
    """
    Ground truth for one sequence. Any field left None switches its loss term off.

    joints_body are root-relative body joints (T, J, 3) from FK with an
    identity root; keypoints_2d are pixels (T, J, 2); points_c camera-frame
    joints (T, J, 3). bbox (pixels) and intrinsics are needed by every
    camera-space term; gamma_w by the world translation term.
    """

    v_root: Optional[np.ndarray] = None
    gamma_gv: Optional[np.ndarray] = None
    gamma_c: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    joints_body: Optional[np.ndarray] = None
    keypoints_2d: Optional[np.ndarray] = None
    points_c: Optional[np.ndarray] = None
    stationary: Optional[np.ndarray] = None
    transl_c: Optional[np.ndarray] = None
    transl_w: Optional[np.ndarray] = None
    gamma_w: Optional[np.ndarray] = None
    bbox: Optional[np.ndarray] = None
    intrinsics: Optional[object] = None


@dataclass(frozen=True)
class LossWeights:
    v: float = 1.0
    gv: float = 1.0
    smpl: float = 1.0
    j3d: float = 1.0
    j2d: float = 1e-4
    v3d: float = 1.0
    stationary: float = 1.0
    transl_c: float = 1.0
    transl_w: float = 1.0


@dataclass
class LossReport:
    terms: dict
    weighted: dict
    total: float
    grads: Optional[dict] = field(default=None, repr=False)

    def to_dict(self):
        return {'terms': dict(self.terms), 'weighted': dict(self.weighted), 'total': self.total}


def _target(name, pred_value, target):
    target = np.asarray(target, dtype=float)
    if target.shape != pred_value.shape:
        raise ShapeMismatch(f"{name} target has shape {target.shape}, prediction {pred_value.shape}")
    return target


def bce_with_logits(logits, labels):
    """Mean binary cross-entropy on logits, written stably"""
    return float(np.mean(np.logaddexp(0.0, logits) - labels * logits))


def compute_losses(pred, targets, skeleton=None, weights=None, with_grads=False):
    """
    Named loss terms, their weighted values and the weighted total.

    With with_grads the report also carries gradients of the total w.r.t. each
    decoded output field (cw, gamma_c, theta, beta, stationary_logits,
    gamma_gv, v_root).
    """
    weights = weights or LossWeights()
    terms = {}
    g = {
        'cw': np.zeros_like(pred.cw),
        'gamma_c': np.zeros_like(pred.gamma_c),
        'theta': np.zeros_like(pred.theta),
        'beta': np.zeros_like(pred.beta),
        'stationary_logits': np.zeros_like(pred.stationary_logits),
        'gamma_gv': np.zeros_like(pred.gamma_gv),
        'v_root': np.zeros_like(pred.v_root),
    }

    def mse(term, value, target):
        diff = value - _target(term, value, target)
        terms[term] = terms.get(term, 0.0) + float(np.mean(diff ** 2))
        return 2.0 * getattr(weights, term) * diff / diff.size

    if targets.v_root is not None:
        g['v_root'] += mse('v', pred.v_root, targets.v_root)
    if targets.gamma_gv is not None:
        g['gamma_gv'] += mse('gv', pred.gamma_gv, targets.gamma_gv)
    if targets.gamma_c is not None:
        g['gamma_c'] += mse('smpl', pred.gamma_c, targets.gamma_c)
    if targets.theta is not None:
        g['theta'] += mse('smpl', pred.theta, targets.theta)
    if targets.beta is not None:
        g['beta'] += mse('smpl', pred.beta, targets.beta)

    needs_camera = any(x is not None for x in (targets.keypoints_2d, targets.points_c, targets.transl_c))
    needs_body = targets.joints_body is not None or targets.keypoints_2d is not None or targets.points_c is not None
    if needs_body:
        skeleton = skeleton or smpl24_skeleton()
        if skeleton.n_joints != pred.theta.shape[1] + 1:
            raise ShapeMismatch(
                f"skeleton has {skeleton.n_joints} joints, predictions carry {pred.theta.shape[1] + 1}"
            )
        t = pred.n_frames
        body, glob = forward_kinematics_batch(skeleton, np.broadcast_to(np.eye(3), (t, 3, 3)),
                                              np.zeros((t, 3)), pred.theta)
        g_body = np.zeros_like(body)
        if targets.joints_body is not None:
            g_body += mse('j3d', body, targets.joints_body)

    if needs_camera:
        if targets.bbox is None or targets.intrinsics is None:
            raise ShapeMismatch("camera-space loss terms need bbox and intrinsics targets")
        bbox = np.asarray(targets.bbox, dtype=float)
        tau_c = restore_full_translation(pred.cw, bbox, targets.intrinsics)
        g_tau = np.zeros_like(tau_c)
        if targets.transl_c is not None:
            g_tau += mse('transl_c', tau_c, targets.transl_c)
        if needs_body:
            joints_c = np.einsum('tij,tnj->tni', pred.gamma_c, body) + tau_c[:, None, :]
            g_joints_c = np.zeros_like(joints_c)
            if targets.points_c is not None:
                g_joints_c += mse('v3d', joints_c, targets.points_c)
            if targets.keypoints_2d is not None:
                uv = targets.intrinsics.project(joints_c)
                g_uv = mse('j2d', uv, targets.keypoints_2d)
                g_joints_c += _project_backward(g_uv, joints_c, targets.intrinsics)
            g['gamma_c'] += np.einsum('tni,tnj->tij', g_joints_c, body)
            g_body += np.einsum('tij,tni->tnj', pred.gamma_c, g_joints_c)
            g_tau += g_joints_c.sum(axis=1)
        g['cw'] += _restore_backward(g_tau, pred.cw, tau_c)

    if needs_body and np.any(g_body):
        d_local, _, _ = forward_kinematics_backward(skeleton, glob, pred.theta, g_body)
        g['theta'] += d_local

    if targets.stationary is not None:
        labels = _target('stationary', pred.stationary_logits, targets.stationary)
        if np.any((labels < 0.0) | (labels > 1.0)):
            frame = int(np.flatnonzero(np.any((labels < 0.0) | (labels > 1.0), axis=1))[0])
            raise ProbabilityOutOfRange("stationary labels must lie in [0, 1]", frame=frame)
        terms['stationary'] = bce_with_logits(pred.stationary_logits, labels)
        g['stationary_logits'] += weights.stationary * (expit(pred.stationary_logits) - labels) / labels.size

    if targets.transl_w is not None:
        if targets.gamma_w is None:
            raise ShapeMismatch("the world translation term needs gamma_w targets")
        gamma_w = np.asarray(targets.gamma_w, dtype=float)
        tau_w = recover_world_translations(gamma_w, pred.v_root)
        g_tau_w = mse('transl_w', tau_w, targets.transl_w)
        # tau_w[t] sums steps i < t, so step i collects the gradient of every later frame
        suffix = np.zeros_like(g_tau_w)
        suffix[:-1] = np.cumsum(g_tau_w[::-1], axis=0)[::-1][1:]
        g['v_root'] += np.einsum('tji,tj->ti', gamma_w, suffix)

    weighted = {term: getattr(weights, term) * value for term, value in terms.items()}
    total = 0.0
    for term in LOSS_TERMS:
        if term in weighted:
            total += weighted[term]
    return LossReport(terms=terms, weighted=weighted, total=total, grads=g if with_grads else None)


def forward(params, features, positions=None):
    """Features to decoded predictions; the cache feeds backward()"""
    tokens, fuse_cache = _early_fuse_forward(features, params)
    hidden, tf_cache = _transformer_forward(params, tokens, positions)
    output, head_cache = _heads_forward(hidden, params)
    return output, {'fuse': fuse_cache, 'transformer': tf_cache, 'heads': head_cache}


def predict(params, features, positions=None):
    output, _ = forward(params, features, positions)
    return output


def total_loss(params, features, targets, weights=None, skeleton=None, positions=None):
    output, _ = forward(params, features, positions)
    return compute_losses(output, targets, skeleton, weights).total


def backward(params, features, targets, weights=None, skeleton=None, positions=None):
    """
    Loss report and gradients of its total for every parameter tensor.

    Gradients come back in parameter order; tensors the loss does not reach
    get zeros.
    """
    output, cache = forward(params, features, positions)
    report = compute_losses(output, targets, skeleton, weights, with_grads=True)
    grads = {}
    grad_hidden = _heads_backward(report.grads, output, cache['heads'], params, grads)
    grad_tokens = _transformer_backward(grad_hidden, cache['transformer'], params, grads)
    _early_fuse_backward(grad_tokens, cache['fuse'], grads)
    ordered = {}
    for name, value in params.items():
        grad = grads.get(name)
        ordered[name] = np.zeros_like(value) if grad is None else grad
    return report, ordered


def save_checkpoint(path, params):
    """npz tensor map with the config as a JSON string under __config__"""
    with open(path, 'wb') as fh:
        np.savez(fh, __config__=np.array(json.dumps(params.config.to_dict(), sort_keys=True)), **params.tensors)
    logger.info("Saved %d parameter tensors to %s", len(params.tensors), path)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        if '__config__' not in data.files:
            raise BadConfig(f"{path} has no __config__ entry")
        config = ModelConfig.from_dict(json.loads(str(data['__config__'])))
        tensors = {name: data[name] for name in data.files if name != '__config__'}
    return ModelParams(config, tensors)


class Adam:
    def __init__(self, params, lr=3e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(value) for name, value in params.items()}
        self.v = {name: np.zeros_like(value) for name, value in params.items()}

    def step(self, grads):
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for name, grad in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            self.params.tensors[name] -= self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


def make_toy_dataset(config, n_sequences=8, length=16, seed=0, noise=0.05):
    """
    Sequences whose image features carry a noisy copy of the targets.

    The first six image channels hold the 6D encoding of Gamma_GV plus noise,
    the next three ten times v_root plus noise. The other groups carry
    unrelated random inputs.
    """
    if config.image_dim < 9:
        raise BadConfig(f"toy data needs image_dim >= 9, got {config.image_dim}")
    rng = np.random.default_rng(seed)
    dataset = []
    steps = np.arange(length, dtype=float)[:, None]
    for _ in range(n_sequences):
        base = axis_angles_to_matrices(rng.normal(size=3))
        spin = axis_angles_to_matrices(steps * rng.normal(scale=0.05, size=3))
        gamma_gv = base @ spin
        v_root = rng.normal(scale=0.03, size=3) + rng.normal(scale=0.005, size=(length, 3))

        image = np.zeros((length, config.image_dim))
        image[:, :6] = matrix_to_6d(gamma_gv) + rng.normal(scale=noise, size=(length, 6))
        image[:, 6:9] = 10.0 * v_root + rng.normal(scale=noise, size=(length, 3))
        keypoints = np.concatenate([
            rng.uniform(-1.0, 1.0, size=(length, config.keypoint_count, 2)),
            np.ones((length, config.keypoint_count, 1)),
        ], axis=-1)
        bbox = np.column_stack([
            rng.uniform(-0.5, 0.5, size=length),
            rng.uniform(-0.5, 0.5, size=length),
            rng.uniform(0.2, 0.6, size=length),
        ])
        cam_rot = matrix_to_6d(np.broadcast_to(np.eye(3), (length, 3, 3))) + rng.normal(scale=noise, size=(length, 6))
        features = FrameFeatures(bbox=bbox, keypoints=keypoints, cam_rot=cam_rot, image_feature=image)
        dataset.append((features, TrainingTargets(v_root=v_root, gamma_gv=gamma_gv)))
    return dataset


@dataclass
class ToyFit:
    params: ModelParams
    history: list


def fit_toy(dataset, config=None, steps=500, lr=3e-3, seed=0, weights=None, log_every=100):
    """
    Full-batch Adam on a list of (features, targets) pairs.

    history[i] is the mean total loss before step i; the final entry is the
    loss after the last step.
    """
    config = config or ModelConfig()
    params = ModelParams.init(config, seed=seed)
    optimizer = Adam(params, lr=lr)
    history = []
    n = len(dataset)
    for step in range(steps):
        summed = {name: np.zeros_like(value) for name, value in params.items()}
        loss = 0.0
        for features, targets in dataset:
            report, grads = backward(params, features, targets, weights)
            loss += report.total
            for name, grad in grads.items():
                summed[name] += grad
        history.append(loss / n)
        optimizer.step({name: grad / n for name, grad in summed.items()})
        if log_every and step % log_every == 0:
            logger.info("Toy fit step %d: loss %.6g", step, history[-1])
    history.append(sum(total_loss(params, f, t, weights) for f, t in dataset) / n)
    logger.info("Toy fit finished after %d steps: loss %.6g -> %.6g", steps, history[0], history[-1])
    return ToyFit(params=params, history=history)
