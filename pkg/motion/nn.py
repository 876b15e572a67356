"""
Numpy layer primitives with hand-derived gradients.

Every *_forward returns (output, cache) and the matching *_backward takes the
upstream gradient plus that cache and returns a dict of gradients. Weights
follow the (out_features, in_features) layout.
"""
import math

import numpy as np
from scipy.special import erf

from .exceptions import OddDimension, ShapeMismatch

LN_EPS = 1e-5


def linear_forward(x, weight, bias=None):
    out = x @ weight.T
    if bias is not None:
        out = out + bias
    return out, {'x': x, 'weight': weight, 'has_bias': bias is not None}


def linear_backward(grad_out, cache):
    x = cache['x']
    grad_x = grad_out @ cache['weight']
    grad_weight = grad_out.reshape(-1, grad_out.shape[-1]).T @ x.reshape(-1, x.shape[-1])
    grad_bias = grad_out.reshape(-1, grad_out.shape[-1]).sum(axis=0) if cache['has_bias'] else None
    return {'grad_x': grad_x, 'grad_weight': grad_weight, 'grad_bias': grad_bias}


def gelu_forward(x):
    """Exact GELU, x * Phi(x)"""
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    return x * cdf, {'x': x, 'cdf': cdf}


def gelu_backward(grad_out, cache):
    x = cache['x']
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return {'grad_x': grad_out * (cache['cdf'] + x * pdf)}


def layer_norm_forward(x, gamma, beta, eps=LN_EPS):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean) * inv_std
    return gamma * x_hat + beta, {'x_hat': x_hat, 'inv_std': inv_std, 'gamma': gamma}


def layer_norm_backward(grad_out, cache):
    x_hat = cache['x_hat']
    grad_x_hat = grad_out * cache['gamma']
    grad_x = cache['inv_std'] * (
        grad_x_hat
        - grad_x_hat.mean(axis=-1, keepdims=True)
        - x_hat * (grad_x_hat * x_hat).mean(axis=-1, keepdims=True)
    )
    flat = grad_out.reshape(-1, grad_out.shape[-1])
    return {
        'grad_x': grad_x,
        'grad_gamma': (flat * x_hat.reshape(flat.shape)).sum(axis=0),
        'grad_beta': flat.sum(axis=0),
    }


def mlp_forward(x, w1, b1, w2, b2, activation='gelu'):
    """Two linear layers with GELU (or nothing) in between"""
    h, cache1 = linear_forward(x, w1, b1)
    if activation == 'gelu':
        a, cache_act = gelu_forward(h)
    else:
        a, cache_act = h, None
    out, cache2 = linear_forward(a, w2, b2)
    return out, {'l1': cache1, 'act': cache_act, 'l2': cache2}


def mlp_backward(grad_out, cache):
    g2 = linear_backward(grad_out, cache['l2'])
    grad_a = g2['grad_x']
    if cache['act'] is not None:
        grad_a = gelu_backward(grad_a, cache['act'])['grad_x']
    g1 = linear_backward(grad_a, cache['l1'])
    return {
        'grad_x': g1['grad_x'],
        'w1': g1['grad_weight'],
        'b1': g1['grad_bias'],
        'w2': g2['grad_weight'],
        'b2': g2['grad_bias'],
    }


def rope_frequencies(dim, base=10000.0):
    """alpha_k = base^(-2k/dim) for k = 0 .. dim/2 - 1"""
    if dim % 2:
        raise OddDimension(f"rotary embedding needs an even dimension, got {dim}")
    return 1.0 / (base ** (np.arange(0, dim, 2, dtype=float) / dim))


def rope_apply(x, positions, freqs):
    """
    Rotate consecutive pairs (2k, 2k+1) of the last axis by freqs[k] * position.

    x has shape (..., T, d) and positions shape (T,).
    """
    d = x.shape[-1]
    if d % 2:
        raise OddDimension(f"rotary embedding needs an even dimension, got {d}")
    if freqs.shape != (d // 2,):
        raise ShapeMismatch(f"expected {d // 2} frequencies, got {freqs.shape}")
    angles = np.asarray(positions, dtype=float)[:, None] * freqs[None, :]
    cos, sin = np.cos(angles), np.sin(angles)
    even = x[..., 0::2]
    odd = x[..., 1::2]
    out = np.empty_like(x, dtype=float)
    out[..., 0::2] = cos * even - sin * odd
    out[..., 1::2] = sin * even + cos * odd
    return out


def rope_pair_rotate(vector, position, freqs):
    vector = np.asarray(vector, dtype=float)
    if vector.ndim != 1:
        raise ShapeMismatch(f"expected a single vector, got shape {vector.shape}")
    return rope_apply(vector[None], np.array([position]), np.asarray(freqs, dtype=float))[0]


def sinusoidal_encoding(positions, dim, base=10000.0):
    """Absolute encoding added to tokens: sin and cos of position * alpha_k on pairs (2k, 2k+1)"""
    angles = np.asarray(positions, dtype=float)[:, None] * rope_frequencies(dim, base)[None, :]
    out = np.empty((len(angles), dim))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


def band_mask(q_positions, k_positions, window):
    """Additive mask: 0 where |p_t - p_s| < window, -inf elsewhere"""
    offsets = np.asarray(q_positions)[:, None] - np.asarray(k_positions)[None, :]
    return np.where(np.abs(offsets) < window, 0.0, -np.inf)


def softmax(x, axis=-1):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def attention_forward(x, positions, wq, wk, wv, wo, bo, heads, window, rope_base=10000.0, rotary=True):
    """
    Multi-head self-attention with rotary positions and a band mask.

    Queries and keys are rotated by their own positions, so each logit depends
    on token contents and the relative offset p_s - p_t only. With
    rotary=False they are used unrotated and positions only feed the mask.
    """
    t, d = x.shape
    head_dim = d // heads
    freqs = rope_frequencies(head_dim, rope_base)

    def split(m):
        return m.reshape(t, heads, head_dim).transpose(1, 0, 2)

    q = split(x @ wq.T)
    k = split(x @ wk.T)
    v = split(x @ wv.T)
    q_rot = rope_apply(q, positions, freqs) if rotary else q
    k_rot = rope_apply(k, positions, freqs) if rotary else k

    scale = 1.0 / math.sqrt(head_dim)
    logits = q_rot @ k_rot.transpose(0, 2, 1) * scale + band_mask(positions, positions, window)
    weights = softmax(logits)
    mixed = weights @ v
    concat = mixed.transpose(1, 0, 2).reshape(t, d)
    out, out_cache = linear_forward(concat, wo, bo)

    cache = {
        'x': x, 'positions': positions, 'freqs': freqs, 'scale': scale,
        'q_rot': q_rot, 'k_rot': k_rot, 'v': v, 'weights': weights,
        'wq': wq, 'wk': wk, 'wv': wv, 'out': out_cache, 'heads': heads, 'rotary': rotary,
    }
    return out, cache


def attention_backward(grad_out, cache):
    x = cache['x']
    t, d = x.shape
    heads = cache['heads']
    head_dim = d // heads

    g_out = linear_backward(grad_out, cache['out'])
    grad_mixed = g_out['grad_x'].reshape(t, heads, head_dim).transpose(1, 0, 2)

    weights = cache['weights']
    grad_weights = grad_mixed @ cache['v'].transpose(0, 2, 1)
    grad_v = weights.transpose(0, 2, 1) @ grad_mixed
    grad_logits = weights * (grad_weights - (grad_weights * weights).sum(axis=-1, keepdims=True))
    grad_logits *= cache['scale']

    grad_q_rot = grad_logits @ cache['k_rot']
    grad_k_rot = grad_logits.transpose(0, 2, 1) @ cache['q_rot']
    grad_q, grad_k = grad_q_rot, grad_k_rot
    if cache['rotary']:
        # the transpose of a rotation by +p is a rotation by -p
        neg = -np.asarray(cache['positions'], dtype=float)
        grad_q = rope_apply(grad_q_rot, neg, cache['freqs'])
        grad_k = rope_apply(grad_k_rot, neg, cache['freqs'])

    def merge(m):
        return m.transpose(1, 0, 2).reshape(t, d)

    grad_q, grad_k, grad_v = merge(grad_q), merge(grad_k), merge(grad_v)
    return {
        'grad_x': grad_q @ cache['wq'] + grad_k @ cache['wk'] + grad_v @ cache['wv'],
        'wq': grad_q.T @ x,
        'wk': grad_k.T @ x,
        'wv': grad_v.T @ x,
        'wo': g_out['grad_weight'],
        'bo': g_out['grad_bias'],
    }
