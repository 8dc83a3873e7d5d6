"""Differentiable network operations built on the tensor tape.

Convolutions use an im2col layout so the inner loops are BLAS matmuls; the
kernel-offset scatter loops in the backward passes run over kh*kw positions
only. Spatial tensors are (batch, channels, height, width) throughout.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor, as_tensor, make_op, _accumulate


def _as_4d(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 4:
        return x, False
    if x.ndim == 3:
        from .tensor import reshape

        return reshape(x, (1, *x.shape)), True
    raise DimensionError(f"expected a (c,h,w) or (n,c,h,w) tensor, got shape {x.shape}")


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(n,c,h,w) -> (n, out_h*out_w, c*kh*kw) patch matrix."""
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    n, c, oh, ow, _, _ = windows.shape
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols)


def _col_scatter(cols: np.ndarray, x_shape: tuple, kh: int, kw: int, stride: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch gradients back onto the input."""
    n, c, h, w = x_shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    grads = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros(x_shape, dtype=cols.dtype)
    for u in range(kh):
        for v in range(kw):
            out[:, :, u : u + stride * oh : stride, v : v + stride * ow : stride] += grads[:, :, u, v]
    return out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of (n,c_in,h,w) input with (c_out,c_in,kh,kw) kernels."""
    x4, squeeze = _as_4d(x)
    co, ci, kh, kw = weight.shape
    n, c, h, w = x4.shape
    if c != ci:
        raise DimensionError(f"conv2d channels disagree: input {x4.shape} vs kernels {weight.shape}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise DimensionError(f"conv2d kernel {weight.shape} larger than padded input ({n},{c},{hp},{wp})")
    xd = x4.data
    if padding:
        xd = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(xd, kh, kw, stride)
    w_mat = weight.data.reshape(co, ci * kh * kw)
    out_mat = cols @ w_mat.T
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    data = out_mat.transpose(0, 2, 1).reshape(n, co, oh, ow)

    def backward(g: np.ndarray) -> None:
        g_mat = g.reshape(n, co, oh * ow).transpose(0, 2, 1)
        if weight.requires_grad:
            gw = np.einsum("nlo,nlk->ok", g_mat, cols, optimize=True)
            _accumulate(weight, gw.reshape(weight.shape))
        if x4.requires_grad:
            g_cols = g_mat @ w_mat
            gx = _col_scatter(g_cols, (n, ci, hp, wp), kh, kw, stride)
            if padding:
                gx = gx[:, :, padding : padding + h, padding : padding + w]
            _accumulate(x4, gx)

    out = make_op(data, (x4, weight), backward)
    if bias is not None:
        from .tensor import add, reshape as t_reshape

        out = add(out, t_reshape(bias, (co, 1, 1)))
    if squeeze:
        from .tensor import reshape as t_reshape

        out = t_reshape(out, out.shape[1:])
    return out


def transpose_conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Learned upsampling; kernels are (c_in,c_out,kh,kw), no implicit padding.

    Output spatial size is (in-1)*stride + k, so k == stride gives exactly
    stride times the input size.
    """
    x4, squeeze = _as_4d(x)
    ci, co, kh, kw = weight.shape
    n, c, h, w = x4.shape
    if c != ci:
        raise DimensionError(f"transpose_conv2d channels disagree: input {x4.shape} vs kernels {weight.shape}")
    oh = (h - 1) * stride + kh
    ow = (w - 1) * stride + kw
    w_mat = weight.data.reshape(ci, co * kh * kw)
    cols = (x4.data.reshape(n, ci, h * w).transpose(0, 2, 1) @ w_mat).reshape(n, h, w, co, kh, kw)
    data = np.zeros((n, co, oh, ow), dtype=x4.data.dtype)
    spread = cols.transpose(0, 3, 4, 5, 1, 2)
    for u in range(kh):
        for v in range(kw):
            data[:, :, u : u + stride * h : stride, v : v + stride * w : stride] += spread[:, :, u, v]

    def backward(g: np.ndarray) -> None:
        g_cols = np.empty((n, h, w, co, kh, kw), dtype=g.dtype)
        for u in range(kh):
            for v in range(kw):
                g_cols[:, :, :, :, u, v] = g[:, :, u : u + stride * h : stride, v : v + stride * w : stride].transpose(0, 2, 3, 1)
        g_mat = g_cols.reshape(n, h * w, co * kh * kw)
        if weight.requires_grad:
            gw = np.einsum("nlc,nlk->ck", x4.data.reshape(n, ci, h * w).transpose(0, 2, 1), g_mat, optimize=True)
            _accumulate(weight, gw.reshape(weight.shape))
        if x4.requires_grad:
            gx = (g_mat @ w_mat.T).transpose(0, 2, 1).reshape(n, ci, h, w)
            _accumulate(x4, gx)

    out = make_op(data, (x4, weight), backward)
    if bias is not None:
        from .tensor import add, reshape as t_reshape

        out = add(out, t_reshape(bias, (co, 1, 1)))
    if squeeze:
        from .tensor import reshape as t_reshape

        out = t_reshape(out, out.shape[1:])
    return out


def maxpool2d(x: Tensor, kernel: int = 2) -> Tensor:
    """Non-overlapping max pooling; ties route the gradient to the first slot."""
    x4, squeeze = _as_4d(x)
    n, c, h, w = x4.shape
    if h % kernel or w % kernel:
        raise DimensionError(f"maxpool2d needs dims divisible by {kernel}, got {x4.shape}")
    oh, ow = h // kernel, w // kernel
    tiles = x4.data.reshape(n, c, oh, kernel, ow, kernel).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, kernel * kernel)
    arg = tiles.argmax(axis=-1)
    data = np.take_along_axis(tiles, arg[..., None], axis=-1)[..., 0]

    def backward(g: np.ndarray) -> None:
        gt = np.zeros_like(tiles)
        np.put_along_axis(gt, arg[..., None], g[..., None], axis=-1)
        gx = gt.reshape(n, c, oh, ow, kernel, kernel).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        _accumulate(x4, gx)

    out = make_op(data, (x4,), backward)
    if squeeze:
        from .tensor import reshape as t_reshape

        out = t_reshape(out, out.shape[1:])
    return out


# -- pointwise activations ------------------------------------------------------

_SQRT_2_OVER_PI = 0.7978845608028654
_GELU_COEF = 0.044715


def pointwise(x: Tensor, kind: str) -> Tensor:
    """Elementwise nonlinearity; kind is one of relu, gelu, sigmoid."""
    if kind == "relu":
        data = np.maximum(x.data, 0)

        def backward(g: np.ndarray) -> None:
            _accumulate(x, g * (x.data > 0))

    elif kind == "sigmoid":
        data = _sigmoid(x.data)

        def backward(g: np.ndarray) -> None:
            _accumulate(x, g * data * (1 - data))

    elif kind == "gelu":
        u = _SQRT_2_OVER_PI * (x.data + _GELU_COEF * x.data**3)
        t = np.tanh(u)
        data = 0.5 * x.data * (1 + t)

        def backward(g: np.ndarray) -> None:
            du = _SQRT_2_OVER_PI * (1 + 3 * _GELU_COEF * x.data**2)
            local = 0.5 * (1 + t) + 0.5 * x.data * (1 - t**2) * du
            _accumulate(x, g * local)

    else:
        raise ConfigError(f"unknown pointwise kind {kind!r}; expected relu, gelu or sigmoid")
    return make_op(data, (x,), backward)


def relu(x: Tensor) -> Tensor:
    return pointwise(x, "relu")


def sigmoid(x: Tensor) -> Tensor:
    return pointwise(x, "sigmoid")


def gelu(x: Tensor) -> Tensor:
    return pointwise(x, "gelu")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Normalized exponential along one axis, computed with max subtraction."""
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} out of range for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> None:
        dot = (g * data).sum(axis=axis, keepdims=True)
        _accumulate(x, data * (g - dot))

    return make_op(data, (x,), backward)


def rms_norm(x: Tensor, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Scale each slice along ``axis`` to unit root-mean-square.

    Unlike layer_norm this keeps the mean, so constant offsets survive.
    """
    ms = (x.data**2).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(ms + eps)
    data = x.data * inv
    count = x.data.shape[axis] if axis is not None else x.data.size

    def backward(g: np.ndarray) -> None:
        proj = (g * x.data).sum(axis=axis, keepdims=True)
        _accumulate(x, inv * g - (inv**3 / count) * x.data * proj)

    return make_op(data, (x,), backward)


def layer_norm(x: Tensor, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalize each slice along ``axis`` to zero mean and unit variance."""
    mu = x.data.mean(axis=axis, keepdims=True)
    centered = x.data - mu
    var = (centered**2).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    data = centered * inv

    def backward(g: np.ndarray) -> None:
        g_mean = g.mean(axis=axis, keepdims=True)
        proj = (g * data).mean(axis=axis, keepdims=True)
        _accumulate(x, inv * (g - g_mean - data * proj))

    return make_op(data, (x,), backward)


# -- losses ---------------------------------------------------------------------


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean of squared differences over all elements."""
    target = as_tensor(target, like=pred)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss shapes disagree: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    data = np.asarray((diff**2).mean(), dtype=pred.data.dtype)
    scale = 2.0 / diff.size

    def backward(g: np.ndarray) -> None:
        grad = g * scale * diff
        if pred.requires_grad:
            _accumulate(pred, grad)
        if target.requires_grad:
            _accumulate(target, -grad)

    return make_op(data, (pred, target), backward)


def bce_loss(logit: Tensor, label) -> Tensor:
    """Binary cross entropy from logits, mean over elements.

    Uses the log-sum-exp form max(z,0) - z*y + log(1+exp(-|z|)) so large
    logits cannot overflow. Labels must be 0 or 1.
    """
    label_arr = label.data if isinstance(label, Tensor) else np.asarray(label, dtype=logit.data.dtype)
    label_arr = np.broadcast_to(np.asarray(label_arr, dtype=logit.data.dtype), logit.shape)
    if not np.isin(label_arr, (0.0, 1.0)).all():
        raise ContractError("bce_loss labels must be 0 or 1")
    z = logit.data
    per = np.maximum(z, 0) - z * label_arr + np.log1p(np.exp(-np.abs(z)))
    data = np.asarray(per.mean(), dtype=z.dtype)
    n = z.size

    def backward(g: np.ndarray) -> None:
        _accumulate(logit, g * (_sigmoid(z) - label_arr) / n)

    return make_op(data, (logit,), backward)


# -- neighborhood windows (used by the fusion module) ----------------------------


def pad_edge(x: Tensor, pad: int) -> Tensor:
    """Replicate the border of the last two axes ``pad`` pixels outward."""
    if x.ndim != 4:
        raise DimensionError(f"pad_edge expects (n,c,h,w), got shape {x.shape}")
    if pad == 0:
        return x
    n, c, h, w = x.shape
    data = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="edge")

    def backward(g: np.ndarray) -> None:
        gx = g[:, :, pad : pad + h, pad : pad + w].copy()
        gx[:, :, :1, :] += g[:, :, :pad, pad : pad + w].sum(axis=2, keepdims=True)
        gx[:, :, -1:, :] += g[:, :, pad + h :, pad : pad + w].sum(axis=2, keepdims=True)
        gx[:, :, :, :1] += g[:, :, pad : pad + h, :pad].sum(axis=3, keepdims=True)
        gx[:, :, :, -1:] += g[:, :, pad : pad + h, pad + w :].sum(axis=3, keepdims=True)
        gx[:, :, 0, 0] += g[:, :, :pad, :pad].sum(axis=(2, 3))
        gx[:, :, 0, -1] += g[:, :, :pad, pad + w :].sum(axis=(2, 3))
        gx[:, :, -1, 0] += g[:, :, pad + h :, :pad].sum(axis=(2, 3))
        gx[:, :, -1, -1] += g[:, :, pad + h :, pad + w :].sum(axis=(2, 3))
        _accumulate(x, gx)

    return make_op(data, (x,), backward)


def window_stack(x: Tensor, window: int) -> Tensor:
    """Stack the window*window shifted views of a padded map.

    Input (n,c,h+2p,w+2p) with p = window//2 yields (n, window^2, c, h, w);
    slot u*window+v holds the view shifted by (u-p, v-p), row-major.
    """
    if x.ndim != 4:
        raise DimensionError(f"window_stack expects (n,c,hp,wp), got shape {x.shape}")
    n, c, hp, wp = x.shape
    h = hp - window + 1
    w = wp - window + 1
    if h < 1 or w < 1:
        raise DimensionError(f"window {window} larger than padded input {x.shape}")
    data = np.empty((n, window * window, c, h, w), dtype=x.data.dtype)
    for u in range(window):
        for v in range(window):
            data[:, u * window + v] = x.data[:, :, u : u + h, v : v + w]

    def backward(g: np.ndarray) -> None:
        gx = np.zeros_like(x.data)
        for u in range(window):
            for v in range(window):
                gx[:, :, u : u + h, v : v + w] += g[:, u * window + v]
        _accumulate(x, gx)

    return make_op(data, (x,), backward)


def unfold_neighborhoods(x: Tensor, window: int) -> Tensor:
    """Edge-replicated (n, window^2, c, h, w) neighborhoods of every pixel."""
    if window % 2 == 0 or window < 1:
        raise ConfigError(f"neighborhood window must be odd and positive, got {window}")
    return window_stack(pad_edge(x, window // 2), window)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map along the last axis: x @ weight (+ bias)."""
    from .tensor import add, matmul

    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out
