"""3x3 same-padded convolution on NHWC arrays, forward and backward.

Kernels use the ``[out_ch, in_ch, 3, 3]`` layout.  The im2col column order is
``(kh, kw, in_ch)``, which keeps every copied patch slice contiguous in
memory; kernels are permuted to match.
"""
import numpy as np

K = 3


def im2col(x):
    """``(B, H, W, C)`` -> ``(B*H*W, 9*C)`` patches with zero padding."""
    b, h, w, c = x.shape
    xp = np.zeros((b, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1:-1, 1:-1, :] = x
    cols = np.empty((b, h, w, K * K, c), dtype=x.dtype)
    for i in range(K):
        for j in range(K):
            cols[:, :, :, i * K + j, :] = xp[:, i:i + h, j:j + w, :]
    return cols.reshape(b * h * w, K * K * c)


def col2im(gcols, shape):
    """Adjoint of :func:`im2col`: scatter-add patch gradients back to the input."""
    b, h, w, c = shape
    g = gcols.reshape(b, h, w, K * K, c)
    out = np.zeros((b, h + 2, w + 2, c), dtype=gcols.dtype)
    for i in range(K):
        for j in range(K):
            out[:, i:i + h, j:j + w, :] += g[:, :, :, i * K + j, :]
    return out[:, 1:-1, 1:-1, :]


def kernel_matrix(weight):
    """``[out, in, 3, 3]`` -> ``(out, 9*in)`` in im2col column order."""
    return weight.transpose(0, 2, 3, 1).reshape(weight.shape[0], -1)


def conv_forward(x, weight, bias):
    """Returns the output ``(B, H, W, out)`` and the patch matrix for backward."""
    b, h, w, _ = x.shape
    cols = im2col(x)
    out = cols @ kernel_matrix(weight).T
    out += bias
    return out.reshape(b, h, w, -1), cols


def conv_backward(gout, cols, weight, x_shape, need_input_grad=True):
    g = gout.reshape(-1, gout.shape[-1])
    cout, cin = weight.shape[:2]
    gw = (g.T @ cols).reshape(cout, K, K, cin).transpose(0, 3, 1, 2)
    gb = g.sum(axis=0)
    gx = col2im(g @ kernel_matrix(weight), x_shape) if need_input_grad else None
    return gx, np.ascontiguousarray(gw), gb
