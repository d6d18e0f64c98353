"""Numpy/pure-Python implementations of the hot kernels.

Used when the compiled extension is unavailable (or disabled via
VIEWGRAM_PURE_PYTHON=1).  Every function here is written to produce
bit-identical results to its compiled counterpart: same element order,
same per-element arithmetic, no reassociation.
"""

import numpy as np

_U64 = (1 << 64) - 1
_TO_UNIT = 2.0 ** -53  # (x >> 11) * 2^-53 -> [0, 1)


def gram_windows(feats, n, circular):
    """Stack each length-n run of rows into one flattened window row.

    feats is (V, D); the result is (V, n*D) in circular mode (wraparound
    indexing) and (V - n + 1, n*D) otherwise.
    """
    v = feats.shape[0]
    num = v if circular else v - n + 1
    idx = np.arange(num)[:, None] + np.arange(n)[None, :]
    if circular:
        idx %= v
    return np.ascontiguousarray(feats[idx].reshape(num, n * feats.shape[1]))


def gram_windows_backward(dwin, n, num_views, circular):
    """Scatter-add window gradients back onto view rows.

    Accumulation runs in ascending (window, offset) order; the compiled
    kernel uses the same order so both backends agree bitwise.
    """
    num = dwin.shape[0]
    d = dwin.shape[1] // n
    out = np.zeros((num_views, d), dtype=dwin.dtype)
    idx = np.arange(num)[:, None] + np.arange(n)[None, :]
    if circular:
        idx %= num_views
    np.add.at(out, idx, dwin.reshape(num, n, d))
    return out


def sgd_update(param, grad, vel, lr, momentum, weight_decay):
    """Fused momentum-SGD update, in place on param and vel (1-d views)."""
    dt = param.dtype.type
    gp = grad + dt(weight_decay) * param
    vel *= dt(momentum)
    vel += gp
    param -= dt(lr) * vel


def clip_inplace(grad, bound):
    """Clamp every element of grad to [-bound, bound], in place."""
    np.clip(grad, -bound, bound, out=grad)


def fill_uniform(state, out):
    """Fill out with uniform [0, 1) doubles from a xoshiro256** stream.

    state is a 4-element uint64 array, advanced in place.  The stream is
    the reference xoshiro256** sequence; unit doubles are formed as
    (x >> 11) * 2^-53, which is exact.
    """
    s0, s1, s2, s3 = (int(w) for w in state)
    flat = out.reshape(-1)
    for i in range(flat.shape[0]):
        r = ((((s1 * 5) & _U64) << 7 | ((s1 * 5) & _U64) >> 57) & _U64) * 9 & _U64
        t = (s1 << 17) & _U64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = (s3 << 45 | s3 >> 19) & _U64
        flat[i] = (r >> 11) * _TO_UNIT
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3
