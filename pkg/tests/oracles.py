"""Independent reference implementations used as test oracles.

Everything here is deliberately written with explicit loops and plain
formulas, separate from the library's vectorized paths, so agreement is
meaningful.
"""

import itertools
import math

import numpy as np

from ttrnn.neural import TTLinearLayer, TTRNNModel, cross_entropy_loss, forward_sequence
from ttrnn.tensor import DenseTensor
from ttrnn.ttformat import TTMatrix


def contract_bruteforce(a: DenseTensor, n: int, b: DenseTensor, m: int) -> np.ndarray:
    """Sum over the shared mode with explicit loops over every index tuple."""
    a_nd = a.to_ndarray()
    b_nd = b.to_ndarray()
    out_shape = tuple(d for k, d in enumerate(a.shape) if k != n - 1) + tuple(
        d for k, d in enumerate(b.shape) if k != m - 1
    )
    out = np.zeros(out_shape)
    ka = a.order - 1
    for idx in itertools.product(*map(range, out_shape)):
        ia, ib = idx[:ka], idx[ka:]
        total = 0.0
        for s in range(a.shape[n - 1]):
            full_a = ia[: n - 1] + (s,) + ia[n - 1 :]
            full_b = ib[: m - 1] + (s,) + ib[m - 1 :]
            total += a_nd[full_a] * b_nd[full_b]
        out[idx] = total
    return out


def le_offset_1based(shape, index) -> int:
    """The documented fastest-first offset formula, 1-based indices."""
    off = 0
    stride = 1
    for i, d in zip(index, shape):
        off += (i - 1) * stride
        stride *= d
    return off


def mpo_entry(cores, in_idx, out_idx) -> float:
    """One entry of the tensorized matrix: product of core slices."""
    acc = cores[0][:, in_idx[0], out_idx[0], :]
    for k in range(1, len(cores)):
        acc = acc @ cores[k][:, in_idx[k], out_idx[k], :]
    return float(acc[0, 0])


def dense_layer_apply(layer: TTLinearLayer, x: DenseTensor) -> np.ndarray:
    """Reference TT-layer output via the fully materialized matrix."""
    from ttrnn.ttformat import mpo_to_matrix

    w = mpo_to_matrix(layer.weights).to_ndarray()
    y_flat = w @ x.data + layer.bias.data
    return y_flat.reshape(layer.out_dims, order="F")


def dense_cell_apply(model: TTRNNModel, x: DenseTensor, h_prev: np.ndarray) -> np.ndarray:
    """Reference recurrence step through the dense equivalent input matrix."""
    from ttrnn.ttformat import mpo_to_matrix

    w = mpo_to_matrix(model.input_layer.weights).to_ndarray()
    pre = model.feedback @ h_prev + w @ x.data + model.input_layer.bias.data
    return np.tanh(pre)


def rebuild_model(model: TTRNNModel, arrays) -> TTRNNModel:
    """Model from a flat list of parameter arrays, ordered like named_params()."""
    n = len(model.cores)
    return TTRNNModel(
        input_layer=TTLinearLayer(
            weights=TTMatrix(list(arrays[:n])),
            bias=DenseTensor(model.hidden_dims, arrays[n + 1]),
        ),
        feedback=arrays[n],
        head_weights=arrays[n + 2],
        head_bias=arrays[n + 3],
    )


def batch_loss(model: TTRNNModel, batch) -> float:
    total = 0.0
    for xs, label in batch:
        probs, _ = forward_sequence(model, xs)
        total += cross_entropy_loss(probs, label)
    return total / len(batch)


def finite_difference_check(model: TTRNNModel, batch, grads, step=1e-5,
                            rel_tol=1e-4, grad_floor=1e-8) -> float:
    """Central finite differences over every parameter entry.

    Returns the worst relative error among entries whose analytic gradient
    exceeds ``grad_floor``; asserts it stays within ``rel_tol``.
    """
    analytic = list(grads.cores) + [
        grads.feedback,
        grads.bias.ravel(order="F"),
        grads.head_weights,
        grads.head_bias,
    ]
    worst = 0.0
    base = [c.copy() for c in model.cores] + [
        model.feedback.copy(),
        model.input_layer.bias.data.copy(),
        model.head_weights.copy(),
        model.head_bias.copy(),
    ]
    for pi in range(len(base)):
        flat = base[pi].ravel()
        g = np.asarray(analytic[pi]).ravel()
        for i in range(flat.size):
            if abs(g[i]) <= grad_floor:
                continue
            orig = flat[i]
            flat[i] = orig + step
            up = batch_loss(rebuild_model(model, base), batch)
            flat[i] = orig - step
            down = batch_loss(rebuild_model(model, base), batch)
            flat[i] = orig
            fd = (up - down) / (2.0 * step)
            rel = abs(g[i] - fd) / abs(g[i])
            worst = max(worst, rel)
            assert rel <= rel_tol, (
                f"param block {pi} entry {i}: analytic {g[i]:.6e} vs "
                f"finite-difference {fd:.6e} (rel {rel:.2e})"
            )
    return worst


# --- scalar-loop feature formulas ---------------------------------------------


def feature_vector_scalar(close, high, low, volume, open_interest, t) -> list:
    """The 20 features of one instrument at day t, each from first principles."""
    out = [math.log(close[t]) - math.log(close[t - 1])]

    def logdiff(s):
        return math.log(close[s]) - math.log(close[s - 1])

    for w in (5, 10, 22):
        window = [logdiff(s) for s in range(t - w + 1, t + 1)]
        mu = sum(window) / w
        dev = [v - mu for v in window]
        m2 = sum(d * d for d in dev) / w
        m3 = sum(d**3 for d in dev) / w
        m4 = sum(d**4 for d in dev) / w
        scale = max(abs(v) for v in window)
        if m2 <= (1e-12 * max(scale, 1e-300)) ** 2:
            out.extend([mu, 0.0, 0.0, 0.0])
        else:
            out.extend([mu, math.sqrt(m2), m3 / m2**1.5, m4 / m2**2])
    for w in (5, 10, 22):
        window = [close[s] for s in range(t - w + 1, t + 1)]
        lo, hi = min(window), max(window)
        out.append(0.5 if hi == lo else (close[t] - lo) / (hi - lo))
    span = high[t] - low[t]
    out.append(0.5 if span == 0 else (close[t] - low[t]) / span)
    out.append(span / low[t])
    out.append(volume[t])
    out.append(open_interest[t])
    return out
