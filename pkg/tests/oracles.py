"""Independent reference implementations used only by the tests.

They are written in plain Python (ints, Fractions, loops) from the scheme's
definition rather than from the package code, so agreement is meaningful.
"""

from fractions import Fraction

import numpy as np


def half_away(fr: Fraction) -> int:
    """Round a Fraction to the nearest integer, ties away from zero."""
    sign = -1 if fr < 0 else 1
    mag = abs(fr)
    q, r = divmod(mag.numerator, mag.denominator)
    if 2 * r >= mag.denominator:
        q += 1
    return sign * q


def fixed_point(m: float):
    """``m0, shift`` with ``m0 / 2**shift ~ m`` and ``2**30 <= m0 <= 2**31``."""
    exact = Fraction(m)
    shift = 0
    while exact * 2**shift < 2**30:
        shift += 1
    while exact * 2**shift >= 2**31:
        shift -= 1
    return half_away(exact * 2**shift), shift


def int_layer(codes, w_rows, bias, in_zp, m0, shift, out_zp, relu):
    out = []
    for row, b in zip(w_rows, bias):
        acc = b
        for q, w in zip(codes, row):
            acc += (q - in_zp) * w
        acc = max(-(2**31), min(2**31 - 1, acc))
        y = out_zp + half_away(Fraction(acc * m0, 2**shift))
        lo = out_zp if relu else 0
        out.append(max(lo, min(255, y)))
    return out


def int_codes(qmodel, x):
    """Output codes of every layer for one input vector, all integer after the input."""
    first = qmodel.layers[0]
    s_in = float(first.input_scale)
    codes = [max(0, min(255, half_away(Fraction(float(v) / s_in)) + first.input_zp)) for v in x]
    n = len(qmodel.layers)
    out = []
    for i, layer in enumerate(qmodel.layers):
        if i + 1 < n:
            out_scale, out_zp = qmodel.layers[i + 1].input_scale, qmodel.layers[i + 1].input_zp
        else:
            out_scale, out_zp = qmodel.output_scale, qmodel.output_zp
        m = float(layer.input_scale) * float(layer.weight_scale) / float(out_scale)
        m0, shift = fixed_point(m)
        codes = int_layer(
            codes,
            layer.weight_q.tolist(),
            layer.bias_q.tolist(),
            layer.input_zp,
            m0,
            shift,
            out_zp,
            relu=i + 1 < n,
        )
        out.append(codes)
    return out


def int_forward(qmodel, x):
    """Dequantised output for one input vector."""
    return (int_codes(qmodel, x)[-1][0] - qmodel.output_zp) * float(qmodel.output_scale)


def naive_forward(weights, biases, x):
    """Float forward pass with explicit loops, ReLU on hidden layers."""
    a = [float(v) for v in x]
    n = len(weights)
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = [sum(float(wij) * aj for wij, aj in zip(row, a)) + float(bi) for row, bi in zip(w, b)]
        a = [max(0.0, v) for v in z] if i + 1 < n else z
    return a[0]


def brute_peaks(x, prominence):
    """Local maxima (leftmost sample of a plateau) whose prominence over the
    whole signal reaches ``prominence``; O(n^2) loops."""
    n = len(x)
    cands = []
    i = 1
    while i < n - 1:
        if x[i - 1] < x[i]:
            j = i
            while j + 1 < n and x[j + 1] == x[i]:
                j += 1
            if j + 1 < n and x[j + 1] < x[i]:
                cands.append(i)
            i = j + 1
        else:
            i += 1
    keep = []
    for p in cands:
        left_min = x[p]
        k = p - 1
        while k >= 0 and x[k] <= x[p]:
            left_min = min(left_min, x[k])
            k -= 1
        right_min = x[p]
        k = p + 1
        while k < n and x[k] <= x[p]:
            right_min = min(right_min, x[k])
            k += 1
        if x[p] - max(left_min, right_min) >= prominence:
            keep.append(p)
    return keep


def energy_trapz(t, p):
    return sum((t[k + 1] - t[k]) * (p[k + 1] + p[k]) / 2 for k in range(len(t) - 1))


def dominant_frequency(x, fs):
    """Frequency of the largest non-DC bin of the real spectrum."""
    x = np.asarray(x, dtype=float)
    mag = np.abs(np.fft.rfft(x - x.mean()))
    mag[0] = 0.0
    return np.fft.rfftfreq(x.size, 1.0 / fs)[int(np.argmax(mag))]


def held_mean(start, end, ticks, values):
    """Mean of a sample-and-hold signal over [start, end], exact in rationals.

    Each value holds until the next tick; the first value also covers any
    time before the first tick and the last value any time after the last.
    """
    start, end = Fraction(start), Fraction(end)
    cuts = [Fraction(t) for t in ticks[1:]]
    lo = [None] + cuts
    hi = cuts + [None]
    total = Fraction(0)
    for a, b, v in zip(lo, hi, values):
        a = start if a is None else max(a, start)
        b = end if b is None else min(b, end)
        if b > a:
            total += (b - a) * Fraction(v)
    return total / (end - start)


# -- finite-difference gradient oracle -------------------------------------


def random_net(dims, rng):
    ws = [rng.normal(0, 1 / np.sqrt(a), (b, a)) for a, b in zip(dims[:-1], dims[1:])]
    bs = [rng.normal(0, 0.3, b) for b in dims[1:]]
    return ws, bs


def loss_of(ws, bs, x, y):
    a = x
    for i, (w, b) in enumerate(zip(ws, bs)):
        a = a @ w.T + b
        if i < len(ws) - 1:
            a = np.maximum(a, 0)
    return np.mean((a[:, 0] - y) ** 2)


def numeric_gradients(ws, bs, x, y, h=1e-4):
    out = []
    for group in (ws, bs):
        grads = []
        for p in group:
            g = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = loss_of(ws, bs, x, y)
                p[idx] = old - h
                down = loss_of(ws, bs, x, y)
                p[idx] = old
                g[idx] = (up - down) / (2 * h)
            grads.append(g)
        out.append(grads)
    return out


def relative_error(a, b):
    a = np.concatenate([g.ravel() for g in a])
    b = np.concatenate([g.ravel() for g in b])
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def away_from_kinks(ws, bs, rng, n, margin=1e-3):
    # A central difference across a ReLU kink is not a derivative, so draw
    # inputs whose hidden pre-activations all stay clear of zero.
    rows = []
    while len(rows) < n:
        h = x = rng.normal(size=ws[0].shape[1])
        ok = True
        for w, b in zip(ws[:-1], bs[:-1]):
            z = w @ h + b
            ok &= bool(np.all(np.abs(z) > margin))
            h = np.maximum(z, 0.0)
        if ok:
            rows.append(x)
    return np.array(rows)
