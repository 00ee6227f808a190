"""Independent loop-level reference implementations used only by tests.

Nothing here imports from the production package: every function is a
literal transcription of the underlying formula with explicit Python
loops and no numerical shortcuts. Intended for small instances only.
"""

import math


def oracle_softmax_row(row):
    exps = [math.exp(v) for v in row]
    s = sum(exps)
    return [e / s for e in exps]


def oracle_attention(q, k, v):
    """Weighted sum of value rows by softmax of scaled query-key scores.

    q: L x d_k, k: L x d_k, v: L x d_v, all plain lists of lists.
    """
    d_k = len(k[0])
    out = []
    for qi in q:
        scores = []
        for kj in k:
            dot = sum(a * b for a, b in zip(qi, kj))
            scores.append(dot / math.sqrt(d_k))
        weights = oracle_softmax_row(scores)
        row = [0.0] * len(v[0])
        for w, vj in zip(weights, v):
            for c in range(len(vj)):
                row[c] += w * vj[c]
        out.append(row)
    return out


def _sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def _vecmat(x, w):
    # x: list of n, w: n x m -> list of m
    m = len(w[0])
    out = [0.0] * m
    for i, xi in enumerate(x):
        for j in range(m):
            out[j] += xi * w[i][j]
    return out


def _vadd(*vs):
    return [sum(parts) for parts in zip(*vs)]


def oracle_lstm_step(x, h_prev, c_prev, p):
    """One gated-cell update with cell-state feedback into the gates.

    p is a dict with matrices w_xi, w_hi, w_ci, w_xf, w_hf, w_cf, w_xc,
    w_hc, w_xo, w_ho, w_co (lists of lists) and vectors b_i, b_f, b_c,
    b_o. The output gate reads the freshly updated cell state.
    """
    i_pre = _vadd(_vecmat(x, p["w_xi"]), _vecmat(h_prev, p["w_hi"]),
                  _vecmat(c_prev, p["w_ci"]), p["b_i"])
    i_t = [_sigmoid(z) for z in i_pre]
    f_pre = _vadd(_vecmat(x, p["w_xf"]), _vecmat(h_prev, p["w_hf"]),
                  _vecmat(c_prev, p["w_cf"]), p["b_f"])
    f_t = [_sigmoid(z) for z in f_pre]
    cand_pre = _vadd(_vecmat(x, p["w_xc"]), _vecmat(h_prev, p["w_hc"]), p["b_c"])
    cand = [math.tanh(z) for z in cand_pre]
    c_t = [f * cp + i * cd for f, cp, i, cd in zip(f_t, c_prev, i_t, cand)]
    o_pre = _vadd(_vecmat(x, p["w_xo"]), _vecmat(h_prev, p["w_ho"]),
                  _vecmat(c_t, p["w_co"]), p["b_o"])
    o_t = [_sigmoid(z) for z in o_pre]
    h_t = [o * math.tanh(c) for o, c in zip(o_t, c_t)]
    return h_t, c_t


def oracle_lstm_sequence(xs, h0, c0, p):
    h, c = list(h0), list(c0)
    hs = []
    for x in xs:
        h, c = oracle_lstm_step(x, h, c, p)
        hs.append(h)
    return hs, h, c


def oracle_pso_trace(objective, x0, v0, r1_stream, r2_stream,
                     w_max, w_min, t_max, c1, c2, v_max):
    """Full swarm trajectory with externally supplied random streams.

    x0, v0: n x D initial positions/velocities in [0,1] coordinates.
    r1_stream, r2_stream: per (iteration, particle) lists of D uniforms.
    Returns the per-evaluation history [(iteration, particle, fitness)],
    the gbest fitness after each iteration, and final gbest position.
    """
    n = len(x0)
    d = len(x0[0])
    xs = [list(p) for p in x0]
    vs = [list(p) for p in v0]
    pbest_x = [list(p) for p in x0]
    pbest_f = [objective(p) for p in xs]
    history = [(0, i, pbest_f[i]) for i in range(n)]
    g = min(range(n), key=lambda i: pbest_f[i])
    gbest_x, gbest_f = list(pbest_x[g]), pbest_f[g]
    gbest_per_iter = [gbest_f]
    for t in range(t_max):
        w = w_max - ((w_max - w_min) / t_max) * t
        fitnesses = []
        for i in range(n):
            r1 = r1_stream[t * n + i]
            r2 = r2_stream[t * n + i]
            for j in range(d):
                vj = (w * vs[i][j]
                      + c1 * r1[j] * (pbest_x[i][j] - xs[i][j])
                      + c2 * r2[j] * (gbest_x[j] - xs[i][j]))
                vj = max(-v_max, min(v_max, vj))
                xj = xs[i][j] + vj
                while xj < 0.0 or xj > 1.0:
                    if xj < 0.0:
                        xj = -xj
                        vj = -vj
                    if xj > 1.0:
                        xj = 2.0 - xj
                        vj = -vj
                vs[i][j] = vj
                xs[i][j] = xj
            fitnesses.append(objective(xs[i]))
        for i in range(n):
            f = fitnesses[i]
            history.append((t + 1, i, f))
            if f < pbest_f[i]:
                pbest_f[i] = f
                pbest_x[i] = list(xs[i])
            if f < gbest_f:
                gbest_f = f
                gbest_x = list(xs[i])
        gbest_per_iter.append(gbest_f)
    return history, gbest_per_iter, gbest_x, gbest_f


def oracle_mae(y, y_hat):
    return sum(abs(a - b) for a, b in zip(y, y_hat)) / len(y)


def oracle_rmse(y, y_hat):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(y, y_hat)) / len(y))


def oracle_smape(y, y_hat):
    total = 0.0
    for a, b in zip(y, y_hat):
        denom = abs(a) + abs(b)
        if denom > 0.0:
            total += 2.0 * abs(a - b) / denom
    return 100.0 * total / len(y)


def oracle_r_squared(y, y_hat):
    mean = sum(y) / len(y)
    ss_res = sum((a - b) ** 2 for a, b in zip(y, y_hat))
    ss_tot = sum((a - mean) ** 2 for a in y)
    return 1.0 - ss_res / ss_tot


def oracle_metrics(y, y_hat):
    return {
        "mae": oracle_mae(y, y_hat),
        "rmse": oracle_rmse(y, y_hat),
        "smape": oracle_smape(y, y_hat),
        "r2": oracle_r_squared(y, y_hat),
    }


def oracle_quantile(values, q):
    """Linear interpolation between order statistics (the type-7 rule)."""
    xs = sorted(values)
    if len(xs) == 1:
        return xs[0]
    pos = q * (len(xs) - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(xs) - 1)
    frac = pos - lo
    return xs[lo] * (1.0 - frac) + xs[hi] * frac


def oracle_mean_std(values):
    """Population mean and standard deviation."""
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)
