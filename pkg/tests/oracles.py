"""Independent scalar-loop references used by the oracle and acceptance tests.

Everything here is plain Python over nested lists so it shares no code path
with the vectorized implementations under test.
"""

import math


def sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


def matmul(a, b):
    m, k, n = len(a), len(b), len(b[0])
    out = [[0.0] * n for _ in range(m)]
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return out


def lstm_cell(x, h_prev, c_prev, W, R, b, units):
    """One LSTM step; W, R, b hold gate blocks [input, forget, output, candidate]."""
    f_in = len(x[0])
    h_out, c_out = [], []
    for r in range(len(x)):
        hs, cs = [], []
        for j in range(units):
            pre = []
            for g in range(4):
                col = g * units + j
                s = b[0][col]
                for k in range(f_in):
                    s += x[r][k] * W[k][col]
                for k in range(units):
                    s += h_prev[r][k] * R[k][col]
                pre.append(s)
            i, f, o = sigmoid(pre[0]), sigmoid(pre[1]), sigmoid(pre[2])
            g = math.tanh(pre[3])
            c = f * c_prev[r][j] + i * g
            cs.append(c)
            hs.append(o * math.tanh(c))
        h_out.append(hs)
        c_out.append(cs)
    return h_out, c_out


def adam(theta, grad_steps, lr, beta1, beta2, eps):
    """Run bias-corrected Adam on a flat list of scalars."""
    theta = list(theta)
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    for t, grads in enumerate(grad_steps, start=1):
        for j, g in enumerate(grads):
            m[j] = beta1 * m[j] + (1 - beta1) * g
            v[j] = beta2 * v[j] + (1 - beta2) * g * g
            m_hat = m[j] / (1 - beta1 ** t)
            v_hat = v[j] / (1 - beta2 ** t)
            theta[j] -= lr * m_hat / (math.sqrt(v_hat) + eps)
    return theta
