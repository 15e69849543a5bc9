"""Brute-force graph-guided attention on a 3-token toy input.

Plain-Python evaluation of one SAGE (mean, ReLU) update followed by
2-head scaled dot-product attention, for the three wirings where the
graph states feed Q only, K and V only, or Q, K and V. Prints head
weights and the projected output with 17 significant digits.
"""
import math

X = [[0.5, -1.0], [1.5, 0.25], [-0.75, 2.0]]
# in-neighbors, self loops included: 0 <- {0, 1}, 1 <- {0, 1, 2}, 2 <- {1, 2}
IN = {0: [0, 1], 1: [0, 1, 2], 2: [1, 2]}
W_SELF = [[0.8, -0.2], [0.1, 0.6]]
W_NEIGH = [[0.3, 0.4], [-0.5, 0.2]]
BIAS = [0.05, -0.1]
WQ = [[0.7, -0.3], [0.2, 0.9]]
WK = [[-0.4, 0.5], [0.6, 0.1]]
WV = [[0.3, 0.8], [-0.7, 0.4]]
WO = [[1.0, 0.5], [-0.5, 1.0]]
HEADS = 2


def matmul(a, b):
    return [[sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]


def graph_states(x):
    agg = [[sum(x[s][f] for s in IN[i]) / len(IN[i]) for f in range(2)] for i in range(3)]
    hs, ha = matmul(x, W_SELF), matmul(agg, W_NEIGH)
    return [[max(0.0, hs[i][f] + ha[i][f] + BIAS[f]) for f in range(2)] for i in range(3)]


def attention(q_in, kv_in):
    q, k, v = matmul(q_in, WQ), matmul(kv_in, WK), matmul(kv_in, WV)
    dk = 2 // HEADS
    weights, concat = [], [[0.0] * 2 for _ in range(3)]
    for h in range(HEADS):
        cols = range(h * dk, (h + 1) * dk)
        a = []
        for i in range(3):
            s = [sum(q[i][c] * k[j][c] for c in cols) / math.sqrt(dk) for j in range(3)]
            m = max(s)
            e = [math.exp(t - m) for t in s]
            z = sum(e)
            a.append([t / z for t in e])
        weights.append(a)
        for i in range(3):
            for c in cols:
                concat[i][c] = sum(a[i][j] * v[j][c] for j in range(3))
    return weights, matmul(concat, WO)


def main():
    g = graph_states(X)
    for name, q_in, kv_in in (("grasame", g, X), ("var1", X, g), ("var2", g, g)):
        weights, out = attention(q_in, kv_in)
        print(name)
        for h, a in enumerate(weights):
            print(f"  head {h}:", ", ".join(f"{v:.17g}" for row in a for v in row))
        print("  out:", ", ".join(f"{v:.17g}" for row in out for v in row))


if __name__ == "__main__":
    main()
