"""Writes the tiny analyze fixture and its expected bound report using numpy only."""
import json
import math
import struct
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent / "tiny"


def write_mat1(path, m):
    m = np.asarray(m, dtype="<f8")
    with open(path, "wb") as f:
        f.write(b"MAT1" + struct.pack("<II", *m.shape) + m.tobytes(order="C"))


def write_lbl1(path, y, k):
    with open(path, "wb") as f:
        f.write(b"LBL1" + struct.pack("<II", len(y), k) + struct.pack("<%dI" % len(y), *y))


w1 = np.array([[0.5, -0.25, 1.0], [0.75, 0.5, -0.5], [-1.0, 0.25, 0.5], [0.25, 1.0, 0.125]])
w2 = np.array([[1.0, -0.5, 0.25, 0.5], [-0.25, 1.0, 0.5, -0.75], [0.5, 0.25, -1.0, 1.0]])
x = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, -0.5], [0.5, 0.5, 1.0],
              [-1.0, 0.5, 0.0], [0.25, -0.75, 1.0], [1.0, 1.0, 1.0]])
y = [1, 2, 3, 2, 1, 3]
delta = 0.01

HERE.mkdir(exist_ok=True)
write_mat1(HERE / "w1.mat", w1)
write_mat1(HERE / "w2.mat", w2)
write_mat1(HERE / "features.mat", x)
write_lbl1(HERE / "labels.lbl", y, 3)
(HERE / "network.json").write_text(json.dumps({"layers": [
    {"weight": "w1.mat", "nonlinearity": "relu"},
    {"weight": "w2.mat", "nonlinearity": "identity"}]}, indent=2) + "\n")

out = np.maximum(x @ w1.T, 0.0) @ w2.T
margins = [out[i, y[i] - 1] - max(out[i, j] for j in range(3) if j != y[i] - 1) for i in range(len(y))]
pos = sorted(m for m in margins if m > 0)
gamma = pos[len(pos) // 2] if len(pos) % 2 else 0.5 * (pos[len(pos) // 2 - 1] + pos[len(pos) // 2])
pred = out.argmax(axis=1) + 1
err = float(np.mean(pred != np.array(y)))
ramp = float(np.mean([0.0 if -m < -gamma else (1.0 if -m > 0 else 1.0 - m / gamma) for m in margins]))

s = [np.linalg.svd(w, compute_uv=False)[0] for w in (w1, w2)]
b = [np.linalg.norm(w, axis=1).sum() for w in (w1, w2)]
f = [np.linalg.norm(w) for w in (w1, w2)]
rho = [1.0, 1.0]
r_a = np.prod(s) * sum((bi / si) ** (2 / 3) for bi, si in zip(b, s)) ** 1.5
width = 4
n = len(y)
L = 2
r_pb = np.prod(s) * L * math.sqrt(sum(width * fi**2 / si**2 for fi, si in zip(f, s)))
B = np.linalg.norm(x)

t_const = 8 / n
t_cx = 72 * B * math.log(2 * width) * math.log(n) / (gamma * n) * r_a
t_conf = 3 * math.sqrt(math.log(1 / delta) / (2 * n))
terms = [(1 / L + b[i]) * np.prod([1 / L + s[j] for j in range(L) if j != i]) for i in range(L)]
u_cx = 144 * math.log(n) * math.log(2 * width) / (gamma * n) * (1 + B) * sum(t ** (2 / 3) for t in terms) ** 1.5
rad = (math.log(1 / delta) + math.log(2 * n / gamma) + 2 * math.log(2 + B)
       + 2 * sum(math.log(2 + L * bi) for bi in b) + 2 * sum(math.log(2 + L * si) for si in s))
u_conf = math.sqrt(9 / (2 * n)) * math.sqrt(rad)

golden = {
    "layers": [{"layer": i + 1, "spectral_norm": s[i], "norm_2_1_deviation": b[i],
                "frobenius_deviation": f[i], "lipschitz": 1.0} for i in range(L)],
    "spectral_complexity": r_a, "pac_bayes_complexity": r_pb, "product_spectral_norms": float(np.prod(s)),
    "data_norm": B, "width": width, "n": n, "depth": L, "gamma": gamma, "gamma_defaulted": True,
    "delta": delta, "error_rate": err, "ramp_risk": ramp, "degenerate": False,
    "fixed_bound": {"ramp_risk": ramp, "term_const": t_const, "term_complexity": t_cx,
                    "term_confidence": t_conf, "total": ramp + t_const + t_cx + t_conf},
    "uniform_bound": {"ramp_risk": ramp, "term_const": t_const, "term_complexity": u_cx,
                      "term_confidence": u_conf, "total": ramp + t_const + u_cx + u_conf,
                      "vacuous": bool(gamma < 2 / n)},
}
normalizer = r_a * B / n
golden_margins = {"raw": [float(m) for m in margins], "normalized": [float(m / normalizer) for m in margins]}
(HERE / "expected-bound-report.json").write_text(json.dumps(golden, indent=2, default=float) + "\n")
(HERE / "expected-margins.json").write_text(json.dumps(golden_margins, indent=2) + "\n")
