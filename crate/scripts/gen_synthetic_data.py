"""Regenerate the bundled synthetic AlNiCo-5-like datasets.

Descending branch: B(H) = J_s * S((H + H_c) / w) + mu0 * H with
S(x) = clamp(tanh(x) / tanh(X_CLOSE), -1, 1), sampled from +H_sat down to
-H_sat. The clamp closes the loop for |H| >= H_c + X_CLOSE * w, below the
saturation threshold, so both branches merge there. Recoil table: linear mu_rec(B_r') with a quadratic
droop for recoil lines close to the major curve.
"""
import math

MU0 = 4e-7 * math.pi
J_S, H_C, W, H_SAT, STEP = 1.25, 50_000.0, 10_000.0, 100_000.0, 500.0
X_CLOSE = 2.5


def branch():
    n = int(2 * H_SAT / STEP)
    rows = []
    for i in range(n + 1):
        h = H_SAT - i * STEP
        s = max(-1.0, min(1.0, math.tanh((h + H_C) / W) / math.tanh(X_CLOSE)))
        b = J_S * s + MU0 * h
        rows.append((h, b))
    return rows


def recoil_table():
    rows = []
    b = -1.5
    while b <= 1.3 + 1e-9:
        droop = 0.6 * ((b - 0.55) / 0.45) ** 2 if b > 0.55 else 0.0
        rows.append((round(b, 4), 0.955 * b + 4.69 - droop))
        b += 0.05
    return rows


if __name__ == "__main__":
    with open("crates/core/data/alnico5_synthetic.csv", "w") as f:
        f.write("H_A_per_m,B_T\n")
        for h, b in branch():
            f.write(f"{h:.1f},{b:.9f}\n")
    with open("crates/core/data/recoil_table_synthetic.csv", "w") as f:
        f.write("B_r_prime_T,mu_rec\n")
        for b, mu in recoil_table():
            f.write(f"{b:.4f},{mu:.9f}\n")
