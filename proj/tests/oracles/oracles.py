"""Independent reference values frozen into the C++ tests.

Run with python3; needs numpy, scipy and cvxpy.
"""
import numpy as np
from scipy import optimize, special, stats
import cvxpy as cp

BS = np.array([(-400, -350, 10), (-450, 400, 10), (350, 250, 10)], float)
USERS = np.array([(-60, -110, 12), (150, -70, 29), (-350, 30, 22), (-140, -60, 26),
                  (-250, 130, 15), (-280, -210, 17), (-220, 260, 32)], float)
BETA = 10 ** (-3.889)
N0 = 10 ** (-18.7)
B, BPOS = 1e6, 1.8e5
PSI, NLOS = 5.8e-16, 6e-18
IOTA_G, IOTA_A = 2.3, 2.0


def factor(omega, eps=0.1):
    lam = 2 * (1 - omega) / omega
    q = stats.chi2.ppf(eps, 2) if lam == 0 else stats.ncx2.ppf(eps, 2, lam)
    return omega / 2 * q


def ncx2_mc(p, lam, n=10_000_000, seed=7):
    rng = np.random.default_rng(seed)
    x = (rng.standard_normal(n) + np.sqrt(lam)) ** 2 + rng.standard_normal(n) ** 2
    return np.quantile(x, p)


def gain(d, kind):
    f, iota = (factor(1.0), IOTA_G) if kind == "g" else (factor(0.2), IOTA_A)
    return f * BETA / (B * N0 * d ** iota)


def toa_var(anchor, user, p, kind):
    d = np.linalg.norm(anchor - user)
    iota = IOTA_G if kind == "bs" else IOTA_A
    v = PSI * BPOS * N0 * d ** iota / (BETA * p)
    return v + (NLOS if kind == "bs" else 0.0)


def unit(a, w):
    v = a - w
    return v / np.linalg.norm(v)


def jac(u, w):
    q = [unit(b, w) for b in BS]
    qu = unit(u, w)
    return np.array([q[1] - q[0], q[2] - q[0], qu - q[0]])


def bounds(k, p=0.15):
    w = USERS[k]
    q = [unit(b, w) for b in BS]
    alpha = np.cross(q[1] - q[0], q[2] - q[0])
    c1, c2, c3 = np.linalg.norm(alpha), alpha @ q[0], np.linalg.norm(alpha[:2])
    s = np.sign(np.linalg.det(jac(np.array([w[0], w[1], 300.0]), w)))
    d1 = np.prod([toa_var(b, w, p, "bs") for b in BS])
    lo, hi = max(c3 - s * c2, 0), c1 - s * c2
    return lo * lo / d1, hi * hi / d1, int(s)


def bapo_reference(u, pos_power, pmax=1.0, rth=2.5e6):
    K = len(USERS)
    h = np.zeros((4, K))
    for k, w in enumerate(USERS):
        for j in range(3):
            h[j, k] = gain(np.linalg.norm(BS[j] - w), "g")
        h[3, k] = gain(np.linalg.norm(u - w), "a")
    P = cp.Variable((4, K), nonneg=True)
    S = cp.Variable((4, K), nonneg=True)
    # s log2(1 + h p / s) = -rel_entr(s, s + h p) / ln 2
    rates = -cp.rel_entr(S, S + cp.multiply(h, P)) * (B / np.log(2))
    user = cp.sum(rates, axis=0)
    cons = [cp.sum(P, axis=1) == pmax - pos_power, cp.sum(S, axis=1) == 1, user >= rth]
    prob = cp.Problem(cp.Maximize(cp.sum(user)), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


if __name__ == "__main__":
    print("ncx2.ppf(0.1,2,8)      ", repr(stats.ncx2.ppf(0.1, 2, 8)))
    print("ncx2 monte carlo       ", ncx2_mc(0.1, 8.0))
    print("factor G2G, A2G        ", repr(factor(1.0)), repr(factor(0.2)))
    print("lambert W0(1)          ", repr(special.lambertw(1).real))
    t = optimize.brentq(lambda t: np.log1p(t) - t / (1 + t) - 1.0, 1e-9, 1e3, xtol=1e-15)
    print("kkt t for c=1          ", repr(t))
    print("A2G rate s=1 p=1 d=100 ", repr(B * np.log2(1 + gain(100.0, "a"))))
    print("toa var BS1 user1 0.15 ", repr(toa_var(BS[0], USERS[0], 0.15, "bs")))
    H = jac(np.array([0.0, 0.0, 300.0]), USERS[0])
    print("det H user1 u=(0,0,300)", repr(np.linalg.det(H)))
    for k in range(len(USERS)):
        lb, ub, s = bounds(k)
        print(f"bounds user{k}           ", repr(lb), repr(ub), s, repr(lb + 0.7 * (ub - lb)))
    # CRLB for target (0,0,0), UAV fourth anchor at (100,-50,100), all anchors 1 W.
    w = np.array([0.0, 0.0, 0.0])
    a = np.array([100.0, -50.0, 100.0])
    v = [toa_var(b, w, 1.0, "bs") for b in BS]
    vu = toa_var(a, w, 1.0, "uav")
    C = np.full((3, 3), v[0]) + np.diag([v[1], v[2], vu])
    H = jac(a, w)
    F = H.T @ np.linalg.inv(C) @ H
    cov = 9e16 * np.linalg.inv(F)
    print("crlb h, v              ", repr(np.sqrt(cov[0, 0] + cov[1, 1])), repr(np.sqrt(cov[2, 2])))
    print("softmax (1e6,2e6) T=.95e6", repr(1 / (1 + np.exp(1e6 / 0.95e6))))
    print("bapo reference         ",
          repr(bapo_reference(np.array([-160.0, 0.0, 300.0]), np.array([0.15, 0.15, 0.15, 0.2]))))
