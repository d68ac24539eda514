"""Independent high-precision oracle values, frozen into ``oracle_values.json``.

Uses only mpmath and explicit formulas for the cosine loop
(``q0 = (2/pi) arctan(e^s)``, ``p0 = (1/pi) sech(s)`` for unit saddle rate);
nothing from the package is imported. Re-run with::

    python3 tests/oracles/generate_oracles.py
"""
import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 30
PI = mp.pi
TWO_PI = 2 * PI


def q0(s):
    return 2 / PI * mp.atan(mp.e**s)


def p0(s):
    return mp.sech(s) / PI


def integral(f):
    return mp.quad(f, [-mp.inf, -10, -3, 0, 3, 10, mp.inf])


def reference_potential(tau, I, phi, t):
    # -int [h(sep) - h(rest)], h = cos(2 pi q)(cos 2 pi phi + cos 2 pi t)
    def f(s):
        ang = mp.cos(TWO_PI * (phi + I * s)) + mp.cos(TWO_PI * (t + s))
        return -(mp.cos(TWO_PI * q0(tau + s)) - 1) * ang

    return integral(f)


def reference_vector(tau, I, phi, t):
    # +int [X1 P(sep) - X1 P(rest)], X1 P = p * (-dh/dq)
    def f(s):
        ang = mp.cos(TWO_PI * (phi + I * s)) + mp.cos(TWO_PI * (t + s))
        dhdq = -TWO_PI * mp.sin(TWO_PI * q0(tau + s)) * ang
        return p0(tau + s) * (-dhdq)

    return integral(f)


def dissipative_vector(tau, t, gamma=0.5):
    def f(s):
        p = p0(tau + s)
        xp = -gamma * p + TWO_PI * mp.sin(TWO_PI * q0(tau + s)) * mp.cos(TWO_PI * (t + s))
        return p * xp

    return integral(f)


def closed_form(tau, I, phi, t):
    x = PI**2 * I
    k1 = 2 * x / mp.sinh(x) if x != 0 else mp.mpf(2)
    k2 = 2 * PI**2 / mp.sinh(PI**2)
    return 2 * (mp.cos(TWO_PI * (phi - tau * I)) * k1 + mp.cos(TWO_PI * (t - tau)) * k2)


def transit_time(A, B, qa, qb):
    # time along the loop p = sqrt(-2V) from qa to qb, V = A(cos 2pi q - 1) + B(cos 4pi q - 1)
    def V(q):
        return A * (mp.cos(TWO_PI * q) - 1) + B * (mp.cos(2 * TWO_PI * q) - 1)

    return mp.quad(lambda q: 1 / mp.sqrt(-2 * V(q)), [qa, qb])


def main():
    points = [
        (0.0, 0.2, 0.0, 0.0),
        (0.3, 0.2, 0.05, 0.0),
        (-0.7, 0.5, 0.3, 0.8),
        (1.2, -0.3, 0.9, 0.25),
        (0.1, 0.0, 0.45, 0.6),
    ]
    ref = []
    for tau, I, phi, t in points:
        ref.append({
            "tau": tau, "I": I, "phi": phi, "t": t,
            "potential": float(reference_potential(*map(mp.mpf, (tau, I, phi, t)))),
            "vector": float(reference_vector(*map(mp.mpf, (tau, I, phi, t)))),
            "closed_form": float(closed_form(*map(mp.mpf, (tau, I, phi, t)))),
        })
    diss = [{"tau": tau, "t": t, "vector": float(dissipative_vector(mp.mpf(tau), mp.mpf(t)))}
            for tau, t in [(0.0, 0.0), (0.4, 0.3), (-1.1, 0.7)]]

    # critical tau of the closed form at I=0.2, phi=0, t=0.25 (root near 0)
    dM = lambda tau: mp.diff(lambda x: closed_form(x, mp.mpf("0.2"), 0, mp.mpf("0.25")), tau)
    tau_star = mp.findroot(dM, mp.mpf("0.0"))

    # reduced potential M*(I=0.2, theta) and its theta-derivative (clock at t=0)
    def mstar(theta, seed):
        ts = mp.findroot(lambda x: mp.diff(lambda y: closed_form(y, mp.mpf("0.2"), theta, 0), x), seed)
        return closed_form(ts, mp.mpf("0.2"), theta, 0), ts

    reduced = []
    for theta, seed in [(mp.mpf("-0.05"), mp.mpf("-0.25")), (mp.mpf("0.3"), mp.mpf("1.5"))]:
        val, ts = mstar(theta, seed)
        der = mp.diff(lambda th: mstar(th, ts)[0], theta)
        reduced.append({"I": 0.2, "theta": float(theta), "tau_star": float(ts), "value": float(val),
                        "dtheta": float(der)})

    A = 1 / (4 * PI**2)
    B = mp.mpf("0.1") / (4 * PI**2)
    out = {
        "reference": ref,
        "dissipative_damping_0.5": diss,
        "critical_I0.2_phi0_t0.25": float(tau_star),
        "reduced_I0.2": reduced,
        "two_harmonic": {"A": float(A), "B": float(B),
                         "transit_0.25_to_0.5": float(transit_time(A, B, mp.mpf("0.25"), mp.mpf("0.5")))},
    }
    path = Path(__file__).with_name("oracle_values.json")
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(json.dumps(out, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
