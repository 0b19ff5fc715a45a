"""Independent evaluation of the empirical-null log-likelihood.

Writes crates/cli/tests/data/likelihood_oracle.json: a fixed 50-provider
Poisson dataset, its null intervals and null set, and the log-likelihood at
20 parameter points, all computed term by term at 50 significant digits.

    python3 tools/oracles/likelihood.py
"""

import json
from pathlib import Path

import mpmath as mp
import numpy as np

mp.mp.dps = 50

SEED = 7
N_PROVIDERS = 50
START = (mp.mpf("0.2"), mp.mpf("0.08"))
MULTIPLIER = mp.mpf("1.96")
OUT = Path(__file__).resolve().parents[2] / "crates/cli/tests/data/likelihood_oracle.json"


def moments(w, size, nu, s2):
    m = mp.e ** (w * nu + s2 / 2)
    mean = mp.sqrt(size) * (m - 1)
    var = m * (1 + m * (mp.e**s2 - 1) * size)
    return mean, var


def phi_cdf(x):
    return mp.ncdf(x)


def loglik(providers, intervals, null, nu, s2, pi0):
    total = mp.mpf(0)
    for (o, e, w), (a, b), is_null in zip(providers, intervals, null):
        z = (o - e) / mp.sqrt(e)
        mean, var = moments(w, e, nu, s2)
        sd = mp.sqrt(var)
        if is_null:
            x = (z - mean) / sd
            total += mp.log(pi0) - x**2 / 2 - mp.log(mp.sqrt(2 * mp.pi)) - mp.log(sd)
        else:
            q = phi_cdf((b - mean) / sd) - phi_cdf((a - mean) / sd)
            total += mp.log(1 - pi0 * q)
    return total


def main():
    rng = np.random.default_rng(SEED)
    w = rng.normal(size=N_PROVIDERS)
    expected = rng.uniform(20.0, 200.0, size=N_PROVIDERS)
    gamma = np.where(rng.uniform(size=N_PROVIDERS) < 0.15, 0.6, 0.0)
    alpha = rng.normal(scale=np.sqrt(0.1), size=N_PROVIDERS)
    observed = rng.poisson(expected * np.exp(0.25 * w + alpha + gamma)).astype(float)

    providers = [(mp.mpf(float(o)), mp.mpf(float(e)), mp.mpf(float(x))) for o, e, x in zip(observed, expected, w)]
    intervals, null = [], []
    for o, e, x in providers:
        mean, var = moments(x, e, *START)
        half = MULTIPLIER * mp.sqrt(var)
        a, b = float(mean - half), float(mean + half)
        intervals.append((a, b))
        z = (o - e) / mp.sqrt(e)
        null.append(bool(a <= z <= b))

    points = []
    for _ in range(20):
        nu = float(rng.uniform(-0.2, 0.6))
        s2 = float(rng.uniform(0.01, 0.3))
        pi0 = float(rng.uniform(0.5, 1.0))
        ll = loglik(providers, [(mp.mpf(a), mp.mpf(b)) for a, b in intervals], null, mp.mpf(nu), mp.mpf(s2), mp.mpf(pi0))
        points.append({"nu": nu, "sigma2_alpha": s2, "pi0": pi0, "loglik": float(ll)})

    fixture = {
        "providers": [
            {"id": f"p{i:02d}", "observed": float(o), "expected": float(e), "w": float(x)}
            for i, (o, e, x) in enumerate(zip(observed, expected, w))
        ],
        "intervals": [list(iv) for iv in intervals],
        "null_set": null,
        "points": points,
    }
    OUT.write_text(json.dumps(fixture, indent=1) + "\n")
    print(f"wrote {OUT}: {sum(null)} of {N_PROVIDERS} providers in the null set")


if __name__ == "__main__":
    main()
