"""Regenerate crates/core/fixtures/gk_lambda.json.

Evaluates lambda(Q) = (1/pi) (Q/2)^6 exp((pi/Q)^2) int_0^inf sinh(y) / cosh(y/2)^6
sin(2 pi y / Q^2) exp(-(y/Q)^2) dy on the real line in 50-digit arithmetic with
mpmath's adaptive tanh-sinh rule, splitting the range at the zeros of the sine.
"""

import json
import sys

import mpmath as mp

mp.mp.dps = 50


def gk_lambda(q):
    q = mp.mpf(q)
    a = 2 * mp.pi / q**2
    f = lambda y: mp.sinh(y) / mp.cosh(y / 2) ** 6 * mp.sin(a * y) * mp.exp(-((y / q) ** 2))
    upper = max(mp.mpf(60), 12 * q)
    period = mp.pi / a
    cuts = [mp.mpf(0)]
    k = 1
    while k * period < upper:
        cuts.append(k * period)
        k += 1
    cuts.append(upper)
    integral = mp.quad(f, cuts)
    return mp.pi**-1 * (q / 2) ** 6 * mp.exp((mp.pi / q) ** 2) * integral


def main():
    qs = ["0.5", "0.75", "1", "1.5", "2", "3", "4", "6", "8"]
    values = []
    for q in qs:
        v = gk_lambda(q)
        values.append({"q": float(q), "lambda": mp.nstr(v, 25)})
        print(q, mp.nstr(v, 25), file=sys.stderr)
    doc = {
        "description": "lambda(Q) from 50-digit mpmath tanh-sinh quadrature on the real line, "
        "split at the zeros of sin(2 pi y / Q^2), upper limit max(60, 12 Q). "
        "Regenerate with scripts/gk_lambda_oracle.py.",
        "oracle": "mpmath " + mp.__version__ + " quad (tanh-sinh), dps=50",
        "version": 1,
        "values": values,
    }
    json.dump(doc, sys.stdout, indent=2)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
