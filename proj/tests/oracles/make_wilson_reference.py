# Copyright 2026 The fvbench Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes wilson_reference.inc: Wilson score intervals at 50 digits."""

import random

import mpmath

mpmath.mp.dps = 50


def wilson(k, n, conf):
    k, n = mpmath.mpf(k), mpmath.mpf(n)
    z = mpmath.sqrt(2) * mpmath.erfinv(mpmath.mpf(conf))
    z2 = z * z
    center = (k + z2 / 2) / (n + z2)
    half = z * mpmath.sqrt(k * (n - k) / n + z2 / 4) / (n + z2)
    return center - half, center + half


def main():
    rng = random.Random(20260301)
    levels = ["0.8", "0.9", "0.95", "0.99", "0.999", "0.68", "0.5"]
    triples = [(50, 100, "0.95"), (0, 10, "0.95"), (10, 10, "0.95"), (1, 1, "0.9"), (0, 1, "0.99")]
    while len(triples) < 50:
        n = rng.choice([rng.randint(1, 20), rng.randint(21, 1000), rng.randint(1001, 200000)])
        k = rng.randint(0, n)
        triples.append((k, n, rng.choice(levels)))
    with open("wilson_reference.inc", "w") as out:
        out.write("// Generated by make_wilson_reference.py (mpmath, 50 digits). Do not edit.\n")
        out.write("// k, n, confidence, lo, hi\n")
        for k, n, conf in triples:
            lo, hi = wilson(k, n, conf)
            out.write("{%d, %d, %s, %s, %s},\n" % (k, n, conf, mpmath.nstr(lo, 25), mpmath.nstr(hi, 25)))


if __name__ == "__main__":
    main()
