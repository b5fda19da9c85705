"""Web Mercator tile indices for 1000 seeded random points at 60-digit precision.

Writes tests/data/tile_oracle.csv: lat,lon,zoom,x,y. Coordinates are printed
with repr() so the C++ reader recovers the same doubles.
"""
import random
import sys

import mpmath

mpmath.mp.dps = 60


def tile(lat, lon, zoom):
    n = mpmath.mpf(2) ** zoom
    phi = mpmath.radians(mpmath.mpf(lat))
    x = mpmath.floor((mpmath.mpf(lon) + 180) / 360 * n)
    y = mpmath.floor((1 - mpmath.log(mpmath.tan(phi) + mpmath.sec(phi)) / mpmath.pi) / 2 * n)
    return int(min(x, n - 1)), int(min(max(y, 0), n - 1))


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "tests/data/tile_oracle.csv"
    rng = random.Random(20240917)
    with open(out, "w") as f:
        f.write("lat,lon,zoom,x,y\n")
        for _ in range(1000):
            lat = rng.uniform(-85.0511, 85.0511)
            lon = rng.uniform(-180.0, 180.0)
            zoom = rng.randint(0, 18)
            x, y = tile(lat, lon, zoom)
            f.write(f"{lat!r},{lon!r},{zoom},{x},{y}\n")


if __name__ == "__main__":
    main()
