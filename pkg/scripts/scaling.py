"""Per-iteration wall time of the feature samplers as the link count grows.

DB graphs with fixed K and mean degree, so N grows with the number of links;
prints one row per size and the fitted log-log slope.  Example::

    python scripts/scaling.py --links 5000,10000,20000,40000 --model IMDB
"""

import argparse
import time

import numpy as np

from imrm.latent import Hyper
from imrm.samplers.chain import init_from_partition, step
from imrm.synthgen import gen_single


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--links", default="5000,10000,20000,40000")
    p.add_argument("--model", default="IMDB", help="IMHW, IMDB or IMRM")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--degree", type=float, default=10.0, help="mean vertex degree")
    p.add_argument("--repeats", type=int, default=3)
    a = p.parse_args(argv)
    k = a.k
    sizes, times = [], []
    print("links,n,seconds_per_iteration")
    for links in (int(x) for x in a.links.split(",")):
        size = int(2 * links / a.degree) // k
        # four fifths of each vertex's links stay within its class
        within, between = 0.8 * a.degree / size, 0.2 * a.degree / ((k - 1) * size)
        g, truth = gen_single("DB", k, size, rho_c=np.full(k, within), rho_0=between, seed=0)
        h = Hyper(k_max=k)
        s = init_from_partition(g, a.model, h, truth.labels, seed=0)
        step(s, h)
        per = []
        for _ in range(a.repeats):
            t0 = time.perf_counter()
            step(s, h)
            per.append(time.perf_counter() - t0)
        sizes.append(g.n_links)
        times.append(float(np.median(per)))
        print(f"{g.n_links},{g.n},{times[-1]:.3f}", flush=True)
    if len(sizes) > 1:
        print(f"# log-log slope {np.polyfit(np.log(sizes), np.log(times), 1)[0]:.3f}")


if __name__ == "__main__":
    main()
