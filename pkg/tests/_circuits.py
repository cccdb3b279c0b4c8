"""Random small circuits for property tests."""
import math

from hypothesis import strategies as st

from cfsim.circuit import BeamSplitter, Circuit, EnvCoupler, Mirror, PolRotator, Site

angles = st.floats(min_value=0.05, max_value=math.pi / 2 - 0.05, allow_nan=False)
phases = st.floats(min_value=-math.pi, max_value=math.pi, allow_nan=False)


def assemble(n_paths, ops):
    """Build a valid circuit from (kind, args) ops over paths p0..p{n-1}."""
    paths = [f"p{i}" for i in range(n_paths)]
    slices, sites = [], []
    for kind, args in ops:
        if kind == "bs":
            i, j, angle = args
            a, b = paths[i], paths[j]
            slices.append((BeamSplitter(a, b, a, b, angle),))
        elif kind == "mirror":
            i, phase = args
            slices.append((Mirror(paths[i], paths[i], phase),))
        else:
            (i,) = args
            sid = f"s{len(sites)}"
            sites.append(Site(sid, paths[i], len(slices)))
            slices.append((EnvCoupler(paths[i], sid),))
            slices.append((PolRotator(paths[i], sid),))
    live = {"p0"}
    for sl in slices:
        for e in sl:
            live |= set(e.outputs)
    detectors = {f"D{p[1:]}": p for p in sorted(live)}
    return detectors, Circuit(tuple(slices), "p0", detectors, tuple(sites), frozenset(detectors), name="random")


@st.composite
def small_circuits(draw, max_paths=4, max_ops=8, max_sites=3):
    n = draw(st.integers(2, max_paths))
    ops = []
    n_sites = 0
    for _ in range(draw(st.integers(2, max_ops))):
        kind = draw(st.sampled_from(["bs", "bs", "mirror", "site"]))
        if kind == "bs":
            i, j = draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=2, unique=True))
            ops.append(("bs", (i, j, draw(angles))))
        elif kind == "mirror":
            ops.append(("mirror", (draw(st.integers(0, n - 1)), draw(phases))))
        elif n_sites < max_sites:
            ops.append(("site", (draw(st.integers(0, n - 1)),)))
            n_sites += 1
    _, circuit = assemble(n, ops)
    return circuit.validate()


def random_ops(rng, n_paths, n_ops=6, max_sites=3):
    """Plain-numpy counterpart of ``small_circuits`` for fixed-count sweeps."""
    ops, n_sites = [], 0
    for _ in range(n_ops):
        r = rng.random()
        if r < 0.5:
            i, j = rng.choice(n_paths, 2, replace=False)
            ops.append(("bs", (int(i), int(j), float(rng.uniform(0.05, math.pi / 2 - 0.05)))))
        elif r < 0.7:
            ops.append(("mirror", (int(rng.integers(n_paths)), float(rng.uniform(-math.pi, math.pi)))))
        elif n_sites < max_sites:
            ops.append(("site", (int(rng.integers(n_paths)),)))
            n_sites += 1
    return ops
