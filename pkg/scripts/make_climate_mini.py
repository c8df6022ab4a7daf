"""Regenerate the bundled climate_mini dataset asset.

48 weather stations on a unit square, 24 yearly samples, 4 seasonal modes
(winter, spring, summer, autumn).  Winter and summer anomalies are
independent spatially correlated fields (squared-exponential kernel over
station coordinates; winter varies at a larger length scale).  Spring and
autumn are fixed convex combinations of the two plus small noise, so the
transitional seasons are predictable from the extremes:

    spring = 0.55 * winter + 0.45 * summer
    autumn = 0.40 * winter + 0.60 * summer

Each mode covers a subset of stations (sensors offline in some seasons)
and carries a correlation-threshold graph over its own yearly series, with
the threshold picked per mode to land near a common edge density.  Meta
vectors are [input one-hot (2), sin phase, cos phase] of the season.

Run from the repository root:  python3 scripts/make_climate_mini.py
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from graphx.data import Dataset, build_correlation_graph, save_dataset  # noqa: E402
from graphx.graphs import ModeGraph, ModeSpec  # noqa: E402

SEED = 7
P = 48
N_YEARS = 24
TARGET_DENSITY = 0.15

SEASONS = ("winter", "spring", "summer", "autumn")
PHASES = {"winter": 0.0, "spring": 0.25, "summer": 0.5, "autumn": 0.75}
ROLES = {"winter": "input", "summer": "input", "spring": "target", "autumn": "target"}
LENGTH_SCALES = {"winter": 0.45, "summer": 0.22}
BASELINES = {"winter": -0.4, "summer": 0.4}
MIX = {"spring": (0.55, 0.45), "autumn": (0.40, 0.60)}
MIX_NOISE = 0.08
DROPPED = {"winter": 4, "summer": 4, "spring": 8, "autumn": 8}


def spatial_field(coords, length_scale, rng, n):
    """n independent draws of a zero-mean field with SE covariance."""
    d2 = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=-1)
    cov = np.exp(-d2 / (2.0 * length_scale**2)) + 1e-8 * np.eye(len(coords))
    chol = np.linalg.cholesky(cov)
    return rng.normal(size=(n, len(coords))) @ chol.T


def pick_threshold(series, target_density):
    """Correlation cutoff whose graph density is closest to the target."""
    corr = np.corrcoef(series)
    off = corr[~np.eye(len(corr), dtype=bool)]
    best_rho, best_gap = 0.5, np.inf
    for q in np.linspace(0.70, 0.98, 57):
        rho = float(np.quantile(off, q))
        if not 0.0 < rho < 1.0:
            continue
        a = build_correlation_graph(series, rho)
        density = (a.sum() - len(a)) / (len(a) * (len(a) - 1))
        gap = abs(density - target_density)
        if gap < best_gap:
            best_rho, best_gap = rho, gap
    return best_rho


def main() -> None:
    rng = np.random.default_rng(SEED)
    universe = tuple(f"station_{i:02d}" for i in range(P))
    coords = rng.uniform(0.0, 1.0, size=(P, 2))

    fields = {
        s: BASELINES[s] + spatial_field(coords, LENGTH_SCALES[s], rng, N_YEARS)
        for s in ("winter", "summer")
    }
    for season, (a, b) in MIX.items():
        fields[season] = (
            a * fields["winter"]
            + b * fields["summer"]
            + MIX_NOISE * rng.normal(size=(N_YEARS, P))
        )

    offline = {}
    offline["winter"] = rng.choice(P, size=DROPPED["winter"], replace=False)
    rest = np.setdiff1d(np.arange(P), offline["winter"])
    offline["summer"] = rng.choice(rest, size=DROPPED["summer"], replace=False)
    for season in ("spring", "autumn"):
        offline[season] = rng.choice(P, size=DROPPED[season], replace=False)

    modes = []
    for season in SEASONS:
        keep = np.setdiff1d(np.arange(P), offline[season])
        series = fields[season][:, keep].T
        rho = pick_threshold(series, TARGET_DENSITY)
        adjacency = build_correlation_graph(series, rho)
        density = (adjacency.sum() - len(keep)) / (len(keep) * (len(keep) - 1))
        phase = 2.0 * np.pi * PHASES[season]
        onehot = [1.0, 0.0] if ROLES[season] == "input" else [0.0, 1.0]
        meta = np.array(onehot + [round(np.sin(phase), 12), round(np.cos(phase), 12)])
        samples = np.round(fields[season][:, keep, None], 4)
        spec = ModeSpec(
            mode_id=season,
            meta=meta,
            node_ids=tuple(universe[i] for i in keep),
        )
        modes.append(ModeGraph(spec=spec, adjacency=adjacency, samples=samples))
        print(f"{season}: {len(keep)} stations, rho={rho:.3f}, density={density:.3f}")

    ds = Dataset(universe=universe, modes=tuple(modes))
    out = Path(__file__).resolve().parent.parent / "src" / "graphx" / "assets"
    out.mkdir(parents=True, exist_ok=True)
    path = out / "climate_mini.json"
    save_dataset(ds, path)
    print(f"wrote {path} ({path.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
