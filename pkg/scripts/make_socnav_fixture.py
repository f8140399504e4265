#!/usr/bin/env python3
"""Generate the bundled 300-scenario SocNav1-style fixture.

The real SocNav1 corpus is not redistributable with this repo, so tests and
the acceptance suite run against this synthetic stand-in. Scenarios follow
docs/socnav_format.md: the rated robot sits at the origin of each scenario
frame. Scores come from a smooth ground-truth discomfort field (logistic in
distance with an angle-dependent preferred radius plus a wall-proximity
term) so that a nonlinear model can beat an exponential-decay baseline.

Regenerate with:  python scripts/make_socnav_fixture.py
"""

import json
import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from proxilab.geometry import Pose2D, RoomPolygon, extract_features  # noqa: E402

SEED = 20240901
N_SCENARIOS = 300
OUT = Path(__file__).resolve().parents[1] / "src" / "proxilab" / "data" / "socnav_fixture.jsonl"

# ground-truth discomfort field
BASE = 8.0
SPAN = 84.0
KAPPA = 4.0
D_STAR_MEAN = 0.9
D_STAR_AMP = 0.4
D_STAR_PHASE = 0.9
FAR_GAIN = 18.0       # being left at a distance is also rated inappropriate
FAR_RATE = 3.0
FAR_DIST = 2.0
WALL_GAIN = 8.0
WALL_SCALE = 0.5
NOISE_SIGMA = 6.0


def sample_room(rng):
    if rng.uniform() < 0.8:
        w = rng.uniform(4.0, 8.0)
        h = rng.uniform(3.5, 6.5)
        x0 = -rng.uniform(0.4, w - 0.4)
        y0 = -rng.uniform(0.4, h - 0.4)
        verts = [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)]
    else:
        w = rng.uniform(5.0, 8.0)
        h = rng.uniform(4.5, 6.5)
        nw = rng.uniform(1.5, w - 2.0)
        nh = rng.uniform(1.5, h - 2.0)
        x0 = -rng.uniform(0.4, min(nw, w) - 0.4)
        y0 = -rng.uniform(0.4, h - 0.4)
        verts = [
            (x0, y0), (x0 + w, y0), (x0 + w, y0 + h - nh),
            (x0 + nw, y0 + h - nh), (x0 + nw, y0 + h), (x0, y0 + h),
        ]
    room = RoomPolygon(verts)
    if not room.contains_point(0.0, 0.0):
        return None
    return room


def sample_inside(room, rng, min_r=0.0, max_r=None, margin=0.15):
    for _ in range(100):
        if max_r is None:
            xmin, ymin, xmax, ymax = room.bounding_box
            x = rng.uniform(xmin, xmax)
            y = rng.uniform(ymin, ymax)
        else:
            r = rng.uniform(min_r, max_r)
            phi = rng.uniform(-math.pi, math.pi)
            x, y = r * math.cos(phi), r * math.sin(phi)
        if room.contains_point(x, y) and _wall_gap(room, x, y) > margin:
            return x, y
    return None


def _wall_gap(room, x, y):
    from proxilab._kernels import edge_distance

    return float(edge_distance(np.array([x]), np.array([y]), room.vertices[:, 0], room.vertices[:, 1])[0])


def ground_truth(features, rng):
    theta = math.atan2(features.hr_sin, features.hr_cos)
    d_star = D_STAR_MEAN + D_STAR_AMP * math.cos(theta - D_STAR_PHASE)
    ramp = 1.0 / (1.0 + math.exp(-KAPPA * (d_star - features.hr_dist)))
    far = FAR_GAIN / (1.0 + math.exp(-FAR_RATE * (features.hr_dist - FAR_DIST)))
    wall = WALL_GAIN * math.exp(-min(features.r_n, features.r_s, features.r_w, features.r_e) / WALL_SCALE)
    discomfort = BASE + SPAN * ramp + far + wall + rng.normal(0.0, NOISE_SIGMA)
    return int(round(min(max(discomfort, 0.0), 100.0)))


def main():
    rng = np.random.default_rng(SEED)
    records = []
    i = 0
    while len(records) < N_SCENARIOS:
        i += 1
        room = sample_room(rng)
        if room is None:
            continue
        pos = sample_inside(room, rng, min_r=0.25, max_r=2.6)
        if pos is None:
            continue
        heading = rng.uniform(-math.pi, math.pi)
        human = Pose2D(pos[0], pos[1], heading)
        try:
            features = extract_features(room, human, Pose2D(0.0, 0.0, 0.0))
        except Exception:
            continue

        humans = [{"id": 1, "x": human.x, "y": human.y, "heading": human.heading}]
        objects = []
        interactions = []
        kind = rng.uniform()
        if kind < 0.16:  # extra human: filtered out downstream
            extra = sample_inside(room, rng)
            if extra is None:
                continue
            humans.append({"id": 2, "x": extra[0], "y": extra[1],
                           "heading": rng.uniform(-math.pi, math.pi)})
        elif kind < 0.24:  # human-object interaction: filtered out downstream
            opos = sample_inside(room, rng)
            if opos is None:
                continue
            objects.append({"id": "o1", "x": opos[0], "y": opos[1], "heading": 0.0})
            interactions.append([1, "o1"])
        elif kind < 0.40:  # bystander object, no interaction: kept
            opos = sample_inside(room, rng)
            if opos is not None:
                objects.append({"id": "o1", "x": opos[0], "y": opos[1], "heading": 0.0})

        discomfort = ground_truth(features, rng)
        records.append({
            "scenario_id": f"fx{len(records):04d}",
            "robot_id": "r1",
            "walls": [[round(x, 6), round(y, 6)] for x, y in room.vertices.tolist()],
            "humans": [{k: (round(v, 6) if isinstance(v, float) else v) for k, v in h.items()}
                       for h in humans],
            "objects": [{k: (round(v, 6) if isinstance(v, float) else v) for k, v in o.items()}
                        for o in objects],
            "interactions": interactions,
            "score": 100 - discomfort,
        })

    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    print(f"wrote {len(records)} scenarios to {OUT} (attempts: {i})")


if __name__ == "__main__":
    main()
