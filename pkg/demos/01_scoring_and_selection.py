"""Score teacher maps by shape quality and keep the best ones.

Two corruption levels are mixed; the geometric score should prefer the
cleaner maps, and the ramped Top-K ratio grows with the training step.
"""

import numpy as np

from ersr import PhantomSpec, TeacherCorruption, generate_phantom, mock_teacher
from ersr.dsaf import RampSchedule, ScoreDictionary, combined_score, ramp_ratio, topk_select

# %% build 20 teacher maps, alternating clean-ish and noisy
spec = PhantomSpec(size=96)
levels = [0.4, 1.8]
maps, group = {}, {}
for i in range(20):
    ph = generate_phantom(spec, seed=i)
    maps[f"m{i:02d}"] = mock_teacher(ph.gt, TeacherCorruption.at_level(levels[i % 2]), seed=100 + i)
    group[f"m{i:02d}"] = i % 2

# %% score every map once and store the latest value per id
book = ScoreDictionary()
for sid, p in maps.items():
    s = combined_score(p, alpha=0.5, tau=0.5)
    book.update(sid, s.s_score, iteration=0)
    print(f"{sid} group={group[sid]} S_b={s.s_boundary:.4f} S_c={s.s_contour:.4f} S={s.s_score:.4f}")

# %% the selection ratio ramps from 0.5 to 1.0 over training
sched = RampSchedule(0.5, 1.0, total_steps=10000)
for t in (0, 2500, 5000, 7500, 10000):
    ratio = ramp_ratio(sched, t)
    chosen = topk_select(book, ratio, len(maps))
    low = np.mean([group[c] == 0 for c in chosen])
    print(f"t={t:5d} ratio={ratio:.3f} K={len(chosen):2d} low-corruption share={low:.2f}")
