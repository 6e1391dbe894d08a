"""Mirror a head across its fitted major axis and evaluate the consistency terms.

The composed images keep one half of the head plus its reflection. Mirrored
labels give a symmetry loss that is zero up to nearest-neighbour rounding on
an oblique axis; a noisy student raises it.
"""

import numpy as np

from ersr import PhantomSpec, generate_phantom
from ersr.dsaf import RampSchedule
from ersr.ellipse import fit_ellipse
from ersr.losses import aug_consistency, ori_consistency, sym_consistency, total_loss
from ersr.symmetry import (
    axis_from_ellipse,
    compose_symmetric_images,
    decompose_prediction,
    mirror_prediction,
    split_halves,
)

ph = generate_phantom(PhantomSpec(size=96), seed=11)
e = fit_ellipse(ph.gt)
axis = axis_from_ellipse(e, "long")
halves = split_halves(axis, 96, 96)
print(f"axis through ({axis.c_a:.1f}, {axis.c_b:.1f}) at {axis.theta:.1f} deg")

# %% two augmented images, each with independent intensity jitter and noise
pair = compose_symmetric_images(ph.image, ph.gt, axis, halves, seed=0)
print("x_s1 range", pair.x_s1.min().round(3), pair.x_s1.max().round(3))

# %% pretend predictions: the ground truth itself and its mirrored labels
labels = compose_symmetric_images(ph.gt.astype(float), ph.gt, axis, halves, perturb=False)
p_o = ph.gt.astype(float)
p_o1, p_o2 = mirror_prediction(p_o, axis, halves)
s1 = decompose_prediction(labels.x_s1, axis, halves)
s2 = decompose_prediction(labels.x_s2, axis, halves)

l_aug = aug_consistency(p_o1, labels.x_s1, p_o2, labels.x_s2)
l_sym = sym_consistency(*s1, *s2)
l_ori = ori_consistency(p_o, p_o)
for t in (0, 5000, 10000):
    r = total_loss(0.05, l_ori, l_aug, l_sym, RampSchedule(0.0, 1.0, 10000), t)
    print(f"t={t:5d} lambda={r.lambda_t:.4f} L_aug={r.l_aug:.5f} L_sym={r.l_sym:.5f} total={r.l_total:.5f}")

# %% an asymmetric student breaks the symmetry term
rng = np.random.default_rng(1)
noisy = np.clip(labels.x_s1 + rng.normal(0, 0.1, labels.x_s1.shape), 0, 1)
print("L_sym with noisy student:", round(sym_consistency(*decompose_prediction(noisy, axis, halves), *s2), 5))
