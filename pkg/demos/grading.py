"""Grade a few hand-built vertebrae with the crisp and the fuzzy classifier.

Run: python3 demos/grading.py
"""
import numpy as np

from vfa import GRADES, MORPHOLOGIES, VertebraKeypoints, crisp_grade, crisp_morphology, fuzzy_memberships
from vfa import fuzzy_with_gradient, ratio_profile


def vertebra(h_p, h_m, h_a, width=45.0):
    # upper endplate first (posterior, middle, anterior), then the lower one on y = 0
    xs = (0.0, width / 2, width)
    upper = [(x, -h) for x, h in zip(xs, (h_p, h_m, h_a))]
    return VertebraKeypoints(np.array(upper + [(x, 0.0) for x in xs]))


cases = {
    "healthy": vertebra(40, 40, 40),
    "anterior wedge": vertebra(40, 36, 28),
    "biconcave": vertebra(40, 26, 39),
    "crush": vertebra(24, 27, 38),
    "near a border": vertebra(40, 30.2, 38),
}

print(f"{'case':15s} {'MPR':>5s} {'MAR':>5s}  crisp               fuzzy (grade probabilities)")
for name, kp in cases.items():
    r = ratio_profile(kp)
    post = fuzzy_memberships(r)
    probs = " ".join(f"{g[:3]}={p:.2f}" for g, p in zip(GRADES, post.grade))
    print(f"{name:15s} {r.mpr:5.2f} {r.mar:5.2f}  {crisp_grade(r):8s} {crisp_morphology(r):9s}  {probs}")

# The fuzzy posterior is differentiable in the twelve keypoint coordinates.
post, grad = fuzzy_with_gradient(cases["near a border"])
k = int(np.argmax(post.grade))
print(f"\nnear-border case: most likely grade {GRADES[k]} ({post.grade[k]:.2f}),")
print(f"morphology {MORPHOLOGIES[int(np.argmax(post.morphology))]}")
print("d P(grade) / d (middle upper point y):", np.round(grad.grade[:, 3], 4))
