"""Evaluate the fuzzy classifier and a small random forest on a noisy
synthetic cohort: ROC area, Youden operating point and confusion matrix.

Run: python3 demos/evaluation.py
"""
import numpy as np

from vfa import CohortSpec, GRADES, confusion, forest_fit, fuzzy_memberships, generate_cohort, ratio_profile
from vfa import roc_auc, youden_point

train = generate_cohort(CohortSpec(n_patients=300, noise=1.5, seed=1))
test = generate_cohort(CohortSpec(n_patients=300, noise=1.5, seed=2))
profiles = [ratio_profile(r.keypoints) for r in test]
fractured = np.array([r.grade != "normal" for r in test])
print(f"{len(test)} test vertebrae, {fractured.sum()} fractured")

post = [fuzzy_memberships(p) for p in profiles]
score = np.array([1 - q.grade[0] for q in post])
op = youden_point(score, fractured)
print(f"fuzzy rules : AUC {roc_auc(score, fractured):.3f}, at threshold {op.threshold:.3f} "
      f"sensitivity {op.sensitivity:.3f}, specificity {op.specificity:.3f}")

x_tr = np.array([ratio_profile(r.keypoints).features() for r in train])
forest = forest_fit(x_tr, [r.grade != "normal" for r in train], seed=0)
rf = forest.predict_proba(np.array([p.features() for p in profiles]))[:, 1]
print(f"forest      : AUC {roc_auc(rf, fractured):.3f}")

cm = confusion([r.grade for r in test], [GRADES[int(np.argmax(q.grade))] for q in post], GRADES)
print("\nrow-normalised grade confusion (true rows, predicted columns)")
print("          " + " ".join(f"{g:>8s}" for g in GRADES))
for g, row in cm.items():
    print(f"{g:>9s} " + " ".join(f"{v:8.2f}" for v in row))
