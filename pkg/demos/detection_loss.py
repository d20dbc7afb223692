"""Score a set of predicted vertebra boxes against ground truth with the
Hungarian-matched detection loss.

Run: python3 demos/detection_loss.py
"""
from vfa import BoundingBox, Detection, detection_loss, giou

truth = [
    Detection(BoundingBox(100, 50, 40, 30)),
    Detection(BoundingBox(102, 95, 42, 32)),
    Detection(BoundingBox(104, 142, 44, 33), weight=1e-3),  # imputed, barely counts
]
pred = [
    Detection(BoundingBox(103, 96, 40, 30), prob=0.9),  # listed out of order on purpose
    Detection(BoundingBox(99, 52, 41, 29), prob=0.95),
    Detection(BoundingBox(300, 300, 10, 10), prob=0.2),  # far off; paired with the imputed box, whose weight keeps it cheap
]

loss = detection_loss(pred, truth)
print(f"total loss {loss.value:.4f}")
for p in loss.pairs:
    t = "-" if p.truth is None else p.truth
    q = "-" if p.pred is None else p.pred
    print(f"  truth {t} <-> pred {q}: weight {p.weight:g}, class {p.class_term:.3f}, "
          f"giou {p.iou_term:.3f}, l1 {p.l1_term:.3f}")

print("\nGIoU goes negative once boxes stop touching:")
a = BoundingBox.from_corners(0, 0, 1, 1)
for gap in (-0.5, 0.0, 1.0, 2.0):
    b = BoundingBox.from_corners(1 + gap, 0, 2 + gap, 1)
    print(f"  gap {gap:4.1f}: {giou(a, b):+.3f}")
