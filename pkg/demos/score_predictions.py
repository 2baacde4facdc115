"""
Scoring instance and panoptic predictions
=========================================

Builds a small scene where one prediction is good, one is sloppy, and one
is a false alarm, scores it with both metric families, and prints the
combined report table.
"""

import numpy as np

from shoreseg.metrics import (
    InstancePrediction,
    InstanceTruth,
    MetricsReport,
    PanopticMap,
    evaluate_instances,
    evaluate_panoptic,
    mask_iou,
)


def box(shape, r0, r1, c0, c1):
    mask = np.zeros(shape, dtype=bool)
    mask[r0:r1, c0:c1] = True
    return mask


SHAPE = (40, 40)

truths = [
    InstanceTruth("t0.png", "Litter", box(SHAPE, 2, 12, 2, 12)),
    InstanceTruth("t0.png", "Algae", box(SHAPE, 20, 32, 20, 32)),
]
predictions = [
    # tight: IoU 1.0 against the first truth
    InstancePrediction("t0.png", "Litter", 0.95, box(SHAPE, 2, 12, 2, 12)),
    # sloppy: offset by 3 px, IoU well under 0.75
    InstancePrediction("t0.png", "Algae", 0.80, box(SHAPE, 23, 35, 23, 35)),
    # false alarm in an empty corner
    InstancePrediction("t0.png", "Litter", 0.60, box(SHAPE, 35, 39, 2, 6)),
]
print("sloppy IoU:", round(mask_iou(predictions[1].mask, truths[1].mask), 3))

instances = evaluate_instances(predictions, truths)
print(f"AP {instances.ap:.4f}  AR {instances.ar:.4f}")

# the same scene as panoptic maps: id 0 is the sand background
truth_ids = np.zeros(SHAPE, dtype=np.int32)
truth_ids[2:12, 2:12] = 1
truth_ids[20:32, 20:32] = 2
pred_ids = np.zeros(SHAPE, dtype=np.int32)
pred_ids[2:12, 2:12] = 1
pred_ids[23:35, 23:35] = 2

table = {0: ("sand", False), 1: ("Litter", True), 2: ("Algae", True)}
panoptic = evaluate_panoptic(PanopticMap(pred_ids, table),
                             PanopticMap(truth_ids, table))
print(f"PQ {panoptic.pq:.4f}  SQ {panoptic.sq:.4f}  RQ {panoptic.rq:.4f}")

# both families in one report, as printed by the evaluate command
report = MetricsReport.from_results(instances, panoptic)
print()
print(report.render_table())
