"""Full open-set pipeline on a synthetic intrusion problem.

Four imbalanced known attack classes (1000/500/200/50 flows) are split
8:2, z-score normalized on the training side, and a model is trained on
knowns only. Half of a held-out unknown cluster calibrates the
rejection threshold; the other half plays the role of a novel attack at
test time.
"""
import numpy as np

from rpmnet import TrainConfig, calibrate, evaluate, fit_scaler, make_split, train
from rpmnet.dataio import ClassRoles
from rpmnet.openset import detect, score
from rpmnet.synthetic import open_set_fixture

known, unknown = open_set_fixture(seed=42)
print("known classes:", dict(sorted(known.class_counts().items())))
print("unknown cluster:", unknown.shape[0], "flows the model never sees in training")

roles = ClassRoles(known=tuple(sorted(set(known.labels))))
split = make_split(known, roles, ratio=0.8, seed=42)
scaler = fit_scaler(split.known_train.features)

config = TrainConfig(seed=42)
params, history = train(scaler.transform(split.known_train.features),
                        split.known_train.labels, config)
print(f"\ntrained {config.epochs} epochs; final train accuracy {history[-1].accuracy:.3f}")

known_scores = score(params, scaler.transform(split.known_train.features)).scores
val_scores = score(params, scaler.transform(unknown[:200])).scores
threshold = calibrate(known_scores, val_scores)
print(f"calibrated tau = {threshold.tau:.4f} "
      f"(validation unknown-F1 {threshold.calibration_stats['f1']:.3f})")

y = np.array([params.class_names.index(l) for l in split.known_test.labels])
report = evaluate(params, threshold,
                  scaler.transform(split.known_test.features), y,
                  scaler.transform(unknown[200:]), params.class_names)

print("\nknown-class metrics (rejected knowns count as errors):")
for name, m in report.per_class.items():
    print(f"  {name:8s} P={m['precision']:.3f} R={m['recall']:.3f} F1={m['f1']:.3f} n={m['support']}")
print(f"macro  P={report.macro.precision:.4f} R={report.macro.recall:.4f} F1={report.macro.f1:.4f}")
print(f"open-set: AUROC={report.auroc:.4f} AUPR-IN={report.aupr_in:.4f} AUPR-OUT={report.aupr_out:.4f}")

flagged = detect(score(params, scaler.transform(unknown[200:])), threshold)
print(f"\n{int(flagged.is_unknown.sum())} of {len(flagged)} novel flows rejected as unknown")
