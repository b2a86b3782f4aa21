"""
Supervising a weak model through a pump coastdown
=================================================

A toy plant loses primary flow along a linear pump ramp. Mild coastdowns
train a crude linear model of fuel centreline temperature; deep coastdowns
are never seen in training. The supervisor should keep most mild-transient
predictions and throw out the bad ones in the deep ones.
"""
import numpy as np

from laddr.casestudy import run_study

study = run_study(seed=0)
print("training episodes:", study.data.train_episodes, "KB rows:", study.kb.count)
print("tuned diameters (up_temp, core_flow, t_fcl):", np.round(study.config.diameters.values, 4))

for name, ev in (("mild, held out", study.d1_heldout), ("deep coastdowns", study.d2)):
    r = study.evaluate(ev)
    c = r.counts
    print(f"{name:16s} accepted {c.accepted_correct + c.accepted_incorrect:5d}/{c.total:5d}  "
          f"peril {r.peril:.3f}  degradation {r.degradation:.3f}  ineptitude {r.ineptitude:.3f}")

# one mild transient, step by step: the score sags where the model goes wrong
ep = study.d1_episodes_heldout[1]
t, truth, pred, score = study.transient(ep)
bad = np.abs(pred - truth) > study.criterion.epsilon
print(f"\nepisode {ep}: {bad.sum()} of {len(t)} steps miss by more than {study.criterion.epsilon:g} degC")
print(f"median reliability on bad steps {np.median(score[bad]) if bad.any() else float('nan'):.3f}, "
      f"on good steps {np.median(score[~bad]):.3f}")
for k in range(0, len(t), 40):
    print(f"  t={t[k]:6.1f}s  truth {truth[k]:7.1f}  pred {pred[k]:7.1f}  R={score[k]:.3f}")
