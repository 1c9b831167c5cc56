"""Walk through one push_block episode end to end.

1. Roll out the scripted expert and print how the block moves.
2. Train a small inverse model on random-action data for a few iterations.
3. Track the expert's state sequence with that model and report success.

Runs in well under a minute:  python3 demos/push_walkthrough.py
"""

import numpy as np

from advexplore import envs, nn
from advexplore.collectors import CollectorConfig, make_collector
from advexplore.expert import evaluate, generate_demos, rollout_expert
from advexplore.inverse import InverseModel, SampleBuffer

rng = np.random.default_rng(0)
ep = rollout_expert("push_block", rng)
print("expert episode: block", np.round(ep.states[0, 2:4], 3), "->", np.round(ep.states[-1, 2:4], 3),
      "goal", np.round(ep.states[0, 4:6], 3), "success", ep.success)
moved = np.flatnonzero(np.any(np.diff(ep.states[:, 2:4], axis=0) != 0, axis=1))
print(f"block in contact on {len(moved)} of {len(ep.actions)} steps")

spec = envs.env_spec("push_block")
model = InverseModel(spec.state_dim, spec.action_dim, np.random.default_rng(1), hidden=64, recurrent=64)
z_i = SampleBuffer(spec.state_dim, spec.action_dim)
collector = make_collector(CollectorConfig(kind="random"), envs.Env("push_block", np.random.default_rng(2)),
                           model, nn.Adam(model.params), z_i, np.random.default_rng(3))
demos = generate_demos("push_block", 100, np.random.default_rng(4))
print("untrained success:", evaluate(model, "push_block", demos).success_rate)
for i in range(1, 17):
    collector.run_iteration()
    if i % 4 == 0:
        loss = np.mean(collector.batch_losses[-25:])
        print(f"iter {i:2d}: {len(z_i)} samples, batch loss {loss:.4f}, "
              f"success {evaluate(model, 'push_block', demos).success_rate:.2f}")
