"""Run the full round-based search loop at desk scale.

Each round: generate grow/trim candidates, pick top-k with the controller
(uniformly in round one), evaluate accuracy and memory, re-rank by the
measured efficiency metric, keep the winner as the next base, and train the
controller on the accumulated history.
"""

import tempfile
from pathlib import Path

from memsearch.arch import TensorShape, default_arch
from memsearch.engine import SearchConfig, SearchEngine
from memsearch.evaluate import SyntheticConfig


def main():
    out_dir = Path(tempfile.mkdtemp(prefix="memsearch-demo-"))
    config = SearchConfig(
        lam=0.5,
        k=24,
        max_rounds=4,
        seed=7,
        scc_epochs=20,
        standardize_targets=True,
        synth=SyntheticConfig(sigma=0.0),
        init_arch=default_arch(
            num_blocks=2, channel_width=16, input_shape=TensorShape(8, 8, 3),
            strides=(1, 2), num_classes=4,
        ),
    )
    engine = SearchEngine(config, out_dir=out_dir)
    print(f"lambda={config.lam}, k={config.k}, outputs under {out_dir}\n")
    best, rounds = engine.run_search()
    for record in rounds:
        w = record.winner
        print(
            f"round {record.round}: {len(record.evaluated)} evaluated | winner "
            f"y={w.y:+.4f} acc={w.accuracy:.3f} mem={w.total_bytes}B | {w.provenance[:52]}"
        )
    print(f"\nFinal architecture: {sum(len(b.cells) for b in best.blocks)} cells "
          f"across {len(best.blocks)} blocks")
    print(f"Artifacts: {sorted(p.name for p in out_dir.iterdir())}")


if __name__ == "__main__":
    main()
