"""Smoke test for the `simcoder` extension module.

Build and install the module first, e.g.::

    cd crates/python && maturin build --release -o dist && pip install dist/*.whl
"""

import json
import pathlib

import simcoder

ROOT = pathlib.Path(__file__).resolve().parent.parent
BENCH = ROOT / "bench"


def main():
    cfg = simcoder.ArchConfig.parse((BENCH / "configs" / "default.cfg").read_text())
    assert (cfg.array_rows, cfg.array_cols, cfg.dataflow) == (32, 32, "os")
    assert simcoder.ArchConfig.parse(cfg.to_document()) == cfg

    built = simcoder.ArchConfig(8, 8, 16, 16, 8, dataflow="ws", dram_bandwidth=4)
    assert built.sram_bytes == (16384, 16384, 8192)

    topo = simcoder.Topology.parse("lenet", (BENCH / "topologies" / "lenet.csv").read_text())
    assert len(topo) == len(topo.layers) > 0

    report = simcoder.simulate_network(topo, cfg, jobs=2)
    assert report.total_cycles == sum(l["total_cycles"] for l in report.layers)
    assert report.to_csv() == simcoder.simulate_network(topo, cfg).to_csv()
    print(report.summary_line())

    assert simcoder.error_rate(1333481, 1338519) == 0.38
    assert simcoder.pass_at_k([1] * 126 + [None] * 12, 1) == 91.30

    fc = simcoder.fold_cycles(4, 3, 5, "os")
    assert (fc["fill"], fc["stream"], fc["drain"], fc["total"]) == (5, 5, 4, 14)
    slow = simcoder.fold_cycles(8, 8, 20, "os", row_ports=4, col_ports=4, drain_ports=4)
    assert slow["total"] > simcoder.fold_cycles(8, 8, 20, "os")["total"]

    task_path = BENCH / "tasks" / "interconnect-fold-cycles.json"
    prompt = simcoder.build_prompt("icl_cot", task_path.read_text(), (BENCH / "arch_spec.md").read_text())
    assert "## Examples" in prompt and "## Reasoning" in prompt

    task = json.loads(task_path.read_text())
    for vector in task["test_vectors"]:
        assert simcoder.run_kernel(task["kernel"], vector["input"]) == vector["expected"]

    try:
        simcoder.ArchConfig.parse("array_rows = 0\n")
    except ValueError as e:
        print("rejected bad config:", e)
    else:
        raise AssertionError("bad config accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
