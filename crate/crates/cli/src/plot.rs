use std::path::Path;

/// Standalone matplotlib script; takes trajectory CSV paths as arguments.
pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot safeflow trajectories.

usage: python3 plot.py run1.csv [run2.csv ...]
"""
import csv
import sys

import matplotlib.pyplot as plt


def load(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {k: [float(r[k]) for r in rows] for k in rows[0]}


def main(paths):
    fig, (ax_state, ax_h, ax_g) = plt.subplots(1, 3, figsize=(15, 4.5))
    for path in paths:
        d = load(path)
        label = path.rsplit("/", 1)[-1]
        ax_state.plot(d["x1"], d["x2"] if "x2" in d else d["u1"], label=label)
        ax_h.plot(d["t"], d["h"], label=label)
        ax_g.semilogy(d["t"], [max(v, 1e-16) for v in d["g_norm"]], label=label)
    ax_state.set_xlabel("x1")
    ax_state.set_ylabel("x2")
    ax_state.set_title("state")
    ax_h.axhline(0.0, color="k", lw=0.8)
    ax_h.set_xlabel("t")
    ax_h.set_title("h(x(t))")
    ax_g.set_xlabel("t")
    ax_g.set_title("|g|")
    for ax in (ax_state, ax_h, ax_g):
        ax.legend(fontsize="small")
    fig.tight_layout()
    plt.show()


if __name__ == "__main__":
    main(sys.argv[1:])
"#;

pub fn write_plot_script(dir: &Path) -> std::io::Result<()> {
    std::fs::write(dir.join("plot.py"), PLOT_SCRIPT)
}
