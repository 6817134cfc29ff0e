"""Cipher-list plots: suite position on x, log2 of the suite code on y."""

from __future__ import annotations

import re
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .attrs.tls import cipher_plot_value  # noqa: E402


def plot_cipher_lists(title: str, lists: Sequence[Sequence[int]], path: Union[str, Path]) -> Path:
    """One line per offered list. Code 0x0000 has no log value and is skipped."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for n, codes in enumerate(lists, 1):
        pts = [(i, cipher_plot_value(c)) for i, c in enumerate(codes, 1) if c > 0]
        if pts:
            xs, ys = zip(*pts)
            ax.plot(xs, ys, marker="o", markersize=3, linewidth=1, label=f"list {n} ({len(codes)} suites)")
    ax.set_title(title)
    ax.set_xlabel("position in ClientHello")
    ax.set_ylabel("log2(cipher code)")
    if lists:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def render_device_plots(per_device: Dict[str, List[Tuple[int, ...]]], out_dir: Union[str, Path]) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for dev in sorted(per_device):
        safe = re.sub(r"[^A-Za-z0-9_.-]+", "_", dev) or "device"
        paths.append(plot_cipher_lists(f"{dev}: offered cipher suites", per_device[dev], out_dir / f"ciphers-{safe}.png"))
    return paths
