#!/usr/bin/env python3
"""Labeler ablation experiments with the surrogate engine and mock raters.

Three experiments, each written as a CSV:

  sim sweep        cooling COP through its five levels against a constant
                   text score; the HVAC rating falls strictly as the
                   equipment improves because the heuristic term drives it.
  combined (2x2)   efficient/inefficient notes crossed with
                   efficient/inefficient simulations under a keyword
                   rater; mixed rows land strictly between pure rows.
  text sweep       the ten canned notes against one fixed simulation with
                   the hash-scored mock rater; shows the harness shape,
                   but the scores themselves are arbitrary under a mock.

Usage: python3 scripts/run_ablation_demo.py [--out OUT_DIR] [--trials N]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from homesynth.backends import MockTextBackend, ScriptedTextBackend, TextBackend
from homesynth.domain import PerformanceParams
from homesynth.evalharness import (
    DEFAULT_EXPERIMENT_CLIMATE,
    ablation_sim,
    ablation_text,
    combined_variation,
    experiment_feature,
    write_ablation_csv,
)
from homesynth.label import LabelerConfig
from homesynth.simulate import run_surrogate


class KeywordRater(TextBackend):
    """Scores 0.1 for immaculate systems, 0.9 for failing ones."""

    model_id = "keyword-rater"
    max_retries = 3
    retry_delay = 0.0

    def generate(self, prompt: str, temperature: float = 0.2, max_tokens: int = 1200) -> str:
        if "immaculate" in prompt:
            return "0.1"
        if "failing" in prompt:
            return "0.9"
        return "0.5"


def print_rows(title: str, rows) -> None:
    print(f"\n{title}")
    for row in rows:
        hvac = "-" if row.hvac_mu_mean is None else f"{row.hvac_mu_mean:.4f}"
        ins = "-" if row.insulation_mu_mean is None else f"{row.insulation_mu_mean:.4f}"
        print(f"  {row.label:<28} hvac={hvac}  insulation={ins}  {row.detail}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="ablation_demo_out", help="output directory")
    parser.add_argument("--trials", type=int, default=5, help="trials per condition")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    constant = LabelerConfig(backend=ScriptedTextBackend(["0.5"]))
    sim_rows = ablation_sim(constant, variable="HVACC", trials=args.trials)
    write_ablation_csv(sim_rows, out / "ablation_sim.csv")
    print_rows("sim sweep (HVACC, constant text score)", sim_rows)

    efficient = PerformanceParams(1.0, 4.0, 30.0, 50.0, 0.3)
    inefficient = PerformanceParams(0.7, 1.0, 4.0, 10.0, 3.0)
    sims = tuple(
        run_surrogate(experiment_feature(p), DEFAULT_EXPERIMENT_CLIMATE)
        for p in (efficient, inefficient)
    )
    notes = (
        ("efficient-note", "Recently renovated; immaculate systems throughout."),
        ("inefficient-note", "Original, failing equipment and minimal insulation."),
    )
    combined_rows = combined_variation(
        LabelerConfig(backend=KeywordRater()), notes, sims, trials=args.trials
    )
    write_ablation_csv(combined_rows, out / "ablation_combined.csv")
    print_rows("combined 2x2 (keyword rater)", combined_rows)

    text_rows = ablation_text(LabelerConfig(backend=MockTextBackend()), trials=args.trials)
    write_ablation_csv(text_rows, out / "ablation_text.csv")
    print_rows("text sweep (hash-scored mock; ordering arbitrary)", text_rows)

    print(f"\nwrote ablation_sim.csv, ablation_combined.csv, ablation_text.csv under {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
