#!/usr/bin/env python3
"""Refit the fig5 and fig6 calibration profiles by grid search.

The shipped profiles in nbiotdlt.config.PROFILES are frozen copies of what
this script prints. Run it to check that the frozen numbers still come out
of the search, or to refit after a model change:

    python demos/fit_profiles.py

It takes around 20 s. Each evaluation is a short multi-seed simulation, so
the fitted constants can differ from a full 1000-transaction run by a few
percent.
"""

from nbiotdlt.calibration import (FIG5_TARGET_RATIO, FIG6_TARGET_B100_S, FIG6_TARGET_BASELINE_S,
                                  fit_fig5, fit_fig6)
from nbiotdlt.config import PROFILES
from nbiotdlt.sim import US_PER_MS


def show_grid(title, res, unit=""):
    print(f"  {title}: best {res.best}{unit} -> {res.value:.4f} (|error| {res.error:.4f})")
    for x, v in res.table:
        mark = " <" if x == res.best else ""
        print(f"      {x:>8}{unit}  {v:.4f}{mark}")


def main():
    print("fig5: DL header bytes for endorsement responses and confirmations")
    print(f"  target ratio at P=50 B, E=2: {FIG5_TARGET_RATIO}")
    prof5, res5 = fit_fig5()
    show_grid("last pass", res5, " B")

    print("\nfig6: connected-mode setup, then per-slot block cost")
    print(f"  targets: baseline {FIG6_TARGET_BASELINE_S} s, b=100 {FIG6_TARGET_B100_S} s")
    prof6, setup, slot = fit_fig6()
    show_grid("setup, last pass", setup, " ms")
    show_grid("per-slot, last pass", slot, " ms")

    header = dict(prof5.header_overrides)
    print("\nprofile literals for nbiotdlt/config.py:")
    print(f'    "fig5": header_overrides=tuple((c, {next(iter(header.values()))}) for c in _DLT_DL)')
    print(f'    "fig6": connected_setup=ms({prof6.connected_setup / US_PER_MS:g}), '
          f'block_proc_per_slot=ms({prof6.block_proc_per_slot / US_PER_MS:g})')

    frozen5, frozen6 = PROFILES["fig5"], PROFILES["fig6"]
    same = (frozen5.header_overrides == prof5.header_overrides
            and frozen6.connected_setup == prof6.connected_setup
            and frozen6.block_proc_per_slot == prof6.block_proc_per_slot)
    print("\nfrozen profiles match this fit" if same else "\nfrozen profiles DIFFER from this fit")


if __name__ == "__main__":
    main()
