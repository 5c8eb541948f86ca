"""
CSV, SVG and text output for runs, sweeps, scenarios and oracle analyses.

Run CSV columns: n, covered, potential, positions ("x:y" cells joined by ";"),
then the learner's diagnostics in sorted order.
"""

import csv
import logging
import os

import numpy as np
import yaml
from django.template.loader import render_to_string

from .experiments import time_to_fraction
from .forms import describe_profile


logger = logging.getLogger(__name__)

RUN_COLUMNS = ("n", "covered", "potential", "positions")

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _ensure_parent(path):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)


def _cell(value):
    if isinstance(value, (tuple, list)):
        return ";".join(_cell(item) for item in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _positions(positions):
    return ";".join("{}:{}".format(x, y) for x, y in positions)


def write_run_csv(record, path):
    diagnostics = sorted({key for row in record.rows for key in row} - set(RUN_COLUMNS))
    _ensure_parent(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(RUN_COLUMNS) + diagnostics)
        for row in record.rows:
            writer.writerow([row["n"], _cell(row["covered"]), _cell(row["potential"]), _positions(row["positions"])] +
                            [_cell(row.get(key, "")) for key in diagnostics])
    return path


def write_estimates_csv(record, path):
    _ensure_parent(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["n", "robot", "component", "weight", "mean_x", "mean_y", "cov_xx", "cov_xy", "cov_yy"])
        for n, robots in record.estimates:
            for robot, rows in enumerate(robots):
                for row in rows:
                    writer.writerow([n, robot, row["component"]] + [repr(row[key]) for key in (
                        "weight", "mean_x", "mean_y", "cov_xx", "cov_xy", "cov_yy")])
    return path


def write_trajectory_csv(rows, path):
    """
    (n, joint action, potential) rows from loglinear.simulate
    """
    _ensure_parent(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["n", "profile", "potential"])
        for n, profile, value in rows:
            writer.writerow([n, _cell(profile), repr(value)])
    return path


def write_band_csv(report, path):
    labels = list(report.bands)
    length = max((len(band.mean) for band in report.bands.values()), default=0)
    _ensure_parent(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["n"] + ["{}_{}".format(label, part) for label in labels
                                 for part in ("mean", "lower", "upper")])
        for n in range(length):
            row = [n + 1]
            for label in labels:
                band = report.bands[label]
                index = min(n, len(band.mean) - 1)
                row += [repr(float(band.mean[index])), repr(float(band.lower[index])),
                        repr(float(band.upper[index]))]
            writer.writerow(row)
    return path


def write_summary_csv(report, path):
    _ensure_parent(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["label", "seed", "iterations", "steady", "final_covered", "time_to_90", "wall_time"])
        for (label, seed), record in sorted(report.records.items()):
            writer.writerow([label, seed, record.iterations, record.steady, repr(record.final_covered),
                             time_to_fraction(record.covered), "{:.3f}".format(record.wall_time)])
        for label, seed, message in report.failures:
            writer.writerow([label, seed, "", "", "", "", "failed: {}".format(message)])
    return path


def write_field_csv(raster, path):
    _ensure_parent(path)
    np.savetxt(path, np.asarray(raster), delimiter=",", fmt="%.17g")
    return path


def dump_scenario(field, path):
    _ensure_parent(path)
    with open(path, "w") as handle:
        yaml.safe_dump({"scenario": field.to_dict()}, handle, default_flow_style=None, sort_keys=False)
    return path


def _scale(values, low, high, start, stop):
    span = (high - low) or 1.0
    return start + (np.asarray(values, dtype=float) - low) / span * (stop - start)


def _points(xs, ys):
    return " ".join("{:.2f},{:.2f}".format(x, y) for x, y in zip(xs, ys))


def render_band_svg(report, width=720, height=360, margin=48):
    bands = list(report.bands.values())
    length = max((len(band.mean) for band in bands), default=1)
    top = max((float(band.upper.max()) for band in bands if len(band.upper)), default=1.0) or 1.0

    series = []
    for position, band in enumerate(bands):
        steps = np.arange(1, len(band.mean) + 1)
        xs = _scale(steps, 1, max(length, 2), margin, width - margin)
        upper = _scale(band.upper, 0.0, top, height - margin, margin)
        lower = _scale(band.lower, 0.0, top, height - margin, margin)
        mean = _scale(band.mean, 0.0, top, height - margin, margin)
        series.append({
            "label": band.label,
            "colour": PALETTE[position % len(PALETTE)],
            "envelope": _points(np.concatenate([xs, xs[::-1]]), np.concatenate([upper, lower[::-1]])),
            "mean": _points(xs, mean),
            "legend_y": margin + 16 * position,
        })

    return render_to_string("band.svg", {
        "width": width,
        "height": height,
        "margin": margin,
        "plot_right": width - margin,
        "plot_bottom": height - margin,
        "series": series,
        "iterations": length,
        "top": "{:.4f}".format(top),
    })


def _shade(value, top):
    level = 0.0 if top <= 0 else min(1.0, value / top)
    channel = int(round(255 * (1.0 - level)))
    return "rgb({},{},255)".format(channel, channel)


def render_world_svg(record, cell_size=12):
    raster = record.field.raster
    size = raster.shape[0]
    top = float(raster.max())
    delta = record.config.delta

    cells = [{"x": ix * cell_size, "y": iy * cell_size, "fill": _shade(raster[ix, iy], top)}
             for ix in range(size) for iy in range(size)]
    flags = [{"x": (x + 0.5) * cell_size, "y": (y + 0.5) * cell_size, "colour": PALETTE[robot % len(PALETTE)]}
             for robot, cells_flagged in enumerate(record.flags) for x, y in cells_flagged]
    robots = [{"x": (x + 0.5) * cell_size, "y": (y + 0.5) * cell_size, "colour": PALETTE[robot % len(PALETTE)],
               "radius": delta * cell_size, "label": robot}
              for robot, (x, y) in enumerate(record.final_positions)]

    return render_to_string("world.svg", {
        "side": size * cell_size,
        "cell_size": cell_size,
        "cells": cells,
        "flags": flags,
        "robots": robots,
        "covered": "{:.6f}".format(record.final_covered),
    })


def write_svg(svg, path):
    _ensure_parent(path)
    with open(path, "w") as handle:
        handle.write(svg)
    return path


def _describe(profile, labels):
    if labels is None:
        return str(tuple(profile))
    return describe_profile(profile, labels)


def render_oracle_report(report, labels=None):
    states = report.states
    stationary = [{"state": _describe(state, labels),
                   "masses": ["{:.6g}".format(distribution[position]) for distribution in report.distributions]}
                  for position, state in enumerate(states)]
    resistances = [{"source": _describe(item.source, labels), "target": _describe(item.target, labels),
                    "deviators": sorted(item.deviators), "resistance": "{:.6g}".format(item.resistance)}
                   for item in report.resistances if item.source != item.target]
    potentials = [{"state": _describe(state, labels), "value": "{:.6g}".format(value)}
                  for state, value in sorted(report.potentials.items())]

    return render_to_string("oracle_report.txt", {
        "report": report,
        "epsilons": ["{:g}".format(epsilon) for epsilon in report.epsilons],
        "stationary": stationary,
        "stable": [_describe(state, labels) for state in sorted(report.stable_states)],
        "maximisers": [_describe(state, labels) for state in sorted(report.maximisers)],
        "resistances": resistances,
        "potentials": potentials,
    })


def write_oracle_csv(report, directory, labels=None):
    os.makedirs(directory, exist_ok=True)
    resistances = os.path.join(directory, "resistances.csv")
    with open(resistances, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["source", "target", "deviators", "resistance"])
        for item in report.resistances:
            writer.writerow([_describe(item.source, labels), _describe(item.target, labels),
                             ";".join(str(i) for i in sorted(item.deviators)), repr(item.resistance)])

    stationary = os.path.join(directory, "stationary.csv")
    with open(stationary, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["state"] + ["epsilon={:g}".format(epsilon) for epsilon in report.epsilons] + ["stable"])
        for position, state in enumerate(report.states):
            writer.writerow([_describe(state, labels)] +
                            [repr(float(distribution[position])) for distribution in report.distributions] +
                            [state in report.stable_states])
    return resistances, stationary
