"""
Validation of experiment configs and game specs read from YAML.
"""

import numpy as np
import yaml
from django import forms
from django.core.exceptions import ValidationError

from . import coverage
from .environment import WorthField, generate_scenario
from .exceptions import ConfigError
from .experiments import ALGORITHMS, ENVIRONMENTS, ExperimentConfig
from .games import GameDefinition
from .loglinear import ConstrainedActionMap, RevisionPolicy
from .stability import DEFAULT_EPSILONS, DEFAULT_MASS_THRESHOLD


def positive(value):
    if value is not None and value <= 0:
        raise ValidationError("must be positive, got {}".format(value))


def unit_interval(value):
    if value is not None and not 0 < value < 1:
        raise ValidationError("must lie strictly between 0 and 1, got {}".format(value))


class DataField(forms.Field):
    """
    Passes structured YAML values (lists, mappings, scalars) through untouched
    """


class StrictForm(forms.Form):
    """
    Rejects keys the form does not declare
    """

    def __init__(self, data, *args, **kwargs):
        if not isinstance(data, dict):
            raise ConfigError("expected a mapping at the top level, got {}".format(type(data).__name__))
        unknown = sorted(set(data) - set(self.base_fields))
        if unknown:
            raise ConfigError("unknown key '{}'".format(unknown[0]))
        super().__init__(data, *args, **kwargs)

    def provided(self):
        return {key: self.cleaned_data[key] for key in self.data}

    def raise_for_errors(self, what):
        if not self.is_valid():
            messages = ["{}: {}".format(key, " ".join(errors)) for key, errors in self.errors.items()]
            raise ConfigError("invalid {}: {}".format(what, "; ".join(messages)))


class ExperimentConfigForm(StrictForm):
    algorithm = forms.ChoiceField(choices=[(name, name) for name in ALGORITHMS])
    environment = forms.ChoiceField(choices=[(name, name) for name in ENVIRONMENTS], required=False)
    name = forms.CharField(required=False)

    scenario = DataField(required=False)
    scenario_seed = forms.IntegerField(required=False, min_value=0)
    grid = forms.IntegerField(required=False, min_value=8)
    min_targets = forms.IntegerField(required=False, min_value=1)
    max_targets = forms.IntegerField(required=False, min_value=1)
    robots = forms.IntegerField(required=False, min_value=1)

    temperature = forms.FloatField(required=False, validators=[positive])
    aic_temperature = forms.FloatField(required=False, validators=[positive])

    a1 = forms.FloatField(required=False, validators=[positive])
    a2 = forms.FloatField(required=False, validators=[positive])
    a3 = forms.FloatField(required=False, validators=[unit_interval])
    drop_rate = forms.FloatField(required=False, validators=[positive])
    p_min = forms.FloatField(required=False, validators=[unit_interval])

    mu = forms.FloatField(required=False, validators=[unit_interval])
    theta = forms.FloatField(required=False, validators=[unit_interval])
    xi = forms.FloatField(required=False, validators=[unit_interval])
    zeta = forms.FloatField(required=False, validators=[unit_interval])
    perturbation = forms.BooleanField(required=False)

    energy = forms.FloatField(required=False, validators=[positive])
    delta = forms.FloatField(required=False, validators=[positive])
    motion_radius = forms.FloatField(required=False, min_value=1.0)
    r_com = forms.FloatField(required=False, validators=[positive])
    normalise_worth = forms.BooleanField(required=False)

    f_mode_percentile = forms.FloatField(required=False, min_value=0.0, max_value=100.0)
    repetitions = forms.IntegerField(required=False, min_value=0)
    aic_period = forms.IntegerField(required=False, min_value=1)
    em_iterations = forms.IntegerField(required=False, min_value=0)
    covariance_floor = forms.FloatField(required=False, validators=[positive])

    seeds = DataField(required=False)
    iterations = forms.IntegerField(required=False, min_value=0)
    steady_window = forms.IntegerField(required=False, min_value=2)
    steady_tolerance = forms.FloatField(required=False, min_value=0.0)
    steady_warmup = forms.IntegerField(required=False, min_value=0)

    def clean_seeds(self):
        seeds = self.cleaned_data["seeds"]
        if seeds is None:
            return None
        if isinstance(seeds, int):
            seeds = [seeds]
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
            raise ValidationError("must be an integer or a non-empty list of integers")
        return tuple(seeds)

    def clean_scenario(self):
        scenario = self.cleaned_data["scenario"]
        if scenario is None:
            return None
        if isinstance(scenario, list):
            scenario = {"components": scenario}
        try:
            WorthField.from_dict(dict(scenario, size=scenario.get("size", 40)))
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ValidationError("not a valid component list: {}".format(exc))
        return scenario

    def clean(self):
        cleaned = super().clean()
        if self.errors:
            return cleaned
        try:
            config = ExperimentConfig(**self.provided())
            config.soql_params()
            config.revision_policy()
            if config.min_targets > config.max_targets:
                raise ValueError("min_targets exceeds max_targets")
            if config.robots > config.grid * config.grid:
                raise ValueError("more robots than cells")
            if config.scenario and config.scenario.get("size", config.grid) != config.grid:
                raise ValueError("scenario size {} does not match grid {}".format(
                    config.scenario["size"], config.grid))
        except (TypeError, ValueError) as exc:
            raise ValidationError(str(exc))
        self.config = config
        return cleaned


def _read_yaml(source):
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, str) and "\n" not in source and source.endswith((".yml", ".yaml")):
        with open(source) as handle:
            text = handle.read()
    else:
        text = source
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("could not parse YAML: {}".format(exc)) from exc


def load_experiment_config(source, seed=None, iterations=None):
    """
    ExperimentConfig from a YAML file, stream or string; ``seed`` and
    ``iterations`` override the file
    """
    form = ExperimentConfigForm(_read_yaml(source))
    form.raise_for_errors("experiment config")
    config = form.config

    overrides = {}
    if seed is not None:
        overrides["seeds"] = (seed,)
    if iterations is not None:
        overrides["iterations"] = iterations
    return config.replace(**overrides) if overrides else config


def load_sweep_configs(source, seed=None, iterations=None):
    """
    A sweep file holds ``experiments:`` (a list of configs) and optional
    shared ``defaults:``
    """
    data = _read_yaml(source)
    if not isinstance(data, dict) or "experiments" not in data:
        raise ConfigError("a sweep file needs an 'experiments' list")
    unknown = sorted(set(data) - {"experiments", "defaults"})
    if unknown:
        raise ConfigError("unknown key '{}'".format(unknown[0]))

    defaults = data.get("defaults") or {}
    configs = []
    for item in data["experiments"]:
        form = ExperimentConfigForm(dict(defaults, **item))
        form.raise_for_errors("experiment config")
        configs.append(form.config)

    if iterations is not None:
        configs = [config.replace(iterations=iterations) for config in configs]
    seeds = None if seed is None else [seed]
    return configs, seeds


class GameSpecForm(StrictForm):
    builtin = forms.ChoiceField(choices=[("coverage", "coverage")], required=False)
    players = forms.IntegerField(required=False, min_value=1)
    actions = DataField(required=False)
    utilities = DataField(required=False)
    constraints = DataField(required=False)
    revision_rate = forms.FloatField(required=False, validators=[unit_interval])
    epsilons = DataField(required=False)
    mass_threshold = forms.FloatField(required=False, validators=[unit_interval])

    # builtin coverage
    grid = forms.IntegerField(required=False, min_value=2)
    positions = DataField(required=False)
    scenario = DataField(required=False)
    scenario_seed = forms.IntegerField(required=False, min_value=0)
    energy = forms.FloatField(required=False, validators=[positive])
    delta = forms.FloatField(required=False, validators=[positive])

    def clean_actions(self):
        actions = self.cleaned_data["actions"]
        if actions is None:
            return None
        if not isinstance(actions, list) or not all(isinstance(a, (list, int)) for a in actions):
            raise ValidationError("must be a list with one action list (or action count) per player")
        actions = [list(range(a)) if isinstance(a, int) else a for a in actions]
        if any(not labels for labels in actions):
            raise ValidationError("every player needs at least one action")
        return actions

    def clean_epsilons(self):
        epsilons = self.cleaned_data["epsilons"]
        if epsilons is None:
            return DEFAULT_EPSILONS
        if not isinstance(epsilons, list) or not all(isinstance(e, (int, float)) for e in epsilons):
            raise ValidationError("must be a list of numbers")
        if any(not 0 < e < 1 for e in epsilons) or any(b >= a for a, b in zip(epsilons, epsilons[1:])):
            raise ValidationError("must be strictly decreasing values in (0, 1)")
        return tuple(float(e) for e in epsilons)

    def clean(self):
        cleaned = super().clean()
        if self.errors:
            return cleaned

        if cleaned.get("builtin") == "coverage":
            if not cleaned.get("positions"):
                self.add_error("positions", "the coverage game needs starting positions")
            return cleaned

        actions, utilities = cleaned.get("actions"), cleaned.get("utilities")
        if actions is None:
            self.add_error("actions", "required unless builtin is given")
            return cleaned
        if cleaned.get("players") is not None and cleaned["players"] != len(actions):
            self.add_error("players", "{} players but {} action lists".format(cleaned["players"], len(actions)))
            return cleaned

        sizes = tuple(len(labels) for labels in actions)
        try:
            table = np.asarray(utilities, dtype=float)
        except (TypeError, ValueError):
            self.add_error("utilities", "must be a list of payoff rows")
            return cleaned
        if table.shape != (int(np.prod(sizes)), len(sizes)):
            self.add_error("utilities", "need {} rows of {} payoffs, one per joint action in row-major order".format(
                int(np.prod(sizes)), len(sizes)))
            return cleaned
        if not np.all(np.isfinite(table)):
            self.add_error("utilities", "payoffs must be finite")
            return cleaned

        cleaned["table"] = table.reshape(sizes + (len(sizes),))
        return cleaned


def _constraint_map(spec, sizes, labels):
    if spec in (None, "complete"):
        return ConstrainedActionMap.complete(sizes)
    if not isinstance(spec, list) or len(spec) != len(sizes):
        raise ConfigError("invalid game spec: constraints: need one mapping per player or 'complete'")

    mappings = []
    for player, mapping in enumerate(spec):
        index = {label: position for position, label in enumerate(labels[player])}
        try:
            mappings.append({index[source]: [index[target] for target in targets]
                             for source, targets in mapping.items()})
        except (KeyError, AttributeError) as exc:
            raise ConfigError("invalid game spec: constraints: unknown action {}".format(exc)) from exc
    return ConstrainedActionMap.from_mapping(mappings, sizes)


def _coverage_spec(cleaned):
    grid = cleaned.get("grid") or 4
    if cleaned.get("scenario"):
        scenario = cleaned["scenario"]
        scenario = {"components": scenario} if isinstance(scenario, list) else scenario
        field = WorthField.from_dict(dict(scenario, size=grid))
    else:
        field = generate_scenario(cleaned.get("scenario_seed") or 0, max(grid, 8))
        if grid < 8:
            field = WorthField(field.components, grid)

    options = {}
    if cleaned.get("energy") is not None:
        options["energy"] = cleaned["energy"]
    if cleaned.get("delta") is not None:
        options["delta"] = cleaned["delta"]
    world = coverage.CoverageWorld.from_field(field, [tuple(p) for p in cleaned["positions"]], **options)

    game = coverage.coverage_game(world)
    labels = [["{}:{}".format(*world.cell(index)) for index in range(world.num_cells)]
              for _ in range(world.num_robots)]
    return game, coverage.coverage_constraints(world), labels


def load_game_spec(source):
    """
    (game, constraints, policy, options) from a YAML game spec
    """
    form = GameSpecForm(_read_yaml(source))
    form.raise_for_errors("game spec")
    cleaned = form.cleaned_data

    if cleaned.get("builtin") == "coverage":
        game, constraints, labels = _coverage_spec(cleaned)
    else:
        labels = cleaned["actions"]
        game = GameDefinition.from_table(cleaned["table"], action_sets=labels)
        constraints = _constraint_map(cleaned.get("constraints"), game.sizes, labels)

    policy = RevisionPolicy(fixed_rate=cleaned.get("revision_rate") or 0.5)
    options = {
        "epsilons": cleaned["epsilons"],
        "mass_threshold": cleaned.get("mass_threshold") or DEFAULT_MASS_THRESHOLD,
        "labels": labels,
    }
    return game, constraints, policy, options


def describe_profile(profile, labels):
    return "(" + ", ".join(str(labels[player][action]) for player, action in enumerate(profile)) + ")"
