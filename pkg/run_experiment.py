#!/usr/bin/env python3
"""
Experiment Runner
Builds simulation scenarios from a YAML configuration, runs every policy of
the comparison (optionally over a parameter sweep) and writes per-epoch
CSVs, run summaries and a cross-policy comparison table.
"""

import copy
import sys
import logging
import argparse
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from distortion import StreamProfile, load_profile
from metrics import (
    RunSummary,
    compare_policies,
    log_summary,
    write_comparison_csv,
    write_comparison_workbook,
    write_epochs_csv,
    write_summary_csv,
)
from net_model import RatePolicy
from policy_aimd import GREEDY, PROPORTIONAL, AimdParams, AimdPolicy
from policy_hinf import HinfParams, HinfPolicy
from policy_media import MediaAwarePolicy, MediaPolicyParams
from simulator import ON_OFF, ConfigError, NetworkSpec, SimConfig, Simulator, StreamSpec
from traces import NETWORK_PROFILES, TraceParseError, TraceSeries, TraceValidationError, load_trace, synth_trace

logger = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).parent / "scenarios"
DEFAULT_CONFIG = "experiment.config.yaml"
POLICY_NAMES = ('media_aware', 'hinf', 'aimd_greedy', 'aimd_proportional')
AUTO = 'auto'

TOP_KEYS = {'description', 'sim', 'networks', 'streams', 'policies', 'compare', 'sweep'}
SIM_KEYS = {
    'duration_s': 'duration', 'epoch_s': 'epoch', 'gop_duration_s': 'gop_duration',
    'packet_size': 'packet_size', 'seed': 'seed', 'random_loss_rate': 'random_loss_rate',
    'measurement_noise': 'measurement_noise', 'measurement_window_s': 'measurement_window',
    'record_packets': 'record_packets',
}
NETWORK_KEYS = {'trace', 'synth', 'background_load', 'background_model', 'enabled'}
SYNTH_KEYS = {'mean_abr_kbps', 'abr_std_kbps', 'mean_rtt_ms', 'rtt_std_ms', 'period_s'}
STREAM_KEYS = {'profile', 'd0', 'theta_kbps_mse', 'r0_kbps', 'kappa', 'deadline_ms',
               'min_rate_kbps', 'policy', 'start_s', 'stop_s', 'enabled'}
INLINE_PROFILE_KEYS = ('d0', 'theta_kbps_mse', 'r0_kbps', 'kappa')
POLICY_KEYS = {
    'media_aware': {'kappa_prime', 'search_tol_kbps', 'alpha_smoothing', 'safety_margin', 'step_size'},
    'hinf': {'a', 'b', 'phi', 'h', 'g', 'gamma', 'gamma_factor', 'mu_kbps_per_s', 'mu_fraction', 'variant'},
    'aimd_greedy': {'delta_r_kbps', 'delta_t_s', 'rtt_threshold_ms'},
    'aimd_proportional': {'delta_r_kbps', 'delta_t_s', 'rtt_threshold_ms'},
}


@dataclass
class StreamEntry:
    name: str
    profile: StreamProfile
    policy: str
    start: float
    stop: Optional[float]


@dataclass
class Scenario:
    """Validated, fully built inputs of one simulation family."""
    sim: SimConfig
    networks: List[NetworkSpec]
    streams: List[StreamEntry]
    policies: Dict[str, Dict[str, Any]]
    compare: List[str]


def load_config(path: Path) -> Dict[str, Any]:
    """Read a YAML experiment config; raises ConfigError on IO or syntax problems."""
    path = Path(path)
    try:
        with open(path, 'r') as f:
            config = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"Configuration file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"Error parsing YAML configuration {path}: {e}")
    if config is None:
        config = {}
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config


def resolve_config_path(name: str) -> Path:
    """Accept a config file path or the name of a canned scenario."""
    path = Path(name)
    if path.exists():
        return path
    scenario = SCENARIO_DIR / f"{name}.config.yaml"
    if scenario.exists():
        return scenario
    return path


def list_scenarios() -> Dict[str, str]:
    scenarios = {}
    for path in sorted(SCENARIO_DIR.glob("*.config.yaml")):
        name = path.name[:-len(".config.yaml")]
        try:
            scenarios[name] = str(load_config(path).get('description', '')).strip()
        except ConfigError as e:
            scenarios[name] = f"(unreadable: {e})"
    return scenarios


def _unknown_keys(section: Any, allowed, prefix: str, diagnostics: List[str]) -> Dict[str, Any]:
    if section is None:
        return {}
    if not isinstance(section, dict):
        diagnostics.append(f"{prefix}: expected a mapping, got {type(section).__name__}")
        return {}
    for key in section:
        if key not in allowed:
            diagnostics.append(f"{prefix}.{key}: unknown key")
    return section


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _require_number(section: Dict[str, Any], key: str, prefix: str, diagnostics: List[str],
                    default: Optional[float] = None) -> Optional[float]:
    value = section.get(key, default)
    if value is None:
        if default is None and key not in section:
            diagnostics.append(f"{prefix}.{key}: required")
        return None
    if not _is_number(value):
        diagnostics.append(f"{prefix}.{key}: expected a number, got {value!r}")
        return None
    return float(value)


def _build_sim(raw: Any, diagnostics: List[str]) -> Optional[SimConfig]:
    section = _unknown_keys(raw, SIM_KEYS, 'sim', diagnostics)
    kwargs = {}
    for key, target in SIM_KEYS.items():
        if key not in section:
            continue
        value = section[key]
        if key == 'record_packets':
            if not isinstance(value, bool):
                diagnostics.append(f"sim.{key}: expected true or false, got {value!r}")
                continue
        elif not _is_number(value):
            diagnostics.append(f"sim.{key}: expected a number, got {value!r}")
            continue
        elif key in ('packet_size', 'seed'):
            if int(value) != value:
                diagnostics.append(f"sim.{key}: expected an integer, got {value!r}")
                continue
            value = int(value)
        kwargs[target] = value
    try:
        return SimConfig(**kwargs)
    except ConfigError as e:
        diagnostics.append(f"sim: {e}")
        return None


def _network_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _build_trace(name: str, section: Dict[str, Any], base_dir: Path, sim: Optional[SimConfig],
                 index: int, diagnostics: List[str]) -> Optional[TraceSeries]:
    prefix = f"networks.{name}"
    has_trace, has_synth = 'trace' in section, 'synth' in section
    if has_trace == has_synth:
        diagnostics.append(f"{prefix}: exactly one of 'trace' or 'synth' is required")
        return None
    duration = sim.duration if sim else 600.0
    seed = _network_seed(sim.seed if sim else 0, index)

    if has_trace:
        path = base_dir / str(section['trace'])
        try:
            trace = load_trace(path)
        except FileNotFoundError:
            diagnostics.append(f"{prefix}.trace: file not found: {path}")
            return None
        except TraceParseError as e:
            diagnostics.append(f"{prefix}.trace: {path}: {e}")
            return None
        except TraceValidationError as e:
            diagnostics.append(f"{prefix}.trace: {e}")
            return None
        if trace.end < duration:
            diagnostics.append(f"{prefix}.trace: covers {trace.end:.1f}s but sim.duration_s is {duration:.1f}s")
            return None
        return trace

    synth = section['synth']
    if isinstance(synth, str):
        if synth not in NETWORK_PROFILES:
            diagnostics.append(f"{prefix}.synth: unknown profile '{synth}', expected one of {sorted(NETWORK_PROFILES)}")
            return None
        return synth_trace(duration=duration, seed=seed, **NETWORK_PROFILES[synth])
    params = _unknown_keys(synth, SYNTH_KEYS, f"{prefix}.synth", diagnostics)
    if not params:
        return None
    values = {key: _require_number(params, key, f"{prefix}.synth", diagnostics)
              for key in ('mean_abr_kbps', 'abr_std_kbps', 'mean_rtt_ms', 'rtt_std_ms')}
    period = _require_number(params, 'period_s', f"{prefix}.synth", diagnostics, default=2.0)
    if any(v is None for v in values.values()) or period is None:
        return None
    try:
        return synth_trace(
            mean_abr=values['mean_abr_kbps'] * 1e3, abr_std=values['abr_std_kbps'] * 1e3,
            mean_rtt=values['mean_rtt_ms'] / 1e3, rtt_std=values['rtt_std_ms'] / 1e3,
            duration=duration, period=period, seed=seed,
        )
    except (ValueError, TraceValidationError) as e:
        diagnostics.append(f"{prefix}.synth: {e}")
        return None


def _build_networks(raw: Any, base_dir: Path, sim: Optional[SimConfig],
                    diagnostics: List[str]) -> List[NetworkSpec]:
    if not isinstance(raw, dict) or not raw:
        diagnostics.append("networks: at least one network is required")
        return []
    networks = []
    disabled = []
    for index, (name, section) in enumerate(raw.items()):
        section = _unknown_keys(section, NETWORK_KEYS, f"networks.{name}", diagnostics)
        if not section.get('enabled', True):
            disabled.append(str(name))
            continue
        load = _require_number(section, 'background_load', f"networks.{name}", diagnostics, default=0.0)
        trace = _build_trace(str(name), section, base_dir, sim, index, diagnostics)
        if trace is None or load is None:
            continue
        try:
            networks.append(NetworkSpec(id=len(networks), trace=trace, background_load=load, name=str(name),
                                        background_model=str(section.get('background_model', ON_OFF))))
        except ConfigError as e:
            diagnostics.append(f"networks.{name}: {e}")
    if disabled:
        logger.warning(f"Skipped disabled networks: {', '.join(disabled)}")
    if not networks and not any(d.startswith("networks") for d in diagnostics):
        diagnostics.append("networks: no enabled network")
    return networks


def _build_streams(raw: Any, base_dir: Path, diagnostics: List[str]) -> List[StreamEntry]:
    if not isinstance(raw, dict) or not raw:
        diagnostics.append("streams: at least one stream is required")
        return []
    streams = []
    disabled = []
    for name, section in raw.items():
        prefix = f"streams.{name}"
        section = _unknown_keys(section, STREAM_KEYS, prefix, diagnostics)
        if not section.get('enabled', True):
            disabled.append(str(name))
            continue
        deadline_ms = _require_number(section, 'deadline_ms', prefix, diagnostics, default=300.0)
        min_rate_kbps = _require_number(section, 'min_rate_kbps', prefix, diagnostics, default=1000.0)
        start = _require_number(section, 'start_s', prefix, diagnostics, default=0.0)
        stop = section.get('stop_s')
        if stop is not None and not _is_number(stop):
            diagnostics.append(f"{prefix}.stop_s: expected a number, got {stop!r}")
            continue
        policy = section.get('policy', 'media_aware')
        if policy not in POLICY_NAMES:
            diagnostics.append(f"{prefix}.policy: unknown policy '{policy}', expected one of {list(POLICY_NAMES)}")
        if None in (deadline_ms, min_rate_kbps, start):
            continue

        stream_id = len(streams)
        try:
            if 'profile' in section:
                if any(key in section for key in INLINE_PROFILE_KEYS):
                    diagnostics.append(f"{prefix}: give either 'profile' or inline DR parameters, not both")
                    continue
                profile = load_profile(base_dir / str(section['profile']), deadline=deadline_ms / 1e3,
                                       min_rate=min_rate_kbps * 1e3, stream_id=stream_id, name=str(name))
            else:
                values = {key: _require_number(section, key, prefix, diagnostics) for key in INLINE_PROFILE_KEYS}
                if any(v is None for v in values.values()):
                    continue
                profile = StreamProfile(
                    d0=values['d0'], theta=values['theta_kbps_mse'] * 1e3, r0=values['r0_kbps'] * 1e3,
                    kappa=values['kappa'], deadline=deadline_ms / 1e3, min_rate=min_rate_kbps * 1e3,
                    id=stream_id, name=str(name),
                )
        except FileNotFoundError:
            diagnostics.append(f"{prefix}.profile: file not found: {base_dir / str(section['profile'])}")
            continue
        except ValueError as e:
            diagnostics.append(f"{prefix}: {e}")
            continue
        if stop is not None and stop <= start:
            diagnostics.append(f"{prefix}.stop_s: must be after start_s")
            continue
        streams.append(StreamEntry(str(name), profile, policy, start, None if stop is None else float(stop)))
    if disabled:
        logger.warning(f"Skipped disabled streams: {', '.join(disabled)}")
    if not streams and not any(d.startswith("streams") for d in diagnostics):
        diagnostics.append("streams: no enabled stream")
    return streams


def _media_params(section: Dict[str, Any], streams: Sequence[StreamEntry]) -> MediaPolicyParams:
    kappa_prime = section.get('kappa_prime', AUTO)
    if kappa_prime == AUTO:
        kappa_prime = float(sum(s.profile.kappa for s in streams))
    return MediaPolicyParams(
        kappa_prime=kappa_prime,
        search_tol=section.get('search_tol_kbps', 1.0) * 1e3,
        alpha_smoothing=section.get('alpha_smoothing', 0.5),
        safety_margin=section.get('safety_margin', 0.02),
        step_size=section.get('step_size', 1.0),
    )


def _hinf_params(section: Dict[str, Any], sim: SimConfig) -> HinfParams:
    kwargs = {key: section[key] for key in ('a', 'b', 'phi', 'h', 'g', 'gamma_factor', 'mu_fraction', 'variant')
              if key in section}
    gamma = section.get('gamma', AUTO)
    mu = section.get('mu_kbps_per_s', AUTO)
    return HinfParams(
        gamma=None if gamma == AUTO else gamma,
        mu=None if mu == AUTO else mu * 1e3,
        dt=sim.epoch,
        **kwargs,
    )


def _aimd_params(name: str, section: Dict[str, Any], profile: StreamProfile) -> AimdParams:
    kwargs = {'variant': GREEDY if name == 'aimd_greedy' else PROPORTIONAL}
    if 'delta_r_kbps' in section:
        kwargs['delta_r'] = section['delta_r_kbps'] * 1e3
    if 'delta_t_s' in section:
        kwargs['delta_t'] = section['delta_t_s']
    threshold = section.get('rtt_threshold_ms', AUTO)
    if threshold != AUTO:
        kwargs['rtt_threshold'] = threshold / 1e3
    return AimdParams.for_deadline(profile.min_rate, profile.deadline, **kwargs)


def make_policy(name: str, entry: StreamEntry, scenario: Scenario) -> RatePolicy:
    """Fresh policy object for one stream."""
    section = scenario.policies.get(name) or {}
    if name == 'media_aware':
        return MediaAwarePolicy(entry.profile, _media_params(section, scenario.streams))
    if name == 'hinf':
        return HinfPolicy(entry.profile.min_rate, _hinf_params(section, scenario.sim), entry.profile.id)
    if name in ('aimd_greedy', 'aimd_proportional'):
        return AimdPolicy(_aimd_params(name, section, entry.profile), entry.profile.id)
    raise ConfigError(f"Unknown policy '{name}'")


def _check_policies(raw: Any, streams: Sequence[StreamEntry], sim: Optional[SimConfig],
                    diagnostics: List[str]) -> Dict[str, Dict[str, Any]]:
    section = _unknown_keys(raw, POLICY_KEYS.keys(), 'policies', diagnostics)
    policies: Dict[str, Dict[str, Any]] = {}
    for name, params in section.items():
        if name not in POLICY_KEYS:
            continue
        params = _unknown_keys(params, POLICY_KEYS[name], f"policies.{name}", diagnostics)
        for key, value in params.items():
            if key in POLICY_KEYS[name] and not _is_number(value) and value != AUTO and key != 'variant':
                diagnostics.append(f"policies.{name}.{key}: expected a number or 'auto', got {value!r}")
        policies[name] = dict(params)

    for name in POLICY_NAMES:
        params = policies.get(name, {})
        if any(not _is_number(v) and v != AUTO and k != 'variant' for k, v in params.items()):
            continue
        try:
            if name == 'media_aware':
                _media_params(params, streams)
            elif name == 'hinf':
                _hinf_params(params, sim or SimConfig())
            else:
                for entry in streams:
                    _aimd_params(name, params, entry.profile)
        except (ValueError, TypeError) as e:
            diagnostics.append(f"policies.{name}: {e}")
    return policies


def _check_compare(raw: Any, diagnostics: List[str]) -> List[str]:
    if raw is None:
        return []
    if not isinstance(raw, list) or not raw:
        diagnostics.append("compare: expected a non-empty list of policy names")
        return []
    for name in raw:
        if name not in POLICY_NAMES:
            diagnostics.append(f"compare: unknown policy '{name}', expected one of {list(POLICY_NAMES)}")
    if len(set(raw)) != len(raw):
        diagnostics.append("compare: policy names must be unique")
    return [str(name) for name in raw]


def build_scenario(config: Dict[str, Any], base_dir: Path, diagnostics: List[str]) -> Optional[Scenario]:
    """Build every simulation input, appending one diagnostic per violated rule."""
    for key in config:
        if key not in TOP_KEYS:
            diagnostics.append(f"{key}: unknown key")
    sim = _build_sim(config.get('sim'), diagnostics)
    networks = _build_networks(config.get('networks'), base_dir, sim, diagnostics)
    streams = _build_streams(config.get('streams'), base_dir, diagnostics)
    policies = _check_policies(config.get('policies'), streams, sim, diagnostics)
    compare = _check_compare(config.get('compare'), diagnostics)
    if diagnostics or sim is None:
        return None
    return Scenario(sim=sim, networks=networks, streams=streams, policies=policies, compare=compare)


def _set_dotted(config: Dict[str, Any], key: str, value: Any, diagnostics: List[str]) -> None:
    parts = key.split('.')
    targets = [config]
    for part in parts[:-1]:
        following = []
        for target in targets:
            if not isinstance(target, dict):
                continue
            if part == '*':
                following.extend(v for v in target.values() if isinstance(v, dict))
            else:
                following.append(target.setdefault(part, {}))
        targets = following
    if not targets:
        diagnostics.append(f"sweep.{key}: matches nothing")
    for target in targets:
        if isinstance(target, dict):
            target[parts[-1]] = value


def _sweep_label(keys: Sequence[str], values: Sequence[Any]) -> str:
    leaves = [k.split('.')[-1] for k in keys]
    names = leaves if len(set(leaves)) == len(leaves) else [k.replace('*', 'all') for k in keys]
    return "__".join(f"{name}={value}" for name, value in zip(names, values))


def expand_sweep(config: Dict[str, Any], diagnostics: List[str]) -> List[Tuple[str, Dict[str, Any]]]:
    """(label, config) per point of the sweep grid; a single unlabeled entry without sweep."""
    sweep = config.get('sweep')
    base = {k: v for k, v in config.items() if k != 'sweep'}
    if not sweep:
        return [("", base)]
    if not isinstance(sweep, dict):
        diagnostics.append("sweep: expected a mapping of dotted key to list of values")
        return [("", base)]
    keys = list(sweep)
    for key in keys:
        if not isinstance(sweep[key], list) or not sweep[key]:
            diagnostics.append(f"sweep.{key}: expected a non-empty list of values")
            return [("", base)]
    points = []
    for values in itertools.product(*(sweep[k] for k in keys)):
        variant = copy.deepcopy(base)
        for key, value in zip(keys, values):
            _set_dotted(variant, key, value, diagnostics)
        points.append((_sweep_label(keys, values), variant))
    return points


def _apply_overrides(config: Dict[str, Any], seed: Optional[int],
                     sweep: Optional[Sequence[str]]) -> Dict[str, Any]:
    config = copy.deepcopy(config)
    if seed is not None:
        sim = config.get('sim')
        if sim is None or not isinstance(sim, dict):
            sim = config['sim'] = {}
        sim['seed'] = seed
    for item in sweep or ():
        if '=' not in item:
            raise ConfigError(f"--sweep expects key=v1,v2,..., got '{item}'")
        key, values = item.split('=', 1)
        parsed = [yaml.safe_load(v) for v in values.split(',') if v.strip()]
        if not isinstance(config.get('sweep'), dict):
            config['sweep'] = {}
        config['sweep'][key.strip()] = parsed
    return config


def validate_config(path: Path, seed: Optional[int] = None,
                    sweep: Optional[Sequence[str]] = None) -> List[str]:
    """Every diagnostic for a config file; an empty list means it can run."""
    path = Path(path)
    try:
        config = _apply_overrides(load_config(path), seed, sweep)
    except ConfigError as e:
        return [str(e)]
    diagnostics: List[str] = []
    points = expand_sweep(config, diagnostics)
    for label, variant in points:
        found: List[str] = []
        build_scenario(variant, path.parent, found)
        for message in found:
            message = f"[{label}] {message}" if label and len(points) > 1 else message
            if message not in diagnostics:
                diagnostics.append(message)
    if len(points) > 1:
        diagnostics = _collapse_sweep_duplicates(diagnostics)
    return diagnostics


def _collapse_sweep_duplicates(diagnostics: List[str]) -> List[str]:
    """Drop the sweep prefix of diagnostics that every sweep point reports."""
    stripped: Dict[str, List[str]] = {}
    for message in diagnostics:
        body = message.split('] ', 1)[1] if message.startswith('[') else message
        stripped.setdefault(body, []).append(message)
    result = []
    for body, messages in stripped.items():
        result.extend([body] if len(messages) > 1 else messages)
    return result


def run_single(label: str, policy_name: str, config: Dict[str, Any], base_dir: str,
               out_dir: str) -> RunSummary:
    """One simulation; module-level so that a process pool can execute it."""
    diagnostics: List[str] = []
    scenario = build_scenario(config, Path(base_dir), diagnostics)
    if scenario is None:
        raise ConfigError("; ".join(diagnostics))
    streams = [
        StreamSpec(
            id=entry.profile.id, profile=entry.profile,
            policy=make_policy(policy_name or entry.policy, entry, scenario),
            start=entry.start, stop=entry.stop, name=entry.name,
        )
        for entry in scenario.streams
    ]
    name = policy_name or _mixed_label(scenario)
    logger.info(f"Running {name}{f' [{label}]' if label else ''}: {len(streams)} stream(s), "
                f"{len(scenario.networks)} network(s), {scenario.sim.duration:.0f}s")
    simulator = Simulator(scenario.sim, scenario.networks, streams, policy_name=name)
    summary = simulator.run()
    run_dir = Path(out_dir) / label / name
    write_epochs_csv(simulator.reports, run_dir / "epochs.csv")
    write_summary_csv(summary, run_dir / "summary.csv")
    return summary


def _mixed_label(scenario: Scenario) -> str:
    names = {entry.policy for entry in scenario.streams}
    return names.pop() if len(names) == 1 else "mixed"


class ExperimentRunner:
    def __init__(self, config_path: str = DEFAULT_CONFIG, out_dir: str = "results", seed: Optional[int] = None,
                 sweep: Optional[Sequence[str]] = None, jobs: int = 1, xlsx: bool = False):
        """Initialize the experiment runner."""
        self.config_path = resolve_config_path(config_path)
        self.out_dir = Path(out_dir)
        self.seed = seed
        self.sweep = list(sweep or [])
        self.jobs = max(1, int(jobs))
        self.xlsx = xlsx
        self.config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        config = _apply_overrides(load_config(self.config_path), self.seed, self.sweep)
        logger.info(f"Loaded configuration from {self.config_path}")
        return config

    def _tasks(self) -> List[Tuple[str, str, Dict[str, Any]]]:
        diagnostics: List[str] = []
        tasks = []
        for label, variant in expand_sweep(self.config, diagnostics):
            compare = variant.get('compare') or [""]
            for policy in compare:
                tasks.append((label, policy, variant))
        return tasks

    def run(self) -> int:
        diagnostics = validate_config(self.config_path, self.seed, self.sweep)
        if diagnostics:
            logger.error(f"Configuration {self.config_path} has {len(diagnostics)} problem(s):")
            for message in diagnostics:
                logger.error(f"  {message}")
            return 1

        tasks = self._tasks()
        base_dir = str(self.config_path.parent)
        logger.info("=" * 60)
        logger.info(f"EXPERIMENT: {self.config_path.name} ({len(tasks)} run(s), {self.jobs} job(s))")
        logger.info("=" * 60)

        if self.jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                futures = [pool.submit(run_single, label, policy, variant, base_dir, str(self.out_dir))
                           for label, policy, variant in tasks]
                summaries = [future.result() for future in futures]
        else:
            summaries = [run_single(label, policy, variant, base_dir, str(self.out_dir))
                         for label, policy, variant in tasks]

        by_label: Dict[str, List[RunSummary]] = {}
        for (label, _, _), summary in zip(tasks, summaries):
            by_label.setdefault(label, []).append(summary)
            log_summary(summary)

        for label, group in by_label.items():
            rows = compare_policies(group)
            target = self.out_dir / label
            write_comparison_csv(rows, target / "comparison.csv")
            if self.xlsx:
                write_comparison_workbook(rows, target / "comparison.xlsx")
            logger.info(f"Comparison written to {target / 'comparison.csv'}")

        logger.info(f"Experiment finished: {len(summaries)} run(s) written under {self.out_dir}")
        return 0


def run_experiment(config_path: str, out_dir: str, seed: Optional[int] = None,
                   sweep: Optional[Sequence[str]] = None, jobs: int = 1, xlsx: bool = False) -> int:
    """Validate, run and write one experiment; returns the process exit status."""
    try:
        return ExperimentRunner(config_path, out_dir, seed, sweep, jobs, xlsx).run()
    except (ConfigError, OSError, ValueError) as e:
        logger.error(f"Fatal error: {e}")
        return 1


def main():
    """Main entry point."""
    parser = argparse.ArgumentParser(
        description='Simulate and compare rate allocation policies for multi-network video streaming'
    )
    parser.add_argument('--verbose', action='store_true', help='Enable debug logging')
    subparsers = parser.add_subparsers(dest='command', required=True)

    run_parser = subparsers.add_parser('run', help='Run an experiment config or canned scenario')
    run_parser.add_argument('config', nargs='?', default=DEFAULT_CONFIG, help='Config file or scenario name')
    run_parser.add_argument('--out', required=True, help='Output directory')
    run_parser.add_argument('--seed', type=int, help='Override sim.seed')
    run_parser.add_argument('--sweep', action='append', metavar='KEY=V1,V2',
                            help='Sweep a dotted config key over values (repeatable)')
    run_parser.add_argument('--jobs', type=int, default=1, help='Parallel runs (default: 1)')
    run_parser.add_argument('--xlsx', action='store_true', help='Also write comparison.xlsx')

    validate_parser = subparsers.add_parser('validate', help='Check a config without running it')
    validate_parser.add_argument('config', help='Config file or scenario name')

    subparsers.add_parser('list-scenarios', help='List canned scenarios')

    args = parser.parse_args()

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s'
    )

    if args.command == 'list-scenarios':
        for name, description in list_scenarios().items():
            print(f"{name:24s} {description}")
        exit_code = 0
    elif args.command == 'validate':
        path = resolve_config_path(args.config)
        diagnostics = validate_config(path)
        for message in diagnostics:
            logger.error(message)
        if not diagnostics:
            logger.info(f"{path}: configuration is valid")
        exit_code = 1 if diagnostics else 0
    else:
        exit_code = run_experiment(args.config, args.out, args.seed, args.sweep, args.jobs, args.xlsx)

    sys.exit(exit_code)


if __name__ == "__main__":
    main()
