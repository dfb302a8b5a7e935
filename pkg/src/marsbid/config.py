"""Run configuration: one INI-style text file, environment variable and
command-line overrides, strict key validation, and a stable content hash
that is embedded in every output file.

Precedence (lowest to highest): built-in defaults, config file,
``MARSBID_<SECTION>__<KEY>`` environment variables (dots in section names
become underscores), ``--set section.key=value`` flags.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass

from .bidding_env import GeneratorSpec
from .errors import ConfigError
from .market_data import DateRange, SplitSpec, SyntheticConfig, parse_timestamp
from .ppo_trainer import PpoConfig
from .reward_shaping import ShapingParams

ENV_PREFIX = "MARSBID_"

DEFAULTS = {
    "data": {
        "source": "synthetic",  # synthetic | csv
        "csv_path": "",
    },
    "synthetic": {
        "n_hours": "17520",
        "start": "2021-01-01T00:00:00Z",
        "calm_mean": "40.0",
        "calm_std": "5.0",
        "volatile_mean": "60.0",
        "volatile_std": "25.0",
        "regime_dwell_hours": "72.0",
        "rt_spread_std": "8.0",
        "diurnal_amplitude": "10.0",
        "seed": "0",
        "rt_spike_prob": "0.0",
        "rt_spike_mean": "0.0",
    },
    "split": {
        "train_start": "2021-01-01T00:00:00Z",
        "train_end": "2022-01-01T00:00:00Z",
        "test1_start": "2022-01-01T00:00:00Z",
        "test1_end": "2022-07-01T00:00:00Z",
        "test2_start": "2022-07-01T00:00:00Z",
        "test2_end": "2023-01-01T00:00:00Z",
    },
    "generator": {
        "p_max": "100.0",
        "p_min": "20.0",
        "ramp_rate": "50.0",
        "min_up": "4",
        "min_down": "4",
        "startup_cost": "500.0",
        "heat_rate": "7.5",
        "ramp_penalty": "25.0",
        "mutd_penalty": "1000.0",
    },
    "env": {
        "episode_len": "168",
        "price_scale": "100.0",
        "load_scale": "auto",  # auto = max train-split load forecast
        "dispatch_mode": "always_on",
        "include_weather": "false",
    },
    "shaping": {
        "lambda_role": "0.5",
        "lambda_risk": "5.0",
        "s_linear": "1000.0",
        "s_var": "100.0",
        "neutral_band": "0.2",
        "cvar_alpha": "0.05",
        "cvar_window": "200",
    },
    "ppo.base": {
        "clip_epsilon": "0.2",
        "gamma": "0.99",
        "gae_lambda": "0.95",
        "epochs_per_update": "10",
        "minibatch_size": "64",
        "learning_rate": "0.0003",
        "value_coef": "0.5",
        "entropy_coef": "0.01",
        "max_grad_norm": "0.5",
        "total_steps": "200000",
        "buffer_size": "2048",
        "kl_target": "0.02",
        "hidden": "64,64",
    },
    "ppo.meta": {
        "clip_epsilon": "0.2",
        "gamma": "0.99",
        "gae_lambda": "0.95",
        "epochs_per_update": "10",
        "minibatch_size": "64",
        "learning_rate": "0.0003",
        "value_coef": "0.5",
        "entropy_coef": "0.01",
        "max_grad_norm": "0.5",
        "total_steps": "100000",
        "buffer_size": "2048",
        "kl_target": "0.02",
        "hidden": "64,64",
    },
    "ensemble": {
        "roles": "safe,spec",
    },
    "eval": {
        "rolling_window": "720",
        "seeds": "0,1,2,3,4",
        "split": "test1",
    },
    "io": {
        "out_dir": "out",
        "checkpoint_every": "0",  # updates between periodic checkpoints; 0 = final only
    },
}


def _parse_int(section, key, value) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: expected integer, got {value!r}") from exc


def _parse_float(section, key, value) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: expected number, got {value!r}") from exc


def _parse_hour(section, key, value) -> int:
    try:
        return parse_timestamp(value)
    except Exception as exc:
        raise ConfigError(f"{section}.{key}: bad timestamp {value!r}: {exc}") from exc


def _parse_list(value: str) -> list:
    return [v.strip() for v in value.split(",") if v.strip()]


def _parse_bool(section, key, value) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigError(f"{section}.{key}: expected true/false, got {value!r}")


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    config_hash: str
    data_source: str
    csv_path: str
    synthetic: SyntheticConfig
    split: SplitSpec
    generator: GeneratorSpec
    episode_len: int
    price_scale: float
    load_scale: float | None  # None = auto
    dispatch_mode: str
    include_weather: bool
    shaping: ShapingParams
    ppo_base: PpoConfig
    ppo_meta: PpoConfig
    roles: tuple
    eval_rolling_window: int
    eval_seeds: tuple
    eval_split: str
    out_dir: str
    checkpoint_every: int

    def describe(self) -> str:
        return "\n".join(
            f"{section}.{key} = {value}"
            for section in sorted(self.raw)
            for key, value in sorted(self.raw[section].items())
        )


def _apply_override(raw: dict, section: str, key: str, value: str, origin: str) -> None:
    if section not in raw:
        raise ConfigError(f"{origin}: unknown section {section!r}")
    if key not in raw[section]:
        raise ConfigError(f"{origin}: unknown key {section}.{key}")
    raw[section][key] = value


def load_raw(
    config_path: str | None = None,
    overrides=None,
    environ: dict | None = None,
) -> dict:
    """Resolve the layered string-valued configuration."""
    raw = {s: dict(kv) for s, kv in DEFAULTS.items()}

    if config_path:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(config_path) as fh:
                parser.read_file(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {config_path}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"{config_path}: {exc}") from exc
        for section in parser.sections():
            for key, value in parser.items(section):
                _apply_override(raw, section, key, value, config_path)

    environ = os.environ if environ is None else environ
    section_by_env = {s.replace(".", "_").upper(): s for s in DEFAULTS}
    for name, value in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        sec_part, key_part = name[len(ENV_PREFIX) :].split("__", 1)
        section = section_by_env.get(sec_part.upper())
        if section is None:
            raise ConfigError(f"{name}: unknown section {sec_part!r}")
        _apply_override(raw, section, key_part.lower(), value, name)

    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        target, value = item.split("=", 1)
        section, key = target.rsplit(".", 1)
        _apply_override(raw, section.strip(), key.strip(), value.strip(), "--set")
    return raw


def config_hash(raw: dict) -> str:
    canon = "\n".join(
        f"{section}.{key}={raw[section][key]}"
        for section in sorted(raw)
        for key in sorted(raw[section])
    )
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def build_config(
    config_path: str | None = None,
    overrides=None,
    environ: dict | None = None,
) -> RunConfig:
    raw = load_raw(config_path, overrides, environ)

    def get(section, key):
        return raw[section][key]

    source = get("data", "source")
    if source not in ("synthetic", "csv"):
        raise ConfigError(f"data.source must be synthetic or csv, got {source!r}")

    try:
        synthetic = SyntheticConfig(
            n_hours=_parse_int("synthetic", "n_hours", get("synthetic", "n_hours")),
            calm_mean=_parse_float("synthetic", "calm_mean", get("synthetic", "calm_mean")),
            calm_std=_parse_float("synthetic", "calm_std", get("synthetic", "calm_std")),
            volatile_mean=_parse_float(
                "synthetic", "volatile_mean", get("synthetic", "volatile_mean")
            ),
            volatile_std=_parse_float(
                "synthetic", "volatile_std", get("synthetic", "volatile_std")
            ),
            regime_dwell_hours=_parse_float(
                "synthetic", "regime_dwell_hours", get("synthetic", "regime_dwell_hours")
            ),
            rt_spread_std=_parse_float(
                "synthetic", "rt_spread_std", get("synthetic", "rt_spread_std")
            ),
            diurnal_amplitude=_parse_float(
                "synthetic", "diurnal_amplitude", get("synthetic", "diurnal_amplitude")
            ),
            seed=_parse_int("synthetic", "seed", get("synthetic", "seed")),
            start=_parse_hour("synthetic", "start", get("synthetic", "start")),
            rt_spike_prob=_parse_float(
                "synthetic", "rt_spike_prob", get("synthetic", "rt_spike_prob")
            ),
            rt_spike_mean=_parse_float(
                "synthetic", "rt_spike_mean", get("synthetic", "rt_spike_mean")
            ),
        )
        split = SplitSpec(
            train=DateRange(
                _parse_hour("split", "train_start", get("split", "train_start")),
                _parse_hour("split", "train_end", get("split", "train_end")),
            ),
            test1=DateRange(
                _parse_hour("split", "test1_start", get("split", "test1_start")),
                _parse_hour("split", "test1_end", get("split", "test1_end")),
            ),
            test2=DateRange(
                _parse_hour("split", "test2_start", get("split", "test2_start")),
                _parse_hour("split", "test2_end", get("split", "test2_end")),
            ),
        )
        generator = GeneratorSpec(
            p_max=_parse_float("generator", "p_max", get("generator", "p_max")),
            p_min=_parse_float("generator", "p_min", get("generator", "p_min")),
            ramp_rate=_parse_float("generator", "ramp_rate", get("generator", "ramp_rate")),
            min_up=_parse_int("generator", "min_up", get("generator", "min_up")),
            min_down=_parse_int("generator", "min_down", get("generator", "min_down")),
            startup_cost=_parse_float(
                "generator", "startup_cost", get("generator", "startup_cost")
            ),
            heat_rate=_parse_float("generator", "heat_rate", get("generator", "heat_rate")),
            ramp_penalty=_parse_float(
                "generator", "ramp_penalty", get("generator", "ramp_penalty")
            ),
            mutd_penalty=_parse_float(
                "generator", "mutd_penalty", get("generator", "mutd_penalty")
            ),
        )
        shaping = ShapingParams(
            lambda_role=_parse_float("shaping", "lambda_role", get("shaping", "lambda_role")),
            lambda_risk=_parse_float("shaping", "lambda_risk", get("shaping", "lambda_risk")),
            s_linear=_parse_float("shaping", "s_linear", get("shaping", "s_linear")),
            s_var=_parse_float("shaping", "s_var", get("shaping", "s_var")),
            neutral_band=_parse_float(
                "shaping", "neutral_band", get("shaping", "neutral_band")
            ),
            cvar_alpha=_parse_float("shaping", "cvar_alpha", get("shaping", "cvar_alpha")),
            cvar_window=_parse_int("shaping", "cvar_window", get("shaping", "cvar_window")),
        )

        def ppo(section):
            hidden = tuple(
                _parse_int(section, "hidden", h) for h in _parse_list(get(section, "hidden"))
            )
            if not hidden:
                raise ConfigError(f"{section}.hidden must list at least one layer size")
            return PpoConfig(
                clip_epsilon=_parse_float(
                    section, "clip_epsilon", get(section, "clip_epsilon")
                ),
                gamma=_parse_float(section, "gamma", get(section, "gamma")),
                gae_lambda=_parse_float(section, "gae_lambda", get(section, "gae_lambda")),
                epochs_per_update=_parse_int(
                    section, "epochs_per_update", get(section, "epochs_per_update")
                ),
                minibatch_size=_parse_int(
                    section, "minibatch_size", get(section, "minibatch_size")
                ),
                learning_rate=_parse_float(
                    section, "learning_rate", get(section, "learning_rate")
                ),
                value_coef=_parse_float(section, "value_coef", get(section, "value_coef")),
                entropy_coef=_parse_float(
                    section, "entropy_coef", get(section, "entropy_coef")
                ),
                max_grad_norm=_parse_float(
                    section, "max_grad_norm", get(section, "max_grad_norm")
                ),
                total_steps=_parse_int(section, "total_steps", get(section, "total_steps")),
                buffer_size=_parse_int(section, "buffer_size", get(section, "buffer_size")),
                kl_target=_parse_float(section, "kl_target", get(section, "kl_target")),
                hidden=hidden,
            )

        ppo_base = ppo("ppo.base")
        ppo_meta = ppo("ppo.meta")
    except ConfigError:
        raise
    except Exception as exc:
        # dataclass validators raise ValueError/MarketDataError; surface as
        # config problems with the offending message
        raise ConfigError(str(exc)) from exc

    roles = tuple(_parse_list(get("ensemble", "roles")))
    if not roles:
        raise ConfigError("ensemble.roles must not be empty")
    for role in roles:
        if role not in ("safe", "spec", "neutral"):
            raise ConfigError(f"ensemble.roles: unknown worker role {role!r}")

    load_scale_raw = get("env", "load_scale")
    load_scale = None if load_scale_raw == "auto" else _parse_float(
        "env", "load_scale", load_scale_raw
    )
    dispatch_mode = get("env", "dispatch_mode")
    if dispatch_mode not in ("always_on", "economic"):
        raise ConfigError(f"env.dispatch_mode must be always_on or economic, got {dispatch_mode!r}")

    eval_split = get("eval", "split")
    if eval_split not in ("train", "test1", "test2"):
        raise ConfigError(f"eval.split must be train, test1 or test2, got {eval_split!r}")
    seeds = tuple(_parse_int("eval", "seeds", s) for s in _parse_list(get("eval", "seeds")))
    if not seeds:
        raise ConfigError("eval.seeds must not be empty")

    return RunConfig(
        raw=raw,
        config_hash=config_hash(raw),
        data_source=source,
        csv_path=get("data", "csv_path"),
        synthetic=synthetic,
        split=split,
        generator=generator,
        episode_len=_parse_int("env", "episode_len", get("env", "episode_len")),
        price_scale=_parse_float("env", "price_scale", get("env", "price_scale")),
        load_scale=load_scale,
        dispatch_mode=dispatch_mode,
        include_weather=_parse_bool("env", "include_weather", get("env", "include_weather")),
        shaping=shaping,
        ppo_base=ppo_base,
        ppo_meta=ppo_meta,
        roles=roles,
        eval_rolling_window=_parse_int(
            "eval", "rolling_window", get("eval", "rolling_window")
        ),
        eval_seeds=seeds,
        eval_split=eval_split,
        out_dir=get("io", "out_dir"),
        checkpoint_every=_parse_int("io", "checkpoint_every", get("io", "checkpoint_every")),
    )
