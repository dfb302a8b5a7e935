"""Risk and alignment metrics over episode ledgers, and report emission.

Conventions: per-step profits, zero risk-free rate, no annualization; Sharpe
uses the sample standard deviation, Sortino the root mean square of
negative returns only; entropy is in nats. Metrics that are mathematically
undefined (zero variance, no downside, non-positive peak) are reported as
None, never coerced to a number.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .bidding_env import EpisodeLedger, StrategicBiddingEnv

CONVENTION = (
    "per-step profit, rf=0, unannualized; sharpe=mean/sample_std, "
    "sortino=mean/downside_rms, entropy in nats"
)


def sharpe(returns) -> float | None:
    """Mean over sample std; None when the std is zero."""
    r = np.asarray(returns, dtype=np.float64)
    if r.size < 2:
        raise ValueError("sharpe needs at least 2 returns")
    std = r.std(ddof=1)
    if std == 0.0:
        return None
    return float(r.mean() / std)


def sortino(returns) -> float | None:
    """Mean over downside deviation sqrt(mean(min(r,0)^2)); None when there
    is no downside."""
    r = np.asarray(returns, dtype=np.float64)
    if r.size < 2:
        raise ValueError("sortino needs at least 2 returns")
    downside = np.sqrt(np.mean(np.minimum(r, 0.0) ** 2))
    if downside == 0.0:
        return None
    return float(r.mean() / downside)


def max_drawdown(equity):
    """Largest peak-to-trough decline of a cumulative profit curve.

    Returns ``(absolute $, relative fraction)``; the relative figure divides
    by the running peak preceding the deepest trough and is None when that
    peak is not positive. A never-declining curve gives (0.0, 0.0).
    """
    eq = np.asarray(equity, dtype=np.float64)
    if eq.size < 1:
        raise ValueError("max_drawdown needs at least 1 point")
    peaks = np.maximum.accumulate(eq)
    drawdowns = peaks - eq
    worst = int(np.argmax(drawdowns))
    abs_dd = float(drawdowns[worst])
    if abs_dd == 0.0:
        return 0.0, 0.0
    peak = float(peaks[worst])
    rel = abs_dd / peak if peak > 0 else None
    return abs_dd, rel


def allocation_entropy(weights) -> float:
    """Mean Shannon entropy (nats) of a sequence of simplex weight
    vectors; 0 * ln 0 = 0."""
    w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    if np.any(w < -1e-9) or np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("weights must lie on the probability simplex")
    wc = np.clip(w, 0.0, 1.0)
    terms = np.where(wc > 0.0, wc * np.log(np.where(wc > 0.0, wc, 1.0)), 0.0)
    return float(np.mean(-terms.sum(axis=1)))


def regime_alignment(spec_weights, volatility) -> float | None:
    """Pearson correlation between the speculator weight series and market
    volatility; None when either series is constant."""
    x = np.asarray(spec_weights, dtype=np.float64)
    y = np.asarray(volatility, dtype=np.float64)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("correlation needs at least 2 points")
    if x.std() == 0.0 or y.std() == 0.0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def regime_alignment_expost(spec_weights, lmp_da, lmp_rt) -> float | None:
    """Ex-post variant: correlation of the speculator weight with the
    indicator that full RT allocation would have out-earned full DA."""
    better_rt = (np.asarray(lmp_rt) > np.asarray(lmp_da)).astype(np.float64)
    return regime_alignment(spec_weights, better_rt)


def rolling_metrics(returns, window: int = 720):
    """Trailing-window mean and Sharpe at every index >= window-1.

    Returns ``(means, sharpes)`` aligned to the input (NaN before the first
    full window and wherever the window Sharpe is undefined; NaN marks a
    gap, report writers must map it to NA).
    """
    r = np.asarray(returns, dtype=np.float64)
    if r.size < window:
        raise ValueError(f"series of {r.size} shorter than window {window}")
    views = np.lib.stride_tricks.sliding_window_view(r, window)
    window_means = views.mean(axis=1)
    window_stds = views.std(axis=1, ddof=1)
    means = np.full(r.size, np.nan)
    sharpes = np.full(r.size, np.nan)
    means[window - 1 :] = window_means
    defined = window_stds > 0
    tail = sharpes[window - 1 :]
    tail[defined] = window_means[defined] / window_stds[defined]
    return means, sharpes


@dataclass
class MetricReport:
    """Flat summary of one evaluation episode/ledger."""

    cumulative_return: float
    sharpe: float | None
    sortino: float | None
    max_drawdown_abs: float
    max_drawdown_rel: float | None
    allocation_entropy: float | None
    regime_alignment: float | None
    regime_alignment_expost: float | None
    n_steps: int
    convention: str = CONVENTION
    config_hash: str = ""
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    METRIC_FIELDS = (
        "cumulative_return",
        "sharpe",
        "sortino",
        "max_drawdown_abs",
        "max_drawdown_rel",
        "allocation_entropy",
        "regime_alignment",
        "regime_alignment_expost",
    )

    def to_json(self, path) -> None:
        payload = {name: getattr(self, name) for name in self.METRIC_FIELDS}
        payload.update(
            n_steps=self.n_steps,
            convention=self.convention,
            config_hash=self.config_hash,
            seed=self.seed,
        )
        payload.update(self.extra)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def csv_row(self) -> list:
        def cell(v):
            return "NA" if v is None else repr(float(v))

        return [cell(getattr(self, name)) for name in self.METRIC_FIELDS]


def compute_report(
    ledger: EpisodeLedger, config_hash: str = "", seed: int | None = None
) -> MetricReport:
    profits = ledger.profits
    equity = ledger.equity
    dd_abs, dd_rel = max_drawdown(equity)
    weights = ledger.weight_matrix()
    entropy = allocation_entropy(weights) if weights is not None else None
    spec_w = ledger.spec_weight_series()
    align = align_expost = None
    if spec_w is not None:
        align = regime_alignment(spec_w, np.asarray(ledger.volatility))
        align_expost = regime_alignment_expost(
            spec_w, np.asarray(ledger.lmp_da), np.asarray(ledger.lmp_rt)
        )
    return MetricReport(
        cumulative_return=float(equity[-1]) if len(ledger) else 0.0,
        sharpe=sharpe(profits),
        sortino=sortino(profits),
        max_drawdown_abs=dd_abs,
        max_drawdown_rel=dd_rel,
        allocation_entropy=entropy,
        regime_alignment=align,
        regime_alignment_expost=align_expost,
        n_steps=len(ledger),
        config_hash=config_hash,
        seed=seed,
    )


def write_reports_csv(path, rows: dict, header_comment: str | None = None) -> None:
    """One CSV row per named report (policy, seed, configuration...)."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("name",) + MetricReport.METRIC_FIELDS)
        for name, report in rows.items():
            writer.writerow([name] + report.csv_row())


def write_rolling_csv(path, means, sharpes, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "rolling_mean", "rolling_sharpe"])
        for i, (m, s) in enumerate(zip(means, sharpes)):
            writer.writerow(
                [
                    i,
                    "NA" if np.isnan(m) else repr(float(m)),
                    "NA" if np.isnan(s) else repr(float(s)),
                ]
            )


def aggregate_reports(reports: list) -> dict:
    """Mean and sample std per metric across seeds; None values are skipped
    and a metric that is undefined everywhere aggregates to None."""
    out: dict = {}
    for name in MetricReport.METRIC_FIELDS:
        values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        if not values:
            out[name] = {"mean": None, "std": None, "n": 0}
            continue
        arr = np.asarray(values, dtype=np.float64)
        out[name] = {
            "mean": float(arr.mean()),
            "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
            "n": int(arr.size),
        }
    return out


def run_policy_episode(
    env: StrategicBiddingEnv,
    act_fn,
    start: int | None = None,
    rng: np.random.Generator | None = None,
) -> EpisodeLedger:
    """Roll one episode of a single policy. ``act_fn(obs, env)`` returns the
    raw action; pass ``start`` for the paired contiguous evaluation pass."""
    ledger = EpisodeLedger()
    obs = env.reset(start=start, rng=rng)
    done = False
    while not done:
        record = env.current_record()
        vol = env.volatility_at(env.current_index)
        out = env.step(float(act_fn(obs, env)))
        ledger.append(record, out, volatility=vol)
        obs = out.observation_next
        done = out.done
    return ledger
