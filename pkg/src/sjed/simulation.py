"""Monte Carlo sweeps over SNR for S-JED and the reference detectors."""

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from functools import partial

import numpy as np

from .baselines import (
    MAX_ENUM_USERS,
    clip_llr,
    lmmse_soft_detect,
    ls_channel_estimate,
    maxlog_soft_detect,
    simo_genie_detect,
)
from .channel import gen_frame, gen_pilots
from .coding import LdpcCode, decode, encode, load_code
from .config import get_settings
from .exceptions import ConfigError, EnumerationError
from .hypernet import HyperNet, infer_params, load_weights
from .jed import run_sjed_forward
from .metrics import PacketResult, update_metrics
from .models import CsiMode, Detector, Frame, MetricsRecord, SweepConfig


logger = logging.getLogger(__name__)


@dataclass
class SweepContext:
    """Everything a worker needs, loaded and validated before simulation starts."""

    cfg: SweepConfig
    net: HyperNet | None = None
    code: LdpcCode | None = None


@dataclass(frozen=True)
class WorkUnit:
    point: int
    snr_db: float
    start: int
    stop: int


def prepare(cfg: SweepConfig) -> SweepContext:
    """Load weight and code files and reject inconsistent configurations."""
    system = cfg.system
    gen_pilots(system)

    net = None
    if Detector.SJED in cfg.detectors:
        net = load_weights(cfg.weights_path, system)

    maxlog = {Detector.MAXLOG, Detector.MAXLOG_PERFECT}
    if maxlog & set(cfg.detectors) and system.num_users > MAX_ENUM_USERS:
        msg = (
            f"max-log detection enumerates 4^U hypotheses, "
            f"U={system.num_users} too large"
        )
        raise EnumerationError(msg)

    code = None
    if cfg.coded:
        code = load_code(cfg.code_path)
        if code.num_bits != 2 * system.num_data:
            msg = (
                f"code length {code.num_bits} does not fill 2*D={2 * system.num_data} "
                "QPSK bits per UE"
            )
            raise ConfigError(msg)
    return SweepContext(cfg=cfg, net=net, code=code)


def codeword_to_bits(codewords: np.ndarray) -> np.ndarray:
    """(U, 2D) codewords to (2, U, D) bits; c[2k] and c[2k+1] share slot k."""
    num_users, length = codewords.shape
    return codewords.reshape(num_users, length // 2, 2).transpose(2, 0, 1)


def bits_to_codeword(llr: np.ndarray) -> np.ndarray:
    """Inverse of `codeword_to_bits` for (..., 2, U, D) arrays."""
    moved = np.moveaxis(llr, -3, -1)
    return moved.reshape(*moved.shape[:-2], -1)


def frame_rng(seed: int, point: int, frame: int) -> np.random.Generator:
    """Generator for one frame; independent of how frames are scheduled."""
    return np.random.default_rng([seed, point, frame])


def _draw_frame(
    context: SweepContext, unit: WorkUnit, index: int
) -> tuple[Frame, np.ndarray | None]:
    cfg, system = context.cfg, context.cfg.system
    rng = frame_rng(cfg.seed, unit.point, index)
    if context.code is None:
        return gen_frame(rng, system, unit.snr_db), None
    info = rng.integers(0, 2, size=(system.num_users, context.code.num_info))
    bits = codeword_to_bits(encode(context.code, info))
    return gen_frame(rng, system, unit.snr_db, bits=bits), info


def _baseline_llr(detector: Detector, frame: Frame) -> np.ndarray:
    y_d, n0 = frame.received_data, frame.noise_var
    h_ls = ls_channel_estimate(frame.received_pilots, frame.pilots)
    match detector:
        case Detector.LMMSE:
            out = lmmse_soft_detect(y_d, h_ls, n0)
        case Detector.LMMSE_PERFECT:
            out = lmmse_soft_detect(y_d, frame.channel, n0)
        case Detector.MAXLOG:
            out = maxlog_soft_detect(y_d, h_ls, n0)
        case Detector.MAXLOG_PERFECT:
            out = maxlog_soft_detect(y_d, frame.channel, n0)
        case Detector.SIMO_PERFECT:
            out = simo_genie_detect(y_d, frame.channel, frame.data, n0)
        case Detector.SIMO_EST:
            out = simo_genie_detect(
                y_d, frame.channel, frame.data, n0, CsiMode.ESTIMATED, h_est=h_ls
            )
        case _:
            msg = f"no baseline named {detector}"
            raise ValueError(msg)
    return out.llr


def simulate_chunk(context: SweepContext, unit: WorkUnit) -> dict[str, MetricsRecord]:
    """Simulate frames [start, stop) of one SNR point for every detector."""
    cfg, system = context.cfg, context.cfg.system
    drawn = [_draw_frame(context, unit, i) for i in range(unit.start, unit.stop)]
    frames = [frame for frame, _ in drawn]
    bits = np.stack([f.bits for f in frames])

    llrs: dict[Detector, np.ndarray] = {}
    for detector in cfg.detectors:
        if detector == Detector.SJED:
            y = np.stack([f.received for f in frames])
            noise_var = np.array([f.noise_var for f in frames])
            pilots = frames[0].pilots
            params = infer_params(context.net, y, pilots, noise_var, system)
            out = run_sjed_forward(y, pilots, params, noise_var, system)
            llrs[detector] = clip_llr(out.llr)
        else:
            llrs[detector] = np.stack([_baseline_llr(detector, f) for f in frames])

    results = {}
    for detector, llr in llrs.items():
        packets = None
        if context.code is not None:
            sent = np.concatenate([info for _, info in drawn])
            word_llr = bits_to_codeword(llr).reshape(-1, context.code.num_bits)
            decoded, success = decode(context.code, word_llr)
            packets = PacketResult(decoded=decoded, sent=sent, success=success)
        record = MetricsRecord(snr_db=unit.snr_db, detector=detector.value)
        results[detector.value] = update_metrics(record, llr, bits, packets)
    return results


def work_units(cfg: SweepConfig) -> list[WorkUnit]:
    """Fixed-size chunks of every SNR point, in grid order."""
    units = []
    for point, snr_db in enumerate(cfg.snr_grid.points()):
        for start in range(0, cfg.frames_per_point, cfg.chunk_frames):
            stop = min(start + cfg.chunk_frames, cfg.frames_per_point)
            units.append(WorkUnit(point=point, snr_db=snr_db, start=start, stop=stop))
    return units


def run_sweep(cfg: SweepConfig, workers: int | None = None) -> list[MetricsRecord]:
    """Run every detector over the SNR grid and return one record per (SNR, detector).

    With `cfg.reproducible` the chunk results are reduced in grid order, so the
    output does not depend on the number of workers.
    """
    context = prepare(cfg)
    workers = workers or cfg.workers or get_settings().workers
    units = work_units(cfg)
    points = cfg.snr_grid.points()
    logger.info(
        f"Sweep: {len(points)} SNR points x {cfg.frames_per_point} frames, "
        f"detectors {[d.value for d in cfg.detectors]}, {workers} worker(s)"
    )

    totals = {
        (point, d.value): MetricsRecord(snr_db=snr_db, detector=d.value)
        for point, snr_db in enumerate(points)
        for d in cfg.detectors
    }

    def accumulate(unit: WorkUnit, chunk: dict[str, MetricsRecord]) -> None:
        for name, record in chunk.items():
            totals[unit.point, name] = totals[unit.point, name].merge(record)

    task = partial(simulate_chunk, context)
    if workers == 1:
        for unit in units:
            accumulate(unit, task(unit))
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            if cfg.reproducible:
                for unit, chunk in zip(units, executor.map(task, units), strict=True):
                    accumulate(unit, chunk)
            else:
                futures = {executor.submit(task, unit): unit for unit in units}
                for future in as_completed(futures):
                    accumulate(futures[future], future.result())

    for point, snr_db in enumerate(points):
        for d in cfg.detectors:
            r = totals[point, d.value]
            logger.info(
                f"SNR {snr_db:g} dB {d.value}: BER {r.ber:.3e} PER {r.per:.3e} "
                f"BCE {r.bce:.4f} ({r.frames} frames)"
            )
    return [
        totals[point, d.value] for d in cfg.detectors for point in range(len(points))
    ]
