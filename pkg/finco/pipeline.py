"""
Run modes driven by a RunConfig.

Each mode propagates what it needs, writes its result tables into the output
directory and returns the paths it wrote. The resolved configuration is
saved next to the results as resolved_config.toml.
"""

import enum
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from finco import baselines, diagnostics, io
from finco.config import dump_config, resolve_times
from finco.contour import ContourFamily, make_contour
from finco.dynamics import initial_record, propagate_manifold
from finco.errors import EmptyReconstruction
from finco.logs import banner
from finco.reconstruction import WavefunctionGrid, apply_filters, compare_densities, reconstruct, sample_weight
from finco.reference_qm import autocorrelation, propagate_exact
from finco.sampling import Rect, gradient_scores, refine, uniform_grid

logger = logging.getLogger(__name__)

RESOLVED_CONFIG = "resolved_config.toml"


class Mode(str, enum.Enum):
    FINCO = "finco"
    REFERENCE = "reference"
    BRANCHMAP = "branchmap"
    ROOTSEARCH = "rootsearch"
    COMPARE = "compare"
    REAL_CONTOUR_COMPARE = "real_contour_compare"


@dataclass
class RunContext:
    config: object
    model: object
    gaussian: object
    t_cl: float
    times: tuple
    out_dir: Path

    @classmethod
    def from_config(cls, config, out_dir=None):
        t_cl, times = resolve_times(config)
        return cls(
            config=config,
            model=config.potential.model(),
            gaussian=config.gaussian.gaussian(),
            t_cl=t_cl,
            times=times,
            out_dir=Path(out_dir or config.output.directory),
        )

    @property
    def gamma_f(self):
        return self.config.gamma_f

    def contour(self, family=None, until=None):
        """Contour from 0 to `until` (default the last checkpoint); None when nothing moves."""
        t_final = until if until is not None else max(self.times)
        if not t_final > 0:
            return None
        c = self.config.contour
        return make_contour(family or c.family, t_final, c.dip_depth, c.dip_fraction)

    def x_grid(self):
        o = self.config.output
        return np.linspace(o.x_min, o.x_max, o.n)

    def header(self, time=None):
        header = {"run": self.config.name, "gamma_f": repr(self.gamma_f)}
        if self.t_cl is not None:
            header["t_cl"] = repr(self.t_cl)
            if time is not None:
                header["t_over_tcl"] = f"{time / self.t_cl:.6g}"
        return header

    def path(self, name):
        return self.out_dir / name


# --- Shared steps ---

def manifold_grid(ctx):
    m = ctx.config.manifold
    rect = Rect.around(ctx.gaussian.q0, tuple(m.re_span), tuple(m.im_span))
    return uniform_grid(rect, m.nx, m.ny)


def propagate_grid(ctx, grid, family=None):
    contour = ctx.contour(family)
    if contour is None:
        return initial_record(ctx.gaussian, grid.points, ctx.model, ctx.gamma_f)
    cfg = ctx.config
    return propagate_manifold(
        ctx.gaussian, grid.points, contour, ctx.model, cfg.stepper.options(), ctx.gamma_f,
        checkpoints=ctx.times, chunk_size=cfg.chunk_size, workers=cfg.workers,
    )


def sample_at(ctx, record, grid, time, phase_convention=None, filtered=True):
    f = ctx.config.filters
    checkpoint = record.checkpoint_at(time)
    sample = sample_weight(
        checkpoint.state, ctx.gaussian, ctx.gamma_f, grid.weights, s2_t0=record.s2_t0,
        phase_convention=phase_convention or f.phase_convention, time=time,
    )
    if filtered:
        sample = apply_filters(checkpoint, sample, f.sigma, f.nu, f.eps)
    return sample


def sampled_record(ctx, family=None):
    """Grid and propagated record, after any configured refinement rounds."""
    grid = manifold_grid(ctx)
    m = ctx.config.manifold
    for round_no in range(1, m.refine_rounds + 1):
        record = propagate_grid(ctx, grid, family)
        sample = sample_at(ctx, record, grid, ctx.times[-1])
        grid = refine(grid, gradient_scores(grid, sample.contribution), m.refine_budget)
        logger.info(f"  Refinement {round_no}/{m.refine_rounds}: {len(grid):,} points")
    return grid, propagate_grid(ctx, grid, family)


def _counts_text(counts):
    return ", ".join(f"{key}={value}" for key, value in counts.items())


def _log_counts(sample):
    counts = sample.counts()
    rejected = counts["total"] - counts["accepted"]
    logger.info(f"  t={sample.time:.6g}: {counts['accepted']:,} of {counts['total']:,} samples accepted")
    if rejected:
        reasons = {k: v for k, v in counts.items() if k not in ("total", "accepted") and v}
        logger.info(f"  [WARNING] {rejected:,} rejected ({_counts_text(reasons)})")
    return counts


def _reference_waves(ctx):
    return propagate_exact(ctx.gaussian, ctx.model, ctx.config.reference.grid(), checkpoints=ctx.times)


# --- Modes ---

def _finco(ctx):
    """Reconstruct and write every checkpoint; returns (files, wavefunctions)."""
    grid, record = sampled_record(ctx)
    x = ctx.x_grid()
    written, waves, rows = [], [], []
    for i, t in enumerate(ctx.times):
        sample = sample_at(ctx, record, grid, t)
        counts = _log_counts(sample)
        wf = reconstruct(sample, x, ctx.gamma_f)
        header = ctx.header(t) | {"samples": _counts_text(counts)}
        written.append(io.write_wavefunction(ctx.path(io.checkpoint_name("finco", i, t)), wf, header, ctx.config))
        waves.append(wf)
        rows.append({"time": t, "norm": wf.norm} | counts)
    summary = pd.DataFrame(rows)
    written.append(io.write_table(ctx.path("finco_summary.dat"), summary, ctx.header(), ctx.config))
    if ctx.config.output.checkpoint_dump:
        written.append(io.write_checkpoint_dump(ctx.path("checkpoints.dat"), record, ctx.header(), ctx.config))
    return written, waves


def run_finco(ctx):
    return _finco(ctx)[0]


def run_reference(ctx):
    written = []
    for i, wf in enumerate(_reference_waves(ctx)):
        path = ctx.path(io.checkpoint_name("reference", i, wf.t_final))
        written.append(io.write_wavefunction(path, wf, ctx.header(wf.t_final), ctx.config))
    if ctx.config.reference.autocorrelation:
        table = autocorrelation(ctx.gaussian, ctx.model, ctx.config.reference.grid(), ctx.times[-1])
        written.append(io.write_table(ctx.path("autocorrelation.dat"), table, ctx.header(), ctx.config))
    return written


def run_branchmap(ctx):
    grid, record = sampled_record(ctx)
    d = ctx.config.diagnostics
    written, rows = [], []
    for i, t in enumerate(ctx.times):
        field, count = diagnostics.branch_map(record, grid, d.branch_threshold, d.min_branch_size, time=t)
        weights = diagnostics.weight_map(sample_at(ctx, record, grid, t), grid)
        principal = diagnostics.weight_map(sample_at(ctx, record, grid, t, phase_convention="principal"), grid)
        caustics = diagnostics.caustic_points(record, grid, ctx.gamma_f, d.caustic_threshold, time=t)
        scars = diagnostics.detect_scars(weights, d.scar_jump)
        principal_scars = diagnostics.detect_scars(principal, d.scar_jump)
        header = ctx.header(t) | {"branches": str(count)}
        written.append(io.write_field_map(ctx.path(io.checkpoint_name("branchmap", i, t)), field, header, ctx.config))
        written.append(io.write_field_map(ctx.path(io.checkpoint_name("weightmap", i, t)), weights, ctx.header(t), ctx.config))
        rows.append({
            "time": t, "branches": count, "caustics": len(caustics),
            "scars": len(scars), "scars_principal": len(principal_scars),
        })
        for segment in principal_scars:
            logger.debug(f"    principal-branch scar {segment.start:.4g} -> {segment.end:.4g}")
    written.append(io.write_table(ctx.path("branches.dat"), pd.DataFrame(rows), ctx.header(), ctx.config))
    return written


def run_rootsearch(ctx):
    grid, record = sampled_record(ctx)
    cfg = ctx.config
    d = cfg.diagnostics
    newton = baselines.NewtonOptions(max_iter=cfg.rootsearch.max_iter, tol=cfg.rootsearch.tol)
    x = ctx.x_grid()[:: cfg.rootsearch.x_stride]
    written = []
    for i, t in enumerate(ctx.times):
        if t == 0:
            continue
        seeds = baselines.branch_seeds(record, grid, d.branch_threshold, d.min_branch_size, time=t)
        if seeds.size == 0:
            seeds = np.array([complex(ctx.gaussian.q0)])
        logger.info(f"  t={t:.6g}: root search from {len(seeds)} branch seeds")
        wf, roots = baselines.root_search_grid(
            ctx.gaussian, ctx.model, ctx.contour(until=t), x, seeds, newton, cfg.stepper.options(), ctx.gamma_f,
        )
        labels, _ = diagnostics.branch_labels(record, grid, d.branch_threshold, d.min_branch_size, time=t)
        taylor = baselines.taylor_reconstruct(record, x, labels=labels, time=t)
        frame = io.wavefunction_frame(wf)
        frame["roots"] = roots
        frame["re_taylor"] = taylor.psi.real
        frame["im_taylor"] = taylor.psi.imag
        written.append(io.write_table(ctx.path(io.checkpoint_name("rootsearch", i, t)), frame, ctx.header(t), ctx.config))
    return written


def _error_row(approx, reference, prefix=""):
    errors = compare_densities(approx, reference)
    errors.pop("time")
    return {f"{prefix}{key}": value for key, value in errors.items()}


def run_compare(ctx):
    written, waves = _finco(ctx)
    references = _reference_waves(ctx)
    rows = []
    for i, (approx, ref) in enumerate(zip(waves, references)):
        t = ref.t_final
        written.append(io.write_wavefunction(ctx.path(io.checkpoint_name("reference", i, t)), ref, ctx.header(t), ctx.config))
        rows.append({"time": t} | _error_row(approx, ref))
    table = pd.DataFrame(rows)
    for row in rows:
        logger.info(f"  t={row['time']:.6g}: L2={row['l2']:.3e} (relative {row['l2_relative']:.3e}), norm={row['norm']:.6f}")
    written.append(io.write_table(ctx.path("errors.dat"), table, ctx.header(), ctx.config))
    return written


def run_real_contour_compare(ctx):
    """Full complex-contour result against the part reachable along the real time axis."""
    grid, record = sampled_record(ctx)
    real_record = propagate_grid(ctx, grid, ContourFamily.REAL)
    references = {ref.t_final: ref for ref in _reference_waves(ctx)}
    x = ctx.x_grid()
    written, rows = [], []
    for i, t in enumerate(ctx.times):
        sample = sample_at(ctx, record, grid, t)
        mask = diagnostics.real_accessible(record, real_record, ctx.config.real_tol, time=t)
        full = reconstruct(sample, x, ctx.gamma_f)
        try:
            restricted = reconstruct(sample.select(mask), x, ctx.gamma_f)
        except EmptyReconstruction:
            logger.warning(f"[WARNING] t={t:.6g}: no trajectory reachable along the real contour")
            restricted = WavefunctionGrid(x, np.zeros_like(full.psi), t)
        written.append(io.write_wavefunction(ctx.path(io.checkpoint_name("finco", i, t)), full, ctx.header(t), ctx.config))
        written.append(io.write_wavefunction(ctx.path(io.checkpoint_name("real_only", i, t)), restricted, ctx.header(t), ctx.config))
        ref = references[t]
        row = {"time": t, "accessible": int(np.count_nonzero(mask)), "total": len(mask)}
        row |= _error_row(full, ref, "full_")
        row |= _error_row(restricted, ref, "real_")
        row["l2_ratio"] = row["real_l2"] / row["full_l2"] if row["full_l2"] > 0 else np.inf
        rows.append(row)
        logger.info(f"  t={t:.6g}: {row['accessible']:,}/{row['total']:,} accessible, L2 ratio {row['l2_ratio']:.3g}")
    written.append(io.write_table(ctx.path("real_contour_errors.dat"), pd.DataFrame(rows), ctx.header(), ctx.config))
    return written


MODES = {
    Mode.FINCO: run_finco,
    Mode.REFERENCE: run_reference,
    Mode.BRANCHMAP: run_branchmap,
    Mode.ROOTSEARCH: run_rootsearch,
    Mode.COMPARE: run_compare,
    Mode.REAL_CONTOUR_COMPARE: run_real_contour_compare,
}


def run(config, mode, out_dir=None):
    """Execute one mode; returns the list of files written."""
    mode = Mode(mode)
    ctx = RunContext.from_config(config, out_dir)
    banner(logger, f"Run '{config.name}' in {mode.value} mode")
    if ctx.t_cl is not None:
        logger.info(f"T_cl = {ctx.t_cl:.6f}; checkpoints {', '.join(f'{t:.6g}' for t in ctx.times)}")
    ctx.out_dir.mkdir(parents=True, exist_ok=True)
    written = [dump_config(config, ctx.path(RESOLVED_CONFIG))]
    written += MODES[mode](ctx)
    logger.info(f"[OK] Wrote {len(written)} files to {ctx.out_dir}")
    return written


