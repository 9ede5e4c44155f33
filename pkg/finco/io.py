"""
Result files: delimited text tables with '#' header blocks.

Every file starts with key/value header lines followed by the full resolved
run configuration, so a single output file is enough to reproduce it.
Floats are written with 17 significant digits.
"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from finco.config import dumps_config
from finco.reconstruction import WavefunctionGrid

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
CONFIG_MARKER = "config:"


def _header_lines(header, config):
    lines = [f"# {key}: {value}" for key, value in header.items()]
    if config is not None:
        lines.append(f"# {CONFIG_MARKER}")
        lines.extend(f"#   {line}" if line else "#" for line in dumps_config(config).splitlines())
    return lines


def write_table(path, frame, header=None, config=None):
    """Write `frame` as comma-separated text below a '#' header block."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        for line in _header_lines(header or {}, config):
            f.write(line + "\n")
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT)
    logger.debug(f"  Wrote {len(frame):,} rows to {path}")
    return path


def read_header(path):
    """Key/value pairs of the header block (the embedded config is skipped)."""
    header = {}
    with Path(path).open() as f:
        for line in f:
            if not line.startswith("#"):
                break
            text = line[1:].strip()
            if text == CONFIG_MARKER or line.startswith("#   ") or not text:
                continue
            key, _, value = text.partition(":")
            header[key.strip()] = value.strip()
    return header


def read_embedded_config(path):
    """TOML text of the configuration embedded in a result file."""
    lines, inside = [], False
    with Path(path).open() as f:
        for line in f:
            if not line.startswith("#"):
                break
            if line[1:].strip() == CONFIG_MARKER:
                inside = True
                continue
            if inside:
                lines.append(line[4:].rstrip("\n") if line.startswith("#   ") else "")
    return "\n".join(lines) + "\n"


def read_table(path):
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def wavefunction_frame(wf):
    return pd.DataFrame({
        "x": wf.x,
        "re_psi": wf.psi.real,
        "im_psi": wf.psi.imag,
        "density": wf.density,
    })


def write_wavefunction(path, wf, header=None, config=None):
    full = {"t_final": repr(float(wf.t_final)), "norm": repr(float(wf.norm))}
    full.update(header or {})
    return write_table(path, wavefunction_frame(wf), full, config)


def read_wavefunction(path):
    frame = read_table(path)
    header = read_header(path)
    psi = frame["re_psi"].to_numpy() + 1j * frame["im_psi"].to_numpy()
    return WavefunctionGrid(frame["x"].to_numpy(), psi, float(header.get("t_final", "nan")))


def write_field_map(path, field, header=None, config=None):
    full = {"kind": field.kind.value, "time": repr(float(field.time))}
    full.update(header or {})
    return write_table(path, field.to_frame(), full, config)


def checkpoint_frame(record):
    """One row per (checkpoint, trajectory) with the propagated quantities."""
    frames = []
    for checkpoint in record.checkpoints:
        s = checkpoint.state
        frames.append(pd.DataFrame({
            "re_t": checkpoint.time,
            "im_t": 0.0,
            "trajectory": np.arange(len(s)),
            "re_q": s.qt.real, "im_q": s.qt.imag,
            "re_p": s.pt.real, "im_p": s.pt.imag,
            "re_s0": s.s0_cl.real, "im_s0": s.s0_cl.imag,
            "re_z": s.z.real, "im_z": s.z.imag,
            "re_pz": s.pz.real, "im_pz": s.pz.imag,
            "arg_d": s.arg_d,
            "flags": s.flags,
        }))
    return pd.concat(frames, ignore_index=True)


def write_checkpoint_dump(path, record, header=None, config=None):
    return write_table(path, checkpoint_frame(record), header, config)


def checkpoint_name(stem, index, time):
    return f"{stem}_{index:02d}_t{time:.4f}.dat"
