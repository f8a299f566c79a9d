"""Flat-file formats: CSV with 17 significant digits, written atomically.

Every writer accepts an optional ``meta`` string (tool version and config
hash) that goes on a leading ``#`` line.  Readers skip ``#`` lines.
"""

import csv
import io
import os
import tempfile

import numpy as np

from . import __version__
from .bq import MatrixMeasure
from .dist import FiniteDist
from .lattice import LatticeBasis, Sublattice


def fmt(v):
    """Text form of a cell: integers verbatim, reals with 17 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def meta_line(config_hash=None):
    """``driftwalk <version>`` plus the config hash when there is one."""
    s = f"driftwalk {__version__}"
    return s if config_hash is None else f"{s} config={config_hash}"


def atomic_write(path, text):
    """Write ``text`` to a temp file next to ``path`` and rename it into place."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_csv(header, rows, meta=None):
    buf = io.StringIO()
    if meta:
        buf.write(f"# {meta}\n")
    w = csv.writer(buf, lineterminator="\n")
    if header is not None:
        w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, header, rows, meta=None):
    atomic_write(path, render_csv(header, rows, meta))


def _lines(path):
    with open(path, newline="") as fh:
        return [ln for ln in fh.read().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def read_csv(path, header=None):
    """``(header, rows)`` of string cells; checks the header when one is expected."""
    lines = _lines(path)
    if not lines:
        raise ValueError(f"{path}: empty file")
    rows = list(csv.reader(lines))
    if header is not None and rows[0] != list(header):
        raise ValueError(f"{path}: expected header {','.join(header)}, found {','.join(rows[0])}")
    return rows[0], rows[1:]


# ---------------------------------------------------------------- distributions

def write_finite_dist(path, dist, meta=None):
    write_csv(path, ["value", "weight"], zip(dist.values, dist.weights), meta)


def read_finite_dist(path):
    _, rows = read_csv(path, ["value", "weight"])
    vals = [float(r[0]) for r in rows]
    if vals != sorted(vals):
        raise ValueError(f"{path}: rows must be sorted by value")
    return FiniteDist(vals, [float(r[1]) for r in rows])


# ---------------------------------------------------------------- lattices

def write_basis(path, basis, meta=None):
    """``d`` rows of ``d`` reals; basis vectors are the columns."""
    m = basis.matrix if isinstance(basis, LatticeBasis) else np.asarray(basis, dtype=float)
    write_csv(path, None, m.tolist(), meta)


def read_basis(path):
    return LatticeBasis(np.array([[float(v) for v in r] for r in csv.reader(_lines(path))]))


def write_sublattice(path, sub, meta=None):
    """HNF coefficient rows as integers."""
    write_csv(path, None, sub.coeffs, meta)


def read_sublattice(path, d=None):
    rows = [[int(v) for v in r] for r in csv.reader(_lines(path))]
    if not rows:
        if d is None:
            raise ValueError(f"{path}: empty sublattice needs an explicit dimension")
        return Sublattice.zero(d)
    return Sublattice.from_rows(rows, d)


def write_measure(path, mu, meta=None):
    """One block per atom: ``d`` matrix rows, then ``weight=w``."""
    out = [f"# {meta}\n"] if meta else []
    for g, w in zip(mu.matrices, mu.weights):
        out.extend(",".join(fmt(v) for v in row) + "\n" for row in g)
        out.append(f"weight={fmt(w)}\n")
    atomic_write(path, "".join(out))


def read_measure(path):
    mats, weights, block = [], [], []
    for ln in _lines(path):
        s = ln.strip()
        if s.startswith("weight="):
            if not block:
                raise ValueError(f"{path}: weight line without a matrix")
            mats.append(block)
            weights.append(float(s[len("weight="):]))
            block = []
        else:
            block.append([float(v) for v in s.split(",")])
    if block:
        raise ValueError(f"{path}: trailing matrix rows without a weight line")
    return MatrixMeasure(np.array(mats), np.array(weights))


# ---------------------------------------------------------------- tables

def write_exponents(path, exponents, meta=None):
    """``[(lambda^(i), ci)]`` for ``i = 1..d-1``."""
    write_csv(path, ["i", "lambda", "ci"], [(i + 1, v, c) for i, (v, c) in enumerate(exponents)], meta)


def read_exponents(path):
    _, rows = read_csv(path, ["i", "lambda", "ci"])
    return [(float(r[1]), float(r[2])) for r in rows]


def write_mass_profile(path, prof, meta=None):
    write_csv(path, ["n", "estimate", "ci_low", "ci_high", "bound"],
              zip(prof.n, prof.estimate, prof.ci_low, prof.ci_high, prof.bound), meta)


def write_return_profile(path, prof, meta=None):
    write_csv(path, ["n", "tail", "partial_sum"], zip(prof.n, prof.tail, prof.partial_sum), meta)


def write_schedule(path, schedule, meta=None):
    write_csv(path, ["i", "x_i", "alpha_i", "n_i"], schedule.rows(), meta)
